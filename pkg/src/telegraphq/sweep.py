"""Parameter-sweep coordination: config handling, grid expansion, workers, output.

Configuration is a nested mapping with sections tss / noise / measure /
engine / dynamics / output.  Any value under tss or noise may be a scalar, a
list of numbers, or a range table {start, stop, count, spacing}; every such
non-scalar becomes a sweep axis and the grid is their Cartesian product, axis
order fixed by (section, key).  Unknown sections or keys are rejected
(ConfigError -> CLI exit 2) rather than ignored: a typo that silently falls
back to a default is worse than a failure.

Determinism contract: a grid point's result is a pure function of the
effective config and the point's coordinates.  Monte Carlo seeds derive from
the master seed by SHA-256 over the canonical JSON of the coordinates, so
neither worker scheduling nor the parallelism degree can change any output
byte.  Rows are emitted in grid order regardless of completion order.

Interrupted sweeps flush finished rows to <out>.resume.json keyed by a hash
of the physics-relevant config; a rerun with the same config skips them.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import asdict, dataclass

import numpy as np

from .bloch import TssParams
from .laplace import IltConfig
from .measures import DivergentLinear, MeasureKind, NonMarkovResult, maximize_over_pairs
from .noise import Biexponential, Exponential, ManifestNM, NoiseModel, noise_stats

__all__ = [
    "ConfigError",
    "ResultRow",
    "DEFAULTS",
    "load_config",
    "merge_overrides",
    "expand_grid",
    "point_seed",
    "build_models",
    "evaluate_point",
    "run_sweep",
    "audit_rows",
    "write_csv",
    "write_jsonl",
    "flatten_config",
]


class ConfigError(ValueError):
    """Invalid, unknown, or inconsistent configuration input."""


DEFAULTS: dict = {
    "tss": {"eps0": 0.0, "delta0": 1.0},
    "noise": {
        "model": "exponential",
        "amplitude": 1.0,
        "tau": 1.0,
        "theta": 0.5,
        "alpha1": 0.05,
        "alpha2": 1.0,
        "td": 1.0,
        "alpha": 0.5,
    },
    "measure": {
        "kind": "trace-distance",
        "horizon": 0.0,  # 0 -> policy default from noise/system time scales
        "rise_floor": 1e-8,
        "n_sphere": 64,
    },
    "engine": {
        "ilt_method": "auto",
        "ilt_terms": 300,
        "tol": 1e-3,
        "mc_trajectories": 10_000,
        "backend": "auto",
    },
    "dynamics": {
        "t_max": 50.0,
        "dt": 0.1,
        "p0": [0.0, 0.0, 1.0],
        "method": "laplace",
        "direction": [0.0, 0.0, 1.0],
    },
    "output": {
        "format": "csv",
        "path": "",
        "precision": 9,
        "seed": 0,
        "threads": 0,  # 0 -> all available cores
        "timings": False,
    },
}

# keys under tss/noise that may carry a list or range table
_SWEEPABLE = {
    ("tss", "eps0"),
    ("tss", "delta0"),
    ("noise", "amplitude"),
    ("noise", "tau"),
    ("noise", "theta"),
    ("noise", "alpha1"),
    ("noise", "alpha2"),
    ("noise", "td"),
    ("noise", "alpha"),
}

_MODEL_PARAMS = {
    "exponential": ("tau",),
    "biexponential": ("theta", "alpha1", "alpha2"),
    "manifest": ("tau", "td", "alpha"),
}


def _is_range_table(v) -> bool:
    return isinstance(v, dict)


def _check_range_table(section: str, key: str, v: dict):
    allowed = {"start", "stop", "count", "spacing"}
    unknown = set(v) - allowed
    if unknown:
        raise ConfigError(f"{section}.{key}: unknown range keys {sorted(unknown)}")
    for req in ("start", "stop", "count"):
        if req not in v:
            raise ConfigError(f"{section}.{key}: range table needs '{req}'")
    if not isinstance(v["count"], int) or v["count"] < 1:
        raise ConfigError(f"{section}.{key}: count must be a positive integer")
    if v.get("spacing", "linear") not in ("linear", "log"):
        raise ConfigError(f"{section}.{key}: spacing must be 'linear' or 'log'")
    if v.get("spacing", "linear") == "log" and not (v["start"] > 0 and v["stop"] > 0):
        raise ConfigError(f"{section}.{key}: log spacing needs positive bounds")


def _range_values(v: dict) -> list[float]:
    n = v["count"]
    if v.get("spacing", "linear") == "log":
        return [float(x) for x in np.geomspace(v["start"], v["stop"], n)]
    return [float(x) for x in np.linspace(v["start"], v["stop"], n)]


def merge_overrides(cfg: dict, overrides: dict) -> dict:
    """Deep-merge override sections into cfg (mutates and returns cfg)."""
    for section, block in overrides.items():
        if section not in cfg:
            raise ConfigError(f"unknown config section '{section}'")
        if not isinstance(block, dict):
            raise ConfigError(f"config section '{section}' must be a table")
        for key, val in block.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown config key '{section}.{key}'")
            cfg[section][key] = val
    return cfg


def _validate(cfg: dict):
    out = cfg["output"]
    if out["format"] not in ("csv", "jsonl"):
        raise ConfigError("output.format must be 'csv' or 'jsonl'")
    if not isinstance(out["seed"], int) or out["seed"] < 0:
        raise ConfigError("output.seed must be a nonnegative integer")
    if not isinstance(out["threads"], int) or out["threads"] < 0:
        raise ConfigError("output.threads must be a nonnegative integer")
    if not (1 <= int(out["precision"]) <= 17):
        raise ConfigError("output.precision must lie in [1, 17]")
    eng = cfg["engine"]
    if eng["ilt_method"] not in ("auto", "talbot", "euler", "stehfest"):
        raise ConfigError("engine.ilt_method must be auto|talbot|euler|stehfest")
    if not isinstance(eng["ilt_terms"], int) or eng["ilt_terms"] < 8:
        raise ConfigError("engine.ilt_terms must be an integer >= 8")
    if not (float(eng["tol"]) > 0):
        raise ConfigError("engine.tol must be positive")
    if not isinstance(eng["mc_trajectories"], int) or eng["mc_trajectories"] < 100:
        raise ConfigError("engine.mc_trajectories must be an integer >= 100")
    if eng["backend"] not in ("auto", "numba", "numpy"):
        raise ConfigError("engine.backend must be auto|numba|numpy")
    if cfg["noise"]["model"] not in _MODEL_PARAMS:
        raise ConfigError(
            "noise.model must be exponential|biexponential|manifest"
        )
    if cfg["measure"]["kind"] not in ("trace-distance", "jensen-shannon"):
        raise ConfigError("measure.kind must be trace-distance|jensen-shannon")
    dyn = cfg["dynamics"]
    if dyn["method"] not in ("laplace", "mc"):
        raise ConfigError("dynamics.method must be laplace|mc")
    if not (float(dyn["t_max"]) > 0 and 0 < float(dyn["dt"]) <= float(dyn["t_max"])):
        raise ConfigError("dynamics: need t_max > 0 and 0 < dt <= t_max")
    for key in ("p0", "direction"):
        vec = dyn[key]
        if not (isinstance(vec, (list, tuple)) and len(vec) == 3):
            raise ConfigError(f"dynamics.{key} must be a 3-vector")
    # sweepable keys: scalar, list, or range table; everything else scalar only
    for section in ("measure", "engine", "dynamics", "output"):
        for key, val in cfg[section].items():
            if (section, key) in (("dynamics", "p0"), ("dynamics", "direction")):
                continue
            if isinstance(val, (dict, list, tuple)):
                raise ConfigError(f"{section}.{key} cannot be swept")
    for section in ("tss", "noise"):
        for key, val in cfg[section].items():
            if key == "model":
                continue
            if isinstance(val, (list, tuple)):
                if (section, key) not in _SWEEPABLE:
                    raise ConfigError(f"{section}.{key} cannot be swept")
                if not val or not all(isinstance(x, (int, float)) for x in val):
                    raise ConfigError(f"{section}.{key}: list must be nonempty numbers")
            elif _is_range_table(val):
                if (section, key) not in _SWEEPABLE:
                    raise ConfigError(f"{section}.{key} cannot be swept")
                _check_range_table(section, key, val)
            elif not isinstance(val, (int, float)):
                raise ConfigError(f"{section}.{key} must be numeric")


def load_config(path: str | None = None, overrides: dict | None = None) -> dict:
    """Defaults <- TOML file <- overrides, validated; returns the effective config."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            with open(path, "rb") as fh:
                merge_overrides(cfg, tomllib.load(fh))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
    if overrides:
        merge_overrides(cfg, overrides)
    _validate(cfg)
    return cfg


def flatten_config(cfg: dict) -> list[tuple[str, object]]:
    """Sorted (section.key, value) pairs for output-header provenance."""
    flat = []
    for section in sorted(cfg):
        for key in sorted(cfg[section]):
            flat.append((f"{section}.{key}", cfg[section][key]))
    return flat


# ---------------------------------------------------------------------------
# grid


def expand_grid(cfg: dict) -> tuple[list[tuple[str, str]], list[dict]]:
    """Resolve sweep axes -> (axis names, list of {key: scalar} points).

    Point dicts carry plain key names (eps0, tau, ...); tss/noise key sets are
    disjoint so no qualification is needed.  Grid order: last axis fastest.
    """
    axes: list[tuple[str, str, list[float]]] = []
    scalars: dict[str, float] = {}
    model = cfg["noise"]["model"]
    used = ("eps0", "delta0", "amplitude") + _MODEL_PARAMS[model]
    for section in ("tss", "noise"):
        for key in cfg[section]:
            if key == "model" or key not in used:
                continue
            val = cfg[section][key]
            if isinstance(val, (list, tuple)):
                axes.append((section, key, [float(x) for x in val]))
            elif _is_range_table(val):
                axes.append((section, key, _range_values(val)))
            else:
                scalars[key] = float(val)
    axes.sort(key=lambda a: (a[0], a[1]))
    names = [(s, k) for s, k, _ in axes]
    points: list[dict] = []
    if not axes:
        return names, [dict(scalars)]
    shape = [len(v) for _, _, v in axes]
    for flat in range(int(np.prod(shape))):
        idx = np.unravel_index(flat, shape)
        pt = dict(scalars)
        for (_, key, vals), i in zip(axes, idx):
            pt[key] = vals[i]
        points.append(pt)
    return names, points


def point_seed(master: int, coords: dict) -> int:
    """Stable 63-bit seed from the master seed and a point's coordinates."""
    msg = json.dumps([master, sorted(coords.items())], separators=(",", ":"))
    digest = hashlib.sha256(msg.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def build_models(cfg: dict, point: dict) -> tuple[TssParams, NoiseModel]:
    model = cfg["noise"]["model"]
    if model == "exponential":
        rtd = Exponential(point["tau"])
    elif model == "biexponential":
        rtd = Biexponential(point["theta"], point["alpha1"], point["alpha2"])
    else:
        rtd = ManifestNM(point["tau"], point["td"], point["alpha"])
    tss = TssParams(point["eps0"], point["delta0"])
    return tss, NoiseModel(point["amplitude"], rtd)


def ilt_config(cfg: dict) -> IltConfig:
    eng = cfg["engine"]
    return IltConfig(
        method=eng["ilt_method"], terms=int(eng["ilt_terms"]), rel_tol=float(eng["tol"])
    )


# ---------------------------------------------------------------------------
# rows


@dataclass
class ResultRow:
    """One grid point: swept coordinates, derived noise stats, measure output.

    tau_corr/cv/kubo are None when the correlation time diverges; the
    writers render None as an empty cell / JSON null — NaN is never emitted.
    A divergent measure keeps its finite horizon value and sets
    bounded='divergent' with the linear growth rate.
    """

    coords: dict
    seed: int
    mean_residence: float
    tau_corr: float | None
    cv: float | None
    kubo: float | None
    value: float
    value_alt: float | None
    bounded: str
    rate: float
    err: float
    windows: int
    horizon: float
    wall_ms: float

    def as_record(self, timings: bool) -> dict:
        rec = dict(self.coords)
        rec.update(
            seed=self.seed,
            mean_residence=self.mean_residence,
            tau_corr=self.tau_corr,
            cv=self.cv,
            kubo=self.kubo,
            value=self.value,
            value_alt=self.value_alt,
            bounded=self.bounded,
            rate=self.rate,
            err=self.err,
            windows=self.windows,
            horizon=self.horizon,
        )
        if timings:
            rec["wall_ms"] = self.wall_ms
        return rec


def _none_if_inf(x: float | None) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def evaluate_point(cfg: dict, point: dict) -> ResultRow:
    """Run the measure pipeline at one grid point (pure function of inputs)."""
    t0 = time.perf_counter()
    tss, noise = build_models(cfg, point)
    stats = noise_stats(noise)
    kind = (
        MeasureKind.TRACE_DISTANCE
        if cfg["measure"]["kind"] == "trace-distance"
        else MeasureKind.JENSEN_SHANNON
    )
    horizon = float(cfg["measure"]["horizon"]) or None
    res: NonMarkovResult = maximize_over_pairs(
        tss,
        noise,
        kind,
        ilt_config(cfg),
        horizon=horizon,
        n_sphere=int(cfg["measure"]["n_sphere"]),
        rise_floor=float(cfg["measure"]["rise_floor"]),
    )
    rate = res.bounded.rate if isinstance(res.bounded, DivergentLinear) else 0.0
    return ResultRow(
        coords=dict(point),
        seed=point_seed(int(cfg["output"]["seed"]), point),
        mean_residence=stats.mean_residence,
        tau_corr=_none_if_inf(stats.corr_time),
        cv=_none_if_inf(stats.cv),
        kubo=_none_if_inf(stats.kubo),
        value=res.value,
        value_alt=res.value_alt,
        bounded="divergent" if res.divergent else "bounded",
        rate=rate,
        err=res.err,
        windows=len(res.windows),
        horizon=res.horizon,
        wall_ms=1e3 * (time.perf_counter() - t0),
    )


def _eval_indexed(args) -> tuple[int, dict]:
    idx, cfg, point = args
    return idx, asdict(evaluate_point(cfg, point))


# ---------------------------------------------------------------------------
# execution


def _resume_key(cfg: dict) -> str:
    """Hash of the physics-relevant config (output routing excluded)."""
    core = {k: v for k, v in cfg.items() if k != "output"}
    core["seed"] = cfg["output"]["seed"]
    return hashlib.sha256(
        json.dumps(core, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _manifest_path(cfg: dict) -> str | None:
    path = cfg["output"]["path"]
    return f"{path}.resume.json" if path else None


def _load_manifest(path: str | None, key: str, total: int) -> dict[int, dict]:
    if path is None or not os.path.exists(path):
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            blob = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return {}
    if blob.get("config_sha") != key or blob.get("total") != total:
        return {}
    return {int(i): row for i, row in blob.get("rows", {}).items()}


def _flush_manifest(path: str | None, key: str, total: int, done: dict[int, dict]):
    if path is None:
        return
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(
            {"config_sha": key, "total": total, "rows": {str(i): r for i, r in done.items()}},
            fh,
        )
    os.replace(tmp, path)


def run_sweep(cfg: dict, progress=None) -> list[ResultRow]:
    """Evaluate the full grid; returns rows in grid order.

    Completed points are checkpointed to the resume manifest (when an output
    path is set) so an interrupted run can continue; the manifest is removed
    on success.  Worker scheduling cannot affect results: each row depends
    only on (cfg, point).
    """
    _, points = expand_grid(cfg)
    total = len(points)
    key = _resume_key(cfg)
    mpath = _manifest_path(cfg)
    done = _load_manifest(mpath, key, total)
    pending = [i for i in range(total) if i not in done]
    if progress:
        progress(f"sweep: {total} points, {len(pending)} to run")

    threads = int(cfg["output"]["threads"]) or (os.cpu_count() or 1)
    flush_every = max(1, total // 20)
    try:
        if threads <= 1 or len(pending) <= 1:
            for n, i in enumerate(pending, 1):
                done[i] = asdict(evaluate_point(cfg, points[i]))
                if n % flush_every == 0:
                    _flush_manifest(mpath, key, total, done)
                    if progress:
                        progress(f"sweep: {len(done)}/{total} done")
        else:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                futs = {pool.submit(_eval_indexed, (i, cfg, points[i])) for i in pending}
                since_flush = 0
                while futs:
                    ready, futs = wait(futs, return_when=FIRST_COMPLETED)
                    for fut in ready:
                        i, row = fut.result()
                        done[i] = row
                        since_flush += 1
                    if since_flush >= flush_every:
                        _flush_manifest(mpath, key, total, done)
                        since_flush = 0
                        if progress:
                            progress(f"sweep: {len(done)}/{total} done")
    except BaseException:
        _flush_manifest(mpath, key, total, done)
        raise
    if mpath is not None and os.path.exists(mpath):
        os.remove(mpath)
    return [ResultRow(**done[i]) for i in range(total)]


def audit_rows(
    cfg: dict, rows: list[ResultRow], fraction: float = 0.05, seed: int = 0
) -> list[tuple[int, float, float, float]]:
    """Rerun a random subset with doubled ILT terms.

    Returns (index, value, reference value, |difference|) per audited row;
    callers assert |difference| <= row.err.  The subset draw is seeded so
    audits are reproducible.
    """
    _, points = expand_grid(cfg)
    rng = np.random.default_rng(seed)
    n_audit = max(1, math.ceil(fraction * len(rows)))
    picks = rng.choice(len(rows), size=n_audit, replace=False)
    doubled = copy.deepcopy(cfg)
    doubled["engine"]["ilt_terms"] = 2 * int(cfg["engine"]["ilt_terms"])
    out = []
    for i in sorted(int(p) for p in picks):
        ref = evaluate_point(doubled, points[i])
        out.append((i, rows[i].value, ref.value, abs(rows[i].value - ref.value)))
    return out


# ---------------------------------------------------------------------------
# writers


def _fmt(v, precision: int) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.{precision}g}"
    return str(v)


def _json_safe(v, precision: int):
    if isinstance(v, float):
        if not math.isfinite(v):
            return None
        return float(f"{v:.{precision}g}")
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_csv(fh, records: list[dict], cfg: dict, extra=()):
    """RFC-4180 body under '# key = value' provenance comments."""
    import csv

    precision = int(cfg["output"]["precision"])
    for name, val in list(flatten_config(cfg)) + list(extra):
        fh.write(f"# {name} = {val}\n")
    writer = csv.writer(fh, lineterminator="\n")
    if not records:
        return
    header = list(records[0])
    writer.writerow(header)
    for rec in records:
        writer.writerow([_fmt(rec[k], precision) for k in header])


def write_jsonl(fh, records: list[dict], cfg: dict, extra=()):
    """JSON-lines: a {"_meta": config} record, then one record per row."""
    precision = int(cfg["output"]["precision"])
    meta = {k: v for k, v in flatten_config(cfg)}
    meta.update({k: v for k, v in extra})
    fh.write(json.dumps({"_meta": meta}) + "\n")
    for rec in records:
        fh.write(
            json.dumps({k: _json_safe(v, precision) for k, v in rec.items()}) + "\n"
        )


def write_records(records: list[dict], cfg: dict, extra=()):
    """Route records to output.path (or stdout) in the configured format."""
    writer = write_csv if cfg["output"]["format"] == "csv" else write_jsonl
    path = cfg["output"]["path"]
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer(fh, records, cfg, extra)
    else:
        writer(sys.stdout, records, cfg, extra)
