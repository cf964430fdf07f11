"""Distinguishability measures and the non-Markovianity functional.

The functional is the positive variation of a scalar distinguishability
curve D(t): rises between refined extrema, never a numerical derivative.
For antipodal qubit pairs D is either the trace distance ||S(t)n|| or the
Jensen-Shannon distance obtained from it through the monotone map
`jsd_from_td`, so both measures share extremum locations by construction.

Extremum refinement is two-stage: a parabolic vertex through the three
bracketing samples always; then, when D is available as a callable, a
bounded scalar minimization of the bracket down to a time tolerance of
1e-4 of the horizon.  A persistent oscillation (the frozen-disorder limit)
is reported as DivergentLinear with the rise rate per unit time instead of
a converged value.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .bloch import TssParams
from .laplace import IltConfig, _resolve_method, ilt
from .noise import NoiseModel, noise_stats
from .propagators import propagator_fn
from .series import TimeSeries

__all__ = [
    "MeasureKind",
    "Bounded",
    "DivergentLinear",
    "NonMarkovResult",
    "GridResolutionError",
    "trace_distance_antipodal",
    "jsd_from_td",
    "direct_jsd",
    "nm_closed_markovian",
    "non_markovianity",
    "maximize_over_pairs",
]

_LOG4 = math.log(4.0)


class MeasureKind(enum.Enum):
    TRACE_DISTANCE = "trace-distance"
    JENSEN_SHANNON = "jensen-shannon"


class GridResolutionError(RuntimeError):
    """Adjacent extrema could not be separated on the sampling grid."""


@dataclass(frozen=True)
class Bounded:
    pass


@dataclass(frozen=True)
class DivergentLinear:
    """Non-decaying oscillation: the functional grows at `rate` per unit time."""

    rate: float


@dataclass
class NonMarkovResult:
    value: float
    bounded: Bounded | DivergentLinear
    direction: np.ndarray | None
    windows: list
    horizon: float
    err: float = 0.0
    value_alt: float | None = None
    kind: MeasureKind = MeasureKind.TRACE_DISTANCE

    @property
    def divergent(self) -> bool:
        return isinstance(self.bounded, DivergentLinear)


# ---------------------------------------------------------------------------
# distinguishability scalars


def trace_distance_antipodal(n, propagated: TimeSeries) -> TimeSeries:
    """D(t) = ||S(t) n|| for the pair starting at +/- n on the Bloch sphere."""
    n = np.asarray(n, dtype=float).reshape(3)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    vals = np.asarray(propagated.values)
    if vals.ndim != 2 or vals.shape[1] != 3:
        raise ValueError("propagated series must hold Bloch vectors")
    d = np.linalg.norm(vals, axis=-1)
    err = None if propagated.err is None else np.linalg.norm(propagated.err, axis=-1)
    return TimeSeries(propagated.ts, d, err=err, meta={"measure": "trace-distance"})


def jsd_from_td(dt):
    """Jensen-Shannon distance of an antipodal pair from its trace distance.

    D^E = sqrt[(2 d artanh d + log(1-d^2)) / log 4]; monotone on [0,1],
    with d=1 mapped to 1 by continuity.
    """
    d = np.asarray(dt, dtype=float)
    if np.any(d < -1e-12) or np.any(d > 1.0 + 1e-12):
        raise ValueError("trace distance must lie in [0, 1]")
    d = np.clip(d, 0.0, 1.0)
    sat = d >= 1.0
    safe = np.where(sat, 0.0, d)
    j = (2.0 * safe * np.arctanh(safe) + np.log1p(-safe * safe)) / _LOG4
    out = np.sqrt(np.maximum(j, 0.0))
    out = np.where(sat, 1.0, out)
    return float(out) if np.isscalar(dt) or np.ndim(dt) == 0 else out


_PAULI = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


def _vn_entropy(rho) -> float:
    ev = np.clip(np.linalg.eigvalsh(rho).real, 0.0, 1.0)
    nz = ev[ev > 0.0]
    return float(-(nz * np.log(nz)).sum())


def direct_jsd(b1, b2) -> float:
    """Normalized Jensen-Shannon divergence of two qubit states given as
    Bloch vectors, via von Neumann entropies of the actual 2x2 matrices.

    Normalization puts an orthogonal pure pair at 1, so sqrt(direct_jsd)
    is comparable with jsd_from_td.  Serves as the oracle for the closed
    antipodal formula and deliberately shares no code with it.
    """
    out = []
    for b in (b1, b2):
        v = np.asarray(getattr(b, "as_array", lambda: b)(), dtype=float).reshape(3)
        if np.linalg.norm(v) > 1.0 + 1e-9:
            raise ValueError("Bloch vector leaves the unit ball")
        rho = 0.5 * (np.eye(2, dtype=complex) + sum(v[i] * _PAULI[i] for i in range(3)))
        out.append(rho)
    r1, r2 = out
    j = _vn_entropy(0.5 * (r1 + r2)) - 0.5 * (_vn_entropy(r1) + _vn_entropy(r2))
    return max(j, 0.0) / math.log(2.0)


def nm_closed_markovian(delta: float, tau: float) -> float:
    """Exact functional for exponential residences at zero bias: zero up to
    the Kubo threshold, 1/(e^{pi/sqrt(K^2-1)} - 1) above it."""
    if delta < 0 or tau <= 0:
        raise ValueError("need delta >= 0 and tau > 0")
    k = delta * tau
    if k <= 1.0:
        return 0.0
    return 1.0 / math.expm1(math.pi / math.sqrt(k * k - 1.0))


# ---------------------------------------------------------------------------
# positive-variation functional


def _extremum_indices(ds):
    # sign changes between consecutive nonzero slopes; plateaus collapse to
    # their midpoint sample
    df = np.diff(ds)
    pos = np.nonzero(df)[0]
    if pos.size < 2:
        return np.empty(0, dtype=int)
    sl = np.sign(df[pos])
    chg = np.nonzero(sl[1:] != sl[:-1])[0]
    return (pos[chg] + 1 + pos[chg + 1]) // 2


def _parabolic_vertex(ts, ds, idx):
    t1, t2, t3 = ts[idx - 1], ts[idx], ts[idx + 1]
    v1, v2, v3 = ds[idx - 1], ds[idx], ds[idx + 1]
    d1 = (v2 - v1) / (t2 - t1)
    d2 = (v3 - v2) / (t3 - t2)
    a2 = (d2 - d1) / (t3 - t1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tv = np.where(a2 != 0.0, 0.5 * (t1 + t2) - d1 / (2.0 * np.where(a2 != 0, a2, 1.0)), t2)
    tv = np.clip(tv, t1, t3)
    vv = v1 + d1 * (tv - t1) + a2 * (tv - t1) * (tv - t2)
    return tv, np.where(a2 != 0.0, vv, v2)


def _refine_golden(fn, a, b, t_hint, is_max, xatol):
    def scalar(t):
        v = float(np.asarray(fn(np.atleast_1d(t)))[0])
        return -v if is_max else v

    res = minimize_scalar(scalar, bounds=(a, b), method="bounded", options={"xatol": xatol})
    tv = float(res.x)
    vv = -res.fun if is_max else res.fun
    # a bounded search can only improve on the hint; keep the better one
    hint_v = float(np.asarray(fn(np.atleast_1d(t_hint)))[0])
    if (is_max and hint_v > vv) or (not is_max and hint_v < vv):
        return t_hint, hint_v
    return tv, float(vv)


def non_markovianity(
    d,
    t_max: float | None = None,
    *,
    samples: int = 4001,
    rise_floor: float = 1e-8,
    refine_time_tol: float | None = None,
    divergence_floor: float = 1e-6,
    direction=None,
    kind: MeasureKind = MeasureKind.TRACE_DISTANCE,
) -> NonMarkovResult:
    """Positive variation of a distinguishability curve on [0, t_max].

    `d` is a scalar TimeSeries (grid-limited refinement) or a vectorized
    callable of t (grid + bounded local search per extremum).  Rises not
    exceeding rise_floor are dropped from the value and pooled into the
    error bar together with the decaying-envelope tail bound beyond the
    horizon.  A stabilized tail rise-per-period above divergence_floor is
    flagged DivergentLinear; the value is then the horizon-truncated sum.
    """
    fn = None
    derr = None
    if isinstance(d, TimeSeries):
        ts = d.ts
        ds = np.asarray(d.values, dtype=float)
        if ds.ndim != 1:
            raise ValueError("non_markovianity needs a scalar series")
        derr = d.err
        if t_max is not None and abs(t_max - ts[-1]) > 1e-9 * max(1.0, ts[-1]):
            raise ValueError("t_max conflicts with the series grid")
    else:
        if t_max is None or t_max <= 0:
            raise ValueError("a callable d needs a positive t_max")
        fn = d
        ts = np.linspace(0.0, t_max, samples)
        ds = np.asarray(fn(ts), dtype=float)
    if ds.min() < -1e-6 or ds.max() > 1.0 + 1e-3:
        raise ValueError("distinguishability must lie in [0, 1]")

    horizon = float(ts[-1])
    xatol = refine_time_tol if refine_time_tol is not None else 1e-4 * horizon

    idx = _extremum_indices(ds)
    pruned_mass = 0.0
    if idx.size:
        # prune noise-floor wiggles before refining: an extremum is kept only
        # if it takes part in a swing larger than rise_floor on either side
        # (once the curve sinks into the inversion's noise, every ripple is an
        # "extremum" and refinement brackets collide)
        seq = np.concatenate([[ds[0]], ds[idx], [ds[-1]]])
        swing = np.maximum(np.abs(np.diff(seq))[:-1], np.abs(np.diff(seq))[1:])
        keep_e = swing > rise_floor
        if not np.all(keep_e):
            raw = np.diff(seq)
            kept_seq = np.concatenate([[ds[0]], ds[idx[keep_e]], [ds[-1]]])
            pruned_mass = float(
                raw[raw > 0].sum() - np.diff(kept_seq)[np.diff(kept_seq) > 0].sum()
            )
            idx = idx[keep_e]
    if idx.size:
        tv, vv = _parabolic_vertex(ts, ds, idx)
        is_max = ds[idx] >= np.maximum(ds[idx - 1], ds[idx + 1])
        if fn is not None:
            tg = np.empty_like(tv)
            vg = np.empty_like(vv)
            for k, i in enumerate(idx):
                tg[k], vg[k] = _refine_golden(
                    fn, ts[i - 1], ts[i + 1], tv[k], bool(is_max[k]), xatol
                )
            tv, vv = tg, vg
        if np.any(np.diff(tv) <= 0):
            raise GridResolutionError(
                "adjacent extrema collapsed during refinement; increase samples"
            )
    else:
        tv = np.empty(0)
        vv = np.empty(0)
        is_max = np.empty(0, dtype=bool)

    crit_t = np.concatenate([[ts[0]], tv, [ts[-1]]])
    crit_v = np.concatenate([[ds[0]], vv, [ds[-1]]])

    rises = np.diff(crit_v)
    keep = rises > rise_floor
    windows = [
        (float(crit_t[i]), float(crit_t[i + 1]), float(rises[i]))
        for i in np.nonzero(keep)[0]
    ]
    value = float(rises[keep].sum()) if keep.any() else 0.0
    dropped = float(rises[(rises > 0.0) & ~keep].sum())
    value_alt = None
    if kind is MeasureKind.JENSEN_SHANNON:
        # the non-metric variant: same windows, rises of J = (D^E)^2
        alt = crit_v[1:] ** 2 - crit_v[:-1] ** 2
        value_alt = float(alt[keep].sum()) if keep.any() else 0.0

    # divergence: full rises (windows not ending at the horizon endpoint)
    full = [w for w in windows if w[1] < horizon]
    bounded: Bounded | DivergentLinear = Bounded()
    if len(full) >= 10:
        last = np.array([w[2] for w in full[-10:]])
        if last.min() > divergence_floor and last[5:].mean() > 0.95 * last[:5].mean():
            span = full[-1][1] - full[-10][0]
            bounded = DivergentLinear(rate=float(last.sum() / span))

    # error bar: sampling error of the endpoints, dropped rise mass and,
    # for a decaying envelope, the geometric tail bound beyond the horizon
    err = dropped + max(pruned_mass, 0.0)
    if derr is not None and len(windows):
        e = np.asarray(derr, dtype=float)
        err += 2.0 * float(np.median(e)) * len(windows)
    if not isinstance(bounded, DivergentLinear):
        vmax = vv[is_max] if idx.size else np.empty(0)
        if vmax.size >= 2 and vmax[-1] < vmax[-2]:
            rho = min(vmax[-1] / max(vmax[-2], 1e-300), 0.99)
            err += vmax[-1] * rho / (1.0 - rho)
        elif vmax.size:
            err += float(vmax[-1])

    return NonMarkovResult(
        value=value,
        bounded=bounded,
        direction=None if direction is None else np.asarray(direction, dtype=float),
        windows=windows,
        horizon=horizon,
        err=float(err),
        value_alt=value_alt,
        kind=kind,
    )


# ---------------------------------------------------------------------------
# maximization over antipodal pairs


def _policy_horizon(noise: NoiseModel) -> float:
    stats = noise_stats(noise)
    scales = [stats.mean_residence]
    if noise.amplitude > 0:
        scales.append(1.0 / noise.amplitude)
    if math.isfinite(stats.corr_time):
        scales.append(stats.corr_time)
    return 50.0 * max(scales)


def _grid_size(osc_bound: float, horizon: float) -> int:
    periods = osc_bound * horizon / (2.0 * math.pi)
    return int(min(max(2001, 32 * periods), 200_001))


def _ilt_chunked(fn, ts, cfg, *, branch_limited, osc_bound, chunk=4096):
    # escalate=False: the measure needs absolute accuracy at the rise-floor
    # scale; per-point *relative* tolerance is unreachable (and irrelevant)
    # at the zeros of an oscillating D, which golden probes land on
    if ts.size <= chunk:
        return ilt(
            fn, ts, cfg, branch_limited=branch_limited, osc_bound=osc_bound, escalate=False
        )
    parts = [
        ilt(
            fn,
            ts[i : i + chunk],
            cfg,
            branch_limited=branch_limited,
            osc_bound=osc_bound,
            escalate=False,
        )
        for i in range(0, ts.size, chunk)
    ]
    values = np.concatenate([p.values for p in parts])
    err = np.concatenate([p.err for p in parts])
    meta = dict(parts[0].meta)
    meta["flagged"] = np.concatenate([np.atleast_1d(p.meta["flagged"]) for p in parts])
    return TimeSeries(ts, values, err=err, meta=meta)


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _quick_value(ts, ds, rise_floor):
    # grid + parabolic positive variation; cheap objective for the search
    idx = _extremum_indices(ds)
    if idx.size:
        _, vv = _parabolic_vertex(ts, ds, idx)
        crit = np.concatenate([[ds[0]], vv, [ds[-1]]])
    else:
        crit = np.array([ds[0], ds[-1]])
    r = np.diff(crit)
    r = r[r > rise_floor]
    return float(r.sum()) if r.size else 0.0


def _to_measure(d, kind):
    if kind is MeasureKind.JENSEN_SHANNON:
        return jsd_from_td(np.clip(d, 0.0, 1.0))
    return d


def maximize_over_pairs(
    tss: TssParams,
    noise: NoiseModel,
    kind: MeasureKind = MeasureKind.TRACE_DISTANCE,
    cfg: IltConfig | None = None,
    *,
    horizon: float | None = None,
    samples: int | None = None,
    n_sphere: int = 64,
    rise_floor: float = 1e-8,
) -> NonMarkovResult:
    """Maximum of the functional over antipodal initial pairs.

    At zero bias the x component is conserved, so D^2 = n_x^2 + |S|^2(1-n_x^2)
    and every rise shrinks with |n_x|; within the y-z plane D = |S(t)| carries
    no angle dependence.  The search therefore collapses to one evaluation at
    z-hat.  With bias the direction is searched on a Fibonacci sphere grid
    (deterministic lowest-index tie-break) and refined by a Nelder-Mead
    simplex in (theta, phi).
    """
    if noise.amplitude == 0.0:
        # unitary dynamics: D is constant in t for every direction
        return NonMarkovResult(
            0.0, Bounded(), np.array([0.0, 0.0, 1.0]), [], horizon or 0.0, 0.0, kind=kind
        )

    t_max = horizon if horizon is not None else _policy_horizon(noise)
    fn = propagator_fn(tss, noise)
    n_t = samples if samples is not None else _grid_size(fn.osc_bound, t_max)

    # one curve, one quadrature: resolve the method for the full horizon and
    # pin it, so the local refinement probes (tiny t batches that the auto
    # policy would route differently) stay consistent with the grid sweep
    base_cfg = cfg if cfg is not None else IltConfig()
    if base_cfg.method == "auto":
        base_cfg = replace(
            base_cfg,
            method=_resolve_method(base_cfg, fn.branch_limited, fn.osc_bound, t_max),
        )
    cfg = base_cfg

    def direction_curve(n):
        nv = np.asarray(n, dtype=float)

        def dvec(tq):
            series = _ilt_chunked(
                lambda s: fn(s) @ nv,
                np.atleast_1d(np.asarray(tq, dtype=float)),
                cfg,
                branch_limited=fn.branch_limited,
                osc_bound=fn.osc_bound,
            )
            return _to_measure(np.linalg.norm(series.values, axis=-1), kind)

        return dvec

    if tss.epsilon0 == 0.0:
        best_n = np.array([0.0, 0.0, 1.0])
    else:
        ts = np.linspace(0.0, t_max, n_t)
        mat = _ilt_chunked(
            fn, ts, cfg, branch_limited=fn.branch_limited, osc_bound=fn.osc_bound
        )
        S = mat.values  # (n_t, 3, 3)

        def quick(n):
            d = _to_measure(np.linalg.norm(S @ np.asarray(n, dtype=float), axis=-1), kind)
            return _quick_value(ts, d, rise_floor)

        dirs = _fibonacci_sphere(n_sphere)
        vals = np.array([quick(n) for n in dirs])
        best = int(np.argmax(vals))  # argmax takes the lowest index on ties
        n0 = dirs[best]
        th0 = math.acos(np.clip(n0[2], -1.0, 1.0))
        ph0 = math.atan2(n0[1], n0[0])

        def objective(x):
            th, ph = x
            n = np.array(
                [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
            )
            return -quick(n)

        res = minimize(
            objective,
            np.array([th0, ph0]),
            method="Nelder-Mead",
            options={
                "fatol": 1e-3 * max(vals[best], 1e-12),
                "xatol": 1e-3,
                "maxiter": 120,
            },
        )
        th, ph = res.x
        best_n = np.array(
            [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
        )

    return non_markovianity(
        direction_curve(best_n),
        t_max,
        samples=n_t,
        rise_floor=rise_floor,
        direction=best_n,
        kind=kind,
    )
