"""Numerical inversion of Laplace transforms.

Three quadratures with complementary strengths:

* ``euler``    -- Abate--Whitt Euler summation along the Bromwich line
  Re(s) = A/(2t).  Nodes keep Re(s) > 0, so it is the only method safe for
  transforms with a branch cut on the negative real axis.  Cost grows
  linearly with the number of oscillation periods contained in [0, t].
* ``talbot``   -- fixed Talbot contour.  Spectacular accuracy per node for
  meromorphic transforms, but the contour wraps into Re(s) < 0 and its
  useful radius shrinks like 1/t, so poles far from the origin (fast
  oscillations at late times) fall outside it and the answer silently
  decays.  ``ilt`` therefore accepts an ``osc_bound`` hint and routes
  long-time oscillatory inversions to Euler when method="auto".
* ``stehfest`` -- Gaver--Stehfest with Salzer weights.  Real nodes only;
  needs ~1.5 digits of working precision per term, so it runs under mpmath
  exclusively.  Kept as an arbitrary-precision cross-check.

Error estimates are internal-consistency differences (half the nodes /
rescaled contour), relative to the running scale of the series so that the
decaying tail of an oscillation is not flagged spuriously.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .noise import LaplaceDomainError
from .series import TimeSeries

__all__ = [
    "IltConfig",
    "IltConvergenceError",
    "ilt",
    "laplace_matrix_fn",
]

_METHODS = ("auto", "talbot", "euler", "stehfest")

# Euler summation: M binomial-averaging terms on top of N partial sums.
_EULER_BINOM = 15
# Optimal damping for ~16 significant digits; scaled with digits in mp mode.
_EULER_A_DOUBLE = 23.0
# Talbot node counts beyond ~1.9 digits add pure cancellation noise.
_TALBOT_PER_DIGIT = 1.9
# Ratio of the shrunk contour used for the Talbot error estimate.
_TALBOT_ALT_SCALE = 0.9
_MAX_EULER_NODES = 4096


class IltConvergenceError(RuntimeError):
    """Raised when escalation fails; carries both partial results."""

    def __init__(self, message: str, results=None):
        super().__init__(message)
        self.results = results


@dataclass(frozen=True)
class IltConfig:
    """Inversion settings.

    terms is the per-point evaluation budget (nodes); each method caps it
    at its own useful maximum.  precision > 16 switches to mpmath with that
    many significant digits.
    """

    method: str = "auto"
    terms: int = 300
    precision: int = 16
    rel_tol: float = 1e-3

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if self.terms < 8:
            raise ValueError("terms must be at least 8")
        if self.precision < 16:
            raise ValueError("precision must be at least 16 digits")
        if not (0 < self.rel_tol < 1):
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.method == "stehfest":
            if self.precision < 1.5 * self.terms:
                raise ValueError(
                    "stehfest needs precision >= 1.5*terms "
                    f"(terms={self.terms} wants >= {math.ceil(1.5 * self.terms)} digits)"
                )


def laplace_matrix_fn(fn, shape=(3, 3)):
    """Tag a vectorized Laplace-domain callable with its output shape.

    fn maps an array of s values with shape (n,) to an array (n, *shape).
    """

    fn.laplace_shape = tuple(shape)
    return fn


# ---------------------------------------------------------------------------
# double-precision kernels


def _euler_eval(fn, ts, n_sums, shape, chunk):
    """Euler sums at N=n_sums and N=n_sums//2 from one shared node set."""
    m = _EULER_BINOM
    a_damp = _EULER_A_DOUBLE
    k = np.arange(n_sums + m + 1)
    signs = np.where(k % 2 == 0, 1.0, -1.0)
    signs[0] = 0.5
    w = np.array([math.comb(m, j) for j in range(m + 1)], dtype=float) / 2.0**m
    tail = (1,) * len(shape)
    res = np.empty((ts.size,) + shape)
    res_half = np.empty_like(res)
    for lo in range(0, ts.size, chunk):
        t = ts[lo : lo + chunk]
        s = (a_damp + 2j * np.pi * k[None, :]) / (2.0 * t[:, None])
        vals = np.asarray(fn(s.ravel())).reshape(t.size, k.size, *shape)
        terms = vals.real * signs.reshape(1, -1, *tail)
        ps = np.cumsum(terms, axis=1)
        pref = (np.exp(a_damp / 2.0) / t).reshape(-1, *tail)
        for out, base in ((res, n_sums), (res_half, n_sums // 2)):
            seg = ps[:, base : base + m + 1]
            out[lo : lo + chunk] = pref * np.einsum("j,nj...->n...", w, seg)
    return res, res_half


def _euler_err(res, res_half, a_damp=_EULER_A_DOUBLE):
    # truncation (N vs N/2) plus the aliasing floor e^{-A}*scale of the
    # damped-Bromwich discretization, which the N-comparison cannot see
    floor = math.exp(-a_damp) * np.abs(res).max(axis=0, keepdims=True)
    return np.abs(res - res_half) + floor


def _talbot_nodes(n_nodes, scale):
    r = 0.4 * n_nodes * scale
    theta = np.arange(n_nodes) * np.pi / n_nodes
    sigma = np.empty(n_nodes, dtype=complex)  # s*t, independent of t
    gamma = np.empty(n_nodes, dtype=complex)
    sigma[0] = r
    gamma[0] = 0.5 * math.exp(r)
    th = theta[1:]
    cot = np.cos(th) / np.sin(th)
    sigma[1:] = r * th * (cot + 1j)
    gamma[1:] = np.exp(sigma[1:]) * (1.0 + 1j * th * (1.0 + cot * cot) - 1j * cot)
    return r, sigma, gamma


def _talbot_eval(fn, ts, n_nodes, shape, chunk, scale=1.0):
    r, sigma, gamma = _talbot_nodes(n_nodes, scale)
    tail = (1,) * len(shape)
    res = np.empty((ts.size,) + shape)
    for lo in range(0, ts.size, chunk):
        t = ts[lo : lo + chunk]
        s = sigma[None, :] / t[:, None]
        vals = np.asarray(fn(s.ravel())).reshape(t.size, sigma.size, *shape)
        acc = np.einsum("k,nk...->n...", gamma, vals).real
        res[lo : lo + chunk] = (r / (n_nodes * t)).reshape(-1, *tail) * acc
    return res


# ---------------------------------------------------------------------------
# mpmath kernels (per-point loops; diagnostic precision)


def _euler_eval_mp(fn, ts, n_sums, shape, dps):
    import mpmath as mp

    m = _EULER_BINOM
    res = np.empty((ts.size,) + shape)
    res_half = np.empty_like(res)
    with mp.workdps(dps):
        a_damp = mp.log(10) * dps * 2 / 3
        w = [mp.binomial(m, j) / mp.mpf(2) ** m for j in range(m + 1)]
        pref_base = mp.e ** (a_damp / 2)
        for i, t in enumerate(ts):
            t = mp.mpf(t)
            flat = [mp.mpf(0)] * int(np.prod(shape, dtype=int) or 1)
            acc = [list(flat), list(flat)]  # [full, half] binomial tails
            ps = list(flat)
            full_lo, half_lo = n_sums, n_sums // 2
            for kk in range(n_sums + m + 1):
                s = (a_damp + 2j * mp.pi * kk) / (2 * t)
                val = fn(s)
                arr = np.asarray(val, dtype=object).reshape(-1)
                sign = mp.mpf(1) if kk % 2 == 0 else mp.mpf(-1)
                if kk == 0:
                    sign /= 2
                for c in range(len(ps)):
                    ps[c] += sign * mp.re(arr[c])
                for tgt, base in ((0, full_lo), (1, half_lo)):
                    j = kk - base
                    if 0 <= j <= m:
                        for c in range(len(ps)):
                            acc[tgt][c] += w[j] * ps[c]
            pref = pref_base / t
            res[i] = np.array([float(pref * v) for v in acc[0]]).reshape(shape)
            res_half[i] = np.array([float(pref * v) for v in acc[1]]).reshape(shape)
    return res, res_half


def _stehfest_eval(fn, ts, n_terms, shape, dps):
    import mpmath as mp

    n_terms -= n_terms % 2  # Salzer weights need an even count
    half = n_terms // 2
    res = np.empty((ts.size,) + shape)
    with mp.workdps(dps):
        weights = []
        for kk in range(1, n_terms + 1):
            acc = mp.mpf(0)
            for j in range((kk + 1) // 2, min(kk, half) + 1):
                acc += (
                    mp.mpf(j) ** half
                    * mp.factorial(2 * j)
                    / (
                        mp.factorial(half - j)
                        * mp.factorial(j)
                        * mp.factorial(j - 1)
                        * mp.factorial(kk - j)
                        * mp.factorial(2 * j - kk)
                    )
                )
            weights.append(acc * (-1) ** (kk + half))
        ln2 = mp.log(2)
        for i, t in enumerate(ts):
            t = mp.mpf(t)
            flat = [mp.mpf(0)] * int(np.prod(shape, dtype=int) or 1)
            for kk in range(1, n_terms + 1):
                val = fn(kk * ln2 / t)
                arr = np.asarray(val, dtype=object).reshape(-1)
                for c in range(len(flat)):
                    flat[c] += weights[kk - 1] * mp.re(arr[c])
            res[i] = np.array([float(ln2 / t * v) for v in flat]).reshape(shape)
    return res


# ---------------------------------------------------------------------------
# driver


def _probe_shape(fn):
    shape = getattr(fn, "laplace_shape", None)
    if shape is not None:
        return tuple(shape)
    try:
        out = np.asarray(fn(np.array([1.0 + 0.5j, 2.0 + 0.25j])))
        ok = out.shape[:1] == (2,)
    except Exception as exc:
        raise ValueError(
            "Laplace callable must be vectorized over s; wrap scalars with "
            "np.vectorize or tag the output shape via laplace_matrix_fn"
        ) from exc
    if not ok:
        raise ValueError(
            "Laplace callable must be vectorized over s; wrap scalars with "
            "np.vectorize or tag the output shape via laplace_matrix_fn"
        )
    return out.shape[1:]


def _chunk_for(shape, n_nodes):
    per_t = n_nodes * max(1, int(np.prod(shape, dtype=int)))
    return max(1, int(2.5e5 / per_t))


def _initial_value(fn, shape):
    s_big = 1e9
    out = np.asarray(fn(np.array([s_big + 0.0j])))
    return (s_big * out.real).reshape(shape)


def _rel_scale(res):
    # per-component maximum over time; a component sitting 12+ orders below
    # the dominant one (zero by symmetry, reached only through cancellation)
    # is inversion roundoff and carries no meaningful relative error, so its
    # scale is floored at 1e-12 of the global magnitude
    mag = np.abs(res).max(axis=0, keepdims=True)
    return np.maximum(mag, np.maximum(1e-12 * mag.max(), 1e-30)) + 1e-300


def _resolve_method(cfg, branch_limited, osc_bound, t_max):
    if cfg.method != "auto":
        return cfg.method
    if branch_limited:
        return "euler"
    if osc_bound is not None and t_max is not None and osc_bound > 0:
        n_nodes = min(cfg.terms, max(8, int(_TALBOT_PER_DIGIT * cfg.precision)))
        # poles at |Im s| = osc_bound must sit inside the Talbot bowl
        if t_max * osc_bound > 0.6 * np.pi * (0.4 * n_nodes):
            return "euler"
    return "talbot"


def ilt(
    fn,
    ts,
    cfg: IltConfig | None = None,
    *,
    branch_limited=False,
    osc_bound=None,
    escalate=True,
):
    """Invert F(s) = fn(s) on the time grid ts.

    fn must accept a complex ndarray of s values (all with Re s > 0 when
    branch_limited=True is passed) and return values vectorized along the
    leading axis.  branch_limited marks transforms that are only defined on
    Re(s) >= 0; osc_bound is the largest |Im| of any pole of F, used to
    keep Talbot honest for oscillatory inversions.

    Returns a TimeSeries whose meta records the method actually used and
    which points were flagged by the internal error estimate.  escalate=False
    skips the retry ladder and never raises IltConvergenceError; callers that
    only need absolute accuracy (deep-tail probes) use it and read meta.
    """
    cfg = cfg or IltConfig()
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts < 0):
        raise ValueError("ilt requires t >= 0")
    shape = _probe_shape(fn)
    values = np.empty((ts.size,) + shape)
    err = np.zeros_like(values)

    pos = ts > 0
    if np.any(~pos):
        values[~pos] = _initial_value(fn, shape)

    method = _resolve_method(cfg, branch_limited, osc_bound, ts[pos].max() if pos.any() else None)
    tpos = ts[pos]
    if tpos.size:
        if method == "stehfest" or cfg.precision > 16:
            vals, errs = _run_mp(fn, tpos, cfg, method, shape)
        else:
            vals, errs, method = _run_double(fn, tpos, cfg, method, shape)
        values[pos] = vals
        err[pos] = errs

    flagged = (err > cfg.rel_tol * _rel_scale(values)).reshape(ts.size, -1).any(axis=1)
    if flagged.any() and escalate:
        values, err, flagged, method = _escalate(
            fn, ts, values, err, flagged, cfg, method, shape
        )
    return TimeSeries(
        ts,
        values,
        err=err,
        meta={"method": method, "flagged": flagged, "terms": cfg.terms},
    )


def _run_double(fn, tpos, cfg, method, shape):
    if method == "talbot":
        n_nodes = min(cfg.terms, max(8, int(_TALBOT_PER_DIGIT * cfg.precision)))
        chunk = _chunk_for(shape, n_nodes)
        try:
            res = _talbot_eval(fn, tpos, n_nodes, shape, chunk)
            alt1 = _talbot_eval(fn, tpos, max(8, n_nodes // 2), shape, chunk)
            alt2 = _talbot_eval(fn, tpos, n_nodes, shape, chunk, scale=_TALBOT_ALT_SCALE)
        except LaplaceDomainError:
            warnings.warn(
                "Talbot contour left the transform's domain; using Euler",
                RuntimeWarning,
                stacklevel=3,
            )
            method = "euler"
        else:
            errs = np.maximum(np.abs(res - alt1), np.abs(res - alt2))
            return res, errs, method
    n_sums = max(2 * _EULER_BINOM, min(cfg.terms, _MAX_EULER_NODES) - _EULER_BINOM - 1)
    chunk = _chunk_for(shape, n_sums + _EULER_BINOM + 1)
    res, res_half = _euler_eval(fn, tpos, n_sums, shape, chunk)
    return res, _euler_err(res, res_half), "euler"


def _run_mp(fn, tpos, cfg, method, shape):
    dps = max(cfg.precision, 20)
    if method == "stehfest":
        res = _stehfest_eval(fn, tpos, cfg.terms, shape, dps)
        alt = _stehfest_eval(fn, tpos, max(8, cfg.terms - 4), shape, dps)
        return res, np.abs(res - alt)
    n_sums = max(2 * _EULER_BINOM, cfg.terms - _EULER_BINOM - 1)
    res, res_half = _euler_eval_mp(fn, tpos, n_sums, shape, dps)
    return res, _euler_err(res, res_half, a_damp=math.log(10) * dps * 2 / 3)


def _mp_capable(fn):
    import mpmath as mp

    try:
        np.asarray(fn(mp.mpc(1, 1)), dtype=object)
    except Exception:
        return False
    return True


def _escalate(fn, ts, values, err, flagged, cfg, method, shape):
    """Re-run flagged points harder: more nodes, then extended precision."""
    tflag = ts[flagged]
    tpos = tflag[tflag > 0]
    if not tpos.size:
        return values, err, flagged, method

    if method == "talbot" and cfg.method == "auto":
        # pole coverage is the usual culprit; Euler has none
        n_sums = max(2 * _EULER_BINOM, min(cfg.terms, _MAX_EULER_NODES) - _EULER_BINOM - 1)
        res, half = _euler_eval(fn, tpos, n_sums, shape, _chunk_for(shape, n_sums))
        new_err = _euler_err(res, half)
        method = "euler"
    else:
        n_sums = min(4 * cfg.terms, _MAX_EULER_NODES)
        res, half = _euler_eval(fn, tpos, n_sums, shape, _chunk_for(shape, n_sums))
        new_err = _euler_err(res, half)

    sel = flagged & (ts > 0)
    better = (
        new_err.reshape(tpos.size, -1).max(axis=1)
        <= err[sel].reshape(tpos.size, -1).max(axis=1)
    )
    upd = np.where(sel)[0][better]
    values[upd], err[upd] = res[better], new_err[better]

    still = (err > cfg.rel_tol * _rel_scale(values)).reshape(ts.size, -1).any(axis=1)
    if still.any() and _mp_capable(fn):
        tbad = ts[still]
        res_mp, err_mp = _run_mp(fn, tbad, IltConfig("euler", cfg.terms, 40, cfg.rel_tol), "euler", shape)
        idx = np.where(still)[0]
        gain = err_mp.reshape(tbad.size, -1).max(axis=1) < err[idx].reshape(idx.size, -1).max(axis=1)
        values[idx[gain]], err[idx[gain]] = res_mp[gain], err_mp[gain]
        still = (err > cfg.rel_tol * _rel_scale(values)).reshape(ts.size, -1).any(axis=1)
    if still.any():
        raise IltConvergenceError(
            f"{int(still.sum())} point(s) failed to meet rel_tol={cfg.rel_tol} "
            "after node doubling and extended precision",
            results=(TimeSeries(ts, values, err=err), still),
        )
    return values, err, still, method
