"""Trajectory-ensemble kernels for the renewal Monte Carlo average.

Two interchangeable backends compute the same ensemble:

* a numba-jitted per-trajectory loop (default when numba imports), and
* a chunk-vectorized numpy fallback (forced via TELEGRAPHQ_DISABLE_NUMBA=1
  or backend="numpy").

Both consume identical per-trajectory random streams -- a splitmix64-style
counter generator keyed by (seed, trajectory index), with draws taken in
segment order -- so the backends sample the *same* trajectories and differ
only in floating-point summation order (and libm ulps).  That property is
what makes the backend flag safe to flip mid-study, and is regression-tested.

Streams: state0 = scramble(seed + (index+1)*GAMMA); the j-th variate is
scramble(state0 + (j+1)*GAMMA) >> 11, scaled to [0, 1).  scramble is the
splitmix64 finalizer (xor-shift-multiply avalanche).

Per-trajectory draw order: initial noise sign; first residence from the
forward-recurrence density (stationary start); then ordinary residences.
Exponential kernels use one variate per residence, biexponential two
(channel choice, then the exponential variate).

Segment propagation is the exact Rodrigues rotation about the frozen-field
axis, applied from the segment start for every recorded grid time, so no
integration error accumulates inside segments.
"""
from __future__ import annotations

import math
import os

import numpy as np

from .bloch import TssParams, total_couplings
from .noise import Biexponential, Exponential, NoiseModel

__all__ = ["mc_average", "numba_available"]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = float(2.0**-53)

_DISABLED = bool(os.environ.get("TELEGRAPHQ_DISABLE_NUMBA"))
try:
    if _DISABLED:
        raise ImportError("numba disabled by environment flag")
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):  # pragma: no cover - trivial shim
        def deco(fn):
            return fn

        return deco(args[0]) if args and callable(args[0]) else deco


def numba_available() -> bool:
    return _HAVE_NUMBA


# ---------------------------------------------------------------------------
# numba backend (scalar per-trajectory loop)


@_njit(cache=True)
def _scramble(z):
    z = z ^ (z >> _S30)
    z = z * _MUL1
    z = z ^ (z >> _S27)
    z = z * _MUL2
    return z ^ (z >> _S31)


@_njit(cache=True)
def _kernel(
    seed,
    idx0,
    n_traj,
    ts,
    p0x,
    p0y,
    p0z,
    nxp,
    nzp,
    omp,
    nxm,
    nzm,
    omm,
    kind,
    tau,
    theta,
    a1,
    a2,
    w1,
    out_sum,
    out_sq,
):
    n_out = ts.shape[0]
    idx = idx0
    for _ in range(n_traj):
        idx = idx + _ONE
        st = _scramble(seed + idx * _GAMMA)

        st = st + _GAMMA
        u = float(_scramble(st) >> _S11) * _INV53
        plus = u < 0.5

        # first residence: forward recurrence (stationary observer)
        if kind == 0:
            st = st + _GAMMA
            u = float(_scramble(st) >> _S11) * _INV53
            seg = -tau * math.log1p(-u)
        else:
            st = st + _GAMMA
            uw = float(_scramble(st) >> _S11) * _INV53
            st = st + _GAMMA
            ut = float(_scramble(st) >> _S11) * _INV53
            rate = a1 if uw < w1 else a2
            seg = -math.log1p(-ut) / rate

        px, py, pz = p0x, p0y, p0z
        t0 = 0.0
        j = 0
        while j < n_out:
            t1 = t0 + seg
            if plus:
                nx, nz, om = nxp, nzp, omp
            else:
                nx, nz, om = nxm, nzm, omm
            while j < n_out and ts[j] < t1:
                th = om * (ts[j] - t0)
                c = math.cos(th)
                s = math.sin(th)
                ic = 1.0 - c
                dot = nx * px + nz * pz
                rx = px * c - nz * py * s + nx * dot * ic
                ry = py * c + (nz * px - nx * pz) * s
                rz = pz * c + nx * py * s + nz * dot * ic
                out_sum[j, 0] += rx
                out_sum[j, 1] += ry
                out_sum[j, 2] += rz
                out_sq[j, 0] += rx * rx
                out_sq[j, 1] += ry * ry
                out_sq[j, 2] += rz * rz
                j += 1
            th = om * seg
            c = math.cos(th)
            s = math.sin(th)
            ic = 1.0 - c
            dot = nx * px + nz * pz
            qx = px * c - nz * py * s + nx * dot * ic
            qy = py * c + (nz * px - nx * pz) * s
            qz = pz * c + nx * py * s + nz * dot * ic
            px, py, pz = qx, qy, qz
            t0 = t1
            plus = not plus
            if kind == 0:
                st = st + _GAMMA
                u = float(_scramble(st) >> _S11) * _INV53
                seg = -tau * math.log1p(-u)
            else:
                st = st + _GAMMA
                uch = float(_scramble(st) >> _S11) * _INV53
                st = st + _GAMMA
                ut = float(_scramble(st) >> _S11) * _INV53
                rate = a1 if uch < theta else a2
                seg = -math.log1p(-ut) / rate


# ---------------------------------------------------------------------------
# numpy backend (lockstep chunk vectorization, identical streams)


def _scramble_np(z):
    z = z ^ (z >> _S30)
    z = z * _MUL1
    z = z ^ (z >> _S27)
    z = z * _MUL2
    return z ^ (z >> _S31)


def _rotate_np(p, nx, nz, om, dt):
    th = om * dt
    c = np.cos(th)
    s = np.sin(th)
    ic = 1.0 - c
    dot = nx * p[:, 0] + nz * p[:, 2]
    out = np.empty_like(p)
    out[:, 0] = p[:, 0] * c - nz * p[:, 1] * s + nx * dot * ic
    out[:, 1] = p[:, 1] * c + (nz * p[:, 0] - nx * p[:, 2]) * s
    out[:, 2] = p[:, 2] * c + nx * p[:, 1] * s + nz * dot * ic
    return out


def _numpy_chunk(seed, idx, ts, p0, ax_p, ax_m, kind, tau, theta, a1, a2, w1, out_sum, out_sq):
    k = idx.size
    n_out = ts.size
    st = _scramble_np(seed + (idx + _ONE) * _GAMMA)

    def draw():
        nonlocal st
        st = st + _GAMMA
        return (_scramble_np(st) >> _S11).astype(np.float64) * _INV53

    plus = draw() < 0.5
    if kind == 0:
        seg = -tau * np.log1p(-draw())
    else:
        uw, ut = draw(), draw()
        rate = np.where(uw < w1, a1, a2)
        seg = -np.log1p(-ut) / rate

    p = np.broadcast_to(p0, (k, 3)).copy()
    t0 = np.zeros(k)
    j = np.zeros(k, dtype=np.int64)
    nxp, nzp, omp = ax_p
    nxm, nzm, omm = ax_m
    while True:
        active = j < n_out
        if not active.any():
            break
        t1 = t0 + seg
        nx = np.where(plus, nxp, nxm)
        nz = np.where(plus, nzp, nzm)
        om = np.where(plus, omp, omm)
        j_end = np.minimum(np.searchsorted(ts, t1, side="left"), n_out)
        span = int(np.max(np.where(active, j_end - j, 0)))
        for step in range(span):
            jj = j + step
            m = active & (jj < j_end)
            if not m.any():
                continue
            gi = jj[m]
            r = _rotate_np(p[m], nx[m], nz[m], om[m], ts[gi] - t0[m])
            np.add.at(out_sum, gi, r)
            np.add.at(out_sq, gi, r * r)
        j = np.maximum(j, j_end)
        p = np.where(active[:, None], _rotate_np(p, nx, nz, om, seg), p)
        t0 = t1
        plus = ~plus
        if kind == 0:
            seg = -tau * np.log1p(-draw())
        else:
            uch, ut = draw(), draw()
            rate = np.where(uch < theta, a1, a2)
            seg = -np.log1p(-ut) / rate


def _axis(eps0, dtot):
    om = math.hypot(eps0, dtot)
    if om == 0.0:
        return 0.0, 0.0, 0.0
    return -dtot / om, -eps0 / om, om


def mc_average(
    tss: TssParams,
    noise: NoiseModel,
    p0,
    ts,
    n_traj: int,
    seed: int,
    backend: str = "auto",
    chunk: int = 1024,
):
    """Ensemble mean and standard error of the Bloch vector on grid ts.

    Returns (mean, stderr, backend_used) with mean/stderr of shape (len(ts), 3).
    """
    if backend not in ("auto", "numba", "numpy"):
        raise ValueError("backend must be auto, numba or numpy")
    if backend == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable/disabled")
    use_numba = _HAVE_NUMBA if backend == "auto" else backend == "numba"

    rtd = noise.rtd
    if isinstance(rtd, Exponential):
        kind, tau, theta, a1, a2, w1 = 0, rtd.tau, 0.0, 0.0, 0.0, 0.0
    elif isinstance(rtd, Biexponential):
        m = rtd.mean_residence
        kind, tau = 1, 0.0
        theta, a1, a2 = rtd.theta, rtd.alpha1, rtd.alpha2
        w1 = (rtd.theta / rtd.alpha1) / m
    else:
        raise NotImplementedError("Monte Carlo sampling requires a closed-form RTD sampler")

    ts = np.ascontiguousarray(ts, dtype=np.float64)
    if ts.ndim != 1 or ts.size == 0 or np.any(np.diff(ts) <= 0) or ts[0] < 0:
        raise ValueError("ts must be non-empty, strictly increasing, starting at t >= 0")
    dp, dm = total_couplings(tss, noise.amplitude)
    ax_p = _axis(tss.epsilon0, dp)
    ax_m = _axis(tss.epsilon0, dm)
    p0 = np.asarray(p0, dtype=np.float64).reshape(3)
    seed_u = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)

    out_sum = np.zeros((ts.size, 3))
    out_sq = np.zeros((ts.size, 3))
    if use_numba:
        _kernel(
            seed_u,
            np.uint64(0),
            np.int64(n_traj),
            ts,
            p0[0],
            p0[1],
            p0[2],
            ax_p[0],
            ax_p[1],
            ax_p[2],
            ax_m[0],
            ax_m[1],
            ax_m[2],
            np.int64(kind),
            tau,
            theta,
            a1,
            a2,
            w1,
            out_sum,
            out_sq,
        )
        used = "numba"
    else:
        for lo in range(0, n_traj, chunk):
            idx = np.arange(lo, min(lo + chunk, n_traj), dtype=np.uint64)
            _numpy_chunk(
                seed_u, idx, ts, p0, ax_p, ax_m, kind, tau, theta, a1, a2, w1, out_sum, out_sq
            )
        used = "numpy"

    mean = out_sum / n_traj
    var = np.maximum(out_sq / n_traj - mean * mean, 0.0)
    stderr = np.sqrt(var / max(n_traj - 1, 1))
    return mean, stderr, used
