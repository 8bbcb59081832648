"""Limiting diffusion: alternating drifted Brownian motions reflected at 0.

The process starts at 0, follows a Brownian motion with drift a/4 reflected
downwards at 0 (Skorohod map y - sup y), and each time it hits the moving
line c_mu(t) = -mu - t/4 it restarts at 0 with the drift switched between
a/4 and -(a+1)/4.  All segments are built from one underlying Brownian
motion: restarts reset the supremum register, never the noise.

Hits are detected by sign change of r - c on the mesh with linear
interpolation; an optional Brownian-bridge sub-mesh correction is available
for acceptance runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import _rng
from .paths import kernel_view
from .rescaled import PointMeasure
from .riccati import _base_level_for, _MAX_EVENTS, NumericalFailureError


@dataclass
class ReflectedSegment:
    """One reflected excursion: values of y(t) - sup_{s<=t} y(s) (all <= 0)."""

    drift: float
    start_time: float
    times: np.ndarray
    values: np.ndarray


@dataclass
class LimitTrajectory:
    segments: list[ReflectedSegment]
    hits_plus: np.ndarray
    hits_minus: np.ndarray

    def write_csv(self, f, mu: float) -> None:
        """Columns t,value,critical_line,segment_sign."""
        close = False
        if isinstance(f, str):
            f = open(f, "w", newline="")
            close = True
        try:
            f.write("t,value,critical_line,segment_sign\n")
            for i, seg in enumerate(self.segments):
                sign = 1 if i % 2 == 0 else -1
                for t, v in zip(seg.times, seg.values):
                    t, v = float(t), float(v)
                    f.write(f"{t!r},{v!r},{float(-mu - 0.25 * t)!r},{sign}\n")
        finally:
            if close:
                f.close()


def reflect(path, drift: float, start_time: float, horizon: float, mesh: float,
            noise_amp: float = 1.0) -> ReflectedSegment:
    """Discrete Skorohod map of the drifted path increments after start_time.

    The running supremum is maintained exactly over the mesh; values are
    nonpositive by construction.
    """
    if not mesh > 0.0:
        raise ValueError(f"mesh must be positive, got {mesh}")
    if not start_time < horizon:
        raise ValueError("start_time must precede horizon")
    if horizon > path.horizon * (1 + 1e-12):
        raise ValueError(f"horizon {horizon} exceeds path horizon {path.horizon}")
    seed, path_horizon, time_factor, amp = kernel_view(path)
    finest = getattr(path, "base", path).finest_level
    level = _base_level_for(path_horizon, mesh * time_factor, finest)
    grid = _rng.fill_brownian(seed, level, path_horizon) * (amp * noise_amp)
    n = grid.shape[0] - 1
    dt = path_horizon / n / time_factor
    i0 = int(math.ceil(start_time / dt - 1e-9))
    t = np.arange(i0, n + 1) * dt
    keep = t <= horizon * (1 + 1e-12)
    t = t[keep]
    y = grid[i0:i0 + t.size] - grid[i0] + drift * (t - t[0])
    run_max = np.maximum.accumulate(np.maximum(y, 0.0))
    return ReflectedSegment(drift=drift, start_time=t[0], times=t, values=y - run_max)


@nb.njit(cache=True)
def _r_kernel(seed, path_horizon, base, base_level, a, mu, alternate, use_bridge,
              noise_amp, start_branch, hp_out, hm_out,
              rec_stride, rec_t, rec_v, rec_sign):
    """Mesh walk of the alternating reflected diffusion; returns hit counts."""
    n0 = 1 << base_level
    dt = path_horizon / n0
    y = 0.0
    mx = 0.0
    branch = start_branch
    nhp = 0
    nhm = 0
    nrec = 0
    g0 = mu  # r(0) - c(0)
    if rec_stride > 0:
        rec_t[0] = 0.0
        rec_v[0] = 0.0
        rec_sign[0] = branch
        nrec = 1
    for i in range(n0):
        dW = (base[i + 1] - base[i]) * noise_amp
        drift = 0.25 * a if branch > 0 else -0.25 * (a + 1.0)
        y += dW + drift * dt
        if y > mx:
            mx = y
        r = y - mx
        t1 = dt * (i + 1)
        c1 = -mu - 0.25 * t1
        g1 = r - c1
        hit = g1 <= 0.0
        xi = t1
        if hit:
            if g0 > 0.0:
                xi = t1 - dt * (g1 / (g1 - g0))
        elif use_bridge and g0 > 0.0:
            pb = math.exp(-2.0 * g0 * g1 / dt)
            if _rng.node_uniform(seed, _rng.mid_node(base_level, i), np.uint64(9)) < pb:
                hit = True
                xi = t1 - 0.5 * dt
        if hit:
            if branch > 0:
                if nhp >= hp_out.shape[0]:
                    return nhp, nhm, nrec, 1
                hp_out[nhp] = xi
                nhp += 1
            else:
                if nhm >= hm_out.shape[0]:
                    return nhp, nhm, nrec, 1
                hm_out[nhm] = xi
                nhm += 1
            if alternate:
                branch = -branch
            y = 0.0
            mx = 0.0
            g1 = 0.0 - c1
        g0 = g1
        if rec_stride > 0 and (i + 1) % rec_stride == 0 and nrec < rec_t.shape[0]:
            rec_t[nrec] = t1
            rec_v[nrec] = y - mx
            rec_sign[nrec] = branch
            nrec += 1
    return nhp, nhm, nrec, 0


def run_r(a: float, mu: float, path, horizon: float, mesh: float = 1e-3,
          alternate: bool = True, bridge_correction: bool = False,
          record_stride: int = 0, noise_amp: float = 1.0,
          base: np.ndarray | None = None, start_branch: int = 1) -> dict:
    """Low-level driver for the reflected alternating diffusion."""
    if not a > 0.0:
        raise ValueError(f"a must be positive, got {a}")
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    if horizon > path.horizon * (1 + 1e-12):
        raise ValueError(f"horizon {horizon} exceeds path horizon {path.horizon}")
    seed, path_horizon, time_factor, amp = kernel_view(path)
    if time_factor != 1.0:
        raise ValueError("the limiting diffusion integrates in the path's own clock")
    finest = getattr(path, "base", path).finest_level
    if base is None:
        level = _base_level_for(path_horizon, mesh, finest)
        base = _rng.fill_brownian(seed, level, path_horizon)
    base_level = int(np.log2(base.shape[0] - 1) + 0.5)
    n0 = base.shape[0] - 1

    hp = np.empty(_MAX_EVENTS)
    hm = np.empty(_MAX_EVENTS)
    if record_stride > 0:
        nmax = n0 // record_stride + 8
        rec_t = np.empty(nmax)
        rec_v = np.empty(nmax)
        rec_sign = np.empty(nmax, np.int8)
    else:
        rec_t = rec_v = np.empty(0)
        rec_sign = np.empty(0, np.int8)

    nhp, nhm, nrec, status = _r_kernel(
        seed, path_horizon, base, base_level, a, mu, alternate, bridge_correction,
        noise_amp, start_branch, hp, hm, record_stride, rec_t, rec_v, rec_sign)
    if status:
        raise NumericalFailureError(float("nan"), "hit buffer overflow")
    out = {
        "hits_plus": hp[:nhp][hp[:nhp] <= horizon],
        "hits_minus": hm[:nhm][hm[:nhm] <= horizon],
        "base": base,
    }
    if record_stride > 0:
        keep = rec_t[:nrec] <= horizon * (1 + 1e-12)
        out["rec"] = (rec_t[:nrec][keep], rec_v[:nrec][keep], rec_sign[:nrec][keep])
    return out


def simulate_r(a: float, mu: float, path, horizon: float, mesh: float = 1e-3,
               bridge_correction: bool = False, record_stride: int = 1,
               noise_amp: float = 1.0) -> LimitTrajectory:
    """Alternating reflected diffusion started at 0; returns LimitTrajectory."""
    out = run_r(a, mu, path, horizon, mesh, alternate=True,
                bridge_correction=bridge_correction,
                record_stride=max(1, record_stride), noise_amp=noise_amp)
    t, v, sign = out["rec"]
    bounds = np.sort(np.concatenate([out["hits_plus"], out["hits_minus"]]))
    segments = []
    start = 0.0
    for i in range(len(bounds) + 1):
        end = bounds[i] if i < len(bounds) else np.inf
        m = (t >= start) & (t < end)
        drift = 0.25 * a if i % 2 == 0 else -0.25 * (a + 1.0)
        segments.append(ReflectedSegment(drift=drift, start_time=start,
                                         times=t[m], values=v[m]))
        start = end
    return LimitTrajectory(segments=segments, hits_plus=out["hits_plus"],
                           hits_minus=out["hits_minus"])


def limiting_measure(traj: LimitTrajectory) -> PointMeasure:
    """Counting measure of the - hit times."""
    return PointMeasure(atoms=np.asarray(traj.hits_minus))


def limit_point_process(a: float, mu_grid, path, horizon: float, mesh: float = 1e-3,
                        bridge_correction: bool = False) -> list[tuple[float, int]]:
    """Hit counts of the alternating diffusion along an increasing mu grid.

    All grid points share the one path (and mesh), so counts are
    non-increasing in mu pathwise, not just in law.
    """
    mu_grid = list(mu_grid)
    if any(b <= a_ for a_, b in zip(mu_grid, mu_grid[1:])) or not mu_grid:
        raise ValueError("mu grid must be non-empty and strictly increasing")
    base = None
    out = []
    for mu in mu_grid:
        res = run_r(a, mu, path, horizon, mesh, alternate=True,
                    bridge_correction=bridge_correction, base=base)
        base = res["base"]
        out.append((mu, int(res["hits_minus"].size)))
    return out
