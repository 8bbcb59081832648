"""Riccati diffusion realization of the operator's eigenvalues.

The diffusion (in operator time s, driven by a Brownian motion B)

    dp = (2/sqrt(beta)) p dB + ((a + 2/beta) p - p^2 - lam e^{-s}) ds

starts from p(0) = +infinity, may explode to -infinity and restarts from
+infinity.  The number of explosions on (0, horizon] is monotone in lam on a
fixed path; eigenvalues are recovered by bisection in lam over one path.

Integration switches between log coordinates ln|p| (stiffness-safe, exact
multiplicative noise) and raw p near zero, with adaptive refinement of the
shared dyadic noise grid.  Explosions are declared a fixed depth below the
moving critical level (ln(-p) >= margin) and corrected by the deterministic
residual dive time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import _rng
from .paths import BrownianPath, kernel_view

_LN_P_FLOOR = 28.0  # ln p at restart is at least this (p >= 1.4e12)
_MAX_EVENTS = 8192
_MAX_SUBSTEPS = 500_000

STATUS_OK = 0
STATUS_STEP_COLLAPSE = 1
STATUS_EVENT_OVERFLOW = 2


class NumericalFailureError(RuntimeError):
    """Integration failed; carries the diffusion time of the failure."""

    def __init__(self, time: float, message: str = "step collapse"):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


class BracketFailureError(RuntimeError):
    """Eigenvalue bracket expansion exceeded configured bounds."""


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature beta > 0 and Laguerre parameter a.

    Matrix-model operations accept a > -1; the rescaled-diffusion operations
    require a > 0 and must call require_positive_a().
    """

    beta: float
    a: float

    def __post_init__(self):
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.a > -1.0:
            raise ValueError(f"a must exceed -1, got {self.a}")

    def require_positive_a(self):
        if not self.a > 0.0:
            raise ValueError(f"this operation requires a > 0, got a={self.a}")
        return self


@dataclass(frozen=True)
class SolverConfig:
    """Step control for the diffusion integrators.

    base_dt: target step in the integrator's own time between refinements.
    drift_tol: max |drift|*dt per (sub)step in the active coordinate.
    p_switch: |p| below which raw coordinates replace log coordinates.
    start_cap: exponent C of the finite +infinity stand-in, ln p0 =
        max(28, C ln(1/beta)).
    explosion_margin: depth below the critical line (q units) declaring an
        explosion; the residual dive time 4*beta*exp(-depth/(2*beta)) is added.
    """

    base_dt: float = 1e-3
    drift_tol: float = 0.25
    p_switch: float = 1.0
    start_cap: float = 12.0
    explosion_margin: float = 56.0

    def __post_init__(self):
        for name in ("base_dt", "drift_tol", "p_switch", "start_cap", "explosion_margin"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_beta(cls, beta: float, base_dt: float = 1e-3) -> "SolverConfig":
        return cls(
            base_dt=base_dt,
            drift_tol=0.25 * min(1.0, beta),
            p_switch=1.0,
            start_cap=12.0,
            explosion_margin=28.0 * beta,
        )

    def ln_p_start(self, beta: float) -> float:
        return max(_LN_P_FLOOR, self.start_cap * math.log(1.0 / beta)) if beta < 1.0 else _LN_P_FLOOR


@dataclass
class ExplosionRecord:
    """Ordered times at which p reached -infinity and restarted from +infinity."""

    times: np.ndarray

    def count_up_to(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right"))


# integration modes
_LOGP, _RAW, _LOGN = 0, 1, 2


@nb.njit(cache=True)
def _p_kernel(seed, path_horizon, time_factor, amp, base, base_level, finest_level,
              beta, a, lam, drift_tol, p_switch, ln_p0, margin_ln, noise_amp,
              expl_out, zero_out, rec_stride, rec_t, rec_v, rec_sign, rec_flag):
    """Walk the dyadic noise tree and integrate the Riccati diffusion.

    Returns (n_explosions, n_zero_crossings, n_recorded, status, fail_time).
    The diffusion time is s = tau / time_factor where tau is path time;
    dB = amp * dW_tau.
    """
    n0 = 1 << base_level
    inv_tf = 1.0 / time_factor
    sqb = 2.0 / math.sqrt(beta)
    ln_switch = math.log(p_switch)
    lswitch_hi = p_switch * 1.000001

    wrs = np.empty(finest_level + 2)
    lev = base_level
    cell = 0
    width = path_horizon / n0
    wl = base[0]

    mode = _LOGP
    x = ln_p0
    p = 0.0

    nexp = 0
    nzero = 0
    nrec = 0
    flag = 0

    if rec_stride > 0:
        rec_t[0] = 0.0
        rec_v[0] = math.exp(min(x, 60.0))
        rec_sign[0] = 1
        rec_flag[0] = 0
        nrec = 1

    while True:
        if lev == base_level:
            if cell >= n0:
                break
            wr = base[cell + 1]
        else:
            wr = wrs[lev]
        s0 = width * cell * inv_tf
        ds_cell = width * inv_tf

        # drift in the active coordinate at cell start
        les = lam * math.exp(-s0)
        if mode == _LOGP:
            ep = math.exp(min(x, 700.0))
            drift = a - ep - les / ep
        elif mode == _RAW:
            drift = (a + 2.0 / beta) * p - p * p - les
        else:
            en = math.exp(min(x, 700.0))
            drift = a + en + les / en

        if abs(drift) * ds_cell > drift_tol and lev < finest_level:
            m = _rng.bridge_mid(seed, lev, cell, width, wl, wr)
            lev += 1
            cell <<= 1
            width *= 0.5
            wrs[lev] = m
            continue

        # integrate this cell: adaptive drift substeps, then the cell's noise
        dW = (wr - wl) * amp * noise_amp
        s = s0
        remaining = ds_cell
        nsub = 0
        flag = 0
        while remaining > 0.0:
            nsub += 1
            if nsub > _MAX_SUBSTEPS:
                return nexp, nzero, nrec, STATUS_STEP_COLLAPSE, s
            les = lam * math.exp(-s)
            if mode == _LOGP:
                ep = math.exp(min(x, 700.0))
                drift = a - ep - les / ep
            elif mode == _RAW:
                drift = (a + 2.0 / beta) * p - p * p - les
            else:
                en = math.exp(min(x, 700.0))
                drift = a + en + les / en
            dt = remaining
            ad = abs(drift)
            if ad * dt > drift_tol:
                dt = drift_tol / ad
            if mode == _RAW:
                pn = p + drift * dt
                if p > 0.0 and pn <= 0.0:
                    if nzero < zero_out.shape[0]:
                        zero_out[nzero] = s + dt * (p / (p - pn))
                        nzero += 1
                        flag = 1
                    else:
                        return nexp, nzero, nrec, STATUS_EVENT_OVERFLOW, s
                elif p < 0.0 <= pn:
                    pn = -1e-12  # the true diffusion cannot cross zero upward
                p = pn
            else:
                x += drift * dt
            s += dt
            remaining -= dt
            # mode transitions (drift part)
            if mode == _LOGP and x < ln_switch:
                p = math.exp(x)
                mode = _RAW
            elif mode == _LOGN:
                if x >= margin_ln:
                    if nexp >= expl_out.shape[0]:
                        return nexp, nzero, nrec, STATUS_EVENT_OVERFLOW, s
                    expl_out[nexp] = s + math.exp(-0.5 * x)
                    nexp += 1
                    flag = 2
                    mode = _LOGP
                    x = ln_p0
                elif x < ln_switch:
                    p = -math.exp(x)
                    mode = _RAW
            if mode == _RAW:
                if p > lswitch_hi:
                    x = math.log(p)
                    mode = _LOGP
                elif p < -lswitch_hi:
                    x = math.log(-p)
                    mode = _LOGN

        # apply the cell's Brownian increment in the active coordinate
        if mode == _RAW:
            pn = p + sqb * p * dW
            if p > 0.0 and pn <= 0.0:
                if nzero < zero_out.shape[0]:
                    zero_out[nzero] = s
                    nzero += 1
                    flag = 1
                else:
                    return nexp, nzero, nrec, STATUS_EVENT_OVERFLOW, s
            elif p < 0.0 <= pn:
                pn = -1e-12
            p = pn
            if p > lswitch_hi:
                x = math.log(p)
                mode = _LOGP
            elif p < -lswitch_hi:
                x = math.log(-p)
                mode = _LOGN
        else:
            x += sqb * dW
            if mode == _LOGP and x < ln_switch:
                p = math.exp(x)
                mode = _RAW
            elif mode == _LOGN:
                if x >= margin_ln:
                    if nexp >= expl_out.shape[0]:
                        return nexp, nzero, nrec, STATUS_EVENT_OVERFLOW, s
                    expl_out[nexp] = s + math.exp(-0.5 * x)
                    nexp += 1
                    flag = 2
                    mode = _LOGP
                    x = ln_p0
                elif x < ln_switch:
                    p = -math.exp(x)
                    mode = _RAW

        # advance to the next cell
        wl = wr
        cell += 1
        while lev > base_level and (cell & 1) == 0:
            cell >>= 1
            lev -= 1
            width *= 2.0

        if rec_stride > 0 and lev == base_level and cell % rec_stride == 0:
            if nrec < rec_t.shape[0]:
                rec_t[nrec] = width * cell * inv_tf
                if mode == _RAW:
                    rec_v[nrec] = p
                    rec_sign[nrec] = 1 if p > 0.0 else -1
                elif mode == _LOGP:
                    rec_v[nrec] = math.exp(min(x, 60.0))
                    rec_sign[nrec] = 1
                else:
                    rec_v[nrec] = -math.exp(min(x, 60.0))
                    rec_sign[nrec] = -1
                rec_flag[nrec] = flag
                nrec += 1

    return nexp, nzero, nrec, STATUS_OK, 0.0


def _base_level_for(path_horizon: float, dt: float, finest_level: int) -> int:
    level = max(4, math.ceil(math.log2(max(path_horizon / dt, 2.0))))
    return min(level, finest_level - 4)


def _run_p(params: ModelParams, lam: float, path, horizon: float, cfg: SolverConfig,
           base: np.ndarray | None = None, record_stride: int = 0, noise_amp: float = 1.0):
    """Shared driver returning raw kernel outputs (and the base grid used)."""
    if not lam > 0.0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if horizon > path.horizon * (1.0 + 1e-12):
        raise ValueError(f"horizon {horizon} exceeds path horizon {path.horizon}")
    seed, path_horizon, time_factor, amp = kernel_view(path)
    finest = getattr(path, "base", path).finest_level
    if base is None:
        level = _base_level_for(path_horizon, cfg.base_dt * time_factor, finest)
        base = _rng.fill_brownian(seed, level, path_horizon)
    base_level = int(np.log2(base.shape[0] - 1) + 0.5)
    n0 = base.shape[0] - 1

    expl = np.empty(_MAX_EVENTS)
    zero = np.empty(_MAX_EVENTS)
    if record_stride > 0:
        nmax = n0 // record_stride + 8
        rec_t = np.empty(nmax)
        rec_v = np.empty(nmax)
        rec_sign = np.empty(nmax, np.int8)
        rec_flag = np.empty(nmax, np.int8)
    else:
        rec_t = rec_v = np.empty(0)
        rec_sign = rec_flag = np.empty(0, np.int8)

    ln_p0 = cfg.ln_p_start(params.beta)
    margin_ln = cfg.explosion_margin / params.beta
    if margin_ln > 600.0:
        raise ValueError(f"explosion_margin/beta = {margin_ln:.3g} too deep to integrate; "
                         "use SolverConfig.for_beta")
    nexp, nzero, nrec, status, fail_t = _p_kernel(
        seed, path_horizon, time_factor, amp, base, base_level, finest,
        params.beta, params.a, lam, cfg.drift_tol, cfg.p_switch, ln_p0, margin_ln,
        noise_amp, expl, zero, record_stride, rec_t, rec_v, rec_sign, rec_flag)
    if status == STATUS_STEP_COLLAPSE:
        raise NumericalFailureError(fail_t)
    if status == STATUS_EVENT_OVERFLOW:
        raise NumericalFailureError(fail_t, "event buffer overflow")
    out = {
        "explosions": expl[:nexp][expl[:nexp] <= horizon],
        "zeros": zero[:nzero][zero[:nzero] <= horizon],
        "base": base,
    }
    if record_stride > 0:
        keep = rec_t[:nrec] <= horizon * (1 + 1e-12)
        out["rec"] = (rec_t[:nrec][keep], rec_v[:nrec][keep],
                      rec_sign[:nrec][keep], rec_flag[:nrec][keep])
    return out


def simulate_p(params: ModelParams, lam: float, path, horizon: float,
               cfg: SolverConfig | None = None, record_stride: int = 1,
               noise_amp: float = 1.0):
    """Simulate the diffusion; returns (Trajectory, ExplosionRecord).

    Zero crossings of p (sign changes + to -) and explosions (dives to
    -infinity, followed by restart from +infinity) are both recorded;
    the ExplosionRecord holds the explosion times only.
    """
    from .rescaled import Trajectory, build_trajectory

    cfg = cfg or SolverConfig.for_beta(params.beta)
    out = _run_p(params, lam, path, horizon, cfg, record_stride=max(1, record_stride),
                 noise_amp=noise_amp)
    traj = build_trajectory(out["rec"], out["zeros"], out["explosions"])
    return traj, ExplosionRecord(times=out["explosions"].copy())


def count_explosions(params: ModelParams, lam: float, path, horizon: float,
                     cfg: SolverConfig | None = None, *, base: np.ndarray | None = None,
                     noise_amp: float = 1.0) -> int:
    """Number of explosion times <= horizon; monotone in lam on a fixed path."""
    if horizon <= 0.0:
        return 0
    cfg = cfg or SolverConfig.for_beta(params.beta)
    out = _run_p(params, lam, path, horizon, cfg, base=base, noise_amp=noise_amp)
    return int(out["explosions"].size)


def eigenvalue(params: ModelParams, k: int, path, horizon: float,
               cfg: SolverConfig | None = None,
               bracket: tuple[float, float] = (1e-3, 30.0), tol: float = 1e-3,
               expand_limits: tuple[float, float] = (1e-12, 1e15)) -> float:
    """k-th eigenvalue on a fixed path by monotone bisection in lam.

    Every probe reuses the identical Brownian realization (the coupling
    requirement); bisection runs in log-lam and stops at relative width tol.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    cfg = cfg or SolverConfig.for_beta(params.beta)
    seed, path_horizon, time_factor, amp = kernel_view(path)
    finest = getattr(path, "base", path).finest_level
    level = _base_level_for(path_horizon, cfg.base_dt * time_factor, finest)
    base = _rng.fill_brownian(seed, level, path_horizon)

    def count(lam):
        return count_explosions(params, lam, path, horizon, cfg, base=base)

    lo, hi = bracket
    while count(lo) > k:
        lo /= 8.0
        if lo < expand_limits[0]:
            raise BracketFailureError(f"count({lo * 8}) > {k} at lower limit")
    while count(hi) <= k:
        hi *= 8.0
        if hi > expand_limits[1]:
            raise BracketFailureError(f"count({hi / 8}) <= {k} at upper limit")
    while hi - lo > tol * lo:
        mid = math.sqrt(lo * hi)
        if count(mid) > k:
            hi = mid
        else:
            lo = mid
    return math.sqrt(lo * hi)


def rescale_eigenvalue(lambda_k: float, beta: float) -> float:
    """High-temperature rescaling beta*ln(1/lambda); reverses the ordering."""
    if not lambda_k > 0.0:
        raise ValueError(f"eigenvalue must be positive, got {lambda_k}")
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    return beta * math.log(1.0 / lambda_k)
