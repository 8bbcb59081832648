"""High-temperature rescaled diffusions q+/q- and their explosion measure.

In rescaled time t (driven by a Brownian motion W) the alternating diffusion
follows

    dq+ = dW + (1/4)(a       - e^{q/beta} - e^{-(q + t/4 + mu)/beta}) dt
    dq- = dW + (1/4)(-(a+1)  - e^{q/beta} - e^{-(q + t/4 + mu)/beta}) dt

starting from +infinity on the + branch; each explosion to -infinity restarts
the other branch from +infinity.  Explosion times interleave
xi+(0) < xi-(0) < xi+(1) < ...; the point measure of the xi- times realizes
the rescaled-explosion measure of the underlying Riccati diffusion.

The moving barrier c_mu(t) = -mu - t/4 separates diffusive behavior from the
explosive layer; explosions are declared a configured depth below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import _rng
from .paths import kernel_view
from .riccati import (ModelParams, SolverConfig, NumericalFailureError,
                      STATUS_OK, STATUS_STEP_COLLAPSE, STATUS_EVENT_OVERFLOW,
                      _base_level_for, _MAX_EVENTS, _MAX_SUBSTEPS)


def critical_line(mu: float, t: float) -> float:
    """Moving barrier c_mu(t) = -mu - t/4."""
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    return -mu - 0.25 * t


def q_from_p(p_value: float, t_rescaled: float, beta: float, mu: float) -> tuple[int, float]:
    """Log transform of the Riccati variable; returns (sign, q value).

    Positive p maps to the + branch beta*ln(p); negative p to the - branch
    -beta*ln(-p) - mu - t/4.  p = 0 is the measure-zero branch boundary.
    """
    if p_value == 0.0:
        raise ValueError("p=0 is the branch boundary; the transform is undefined there")
    if p_value > 0.0:
        return 1, beta * math.log(p_value)
    return -1, -beta * math.log(-p_value) - mu - 0.25 * t_rescaled


def p_from_q(sign: int, q_value: float, t_rescaled: float, beta: float, mu: float) -> float:
    """Inverse of q_from_p on the given branch."""
    if sign > 0:
        return math.exp(q_value / beta)
    return -math.exp(-(q_value + mu + 0.25 * t_rescaled) / beta)


def branch_drift(q: float, t: float, sign: int, params: ModelParams, mu: float) -> float:
    """Drift of the + or - branch at state q, time t."""
    base = params.a if sign > 0 else -(params.a + 1.0)
    e1 = math.exp(min(q / params.beta, 700.0))
    e2 = math.exp(min(-(q + 0.25 * t + mu) / params.beta, 700.0))
    return 0.25 * (base - e1 - e2)


@dataclass
class TrajectorySegment:
    start_time: float
    sign: int
    times: np.ndarray
    values: np.ndarray


@dataclass
class Trajectory:
    """Piecewise record of an alternating diffusion with explosion restarts."""

    segments: list[TrajectorySegment]
    explosions_plus: np.ndarray
    explosions_minus: np.ndarray

    def write_csv(self, f, mu: float | None = None) -> None:
        """Columns t,value,segment_sign,event_flag (+critical line if mu given)."""
        close = False
        if isinstance(f, str):
            f = open(f, "w", newline="")
            close = True
        try:
            header = "t,value,segment_sign,event_flag"
            if mu is not None:
                header += ",critical_line"
            f.write(header + "\n")
            events = sorted([(float(t), 1) for t in self.explosions_plus]
                            + [(float(t), 2) for t in self.explosions_minus])
            ei = 0
            for seg in self.segments:
                for t, v in zip(seg.times, seg.values):
                    t, v = float(t), float(v)
                    flag = 0
                    while ei < len(events) and events[ei][0] <= t:
                        flag = events[ei][1]
                        ei += 1
                    row = f"{t!r},{v!r},{seg.sign},{flag}"
                    if mu is not None:
                        row += f",{float(-mu - 0.25 * t)!r}"
                    f.write(row + "\n")
        finally:
            if close:
                f.close()


@dataclass
class PointMeasure:
    """Finite ordered atom list on the positive half-line."""

    atoms: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.atoms.size and not (np.all(np.diff(self.atoms) > 0) and self.atoms[0] >= 0):
            raise ValueError("atoms must be strictly increasing and nonnegative")

    def total(self) -> int:
        return int(self.atoms.size)

    def count_up_to(self, t: float) -> int:
        return int(np.searchsorted(self.atoms, t, side="right"))

    def count_in(self, a: float, b: float) -> int:
        return self.count_up_to(b) - self.count_up_to(a)


def build_trajectory(rec, xi_plus: np.ndarray, xi_minus: np.ndarray) -> Trajectory:
    """Assemble alternating segments from a sampled record and event lists."""
    t, v, sign, _flag = rec
    bounds = np.sort(np.concatenate([xi_plus, xi_minus]))
    segments = []
    start = 0.0
    for i in range(bounds.size + 1):
        end = bounds[i] if i < bounds.size else np.inf
        m = (t >= start) & (t < end)
        segments.append(TrajectorySegment(start_time=start, sign=1 if i % 2 == 0 else -1,
                                          times=t[m], values=v[m]))
        start = end
    return Trajectory(segments=segments, explosions_plus=np.asarray(xi_plus),
                      explosions_minus=np.asarray(xi_minus))


@nb.njit(cache=True)
def _q_kernel(seed, path_horizon, base, base_level, finest_level,
              beta, a, mu, drift_tol, q0, margin, noise_amp, delta,
              xp_out, xm_out, rec_stride, rec_t, rec_v, rec_sign, rec_flag):
    """Tree-walk integrator for the alternating rescaled diffusion.

    Returns (n_plus, n_minus, n_rec, tau0, tauc, status, fail_time); tau0 and
    tauc are the first hitting times of 0 and of c+delta on the first +
    segment (inf when not reached; tau0 uses a bridge-crossing correction).
    """
    n0 = 1 << base_level
    inv_beta = 1.0 / beta

    wrs = np.empty(finest_level + 2)
    lev = base_level
    cell = 0
    width = path_horizon / n0
    wl = base[0]

    q = q0
    branch = 1
    seg = 0
    nplus = 0
    nminus = 0
    nrec = 0
    tau0 = np.inf
    tauc = np.inf
    flag = 0

    if rec_stride > 0:
        rec_t[0] = 0.0
        rec_v[0] = q
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
        t0 = width * cell
        dt_cell = width

        c0 = -mu - 0.25 * t0
        e1 = math.exp(min(q * inv_beta, 700.0))
        e2 = math.exp(min(-(q - c0) * inv_beta, 700.0))
        drift = 0.25 * ((a if branch > 0 else -(a + 1.0)) - e1 - e2)

        if abs(drift) * dt_cell > drift_tol and lev < finest_level:
            m = _rng.bridge_mid(seed, lev, cell, width, wl, wr)
            lev += 1
            cell <<= 1
            width *= 0.5
            wrs[lev] = m
            continue

        dW = (wr - wl) * noise_amp
        t = t0
        remaining = dt_cell
        nsub = 0
        flag = 0
        q_cell_start = q
        while remaining > 0.0:
            nsub += 1
            if nsub > _MAX_SUBSTEPS:
                return nplus, nminus, nrec, tau0, tauc, STATUS_STEP_COLLAPSE, t
            c = -mu - 0.25 * t
            e1 = math.exp(min(q * inv_beta, 700.0))
            e2 = math.exp(min(-(q - c) * inv_beta, 700.0))
            drift = 0.25 * ((a if branch > 0 else -(a + 1.0)) - e1 - e2)
            dt = remaining
            ad = abs(drift)
            if ad * dt > drift_tol:
                dt = drift_tol / ad
            qn = q + drift * dt
            tn = t + dt
            if seg == 0 and branch > 0:
                if tau0 == np.inf and qn <= 0.0 < q:
                    tau0 = t + dt * (q / (q - qn))
                cn = -mu - 0.25 * tn
                if tauc == np.inf and qn - cn <= delta:
                    g0 = q - c - delta
                    g1 = qn - cn - delta
                    if g0 > 0.0 > g1:
                        tauc = t + dt * (g0 / (g0 - g1))
                    else:
                        tauc = tn
            cn = -mu - 0.25 * tn
            if qn - cn <= -margin:
                depth = cn - qn
                xi = tn + 4.0 * beta * math.exp(-0.5 * depth * inv_beta)
                if branch > 0:
                    if nplus >= xp_out.shape[0]:
                        return nplus, nminus, nrec, tau0, tauc, STATUS_EVENT_OVERFLOW, tn
                    xp_out[nplus] = xi
                    nplus += 1
                    flag = 1
                else:
                    if nminus >= xm_out.shape[0]:
                        return nplus, nminus, nrec, tau0, tauc, STATUS_EVENT_OVERFLOW, tn
                    xm_out[nminus] = xi
                    nminus += 1
                    flag = 2
                branch = -branch
                seg += 1
                qn = q0
            q = qn
            t = tn
            remaining -= dt

        # cell noise (additive coordinate)
        q += dW
        t_end = width * (cell + 1)
        c_end = -mu - 0.25 * t_end
        if seg == 0 and branch > 0:
            if tau0 == np.inf:
                if q <= 0.0:
                    tau0 = t_end
                elif q_cell_start > 0.0 and dt_cell > 0.0 and noise_amp > 0.0:
                    # Brownian-bridge dip below 0 between sampled endpoints
                    pb = math.exp(-2.0 * q_cell_start * q / dt_cell)
                    if _rng.node_uniform(seed, _rng.mid_node(lev, cell), np.uint64(7)) < pb:
                        tau0 = t_end
            if tauc == np.inf and q - c_end <= delta:
                tauc = t_end
        if q - c_end <= -margin:
            depth = c_end - q
            xi = t_end + 4.0 * beta * math.exp(-0.5 * depth * inv_beta)
            if branch > 0:
                if nplus >= xp_out.shape[0]:
                    return nplus, nminus, nrec, tau0, tauc, STATUS_EVENT_OVERFLOW, t_end
                xp_out[nplus] = xi
                nplus += 1
                flag = 1
            else:
                if nminus >= xm_out.shape[0]:
                    return nplus, nminus, nrec, tau0, tauc, STATUS_EVENT_OVERFLOW, t_end
                xm_out[nminus] = xi
                nminus += 1
                flag = 2
            branch = -branch
            seg += 1
            q = q0

        wl = wr
        cell += 1
        while lev > base_level and (cell & 1) == 0:
            cell >>= 1
            lev -= 1
            width *= 2.0

        if rec_stride > 0 and lev == base_level and cell % rec_stride == 0:
            if nrec < rec_t.shape[0]:
                rec_t[nrec] = width * cell
                rec_v[nrec] = q
                rec_sign[nrec] = branch
                rec_flag[nrec] = flag
                nrec += 1

    return nplus, nminus, nrec, tau0, tauc, STATUS_OK, 0.0


def run_q(params: ModelParams, mu: float, path, horizon: float,
          cfg: SolverConfig | None = None, record_stride: int = 0,
          noise_amp: float = 1.0, delta: float = 0.0,
          base: np.ndarray | None = None) -> dict:
    """Low-level driver; returns event arrays, hitting times and samples."""
    params.require_positive_a()
    if not mu > 0.0 and mu != np.inf:
        raise ValueError(f"mu must be positive, got {mu}")
    if horizon > path.horizon * (1.0 + 1e-12):
        raise ValueError(f"horizon {horizon} exceeds path horizon {path.horizon}")
    cfg = cfg or SolverConfig.for_beta(params.beta)
    seed, path_horizon, time_factor, amp = kernel_view(path)
    if time_factor != 1.0:
        raise ValueError("rescaled diffusions integrate in the path's own clock")
    finest = getattr(path, "base", path).finest_level
    if base is None:
        level = _base_level_for(path_horizon, cfg.base_dt, finest)
        base = _rng.fill_brownian(seed, level, path_horizon)
    base_level = int(np.log2(base.shape[0] - 1) + 0.5)
    n0 = base.shape[0] - 1

    xp = np.empty(_MAX_EVENTS)
    xm = np.empty(_MAX_EVENTS)
    if record_stride > 0:
        nmax = n0 // record_stride + 8
        rec_t = np.empty(nmax)
        rec_v = np.empty(nmax)
        rec_sign = np.empty(nmax, np.int8)
        rec_flag = np.empty(nmax, np.int8)
    else:
        rec_t = rec_v = np.empty(0)
        rec_sign = rec_flag = np.empty(0, np.int8)

    q0 = params.beta * cfg.ln_p_start(params.beta)
    if cfg.explosion_margin / params.beta > 600.0:
        raise ValueError("explosion_margin/beta too deep to integrate; "
                         "use SolverConfig.for_beta")
    npl, nmi, nrec, tau0, tauc, status, fail_t = _q_kernel(
        seed, path_horizon, base, base_level, finest,
        params.beta, params.a, mu, cfg.drift_tol, q0, cfg.explosion_margin,
        noise_amp, delta, xp, xm, record_stride, rec_t, rec_v, rec_sign, rec_flag)
    if status == STATUS_STEP_COLLAPSE:
        raise NumericalFailureError(fail_t)
    if status == STATUS_EVENT_OVERFLOW:
        raise NumericalFailureError(fail_t, "event buffer overflow")
    out = {
        "xi_plus": xp[:npl][xp[:npl] <= horizon],
        "xi_minus": xm[:nmi][xm[:nmi] <= horizon],
        "tau0": tau0,
        "tauc": tauc,
        "base": base,
    }
    if record_stride > 0:
        keep = rec_t[:nrec] <= horizon * (1 + 1e-12)
        out["rec"] = (rec_t[:nrec][keep], rec_v[:nrec][keep],
                      rec_sign[:nrec][keep], rec_flag[:nrec][keep])
    return out


def simulate_q(params: ModelParams, mu: float, path, horizon: float,
               cfg: SolverConfig | None = None, record_stride: int = 1,
               noise_amp: float = 1.0) -> Trajectory:
    """Simulate the alternating rescaled diffusion; returns its Trajectory."""
    out = run_q(params, mu, path, horizon, cfg,
                record_stride=max(1, record_stride), noise_amp=noise_amp)
    return build_trajectory(out["rec"], out["xi_plus"], out["xi_minus"])


def explosion_measure(traj: Trajectory) -> PointMeasure:
    """Counting measure of the - explosion times (the rescaled explosions)."""
    return PointMeasure(atoms=np.asarray(traj.explosions_minus))


def simulate_stationary(params: ModelParams, path, horizon: float,
                        cfg: SolverConfig | None = None, record_stride: int = 1,
                        noise_amp: float = 1.0):
    """Stationary comparison diffusion dq = dW + (1/4)(a - e^{q/beta}) dt.

    Same integrator with the moving-barrier term switched off (test-mode
    oracle for the tube checks); starts from the + entry layer.
    """
    out = run_q(params, np.inf, path, horizon, cfg,
                record_stride=max(1, record_stride), noise_amp=noise_amp)
    t, v, _s, _f = out["rec"]
    return t, v


def descent_profile(t, a: float, beta: float):
    """Deterministic entry-layer solution -2*beta*ln((1/a)(1 - e^{-a t/(8 beta)}))."""
    t = np.asarray(t, dtype=float)
    return -2.0 * beta * np.log((1.0 / a) * (-np.expm1(-a * t / (8.0 * beta))))


@nb.njit(cache=True)
def _stationary_fp_kernel(seed, beta, a, gamma, l2, x0, dt, max_steps, n_rep):
    """First passage of the stationary diffusion to {gamma, l2}, bridge-corrected.

    Returns (hit_upper int8 array with -1 for timeout, exit times).
    """
    hits = np.empty(n_rep, np.int8)
    times = np.empty(n_rep)
    sdt = math.sqrt(dt)
    inv_beta = 1.0 / beta
    for r in range(n_rep):
        q = x0
        outcome = np.int8(-1)
        t_exit = dt * max_steps
        for step in range(max_steps):
            node = np.uint64((r << 33) + step)
            z = _rng.node_normal(seed, node)
            drift = 0.25 * (a - math.exp(min(q * inv_beta, 700.0)))
            qn = q + drift * dt + sdt * z
            crossed_lo = qn <= gamma
            crossed_up = qn >= l2
            if not (crossed_lo or crossed_up):
                # bridge dips across either barrier inside the step
                plo = math.exp(-2.0 * (q - gamma) * (qn - gamma) / dt)
                pup = math.exp(-2.0 * (l2 - q) * (l2 - qn) / dt)
                ulo = _rng.node_uniform(seed, node, np.uint64(11))
                uup = _rng.node_uniform(seed, node, np.uint64(12))
                if ulo < plo and (not uup < pup or plo >= pup):
                    crossed_lo = True
                elif uup < pup:
                    crossed_up = True
            if crossed_lo or crossed_up:
                outcome = np.int8(1) if crossed_up else np.int8(0)
                t_exit = (step + 1) * dt
                break
            q = qn
        hits[r] = outcome
        times[r] = t_exit
    return hits, times


def stationary_first_passage(params: ModelParams, gamma: float, l2: float,
                             n_rep: int, seed: int, x0: float = 0.0,
                             dt: float = 2e-4, max_time: float = 200.0):
    """Monte Carlo exit of the stationary diffusion from (gamma, l2).

    Returns (hits, times): hits is 1 where l2 was reached first, 0 where
    gamma was, -1 on timeout.
    """
    params.require_positive_a()
    if not gamma < x0 < l2:
        raise ValueError("need gamma < x0 < l2")
    max_steps = int(max_time / dt)
    return _stationary_fp_kernel(np.uint64(seed), params.beta, params.a,
                                 gamma, l2, x0, dt, max_steps, n_rep)
