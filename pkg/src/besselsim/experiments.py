"""Monte Carlo studies: replica ensembles, empirical statistics, reports.

Every study is a pure function of its configuration: replica i uses seed
base_seed + i, workers return per-replica tuples aggregated in replica
order, and reports carry the config echo plus its hash.  Conditioning
(censoring at the horizon) is always reported, never silently averaged
over.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import laguerre, limiting, rescaled, riccati
from .paths import BrownianPath

_Z95 = 1.959963984540054


def ks_distance(samples_a, samples_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic, sup |ECDF_a - ECDF_b|."""
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    grid.sort()
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(fa - fb).max())


def wilson_ci(successes: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial frequency."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def bootstrap_median_ci(x, seed: int, n_boot: int = 1000,
                        level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval for the median."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return (math.nan, math.nan)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    meds = np.median(x[idx], axis=1)
    lo = (1.0 - level) / 2.0
    return (float(np.quantile(meds, lo)), float(np.quantile(meds, 1.0 - lo)))


@dataclass
class StudyConfig:
    """Study identity: kind plus every numeric knob; hashable for provenance."""

    kind: str
    values: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.values}

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class StudyReport:
    """Per-cell summaries plus the config echo; serializable to JSON/CSV."""

    config: StudyConfig
    cells: list[dict]
    summary: dict = field(default_factory=dict)
    ci_level: float = 0.95
    raw_files: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.hash(),
            "ci_level": self.ci_level,
            "cells": self.cells,
            "summary": self.summary,
            "raw_files": self.raw_files,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=repr)

    def save(self, out_dir: str) -> str:
        os.makedirs(out_dir, exist_ok=True)
        h = self.config.hash()
        path = os.path.join(out_dir, f"report_{self.config.kind}_{h}.json")
        with open(path, "w", newline="") as f:
            f.write(self.to_json())
            f.write("\n")
        csv_path = os.path.join(out_dir, f"cells_{self.config.kind}_{h}.csv")
        keys = sorted({k for c in self.cells for k in c})
        with open(csv_path, "w", newline="") as f:
            f.write(",".join(keys) + "\n")
            for c in self.cells:
                f.write(",".join(repr(c.get(k, "")) for k in keys) + "\n")
        return path


def _save_raw(out_dir: str | None, report: StudyReport, name: str,
              header: str, rows: np.ndarray) -> None:
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"raw_{report.config.kind}_{name}_{report.config.hash()}.csv")
    with open(path, "w", newline="") as f:
        f.write(header + "\n")
        np.savetxt(f, np.atleast_2d(rows), fmt="%.17g", delimiter=",")
    report.raw_files.append(os.path.basename(path))


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (threads * 8) or 1)))


def _first_or_inf(arr) -> float:
    return float(arr[0]) if len(arr) else math.inf


# ---------------------------------------------------------------------------
# convergence of the rescaled explosion measure to the limit
# ---------------------------------------------------------------------------

def _conv_worker(args):
    a, mu, beta_list, seed_r, horizon, base_dt = args
    path = BrownianPath(seed_r, horizon)
    rr = limiting.run_r(a, mu, path, horizon, mesh=base_dt)
    xi0 = _first_or_inf(rr["hits_minus"])
    xis = []
    for beta in beta_list:
        params = riccati.ModelParams(beta=beta, a=a)
        cfg = riccati.SolverConfig.for_beta(beta, base_dt=base_dt)
        q = rescaled.run_q(params, mu, path, horizon, cfg, base=rr["base"])
        xis.append(_first_or_inf(q["xi_minus"]))
    return (xi0, tuple(xis))


def convergence_study(a: float, mu: float, beta_list, replicas: int, seed: int,
                      horizon: float, *, base_dt: float = 1e-3, threads: int = 1,
                      out_dir: str | None = None) -> StudyReport:
    """Coupled first - explosion/hit gap per beta; medians should shrink.

    Each replica drives the rescaled diffusion (every beta) and the limiting
    diffusion with one Brownian path; the gap |xi-_beta(0) - xi-_0(0)| is
    reported conditioned on both being observed before the horizon.
    """
    beta_list = list(beta_list)
    if not beta_list or any(b2 >= b1 for b1, b2 in zip(beta_list, beta_list[1:])):
        raise ValueError("beta_list must be non-empty and strictly decreasing")
    if not a > 0.0:
        raise ValueError("a must be positive")
    cfgv = dict(a=a, mu=mu, beta_list=beta_list, replicas=replicas, seed=seed,
                horizon=horizon, base_dt=base_dt)
    config = StudyConfig("convergence", cfgv)
    rows = _pmap(_conv_worker,
                 [(a, mu, beta_list, seed + r, horizon, base_dt) for r in range(replicas)],
                 threads)
    xi0 = np.array([r[0] for r in rows])
    cells = []
    prev_ci = None
    trend_ok = True
    for i, beta in enumerate(beta_list):
        xib = np.array([r[1][i] for r in rows])
        both = np.isfinite(xib) & np.isfinite(xi0) & (xib <= horizon) & (xi0 <= horizon)
        gaps = np.abs(xib[both] - xi0[both])
        n_eff = int(both.sum())
        cell = {
            "beta": beta,
            "n_eff": n_eff,
            "cond_rate_beta": float(np.mean(np.isfinite(xib))),
            "cond_rate_limit": float(np.mean(np.isfinite(xi0))),
            "inconclusive": n_eff < 20,
        }
        if n_eff:
            ci = bootstrap_median_ci(gaps, seed + 7919 * (i + 1))
            cell.update(median_gap=float(np.median(gaps)),
                        q90_gap=float(np.quantile(gaps, 0.9)),
                        median_ci_low=ci[0], median_ci_high=ci[1])
            fin_b, fin_0 = xib[np.isfinite(xib)], xi0[np.isfinite(xi0)]
            cell["ks_marginals"] = ks_distance(fin_b, fin_0)
            if prev_ci is not None and ci[0] > prev_ci[1]:
                trend_ok = False  # median increased beyond CI overlap
            prev_ci = ci
        cells.append(cell)
    report = StudyReport(config=config, cells=cells,
                         summary={"medians_non_increasing_within_ci": trend_ok})
    _save_raw(out_dir, report, "xi",
              "xi0," + ",".join(f"xi_beta_{b}" for b in beta_list),
              np.column_stack([xi0] + [np.array([r[1][i] for r in rows])
                                       for i in range(len(beta_list))]))
    if out_dir:
        report.save(out_dir)
    return report


# ---------------------------------------------------------------------------
# hard edge: matrix ensemble vs operator eigenvalues
# ---------------------------------------------------------------------------

def _hedge_matrix_worker(args):
    beta, a, n_list, k, seed_r = args
    params = riccati.ModelParams(beta=beta, a=a)
    out = []
    for n in n_list:
        s = laguerre.spectrum_sample(n, params, seed_r, k=k)
        out.append(tuple(laguerre.hard_edge_rescale(s, k)))
    return tuple(out)


def _hedge_sbo_worker(args):
    beta, a, k, seed_r, horizon, tol, base_dt = args
    params = riccati.ModelParams(beta=beta, a=a)
    cfg = riccati.SolverConfig.for_beta(beta, base_dt=base_dt)
    path = BrownianPath(seed_r, horizon)
    vals = []
    lo = 1e-3
    for j in range(k):
        lam = riccati.eigenvalue(params, j, path, horizon, cfg,
                                 bracket=(lo, max(4.0 * lo, 30.0)), tol=tol)
        vals.append(lam)
        lo = lam  # eigenvalues are increasing on one path
    return tuple(vals)


def hard_edge_study(beta: float, a: float, n_list, k: int, replicas: int, seed: int,
                    *, horizon: float = 240.0, tol: float = 1e-3, base_dt: float = 1e-3,
                    threads: int = 1, out_dir: str | None = None) -> StudyReport:
    """KS distance between rescaled matrix spectra and operator eigenvalues.

    The distance should not grow with n (soft trend); the horizon must be
    generous because the explosion count converges only like T^(-2/3).
    """
    n_list = list(n_list)
    cfgv = dict(beta=beta, a=a, n_list=n_list, k=k, replicas=replicas, seed=seed,
                horizon=horizon, tol=tol, base_dt=base_dt)
    config = StudyConfig("hard_edge", cfgv)
    mat = _pmap(_hedge_matrix_worker,
                [(beta, a, n_list, k, seed + r) for r in range(replicas)], threads)
    sbo = _pmap(_hedge_sbo_worker,
                [(beta, a, k, seed + r, horizon, tol, base_dt) for r in range(replicas)],
                threads)
    sbo_arr = np.array(sbo)  # (replicas, k)
    cells = []
    for ni, n in enumerate(n_list):
        mat_n = np.array([m[ni] for m in mat])  # (replicas, k)
        for j in range(k):
            cells.append({
                "n": n, "index": j,
                "ks": ks_distance(mat_n[:, j], sbo_arr[:, j]),
                "matrix_median": float(np.median(mat_n[:, j])),
                "sbo_median": float(np.median(sbo_arr[:, j])),
            })
    ks_by_n = {j: [c["ks"] for c in cells if c["index"] == j] for j in range(k)}
    noise = 2.0 * math.sqrt(2.0 / replicas)
    trend_ok = all(all(later <= earlier + noise for earlier, later
                       in zip(v, v[1:])) for v in ks_by_n.values())
    report = StudyReport(config=config, cells=cells,
                         summary={"ks_non_increasing_in_n_within_noise": trend_ok})
    _save_raw(out_dir, report, "sbo", ",".join(f"lambda_{j}" for j in range(k)), sbo_arr)
    for ni, n in enumerate(n_list):
        _save_raw(out_dir, report, f"matrix_n{n}",
                  ",".join(f"nlambda_{j}" for j in range(k)),
                  np.array([m[ni] for m in mat]))
    if out_dir:
        report.save(out_dir)
    return report


# ---------------------------------------------------------------------------
# joint count marginals across a mu grid
# ---------------------------------------------------------------------------

def _marg_worker(args):
    a, mu_list, beta_list, seed_r, horizon, base_dt = args
    path = BrownianPath(seed_r, horizon)
    limit_counts = tuple(c for _, c in limiting.limit_point_process(
        a, mu_list, path, horizon, mesh=base_dt))
    per_beta = []
    for beta in beta_list:
        params = riccati.ModelParams(beta=beta, a=a)
        cfg = riccati.SolverConfig.for_beta(beta, base_dt=base_dt)
        base = None
        counts = []
        for mu in mu_list:
            q = rescaled.run_q(params, mu, path, horizon, cfg, base=base)
            base = q["base"]
            counts.append(int(q["xi_minus"].size))
        per_beta.append(tuple(counts))
    return limit_counts, tuple(per_beta)


def _tv_distance(vectors_a, vectors_b) -> float:
    from collections import Counter
    ca, cb = Counter(vectors_a), Counter(vectors_b)
    keys = set(ca) | set(cb)
    na, nb = len(vectors_a), len(vectors_b)
    return 0.5 * sum(abs(ca[k] / na - cb[k] / nb) for k in keys)


def marginal_count_study(a: float, mu_list, beta_list, replicas: int, seed: int,
                         horizon: float, *, base_dt: float = 1e-3, threads: int = 1,
                         out_dir: str | None = None) -> StudyReport:
    """Joint laws of the count vectors (nu_mu[0,horizon]) vs the limit.

    Counts are non-increasing in mu pathwise (exact coupling check) and the
    joint count distribution approaches the limit's as beta decreases
    (total-variation distance, soft trend).
    """
    mu_list, beta_list = list(mu_list), list(beta_list)
    cfgv = dict(a=a, mu_list=mu_list, beta_list=beta_list, replicas=replicas,
                seed=seed, horizon=horizon, base_dt=base_dt)
    config = StudyConfig("marginal_counts", cfgv)
    rows = _pmap(_marg_worker,
                 [(a, mu_list, beta_list, seed + r, horizon, base_dt)
                  for r in range(replicas)], threads)
    limit_vecs = [r[0] for r in rows]
    mono_limit = all(all(c1 >= c2 for c1, c2 in zip(v, v[1:])) for v in limit_vecs)
    cells = []
    tvs = []
    mono_all = mono_limit
    for bi, beta in enumerate(beta_list):
        beta_vecs = [r[1][bi] for r in rows]
        mono = all(all(c1 >= c2 for c1, c2 in zip(v, v[1:])) for v in beta_vecs)
        mono_all = mono_all and mono
        tv = _tv_distance(beta_vecs, limit_vecs)
        tvs.append(tv)
        from collections import Counter
        table = {str(k): v / replicas for k, v in sorted(Counter(beta_vecs).items())}
        cells.append({"beta": beta, "tv_vs_limit": tv,
                      "monotone_in_mu_all_seeds": mono, "count_table": table})
    from collections import Counter
    limit_table = {str(k): v / replicas for k, v in sorted(Counter(limit_vecs).items())}
    noise = 2.0 / math.sqrt(replicas)
    trend_ok = all(t2 <= t1 + noise for t1, t2 in zip(tvs, tvs[1:]))
    report = StudyReport(config=config, cells=cells, summary={
        "limit_count_table": limit_table,
        "monotone_in_mu_all_seeds": mono_all,
        "tv_non_increasing_within_noise": trend_ok,
    })
    _save_raw(out_dir, report, "limit_counts",
              ",".join(f"mu_{m}" for m in mu_list), np.array(limit_vecs, dtype=float))
    if out_dir:
        report.save(out_dir)
    return report


# ---------------------------------------------------------------------------
# limit behavior of the + / - branches (descent, tube, explosion bracket)
# ---------------------------------------------------------------------------

def _prop41_worker(args):
    a, mu, beta, seed_r, T, base_dt = args
    horizon = T
    delta = beta ** 0.125
    params = riccati.ModelParams(beta=beta, a=a)
    cfg = riccati.SolverConfig.for_beta(beta, base_dt=base_dt)
    path = BrownianPath(seed_r, horizon)
    q = rescaled.run_q(params, mu, path, horizon, cfg, record_stride=1, delta=delta)
    rp = limiting.run_r(a, mu, path, horizon, mesh=base_dt, alternate=False,
                        record_stride=1, base=q["base"])
    ralt = limiting.run_r(a, mu, path, horizon, mesh=base_dt, base=q["base"])
    tq, vq, _sq, _fq = q["rec"]
    tr, vr, _sr = rp["rec"]
    n = min(tq.size, tr.size)
    tau0, tauc = q["tau0"], q["tauc"]
    win = (tq[:n] >= tau0) & (tq[:n] <= min(tauc, T))
    sup_gap = float(np.max(np.abs(vq[:n][win] - vr[:n][win]))) if win.any() else math.nan
    return (tau0, tauc, sup_gap,
            _first_or_inf(q["xi_minus"]), _first_or_inf(ralt["hits_minus"]))


def prop41_study(a: float, mu: float, beta_list, replicas: int, seed: int, T: float,
                 *, base_dt: float = 1e-3, threads: int = 1,
                 out_dir: str | None = None) -> StudyReport:
    """Frequencies of the descent, tube and explosion-bracket events per beta.

    (a) the + branch reaches 0 within time beta of its start;
    (b) sup |q+ - r+| < beta^(1/8) on [tau0, tau_c ^ T];
    (c) |xi-_beta(0) - xi-_0(0)| < 2*eta with eta = 2*beta^(1/6), conditioned
        on xi-_beta(0) <= T (conditioning rate reported).
    All three should trend toward 1 as beta decreases.
    """
    beta_list = list(beta_list)
    cfgv = dict(a=a, mu=mu, beta_list=beta_list, replicas=replicas, seed=seed,
                T=T, base_dt=base_dt)
    config = StudyConfig("prop41", cfgv)
    cells = []
    freqs = []
    for beta in beta_list:
        rows = _pmap(_prop41_worker,
                     [(a, mu, beta, seed + r, T, base_dt) for r in range(replicas)],
                     threads)
        tau0 = np.array([r[0] for r in rows])
        sup_gap = np.array([r[2] for r in rows])
        xib = np.array([r[3] for r in rows])
        xi0 = np.array([r[4] for r in rows])
        delta = beta ** 0.125
        eta = 2.0 * beta ** (1.0 / 6.0)
        ka = int(np.sum(tau0 < beta))
        fa, ca = ka / replicas, wilson_ci(ka, replicas)
        tube_known = np.isfinite(sup_gap)
        kb = int(np.sum(sup_gap[tube_known] < delta))
        nb = int(tube_known.sum())
        fb, cb = (kb / nb if nb else math.nan), wilson_ci(kb, nb)
        cond = np.isfinite(xib) & (xib <= T)
        kc = int(np.sum(np.abs(xib[cond] - xi0[cond]) < 2 * eta))
        nc = int(cond.sum())
        fc, cc = (kc / nc if nc else math.nan), wilson_ci(kc, nc)
        cells.append({
            "beta": beta, "delta": delta, "eta": eta,
            "freq_descent": fa, "descent_ci_low": ca[0], "descent_ci_high": ca[1],
            "freq_tube": fb, "tube_ci_low": cb[0], "tube_ci_high": cb[1],
            "tube_n": nb,
            "freq_bracket": fc, "bracket_ci_low": cc[0], "bracket_ci_high": cc[1],
            "bracket_cond_rate": nc / replicas,
        })
        freqs.append((fa, fb, fc))
    trend_ok = True
    for j in range(3):
        seq = [f[j] for f in freqs if not math.isnan(f[j])]
        ci_w = 2.0 / math.sqrt(replicas)
        if any(s2 < s1 - 2 * ci_w for s1, s2 in zip(seq, seq[1:])):
            trend_ok = False
    report = StudyReport(config=config, cells=cells,
                         summary={"frequencies_trend_toward_1": trend_ok})
    if out_dir:
        report.save(out_dir)
    return report


# ---------------------------------------------------------------------------
# tightness of the explosion measures
# ---------------------------------------------------------------------------

def _tight_worker(args):
    a, mu, beta, seed_r, horizon, base_dt = args
    params = riccati.ModelParams(beta=beta, a=a)
    cfg = riccati.SolverConfig.for_beta(beta, base_dt=base_dt)
    path = BrownianPath(seed_r, horizon)
    q = rescaled.run_q(params, mu, path, horizon, cfg)
    return tuple(q["xi_minus"])


def tightness_study(a: float, mu: float, beta_list, T: float, alpha: float, N: int,
                    replicas: int, seed: int, *, horizon: float | None = None,
                    base_dt: float = 1e-3, threads: int = 1,
                    out_dir: str | None = None) -> StudyReport:
    """Empirical P(nu([0, alpha*T]) <= N and nu((alpha*T, horizon]) = 0) per beta."""
    beta_list = list(beta_list)
    if horizon is None:
        horizon = max(3.0 * alpha * T, T + 5.0)
    cfgv = dict(a=a, mu=mu, beta_list=beta_list, T=T, alpha=alpha, N=N,
                replicas=replicas, seed=seed, horizon=horizon, base_dt=base_dt)
    config = StudyConfig("tightness", cfgv)
    cells = []
    probs = []
    for beta in beta_list:
        rows = _pmap(_tight_worker,
                     [(a, mu, beta, seed + r, horizon, base_dt) for r in range(replicas)],
                     threads)
        good = 0
        for atoms in rows:
            atoms = np.asarray(atoms)
            early = int(np.sum(atoms <= alpha * T))
            late = int(np.sum(atoms > alpha * T))
            good += (early <= N) and (late == 0)
        freq = good / replicas
        ci = wilson_ci(good, replicas)
        probs.append(freq)
        cells.append({"beta": beta, "prob": freq, "ci_low": ci[0], "ci_high": ci[1]})
    report = StudyReport(config=config, cells=cells,
                         summary={"inf_over_beta": min(probs)})
    if out_dir:
        report.save(out_dir)
    return report
