import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from besselsim import rescaled, riccati
from besselsim.paths import BrownianPath
from besselsim.riccati import ModelParams, SolverConfig


def test_critical_line_values():
    assert rescaled.critical_line(1.0, 0.0) == -1.0
    assert rescaled.critical_line(2.0, 4.0) == -3.0
    with pytest.raises(ValueError):
        rescaled.critical_line(0.0, 1.0)


@given(st.floats(0.01, 50), st.floats(0, 100))
def test_critical_line_slope(mu, t):
    assert rescaled.critical_line(mu, t + 4.0) - rescaled.critical_line(mu, t) \
        == pytest.approx(-1.0, abs=1e-9)


def test_q_from_p_values():
    sign, q = rescaled.q_from_p(1.0, 3.0, 0.5, 2.0)
    assert (sign, q) == (1, 0.0)
    beta = 0.4
    sign, q = rescaled.q_from_p(math.exp(1.0 / beta), 0.0, beta, 1.0)
    assert sign == 1 and q == pytest.approx(1.0, rel=1e-12)
    sign, q = rescaled.q_from_p(-1.0, 0.0, 0.7, 1.0)
    assert sign == -1 and q == pytest.approx(-1.0, rel=1e-12)
    with pytest.raises(ValueError):
        rescaled.q_from_p(0.0, 0.0, 0.5, 1.0)


@settings(max_examples=200)
@given(st.floats(-30, 30), st.floats(0, 40), st.floats(0.05, 3), st.floats(0.05, 5))
def test_q_from_p_round_trip(logp, t, beta, mu):
    for p in (math.exp(logp), -math.exp(logp)):
        sign, q = rescaled.q_from_p(p, t, beta, mu)
        back = rescaled.p_from_q(sign, q, t, beta, mu)
        assert back == pytest.approx(p, rel=1e-12)


def test_minus_branch_drift_negative_at_zero():
    params = ModelParams(beta=0.1, a=1.0)
    d = rescaled.branch_drift(0.0, 0.0, -1, params, 1.0)
    assert d < -0.25 * (params.a + 1.0) * 0.9
    # both exponential wall terms only push downwards
    assert rescaled.branch_drift(0.0, 0.0, -1, params, 1.0) <= \
        0.25 * (-(params.a + 1.0))


def test_zero_noise_settles_at_fixed_point():
    # without noise q+ descends to the balance level beta*ln(a), no explosion
    params = ModelParams(beta=0.1, a=2.0)
    path = BrownianPath(3, 10.0)
    traj = rescaled.simulate_q(params, 5.0, path, 10.0, noise_amp=0.0)
    assert traj.explosions_plus.size == 0 and traj.explosions_minus.size == 0
    final = traj.segments[0].values[-1]
    assert final == pytest.approx(params.beta * math.log(params.a), abs=1e-3)


def test_zero_noise_descent_times_match_profile():
    # time spent descending between two levels matches the closed-form
    # entry-layer solution of d y = (1/4)(a - e^{y/(2*beta_profile)}) dt
    beta_profile, a = 0.05, 1.0
    params = ModelParams(beta=2.0 * beta_profile, a=a)  # e^{q/beta} = e^{q/(2*bp)}
    path = BrownianPath(5, 2.0)
    cfg = SolverConfig.for_beta(params.beta, base_dt=1e-4)
    t, v = rescaled.simulate_stationary(params, path, 2.0, cfg, noise_amp=0.0)
    y1, y2 = 0.4, 0.2

    def crossing(level):
        idx = np.argmax(v <= level)
        assert v[idx] <= level
        f = (v[idx - 1] - level) / (v[idx - 1] - v[idx])
        return t[idx - 1] + f * (t[idx] - t[idx - 1])

    def profile_time(y):
        # inverse of descent_profile
        return -(8.0 * beta_profile / a) * math.log(1.0 - a * math.exp(-y / (2 * beta_profile)))

    sim_dt = crossing(y2) - crossing(y1)
    ana_dt = profile_time(y2) - profile_time(y1)
    assert sim_dt == pytest.approx(ana_dt, rel=0.02)


def test_descent_profile_solves_its_ode():
    a, beta = 1.3, 0.08
    ts = np.linspace(0.05, 1.0, 20)
    y = rescaled.descent_profile(ts, a, beta)
    h = 1e-6
    dy = (rescaled.descent_profile(ts + h, a, beta) - rescaled.descent_profile(ts - h, a, beta)) / (2 * h)
    rhs = 0.25 * (a - np.exp(y / (2.0 * beta)))
    np.testing.assert_allclose(dy, rhs, rtol=1e-4)


def test_alternation_and_interleaving():
    params = ModelParams(beta=0.1, a=1.0)
    for seed in range(6):
        traj = rescaled.simulate_q(params, 0.7, BrownianPath(seed, 30.0), 30.0)
        ep, em = traj.explosions_plus, traj.explosions_minus
        assert em.size in (ep.size, ep.size - 1) or ep.size - em.size in (0, 1)
        for i in range(em.size):
            assert ep[i] < em[i]
            if i + 1 < ep.size:
                assert em[i] < ep[i + 1]
        signs = [s.sign for s in traj.segments]
        assert signs[0] == 1
        assert all(s1 == -s2 for s1, s2 in zip(signs, signs[1:]))


def test_explosion_measure():
    params = ModelParams(beta=0.1, a=1.0)
    traj = rescaled.simulate_q(params, 1.0, BrownianPath(8, 25.0), 25.0)
    m = rescaled.explosion_measure(traj)
    assert np.array_equal(m.atoms, traj.explosions_minus)
    assert m.total() == traj.explosions_minus.size
    if m.total():
        last = float(m.atoms[-1])
        assert m.count_up_to(last) == m.total()
        assert m.count_up_to(last - 1e-9) == m.total() - 1
    empty = rescaled.PointMeasure()
    assert empty.total() == 0 and empty.count_up_to(10.0) == 0
    with pytest.raises(ValueError):
        rescaled.PointMeasure(atoms=np.array([2.0, 1.0]))


def _transform_p_record(traj, beta, mu):
    """(t, q) samples of beta*ln transformed Riccati record, t = 4*beta*s."""
    ts, qs = [], []
    for seg in traj.segments:
        for s, p in zip(seg.times, seg.values):
            if p == 0.0:
                continue
            t = 4.0 * beta * s
            sign, qv = rescaled.q_from_p(float(p), t, beta, mu)
            ts.append(t)
            qs.append(qv)
    return np.array(ts), np.array(qs)


def test_consistency_with_riccati_zero_noise():
    # without noise the two representations integrate the same dynamics;
    # the transformed trajectories must agree along the whole horizon
    beta, a, mu = 0.3, 1.0, 0.7
    params = ModelParams(beta=beta, a=a)
    cfg = SolverConfig.for_beta(beta, base_dt=2e-4)
    w = BrownianPath(2, 20.0)
    q = rescaled.run_q(params, mu, w, 20.0, cfg, record_stride=8, noise_amp=0.0)
    traj, _ = riccati.simulate_p(params, math.exp(-mu / beta), w.scaled(4.0 * beta),
                                 20.0 / (4.0 * beta), cfg, record_stride=8,
                                 noise_amp=0.0)
    tq, vq, _s, _f = q["rec"]
    tp, qp = _transform_p_record(traj, beta, mu)
    n = min(tq.size, tp.size)
    mask = tq[:n] > 0.05  # skip the entry layer where stand-ins differ
    np.testing.assert_allclose(tq[:n], tp[:n], atol=1e-9)
    assert np.max(np.abs(vq[:n][mask] - qp[:n][mask])) < 2e-3


def test_consistency_with_riccati_coupled_window():
    # with noise, the same path drives both representations: they must track
    # before chaotic amplification near the soft wall takes over
    beta, a, mu = 0.3, 1.0, 0.7
    params = ModelParams(beta=beta, a=a)
    cfg = SolverConfig.for_beta(beta, base_dt=2e-4)
    for seed in range(5):
        w = BrownianPath(seed, 20.0)
        q = rescaled.run_q(params, mu, w, 20.0, cfg, record_stride=8)
        traj, _ = riccati.simulate_p(params, math.exp(-mu / beta),
                                     w.scaled(4.0 * beta), 20.0 / (4.0 * beta),
                                     cfg, record_stride=8)
        tq, vq, _s, _f = q["rec"]
        tp, qp = _transform_p_record(traj, beta, mu)
        n = min(tq.size, tp.size)
        win = (tq[:n] > 0.05) & (tq[:n] < 1.0)
        gap = np.max(np.abs(vq[:n][win] - qp[:n][win]))
        # an uncoupled pair would wander O(sqrt(t)) = O(1) apart
        assert gap < 0.1, f"seed {seed}: early-window gap {gap}"


def test_consistency_with_riccati_in_law():
    # explosion counts of both representations agree per path up to rare
    # borderline flips, and closely in aggregate
    beta, a, mu = 0.3, 1.0, 0.7
    params = ModelParams(beta=beta, a=a)
    cfg = SolverConfig.for_beta(beta, base_dt=2e-4)
    lam = math.exp(-mu / beta)
    n_seeds = 40
    cq, cp = [], []
    for seed in range(n_seeds):
        w = BrownianPath(seed, 20.0)
        q = rescaled.run_q(params, mu, w, 20.0, cfg)
        _, rec = riccati.simulate_p(params, lam, w.scaled(4.0 * beta),
                                    20.0 / (4.0 * beta), cfg)
        cq.append(len(q["xi_minus"]))
        cp.append(len(rec.times))
    cq, cp = np.array(cq), np.array(cp)
    assert np.mean(np.abs(cq - cp) <= 1) >= 0.9
    assert abs(cq.mean() - cp.mean()) < 0.3 + 0.3 * max(cq.mean(), cp.mean())


def test_lemma51_survival_bound():
    # P(xi+ > t) >= 1 - 4 exp(-mu^2/(32 t)); at t in {mu^2/32, mu^2/8} the
    # bound is vacuous, t = mu^2/100 makes it bite
    beta, a, mu = 0.05, 1.0, 1.0
    params = ModelParams(beta=beta, a=a)
    cfg = SolverConfig.for_beta(beta)
    n = 2000
    horizon = 0.130
    xi_plus = np.empty(n)
    for seed in range(n):
        out = rescaled.run_q(params, mu, BrownianPath(seed + 40_000, horizon), horizon, cfg)
        xi_plus[seed] = out["xi_plus"][0] if len(out["xi_plus"]) else np.inf
    for t in (mu * mu / 32.0, mu * mu / 8.0, mu * mu / 100.0):
        bound = 1.0 - 4.0 * math.exp(-mu * mu / (32.0 * t))
        freq = float(np.mean(xi_plus > t))
        sigma = math.sqrt(max(freq * (1 - freq), 1.0 / n) / n)
        assert freq >= bound - 2.0 * sigma


def test_run_q_rejects_bad_args():
    params = ModelParams(beta=0.1, a=1.0)
    path = BrownianPath(1, 5.0)
    with pytest.raises(ValueError):
        rescaled.run_q(params, -1.0, path, 5.0)
    with pytest.raises(ValueError):
        rescaled.run_q(params, 1.0, path, 50.0)
    with pytest.raises(ValueError):
        rescaled.run_q(ModelParams(beta=0.1, a=-0.5), 1.0, path, 5.0)


def test_trajectory_csv_roundtrip(tmp_path):
    params = ModelParams(beta=0.1, a=1.0)
    traj = rescaled.simulate_q(params, 1.0, BrownianPath(4, 10.0), 10.0, record_stride=64)
    f = tmp_path / "q.csv"
    traj.write_csv(str(f), mu=1.0)
    lines = f.read_text().splitlines()
    assert lines[0] == "t,value,segment_sign,event_flag,critical_line"
    row = lines[1].split(",")
    assert float(row[0]) == 0.0
    assert float(row[4]) == -1.0
    assert len(lines) > 10
