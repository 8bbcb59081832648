import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from besselsim import riccati
from besselsim.paths import BrownianPath
from besselsim.riccati import (BracketFailureError, ModelParams, SolverConfig,
                               count_explosions, eigenvalue, rescale_eigenvalue,
                               simulate_p)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(beta=-1.0, a=0.0)
    with pytest.raises(ValueError):
        ModelParams(beta=1.0, a=-2.0)
    p = ModelParams(beta=1.0, a=-0.5)  # matrix range
    with pytest.raises(ValueError):
        p.require_positive_a()


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(base_dt=-1.0)
    cfg = SolverConfig.for_beta(0.1)
    assert cfg.drift_tol == pytest.approx(0.025)
    assert cfg.explosion_margin == pytest.approx(2.8)


def test_zero_noise_logistic_fixed_point():
    # beta large so 2/beta ~ 0: ODE p' = p(a - p) settles at p = a
    params = ModelParams(beta=1e6, a=1.0)
    path = BrownianPath(7, 5.0)
    traj, rec = simulate_p(params, 1e-12, path, 5.0, noise_amp=0.0)
    assert rec.times.size == 0
    assert traj.segments[0].values[-1] == pytest.approx(1.0, abs=1e-2)


def test_tiny_lambda_rarely_explodes():
    params = ModelParams(beta=2.0, a=1.0)
    cfg = SolverConfig.for_beta(2.0)
    counts = [count_explosions(params, 1e-12, BrownianPath(s, 5.0), 5.0, cfg)
              for s in range(50)]
    assert np.mean(np.array(counts) == 0) > 0.95


def test_count_zero_horizon():
    params = ModelParams(beta=2.0, a=1.0)
    assert count_explosions(params, 1.0, BrownianPath(1, 5.0), 0.0) == 0


def test_count_monotone_in_lambda():
    params = ModelParams(beta=2.0, a=0.0)
    cfg = SolverConfig.for_beta(2.0)
    lams = np.geomspace(0.1, 30.0, 12)
    for seed in range(20):
        path = BrownianPath(seed, 8.0)
        base = None
        counts = []
        for lam in lams:
            out = riccati._run_p(params, float(lam), path, 8.0, cfg, base=base)
            base = out["base"]
            counts.append(out["explosions"].size)
        assert all(c2 >= c1 for c1, c2 in zip(counts, counts[1:])), \
            f"seed {seed}: {counts}"


def test_restart_standin_and_sign_structure():
    params = ModelParams(beta=2.0, a=0.0)
    cfg = SolverConfig.for_beta(2.0)
    path = BrownianPath(12, 10.0)
    traj, rec = simulate_p(params, 8.0, path, 10.0, cfg)
    # start value is the finite +infinity stand-in
    assert traj.segments[0].values[0] == pytest.approx(math.exp(cfg.ln_p_start(2.0)))
    # explosions and zero crossings interleave: +,-,+,- ...
    ep, em = traj.explosions_plus, traj.explosions_minus
    assert em.size >= 1
    for i in range(em.size):
        assert ep[i] < em[i]
        if i + 1 < ep.size:
            assert em[i] < ep[i + 1]


def test_no_upward_zero_crossing():
    # sign changes from - to + may only happen at explosions (restarts)
    params = ModelParams(beta=2.0, a=0.0)
    cfg = SolverConfig.for_beta(2.0)
    for seed in range(10):
        traj, rec = simulate_p(params, 5.0, BrownianPath(seed, 10.0), 10.0, cfg)
        for seg in traj.segments:
            if seg.sign < 0:
                assert np.all(seg.values[np.isfinite(seg.values)] <= 0.0)


def test_eigenvalue_bisection_contract():
    params = ModelParams(beta=2.0, a=0.0)
    cfg = SolverConfig.for_beta(2.0)
    path = BrownianPath(3, 30.0)
    tol = 1e-3
    lam0 = eigenvalue(params, 0, path, 30.0, cfg, tol=tol)
    assert count_explosions(params, lam0 * (1 - 2 * tol), path, 30.0, cfg) == 0
    assert count_explosions(params, lam0 * (1 + 2 * tol), path, 30.0, cfg) >= 1


def test_eigenvalues_ordered():
    params = ModelParams(beta=2.0, a=0.0)
    cfg = SolverConfig.for_beta(2.0)
    path = BrownianPath(5, 40.0)
    lam0 = eigenvalue(params, 0, path, 40.0, cfg)
    lam1 = eigenvalue(params, 1, path, 40.0, cfg)
    assert 0.0 < lam0 < lam1


def test_eigenvalue_deterministic():
    params = ModelParams(beta=2.0, a=0.0)
    cfg = SolverConfig.for_beta(2.0)
    v1 = eigenvalue(params, 0, BrownianPath(9, 20.0), 20.0, cfg)
    v2 = eigenvalue(params, 0, BrownianPath(9, 20.0), 20.0, cfg)
    assert v1 == v2


def test_bracket_expansion_and_failure():
    params = ModelParams(beta=2.0, a=0.0)
    cfg = SolverConfig.for_beta(2.0)
    path = BrownianPath(3, 20.0)
    # deliberately bad bracket still converges via geometric expansion
    lam = eigenvalue(params, 0, path, 20.0, cfg, bracket=(5.0, 6.0))
    assert lam < 5.0 or 5.0 <= lam <= 6.0 or lam > 6.0  # converged, no raise
    with pytest.raises(BracketFailureError):
        eigenvalue(params, 0, path, 20.0, cfg, bracket=(1e-6, 1e-5),
                   expand_limits=(1e-7, 1e-4))


def test_rescale_eigenvalue_values():
    assert rescale_eigenvalue(1.0, 0.5) == 0.0
    assert rescale_eigenvalue(math.exp(-2.0), 0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        rescale_eigenvalue(0.0, 0.5)
    with pytest.raises(ValueError):
        rescale_eigenvalue(1.0, -0.5)


@given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3), st.floats(0.01, 10))
def test_rescale_reverses_order(lam0, lam1, beta):
    if lam0 < lam1:
        assert rescale_eigenvalue(lam0, beta) > rescale_eigenvalue(lam1, beta)


def test_start_cap_sensitivity():
    # the finite stand-in for p(0)=inf does not materially shift the first
    # explosion law (reported per the open question on start_cap)
    params = ModelParams(beta=2.0, a=0.0)
    lows, highs = [], []
    for seed in range(60):
        path = BrownianPath(seed, 10.0)
        for cap, lst in ((8.0, lows), (16.0, highs)):
            cfg = SolverConfig(base_dt=1e-3, drift_tol=0.25, p_switch=1.0,
                               start_cap=cap, explosion_margin=56.0)
            out = riccati._run_p(params, 3.0, path, 10.0, cfg)
            lst.append(out["explosions"][0] if out["explosions"].size else np.inf)
    lows, highs = np.array(lows), np.array(highs)
    both = np.isfinite(lows) & np.isfinite(highs)
    assert both.sum() >= 20
    assert np.median(np.abs(lows[both] - highs[both])) < 0.5


def test_csv_export(tmp_path):
    params = ModelParams(beta=2.0, a=0.0)
    traj, _ = simulate_p(params, 3.0, BrownianPath(2, 5.0), 5.0, record_stride=16)
    f = tmp_path / "p.csv"
    traj.write_csv(str(f))
    lines = f.read_text().splitlines()
    assert lines[0] == "t,value,segment_sign,event_flag"
    assert len(lines) > 5
