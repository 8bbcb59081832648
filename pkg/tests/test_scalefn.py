import math

import numpy as np
import pytest
from scipy import integrate

from besselsim import scalefn
from besselsim.rescaled import stationary_first_passage
from besselsim.riccati import ModelParams


def test_f_beta_values():
    assert scalefn.f_beta(0.0, 0.5, 1.0) == pytest.approx(0.0)
    assert scalefn.f_beta(0.0, 0.5, 3.0) == pytest.approx(0.5)
    a, beta = 2.0, 0.3
    assert scalefn.f_beta(beta * math.log(a), beta, a) == pytest.approx(0.0, abs=1e-14)
    assert scalefn.f_beta(-50.0, 0.3, 2.0) == pytest.approx(a / 4.0)


def test_log_scale_derivative_zero_at_origin():
    assert scalefn.log_scale_derivative(0.0, 0.5, 1.0) == 0.0


@pytest.mark.parametrize("beta,a", [(0.5, 1.0), (0.1, 2.0), (0.05, 0.7)])
def test_log_scale_derivative_matches_quadrature(beta, a):
    l2 = beta ** (1.0 / 6.0)
    for x in np.linspace(-2.0, l2, 9):
        num, _ = integrate.quad(lambda v: -2.0 * scalefn.f_beta(v, beta, a), 0.0, x,
                                limit=200)
        assert scalefn.log_scale_derivative(x, beta, a) == pytest.approx(num, abs=1e-9)


def test_display_form_is_factor_four():
    v1 = scalefn.log_scale_derivative(0.7, 0.2, 1.3)
    v4 = scalefn.log_scale_derivative(0.7, 0.2, 1.3, use_display_form=True)
    assert v4 == pytest.approx(4.0 * v1)


def test_derivative_vanishes_at_analytic_minimizer():
    beta, a = 0.2, 1.7
    xstar = beta * math.log(a)
    h = 1e-6
    d = (scalefn.log_scale_derivative(xstar + h, beta, a)
         - scalefn.log_scale_derivative(xstar - h, beta, a)) / (2 * h)
    assert abs(d) < 1e-6
    # and it is a minimum
    assert scalefn.log_scale_derivative(xstar, beta, a) < \
        scalefn.log_scale_derivative(xstar + 0.1, beta, a)
    assert scalefn.log_scale_derivative(xstar, beta, a) < \
        scalefn.log_scale_derivative(xstar - 0.1, beta, a)


def test_limit_closed_form():
    sf = scalefn.ScaleFunction(beta=None, a=2.0)
    assert scalefn.scale_fn(-1.0, sf) == pytest.approx(0.0, abs=1e-14)
    assert scalefn.scale_fn(0.0, sf) == pytest.approx(math.e - 1.0, rel=1e-12)
    # strictly increasing and vanishing at -1 pins the exponent sign
    xs = np.linspace(-2.0, 1.0, 41)
    vals = [scalefn.scale_fn(float(x), sf) for x in xs]
    assert all(v2 > v1 for v1, v2 in zip(vals, vals[1:]))


def test_beta_version_matches_direct_quadrature():
    sf = scalefn.ScaleFunction(beta=0.5, a=1.0)
    for x in (-1.5, -0.5, 0.0, 0.4):
        direct, _ = integrate.quad(
            lambda u: math.exp(scalefn.log_scale_derivative(u, 0.5, 1.0)), -1.0, x,
            limit=200)
        assert scalefn.scale_fn(x, sf) == pytest.approx(direct, rel=1e-8)


def test_scale_fn_strictly_increasing():
    sf = scalefn.ScaleFunction(beta=0.2, a=1.0)
    xs = np.linspace(-2.0, 0.4, 25)
    vals = [scalefn.scale_fn(float(x), sf) for x in xs]
    assert all(v2 > v1 for v1, v2 in zip(vals, vals[1:]))


def test_convergence_of_scale_functions():
    a = 1.0
    lim = scalefn.ScaleFunction(beta=None, a=a)
    xs = np.linspace(-2.0, 0.0, 81)
    sups = []
    for beta in (1e-1, 1e-2, 1e-3):
        sf = scalefn.ScaleFunction(beta=beta, a=a)
        sup = max(abs(scalefn.scale_fn(float(x), sf) - scalefn.scale_fn(float(x), lim))
                  for x in xs)
        sups.append(sup)
    assert sups[0] > sups[1] > sups[2]


def test_scale_blowup_at_positive_levels():
    sf = scalefn.ScaleFunction(beta=1e-3, a=1.0)
    l2 = 1e-3 ** (1.0 / 6.0)
    assert scalefn.scale_fn(l2, sf) > 1e6
    assert scalefn.log_scale_integral(-1.0, l2, sf) > math.log(1e6)


def test_hitting_probability_in_unit_interval():
    for beta, a, gamma, l2 in [(0.5, 1.0, -1.0, 0.9), (0.2, 2.0, -0.3, 0.4),
                               (1.0, 0.5, -2.0, 1.5)]:
        p = scalefn.hitting_probability(gamma, l2, beta, a)
        assert 0.0 <= p <= 1.0


def test_hitting_probability_vanishes_with_beta():
    a, gamma = 1.0, -1.0
    vals = [scalefn.hitting_probability(gamma, beta ** (1.0 / 6.0), beta, a)
            for beta in (0.2, 0.1, 0.05)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < vals[0]


def test_hitting_probability_underflow_flag():
    det = scalefn.hitting_probability_detail(-1.0, 1e-4 ** (1.0 / 6.0), 1e-4, 1.0)
    assert det.value == 0.0 and det.underflow


def test_hitting_probability_validates():
    with pytest.raises(ValueError):
        scalefn.hitting_probability(0.5, 1.0, 0.5, 1.0)


def test_hitting_probability_vs_monte_carlo_smoke():
    # module-scale version of the acceptance check (3 sigma at 2000 replicas)
    beta, a, gamma = 0.5, 1.0, -1.0
    l2 = 0.5 ** (1.0 / 6.0)
    p_formula = scalefn.hitting_probability(gamma, l2, beta, a)
    hits, _ = stationary_first_passage(ModelParams(beta=beta, a=a), gamma, l2,
                                       n_rep=2000, seed=77)
    assert np.all(hits >= 0), "timeouts in first-passage Monte Carlo"
    p_mc = float(np.mean(hits == 1))
    sigma = math.sqrt(p_formula * (1 - p_formula) / hits.size)
    assert abs(p_mc - p_formula) < 3.5 * sigma


def test_martingale_optional_stopping():
    # E[s(q(stop))] = s(0) at desk scale
    beta, a, gamma = 0.5, 1.0, -1.0
    l2 = 0.5 ** (1.0 / 6.0)
    sf = scalefn.ScaleFunction(beta=beta, a=a)
    s_gamma = scalefn.scale_fn(gamma, sf)
    s_l2 = scalefn.scale_fn(l2, sf)
    s_0 = scalefn.scale_fn(0.0, sf)
    hits, _ = stationary_first_passage(ModelParams(beta=beta, a=a), gamma, l2,
                                       n_rep=2000, seed=123)
    stopped = np.where(hits == 1, s_l2, s_gamma)
    se = stopped.std() / math.sqrt(stopped.size)
    assert abs(stopped.mean() - s_0) < 3.5 * se
