import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gasrelax.model import (
    GasParams,
    ModelError,
    chain_variance,
    equilibrium_spec,
    restitution_coefficient,
    time_variance,
)


def brute_chain_variance(n, p):
    """Explicit sum of the weighted impulse variances."""
    c = p.c
    return c ** (2 * n) * p.sigma0_sq + sum(c ** (2 * (n - k)) * p.sigmax_sq for k in range(1, n + 1))


def poisson_pmf(n, mu):
    return math.exp(n * math.log(mu) - mu - math.lgamma(n + 1))


def mixture_variance_oracle(t, p, tail=1e-13):
    """Sum_n P(N(t) = n) var(V_n), truncated once the remaining Poisson mass is below ``tail``."""
    mu = p.lam * t
    total, mass, n = 0.0, 0.0, 0
    while 1.0 - mass > tail or n < mu:
        w = poisson_pmf(n, mu)
        total += w * brute_chain_variance(n, p)
        mass += w
        n += 1
    return total


@pytest.mark.parametrize("m_p,m_q,expected", [(1, 1, 0.0), (3, 1, 0.5)])
def test_restitution_examples(m_p, m_q, expected):
    assert restitution_coefficient(m_p, m_q) == expected


def test_restitution_heavy_limit():
    c = restitution_coefficient(1e6, 1)
    assert c == pytest.approx(0.999998, abs=1e-9)
    assert c < 1


@pytest.mark.parametrize("m_p,m_q", [(1, 3), (0, 0), (-1, -2), (1, 0)])
def test_restitution_rejects(m_p, m_q):
    with pytest.raises(ModelError):
        restitution_coefficient(m_p, m_q)


@pytest.mark.parametrize("field", ["sigma0_sq", "sigmax_sq", "lam"])
def test_gas_params_rejects_nonpositive(field):
    kw = dict(m_p=3, m_q=1, sigma0_sq=4, sigmax_sq=1, lam=2)
    kw[field] = 0
    with pytest.raises(ModelError):
        GasParams(**kw)


def test_from_restitution_roundtrip():
    p = GasParams.from_restitution(0.8, 1.0, 2.0, 3.0)
    assert p.c == pytest.approx(0.8, abs=1e-15)


def test_chain_variance_examples(hot):
    assert chain_variance(0, hot) == hot.sigma0_sq
    assert chain_variance(1, hot) == 2.0
    assert abs(chain_variance(10_000, hot) - 4.0 / 3.0) < 1e-12


def test_chain_variance_memoryless(symmetric):
    p = GasParams(1, 1, 7.0, 2.0, 1.0)
    assert chain_variance(0, p) == 7.0
    assert np.all(chain_variance(np.arange(1, 20), p) == 2.0)


@given(
    c=st.floats(0.0, 0.99),
    s0=st.floats(0.01, 100),
    sx=st.floats(0.01, 100),
    n=st.integers(0, 60),
)
def test_chain_variance_matches_explicit_sum(c, s0, sx, n):
    p = GasParams.from_restitution(c, s0, sx, 1.0)
    assert chain_variance(n, p) == pytest.approx(brute_chain_variance(n, p), rel=1e-10)


@given(c=st.floats(0.05, 0.95), s0=st.floats(0.01, 100), sx=st.floats(0.01, 100))
def test_chain_variance_monotone_toward_equilibrium(c, s0, sx):
    p = GasParams.from_restitution(c, s0, sx, 1.0)
    eq = equilibrium_spec(p).variance
    v = chain_variance(np.arange(0, 30), p)
    d = np.diff(v)
    tol = 1e-12 * max(s0, eq)
    if s0 > eq * (1 + 1e-9):
        assert np.all(d <= tol) and d[0] < 0
    elif s0 < eq * (1 - 1e-9):
        assert np.all(d >= -tol) and d[0] > 0


def test_chain_variance_fixed_point():
    p = GasParams.from_restitution(0.5, 4.0 / 3.0, 1.0, 1.0)
    v = chain_variance(np.arange(50), p)
    np.testing.assert_allclose(v, 4.0 / 3.0, rtol=1e-14)


def test_time_variance_endpoints(hot):
    assert time_variance(0.0, hot) == hot.sigma0_sq
    t = 50.0 / hot.relaxation_rate
    assert abs(time_variance(t, hot) - 4.0 / 3.0) < 1e-12


@pytest.mark.parametrize("t", [0.01, 0.3, 1.0, 2.5, 7.0])
def test_time_variance_equals_mixture_oracle(hot, t):
    assert time_variance(t, hot) == pytest.approx(mixture_variance_oracle(t, hot), rel=1e-11, abs=1e-12)


def test_time_variance_small_t_precision(hot):
    # expm1 keeps the O(t) term exact where 1 - exp(-x) would cancel
    t = 1e-12
    expected = hot.sigma0_sq + (4.0 / 3.0 - hot.sigma0_sq) * hot.relaxation_rate * t
    assert time_variance(t, hot) == pytest.approx(expected, rel=1e-15)


def test_time_variance_log_residual_is_linear(hot):
    t = np.linspace(0, 10, 41)
    resid = time_variance(t, hot) - equilibrium_spec(hot).variance
    slope = np.diff(np.log(resid)) / np.diff(t)
    np.testing.assert_allclose(slope, -hot.relaxation_rate, rtol=1e-9)


def test_chain_variance_is_degenerate_mixture(hot):
    # conditioning on N(t) = n collapses the mixture to chain_variance(n)
    for n in range(6):
        assert chain_variance(n, hot) == pytest.approx(brute_chain_variance(n, hot), rel=1e-14)


def test_equilibrium_examples():
    assert equilibrium_spec(GasParams(1, 1, 3.0, 2.5, 1.0)).variance == 2.5
    eq = equilibrium_spec(GasParams(3, 1, 4.0, 1.0, 2.0))
    assert eq.mean == 0.0
    assert eq.variance == pytest.approx(4.0 / 3.0, rel=1e-15)


@settings(max_examples=50)
@given(c=st.floats(0.0, 0.95), s0=st.floats(0.1, 10), sx=st.floats(0.1, 10))
def test_equilibrium_is_chain_limit(c, s0, sx):
    p = GasParams.from_restitution(c, s0, sx, 1.0)
    assert chain_variance(5000, p) == pytest.approx(equilibrium_spec(p).variance, rel=1e-12)


def test_negative_inputs_rejected(hot):
    with pytest.raises(ModelError):
        chain_variance(-1, hot)
    with pytest.raises(ModelError):
        time_variance(-0.1, hot)
