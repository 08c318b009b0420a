import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsmakit.channel import ChannelSet, complex_gaussian, philox_rng
from rsmakit.fbl import (
    LOG2E,
    FblConfig,
    dispersion,
    fbl_allocation,
    fbl_feasible,
    fbl_rate,
    fbl_rate_unclamped,
)
from rsmakit.mathfn import q_inv
from rsmakit.txmodel import AllocationError, PrecoderSet, common_sinrs, private_sinrs, shannon_rates


def random_instance(seed, K=2, n_t=3, P=20.0):
    rng = philox_rng(seed, 99)
    h = complex_gaussian(rng, (K, n_t))
    p = complex_gaussian(rng, (K + 1, n_t))
    p *= math.sqrt(P) / np.linalg.norm(p)
    return ChannelSet.perfect(h), PrecoderSet(p[0], p[1:], P)


def test_dispersion_values():
    assert dispersion(0.0) == 0.0
    assert dispersion(1.0) == pytest.approx(LOG2E**2 * 0.75, rel=1e-15)
    assert dispersion(1.0) == pytest.approx(1.5610267, abs=1e-7)
    assert dispersion(1e12) == pytest.approx(LOG2E**2, rel=1e-12)
    assert LOG2E**2 == pytest.approx(2.0813689810056077)


def test_dispersion_rejects_negative():
    with pytest.raises(ValueError):
        dispersion(-1e-3)
    with pytest.raises(ValueError):
        dispersion(np.array([1.0, np.nan]))


def test_dispersion_monotone_bounded():
    g = np.geomspace(1e-6, 1e4, 500)
    assert np.all(np.diff(dispersion(g)) > 0)
    # beyond ~1e8 the bracket rounds to 1 in float64
    assert np.all(dispersion(np.geomspace(1e-6, 1e12, 500)) <= LOG2E**2)


def test_fbl_rate_golden():
    # log2(100) - sqrt(V(99)/100) * Q^-1(5e-6)
    expected = math.log2(100.0) - math.sqrt(LOG2E**2 * (1 - 1e-4) / 100.0) * 4.4171734134690221
    assert fbl_rate(99.0, 100, 5e-6) == pytest.approx(expected, rel=1e-12)
    assert fbl_rate(99.0, 100, 5e-6) == pytest.approx(6.0067, abs=1e-4)


def test_fbl_rate_limits():
    assert fbl_rate(0.0, 7, 1e-3) == 0.0
    assert fbl_rate(15.0, 10**12, 1e-5) == pytest.approx(4.0, abs=1e-4)


def test_fbl_rate_clamps_and_flags():
    assert fbl_rate_unclamped(0.05, 10, 1e-5) < 0
    assert fbl_rate(0.05, 10, 1e-5) == 0.0
    assert not fbl_feasible(0.05, 10, 1e-5)
    assert fbl_feasible(10.0, 1000, 1e-5)


@pytest.mark.parametrize("kwargs", [dict(n=0, xi=1e-5), dict(n=10, xi=0.0), dict(n=10, xi=1.0)])
def test_fbl_rate_preconditions(kwargs):
    with pytest.raises(ValueError):
        fbl_rate(1.0, kwargs["n"], kwargs["xi"])


@settings(max_examples=200)
@given(st.floats(1e-6, 1e6), st.integers(1, 10**6), st.integers(1, 10**6), st.floats(1e-9, 0.49))
def test_fbl_rate_monotone_in_blocklength(gamma, n1, n2, xi):
    lo, hi = sorted((n1, n2))
    assert fbl_rate(gamma, lo, xi) <= fbl_rate(gamma, hi, xi) + 1e-12
    if hi > lo:
        assert fbl_rate_unclamped(gamma, lo, xi) < fbl_rate_unclamped(gamma, hi, xi)


@settings(max_examples=200)
@given(st.floats(0.0, 1e6), st.integers(1, 10**6), st.floats(1e-9, 0.49))
def test_fbl_rate_below_shannon(gamma, n, xi):
    assert fbl_rate(gamma, n, xi) <= math.log2(1.0 + gamma) + 1e-12


@pytest.mark.parametrize("n", [1, 10, 100, 1000])
@pytest.mark.parametrize("xi", [1e-9, 5e-6, 1e-2])
def test_fbl_rate_monotone_in_sinr(n, xi):
    g = np.concatenate([[0.0], np.geomspace(1e-6, 1e7, 4000)])
    r = fbl_rate(g, n, xi)
    assert np.all(np.diff(r) >= -1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        FblConfig(0, (10, 10), 1e-5)
    with pytest.raises(ValueError):
        FblConfig(10, (10, 2.5), 1e-5)
    with pytest.raises(ValueError):
        FblConfig(10, (10,), 0.5)
    cfg = FblConfig.uniform(100, 3, 5e-6)
    assert cfg.private_blocklengths == (100, 100, 100)
    assert cfg.penalty_scale(100) == pytest.approx(q_inv(5e-6) / 10.0)


@pytest.mark.parametrize("seed", range(6))
def test_allocation_matches_composition(seed):
    ch, pr = random_instance(seed)
    cfg = FblConfig(200, (50, 400), 1e-5)
    gc, gp = common_sinrs(ch, pr), private_sinrs(ch, pr)
    rc = min(max(0.0, math.log2(1 + g) - math.sqrt(dispersion(g) / 200) * q_inv(1e-5)) for g in gc)
    rp = [max(0.0, math.log2(1 + g) - math.sqrt(dispersion(g) / n) * q_inv(1e-5))
          for g, n in zip(gp, (50, 400))]
    shares = [0.25 * rc, 0.75 * rc]
    alloc = fbl_allocation(ch, pr, cfg, shares)
    assert alloc.common_rate == pytest.approx(rc, rel=1e-12, abs=1e-15)
    np.testing.assert_allclose(alloc.private_rates, rp, rtol=1e-12)
    assert alloc.sum_rate == pytest.approx(rc + sum(rp), rel=1e-12)


def test_allocation_huge_blocklength_matches_shannon():
    ch, pr = random_instance(7)
    cfg = FblConfig.uniform(10**12, 2, 1e-5)
    shannon = shannon_rates(ch, pr, [0.0, 0.0])
    fbl = fbl_allocation(ch, pr, cfg, [0.0, 0.0])
    assert fbl.common_rate == pytest.approx(shannon.common_rate, abs=1e-3)
    np.testing.assert_allclose(fbl.private_rates, shannon.private_rates, atol=1e-3)


def test_allocation_rejects_excess_shares_and_flags_clamps():
    ch, pr = random_instance(8)
    cfg = FblConfig.uniform(100, 2, 1e-5)
    alloc = fbl_allocation(ch, pr, cfg, [0.0, 0.0])
    with pytest.raises(AllocationError):
        fbl_allocation(ch, pr, cfg, [alloc.common_rate, 0.1])
    weak = PrecoderSet(pr.common * 1e-3, pr.privates * 1e-3, pr.power_budget)
    clamped = fbl_allocation(ch, weak, FblConfig.uniform(2, 2, 1e-9), [0.0, 0.0])
    assert set(clamped.clamped) == {"c", 0, 1}
    with pytest.raises(ValueError):
        fbl_allocation(ch, pr, FblConfig.uniform(100, 3, 1e-5), [0.0, 0.0])
