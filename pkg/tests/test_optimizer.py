import itertools
import math

import numpy as np
import pytest

from rsmakit.channel import ChannelSet, complex_gaussian, make_angle_channels, philox_rng
from rsmakit.fbl import FblConfig, fbl_rate, fbl_rate_unclamped
from rsmakit.optimizer import (
    SolverOptions,
    UnsupportedConfiguration,
    WsrProblem,
    solve_noma,
    solve_rsma,
    solve_sdma,
)
from rsmakit.txmodel import POWER_SLACK, SHARE_SLACK


def random_problem(seed, K=2, n_t=2, P=10.0, fbl=True, weights=None, qos=None):
    h = complex_gaussian(philox_rng(seed, 123), (K, n_t))
    cfg = FblConfig.uniform(100, K, 1e-5) if fbl else None
    w = np.ones(K) if weights is None else weights
    return WsrProblem(ChannelSet.perfect(h), w, P, cfg, qos)


def check_report(problem, report):
    """Feasibility of a returned point and monotonicity of its trace."""
    assert not report.infeasible
    assert np.all(np.diff(report.objective_trace) >= -1e-7)
    assert report.precoders.total_power() <= problem.power_budget + POWER_SLACK
    alloc = report.allocation
    assert np.all(alloc.common_shares >= 0)
    assert alloc.common_shares.sum() <= alloc.common_rate + SHARE_SLACK
    assert np.all(alloc.totals >= problem.qos_rates - 1e-6)
    assert report.objective == pytest.approx(alloc.weighted_sum(problem.weights), abs=1e-12)
    # the reported allocation is a re-evaluation on the returned precoders
    fresh = problem.allocation(report.precoders, alloc.common_shares)
    np.testing.assert_allclose(fresh.totals, alloc.totals, atol=1e-12)


def test_single_user_matched_filter():
    h = np.array([[1.0 + 0.5j, -0.3j, 0.7]])
    P, cfg = 5.0, FblConfig.uniform(200, 1, 1e-5)
    problem = WsrProblem(ChannelSet.perfect(h), [1.0], P, cfg)
    expected = fbl_rate(P * np.linalg.norm(h) ** 2, 200, 1e-5)
    rsma, sdma = solve_rsma(problem), solve_sdma(problem)
    assert rsma.objective == pytest.approx(expected, abs=1e-4)
    assert sdma.objective == pytest.approx(expected, abs=1e-4)
    check_report(problem, rsma)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("fbl", [True, False])
def test_invariants_on_random_instances(seed, fbl):
    problem = random_problem(seed, fbl=fbl)
    rsma, sdma = solve_rsma(problem), solve_sdma(problem)
    check_report(problem, rsma)
    check_report(problem, sdma)
    # SDMA is a feasible point of the RSMA problem at equal target BLER
    assert rsma.objective >= sdma.objective - 1e-3
    assert np.all(sdma.allocation.common_shares == 0)
    assert np.linalg.norm(sdma.precoders.common) == 0


def test_three_users_weighted():
    problem = random_problem(11, K=3, n_t=3, P=20.0, weights=np.array([1.0, 2.0, 0.5]))
    report = solve_rsma(problem)
    check_report(problem, report)
    assert report.objective >= solve_sdma(problem).objective - 1e-3


def _grid_best(problem):
    """Best sum rate over precoders with entries in {-1,0,1} + j{-1,0,1}, scaled to full power."""
    levels = np.array([a + 1j * b for a in (-1, 0, 1) for b in (-1, 0, 1)])
    entries = np.array(list(itertools.product(range(9), repeat=6)))
    p = levels[entries].reshape(-1, 3, 2)  # (combos, [common, p1, p2], n_t)
    norms = np.linalg.norm(p.reshape(len(p), -1), axis=1)
    keep = norms > 0
    p = p[keep] * (math.sqrt(problem.power_budget) / norms[keep])[:, None, None]
    hc = problem.channels.true_channels.conj()
    z = np.abs(np.einsum("kn,bsn->bks", hc, p)) ** 2  # (combos, user, stream)
    priv = z[:, :, 1:]
    own = np.stack([priv[:, 0, 0], priv[:, 1, 1]], axis=1)
    g_p = own / (priv.sum(axis=2) - own + 1.0)
    g_c = z[:, :, 0] / (priv.sum(axis=2) + 1.0)
    cfg = problem.fbl
    r_c = np.maximum(fbl_rate_unclamped(g_c, cfg.common_blocklength, cfg.target_bler), 0).min(axis=1)
    r_p = np.maximum(fbl_rate_unclamped(g_p, cfg.common_blocklength, cfg.target_bler), 0).sum(axis=1)
    return float(np.max(r_c + r_p))


def test_beats_quantized_grid_search():
    problem = random_problem(5, P=10.0)
    best = _grid_best(problem)
    assert solve_rsma(problem).objective >= best - 1e-2


def test_large_blocklength_approaches_shannon():
    problem = random_problem(3, fbl=False)
    long = WsrProblem(problem.channels, problem.weights, problem.power_budget,
                      FblConfig.uniform(10**6, 2, 5e-6))
    shannon, finite = solve_rsma(problem).objective, solve_rsma(long).objective
    # each of at most three streams loses about log2(e) sqrt(V/N) Q^-1(xi) < log2(e) * 4.42e-3
    assert 0.0 <= shannon - finite <= 3 * math.log2(math.e) * 4.42e-3 + 1e-3


def test_qos_constraints_met():
    base = random_problem(2, weights=np.array([1.0, 0.0]))
    free = solve_rsma(base)
    # user 1 has no weight, so without QoS it gets almost nothing
    target = np.array([0.0, 1.0])
    problem = WsrProblem(base.channels, base.weights, base.power_budget, base.fbl, target)
    report = solve_rsma(problem)
    check_report(problem, report)
    assert report.allocation.totals[1] >= 1.0 - 1e-6
    assert report.objective <= free.objective + 1e-6


def test_infeasible_qos_reported():
    base = random_problem(2)
    problem = WsrProblem(base.channels, base.weights, base.power_budget, base.fbl, [40.0, 40.0])
    report = solve_rsma(problem, SolverOptions(max_iterations=30))
    assert report.infeasible
    assert "QoS" in report.violated


def test_zero_weight_reduces_to_single_user():
    base = random_problem(4, weights=np.array([0.0, 1.0]))
    report = solve_noma(base)
    h = base.channels.true_channels[1]
    single = fbl_rate(base.power_budget * np.linalg.norm(h) ** 2, 100, 1e-5)
    assert report.objective == pytest.approx(single, abs=1e-3)
    assert solve_rsma(base).objective == pytest.approx(single, abs=1e-3)


def test_noma_needs_two_users():
    with pytest.raises(UnsupportedConfiguration):
        solve_noma(random_problem(1, K=3, n_t=3))


def test_noma_below_rsma_and_sdma_when_orthogonal():
    cfg = FblConfig.uniform(100, 2, 5e-6)
    problem = WsrProblem(make_angle_channels(4 * math.pi / 9), [1.0, 1.0], 100.0, cfg)
    noma = solve_noma(problem)
    check_report(problem, noma)
    assert noma.objective < solve_sdma(problem).objective
    assert noma.objective < solve_rsma(problem).objective


def test_noma_beats_sdma_on_degraded_channel():
    # aligned channels, very different norms: superposition with SIC wins
    h = np.array([[3.0, 3.0], [0.3, 0.3]], dtype=complex)
    problem = WsrProblem(ChannelSet.perfect(h), [1.0, 1.0], 10.0, FblConfig.uniform(500, 2, 1e-5))
    noma, sdma = solve_noma(problem), solve_sdma(problem)
    check_report(problem, noma)
    assert noma.objective >= sdma.objective - 1e-3


def test_problem_validation():
    ch = make_angle_channels(0.3)
    with pytest.raises(ValueError):
        WsrProblem(ch, [0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        WsrProblem(ch, [1.0, -1.0], 1.0)
    with pytest.raises(ValueError):
        WsrProblem(ch, [1.0, 1.0], 0.0)
    with pytest.raises(ValueError):
        WsrProblem(ch, [1.0, 1.0], 1.0, qos_rates=[-1.0, 0.0])
    with pytest.raises(ValueError):
        WsrProblem(ch, [1.0, 1.0], 1.0, FblConfig.uniform(10, 3, 1e-5))
