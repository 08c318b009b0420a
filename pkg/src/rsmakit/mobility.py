"""Low-complexity rate splitting under user mobility.

Private streams use zero-forcing on the outdated CSIT; the common stream
uses a random unit beamformer independent of everything else. A single
coefficient t splits the power: P(1-t) on the common stream, Pt/K on
each private stream. The ergodic sum rate has a tractable lower bound in
t, which in turn has a closed-form maximizer.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, MobilityParams, complex_gaussian, time_correlation
from .mathfn import EULER_GAMMA, digamma, expint_en_scaled_sum
from .txmodel import PrecoderSet, RateAllocation, allocate, common_sinrs, private_sinrs

# singular-value ratio below which the CSIT matrix is treated as rank deficient
RANK_TOL = 1e-12


class DegenerateChannel(ValueError):
    """CSIT matrix is rank deficient; zero-forcing is undefined."""


class DegenerateBound(ValueError):
    """The closed-form coefficient is undefined because round(DK) <= 1."""


@dataclass(frozen=True)
class PowerSplit:
    """Fraction t of the power budget on private streams."""

    t: float

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ValueError(f"power split t must lie in (0, 1], got {self.t}")


@dataclass(frozen=True)
class LowerBoundTerms:
    D: float
    theta_param: float
    mu: float
    beta: float
    omega: float
    # NaN when round(DK) <= 1
    rho: float
    terms: int  # round(DK), the number of exponential-integral terms in beta


def round_half_even(value: float) -> int:
    return int(round(value))


def build_mobility_precoders(ch: ChannelSet, split: PowerSplit, params: MobilityParams,
                             rng: np.random.Generator) -> PrecoderSet:
    """ZF private precoders from the CSIT plus an isotropic common beamformer.

    The common direction is always drawn, even for t = 1, so that schemes
    sharing a generator consume identical random numbers.
    """
    if ch.num_users != params.K or ch.num_antennas != params.n_t:
        raise ValueError("channel dimensions do not match the mobility parameters")
    # received sample is h^H x, so ZF inverts the conjugated CSIT rows
    csit = ch.csit_channels.conj()
    sv = np.linalg.svd(csit, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise DegenerateChannel(f"CSIT matrix is rank deficient (singular values {sv})")
    zf = np.linalg.pinv(csit)
    zf = zf / np.linalg.norm(zf, axis=0)
    f_c = complex_gaussian(rng, params.n_t)
    f_c = f_c / np.linalg.norm(f_c)
    common = math.sqrt(params.P * (1.0 - split.t)) * f_c
    privates = math.sqrt(params.P * split.t / params.K) * zf.T
    return PrecoderSet(common, privates, params.P)


def instantaneous_rates(ch: ChannelSet, pr: PrecoderSet, split: PowerSplit) -> RateAllocation:
    """Per-realization rates with Gaussian signalling and perfect SIC.

    The common rate is set by the weakest user; it is credited in equal
    shares since only the sum matters for the ergodic sum rate.
    """
    del split  # the split is already folded into the precoder powers
    common = np.log2(1.0 + common_sinrs(ch, pr))
    private = np.log2(1.0 + private_sinrs(ch, pr))
    shares = np.full(ch.num_users, float(common.min()) / ch.num_users)
    return allocate(common, private, shares)


def _shape_terms(epsilon: float, n_t: int, K: int):
    e2 = epsilon * epsilon
    lead = e2 * (n_t + 1) + (1.0 - 2.0 * e2) * K
    quartic = e2 * e2 * (n_t + 1) + (1.0 - 2.0 * e2) * K
    return lead * lead / quartic, quartic / lead


def bound_terms(params: MobilityParams, t: float = 1.0, epsilon: float | None = None) -> LowerBoundTerms:
    """Auxiliary quantities of the lower bound; beta depends on t."""
    eps = time_correlation(params) if epsilon is None else float(epsilon)
    K, P = params.K, params.P
    D, theta = _shape_terms(eps, params.n_t, K)
    terms = round_half_even(D * K)
    mu = math.log(theta) + digamma(D)
    x = K * K / (P * theta * t)
    beta = -EULER_GAMMA - math.log(K) - (expint_en_scaled_sum(terms, x) if terms >= 1 else 0.0)
    omega = (K - 1) * (1.0 - eps * eps) * P / K
    if terms > 1:
        rho = K / (theta * (terms - 1)) * math.exp(-EULER_GAMMA - 1.0 / (2.0 * (terms - 1)))
    else:
        rho = math.nan
    return LowerBoundTerms(D, theta, mu, beta, omega, rho, terms)


def lower_bound(split: PowerSplit, params: MobilityParams, epsilon: float | None = None) -> float:
    """Lower bound on (an approximation of) the ergodic sum rate, bits/s/Hz."""
    t = split.t
    bt = bound_terms(params, t, epsilon)
    K, P = params.K, params.P
    common = math.log1p(P * (1.0 - t) * math.exp(bt.beta))
    private = K * math.log1p(P / K * math.exp(bt.mu) * t)
    leakage = K * math.log1p(bt.omega * t)
    return (common + private - leakage) / math.log(2.0)


def t_opt_closed_form(params: MobilityParams, epsilon: float | None = None) -> PowerSplit:
    """Closed-form maximizer of the bound in the high-power regime.

    A single user has no inter-user interference to trade off, so the whole
    budget goes to the private stream.
    """
    if params.K == 1:
        return PowerSplit(1.0)
    bt = bound_terms(params, 1.0, epsilon)
    if bt.terms <= 1:
        raise DegenerateBound(f"round(DK) = {bt.terms}; the closed form needs at least 2")
    K, rho, omega = params.K, bt.rho, bt.omega
    if rho * (omega + 1.0) / K > 1.0:
        t = rho * (K - 1) / (rho * (omega + K) - K)
    else:
        t = 1.0
    if not 0.0 < t <= 1.0:
        raise ArithmeticError(f"closed-form t = {t} left (0, 1]")
    return PowerSplit(t)


def split_grid(granularity: float) -> np.ndarray:
    """{g, 2g, ..., 1}; 1/g must be an integer."""
    if not 0.0 < granularity < 1.0:
        raise ValueError(f"granularity must lie in (0, 1), got {granularity}")
    count = round(1.0 / granularity)
    if abs(count * granularity - 1.0) > 1e-9:
        raise ValueError(f"1/granularity must be an integer, got {1.0 / granularity}")
    grid = np.arange(1, count + 1) * granularity
    grid[-1] = 1.0
    return grid


def t_opt_exhaustive(params: MobilityParams, granularity: float = 1e-3,
                     epsilon: float | None = None) -> PowerSplit:
    """Grid maximizer of the bound; ties go to the larger t."""
    best_t, best = None, -math.inf
    for t in split_grid(granularity):
        value = lower_bound(PowerSplit(float(t)), params, epsilon)
        if value >= best:
            best_t, best = float(t), value
    return PowerSplit(best_t)
