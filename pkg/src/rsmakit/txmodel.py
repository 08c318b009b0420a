"""One-layer rate-splitting signal model.

Transmit signal x = p_c s_c + sum_k p_k s_k. Every receiver decodes the
common stream treating all private streams as noise, cancels it, then
decodes its own private stream treating the other private streams as noise.
SDMA is the special case with no common stream; two-user NOMA is the case
where the common stream carries only the weaker user's message and that
user has no private stream.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelSet

POWER_SLACK = 1e-9
SHARE_SLACK = 1e-9


class AllocationError(ValueError):
    """Common-rate shares exceed what some user can decode."""

    def __init__(self, message, user=None):
        super().__init__(message)
        self.user = user


@dataclass(frozen=True)
class PrecoderSet:
    common: np.ndarray
    privates: np.ndarray
    power_budget: float

    def __post_init__(self):
        common = np.asarray(self.common, dtype=complex).reshape(-1)
        privates = np.atleast_2d(np.asarray(self.privates, dtype=complex))
        if privates.shape[1] != common.shape[0]:
            raise ValueError("common and private precoders must have the same length")
        if not self.power_budget > 0:
            raise ValueError("power budget must be positive")
        object.__setattr__(self, "common", common)
        object.__setattr__(self, "privates", privates)
        if self.total_power() > self.power_budget + POWER_SLACK:
            raise ValueError(
                f"precoders use {self.total_power():.12g} > budget {self.power_budget:.12g}")

    def total_power(self) -> float:
        return float(np.vdot(self.common, self.common).real
                     + np.sum(np.abs(self.privates) ** 2))

    @property
    def num_users(self) -> int:
        return self.privates.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.common.shape[0]


@dataclass(frozen=True)
class RateAllocation:
    common_shares: np.ndarray
    private_rates: np.ndarray
    common_rate: float
    totals: np.ndarray = field(init=False)
    sum_rate: float = field(init=False)
    # stream labels ("c", or user index) whose finite-blocklength rate was floored at 0
    clamped: tuple = ()

    def __post_init__(self):
        shares = np.asarray(self.common_shares, dtype=float)
        private = np.asarray(self.private_rates, dtype=float)
        object.__setattr__(self, "common_shares", shares)
        object.__setattr__(self, "private_rates", private)
        object.__setattr__(self, "totals", shares + private)
        object.__setattr__(self, "sum_rate", float(np.sum(shares + private)))

    def weighted_sum(self, weights) -> float:
        return float(np.dot(np.asarray(weights, dtype=float), self.totals))


def _gains(ch: ChannelSet, pr: PrecoderSet):
    # gains[k, i] = |h_k^H p_i|^2 over private streams; common[k] = |h_k^H p_c|^2
    _check_dims(ch, pr)
    h_conj = ch.true_channels.conj()
    private = np.abs(h_conj @ pr.privates.T) ** 2
    common = np.abs(h_conj @ pr.common) ** 2
    return common, private


def _check_dims(ch: ChannelSet, pr: PrecoderSet):
    if ch.num_users != pr.num_users or ch.num_antennas != pr.num_antennas:
        raise ValueError(
            f"dimension mismatch: channels K={ch.num_users}, n_t={ch.num_antennas}; "
            f"precoders K={pr.num_users}, n_t={pr.num_antennas}")


def common_sinrs(ch: ChannelSet, pr: PrecoderSet) -> np.ndarray:
    common, private = _gains(ch, pr)
    return common / (private.sum(axis=1) + ch.noise_vars)


def private_sinrs(ch: ChannelSet, pr: PrecoderSet) -> np.ndarray:
    _, private = _gains(ch, pr)
    own = np.diag(private)
    return own / (private.sum(axis=1) - own + ch.noise_vars)


def common_sinr(ch: ChannelSet, pr: PrecoderSet, k: int) -> float:
    if not 0 <= k < ch.num_users:
        raise IndexError(f"user index {k} out of range")
    return float(common_sinrs(ch, pr)[k])


def private_sinr(ch: ChannelSet, pr: PrecoderSet, k: int) -> float:
    if not 0 <= k < ch.num_users:
        raise IndexError(f"user index {k} out of range")
    return float(private_sinrs(ch, pr)[k])


def allocate(per_user_common_rates, private_rates, shares, clamped=()) -> RateAllocation:
    """Assemble a RateAllocation, checking the shares against every user's
    common-stream decoding bound."""
    per_user = np.asarray(per_user_common_rates, dtype=float)
    private = np.asarray(private_rates, dtype=float)
    shares = np.asarray(shares, dtype=float)
    if shares.shape != private.shape:
        raise ValueError(f"expected {private.shape[0]} common shares, got {shares.shape}")
    if np.any(shares < 0):
        bad = int(np.argmin(shares))
        raise AllocationError(f"common share of user {bad} is negative", user=bad)
    common_rate = float(per_user.min())
    total = float(np.sum(shares))
    if total > common_rate + SHARE_SLACK:
        bad = int(np.argmin(per_user))
        raise AllocationError(
            f"common shares sum to {total:.6g} but user {bad} can only decode "
            f"{common_rate:.6g} bits/s/Hz", user=bad)
    return RateAllocation(shares, private, common_rate, clamped=tuple(clamped))


def shannon_rates(ch: ChannelSet, pr: PrecoderSet, shares) -> RateAllocation:
    common = np.log2(1.0 + common_sinrs(ch, pr))
    private = np.log2(1.0 + private_sinrs(ch, pr))
    return allocate(common, private, shares)


def sdma_config(pr: PrecoderSet) -> PrecoderSet:
    """Same private precoders, common stream switched off."""
    return replace(pr, common=np.zeros_like(pr.common))


def noma_order(ch: ChannelSet) -> tuple[int, int]:
    """(strong, weak) user indices for two-user NOMA.

    The user with the larger channel norm (normalized by noise) decodes the
    other user's message first; ties go to the lower index.
    """
    if ch.num_users != 2:
        raise ValueError("NOMA ordering is defined for two users only")
    norms = np.sum(np.abs(ch.csit_channels) ** 2, axis=1) / ch.noise_vars
    strong = 0 if norms[0] >= norms[1] else 1
    return strong, 1 - strong
