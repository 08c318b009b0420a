"""Finite-blocklength (normal approximation) achievable rates."""

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .mathfn import q_inv
from .txmodel import PrecoderSet, RateAllocation, allocate, common_sinrs, private_sinrs

LOG2E = math.log2(math.e)


@dataclass(frozen=True)
class FblConfig:
    """Blocklengths in channel uses and the per-stream target BLER."""

    common_blocklength: int
    private_blocklengths: tuple
    target_bler: float

    def __post_init__(self):
        private = tuple(np.atleast_1d(self.private_blocklengths).tolist())
        for n in (self.common_blocklength,) + private:
            if int(n) != n or n < 1:
                raise ValueError(f"blocklengths must be positive integers, got {n}")
        object.__setattr__(self, "common_blocklength", int(self.common_blocklength))
        object.__setattr__(self, "private_blocklengths", tuple(int(n) for n in private))
        if not 0.0 < self.target_bler < 0.5:
            raise ValueError(f"target BLER must lie in (0, 1/2), got {self.target_bler}")

    @classmethod
    def uniform(cls, blocklength: int, num_users: int, target_bler: float) -> "FblConfig":
        return cls(int(blocklength), (int(blocklength),) * num_users, target_bler)

    @property
    def q_inv(self) -> float:
        return q_inv(self.target_bler)

    def penalty_scale(self, blocklength: int) -> float:
        """Q^{-1}(xi)/sqrt(N): multiplies sqrt(V) in the rate penalty."""
        return self.q_inv / math.sqrt(blocklength)


def dispersion(gamma):
    """Channel dispersion (log2 e)^2 [1 - (1+gamma)^-2] in bits^2."""
    g = np.asarray(gamma, dtype=float)
    if np.any(~(g >= 0)):
        raise ValueError("dispersion: SINR must be non-negative")
    v = LOG2E**2 * -np.expm1(-2.0 * np.log1p(g))
    return float(v) if np.ndim(v) == 0 else v


def fbl_rate_unclamped(gamma, n, xi):
    g = np.asarray(gamma, dtype=float)
    value = np.log2(1.0 + g) - np.sqrt(dispersion(g) / n) * q_inv(xi)
    return float(value) if np.ndim(value) == 0 else value


def fbl_rate(gamma, n, xi):
    """Normal-approximation rate floored at zero.

    A negative raw value means the stream cannot meet the target BLER at
    this blocklength; check ``fbl_feasible`` for the flag.
    """
    if not n >= 1:
        raise ValueError(f"blocklength must be >= 1, got {n}")
    if not 0.0 < xi < 1.0:
        raise ValueError(f"target BLER must lie in (0, 1), got {xi}")
    value = np.maximum(fbl_rate_unclamped(gamma, n, xi), 0.0)
    return float(value) if np.ndim(value) == 0 else value


def fbl_feasible(gamma, n, xi) -> bool:
    return bool(np.all(np.asarray(fbl_rate_unclamped(gamma, n, xi)) > 0))


def fbl_allocation(ch: ChannelSet, pr: PrecoderSet, cfg: FblConfig, shares) -> RateAllocation:
    if len(cfg.private_blocklengths) != ch.num_users:
        raise ValueError("one private blocklength per user is required")
    xi = cfg.target_bler
    raw_common = fbl_rate_unclamped(common_sinrs(ch, pr), cfg.common_blocklength, xi)
    raw_private = np.array([
        fbl_rate_unclamped(g, n, xi)
        for g, n in zip(private_sinrs(ch, pr), cfg.private_blocklengths)
    ])
    clamped = []
    if np.any(raw_common <= 0) and np.linalg.norm(pr.common) > 0:
        clamped.append("c")
    clamped += [k for k in range(ch.num_users)
                if raw_private[k] <= 0 and np.linalg.norm(pr.privates[k]) > 0]
    return allocate(np.maximum(raw_common, 0.0), np.maximum(raw_private, 0.0), shares, clamped)
