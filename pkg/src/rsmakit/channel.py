"""Channel realizations for the downlink: fixed two-user test channels and
time-correlated Rayleigh fading with an outdated transmitter-side copy."""

import math
from dataclasses import dataclass, field

import numpy as np

from .mathfn import bessel_j0

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelSet:
    """Per-user channels at the transmit instant plus the CSIT copy.

    ``true_channels[k]`` is h_k[m], ``csit_channels[k]`` is h_k[m-1]; both are
    stored as (K, n_t) complex arrays. The received sample of user k is
    ``true_channels[k].conj() @ x``.
    """

    true_channels: np.ndarray
    csit_channels: np.ndarray
    noise_vars: np.ndarray = field(default=None)

    def __post_init__(self):
        true = np.atleast_2d(np.asarray(self.true_channels, dtype=complex))
        csit = np.atleast_2d(np.asarray(self.csit_channels, dtype=complex))
        if true.shape != csit.shape:
            raise ValueError(f"true/csit channel shapes differ: {true.shape} vs {csit.shape}")
        if true.shape[0] < 1 or true.shape[1] < 1:
            raise ValueError("need at least one user and one antenna")
        noise = self.noise_vars
        noise = np.ones(true.shape[0]) if noise is None else np.asarray(noise, dtype=float)
        if noise.shape != (true.shape[0],) or np.any(~(noise > 0)):
            raise ValueError("noise_vars must be K strictly positive values")
        object.__setattr__(self, "true_channels", true)
        object.__setattr__(self, "csit_channels", csit)
        object.__setattr__(self, "noise_vars", noise)

    @property
    def num_users(self) -> int:
        return self.true_channels.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.true_channels.shape[1]

    @classmethod
    def perfect(cls, channels, noise_vars=None) -> "ChannelSet":
        channels = np.atleast_2d(np.asarray(channels, dtype=complex))
        return cls(channels, channels.copy(), noise_vars)


@dataclass(frozen=True)
class MobilityParams:
    """Link parameters of the mobility scenario; speed in m/s, SI units."""

    n_t: int
    K: int
    P: float
    v: float
    f_c: float = 3.5e9
    T: float = 10e-3

    def __post_init__(self):
        if not (int(self.K) == self.K and self.K >= 1):
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if not (int(self.n_t) == self.n_t and self.n_t >= self.K):
            raise ValueError(f"n_t must be an integer >= K, got n_t={self.n_t}, K={self.K}")
        if not self.P > 0:
            raise ValueError(f"P must be positive, got {self.P}")
        if not self.v >= 0:
            raise ValueError(f"v must be non-negative, got {self.v}")
        if not (self.f_c > 0 and self.T > 0):
            raise ValueError("f_c and T must be positive")

    @property
    def doppler(self) -> float:
        return self.v * self.f_c / SPEED_OF_LIGHT


def kmh_to_ms(speed_kmh: float) -> float:
    return speed_kmh / 3.6


def make_angle_channels(theta: float) -> ChannelSet:
    """Two users, four antennas: h1 = [1,1,1,1]^H, h2 = [1, e^{j theta}, ...]^H.

    The ^H makes the stored column vectors the conjugates of the listed rows.
    Perfect CSIT and unit noise.
    """
    if not 0.0 <= theta <= math.pi / 2:
        raise ValueError(f"theta must lie in [0, pi/2], got {theta}")
    n = np.arange(4)
    h1 = np.ones(4, dtype=complex)
    h2 = np.conj(np.exp(1j * theta * n))
    return ChannelSet.perfect(np.stack([h1, h2]))


def time_correlation(params: MobilityParams) -> float:
    """Jakes correlation between CSIT-time and transmit-time channels."""
    if params.v == 0:
        return 1.0
    return bessel_j0(2.0 * math.pi * params.doppler * params.T)


def philox_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (64-bit seed, 64-bit stream index)."""
    seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
    index = int(index) & 0xFFFF_FFFF_FFFF_FFFF
    return np.random.Generator(np.random.Philox(key=(seed << 64) | index))


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples by Box-Muller on the generator's uniforms."""
    shape = tuple(np.atleast_1d(shape))
    count = int(np.prod(shape))
    u = rng.random(2 * count)
    radius = np.sqrt(-np.log1p(-u[0::2]))
    phase = 2.0 * np.pi * u[1::2]
    return (radius * np.exp(1j * phase)).reshape(shape)


def correlate(csit: np.ndarray, innovation: np.ndarray, epsilon: float) -> np.ndarray:
    """h[m] = eps * h[m-1] + sqrt(1 - eps^2) * e[m]."""
    return math.sqrt(epsilon**2) * csit + math.sqrt(max(0.0, 1.0 - epsilon**2)) * innovation


def draw_correlated_pair(params: MobilityParams, rng: np.random.Generator,
                         epsilon: float | None = None) -> ChannelSet:
    if epsilon is None:
        epsilon = time_correlation(params)
    csit = complex_gaussian(rng, (params.K, params.n_t))
    innovation = complex_gaussian(rng, (params.K, params.n_t))
    return ChannelSet(correlate(csit, innovation, epsilon), csit)
