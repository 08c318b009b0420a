"""Seeded Monte Carlo estimates of ergodic rates in the mobility scenario.

Draw i always uses the counter-based generator keyed by (base_seed, i),
so any two configurations with the same seed see the same channels
(common random numbers), and results do not depend on how draws are
spread over workers. Linear algebra runs in fixed-size blocks and the
final reduction is an exactly rounded sum.
"""

import enum
import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import MobilityParams, complex_gaussian, draw_correlated_pair, philox_rng, time_correlation
from .mobility import (
    RANK_TOL,
    DegenerateChannel,
    PowerSplit,
    build_mobility_precoders,
    instantaneous_rates,
    t_opt_closed_form,
    t_opt_exhaustive,
)

logger = logging.getLogger(__name__)

BLOCK_SIZE = 256
DEFAULT_DRAWS = 10_000


class Scheme(str, enum.Enum):
    RSMA_TOPT = "RSMA-topt"
    RSMA_GRID = "RSMA-grid"
    RSMA_FIXED_T = "RSMA-fixed-t"
    SDMA = "SDMA"


@dataclass(frozen=True)
class McConfig:
    num_draws: int = DEFAULT_DRAWS
    base_seed: int = 0
    scheme: Scheme = Scheme.RSMA_TOPT
    fixed_t: float | None = None  # only for RSMA-fixed-t
    granularity: float = 1e-3  # only for RSMA-grid

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (int(self.num_draws) == self.num_draws and self.num_draws >= 1):
            raise ValueError(f"num_draws must be a positive integer, got {self.num_draws}")
        if not 0 <= int(self.base_seed) < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")
        if self.scheme is Scheme.RSMA_FIXED_T:
            if self.fixed_t is None:
                raise ValueError("RSMA-fixed-t needs fixed_t")
            PowerSplit(self.fixed_t)


@dataclass(frozen=True)
class McEstimate:
    mean_sum_rate: float
    std_error: float
    per_stream_means: np.ndarray  # [common, private_1, ..., private_K]
    num_draws: int
    t: float
    # digest of every channel draw consumed, in draw order
    draw_checksum: str


def resolve_split(params: MobilityParams, cfg: McConfig) -> PowerSplit:
    if cfg.scheme is Scheme.RSMA_TOPT:
        return t_opt_closed_form(params)
    if cfg.scheme is Scheme.RSMA_GRID:
        return t_opt_exhaustive(params, cfg.granularity)
    if cfg.scheme is Scheme.RSMA_FIXED_T:
        return PowerSplit(cfg.fixed_t)
    return PowerSplit(1.0)


def _block(params: MobilityParams, split: PowerSplit, seed: int, epsilon: float, start: int, stop: int):
    """Per-draw stream rates (draws x (K+1)) and a digest of the channels."""
    true, csit, common_dirs = [], [], []
    for i in range(start, stop):
        rng = philox_rng(seed, i)
        ch = draw_correlated_pair(params, rng, epsilon)
        true.append(ch.true_channels)
        csit.append(ch.csit_channels)
        common_dirs.append(_common_direction(params, rng))
    true, csit, f_c = np.array(true), np.array(csit), np.array(common_dirs)
    digest = hashlib.sha256(true.tobytes() + csit.tobytes()).digest()

    design = csit.conj()
    sv = np.linalg.svd(design, compute_uv=False)
    if np.any(sv[:, -1] <= RANK_TOL * sv[:, 0]):
        raise DegenerateChannel("CSIT matrix is rank deficient in at least one draw")
    zf = np.linalg.pinv(design)
    zf = zf / np.linalg.norm(zf, axis=1, keepdims=True)
    received = true.conj()
    P, K, t = params.P, params.K, split.t
    private_gain = (P * t / K) * np.abs(received @ zf) ** 2
    common_gain = P * (1.0 - t) * np.abs(np.einsum("bkn,bn->bk", received, f_c)) ** 2
    total_private = private_gain.sum(axis=2)
    own = np.diagonal(private_gain, axis1=1, axis2=2)
    common_rate = np.log2(1.0 + np.min(common_gain / (1.0 + total_private), axis=1))
    private_rate = np.log2(1.0 + own / (1.0 + total_private - own))
    return np.column_stack([common_rate, private_rate]), digest


def _common_direction(params: MobilityParams, rng) -> np.ndarray:
    # same draw as build_mobility_precoders makes
    f_c = complex_gaussian(rng, params.n_t)
    return f_c / np.linalg.norm(f_c)


def estimate_ergodic_rate(params: MobilityParams, split: PowerSplit | None, cfg: McConfig,
                          workers: int = 1) -> McEstimate:
    """Mean sum rate and its standard error over cfg.num_draws draws.

    ``split=None`` takes the power split from the configured scheme.
    """
    if split is None:
        split = resolve_split(params, cfg)
    epsilon = time_correlation(params)
    n = int(cfg.num_draws)
    bounds = [(s, min(s + BLOCK_SIZE, n)) for s in range(0, n, BLOCK_SIZE)]

    def work(b):
        return _block(params, split, int(cfg.base_seed), epsilon, *b)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(work, bounds))
    else:
        blocks = [work(b) for b in bounds]
    rates = np.concatenate([b[0] for b in blocks])
    checksum = hashlib.sha256(b"".join(b[1] for b in blocks)).hexdigest()

    per_draw = rates.sum(axis=1)
    mean = math.fsum(per_draw) / n
    stream_means = np.array([math.fsum(col) / n for col in rates.T])
    if abs(math.fsum(stream_means) - mean) > 1e-9 * max(1.0, abs(mean)):
        raise ArithmeticError("stream means do not add up to the sum-rate mean")
    if n > 1:
        var = math.fsum((per_draw - mean) ** 2) / (n - 1)
        std_error = math.sqrt(var / n)
    else:
        std_error = 0.0
    return McEstimate(mean, std_error, stream_means, n, split.t, checksum)


@dataclass(frozen=True)
class SweepRow:
    scheme: Scheme
    speed_kmh: float
    snr_db: float
    params: MobilityParams
    estimate: McEstimate


def mobility_params(n_t: int, K: int, speed_kmh: float, snr_db: float,
                    f_c: float = 3.5e9, T: float = 10e-3) -> MobilityParams:
    """SNR is P/sigma^2 with unit noise, so P = 10^(SNR/10)."""
    return MobilityParams(n_t, K, 10.0 ** (snr_db / 10.0), speed_kmh / 3.6, f_c, T)


def sweep(n_t: int, K: int, speeds_kmh, snrs_db, schemes, cfg: McConfig,
          f_c: float = 3.5e9, T: float = 10e-3, workers: int = 1) -> list[SweepRow]:
    """One estimate per (speed, SNR, scheme) cell, all cells on the same seeds.

    Rows come back sorted by (speed, SNR, scheme name).
    """
    speeds, snrs, schemes = list(speeds_kmh), list(snrs_db), [Scheme(s) for s in schemes]
    if not (speeds and snrs and schemes):
        raise ValueError("sweep grid is empty")
    rows = []
    for v in speeds:
        for snr in snrs:
            params = mobility_params(n_t, K, v, snr, f_c, T)
            for scheme in schemes:
                cell_cfg = McConfig(cfg.num_draws, cfg.base_seed, scheme, cfg.fixed_t, cfg.granularity)
                est = estimate_ergodic_rate(params, None, cell_cfg, workers)
                logger.info("%s v=%g km/h snr=%g dB t=%.4f mean=%.4f", scheme.value, v, snr,
                            est.t, est.mean_sum_rate)
                rows.append(SweepRow(scheme, float(v), float(snr), params, est))
    rows.sort(key=lambda r: (r.speed_kmh, r.snr_db, r.scheme.value))
    return rows


def reference_estimate(params: MobilityParams, split: PowerSplit, cfg: McConfig) -> McEstimate:
    """Unbatched path through the per-draw API; slow, used to cross-check."""
    epsilon = time_correlation(params)
    rates = []
    for i in range(cfg.num_draws):
        rng = philox_rng(cfg.base_seed, i)
        ch = draw_correlated_pair(params, rng, epsilon)
        pr = build_mobility_precoders(ch, split, params, rng)
        alloc = instantaneous_rates(ch, pr, split)
        rates.append(np.concatenate([[alloc.common_rate], alloc.private_rates]))
    rates = np.array(rates)
    n = cfg.num_draws
    per_draw = rates.sum(axis=1)
    mean = math.fsum(per_draw) / n
    std_error = math.sqrt(math.fsum((per_draw - mean) ** 2) / (n - 1) / n) if n > 1 else 0.0
    return McEstimate(mean, std_error, np.array([math.fsum(c) / n for c in rates.T]), n, split.t, "")
