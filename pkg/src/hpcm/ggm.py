"""Generalized Gaussian entropy model with fixed shape 1.5.

Density: ``beta / (2 alpha Gamma(1/beta)) * exp(-(|x - mu| / alpha) ** beta)``.
The CDF reduces to the regularized lower incomplete gamma function
``P(1/beta, (|x - mu| / alpha) ** beta)``, evaluated here with a power series
below ``x = 1 + 1/beta`` and a Lentz continued fraction above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

BETA = 1.5
ALPHA_MIN = 1e-3
ALPHA_MAX = 1e3
ALPHABET_BOUND = 64
PRECISION_BITS = 16
TOTAL_FREQ = 1 << PRECISION_BITS
ESCAPE_BITS = 16
ESCAPE_INDEX = 2 * ALPHABET_BOUND + 1
NUM_SYMBOLS = 2 * ALPHABET_BOUND + 2  # [-L, L] plus escape

_FPMIN = 1e-300
# Q(a, x) < 1e-22 beyond this point for a in {1/2, 2/3}; P rounds to 1.0.
_SATURATION = 52.0


def _check_beta(beta: float) -> float:
    if beta not in (1.5, 2.0):
        raise ConfigError(f"beta must be 1.5 (or 2.0 in debug mode), got {beta}")
    return float(beta)


# Fixed term counts per argument band (upper edge, terms), measured to converge
# below 1e-14 relative for a in {1/2, 2/3} with a margin of four terms.  A fixed count per band
# makes each value a function of its own argument only, independent of the
# batch it is evaluated in, which keeps encoder and decoder tables identical.
_SERIES_BANDS = ((np.inf, 25),)
_FRACTION_BANDS = ((3.0, 57), (7.0, 33), (np.inf, 19))


def _gamma_series(a: float, xs: np.ndarray, terms: int) -> np.ndarray:
    term = np.full(xs.shape, 1.0 / a)
    total = term.copy()
    for n in range(1, terms):
        term *= xs / (a + n)
        total += term
    return total


def _gamma_fraction(a: float, xs: np.ndarray, terms: int) -> np.ndarray:
    # modified Lentz
    b = xs + 1.0 - a
    c = np.full(xs.shape, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    # for x >= a + 1 both recurrences stay positive (min ~0.019 and 4 over
    # x in [a+1, 52]), so the tiny-value guard reduces to a floor
    for i in range(1, terms):
        an = -i * (i - a)
        b += 2.0
        d = 1.0 / np.maximum(an * d + b, _FPMIN)
        c = np.maximum(b + an / c, _FPMIN)
        h *= d * c
    return h


def _by_band(xs: np.ndarray, bands, kernel, a: float) -> np.ndarray:
    out = np.empty_like(xs)
    band = np.searchsorted(np.array([edge for edge, _ in bands]), xs, side="right")
    for j in np.unique(band):
        sel = band == j
        out[sel] = kernel(a, xs[sel], bands[j][1])
    return out


def regularized_gamma(a: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(P(a, x), Q(a, x))`` for ``x >= 0`` and ``a`` in ``[1/2, 1]``."""
    if not 0.5 <= a <= 1.0:
        raise ConfigError(f"shape {a} outside the tabulated range [1/2, 1]")
    x = np.asarray(x, dtype=np.float64)
    p = np.zeros_like(x)
    q = np.ones_like(x)
    flat_x, flat_p, flat_q = x.reshape(-1), p.reshape(-1), q.reshape(-1)
    log_gamma_a = math.lgamma(a)

    sat = flat_x >= _SATURATION
    flat_p[sat], flat_q[sat] = 1.0, 0.0

    series = (flat_x > 0) & (flat_x < a + 1)
    if series.any():
        xs = flat_x[series]
        pv = _by_band(xs, _SERIES_BANDS, _gamma_series, a) * np.exp(-xs + a * np.log(xs) - log_gamma_a)
        flat_p[series] = pv
        flat_q[series] = 1.0 - pv

    frac = (flat_x >= a + 1) & ~sat
    if frac.any():
        xs = flat_x[frac]
        qv = np.exp(-xs + a * np.log(xs) - log_gamma_a) * _by_band(xs, _FRACTION_BANDS, _gamma_fraction, a)
        flat_q[frac] = qv
        flat_p[frac] = 1.0 - qv
    return p, q


def _tails(x, mu, alpha, beta):
    """Return ``(F(x), 1 - F(x))`` without cancellation in either tail."""
    t = (np.asarray(x, dtype=np.float64) - mu) / alpha
    _, q = regularized_gamma(1.0 / beta, np.abs(t) ** beta)
    half = 0.5 * q
    below = t < 0
    return np.where(below, half, 1.0 - half), np.where(below, 1.0 - half, half)


def ggm_cdf(x, mu, alpha, beta: float = BETA):
    """Generalized Gaussian CDF; scalar in, scalar out."""
    beta = _check_beta(beta)
    x, mu, alpha = (np.asarray(v, dtype=np.float64) for v in (x, mu, alpha))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(alpha))):
        raise ValueError("ggm_cdf: non-finite input")
    if np.any(alpha <= 0):
        raise ValueError("ggm_cdf: alpha must be positive")
    f, _ = _tails(x, mu, alpha, beta)
    return f[()] if f.ndim == 0 else f


def alpha_from_std(std, beta: float = BETA):
    """GGM scale that is the maximum-likelihood fit to a Gaussian of std ``std``."""
    beta = _check_beta(beta)
    factor = (beta * 2 ** (beta / 2) * math.gamma((beta + 1) / 2) / math.sqrt(math.pi)) ** (1 / beta)
    return np.asarray(std, dtype=np.float64) * factor


def clamp_alpha(alpha):
    return np.clip(np.asarray(alpha, dtype=np.float64), ALPHA_MIN, ALPHA_MAX)


@dataclass(frozen=True)
class GgmParams:
    mu: np.ndarray
    alpha: np.ndarray
    beta: float = BETA

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "alpha", clamp_alpha(self.alpha))
        _check_beta(self.beta)


def discretize_pmf(mu, alpha, bound: int = ALPHABET_BOUND, beta: float = BETA) -> np.ndarray:
    """Per-symbol probabilities over ``[-bound, bound]`` for each ``(mu, alpha)``.

    Returns shape ``(..., 2*bound + 1)``; the mass beyond the alphabet is folded
    into the two boundary symbols.
    """
    if bound < 1:
        raise ConfigError("alphabet bound must be >= 1")
    beta = _check_beta(beta)
    mu = np.asarray(mu, dtype=np.float64)[..., None]
    alpha = np.asarray(alpha, dtype=np.float64)[..., None]
    edges = np.arange(-bound, bound, dtype=np.float64) + 0.5
    lower, upper = _tails(edges, mu, alpha, beta)
    shape = lower.shape[:-1] + (1,)
    lo_cdf = np.concatenate([np.zeros(shape), lower], axis=-1)
    hi_cdf = np.concatenate([lower, np.ones(shape)], axis=-1)
    lo_sf = np.concatenate([np.ones(shape), upper], axis=-1)
    hi_sf = np.concatenate([upper, np.zeros(shape)], axis=-1)
    left_edge = np.concatenate([np.full(shape, -np.inf), np.broadcast_to(edges, lower.shape)], axis=-1)
    # above the mean the survival function is the accurate representation
    pmf = np.where(left_edge >= mu, lo_sf - hi_sf, hi_cdf - lo_cdf)
    return np.maximum(pmf, 0.0)


@dataclass(frozen=True)
class QuantizedCdf:
    cum_freq: np.ndarray  # length num_symbols + 1, cum_freq[0] == 0, cum_freq[-1] == 2**16

    @property
    def freq(self) -> np.ndarray:
        return np.diff(self.cum_freq)

    @property
    def num_symbols(self) -> int:
        return len(self.cum_freq) - 1

    def probabilities(self) -> np.ndarray:
        return self.freq / TOTAL_FREQ

    def entropy_bits(self) -> float:
        p = self.probabilities()
        return float(-(p * np.log2(p)).sum())


def quantize_cdf_batch(pmf) -> np.ndarray:
    """Cumulative 16-bit tables for a batch of pmfs, shape ``(..., K + 1)``.

    Every symbol gets one unit of mass up front; the remaining ``2**16 - K``
    units are split proportionally, flooring each share and handing the
    leftover units to the largest fractional remainders (ties to the lower
    symbol index).
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    k = pmf.shape[-1]
    if k > TOTAL_FREQ:
        raise ConfigError(f"alphabet of {k} symbols exceeds 2**{PRECISION_BITS}")
    if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
        raise ValueError("pmf entries must be finite and non-negative")
    pmf = pmf / pmf.sum(axis=-1, keepdims=True)
    spare = TOTAL_FREQ - k
    scaled = pmf * spare
    base = np.floor(scaled)
    remainder = scaled - base
    freq = base.astype(np.int64) + 1
    leftover = TOTAL_FREQ - freq.sum(axis=-1)
    order = np.argsort(-remainder, axis=-1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.broadcast_to(np.arange(k), order.shape), axis=-1)
    freq += rank < leftover[..., None]
    cum = np.zeros(pmf.shape[:-1] + (k + 1,), dtype=np.int64)
    np.cumsum(freq, axis=-1, out=cum[..., 1:])
    return cum


def quantize_cdf(pmf) -> QuantizedCdf:
    pmf = np.asarray(pmf, dtype=np.float64)
    if abs(pmf.sum() - 1.0) > 1e-6:
        raise ValueError(f"pmf sums to {pmf.sum()}, expected 1")
    return QuantizedCdf(quantize_cdf_batch(pmf))


def symbol_tables(mu, alpha, beta: float = BETA) -> np.ndarray:
    """Coder tables (alphabet plus escape) for arrays of GGM parameters."""
    mu, alpha = np.broadcast_arrays(np.asarray(mu, dtype=np.float64), clamp_alpha(alpha))
    # many sites share parameters (e.g. per-channel models); build each table once
    pairs = np.stack([mu.reshape(-1), alpha.reshape(-1)], axis=1)
    unique, inverse = np.unique(pairs, axis=0, return_inverse=True)
    pmf = discretize_pmf(unique[:, 0], unique[:, 1], ALPHABET_BOUND, beta)
    pmf = np.concatenate([pmf, np.zeros(pmf.shape[:-1] + (1,))], axis=-1)
    tables = quantize_cdf_batch(pmf)[inverse.reshape(-1)]
    return tables.reshape(mu.shape + (NUM_SYMBOLS + 1,))


def symbol_index(values: np.ndarray) -> np.ndarray:
    """Map integer latents to table indices; out-of-range values map to escape."""
    values = np.asarray(values, dtype=np.int64)
    idx = values + ALPHABET_BOUND
    return np.where(np.abs(values) <= ALPHABET_BOUND, idx, ESCAPE_INDEX)


def zprior_alpha(store, channels: int) -> np.ndarray:
    u = store.require("zprior.alpha_u", (channels,), init="uniform")
    return 1.0 + 7.0 * u


def factorized_prior_cdf(channel: int, store, channels: int, alpha_scale: float = 1.0) -> QuantizedCdf:
    """Zero-mean per-channel GGM table for the hyper latents."""
    if not 0 <= channel < channels:
        raise ConfigError(f"hyper channel {channel} outside 0..{channels - 1}")
    alpha = zprior_alpha(store, channels)[channel] * alpha_scale
    return QuantizedCdf(symbol_tables(np.float64(0.0), alpha))


def entropy_bits(pmf) -> float:
    p = np.asarray(pmf, dtype=np.float64)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())
