"""Step-wise context modelling: which (mu, alpha) each latent is coded with.

Three interchangeable backends share one interface (:class:`ContextEngine`):

* ``neural``: learned multi-scale context with attention fusion.  Two entropy
  parameter networks (one for S1+S2 steps, one for S3 steps) share their
  DepthConvBlocks across steps and differ per step only by a channel-wise
  scale-and-shift embedding.  After every step the accumulated context is
  fused with the new parameter state by windowed cross-attention, and at a
  scale boundary the context is spread onto the finer grid with hyperprior
  features filling the new sites.
* ``analytic_linear``: a linear-Gaussian predictor over already coded
  neighbours in the same channel, driven by per-channel statistics and a
  separable correlation coefficient carried as side information.
* ``hyperprior_only``: per-channel statistics only, no spatial context.

Every engine masks its input with the schedule before looking at it, so
parameters for step ``i`` cannot depend on sites coded at step ``i`` or later.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import ggm
from .errors import ConfigError, CorruptBitstreamError
from .nn import (conv1x1, depthwise_conv3x3, linear, matmul_ordered, relu, softmax_rows,
                 window_merge, window_partition)
from .schedule import GROUP_PHASES, NUM_GROUPS, CodingSchedule, ScaleId, to_scale_grid
from .weights import WeightStore

BACKENDS = ("hyperprior_only", "analytic_linear", "neural")

# DepthConvBlock counts (N1, N2) for the S1+S2 network and the S3 network.
DEPTH_PRESETS = {
    "base": ((2, 1), (3, 2)),
    "large": ((2, 2), (4, 3)),
}


@dataclass(frozen=True)
class ContextConfig:
    ctx_dim: int = 64
    width: int = 64
    key_dim: int = 32
    window: int = 4
    hyper_dim: int = 32
    depth: str = "base"
    neighbours: int = 12
    search_radius: int = 4

    def __post_init__(self):
        if self.depth not in DEPTH_PRESETS:
            raise ConfigError(f"unknown depth preset {self.depth!r}")
        if min(self.ctx_dim, self.width, self.key_dim, self.window, self.hyper_dim) < 1:
            raise ConfigError("network widths must be positive")


# -- neural building blocks ---------------------------------------------------


class DepthConvBlock:
    """conv1x1 (x2 expand) -> ReLU -> depthwise 3x3 -> ReLU -> conv1x1, plus skip."""

    def __init__(self, store: WeightStore, prefix: str, dim: int):
        hidden = 2 * dim
        self.prefix = prefix
        self.expand_w = store.require(f"{prefix}.expand.w", (hidden, dim), fan_in=dim)
        self.expand_b = store.require(f"{prefix}.expand.b", (hidden,), init="const")
        self.dw_k = store.require(f"{prefix}.dw.k", (hidden, 3, 3), fan_in=9)
        self.dw_b = store.require(f"{prefix}.dw.b", (hidden,), init="const")
        self.project_w = store.require(f"{prefix}.project.w", (dim, hidden), fan_in=hidden)
        self.project_b = store.require(f"{prefix}.project.b", (dim,), init="const")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        h = relu(conv1x1(x, self.expand_w, self.expand_b))
        h = relu(depthwise_conv3x3(h, self.dw_k, self.dw_b))
        return x + conv1x1(h, self.project_w, self.project_b)


class StepEmbedding:
    """Channel-wise scale and shift applied after the input projection, one per step."""

    def __init__(self, store: WeightStore, prefix: str, steps, dim: int):
        self.scale = {}
        self.shift = {}
        for s in steps:
            # perturbations around the identity modulation
            self.scale[s] = 1.0 + store.require(f"{prefix}.step{s}.scale", (dim,), fan_in=100)
            self.shift[s] = store.require(f"{prefix}.step{s}.shift", (dim,), fan_in=100)

    def __call__(self, x: np.ndarray, step: int) -> np.ndarray:
        if step not in self.scale:
            raise ConfigError(f"no embedding for step {step}")
        return x * self.scale[step][:, None, None] + self.shift[step][:, None, None]


class EntropyParamNet:
    """Input conv1x1, step embedding, N1 trunk blocks (-> psi), N2 head blocks, (mu, alpha) conv."""

    def __init__(self, store: WeightStore, name: str, in_ch: int, width: int, latent_ch: int,
                 n_trunk: int, n_head: int, steps):
        self.name = name
        self.latent_ch = latent_ch
        self.steps = tuple(steps)
        self.in_w = store.require(f"{name}.in.w", (width, in_ch), fan_in=in_ch)
        self.in_b = store.require(f"{name}.in.b", (width,), init="const")
        self.embedding = StepEmbedding(store, f"{name}.embed", self.steps, width)
        self.trunk = [DepthConvBlock(store, f"{name}.trunk{j}", width) for j in range(n_trunk)]
        self.head = [DepthConvBlock(store, f"{name}.head{j}", width) for j in range(n_head)]
        # small head init keeps untrained outputs near mu=0, alpha=4
        self.out_w = store.require(f"{name}.out.w", (2 * latent_ch, width), fan_in=256 * width)
        self.out_b = np.concatenate([
            store.require(f"{name}.out.b_mu", (latent_ch,), init="const"),
            store.require(f"{name}.out.b_alpha", (latent_ch,), init="const", value=math.log(4.0)),
        ])

    @property
    def blocks(self) -> list[DepthConvBlock]:
        return self.trunk + self.head

    def __call__(self, x: np.ndarray, step: int):
        h = conv1x1(x, self.in_w, self.in_b)
        h = self.embedding(h, step)
        for blk in self.trunk:
            h = blk(h)
        psi = h
        for blk in self.head:
            h = blk(h)
        out = conv1x1(h, self.out_w, self.out_b)
        mu = out[:self.latent_ch]
        alpha = alpha_activation(out[self.latent_ch:])
        return psi, mu, alpha


def alpha_activation(raw: np.ndarray) -> np.ndarray:
    return np.exp(np.clip(raw, math.log(ggm.ALPHA_MIN), math.log(ggm.ALPHA_MAX)))


class ProgressiveFusion:
    """Windowed cross-attention: queries from psi, keys/values from the context."""

    def __init__(self, store: WeightStore, name: str, psi_dim: int, ctx_dim: int, key_dim: int, window: int):
        self.window = window
        self.key_dim = key_dim
        self.q_w = store.require(f"{name}.q.w", (key_dim, psi_dim), fan_in=psi_dim)
        self.q_b = store.require(f"{name}.q.b", (key_dim,), init="const")
        self.k_w = store.require(f"{name}.k.w", (key_dim, ctx_dim), fan_in=ctx_dim)
        self.k_b = store.require(f"{name}.k.b", (key_dim,), init="const")
        # damped value/residual init keeps the context from growing step over step
        self.v_w = store.require(f"{name}.v.w", (ctx_dim, ctx_dim), fan_in=4 * ctx_dim)
        self.v_b = store.require(f"{name}.v.b", (ctx_dim,), init="const")
        self.r_w = store.require(f"{name}.r.w", (ctx_dim, psi_dim), fan_in=16 * psi_dim)
        self.r_b = store.require(f"{name}.r.b", (ctx_dim,), init="const")

    def __call__(self, ctx: np.ndarray, psi: np.ndarray, return_attention: bool = False):
        if ctx.shape[1:] != psi.shape[1:]:
            raise ConfigError(f"context {ctx.shape} and psi {psi.shape} grids differ")
        win = self.window
        ctx_tok, shape = window_partition(ctx, win)
        psi_tok, _ = window_partition(psi, win)
        valid, _ = window_partition(np.ones((1,) + ctx.shape[1:]), win)
        n_win, t, _ = ctx_tok.shape

        q = linear(psi_tok.reshape(n_win * t, -1), self.q_w, self.q_b).reshape(n_win, t, -1)
        k = linear(ctx_tok.reshape(n_win * t, -1), self.k_w, self.k_b).reshape(n_win, t, -1)
        v = linear(ctx_tok.reshape(n_win * t, -1), self.v_w, self.v_b).reshape(n_win, t, -1)
        r = linear(psi_tok.reshape(n_win * t, -1), self.r_w, self.r_b).reshape(n_win, t, -1)

        logits = matmul_ordered(q, k.transpose(0, 2, 1)) / math.sqrt(self.key_dim)
        # zero-padded sites never act as keys
        logits = np.where(valid[:, None, :, 0] > 0, logits, -np.inf)
        attn = softmax_rows(logits)
        fused = matmul_ordered(attn, v) + r
        out = window_merge(fused, shape, win)
        if return_attention:
            return out, attn
        return out


class HpcmNetworks:
    """All parameters of the neural context model for one latent channel count."""

    def __init__(self, store: WeightStore, latent_ch: int, allocation, config: ContextConfig = ContextConfig()):
        self.config = config
        self.latent_ch = latent_ch
        n1, n2, n3 = allocation
        (a1, a2), (b1, b2) = DEPTH_PRESETS[config.depth]
        in_ch = 2 * latent_ch + config.ctx_dim
        self.ctx_proj_w = store.require("ctx_proj.w", (config.ctx_dim, config.hyper_dim), fan_in=config.hyper_dim)
        self.ctx_proj_b = store.require("ctx_proj.b", (config.ctx_dim,), init="const")
        self.gep_s12 = EntropyParamNet(store, "gep_s12", in_ch, config.width, latent_ch, a1, a2,
                                       range(1, n1 + n2 + 1))
        self.gep_s3 = EntropyParamNet(store, "gep_s3", in_ch, config.width, latent_ch, b1, b2,
                                      range(n1 + n2 + 1, n1 + n2 + n3 + 1))
        self.pcf_s12 = ProgressiveFusion(store, "pcf_s12", config.width, config.ctx_dim, config.key_dim, config.window)
        self.pcf_s3 = ProgressiveFusion(store, "pcf_s3", config.width, config.ctx_dim, config.key_dim, config.window)

    @property
    def entropy_networks(self) -> tuple[EntropyParamNet, EntropyParamNet]:
        return (self.gep_s12, self.gep_s3)

    def network_for(self, scale: ScaleId) -> EntropyParamNet:
        return self.gep_s3 if scale is ScaleId.S3 else self.gep_s12

    def fusion_for(self, scale: ScaleId) -> ProgressiveFusion:
        return self.pcf_s3 if scale is ScaleId.S3 else self.pcf_s12

    def project_hyper(self, hyper: np.ndarray) -> np.ndarray:
        return conv1x1(hyper, self.ctx_proj_w, self.ctx_proj_b)


def init_context(projected_hyper: np.ndarray) -> np.ndarray:
    """Context for the first step: the projected hyperprior sampled every 4th site."""
    return projected_hyper[:, ::4, ::4].copy()


def cross_scale_fuse(ctx: np.ndarray, projected_hyper: np.ndarray, target: ScaleId) -> np.ndarray:
    """Place the coarser-scale context on its sub-lattice of the ``target`` grid.

    Sites of the target grid that the coarser context does not cover take the
    projected hyperprior features.
    """
    if target is ScaleId.S1:
        raise ConfigError("S1 has no coarser scale")
    t = target.spacing
    out = projected_hyper[:, ::t, ::t].copy()
    expected = out[:, ::2, ::2].shape
    if ctx.shape != expected:
        raise ConfigError(f"context {ctx.shape} does not fit lattice {expected}")
    out[:, ::2, ::2] = ctx
    return out


def select_params(mu_grid: np.ndarray, alpha_grid: np.ndarray, sites: np.ndarray,
                  scale: ScaleId, channels: int) -> ggm.GgmParams:
    """Gather per-site (mu, alpha) from scale-grid maps at full-resolution sites."""
    ch, rows, cols = sites.T if len(sites) else (np.zeros(0, int),) * 3
    per = channels // NUM_GROUPS
    offsets = np.array([GROUP_PHASES[g].offset(scale) for g in range(NUM_GROUPS)])
    off = offsets[ch // per]
    gi = (rows - off[:, 0]) // scale.spacing
    gj = (cols - off[:, 1]) // scale.spacing
    return ggm.GgmParams(mu_grid[ch, gi, gj], alpha_grid[ch, gi, gj])


# -- side information for the statistical backends ----------------------------


def _semivariogram(y: np.ndarray, lag: int) -> np.ndarray:
    """Per-channel half mean squared difference at ``lag``, pooled over both axes."""
    parts = []
    if y.shape[1] > lag:
        parts.append(((y[:, lag:, :] - y[:, :-lag, :]) ** 2).reshape(len(y), -1))
    if y.shape[2] > lag:
        parts.append(((y[:, :, lag:] - y[:, :, :-lag]) ** 2).reshape(len(y), -1))
    if not parts:
        return np.zeros(len(y))
    return 0.5 * np.concatenate(parts, axis=1).mean(axis=1)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel field statistics carried in fixed point as side information.

    ``mean`` and ``std`` are the plain sample moments.  ``sill`` (stored as its
    square root) and ``rho`` come from the lag-1 and lag-2 semivariograms with
    the 1/12 rounding noise removed; unlike the sample variance they are not
    biased by subtracting an estimated mean, which matters for strongly
    correlated channels.
    """

    mean_q: np.ndarray      # int32, Q16.16
    std_q: np.ndarray       # uint32, Q16.16
    sill_std_q: np.ndarray  # uint32, Q16.16
    rho_q: int              # uint16, rho = rho_q / 2**16

    RHO_MAX = 0.995
    ROUNDING_NOISE = 1.0 / 12.0
    _Q_MAX = float(2**32 - 1)

    @property
    def mean(self) -> np.ndarray:
        return self.mean_q.astype(np.float64) / 65536.0

    @property
    def std(self) -> np.ndarray:
        return self.std_q.astype(np.float64) / 65536.0

    @property
    def sill_std(self) -> np.ndarray:
        return self.sill_std_q.astype(np.float64) / 65536.0

    @property
    def rho(self) -> float:
        return self.rho_q / 65536.0

    @classmethod
    def measure(cls, latent: np.ndarray) -> "ChannelStats":
        y = np.asarray(latent, dtype=np.float64)
        mean = y.mean(axis=(1, 2))
        z = y - mean[:, None, None]
        std = np.sqrt((z * z).mean(axis=(1, 2)))
        g1 = np.maximum(_semivariogram(y, 1) - cls.ROUNDING_NOISE, 0.0)
        g2 = np.maximum(_semivariogram(y, 2) - cls.ROUNDING_NOISE, 0.0)
        rho = 0.0
        if g1.sum() > 0:
            # separable exponential model: g2 / g1 = 1 + rho
            rho = g2.sum() / g1.sum() - 1.0
        rho = min(max(rho, 0.0), cls.RHO_MAX)
        sill = g1 / (1.0 - rho)

        def q16(v):
            return np.clip(np.round(v * 65536), 0, cls._Q_MAX).astype(np.uint32)

        return cls(np.round(mean * 65536).astype(np.int32), q16(std), q16(np.sqrt(sill)),
                   int(round(rho * 65536)))

    def to_bytes(self) -> bytes:
        n = len(self.mean_q)
        return (struct.pack("<H", n) + self.mean_q.astype("<i4").tobytes()
                + self.std_q.astype("<u4").tobytes() + self.sill_std_q.astype("<u4").tobytes()
                + struct.pack("<H", self.rho_q))

    @classmethod
    def from_bytes(cls, data: bytes, channels: int) -> "ChannelStats":
        expected = 2 + 12 * channels + 2
        if len(data) != expected:
            raise CorruptBitstreamError(f"statistics segment has {len(data)} bytes, expected {expected}")
        (n,) = struct.unpack_from("<H", data, 0)
        if n != channels:
            raise CorruptBitstreamError(f"statistics for {n} channels, stream has {channels}")
        mean_q = np.frombuffer(data, "<i4", n, 2).astype(np.int32)
        std_q = np.frombuffer(data, "<u4", n, 2 + 4 * n).astype(np.uint32)
        sill_q = np.frombuffer(data, "<u4", n, 2 + 8 * n).astype(np.uint32)
        (rho_q,) = struct.unpack_from("<H", data, 2 + 12 * n)
        if rho_q > round(cls.RHO_MAX * 65536):
            raise CorruptBitstreamError(f"correlation field {rho_q} out of range")
        return cls(mean_q, std_q, sill_q, rho_q)

    @property
    def base_alpha(self) -> np.ndarray:
        return ggm.clamp_alpha(ggm.alpha_from_std(self.std))


# -- fixed-order small linear algebra for the analytic predictor --------------


def _cholesky_solve(mats: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a batch of SPD systems ``mats @ x = rhs`` in a fixed operation order."""
    m, n, _ = mats.shape
    low = np.zeros_like(mats)
    for j in range(n):
        s = mats[:, j, j].copy()
        for k in range(j):
            s -= low[:, j, k] * low[:, j, k]
        low[:, j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            s = mats[:, i, j].copy()
            for k in range(j):
                s -= low[:, i, k] * low[:, j, k]
            low[:, i, j] = s / low[:, j, j]
    y = np.zeros((m, n))
    for i in range(n):
        s = rhs[:, i].copy()
        for k in range(i):
            s -= low[:, i, k] * y[:, k]
        y[:, i] = s / low[:, i, i]
    x = np.zeros((m, n))
    for i in range(n - 1, -1, -1):
        s = y[:, i].copy()
        for k in range(i + 1, n):
            s -= low[:, k, i] * x[:, k]
        x[:, i] = s / low[:, i, i]
    return x


def neighbour_offsets(radius: int) -> np.ndarray:
    """Candidate offsets nearest first: Chebyshev distance, squared Euclidean, row, col."""
    offs = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1) if (dy, dx) != (0, 0)]
    offs.sort(key=lambda o: (max(abs(o[0]), abs(o[1])), o[0] ** 2 + o[1] ** 2, o[0], o[1]))
    return np.array(offs, dtype=np.int64)


def _powers(rho: float, n: int) -> np.ndarray:
    out = np.ones(n + 1)
    for i in range(1, n + 1):
        out[i] = out[i - 1] * rho
    return out


def _select_neighbours(step_map: np.ndarray, step: int, sites: np.ndarray, offsets: np.ndarray,
                       k: int) -> np.ndarray:
    _, h, w = step_map.shape
    c, r, col = sites.T
    flags = np.zeros((len(offsets), len(sites)), dtype=bool)
    for j, (dy, dx) in enumerate(offsets):
        rr, cc = r + dy, col + dx
        inside = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        coded = np.zeros(len(sites), dtype=bool)
        coded[inside] = step_map[c[inside], rr[inside], cc[inside]] < step
        flags[j] = coded
    return flags & (np.cumsum(flags, axis=0) <= k)


@dataclass(frozen=True)
class _PatternGroup:
    channel: np.ndarray     # (g,) channel of each (pattern, channel) group
    offset_idx: np.ndarray  # (g, size) indices into the offset list
    members: np.ndarray     # sites (indices into the step's site list) in these groups
    group_of: np.ndarray    # group index of each member


@dataclass(frozen=True)
class _NeighbourPlan:
    num_sites: int
    groups: tuple[_PatternGroup, ...]


@lru_cache(maxsize=1024)
def _neighbour_plan(schedule: CodingSchedule, step: int, k: int, radius: int) -> _NeighbourPlan:
    """Sites of one step grouped by (neighbour pattern, channel); depends on the schedule only."""
    offsets = neighbour_offsets(radius)
    sites = schedule.step_sites(step)
    if not len(sites):
        return _NeighbourPlan(0, ())
    chosen = _select_neighbours(schedule.step_map, step, sites, offsets, k)
    ch = sites[:, 0]
    keys = np.concatenate([np.packbits(chosen, axis=0).T, ch.astype("<u4")[:, None].view(np.uint8)], axis=1)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    counts = chosen.sum(axis=0)
    groups = []
    for size in np.unique(counts[first]):
        if size == 0:
            continue
        sel = np.nonzero(counts[first] == size)[0]
        reps = first[sel]
        offset_idx = np.stack([np.nonzero(chosen[:, s])[0] for s in reps])
        lookup = np.full(len(first), -1)
        lookup[sel] = np.arange(len(sel))
        members = np.nonzero(lookup[inverse] >= 0)[0]
        groups.append(_PatternGroup(ch[reps], offset_idx, members, lookup[inverse[members]]))
    return _NeighbourPlan(len(sites), tuple(groups))


# -- engines ------------------------------------------------------------------


class ContextEngine:
    """Produces per-step GGM parameters; one instance per encode or decode session."""

    backend = ""

    def __init__(self, schedule: CodingSchedule):
        self.schedule = schedule
        self._last_step = 0

    def _check_order(self, step: int) -> None:
        self.schedule.scale_of(step)
        if step != self._last_step + 1:
            raise ConfigError(f"steps must run in order; expected {self._last_step + 1}, got {step}")
        self._last_step = step

    def params(self, step: int, recon: np.ndarray) -> ggm.GgmParams:
        """Parameters for the sites of ``step``; ``recon`` is read only where coded."""
        raise NotImplementedError

    def _coded_view(self, step: int, recon: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mask = self.schedule.step_map < step
        return np.where(mask, recon, 0), mask


class HyperpriorOnlyEngine(ContextEngine):
    backend = "hyperprior_only"

    def __init__(self, schedule: CodingSchedule, stats: ChannelStats):
        super().__init__(schedule)
        self.stats = stats

    def params(self, step, recon=None):
        self._check_order(step)
        ch = self.schedule.step_sites(step)[:, 0]
        return ggm.GgmParams(self.stats.mean[ch], self.stats.base_alpha[ch])


class AnalyticEngine(ContextEngine):
    """Linear-Gaussian prediction from the nearest coded sites of the same channel.

    The field is modelled as stationary with separable correlation
    ``rho**|dy| * rho**|dx|``, per-channel mean and sill from the side
    information.  Neighbour values are rounded integers, which enters the
    covariance as a 1/12 nugget.  Mean and conditional std come from the
    simple-kriging solution; the std maps to the GGM scale.  A site without
    coded neighbours falls back to the channel mean and sample std.
    """

    backend = "analytic_linear"

    def __init__(self, schedule: CodingSchedule, stats: ChannelStats, neighbours: int = 12, radius: int = 4):
        super().__init__(schedule)
        self.stats = stats
        self.k = neighbours
        self.radius = radius
        self.offsets = neighbour_offsets(radius)
        self.rho_pow = _powers(stats.rho, 2 * radius + 1)
        var = self.stats.sill_std ** 2
        self.nugget = np.minimum((1.0 / 12.0) / np.maximum(var, 1e-12), 1e6)

    def select_neighbours(self, step: int, sites: np.ndarray) -> np.ndarray:
        """Boolean ``(num_offsets, n)``: offset j is one of the chosen neighbours of site n."""
        return _select_neighbours(self.schedule.step_map, step, sites, self.offsets, self.k)

    def predict(self, step: int, recon: np.ndarray, sites: np.ndarray | None = None):
        """Return ``(mu, std)`` for the sites of ``step`` given the coded part of ``recon``."""
        if sites is None:
            sites = self.schedule.step_sites(step)
        coded, _ = self._coded_view(step, recon)
        plan = _neighbour_plan(self.schedule, step, self.k, self.radius)
        if len(sites) != plan.num_sites or not np.array_equal(sites, self.schedule.step_sites(step)):
            raise ConfigError("analytic prediction is defined for whole steps only")
        ch = sites[:, 0]
        mean, sill_std = self.stats.mean[ch], self.stats.sill_std[ch]
        mu = mean.copy()
        sd = self.stats.std[ch].copy()  # empty-context fallback
        for group in plan.groups:
            size = group.offset_idx.shape[1]
            pos = self.offsets[group.offset_idx]  # (g, size, 2)
            dy = np.abs(pos[:, :, None, 0] - pos[:, None, :, 0])
            dx = np.abs(pos[:, :, None, 1] - pos[:, None, :, 1])
            cov = self.rho_pow[dy] * self.rho_pow[dx]
            cov = cov + np.eye(size)[None] * self.nugget[group.channel][:, None, None]
            target = self.rho_pow[np.abs(pos[:, :, 0])] * self.rho_pow[np.abs(pos[:, :, 1])]
            weights = _cholesky_solve(cov, target)
            explained = np.zeros(len(weights))
            for j in range(size):
                explained += weights[:, j] * target[:, j]
            members, g_of = group.members, group.group_of
            r_idx = sites[members, 1][:, None] + self.offsets[group.offset_idx[g_of], 0]
            c_idx = sites[members, 2][:, None] + self.offsets[group.offset_idx[g_of], 1]
            vals = coded[ch[members][:, None], r_idx, c_idx]
            acc = mean[members].copy()
            for j in range(size):
                acc += weights[g_of, j] * (vals[:, j] - mean[members])
            mu[members] = acc
            sd[members] = sill_std[members] * np.sqrt(np.maximum(1.0 - explained[g_of], 0.0))
        return mu, sd

    def params(self, step, recon):
        self._check_order(step)
        sites = self.schedule.step_sites(step)
        mu, sd = self.predict(step, recon, sites)
        return ggm.GgmParams(mu, ggm.alpha_from_std(sd))


class NeuralEngine(ContextEngine):
    backend = "neural"

    def __init__(self, schedule: CodingSchedule, nets: HpcmNetworks, hyper: np.ndarray):
        super().__init__(schedule)
        self.nets = nets
        c, hp, wp = schedule.padded_dims
        if hyper.shape[1:] != (hp, wp):
            raise ConfigError(f"hyper grid {hyper.shape[1:]} does not match padded latent grid {(hp, wp)}")
        self.projected = nets.project_hyper(hyper)
        self.ctx = init_context(self.projected)
        self.scale = ScaleId.S1
        self.psi = None
        self.attention = None

    def _scale_inputs(self, step: int, recon: np.ndarray, scale: ScaleId):
        c, hp, wp = self.schedule.padded_dims
        step_map = self.schedule.padded_step_map
        mask = (step_map < step) & (step_map > 0)
        full = np.zeros((c, hp, wp))
        h, w = self.schedule.dims[1:]
        full[:, :h, :w] = recon[:, :h, :w]
        full = np.where(mask, full, 0.0)
        return to_scale_grid(full, scale), to_scale_grid(mask.astype(np.float64), scale)

    def params(self, step, recon):
        self._check_order(step)
        scale = self.schedule.scale_of(step)
        if self.psi is not None:
            # fold the previous step's parameter state into the context
            self.ctx = self.nets.fusion_for(self.scale)(self.ctx, self.psi)
        if scale is not self.scale:
            self.ctx = cross_scale_fuse(self.ctx, self.projected, scale)
            self.scale = scale
        coded, mask = self._scale_inputs(step, recon, scale)
        net = self.nets.network_for(scale)
        psi, mu, alpha = net(np.concatenate([coded, mask, self.ctx]), step)
        self.psi = psi
        return select_params(mu, alpha, self.schedule.step_sites(step), scale, self.schedule.dims[0])


def analytic_predict(coded: np.ndarray, schedule: CodingSchedule, step: int, stats: ChannelStats,
                     neighbours: int = 12, radius: int = 4) -> ggm.GgmParams:
    """One-shot analytic prediction for ``step`` (no step-order bookkeeping)."""
    engine = AnalyticEngine(schedule, stats, neighbours, radius)
    sites = schedule.step_sites(step)
    mu, sd = engine.predict(step, coded, sites)
    return ggm.GgmParams(mu, ggm.alpha_from_std(sd))
