"""End-to-end latent codec: side information, step-wise coding of y, rate accounting."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import ggm
from .bitstream import BACKEND_CODES, BACKEND_NAMES, Bitstream
from .context import (AnalyticEngine, ChannelStats, ContextConfig, ContextEngine, HpcmNetworks,
                      HyperpriorOnlyEngine, NeuralEngine)
from .errors import ConfigError, CorruptBitstreamError, IncompatibleStreamError, ShapeError
from .rangecoder import RangeDecoder, RangeEncoder
from .schedule import (ALLOCATION_CODES, SUPPORTED_ALLOCATIONS, CodingSchedule, ScheduleError,
                       build_schedule, check_allocation)
from .transforms import INT16_MAX, INT16_MIN, HyperPath, ToyTransforms, TransformConfig, quantize_latent
from .weights import WeightStore

BACKEND_ALIASES = {
    "hyper": "hyperprior_only",
    "hyperprior": "hyperprior_only",
    "hyperprior-only": "hyperprior_only",
    "analytic": "analytic_linear",
}


def resolve_backend(name: str) -> str:
    name = BACKEND_ALIASES.get(name, name)
    if name not in BACKEND_CODES:
        raise ConfigError(f"unknown backend {name!r}; expected one of {sorted(BACKEND_CODES)}")
    return name


@dataclass(frozen=True)
class CodecConfig:
    seed: int = 0
    allocation: tuple[int, int, int] = (2, 3, 6)
    backend: str = "analytic_linear"
    context: ContextConfig = ContextConfig()

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed {self.seed} outside u64")
        try:
            object.__setattr__(self, "allocation", check_allocation(self.allocation))
        except ScheduleError as exc:
            raise ConfigError(str(exc)) from exc
        object.__setattr__(self, "backend", resolve_backend(self.backend))


@dataclass
class StepTrace:
    step: int
    scale: int
    sites: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    bits: np.ndarray  # ideal code length of each site under its quantized table


@dataclass
class SessionTrace:
    steps: list[StepTrace] = field(default_factory=list)
    z_bits_ideal: float = 0.0
    # wall time: parameter inference (networks or predictor, plus tables) vs range coding
    seconds_context: float = 0.0
    seconds_coder: float = 0.0


@dataclass(frozen=True)
class RateReport:
    bits_z: int
    bits_y: int
    bits_per_step: tuple[float, ...]
    cross_entropy_estimate_bits: float
    site_bits: np.ndarray
    num_symbols: int
    bpp: float | None = None
    distortion_mse: float | None = None

    @property
    def bits_per_symbol(self) -> float:
        return self.bits_y / self.num_symbols

    def as_dict(self) -> dict:
        out = {
            "bits_z": self.bits_z,
            "bits_y": self.bits_y,
            "bits_per_step": list(self.bits_per_step),
            "cross_entropy_estimate_bits": self.cross_entropy_estimate_bits,
            "num_symbols": self.num_symbols,
            "bits_per_symbol": self.bits_per_symbol,
        }
        if self.bpp is not None:
            out["bpp"] = self.bpp
        if self.distortion_mse is not None:
            out["distortion_mse"] = self.distortion_mse
        return out


def rate_report(stream: Bitstream, trace: SessionTrace, image_pixels: int | None = None,
                distortion_mse: float | None = None) -> RateReport:
    site_bits = np.zeros(stream.dims)
    per_step = []
    for st in trace.steps:
        if len(st.sites):
            site_bits[tuple(st.sites.T)] = st.bits
        per_step.append(float(st.bits.sum()))
    bits_z, bits_y = 8 * len(stream.z_segment), 8 * len(stream.y_segment)
    bpp = (bits_z + bits_y) / image_pixels if image_pixels else None
    return RateReport(bits_z, bits_y, tuple(per_step), float(sum(per_step)), site_bits,
                      int(np.prod(stream.dims)), bpp, distortion_mse)


# -- shared plumbing ----------------------------------------------------------


def _check_latent(y) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 3:
        raise ShapeError(f"latent must be (C, H, W), got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ConfigError("latent values must be integers")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < INT16_MIN or arr.max() > INT16_MAX):
        raise ConfigError("latent values exceed the 16-bit signed range")
    return arr


def _schedule(dims, config: CodecConfig) -> CodingSchedule:
    try:
        return build_schedule(dims, config.allocation)
    except ScheduleError as exc:
        raise ConfigError(str(exc)) from exc


def _table_bits(tables: np.ndarray, idx: np.ndarray) -> np.ndarray:
    rows = np.arange(len(idx))
    freq = tables[rows, idx + 1] - tables[rows, idx]
    bits = -np.log2(freq / ggm.TOTAL_FREQ)
    return bits + np.where(idx == ggm.ESCAPE_INDEX, ggm.ESCAPE_BITS, 0)


def _sign_extend16(v: int) -> int:
    return v - (1 << 16) if v & 0x8000 else v


def _z_tables(store: WeightStore, channels: int) -> list[list[int]]:
    alphas = ggm.zprior_alpha(store, channels)
    return ggm.symbol_tables(np.zeros(channels), alphas).tolist()


def _encode_z(z: np.ndarray, store: WeightStore) -> tuple[bytes, float]:
    tables = _z_tables(store, z.shape[0])
    enc = RangeEncoder()
    bits = 0.0
    idx = ggm.symbol_index(z)
    for c in range(z.shape[0]):
        table = tables[c]
        for s, v in zip(idx[c].reshape(-1).tolist(), z[c].reshape(-1).tolist()):
            enc.encode_symbol(s, table)
            bits -= math.log2((table[s + 1] - table[s]) / ggm.TOTAL_FREQ)
            if s == ggm.ESCAPE_INDEX:
                enc.encode_bits(v & 0xFFFF, ggm.ESCAPE_BITS)
                bits += ggm.ESCAPE_BITS
    return enc.finalize(), bits


def _decode_z(data: bytes, store: WeightStore, shape) -> np.ndarray:
    tables = _z_tables(store, shape[0])
    dec = RangeDecoder(data)
    out = np.zeros(shape, dtype=np.int64)
    flat = out.reshape(shape[0], -1)
    for c in range(shape[0]):
        table = tables[c]
        for j in range(flat.shape[1]):
            s = dec.decode_symbol(table)
            if s == ggm.ESCAPE_INDEX:
                flat[c, j] = _sign_extend16(dec.decode_bits(ggm.ESCAPE_BITS))
            else:
                flat[c, j] = s - ggm.ALPHABET_BOUND
    dec.finish()
    return out


def _hyper(config: CodecConfig, latent_ch: int, store: WeightStore | None):
    if store is None:
        store = WeightStore.from_seed(config.seed)
    return store, HyperPath(store, latent_ch, config.context.hyper_dim)


def _make_engine(schedule: CodingSchedule, config: CodecConfig, stats=None, hyper_feat=None,
                 store=None) -> ContextEngine:
    if config.backend == "hyperprior_only":
        return HyperpriorOnlyEngine(schedule, stats)
    if config.backend == "analytic_linear":
        return AnalyticEngine(schedule, stats, config.context.neighbours, config.context.search_radius)
    nets = HpcmNetworks(store, schedule.dims[0], schedule.allocation, config.context)
    return NeuralEngine(schedule, nets, hyper_feat)


# -- public API ---------------------------------------------------------------


def encoder_engine(y_hat, config: CodecConfig = CodecConfig(),
                   store: WeightStore | None = None) -> tuple[ContextEngine, bytes, float]:
    """Side information for ``y_hat`` and a fresh context engine conditioned on it.

    Returns ``(engine, z_segment, z_bits_ideal)``.  The engine is what the
    decoder rebuilds from the z segment alone.
    """
    y = _check_latent(y_hat)
    schedule = _schedule(y.shape, config)
    if config.backend == "neural":
        store, hyper = _hyper(config, y.shape[0], store)
        z = hyper.analyse(y, schedule.padded_dims[1:])
        z_segment, z_bits = _encode_z(z, store)
        return _make_engine(schedule, config, None, hyper.synthesise(z), store), z_segment, z_bits
    stats = ChannelStats.measure(y)
    z_segment = stats.to_bytes()
    return _make_engine(schedule, config, stats), z_segment, 8.0 * len(z_segment)


def encode_session(y_hat, config: CodecConfig = CodecConfig(),
                   store: WeightStore | None = None) -> tuple[Bitstream, SessionTrace]:
    """Encode ``y_hat`` and return the stream plus the per-step parameter trace.

    ``store`` overrides the seed-derived weights of the neural backend.
    """
    y = _check_latent(y_hat)
    schedule = _schedule(y.shape, config)
    trace = SessionTrace()
    engine, z_segment, trace.z_bits_ideal = encoder_engine(y, config, store)

    enc = RangeEncoder()
    for step in range(1, schedule.num_steps + 1):
        t0 = time.perf_counter()
        params = engine.params(step, y)
        sites = schedule.step_sites(step)
        values = y[tuple(sites.T)]
        tables = ggm.symbol_tables(params.mu, params.alpha)
        idx = ggm.symbol_index(values)
        t1 = time.perf_counter()
        for s, v, table in zip(idx.tolist(), values.tolist(), tables.tolist()):
            enc.encode_symbol(s, table)
            if s == ggm.ESCAPE_INDEX:
                enc.encode_bits(v & 0xFFFF, ggm.ESCAPE_BITS)
        trace.seconds_context += t1 - t0
        trace.seconds_coder += time.perf_counter() - t1
        trace.steps.append(StepTrace(step, int(schedule.scale_of(step)), sites, params.mu, params.alpha,
                                     _table_bits(tables, idx)))
    stream = Bitstream(y.shape, config.seed, ALLOCATION_CODES[config.allocation],
                       BACKEND_CODES[config.backend], z_segment, enc.finalize())
    return stream, trace


def encode_latents(y_hat, config: CodecConfig = CodecConfig(), store: WeightStore | None = None) -> Bitstream:
    return encode_session(y_hat, config, store)[0]


def check_compatible(stream: Bitstream, config: CodecConfig) -> None:
    mismatches = []
    if stream.seed != config.seed:
        mismatches.append(f"seed {stream.seed} != {config.seed}")
    if stream.backend_code != BACKEND_CODES[config.backend]:
        mismatches.append(f"backend {BACKEND_NAMES[stream.backend_code]} != {config.backend}")
    if stream.allocation_code >= len(SUPPORTED_ALLOCATIONS):
        raise CorruptBitstreamError(f"unknown allocation code {stream.allocation_code}")
    if SUPPORTED_ALLOCATIONS[stream.allocation_code] != config.allocation:
        mismatches.append(f"allocation {SUPPORTED_ALLOCATIONS[stream.allocation_code]} != {config.allocation}")
    if mismatches:
        raise IncompatibleStreamError("stream does not match decoder config: " + "; ".join(mismatches))


def decode_session(stream, config: CodecConfig = CodecConfig(),
                   store: WeightStore | None = None) -> tuple[np.ndarray, SessionTrace]:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = Bitstream.from_bytes(bytes(stream))
    check_compatible(stream, config)
    try:
        schedule = build_schedule(stream.dims, config.allocation)
    except ScheduleError as exc:
        raise CorruptBitstreamError(f"header dims {stream.dims} invalid: {exc}") from exc
    c = stream.dims[0]
    trace = SessionTrace()
    stats = hyper_feat = None
    if config.backend == "neural":
        store, hyper = _hyper(config, c, store)
        _, hp, wp = schedule.padded_dims
        z = _decode_z(stream.z_segment, store, (config.context.hyper_dim, hp // 4, wp // 4))
        hyper_feat = hyper.synthesise(z)
    else:
        stats = ChannelStats.from_bytes(stream.z_segment, c)
    engine = _make_engine(schedule, config, stats, hyper_feat, store)

    recon = np.zeros(stream.dims, dtype=np.int64)
    dec = RangeDecoder(stream.y_segment)
    for step in range(1, schedule.num_steps + 1):
        params = engine.params(step, recon)
        sites = schedule.step_sites(step)
        tables = ggm.symbol_tables(params.mu, params.alpha)
        idx = np.empty(len(sites), dtype=np.int64)
        values = np.empty(len(sites), dtype=np.int64)
        for j, table in enumerate(tables.tolist()):
            s = dec.decode_symbol(table)
            idx[j] = s
            values[j] = (_sign_extend16(dec.decode_bits(ggm.ESCAPE_BITS)) if s == ggm.ESCAPE_INDEX
                         else s - ggm.ALPHABET_BOUND)
        recon[tuple(sites.T)] = values
        trace.steps.append(StepTrace(step, int(schedule.scale_of(step)), sites, params.mu, params.alpha,
                                     _table_bits(tables, idx)))
    dec.finish()
    return recon, trace


def decode_latents(stream, config: CodecConfig = CodecConfig(), store: WeightStore | None = None) -> np.ndarray:
    return decode_session(stream, config, store)[0]


def config_from_stream(stream: Bitstream, context: ContextConfig = ContextConfig()) -> CodecConfig:
    """Decoder config that echoes the header (for inspection tools)."""
    if stream.allocation_code >= len(SUPPORTED_ALLOCATIONS):
        raise CorruptBitstreamError(f"unknown allocation code {stream.allocation_code}")
    return CodecConfig(stream.seed, SUPPORTED_ALLOCATIONS[stream.allocation_code], stream.backend, context)


def toy_transform_roundtrip(image, config: CodecConfig = CodecConfig(),
                            transform: TransformConfig | None = None):
    """Analysis, quantization, coding and synthesis of one image tensor.

    Returns ``(y_hat, reconstruction, RateReport)``; the report carries bpp
    and mean squared error.
    """
    image = np.asarray(image, dtype=np.float64)
    transform = transform or TransformConfig(image_ch=image.shape[0])
    nets = ToyTransforms(WeightStore.from_seed(config.seed), transform)
    y_hat = quantize_latent(nets.analysis(image))
    stream, trace = encode_session(y_hat, config)
    decoded = decode_latents(stream, config)
    if not np.array_equal(decoded, y_hat):
        raise CorruptBitstreamError("toy round-trip lost information")
    recon = nets.synthesis(decoded)
    mse = float(np.mean((recon - image) ** 2))
    report = rate_report(stream, trace, image.shape[1] * image.shape[2], mse)
    return y_hat, recon, report
