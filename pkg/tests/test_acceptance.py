"""Acceptance suite: one test per headline criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured value and
the tolerance it was judged against, then asserts the same verdict.
"""

import csv
import math
import time

import numpy as np
import pytest

from hpcm import ggm, nn, oracle
from hpcm.codec import CodecConfig, decode_session, encode_latents, encode_session
from hpcm.context import DEPTH_PRESETS, ContextConfig, HpcmNetworks
from hpcm.io import generate_latent
from hpcm.rangecoder import RangeDecoder, RangeEncoder
from hpcm.schedule import SUPPORTED_ALLOCATIONS, build_schedule
from hpcm.weights import WeightStore

from conftest import SMALL_NET
from helpers import causality_violations, relative_error, trace_mismatches

BACKENDS = ("hyperprior_only", "analytic_linear", "neural")


@pytest.fixture
def verdict(capsys):
    def emit(name: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, detail
    return emit


def test_lossless_roundtrip(verdict):
    rng = np.random.default_rng(2024)
    dims_pool = [(8, 4, 4), (8, 8, 8), (8, 5, 7), (16, 8, 8), (8, 12, 12), (8, 3, 9)]
    failures = 0
    start = time.perf_counter()
    for i in range(500):
        dims = dims_pool[rng.integers(len(dims_pool))]
        backend = BACKENDS[rng.integers(3)]
        allocation = SUPPORTED_ALLOCATIONS[rng.integers(4)]
        kind = ("uniform", "ar1", "zeros", "wide")[rng.integers(4)]
        y = (generate_latent("uniform", dims, i, low=-300, high=300) if kind == "wide"
             else generate_latent(kind, dims, i))
        config = CodecConfig(seed=i, allocation=allocation, backend=backend, context=SMALL_NET)
        stream, _ = encode_session(y, config)
        out, _ = decode_session(stream.to_bytes(), config)
        failures += not np.array_equal(out, y)
    elapsed = time.perf_counter() - start
    verdict("lossless round-trip", failures == 0 and elapsed < 60.0,
            f"{500 - failures}/500 sessions exact in {elapsed:.1f} s (need 0 failures, < 60 s)")


def _coded_bits(symbols, table):
    enc = RangeEncoder()
    for s in symbols:
        enc.encode_symbol(s, table)
    data = enc.finalize()
    dec = RangeDecoder(data)
    assert [dec.decode_symbol(table) for _ in symbols] == symbols
    dec.finish()
    return 8 * len(data)


@pytest.mark.parametrize("name,probs,entropy", [
    ("uniform-256", np.full(256, 1 / 256), 8.0),
    ("(1/2,1/4,1/4)", np.array([0.5, 0.25, 0.25]), 1.5),
])
def test_coder_near_optimal(verdict, name, probs, entropy):
    n = 100_000
    symbols = np.random.default_rng(7).choice(len(probs), size=n, p=probs).tolist()
    table = [0] + np.cumsum(np.round(probs * 65536).astype(int)).tolist()
    bits = _coded_bits(symbols, table)
    bound = entropy * n * 1.005 + 32
    verdict(f"coder near-optimality {name}", bits <= bound,
            f"{bits} bits vs bound {bound:.0f} (entropy {entropy} b/sym x 1e5, +0.5% +32 bits)")


def test_schedule_coverage(verdict):
    dims_list = [(8, 1, 1), (8, 8, 8), (8, 5, 7), (16, 30, 18), (16, 63, 61), (16, 64, 64)]
    problems = []
    for allocation in SUPPORTED_ALLOCATIONS:
        for dims in dims_list:
            schedule = build_schedule(dims, allocation)
            steps = [(int(schedule.scale_of(i)), map(tuple, schedule.step_sites(i)))
                     for i in range(1, schedule.num_steps + 1)]
            check = oracle.schedule_coverage_check(dims, allocation, steps)
            if not check.ok:
                problems.append(f"{allocation} {dims}: {check.message}")
    default_steps = build_schedule((16, 64, 64)).num_steps
    ok = not problems and default_steps == 11
    verdict("schedule coverage", ok,
            f"{4 * len(dims_list) - len(problems)}/{4 * len(dims_list)} (allocation, dims) covers exact, "
            f"default allocation has {default_steps} steps (need all exact, 11 steps)"
            + (f"; first problem {problems[0]}" if problems else ""))


def test_causality(verdict):
    rng = np.random.default_rng(11)
    violations = []
    for backend in BACKENDS:
        y = generate_latent("ar1", (8, 16, 16), seed=3)
        violations += causality_violations(y, CodecConfig(seed=3, backend=backend), rng)
    verdict("causality", not violations,
            f"{len(violations)} violations over 3 backends x 11 steps on (8,16,16) (need 0)"
            + (f": {violations[:3]}" if violations else ""))


def test_encoder_decoder_parameter_equality(verdict):
    rng = np.random.default_rng(5)
    dims_pool = [(8, 8, 8), (8, 5, 7), (16, 4, 8)]
    bad = []
    for backend in BACKENDS:
        for i in range(50):
            dims = dims_pool[rng.integers(len(dims_pool))]
            y = generate_latent(("ar1", "uniform")[i % 2], dims, seed=1000 + i)
            config = CodecConfig(seed=i, allocation=SUPPORTED_ALLOCATIONS[i % 4], backend=backend)
            stream, enc = encode_session(y, config)
            _, dec = decode_session(stream.to_bytes(), config)
            if trace_mismatches(enc, dec):
                bad.append((backend, i))
    verdict("encoder/decoder parameter equality", not bad,
            f"{150 - len(bad)}/150 sessions with bit-identical per-step (mu, alpha) (need 150)")


def test_ggm_numerics(verdict, testdata):
    with open(testdata / "ggm_golden.csv") as fh:
        rows = list(csv.DictReader(fh))
    golden_err = max(abs(ggm.ggm_cdf(float(r["x"]), float(r["mu"]), float(r["alpha"])) - float(r["cdf"]))
                     for r in rows)
    quad_err = max(abs(float(r["cdf"]) - oracle.ggm_quadrature_cdf(float(r["x"]), float(r["mu"]), float(r["alpha"])))
                   for r in rows[::10])
    rng = np.random.default_rng(0)
    mus = rng.uniform(-100, 100, 500)
    alphas = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), 500))
    mean_err = max(abs(ggm.ggm_cdf(m, m, a) - 0.5) for m, a in zip(mus, alphas))
    sum_err = float(np.abs(ggm.discretize_pmf(mus, alphas).sum(axis=-1) - 1.0).max())
    ok = len(rows) == 100 and golden_err < 1e-8 and quad_err < 1e-8 and mean_err < 1e-12 and sum_err < 1e-9
    verdict("GGM numerics", ok,
            f"golden grid ({len(rows)} pts) max err {golden_err:.1e} (< 1e-8), golden vs quadrature "
            f"{quad_err:.1e}, |F(mu)-0.5| {mean_err:.1e} (< 1e-12), |sum pmf - 1| {sum_err:.1e} (< 1e-9)")


@pytest.fixture(scope="module")
def ar1_benchmark():
    """Payload bits per symbol on rho=0.9 fields for both statistics backends and all allocations."""
    fields = [generate_latent("ar1", (32, 64, 64), seed=100 + f, rho=0.9) for f in range(3)]
    symbols = sum(y.size for y in fields)
    start = time.perf_counter()
    bits = {}
    for backend in ("hyperprior_only", "analytic_linear"):
        for allocation in SUPPORTED_ALLOCATIONS[:3]:
            if backend == "hyperprior_only" and allocation != (2, 3, 6):
                continue
            total = 0
            for y in fields:
                stream = encode_latents(y, CodecConfig(allocation=allocation, backend=backend))
                total += 8 * stream.payload_bytes
            bits[backend, allocation] = total / symbols
    return bits, time.perf_counter() - start


def test_context_gain_matches_oracle(verdict, ar1_benchmark):
    bits, codec_seconds = ar1_benchmark
    start = time.perf_counter()
    est = oracle.entropy_gap_ar1(0.9, build_schedule((32, 64, 64)).step_map, oracle.OracleConfig())
    elapsed = codec_seconds + time.perf_counter() - start
    hyper, analytic = bits["hyperprior_only", (2, 3, 6)], bits["analytic_linear", (2, 3, 6)]
    gap = hyper - analytic
    rel = abs(gap - est.bits_per_symbol) / est.bits_per_symbol
    ok = analytic < hyper and rel < 0.05 and est.samples >= 1_000_000 and elapsed < 300
    verdict("context gain vs oracle", ok,
            f"codec gap {gap:.3f} b/sym (hyper {hyper:.3f}, analytic {analytic:.3f}) vs oracle "
            f"{est.bits_per_symbol:.3f} +- {est.std_error:.3f} (n={est.samples}): rel diff {rel:.1%} "
            f"(< 5%), {elapsed:.0f} s (< 300 s)")


def test_allocation_ordering(verdict, ar1_benchmark):
    bits, _ = ar1_benchmark
    b12, b6, b3 = (bits["analytic_linear", a] for a in ((2, 3, 12), (2, 3, 6), (2, 3, 3)))
    verdict("allocation ordering", b12 <= b6 <= b3,
            f"(2,3,12) {b12:.4f} <= (2,3,6) {b6:.4f} <= (2,3,3) {b3:.4f} b/sym")


def test_network_equivalence(verdict):
    worst = {}

    def track(kind, actual, expected):
        worst[kind] = max(worst.get(kind, 0.0), relative_error(actual, expected))

    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(6, 5, 7))
        w, b = rng.normal(size=(4, 6)), rng.normal(size=4)
        track("conv1x1", nn.conv1x1(x, w, b), oracle.naive_conv1x1(x, w, b))
        k, kb = rng.normal(size=(6, 3, 3)), rng.normal(size=6)
        track("depthwise3x3", nn.depthwise_conv3x3(x, k, kb), oracle.naive_depthwise3x3(x, k, kb))
        tok, lw, lb = rng.normal(size=(9, 6)), rng.normal(size=(5, 6)), rng.normal(size=5)
        track("linear", nn.linear(tok, lw, lb), oracle.naive_linear(tok, lw, lb))
        logits = rng.normal(size=(4, 9)) * 5
        track("softmax", nn.softmax_rows(logits), np.array([oracle.naive_softmax(r) for r in logits]))
        track("relu", nn.relu(x), oracle.naive_relu(x))
        sw, sb = rng.normal(size=(3, 6, 4, 4)), rng.normal(size=3)
        track("strided conv", nn.conv2d_strided(x, sw, sb, 2, 1), oracle.naive_strided_conv(x, sw, sb, 2, 1))

        config = ContextConfig(ctx_dim=8, width=8, key_dim=4, hyper_dim=4, depth=("base", "large")[seed % 2])
        store = WeightStore.from_seed(seed)
        nets = HpcmNetworks(store, 8, (2, 3, 6), config)
        (t12, h12), (t3, h3) = DEPTH_PRESETS[config.depth]
        h, wd = (int(v) for v in rng.integers(2, 8, size=2))
        inp = rng.normal(size=(16 + config.ctx_dim, h, wd))
        for net, nt, nh, step in ((nets.gep_s12, t12, h12, 1 + seed % 5), (nets.gep_s3, t3, h3, 6 + seed % 6)):
            got = net(inp, step)
            ref = oracle.naive_entropy_params(store, net.name, inp, step, nt, nh)
            for part, a, r in zip(("psi", "mu", "alpha"), got, ref):
                track(f"{net.name} {part}", a, r)
        ctx, psi = rng.normal(size=(8, h, wd)), rng.normal(size=(8, h, wd))
        for name, fusion in (("pcf_s12", nets.pcf_s12), ("pcf_s3", nets.pcf_s3)):
            track(name, fusion(ctx, psi), oracle.naive_window_attention(store, name, ctx, psi, 4, 4))
    kind, err = max(worst.items(), key=lambda kv: kv[1])
    verdict("network equivalence", err < 1e-6,
            f"worst relative error {err:.1e} ({kind}) over {len(worst)} layers/stacks x 100 seeds (< 1e-6)")


def test_structural_fidelity(verdict):
    checks = {}
    for depth in ("base", "large"):
        store = WeightStore.from_seed(0)
        nets = HpcmNetworks(store, 16, (2, 3, 6), ContextConfig(ctx_dim=8, width=8, key_dim=4, hyper_dim=4, depth=depth))
        gep_names = {n.split(".")[0] for n in store.entries if n.startswith("gep")}
        blocks = [n for n in store.entries if ".trunk" in n or ".head" in n]
        embeds = sorted({int(n.split(".step")[1].split(".")[0]) for n in store.entries if ".embed.step" in n})
        (t12, h12), (t3, h3) = DEPTH_PRESETS[depth]
        checks[depth] = (
            len(nets.entropy_networks) == 2 and gep_names == {"gep_s12", "gep_s3"}
            and not any("step" in n for n in blocks)
            and embeds == list(range(1, 12))
            and (len(nets.gep_s12.trunk), len(nets.gep_s12.head)) == (t12, h12)
            and (len(nets.gep_s3.trunk), len(nets.gep_s3.head)) == (t3, h3)
        )
        checks[depth + "_params"] = store.parameter_count("gep_")
    ok = (checks["base"] and checks["large"] and DEPTH_PRESETS["base"] == ((2, 1), (3, 2))
          and DEPTH_PRESETS["large"] == ((2, 2), (4, 3)) and checks["large_params"] > checks["base_params"])
    verdict("structural fidelity", ok,
            f"2 entropy networks, step-free shared blocks, embeddings for steps 1..11; base (2,1)/(3,2) "
            f"{checks['base_params']} params, large (2,2)/(4,3) {checks['large_params']} params")
