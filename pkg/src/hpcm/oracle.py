"""Brute-force reference implementations used by the tests.

Nothing in here imports the fast-path modules it is meant to check.  The
oracles are slow on purpose: plain loops, scipy quadrature and LAPACK
solves instead of the codec's vectorised, fixed-order arithmetic.  Weight
tensors are read straight out of a store's ``entries`` mapping by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg, signal, special, stats


@dataclass(frozen=True)
class OracleConfig:
    quad_tol: float = 1e-10
    mc_samples: int = 1_000_000
    seed: int = 20240601
    field_shape: tuple[int, int, int] = (32, 64, 64)


# -- generalized Gaussian by quadrature ---------------------------------------


def ggm_density(t: float, mu: float, alpha: float, beta: float) -> float:
    return beta / (2.0 * alpha * math.gamma(1.0 / beta)) * math.exp(-(abs(t - mu) / alpha) ** beta)


def ggm_quadrature_cdf(x: float, mu: float, alpha: float, beta: float = 1.5,
                       tol: float = OracleConfig.quad_tol) -> float:
    """CDF by adaptive quadrature of the density between ``mu`` and ``x``."""
    if x == mu:
        return 0.5
    lo, hi = sorted((mu, x))
    mass, _ = integrate.quad(ggm_density, lo, hi, args=(mu, alpha, beta), epsabs=tol * 1e-2,
                             epsrel=tol * 1e-2, limit=500)
    return 0.5 + mass if x > mu else 0.5 - mass


def ggm_quadrature_pmf(mu: float, alpha: float, bound: int, beta: float = 1.5) -> np.ndarray:
    """Per-symbol mass on [-bound, bound], tails folded into the end symbols."""
    pmf = []
    for k in range(-bound, bound + 1):
        lo = -math.inf if k == -bound else k - 0.5
        hi = math.inf if k == bound else k + 0.5
        f_lo = 0.0 if lo == -math.inf else ggm_quadrature_cdf(lo, mu, alpha, beta)
        f_hi = 1.0 if hi == math.inf else ggm_quadrature_cdf(hi, mu, alpha, beta)
        pmf.append(f_hi - f_lo)
    return np.array(pmf)


def gaussian_cdf(x: float, mu: float, sigma: float) -> float:
    return 0.5 * math.erfc(-(x - mu) / (sigma * math.sqrt(2.0)))


# -- naive layers -------------------------------------------------------------


def naive_conv1x1(x, w, b):
    c_in, h, wd = x.shape
    c_out = w.shape[0]
    out = np.zeros((c_out, h, wd))
    for o in range(c_out):
        for i in range(h):
            for j in range(wd):
                s = float(b[o])
                for k in range(c_in):
                    s += float(w[o, k]) * float(x[k, i, j])
                out[o, i, j] = s
    return out


def naive_depthwise3x3(x, kernels, bias=None):
    c, h, wd = x.shape
    out = np.zeros((c, h, wd))
    for ch in range(c):
        for i in range(h):
            for j in range(wd):
                s = 0.0 if bias is None else float(bias[ch])
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        ii, jj = i + di, j + dj
                        if 0 <= ii < h and 0 <= jj < wd:
                            s += float(kernels[ch, di + 1, dj + 1]) * float(x[ch, ii, jj])
                out[ch, i, j] = s
    return out


def naive_linear(tokens, w, b):
    n, d_in = tokens.shape
    out = np.zeros((n, w.shape[0]))
    for t in range(n):
        for o in range(w.shape[0]):
            out[t, o] = float(b[o]) + sum(float(w[o, k]) * float(tokens[t, k]) for k in range(d_in))
    return out


def naive_softmax(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def naive_relu(x):
    return np.where(x > 0, x, 0.0)


def naive_strided_conv(x, w, b, stride, padding):
    c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for i in range(ho):
            for j in range(wo):
                s = float(b[o])
                for ci in range(c_in):
                    for di in range(k):
                        for dj in range(k):
                            ii, jj = i * stride + di - padding, j * stride + dj - padding
                            if 0 <= ii < h and 0 <= jj < wd:
                                s += float(w[o, ci, di, dj]) * float(x[ci, ii, jj])
                out[o, i, j] = s
    return out


def _w(store, name):
    return np.asarray(store.entries[name], dtype=np.float64)


def naive_depthconv_block(store, prefix, x):
    h = naive_relu(naive_conv1x1(x, _w(store, f"{prefix}.expand.w"), _w(store, f"{prefix}.expand.b")))
    h = naive_relu(naive_depthwise3x3(h, _w(store, f"{prefix}.dw.k"), _w(store, f"{prefix}.dw.b")))
    return x + naive_conv1x1(h, _w(store, f"{prefix}.project.w"), _w(store, f"{prefix}.project.b"))


def naive_entropy_params(store, name, x, step, n_trunk, n_head):
    """Reference forward of one entropy-parameter network; returns (psi, mu, alpha)."""
    h = naive_conv1x1(x, _w(store, f"{name}.in.w"), _w(store, f"{name}.in.b"))
    scale = 1.0 + _w(store, f"{name}.embed.step{step}.scale")
    shift = _w(store, f"{name}.embed.step{step}.shift")
    for c in range(h.shape[0]):
        h[c] = h[c] * scale[c] + shift[c]
    for j in range(n_trunk):
        h = naive_depthconv_block(store, f"{name}.trunk{j}", h)
    psi = h.copy()
    for j in range(n_head):
        h = naive_depthconv_block(store, f"{name}.head{j}", h)
    bias = np.concatenate([_w(store, f"{name}.out.b_mu"), _w(store, f"{name}.out.b_alpha")])
    out = naive_conv1x1(h, _w(store, f"{name}.out.w"), bias)
    half = out.shape[0] // 2
    raw = np.minimum(np.maximum(out[half:], math.log(1e-3)), math.log(1e3))
    return psi, out[:half], np.exp(raw)


def naive_window_attention(store, name, ctx, psi, window, key_dim):
    """Reference windowed cross-attention; padded sites never serve as keys."""
    d_c, h, wd = ctx.shape
    out = np.zeros_like(ctx)
    q_w, q_b = _w(store, f"{name}.q.w"), _w(store, f"{name}.q.b")
    k_w, k_b = _w(store, f"{name}.k.w"), _w(store, f"{name}.k.b")
    v_w, v_b = _w(store, f"{name}.v.w"), _w(store, f"{name}.v.b")
    r_w, r_b = _w(store, f"{name}.r.w"), _w(store, f"{name}.r.b")
    for wi in range(0, h, window):
        for wj in range(0, wd, window):
            sites = [(i, j) for i in range(wi, min(wi + window, h)) for j in range(wj, min(wj + window, wd))]
            ctx_tok = np.array([ctx[:, i, j] for i, j in sites])
            psi_tok = np.array([psi[:, i, j] for i, j in sites])
            q = naive_linear(psi_tok, q_w, q_b)
            k = naive_linear(ctx_tok, k_w, k_b)
            v = naive_linear(ctx_tok, v_w, v_b)
            r = naive_linear(psi_tok, r_w, r_b)
            for a, (i, j) in enumerate(sites):
                logits = [sum(q[a, d] * k[b, d] for d in range(key_dim)) / math.sqrt(key_dim)
                          for b in range(len(sites))]
                att = naive_softmax(logits)
                for ch in range(d_c):
                    out[ch, i, j] = sum(att[b] * v[b, ch] for b in range(len(sites))) + r[a, ch]
    return out


def naive_network_forward(store, kind: str, *args, **kwargs):
    """Dispatch to a reference forward: ``"g_ep"``, ``"pcf"`` or ``"block"``."""
    table = {"g_ep": naive_entropy_params, "pcf": naive_window_attention, "block": naive_depthconv_block}
    return table[kind](store, *args, **kwargs)


# -- AR(1) fields and conditional entropy -------------------------------------


def ar1_field(rng: np.random.Generator, shape, rho: float) -> np.ndarray:
    """Stationary separable AR(1) field with unit innovations along each axis."""
    e = rng.standard_normal(shape)
    x = e.copy()
    x[:, 0, :] /= math.sqrt(1 - rho * rho)
    x = signal.lfilter([1.0], [1.0, -rho], x, axis=1)
    x[:, :, 0] /= math.sqrt(1 - rho * rho)
    return signal.lfilter([1.0], [1.0, -rho], x, axis=2)


def ar1_variance(rho: float) -> float:
    return 1.0 / (1.0 - rho * rho) ** 2


def _candidate_offsets(radius):
    cands = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)
             if dy or dx]
    return sorted(cands, key=lambda o: (max(abs(o[0]), abs(o[1])), o[0] ** 2 + o[1] ** 2, o[0], o[1]))


def _neighbour_sets(step_map, neighbours, radius):
    """For each site: offsets of the nearest ``neighbours`` sites coded strictly earlier."""
    c, h, w = step_map.shape
    offs = _candidate_offsets(radius)
    sets = {}
    for ch in range(c):
        for i in range(h):
            for j in range(w):
                step = step_map[ch, i, j]
                chosen = []
                for dy, dx in offs:
                    ii, jj = i + dy, j + dx
                    if 0 <= ii < h and 0 <= jj < w and step_map[ch, ii, jj] < step:
                        chosen.append((dy, dx))
                        if len(chosen) == neighbours:
                            break
                sets.setdefault(tuple(chosen), []).append((ch, i, j))
    return sets


@dataclass(frozen=True)
class EntropyEstimate:
    bits_per_symbol: float
    std_error: float
    samples: int
    per_channel: np.ndarray


def conditional_entropy_ar1(rho: float, context_kind: str = "causal-neighbors", step_map=None,
                            config: OracleConfig = OracleConfig(), quantizer: float = 1.0,
                            neighbours: int = 12, radius: int = 4) -> EntropyEstimate:
    """Monte Carlo code length of rounded AR(1) symbols under the true model.

    ``"none"``: each symbol coded with the exact quantized Gaussian marginal.
    ``"causal-neighbors"``: coded with the exact Gaussian conditional given the
    analytic predictor's neighbour set (nearest sites coded at earlier steps in
    ``step_map``).  Neighbours are themselves rounded, which enters the
    covariance as a ``quantizer**2 / 12`` nugget.  The standard error is taken
    across channels, which are independent.
    """
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    if context_kind not in ("none", "causal-neighbors"):
        raise ValueError(f"unknown context kind {context_kind!r}")
    if step_map is not None:
        step_map = np.asarray(step_map)
        shape = step_map.shape
    else:
        shape = tuple(config.field_shape)
    per_field = int(np.prod(shape))
    n_fields = max(1, -(-config.mc_samples // per_field))
    rng = np.random.default_rng(config.seed)
    var = ar1_variance(rho)
    sigma = math.sqrt(var)
    fields = [np.round(ar1_field(rng, shape, rho) / quantizer) for _ in range(n_fields)]

    def bits_for(values, mean, sd):
        lo = (values - 0.5) * quantizer
        hi = (values + 0.5) * quantizer
        below = stats.norm.cdf(hi, mean, sd) - stats.norm.cdf(lo, mean, sd)
        # upper-tail form where it is the more accurate one
        above = stats.norm.sf(lo, mean, sd) - stats.norm.sf(hi, mean, sd)
        p = np.where(lo > mean, above, below)
        return -np.log2(np.maximum(p, 1e-300))

    if context_kind == "none":
        channel_bits = [bits_for(y, 0.0, sigma).reshape(shape[0], -1).mean(axis=1) for y in fields]
    else:
        if step_map is None:
            raise ValueError("causal-neighbors needs a step map")
        nugget = quantizer * quantizer / 12.0
        per = shape[0] // 8
        plans = []
        for g in range(8):
            channels = np.arange(g * per, (g + 1) * per)
            for offsets, sites in _neighbour_sets(step_map[g * per:g * per + 1], neighbours, radius).items():
                _, ii, jj = np.array(sites).T
                if not offsets:
                    plans.append((channels, ii, jj, (), None, sigma))
                    continue
                pos = np.array(offsets)
                cov = var * rho ** np.abs(pos[:, None, 0] - pos[None, :, 0]) \
                    * rho ** np.abs(pos[:, None, 1] - pos[None, :, 1]) + nugget * np.eye(len(pos))
                cross = var * rho ** np.abs(pos[:, 0]) * rho ** np.abs(pos[:, 1])
                weights = linalg.solve(cov, cross, assume_a="pos")
                plans.append((channels, ii, jj, offsets, weights, math.sqrt(max(var - cross @ weights, 1e-300))))
        channel_bits = []
        for y in fields:
            site_bits = np.zeros(shape)
            for channels, ii, jj, offsets, weights, sd in plans:
                ch = channels[:, None]
                target = y[ch, ii[None], jj[None]]
                if not offsets:
                    site_bits[ch, ii[None], jj[None]] = bits_for(target, 0.0, sd)
                    continue
                vals = np.stack([y[ch, ii[None] + dy, jj[None] + dx] for dy, dx in offsets], axis=-1)
                site_bits[ch, ii[None], jj[None]] = bits_for(target, (vals * quantizer) @ weights, sd)
            channel_bits.append(site_bits.reshape(shape[0], -1).mean(axis=1))
    per_channel = np.concatenate(channel_bits)
    return EntropyEstimate(float(per_channel.mean()), float(per_channel.std(ddof=1) / math.sqrt(len(per_channel))),
                           n_fields * per_field, per_channel)


def entropy_gap_ar1(rho: float, step_map, config: OracleConfig = OracleConfig(), **kwargs) -> EntropyEstimate:
    """Paired estimate of ``H(none) - H(causal-neighbors)`` on the same fields."""
    none = conditional_entropy_ar1(rho, "none", step_map, config, **kwargs)
    ctx = conditional_entropy_ar1(rho, "causal-neighbors", step_map, config, **kwargs)
    diff = none.per_channel - ctx.per_channel
    return EntropyEstimate(float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(len(diff))), none.samples, diff)


# -- schedule coverage --------------------------------------------------------

# frozen per-group S1 phases, restated independently of the schedule module
_S1_PHASES = ((0, 0), (2, 2), (1, 1), (3, 3), (0, 2), (2, 0), (1, 3), (3, 1))
_SPACING = {1: 4, 2: 2, 3: 1}


@dataclass(frozen=True)
class CoverageVerdict:
    ok: bool
    message: str
    site: tuple[int, int, int] | None = None


def schedule_coverage_check(dims, allocation, steps) -> CoverageVerdict:
    """Exhaustive check of an explicit step list.

    ``steps`` is a sequence of ``(scale, sites)`` where ``sites`` is an iterable
    of ``(channel, row, col)``.  Verifies: every site of the ``C x H x W`` grid
    appears exactly once, sites lie on their group's lattice for the step's
    scale, scales never decrease, and the per-scale step counts equal
    ``allocation``.
    """
    c, h, w = dims
    per = c // 8
    seen: dict[tuple[int, int, int], int] = {}
    counts = {1: 0, 2: 0, 3: 0}
    last_scale = 0
    for number, (scale, sites) in enumerate(steps, start=1):
        scale = int(scale)
        if scale < last_scale:
            return CoverageVerdict(False, f"step {number} goes back from scale {last_scale} to {scale}")
        last_scale = scale
        counts[scale] += 1
        for site in sites:
            site = tuple(int(v) for v in site)
            ch, r, col = site
            if not (0 <= ch < c and 0 <= r < h and 0 <= col < w):
                return CoverageVerdict(False, f"site {site} outside the grid", site)
            if site in seen:
                return CoverageVerdict(False, f"site {site} coded at steps {seen[site]} and {number}", site)
            seen[site] = number
            pr, pc = _S1_PHASES[ch // per]
            sp = _SPACING[scale]
            if sp == 4 and (r % 4, col % 4) != (pr, pc):
                return CoverageVerdict(False, f"site {site} not on its S1 lattice", site)
            if sp == 2 and (r % 2, col % 2) != (pr % 2, pc % 2):
                return CoverageVerdict(False, f"site {site} not on its S2 lattice", site)
    if tuple(counts[s] for s in (1, 2, 3)) != tuple(allocation):
        return CoverageVerdict(False, f"per-scale step counts {counts} differ from {tuple(allocation)}")
    for ch in range(c):
        for r in range(h):
            for col in range(w):
                if (ch, r, col) not in seen:
                    return CoverageVerdict(False, f"site {(ch, r, col)} never coded", (ch, r, col))
    return CoverageVerdict(True, f"{len(seen)} sites covered exactly once")


def kl_bits(p, q) -> float:
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))


def regularized_gamma_reference(a: float, x: float) -> float:
    return float(special.gammainc(a, x))
