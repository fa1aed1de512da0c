import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hpcm import ggm, oracle
from hpcm.errors import ConfigError
from hpcm.weights import WeightStore


def test_cdf_matches_quadrature_on_random_points():
    rng = np.random.default_rng(11)
    for _ in range(25):
        mu, alpha = rng.uniform(-5, 5), math.exp(rng.uniform(-2, 3))
        x = mu + rng.normal() * 3 * alpha
        assert abs(ggm.ggm_cdf(x, mu, alpha) - oracle.ggm_quadrature_cdf(x, mu, alpha)) < 1e-9


def test_cdf_is_half_at_mean():
    for mu, alpha in [(0.0, 1.0), (3.25, 0.01), (-7.5, 200.0)]:
        assert abs(ggm.ggm_cdf(mu, mu, alpha) - 0.5) < 1e-12


def test_incomplete_gamma_against_reference():
    xs = np.concatenate([np.linspace(0, 2, 60), np.linspace(2, 60, 120)])
    for a in (2 / 3, 0.5):
        p, q = ggm.regularized_gamma(a, xs)
        ref = np.array([oracle.regularized_gamma_reference(a, x) for x in xs])
        np.testing.assert_allclose(p, ref, atol=1e-14)
        np.testing.assert_allclose(p + q, 1.0, atol=1e-15)


def test_incomplete_gamma_does_not_depend_on_batch():
    xs = np.random.default_rng(0).exponential(5.0, 3000)
    p_full, _ = ggm.regularized_gamma(2 / 3, xs)
    p_part, _ = ggm.regularized_gamma(2 / 3, xs[1::3])
    np.testing.assert_array_equal(p_full[1::3], p_part)


def test_pmf_matches_quadrature_pmf():
    pmf = ggm.discretize_pmf(0.3, 1.7, bound=10)
    ref = oracle.ggm_quadrature_pmf(0.3, 1.7, 10)
    np.testing.assert_allclose(pmf, ref, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(-70, 70), st.floats(1e-3, 1e3))
def test_pmf_sums_to_one(mu, alpha):
    assert abs(ggm.discretize_pmf(mu, alpha).sum() - 1.0) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.floats(-80, 80), st.floats(1e-3, 1e3))
def test_tables_are_valid(mu, alpha):
    table = ggm.symbol_tables(mu, alpha)
    assert table[0] == 0 and table[-1] == ggm.TOTAL_FREQ
    assert np.all(np.diff(table) >= 1)
    assert len(table) == ggm.NUM_SYMBOLS + 1


def test_quantization_ties_go_to_lower_index():
    cum = ggm.quantize_cdf(np.full(3, 1 / 3)).cum_freq
    assert np.diff(cum).tolist() == [21846, 21845, 21845]


def test_quantized_table_costs_little():
    pmf = ggm.discretize_pmf(0.0, 2.0)
    table = ggm.quantize_cdf(pmf / pmf.sum())
    # one-unit floor on 130 symbols takes ~0.2% of the mass
    assert oracle.kl_bits(pmf, table.probabilities()) < 5e-3


def test_alpha_clamped():
    params = ggm.GgmParams(np.zeros(2), np.array([1e-9, 1e9]))
    np.testing.assert_array_equal(params.alpha, [ggm.ALPHA_MIN, ggm.ALPHA_MAX])


def test_non_finite_and_bad_shape_rejected():
    with pytest.raises(ValueError):
        ggm.ggm_cdf(float("nan"), 0.0, 1.0)
    with pytest.raises(ValueError):
        ggm.ggm_cdf(0.0, 0.0, -1.0)
    with pytest.raises(ConfigError):
        ggm.ggm_cdf(0.0, 0.0, 1.0, beta=1.0)


def test_gaussian_debug_shape_matches_erf():
    for x in (-2.0, -0.3, 0.0, 1.1, 4.0):
        sigma = 1.3
        expected = oracle.gaussian_cdf(x, 0.5, sigma)
        assert abs(ggm.ggm_cdf(x, 0.5, sigma * math.sqrt(2), beta=2.0) - expected) < 1e-13


def test_escape_index_for_out_of_range():
    idx = ggm.symbol_index(np.array([-65, -64, 0, 64, 65, 30000]))
    assert idx.tolist() == [ggm.ESCAPE_INDEX, 0, 64, 128, ggm.ESCAPE_INDEX, ggm.ESCAPE_INDEX]


def test_factorized_prior_is_symmetric():
    table = ggm.factorized_prior_cdf(3, WeightStore.from_seed(1), 8)
    freq = table.freq[:-1]
    # remainder ties go to the lower index, so symmetry holds to one unit
    assert np.abs(freq - freq[::-1]).max() <= 1


def test_golden_grid(testdata):
    with open(testdata / "ggm_golden.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 100
    for row in rows:
        assert abs(ggm.ggm_cdf(float(row["x"]), float(row["mu"]), float(row["alpha"])) - float(row["cdf"])) < 1e-8


def test_cdf_is_antisymmetric_about_mean():
    rng = np.random.default_rng(5)
    mu, alpha, t = rng.uniform(-5, 5, 200), rng.uniform(0.1, 20, 200), rng.uniform(0, 30, 200)
    total = ggm.ggm_cdf(mu + t, mu, alpha) + ggm.ggm_cdf(mu - t, mu, alpha)
    np.testing.assert_allclose(total, 1.0, atol=1e-12)


def test_wide_distribution_is_nearly_flat():
    pmf = ggm.discretize_pmf(0.0, 500.0, bound=32)
    inner = pmf[1:-1]  # the end symbols carry the folded tails
    assert inner.argmax() == 31
    assert inner.max() / inner.min() < 1.02


def test_pmf_off_centre_against_quadrature():
    np.testing.assert_allclose(ggm.discretize_pmf(0.3, 0.7, bound=32),
                               oracle.ggm_quadrature_pmf(0.3, 0.7, 32), atol=1e-7)


@pytest.mark.parametrize("pmf,expected", [([0.25] * 4, [16384] * 4), ([0.5, 0.5], [32768] * 2)])
def test_quantize_even_splits(pmf, expected):
    np.testing.assert_array_equal(ggm.quantize_cdf(pmf).freq, expected)


def test_quantized_random_pmf_has_small_divergence():
    p = np.random.default_rng(8).dirichlet(np.ones(65))
    assert oracle.kl_bits(p, ggm.quantize_cdf(p).probabilities()) < 1e-3


def test_factorized_prior_properties():
    store = WeightStore(seed=3)
    first = ggm.factorized_prior_cdf(4, store, 32)
    np.testing.assert_array_equal(first.cum_freq, ggm.factorized_prior_cdf(4, store, 32).cum_freq)
    wider = ggm.factorized_prior_cdf(4, store, 32, alpha_scale=2.0)
    assert wider.entropy_bits() > first.entropy_bits()
    p = first.probabilities()
    assert math.isclose(first.entropy_bits(), -sum(x * math.log2(x) for x in p), rel_tol=1e-12)
