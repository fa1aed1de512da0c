import numpy as np
import pytest

from hpcm.errors import WeightError
from hpcm.weights import WeightStore


def test_seeded_draws_are_reproducible_and_name_keyed():
    a, b = WeightStore.from_seed(5), WeightStore.from_seed(5)
    w1 = a.require("layer.w", (4, 3))
    np.testing.assert_array_equal(w1, b.require("layer.w", (4, 3)))
    assert not np.array_equal(w1, a.require("other.w", (4, 3)))
    assert not np.array_equal(w1, WeightStore.from_seed(6).require("layer.w", (4, 3)))


def test_values_are_float32_exact():
    w = WeightStore.from_seed(1).require("x", (10,))
    np.testing.assert_array_equal(w, w.astype(np.float32).astype(np.float64))


def test_save_load_roundtrip(tmp_path):
    store = WeightStore.from_seed(9)
    store.require("a.w", (2, 3))
    store.require("b.b", (4,), init="const", value=0.5)
    path = tmp_path / "w.bin"
    store.save(path)
    loaded = WeightStore.load(path)
    for name in ("a.w", "b.b"):
        np.testing.assert_array_equal(loaded.require(name, store.entries[name].shape), store.entries[name])


def test_loaded_store_is_closed(tmp_path):
    store = WeightStore.from_seed(9)
    store.require("a.w", (2, 3))
    path = tmp_path / "w.bin"
    store.save(path)
    loaded = WeightStore.load(path)
    with pytest.raises(WeightError):
        loaded.require("missing", (1,))
    with pytest.raises(WeightError):
        loaded.require("a.w", (3, 2))


def test_truncated_file_rejected():
    store = WeightStore.from_seed(2)
    store.require("a", (5,))
    with pytest.raises(WeightError):
        WeightStore.from_bytes(store.to_bytes()[:-3])
