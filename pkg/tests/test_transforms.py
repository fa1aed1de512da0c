import numpy as np

from hpcm.io import generate_latent
from hpcm.transforms import HyperPath, ToyTransforms, TransformConfig, quantize_latent
from hpcm.weights import WeightStore


def test_hyper_path_shapes():
    hyper = HyperPath(WeightStore.from_seed(0), 8, 4)
    y = generate_latent("ar1", (8, 6, 10), seed=0)
    z = hyper.analyse(y, (8, 12))
    assert z.shape == (4, 2, 3)
    assert np.array_equal(z, np.round(z))
    assert hyper.synthesise(z).shape == (4, 8, 12)


def test_toy_transform_strides():
    nets = ToyTransforms(WeightStore.from_seed(1), TransformConfig(width=8, latent_ch=8))
    image = np.random.default_rng(0).uniform(size=(3, 64, 32))
    latent = nets.analysis(image)
    assert latent.shape == (8, 4, 2)
    assert nets.synthesis(quantize_latent(latent)).shape == image.shape


def test_quantize_clips_to_int16():
    q = quantize_latent(np.array([[[1e9, -1e9, 2.5]]]))
    assert q.tolist() == [[[32767, -32768, 2]]]
