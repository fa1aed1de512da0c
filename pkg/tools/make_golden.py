"""Regenerate the golden files under testdata/.

GGM values come from the quadrature oracle; stream vectors come from the codec
itself and freeze the bitstream format against accidental change.
"""

import csv
import sys
from pathlib import Path

import numpy as np

from hpcm.codec import CodecConfig, encode_latents
from hpcm.io import generate_latent, write_latent
from hpcm.oracle import ggm_quadrature_cdf
from hpcm.rangecoder import RangeEncoder
from hpcm.schedule import build_schedule

ROOT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "testdata"

STREAM_CASES = [
    ("zeros_hyper", "zeros", (8, 8, 8), "hyperprior_only", (2, 3, 6)),
    ("ar1_analytic", "ar1", (8, 8, 8), "analytic_linear", (2, 3, 6)),
    ("ar1_analytic_4_3_6", "ar1", (16, 12, 12), "analytic_linear", (4, 3, 6)),
    ("uniform_neural", "uniform", (8, 8, 8), "neural", (2, 3, 6)),
]


def ggm_grid():
    rows = []
    for alpha in (0.05, 0.2, 0.5, 1.0, 1.7, 3.0, 6.0, 12.0, 40.0, 150.0):
        for k, t in enumerate((-6.0, -2.5, -1.0, -0.4, -0.05, 0.05, 0.4, 1.0, 2.5, 6.0)):
            mu = 0.37 * (k - 4)
            x = mu + t * alpha
            rows.append((x, mu, alpha, ggm_quadrature_cdf(x, mu, alpha, 1.5)))
    with open(ROOT / "ggm_golden.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "mu", "alpha", "cdf"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def main():
    ROOT.mkdir(parents=True, exist_ok=True)
    ggm_grid()
    (ROOT / "schedule_8x8x8_2-3-6.csv").write_text(build_schedule((8, 8, 8)).dump_csv())
    for name, kind, dims, backend, alloc in STREAM_CASES:
        y = generate_latent(kind, dims, seed=7)
        write_latent(ROOT / f"{name}.hpcl", y)
        stream = encode_latents(y, CodecConfig(seed=7, allocation=alloc, backend=backend))
        (ROOT / f"{name}.hpcm").write_bytes(stream.to_bytes())
    enc = RangeEncoder()
    for s in (0, 1, 2, 1, 0, 0, 2):
        enc.encode_symbol(s, [0, 32768, 49152, 65536])
    (ROOT / "rangecoder_vector.bin").write_bytes(enc.finalize())


if __name__ == "__main__":
    main()
