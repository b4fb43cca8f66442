"""Writes SSIM reference values computed with scikit-image.

Usage: python3 tools/ssim_reference.py > crates/core/tests/fixtures/ssim_pairs.txt

Each record is a header line `pair <w> <h> <c> <ssim>` followed by two lines
of hex-encoded u8 samples (row-major, interleaved channels) for the two
images. Samples are divided by 255 before comparison.
"""
import numpy as np
from scipy.ndimage import gaussian_filter
from skimage.metrics import structural_similarity

rng = np.random.default_rng(20240611)


def smooth(h, w, c, s):
    x = rng.random((h, w, c))
    x = np.stack([gaussian_filter(x[..., k], s) for k in range(c)], axis=-1)
    x -= x.min()
    return x / max(x.max(), 1e-12)


def quant(x):
    return np.clip(np.round(x * 255.0), 0, 255).astype(np.uint8)


def pairs():
    shapes = [(11, 11, 1), (12, 17, 3), (16, 16, 1), (20, 14, 3), (24, 24, 3),
              (32, 18, 1), (13, 29, 3), (40, 40, 3), (11, 30, 1), (27, 21, 3)]
    for i in range(20):
        h, w, c = shapes[i % len(shapes)]
        kind = i // len(shapes)
        a = smooth(h, w, c, 1.0 + (i % 3))
        if kind == 0:
            b = a + rng.normal(0, 0.05 + 0.03 * (i % 4), a.shape)
        else:
            b = 0.6 * a + 0.2 + 0.4 * smooth(h, w, c, 2.0) * (i % 2)
        if i == 3:
            b = rng.random(a.shape)
        if i == 7:
            b = a.copy()
        if i == 12:
            a = np.full(a.shape, 0.5)
        yield quant(a), quant(b)


for a, b in pairs():
    h, w, c = a.shape
    af = a.astype(np.float64) / 255.0
    bf = b.astype(np.float64) / 255.0
    s = structural_similarity(af, bf, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                              data_range=1.0, channel_axis=-1)
    print(f"pair {w} {h} {c} {float(s)!r}")
    print(a.tobytes().hex())
    print(b.tobytes().hex())
