"""Reference MS-SSIM values for the C++ test pairs, computed with
tf.image.ssim_multiscale (11-pixel window, sigma 1.5, 3 scales).

    ./build/tests/make_msssim_pairs /tmp/pairs.bin
    python3 tests/fixtures/msssim_reference.py /tmp/pairs.bin > tests/fixtures/msssim_reference.tsv
"""
import sys

import numpy as np
import tensorflow as tf

# First three standard weights, renormalized to sum to 1.
WEIGHTS = np.array([0.0448, 0.2856, 0.3001])
WEIGHTS = WEIGHTS / WEIGHTS.sum()


def main(path):
    raw = np.fromfile(path, dtype="<f4").astype(np.float64)
    pairs = raw.reshape(-1, 2, 64, 64)
    a = tf.constant(pairs[:, 0, :, :, None])
    b = tf.constant(pairs[:, 1, :, :, None])
    values = tf.image.ssim_multiscale(
        a, b, max_val=1.0, power_factors=WEIGHTS.tolist(), filter_size=11, filter_sigma=1.5, k1=0.01, k2=0.03
    ).numpy()
    print("pair\tms_ssim")
    for i, v in enumerate(values):
        print(f"{i}\t{v:.17g}")


if __name__ == "__main__":
    main(sys.argv[1])
