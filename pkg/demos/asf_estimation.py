"""Estimate an angular density from noisy uplink snapshots.

Draws a group-sparse density, forms the uplink covariance, simulates a
short snapshot record, and compares the NNLS and minimum-norm estimates
against the truth, both in density space and through the implied downlink
covariance.

Run: python3 demos/asf_estimation.py
"""

import numpy as np

from fddmimo.udct import estimate_l2, estimate_nnls, metric_nfd
from fddmimo.ula import (
    DL,
    UL,
    GroupSparseAsfSpec,
    UlaModel,
    sample_asf,
    sample_channels,
    sample_cov,
    synth_cov,
    toeplitzify,
)


def sparkline(weights, bins=32):
    blocks = " .:-=+*#%@"
    chunks = np.array_split(weights, bins)
    peaks = np.array([c.max() for c in chunks])
    top = peaks.max()
    if top == 0:
        return " " * bins
    idx = np.minimum((peaks / top * (len(blocks) - 1)).astype(int), len(blocks) - 1)
    return "".join(blocks[i] for i in idx)


def main():
    model = UlaModel(num_antennas=16, grid_size=64)
    spec = GroupSparseAsfSpec(num_groups=2, max_width=0.4)

    asf = sample_asf(spec, model, rng_seed=42)
    ul_true = synth_cov(model, asf, UL)
    dl_true = synth_cov(model, asf, DL)

    batch = sample_channels(model, ul_true, num_snapshots=32, snr_db=20.0,
                            rng_seed=43)
    ul_hat = toeplitzify(sample_cov(batch))
    print(f"array: {model.num_antennas} antennas, grid {model.grid_size}, "
          f"carrier ratio {model.carrier_ratio:.4f}")
    print(f"snapshots: {batch.snapshots.shape[0]} at "
          f"{batch.snr_db:.0f} dB (N0 = {batch.noise_variance:.4f})\n")

    print(f"  true density   |{sparkline(asf.weights)}|")
    for name, est in [
        ("nnls", estimate_nnls(model, ul_hat.first_column)),
        ("min-norm", estimate_l2(model, ul_hat.first_column)),
    ]:
        l1 = np.abs(est.asf.weights - asf.weights).sum()
        nfd = metric_nfd(dl_true, est.dl_cov)
        print(f"  {name:<14} |{sparkline(est.asf.weights)}| "
              f"L1 {l1:.3f}  downlink NFD {nfd:.3f}")


if __name__ == "__main__":
    main()
