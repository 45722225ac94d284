"""Covariance-transformation quality versus snapshot budget.

Small-scale version of the metric sweep: per method, mean normalized
Frobenius distortion and worst-case subspace power loss as the number of
uplink snapshots grows from M to 8M.

Run: python3 demos/udct_metrics_sweep.py
"""

from collections import defaultdict

import numpy as np

from fddmimo.config import ExperimentConfig
from fddmimo.experiments import eval_udct


def main():
    cfg = ExperimentConfig(
        num_antennas=16,
        grid_size=64,
        methods=["nnls", "l2"],
        n_over_m_sweep=[1, 2, 4, 8],
        num_realizations=20,
    )
    rows = eval_udct(cfg)

    cells = defaultdict(list)
    for row in rows:
        cells[(row["method"], row["n_over_m"])].append(row)

    print(f"{cfg.num_realizations} realizations per cell, "
          f"M={cfg.num_antennas}, SNR {cfg.snr_db:.0f} dB\n")
    print(f"{'method':<10}{'N/M':>5}{'mean NFD':>12}{'mean PLE':>12}")
    for method in cfg.methods:
        for nm in cfg.n_over_m_sweep:
            rs = cells[(method, nm)]
            nfd = np.mean([r["e_nfd"] for r in rs])
            ple = np.mean([r["e_ple"] for r in rs])
            print(f"{method:<10}{nm:>5}{nfd:>12.4f}{ple:>12.4f}")
        print()


if __name__ == "__main__":
    main()
