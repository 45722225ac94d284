"""Train the density network on a small synthetic set and watch the loss.

Uses a reduced array so the run takes seconds. The printed baseline is
the L1 loss of always predicting the uniform density; any useful network
must end well below it.

Run: python3 demos/mlp_training.py
"""

import numpy as np

from fddmimo.config import ExperimentConfig
from fddmimo.experiments import gen_dataset, train_from_config
from fddmimo.mlp import forward, loss_l1


def main():
    cfg = ExperimentConfig(
        num_antennas=8,
        grid_size=32,
        num_samples=1500,
        learning_rate=0.05,
        batch_size=32,
        epochs=40,
    )
    print("generating dataset...")
    x, y = gen_dataset(cfg)
    uniform = np.full_like(y, 1.0 / cfg.grid_size)
    baseline = loss_l1(uniform, y)
    print(f"{x.shape[0]} samples; uniform-predictor L1 baseline {baseline:.3f}\n")

    spec, params, trace, _ = train_from_config(cfg, (x, y))
    for epoch, tr, va in trace[:: max(1, len(trace) // 10)]:
        print(f"  epoch {epoch:>3}  train {tr:.4f}  val {va:.4f}")

    final = loss_l1(forward(params, x), y)
    print(f"\nfinal whole-set L1 {final:.4f} "
          f"({final / baseline:.1%} of baseline)")
    nets = [w.size for w in params.weights]
    print(f"network: {spec.input_width} -> "
          + " -> ".join(str(w) for w in spec.layer_widths)
          + f" ({sum(nets) + sum(b.size for b in params.biases)} parameters)")


if __name__ == "__main__":
    main()
