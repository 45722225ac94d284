"""Beam selection step by step.

Covariances -> DFT beam gains -> thresholded beam/user graph -> exact
branch-and-bound selection -> sparsifying precoder. Prints each artifact
so the chain can be read off a terminal.

Run: python3 demos/precoder_walkthrough.py
"""

import numpy as np

from fddmimo.milp import MilpInstance, max_matching, solve_milp
from fddmimo.precoding import SparsifyingPrecoder, build_graph, circulant_gains
from fddmimo.ula import DL, Asf, UlaModel, synth_cov


def main():
    model = UlaModel(num_antennas=8, grid_size=32)
    centers = [5, 14, 20, 27]
    covs = []
    for c in centers:
        w = np.zeros(model.grid_size)
        w[c - 1 : c + 2] = [0.25, 0.5, 0.25]
        covs.append(synth_cov(model, Asf(w), DL))

    gains = circulant_gains(covs)
    print("per-user beam power (rows = DFT beams):")
    for m in range(gains.num_beams):
        print("  " + " ".join(f"{v:6.3f}" for v in gains.power[m]))

    graph = build_graph(gains, epsilon=0.05)
    print("\nadjacency after the 5% relative threshold:")
    for row in graph.adjacency:
        print("  " + " ".join("x" if v else "." for v in row))
    print(f"\nfull-graph matching size: {max_matching(graph.adjacency)[0]}")

    t_dl = 2
    instance = MilpInstance(graph=graph, t_dl=t_dl, p0=0.1)
    solution = solve_milp(instance)
    print(f"\nselection with at most {t_dl} beams per user "
          f"(objective {solution.objective:.4f}, "
          f"{'optimal' if solution.proven_optimal else 'time-limited'}, "
          f"{solution.nodes} nodes):")
    print(f"  beams {solution.selected_beams}, users {solution.selected_users}")

    precoder = SparsifyingPrecoder(
        beam_indices=solution.selected_beams,
        user_indices=solution.selected_users,
        num_antennas=model.num_antennas,
    )
    b = precoder.matrix
    print(f"\nprecoder B is {b.shape[0]} x {b.shape[1]}; "
          f"B B^H deviates from identity by "
          f"{np.abs(b @ b.conj().T - np.eye(precoder.num_beams)).max():.2e}")
    sub = graph.adjacency[np.ix_(solution.selected_beams, solution.selected_users)]
    print(f"served-user degrees in the kept subgraph: {sub.sum(axis=0)} "
          f"(cap {t_dl})")


if __name__ == "__main__":
    main()
