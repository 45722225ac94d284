"""DFT beamspace precoding.

For large uniform linear arrays the Toeplitz user covariances are
approximately circulant, so the DFT columns form a common approximate
eigenbasis. Extracting each user's per-beam power from the circulant
diagonal gives a beam/user weight matrix; the selection solver then picks
the beam subset, and the precoder is the corresponding block of DFT rows.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .milp import BeamGraph, MilpInstance, solve_milp

__all__ = [
    "BeamGains",
    "SparsifyingPrecoder",
    "dft_matrix",
    "circulant_gains",
    "build_graph",
    "design_precoder",
    "precoder_to_csv",
]


def dft_matrix(m):
    """Unitary DFT matrix with 0-based indices, entry exp(-2j pi m n / M)/sqrt(M).

    Zero-based indexing fixes the global per-column phase; at M=2 this gives
    [[1, 1], [1, -1]]/sqrt(2).
    """
    idx = np.arange(m)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / m) / np.sqrt(m)


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BeamGains:
    """Per-beam, per-user power gains (M x K, nonnegative)."""

    power: np.ndarray

    def __post_init__(self):
        p = _readonly(self.power, float)
        if p.ndim != 2:
            raise ValueError("power must be an M x K matrix")
        if np.any(p < 0):
            raise ValueError("beam power gains must be nonnegative")
        object.__setattr__(self, "power", p)

    @property
    def amplitude(self):
        """Elementwise square root of the power gains."""
        return np.sqrt(self.power)

    @property
    def num_beams(self):
        return self.power.shape[0]

    @property
    def num_users(self):
        return self.power.shape[1]


def _full_cov(cov):
    return cov.full() if hasattr(cov, "full") else np.asarray(cov, dtype=complex)


def circulant_gains(dl_covs):
    """Per-user DFT-domain power profile, the K-column BeamGains matrix.

    Column k is the real part of diag(F^H Sigma_k F), negatives clipped at
    zero. The unclipped column sums to tr(Sigma_k) exactly (unitary
    conjugation); a warning is emitted if the diagonal's imaginary residue
    exceeds 1e-9, since it vanishes for Hermitian input.

    Parameters
    ----------
    dl_covs : sequence of HermitianToeplitz or (M, M) arrays sharing M.
    """
    mats = [_full_cov(c) for c in dl_covs]
    m = mats[0].shape[0]
    if any(s.shape != (m, m) for s in mats):
        raise ValueError("covariances must share a common antenna count")
    f = dft_matrix(m)
    power = np.empty((m, len(mats)))
    worst = 0.0
    for k, cov in enumerate(mats):
        diag = np.einsum("im,ij,jm->m", f.conj(), cov, f)
        worst = max(worst, float(np.max(np.abs(diag.imag))))
        power[:, k] = np.clip(diag.real, 0.0, None)
    if worst > 1e-9:
        warnings.warn(
            f"beam-domain diagonal has imaginary residue {worst:.2e}; "
            "input covariance not Hermitian?",
            RuntimeWarning,
            stacklevel=2,
        )
    return BeamGains(power)


def build_graph(gains, epsilon=1e-2):
    """Threshold the gains into a beam/user graph.

    The cutoff is relative per user: epsilon times the user's strongest
    beam gain. A user with no power at all keeps a tiny positive cutoff
    and simply has no edges.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    colmax = gains.power.max(axis=0)
    thr = np.maximum(epsilon * colmax, 1e-300)
    return BeamGraph.from_weights(gains.power, thr)


@dataclass(frozen=True)
class SparsifyingPrecoder:
    """Beam-selection precoder: the chosen rows of the DFT basis.

    ``matrix`` is B = F[:, beams]^H of shape (M', M); its rows are
    orthonormal, and B applied to the n-th selected DFT column yields the
    n-th standard basis vector, so each served user's effective channel is
    supported on its own few beams.
    """

    beam_indices: np.ndarray
    user_indices: np.ndarray
    num_antennas: int

    def __post_init__(self):
        beams = _readonly(np.sort(np.asarray(self.beam_indices, dtype=int)), int)
        users = _readonly(np.sort(np.asarray(self.user_indices, dtype=int)), int)
        if beams.size and (beams[0] < 0 or beams[-1] >= self.num_antennas):
            raise ValueError("beam indices out of range")
        if beams.size != np.unique(beams).size:
            raise ValueError("beam indices must be distinct")
        object.__setattr__(self, "beam_indices", beams)
        object.__setattr__(self, "user_indices", users)

    @property
    def num_beams(self):
        return int(self.beam_indices.size)

    @property
    def matrix(self):
        f = dft_matrix(self.num_antennas)
        return f[:, self.beam_indices].conj().T

    def apply(self, channels):
        """Effective (beam-domain) channels: B @ h along the last axis."""
        return np.asarray(channels) @ self.matrix.T


def design_precoder(dl_covs, t_dl, p0=None, epsilon=1e-2, epsilon_obj=None,
                    time_limit=60.0):
    """Full design chain: gains -> graph -> beam/user selection -> B.

    ``p0`` defaults to half the mean per-user total power. Returns the
    precoder together with the solver output; a time-limited solve comes
    back with ``proven_optimal`` False and is used as-is.
    """
    gains = circulant_gains(dl_covs)
    graph = build_graph(gains, epsilon)
    if p0 is None:
        p0 = 0.5 * float(gains.power.sum(axis=0).mean())
    instance = MilpInstance(graph=graph, t_dl=t_dl, p0=p0, epsilon_obj=epsilon_obj)
    solution = solve_milp(instance, time_limit=time_limit)
    precoder = SparsifyingPrecoder(
        beam_indices=solution.selected_beams,
        user_indices=solution.selected_users,
        num_antennas=gains.num_beams,
    )
    return precoder, solution


def precoder_to_csv(path, precoder):
    """Selected beams/users plus the B matrix, real and imaginary columns."""
    b = precoder.matrix
    with open(path, "w") as fh:
        fh.write("# beams " + " ".join(str(i) for i in precoder.beam_indices) + "\n")
        fh.write("# users " + " ".join(str(i) for i in precoder.user_indices) + "\n")
        fh.write(",".join(f"re{j},im{j}" for j in range(precoder.num_antennas)) + "\n")
        for row in b:
            fh.write(",".join(f"{float(v.real)!r},{float(v.imag)!r}" for v in row) + "\n")
