"""Downlink link-level simulation.

One trial runs the whole chain on a drawn channel realization: beam
selection from (estimated) covariances, pilots through the reduced
beamspace, analog feedback, per-user LMMSE estimation of the effective
channel, zero-forcing across the served users, and the resulting per-user
rate terms with the (1 - T_dl/T) training-overhead factor. A covariance-
only statistical beamformer serves as the overhead-free baseline.

Noise is normalized to N0 = 1 in both pilot and data phases; the transmit
power P_dl alone sets the operating SNR (P_dl = 10**(snr_db/10)).
"""

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficientError, ShapeMismatchError, SingularSystemError
from .precoding import circulant_gains, design_precoder
from .ula import cov_factor

__all__ = [
    "PilotMatrix",
    "LinkRealization",
    "make_pilots",
    "lmmse_estimate",
    "zf_precoder",
    "run_downlink_trial",
    "statistical_beamformer",
    "run_sbf_trial",
]

_COND_LIMIT = 1e12


def _stream(rng_seed, index):
    """Child generator for one of a trial's independent draw streams."""
    if np.ndim(rng_seed) == 0:
        return np.random.default_rng([int(rng_seed), index])
    return np.random.default_rng([*(int(s) for s in rng_seed), index])


@dataclass(frozen=True)
class PilotMatrix:
    """Downlink pilot block Psi of shape (T_dl, M').

    With T_dl <= M' the rows are orthogonal with squared norm ``power``
    (Psi Psi^H = P_dl I). With more pilot symbols than beams that identity
    is impossible; the columns are orthogonal instead and
    ``rows_orthogonal`` is False.
    """

    matrix: np.ndarray
    power: float
    rows_orthogonal: bool


def make_pilots(t_dl, m_prime, p_dl, rng_seed):
    """Seeded random pilot block with the Gram structure of PilotMatrix."""
    if t_dl < 1 or m_prime < 1:
        raise ValueError("t_dl and m_prime must be >= 1")
    rng = np.random.default_rng(rng_seed)
    lo, hi = min(t_dl, m_prime), max(t_dl, m_prime)
    z = rng.standard_normal((hi, lo)) + 1j * rng.standard_normal((hi, lo))
    q, _ = np.linalg.qr(z)
    if t_dl <= m_prime:
        psi = np.sqrt(p_dl) * q.conj().T
        ortho = True
    else:
        psi = np.sqrt(p_dl) * q
        ortho = False
    return PilotMatrix(matrix=psi, power=float(p_dl), rows_orthogonal=ortho)


def lmmse_estimate(psi, prior, y_obs, n0):
    """LMMSE effective-channel estimate C Psi^H (Psi C Psi^H + N0 I)^{-1} y.

    ``prior`` is the effective-channel covariance C: a length-M' vector is
    taken as a diagonal, a 2-D array as the full matrix.
    """
    p = np.asarray(getattr(psi, "matrix", psi))
    y = np.asarray(y_obs)
    if y.shape != (p.shape[0],):
        raise ShapeMismatchError(f"y_obs must have length {p.shape[0]}")
    c = np.asarray(prior)
    if c.ndim == 1:
        c_psih = c[:, None] * p.conj().T
    else:
        c_psih = c @ p.conj().T
    s = p @ c_psih + n0 * np.eye(p.shape[0])
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularSystemError(f"pilot normal matrix condition {cond:.2e}")
    return c_psih @ np.linalg.solve(s, y)


def zf_precoder(h_hat_eff):
    """Column-normalized pseudoinverse beamformer.

    Returns (V, g): V has unit-norm columns with H^H V = diag(sqrt(g))
    exactly zero off the diagonal for the input estimates.
    """
    h = np.asarray(h_hat_eff, dtype=complex)
    if h.ndim != 2 or h.shape[1] < 1:
        raise ShapeMismatchError("need an M' x K' matrix with K' >= 1")
    gram = h.conj().T @ h
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond >= _COND_LIMIT:
        raise RankDeficientError(f"estimate Gram condition {cond:.2e}")
    raw = h @ np.linalg.inv(gram)
    norms = np.linalg.norm(raw, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError("pseudoinverse produced a zero column")
    return raw / norms, 1.0 / norms**2


@dataclass
class LinkRealization:
    """Everything one downlink trial produced.

    ``v`` holds the unit-norm zero-forcing columns in the domain where
    they were computed (beamspace for the sparsifying chain, antenna
    domain for the statistical baseline); ``tx_matrix`` is always the
    antenna-domain transmit matrix, so tr(tx P tx^H) = P_dl.
    ``rate_terms`` already carry the (1 - T_dl/T) overhead factor.
    """

    served_users: np.ndarray
    channels: np.ndarray
    eff_channels: np.ndarray
    est_channels: np.ndarray
    v: np.ndarray
    tx_matrix: np.ndarray
    power_alloc: np.ndarray
    coeffs: np.ndarray
    rate_terms: np.ndarray
    sum_rate: float
    n0: float
    t_dl: int
    t_total: int
    pilot: PilotMatrix = None
    precoder: object = None

    @property
    def num_served(self):
        return int(self.served_users.size)


def _empty_realization(m, n0, t_dl, t_total, precoder=None):
    return LinkRealization(
        served_users=np.array([], dtype=int),
        channels=np.zeros((0, m), dtype=complex),
        eff_channels=np.zeros((0, 0), dtype=complex),
        est_channels=np.zeros((0, 0), dtype=complex),
        v=np.zeros((0, 0), dtype=complex),
        tx_matrix=np.zeros((m, 0), dtype=complex),
        power_alloc=np.zeros(0),
        coeffs=np.zeros((0, 0), dtype=complex),
        rate_terms=np.zeros(0),
        sum_rate=0.0,
        n0=n0,
        t_dl=t_dl,
        t_total=t_total,
        precoder=precoder,
    )


def _draw_channels(true_covs, m, rng):
    """True channels for the whole ensemble, one row per user.

    Always draws all K users in one pass so that trials with the same
    channel stream see identical realizations regardless of which users
    end up served.
    """
    k = len(true_covs)
    g = rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m))
    g /= np.sqrt(2.0)
    h = np.empty((k, m), dtype=complex)
    for kk, cov in enumerate(true_covs):
        h[kk] = cov_factor(cov.full() if hasattr(cov, "full") else cov) @ g[kk]
    return h


def _rates(eff_true, v, power, overhead):
    """b-coefficients, SINRs and overhead-scaled per-user rates (bits)."""
    b = (eff_true.conj() @ v) * np.sqrt(power)[None, :]
    mag2 = np.abs(b) ** 2
    signal = np.diag(mag2)
    interference = mag2.sum(axis=1) - signal
    sinr = signal / (1.0 + interference)
    rate_terms = overhead * np.log2(1.0 + sinr)
    return b, rate_terms


def run_downlink_trial(model, true_covs, est_covs, t_dl, t_total=128,
                       p_dl=None, snr_db=20.0, rng_seed=0, design=None,
                       p0=None, epsilon=1e-2, full_prior=False,
                       perfect_csi=False, time_limit=60.0):
    """One sparsifying-precoder downlink trial.

    Estimated covariances drive the beam selection and the LMMSE prior;
    true covariances drive the channel realizations. The three draw
    streams (channels, pilot noise, pilot directions) are independent
    children of ``rng_seed``, so two calls with the same seed but
    different designs see identical channels.

    Parameters
    ----------
    model : UlaModel
    true_covs, est_covs : K HermitianToeplitz downlink covariances
    t_dl, t_total : pilot symbols and coherence-block length
    p_dl : transmit power; default 10**(snr_db/10) since N0 = 1
    design : optional precomputed (precoder, solution) pair, to reuse one
        beam selection across many channel trials
    full_prior : use B Sigma_hat B^H as LMMSE prior instead of the
        circulant diagonal
    perfect_csi : skip pilots and estimation, feed exact effective
        channels to the zero-forcer

    Returns
    -------
    LinkRealization
    """
    if len(true_covs) != len(est_covs):
        raise ShapeMismatchError("true and estimated ensembles differ in size")
    if not 1 <= t_dl <= t_total:
        raise ValueError("need 1 <= t_dl <= t_total")
    m = model.num_antennas
    if p_dl is None:
        p_dl = 10.0 ** (snr_db / 10.0)
    n0 = 1.0

    if design is None:
        design = design_precoder(est_covs, t_dl, p0=p0, epsilon=epsilon,
                                 time_limit=time_limit)
    precoder, _ = design
    served = precoder.user_indices
    overhead = 1.0 - t_dl / t_total

    channels_all = _draw_channels(true_covs, m, _stream(rng_seed, 0))
    if served.size == 0 or precoder.num_beams == 0:
        return _empty_realization(m, n0, t_dl, t_total, precoder)

    b_mat = precoder.matrix
    eff = channels_all[served] @ b_mat.T

    if perfect_csi:
        pilot = None
        est = eff.copy()
    else:
        pilot = make_pilots(t_dl, precoder.num_beams, p_dl, _stream(rng_seed, 2))
        noise_rng = _stream(rng_seed, 1)
        noise = noise_rng.standard_normal((served.size, t_dl)) \
            + 1j * noise_rng.standard_normal((served.size, t_dl))
        noise /= np.sqrt(2.0 / n0)
        obs = eff @ pilot.matrix.T + noise
        gains = circulant_gains(est_covs)
        est = np.empty_like(eff)
        for i, k in enumerate(served):
            if full_prior:
                full = est_covs[k].full() if hasattr(est_covs[k], "full") else est_covs[k]
                prior = b_mat @ full @ b_mat.conj().T
            else:
                prior = gains.power[precoder.beam_indices, k]
            est[i] = lmmse_estimate(pilot, prior, obs[i], n0)

    # zero-forcing with drop-weakest retry on rank deficiency
    keep = np.arange(served.size)
    v = None
    while keep.size:
        try:
            v, _ = zf_precoder(est[keep].T)
            break
        except RankDeficientError:
            weakest = np.argmin(np.linalg.norm(est[keep], axis=1))
            keep = np.delete(keep, weakest)
    if v is None:
        return _empty_realization(m, n0, t_dl, t_total, precoder)

    served = served[keep]
    eff = eff[keep]
    est = est[keep]
    power = np.full(served.size, p_dl / served.size)
    b, rate_terms = _rates(eff, v, power, overhead)

    return LinkRealization(
        served_users=served,
        channels=channels_all[served],
        eff_channels=eff,
        est_channels=est,
        v=v,
        tx_matrix=b_mat.conj().T @ v,
        power_alloc=power,
        coeffs=b,
        rate_terms=rate_terms,
        sum_rate=float(rate_terms.sum()),
        n0=n0,
        t_dl=t_dl,
        t_total=t_total,
        pilot=pilot,
        precoder=precoder,
    )


def statistical_beamformer(dl_covs, n0):
    """Per-user dominant directions from covariances alone.

    Column k is the principal eigenvector of
    (N0 I + sum_{l != k} Sigma_l)^{-1} Sigma_k, found by power iteration
    (residual below 1e-10), unit norm.
    """
    if n0 <= 0:
        raise ValueError("n0 must be positive")
    mats = [c.full() if hasattr(c, "full") else np.asarray(c, dtype=complex)
            for c in dl_covs]
    m = mats[0].shape[0]
    total = sum(mats)
    v = np.empty((m, len(mats)), dtype=complex)
    start = np.arange(1, m + 1) / np.linalg.norm(np.arange(1, m + 1))
    for k, cov in enumerate(mats):
        denom = n0 * np.eye(m) + (total - cov)
        op = np.linalg.inv(denom) @ cov
        u = start.astype(complex)
        for _ in range(100_000):
            w = op @ u
            norm = np.linalg.norm(w)
            if norm == 0:
                break  # zero covariance: any unit vector is optimal
            u = w / norm
            lam = np.real(u.conj() @ op @ u)
            if np.linalg.norm(op @ u - lam * u) <= 1e-10 * max(1.0, abs(lam)):
                break
        v[:, k] = u
    return v


def run_sbf_trial(model, design_covs, true_covs, t_total=128, p_dl=None,
                  snr_db=20.0, rng_seed=0, n0=1.0, beams=None):
    """Statistical-beamforming baseline trial: no pilots, no overhead.

    ``design_covs`` build the beamformer (true or estimated covariances);
    ``true_covs`` drive the channel draw, which uses the same stream as
    run_downlink_trial for paired comparisons. All K users are served with
    uniform power.
    """
    m = model.num_antennas
    if p_dl is None:
        p_dl = 10.0 ** (snr_db / 10.0)
    v = beams if beams is not None else statistical_beamformer(design_covs, n0)
    channels = _draw_channels(true_covs, m, _stream(rng_seed, 0))
    k = channels.shape[0]
    power = np.full(k, p_dl / k)
    b, rate_terms = _rates(channels, v, power, 1.0)
    return LinkRealization(
        served_users=np.arange(k),
        channels=channels,
        eff_channels=channels,
        est_channels=None,
        v=v,
        tx_matrix=v,
        power_alloc=power,
        coeffs=b,
        rate_terms=rate_terms,
        sum_rate=float(rate_terms.sum()),
        n0=n0,
        t_dl=0,
        t_total=t_total,
    )
