"""Uplink-to-downlink covariance transformation.

Three estimators recover the angular density from a noisy uplink
covariance column: nonnegative least squares (projected gradient with
Nesterov acceleration), an unconstrained minimum-norm fit clipped to the
simplex, and a trained network. All of them reconstruct the downlink
covariance the same way, by integrating a triangular interpolation of the
grid density against the downlink phase profile, so metric comparisons
see identical quadrature.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import mlp as _mlp
from .errors import (
    InvalidOrderError,
    ShapeMismatchError,
    ZeroTrueCovarianceError,
)
from .ula import Asf, HermitianToeplitz

__all__ = [
    "UdctEstimate",
    "ul_dictionary",
    "features_from_cov",
    "solve_nnls",
    "solve_l2_min_norm",
    "estimate_nnls",
    "estimate_l2",
    "estimate_mlp",
    "reconstruct_dl",
    "metric_nfd",
    "efficiency_curve",
    "metric_efficiency",
    "metric_power_loss",
]


@dataclass
class UdctEstimate:
    """Estimated density plus the downlink covariance it implies."""

    asf: Asf
    dl_cov: HermitianToeplitz
    method: str
    converged: bool = True
    iterations: int = 0
    kkt_residual: float = field(default=np.nan)


@lru_cache(maxsize=8)
def ul_dictionary(model):
    """Uplink dictionary, column i = array response at grid point xi_i.

    Shape (M, G); with G >= 2M this is an oversampled DFT block, so the
    columns span the uplink covariance cone.
    """
    k = np.arange(model.num_antennas)
    d = np.exp(1j * np.pi * np.outer(k, model.grid()))
    d.setflags(write=False)
    return d


@lru_cache(maxsize=8)
def _nnls_operator(model):
    """Cached real normal-equation pieces: (D, real Gram, step size)."""
    d = ul_dictionary(model)
    gram = d.conj().T @ d
    lipschitz = float(np.linalg.eigvalsh(gram)[-1])
    return d, np.ascontiguousarray(gram.real), 1.0 / lipschitz


def features_from_cov(first_column):
    """Stack Re/Im of a covariance column into the 2M network input.

    Normalized by the magnitude of the leading entry (when nonzero) so the
    features are invariant to received power.
    """
    c = np.asarray(first_column, dtype=complex)
    scale = abs(c[0])
    if scale > 0:
        c = c / scale
    return np.concatenate([c.real, c.imag])


def solve_nnls(dictionary, target, step=None, max_iter=10000, tol=1e-8):
    """min_{g >= 0} ||D g - t||_2 by accelerated projected gradient.

    The complex residual is stacked into reals, so the smooth part is
    0.5 * g' Re(D^H D) g - Re(D^H t)' g. Nesterov momentum restarts on
    objective increase; iteration stops when the KKT residual
    max(|grad_i| on the support, max(0, -grad_i) off it) drops below
    ``tol``.

    Parameters
    ----------
    dictionary : (M, G) complex ndarray
    target : (M,) complex ndarray
    step : float, optional
        Gradient step; defaults to 1 / ||D^H D||_2.
    max_iter : int
    tol : float

    Returns
    -------
    coeffs : (G,) ndarray
    info : dict
        Keys ``iterations``, ``kkt_residual``, ``converged``.
    """
    d = np.asarray(dictionary, dtype=complex)
    t = np.asarray(target, dtype=complex)
    if d.ndim != 2 or t.shape != (d.shape[0],):
        raise ShapeMismatchError("dictionary (M, G) and target (M,) required")
    gram = (d.conj().T @ d).real
    rhs = (d.conj().T @ t).real
    if step is None:
        step = 1.0 / float(np.linalg.eigvalsh(d.conj().T @ d)[-1])
    return _nnls_core(gram, rhs, step, max_iter, tol)


def _nnls_core(gram, rhs, step, max_iter, tol):
    g = np.zeros(rhs.size)
    prev = g
    v = g
    t_momentum = 1.0
    obj_prev = 0.0
    kkt = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad_v = gram @ v - rhs
        g = np.maximum(v - step * grad_v, 0.0)

        grad_g = gram @ g - rhs
        kkt = _kkt_residual(g, grad_g)
        if kkt <= tol:
            return g, {"iterations": it, "kkt_residual": float(kkt), "converged": True}

        obj = 0.5 * g @ grad_g - 0.5 * g @ rhs  # == 0.5 g'Hg - r'g
        if obj > obj_prev + 1e-15 and it > 1:
            # momentum overshoot: restart from the last projected point
            t_momentum = 1.0
            v = g
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_momentum**2))
            v = g + ((t_momentum - 1.0) / t_next) * (g - prev)
            t_momentum = t_next
        obj_prev = obj
        prev = g
    return g, {"iterations": it, "kkt_residual": float(kkt), "converged": False}


def _kkt_residual(g, grad):
    active = g > 0.0
    res = 0.0
    if active.any():
        res = float(np.abs(grad[active]).max())
    if not active.all():
        res = max(res, float(np.maximum(-grad[~active], 0.0).max()))
    return res


def solve_l2_min_norm(dictionary, target):
    """Minimum-norm least-squares density fit, sign-unconstrained.

    Returns the raw solution of the stacked real system; callers clip and
    renormalize.
    """
    d = np.asarray(dictionary, dtype=complex)
    t = np.asarray(target, dtype=complex)
    a = np.vstack([d.real, d.imag])
    b = np.concatenate([t.real, t.imag])
    coeffs, *_ = np.linalg.lstsq(a, b, rcond=None)
    return coeffs


def reconstruct_dl(model, asf, upsample_factor=8):
    """Downlink covariance of a triangularly interpolated grid density.

    Each grid mass becomes a unit-area hat of half-width one grid cell;
    the resulting piecewise-linear density is integrated against
    exp(1j*pi*k*r*xi), r the DL/UL carrier ratio, by the trapezoid rule
    on a grid refined by
    ``upsample_factor``. All refinement nodes land on the hat kinks, so
    the k = 0 entry integrates to exactly 1.

    Parameters
    ----------
    model : UlaModel
    asf : Asf
    upsample_factor : int

    Returns
    -------
    HermitianToeplitz
    """
    w = asf.weights
    if w.size != model.grid_size:
        raise ShapeMismatchError("asf does not live on this model's grid")
    u = int(upsample_factor)
    if u < 1:
        raise ValueError("upsample_factor must be >= 1")
    grid = model.grid()
    delta = 2.0 / model.grid_size

    nodes_x = np.concatenate([[grid[0] - delta], grid, [grid[-1] + delta]])
    nodes_y = np.concatenate([[0.0], w / delta, [0.0]])
    n_fine = (nodes_x.size - 1) * u + 1
    fine = nodes_x[0] + (nodes_x[-1] - nodes_x[0]) * np.arange(n_fine) / (n_fine - 1)
    density = np.interp(fine, nodes_x, nodes_y)

    h = (nodes_x[-1] - nodes_x[0]) / (n_fine - 1)
    quad = np.full(n_fine, h)
    quad[0] = quad[-1] = 0.5 * h
    k = np.arange(model.num_antennas)
    phases = np.exp(1j * np.pi * model.carrier_ratio * np.outer(k, fine))
    return HermitianToeplitz(phases @ (density * quad))


def _require_nonzero(target):
    t = np.asarray(target, dtype=complex)
    if not np.any(t != 0):
        raise ValueError("covariance column is identically zero, estimate degenerate")
    return t


def estimate_nnls(model, sigma_hat_ul, max_iter=10000, tol=1e-8, upsample_factor=8):
    """NNLS density estimate from an uplink covariance column.

    Parameters
    ----------
    model : UlaModel
    sigma_hat_ul : (M,) complex array_like
        First column of the (toeplitzified) uplink covariance estimate.
    max_iter, tol : NNLS solver controls.
    upsample_factor : int
        Passed to reconstruct_dl.

    Returns
    -------
    UdctEstimate
        ``converged`` is False when the solver hit max_iter first.
    """
    t = _require_nonzero(sigma_hat_ul)
    if t.size != model.num_antennas:
        raise ShapeMismatchError("column length does not match the model")
    _, gram, step = _nnls_operator(model)
    d = ul_dictionary(model)
    rhs = (d.conj().T @ t).real
    coeffs, info = _nnls_core(gram, rhs, step, max_iter, tol)
    if coeffs.sum() <= 0:
        raise ValueError("NNLS returned zero mass, estimate degenerate")
    asf = Asf.from_weights(coeffs)
    return UdctEstimate(
        asf=asf,
        dl_cov=reconstruct_dl(model, asf, upsample_factor),
        method="nnls",
        converged=info["converged"],
        iterations=info["iterations"],
        kkt_residual=info["kkt_residual"],
    )


def estimate_l2(model, sigma_hat_ul, upsample_factor=8):
    """Minimum-norm fit, negatives clipped, renormalized to unit mass."""
    t = _require_nonzero(sigma_hat_ul)
    if t.size != model.num_antennas:
        raise ShapeMismatchError("column length does not match the model")
    raw = solve_l2_min_norm(ul_dictionary(model), t)
    clipped = np.clip(raw, 0.0, None)
    if clipped.sum() <= 0:
        raise ValueError("all-negative fit, estimate degenerate")
    asf = Asf.from_weights(clipped)
    return UdctEstimate(
        asf=asf,
        dl_cov=reconstruct_dl(model, asf, upsample_factor),
        method="l2",
    )


def estimate_mlp(model, params, sigma_hat_ul, upsample_factor=8):
    """Network density estimate; the softmax output is already a density."""
    t = _require_nonzero(sigma_hat_ul)
    if t.size != model.num_antennas:
        raise ShapeMismatchError("column length does not match the model")
    if params.weights[0].shape[0] != 2 * model.num_antennas:
        raise ShapeMismatchError("network input width does not match 2M")
    if params.weights[-1].shape[1] != model.grid_size:
        raise ShapeMismatchError("network output width does not match the grid")
    coeffs = _mlp.forward(params, features_from_cov(t))
    asf = Asf.from_weights(coeffs)
    return UdctEstimate(
        asf=asf,
        dl_cov=reconstruct_dl(model, asf, upsample_factor),
        method="mlp",
    )


# ---------------------------------------------------------------------------
# metrics


def _paired_full(true_cov, est_cov):
    if true_cov.order != est_cov.order:
        raise ShapeMismatchError("covariance orders differ")
    return true_cov.full(), est_cov.full()


def metric_nfd(true_cov, est_cov):
    """Normalized Frobenius distance ||S - S*||_F / ||S||_F on full matrices."""
    s_true, s_est = _paired_full(true_cov, est_cov)
    denom = np.linalg.norm(s_true)
    if denom == 0:
        raise ZeroTrueCovarianceError("reference covariance is zero")
    return float(np.linalg.norm(s_true - s_est) / denom)


def _descending_eigvecs(mat):
    vals, vecs = np.linalg.eigh(mat)
    # descending eigenvalues; ties within 1e-12 keep the original order
    quantized = np.round(vals / 1e-12)
    order = np.lexsort((np.arange(vals.size), -quantized))
    return vals[order], vecs[:, order]


def efficiency_curve(true_cov, est_cov):
    """eta_q for q = 1..M: power captured by the estimated dominant
    subspaces relative to the true ones."""
    s_true, s_est = _paired_full(true_cov, est_cov)
    if np.trace(s_true).real <= 0:
        raise ZeroTrueCovarianceError("reference covariance has no power")
    vals_t, vecs_t = _descending_eigvecs(s_true)
    _, vecs_e = _descending_eigvecs(s_est)
    per_true = np.einsum("iq,ij,jq->q", vecs_t.conj(), s_true, vecs_t).real
    per_est = np.einsum("iq,ij,jq->q", vecs_e.conj(), s_true, vecs_e).real
    return np.cumsum(per_est) / np.cumsum(per_true)


def metric_efficiency(true_cov, est_cov, q):
    """eta_q for one subspace order q in 1..M."""
    if not isinstance(q, (int, np.integer)) or isinstance(q, bool):
        raise InvalidOrderError(f"q must be an integer, got {q!r}")
    if not 1 <= q <= true_cov.order:
        raise InvalidOrderError(f"q must lie in 1..{true_cov.order}, got {q}")
    return float(efficiency_curve(true_cov, est_cov)[q - 1])


def metric_power_loss(true_cov, est_cov):
    """Worst-case subspace power loss 1 - min_q eta_q."""
    return float(1.0 - efficiency_curve(true_cov, est_cov).min())
