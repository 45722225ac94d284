"""Tests for density estimation and downlink covariance reconstruction.

The triangular interpolant used by reconstruct_dl has an exact transform:
a unit-area hat of half-width d centered at xi contributes
exp(1j*w*xi) * (sin(w*d/2)/(w*d/2))**2 at angular frequency w. Summing
over grid cells gives an oracle for the trapezoid path that shares none
of its code.
"""

import numpy as np
import pytest
from scipy.optimize import nnls as scipy_nnls

from fddmimo.errors import (
    InvalidOrderError,
    ShapeMismatchError,
    ZeroTrueCovarianceError,
)
from fddmimo.mlp import MlpSpec, init_params
from fddmimo.udct import (
    efficiency_curve,
    estimate_l2,
    estimate_mlp,
    estimate_nnls,
    features_from_cov,
    metric_efficiency,
    metric_nfd,
    metric_power_loss,
    reconstruct_dl,
    solve_l2_min_norm,
    solve_nnls,
    ul_dictionary,
)
from fddmimo.ula import (
    DL,
    UL,
    Asf,
    HermitianToeplitz,
    UlaModel,
    array_response,
    sample_channels,
    sample_cov,
    synth_cov,
    toeplitzify,
)


def hat_dl_column(model, weights):
    """Closed-form first column of the interpolated-density DL covariance."""
    k = np.arange(model.num_antennas)
    omega = np.pi * model.carrier_ratio * k
    half = omega / model.grid_size  # w*d/2 with d = 2/G
    damp = np.ones_like(half)
    nz = half != 0
    damp[nz] = (np.sin(half[nz]) / half[nz]) ** 2
    return damp * (np.exp(1j * np.outer(omega, model.grid())) @ weights)


def spike_asf(grid_size, index):
    w = np.zeros(grid_size)
    w[index] = 1.0
    return Asf(w)


# ---------------------------------------------------------------------------
# dictionary and features


def test_dictionary_columns_are_uplink_responses():
    model = UlaModel(num_antennas=4, grid_size=8)
    d = ul_dictionary(model)
    assert d.shape == (4, 8)
    for i, xi in enumerate(model.grid()):
        np.testing.assert_allclose(d[:, i], array_response(model, xi, UL), atol=1e-14)


def test_dictionary_cached_and_frozen():
    model = UlaModel(num_antennas=4, grid_size=8)
    d = ul_dictionary(model)
    assert ul_dictionary(UlaModel(num_antennas=4, grid_size=8)) is d
    with pytest.raises(ValueError):
        d[0, 0] = 0.0


def test_features_scale_invariant():
    model = UlaModel(num_antennas=4, grid_size=8)
    col = synth_cov(model, spike_asf(8, 3), UL).first_column
    f1 = features_from_cov(col)
    f2 = features_from_cov(7.3 * col)
    assert f1.shape == (8,)
    np.testing.assert_allclose(f1, f2, atol=1e-14)


def test_features_hand_case():
    np.testing.assert_allclose(
        features_from_cov([2.0, 2.0j]), [1.0, 0.0, 0.0, 1.0], atol=1e-15
    )
    # zero column passes through rather than dividing by zero
    assert not features_from_cov(np.zeros(3)).any()


# ---------------------------------------------------------------------------
# NNLS solver


def test_nnls_objective_matches_scipy():
    rng = np.random.default_rng(5)
    for _ in range(8):
        d = rng.standard_normal((5, 12)) + 1j * rng.standard_normal((5, 12))
        t = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        g, info = solve_nnls(d, t)
        assert info["converged"]
        assert np.all(g >= 0)
        a = np.vstack([d.real, d.imag])
        b = np.concatenate([t.real, t.imag])
        g_ref, res_ref = scipy_nnls(a, b)
        assert abs(np.linalg.norm(a @ g - b) - res_ref) < 1e-6


def test_nnls_kkt_certificate():
    """Recompute the optimality residual from scratch on the returned point."""
    rng = np.random.default_rng(11)
    d = rng.standard_normal((6, 16)) + 1j * rng.standard_normal((6, 16))
    t = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    g, info = solve_nnls(d, t, tol=1e-8)
    grad = (d.conj().T @ d).real @ g - (d.conj().T @ t).real
    on = g > 0
    res = max(
        np.abs(grad[on]).max(initial=0.0),
        np.maximum(-grad[~on], 0.0).max(initial=0.0),
    )
    assert res <= 1.5e-8
    assert info["kkt_residual"] <= 1e-8


def test_nnls_recovers_exact_spike():
    model = UlaModel(num_antennas=3, grid_size=8)
    target = synth_cov(model, spike_asf(8, 5), UL).first_column
    g, info = solve_nnls(ul_dictionary(model), target)
    expected = np.zeros(8)
    expected[5] = 1.0
    np.testing.assert_allclose(g, expected, atol=1e-6)
    assert info["converged"]


def test_nnls_fits_identity_covariance():
    model = UlaModel(num_antennas=4, grid_size=8)
    e1 = np.zeros(4, dtype=complex)
    e1[0] = 1.0
    g, _ = solve_nnls(ul_dictionary(model), e1)
    assert np.linalg.norm(ul_dictionary(model) @ g - e1) < 1e-6


def test_nnls_iteration_cap():
    rng = np.random.default_rng(3)
    d = rng.standard_normal((5, 12)) + 1j * rng.standard_normal((5, 12))
    t = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    _, info = solve_nnls(d, t, max_iter=1)
    assert not info["converged"]
    assert info["iterations"] == 1


def test_nnls_shape_validation():
    with pytest.raises(ShapeMismatchError):
        solve_nnls(np.ones(4), np.ones(4))
    with pytest.raises(ShapeMismatchError):
        solve_nnls(np.ones((4, 8)), np.ones(3))


# ---------------------------------------------------------------------------
# minimum-norm fit


def test_l2_matches_pinv():
    rng = np.random.default_rng(9)
    d = rng.standard_normal((6, 16)) + 1j * rng.standard_normal((6, 16))
    t = d @ rng.uniform(0.0, 1.0, 16)
    a = np.vstack([d.real, d.imag])
    b = np.concatenate([t.real, t.imag])
    np.testing.assert_allclose(
        solve_l2_min_norm(d, t), np.linalg.pinv(a) @ b, atol=1e-8
    )


def test_l2_uniform_for_identity_covariance():
    # the all-ones direction lies in the row space, so the minimum-norm
    # solution of D g = e1 is exactly the uniform density
    model = UlaModel(num_antennas=4, grid_size=8)
    e1 = np.zeros(4, dtype=complex)
    e1[0] = 1.0
    np.testing.assert_allclose(
        solve_l2_min_norm(ul_dictionary(model), e1), np.full(8, 1 / 8), atol=1e-9
    )


# ---------------------------------------------------------------------------
# downlink reconstruction


@pytest.mark.parametrize(
    "m, g, spike, upsample, tol",
    [
        (8, 32, 10, 8, 5e-3),
        (8, 32, 10, 64, 1e-4),
        (32, 128, 40, 8, 5e-3),
        (32, 128, 40, 64, 1e-4),
    ],
)
def test_reconstruct_matches_closed_form_spike(m, g, spike, upsample, tol):
    model = UlaModel(num_antennas=m, grid_size=g)
    asf = spike_asf(g, spike)
    col = reconstruct_dl(model, asf, upsample_factor=upsample).first_column
    assert np.abs(col - hat_dl_column(model, asf.weights)).max() < tol


def test_reconstruct_matches_closed_form_random():
    model = UlaModel(num_antennas=32, grid_size=128)
    rng = np.random.default_rng(21)
    for _ in range(5):
        asf = Asf.from_weights(rng.uniform(0.0, 1.0, 128))
        col = reconstruct_dl(model, asf).first_column
        assert np.abs(col - hat_dl_column(model, asf.weights)).max() < 5e-3


def test_reconstruct_quadrature_refines():
    model = UlaModel(num_antennas=8, grid_size=32)
    asf = spike_asf(32, 10)
    ref = hat_dl_column(model, asf.weights)
    err8 = np.abs(reconstruct_dl(model, asf, 8).first_column - ref).max()
    err64 = np.abs(reconstruct_dl(model, asf, 64).first_column - ref).max()
    assert err64 < err8


def test_reconstruct_preserves_unit_mass():
    model = UlaModel(num_antennas=8, grid_size=32)
    rng = np.random.default_rng(2)
    for _ in range(3):
        asf = Asf.from_weights(rng.uniform(0.0, 1.0, 32))
        col = reconstruct_dl(model, asf).first_column
        assert abs(col[0] - 1.0) < 1e-12


def test_reconstruct_validation():
    model = UlaModel(num_antennas=8, grid_size=32)
    with pytest.raises(ShapeMismatchError):
        reconstruct_dl(model, spike_asf(16, 3))
    with pytest.raises(ValueError):
        reconstruct_dl(model, spike_asf(32, 3), upsample_factor=0)


# ---------------------------------------------------------------------------
# estimator front ends


def test_estimate_nnls_concentrates_on_spike():
    model = UlaModel(num_antennas=8, grid_size=32)
    spike = 10
    ul = synth_cov(model, spike_asf(32, spike), UL)
    batch = sample_channels(model, ul, num_snapshots=512, snr_db=20.0, rng_seed=[77, 0])
    est = estimate_nnls(model, toeplitzify(sample_cov(batch)).first_column)
    assert est.method == "nnls"
    assert est.converged
    assert est.kkt_residual <= 1e-8
    assert est.asf.weights[spike - 2 : spike + 3].sum() >= 0.95
    np.testing.assert_allclose(
        est.dl_cov.first_column, hat_dl_column(model, est.asf.weights), atol=5e-3
    )


def test_estimate_l2_identity_covariance():
    model = UlaModel(num_antennas=4, grid_size=8)
    e1 = np.zeros(4, dtype=complex)
    e1[0] = 1.0
    est = estimate_l2(model, e1)
    assert est.method == "l2"
    np.testing.assert_allclose(est.asf.weights, np.full(8, 1 / 8), atol=1e-9)
    assert abs(est.dl_cov.first_column[0] - 1.0) < 1e-12


def test_estimate_mlp_zero_net_gives_uniform():
    model = UlaModel(num_antennas=4, grid_size=8)
    spec = MlpSpec.for_dimensions(4, 8)
    params = init_params(spec, rng_seed=0)
    for w in params.weights:
        w[:] = 0.0
    col = synth_cov(model, spike_asf(8, 2), UL).first_column
    est = estimate_mlp(model, params, col)
    assert est.method == "mlp"
    np.testing.assert_allclose(est.asf.weights, np.full(8, 1 / 8), atol=1e-12)


def test_estimate_mlp_rejects_mismatched_net():
    model = UlaModel(num_antennas=8, grid_size=32)
    params = init_params(MlpSpec.for_dimensions(4, 8), rng_seed=0)
    col = synth_cov(model, spike_asf(32, 2), UL).first_column
    with pytest.raises(ShapeMismatchError):
        estimate_mlp(model, params, col)


@pytest.mark.parametrize("front", [estimate_nnls, estimate_l2])
def test_estimate_rejects_degenerate_input(front):
    model = UlaModel(num_antennas=4, grid_size=8)
    with pytest.raises(ValueError):
        front(model, np.zeros(4, dtype=complex))
    with pytest.raises(ShapeMismatchError):
        front(model, np.ones(3, dtype=complex))


# ---------------------------------------------------------------------------
# metrics


def test_nfd_hand_cases():
    model = UlaModel(num_antennas=4, grid_size=8)
    true = synth_cov(model, spike_asf(8, 3), UL)
    zero = HermitianToeplitz(np.zeros(4))
    double = HermitianToeplitz(2.0 * true.first_column)
    assert metric_nfd(true, true) == 0.0
    assert abs(metric_nfd(true, zero) - 1.0) < 1e-12
    assert abs(metric_nfd(true, double) - 1.0) < 1e-12


def test_nfd_validation():
    model = UlaModel(num_antennas=4, grid_size=8)
    true = synth_cov(model, spike_asf(8, 3), UL)
    with pytest.raises(ZeroTrueCovarianceError):
        metric_nfd(HermitianToeplitz(np.zeros(4)), true)
    with pytest.raises(ShapeMismatchError):
        metric_nfd(true, HermitianToeplitz(np.zeros(5)))


def test_efficiency_rank_one_orthogonal():
    # responses half a period apart are orthogonal for M = 4, so the
    # estimated dominant direction captures no true power at all
    model = UlaModel(num_antennas=4, grid_size=8)
    true = HermitianToeplitz(array_response(model, -0.5, UL))
    est = HermitianToeplitz(array_response(model, 0.5, UL))
    assert metric_efficiency(true, est, 1) == pytest.approx(0.0, abs=1e-12)
    assert metric_efficiency(true, est, 4) == pytest.approx(1.0, abs=1e-9)
    assert metric_power_loss(true, est) == pytest.approx(1.0, abs=1e-12)


def test_efficiency_perfect_estimate():
    model = UlaModel(num_antennas=4, grid_size=8)
    rng = np.random.default_rng(7)
    true = synth_cov(model, Asf.from_weights(rng.uniform(0.0, 1.0, 8)), UL)
    np.testing.assert_allclose(efficiency_curve(true, true), np.ones(4), atol=1e-9)


def test_efficiency_curve_bounds_random():
    model = UlaModel(num_antennas=6, grid_size=16)
    rng = np.random.default_rng(13)
    for _ in range(50):
        true = synth_cov(model, Asf.from_weights(rng.uniform(0.0, 1.0, 16)), UL)
        est = synth_cov(model, Asf.from_weights(rng.uniform(0.0, 1.0, 16)), UL)
        curve = efficiency_curve(true, est)
        assert curve.shape == (6,)
        assert np.all(curve >= -1e-9)
        assert np.all(curve <= 1.0 + 1e-9)
        assert abs(curve[-1] - 1.0) < 1e-9


def test_efficiency_validation():
    model = UlaModel(num_antennas=4, grid_size=8)
    true = synth_cov(model, spike_asf(8, 1), UL)
    with pytest.raises(InvalidOrderError):
        metric_efficiency(true, true, 0)
    with pytest.raises(InvalidOrderError):
        metric_efficiency(true, true, 5)
    with pytest.raises(InvalidOrderError):
        metric_efficiency(true, true, 1.5)
    with pytest.raises(InvalidOrderError):
        metric_efficiency(true, true, True)
    with pytest.raises(ZeroTrueCovarianceError):
        efficiency_curve(HermitianToeplitz(np.zeros(4)), true)
