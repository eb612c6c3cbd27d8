import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bistanton.errors import DomainError, PreconditionError
from bistanton.model import (J, M, KerrParams, OUParams, curl_potential, force, gradient_potential,
                             helmholtz_laplacians, jacobian, photon_number_estimate, rotation)

coords = st.floats(-4, 4, allow_nan=False)
rates = st.floats(-10, 10, allow_nan=False)
drives = st.floats(0, 8, allow_nan=False)


def _grad(fn, q, h=1e-6):
    out = np.zeros(2)
    for i in range(2):
        dq = np.zeros(2)
        dq[i] = h
        out[i] = (fn(q + dq) - fn(q - dq)) / (2 * h)
    return out


def test_force_is_linear_map_plus_kerr_rotation():
    p = KerrParams(gamma=1.0, delta=-2.0, epsilon=0.5)
    q = np.array([0.3, -1.1])
    r2 = q @ q
    expected = -(p.gamma * np.eye(2) + (p.delta + 0.5 * p.gamma * r2) * J + p.epsilon * M) @ q
    np.testing.assert_allclose(force(p, q), expected, rtol=1e-14)


def test_ou_force_drops_cubic_term():
    q = np.array([2.0, 1.0])
    ou = OUParams(gamma=1.0, delta=1.0, epsilon=0.5)
    np.testing.assert_allclose(force(ou, q), ou.linear_matrix() @ q, rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(coords, coords, rates, drives)
def test_helmholtz_decomposition_residual(x, y, delta, eps):
    p = KerrParams(gamma=1.0, delta=delta, epsilon=eps)
    q = np.array([x, y])
    rebuilt = -_grad(lambda z: gradient_potential(p, z), q) - J @ _grad(lambda z: curl_potential(p, z), q)
    scale = 1.0 + np.linalg.norm(force(p, q))
    assert np.linalg.norm(rebuilt - force(p, q)) <= 1e-6 * scale


@settings(max_examples=60, deadline=None)
@given(coords, coords, rates, drives)
def test_z2_symmetry(x, y, delta, eps):
    p = KerrParams(gamma=0.7, delta=delta, epsilon=eps)
    q = np.array([x, y])
    np.testing.assert_allclose(force(p, -q), -force(p, q), atol=1e-12)
    np.testing.assert_allclose(jacobian(p, -q), jacobian(p, q), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(coords, coords, rates, drives)
def test_jacobian_matches_finite_differences(x, y, delta, eps):
    p = KerrParams(gamma=1.0, delta=delta, epsilon=eps)
    q = np.array([x, y])
    h = 1e-6
    fd = np.column_stack([(force(p, q + h * e) - force(p, q - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(jacobian(p, q), fd, atol=1e-5 * (1 + np.abs(fd).max()))


def test_laplacians():
    p = KerrParams(gamma=2.0, delta=-3.0, epsilon=1.0)
    h = helmholtz_laplacians(p, np.array([1.0, 2.0]))
    assert h.lap_u == 4.0
    assert h.lap_v == pytest.approx(2 * -3.0 + 4 * 1.0 * 5.0)


def test_force_broadcasts_over_leading_axes(rng):
    p = KerrParams(gamma=1.0, delta=-1.0, epsilon=2.0)
    qs = rng.normal(size=(3, 4, 2))
    out = force(p, qs)
    assert out.shape == (3, 4, 2)
    np.testing.assert_allclose(out[1, 2], force(p, qs[1, 2]))


def test_rotation_is_exp_theta_j():
    from scipy.linalg import expm

    np.testing.assert_allclose(rotation(0.7), expm(0.7 * J), atol=1e-14)


@pytest.mark.parametrize("kwargs", [dict(gamma=0.0), dict(gamma=-1.0), dict(epsilon=-0.1), dict(u=-1.0),
                                    dict(delta=math.inf)])
def test_kerr_params_validation(kwargs):
    with pytest.raises(PreconditionError):
        KerrParams(**kwargs)


def test_from_ratios_scales_all_rates():
    p = KerrParams.from_ratios(-10, 3.2, u=0.1, gamma=2.0)
    assert (p.gamma, p.delta, p.epsilon, p.u) == (2.0, -20.0, 6.4, 0.2)


def test_ou_stability_and_angle():
    ou = OUParams(gamma=1.0, delta=1.0, epsilon=0.5)
    assert ou.is_stable
    assert ou.nu == pytest.approx(math.sqrt(2))
    assert ou.theta_nu == pytest.approx(math.pi / 4)
    assert not OUParams(gamma=1.0, delta=0.0, epsilon=1.5).is_stable


def test_photon_number_estimate():
    p = KerrParams(gamma=1.0, delta=-3.0, epsilon=1.6, u=0.1)
    assert photon_number_estimate(p, [2.0, 0.0]) == pytest.approx(10.0)
    with pytest.raises(DomainError):
        photon_number_estimate(p.replace(u=0.0), [1.0, 0.0])
