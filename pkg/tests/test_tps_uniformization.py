import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ellipk, gamma
from scipy import integrate

from wpdegen import tps_uniformization as tps
from wpdegen.collar_models import gaussian_curvature
from wpdegen.errors import DomainError, InputError, PrecisionError

RNG = np.random.default_rng(12345)
RHO_HALF = 4 * gamma(0.75) ** 4 / np.pi**2


def _k_quad(k):
    return integrate.quad(lambda t: 1 / np.sqrt(1 - k * k * np.sin(t) ** 2), 0, np.pi / 2, epsabs=1e-15)[0]


def test_agm_basic():
    assert tps.agm(1.0, 1.0) == 1.0
    assert np.pi / (2 * tps.agm(1, np.sqrt(2) / 2)) == pytest.approx(_k_quad(1 / np.sqrt(2)), rel=1e-14)
    assert np.pi / (2 * tps.agm(1, np.sqrt(2) / 2)) == pytest.approx(1.854074677, abs=1e-9)
    with pytest.raises(InputError):
        tps.agm(0.0, 1.0)
    with pytest.raises(InputError):
        tps.agm(-1.0, 1.0)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_agm_symmetric(a, b):
    assert tps.agm(a, b) == pytest.approx(tps.agm(b, a), rel=1e-14)
    assert min(a, b) <= tps.agm(a, b) * (1 + 1e-14)


def test_elliptic_k():
    assert tps.elliptic_k(0.0) == pytest.approx(np.pi / 2, rel=1e-15)
    assert tps.elliptic_k(1 / np.sqrt(2)) == pytest.approx(1.854074677, abs=1e-9)
    ks = np.linspace(0, 0.999, 60)
    vals = np.array([tps.elliptic_k(k) for k in ks])
    assert np.all(np.diff(vals) > 0)
    assert np.allclose(vals, ellipk(ks**2), rtol=1e-13)
    with pytest.raises(DomainError):
        tps.elliptic_k(1.0)


def test_theta_values_and_jacobi():
    t2, t3, t4 = tps.theta_functions(1j)
    assert t3 == pytest.approx(np.pi**0.25 / gamma(0.75), rel=1e-14)
    assert abs(t3 - 1.0864348) < 1e-7
    for _ in range(20):
        tau = RNG.uniform(-1, 1) + 1j * RNG.uniform(0.3, 3)
        t2, t3, t4 = tps.theta_functions(tau)
        assert abs(t2**4 + t4**4 - t3**4) < 1e-12 * max(1, abs(t3) ** 4)
    with pytest.raises(DomainError):
        tps.theta_functions(1.0 + 0j)


@given(st.floats(0.2, 5))
def test_lambda_real_on_imaginary_axis(y):
    lam = tps.lambda_of_tau(1j * y)
    assert abs(lam.imag) < 1e-15 and 0 < lam.real < 1


def test_tau_of_lambda_values():
    assert tps.tau_of_lambda(0.5) == pytest.approx(1j, abs=1e-15)
    ys = [tps.tau_of_lambda(10.0**-k).imag for k in range(1, 12, 2)]
    assert np.all(np.diff(ys) > 0)


def test_tau_round_trip():
    ws = RNG.uniform(-4, 4, 50) + 1j * RNG.uniform(-4, 4, 50)
    for w in ws:
        tau = tps.tau_of_lambda(w)
        assert tau.imag > 0
        assert tps.lambda_of_tau(tau) == pytest.approx(w, abs=1e-10 * max(1, abs(w)))


def test_tau_of_lambda_guard():
    with pytest.raises(PrecisionError):
        tps.tau_of_lambda(0.0)
    with pytest.raises(PrecisionError):
        tps.tau_of_lambda(1.0)


def test_lambda_prime_identity():
    for tau in (1j, 0.3 + 0.8j, -0.4 + 1.7j):
        h = 1e-5
        fd = (tps.lambda_of_tau(tau + h) - tps.lambda_of_tau(tau - h)) / (2 * h)
        assert tps.lambda_prime(tau) == pytest.approx(fd, abs=1e-8)


def test_density_half():
    assert tps.tps_density(0.5) == pytest.approx(RHO_HALF, rel=1e-12)
    assert tps.tps_density(0.5) == pytest.approx(0.91389, abs=1e-5)
    assert tps.tps_area_density(0.5) == pytest.approx(RHO_HALF**2, rel=1e-12)


def test_density_symmetries():
    ws = RNG.uniform(-3, 3, 40) + 1j * RNG.uniform(-3, 3, 40)
    r = tps.tps_density(ws)
    assert np.allclose(tps.tps_density(1 - ws), r, rtol=1e-10, atol=0)
    assert np.allclose(tps.tps_density(np.conj(ws)), r, rtol=1e-10, atol=0)
    assert np.allclose(tps.tps_density(1 / ws), np.abs(ws) ** 2 * r, rtol=1e-10, atol=0)


def test_curvature_minus_one_random_points():
    pts = []
    while len(pts) < 100:
        w = RNG.uniform(-5, 5) + 1j * RNG.uniform(-5, 5)
        if 0.05 < abs(w) < 5 and 0.05 < abs(1 - w) < 5:
            pts.append(w)
    worst = max(
        abs(gaussian_curvature(tps.tps_area_density, w, step=1e-2 * min(abs(w), abs(1 - w), 1)) + 1) for w in pts
    )
    assert worst < 1e-6


def test_cusp_normalization_monotone():
    r = 10.0 ** -np.arange(2, 7)
    vals = tps.tps_density(r * np.exp(0.3j)) * r * np.log(1 / r)
    assert np.all(np.diff(vals) > 0) and np.all(vals < 1)
    assert 1 - vals[-1] < 0.2
    # with the exact cusp coordinate the normalization is exact
    q = tps.nome(r * np.exp(0.3j))
    dq = tps.nome_derivative(r * np.exp(0.3j))
    assert np.allclose(tps.tps_density(r * np.exp(0.3j)), np.abs(dq) / (np.abs(q) * np.log(1 / np.abs(q))), rtol=1e-12)


def test_nome_series_and_symmetry():
    w = np.array([1e-3, 0.2 + 0.1j, 0.01j, -0.3 + 0.05j])
    q = tps.nome(w)
    assert np.allclose(tps.lambda_of_nome(q), w, rtol=1e-12)
    assert np.allclose(tps.nome(w / (w - 1)), -q, rtol=1e-12)
    assert tps.nome(1e-6) == pytest.approx(1e-6 / 16 + 1e-12 / 32, rel=1e-12)
    assert tps.nome(0.5) == pytest.approx(np.exp(-np.pi), rel=1e-14)


def test_nome_derivative_fd():
    for w in (0.1 + 0.05j, -0.4 + 0.3j, 0.02):
        h = 1e-6
        fd = (tps.nome(w + h) - tps.nome(w - h)) / (2 * h)
        assert tps.nome_derivative(w) == pytest.approx(fd, rel=1e-8)


def test_guard_region_uses_cusp_model():
    w = 1e-9 * np.exp(0.7j)
    rho = tps.tps_density(w)
    q = w / 16
    assert rho == pytest.approx(1 / (16 * abs(q) * np.log(1 / abs(q))), rel=1e-7)
