import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpdegen import collar_models as cm
from wpdegen.errors import DomainError, InputError


@pytest.mark.parametrize("x,expected", [(np.exp(-1), 1.0), (np.exp(-2), 0.5), (np.exp(-10), 0.1)])
def test_ilog_values(x, expected):
    assert cm.ilog(x) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.5, 2.0])
def test_ilog_domain(bad):
    with pytest.raises(InputError):
        cm.ilog(bad)


@given(st.floats(min_value=3e-3, max_value=0.3))
def test_ilog_inverts_exp(s):
    assert cm.ilog(np.exp(-1.0 / s)) == pytest.approx(s, rel=1e-13)


@given(st.floats(0.05, 0.3), st.floats(0.01, 0.99), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_coords_round_trip(s, frac, theta, theta_t):
    u = s + (1 - s) * frac
    t = np.exp(-1.0 / s + 1j * theta_t)
    z = np.abs(t) ** u * np.exp(1j * theta)
    c = cm.CollarCoords(t, z)
    assert 1 < c.w < 1 / s
    assert cm.CollarCoords.from_swt(t, c.w, c.theta).z == pytest.approx(z, rel=1e-12)
    assert cm.CollarCoords.from_r_theta(t, c.r, c.theta).z == pytest.approx(z, rel=1e-12)


def test_plumbing_density_midpoint_value():
    s = 0.1
    t = np.exp(-1 / s)
    z = np.exp(-5.0)
    assert cm.plumbing_density(t, z) == pytest.approx(np.pi**2 * s**2 * np.exp(1 / s), rel=1e-13)
    assert cm.plumbing_density(t, z) == pytest.approx(2173.9, abs=0.05)


def test_plumbing_density_cusp_limit():
    z = 0.3 * np.exp(0.4j)
    vals = [cm.plumbing_density(np.exp(-1 / s), z) * (abs(z) * np.log(abs(z))) ** 2 for s in (0.05, 0.02, 0.005)]
    assert abs(vals[-1] - 1) < 1e-3
    assert abs(vals[0] - 1) > abs(vals[1] - 1) > abs(vals[2] - 1)


@given(st.floats(0.05, 0.3), st.floats(0.05, 0.95), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
@settings(max_examples=50)
def test_plumbing_density_involution_and_rotation(s, u, th, tht):
    t = np.exp(-1 / s + 1j * tht)
    z = abs(t) ** u * np.exp(1j * th)
    h = cm.plumbing_density(t, z)
    assert cm.plumbing_density(t, t / z) == pytest.approx(h * abs(z) ** 4 / abs(t) ** 2, rel=1e-10)
    assert cm.plumbing_density(t, z * np.exp(0.7j)) == pytest.approx(h, rel=1e-13)


def test_plumbing_density_domain():
    with pytest.raises(DomainError):
        cm.plumbing_density(0.01, 0.001)
    with pytest.raises(DomainError):
        cm.plumbing_density(0.01, 1.5)


def test_cusp_density_values():
    assert cm.cusp_density(np.exp(-1)) == pytest.approx(np.e**2)
    assert cm.cusp_density(np.exp(-2) * 1j) == pytest.approx(np.exp(4) / 4)
    with pytest.raises(DomainError):
        cm.cusp_density(0.0)
    with pytest.raises(DomainError):
        cm.cusp_density(1.2)


@pytest.mark.parametrize("z", [0.3, 0.05j, 0.5 * np.exp(2j), 1e-3 + 2e-3j])
def test_cusp_density_curvature(z):
    k = cm.gaussian_curvature(cm.cusp_density, z, step=1e-3 * abs(z))
    assert k == pytest.approx(-1, abs=1e-7)


def test_curvature_flat_and_disk():
    assert cm.gaussian_curvature(lambda z: np.ones_like(np.abs(z)), 0.2 + 0.1j, step=1e-3) == pytest.approx(0, abs=1e-9)
    disk = lambda z: 4 / (1 - np.abs(z) ** 2) ** 2
    for p in (0.0, 0.3 + 0.2j, -0.7j):
        assert cm.gaussian_curvature(disk, p, step=1e-3) == pytest.approx(-1, abs=1e-7)


def test_plumbing_curvature_and_refinement():
    t = np.exp(-1 / 0.1)
    h = lambda z: cm.plumbing_density(t, z)
    p = np.exp(-3.0 + 0.5j)
    errs = [abs(cm.gaussian_curvature(h, p, step=d, richardson=False) + 1) for d in (4e-4, 2e-4)]
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)
    assert abs(cm.gaussian_curvature(h, p, step=4e-4) + 1) < 1e-7


def test_curvature_margin_error():
    field = cm.ConformalMetricField.single("annulus", cm.cusp_density, lambda z: 0.01 < abs(z) < 0.9)
    assert cm.gaussian_curvature(field, 0.5, step=1e-3, chart="annulus") == pytest.approx(-1, abs=1e-7)
    with pytest.raises(DomainError):
        cm.gaussian_curvature(field, 0.0105, step=1e-3, chart="annulus")


def test_metric_field_overlap_consistency():
    t = 1e-3
    field = cm.ConformalMetricField(
        charts={
            "z": cm.Chart(lambda z: cm.plumbing_density(t, z), lambda z: t < abs(z) < 1),
            "w": cm.Chart(lambda w: cm.plumbing_density(t, w), lambda w: t < abs(w) < 1),
        },
        transitions={("z", "w"): (lambda z: t / z, lambda z: -t / z**2)},
    )
    pts = np.sqrt(t) * np.exp(1j * np.linspace(0, 6, 9)) * 1.5
    assert field.overlap_defect("z", "w", pts) < 1e-12
    assert np.all(field.density("z", pts) > 0)


def test_conformal_curvature_identities():
    one = lambda z: np.ones_like(np.abs(z))
    disk_f = lambda z: np.log(2 / (1 - np.abs(z) ** 2))
    for p in (0.1j, 0.4 - 0.3j):
        assert cm.conformal_curvature(one, disk_f, p, step=1e-3) == pytest.approx(-1, abs=1e-7)
    zero = lambda z: np.zeros_like(np.abs(z))
    assert cm.conformal_curvature(cm.cusp_density, zero, 0.2, step=2e-4) == pytest.approx(-1, abs=1e-7)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.5, 0.5), st.floats(0.1, 0.6), st.floats(0, 6.28))
@settings(max_examples=30, deadline=None)
def test_residual_vanishes_iff_curvature_minus_one(a, b, c, r, th):
    f = lambda z: a * np.real(z) ** 2 + b * np.imag(z) + c
    p = r * np.exp(1j * th)
    n = cm.curvature_residual(cm.cusp_density, f, p, step=1e-3)
    k = cm.conformal_curvature(cm.cusp_density, f, p, step=1e-3)
    assert n == pytest.approx(np.exp(2 * f(p)) * (k + 1), abs=1e-8)


def test_conformal_matches_composed_density():
    f = lambda z: 0.3 * np.real(z) * np.imag(z)
    h0 = cm.cusp_density
    p = 0.3 + 0.2j
    comp = lambda z: np.exp(2 * f(z)) * h0(z)
    assert cm.conformal_curvature(h0, f, p, step=1e-3) == pytest.approx(cm.gaussian_curvature(comp, p, step=1e-3), abs=1e-8)


def test_model_laplacian_face_one():
    rec = cm.model_laplacian_coeffs("I", 0.3, s=1e-6)
    assert rec.prefactor == pytest.approx(1, abs=1e-9)
    assert sorted(rec.zero_mode_operator().indicial_roots()) == [-2.0, 1.0]


def test_model_laplacian_face_two():
    rec = cm.model_laplacian_coeffs("II", 0.4, s=0.1)
    assert rec.c_dd == pytest.approx(-rec.prefactor * 1.4**2)
    assert rec.c_thth == pytest.approx(-rec.prefactor / (0.01 * 1.4**2))
    assert sorted(rec.zero_mode_operator().indicial_roots()) == [0.0, 3.0]
    with pytest.raises(InputError):
        cm.model_laplacian_coeffs("III", 0.1)
