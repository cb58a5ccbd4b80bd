import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpdegen import elliptic_solver as es
from wpdegen import tps_uniformization as tps
from wpdegen.errors import ConfigError, InputError, SolverError
from wpdegen.grafting import family_from_s

SPHERE = es.ThricePuncturedSphere()


@pytest.fixture(scope="module")
def sphere():
    d = es.discretize(SPHERE)
    return d, es.assemble(d)


@pytest.fixture(scope="module")
def fam05():
    d = es.discretize(family_from_s(0.05))
    op = es.assemble(d)
    return d, op, es.solve_curvature(d, op=op)


# --- discretization ---------------------------------------------------------
def test_mesh_report_and_refinement():
    a = es.discretize(SPHERE, {"n_theta": 96}).mesh_report()
    b = es.discretize(SPHERE, {"n_theta": 192}).mesh_report()
    assert b["max_spacing"] == pytest.approx(a["max_spacing"] / 2, rel=0.02)
    assert a["modes"] == 96 and b["modes"] == 192


def test_deterministic_build():
    fam = family_from_s(0.1, 0.3)
    a, b = es.discretize(fam), es.discretize(fam)
    assert np.array_equal(a.z, b.z) and np.array_equal(a.weights, b.weights)


def test_index_map_is_bijection(sphere):
    d, _ = sphere
    cyl = d.index[d.active]
    assert np.array_equal(np.sort(cyl), np.arange(d.active.sum()))
    assert d.n_dof == d.active.sum() + sum(p.z.size for p in d.patches)
    ends = [p.offset for p in d.patches] + [d.n_dof]
    assert ends[0] == d.active.sum()
    assert all(p.offset + p.z.size == e for p, e in zip(d.patches, ends[1:]))


@pytest.mark.parametrize(
    "res",
    [{"n_theta": 33}, {"n_theta": 16}, {"x_cap": 2.0}, {"pou": (3.0, 3.9)}, {"y_hole": 20.0}],
)
def test_bad_resolution(res):
    with pytest.raises(ConfigError):
        es.discretize(SPHERE, res)


def test_too_coarse_overlap_is_reported():
    with pytest.raises(ConfigError):
        es.discretize(SPHERE, {"n_theta": 48, "min_n_theta": 48})


def test_auto_resolution_resolves_middle_blend():
    fam = family_from_s(0.15)
    d = es.discretize(fam)
    width = 0.2 * abs(fam.log_abs_t)
    assert width / d.dtheta >= 8


@pytest.mark.parametrize("s", [0.05, 0.1, 0.15])
def test_boundary_rings_in_exact_regions(s):
    fam = family_from_s(s, 0.4)
    d = es.discretize(fam)
    t = fam.t
    exact = {
        "inf": lambda z: tps.tps_area_density(z),
        "1": lambda z: tps.tps_area_density(z),
        "0": lambda z: tps.tps_area_density(z / t) / abs(t) ** 2,
        "t": lambda z: tps.tps_area_density(z / t) / abs(t) ** 2,
    }
    names = ["inf", "0"] + [p.name for p in d.patches]
    for name, (ring, *_) in zip(names, d.boundary):
        z = d.z[ring]
        assert not fam.blend_mask(z).any()
        np.testing.assert_allclose(fam.area_density(z), exact[name](z), rtol=1e-12)
        assert d.y_end[name] > 13.5


# --- linear solver ------------------------------------------------------------
@pytest.mark.parametrize("c", [1.0, -0.3])
def test_constants_in_constants_out(sphere, c):
    d, op = sphere
    sol = es.solve_linearized(d, 2 * c, op=op)
    assert np.max(np.abs(sol.u - c)) < 1e-9
    assert sol.norm_ratio <= 1.0


def test_constants_on_family(fam05):
    d, op, _ = fam05
    sol = es.solve_linearized(d, 2.0, op=op)
    assert np.max(np.abs(sol.u - 1)) < 1e-8


def test_zero_data_zero_solution(sphere):
    d, op = sphere
    assert np.max(np.abs(es.solve_linearized(d, 0.0, op=op).u)) == 0.0


def _manufactured(d):
    xi = np.log(d.z)
    x, th = xi.real, xi.imag
    g = np.exp(-((x + 0.3) ** 2) / 1.5)
    u = g * (1 + 0.5 * np.cos(th) + 0.2 * np.sin(2 * th))
    # flat Laplacian in (x, theta) of u
    gxx = g * ((2 * (x + 0.3) / 1.5) ** 2 - 2 / 1.5)
    lap = gxx * (1 + 0.5 * np.cos(th) + 0.2 * np.sin(2 * th)) - g * (0.5 * np.cos(th) + 0.8 * np.sin(2 * th))
    hxi = d.fiber.area_density(d.z) * np.abs(d.z) ** 2
    return u, -lap / hxi + 2 * u


def test_manufactured_solution_second_order():
    errs = []
    for n in (96, 128, 192):
        d = es.discretize(SPHERE, {"n_theta": n})
        u, rhs = _manufactured(d)
        sol = es.solve_linearized(d, rhs)
        assert sol.residual < 1e-8
        assert sol.norm_ratio <= 1.0
        errs.append(np.max(np.abs(sol.u - u)))
    orders = [np.log(errs[i] / errs[i + 1]) / np.log(r) for i, r in enumerate((128 / 96, 192 / 128))]
    assert all(1.7 < p < 2.6 for p in orders), (errs, orders)


def _bump(d, seed):
    rng = np.random.default_rng(seed)
    xi = np.log(d.z)
    x, th = xi.real, xi.imag
    c = rng.uniform(-1.0, 1.0, 6)
    g = np.exp(-((x + 4) ** 2) * 2) * (np.abs(x + 4) < 2.5)
    return g * (c[0] + c[1] * np.cos(th) + c[2] * np.sin(th) + c[3] * np.cos(3 * th) + c[4] * np.sin(5 * th) + c[5])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_self_adjoint_on_collar_fields(fam05_cached, a, b):
    d, op = fam05_cached
    u, v = _bump(d, a), _bump(d, b)
    Au, Av = es.apply_operator(d, op, u), es.apply_operator(d, op, v)
    lhs, rhs = es.inner(d, Au, v), es.inner(d, u, Av)
    assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs), 1e-300)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_rayleigh_quotient_at_least_two(fam05_cached, a):
    d, op = fam05_cached
    u = _bump(d, a)
    assert es.inner(d, es.apply_operator(d, op, u), u) >= (2 - 1e-12) * es.inner(d, u, u)


@pytest.fixture(scope="module")
def fam05_cached(fam05):
    return fam05[0], fam05[1]


def test_theta_flat_data_gives_nearly_flat_solution(fam05):
    d, op, _ = fam05
    x = np.log(np.abs(d.z))
    mid = 0.5 * d.fiber.log_abs_t
    h = np.exp(-((x - mid) ** 2))
    u = es.solve_linearized(d, h, op=op).u
    col = d.index[np.argmin(np.abs(d.x - mid))]
    ring = u[col]
    modes = np.abs(np.fft.rfft(ring)) / len(ring)
    assert modes[1] < 1e-4 * modes[0]
    assert modes[2] < 1e-3 * modes[1] and modes[3] < 1e-2 * modes[2]


def test_rejects_bad_field_shape(sphere):
    d, op = sphere
    with pytest.raises(InputError):
        es.solve_linearized(d, np.ones(5), op=op)


# --- curvature equation --------------------------------------------------------
def test_exact_sphere_analytic_is_already_hyperbolic(sphere):
    d, op = sphere
    sol = es.solve_curvature(d, op=op)
    assert sol.sup_f() == 0.0


def test_exact_sphere_discrete_f_is_discretization_error():
    sup = []
    for n in (96, 128):
        d = es.discretize(SPHERE, {"n_theta": n})
        sol = es.solve_curvature(d, curvature="discrete")
        assert sol.residual <= 1e-9
        sup.append(sol.sup_f())
    # second-order decay: the coarse error is pure discretization error
    est = (sup[0] - sup[1]) / (1 - (96 / 128) ** 2)
    assert sup[0] <= 3 * est
    assert sup[1] < sup[0] / 1.5


def test_newton_on_family(fam05):
    d, op, sol = fam05
    h = sol.history
    assert h[-1] <= 1e-9
    for a, b in zip(h, h[1:]):
        if a < 1e-2 and b > 1e-10:  # above the roundoff floor of the residual
            assert b <= 10 * a**2
    np.testing.assert_allclose(sol.curvature(), -1.0, atol=1e-6)
    assert 0 < sol.sup_f() < 0.05


def test_newton_failure_reports_history():
    d = es.discretize(family_from_s(0.1))
    with pytest.raises(SolverError) as exc:
        es.solve_curvature(d, max_iter=1)
    assert len(exc.value.history) == 2


@pytest.mark.slow
def test_sup_f_decays_like_s_squared():
    S = [0.05, 0.075, 0.1, 0.15]
    sup = [es.solve_curvature(es.discretize(family_from_s(s))).sup_f() for s in S]
    assert np.polyfit(np.log(S), np.log(sup), 1)[0] >= 1.7


# --- Eisenstein ------------------------------------------------------------------
@pytest.fixture(scope="module")
def sphere_eis(sphere):
    d, op = sphere
    return {j: es.eisenstein(d, j, op=op) for j in ("0", "1", "inf")}


def test_eisenstein_positive_at_random_points(sphere, sphere_eis):
    d, _ = sphere
    rng = np.random.default_rng(7)
    x = rng.uniform(-8, 8, 1000)
    z = np.exp(x + 1j * rng.uniform(0, 2 * np.pi, 1000))
    for j, E in sphere_eis.items():
        vals = es.evaluate(d, E.E, z)
        assert np.all(vals > 0), j


def test_eisenstein_simple_vanishing(sphere_eis):
    for j, E in sphere_eis.items():
        for p in ("0", "1", "inf"):
            if p == j:
                continue
            Y, m = E.profile(p)
            sel = Y > 8
            slope = np.polyfit(np.log(1 / Y[sel]), np.log(m[sel]), 1)[0]
            assert abs(slope - 1) < 0.05


def test_eisenstein_grows_at_forcing_cusp(sphere_eis):
    Y, m = sphere_eis["inf"].profile("inf")
    sel = Y > 8
    np.testing.assert_allclose(m[sel] / Y[sel] ** 2, 1.0, atol=0.05)


def test_symmetric_scattering(sphere_eis):
    a, _ = sphere_eis["0"].scattering("inf")
    b, _ = sphere_eis["inf"].scattering("0")
    assert abs(a - b) <= 1e-6 * abs(a)


def test_scattering_convergence_estimate(sphere_eis):
    L, est = sphere_eis["0"].scattering("1")
    assert L > 0 and est < 1e-3 * L


def test_eisenstein_bad_puncture(sphere):
    d, op = sphere
    with pytest.raises(InputError):
        es.eisenstein(d, "t", op=op)


# --- evaluation and quadrature --------------------------------------------------
def test_evaluate_smooth_field(sphere):
    d, _ = sphere
    f = lambda z: np.real(z) / (1 + np.abs(z) ** 2)
    rng = np.random.default_rng(3)
    z = np.exp(rng.uniform(-5, 5, 300) + 1j * rng.uniform(0, 2 * np.pi, 300))
    assert np.max(np.abs(es.evaluate(d, f(d.z), z) - f(z))) < 1e-4


def test_area_of_sphere(sphere):
    d, _ = sphere
    area = es.integrate(d, 1.0) + es.cusp_tail_area(d)
    assert area == pytest.approx(2 * np.pi, rel=1e-5)


def test_gauss_bonnet_family(fam05):
    d, _, sol = fam05
    K = d.fiber.curvature(d.z)
    assert es.integrate(d, K) - es.cusp_tail_area(d) == pytest.approx(-4 * np.pi, abs=5e-3)
    # the solved metric has area 4 pi
    assert es.integrate(d, 1.0, f=sol.f) + es.cusp_tail_area(d) == pytest.approx(4 * np.pi, rel=1e-3)
