"""Weil-Petersson and Takhtajan-Zograf pairings on the degenerating family."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import InputError


def model_wp_integral(s, quadrature: bool = False):
    """Collar WP integral ``(1/(pi s^3)) (1 - s + sin(2 pi s)/(2 pi))``.

    ``quadrature=True`` evaluates ``2 pi int_s^1 sin^2(pi s/r) / (pi^2 s^2 r^2) dr`` instead.
    """
    s = float(s)
    if quadrature:
        f = lambda r: np.sin(np.pi * s / r) ** 2 / (np.pi**2 * s**2 * r**2)
        return 2 * np.pi * integrate.quad(f, s, 1.0, epsabs=0, epsrel=1e-13, limit=200)[0]
    return (1 - s + np.sin(2 * np.pi * s) / (2 * np.pi)) / (np.pi * s**3)


# --- quadratic differentials -------------------------------------------------
@dataclass(frozen=True)
class QuadraticDifferential:
    """``q(z) dz^2 = c * m(z) dz^2 / (z (z - 1) (z - t))`` with polynomial multiplier ``m``.

    ``m = 1`` spans the space of the fiber; other multipliers give test
    differentials (``m = z`` vanishes at the node).
    """

    t: complex
    c: complex
    multiplier: tuple = (1.0,)  # coefficients of m, lowest degree first

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        m = np.polynomial.polynomial.polyval(z, self.multiplier)
        return self.c * m / (z * (z - 1) * (z - self.t))

    def times_z(self) -> "QuadraticDifferential":
        return QuadraticDifferential(self.t, self.c, (0.0,) + tuple(self.multiplier))

    def laurent_order(self, p, r=1e-4, n=64) -> int:
        """Order of ``q dz^2`` at a puncture by a discrete Cauchy integral (``-1`` is a simple pole)."""
        th = 2 * np.pi * np.arange(n) / n
        if p == "inf":  # w = 1/z, q(z) dz^2 = q(1/w) w^-4 dw^2
            w = r * np.exp(1j * th)
            vals = self(1 / w) / w**4
        else:
            w = r * np.exp(1j * th)
            vals = self(complex(p) + w)
        coef = [np.mean(vals * w ** (-k)) for k in range(-4, 4)]
        scale = max(abs(c) * r**k for k, c in zip(range(-4, 4), coef))
        for k, c in zip(range(-4, 4), coef):
            if abs(c) * r**k > 1e-8 * scale:
                return k
        return 4

    def node_residue(self, radius=None, n=64) -> complex:
        """Constant Fourier coefficient of ``q / (dz/z)^2`` on a circle inside the collar."""
        r = np.sqrt(abs(self.t)) if radius is None else radius
        z = r * np.exp(2j * np.pi * np.arange(n) / n)
        return complex(np.mean(self(z) * z * z))


def qd_basis(t) -> QuadraticDifferential:
    """Basis differential of the fiber over ``t`` with node double residue 1 (``c = t - 1``)."""
    t = complex(t)
    if t in (0, 1) or not np.isfinite(t):
        raise InputError("t must avoid 0, 1 and infinity")
    return QuadraticDifferential(t, t - 1)


# --- solved fibers -----------------------------------------------------------
_CACHE: dict = {}


def _key(t, resolution):
    return (complex(t), tuple(sorted((resolution or {}).items())))


def hyperbolic_fiber(t, resolution=None):
    """Grid, grafted metric and Newton-solved conformal factor of the fiber over ``t`` (memoized)."""
    from . import elliptic_solver as es
    from .grafting import build_family

    k = _key(t, resolution)
    if k not in _CACHE:
        d = es.discretize(build_family(t), resolution)
        _CACHE[k] = es.solve_curvature(d)
    return _CACHE[k]


def _fiber(sol_or_t, resolution=None):
    return sol_or_t if hasattr(sol_or_t, "disc") else hyperbolic_fiber(sol_or_t, resolution)


def _pairing_values(sol, q1, q2, weight=None):
    d = sol.disc
    z = d.z
    hz = d.fiber.area_density(z) * np.exp(2 * sol.f)  # hyperbolic density in z
    v = q1(z) * np.conj(q2(z)) / hz**2
    if weight is not None:
        v = v * weight
    return d.weights * np.exp(2 * sol.f) * v


def wp_cometric(sol, q1, q2, resolution=None) -> complex:
    """``int q1 conj(q2) / mu_H`` over the fiber (``sol`` a solved fiber or a value of ``t``)."""
    sol = _fiber(sol, resolution)
    return complex(np.sum(_pairing_values(sol, q1, q2)))


# --- metric coefficients on an s grid ---------------------------------------
@dataclass
class MetricSample:
    """Metric coefficients on a grid; ``g`` is the coefficient of ``|dT/T|^2``."""

    s: np.ndarray
    g_wp: np.ndarray
    provenance: dict
    g_tz: np.ndarray | None = None
    ricci_ratio: np.ndarray | None = None  # -Ric / s^2, Ric the coefficient of |dT/T|^2
    sK: np.ndarray | None = None  # s * Gaussian curvature of the WP metric
    notes: dict | None = None

    @property
    def x(self):
        """``log|T| = -1/s``, the variable of the finite differences."""
        return -1.0 / np.asarray(self.s)


def wp_metric_coefficient(s_grid, arg=0.0, resolution=None) -> MetricSample:
    """``g(s) = 1 / G(q_s, q_s)`` on the grid, with the leading ratio ``g / (pi s^3)``."""
    from .grafting import family_from_s

    s_grid = np.asarray(s_grid, dtype=float)
    g = []
    res_used = None
    for s in s_grid:
        fam = family_from_s(s, arg)
        sol = hyperbolic_fiber(fam.t, resolution)
        q = qd_basis(fam.t)
        G = wp_cometric(sol, q, q).real
        if not G > 0:
            raise InputError("non-positive WP pairing")
        g.append(1.0 / G)
        res_used = sol.disc.resolution
    g = np.array(g)
    prov = {"newton_tol": 1e-9, "resolution": {k: v for k, v in (res_used or {}).items() if k != "pou"}, "arg_t": float(arg)}
    ms = MetricSample(s_grid, g, prov)
    ms.notes = {"leading_ratio": (g / (np.pi * s_grid**3)).tolist()}
    return ms


def model_metric_sample(s_grid) -> MetricSample:
    """Synthetic sample ``g = pi s^3`` exactly."""
    s_grid = np.asarray(s_grid, dtype=float)
    return MetricSample(s_grid, np.pi * s_grid**3, {"synthetic": "pi s^3"})


def model_curvature_oracle(s):
    """Gaussian curvature of ``pi (ds^2 / s + s^3 dtheta^2)``.

    For ``E ds^2 + G dtheta^2``: ``K = -(1 / (2 sqrt(EG))) d/ds (G_s / sqrt(EG))``;
    here ``sqrt(EG) = pi s`` and ``G_s / sqrt(EG) = 3 s``, so ``K = -3 / (2 pi s)``.
    """
    return -3.0 / (2.0 * np.pi * np.asarray(s, dtype=float))


def ricci_and_curvature(ms: MetricSample, noise_ratio=0.5) -> MetricSample:
    """Ricci form and Gaussian curvature of ``g |dT/T|^2`` by finite differences in ``x = log|T|``.

    ``Ric = -(1/4) (log g)'' |dT/T|^2`` and ``K = -(log g)'' / (2 g)``. Needs at
    least 7 uniformly spaced ``x`` values; results use the five-point
    stencil (NaN at the two outer points on each side) and the three-point
    stencil serves as the noise check.
    """
    from .errors import PrecisionError

    x = ms.x
    if len(x) < 7:
        raise InputError("ricci_and_curvature needs at least 7 grid points")
    dx = np.diff(x)
    if np.max(np.abs(dx - dx.mean())) > 1e-9 * abs(dx.mean()):
        raise InputError("grid must be uniform in x = log|T|")
    h = dx.mean()
    L = np.log(ms.g_wp)
    d2 = np.full(len(x), np.nan)
    d2[1:-1] = (L[2:] - 2 * L[1:-1] + L[:-2]) / h**2
    d4 = np.full(len(x), np.nan)
    d4[2:-2] = (-L[4:] + 16 * L[3:-1] - 30 * L[2:-2] + 16 * L[1:-3] - L[:-4]) / (12 * h**2)
    sel = np.isfinite(d4)
    gap = np.abs(d2[sel] - d4[sel])
    if np.any(gap > noise_ratio * np.abs(d4[sel])):
        raise PrecisionError(
            f"second differences dominated by noise (gap {gap.max():.3g}); use a wider x step or a finer solver grid"
        )
    s = np.asarray(ms.s)
    K = -d4 / (2 * ms.g_wp)
    out = MetricSample(s, ms.g_wp, dict(ms.provenance), ms.g_tz, d4 / (4 * s**2), s * K, dict(ms.notes or {}))
    out.notes.update(
        {
            "ricci_target": 0.75,
            "sK_oracle": float(-3 / (2 * np.pi)),
            "sK_reference": float(-3 * np.pi / 4),
            "stencil_gap": gap.tolist(),
        }
    )
    return out


# --- integrand profiles -------------------------------------------------------
def integrand_profile(sol, q1, q2, where="neck", resolution=None):
    """Angular integral of ``q1 conj(q2) / mu_H`` along the neck or a cusp.

    ``where="neck"``: returns ``(u, density)`` with ``u = log|z/16| / log|T|``
    (the plumbing coordinate ``log|q_A| / log|T|`` up to ``O(z)``) and the
    density taken against ``du dtheta``; then ``dx = du / s``. A puncture name returns ``(rho, density)``
    with ``rho = 1/Y`` and the density against ``dY dtheta``.
    """
    from . import elliptic_solver as es

    sol = _fiber(sol, resolution)
    d = sol.disc
    hz = d.fiber.area_density(d.z) * np.exp(2 * sol.f)
    v = (q1(d.z) * np.conj(q2(d.z))).real / hz  # per |dz|^2
    if where == "neck":
        la = d.fiber.log_abs_t
        inv_s = 1.0 / d.fiber.s
        cols = np.nonzero((d.x > la) & (d.x < 0))[0]
        dens = []
        for i in cols:
            idx = d.index[i]
            zz = d.z[idx]
            dens.append(np.mean(v[idx] * np.abs(zz) ** 2) * 2 * np.pi * inv_s)
        u = (np.log(16) - d.x[cols]) * d.fiber.s
        return u[::-1], np.array(dens)[::-1]
    # along a cusp: chart density v |dz/d chart|^2 equals v * h_chart / h_z
    Y, m = es.cusp_profile(d, v * d.h / hz, where)
    return 1.0 / Y, 2 * np.pi * m


def profile_power(s_values, profiles, u=0.5):
    """Fitted power of the neck density at fixed ``u`` across fibers (``-3`` for the basis)."""
    from .expansions import leading_exponent

    vals = [np.interp(u, pu, pd) for pu, pd in profiles]
    return leading_exponent(np.asarray(s_values), np.asarray(vals))


# --- Takhtajan-Zograf ----------------------------------------------------------
def tz_cometric(sol, q1, q2, forcing="inf", resolution=None):
    """``int E_i q1 conj(q2) / mu_H`` with ``E_i`` the Eisenstein solution of the hyperbolic fiber metric."""
    from . import elliptic_solver as es

    sol = _fiber(sol, resolution)
    E = es.eisenstein(sol.disc, forcing, f=sol.f, op=sol.op).E
    return complex(np.sum(_pairing_values(sol, q1, q2, weight=E)))


def tz_metric(s_grid, forcing="inf", arg=0.0, resolution=None) -> MetricSample:
    """TZ coefficient ``g_TZ = G_TZ / G_WP^2`` of ``|dT/T|^2`` beside ``g_WP = 1 / G_WP``.

    The pairing weights the integrand by ``E_i`` itself. Notes carry the ratio
    ``g_TZ / g_WP``, its fitted power in ``s``, ``g_TZ / s^4`` and the domination
    constant ``max g_TZ / g_WP``.
    """
    from .expansions import leading_exponent
    from .grafting import family_from_s

    s_grid = np.asarray(s_grid, dtype=float)
    gw, gt = [], []
    for s in s_grid:
        fam = family_from_s(s, arg)
        sol = hyperbolic_fiber(fam.t, resolution)
        q = qd_basis(fam.t)
        G = wp_cometric(sol, q, q).real
        Gt = tz_cometric(sol, q, q, forcing).real
        if not (G > 0 and Gt > 0):
            raise InputError("non-positive pairing")
        gw.append(1 / G)
        gt.append(Gt / G**2)
    gw, gt = np.array(gw), np.array(gt)
    ratio = gt / gw
    ms = MetricSample(s_grid, gw, {"forcing": forcing, "arg_t": float(arg), "weighting": "E_i"}, g_tz=gt)
    ms.notes = {
        "ratio": ratio.tolist(),
        "ratio_power": float(leading_exponent(s_grid, ratio)) if len(s_grid) > 1 else None,
        "g_tz_over_s4": (gt / s_grid**4).tolist(),
        "domination_constant": float(ratio.max()),
    }
    return ms
