"""Degenerating four-punctured spheres and their grafted metrics.

The fiber over ``t`` is ``P^1 \\ {0, t, 1, inf}``. Component A is seen in
``z`` (punctures 1, inf, node at 0) and component B in ``zeta = z/t``
(punctures 0, 1, node at inf). Near the node each component carries its
exact cusp coordinate ``q_A = q(z)``, ``q_B = q(t/z)`` (``q`` the modular
nome); then ``q_A q_B = T (1 + O(z) + O(t/z))`` with ``T = t/256``, and
the collar metric is the hyperbolic plumbing metric of ``q_A q_B = T``.
The asymptotic parameter of the family is ``s = ilog|T|``.

Three log-density blends glue the pieces:

* A side, at fixed height ``R_A = ilog|q_A|`` in ``[R1, R2]``: cusp metric to
  plumbing metric, both written in ``q_A`` (their ratio is ``1 + O(s^2)``).
* B side, the mirror image in ``q_B``.
* the middle of the collar, ``u = log|z| / log|t|`` in ``[0.4, 0.6]``, between
  the two plumbing charts (they differ by ``O(|t|^(1/2))``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import tps_uniformization as tps
from .collar_models import Chart, ConformalMetricField, ilog
from .errors import ConfigError, DomainError

S_MAX = 1.0 / 6.0
T_SCALE = 256.0
T_MAX = T_SCALE * np.exp(-1.0 / S_MAX)


def smooth_step(y, order=0):
    """C-infinity step: 0 for ``y <= 0``, 1 for ``y >= 1``; ``order`` selects the derivative."""
    y = np.asarray(y, dtype=float)
    inside = (y > 0) & (y < 1)
    yc = np.clip(y, 1e-6, 1 - 1e-6)
    phi = 1 / yc - 1 / (1 - yc)
    L = expit(-phi)
    if order == 0:
        return np.where(y >= 1, 1.0, np.where(inside, L, 0.0))
    dL = -L * (1 - L)
    d1 = -1 / yc**2 - 1 / (1 - yc) ** 2
    if order == 1:
        return np.where(inside, dL * d1, 0.0)
    d2 = 2 / yc**3 - 2 / (1 - yc) ** 3
    ddL = L * (1 - L) * (1 - 2 * L)
    return np.where(inside, ddL * d1**2 + dL * d2, 0.0)


def _plumb(T, q):
    """Plumbing area density for ``|T| < |q| < 1`` (no domain check)."""
    aq = np.abs(q)
    u = np.log(aq) / np.log(abs(T))
    s = -1.0 / np.log(abs(T))
    return np.pi**2 * s**2 / (aq**2 * np.sin(np.pi * u) ** 2)


@dataclass(frozen=True)
class PlumbingFamily:
    """Fiber ``P^1 \\ {0, t, 1, inf}`` with its grafting data."""

    t: complex
    R1: float
    R2: float
    u1: float = 0.4
    u2: float = 0.6

    @property
    def T(self) -> complex:
        return self.t / T_SCALE

    @property
    def s(self) -> float:
        return ilog(abs(self.T))

    @property
    def s_raw(self) -> float:
        return ilog(abs(self.t))

    @property
    def log_abs_t(self) -> float:
        return float(np.log(abs(self.t)))

    punctures = ("0", "t", "1", "inf")

    def puncture_points(self):
        return {"0": 0j, "t": complex(self.t), "1": 1 + 0j, "inf": complex(np.inf)}

    def euler_characteristic(self) -> int:
        # sphere atlas {z, zeta}: chi(P^1) - #punctures
        return 2 - len(self.punctures)

    def zeta(self, z):
        return np.asarray(z) / self.t

    def from_zeta(self, zeta):
        return np.asarray(zeta) * self.t

    # --- pieces ---------------------------------------------------------
    def _side(self, w, dw_dz, bulk_area):
        """Log-density of one side: cusp/tps blended with plumbing at fixed cusp height.

        Returns dict with log density and the ingredients of its flat Laplacian.
        """
        q = tps.nome(w)
        aq = np.abs(q)
        ell = np.log(np.minimum(aq, 1 - 1e-16))  # harmonic; ell < 0
        R = -1.0 / ell
        y = (R - self.R1) / (self.R2 - self.R1)
        chi = 1.0 - smooth_step(y)
        neck = chi > 0
        dq = tps.nome_derivative(w) * dw_dz
        grad2 = np.abs(dq / q) ** 2  # |grad ell|^2 in the z plane
        logb = np.full(np.shape(w), np.nan)
        nb = chi < 1
        logb[nb] = np.log(bulk_area(nb))
        logp = np.full(np.shape(w), np.nan)
        if np.any(neck):
            logp[neck] = np.log(_plumb(self.T, q[neck]) * np.abs(dq[neck]) ** 2)
        loga = np.where(neck, chi * np.nan_to_num(logp), 0.0) + np.where(nb, (1 - chi) * np.nan_to_num(logb), 0.0)
        # D = log(plumb/cusp) = 2 log(x/sin x), x = -pi s ell
        s = self.s
        x = np.where(neck, -np.pi * s * ell, 0.5)
        D = 2 * np.log(x / np.sin(x))
        dD = 2 * (1 / x - 1 / np.tan(x)) * (-np.pi * s)
        h = self.R2 - self.R1
        dchi = -smooth_step(y, 1) * R**2 / h
        ddchi = -(smooth_step(y, 2) * (R**2 / h) ** 2 + smooth_step(y, 1) * 2 * R**3 / h)
        lap_extra = grad2 * (2 * dchi * dD + D * ddchi)
        blend = (chi > 0) & (chi < 1)
        lap_extra = np.where(blend, lap_extra, 0.0)
        e_sum = np.where(neck, chi * np.exp(np.nan_to_num(logp)), 0.0) + np.where(
            nb, (1 - chi) * np.exp(np.nan_to_num(logb)), 0.0
        )
        return {"log": loga, "lap": 2 * e_sum + lap_extra, "chi": chi, "R": R, "blend": blend}

    def _side_A(self, z):
        return self._side(z, np.ones_like(z), lambda m: tps.tps_area_density(z[m]))

    def _side_B(self, z):
        t = self.t
        w = t / z
        return self._side(w, -t / z**2, lambda m: tps.tps_area_density(z[m] / t) / abs(t) ** 2)

    def _u(self, z):
        return np.log(np.abs(z)) / self.log_abs_t

    def _check(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if np.any(~np.isfinite(z)) or np.any(z == 0) or np.any(z == 1) or np.any(z == self.t):
            raise DomainError("evaluation at a puncture")
        return z

    def _evaluate(self, z, want_lap):
        z = self._check(z)
        u = self._u(z)
        m = smooth_step((u - self.u1) / (self.u2 - self.u1))
        logh = np.zeros(z.shape)
        lap = np.zeros(z.shape)
        blend = np.zeros(z.shape, dtype=bool)
        ia = m < 1
        ib = m > 0
        A = B = None
        if np.any(ia):
            A = self._side_A(z[ia])
            logh[ia] += (1 - m[ia]) * A["log"]
            lap[ia] += (1 - m[ia]) * A["lap"]
            blend[ia] |= A["blend"]
        if np.any(ib):
            B = self._side_B(z[ib])
            logh[ib] += m[ib] * B["log"]
            lap[ib] += m[ib] * B["lap"]
            blend[ib] |= B["blend"]
        mid = (m > 0) & (m < 1)
        blend |= mid
        if want_lap and np.any(mid):
            zm = z[mid]
            diff = lambda zz: self._side_B(zz)["log"] - self._side_A(zz)["log"]
            eps = 1e-3
            # radial log-derivative of (b - a), fourth order
            dr = (
                -diff(zm * np.exp(2 * eps)) + 8 * diff(zm * np.exp(eps)) - 8 * diff(zm * np.exp(-eps)) + diff(zm * np.exp(-2 * eps))
            ) / (12 * eps)
            Dm = diff(zm)
            la = self.log_abs_t
            width = (self.u2 - self.u1) * la
            y = (u[mid] - self.u1) / (self.u2 - self.u1)
            m1 = smooth_step(y, 1) / width
            m2 = smooth_step(y, 2) / width**2
            lap[mid] += (2 * m1 * dr + Dm * m2) / np.abs(zm) ** 2
        return logh, lap, blend

    def area_density(self, z):
        """Grafted area density ``h(z)`` (metric ``h |dz|^2``)."""
        logh, _, _ = self._evaluate(z, False)
        out = np.exp(logh)
        return out if np.ndim(z) else float(out[0])

    def curvature(self, z):
        """Gaussian curvature of the grafted metric, from exact blend derivatives."""
        logh, lap, _ = self._evaluate(z, True)
        out = -lap / (2 * np.exp(logh))
        return out if np.ndim(z) else float(out[0])

    def blend_mask(self, z):
        """True where ``z`` lies in one of the three blend annuli."""
        return self._evaluate(z, False)[2]

    def metric_field(self) -> ConformalMetricField:
        t = self.t
        zc = Chart(self.area_density, lambda p: np.isfinite(p) and p not in (0, 1, t))
        wc = Chart(lambda w: self.area_density(t * np.asarray(w)) * abs(t) ** 2, lambda p: np.isfinite(p) and p not in (0, 1, 1 / t))
        return ConformalMetricField({"z": zc, "zeta": wc}, {("z", "zeta"): (lambda z: z / t, lambda z: np.full(np.shape(z), 1 / t))})


def build_family(t, R1=None, R2=0.6) -> PlumbingFamily:
    """Family member at plumbing parameter ``t``; ``|t| <= T_MAX`` keeps ``s = ilog|t/256| <= 1/6``."""
    t = complex(t)
    if not 0 < abs(t) <= T_MAX * (1 + 1e-12):
        raise ConfigError(f"|t| must lie in (0, {T_MAX:.4g}]")
    s = ilog(abs(t) / T_SCALE)
    if R1 is None:
        R1 = max(0.4, 2.4 * s)
    if not R1 < R2 < 2 / np.pi:
        raise ConfigError("blend heights need R1 < R2 < 2/pi")
    return PlumbingFamily(t, R1, R2)


def family_from_s(s, arg=0.0, **kw) -> PlumbingFamily:
    """Member with ``ilog|t/256| = s`` and ``arg t = arg``."""
    return build_family(T_SCALE * np.exp(-1.0 / s + 1j * arg), **kw)


def grafted_density(fam: PlumbingFamily, z):
    return fam.area_density(z)


def curvature_defect(fam: PlumbingFamily, spacing: float = 0.02, margin: float = 5.0):
    """Sup of ``|K + 1|`` over a uniform ``(log|z|, arg z)`` sample of the fiber.

    Outside ``log|t| - margin <= log|z| <= margin`` the metric is an exact
    component metric, so the sample covers every blend annulus.
    """
    x = np.arange(fam.log_abs_t - margin, margin + spacing / 2, spacing)
    th = np.arange(0, 2 * np.pi, spacing)
    best = 0.0
    for chunk in np.array_split(x, max(1, len(x) // 200)):
        X, TH = np.meshgrid(chunk, th)
        z = np.exp(X + 1j * TH).ravel()
        best = max(best, float(np.max(np.abs(fam.curvature(z) + 1))))
    return best


def collar_quadrature(f, density, x_a, x_b, n_x=200, n_theta=64):
    """``int f h dA`` over ``x_a < log|z| < x_b``.

    Gauss-Legendre in ``x = log|z|`` on ``n_x`` nodes and the trapezoid rule in
    angle (exact for trigonometric data of degree below ``n_theta``).
    Returns ``(value, estimate)`` with the estimate from halving ``n_x``.
    """

    def run(nx):
        g, w = np.polynomial.legendre.leggauss(nx)
        x = 0.5 * (x_b - x_a) * g + 0.5 * (x_b + x_a)
        th = 2 * np.pi * np.arange(n_theta) / n_theta
        X, TH = np.meshgrid(x, th, indexing="ij")
        z = np.exp(X + 1j * TH)
        vals = f(z) * density(z) * np.abs(z) ** 2
        return float(0.5 * (x_b - x_a) * (w @ vals.sum(axis=1).real) * 2 * np.pi / n_theta)

    v = run(n_x)
    return v, abs(v - run(max(4, n_x // 2)))


def fiber_quadrature(fam: PlumbingFamily, f, area=None, resolution=None, tail_tol=1e-3):
    """``int_fiber f dA`` on the overset grid with its partition of unity.

    ``area`` is a ``ConformalMetricField`` whose ``"z"`` chart gives the area
    density; ``None`` means the grafted metric. Returns ``(value, estimate)``;
    the estimate combines a rerun on a 1.5x finer grid with the cusp tails beyond the
    grid, ``mean|f| * 2 pi / Y`` per cusp. A tail above ``tail_tol`` times ``int |f| dA``
    means ``f`` does not decay at a cusp: ``QuadratureError``.
    """
    from . import elliptic_solver as es
    from .errors import QuadratureError

    def run(res):
        d = es.discretize(fam, res)
        vals = np.asarray(f(d.z))
        w = d.weights
        if area is not None:
            w = w * area.density("z", d.z) / fam.area_density(d.z)
        tail = sum(np.mean(np.abs(vals[ring])) * 2 * np.pi / Y for ring, _, _, Y, _ in d.boundary)
        scale = max(abs(np.sum(w * vals)), float(np.sum(w * np.abs(vals))))
        return np.sum(w * vals), tail / scale, d.resolution["n_theta"]

    res = dict(resolution or {})
    v, tail, n = run(res)
    fine = int(round(1.5 * n / 2)) * 2
    res.update(n_theta=fine)
    v2, _, _ = run(res)
    if tail > tail_tol:
        raise QuadratureError(f"integrand does not decay at the cusps (relative tail {tail:.3g})")
    scale = max(abs(v), 1e-300)
    return (complex(v) if np.iscomplexobj(v) else float(v)), float(abs(v - v2) + tail * scale)
