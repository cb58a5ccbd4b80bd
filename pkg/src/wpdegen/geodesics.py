"""Short closed geodesic in the neck and its length law ``L(s) = 2 pi^2 s (1 + s e(s))``.

Collar coordinates: ``q_A = exp(-1/(s w) + i theta)`` with ``w`` in ``(1, 1/s)``;
the plumbing metric is ``pi s / sin(pi / w) * sqrt(dx^2 + dtheta^2)``,
``x = log|q_A| = -1/(s w)``. The hyperbolic metric of a solved fiber is
``e^F`` times this, with ``F`` sampled on a ``(x, theta)`` grid and
interpolated by a periodic bicubic spline.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import DomainError, InputError, SolverError

N_MODES = 8  # cos and sin pairs, 16 real Fourier coefficients


@dataclass(frozen=True)
class NeckCurve:
    """``w(theta) = 2 + h + sum_k a_k cos(k theta) + b_k sin(k theta)``."""

    s: float
    h: float = 0.0
    u: tuple = (0.0,) * (2 * N_MODES)  # (a_1, b_1, a_2, b_2, ...)

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([[self.h], self.u])

    @classmethod
    def from_coefficients(cls, s, c):
        c = np.asarray(c, dtype=float)
        return cls(float(s), float(c[0]), tuple(c[1:]))

    @classmethod
    def circle(cls, s, w, n_modes=N_MODES):
        return cls(float(s), float(w) - 2.0, (0.0,) * (2 * n_modes))

    @property
    def n_modes(self) -> int:
        return len(self.u) // 2

    def basis(self, theta):
        """Values and theta-derivatives of the basis functions, shape ``(1 + 2K, n)``."""
        k = np.arange(1, self.n_modes + 1)[:, None]
        c, s_ = np.cos(k * theta), np.sin(k * theta)
        phi = np.empty((1 + 2 * len(k), theta.size))
        dphi = np.empty_like(phi)
        phi[0], dphi[0] = 1.0, 0.0
        phi[1::2], phi[2::2] = c, s_
        dphi[1::2], dphi[2::2] = -k * s_, k * c
        return phi, dphi

    def w(self, theta):
        phi, dphi = self.basis(np.asarray(theta, dtype=float))
        c = self.coefficients
        return 2.0 + c @ phi, c @ dphi


@dataclass
class CollarMetric:
    """``e^F`` times the plumbing metric on the collar; ``F = None`` is the model."""

    s: float
    F: RectBivariateSpline | None = None
    w_range: tuple = (1.0, np.inf)
    provenance: dict = field(default_factory=dict)

    def conformal(self, w, theta, deriv=False):
        """``F`` and ``dF/dw`` at curve points."""
        if self.F is None:
            z = np.zeros_like(w)
            return (z, z) if deriv else z
        x = -1.0 / (self.s * w)
        th = np.mod(theta, 2 * np.pi)
        val = self.F.ev(x, th)
        if not deriv:
            return val
        return val, self.F.ev(x, th, dx=1) / (self.s * w**2)


def model_collar(s) -> CollarMetric:
    s = float(s)
    if not 0 < s < 1:
        raise InputError("s must lie in (0, 1)")
    return CollarMetric(s, None, (1.0, 1.0 / s), {"model": "plumbing"})


def solved_collar(sol, w_range=(1.5, 2.5), n_theta=128) -> CollarMetric:
    """Collar form of a solved fiber (``sol`` from ``solve_curvature`` on a ``PlumbingFamily``)."""
    from . import elliptic_solver as es
    from . import tps_uniformization as tps
    from .grafting import _plumb

    d = sol.disc
    fam = d.fiber
    s = fam.s
    lo, hi = w_range
    if not 1 < lo < 2 < hi < 1 / s:
        raise InputError("w_range must straddle 2 inside (1, 1/s)")
    xa, xb = -1 / (s * lo), -1 / (s * hi)
    nx = max(24, int(np.ceil((xb - xa) / d.dx)) + 1)
    x = np.linspace(xa - 3 * d.dx, xb + 3 * d.dx, nx + 6)
    pad = 4
    th = 2 * np.pi * np.arange(-pad, n_theta + pad) / n_theta
    X, TH = np.meshgrid(x, th, indexing="ij")
    q = np.exp(X + 1j * TH).ravel()
    z = tps.lambda_of_nome(q)
    _, t3, _ = tps._theta_q(q)
    dz_dq = t3**4 * z * (1 - z) / q
    F = es.evaluate(d, sol.f, z) + 0.5 * np.log(fam.area_density(z) * np.abs(dz_dq) ** 2 / _plumb(fam.T, q))
    spline = RectBivariateSpline(x, th, F.reshape(X.shape), kx=3, ky=3)
    prov = {"t": [float(np.real(fam.t)), float(np.imag(fam.t))], "n_theta_grid": d.resolution["n_theta"]}
    return CollarMetric(s, spline, (lo, hi), prov)


def curve_length(metric: CollarMetric, curve: NeckCurve, n: int = 256, gradient: bool = False):
    """Length of ``curve`` by the periodic trapezoid rule; with ``gradient`` also ``dL/dc``."""
    s = metric.s
    if abs(curve.s - s) > 1e-12 * s:
        raise InputError("curve and metric have different s")
    theta = 2 * np.pi * np.arange(n) / n
    phi, dphi = curve.basis(theta)
    c = curve.coefficients
    w, wp = 2.0 + c @ phi, c @ dphi
    lo, hi = max(1.0, metric.w_range[0]), min(1.0 / s, metric.w_range[1])
    if np.any(w <= lo) or np.any(w >= hi):
        raise DomainError(f"curve leaves the collar range ({lo:.3g}, {hi:.3g})")
    F, Fw = metric.conformal(w, theta, deriv=True)
    Q = wp**2 / (s**2 * w**4) + 1
    a = np.pi / w
    ell = np.exp(F) * np.pi * s / np.sin(a) * np.sqrt(Q)
    L = 2 * np.pi * np.mean(ell)
    if not gradient:
        return float(L)
    dlw = ell * (Fw + a / (w * np.tan(a)) - 2 * wp**2 / (s**2 * w**5 * Q))
    dlwp = ell * wp / (s**2 * w**4 * Q)
    g = 2 * np.pi * (phi @ dlw + dphi @ dlwp) / n
    return float(L), g


@dataclass
class Geodesic:
    curve: NeckCurve
    length: float
    hessian_eigenvalues: np.ndarray
    iterations: int
    saddle: bool
    history: list

    @property
    def mean_w(self) -> float:
        return 2.0 + self.curve.h


def _hessian(metric, c, s, step):
    n = c.size
    H = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        gp = curve_length(metric, NeckCurve.from_coefficients(s, c + e), gradient=True)[1]
        gm = curve_length(metric, NeckCurve.from_coefficients(s, c - e), gradient=True)[1]
        H[:, j] = (gp - gm) / (2 * step)
    return 0.5 * (H + H.T)


def locate_geodesic(metric: CollarMetric, init: NeckCurve | None = None, tol=1e-12, max_iter=40, fd_step=1e-6) -> Geodesic:
    """Newton solve of ``dL/dc = 0`` in the mean height and Fourier coefficients of ``w``."""
    s = metric.s
    curve = init or NeckCurve.circle(s, 2.0)
    c = curve.coefficients.copy()
    scale = 2 * np.pi**2 * s
    history = []
    for it in range(1, max_iter + 1):
        L, g = curve_length(metric, NeckCurve.from_coefficients(s, c), gradient=True)
        H = _hessian(metric, c, s, fd_step)
        step = np.linalg.solve(H, -g)
        history.append(float(np.max(np.abs(g)) / scale))
        lam = 1.0
        while True:
            try:
                curve_length(metric, NeckCurve.from_coefficients(s, c + lam * step))
                break
            except DomainError:
                lam *= 0.5
                if lam < 1e-6:
                    raise SolverError("Newton step leaves the collar", history)
        c = c + lam * step
        if np.max(np.abs(lam * step)) < tol:
            break
    else:
        raise SolverError(f"no convergence in {max_iter} Newton steps", history)
    curve = NeckCurve.from_coefficients(s, c)
    L = curve_length(metric, curve)
    eig = np.linalg.eigvalsh(_hessian(metric, c, s, fd_step)) / scale
    return Geodesic(curve, L, eig, it, bool(eig.min() <= 0), history)


def solved_geodesic(s, arg=0.0, resolution=None, init=None) -> Geodesic:
    """Closed geodesic of the hyperbolic fiber with ``ilog|T| = s``."""
    from .grafting import family_from_s
    from .pairings import hyperbolic_fiber

    fam = family_from_s(s, arg)
    return locate_geodesic(solved_collar(hyperbolic_fiber(fam.t, resolution)), init=init)


@dataclass
class LengthLaw:
    s: np.ndarray
    e: np.ndarray
    series: object
    report: object

    @property
    def constant(self) -> float:
        """Smallest ``C`` with ``|L / (2 pi^2 s) - 1| <= C s`` on the samples."""
        return float(np.max(np.abs(self.e)))


def length_law_fit(s, L, order=1, J=None) -> LengthLaw:
    """Fit ``e(s) = (L / (2 pi^2 s) - 1) / s`` by a log-power series up to ``s^order``."""
    from .expansions import fit_log_series

    s = np.asarray(s, dtype=float)
    L = np.asarray(L, dtype=float)
    if s.size < 8 or s.shape != L.shape:
        raise InputError("length_law_fit needs at least 8 (s, L) samples")
    e = (L / (2 * np.pi**2 * s) - 1) / s
    series, report = fit_log_series(s, e, order, J)
    return LengthLaw(s, e, series, report)
