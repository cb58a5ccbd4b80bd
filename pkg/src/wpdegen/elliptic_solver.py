"""Overset finite-difference solver on a fiber of the family.

Charts:

* the cylinder ``xi = log z = x + i theta``, ``x`` from ``log|t| - X`` to ``X``,
  uniform in both directions, periodic in ``theta``;
* one polar patch per finite puncture ``p`` (``1`` and ``t``), in
  ``eta = log q_p = -Y + i phi`` with ``q_p = q(1 - z/p)`` the exact cusp
  coordinate, for ``y_min <= Y <= y_max``.

Cylinder nodes with ``Y_p > y_cut`` (where the cylinder cannot resolve the
cusp) and the innermost patch ring are fringe nodes, filled by bicubic
Lagrange interpolation from the other chart inside one sparse system; the
few cylinder nodes with ``Y_p > y_hole`` are dropped. The two
cylinder ends and the outer patch rings sit deep in exact cusps and carry
the model Dirichlet-to-Neumann condition: the zero mode gets the decaying
Robin condition ``u_Y = -u/Y`` (indicial root 1, not -2) and mode ``k``
gets ``u_Y = -(k + 1/(Y(kY + 1))) u``.

``Delta`` is the positive Laplacian ``-(1/h)(d_x^2 + d_theta^2)`` of the
metric ``h |d xi|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import tps_uniformization as tps
from .errors import ConfigError, InputError, SolverError
from .grafting import PlumbingFamily, smooth_step

LOG16 = float(np.log(16.0))

DEFAULT_RESOLUTION = {
    "n_theta": "auto",
    "min_n_theta": 96,
    "blend_nodes": 8,
    "x_cap": 12.0,
    "y_min": 3.5,
    "y_max": 14.0,
    "y_cut": 4.0,
    "y_hole": 8.0,
    "pou": (3.55, 3.95),
}
_BOUNDS = {"n_theta": (32, 1024), "x_cap": (6.0, 30.0), "y_min": (2.5, 5.0), "y_max": (8.0, 30.0)}


class ThricePuncturedSphere:
    """The exact hyperbolic sphere minus ``{0, 1, inf}`` (no grafting)."""

    t = 1.0 + 0j
    log_abs_t = 0.0
    punctures = ("0", "1", "inf")

    def area_density(self, z):
        return tps.tps_area_density(z)

    def curvature(self, z):
        return -np.ones(np.shape(z))


def _cusp_height(name, t, z):
    """``Y = -log|q|`` in the exact cusp coordinate of the named puncture."""
    z = np.asarray(z, dtype=complex)
    if name == "inf":
        w = 1 / z
    elif name == "0":
        w = z / t
    elif name == "1":
        w = 1 - z
    elif name == "t":
        w = 1 - z / t
    else:
        raise InputError(f"unknown puncture {name!r}")
    return -np.log(np.abs(tps.nome(w)))


@dataclass
class Patch:
    name: str
    point: complex
    Y: np.ndarray
    phi: np.ndarray
    z: np.ndarray  # (nY, nphi)
    jac2: np.ndarray  # |dz/deta|^2
    offset: int = 0

    @property
    def shape(self):
        return (len(self.Y), len(self.phi))

    @property
    def dY(self):
        return float(self.Y[1] - self.Y[0])


@dataclass
class FiberDiscretization:
    """Grid data, node classes and the global index map of one fiber."""

    fiber: object
    resolution: dict
    x: np.ndarray
    theta: np.ndarray
    active: np.ndarray  # cylinder (nx, nth) bool
    fringe: np.ndarray  # cylinder fringe owner: -1 or patch number
    index: np.ndarray  # cylinder global index, -1 in holes
    patches: list
    n_dof: int
    h: np.ndarray = field(repr=False)  # metric density per dof, in its chart
    z: np.ndarray = field(repr=False)  # fiber point per dof
    weights: np.ndarray = field(repr=False)  # area quadrature weights per dof
    kind: np.ndarray = field(repr=False)  # 0 interior, 1 fringe, 2 boundary
    interp: dict = field(repr=False)  # dof -> (donor dofs, coefficients)
    boundary: list = field(repr=False)  # (ring dofs, inner dofs, Y, sign, step)
    y_end: dict = field(default_factory=dict)

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def dtheta(self):
        return float(self.theta[1] - self.theta[0])

    def mesh_report(self) -> dict:
        return {
            "n_dof": int(self.n_dof),
            "cylinder_nodes": int(self.active.sum()),
            "patch_nodes": [int(np.prod(p.shape)) for p in self.patches],
            "modes": int(len(self.theta)),
            "max_spacing": max(self.dx, self.dtheta, *(p.dY for p in self.patches)),
            "min_spacing": min(self.dx, self.dtheta, *(p.dY for p in self.patches)),
            "fringe_nodes": int((self.kind == 1).sum()),
        }


def _auto_n_theta(fiber, res):
    """Smallest even count with ``blend_nodes`` nodes across the middle blend annulus."""
    n = int(res["min_n_theta"])
    if isinstance(fiber, PlumbingFamily):
        width = (fiber.u2 - fiber.u1) * abs(fiber.log_abs_t)
        n = max(n, int(np.ceil(2 * np.pi * res["blend_nodes"] / width)))
    return n + n % 2


def _resolve(resolution, fiber=None) -> dict:
    res = dict(DEFAULT_RESOLUTION)
    res.update(resolution or {})
    if res["n_theta"] == "auto":
        res["n_theta"] = _auto_n_theta(fiber, res)
    for key, (lo, hi) in _BOUNDS.items():
        if not lo <= float(res[key]) <= hi:
            raise ConfigError(f"resolution {key}={res[key]} outside [{lo}, {hi}]")
    if int(res["n_theta"]) % 2:
        raise ConfigError("n_theta must be even")
    a, b = res["pou"]
    if not res["y_min"] < a < b <= res["y_cut"] < res["y_hole"] < res["y_max"] - 1:
        raise ConfigError("need y_min < pou <= y_cut < y_hole < y_max - 1")
    res["n_theta"] = int(res["n_theta"])
    return res


def _lagrange4(frac):
    """Cubic Lagrange weights for nodes -1, 0, 1, 2 at offset ``frac`` in [0, 1)."""
    f = frac
    return np.array([-f * (f - 1) * (f - 2) / 6, (f + 1) * (f - 1) * (f - 2) / 2, -(f + 1) * f * (f - 2) / 2, (f + 1) * f * (f - 1) / 6])


def _dtn_matrix(n, dth, Y):
    """Circulant map from ring values to the decaying normal derivative ``u_Y``."""
    k = np.abs(2 * np.sin(np.pi * np.arange(n) / n)) / dth
    d = np.where(k > 0, -k - 1 / (Y * (k * Y + 1)), -1 / Y)
    return np.real(np.fft.ifft(d[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0))


def _fiber_patches(fiber):
    if isinstance(fiber, PlumbingFamily):
        return [("1", 1 + 0j), ("t", complex(fiber.t))]
    if isinstance(fiber, ThricePuncturedSphere):
        return [("1", 1 + 0j)]
    raise InputError("fiber must be a PlumbingFamily or ThricePuncturedSphere")


def discretize(fiber, resolution=None) -> FiberDiscretization:
    """Build the overset grid of ``fiber`` (a ``PlumbingFamily`` or the exact sphere)."""
    _fiber_patches(fiber)
    res = _resolve(resolution, fiber)
    n = res["n_theta"]
    dth = 2 * np.pi / n
    t = complex(fiber.t)
    la = float(np.log(abs(t)))
    X = float(res["x_cap"])
    nx = int(round((2 * X - la) / dth)) + 1
    x = np.linspace(la - X, X, nx)
    theta = dth * np.arange(n)
    XX, TH = np.meshgrid(x, theta, indexing="ij")
    zc = np.exp(XX + 1j * TH)

    pdefs = _fiber_patches(fiber)
    Ycyl = np.zeros((len(pdefs), nx, n))
    for k, (name, p) in enumerate(pdefs):
        near = np.abs(zc / p - 1) < 0.9
        with np.errstate(divide="ignore"):
            Ycyl[k][near] = _cusp_height(name, t, zc[near])
    hole_of = Ycyl > res["y_hole"]
    hole = hole_of.any(axis=0)
    if hole[[0, -1]].any():
        raise ConfigError("puncture hole reaches the cylinder ends")
    active = ~hole
    fringe = -np.ones((nx, n), dtype=int)
    for k in range(len(pdefs)):
        fringe[(Ycyl[k] > res["y_cut"]) & active] = k

    index = -np.ones((nx, n), dtype=int)
    index[active] = np.arange(int(active.sum()))
    off = int(active.sum())
    patches = []
    ny = int(round((res["y_max"] - res["y_min"]) / dth)) + 1
    Yp = np.linspace(res["y_min"], res["y_max"], ny)
    for name, p in pdefs:
        q = np.exp(-Yp[:, None] + 1j * theta[None, :])
        lam = tps.lambda_of_nome(q)
        _, th3, _ = tps._theta_q(q)
        jac2 = abs(p) ** 2 * np.abs(th3**4 * lam * (1 - lam)) ** 2
        patches.append(Patch(name, p, Yp, theta.copy(), p * (1 - lam), jac2, off))
        off += ny * n
    n_dof = off

    z = np.empty(n_dof, dtype=complex)
    h = np.empty(n_dof)
    kind = np.zeros(n_dof, dtype=int)
    weights = np.empty(n_dof)
    z[: index.max() + 1] = zc[active]
    h[: index.max() + 1] = fiber.area_density(zc[active]) * np.abs(zc[active]) ** 2
    a, b = res["pou"]
    psi_c = smooth_step((Ycyl - a) / (b - a)).sum(axis=0)
    wx = np.full(nx, 1.0)
    wx[[0, -1]] = 0.5
    cyl_w = (wx[:, None] * (1 - psi_c))[active] * dth * (x[1] - x[0])
    weights[: index.max() + 1] = cyl_w * h[: index.max() + 1]
    kind[index[fringe >= 0]] = 1
    kind[index[0]] = 2
    kind[index[-1]] = 2
    for P in patches:
        sl = slice(P.offset, P.offset + ny * n)
        z[sl] = P.z.ravel()
        h[sl] = (fiber.area_density(P.z.ravel()) * P.jac2.ravel())
        wy = np.full(ny, 1.0)
        wy[-1] = 0.5
        w2 = (wy * smooth_step((Yp - a) / (b - a)))[:, None] * np.ones(n)[None, :]
        weights[sl] = w2.ravel() * P.dY * dth * h[sl]
        kk = kind[sl].reshape(ny, n)
        kk[0] = 1
        kk[-1] = 2
        kind[sl] = kk.ravel()

    d = FiberDiscretization(fiber, res, x, theta, active, fringe, index, patches, n_dof, h, z, weights, kind, {}, [])
    _build_interpolation(d, pdefs)
    _build_boundaries(d)
    return d


def _cylinder_stencil(d, zpts):
    """Donor dofs and weights (``m x 16``) for cylinder interpolation at ``zpts``."""
    xi = np.log(np.asarray(zpts, dtype=complex))
    n = len(d.theta)
    fx = (xi.real - d.x[0]) / d.dx
    ft = np.mod(xi.imag, 2 * np.pi) / d.dtheta
    ix = np.floor(fx).astype(int)
    it = np.floor(ft).astype(int)
    if np.any(ix < 1) or np.any(ix > len(d.x) - 3):
        raise ConfigError("interpolation point outside the cylinder")
    wx = _lagrange4(fx - ix)
    wt = _lagrange4(ft - it)
    cols = []
    coef = []
    for a in range(4):
        for b in range(4):
            cols.append(d.index[ix - 1 + a, np.mod(it - 1 + b, n)])
            coef.append(wx[a] * wt[b])
    return np.array(cols).T, np.array(coef).T


def _patch_stencil(d, P, zpts):
    q = tps.nome(1 - np.asarray(zpts, dtype=complex) / P.point)
    Y = -np.log(np.abs(q))
    phi = np.mod(np.angle(q), 2 * np.pi)
    n = len(P.phi)
    fy = (Y - P.Y[0]) / P.dY
    fp = phi / d.dtheta
    iy = np.floor(fy).astype(int)
    ip = np.floor(fp).astype(int)
    if np.any(iy < 2) or np.any(iy > len(P.Y) - 3):
        raise ConfigError("cylinder fringe falls outside the patch interior; refine or move y_hole")
    wy = _lagrange4(fy - iy)
    wp = _lagrange4(fp - ip)
    cols = []
    coef = []
    for a in range(4):
        for b in range(4):
            cols.append(P.offset + (iy - 1 + a) * n + np.mod(ip - 1 + b, n))
            coef.append(wy[a] * wp[b])
    return np.array(cols).T, np.array(coef).T


def _build_interpolation(d, pdefs):
    for k, P in enumerate(d.patches):
        rows = d.index[d.fringe == k]
        cols, coef = _patch_stencil(d, P, d.z[rows])
        for r, c, w in zip(rows, cols, coef):
            d.interp[int(r)] = (c, w)
        n = len(P.phi)
        rows = P.offset + np.arange(n)
        cols, coef = _cylinder_stencil(d, d.z[rows])
        if np.any(cols < 0) or np.any(d.kind[cols] != 0):
            raise ConfigError("patch fringe donors are not interior cylinder nodes; refine n_theta")
        for r, c, w in zip(rows, cols, coef):
            d.interp[int(r)] = (c, w)


def _build_boundaries(d):
    fib = d.fiber
    t = complex(fib.t)
    n = len(d.theta)
    ends = [("inf", d.index[-1], d.index[-2], d.index[-3]), ("0", d.index[0], d.index[1], d.index[2])]
    for name, ring, in1, in2 in ends:
        Y = float(np.mean(_cusp_height(name, t, d.z[ring])))
        d.boundary.append((ring, in1, in2, Y, d.dx))
        d.y_end[name] = Y
    for P in d.patches:
        base = P.offset + (len(P.Y) - 1) * n
        ring = base + np.arange(n)
        d.boundary.append((ring, ring - n, ring - 2 * n, float(P.Y[-1]), P.dY))
        d.y_end[P.name] = float(P.Y[-1])


def _grid_laplacian(idx, h, d1, d2, rows_mask):
    """Rows of ``-(1/h)(flat 5-point Laplacian)`` on a grid with periodic second axis."""
    m = rows_mask
    c = idx[m]
    ii, jj = np.nonzero(m)
    n2 = idx.shape[1]
    hc = h[c]
    R, C, V = [c], [c], [(2 / d1**2 + 2 / d2**2) / hc]
    for di, dj, dd in ((1, 0, d1), (-1, 0, d1), (0, 1, d2), (0, -1, d2)):
        nb = idx[ii + di, np.mod(jj + dj, n2)]
        if np.any(nb < 0):
            raise SolverError("interior stencil touches a hole")
        R.append(c)
        C.append(nb)
        V.append(-1 / (dd**2 * hc))
    return np.concatenate(R), np.concatenate(C), np.concatenate(V)


@dataclass
class Operator:
    """Assembled pieces: ``Lh`` (interior rows of ``Delta``) and constraint rows ``C``."""

    Lh: sp.csr_matrix
    C: sp.csr_matrix
    interior: np.ndarray
    bc_scale: np.ndarray  # per dof: 1/(2 Y) on boundary rings, else 0

    def system(self, diag):
        """``Delta + diag`` on interior rows, constraints elsewhere."""
        return (self.Lh + sp.diags(np.where(self.interior, diag, 0.0)) + self.C).tocsc()


def assemble(d: FiberDiscretization) -> Operator:
    n = len(d.theta)
    interior = d.kind == 0
    # cylinder
    kind2 = np.full(d.index.shape, -1)
    kind2[d.active] = d.kind[d.index[d.active]]
    R, C, V = _grid_laplacian(d.index, d.h, d.dx, d.dtheta, kind2 == 0)
    Rs, Cs, Vs = [R], [C], [V]
    for P in d.patches:
        idx = P.offset + np.arange(P.shape[0] * n).reshape(P.shape)
        R, C, V = _grid_laplacian(idx, d.h, P.dY, d.dtheta, d.kind[idx] == 0)
        Rs.append(R)
        Cs.append(C)
        Vs.append(V)
    Lh = sp.csr_matrix((np.concatenate(Vs), (np.concatenate(Rs), np.concatenate(Cs))), shape=(d.n_dof,) * 2)

    Rs, Cs, Vs = [], [], []
    for r, (cols, w) in d.interp.items():
        Rs += [np.array([r]), np.full(16, r)]
        Cs += [np.array([r]), cols]
        Vs += [np.ones(1), -w]
    bc_scale = np.zeros(d.n_dof)
    for ring, in1, in2, Y, step in d.boundary:
        D = _dtn_matrix(n, d.dtheta, Y)
        rr = np.repeat(ring, n)
        Rs += [ring, in1 * 0 + ring, ring, rr]
        Cs += [ring, in1, in2, np.tile(ring, n)]
        Vs += [np.full(n, 1.5 / step), np.full(n, -2 / step), np.full(n, 0.5 / step), -D.ravel()]
        bc_scale[ring] = 1 / (2 * Y)
    Cm = sp.csr_matrix((np.concatenate(Vs), (np.concatenate(Rs), np.concatenate(Cs))), shape=(d.n_dof,) * 2)
    return Operator(Lh, Cm, interior, bc_scale)


def _field(d, data):
    """Node values of ``data`` (an array over dofs, a callable of ``z`` or a scalar)."""
    if callable(data):
        return np.asarray(data(d.z), dtype=float)
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full(d.n_dof, float(arr))
    if arr.shape != (d.n_dof,):
        raise InputError(f"field has shape {arr.shape}, expected ({d.n_dof},)")
    if not np.all(np.isfinite(arr)):
        raise InputError("field has non-finite values")
    return arr


def _factor(A):
    try:
        return splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:  # singular factor
        raise SolverError(f"sparse factorization failed: {exc}") from exc


def apply_operator(d, op, u, f=None):
    """``(Delta + 2) u`` on interior nodes of the metric ``e^(2f) h``; zero elsewhere."""
    u = _field(d, u)
    scale = 1.0 if f is None else np.exp(-2 * _field(d, f))
    return np.where(op.interior, scale * (op.Lh @ u) + 2 * u, 0.0)


def inner(d, u, v):
    """Area-form pairing of two node fields (partition-of-unity quadrature)."""
    return float(np.sum(d.weights * _field(d, u) * _field(d, v)))


@dataclass
class LinearSolution:
    u: np.ndarray
    residual: float
    norm_ratio: float  # ||u|| / ||h|| in the fiber L^2 norm
    condition: float


def solve_linearized(d, h, f=None, op=None) -> LinearSolution:
    """Solve ``(Delta_g + 2) u = h`` for ``g = e^(2f) g_d`` (``f = None``: the grid metric)."""
    op = op or assemble(d)
    hv = _field(d, h)
    scale = np.ones(d.n_dof) if f is None else np.exp(-2 * _field(d, f))
    A = (sp.diags(scale) @ op.Lh + sp.diags(np.where(op.interior, 2.0, 0.0)) + op.C).tocsc()
    rhs = np.where(op.interior, hv, 0.0)
    for ring, *_ in d.boundary:
        rhs[ring] = op.bc_scale[ring] * np.mean(hv[ring])
    u = _factor(A).solve(rhs)
    if not np.all(np.isfinite(u)):
        raise SolverError("linear solve produced non-finite values")
    r = A @ u - rhs
    res = float(np.max(np.abs(r[op.interior]))) if op.interior.any() else 0.0
    # cheap conditioning diagnostic: ratio of row scales
    rows = np.abs(A).max(axis=1).toarray().ravel()
    nh = np.sqrt(inner(d, hv, hv))
    ratio = float(np.sqrt(inner(d, u, u)) / nh) if nh > 0 else 0.0
    return LinearSolution(u, res, ratio, float(rows.max() / rows.min()))


@dataclass
class CurvatureSolution:
    f: np.ndarray
    history: list
    K0: np.ndarray
    disc: FiberDiscretization = field(repr=False)
    op: Operator = field(repr=False)

    @property
    def residual(self):
        return self.history[-1]

    def sup_f(self) -> float:
        return float(np.max(np.abs(self.f)))

    def curvature(self) -> np.ndarray:
        """Discrete curvature ``e^(-2f)(K0 + Delta f)`` of the solved metric at interior nodes."""
        K = np.exp(-2 * self.f) * (self.K0 + self.op.Lh @ self.f)
        return K[self.op.interior]


def background_curvature(d, op, mode="analytic"):
    """Curvature of the grid metric at the nodes.

    ``analytic`` evaluates the fiber's exact formula; ``discrete`` applies the
    grid Laplacian to ``log h`` so that an exactly hyperbolic metric is
    reproduced up to truncation error.
    """
    if mode == "analytic":
        return np.asarray(d.fiber.curvature(d.z), dtype=float)
    if mode == "discrete":
        return np.where(op.interior, 0.5 * (op.Lh @ np.log(d.h)), -1.0)
    raise InputError(f"unknown curvature mode {mode!r}")


def solve_curvature(d, curvature="analytic", tol=1e-9, max_iter=50, op=None) -> CurvatureSolution:
    """Newton solve of ``Delta f + e^(2f) + K0 = 0`` from ``f = 0``.

    Steps are halved while the residual grows. Raises ``SolverError`` with the
    residual history when ``max_iter`` steps do not reach ``tol``.
    """
    op = op or assemble(d)
    K0 = background_curvature(d, op, curvature)

    def resid(f):
        r = op.C @ f
        return np.where(op.interior, op.Lh @ f + np.exp(2 * f) + K0, r)

    f = np.zeros(d.n_dof)
    r = resid(f)
    hist = [float(np.max(np.abs(r)))]
    for _ in range(max_iter):
        if hist[-1] <= tol:
            return CurvatureSolution(f, hist, K0, d, op)
        J = op.system(2 * np.exp(2 * f))
        step = _factor(J).solve(-r)
        lam = 1.0
        while True:
            fn = f + lam * step
            rn = resid(fn)
            nr = float(np.max(np.abs(rn)))
            if nr < hist[-1] or lam < 1e-3:
                break
            lam /= 2
        f, r = fn, rn
        hist.append(nr)
    if hist[-1] <= tol:
        return CurvatureSolution(f, hist, K0, d, op)
    raise SolverError(f"Newton did not converge in {max_iter} steps", hist)


def cusp_height_field(d, name):
    """``Y`` of the named cusp at every node where it exceeds 2; zero elsewhere."""
    t = complex(d.fiber.t)
    z = d.z
    if name == "inf":
        near = np.abs(z) > 2.0
    elif name == "0":
        near = np.abs(z / t) < 0.5
    elif name in ("1", "t"):
        p = 1.0 if name == "1" else t
        near = np.abs(1 - z / p) < 0.9
    else:
        raise InputError(f"unknown puncture {name!r}")
    if name not in d.fiber.punctures:
        raise InputError(f"puncture {name!r} not on this fiber")
    Y = np.zeros(d.n_dof)
    Y[near] = _cusp_height(name, t, z[near])
    for P in d.patches:
        if P.name == name:
            Y[P.offset : P.offset + P.z.size] = np.repeat(P.Y, len(P.phi))
    return np.where(Y > 2.0, Y, 0.0)


@dataclass
class EisensteinSolution:
    puncture: str
    E: np.ndarray
    u: np.ndarray
    disc: FiberDiscretization = field(repr=False)

    def profile(self, name):
        """Ring means of ``E`` along the cusp ``name``: arrays ``(Y, mean E)``."""
        return cusp_profile(self.disc, self.E, name)

    def scattering(self, name, y_fit=(8.0, None)):
        """``L = lim Y * E`` at cusp ``name`` with a convergence estimate.

        The estimate is the spread of ``Y * mean E`` over the fitted window.
        """
        Y, m = self.profile(name)
        lo, hi = y_fit
        sel = (Y >= lo) & (Y <= (hi if hi is not None else Y.max()))
        v = Y[sel] * m[sel]
        return float(v[-1]), float(v.max() - v.min())


def cusp_profile(d, values, name):
    n = len(d.theta)
    if name in ("inf", "0"):
        cols = slice(None) if name == "inf" else slice(None, None, -1)
        t = complex(d.fiber.t)
        x = d.x[cols]
        Y = (x + LOG16) if name == "inf" else (np.log(16 * abs(t)) - x)
        idx = d.index[cols]
        ok = np.all(idx >= 0, axis=1) & (Y > 2)
        m = np.array([values[idx[i]].mean() for i in np.nonzero(ok)[0]])
        return Y[ok], m
    for P in d.patches:
        if P.name == name:
            vals = values[P.offset : P.offset + P.z.size].reshape(P.shape)
            return P.Y[1:].copy(), vals[1:].mean(axis=1)
    raise InputError(f"no cusp {name!r}")


def eisenstein(d, j, f=None, cutoff=(4.0, 5.0), op=None) -> EisensteinSolution:
    """``E_j = chi Y_j^2 + u`` with ``(Delta + 2) u = -(Delta + 2)(chi Y_j^2)``.

    ``u`` decays at every cusp (indicial root 1), so ``E_j`` grows like
    ``Y_j^2`` at cusp ``j`` and vanishes like ``L / Y`` at the others.
    ``f`` is the conformal factor of the hyperbolic metric over the grid metric.
    """
    if j not in d.fiber.punctures:
        raise InputError(f"forcing puncture {j!r} not on this fiber")
    op = op or assemble(d)
    Y = cusp_height_field(d, j)
    a, b = cutoff
    base = smooth_step((Y - a) / (b - a)) * Y**2
    scale = np.ones(d.n_dof) if f is None else np.exp(-2 * _field(d, f))
    A = (sp.diags(scale) @ op.Lh + sp.diags(np.where(op.interior, 2.0, 0.0)) + op.C).tocsc()
    rhs = -(A @ base)
    for ring, *_ in d.boundary:
        rhs[ring] = 0.0
    u = _factor(A).solve(rhs)
    return EisensteinSolution(j, base + u, u, d)


def evaluate(d, values, zpts):
    """Bicubic interpolation of a node field at fiber points."""
    zpts = np.atleast_1d(np.asarray(zpts, dtype=complex))
    out = np.empty(zpts.shape, dtype=float)
    use = -np.ones(zpts.shape, dtype=int)
    t = complex(d.fiber.t)
    mid = np.mean(d.resolution["pou"])
    for k, P in enumerate(d.patches):
        near = np.abs(1 - zpts / P.point) < 0.9
        Yp = np.zeros(zpts.shape)
        Yp[near] = _cusp_height(P.name, t, zpts[near])
        use[Yp > mid] = k
    cyl = use < 0
    if np.any(cyl):
        xi = np.log(zpts[cyl])
        if np.any(xi.real < d.x[2]) or np.any(xi.real > d.x[-3]):
            raise InputError("point beyond the truncated cusp ends")
        cols, coef = _cylinder_stencil(d, zpts[cyl])
        if np.any(cols < 0):
            raise InputError("point inside a puncture hole")
        out[cyl] = np.sum(values[cols] * coef, axis=1)
    for k, P in enumerate(d.patches):
        m = use == k
        if np.any(m):
            cols, coef = _patch_stencil(d, P, zpts[m])
            out[m] = np.sum(values[cols] * coef, axis=1)
    return out


def cusp_tail_area(d) -> float:
    """Area beyond the truncated cusp boundaries, ``2 pi / Y`` per cusp."""
    return float(sum(2 * np.pi / Y for Y in d.y_end.values()))


def integrate(d, values, f=None) -> float:
    """``int values dA`` for the grid metric (or ``e^(2f)`` times it); cusp tails excluded."""
    w = d.weights if f is None else d.weights * np.exp(2 * _field(d, f))
    return float(np.sum(w * _field(d, values)))
