"""Nystrom boundary-element solver for the Neumann Green's function.

Conventions
-----------
E(x, y) = -1/(4 pi |x - y|) is the fundamental solution (Delta E = delta).
S f(x) = int E(x, y) f(y) dy and N f(x) = 2 int d_{nu_y} E(x, y) f(y) dy with
the outward normal nu; the double-layer kernel is

    K(x, y) = d_{nu_y} E(x, y) = (y - x) . nu_y / (4 pi |x - y|^3),

and int K(x, .) = 1/2 for x on the boundary (Gauss). For harmonic v in M
and x on the boundary, v - 2 D v = -2 S[d_nu v] with D the operator of
kernel K.

The boundary Green's function G(x*, .) for a source x* on the boundary is
harmonic in M with Neumann data -1/|dM| + delta_{x*} and zero boundary mean.
It is split as

    G(x*, y) = phi(y) + alpha h(y) + v(y),
    phi = 1/(2 pi |y - x*|),  h = log(|y - x*| - (y - x*) . nu*),  alpha = -H/(4 pi),

where phi carries the point flux and alpha h cancels the 1/d part of the
Neumann data that comes from the mean curvature. The remainder v solves a
Neumann problem whose data is O(1/d) only through the anisotropic
(lambda1 - lambda2) cos(2 psi) part, and that part integrates to zero
around x*.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.special import eval_legendre

from .geometry import (CurvatureData, GeometryError, SurfaceGeometry, boundary_distance,
                       boundary_exponential, curvature_at, measures)
from .quadrature import graded_panels, sphere_rule, tangent_basis

__all__ = [
    "BemError",
    "kernel_E",
    "kernel_dE",
    "BoundaryMesh",
    "LayerOperator",
    "assemble_layers",
    "double_layer_row_sums",
    "NeumannSolver",
    "GreenDecomposition",
    "solve_boundary_green",
    "g_sing",
    "evaluate_G_interior",
    "FSolution",
    "solve_F",
    "convergence_table",
    "ball_green_boundary",
    "ball_green_boundary_series",
    "ball_green_interior",
    "ball_R_star",
    "HOLDER_MU",
]

HOLDER_MU = 0.9
FOUR_PI = 4.0 * math.pi


class BemError(ArithmeticError):
    """Singular or unresolved boundary-element system."""


def kernel_E(x, y):
    """Fundamental solution -1/(4 pi |x - y|)."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    if np.any(r == 0.0):
        raise BemError("kernel_E evaluated at coincident points")
    return -1.0 / (FOUR_PI * r)


def kernel_dE(x, y, ny):
    """d E(x, y) / d nu_y = (y - x) . nu_y / (4 pi |x - y|^3)."""
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    return np.sum(d * ny, axis=-1) / (FOUR_PI * r ** 3)


# ---------------------------------------------------------------------------
# Mesh and polar rules
# ---------------------------------------------------------------------------


@dataclass
class BoundaryMesh:
    """Product-rule Nystrom nodes on a closed surface.

    Nodes are the images of a Gauss-Legendre x trapezoid rule on the
    parameter sphere; weights include the area element.
    """

    shape: SurfaceGeometry
    n_theta: int
    params: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    polar_levels: int = 6
    polar_n_t: int = 10
    polar_n_phi: int = 48

    @classmethod
    def build(cls, shape: SurfaceGeometry, n_theta: int = 36, **kw) -> "BoundaryMesh":
        u, w = sphere_rule(n_theta)
        X, nu, J = shape.frame(u)
        return cls(shape, n_theta, np.array(u), X, nu, w * J, **kw)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))

    @property
    def spacing(self) -> float:
        return math.sqrt(self.area / self.size)

    def gauss_integral(self, x) -> np.ndarray:
        """int d_nu E(x, .) for points x off the mesh (1 inside, 0 outside)."""
        x = np.atleast_2d(x)
        return np.array([np.sum(self.weights * kernel_dE(xi, self.points, self.normals)) for xi in x])

    def polar(self, centers):
        """Graded polar rules on the surface about each of ``centers`` (M, 3).

        Returns points (M, P, 3), outward normals and weights (M, P); every
        rule covers the whole surface.
        """
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        u0 = self.shape.locate(centers)
        t, wt = graded_panels(0.0, math.pi, self.polar_n_t, self.polar_levels)
        n_phi = self.polar_n_phi
        p = 2 * math.pi * np.arange(n_phi) / n_phi
        e1, e2 = tangent_basis(u0)
        dirs = np.cos(p)[None, :, None] * e1[:, None, :] + np.sin(p)[None, :, None] * e2[:, None, :]
        U = (np.cos(t)[None, :, None, None] * u0[:, None, None, :]
             + np.sin(t)[None, :, None, None] * dirs[:, None, :, :])
        U = U.reshape(len(u0), -1, 3)
        X, nu, J = self.shape.frame(U)
        w = np.outer(wt * np.sin(t), np.full(n_phi, 2 * math.pi / n_phi)).ravel()
        return X, nu, w[None, :] * J


# ---------------------------------------------------------------------------
# Layer operators
# ---------------------------------------------------------------------------


@dataclass
class LayerOperator:
    """Dense Nystrom matrix acting on nodal values, with its operator tag."""

    matrix: np.ndarray
    tag: str

    def apply(self, f):
        return self.matrix @ np.asarray(f, dtype=float)


def _pairwise(points):
    d = points[None, :, :] - points[:, None, :]
    r = np.linalg.norm(d, axis=-1)
    np.fill_diagonal(r, np.inf)
    return d, r


def _double_layer_matrix(mesh: BoundaryMesh):
    """Off-diagonal w_j K(x_i, y_j) (diagonal zero)."""
    d, r = _pairwise(mesh.points)
    K = np.einsum("ijk,jk->ij", d, mesh.normals) / (FOUR_PI * r ** 3)
    return K * mesh.weights[None, :]


def _single_layer_of_ones(mesh: BoundaryMesh, chunk: int = 64) -> np.ndarray:
    """int 1/|x_i - y| dy at every node by polar rules."""
    out = np.empty(mesh.size)
    for i0 in range(0, mesh.size, chunk):
        c = mesh.points[i0:i0 + chunk]
        Y, _, W = mesh.polar(c)
        r = np.linalg.norm(Y - c[:, None, :], axis=-1)
        out[i0:i0 + chunk] = np.sum(W / np.where(r > 0, r, np.inf), axis=1)
    return out


def double_layer_row_sums(mesh: BoundaryMesh, chunk: int = 64) -> np.ndarray:
    """int K(x_i, y) dy at every node by polar rules (1/2 on a smooth surface).

    Used as an independent check of the Gauss identity that fixes the
    diagonal of the assembled double layer.
    """
    out = np.empty(mesh.size)
    for i0 in range(0, mesh.size, chunk):
        c = mesh.points[i0:i0 + chunk]
        Y, nu, W = mesh.polar(c)
        d = Y - c[:, None, :]
        r = np.linalg.norm(d, axis=-1)
        K = np.sum(d * nu, axis=-1) / (FOUR_PI * np.where(r > 0, r, np.inf) ** 3)
        out[i0:i0 + chunk] = np.sum(W * K, axis=1)
    return out


def assemble_layers(mesh: BoundaryMesh):
    """Nystrom matrices (S, N, N*, P) acting on nodal values.

    S uses singularity subtraction with int 1/|x - y| computed by polar
    rules; N = 2D uses the Gauss identity on the diagonal; N* is the
    adjoint of N in the weighted inner product and P the area mean.
    """
    w = mesh.weights
    _, r = _pairwise(mesh.points)
    S = -w[None, :] / (FOUR_PI * r)
    ones = _single_layer_of_ones(mesh)
    np.fill_diagonal(S, 0.0)
    np.fill_diagonal(S, -(ones - np.sum(w[None, :] / r, axis=1)) / FOUR_PI)
    WK = _double_layer_matrix(mesh)
    D = WK.copy()
    np.fill_diagonal(D, 0.5 - WK.sum(axis=1))
    N = 2.0 * D
    Nstar = (N.T * w[None, :]) / w[:, None]
    P = np.tile(w / mesh.area, (mesh.size, 1))
    return (LayerOperator(S, "S"), LayerOperator(N, "N"), LayerOperator(Nstar, "N*"),
            LayerOperator(P, "P"))


class NeumannSolver:
    """Factorized bordered system for interior Neumann problems.

    Solves v - 2 D v + c = rhs with the side condition sum w v = m, where
    the double layer is discretized in subtraction form

        (v - 2Dv)_i = -2 sum_{j != i} w_j K_ij v_j + 2 (sum_{j != i} w_j K_ij) v_i.
    """

    def __init__(self, mesh: BoundaryMesh):
        self.mesh = mesh
        n = mesh.size
        WK = _double_layer_matrix(mesh)
        self._WK = WK
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = -2.0 * WK
        A[np.arange(n), np.arange(n)] = 2.0 * WK.sum(axis=1)
        A[:n, n] = 1.0
        # border row scaled to O(1) entries so the condition estimate reflects the operator
        self._wscale = float(np.mean(mesh.weights))
        A[n, :n] = mesh.weights / self._wscale
        self._A = A
        self._lu = linalg.lu_factor(A, check_finite=False)
        anorm = np.linalg.norm(A, 1)
        rc = linalg.lapack.dgecon(self._lu[0], anorm, norm="1")[0]
        if not rc > 1e-14:
            raise BemError("bordered Neumann system is numerically singular")
        self.condition = 1.0 / rc

    def solve(self, rhs, mean: float = 0.0):
        b = np.append(np.asarray(rhs, dtype=float), mean / self._wscale)
        x = linalg.lu_solve(self._lu, b, check_finite=False)
        return x[:-1], float(x[-1])

    def interpolate(self, y, rhs_y, v, c):
        """Off-node values from the discrete equation written at y."""
        y = np.atleast_2d(y)
        m = self.mesh
        d = m.points[None, :, :] - y[:, None, :]
        r = np.linalg.norm(d, axis=-1)
        K = np.einsum("ijk,jk->ij", d, m.normals) / (FOUR_PI * np.maximum(r, 1e-300) ** 3)
        K = np.where(r > 1e-14, K, 0.0) * m.weights[None, :]
        return (rhs_y - c + 2.0 * K @ v) / (2.0 * K.sum(axis=1))

    def solve_neumann(self, g_nodes, S_of_g, mean: float = 0.0):
        """Harmonic function with Neumann data g given -2 S[g] at the nodes."""
        return self.solve(-2.0 * S_of_g, mean)


def _single_layer_smooth(mesh: BoundaryMesh, g, targets, chunk: int = 64):
    """S[g] at boundary targets for a density evaluator g(points, normals)."""
    targets = np.atleast_2d(targets)
    out = np.empty(len(targets))
    for i0 in range(0, len(targets), chunk):
        c = targets[i0:i0 + chunk]
        Y, nu, W = mesh.polar(c)
        r = np.linalg.norm(Y - c[:, None, :], axis=-1)
        out[i0:i0 + chunk] = -np.sum(W * g(Y, nu) / np.where(r > 0, r, np.inf), axis=1) / FOUR_PI
    return out


def _single_layer_two_center(mesh: BoundaryMesh, g, targets, x_star, p: int = 4,
                             star_rule=None, chunk: int = 32):
    """S[g] at boundary targets for g singular at x_star.

    The integrand is split by the partition of unity
    chi = |y-x*|^p / (|y-x|^p + |y-x*|^p) into a part integrated by the
    polar rule about the target and a part integrated by the rule about x*.
    """
    targets = np.atleast_2d(targets)
    if star_rule is None:
        Y2, nu2, W2 = mesh.polar(x_star[None, :])
        Y2, nu2, W2 = Y2[0], nu2[0], W2[0]
        g2 = g(Y2, nu2)
    else:
        Y2, W2, g2 = star_rule
    r2s = np.linalg.norm(Y2 - x_star, axis=-1)
    out = np.empty(len(targets))
    for i0 in range(0, len(targets), chunk):
        c = targets[i0:i0 + chunk]
        Y1, nu1, W1 = mesh.polar(c)
        r1 = np.linalg.norm(Y1 - c[:, None, :], axis=-1)
        r1s = np.linalg.norm(Y1 - x_star, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            chi1 = r1s ** p / (r1 ** p + r1s ** p)
            f1 = np.where(r1 > 0, chi1 * g(Y1, nu1) / r1, 0.0)
        f1 = np.nan_to_num(f1, nan=0.0, posinf=0.0, neginf=0.0)
        r2 = np.linalg.norm(Y2[None, :, :] - c[:, None, :], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            chi2 = r2 ** p / (r2 ** p + r2s[None, :] ** p)
            f2 = np.where(r2 > 0, chi2 * g2[None, :] / r2, 0.0)
        f2 = np.nan_to_num(f2, nan=0.0, posinf=0.0, neginf=0.0)
        out[i0:i0 + chunk] = -(np.sum(W1 * f1, axis=1) + f2 @ W2) / FOUR_PI
    return out


# ---------------------------------------------------------------------------
# Green's function
# ---------------------------------------------------------------------------


def g_sing(frame: CurvatureData, d_g: float, d_h: float, e_hat) -> float:
    """Singular part 1/(2 pi d_g) - (H/4pi) log d_h + (II(e) - II(*e))/(16 pi)."""
    e = np.asarray(e_hat, dtype=float)
    e = e / np.linalg.norm(e)
    star_e = np.cross(frame.normal, e)
    aniso = frame.II(e) - frame.II(star_e)
    return 1.0 / (2 * math.pi * d_g) - frame.H * math.log(d_h) / FOUR_PI + aniso / (16 * math.pi)


@dataclass
class GreenDecomposition:
    """Boundary Green's function with source x* and its regular part.

    Attributes
    ----------
    v : ndarray
        Nodal values of the smooth remainder.
    c : float
        Border multiplier of the discrete Neumann system (tends to 0).
    R_star : float
        Extrapolated R(x*, x*).
    R_star_dirs : tuple
        Extrapolated limits along E1 and E2 separately.
    table : list of dict
        Samples {t, R_E1, R_E2} used in the extrapolation.
    """

    mesh: BoundaryMesh
    solver: NeumannSolver
    x_star: np.ndarray
    frame: CurvatureData
    v: np.ndarray
    c: float
    alpha: float
    R_star: float = float("nan")
    R_star_dirs: tuple = ()
    table: list = field(default_factory=list)
    mu: float = HOLDER_MU
    _star_rule: tuple = field(default=None, repr=False)

    # -- analytic pieces ---------------------------------------------------

    def _phi_h(self, y):
        z = np.asarray(y, dtype=float) - self.x_star
        r = np.linalg.norm(z, axis=-1)
        h = np.log(r - z @ self.frame.normal)
        return 1.0 / (2 * math.pi * r), h

    def neumann_data(self, y, nu):
        """Data of v: -1/|dM| - d_nu phi - alpha d_nu h."""
        z = y - self.x_star
        r = np.linalg.norm(z, axis=-1)
        n_star = self.frame.normal
        zn = np.sum(z * nu, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            dphi = -zn / (2 * math.pi * r ** 3)
            dh = (zn / r - nu @ n_star) / (r - z @ n_star)
            g = -1.0 / self.mesh.area - dphi - self.alpha * dh
        return np.where(r > 0, g, 0.0)

    def _rhs(self, y):
        return -2.0 * _single_layer_two_center(self.mesh, self.neumann_data, y, self.x_star,
                                               star_rule=self._star_rule)

    def v_at(self, y):
        """Smooth remainder at boundary points y (M, 3)."""
        y = np.atleast_2d(y)
        return self.solver.interpolate(y, self._rhs(y), self.v, self.c)

    def G(self, y):
        """G(x*, y) for boundary points y != x*."""
        y = np.atleast_2d(y)
        phi, h = self._phi_h(y)
        return phi + self.alpha * h + self.v_at(y)

    def G_nodes(self):
        phi, h = self._phi_h(self.mesh.points)
        return phi + self.alpha * h + self.v

    def R(self, y, d_h=None, e_hat=None):
        """Regular part G - g_sing at boundary points y (geodesic data optional)."""
        y = np.atleast_2d(y)
        G = self.G(y)
        out = np.empty(len(y))
        for k, yk in enumerate(y):
            if d_h is None:
                dh, e = boundary_distance(self.mesh.shape, self.x_star, yk, return_direction=True)
            else:
                dh, e = d_h[k], e_hat[k]
            out[k] = G[k] - g_sing(self.frame, float(np.linalg.norm(yk - self.x_star)), dh, e)
        return out

    def interior(self, x):
        """G(x, x*) for interior points x by the representation formula."""
        x = np.atleast_2d(x)
        m = self.mesh
        phi, h = self._phi_h(x)
        Y2, W2, g2 = self._star_rule
        r2 = np.linalg.norm(Y2[None, :, :] - x[:, None, :], axis=-1)
        Sg = -(g2[None, :] / r2) @ W2 / FOUR_PI
        d = m.points[None, :, :] - x[:, None, :]
        r = np.linalg.norm(d, axis=-1)
        K = np.einsum("ijk,jk->ij", d, m.normals) / (FOUR_PI * r ** 3)
        Dv = (K * m.weights[None, :]) @ self.v
        return phi + self.alpha * h + (-Sg + Dv)

    def boundary_mean(self) -> float:
        """Mean of G(x*, .) over the boundary; the singular part uses the polar rule."""
        Y2, W2, _ = self._star_rule
        phi, h = self._phi_h(Y2)
        ok = np.isfinite(phi)
        sing = np.sum(W2[ok] * (phi[ok] + self.alpha * h[ok]))
        return float((sing + np.sum(self.mesh.weights * self.v)) / self.mesh.area)


def _extrapolate(ts, vals, mu):
    # the t term absorbs the smooth part, which a pure t^mu fit turns into an O(t0) bias
    A = np.stack([np.ones_like(ts), ts ** mu, ts], axis=1)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    return float(coef[0])


def solve_boundary_green(mesh: BoundaryMesh, x_star, *, solver: Optional[NeumannSolver] = None,
                         t0: Optional[float] = None, n_t: int = 5, mu: float = HOLDER_MU,
                         extrapolate: bool = True) -> GreenDecomposition:
    """Solve for G(x*, .) on the boundary and extract R(x*, x*).

    R(x*, y) is sampled at y = exp_{x*}(t E_i), t = t0 2^-k, along both
    principal directions and extrapolated with the Hoelder model
    c0 + c1 t^mu + c2 t.
    """
    shape = mesh.shape
    x_star = shape.project(np.asarray(x_star, dtype=float))
    frame = curvature_at(shape, x_star)
    solver = solver or NeumannSolver(mesh)
    dec = GreenDecomposition(mesh, solver, x_star, frame, np.zeros(mesh.size), 0.0,
                             -frame.H / FOUR_PI, mu=mu)
    Y2, nu2, W2 = mesh.polar(x_star[None, :])
    dec._star_rule = (Y2[0], W2[0], dec.neumann_data(Y2[0], nu2[0]))
    rhs = dec._rhs(mesh.points)
    phi, h = dec._phi_h(mesh.points)
    # zero boundary mean of phi + alpha h + v
    Ys, Ws = Y2[0], W2[0]
    ps, hs = dec._phi_h(Ys)
    ok = np.isfinite(ps)
    mean_sing = float(np.sum(Ws[ok] * (ps[ok] + dec.alpha * hs[ok])))
    v, c = solver.solve(rhs, -mean_sing)
    dec.v, dec.c = v, c
    if extrapolate:
        t0 = t0 or 2.0 * mesh.spacing
        ts = t0 * 0.5 ** np.arange(n_t)
        ys, dh, es = [], [], []
        for E in (frame.E1, frame.E2):
            for t in ts:
                ys.append(boundary_exponential(shape, x_star, E, float(t)))
                dh.append(float(t))
                es.append(E)
        Rv = dec.R(np.array(ys), dh, es).reshape(2, n_t)
        lims = tuple(_extrapolate(ts, Rv[i], mu) for i in range(2))
        dec.R_star_dirs = lims
        dec.R_star = 0.5 * (lims[0] + lims[1])
        dec.table = [{"t": float(t), "R_E1": float(Rv[0, k]), "R_E2": float(Rv[1, k])}
                     for k, t in enumerate(ts)]
    return dec


def evaluate_G_interior(decomp: GreenDecomposition, x) -> np.ndarray:
    """G(x, x*) at interior points; warns through BemError if x hugs the mesh."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = decomp.mesh
    dist = np.min(np.linalg.norm(m.points[None, :, :] - x[:, None, :], axis=-1), axis=1)
    if np.any(dist < 0.5 * m.spacing):
        raise BemError("interior point closer to the boundary than half the mesh spacing")
    return decomp.interior(x)


# ---------------------------------------------------------------------------
# Auxiliary problem for F
# ---------------------------------------------------------------------------


@dataclass
class FSolution:
    """F with Delta F = -1, d_nu F = -|M|/|dM| and zero boundary mean.

    F = -|x - c|^2/6 + q + c0 with q harmonic.
    """

    mesh: BoundaryMesh
    solver: NeumannSolver
    center: np.ndarray
    q: np.ndarray
    q_c: float
    c0: float
    volume: float
    integral: float = float("nan")

    def _W(self, x):
        return -np.sum((x - self.center) ** 2, axis=-1) / 6.0

    def neumann_q(self, y, nu):
        return -self.volume / self.mesh.area + np.sum((y - self.center) * nu, axis=-1) / 3.0

    def boundary(self, y):
        y = np.atleast_2d(y)
        rhs = -2.0 * _single_layer_smooth(self.mesh, self.neumann_q, y)
        q = self.solver.interpolate(y, rhs, self.q, self.q_c)
        return self._W(y) + q + self.c0

    def nodes(self):
        return self._W(self.mesh.points) + self.q + self.c0

    def interior(self, x):
        x = np.atleast_2d(x)
        m = self.mesh
        d = m.points[None, :, :] - x[:, None, :]
        r = np.linalg.norm(d, axis=-1)
        K = np.einsum("ijk,jk->ij", d, m.normals) / (FOUR_PI * r ** 3)
        gq = self.neumann_q(m.points, m.normals)
        Sg = -(m.weights * gq / r).sum(axis=1) / FOUR_PI
        q = -Sg + (K * m.weights[None, :]) @ self.q
        return self._W(x) + q + self.c0

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        onb = np.abs(self.mesh.shape.implicit(x)) < 1e-10 if hasattr(self.mesh.shape, "implicit") \
            else np.zeros(len(x), bool)
        out = np.empty(len(x))
        if np.any(onb):
            out[onb] = self.boundary(x[onb])
        if np.any(~onb):
            out[~onb] = self.interior(x[~onb])
        return out


def solve_F(mesh: BoundaryMesh, volume: Optional[float] = None,
            solver: Optional[NeumannSolver] = None) -> FSolution:
    """Solve the auxiliary Neumann problem and integrate F over the domain.

    The volume integral uses Green's second identity with W = -|x - c|^2/6:
    int_M q = int (W d_nu q - q d_nu W), int_M W = -(1/30) int |x-c|^2 (x-c).nu.
    """
    shape = mesh.shape
    volume = volume or measures(shape).volume
    solver = solver or NeumannSolver(mesh)
    c = shape.center
    F = FSolution(mesh, solver, c, np.zeros(mesh.size), 0.0, 0.0, volume)
    rhs = -2.0 * _single_layer_smooth(mesh, F.neumann_q, mesh.points)
    q, qc = solver.solve(rhs, 0.0)
    F.q, F.q_c = q, qc
    w = mesh.weights
    W = F._W(mesh.points)
    F.c0 = -float(np.sum(w * (W + q))) / mesh.area
    xc = mesh.points - c
    dW = -np.sum(xc * mesh.normals, axis=-1) / 3.0
    dq = F.neumann_q(mesh.points, mesh.normals)
    int_q = float(np.sum(w * (W * dq - q * dW)))
    int_W = -float(np.sum(w * np.sum(xc * xc, -1) * np.sum(xc * mesh.normals, -1))) / 30.0
    F.integral = int_W + int_q + F.c0 * volume
    return F


# ---------------------------------------------------------------------------
# Refinement study
# ---------------------------------------------------------------------------


def convergence_table(shape: SurfaceGeometry, x_star, n_thetas=(16, 24, 36), oracle=None):
    """R(x*, x*) for a sequence of meshes; rows {n_theta, nodes, R_star, ...}."""
    rows = []
    for n in n_thetas:
        mesh = BoundaryMesh.build(shape, n)
        dec = solve_boundary_green(mesh, x_star)
        row = {"n_theta": int(n), "nodes": mesh.size, "R_star": dec.R_star,
               "R_star_E1": dec.R_star_dirs[0], "R_star_E2": dec.R_star_dirs[1],
               "condition": dec.solver.condition}
        if oracle is not None:
            row["abs_error"] = abs(dec.R_star - oracle)
            row["rel_error"] = abs(dec.R_star - oracle) / abs(oracle)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Unit-ball closed forms and series
# ---------------------------------------------------------------------------


def ball_green_boundary(d):
    """G(x, y) on the unit sphere as a function of the chord d = |x - y|."""
    d = np.asarray(d, dtype=float)
    return 1 / (2 * math.pi * d) + np.log(2 / (0.5 * d * d + d)) / FOUR_PI - 1 / (2 * math.pi)


def ball_green_boundary_series(gamma, lmax: int = 200):
    """Legendre series sum_{l=1}^{lmax} (2l+1)/(4 pi l) P_l(cos gamma)."""
    x = np.cos(np.asarray(gamma, dtype=float))
    l = np.arange(1, lmax + 1)
    P = eval_legendre(l[:, None], np.atleast_1d(x)[None, :])
    s = ((2 * l + 1) / (FOUR_PI * l)) @ P
    return s.reshape(np.shape(x))


def ball_green_interior(x, x_star):
    """G(x, x*) for the unit ball, x* on the sphere."""
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    r = np.linalg.norm(x - x_star, axis=-1)
    return 1 / (2 * math.pi * r) + np.log(2 / (1 - x @ x_star + r)) / FOUR_PI - 1 / (2 * math.pi)


def ball_R_star() -> float:
    """R(x*, x*) on the unit sphere: log 2/(4 pi) - 1/(2 pi)."""
    return math.log(2.0) / FOUR_PI - 1 / (2 * math.pi)
