"""Boundary surfaces of Euclidean domains and their differential geometry.

Every surface is an immersion X of the unit parameter sphere into R^3. Local
charts around a parameter point u are c(alpha, beta) = normalize(u + alpha e1
+ beta e2), with (e1, e2) the deterministic tangent basis of
:func:`narrow_escape.quadrature.tangent_basis`, so the chart is unit speed
and orthogonal at its origin.

Conventions
-----------
* ``nu`` is the outward unit normal, used for all fluxes.
* The second fundamental form and the shape operator use the inward normal,
  so the unit sphere has principal curvatures +1.
* Principal frames satisfy E1 x E2 = nu.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .quadrature import gauss_legendre, sphere_rule, tangent_basis

__all__ = [
    "GeometryError",
    "SurfaceGeometry",
    "Ellipsoid",
    "SurfaceOfRevolution",
    "ParametrizedSurface",
    "unit_ball",
    "sphere",
    "ellipsoid",
    "CurvatureData",
    "WindowSpec",
    "WindowChart",
    "DomainMeasures",
    "fundamental_forms",
    "curvature_at",
    "boundary_exponential",
    "geodesic_flow",
    "make_window",
    "window_chart",
    "ambient_distance",
    "boundary_distance",
    "measures",
    "admissible_radius",
    "distance_normal_derivative",
    "distance_law_order",
]


class GeometryError(ValueError):
    """Raised for degenerate charts, failed shooting or inadmissible windows."""


def _normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------


class SurfaceGeometry:
    """Closed surface given as an immersion of the unit sphere.

    Subclasses implement :meth:`point`. Analytic subclasses override
    :meth:`chart_derivatives`, :meth:`locate` and :meth:`geodesic_accel`.

    Attributes
    ----------
    kind : str
        Shape tag, used by configuration and output.
    center : ndarray
        A point inside the domain (used for locating and volume moments).
    orientation : int
        +1 if X_alpha x X_beta points outward, -1 otherwise.
    fd_step : float
        Parameter-space step of the finite-difference chart derivatives.
    """

    kind = "generic"

    def __init__(self, center=(0.0, 0.0, 0.0), fd_step: float = 2e-3):
        self.center = np.asarray(center, dtype=float)
        self.fd_step = float(fd_step)
        self.orientation = 1

    def _fix_orientation(self):
        u, w = sphere_rule(8)
        X, Xa, Xb = self.chart_derivatives(u)[:3]
        n = np.cross(Xa, Xb)
        vol = np.sum(w * np.sum((X - self.center) * n, axis=-1)) / 3.0
        if vol == 0.0:
            raise GeometryError("surface encloses no volume")
        self.orientation = 1 if vol > 0 else -1

    # -- to override -------------------------------------------------------

    def point(self, u):
        raise NotImplementedError

    def chart_derivatives(self, u):
        """X and its first and second chart derivatives at unit vectors ``u``.

        Returns (X, Xa, Xb, Xaa, Xab, Xbb), each of shape (..., 3).
        Central differences of fourth order in the chart.
        """
        u = np.asarray(u, dtype=float)
        e1, e2 = tangent_basis(u)
        h = self.fd_step

        def Y(a, b):
            return self.point(_normalize(u + a * e1 + b * e2))

        y0 = self.point(u)
        ya1, ym1 = Y(h, 0), Y(-h, 0)
        ya2, ym2 = Y(2 * h, 0), Y(-2 * h, 0)
        yb1, yn1 = Y(0, h), Y(0, -h)
        yb2, yn2 = Y(0, 2 * h), Y(0, -2 * h)
        Xa = (-ya2 + 8 * ya1 - 8 * ym1 + ym2) / (12 * h)
        Xb = (-yb2 + 8 * yb1 - 8 * yn1 + yn2) / (12 * h)
        Xaa = (-ya2 + 16 * ya1 - 30 * y0 + 16 * ym1 - ym2) / (12 * h * h)
        Xbb = (-yb2 + 16 * yb1 - 30 * y0 + 16 * yn1 - yn2) / (12 * h * h)
        A1 = Y(h, h) - Y(h, -h) - Y(-h, h) + Y(-h, -h)
        A2 = Y(2 * h, 2 * h) - Y(2 * h, -2 * h) - Y(-2 * h, 2 * h) + Y(-2 * h, -2 * h)
        Xab = (16 * A1 - A2) / (48 * h * h)
        return y0, Xa, Xb, Xaa, Xab, Xbb

    def locate(self, x, iters: int = 8):
        """Parameter vector of the surface point nearest ``x`` (Gauss-Newton)."""
        x = np.asarray(x, dtype=float)
        u = _normalize(x - self.center)
        for _ in range(iters):
            X, Xa, Xb = self.chart_derivatives(u)[:3]
            r = x - X
            g11 = np.sum(Xa * Xa, -1)
            g12 = np.sum(Xa * Xb, -1)
            g22 = np.sum(Xb * Xb, -1)
            b1 = np.sum(Xa * r, -1)
            b2 = np.sum(Xb * r, -1)
            det = g11 * g22 - g12 * g12
            da = (g22 * b1 - g12 * b2) / det
            db = (g11 * b2 - g12 * b1) / det
            e1, e2 = tangent_basis(u)
            u = _normalize(u + da[..., None] * e1 + db[..., None] * e2)
            if np.max(np.abs(da) + np.abs(db)) < 1e-14:
                break
        return u

    def geodesic_accel(self, x, v):
        """Ambient acceleration of the geodesic through ``x`` with velocity ``v``."""
        u = self.locate(x)
        X, Xa, Xb, Xaa, Xab, Xbb = self.chart_derivatives(u)
        nin = -self.orientation * _normalize(np.cross(Xa, Xb))
        g11 = np.sum(Xa * Xa, -1)
        g12 = np.sum(Xa * Xb, -1)
        g22 = np.sum(Xb * Xb, -1)
        b1 = np.sum(Xa * v, -1)
        b2 = np.sum(Xb * v, -1)
        det = g11 * g22 - g12 * g12
        c1 = (g22 * b1 - g12 * b2) / det
        c2 = (g11 * b2 - g12 * b1) / det
        l11 = np.sum(Xaa * nin, -1)
        l12 = np.sum(Xab * nin, -1)
        l22 = np.sum(Xbb * nin, -1)
        ii = l11 * c1 * c1 + 2 * l12 * c1 * c2 + l22 * c2 * c2
        return ii[..., None] * nin

    # -- derived -----------------------------------------------------------

    def normal(self, u):
        """Outward unit normal at parameter ``u``."""
        X, Xa, Xb = self.chart_derivatives(u)[:3]
        return self.orientation * _normalize(np.cross(Xa, Xb))

    def frame(self, u):
        """Points, outward normals and area elements at parameter ``u``."""
        X, Xa, Xb = self.chart_derivatives(u)[:3]
        c = np.cross(Xa, Xb)
        J = np.linalg.norm(c, axis=-1)
        return X, self.orientation * c / J[..., None], J

    def project(self, x):
        return self.point(self.locate(x))

    def describe(self) -> dict:
        return {"kind": self.kind, "center": self.center.tolist()}


class Ellipsoid(SurfaceGeometry):
    """Axis-aligned ellipsoid with semi-axes ``axes``; covers ball and spheres."""

    def __init__(self, axes=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), kind: Optional[str] = None):
        super().__init__(center)
        self.axes = np.asarray(axes, dtype=float)
        if self.axes.shape != (3,) or np.any(self.axes <= 0):
            raise GeometryError("ellipsoid semi-axes must be three positive numbers")
        if kind is None:
            if np.all(self.axes == 1.0) and np.all(self.center == 0.0):
                kind = "unit-ball"
            elif np.all(self.axes == self.axes[0]):
                kind = "sphere"
            else:
                kind = "ellipsoid"
        self.kind = kind

    @property
    def is_sphere(self) -> bool:
        return bool(np.all(self.axes == self.axes[0]))

    def point(self, u):
        return self.center + np.asarray(u) * self.axes

    def chart_derivatives(self, u):
        u = np.asarray(u, dtype=float)
        e1, e2 = tangent_basis(u)
        A = self.axes
        X = self.center + u * A
        z = np.zeros_like(u)
        return X, e1 * A, e2 * A, -u * A, z, -u * A

    def locate(self, x, iters: int = 0):
        return _normalize((np.asarray(x, dtype=float) - self.center) / self.axes)

    def geodesic_accel(self, x, v):
        # implicit form f = sum (x_i/a_i)^2 - 1: x'' = -(v.Hf.v / |grad f|^2) grad f
        q = (np.asarray(x) - self.center) / self.axes ** 2
        num = np.sum(v * v / self.axes ** 2, axis=-1)
        den = np.sum(q * q, axis=-1)
        return -(num / den)[..., None] * q

    def normal(self, u):
        return _normalize(np.asarray(u) / self.axes)

    def frame(self, u):
        u = np.asarray(u, dtype=float)
        A = self.axes
        g = u / A
        gn = np.linalg.norm(g, axis=-1)
        J = np.prod(A) * gn
        return self.center + u * A, g / gn[..., None], J

    def implicit(self, x):
        return np.sum(((np.asarray(x) - self.center) / self.axes) ** 2, axis=-1) - 1.0

    def describe(self) -> dict:
        return {"kind": self.kind, "axes": self.axes.tolist(), "center": self.center.tolist()}


class SurfaceOfRevolution(SurfaceGeometry):
    """Star-shaped surface r(theta) u about the z axis, theta the polar angle of u.

    ``profile`` must be smooth and even about both poles so the surface is C^2.
    """

    kind = "revolution"

    def __init__(self, profile: Callable, center=(0.0, 0.0, 0.0), fd_step: float = 2e-3):
        super().__init__(center, fd_step)
        self.profile = profile
        self._fix_orientation()

    def point(self, u):
        u = np.asarray(u, dtype=float)
        theta = np.arccos(np.clip(u[..., 2], -1.0, 1.0))
        return self.center + np.asarray(self.profile(theta))[..., None] * u

    def locate(self, x, iters: int = 0):
        return _normalize(np.asarray(x, dtype=float) - self.center)


class ParametrizedSurface(SurfaceGeometry):
    """Generic C^2 immersion ``func(u) -> (..., 3)`` of the unit sphere."""

    kind = "parametrized"

    def __init__(self, func: Callable, center=(0.0, 0.0, 0.0), fd_step: float = 2e-3):
        super().__init__(center, fd_step)
        self.func = func
        self._fix_orientation()

    def point(self, u):
        return np.asarray(self.func(np.asarray(u, dtype=float)), dtype=float)


def unit_ball() -> Ellipsoid:
    return Ellipsoid((1.0, 1.0, 1.0), kind="unit-ball")


def sphere(radius: float, center=(0.0, 0.0, 0.0)) -> Ellipsoid:
    return Ellipsoid((radius, radius, radius), center, kind="sphere")


def ellipsoid(a: float, b: float, c: float, center=(0.0, 0.0, 0.0)) -> Ellipsoid:
    return Ellipsoid((a, b, c), center, kind="ellipsoid")


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureData:
    """Principal curvatures and frame at a boundary point (inward-normal convention)."""

    lambda1: float
    lambda2: float
    E1: np.ndarray
    E2: np.ndarray
    H: float
    normal: np.ndarray
    point: np.ndarray

    def II(self, e):
        """Second fundamental form of the unit tangent vector(s) ``e``."""
        e = np.asarray(e, dtype=float)
        c1 = e @ self.E1
        c2 = e @ self.E2
        return self.lambda1 * c1 ** 2 + self.lambda2 * c2 ** 2

    def shape_operator(self):
        """3x3 matrix of the shape operator acting on tangent vectors."""
        return (self.lambda1 * np.outer(self.E1, self.E1)
                + self.lambda2 * np.outer(self.E2, self.E2))

    def swapped(self) -> "CurvatureData":
        """Frame with the principal labels exchanged, kept positively oriented."""
        return CurvatureData(self.lambda2, self.lambda1, self.E2.copy(), -self.E1.copy(),
                             self.H, self.normal, self.point)


def _param(shape: SurfaceGeometry, p):
    p = np.asarray(p, dtype=float)
    return shape.locate(p)


def fundamental_forms(shape: SurfaceGeometry, p, *, param: bool = False):
    """First and second fundamental forms at ``p`` in the local chart basis.

    Parameters
    ----------
    shape : SurfaceGeometry
    p : array_like, shape (3,)
        Surface point (projected onto the surface); a parameter unit vector
        when ``param`` is true.

    Returns
    -------
    I, II : ndarray (2, 2)
        II is taken with the inward normal.
    """
    u = np.asarray(p, dtype=float) if param else _param(shape, p)
    X, Xa, Xb, Xaa, Xab, Xbb = shape.chart_derivatives(u)
    c = np.cross(Xa, Xb)
    nc = np.linalg.norm(c)
    if nc < 1e-10 * np.linalg.norm(Xa) * np.linalg.norm(Xb):
        raise GeometryError("chart Jacobian is rank deficient")
    nin = -shape.orientation * c / nc
    I = np.array([[Xa @ Xa, Xa @ Xb], [Xa @ Xb, Xb @ Xb]])
    II = np.array([[Xaa @ nin, Xab @ nin], [Xab @ nin, Xbb @ nin]])
    return I, II


_REF_AXES = (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))


def curvature_at(shape: SurfaceGeometry, p, *, param: bool = False) -> CurvatureData:
    """Principal curvatures and a deterministic principal frame at ``p``.

    lambda1 >= lambda2. At umbilic points (|lambda1 - lambda2| below 1e-9
    relative) E1 is the projection of the z axis, or of the x axis when z is
    nearly normal. Otherwise the sign of E1 makes its largest component
    positive. E2 = nu x E1.
    """
    u = np.asarray(p, dtype=float) if param else _param(shape, p)
    X, Xa, Xb = shape.chart_derivatives(u)[:3]
    I, II = fundamental_forms(shape, u, param=True)
    lam, vec = scipy.linalg.eigh(II, I)
    l1, l2 = float(lam[1]), float(lam[0])
    nu = shape.orientation * _normalize(np.cross(Xa, Xb))
    if abs(l1 - l2) < 1e-9 * max(abs(l1), abs(l2), 1.0):
        for ref in _REF_AXES:
            t = ref - (ref @ nu) * nu
            if np.linalg.norm(t) > 0.1:
                break
        E1 = t / np.linalg.norm(t)
    else:
        E1 = vec[0, 1] * Xa + vec[1, 1] * Xb
        E1 = E1 - (E1 @ nu) * nu
        E1 /= np.linalg.norm(E1)
        k = int(np.argmax(np.abs(E1)))
        if E1[k] < 0:
            E1 = -E1
    E2 = np.cross(nu, E1)
    return CurvatureData(l1, l2, E1, E2, 0.5 * (l1 + l2), nu, X)


def admissible_radius(shape: SurfaceGeometry, n_theta: int = 16) -> float:
    """Heuristic window-radius bound: a quarter of pi over the largest sampled curvature."""
    if isinstance(shape, Ellipsoid):
        A = shape.axes
        kmax = A.max() / A.min() ** 2
    else:
        u, _ = sphere_rule(n_theta)
        kmax = 0.0
        for ui in u[:: max(1, len(u) // 256)]:
            c = curvature_at(shape, ui, param=True)
            kmax = max(kmax, abs(c.lambda1), abs(c.lambda2))
    return 0.25 * math.pi / max(kmax, 1e-300)


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------


def _reproject(shape, x, v, speed):
    u = shape.locate(x)
    x = shape.point(u)
    n = shape.normal(u)
    v = v - np.sum(v * n, -1, keepdims=True) * n
    v *= (speed / np.maximum(np.linalg.norm(v, axis=-1), 1e-300))[..., None]
    return x, v


def geodesic_flow(shape: SurfaceGeometry, x0, v0, n_steps: int):
    """Integrate the geodesic equation over unit time with ``n_steps`` RK4 steps.

    ``x0`` (..., 3) are surface points and ``v0`` (..., 3) tangent velocities;
    the geodesic reached at time 1 is exp_x0(v0). The state is re-projected
    onto the surface and tangent plane after every step.
    """
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    speed = np.linalg.norm(v, axis=-1)
    moving = speed > 0
    if not np.any(moving):
        return x
    h = 1.0 / n_steps
    acc = shape.geodesic_accel
    for _ in range(n_steps):
        k1x, k1v = v, acc(x, v)
        x2, v2 = x + 0.5 * h * k1x, v + 0.5 * h * k1v
        k2x, k2v = v2, acc(x2, v2)
        x3, v3 = x + 0.5 * h * k2x, v + 0.5 * h * k2v
        k3x, k3v = v3, acc(x3, v3)
        x4, v4 = x + h * k3x, v + h * k3v
        k4x, k4v = v4, acc(x4, v4)
        xn = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        vn = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        vn = np.where(moving[..., None], vn, v)
        xn = np.where(moving[..., None], xn, x)
        x, v = _reproject(shape, xn, vn, np.where(moving, speed, 1.0))
        v = np.where(moving[..., None], v, 0.0)
    return x


def _n_steps(length: float, scale: float | None = None) -> int:
    scale = length if scale is None else scale
    h = min(scale, 0.01) / 20.0 if scale > 0 else 1.0
    return max(20, int(math.ceil(length / h)))


def boundary_exponential(shape: SurfaceGeometry, x0, V, s: float, *, with_error: bool = False):
    """exp_{x0}(s V) for a unit tangent vector ``V``.

    RK4 in ambient coordinates with step min(s, 0.01)/20. With
    ``with_error`` the result of a run at half the step count is used for a
    Richardson error estimate, returned as a second value.
    """
    x0 = shape.project(np.asarray(x0, dtype=float))
    V = np.asarray(V, dtype=float)
    n = shape.normal(shape.locate(x0))
    if abs(np.linalg.norm(V) - 1.0) > 1e-8 or abs(V @ n) > 1e-8:
        raise GeometryError("V must be a unit tangent vector at x0")
    if s == 0.0:
        return (x0, 0.0) if with_error else x0
    m = _n_steps(abs(s))
    x = geodesic_flow(shape, x0, s * V, m)
    if not with_error:
        return x
    xc = geodesic_flow(shape, x0, s * V, max(1, m // 2))
    return x, float(np.linalg.norm(x - xc) / 15.0)


def ambient_distance(x, y):
    """Euclidean chord |x - y| (the ambient distance d_g in a flat ambient space)."""
    return np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)


def boundary_distance(shape: SurfaceGeometry, x, y, *, tol: float = 1e-12, max_iter: int = 30,
                      return_direction: bool = False):
    """Intrinsic distance d_h(x, y) by geodesic shooting with Newton refinement.

    Returns the distance, and with ``return_direction`` also the unit initial
    direction at x of the minimizing geodesic.
    """
    x = shape.project(np.asarray(x, dtype=float))
    y = shape.project(np.asarray(y, dtype=float))
    d = np.linalg.norm(y - x)
    if d == 0.0:
        return (0.0, np.zeros(3)) if return_direction else 0.0
    cx = curvature_at(shape, x)
    B = np.stack([cx.E1, cx.E2], axis=1)
    w = B.T @ (y - x)
    n_steps = _n_steps(d)

    def shoot(w2):
        return geodesic_flow(shape, x, B @ w2, n_steps)

    for _ in range(max_iter):
        z = shoot(w)
        ny = shape.normal(shape.locate(z))
        ty = np.eye(3) - np.outer(ny, ny)
        r = ty @ (y - z)
        if np.linalg.norm(r) < tol * max(1.0, d):
            break
        h = 1e-6 * max(np.linalg.norm(w), 1e-3)
        J = np.empty((3, 2))
        for k in range(2):
            dw = np.zeros(2)
            dw[k] = h
            J[:, k] = (shoot(w + dw) - shoot(w - dw)) / (2 * h)
        step = np.linalg.lstsq(ty @ J, r, rcond=None)[0]
        w = w + step
        if np.linalg.norm(w) > 10 * d + 1.0:
            raise GeometryError("geodesic shooting diverged")
    else:
        raise GeometryError("geodesic shooting did not converge")
    dist = float(np.linalg.norm(w))
    if return_direction:
        return dist, B @ w / dist
    return dist


# ---------------------------------------------------------------------------
# Windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowSpec:
    """Absorbing geodesic ellipse: centre, radius eps, axis ratio a and principal frame."""

    center: np.ndarray
    eps: float
    a: float
    frame: CurvatureData

    def __post_init__(self):
        if not (self.eps > 0):
            raise GeometryError("window radius must be positive")
        if not (0.0 < self.a <= 1.0):
            raise GeometryError("window axis ratio a must lie in (0, 1]")

    def describe(self) -> dict:
        f = self.frame
        return {
            "center": self.center.tolist(),
            "eps": self.eps,
            "a": self.a,
            "lambda1": f.lambda1,
            "lambda2": f.lambda2,
            "H": f.H,
            "E1": f.E1.tolist(),
            "E2": f.E2.tolist(),
            "normal": f.normal.tolist(),
        }


def make_window(shape: SurfaceGeometry, center, eps: float, a: float = 1.0,
                check_admissible: bool = True) -> WindowSpec:
    """Project ``center`` onto the surface, compute its frame and validate eps."""
    c = shape.project(np.asarray(center, dtype=float))
    frame = curvature_at(shape, c)
    if check_admissible:
        bound = admissible_radius(shape)
        if eps >= bound:
            raise GeometryError(f"eps={eps} exceeds the admissible radius estimate {bound:.4g}")
    return WindowSpec(c, float(eps), float(a), frame)


class WindowChart:
    """Map s' in the unit disk to exp_{x*}(eps s1 E1 + eps a s2 E2)."""

    def __init__(self, shape: SurfaceGeometry, window: WindowSpec, fd_step: float = 1e-3):
        self.shape = shape
        self.window = window
        self.fd_step = fd_step
        self.n_steps = _n_steps(window.eps, window.eps)

    def tangent(self, s):
        w = self.window
        s = np.asarray(s, dtype=float)
        return w.eps * (s[..., :1] * w.frame.E1 + w.a * s[..., 1:2] * w.frame.E2)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        x0 = np.broadcast_to(self.window.center, s.shape[:-1] + (3,))
        return geodesic_flow(self.shape, x0, self.tangent(s), self.n_steps)

    def area_element(self, s):
        """|d_s1 Phi x d_s2 Phi| by fourth-order central differences."""
        s = np.asarray(s, dtype=float)
        h = self.fd_step
        e = np.eye(2)
        stack = []
        for k in range(2):
            for m in (2, 1, -1, -2):
                stack.append(s + m * h * e[k])
        P = self(np.stack(stack, axis=0))
        d1 = (-P[0] + 8 * P[1] - 8 * P[2] + P[3]) / (12 * h)
        d2 = (-P[4] + 8 * P[5] - 8 * P[6] + P[7]) / (12 * h)
        return np.linalg.norm(np.cross(d1, d2), axis=-1)

    def area(self, n_r: int = 12, n_theta: int = 24) -> float:
        r, wr = gauss_legendre(n_r, 0.0, 1.0)
        th = 2 * np.pi * np.arange(n_theta) / n_theta
        s = np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], axis=-1)
        J = self.area_element(s.reshape(-1, 2)).reshape(n_r, n_theta)
        return float(np.sum((wr * r)[:, None] * J) * 2 * np.pi / n_theta)

    def boundary_curve(self, n: int = 256):
        ph = 2 * np.pi * np.arange(n) / n
        return self(np.stack([np.cos(ph), np.sin(ph)], axis=-1))

    def pullback(self, x, iters: int = 20, tol: float = 1e-13):
        """Chart coordinates s' of surface points ``x`` (Newton in the tangent plane)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        w = self.window
        B = np.stack([w.frame.E1, w.frame.E2], axis=1)
        scale = np.array([w.eps, w.eps * w.a])
        s = (x - w.center) @ B / scale
        h = 1e-6
        for _ in range(iters):
            r = (x - self(s)) @ B
            J = np.empty(s.shape[:-1] + (2, 2))
            for k in range(2):
                ds = np.zeros(2)
                ds[k] = h
                J[..., :, k] = ((self(s + ds) - self(s - ds)) @ B) / (2 * h)
            step = np.linalg.solve(J, r[..., None])[..., 0]
            s = s + step
            if np.max(np.abs(step)) < tol:
                break
        return s


def window_chart(shape: SurfaceGeometry, w: WindowSpec) -> WindowChart:
    return WindowChart(shape, w)


def distance_normal_derivative(shape: SurfaceGeometry, x0, s):
    """d/d nu_y |x0 - y| at y = exp_{x0}(s1 E1 + s2 E2) and its quadratic model.

    ``s`` has shape (..., 2) in the principal frame at ``x0``; nu_y is the
    outward normal. Returns (numerical, model) with model
    (lambda1 s1^2 + lambda2 s2^2) / (2 |s|).
    """
    c = curvature_at(shape, x0)
    s = np.atleast_2d(np.asarray(s, dtype=float))
    x0 = np.broadcast_to(c.point, s.shape[:-1] + (3,))
    V = s[..., :1] * c.E1 + s[..., 1:2] * c.E2
    r = np.linalg.norm(s, axis=-1)
    y = geodesic_flow(shape, x0, V, _n_steps(float(r.max())))
    nu = shape.normal(shape.locate(y))
    d = y - x0
    num = np.sum(d * nu, -1) / np.linalg.norm(d, axis=-1)
    model = (c.lambda1 * s[..., 0] ** 2 + c.lambda2 * s[..., 1] ** 2) / (2 * r)
    return num, model


def distance_law_order(shape: SurfaceGeometry, x0, direction=(0.6, 0.8), r0: float = 0.08,
                       levels: int = 5):
    """Observed order of the error in the normal-derivative-of-distance law.

    Errors are taken at radii r0 2^-k along ``direction`` in the principal
    frame. Returns (orders, radii, errors); the orders are the successive
    log2 error ratios.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    radii = r0 * 0.5 ** np.arange(levels)
    num, model = distance_normal_derivative(shape, x0, radii[:, None] * d)
    err = np.abs(num - model)
    orders = np.log2(err[:-1] / err[1:])
    return orders, radii, err


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainMeasures:
    """Volume |M| and boundary area |dM| with quadrature error estimates."""

    volume: float
    area: float
    volume_error: float = 0.0
    area_error: float = 0.0

    def __post_init__(self):
        if not (self.volume > 0 and self.area > 0):
            raise GeometryError("domain measures must be positive")


def _measures_at(shape, n_theta):
    u, w = sphere_rule(n_theta)
    X, nu, J = shape.frame(u)
    area = float(np.sum(w * J))
    vol = float(np.sum(w * J * np.sum((X - shape.center) * nu, -1)) / 3.0)
    return vol, area


def measures(shape: SurfaceGeometry, n_theta: int = 48) -> DomainMeasures:
    """|M| by the divergence theorem and |dM| by surface quadrature.

    The error estimates are differences against a rule with 2/3 the nodes.
    """
    v1, a1 = _measures_at(shape, n_theta)
    v0, a0 = _measures_at(shape, max(4, (2 * n_theta) // 3))
    return DomainMeasures(v1, a1, abs(v1 - v0), abs(a1 - a0))
