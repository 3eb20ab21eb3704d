"""Normal operator of the X-ray transform on the unit disk and its ellipse variants.

Densities on the disk are stored as smooth factor times (1 - |t|^2)^(-1/2).
All weakly singular operators are evaluated in polar coordinates about the
target point t. Along the ray t + rho*omega the substitution
rho = c + h sin(psi), with h = sqrt((t.omega)^2 + 1 - |t|^2) and c = -t.omega,
turns the edge weight into a smooth integrand:

    (1 - |t + rho omega|^2)^(-1/2) d rho = d psi.

Operators (a in (0, 1], |s - t|_a^2 = (s1 - t1)^2 + a^2 (s2 - t2)^2):

    L_a f(t)      = a int f(s) / |s - t|_a ds
    R_log,a f(t)  = a int log|s - t|_a f(s) ds
    R_inf,a f(t)  = a int ((s1-t1)^2 - a^2 (s2-t2)^2) / |s - t|_a^2 f(s) ds

Solvability of I u0 = const on every chord singles out the disk among convex
planar domains; this rigidity is not used or tested here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .quadrature import gauss_legendre

__all__ = [
    "XrayError",
    "EllipseParam",
    "DiskGrid",
    "WeightedGrid",
    "WeightedDiskDensity",
    "K_a",
    "u0_a",
    "u0_general",
    "apply_L_a",
    "apply_R_log_a",
    "apply_R_inf_a",
    "f_log_closed",
    "pairing_log",
    "pairing_inf",
    "pairing_terms",
    "PairingResult",
    "solve_L_a",
    "LSolution",
    "xray_transform",
    "xray_adjoint",
    "normal_via_xray",
    "DEFAULT_N_R",
    "DEFAULT_N_THETA",
]

DEFAULT_N_R = 64
DEFAULT_N_THETA = 128


class XrayError(ArithmeticError):
    """Quadrature or solver failure in the disk module."""


@dataclass(frozen=True)
class EllipseParam:
    a: float

    def __post_init__(self):
        if not (0.0 < self.a <= 1.0):
            raise XrayError(f"ellipse ratio a must lie in (0, 1], got {self.a}")


def _check_a(a) -> float:
    return EllipseParam(float(a)).a


@dataclass(frozen=True)
class DiskGrid:
    """Polar tensor grid for smooth integrands on the unit disk.

    Gauss-Legendre in r (weight r dr folded in), trapezoid in theta. The
    weights sum to pi.
    """

    n_r: int = DEFAULT_N_R
    n_theta: int = DEFAULT_N_THETA
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        r, wr = gauss_legendre(self.n_r, 0.0, 1.0)
        th = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        pts = np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], axis=-1).reshape(-1, 2)
        w = np.outer(wr * r, np.full(self.n_theta, 2 * np.pi / self.n_theta)).ravel()
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def integrate(self, g: Callable) -> float:
        x, y = self.points.T
        return float(np.sum(self.weights * g(x, y)))


@dataclass(frozen=True)
class WeightedGrid:
    """Rule for int v(t) g(t) (1 - |t|^2)^(-1/2) dt with smooth v and g.

    With |t| = sin(beta) the weight cancels: the measure is sin(beta) dbeta
    dtheta, integrated by Gauss-Legendre in beta and the trapezoid in theta.
    The weights sum to 2 pi.
    """

    n_beta: int = DEFAULT_N_R // 2
    n_theta: int = DEFAULT_N_THETA // 2
    theta_offset: float = 0.0
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    beta: np.ndarray = field(init=False, repr=False)
    theta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b, wb = gauss_legendre(self.n_beta, 0.0, 0.5 * np.pi)
        th = self.theta_offset + 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        r = np.sin(b)
        pts = np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], axis=-1).reshape(-1, 2)
        w = np.outer(wb * r, np.full(self.n_theta, 2 * np.pi / self.n_theta)).ravel()
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "theta", th)


@dataclass
class WeightedDiskDensity:
    """f(t) = v(t) (1 - |t|^2)^(-1/2) with a smooth factor ``v(x, y)``."""

    smooth: Callable
    label: str = ""

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.smooth(x, y) / np.sqrt(np.maximum(1.0 - x * x - y * y, 0.0))

    def integrate(self, g: Optional[Callable] = None, grid: Optional[WeightedGrid] = None) -> float:
        """int_D f g; g defaults to 1."""
        grid = grid or WeightedGrid()
        x, y = grid.points.T
        vals = self.smooth(x, y)
        if g is not None:
            vals = vals * g(x, y)
        return float(np.sum(grid.weights * vals))

    def scaled(self, c: float) -> "WeightedDiskDensity":
        v = self.smooth
        return WeightedDiskDensity(lambda x, y: c * v(x, y), self.label)

    @staticmethod
    def constant(c: float, label: str = "") -> "WeightedDiskDensity":
        return WeightedDiskDensity(lambda x, y: np.full(np.broadcast(x, y).shape, float(c)), label)

    @staticmethod
    def zero() -> "WeightedDiskDensity":
        return WeightedDiskDensity.constant(0.0, "zero")


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def K_a(a: float) -> float:
    """(pi/2) int_0^{2 pi} (cos^2 + sin^2 / a^2)^(-1/2) d theta by adaptive quadrature."""
    a = _check_a(a)
    if a == 1.0:
        return math.pi ** 2

    def f(t):
        return 1.0 / math.sqrt(math.cos(t) ** 2 + (math.sin(t) / a) ** 2)

    # the integrand has period pi/2 symmetry; integrate one quarter
    val, err = integrate.quad(f, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=1e-13, limit=200)
    return 0.5 * math.pi * 4.0 * val


def u0_a(a: float = 1.0) -> WeightedDiskDensity:
    """Solution of L_a u = 1: smooth factor 1/K_a."""
    return WeightedDiskDensity.constant(1.0 / K_a(a), f"u0(a={a:g})")


def u0_general(n: int, x) -> np.ndarray:
    """Ball solution of I u0 = 2/Vol(S^{n-1}) in dimension n."""
    x = np.asarray(x, dtype=float)
    vol = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    return 2.0 / (math.pi * vol * np.sqrt(1.0 - np.sum(x * x, axis=-1)))


def f_log_closed(r):
    """R_log u0 as a function of the radius.

    (2/pi)[log r + log(1+s)/2 - log(1-s)/2 - s] with s = sqrt(1 - r^2). Since
    1 - s = r^2/(1 + s), the log r term cancels exactly against log(1-s)/2,
    leaving (2/pi)[log(1 + s) - s], which has no cancellation anywhere.
    """
    r = np.asarray(r, dtype=float)
    s = np.sqrt(np.clip(1.0 - r * r, 0.0, None))
    return (2.0 / math.pi) * (np.log1p(s) - s)


# ---------------------------------------------------------------------------
# Polar rule about the target
# ---------------------------------------------------------------------------


def _cluster_map(tau, kappa):
    """phi offset and Jacobian clustering nodes near tau = +-pi/2 (tangential rays)."""
    phi = tau + 0.5 * kappa * np.sin(2 * tau)
    dphi = 1.0 + kappa * np.cos(2 * tau)
    return phi, dphi


def _ray_rule(t, n_phi, n_psi, grade):
    """Nodes s (M, n_phi, n_psi, 2), rho, phi and weights for the target rule.

    Weights w give int dphi int dpsi g ~ sum w g. ``grade`` > 1 clusters the
    psi nodes toward rho = 0 (for rho log rho integrands).
    """
    t = np.atleast_2d(np.asarray(t, dtype=float))
    rt = np.hypot(t[:, 0], t[:, 1])
    if np.any(rt >= 1.0):
        raise XrayError("target points must lie inside the open unit disk")
    th_t = np.arctan2(t[:, 1], t[:, 0])
    kappa = np.clip(rt * rt, 0.0, 0.9)
    tau = 2 * np.pi * np.arange(n_phi) / n_phi
    phi_off, dphi = _cluster_map(tau[None, :], kappa[:, None])
    phi = th_t[:, None] + phi_off
    wphi = dphi * (2 * np.pi / n_phi)
    om = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    b = np.einsum("mk,mpk->mp", t, om)
    q = 1.0 - rt * rt
    h = np.sqrt(b * b + q[:, None])
    c = -b
    psi0 = np.arcsin(np.clip(b / h, -1.0, 1.0))
    sig, wsig = gauss_legendre(n_psi, 0.0, 1.0)
    if grade > 1:
        wsig = wsig * grade * sig ** (grade - 1)
        sig = sig ** grade
    span = 0.5 * np.pi - psi0
    psi = psi0[..., None] + span[..., None] * sig
    rho = c[..., None] + h[..., None] * np.sin(psi)
    rho = np.maximum(rho, 0.0)
    s = t[:, None, None, :] + rho[..., None] * om[:, :, None, :]
    w = wphi[..., None] * span[..., None] * wsig
    return s, rho, phi, w


def _k_a(phi, a):
    return np.sqrt(np.cos(phi) ** 2 + (a * np.sin(phi)) ** 2)


def _apply(kind, f, a, t, n_phi, n_psi, chunk=64):
    a = _check_a(a)
    t = np.atleast_2d(np.asarray(t, dtype=float))
    out = np.empty(len(t))
    grade = 3 if kind == "log" else 1
    for i0 in range(0, len(t), chunk):
        s, rho, phi, w = _ray_rule(t[i0:i0 + chunk], n_phi, n_psi, grade)
        v = f.smooth(s[..., 0], s[..., 1])
        ka = _k_a(phi, a)[..., None]
        if kind == "L":
            g = v / ka
        elif kind == "log":
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(rho > 0, np.log(rho * ka) * rho, 0.0) * v
        elif kind == "inf":
            cp, sp = np.cos(phi), np.sin(phi)
            kern = (cp * cp - (a * sp) ** 2) / (cp * cp + (a * sp) ** 2)
            g = kern[..., None] * rho * v
        else:
            raise ValueError(kind)
        out[i0:i0 + chunk] = a * np.sum(w * g, axis=(1, 2))
    return out


def _shape_out(t, vals):
    t = np.asarray(t, dtype=float)
    return float(vals[0]) if t.ndim == 1 else vals.reshape(t.shape[:-1])


def apply_L_a(f: WeightedDiskDensity, a: float, t, n_phi: int = DEFAULT_N_THETA,
              n_psi: int = DEFAULT_N_R):
    """L_a f at target(s) t (shape (2,) or (M, 2)), |t| < 1."""
    return _shape_out(t, _apply("L", f, a, t, n_phi, n_psi))


def apply_R_log_a(f: WeightedDiskDensity, a: float, t, n_phi: int = DEFAULT_N_THETA,
                  n_psi: int = DEFAULT_N_R):
    """R_log,a f at target(s) t."""
    t_arr = np.atleast_2d(np.asarray(t, dtype=float))
    rt = np.hypot(t_arr[:, 0], t_arr[:, 1])
    # the boundary itself is handled by a slight pull-in; the map is continuous
    t_in = t_arr * np.where(rt >= 1.0, (1.0 - 1e-12) / np.maximum(rt, 1e-300), 1.0)[:, None]
    vals = _apply("log", f, a, t_in, n_phi, n_psi)
    return _shape_out(t, vals)


def apply_R_inf_a(f: WeightedDiskDensity, a: float, t, n_phi: int = DEFAULT_N_THETA,
                  n_psi: int = DEFAULT_N_R):
    """R_inf,a f at target(s) t."""
    t_arr = np.atleast_2d(np.asarray(t, dtype=float))
    rt = np.hypot(t_arr[:, 0], t_arr[:, 1])
    t_in = t_arr * np.where(rt >= 1.0, (1.0 - 1e-12) / np.maximum(rt, 1e-300), 1.0)[:, None]
    return _shape_out(t, _apply("inf", f, a, t_in, n_phi, n_psi))


# ---------------------------------------------------------------------------
# Pairings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairingResult:
    value: float
    error: float
    resolution: tuple
    history: tuple = ()


def pairing_terms(kind: str, a: float, n_beta: int, n_theta: int, n_phi: int, n_psi: int):
    """Per-node contributions (n_beta, n_theta) of <w, R_kind,a w>, w = (1-|s|^2)^(-1/2).

    The outer angular grid is symmetric under theta -> pi/2 - theta when
    n_theta is divisible by 4, which makes the a = 1 antisymmetry exact.
    """
    grid = WeightedGrid(n_beta, n_theta)
    one = WeightedDiskDensity.constant(1.0)
    vals = _apply(kind, one, a, grid.points, n_phi, n_psi)
    return (grid.weights * vals).reshape(n_beta, n_theta)


def _pairing(kind, a, n_beta, n_theta, n_phi, n_psi, refine):
    a = _check_a(a)
    hist = []
    res = (n_beta, n_theta, n_phi, n_psi)
    val = float(np.sum(pairing_terms(kind, a, *res)))
    hist.append((res, val))
    err = float("nan")
    if refine:
        coarse = (max(4, n_beta // 2), max(8, n_theta // 2), max(8, n_phi // 2), max(4, n_psi // 2))
        vc = float(np.sum(pairing_terms(kind, a, *coarse)))
        hist.insert(0, (coarse, vc))
        err = abs(val - vc)
    return PairingResult(val, err, res, tuple(hist))


def pairing_log(a: float, n_beta: int = 32, n_theta: int = 64, n_phi: int = 2 * DEFAULT_N_THETA,
                n_psi: int = DEFAULT_N_R // 2, refine: bool = False):
    """<w, R_log,a w> by nested weighted quadrature; returns a :class:`PairingResult`."""
    return _pairing("log", a, n_beta, n_theta, n_phi, n_psi, refine)


def pairing_inf(a: float, n_beta: int = 32, n_theta: int = 64, n_phi: int = 2 * DEFAULT_N_THETA,
                n_psi: int = DEFAULT_N_R // 2, refine: bool = False):
    """<w, R_inf,a w> by nested weighted quadrature; returns a :class:`PairingResult`."""
    return _pairing("inf", a, n_beta, n_theta, n_phi, n_psi, refine)


# ---------------------------------------------------------------------------
# Galerkin inversion
# ---------------------------------------------------------------------------


def _monomials(deg):
    return [(i, k - i) for k in range(deg + 1) for i in range(k, -1, -1)]


@dataclass
class LSolution:
    density: WeightedDiskDensity
    coeffs: np.ndarray
    residual: float
    condition: float
    asymmetry: float
    degree: int


def solve_L_a(rhs: Callable, a: float = 1.0, degree: int = 8, n_beta: int = 16,
              n_theta: int = 32, n_phi: int = 48, n_psi: int = 16,
              check_radius: float = 0.95, n_check: int = 64) -> LSolution:
    """Galerkin solve of L_a f = rhs in the basis {t^alpha (1 - |t|^2)^(-1/2)}.

    The monomial basis is orthonormalized in the weighted inner product
    before assembly. The residual is the max of |L_a f - rhs| over a polar
    sample of |t| <= ``check_radius``; ``asymmetry`` is the relative
    antisymmetric part of the Galerkin matrix (discrete self-adjointness).
    """
    a = _check_a(a)
    exps = _monomials(degree)
    grid = WeightedGrid(n_beta, n_theta)
    x, y = grid.points.T
    P = np.stack([x ** i * y ** j for i, j in exps], axis=1)
    G = P.T @ (grid.weights[:, None] * P)
    Lc = np.linalg.cholesky(G)
    T = np.linalg.inv(Lc).T  # columns: orthonormal combinations of monomials

    def basis_vals(xx, yy):
        M = np.stack([xx ** i * yy ** j for i, j in exps], axis=-1)
        return M @ T

    n_b = len(exps)
    LB = np.empty((len(x), n_b))
    # apply L_a to all basis functions at once by reusing the ray rule
    for i0 in range(0, len(x), 64):
        s, rho, phi, w = _ray_rule(grid.points[i0:i0 + 64], n_phi, n_psi, 1)
        B = basis_vals(s[..., 0], s[..., 1])
        ka = _k_a(phi, a)[..., None, None]
        LB[i0:i0 + 64] = a * np.einsum("mpq,mpqk->mk", w, B / ka)
    Bo = basis_vals(x, y)
    A = Bo.T @ (grid.weights[:, None] * LB)
    asym = float(np.linalg.norm(A - A.T) / np.linalg.norm(A))
    A = 0.5 * (A + A.T)
    b = Bo.T @ (grid.weights * rhs(x, y))
    c = np.linalg.solve(A, b)
    cond = float(np.linalg.cond(A))

    def smooth(xx, yy):
        xx = np.asarray(xx, dtype=float)
        yy = np.asarray(yy, dtype=float)
        return basis_vals(xx, yy) @ c

    dens = WeightedDiskDensity(smooth, "solve_L_a")
    r = np.linspace(0.0, check_radius, 8)
    th = 2 * np.pi * np.arange(n_check // 8) / (n_check // 8)
    tc = np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], -1).reshape(-1, 2)
    resid = float(np.max(np.abs(apply_L_a(dens, a, tc) - rhs(tc[:, 0], tc[:, 1]))))
    return LSolution(dens, c, resid, cond, asym, degree)


# ---------------------------------------------------------------------------
# X-ray transform
# ---------------------------------------------------------------------------


def xray_transform(f: WeightedDiskDensity, x, v, n: int = 32) -> float:
    """Line integral of f along the chord entering at boundary point x with direction v.

    On the chord 1 - |x + tau v|^2 = tau (L - tau), L = -2 x.v, so
    Gauss-Chebyshev nodes absorb the edge weight exactly.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    L = -2.0 * float(x @ v)
    if L <= 0.0:
        return 0.0
    k = np.arange(1, n + 1)
    xi = np.cos((2 * k - 1) * np.pi / (2 * n))
    tau = 0.5 * L * (1.0 + xi)
    p = x + tau[:, None] * v
    return float(np.pi / n * np.sum(f.smooth(p[:, 0], p[:, 1])))


def _exit_distance(x, v):
    b = x @ v
    return -b + np.sqrt(b * b + 1.0 - x @ x)


def xray_adjoint(omega: Callable, x, n_dir: int = 256) -> float:
    """I* omega (x) = int_{S^1} omega(x + tau(x, v) v, -v) dv for an interior point x."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for j in range(n_dir):
        ang = 2 * np.pi * (j + 0.5) / n_dir
        v = np.array([math.cos(ang), math.sin(ang)])
        p = x + _exit_distance(x, v) * v
        total += omega(p, -v)
    return total * 2 * np.pi / n_dir


def normal_via_xray(f: WeightedDiskDensity, x, n_dir: int = 256, n_line: int = 64) -> float:
    """(1/2) I* I f (x): the normal operator assembled from line integrals."""
    return 0.5 * xray_adjoint(lambda p, v: xray_transform(f, p, v, n_line), x, n_dir)
