"""Quadrature rules shared by the geometry, BEM and disk modules."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "gauss_legendre",
    "graded_panels",
    "sphere_rule",
    "tangent_basis",
    "polar_rule",
]


@lru_cache(maxsize=64)
def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0):
    """Gauss-Legendre nodes and weights mapped to [a, b]."""
    x, w = _gl(int(n))
    h = 0.5 * (b - a)
    return a + h * (x + 1.0), h * w


def graded_panels(a: float, b: float, n_per_panel: int, levels: int, ratio: float = 0.25):
    """Composite Gauss-Legendre rule on [a, b] refined geometrically toward ``a``.

    Panel breakpoints are a + (b-a)*ratio**k for k = 0..levels, plus a itself,
    which resolves log-type and kink-type behaviour at the left end.
    """
    edges = [a] + [a + (b - a) * ratio ** k for k in range(levels, -1, -1)]
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(n_per_panel, lo, hi)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@lru_cache(maxsize=16)
def _sphere_rule(n_theta: int):
    ct, wt = gauss_legendre(n_theta)
    n_phi = 2 * n_theta
    phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    st = np.sqrt(1.0 - ct ** 2)
    u = np.stack([
        np.outer(st, np.cos(phi)),
        np.outer(st, np.sin(phi)),
        np.outer(ct, np.ones(n_phi)),
    ], axis=-1).reshape(-1, 3)
    w = np.outer(wt, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    u.setflags(write=False)
    w.setflags(write=False)
    return u, w


def sphere_rule(n_theta: int):
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta), trapezoid in phi.

    Returns unit vectors (n_theta*2*n_theta, 3) and weights summing to 4*pi.
    Exact for spherical harmonics of degree < 2*n_theta.
    """
    return _sphere_rule(int(n_theta))


def tangent_basis(u):
    """Deterministic orthonormal pair (e1, e2) with e1 x e2 = u, for unit u of shape (..., 3)."""
    u = np.asarray(u, dtype=float)
    ref = np.zeros_like(u)
    use_x = np.abs(u[..., 0]) < 0.9
    ref[..., 0] = np.where(use_x, 1.0, 0.0)
    ref[..., 1] = np.where(use_x, 0.0, 1.0)
    e1 = ref - np.sum(ref * u, axis=-1, keepdims=True) * u
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(u, e1)
    return e1, e2


def polar_rule(u0, n_theta: int = 10, levels: int = 6, n_phi: int = 48, theta_max: float = np.pi):
    """Polar rule on the unit sphere centred at the unit vector ``u0``.

    Nodes u = cos(t) u0 + sin(t)(cos(p) e1 + sin(p) e2). The polar angle is
    split into graded Gauss panels toward t = 0, the azimuth uses the
    trapezoid rule. Weights include sin(t), so a 1/|u-u0| singularity becomes
    bounded and log singularities are resolved by the grading.

    Returns nodes (n_t, n_phi, 3), weights (n_t, n_phi), and the polar
    angles (n_t,).
    """
    u0 = np.asarray(u0, dtype=float)
    t, wt = graded_panels(0.0, theta_max, n_theta, levels)
    p = 2.0 * np.pi * np.arange(n_phi) / n_phi
    e1, e2 = tangent_basis(u0)
    ct, st = np.cos(t), np.sin(t)
    dirs = np.cos(p)[:, None] * e1 + np.sin(p)[:, None] * e2
    nodes = ct[:, None, None] * u0 + st[:, None, None] * dirs[None, :, :]
    w = np.outer(wt * st, np.full(n_phi, 2.0 * np.pi / n_phi))
    return nodes, w, t
