"""Independent reference computations used by several test modules."""
import math

import numpy as np
from scipy.special import elliprg


def legendre_R_star(gammas=(0.04, 0.02, 0.01), lmax=200_000):
    """R(x*, x*) on the unit sphere from the Legendre series alone.

    G = sum_{l>=1} (2l+1)/(4 pi l) P_l(cos g). The l-independent part sums to
    (1/d - 1)/(2 pi) by the generating function, which cancels the 1/(2 pi d)
    singular term; the rest converges absolutely. R(g) = -1/(2 pi) +
    (S(g) + log g)/(4 pi) with S = sum P_l / l, extrapolated quadratically to g = 0.
    """
    vals = []
    for g in gammas:
        x = math.cos(g)
        P = np.empty(lmax + 1)
        P[0], P[1] = 1.0, x
        for l in range(1, lmax):
            P[l + 1] = ((2 * l + 1) * x * P[l] - l * P[l - 1]) / (l + 1)
        S = float(np.sum(P[1:] / np.arange(1, lmax + 1)))
        vals.append(-1 / (2 * math.pi) + (S + math.log(g)) / (4 * math.pi))
    c = np.polyfit(np.asarray(gammas), np.asarray(vals), len(gammas) - 1)
    return float(c[-1])


def ellipsoid_area(a, b, c):
    """Surface area 4 pi abc R_G(a^-2, b^-2, c^-2)."""
    return 4 * math.pi * a * b * c * float(elliprg(a ** -2, b ** -2, c ** -2))


def implicit_curvatures(axes, x):
    """Principal curvatures of x^T A^-2 x = 1 at x from the projected Hessian (inward normal)."""
    axes = np.asarray(axes, dtype=float)
    g = 2 * x / axes ** 2
    Hs = np.diag(2 / axes ** 2)
    n = g / np.linalg.norm(g)
    P = np.eye(3) - np.outer(n, n)
    S = P @ Hs @ P / np.linalg.norm(g)
    ev = np.linalg.eigvalsh(S)
    ev = ev[np.argsort(-np.abs(ev))][:2]
    return np.sort(ev)[::-1]
