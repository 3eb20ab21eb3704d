"""Asymptotic mean first passage time to a small elliptic window.

All times follow the generator convention Delta (not Delta/2): the MFPT
field solves Delta u = -1. Divide by 2 to convert to the Delta/2 convention
(standard Brownian motion with unit-variance increments per unit time).

The constant C_{eps,a} is assembled term by term:

    leading              |M| K_a / (4 a eps pi^2)
    log_term             -(1/4pi) H |M| log eps
    regular_term         a R(x*,x*) |M|
    f_term               -F(x*)
    log_pairing_term     -(|M| H / 16 pi^3) <w, R_log,a w>
    curvature_diff_term  (|M| (lambda1 - lambda2) / 64 pi^3) <w, R_inf,a w>

with w = (1 - |t|^2)^(-1/2) on the unit disk.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from . import xray_normal

__all__ = [
    "ExpansionInput",
    "MfptBreakdown",
    "FluxDensity",
    "FieldValue",
    "AsymptoticsWarning",
    "c_eps_a",
    "disk_log_pairing",
    "mfpt_field",
    "mfpt_average",
    "flux_prediction",
    "ball_input",
    "ERROR_ORDER_CONSTANT",
    "ERROR_ORDER_AVERAGE",
    "ERROR_ORDER_FIELD",
]

ERROR_ORDER_CONSTANT = "O(eps log eps)"
ERROR_ORDER_AVERAGE = "O(eps)"
ERROR_ORDER_FIELD = "O(eps) on compacts away from x*"
GUARD_FACTOR = 5.0


class AsymptoticsWarning(UserWarning):
    """Field evaluated inside the guard region around the window."""


@dataclass(frozen=True)
class ExpansionInput:
    """Geometric and analytic inputs of the expansion (lengths in domain units)."""

    volume: float
    area: float
    H: float
    lambda1: float
    lambda2: float
    eps: float
    a: float = 1.0
    R_star: float = 0.0
    F_star: float = 0.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0.0 < self.a <= 1.0:
            raise ValueError("a must lie in (0, 1]")
        if not (self.volume > 0 and self.area > 0):
            raise ValueError("|M| and |dM| must be positive")

    def with_eps(self, eps: float) -> "ExpansionInput":
        d = asdict(self)
        d["eps"] = float(eps)
        return ExpansionInput(**d)


@dataclass(frozen=True)
class MfptBreakdown:
    leading: float
    log_term: float
    regular_term: float
    f_term: float
    log_pairing_term: float
    curvature_diff_term: float
    total: float
    K_a: float
    pairing_log: float
    pairing_inf: float
    error_order: str = ERROR_ORDER_CONSTANT

    def as_dict(self) -> dict:
        return asdict(self)


def disk_log_pairing() -> float:
    """Closed value of <w, R_log,1 w>: pi^2 (8 log 2 - 6)."""
    return math.pi ** 2 * (8 * math.log(2.0) - 6.0)


def c_eps_a(inp: ExpansionInput, pairing_log_val: Optional[float] = None,
            pairing_inf_val: Optional[float] = None) -> MfptBreakdown:
    """Term-by-term constant C_{eps,a}.

    Missing pairings are taken from the closed forms when a = 1 and from
    quadrature otherwise.
    """
    a = inp.a
    if pairing_log_val is None:
        pairing_log_val = disk_log_pairing() if a == 1.0 else xray_normal.pairing_log(a).value
    if pairing_inf_val is None:
        pairing_inf_val = 0.0 if a == 1.0 else xray_normal.pairing_inf(a).value
    Ka = xray_normal.K_a(a)
    M = inp.volume
    pi = math.pi
    leading = M * Ka / (4 * a * inp.eps * pi ** 2)
    log_term = -inp.H * M * math.log(inp.eps) / (4 * pi)
    regular = a * inp.R_star * M
    f_term = -inp.F_star
    lp = -(M * inp.H / (16 * pi ** 3)) * pairing_log_val
    cd = (M * (inp.lambda1 - inp.lambda2) / (64 * pi ** 3)) * pairing_inf_val
    total = leading + log_term + regular + f_term + lp + cd
    return MfptBreakdown(leading, log_term, regular, f_term, lp, cd, total, Ka,
                         float(pairing_log_val), float(pairing_inf_val))


@dataclass(frozen=True)
class FieldValue:
    value: float
    distance_to_window: float
    guarded: bool
    error_order: str = ERROR_ORDER_FIELD


def mfpt_field(inp: ExpansionInput, F: Callable, G: Callable, x, x_star,
               breakdown: Optional[MfptBreakdown] = None) -> FieldValue:
    """E[tau](x) ~ F(x) + C_{eps,a} - |M| G(x, x*).

    ``F(x)`` and ``G(x, x_star)`` are evaluators of the auxiliary solution
    and the Neumann Green's function. Within 5 eps of x* the result is
    flagged (and a warning issued) since the remainder is not controlled there.
    """
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    bd = breakdown or c_eps_a(inp)
    dist = float(np.linalg.norm(x - x_star))
    guarded = dist < GUARD_FACTOR * inp.eps
    if guarded:
        warnings.warn(f"field point within {GUARD_FACTOR:g} eps of the window centre",
                      AsymptoticsWarning, stacklevel=2)
    Fx = float(np.ravel(F(x))[0])
    Gx = float(np.ravel(G(x, x_star))[0])
    val = Fx + bd.total - inp.volume * Gx
    return FieldValue(val, dist, guarded)


def mfpt_average(inp: ExpansionInput, F_integral: float,
                 breakdown: Optional[MfptBreakdown] = None) -> float:
    """Volume-averaged MFPT (int_M F + C |M| - F(x*) |M|) / |M|."""
    bd = breakdown or c_eps_a(inp)
    M = inp.volume
    return (F_integral + bd.total * M - inp.F_star * M) / M


@dataclass(frozen=True)
class FluxDensity:
    """Leading-order flux density on the window chart, psi(t) = -c (1 - |t|^2)^(-1/2)."""

    volume: float
    eps: float
    a: float

    @property
    def amplitude(self) -> float:
        return self.volume / (2 * self.a * math.pi * self.eps ** 2)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return -self.amplitude / np.sqrt(1.0 - np.sum(t * t, axis=-1))

    def density(self) -> xray_normal.WeightedDiskDensity:
        return xray_normal.WeightedDiskDensity.constant(-self.amplitude, "psi")

    def chart_integral(self) -> float:
        """int_D psi dt = -|M| / (a eps^2)."""
        return -2 * math.pi * self.amplitude

    def total_flux(self, chart=None, n_beta: int = 16, n_theta: int = 32) -> float:
        """Flux through the window; with a geometry chart the true area element is used."""
        if chart is None:
            return self.chart_integral() * self.a * self.eps ** 2
        grid = xray_normal.WeightedGrid(n_beta, n_theta)
        J = chart.area_element(grid.points)
        return float(np.sum(grid.weights * (-self.amplitude) * J))


def flux_prediction(inp: ExpansionInput) -> FluxDensity:
    return FluxDensity(inp.volume, inp.eps, inp.a)


def ball_input(eps: float, a: float = 1.0) -> ExpansionInput:
    """Unit-ball inputs: |M| = 4pi/3, |dM| = 4pi, H = 1, F(x*) = 0 and the closed R(x*,x*)."""
    R = math.log(2.0) / (4 * math.pi) - 1.0 / (2 * math.pi)
    return ExpansionInput(4 * math.pi / 3, 4 * math.pi, 1.0, 1.0, 1.0, eps, a, R, 0.0)
