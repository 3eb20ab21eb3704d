"""Glue between geometry, the BEM solver and the asymptotic formulas."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import greens_bem
from .asymptotics import ExpansionInput
from .geometry import DomainMeasures, Ellipsoid, SurfaceGeometry, WindowSpec, measures

__all__ = ["ShapeSolution", "solve_expansion"]


@dataclass
class ShapeSolution:
    """Expansion inputs with evaluators for F(x) and G(x, x*)."""

    inp: ExpansionInput
    F: Callable
    G: Callable
    F_integral: float
    measures: DomainMeasures
    method: str
    diagnostics: dict = field(default_factory=dict)


def _is_unit_ball(shape: SurfaceGeometry) -> bool:
    return (isinstance(shape, Ellipsoid) and np.all(shape.axes == 1.0)
            and np.all(shape.center == 0.0))


def solve_expansion(shape: SurfaceGeometry, window: WindowSpec, mesh: int = 36,
                    use_bem: Optional[bool] = None) -> ShapeSolution:
    """Inputs of C_{eps,a} for ``window`` on ``shape``.

    The unit ball uses its closed forms unless ``use_bem`` is set; every
    other shape goes through the boundary-element solver.
    """
    f = window.frame
    if use_bem is None:
        use_bem = not _is_unit_ball(shape)
    meas = measures(shape)
    if not use_bem:
        R = greens_bem.ball_R_star()
        inp = ExpansionInput(meas.volume, meas.area, f.H, f.lambda1, f.lambda2, window.eps,
                             window.a, R, 0.0)
        x_star = window.center

        def F(x):
            x = np.atleast_2d(x)
            return (1.0 - np.sum(x * x, axis=-1)) / 6.0

        def G(x, xs=x_star):
            return greens_bem.ball_green_interior(np.atleast_2d(x), xs)

        return ShapeSolution(inp, F, G, 4 * math.pi / 45, meas, "closed-form",
                             {"R_star": R, "F_star": 0.0})
    bm = greens_bem.BoundaryMesh.build(shape, mesh)
    solver = greens_bem.NeumannSolver(bm)
    dec = greens_bem.solve_boundary_green(bm, window.center, solver=solver)
    Fs = greens_bem.solve_F(bm, meas.volume, solver=solver)
    F_star = float(Fs.boundary(window.center[None, :])[0])
    inp = ExpansionInput(meas.volume, meas.area, f.H, f.lambda1, f.lambda2, window.eps, window.a,
                         dec.R_star, F_star)

    def G(x, xs=None):
        return dec.interior(np.atleast_2d(x))

    diag = {"R_star": dec.R_star, "R_star_E1": dec.R_star_dirs[0], "R_star_E2": dec.R_star_dirs[1],
            "F_star": F_star, "mesh_nodes": bm.size, "condition": solver.condition,
            "extrapolation": dec.table, "holder_mu": dec.mu}
    return ShapeSolution(inp, Fs.interior, G, Fs.integral, meas, "bem", diag)
