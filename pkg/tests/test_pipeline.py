import math

import numpy as np
import pytest

from narrow_escape import asymptotics as A
from narrow_escape import geometry as geo
from narrow_escape.pipeline import solve_expansion


def test_ball_bem_agrees_with_closed_forms(ball):
    w = geo.make_window(ball, [0, 0, 1], 0.1)
    closed = solve_expansion(ball, w)
    bem = solve_expansion(ball, w, mesh=24, use_bem=True)
    assert closed.method == "closed-form" and bem.method == "bem"
    assert bem.inp.R_star == pytest.approx(closed.inp.R_star, rel=0.02)
    assert abs(bem.inp.F_star) < 1e-6
    assert bem.F_integral == pytest.approx(4 * math.pi / 45, rel=1e-6)
    x = np.array([[0.1, 0.2, -0.3]])
    assert bem.G(x)[0] == pytest.approx(closed.G(x)[0], abs=1e-6)
    a_closed = A.mfpt_average(closed.inp, closed.F_integral)
    a_bem = A.mfpt_average(bem.inp, bem.F_integral)
    assert a_bem == pytest.approx(a_closed, rel=1e-3)


def test_ellipsoid_expansion(triaxial):
    w = geo.make_window(triaxial, [0.3, 0.5, 0.6], 0.05, 0.7)
    sol = solve_expansion(triaxial, w, mesh=20)
    assert sol.inp.volume == pytest.approx(4 * math.pi / 3 * 1.05, rel=1e-10)
    assert sol.inp.lambda1 >= sol.inp.lambda2
    bd = A.c_eps_a(sol.inp)
    assert bd.leading > 0 and math.isfinite(bd.total)
    assert sol.diagnostics["condition"] < 1e6
