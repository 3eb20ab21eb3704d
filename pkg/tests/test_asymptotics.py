import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narrow_escape import asymptotics as A
from narrow_escape import greens_bem, xray_normal

# Unit ball, eps = 0.1, a = 1: C = pi/(3 eps) - (1/3) log eps + (4 pi/3) R* - (H/12 pi^2)<w, R_log w>
BALL_C_01 = 10.841788149444
BALL_AVERAGE_01 = 10.908454816111

inputs = st.builds(
    A.ExpansionInput,
    volume=st.floats(0.1, 10), area=st.floats(0.5, 30), H=st.floats(0.1, 3),
    lambda1=st.floats(0.1, 3), lambda2=st.floats(0.1, 3), eps=st.floats(1e-3, 0.2),
    a=st.just(1.0), R_star=st.floats(-1, 1), F_star=st.floats(-1, 1))


def test_ball_constant_and_average():
    inp = A.ball_input(0.1)
    bd = A.c_eps_a(inp)
    assert bd.total == pytest.approx(BALL_C_01, rel=1e-12)
    assert bd.leading == pytest.approx(math.pi / 0.3, rel=1e-14)
    assert bd.log_term == pytest.approx(-math.log(0.1) / 3, rel=1e-14)
    avg = A.mfpt_average(inp, 4 * math.pi / 45, bd)
    assert avg == pytest.approx(BALL_AVERAGE_01, rel=1e-12)
    # known closed form for the ball with a circular window
    assert avg == pytest.approx(math.pi / 0.3 - math.log(0.2) / 3 - 0.1, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(inp=inputs)
def test_terms_add_up(inp):
    bd = A.c_eps_a(inp)
    parts = (bd.leading + bd.log_term + bd.regular_term + bd.f_term + bd.log_pairing_term
             + bd.curvature_diff_term)
    assert bd.total == pytest.approx(parts, rel=1e-14, abs=1e-14)
    assert bd.curvature_diff_term == 0.0
    assert bd.error_order == A.ERROR_ORDER_CONSTANT


@settings(max_examples=40, deadline=None)
@given(inp=inputs, f=st.floats(0.2, 0.9))
def test_leading_term_grows_as_window_shrinks(inp, f):
    small = A.c_eps_a(inp.with_eps(inp.eps * f))
    big = A.c_eps_a(inp)
    assert small.leading > big.leading
    assert small.leading * small.K_a == pytest.approx(big.leading * big.K_a / f, rel=1e-12)


def test_disk_collapse_uses_closed_pairings():
    inp = A.ball_input(0.05)
    bd = A.c_eps_a(inp)
    assert bd.pairing_log == A.disk_log_pairing()
    assert bd.pairing_inf == 0.0
    bq = A.c_eps_a(inp, xray_normal.pairing_log(1.0).value, xray_normal.pairing_inf(1.0).value)
    assert bq.total == pytest.approx(bd.total, abs=1e-8)


def test_elliptic_window_continuity():
    c1 = A.c_eps_a(A.ball_input(0.1)).total
    d = [abs(A.c_eps_a(A.ball_input(0.1, a)).total - c1) for a in (0.99, 0.999)]
    assert d[1] < d[0] / 5


def test_elliptic_window_longer_time():
    # a smaller window (same eps, a < 1) takes longer to find
    assert A.c_eps_a(A.ball_input(0.1, 0.5)).total > A.c_eps_a(A.ball_input(0.1)).total


def test_field_matches_ball_closed_form():
    inp = A.ball_input(0.1)
    xs = np.array([0.0, 0.0, 1.0])
    F = lambda x: (1 - np.sum(np.atleast_2d(x) ** 2, -1)) / 6  # noqa: E731
    G = lambda x, y: greens_bem.ball_green_interior(np.atleast_2d(x), y)  # noqa: E731
    fv = A.mfpt_field(inp, F, G, np.zeros(3), xs)
    assert not fv.guarded
    # G(0, x*) = 0 for the ball, so the centre value is C + 1/6
    assert fv.value == pytest.approx(BALL_C_01 + 1 / 6, rel=1e-12)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        fv = A.mfpt_field(inp, F, G, np.array([0.0, 0.0, 0.8]), xs)
    assert fv.guarded and any(issubclass(w.category, A.AsymptoticsWarning) for w in rec)


def test_flux_balances_volume():
    # total flux through the window equals -|M| (Delta u = -1 integrated over M)
    for a in (1.0, 0.6):
        inp = A.ball_input(0.1, a)
        flux = A.flux_prediction(inp)
        assert flux.total_flux() == pytest.approx(-inp.volume, rel=1e-14)
        dens = flux.density()
        assert dens.integrate() == pytest.approx(flux.chart_integral(), rel=1e-12)
    assert flux(np.array([0.0, 0.0])) == pytest.approx(-flux.amplitude)


def test_flux_on_curved_window_close_to_flat():
    from narrow_escape import geometry
    ball = geometry.unit_ball()
    w = geometry.make_window(ball, [0, 0, 1], 0.05)
    inp = A.ball_input(0.05)
    f = A.flux_prediction(inp)
    curved = f.total_flux(geometry.window_chart(ball, w))
    assert curved == pytest.approx(-inp.volume, rel=1e-3)


def test_input_validation():
    with pytest.raises(ValueError):
        A.ExpansionInput(1, 1, 1, 1, 1, eps=0.0)
    with pytest.raises(ValueError):
        A.ExpansionInput(1, 1, 1, 1, 1, eps=0.1, a=1.2)
