import math
import os
import subprocess
import sys
import warnings

import numpy as np
import pytest

from narrow_escape import asymptotics as A
from narrow_escape import brownian_sim as S
from narrow_escape import geometry as geo
from narrow_escape import greens_bem as B

CENTRE = dict(start="fixed", start_point=(0.0, 0.0, 0.0), mode="absorb_all")


@pytest.fixture(scope="module")
def window(ball):
    return geo.make_window(ball, [0, 0, 1], 0.2)


def _times_digest(times):
    import hashlib
    return hashlib.sha256(np.ascontiguousarray(times).tobytes()).hexdigest()


def test_config_validation():
    with pytest.raises(ValueError):
        S.SimConfig(dt=0)
    with pytest.raises(ValueError):
        S.SimConfig(start="corner")
    with pytest.raises(ValueError):
        S.SimConfig(reflection="diffuse")
    with pytest.raises(ValueError):
        S.SimConfig(seed=-1)
    assert S.SimConfig.default_dt(0.1) == pytest.approx(1e-4)


def test_same_seed_bit_identical(ball, window):
    cfg = S.SimConfig(dt=4e-4, n_paths=500, seed=42)
    a = S.estimate_mfpt(ball, window, cfg, return_times=True)
    b = S.estimate_mfpt(ball, window, cfg, return_times=True)
    assert np.array_equal(a[1], b[1], equal_nan=True)
    assert a[0].mean == b[0].mean and a[0].stderr == b[0].stderr
    c = S.estimate_mfpt(ball, window, S.SimConfig(dt=4e-4, n_paths=500, seed=43))
    assert c.mean != a[0].mean


def test_paths_independent_of_batching(ball, window):
    cfg = S.SimConfig(dt=4e-4, n_paths=64, seed=7)
    full = S.simulate_times(ball, window, cfg).times
    part = S.simulate_times(ball, window, cfg, first_path=40, n_paths=10).times
    assert np.array_equal(full[40:50], part, equal_nan=True)
    assert S.simulate_path(ball, window, cfg, path=13) == full[13]


def test_thread_count_does_not_change_result(ball, window):
    cfg = S.SimConfig(dt=4e-4, n_paths=300, seed=5, jobs=1)
    ref = _times_digest(S.simulate_times(ball, window, cfg).times)
    code = (
        "import numpy as np, hashlib\n"
        "from narrow_escape import brownian_sim as S, geometry as g\n"
        "b = g.unit_ball(); w = g.make_window(b, [0, 0, 1], 0.2)\n"
        "t = S.simulate_times(b, w, S.SimConfig(dt=4e-4, n_paths=300, seed=5, jobs=4)).times\n"
        "print(hashlib.sha256(np.ascontiguousarray(t).tobytes()).hexdigest())\n")
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == ref


def test_start_inside_window_is_absorbed_at_once(ball, window):
    cfg = S.SimConfig(dt=1e-4, n_paths=3, start="fixed", start_point=tuple(window.center))
    assert np.all(S.simulate_times(ball, window, cfg).times == 0.0)


def test_no_window_paths_are_censored(ball):
    cfg = S.SimConfig(dt=1e-3, n_paths=20, max_steps=2000, mode="no_window")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", S.SimulationWarning)
        est = S.estimate_mfpt(ball, None, cfg)
    assert est.n_censored == 20 and est.n_absorbed == 0
    assert not est.valid


def test_budget_warning(ball, window):
    cfg = S.SimConfig(dt=1e-3, n_paths=1, max_steps=10)
    with pytest.warns(S.SimulationWarning):
        cfg.check_budget(5.0)


def test_absorb_all_from_centre(ball):
    # E[tau] = (1 - |x|^2)/6 for the whole boundary absorbing
    cfg = S.SimConfig(dt=1e-4, n_paths=100_000, seed=11, **CENTRE)
    ex = S.estimate_mfpt_extrapolated(ball, None, cfg)
    assert abs(ex.value - 1 / 6) < 3.5 * ex.stderr + 1e-4
    assert ex.fine.valid and ex.fine.n_censored == 0


def test_boundary_bias_scales_like_sqrt_dt(ball):
    bias = []
    for dt in (1.6e-3, 1e-4):
        est = S.estimate_mfpt(ball, None, S.SimConfig(dt=dt, n_paths=100_000, seed=12, **CENTRE))
        bias.append(est.mean - 1 / 6)
    # a 16x smaller step shrinks the sqrt(dt) boundary bias about 4x
    assert 2.5 < bias[0] / bias[1] < 6.5


def test_dt_refinement_is_cauchy(ball):
    ests = [S.estimate_mfpt(ball, None, S.SimConfig(dt=dt, n_paths=50_000, seed=13, **CENTRE))
            for dt in (4e-4, 1e-4, 2.5e-5)]
    gaps = [abs(a.mean - b.mean) for a, b in zip(ests[:-1], ests[1:])]
    se = [math.hypot(a.stderr, b.stderr) for a, b in zip(ests[:-1], ests[1:])]
    assert gaps[1] < gaps[0] + 3 * se[1]


def test_clt_scaling(ball):
    hw = [S.estimate_mfpt(ball, None, S.SimConfig(dt=4e-4, n_paths=n, seed=14, **CENTRE))
          .ci_halfwidth for n in (10_000, 20_000, 40_000)]
    assert hw[1] / hw[0] == pytest.approx(1 / math.sqrt(2), rel=0.3)
    assert hw[2] / hw[0] == pytest.approx(0.5, rel=0.3)


def test_antipode_matches_asymptotic_field(ball, window):
    inp = A.ball_input(0.2)
    start = np.array([0.0, 0.0, -1.0])
    pred = A.mfpt_field(inp, lambda x: (1 - np.sum(np.atleast_2d(x) ** 2, -1)) / 6,
                        lambda x, y: B.ball_green_interior(np.atleast_2d(x), y), start,
                        window.center).value
    cfg = S.SimConfig(dt=S.SimConfig.default_dt(0.2), n_paths=40_000, seed=15, start="fixed",
                      start_point=tuple(start))
    ex = S.estimate_mfpt_extrapolated(ball, window, cfg, predicted=pred)
    assert abs(ex.value - pred) < 0.05 * pred
    assert ex.stderr < 0.02 * pred


def test_window_membership_table(ball, window):
    tab = S.window_table(ball, window)
    chart = geo.window_chart(ball, window)
    s = np.array([[0.0, 0.0], [0.5, 0.5], [0.99, 0.0], [1.01, 0.0], [0.0, -1.05]])
    inside = tab.contains(chart(s))
    assert list(inside) == [True, True, True, False, False]
    assert not tab.contains(np.array([[0.0, 0.0, -1.0]]))[0]


def test_coarse_seed_differs():
    assert S.coarse_seed(1) != 1
    assert 0 <= S.coarse_seed(2 ** 64 - 1) < 2 ** 64
