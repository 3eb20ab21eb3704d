"""Acceptance criteria, one test each.

Every test prints a single verdict line ``ACCEPTANCE <n> PASS|FAIL ...``;
the lines are repeated in the terminal summary. Runtime limits are part of
each criterion.
"""
import hashlib
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from narrow_escape import asymptotics as A
from narrow_escape import brownian_sim as S
from narrow_escape import geometry as geo
from narrow_escape import greens_bem as B
from narrow_escape import xray_normal as X
from oracles import legendre_R_star

pytestmark = pytest.mark.acceptance


class Verdict:
    def __init__(self, n, title, limit, log):
        self.n, self.title, self.limit, self.log = n, title, limit, log
        self.t0 = time.perf_counter()

    def __call__(self, ok: bool, detail: str):
        dt = time.perf_counter() - self.t0
        ok = bool(ok) and dt < self.limit
        line = (f"ACCEPTANCE {self.n:2d} {'PASS' if ok else 'FAIL'}  {self.title}: {detail} "
                f"[{dt:.1f} s / limit {self.limit:g} s]")
        print(line)
        self.log.append(line)
        assert ok, line


@pytest.fixture
def verdict(acceptance_log):
    return lambda n, title, limit: Verdict(n, title, limit, acceptance_log)


def _disk_targets(r_max, n_r=8, n_th=8):
    r = np.linspace(0.0, r_max, n_r)
    th = 2 * math.pi * np.arange(n_th) / n_th
    return np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], -1).reshape(-1, 2)


def test_01_K1(verdict):
    v = verdict(1, "K_1 = pi^2", 1)
    err = abs(X.K_a(1.0) - math.pi ** 2)
    v(err <= 1e-12, f"|K_1 - pi^2| = {err:.2e}")


def test_02_L_inverse(verdict):
    v = verdict(2, "L_1 u0 = 1 on |t| <= 0.95", 10)
    t = _disk_targets(0.95)
    u0 = X.u0_a(1.0)
    coarse = float(np.max(np.abs(X.apply_L_a(u0, 1.0, t, 32, 16) - 1)))
    fine = float(np.max(np.abs(X.apply_L_a(u0, 1.0, t) - 1)))
    v(fine <= 1e-3 and fine <= coarse + 1e-14,
      f"sup error {fine:.2e} at default resolution, {coarse:.2e} at (32, 16)")


def test_03_pairing_log(verdict):
    v = verdict(3, "pairing_log(1) = pi^2 (8 log 2 - 6)", 30)
    ex = math.pi ** 2 * (8 * math.log(2) - 6)
    got = X.pairing_log(1.0).value
    rel = abs(got - ex) / abs(ex)
    v(rel <= 1e-3, f"{got:.9f} vs {ex:.9f}, rel error {rel:.2e}")


def test_04_pairing_inf(verdict):
    v = verdict(4, "pairing_inf(1) = 0", 30)
    got = X.pairing_inf(1.0).value
    v(abs(got) <= 1e-6, f"|pairing_inf(1)| = {abs(got):.2e}")


def test_05_f_log_closed(verdict):
    v = verdict(5, "f_log_closed vs quadrature of R_log u0", 30)
    r = np.linspace(0.0, 1.0, 20)
    t = np.stack([r, np.zeros_like(r)], -1)
    err = float(np.max(np.abs(X.apply_R_log_a(X.u0_a(1.0), 1.0, t) - X.f_log_closed(r))))
    v(err <= 1e-3, f"sup error {err:.2e} on 20 radii in [0, 1]")


def test_06_xray_constancy(verdict):
    v = verdict(6, "I u0 = 1/pi on random chords", 5)
    rng = np.random.default_rng(2024)
    u0 = X.u0_a(1.0)
    dev = 0.0
    for _ in range(100):
        p = rng.uniform(0, 2 * math.pi)
        q = rng.uniform(-0.5 * math.pi, 0.5 * math.pi) * 0.999
        x = np.array([math.cos(p), math.sin(p)])
        d = -np.array([math.cos(p + q), math.sin(p + q)])
        dev = max(dev, abs(X.xray_transform(u0, x, d) - 1 / math.pi))
    v(dev <= 1e-6, f"max deviation {dev:.2e} over 100 chords")


def test_07_distance_law(verdict):
    v = verdict(7, "normal derivative of distance law", 10)
    shapes = {"unit sphere": geo.unit_ball(), "ellipsoid (1.5, 1, 0.7)": geo.ellipsoid(1.5, 1, 0.7)}
    mins = {}
    for name, s in shapes.items():
        orders, _, _ = geo.distance_law_order(s, s.project(np.array([0.3, 0.5, 0.8])))
        mins[name] = float(np.min(orders))
    v(all(m >= 1.9 for m in mins.values()),
      ", ".join(f"{k} min order {m:.2f}" for k, m in mins.items()))


def test_08_bem_sphere(verdict):
    v = verdict(8, "BEM R(x*, x*) on the unit sphere", 300)
    oracle = legendre_R_star()
    rows = B.convergence_table(geo.unit_ball(), np.array([0.0, 0.0, 1.0]), (16, 24, 36), oracle)
    errs = [r["rel_error"] for r in rows]
    monotone = all(a > b for a, b in zip(errs[:-1], errs[1:]))
    v(errs[-1] <= 0.02 and monotone,
      f"R = {rows[-1]['R_star']:.6f} vs series {oracle:.6f}; rel errors "
      + " > ".join(f"{e:.2e}" for e in errs))


def test_09_end_to_end(verdict):
    v = verdict(9, "unit ball eps = 0.1 averaged MFPT", 900)
    eps = 0.1
    ball = geo.unit_ball()
    w = geo.make_window(ball, [0, 0, 1], eps)
    inp = A.ball_input(eps)
    bd = A.c_eps_a(inp)
    pred = A.mfpt_average(inp, 4 * math.pi / 45, bd)
    cfg = S.SimConfig(dt=1e-4, n_paths=100_000, seed=20240917, start="uniform")
    ex = S.estimate_mfpt_extrapolated(ball, w, cfg, predicted=pred)
    rel = abs(ex.value - pred) / pred
    ratio = (ex.value - bd.leading) / bd.leading
    target = -(eps / math.pi) * 1.0 * math.log(eps)
    ratio_ok = ratio * target > 0 and abs(ratio / target - 1) <= 0.3
    v(rel <= 0.05 and ratio_ok and ex.fine.valid and ex.coarse.valid,
      f"simulated {ex.value:.4f} +/- {ex.stderr:.4f} vs asymptotic {pred:.4f} "
      f"(rel diff {rel:.2%}); (sim - leading)/leading = {ratio:.4f} vs "
      f"-(eps/pi) H log eps = {target:.4f} (off by {abs(ratio / target - 1):.0%})")


def test_10_ellipse_continuity(verdict):
    v = verdict(10, "C_eps,a -> C_eps as a -> 1", 120)
    inp1 = A.ball_input(0.1)
    c1 = A.c_eps_a(inp1).total
    h = np.array([4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4])
    C, quad = [], 0.0
    M, H, pi = inp1.volume, inp1.H, math.pi
    for x in h:
        inp = A.ball_input(0.1, 1 - x)
        pl = X.pairing_log(1 - x, refine=True)
        pf = X.pairing_inf(1 - x, refine=True)
        C.append(A.c_eps_a(inp, pl.value, pf.value).total)
        # pairing refinement errors through their coefficients, plus K_a at 1e-12 relative
        quad = max(quad, M * H / (16 * pi ** 3) * pl.error
                   + M * abs(inp.lambda1 - inp.lambda2) / (64 * pi ** 3) * pf.error
                   + 1e-12 * M * X.K_a(1 - x) / (4 * (1 - x) * inp.eps * pi ** 2))
    C = np.array(C)
    gaps = np.abs(C - c1)
    lim3 = np.polynomial.polynomial.polyfit(h, C, 3)[0]
    lim2 = np.polynomial.polynomial.polyfit(h, C, 2)[0]
    tol = quad + abs(lim3 - lim2)
    v(abs(lim3 - c1) <= tol and np.all(np.diff(gaps) < 0),
      f"extrapolated C(1-) = {lim3:.10f} vs C(1) = {c1:.10f} (diff {abs(lim3 - c1):.1e}, "
      f"tol {tol:.1e}); |C(a) - C(1)| falls to {gaps[-1]:.1e} at a = {1 - h[-1]}")


def _invariants():
    """(name, ok, detail) for the invariant suites of every module."""
    out = []
    rng = np.random.default_rng(7)

    # xray_normal: discrete self-adjointness and the R_inf antisymmetry
    grid = X.WeightedGrid(16, 32)
    worst = 0.0
    for a in (1.0, 0.6):
        for _ in range(3):
            cf, cg = rng.uniform(-1, 1, (2, 4))
            f = X.WeightedDiskDensity(lambda x, y, c=cf: c[0] + c[1] * x + c[2] * y * y + c[3] * x * y)
            g = X.WeightedDiskDensity(lambda x, y, c=cg: c[0] + c[1] * y + c[2] * x * x + c[3] * x ** 3)
            t = grid.points
            lhs = np.sum(grid.weights * g.smooth(*t.T) * X.apply_L_a(f, a, t))
            rhs = np.sum(grid.weights * f.smooth(*t.T) * X.apply_L_a(g, a, t))
            nf = math.sqrt(np.sum(grid.weights * f.smooth(*t.T) ** 2))
            ng = math.sqrt(np.sum(grid.weights * g.smooth(*t.T) ** 2))
            worst = max(worst, abs(lhs - rhs) / (nf * ng))
    out.append(("xray self-adjointness", worst <= 1e-8, f"{worst:.1e}"))
    T = X.pairing_terms("inf", 1.0, 16, 32, 64, 16)
    idx = (T.shape[1] // 4 - np.arange(T.shape[1])) % T.shape[1]
    anti = float(np.max(np.abs(T + T[:, idx])))
    out.append(("xray R_inf antisymmetry", anti <= 1e-14, f"{anti:.1e}"))

    # geometry: frame determinism and orientation
    tri = geo.ellipsoid(1.5, 1.0, 0.7)
    det_ok = True
    for p in rng.normal(size=(10, 3)):
        x = tri.project(p)
        c1, c2 = geo.curvature_at(tri, x), geo.curvature_at(tri, x.copy())
        det_ok &= bool(np.array_equal(c1.E1, c2.E1) and np.array_equal(c1.E2, c2.E2)
                       and np.allclose(np.cross(c1.normal, c1.E1), c1.E2, atol=1e-12)
                       and c1.lambda1 >= c1.lambda2)
    out.append(("geometry frame determinism", det_ok, "10 random points"))

    # greens_bem: weighted symmetry of S, symmetry of G, zero means
    ell = geo.ellipsoid(1.5, 1.0, 0.8)
    mesh = B.BoundaryMesh.build(ell, 24)
    S_, _, _, _ = B.assemble_layers(mesh)
    WS = mesh.weights[:, None] * S_.matrix
    sym = float(np.linalg.norm(WS - WS.T) / np.linalg.norm(WS))
    out.append(("bem S symmetry", sym <= 1e-8, f"{sym:.1e}"))
    solver = B.NeumannSolver(mesh)
    y = ell.project(np.array([0.3, 0.5, 0.6]))
    z = ell.project(np.array([-0.8, 0.2, -0.3]))
    gy = B.solve_boundary_green(mesh, y, solver=solver, extrapolate=False)
    gz = B.solve_boundary_green(mesh, z, solver=solver, extrapolate=False)
    a_, b_ = gy.G(z[None])[0], gz.G(y[None])[0]
    out.append(("bem G symmetry", abs(a_ - b_) <= 1e-3 * abs(a_), f"{abs(a_ - b_):.1e}"))
    F = B.solve_F(mesh, solver=solver)
    zm = max(abs(gy.boundary_mean()), abs(np.sum(mesh.weights * F.nodes())) / mesh.area)
    out.append(("bem zero mean (G and F)", zm <= 1e-6, f"{zm:.1e}"))

    # asymptotics: term additivity and disk collapse
    bd = A.c_eps_a(A.ball_input(0.1))
    add = abs(bd.total - (bd.leading + bd.log_term + bd.regular_term + bd.f_term
                          + bd.log_pairing_term + bd.curvature_diff_term))
    bq = A.c_eps_a(A.ball_input(0.1), X.pairing_log(1.0).value, X.pairing_inf(1.0).value)
    out.append(("asymptotics additivity and a = 1 collapse",
                add <= 1e-13 and abs(bq.total - bd.total) <= 1e-6,
                f"{add:.1e}, {abs(bq.total - bd.total):.1e}"))

    # brownian_sim: determinism across runs and thread counts, no-window censoring
    ball = geo.unit_ball()
    win = geo.make_window(ball, [0, 0, 1], 0.2)
    cfg = S.SimConfig(dt=4e-4, n_paths=400, seed=99, jobs=1)
    t1 = S.simulate_times(ball, win, cfg).times
    t2 = S.simulate_times(ball, win, cfg).times
    digest = hashlib.sha256(np.ascontiguousarray(t1).tobytes()).hexdigest()
    code = (
        "import numpy as np, hashlib\n"
        "from narrow_escape import brownian_sim as S, geometry as g\n"
        "b = g.unit_ball(); w = g.make_window(b, [0, 0, 1], 0.2)\n"
        "t = S.simulate_times(b, w, S.SimConfig(dt=4e-4, n_paths=400, seed=99, jobs=4)).times\n"
        "print(hashlib.sha256(np.ascontiguousarray(t).tobytes()).hexdigest())\n")
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    same = np.array_equal(t1, t2, equal_nan=True) and res.stdout.strip() == digest
    out.append(("simulation determinism (runs, 1 vs 4 threads)", same, digest[:12]))
    nw = S.simulate_times(ball, None, S.SimConfig(dt=1e-3, n_paths=10, max_steps=1000,
                                                  mode="no_window")).times
    out.append(("simulation no-window censoring", bool(np.all(np.isnan(nw))), "10 paths"))
    return out


def test_11_invariants(verdict):
    v = verdict(11, "invariant suites of every module", 600)
    rows = _invariants()
    for name, ok, detail in rows:
        print(f"    {'ok  ' if ok else 'FAIL'} {name}: {detail}")
    failed = [name for name, ok, _ in rows if not ok]
    v(not failed, f"{len(rows) - len(failed)}/{len(rows)} checks passed"
      + (f"; failed: {', '.join(failed)}" if failed else ""))
