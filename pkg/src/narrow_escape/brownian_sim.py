"""Monte Carlo first passage times of reflected Brownian motion in an ellipsoid.

The generator is Delta, so each Cartesian increment over a step dt is
sqrt(2 dt) times a standard normal. Boundary crossings are located exactly
on the straight segment of a step (a quadratic in the step fraction); a
crossing inside the window absorbs the path, any other crossing is mirrored
in the tangent plane at the crossing point. Arrival times are recorded at
the end of the step that crossed.

Far from the boundary k consecutive steps are merged into one Gaussian
step of variance 2 k dt whenever the step cannot reach the boundary within
seven standard deviations (k <= 4096). This is the exact law of the
endpoint; the probability that a merged block touches the boundary is
below 1e-10.

Every path draws from its own stream keyed by (seed, path index), so the
result does not depend on the number of threads.
"""
from __future__ import annotations

import math
import os
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numba as nb
import numpy as np

from .geometry import Ellipsoid, WindowSpec, window_chart
from .rng import next_normal, next_uniform, path_state

__all__ = [
    "SimConfig",
    "MfptEstimate",
    "ExtrapolatedEstimate",
    "SimulationWarning",
    "WindowTable",
    "window_table",
    "simulate_path",
    "simulate_times",
    "estimate_mfpt",
    "estimate_mfpt_extrapolated",
    "coarse_seed",
    "MODE_WINDOW",
    "MODE_ABSORB_ALL",
    "MODE_NO_WINDOW",
]

MODE_WINDOW = 0
MODE_ABSORB_ALL = 1
MODE_NO_WINDOW = 2
_MODES = {"window": MODE_WINDOW, "absorb_all": MODE_ABSORB_ALL, "no_window": MODE_NO_WINDOW}

K_MAX = 4096
N_SIGMA = 7.0
MAX_REFLECTIONS = 4
_GOLDEN = 0x9E3779B97F4A7C15


class SimulationWarning(UserWarning):
    """Step budget or censoring problems."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters.

    Parameters
    ----------
    dt : float
        Time step (generator Delta units).
    n_paths : int
        Number of independent paths.
    seed : int
        64-bit seed of the counter-keyed streams.
    max_steps : int
        Step budget per path; paths that exceed it are censored.
    start : str
        "fixed" (use ``start_point``) or "uniform" (uniform in the domain).
    start_point : tuple
        Start for the fixed mode.
    reflection : str
        Only "specular" is implemented.
    mode : str
        "window", "absorb_all" (whole boundary absorbs) or "no_window".
    aggregate : bool
        Merge steps far from the boundary.
    jobs : int or None
        Thread count; defaults to $NARROW_ESCAPE_JOBS or the numba default.
    """

    dt: float = 1e-4
    n_paths: int = 100_000
    seed: int = 20240917
    max_steps: int = 50_000_000
    start: str = "uniform"
    start_point: tuple = (0.0, 0.0, 0.0)
    reflection: str = "specular"
    mode: str = "window"
    aggregate: bool = True
    jobs: Optional[int] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.start not in ("fixed", "uniform"):
            raise ValueError("start must be 'fixed' or 'uniform'")
        if self.reflection != "specular":
            raise ValueError("only specular reflection is implemented")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {sorted(_MODES)}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @staticmethod
    def default_dt(eps: float) -> float:
        return (eps / 10.0) ** 2

    def check_budget(self, predicted: float):
        if self.max_steps * self.dt < 10.0 * predicted:
            warnings.warn(f"step budget {self.max_steps * self.dt:.3g} is below ten times the "
                          f"predicted MFPT {predicted:.3g}", SimulationWarning, stacklevel=2)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["start_point"] = list(self.start_point)
        return d


@dataclass(frozen=True)
class WindowTable:
    """Window membership data: the window boundary projected to the tangent plane at x*.

    ``radius[k]`` is the projected boundary radius at polar angle
    -pi + 2 pi k / n in the (E1, E2) plane; the last entry repeats the first.
    """

    center: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    normal: np.ndarray
    radius: np.ndarray
    reject: float

    def contains(self, y) -> np.ndarray:
        y = np.atleast_2d(y)
        return _in_window_vec(y, self.center, self.E1, self.E2, self.radius, self.reject ** 2)


def window_table(shape: Ellipsoid, window: WindowSpec, n: int = 512) -> WindowTable:
    """Tabulate the window boundary for fast membership tests."""
    chart = window_chart(shape, window)
    f = window.frame
    pts = chart.boundary_curve(4 * n) - window.center
    p1, p2 = pts @ f.E1, pts @ f.E2
    ang = np.arctan2(p2, p1)
    rad = np.hypot(p1, p2)
    order = np.argsort(ang)
    ang, rad = ang[order], rad[order]
    ang_ext = np.concatenate([ang[-1:] - 2 * np.pi, ang, ang[:1] + 2 * np.pi])
    rad_ext = np.concatenate([rad[-1:], rad, rad[:1]])
    grid = -np.pi + 2 * np.pi * np.arange(n + 1) / n
    table = np.interp(grid, ang_ext, rad_ext)
    table[-1] = table[0]
    return WindowTable(window.center.copy(), f.E1.copy(), f.E2.copy(), f.normal.copy(), table,
                       3.0 * window.eps)


@nb.njit(cache=True)
def _in_window(y0, y1, y2, c, E1, E2, radius, reject2):
    d0, d1, d2 = y0 - c[0], y1 - c[1], y2 - c[2]
    if d0 * d0 + d1 * d1 + d2 * d2 >= reject2:
        return False
    p1 = d0 * E1[0] + d1 * E1[1] + d2 * E1[2]
    p2 = d0 * E2[0] + d1 * E2[1] + d2 * E2[2]
    n = radius.shape[0] - 1
    s = (math.atan2(p2, p1) + math.pi) * n / (2.0 * math.pi)
    k = int(s)
    if k >= n:
        k = n - 1
    f = s - k
    rb = radius[k] * (1.0 - f) + radius[k + 1] * f
    return p1 * p1 + p2 * p2 <= rb * rb


@nb.njit(cache=True)
def _in_window_vec(y, c, E1, E2, radius, reject2):
    out = np.empty(y.shape[0], dtype=np.bool_)
    for i in range(y.shape[0]):
        out[i] = _in_window(y[i, 0], y[i, 1], y[i, 2], c, E1, E2, radius, reject2)
    return out


@nb.njit(cache=True)
def _path(path, seed, dt, max_steps, A, c, start, uniform, mode, wc, E1, E2, radius, reject2,
          aggregate, kmax):
    """One path; returns (time or nan, steps, iterations, extra reflections)."""
    s0, s1, s2, s3 = path_state(seed, path)
    a0, a1, a2 = A[0], A[1], A[2]
    amin = min(a0, min(a1, a2))
    sig = math.sqrt(2.0 * dt)
    thr = N_SIGMA * sig
    if uniform:
        while True:
            u, s0, s1, s2, s3 = next_uniform(s0, s1, s2, s3)
            q0 = 2.0 * u - 1.0
            u, s0, s1, s2, s3 = next_uniform(s0, s1, s2, s3)
            q1 = 2.0 * u - 1.0
            u, s0, s1, s2, s3 = next_uniform(s0, s1, s2, s3)
            q2 = 2.0 * u - 1.0
            if q0 * q0 + q1 * q1 + q2 * q2 < 1.0:
                break
        x0, x1, x2 = c[0] + a0 * q0, c[1] + a1 * q1, c[2] + a2 * q2
    else:
        x0, x1, x2 = start[0], start[1], start[2]
        q0, q1, q2 = (x0 - c[0]) / a0, (x1 - c[1]) / a1, (x2 - c[2]) / a2
        rho2 = q0 * q0 + q1 * q1 + q2 * q2
        if rho2 >= 1.0 - 1e-12:
            if mode == MODE_ABSORB_ALL:
                return 0.0, 0, 0, 0
            if mode == MODE_WINDOW and _in_window(x0, x1, x2, wc, E1, E2, radius, reject2):
                return 0.0, 0, 0, 0
    steps = 0
    iters = 0
    extra = 0
    while steps < max_steps:
        iters += 1
        q0, q1, q2 = (x0 - c[0]) / a0, (x1 - c[1]) / a1, (x2 - c[2]) / a2
        rho = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2)
        if aggregate:
            lb = amin * (1.0 - rho)
            if lb > 1.5 * thr:
                k = (lb / thr) ** 2
                kk = kmax if k >= kmax else int(k)
                if kk > max_steps - steps:
                    kk = max_steps - steps
                if kk >= 2:
                    sk = sig * math.sqrt(kk)
                    g, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
                    x0 += sk * g
                    g, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
                    x1 += sk * g
                    g, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
                    x2 += sk * g
                    steps += kk
                    continue
        g, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
        y0 = x0 + sig * g
        g, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
        y1 = x1 + sig * g
        g, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
        y2 = x2 + sig * g
        steps += 1
        p0, p1, p2 = (y0 - c[0]) / a0, (y1 - c[1]) / a1, (y2 - c[2]) / a2
        if p0 * p0 + p1 * p1 + p2 * p2 <= 1.0:
            x0, x1, x2 = y0, y1, y2
            continue
        # crossing(s) during this step
        bx0, bx1, bx2 = x0, x1, x2
        done = False
        for refl in range(MAX_REFLECTIONS):
            d0, d1, d2 = y0 - bx0, y1 - bx1, y2 - bx2
            e0, e1, e2 = d0 / a0, d1 / a1, d2 / a2
            b0, b1, b2 = (bx0 - c[0]) / a0, (bx1 - c[1]) / a1, (bx2 - c[2]) / a2
            qa = e0 * e0 + e1 * e1 + e2 * e2
            qb = 2.0 * (b0 * e0 + b1 * e1 + b2 * e2)
            qc = b0 * b0 + b1 * b1 + b2 * b2 - 1.0
            if qc > 0.0:
                qc = 0.0
            disc = qb * qb - 4.0 * qa * qc
            if disc < 0.0:
                disc = 0.0
            sq = math.sqrt(disc)
            # larger root, written to avoid cancellation
            if qb >= 0.0:
                s = (-2.0 * qc) / (qb + sq) if qb + sq > 0.0 else 0.0
            else:
                s = (-qb + sq) / (2.0 * qa)
            if s > 1.0:
                s = 1.0
            z0, z1, z2 = bx0 + s * d0, bx1 + s * d1, bx2 + s * d2
            if mode == MODE_ABSORB_ALL:
                return steps * dt, steps, iters, extra
            if mode == MODE_WINDOW and _in_window(z0, z1, z2, wc, E1, E2, radius, reject2):
                return steps * dt, steps, iters, extra
            n0, n1, n2 = (z0 - c[0]) / (a0 * a0), (z1 - c[1]) / (a1 * a1), (z2 - c[2]) / (a2 * a2)
            nn = math.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
            n0, n1, n2 = n0 / nn, n1 / nn, n2 / nn
            w = (y0 - z0) * n0 + (y1 - z1) * n1 + (y2 - z2) * n2
            y0, y1, y2 = y0 - 2.0 * w * n0, y1 - 2.0 * w * n1, y2 - 2.0 * w * n2
            p0, p1, p2 = (y0 - c[0]) / a0, (y1 - c[1]) / a1, (y2 - c[2]) / a2
            if p0 * p0 + p1 * p1 + p2 * p2 <= 1.0:
                done = True
                break
            extra += 1
            # next segment starts just inside the crossing point
            bx0, bx1, bx2 = z0 - 1e-13 * n0, z1 - 1e-13 * n1, z2 - 1e-13 * n2
        if done:
            x0, x1, x2 = y0, y1, y2
        else:
            x0, x1, x2 = bx0, bx1, bx2
    return np.nan, steps, iters, extra


@nb.njit(parallel=True, cache=True)
def _run(first, n_paths, seed, dt, max_steps, A, c, start, uniform, mode, wc, E1, E2, radius,
         reject2, aggregate, kmax):
    times = np.empty(n_paths)
    steps = np.empty(n_paths, dtype=np.int64)
    iters = np.empty(n_paths, dtype=np.int64)
    extra = np.empty(n_paths, dtype=np.int64)
    for i in nb.prange(n_paths):
        t, s, it, e = _path(first + i, seed, dt, max_steps, A, c, start, uniform, mode, wc, E1, E2,
                            radius, reject2, aggregate, kmax)
        times[i] = t
        steps[i] = s
        iters[i] = it
        extra[i] = e
    return times, steps, iters, extra


def _kernel_args(shape: Ellipsoid, window: Optional[WindowSpec], cfg: SimConfig,
                 table: Optional[WindowTable]):
    if not isinstance(shape, Ellipsoid):
        raise TypeError("the simulator supports ellipsoidal domains")
    mode = _MODES[cfg.mode]
    if mode == MODE_WINDOW:
        if window is None:
            raise ValueError("window mode needs a window")
        table = table or window_table(shape, window)
        wc, E1, E2, rad, rej2 = table.center, table.E1, table.E2, table.radius, table.reject ** 2
    else:
        wc = E1 = E2 = np.zeros(3)
        rad = np.zeros(2)
        rej2 = 0.0
    return (float(cfg.dt), int(cfg.max_steps), shape.axes.astype(float), shape.center.astype(float),
            np.asarray(cfg.start_point, dtype=float), cfg.start == "uniform", mode,
            np.ascontiguousarray(wc, dtype=float), np.ascontiguousarray(E1, dtype=float),
            np.ascontiguousarray(E2, dtype=float), np.ascontiguousarray(rad, dtype=float),
            float(rej2), bool(cfg.aggregate), K_MAX)


def _set_threads(jobs):
    jobs = jobs or os.environ.get("NARROW_ESCAPE_JOBS")
    if jobs:
        nb.set_num_threads(max(1, min(int(jobs), nb.config.NUMBA_NUM_THREADS)))


@dataclass
class PathTimes:
    times: np.ndarray
    steps: np.ndarray
    iterations: np.ndarray
    extra_reflections: np.ndarray


def simulate_times(shape: Ellipsoid, window: Optional[WindowSpec], cfg: SimConfig,
                   first_path: int = 0, n_paths: Optional[int] = None,
                   table: Optional[WindowTable] = None) -> PathTimes:
    """Per-path first arrival times (nan for censored paths)."""
    _set_threads(cfg.jobs)
    args = _kernel_args(shape, window, cfg, table)
    n = cfg.n_paths if n_paths is None else n_paths
    dt, max_steps, A, c, start, uniform, mode, wc, E1, E2, rad, rej2, agg, kmax = args
    t, s, it, e = _run(np.uint64(first_path), n, np.uint64(cfg.seed), dt, max_steps, A, c, start,
                       uniform, mode, wc, E1, E2, rad, rej2, agg, kmax)
    return PathTimes(t, s, it, e)


def simulate_path(shape: Ellipsoid, window: Optional[WindowSpec], cfg: SimConfig,
                  path: int = 0) -> float:
    """First arrival time of a single path (nan if censored)."""
    return float(simulate_times(shape, window, cfg, first_path=path, n_paths=1).times[0])


@dataclass(frozen=True)
class MfptEstimate:
    mean: float
    stderr: float
    ci95: tuple
    n_absorbed: int
    n_censored: int
    n_paths: int
    dt: float
    seed: int
    valid: bool
    extra_reflections: int = 0
    mean_steps: float = 0.0
    mean_iterations: float = 0.0
    wall_time: float = 0.0

    @property
    def ci_halfwidth(self) -> float:
        return 0.5 * (self.ci95[1] - self.ci95[0])

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d


def _summarize(pt: PathTimes, cfg: SimConfig, wall: float) -> MfptEstimate:
    t = pt.times
    ok = np.isfinite(t)
    n_abs = int(ok.sum())
    n_cen = int(t.size - n_abs)
    if n_abs:
        tt = t[ok]
        mean = float(np.sum(tt) / n_abs)
        var = float(np.sum((tt - mean) ** 2) / max(n_abs - 1, 1))
        se = math.sqrt(var / n_abs)
    else:
        mean, se = float("nan"), float("nan")
    valid = n_abs > 0 and n_cen / t.size < 1e-3
    if n_cen:
        warnings.warn(f"{n_cen} of {t.size} paths censored", SimulationWarning, stacklevel=3)
    return MfptEstimate(mean, se, (mean - 1.96 * se, mean + 1.96 * se), n_abs, n_cen, int(t.size),
                        cfg.dt, int(cfg.seed), bool(valid), int(pt.extra_reflections.sum()),
                        float(pt.steps.mean()), float(pt.iterations.mean()), wall)


def estimate_mfpt(shape: Ellipsoid, window: Optional[WindowSpec], cfg: SimConfig,
                  predicted: Optional[float] = None, return_times: bool = False):
    """Mean first arrival time over ``cfg.n_paths`` paths."""
    if predicted is not None:
        cfg.check_budget(predicted)
    t0 = time.perf_counter()
    pt = simulate_times(shape, window, cfg)
    est = _summarize(pt, cfg, time.perf_counter() - t0)
    return (est, pt.times) if return_times else est


def coarse_seed(seed: int) -> int:
    """Seed of the coarse-step companion run."""
    return (int(seed) + _GOLDEN) % 2 ** 64


@dataclass(frozen=True)
class ExtrapolatedEstimate:
    """sqrt(dt) extrapolation T0 = 2 T(dt) - T(4 dt) from two independent runs."""

    value: float
    stderr: float
    fine: MfptEstimate
    coarse: MfptEstimate
    order: str = "O(dt) after removing the sqrt(dt) boundary term"

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "fine": self.fine.as_dict(),
                "coarse": self.coarse.as_dict(), "order": self.order}


def estimate_mfpt_extrapolated(shape: Ellipsoid, window: Optional[WindowSpec], cfg: SimConfig,
                               predicted: Optional[float] = None) -> ExtrapolatedEstimate:
    """Run at dt and 4 dt and cancel the sqrt(dt) boundary bias."""
    fine = estimate_mfpt(shape, window, cfg, predicted)
    d = cfg.as_dict()
    d.update(dt=4 * cfg.dt, seed=coarse_seed(cfg.seed), start_point=tuple(cfg.start_point))
    coarse = estimate_mfpt(shape, window, SimConfig(**d), predicted)
    val = 2 * fine.mean - coarse.mean
    se = math.sqrt(4 * fine.stderr ** 2 + coarse.stderr ** 2)
    return ExtrapolatedEstimate(val, se, fine, coarse)
