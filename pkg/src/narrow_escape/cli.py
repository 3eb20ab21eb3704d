"""Command-line interface.

    narrow-escape geometry inspect  --shape S [--window W]
    narrow-escape xray verify       [--a A] [--resolution N]
    narrow-escape greens solve      --shape S --at x,y,z [--mesh N] [--csv F]
    narrow-escape mfpt asymptotic   --shape S --window W [--sweep-eps lo:hi:n] [--csv F]
    narrow-escape mfpt simulate     --shape S --window W --paths N --dt X --seed S [--jobs J]
    narrow-escape mfpt compare      --shape S --window W [--eps-list a,b] [--paths N] [--dt X]

Every run prints one JSON document with ``schema_version``, the resolved
configuration, units and results. Exit codes: 0 ok, 2 configuration error,
3 numerical failure, 4 failed verification.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from typing import Optional

import numpy as np

from . import asymptotics, brownian_sim, greens_bem, xray_normal
from .config import (ConfigError, RunConfig, load_file, merge, parse_scalar_list, parse_sweep,
                     resolve, section_file)
from .geometry import GeometryError, admissible_radius, curvature_at, measures, window_chart
from .pipeline import solve_expansion

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

UNITS = {
    "length": "domain length unit L",
    "area": "L^2",
    "volume": "L^3",
    "curvature": "1/L",
    "time": "L^2 with generator Delta; multiply by 2 for the Delta/2 convention",
}


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


def _emit(doc: dict, cfg: RunConfig, out: Optional[str] = None):
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default)
    path = out or cfg.output.get("json")
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _document(command: str, cfg: RunConfig, result, **extra) -> dict:
    d = {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg.as_dict(),
         "units": UNITS, "result": result}
    d.update(extra)
    return d


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, shape=True, window=False):
    p.add_argument("--config", help="run configuration (TOML, or the JSON of a previous run)")
    if shape:
        p.add_argument("--shape", help="shape configuration file ([shape] table)")
    if window:
        p.add_argument("--window", help="window configuration file ([window] table)")
    p.add_argument("--out", help="also write the JSON result to this file")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="narrow-escape",
                                 description="Narrow escape asymptotics, BEM and Monte Carlo.")
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("geometry").add_subparsers(dest="action", required=True)
    p = g.add_parser("inspect", help="measures, curvature and window data")
    _common(p, window=True)
    p.add_argument("--at", help="boundary point x,y,z to inspect")

    x = sub.add_parser("xray").add_subparsers(dest="action", required=True)
    p = x.add_parser("verify", help="run the disk identity suite")
    _common(p, shape=False)
    p.add_argument("--a", type=float)
    p.add_argument("--resolution", type=int)

    gr = sub.add_parser("greens").add_subparsers(dest="action", required=True)
    p = gr.add_parser("solve", help="regular part R(x*, x*) by BEM")
    _common(p)
    p.add_argument("--at", help="boundary point x,y,z")
    p.add_argument("--mesh", type=int)
    p.add_argument("--csv", help="dump G(x*, node) samples")

    m = sub.add_parser("mfpt").add_subparsers(dest="action", required=True)
    p = m.add_parser("asymptotic", help="C_eps,a breakdown and averaged MFPT")
    _common(p, window=True)
    p.add_argument("--mesh", type=int)
    p.add_argument("--bem", action="store_true", default=None,
                   help="use the BEM even where closed forms exist")
    p.add_argument("--sweep-eps", dest="sweep_eps", help="lo:hi:n sweep (CSV)")
    p.add_argument("--field-points", dest="field_points", type=int)
    p.add_argument("--csv")

    p = m.add_parser("simulate", help="Monte Carlo estimate")
    _common(p, window=True)
    p.add_argument("--paths", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--start", help="'uniform' or a point x,y,z")
    p.add_argument("--mode", choices=["window", "absorb_all", "no_window"])
    p.add_argument("--extrapolate", action="store_true", default=None)
    p.add_argument("--no-aggregate", dest="aggregate", action="store_false", default=None)
    p.add_argument("--csv", help="per-path arrival times")

    p = m.add_parser("compare", help="asymptotic vs simulated averaged MFPT")
    _common(p, window=True)
    p.add_argument("--eps-list", dest="eps_list", help="comma-separated window radii")
    p.add_argument("--paths", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--mesh", type=int)
    p.add_argument("--csv")
    return ap


def _config_from_args(args) -> RunConfig:
    parts = []
    if getattr(args, "config", None):
        parts.append(load_file(args.config))
    if getattr(args, "shape", None):
        parts.append(section_file(args.shape, "shape"))
    if getattr(args, "window", None):
        parts.append(section_file(args.window, "window"))
    method = {}
    for key in ("mesh", "dt", "paths", "max_steps", "mode", "aggregate", "extrapolate",
                "resolution", "a", "sweep_eps", "bem", "field_points"):
        val = getattr(args, key, None)
        if val is not None:
            method[key] = val
    if getattr(args, "at", None):
        method["at"] = parse_scalar_list(args.at, 3, "--at")
    if getattr(args, "start", None):
        s = args.start
        method["start"] = s if s == "uniform" else parse_scalar_list(s, 3, "--start")
    if getattr(args, "eps_list", None):
        method["eps_list"] = parse_scalar_list(args.eps_list, None, "--eps-list")
    out = {}
    if getattr(args, "csv", None):
        out["csv"] = args.csv
    top = {"method": method, "output": out, "seed": args.seed, "jobs": args.jobs}
    return resolve(merge(*parts, top))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_geometry_inspect(cfg: RunConfig) -> dict:
    shape = cfg.build_shape()
    meas = measures(shape)
    res = {"shape": shape.describe(), "volume": meas.volume, "area": meas.area,
           "volume_error": meas.volume_error, "area_error": meas.area_error,
           "admissible_radius": admissible_radius(shape)}
    at = cfg.method.get("at")
    if at is not None:
        c = curvature_at(shape, shape.project(np.asarray(at, dtype=float)))
        res["curvature"] = {"point": c.point, "lambda1": c.lambda1, "lambda2": c.lambda2, "H": c.H,
                            "E1": c.E1, "E2": c.E2, "normal": c.normal}
    if cfg.window is not None:
        w = cfg.build_window(shape)
        chart = window_chart(shape, w)
        res["window"] = w.describe()
        res["window"]["area"] = chart.area()
        res["window"]["area_leading"] = w.a * math.pi * w.eps ** 2
    return res


def xray_identities(a: float = 1.0, resolution: Optional[int] = None):
    """Identity suite of the disk module; rows {identity, computed, expected, abs_error, tol}."""
    n_r = resolution or xray_normal.DEFAULT_N_R
    n_th = 2 * n_r
    rows = []

    def add(name, computed, expected, tol):
        err = abs(computed - expected)
        rows.append({"identity": name, "computed": computed, "expected": expected,
                     "abs_error": err, "tolerance": tol, "passed": bool(err <= tol)})

    add("K_1 = pi^2", xray_normal.K_a(1.0), math.pi ** 2, 1e-12)
    Ka = xray_normal.K_a(a)
    from scipy.special import ellipk
    add(f"K_a = 2 pi a K(1 - a^2), a={a:g}", Ka, 2 * math.pi * a * float(ellipk(1 - a * a)),
        1e-10 * Ka)
    r = np.linspace(0.0, 0.95, 8)
    th = np.linspace(0.0, 2 * math.pi, 9)[:-1]
    t = np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], -1).reshape(-1, 2)
    for aa in sorted({1.0, a}):
        L = xray_normal.apply_L_a(xray_normal.u0_a(aa), aa, t, n_th, n_r)
        add(f"max |L_a u0_a - 1|, a={aa:g}", float(np.max(np.abs(L - 1))), 0.0, 1e-3)
    rr = np.linspace(0.0, 1.0, 20)
    tt = np.stack([rr, np.zeros_like(rr)], -1)
    f = xray_normal.apply_R_log_a(xray_normal.u0_a(1.0), 1.0, tt, n_th, n_r)
    add("max |R_log u0 - f_log_closed|", float(np.max(np.abs(f - xray_normal.f_log_closed(rr)))), 0.0,
        1e-3)
    add("f_log_closed(0) = (2/pi)(log 2 - 1)", float(xray_normal.f_log_closed(0.0)),
        2 / math.pi * (math.log(2) - 1), 1e-12)
    pl = xray_normal.pairing_log(1.0, n_phi=2 * n_th, n_psi=n_r // 2).value
    ex = math.pi ** 2 * (8 * math.log(2) - 6)
    add("<w, R_log w> = pi^2 (8 log 2 - 6)", pl, ex, 1e-3 * abs(ex))
    add("<w, R_inf w> = 0", xray_normal.pairing_inf(1.0, n_phi=2 * n_th, n_psi=n_r // 2).value,
        0.0, 1e-6)
    rng = np.random.default_rng(0)
    u0 = xray_normal.u0_a(1.0)
    dev = 0.0
    for _ in range(100):
        ang = rng.uniform(0, 2 * math.pi)
        x = np.array([math.cos(ang), math.sin(ang)])
        phi = ang + math.pi + rng.uniform(-0.5 * math.pi, 0.5 * math.pi) * 0.999
        v = np.array([math.cos(phi), math.sin(phi)])
        dev = max(dev, abs(xray_normal.xray_transform(u0, x, v) - 1 / math.pi))
    add("max |I u0 - 1/pi| over 100 chords", dev, 0.0, 1e-6)
    sol = xray_normal.solve_L_a(lambda x, y: x * x, 1.0)
    add("<L^-1 t1^2, 1> = 2/(3 pi)", sol.density.integrate(), 2 / (3 * math.pi), 1e-4)
    if a != 1.0:
        pa = xray_normal.pairing_log(a, refine=True)
        rows.append({"identity": f"<w, R_log,a w>, a={a:g}", "computed": pa.value,
                     "expected": None, "abs_error": pa.error, "tolerance": None, "passed": True})
        pi_ = xray_normal.pairing_inf(a, refine=True)
        rows.append({"identity": f"<w, R_inf,a w>, a={a:g}", "computed": pi_.value,
                     "expected": None, "abs_error": pi_.error, "tolerance": None, "passed": True})
    return rows


def cmd_xray_verify(cfg: RunConfig):
    a = float(cfg.method.get("a", 1.0))
    if not 0 < a <= 1:
        raise ConfigError("--a must lie in (0, 1]")
    res = cfg.method.get("resolution")
    rows = xray_identities(a, res)
    refined = False
    if not all(r["passed"] for r in rows):
        rows = xray_identities(a, 2 * (res or xray_normal.DEFAULT_N_R))
        refined = True
    errs = [r["abs_error"] for r in rows if r["expected"] is not None]
    out = {"identities": rows, "max_abs_error": max(errs), "refined": refined,
           "all_passed": all(r["passed"] for r in rows)}
    return out, out["all_passed"]


def cmd_greens_solve(cfg: RunConfig):
    shape = cfg.build_shape()
    at = cfg.method.get("at")
    if at is None:
        raise ConfigError("greens solve needs --at x,y,z")
    n = int(cfg.method.get("mesh", 36))
    if n < 8:
        raise ConfigError("--mesh must be at least 8")
    ns = sorted({max(8, n // 2), max(8, (3 * n) // 4), n})
    x_star = shape.project(np.asarray(at, dtype=float))
    oracle = greens_bem.ball_R_star() if shape.kind == "unit-ball" else None
    table = greens_bem.convergence_table(shape, x_star, ns, oracle)
    final = table[-1]
    res = {"R_star": final["R_star"], "R_star_E1": final["R_star_E1"],
           "R_star_E2": final["R_star_E2"], "mesh_size": final["nodes"], "x_star": x_star,
           "convergence_table": table, "holder_mu": greens_bem.HOLDER_MU}
    if oracle is not None:
        res["oracle"] = oracle
    if cfg.output.get("csv"):
        mesh = greens_bem.BoundaryMesh.build(shape, n)
        dec = greens_bem.solve_boundary_green(mesh, x_star, extrapolate=False)
        G = dec.G_nodes()
        _write_csv(cfg.output["csv"], ["x", "y", "z", "chord", "G"],
                   [(*p, float(np.linalg.norm(p - x_star)), g) for p, g in zip(mesh.points, G)])
    return res


def _breakdown_doc(sol, bd):
    d = bd.as_dict()
    d["average"] = asymptotics.mfpt_average(sol.inp, sol.F_integral, bd)
    d["average_order"] = asymptotics.ERROR_ORDER_AVERAGE
    return d


def cmd_mfpt_asymptotic(cfg: RunConfig):
    shape = cfg.build_shape()
    window = cfg.build_window(shape)
    sol = solve_expansion(shape, window, int(cfg.method.get("mesh", 36)), cfg.method.get("bem"))
    bd = asymptotics.c_eps_a(sol.inp)
    res = {"inputs": sol.inp.__dict__, "method": sol.method, "diagnostics": sol.diagnostics,
           "breakdown": _breakdown_doc(sol, bd), "F_integral": sol.F_integral,
           "flux_chart_integral": asymptotics.flux_prediction(sol.inp).chart_integral()}
    csv_path = cfg.output.get("csv")
    sweep = cfg.method.get("sweep_eps")
    if sweep:
        rows = []
        for eps in parse_sweep(sweep):
            inp = sol.inp.with_eps(eps)
            b = asymptotics.c_eps_a(inp, bd.pairing_log, bd.pairing_inf)
            rows.append((eps, b.leading, b.total, asymptotics.mfpt_average(inp, sol.F_integral, b)))
        res["sweep"] = [dict(zip(("eps", "leading", "C", "average"), r)) for r in rows]
        if csv_path:
            _write_csv(csv_path, ["eps", "leading", "C", "average"], rows)
    elif csv_path:
        n = int(cfg.method.get("field_points", 16))
        xs = window.center
        inward = -window.frame.normal
        depth = np.linspace(0.0, 1.0, n + 2)[1:-1]
        L = _chord_length(shape, xs, inward)
        rows = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", asymptotics.AsymptoticsWarning)
            for s in depth:
                x = xs + s * L * inward
                fv = asymptotics.mfpt_field(sol.inp, lambda y: sol.F(y)[0],
                                            lambda y, z: np.ravel(sol.G(y, z))[0], x, xs, bd)
                rows.append((*x, fv.distance_to_window, fv.value, fv.guarded))
        _write_csv(csv_path, ["x", "y", "z", "distance", "mfpt", "guarded"], rows)
    return res


def _chord_length(shape, x, d):
    A, c = shape.axes, shape.center
    q, e = (x - c) / A, d / A
    qa, qb, qc = e @ e, 2 * q @ e, q @ q - 1
    return float((-qb + math.sqrt(max(qb * qb - 4 * qa * qc, 0.0))) / (2 * qa))


def _sim_config(cfg: RunConfig, window) -> brownian_sim.SimConfig:
    m = cfg.method
    start = m.get("start", "uniform")
    kw = {"dt": float(m.get("dt", brownian_sim.SimConfig.default_dt(window.eps if window else 0.1))),
          "n_paths": int(m.get("paths", 100_000)), "seed": cfg.seed, "jobs": cfg.jobs,
          "mode": m.get("mode", "window"), "aggregate": bool(m.get("aggregate", True))}
    if "max_steps" in m:
        kw["max_steps"] = int(m["max_steps"])
    if start == "uniform":
        kw["start"] = "uniform"
    else:
        kw["start"], kw["start_point"] = "fixed", tuple(float(v) for v in start)
    try:
        return brownian_sim.SimConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _estimate_doc(est: brownian_sim.MfptEstimate) -> dict:
    d = est.as_dict()
    d.pop("wall_time", None)
    return d


def cmd_mfpt_simulate(cfg: RunConfig):
    shape = cfg.build_shape()
    mode = cfg.method.get("mode", "window")
    window = cfg.build_window(shape) if mode == "window" else None
    sc = _sim_config(cfg, window)
    if cfg.method.get("extrapolate"):
        x = brownian_sim.estimate_mfpt_extrapolated(shape, window, sc)
        res = {"extrapolated": x.value, "extrapolated_stderr": x.stderr, "order": x.order,
               "fine": _estimate_doc(x.fine), "coarse": _estimate_doc(x.coarse),
               "coarse_seed": brownian_sim.coarse_seed(sc.seed)}
    else:
        est, times = brownian_sim.estimate_mfpt(shape, window, sc, return_times=True)
        res = _estimate_doc(est)
        if cfg.output.get("csv"):
            _write_csv(cfg.output["csv"], ["path", "time"], enumerate(times.tolist()))
    return res


def cmd_mfpt_compare(cfg: RunConfig):
    shape = cfg.build_shape()
    window = cfg.build_window(shape)
    eps_list = cfg.method.get("eps_list") or [window.eps]
    sol = solve_expansion(shape, window, int(cfg.method.get("mesh", 36)), cfg.method.get("bem"))
    rows = []
    from .geometry import make_window
    for eps in eps_list:
        w = make_window(shape, window.center, float(eps), window.a)
        inp = sol.inp.with_eps(eps)
        pred = asymptotics.mfpt_average(inp, sol.F_integral)
        sc = _sim_config(cfg, w)
        x = brownian_sim.estimate_mfpt_extrapolated(shape, w, sc, pred)
        rows.append({"epsilon": float(eps), "asymptotic": pred, "simulated": x.value,
                     "simulated_stderr": x.stderr, "rel_diff": (x.value - pred) / pred})
    if cfg.output.get("csv"):
        _write_csv(cfg.output["csv"], ["epsilon", "asymptotic", "simulated", "simulated_stderr",
                                       "rel_diff"], [tuple(r.values()) for r in rows])
    return {"table": rows, "order": asymptotics.ERROR_ORDER_AVERAGE}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cmd = f"{args.group} {args.action}"
    try:
        cfg = _config_from_args(args)
        status = EXIT_OK
        if cmd == "geometry inspect":
            res = cmd_geometry_inspect(cfg)
        elif cmd == "xray verify":
            res, ok = cmd_xray_verify(cfg)
            status = EXIT_OK if ok else EXIT_CHECK
        elif cmd == "greens solve":
            res = cmd_greens_solve(cfg)
        elif cmd == "mfpt asymptotic":
            res = cmd_mfpt_asymptotic(cfg)
        elif cmd == "mfpt simulate":
            res = cmd_mfpt_simulate(cfg)
        elif cmd == "mfpt compare":
            res = cmd_mfpt_compare(cfg)
        else:  # pragma: no cover - argparse restricts the choices
            raise ConfigError(f"unknown command {cmd}")
        _emit(_document(cmd, cfg, res), cfg, args.out)
        return status
    except ConfigError as exc:
        print(json.dumps({"error": "config", **exc.as_dict()}), file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, greens_bem.BemError, xray_normal.XrayError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(json.dumps({"error": "numerical", "module": module, "type": type(exc).__name__,
                          "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
