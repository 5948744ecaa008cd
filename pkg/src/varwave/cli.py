"""Batch front-end: ``varwave <command> --config run.yaml [--out dir] [--tau list] [--refine n]``.

Exit codes: 0 success, 1 user error (config, arguments), 2 numerical failure.
Every command writes ``<out>/<command>.json`` carrying the config hash and
module versions, also when it fails.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, goursat
from .coeffx import validate_conditions
from .config import ConfigError, RunConfig, parse_config
from .goursat import SolverError, StateField, export_csv, solve
from .initdata import boundary_gamma0, compatibility_residuals, initial_energy, s_grid
from .physmap import SliceOutOfDomain, energy, export_slice_csv, extract_slice, sample_u

COMMANDS = ("validate", "solve", "slice", "energy", "singular", "metric", "compare", "convergence")


class UserError(ValueError):
    pass


def module_versions() -> dict:
    import scipy
    import skimage
    import yaml

    return {"varwave": __version__, "backend": goursat.BACKEND, "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-image": skimage.__version__, "pyyaml": yaml.__version__}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_plain(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    return f"{float(v):.17g}"


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in r) + "\n")


def write_gnuplot(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# -- shared pipeline pieces -------------------------------------------------

def _solve_state(cfg: RunConfig, delta: float | None = None, data=None) -> StateField:
    delta = cfg.delta if delta is None else delta
    data = cfg.data if data is None else data
    bd = boundary_gamma0(cfg.coefficients, data, s_grid(cfg.coefficients, cfg.box, cfg.T, delta))
    return solve(bd, cfg.coefficients, t_stop=cfg.T, iters=int(cfg.options["iters"]),
                 backend=cfg.options["backend"])


def _cache_path(out):
    return os.path.join(out, "state.npz")


def _state(cfg: RunConfig, out: str) -> StateField:
    """Reuse ``state.npz`` from a previous solve with the same config hash."""
    path = _cache_path(out)
    if os.path.exists(path):
        z = np.load(path, allow_pickle=False)
        if str(z["config_hash"]) == cfg.hash:
            g = z["grid"]
            grid = goursat.GridSpec(float(g[0]), int(g[1]), None if g[2] < 0 else int(g[2]))
            return StateField(F=z["F"], grid=grid, cs=cfg.coefficients, rows=int(z["rows"]),
                              max_drift=float(z["max_drift"]), backend=str(z["backend"]))
    return _store(cfg, out, _solve_state(cfg))


def _store(cfg, out, st: StateField) -> StateField:
    g = st.grid
    np.savez(_cache_path(out), F=st.F[:, : st.rows], rows=st.rows, max_drift=st.max_drift, backend=st.backend,
             config_hash=cfg.hash, grid=np.array([g.delta, g.n_half, -1 if g.k_max is None else g.k_max]))
    return st


def _taus(cfg, args):
    return args.tau if args.tau is not None else cfg.tau_grid()


def _need_b(cfg):
    if cfg.data_b is None:
        raise UserError("this command needs a data_b block")


# -- commands ---------------------------------------------------------------

def cmd_validate(cfg, args, out):
    rep = validate_conditions(cfg.coefficients)
    s = s_grid(cfg.coefficients, cfg.box, cfg.T, cfg.delta)
    bd = boundary_gamma0(cfg.coefficients, cfg.data, s)
    comp = compatibility_residuals(bd, cfg.coefficients)
    doc = {
        "conditions": rep.summary(),
        "generic_degenerate": not rep.generic_ok,
        "notes": ([] if rep.generic_ok else
                  ["generic condition fails: d_u lambda vanishes on the sampled domain, "
                   "so degenerate singular configurations are not excluded"]),
        "first_generic_violations": rep.generic_violations[:10],
        "first_bound_violations": rep.bound_violations[:10],
        "boundary": {"n_nodes": len(s), "s_min": s[0], "s_max": s[-1],
                     "compatibility_max": {k: float(np.max(np.abs(v))) for k, v in zip(("u", "x", "t"), comp)}},
        "initial_energy": initial_energy(cfg.coefficients, cfg.data),
    }
    if not rep.bounds_ok:
        doc["error"] = "declared bounds are violated on the sampled domain"
        return 1, doc
    return 0, doc


def cmd_solve(cfg, args, out):
    st = _store(cfg, out, _solve_state(cfg))
    export_csv(st, os.path.join(out, "state.csv"), {"config_hash": cfg.hash})
    cr = st.circle_residuals()
    cons = goursat.consistency_residuals(st, cfg.coefficients)
    return 0, {"rows": st.rows, "t_complete": st.t_complete, "max_drift": st.max_drift, "backend": st.backend,
               "grid": st.grid.as_dict(), "circle_residual_max": list(cr),
               "consistency_max": {k: float(np.nanmax(np.abs(v))) for k, v in cons.items()},
               "files": ["state.csv", "state.csv.json", "state.npz"]}


def cmd_slice(cfg, args, out):
    st = _state(cfg, out)
    entries, plots = [], []
    eps = float(cfg.options["eps_sing"])
    for n, tau in enumerate(_taus(cfg, args)):
        sl = extract_slice(st, tau, eps)
        name = f"slice_{n:03d}.csv"
        export_slice_csv(sl, os.path.join(out, name))
        entries.append({"tau": tau, "file": name, "n_samples": len(sl), "n_singular": int(sl.singular.sum()),
                        "x_range": [sl.x[0], sl.x[-1]]})
        plots.append(f"'{name}' using 3:4 with lines title 'tau={tau:g}'")
    write_gnuplot(os.path.join(out, "slice.gp"),
                  ["set datafile separator ','", "set xlabel 'x'", "set ylabel 'u'",
                   "plot " + ", \\\n     ".join(plots)])
    return 0, {"slices": entries, "eps_sing": eps, "plot": "slice.gp"}


def cmd_energy(cfg, args, out):
    st = _state(cfg, out)
    E0 = initial_energy(cfg.coefficients, cfg.data)
    rows, reps = [], []
    for tau in _taus(cfg, args):
        r = energy(extract_slice(st, tau), cfg.coefficients, E0)
        reps.append(r.as_dict())
        rows.append((tau, r.E_minus, r.E_plus, r.total, r.drift))
    write_csv(os.path.join(out, "energy.csv"), ("tau", "E_minus", "E_plus", "total", "drift"), rows)
    write_gnuplot(os.path.join(out, "energy.gp"),
                  ["set datafile separator ','", "set key autotitle columnhead", "set xlabel 'tau'",
                   "plot 'energy.csv' using 1:2 with linespoints, '' using 1:3 with linespoints, "
                   "'' using 1:4 with linespoints"])
    drift = [abs(r[4]) for r in rows]
    return 0, {"E0": E0, "max_abs_drift": max(drift), "energies": reps, "files": ["energy.csv", "energy.gp"]}


def cmd_singular(cfg, args, out):
    from .singular import classify, curves_csv, generic_report, zero_curves

    st = _state(cfg, out)
    curves = zero_curves(st, "h") + zero_curves(st, "g")
    points = classify(st, cfg.coefficients, curves)
    gen = generic_report(st, cfg.coefficients)
    curves_csv(curves, os.path.join(out, "singular_curves.csv"))
    write_gnuplot(os.path.join(out, "singular.gp"),
                  ["set datafile separator ','", "set xlabel 'x'", "set ylabel 't'",
                   "plot 'singular_curves.csv' every ::1 using 3:4 with points pt 7 ps 0.3 title 'h=0 / g=0'"])
    t_first = min((float(np.min(c.t)) for c in curves), default=None)
    return 0, {"curves": [c.as_dict() for c in curves], "points": [vars(p) for p in points],
               "n_type": {t: sum(p.type == t for p in points) for t in ("i", "ii", "iii")},
               "first_singular_time": t_first, "generic": gen,
               "files": ["singular_curves.csv", "singular.gp"]}


def _path(cfg, n_theta=None, delta=None):
    from .variation import linear_rs_path

    return linear_rs_path(cfg.coefficients, cfg.data, cfg.data_b, int(n_theta or cfg.options["n_theta"]),
                          delta=delta or cfg.delta, T=cfg.T, iters=int(cfg.options["iters"]), box=cfg.box)


def cmd_metric(cfg, args, out):
    from . import metric

    _need_b(cfg)
    path = _path(cfg)
    taus = _taus(cfg, args)
    if 0.0 not in taus:
        taus = [0.0] + list(taus)
    bds = metric.path_breakdowns(path, taus, cfg.weights)
    lengths = [b.total for b in bds]
    if lengths[0] < metric.EPS_FLOOR:
        raise UserError("path length at tau=0 vanishes: the two data sets coincide")
    ratio = max(v / lengths[0] for v in lengths)
    path.write_manifest(os.path.join(out, "path_manifest.json"))
    write_csv(os.path.join(out, "metric.csv"), ("tau", "length", "ratio"),
              [(t, v, v / lengths[0]) for t, v in zip(taus, lengths)])
    write_gnuplot(os.path.join(out, "metric.gp"),
                  ["set datafile separator ','", "set key autotitle columnhead", "set xlabel 'tau'",
                   "plot 'metric.csv' using 1:2 with linespoints"])
    return 0, {"weights": {"kappa": list(cfg.weights.kappa), "delta": cfg.weights.delta},
               "gauge": "canonical shift, no relabeling optimisation",
               "n_theta": len(path.thetas) - 1, "taus": taus, "lengths": lengths, "lipschitz_ratio": ratio,
               "breakdowns": [dict(b.as_dict(), tau=t) for t, b in zip(taus, bds)],
               "files": ["metric.csv", "metric.gp", "path_manifest.json"]}


def cmd_compare(cfg, args, out):
    from . import metric

    _need_b(cfg)
    cs, W = cfg.coefficients, cfg.weights
    path = _path(cfg)
    taus = _taus(cfg, args)
    lengths = metric.path_lengths(path, taus, W)
    C1, C2 = metric.constant_C1(cs, W), metric.constant_C2(cs, W)
    C3 = metric.constant_C3(cs, cfg.data, cfg.data_b, W, cfg.T, cfg.delta)
    sob = metric.sobolev_bound(cfg.data, cfg.data_b, cs)
    last = len(path.thetas) - 1
    rows, entries = [], []
    for tau, L in zip(taus, lengths):
        sA, sB = extract_slice(path.state(0), tau), extract_slice(path.state(last), tau)
        l1 = metric.l1_dist(sA, sB)
        kr = metric.kr_dist(sA, sB, cs)
        rows.append((tau, L, l1, kr))
        entries.append({"tau": tau, "path_length": L, "l1": l1, "kr": kr,
                        "l1_margin": C1 * L - l1, "kr_margin": C2 * L - kr})
    L0 = float(metric.path_length(path, 0.0, W)) if 0.0 not in taus else float(lengths[list(taus).index(0.0)])
    write_csv(os.path.join(out, "compare.csv"), ("tau", "path_length", "l1", "kr"), rows)
    return 0, {"constants": {"C1": C1, "C2": C2, "C3": C3}, "sobolev": sob, "path_length_0": L0,
               "sobolev_margin": sob - L0 / C3, "entries": entries, "files": ["compare.csv"]}


def cmd_convergence(cfg, args, out):
    from . import oracle

    levels = int(args.refine if args.refine is not None else cfg.options["refine"])
    if levels < 2:
        raise UserError("--refine must be >= 2")
    deltas = [cfg.delta / 2**k for k in range(levels)]
    taus = [t for t in _taus(cfg, args) if t > 0] or [cfg.T / 2]
    cs = cfg.coefficients
    exact = cs.is_constant()
    E0 = initial_energy(cs, cfg.data)
    rows, prev = [], None
    errors = []
    for d in deltas:
        st = _solve_state(cfg, d)
        slices = [extract_slice(st, t) for t in taus]
        drift = max(abs(energy(sl, cs, E0).drift) for sl in slices)
        if exact:
            err = max(float(np.max(np.abs(sl.u - oracle.dalembert(cs, cfg.data, sl.x, sl.tau)))) for sl in slices)
        else:
            # self-convergence on a fixed x grid against the previous level
            grids = [np.linspace(sl.x[0], sl.x[-1], 2001)[1:-1] for sl in slices]
            cur = [sample_u(sl, g) for sl, g in zip(slices, grids)]
            err = (np.nan if prev is None else
                   max(float(np.max(np.abs(np.interp(g, pg, pu) - u)))
                       for g, u, pg, pu in zip(grids, cur, prev[0], prev[1])))
            prev = (grids, cur)
        errors.append(err)
        rows.append((d, err, drift))
    pairs = [(d, e) for d, e in zip(deltas, errors) if np.isfinite(e) and e > 0]
    if not exact:
        pairs = [(deltas[k], errors[k]) for k in range(1, len(deltas)) if errors[k] > 0]
    order = oracle.convergence_order(pairs) if len(pairs) >= 2 else None
    write_csv(os.path.join(out, "convergence.csv"), ("delta", "error", "energy_drift"), rows)
    write_gnuplot(os.path.join(out, "convergence.gp"),
                  ["set datafile separator ','", "set logscale xy", "set key autotitle columnhead",
                   "plot 'convergence.csv' using 1:2 with linespoints, '' using 1:3 with linespoints"])
    return 0, {"reference": "closed form" if exact else "successive levels", "deltas": deltas,
               "errors": errors, "order": order, "taus": taus, "files": ["convergence.csv", "convergence.gp"]}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def _tau_list(text):
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tau list {text!r}")
    if not vals or any(v < 0 or not np.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("tau values must be finite and >= 0")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="varwave", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--tau", type=_tau_list, help="comma-separated slice times")
    p.add_argument("--refine", type=int, help="number of grid levels for convergence")
    return p


def dispatch(cmd: str, cfg: RunConfig, args=None, out: str | None = None) -> int:
    """Run one command and write ``<out>/<cmd>.json``; returns the exit code."""
    if args is None:
        args = argparse.Namespace(tau=None, refine=None)
    out = out or cfg.output
    os.makedirs(out, exist_ok=True)
    doc = {"command": cmd, "config_hash": cfg.hash, "versions": module_versions(), "source": cfg.source}
    try:
        code, body = HANDLERS[cmd](cfg, args, out)
        doc.update(body)
    except (UserError, SliceOutOfDomain, ValueError) as exc:
        code, doc["error"] = 1, f"{type(exc).__name__}: {exc}"
    except (SolverError, MemoryError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        code, doc["error"] = 2, f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # noqa: BLE001 - the summary must still be written
        code, doc["error"] = 2, f"internal {type(exc).__name__}: {exc}"
    doc["exit_code"] = code
    write_json(os.path.join(out, f"{cmd}.json"), doc)
    if "error" in doc:
        print(doc["error"], file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        out = args.out or "out"
        os.makedirs(out, exist_ok=True)
        write_json(os.path.join(out, f"{args.command}.json"),
                   {"command": args.command, "config_hash": None, "versions": module_versions(),
                    "errors": exc.errors, "exit_code": 1})
        for e in exc.errors:
            print(e, file=sys.stderr)
        return 1
    return dispatch(args.command, cfg, args, args.out)


if __name__ == "__main__":
    sys.exit(main())
