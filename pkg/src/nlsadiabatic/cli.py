"""``nlsadiabatic`` command-line entry point.

Every run writes into its output directory a ``config.json`` echo, CSV data,
a ``summary.json`` and one or more SVG plots. Exit status: 0 on success,
1 on a numerical failure, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import contourpy
import numpy as np

from . import adiabatic, config as C, geometry, stationary
from .errors import ConfigError, EndpointsNotLinear, NLSAdiabaticError
from .models import TwoLevelModel, two_level_hcl
from .state import ProjectiveCoords, reconstruct
from .svg import Plot

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), sort_keys=True, indent=2,
                                     ensure_ascii=False) + "\n", encoding="utf-8")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _two_level(model, command):
    if not isinstance(model, TwoLevelModel):
        raise ConfigError(f"{command} needs the two-level model (model.c, model.v), "
                          "not a matrix model", field="model.matrix")
    return model


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_levels(cfg: C.RunConfig, out: Path) -> dict:
    model = cfg.build_model()
    lv = cfg.levels
    diagram = stationary.continue_branches(
        model, (lv.R_min, lv.R_max), stationary.ContinuationConfig(ds_max=lv.ds_max))
    diagram.to_csv(out)
    collisions = stationary.detect_collision(diagram)
    summary = diagram.summary()
    summary["collisions"] = [c.as_dict() for c in collisions]
    summary["R_star"] = sorted(tp.R for tp in diagram.turning_points)
    if isinstance(model, TwoLevelModel):
        summary["R_star_closed_form"] = stationary.fold_bias(model.c, model.v)

    for name, attr in (("levels_E.svg", "E"), ("levels_Hcl.svg", "H_cl")):
        plot = Plot(title=f"{'E' if attr == 'E' else 'H_cl'}(R)", xlabel="R",
                    ylabel="chemical potential E" if attr == "E" else "total energy H_cl")
        for b in diagram.branches:
            y = getattr(b, attr)
            st = b.stability
            for i0, i1 in stationary._segments(b):
                style = "solid" if st[(i0 + i1) // 2] == "elliptic" else "dashed"
                plot.line(b.R[i0:i1], y[i0:i1], color="#1f77b4" if style == "solid" else "#d62728",
                          style=style)
        if diagram.turning_points:
            Rs, ys = [], []
            for tp in diagram.turning_points:
                psi = reconstruct(ProjectiveCoords(tp.z[: model.dim], tp.z[model.dim:])).amplitudes
                Rs.append(tp.R)
                ys.append(model.chemical_potential(psi, tp.R) if attr == "E"
                          else model.energy(psi, tp.R))
            plot.points(Rs, ys, color="black", marker="square", size=4, label="turning point")
        plot.save(out / name)
    return summary


def _portrait_grid(model, R, n_q, n_p):
    q = np.linspace(0.0, TWO_PI, n_q)
    p = np.linspace(0.0, 1.0, n_p)
    qq, pp = np.meshgrid(q, p)
    return q, p, two_level_hcl(qq, pp, R, model.c, model.v)


def _glyph(plot, fps):
    ell = [f for f in fps if f.stability == "elliptic"]
    other = [f for f in fps if f.stability != "elliptic"]
    if ell:
        plot.points([f.q for f in ell], [f.p for f in ell], color="#1f77b4", label="elliptic")
    if other:
        plot.points([f.q for f in other], [f.p for f in other], color="#d62728", marker="cross",
                    label="hyperbolic")


def _fp_rows(fps):
    return [(f.label or "", f.R, f.q, f.p, f.stability, f.omega, f.kappa, f.chemical_potential,
             f.total_energy, f.residual) for f in fps]


FP_HEADER = ["label", "R", "q", "p", "stability", "omega", "kappa", "E", "H_cl", "residual"]


def cmd_portrait(cfg: C.RunConfig, out: Path) -> dict:
    model = _two_level(cfg.build_model(), "portrait")
    pt = cfg.portrait
    q, p, H = _portrait_grid(model, pt.R, pt.n_q, pt.n_p)
    with open(out / "portrait_grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p\\q", *[repr(float(x)) for x in q]])
        for j in range(p.size):
            w.writerow([repr(float(p[j])), *[repr(float(x)) for x in H[j]]])
    fps = stationary.assign_labels(stationary.find_fixed_points(
        model, pt.R, rng=np.random.default_rng(cfg.seed)))
    fps = [f for f in fps if not f.boundary]
    write_csv(out / "fixed_points.csv", FP_HEADER, _fp_rows(fps))

    gen = contourpy.contour_generator(x=q, y=p, z=H)
    levels = np.linspace(H.min(), H.max(), pt.n_contours + 2)[1:-1]
    plot = Plot(title=f"H_cl level sets at R = {pt.R:g}", xlabel="q", ylabel="p")
    for lev in levels:
        for seg in gen.lines(lev):
            plot.line(seg[:, 0], seg[:, 1], color="#7f7f7f", width=0.8)
    separatrix = [f.total_energy for f in fps if f.stability == "hyperbolic"]
    for lev in separatrix:
        for seg in gen.lines(lev):
            plot.line(seg[:, 0], seg[:, 1], color="#d62728", width=1.6)
    _glyph(plot, fps)
    plot.save(out / "portrait.svg")
    return {"R": pt.R, "grid": {"n_q": pt.n_q, "n_p": pt.n_p},
            "n_fixed_points": len(fps), "fixed_points": [f.as_dict() for f in fps],
            "separatrix_energies": separatrix, "contour_levels": levels.tolist()}


def cmd_fixed_points(cfg: C.RunConfig, out: Path) -> dict:
    model = cfg.build_model()
    fp_cfg = cfg.fixed_points
    fps = stationary.find_fixed_points(model, fp_cfg.R, grid=fp_cfg.grid, edge=fp_cfg.edge,
                                       rng=np.random.default_rng(cfg.seed))
    if isinstance(model, TwoLevelModel):
        interior = stationary.assign_labels([f for f in fps if not f.boundary])
        fps = interior + [f for f in fps if f.boundary]
        write_csv(out / "fixed_points.csv", FP_HEADER, _fp_rows(fps))
        plot = Plot(title=f"fixed points at R = {fp_cfg.R:g}", xlabel="q", ylabel="p")
        _glyph(plot, interior)
        plot.save(out / "fixed_points.svg")
    else:
        d = model.dim
        write_csv(out / "fixed_points.csv",
                  ["R", *[f"Q{k+1}" for k in range(d)], *[f"P{k+1}" for k in range(d)],
                   "stability", "omega", "E", "H_cl"],
                  [(f.R, *f.coords.Q, *f.coords.P, f.stability, f.omega, f.chemical_potential,
                    f.total_energy) for f in fps])
        plot = Plot(title=f"fixed points at R = {fp_cfg.R:g}", xlabel="E", ylabel="omega")
        plot.points([f.chemical_potential for f in fps], [f.omega for f in fps])
        plot.save(out / "fixed_points.svg")
    return {"R": fp_cfg.R, "n_fixed_points": len(fps), "fixed_points": [f.as_dict() for f in fps]}


def _orbit_initial(cfg, model):
    ob = cfg.orbit
    if ob.q is not None:
        return reconstruct(ProjectiveCoords([ob.p], [ob.q])).amplitudes
    if isinstance(model, TwoLevelModel):
        low, up = adiabatic.level_basis(ob.R, model.v)
    else:
        _, U = np.linalg.eigh(model.linear_part(ob.R))
        low, up = U[:, 0], U[:, -1]
    I = ob.upper_population
    return math.sqrt(1 - I) * low + math.sqrt(I) * np.exp(1j * ob.phase) * up


def cmd_orbit(cfg: C.RunConfig, out: Path) -> dict:
    model = cfg.build_model()
    ob = cfg.orbit
    psi0 = _orbit_initial(cfg, model)
    orbit = geometry.compute_orbit(model, psi0, ob.R, cfg.integrator_config(),
                                   n_samples=ob.n_samples, max_time=ob.max_time)
    orbit.trajectory.to_csv(out / "orbit.csv", metadata={"tau": orbit.tau, "R": ob.R})
    tr = orbit.trajectory
    plot = Plot(title=f"orbit at R = {ob.R:g}", xlabel="P1 (relative phase)", ylabel="Q1 (population)")
    plot.line(tr.P[:, 0], tr.Q[:, 0])
    plot.points(tr.P[:1, 0], tr.Q[:1, 0], color="black", size=3)
    plot.save(out / "orbit.svg")
    report = orbit.report()
    report["initial_state"] = [[z.real, z.imag] for z in psi0]
    return report


def _sweep_plots(rec, out: Path, prefix="sweep"):
    finite = np.isfinite(rec.pop_upper)
    plot = Plot(title="level populations", xlabel="R", ylabel="population")
    plot.line(rec.R[finite], rec.pop_lower[finite], label="level 1 (lower)")
    plot.line(rec.R[finite], rec.pop_upper[finite], label="level 2 (upper)")
    plot.save(out / f"{prefix}_populations.svg")
    plot = Plot(title="fundamental frequency of the tracked fixed point", xlabel="R", ylabel="omega")
    plot.line(rec.R, rec.omega)
    plot.save(out / f"{prefix}_omega.svg")
    plot = Plot(title="running AA phase / 2 pi", xlabel="R", ylabel="gamma_AA / 2 pi")
    if rec.cycle_R.size:
        step = max(1, rec.cycle_R.size // 4000)
        plot.line(rec.cycle_R[::step], rec.action[::step])
    plot.save(out / f"{prefix}_gamma.svg")


def _run_sweep(cfg: C.RunConfig, spec):
    model = _two_level(cfg.build_model(), "sweep")
    s = cfg.sweep
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", adiabatic.LinearityWarning)
        if spec.label is not None:
            rec, verdict = adiabatic.eigenstate_following(spec.label, model, spec,
                                                          delta_follow=s.delta_follow)
        else:
            rec = adiabatic.sweep(spec, model, delta_follow=s.delta_follow,
                                  omega_floor=s.omega_floor)
            verdict = None
    notes = [str(w.message) for w in caught if issubclass(w.category, adiabatic.LinearityWarning)]
    return rec, verdict, notes


def cmd_sweep(cfg: C.RunConfig, out: Path) -> dict:
    spec = cfg.sweep_spec()
    rec, verdict, notes = _run_sweep(cfg, spec)
    rec.to_csv(out / "sweep.csv")
    rec.to_cycles_csv(out / "cycles.csv")
    _sweep_plots(rec, out)
    summary = rec.summary()
    summary["warnings"] = notes
    if verdict is not None:
        summary["verdict"] = verdict.as_dict()
    else:
        try:
            tun = adiabatic.tunneling_probability(rec)
            summary["verdict"] = {
                "tunneling_probability": tun.probability, "delta_I": list(tun.delta_I),
                "gamma_jump": tun.gamma_jump, "gamma_jump_over_2pi": tun.gamma_jump / TWO_PI,
                "omega_floor_hit": tun.omega_floor_hit,
            }
        except NLSAdiabaticError as exc:
            summary["verdict"] = {"tunneling_probability": None, "error": str(exc)}
    return summary


def _ladder_job(args):
    cfg_dict, alpha = args
    cfg = C.from_mapping(cfg_dict)
    rec, _, notes = _run_sweep(cfg, cfg.sweep_spec(alpha, cfg.ladder.rtol, cfg.ladder.atol))
    return alpha, rec, notes


def cmd_ladder(cfg: C.RunConfig, out: Path) -> dict:
    _two_level(cfg.build_model(), "ladder")
    base = {k: v for k, v in cfg.as_dict().items()}
    jobs = [(base, a) for a in cfg.ladder.alphas]
    if cfg.ladder.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.ladder.jobs) as pool:
            results = list(pool.map(_ladder_job, jobs))
    else:
        results = [_ladder_job(j) for j in jobs]
    results.sort(key=lambda r: -abs(r[0]))
    records = [r[1] for r in results]
    report = adiabatic.invariance_report(records)
    write_csv(out / "ladder.csv", ["alpha", "action_drift", "population_drift"],
              [(a, d, p) for a, d, p in zip(report.alphas, report.action_drift,
                                            report.population_drift)])
    plot = Plot(title="adiabatic invariance", xlabel="log10 alpha", ylabel="log10 drift")
    plot.line(np.log10(report.alphas), np.log10(report.action_drift), label="action drift")
    plot.points(np.log10(report.alphas), np.log10(report.action_drift))
    plot.line(np.log10(report.alphas), np.log10(np.maximum(report.population_drift, 1e-300)),
              style="dashed", label="population drift")
    plot.save(out / "ladder.svg")
    summary = report.as_dict()
    summary["runs"] = [{"alpha": a, "summary": rec.summary(), "warnings": notes}
                       for a, rec, notes in results]
    return summary


COMMAND_FUNCS = {
    "levels": cmd_levels, "portrait": cmd_portrait, "fixed-points": cmd_fixed_points,
    "orbit": cmd_orbit, "sweep": cmd_sweep, "ladder": cmd_ladder,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlsadiabatic",
        description="Adiabatic evolution under the nonlinear Schroedinger equation, "
                    "via its classical Hamiltonian reduction.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("levels", "fixed-point branches E(R) and H_cl(R)"),
                        ("portrait", "H_cl level sets and fixed points at one R"),
                        ("fixed-points", "fixed points and their stability at one R"),
                        ("orbit", "period, AA phase and action of one orbit"),
                        ("sweep", "slow sweep of R with tracking and tunneling"),
                        ("ladder", "adiabatic invariance over several sweep rates")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("-c", "--config", help="TOML or JSON config file")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. model.c=0.5 (repeatable)")
        p.add_argument("-o", "--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for randomized seeding grids")
    sub.add_parser("defaults", help="print the table of numeric defaults")
    return parser


def resolve_config(args) -> C.RunConfig:
    cfg = C.load(args.config) if args.config else C.RunConfig()
    for item in args.set:
        cfg = C.from_mapping(C.parse_override(item), cfg)
    cfg.command = args.command
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        return C.validate(cfg)
    except ConfigError as exc:
        raise C.locate(exc, args.config) from None


def run(cfg: C.RunConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    summary = COMMAND_FUNCS[cfg.command](cfg, out)
    summary["config"] = cfg.as_dict()
    write_json(out / "summary.json", summary)
    return summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "defaults":
        print(json.dumps(_clean(C.defaults_table()), sort_keys=True, indent=2))
        return 0
    try:
        cfg = resolve_config(args)
        cfg.build_model()
    except (ConfigError, ValueError) as exc:
        print(f"nlsadiabatic: config error: {exc}", file=sys.stderr)
        return 2
    try:
        run(cfg)
    except (ConfigError, EndpointsNotLinear) as exc:
        print(f"nlsadiabatic: config error: {exc}", file=sys.stderr)
        return 2
    except (NLSAdiabaticError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"nlsadiabatic: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
