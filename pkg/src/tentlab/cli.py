"""Command-line entry point: ``tentlab <subcommand> [options]``.

Exit status is 0 exactly when every check in the run passes.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import atoms, bilinear, corpus, io, operators, solver, tent
from .grid import Field
from .harness import EXPERIMENTS, ExperimentConfig, RunReport, emit, run_experiment

PROBES = ("maxreg", "z", "r", "pointwise", "tent_bound", "desimon", "schur", "oseen")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--grid-size", type=int, dest="size", help="lattice points per axis")
    common.add_argument("--dim", type=int, help="space dimension (2 or 3)")
    common.add_argument("--box", type=float, help="box side length")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--out", help="report path (default: stdout JSON)")
    common.add_argument("--format", choices=("json", "csv"), help="report format")

    p = argparse.ArgumentParser(prog="tentlab", description="Tent-space and mild Navier-Stokes lab on the torus.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="run an acceptance experiment")
    v.add_argument("experiment", choices=list(EXPERIMENTS) + ["all"])
    for name, helptext in (("norms", "norms of an initial field"),
                           ("decompose", "atomic decomposition of a caloric extension"),
                           ("solve", "Picard solve of the mild formulation")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--init", default="random:0",
                       help="field file, 'taylor-green' or 'random:<seed>'")
        s.add_argument("--amplitude", type=float, default=1.0, help="scale applied to the field")
        if name == "solve":
            s.add_argument("--max-iters", type=int, default=30)
            s.add_argument("--tol", type=float, default=1e-8)
            s.add_argument("--field-out", help="write the final time slice as a field binary")
        if name == "decompose":
            s.add_argument("--manifest", help="write the atom manifest JSON here")
    pr = sub.add_parser("probe", parents=[common], help="measure one operator ratio")
    pr.add_argument("op", choices=PROBES)
    return p


def _config(args, experiment: str = "") -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    return cfg.override(experiment=experiment or cfg.experiment, size=args.size, dim=args.dim,
                        box=args.box, seed=args.seed, out=args.out, format=args.format)


def load_init(source: str, cfg: ExperimentConfig) -> Field:
    g = cfg.grid()
    if source == "taylor-green":
        return corpus.taylor_green(g)
    if source.startswith("random:"):
        return corpus.generate_field(g, "solenoidal", seed=int(source.split(":", 1)[1]),
                                     spectrum_exp=cfg.exponent)
    path = Path(source)
    if not path.exists():
        raise SystemExit(f"initial field {source!r} is neither a file nor a known generator")
    f = io.read_field(path)
    if f.grid != g:
        raise SystemExit(f"field grid {f.grid} does not match the configured grid {g}")
    return f


def _norms(args, cfg: ExperimentConfig, report: RunReport) -> None:
    u0 = load_init(args.init, cfg) * args.amplitude
    g = u0.grid
    T, fam = cfg.times(g), cfg.family(g)
    with report.stage("norms"):
        bm1 = solver.bmo_minus1_norm(u0, fam, T)
        besov = solver.besov_norm(u0, T)
        bmo = solver.bmo_norm(u0, fam)
        xn = tent.x_norm(solver.caloric_extend(u0, T), fam)
        div = solver.divergence_residual(u0)
    for name, val in (("bmo_minus1", bm1), ("besov", besov), ("bmo", bmo), ("x_norm_caloric", xn)):
        report.finite(f"norms.{name}", val)
    report.add("norms.divergence", div, None, bool(np.isfinite(div)))


def _decompose(args, cfg: ExperimentConfig, report: RunReport) -> None:
    u0 = load_init(args.init, cfg) * args.amplitude
    g = u0.grid
    T, fam = cfg.times(g), cfg.family(g)
    U = solver.caloric_extend(u0, T)
    with report.stage("decompose"):
        dec = atoms.atomic_decompose(U, gamma=cfg.p["gamma"], family=fam)
    recon = float(np.linalg.norm(dec.reconstruct() - U.values) / max(np.linalg.norm(U.values), 1e-300))
    report.le("decompose.reconstruction", recon, 1e-10)
    with report.stage("validate"):
        valid = all(atoms.atom_validate(dec.atom_values(i), T, g, a.center, a.radius).passed
                    for i, a in enumerate(dec.atoms))
    report.add("decompose.atoms_valid", len(dec.atoms), None, valid)
    s1 = float(np.sum(tent.square_function(U)) * g.cell_volume)
    lam = float(np.sum(np.abs(dec.coefficients)))
    report.finite("decompose.coefficient_ratio", lam / s1 if s1 > 0 else float("nan"))
    if args.manifest:
        dec.write_manifest(args.manifest)


def _solve(args, cfg: ExperimentConfig, report: RunReport) -> None:
    u0 = load_init(args.init, cfg) * args.amplitude
    g = u0.grid
    scfg = solver.SolverConfig(max_iters=args.max_iters, tol=args.tol, scheme=cfg.scheme(),
                               times=cfg.times(g), family=cfg.family(g), seed=cfg.seed)
    with report.stage("solve"):
        u, trace = solver.picard_solve(u0, scfg)
    report.add("solve.converged", trace.iterations, None, trace.converged)
    if trace.converged:
        report.le("solve.residual", solver.residual(u, u0, scfg), 2 * scfg.tol)
    report.curve("solve.residuals", range(1, trace.iterations + 1), trace.residuals)
    report.config["trace"] = trace.to_json()
    if args.field_out:
        io.write_field(args.field_out, u.slice(len(u) - 1))


def _probe(args, cfg: ExperimentConfig, report: RunReport) -> None:
    g = cfg.grid()
    T, fam = cfg.times(g), cfg.family(g)
    op = args.op
    with report.stage(f"probe.{op}"):
        if op == "schur":
            s = bilinear.schur_check(g, T, beta=cfg.p["beta"])
            report.finite("probe.schur.sup_over_s", s.sup_over_s)
            report.finite("probe.schur.sup_over_t", s.sup_over_t)
            report.finite("probe.schur.kernel_constant", s.kernel_constant)
            return
        if op == "oseen":
            for t in T.times[:: max(1, T.count // 8)]:
                k = operators.oseen_kernel_check(g, float(t))
                report.finite(f"probe.oseen.t={t:.4g}", k.bound)
            return
        if op == "desimon":
            data = corpus.spacetime_corpus(g, T, cfg.corpus_size, cfg.seed, rank=1,
                                           spectrum_exp=cfg.exponent)
            rep = bilinear.desimon_check(data, cfg.scheme(), cfg.seed)
            report.le("probe.desimon", rep.max_ratio, 2.05)
            return
        data = corpus.tensor_corpus(g, T, cfg.corpus_size, cfg.seed, spectrum_exp=cfg.exponent)
        sc = cfg.scheme()
        fn = {"maxreg": lambda: bilinear.maxreg_tent_check(data, fam, sc, cfg.seed),
              "z": lambda: bilinear.z_tent_check(data, fam, cfg.seed),
              "r": lambda: bilinear.r_tent_check(data, fam, sc, cfg.seed),
              "pointwise": lambda: bilinear.pointwise_bound_check(data, fam, sc, cfg.seed),
              "tent_bound": lambda: bilinear.tent_bound_check(data, fam, sc, cfg.seed)}[op]
        rep = fn()
    report.add(f"probe.{op}.max_ratio", rep.max_ratio, None, rep.finite)
    report.curve(f"probe.{op}.per_sample", range(len(rep.per_sample)), rep.per_sample)


def _write(report: RunReport, cfg: ExperimentConfig) -> None:
    if cfg.out:
        emit(report, cfg.out, cfg.format)
    elif cfg.format == "csv":
        sys.stdout.write("check,value,bound,pass\n")
        for c in report.checks:
            row = c.to_json()
            sys.stdout.write(f"{row['check']},{row['value']},{'' if row['bound'] is None else row['bound']},{row['pass']}\n")
    else:
        sys.stdout.write(json.dumps(report.to_json(), indent=2) + "\n")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "verify":
            names = list(EXPERIMENTS) if args.experiment == "all" else [args.experiment]
            ok = True
            for name in names:
                cfg = _config(args, name)
                report = run_experiment(cfg)
                if len(names) > 1 and cfg.out:
                    cfg = cfg.override(out=str(Path(cfg.out).with_name(f"{name}_{Path(cfg.out).name}")))
                _write(report, cfg)
                print(f"{name}: {'PASS' if report.passed else 'FAIL'}", file=sys.stderr)
                ok &= report.passed
            return 0 if ok else 1
        cfg = _config(args, args.command)
        report = RunReport(args.command, cfg.to_json())
        handler = {"norms": _norms, "decompose": _decompose, "solve": _solve, "probe": _probe}
        handler[args.command](args, cfg, report)
        report.checks.sort(key=lambda c: c.name)
        _write(report, cfg)
        return 0 if report.passed else 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"tentlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
