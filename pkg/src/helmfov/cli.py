"""Command line interface.

Exit codes: 0 on success, 1 on a usage or input error, 2 when ``solve``
does not converge.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import plotting
from .assembly import AssemblyError, LossProfile, assemble, assemble_load_constant
from .experiments import (EXPERIMENTS, ConfigError, ExperimentConfig, check_stability_scalar,
                          run_experiment, solve_point)
from .fov import compute_enclosure, diagnostics, strip_angles
from .mesh import MeshError, build_mesh
from .precond import HelmholtzSetup, PrecondError, PrecondSpec
from .sparsela import write_matrixmarket


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _loss(args) -> LossProfile:
    if args.sigma_box is not None:
        return LossProfile.parse(args.sigma_box)
    return LossProfile.constant(args.sigma)


def _problem_args(p, single=True):
    p.add_argument("--dim", type=int, default=None if not single else 2, choices=(2, 3))
    if single:
        p.add_argument("--level", type=int, default=4)
        p.add_argument("--kappa2", type=float, default=1.0)
        p.add_argument("--sigma", type=float, default=1.0)
    else:
        p.add_argument("--level", help="comma-separated levels")
        p.add_argument("--kappa2", help="comma-separated kappa^2 values")
        p.add_argument("--sigma", help="comma-separated constant sigma values")
    p.add_argument("--sigma-box", metavar="x0,y0[,z0]:x1,y1[,z1]:value",
                   help="piecewise-constant loss inside a box, zero outside")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="helmfov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    mesh = sub.add_parser("mesh", help="mesh utilities")
    mesh_sub = mesh.add_subparsers(dest="mesh_command", parser_class=_Parser)
    mesh_sub.required = True
    info = mesh_sub.add_parser("info", help="print mesh summary as JSON")
    info.add_argument("--dim", type=int, default=2, choices=(2, 3))
    info.add_argument("--level", type=int, default=4)

    asm = sub.add_parser("assemble", help="write K, M, M_sigma, A and the load as MatrixMarket")
    _problem_args(asm)
    asm.add_argument("--out", default="out")

    solve = sub.add_parser("solve", help="right-preconditioned GMRES for f = 1")
    _problem_args(solve)
    solve.add_argument("--precond", default="laplace", help="laplace | mg:N | twolevel:L")
    solve.add_argument("--coarse-level", type=int, default=None,
                       help="coarse level of the two-level preconditioner")
    solve.add_argument("--coarsest", type=int, default=1)
    solve.add_argument("--tol", type=float, default=1e-6)
    solve.add_argument("--max-iter", type=int, default=200)
    solve.add_argument("--out", default=None)

    fov = sub.add_parser("fov", help="FOV enclosure of the preconditioned operator")
    _problem_args(fov)
    fov.add_argument("--precond", default="laplace")
    fov.add_argument("--coarse-level", type=int, default=None)
    fov.add_argument("--coarsest", type=int, default=1)
    fov.add_argument("--angles", type=int, default=64)
    fov.add_argument("--eig-tol", type=float, default=1e-10)
    fov.add_argument("--seed", type=int, default=0)
    fov.add_argument("--out", default="out")

    exp = sub.add_parser("experiment", help="run a parameter sweep")
    exp.add_argument("name", choices=sorted(EXPERIMENTS))
    exp.add_argument("--config", help="TOML file; command line flags override it")
    _problem_args(exp, single=False)
    exp.add_argument("--coarse-level", help="comma-separated coarse levels")
    exp.add_argument("--coarsest", type=int)
    exp.add_argument("--precond", help="comma-separated preconditioner specs")
    exp.add_argument("--n-cycles", help="comma-separated V-cycle counts")
    exp.add_argument("--tol", type=float)
    exp.add_argument("--max-iter", type=int)
    exp.add_argument("--angles", type=int)
    exp.add_argument("--eig-tol", type=float)
    exp.add_argument("--seed", type=int)
    exp.add_argument("--workers", type=int)
    exp.add_argument("--no-witness-fov", action="store_true")
    exp.add_argument("--no-figures", action="store_true")
    exp.add_argument("--out")

    check = sub.add_parser("check", help="closed-form checks")
    check_sub = check.add_subparsers(dest="check_command", parser_class=_Parser)
    check_sub.required = True
    stab = check_sub.add_parser("stability", help="scalar stability bound on a grid")
    stab.add_argument("--kappa2", type=float, default=100.0)
    stab.add_argument("--sigma", type=float, default=5.0)
    stab.add_argument("--grid-points", type=int, default=10**4)
    stab.add_argument("--x-max", type=float, default=None)
    return parser


def _spec(args) -> PrecondSpec:
    text = args.precond
    if text == "twolevel" or (args.coarse_level is not None and text.startswith("twolevel")):
        text = f"twolevel:{args.coarse_level}"
    return PrecondSpec.parse(text)


def _setup(args) -> HelmholtzSetup:
    mesh = build_mesh(args.dim, args.level)
    problem = assemble(mesh, args.kappa2, _loss(args))
    return HelmholtzSetup(problem, coarsest=args.coarsest)


def _cmd_mesh(args, out):
    print(build_mesh(args.dim, args.level).summary_json(), file=out)
    return 0


def _cmd_assemble(args, out):
    mesh = build_mesh(args.dim, args.level)
    p = assemble(mesh, args.kappa2, _loss(args))
    os.makedirs(args.out, exist_ok=True)
    for name, mat in (("K", p.K), ("M", p.M), ("M_sigma", p.M_sigma), ("A", p.A)):
        write_matrixmarket(mat, os.path.join(args.out, f"{name}.mtx"))
    b = assemble_load_constant(mesh)
    np.savetxt(os.path.join(args.out, "load.txt"), b.real)
    with open(os.path.join(args.out, "problem.json"), "w") as fh:
        fh.write(p.params_json() + "\n")
    print(p.params_json(), file=out)
    return 0


def _cmd_solve(args, out):
    spec = _spec(args)
    setup = _setup(args)
    _, rep = solve_point(setup, spec, args.tol, args.max_iter)
    summary = dict(precond=spec.label(), iterations=rep.iterations, converged=rep.converged,
                   relative_residual=rep.final_residual / rep.residual_history[0],
                   true_final_residual=rep.true_final_residual, **setup.problem.params())
    print(json.dumps(summary), file=out)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "solve.json"), "w") as fh:
            fh.write(rep.to_json() + "\n")
        with open(os.path.join(args.out, "residuals.csv"), "w") as fh:
            fh.write("iteration,residual\n")
            for i, r in enumerate(rep.residual_history):
                fh.write(f"{i},{r!r}\n")
    if not rep.converged:
        print(f"GMRES did not converge in {args.max_iter} iterations", file=sys.stderr)
        return 2
    return 0


def _cmd_fov(args, out):
    spec = _spec(args)
    setup = _setup(args)
    B = setup.preconditioned(setup.preconditioner(spec))
    loss = setup.problem.loss
    const = loss.value if loss.kind == "constant" and loss.value > 0 else None
    extra = strip_angles(args.kappa2, const) if const else ()
    enc = compute_enclosure(B, n_angles=args.angles, eig_tol=args.eig_tol,
                            extra_angles=extra, seed=args.seed)
    mesh = setup.problem.mesh
    diag = diagnostics(enc, mesh.h, mesh.dim, args.kappa2, const)
    os.makedirs(args.out, exist_ok=True)
    enc.write_csv(os.path.join(args.out, "fov.csv"))
    row = {k: v for k, v in diag.as_row().items()}
    with open(os.path.join(args.out, "fov_diagnostics.json"), "w") as fh:
        json.dump(row, fh, indent=1, sort_keys=True)
        fh.write("\n")
    s = mesh.h ** mesh.dim
    plotting.fov_sets(os.path.join(args.out, "fov.svg"),
                      [(f"{spec.label()}, level {mesh.level}", enc.polygon / s,
                        enc.witnesses / s)],
                      title=f"kappa^2={args.kappa2:g}, {loss.to_dict()}")
    print(json.dumps(row), file=out)
    return 0


def _cmd_experiment(args, out):
    overrides = dict(
        dim=args.dim, level=args.level, kappa2=args.kappa2,
        sigma=[args.sigma_box] if args.sigma_box else args.sigma,
        coarse_level=args.coarse_level, coarsest=args.coarsest, precond=args.precond,
        n_cycles=args.n_cycles, tol=args.tol, max_iter=args.max_iter, angles=args.angles,
        eig_tol=args.eig_tol, seed=args.seed, workers=args.workers, out=args.out,
        witness_fov=False if args.no_witness_fov else None,
    )
    if args.config:
        config = ExperimentConfig.load(args.config, **overrides)
    else:
        config = ExperimentConfig().with_overrides(**overrides)
    _, files = run_experiment(args.name, config, figures=not args.no_figures)
    for f in files:
        print(f, file=out)
    return 0


def _cmd_check(args, out):
    rep = check_stability_scalar(args.kappa2, args.sigma, args.grid_points, args.x_max)
    print(json.dumps(rep.as_row()), file=out)
    return 0 if rep.holds else 2


COMMANDS = {"mesh": _cmd_mesh, "assemble": _cmd_assemble, "solve": _cmd_solve,
            "fov": _cmd_fov, "experiment": _cmd_experiment, "check": _cmd_check}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (MeshError, AssemblyError, PrecondError, ConfigError, ValueError) as exc:
        print(f"helmfov: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
