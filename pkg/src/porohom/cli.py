"""Command line entry points.

Exit codes: 0 on success, 2 on validation errors (bad arguments, bad
files, bad config), 3 on numerical failures (factorization, eigensolve
or quality breakdowns).
"""

import argparse
import os
import sys

from .cell_spectral import read_spectrum_csv, solve_eigen, write_spectrum_csv
from .cell_steady import (
    read_permeability_csv,
    solve_cell_steady,
    write_permeability_csv,
)
from .cell_unsteady import solve_cell_unsteady, write_samples_csv
from .fem import SolverError
from .kernel_model import build_kernel_model, read_model_csv, write_model_csv
from .macro import MacroProblem, run, write_ledger_csv, write_state_csv
from .meshing import (
    EllipseSpec,
    MeshFormatError,
    MeshQualityError,
    gen_cell_mesh,
    gen_rect_mesh,
    read_mesh,
    write_mesh,
)
from .pipeline import PipelineError, parse_config, run_pipeline
from .svgplot import render_field_svg


def _cmd_mesh(args):
    if args.geometry == "cell":
        if args.gamma is None:
            raise ValueError("--gamma is required for --geometry cell")
        mesh = gen_cell_mesh(EllipseSpec(args.gamma), args.h)
    else:
        if args.lx is None or args.ly is None:
            raise ValueError("--lx and --ly are required for --geometry rect")
        mesh = gen_rect_mesh(args.lx, args.ly, args.h)
    write_mesh(mesh, args.out)
    print(f"wrote {args.out} ({mesh.num_vertices} vertices, "
          f"{mesh.num_triangles} triangles)")


def _cmd_cell_steady(args):
    mesh = read_mesh(args.mesh)
    solution = solve_cell_steady(mesh)
    write_permeability_csv(solution.k_bar, args.out)
    print(f"wrote {args.out} (K11={solution.k_bar[0, 0]:.8f})")


def _cmd_eigen(args):
    mesh = read_mesh(args.mesh)
    spectrum = solve_eigen(mesh, args.modes)
    write_spectrum_csv(spectrum, args.out)
    print(f"wrote {args.out} ({spectrum.eigenvalues.size} modes, "
          f"lambda1={spectrum.eigenvalues[0]:.6f})")


def _cmd_oracle(args):
    mesh = read_mesh(args.mesh)
    samples = solve_cell_unsteady(mesh, args.tau, args.horizon)
    write_samples_csv(samples, args.out)
    print(f"wrote {args.out} ({samples.times.size} samples)")


def _cmd_kernel(args):
    k_bar = read_permeability_csv(args.kbar)
    lams, coeffs = read_spectrum_csv(args.spectrum)
    num_modes = args.modes if args.modes is not None else None
    model = build_kernel_model(k_bar, lams, coeffs, epsilon=args.epsilon,
                               num_modes=num_modes)
    write_model_csv(model, args.out)
    print(f"wrote {args.out} ({model.num_modes} retained modes, "
          f"Ktilde11={model.k_tilde[0, 0]:.6e})")


def _parse_times(text):
    return tuple(float(part) for part in text.split(",") if part.strip())


def _cmd_macro(args):
    mesh = read_mesh(args.mesh)
    model = read_model_csv(args.model)
    problem = MacroProblem(mesh, model, args.bc, sigma=args.sigma,
                           tau=args.tau)
    snapshots = _parse_times(args.snapshots) if args.snapshots else ()
    result = run(problem, args.t_final, snapshots)
    prefix_dir = os.path.dirname(args.out_prefix)
    if prefix_dir:
        os.makedirs(prefix_dir, exist_ok=True)
    for t_req, state in result.snapshots:
        stamp = f"{t_req:.6g}"
        path = f"{args.out_prefix}_state_{stamp}.csv"
        write_state_csv(path, mesh, state)
        print(f"wrote {path}")
        if args.svg:
            path = f"{args.out_prefix}_field_{stamp}.svg"
            render_field_svg(path, mesh, state.v,
                             title=f"pressure at t={stamp}")
            print(f"wrote {path}")
    path = f"{args.out_prefix}_ledger.csv"
    write_ledger_csv(path, result.ledger)
    print(f"wrote {path}")


def _cmd_pipeline(args):
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.only is not None:
        overrides["stages"] = args.only
    config = parse_config(args.config, overrides)
    manifest = run_pipeline(config)
    for name in manifest["artifacts"]:
        print(f"wrote {os.path.join(config['out_dir'], name)}")
    print(f"wrote {os.path.join(config['out_dir'], 'manifest.json')}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="porohom",
        description="Homogenization toolkit for unsteady filtration in "
                    "periodic porous media.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate a cell or rectangle mesh")
    p.add_argument("--geometry", choices=("cell", "rect"), required=True)
    p.add_argument("--gamma", type=float, help="ellipse aspect ratio (cell)")
    p.add_argument("--h", type=float, required=True, help="target edge length")
    p.add_argument("--lx", type=float, help="rectangle width (rect)")
    p.add_argument("--ly", type=float, help="rectangle height (rect)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mesh)

    p = sub.add_parser("cell-steady", help="steady permeability tensor")
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cell_steady)

    p = sub.add_parser("eigen", help="leading Stokes eigenmodes")
    p.add_argument("--mesh", required=True)
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eigen)

    p = sub.add_parser("oracle", help="time-stepped kernel samples")
    p.add_argument("--mesh", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("kernel", help="exponential kernel model")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--kbar", required=True)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--modes", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_kernel)

    p = sub.add_parser("macro", help="macroscale filtration run")
    p.add_argument("--mesh", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--t-final", type=float, required=True, dest="t_final")
    p.add_argument("--bc", required=True)
    p.add_argument("--snapshots", default="")
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.add_argument("--svg", action="store_true",
                   help="also render contour SVGs")
    p.set_defaults(func=_cmd_macro)

    p = sub.add_parser("pipeline", help="run the configured stage chain")
    p.add_argument("--config", default=None)
    p.add_argument("--only", default=None, help="run a single stage")
    p.add_argument("--out", default=None, help="output directory override")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.__cause__
        return 3 if isinstance(cause, (SolverError, MeshQualityError,
                                       ArithmeticError)) else 2
    except (MeshFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, MeshQualityError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0
