"""Command-line interface.

Exit codes: 0 success, 1 configuration or usage error, 2 solver failure,
3 runtime abort of a flow.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import analysis, flow, gauge, observables, vortex
from ..lattice import FieldState, Grid, fft_workers, norm_lp, vacuum
from .config import ConfigError, RunConfig, load_config
from .statefile import StateFileError, load_state, save_state
from .telemetry import TrajectoryWriter, read_trajectory_csv

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ABORT = 0, 1, 2, 3


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _emit(obj, out=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _grid(cfg: RunConfig) -> Grid:
    try:
        return Grid(cfg["grid.n"], cfg["grid.L"])
    except (TypeError, ValueError) as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg["out.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve(grid: Grid, cfg: RunConfig) -> vortex.VortexSolution:
    try:
        sol = vortex.solve_taubes(grid, cfg.zeros, tol=cfg["vortex.tol"])
    except (vortex.AreaConstraintError, vortex.NewtonConvergenceError, vortex.PhaseAssemblyError) as exc:
        raise CLIError(str(exc), EXIT_SOLVER) from None
    if not sol.accepted:
        raise CLIError("certificate failure: " + "; ".join(sol.failures), EXIT_SOLVER)
    return sol


def build_initial_state(cfg: RunConfig) -> FieldState:
    """Initial data described by the ``init.*`` and ``perturb.*`` keys."""
    grid = _grid(cfg)
    kind = cfg["init.kind"]
    try:
        if kind == "vacuum":
            state = vacuum(grid)
        elif kind == "flux":
            theta = gauge.flux_background(grid, cfg.N)
            phi = np.full(grid.shape, cfg["init.phi"], dtype=np.complex128)
            state = FieldState(grid=grid, phi=phi, theta=theta)
        elif kind == "ansatz":
            state = vortex.ansatz_initial(grid, cfg.N, cfg.zeros, cfg["init.core_width"])
        elif kind == "vortex":
            state = _solve(grid, cfg).state
        else:
            state = load_state(cfg["init.file"])
            if state.grid != grid:
                raise CLIError("init.file grid differs from grid.n / grid.L", EXIT_CONFIG)
    except (vortex.AreaConstraintError, ValueError) as exc:
        if isinstance(exc, vortex.AreaConstraintError):
            raise CLIError(str(exc), EXIT_SOLVER) from None
        raise CLIError(str(exc), EXIT_CONFIG) from None
    state = state.with_fields(lam=cfg["lambda"])
    if cfg["perturb.amplitude"] > 0:
        try:
            state = vortex.perturb(state, cfg["perturb.amplitude"], cfg["perturb.corr_len"], cfg["perturb.seed"])
        except vortex.PerturbationError as exc:
            raise CLIError(str(exc), EXIT_SOLVER) from None
    return state


def diagnose(state: FieldState) -> dict:
    tf = observables.tension_field(state)
    out = {
        "n": state.grid.n,
        "L": state.grid.L,
        "lambda": state.lam,
        "t": state.t,
        "energy": observables.energy(state),
        "bogomolnyi_energy": observables.bogomolnyi_energy(state),
        "gauss_l2sq": tf.gauss_l2sq(),
        "dbar_l2sq": tf.dbar_l2sq(),
        "degree_vorticity": observables.degree_vorticity(state),
        "rhs_norm": flow.rhs_norm(*flow.flow_rhs_temporal(state), state.a),
        "A_lp4": [norm_lp(state.theta[j] / state.a, state.a, 4.0) for j in (0, 1)],
    }
    try:
        out["degree_plaquette"] = observables.degree_plaquette(state.theta)
        out["bogomolnyi_identity_defect"] = observables.bogomolnyi_identity_defect(state)
    except observables.DegenerateWrapError as exc:
        out["degree_plaquette"] = None
        out["degree_error"] = str(exc)
    try:
        zs = observables.locate_zeros(state)
        out["zeros"] = [{"position": list(z.position), "winding": z.winding} for z in zs]
    except observables.ZeroAmbiguityError as exc:
        out["zeros"] = None
        out["zeros_error"] = str(exc)
    return out


# -- subcommands ------------------------------------------------------------


def cmd_make_vortex(args) -> int:
    cfg = load_config(args.config)
    grid = _grid(cfg)
    if not cfg.zeros:
        raise CLIError("make-vortex needs init.zeros", EXIT_CONFIG)
    sol = _solve(grid, cfg)
    out = _outdir(cfg)
    path = Path(args.out) if args.out else out / "vortex.ahg"
    save_state(sol.state, path)
    report = {
        "N": sol.N,
        "state_file": str(path),
        "newton_iters": sol.newton_iters,
        "newton_residual": sol.newton_residual,
        "newton_history": sol.newton_history,
        "polish_history": sol.polish_history,
        "certificates": sol.certificates,
        "zeros": [{"position": list(z.position), "multiplicity": z.winding} for z in sol.zeros],
    }
    _emit(report, path.with_suffix(".json"))
    return EXIT_OK


def cmd_flow(args) -> int:
    cfg = load_config(args.config)
    grid = _grid(cfg)
    try:
        params = flow.FlowParams.from_factor(
            grid.a,
            cfg["flow.dt_factor"],
            gauge_mode=cfg["flow.gauge"],
            T=cfg["flow.T"],
            output_every=cfg["flow.output_every"],
            checkpoint_times=cfg["flow.checkpoints"],
        )
        params.validate(grid.a)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    state = build_initial_state(cfg)
    out = _outdir(cfg)
    csv_path = out / "trajectory.csv"
    with TrajectoryWriter(csv_path) as writer:
        result = flow.run_flow(state, params, on_record=writer.write)
        if result.aborted:
            writer.abort(result.status.removeprefix("aborted: "))
    for t, st in sorted(result.checkpoints.items()):
        save_state(st, out / f"checkpoint_t{t:g}.ahg")
    save_state(result.final, out / "final.ahg")
    summary = {
        "status": result.status,
        "steps": result.steps,
        "dt": params.dt,
        "records": len(result.trajectory),
        "max_energy_increase": result.max_energy_increase,
        "csv": str(csv_path),
    }
    _emit(summary)
    return EXIT_ABORT if result.aborted else EXIT_OK


def _load(path) -> FieldState:
    try:
        return load_state(path)
    except StateFileError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None


def cmd_diagnose(args) -> int:
    _emit(diagnose(_load(args.state)))
    return EXIT_OK


def cmd_decay_fit(args) -> int:
    try:
        rows, _ = read_trajectory_csv(args.csv)
    except (OSError, ValueError) as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    if args.column == "tension":
        series = [(r["t"], r["gauss_l2sq"] + r["dbar_l2sq"]) for r in rows]
    else:
        if rows and args.column not in rows[0]:
            raise CLIError(f"unknown column {args.column!r}", EXIT_CONFIG)
        series = [(r["t"], r[args.column]) for r in rows]
    try:
        fit = analysis.fit_decay_rate(series, burn_in=args.burn_in, t_end=args.t_end)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    _emit(fit.to_dict())
    return EXIT_OK


def cmd_compare(args) -> int:
    s1, s2 = _load(args.state1), _load(args.state2)
    try:
        rep = analysis.config_distance(s1, s2)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    _emit(rep.to_dict())
    return EXIT_OK


def random_state(seed: int, n: int = 16, L: float = 16.0, noise: float = 0.3) -> FieldState:
    rng = np.random.default_rng(seed)
    grid = Grid(n, L)
    phi = 1.0 + noise * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    theta = noise * rng.standard_normal((2,) + grid.shape)
    return FieldState(grid=grid, phi=phi, theta=theta)


def gradient_check(state: FieldState, coords: int = 20, step: float = 1e-6, seed: int = 0, floor: float = 1e-8) -> dict:
    """Compare the flow right-hand side with central differences of the energy.

    Energy differences come from :func:`flow.energy_difference`, which keeps
    full relative accuracy for tiny displacements.
    """
    rng = np.random.default_rng(seed)
    dphi, dtheta = flow.flow_rhs_temporal(state)
    n, a = state.grid.n, state.a
    worst = 0.0
    for _ in range(coords):
        comp = int(rng.integers(4))
        i, j = (int(v) for v in rng.integers(n, size=2))

        def moved(eps):
            phi, theta = state.phi.copy(), state.theta.copy()
            if comp == 0:
                phi[i, j] += eps
            elif comp == 1:
                phi[i, j] += 1j * eps
            else:
                theta[comp - 2, i, j] += eps
            return state.with_fields(phi=phi, theta=theta)

        fd = flow.energy_difference(moved(-step), moved(step)) / (2 * step)
        if comp < 2:
            grad = -a * a * (dphi[i, j].real if comp == 0 else dphi[i, j].imag)
        else:
            grad = -dtheta[comp - 2, i, j]
        worst = max(worst, abs(fd - grad) / max(abs(grad), floor))
    return {"max_relative_error": worst, "coords": coords, "step": step}


def cmd_grad_check(args) -> int:
    state = _load(args.state) if args.state else random_state(args.random)
    rep = gradient_check(state, coords=args.coords, step=args.step, seed=args.random or 0)
    _emit(rep)
    return EXIT_OK


def cmd_convergence_study(args) -> int:
    grids = [int(v) for v in args.grids.split(",")]
    zeros = [(args.L / 2, args.L / 2)]
    quantities = {
        "identity-defect": observables.bogomolnyi_identity_defect,
        "degree-vorticity": lambda s: observables.degree_vorticity(s) - observables.degree_plaquette(s.theta),
    }
    cache: dict = {}

    def build(grid: Grid):
        if grid.n not in cache:
            cache[grid.n] = vortex.solve_taubes(grid, zeros).state
        return cache[grid.n]

    try:
        report = {}
        for name in args.quantity:
            study = analysis.convergence_order(build, quantities[name], grids, L=args.L)
            report[name] = {
                "order": study.order,
                "spacings": list(study.spacings),
                "values": list(study.values),
                "monotone": study.monotone,
            }
    except (vortex.AreaConstraintError, vortex.NewtonConvergenceError) as exc:
        raise CLIError(str(exc), EXIT_SOLVER) from None
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    _emit(report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ahgflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-vortex", help="solve for a Bogomol'nyi vortex and write it to a state file")
    s.add_argument("config")
    s.add_argument("--out", help="state file path (default: <out.dir>/vortex.ahg)")
    s.set_defaults(func=cmd_make_vortex)

    s = sub.add_parser("flow", help="integrate the gradient flow and write telemetry")
    s.add_argument("config")
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("diagnose", help="report observables of a state file as JSON")
    s.add_argument("state")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("decay-fit", help="fit an exponential decay rate to trajectory telemetry")
    s.add_argument("csv")
    s.add_argument("--burn-in", type=float, default=2.0)
    s.add_argument("--t-end", type=float, default=None)
    s.add_argument("--column", default="tension", help="CSV column, or 'tension' for gauss_l2sq + dbar_l2sq")
    s.set_defaults(func=cmd_decay_fit)

    s = sub.add_parser("compare", help="distances between two state files")
    s.add_argument("state1")
    s.add_argument("state2")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("grad-check", help="finite-difference check of the flow right-hand side")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("state", nargs="?")
    g.add_argument("--random", type=int, metavar="SEED")
    s.add_argument("--coords", type=int, default=20)
    s.add_argument("--step", type=float, default=1e-6)
    s.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("convergence-study", help="grid-refinement order of vortex discretization errors")
    s.add_argument("--grids", default="64,128,256")
    s.add_argument("--L", type=float, default=16.0)
    s.add_argument(
        "--quantity",
        nargs="+",
        choices=["identity-defect", "degree-vorticity"],
        default=["identity-defect", "degree-vorticity"],
    )
    s.set_defaults(func=cmd_convergence_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        fft_workers()
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, StateFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
