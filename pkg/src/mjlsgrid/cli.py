"""Command-line interface.

    mjlsgrid <command> CONFIG [options]

CONFIG is a model file path or one of the bundled names (solar,
game2d).  Every command writes a ResultBundle (report.json plus CSV
surfaces) into --out.  Exit codes: 0 success, 1 solver failure,
2 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, SolverError
from .fields import MatrixField
from .game import GameProblem, nash_values, solve_game, solve_hinf, verify_brl
from .reports import ResultBundle
from .riccati import RiccatiProblem, certify_stabilizing, solve_maximal
from .sim import SimPlan, compare_j2, hinf_ratio_run, run_paths
from .stability import (
    check_emss,
    solve_lyapunov_identity,
    synth_detectability_gain,
    verify_detectability_gain,
)

__all__ = ["cli_dispatch", "main"]


def _add_common(p: argparse.ArgumentParser, *, sim: bool = False, gamma: bool = False) -> None:
    p.add_argument("config", help="model file path or bundled name (solar, game2d)")
    p.add_argument("--out", default=None, help="output directory (default: out)")
    p.add_argument("--grid-cells", type=int, default=None, help="override cells per component")
    p.add_argument("--tol", type=float, default=None, help="solver tolerance")
    p.add_argument("--max-iter", type=int, default=None, help="solver iteration cap")
    if gamma:
        p.add_argument("--gamma", type=float, default=None, help="disturbance attenuation level")
    if sim:
        p.add_argument("--horizon", type=int, default=None, help="simulation horizon")
        p.add_argument("--paths", type=int, default=None, help="number of Monte Carlo paths")
        p.add_argument("--seed", type=int, default=None, help="random seed")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mjlsgrid", description=__doc__.strip().splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("validate", help="load and validate a model file"))
    _add_common(sub.add_parser("stability", help="mean-square stability of the open loop"))
    _add_common(sub.add_parser("detect", help="search and verify an output-injection gain"))
    _add_common(sub.add_parser("lyapunov", help="solve U - T_A(U) = I for the certificate"))

    ric = sub.add_parser("riccati", help="maximal solution of the LQ coupled Riccati equations")
    _add_common(ric)
    ric.add_argument("--q", default="from:c", help="state weight: 'from:c' (C'C), 'identity', or a scalar")
    ric.add_argument("--r", type=float, default=1.0, help="control weight, scalar times identity")
    ric.add_argument("--certify", action="store_true", help="re-derive certificates for the solution")

    for name, helptext in (
        ("game", "stationary Nash equilibrium quadruple"),
        ("hinf", "pure attenuation design"),
        ("h2hinf", "Nash design plus the attenuation certificate"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p, gamma=True)
        p.add_argument("--x0", default=None, help="initial state, comma separated")

    p = sub.add_parser("simulate", help="Monte Carlo trajectories of the (closed) loop")
    _add_common(p, sim=True, gamma=True)
    p.add_argument("--x0", default=None, help="initial state, comma separated (default: ones)")

    p = sub.add_parser("ratio", help="output-vs-disturbance energy ratio under v(k)=e^{-2k}")
    _add_common(p, sim=True, gamma=True)
    p.add_argument("--controller", choices=("mixed", "hinf", "both"), default="both")

    p = sub.add_parser("compare-j2", help="mixed vs pure-attenuation output energy under the worst case")
    _add_common(p, sim=True, gamma=True)
    p.add_argument("--x0", default=None, help="initial state, comma separated (default: ones)")
    return ap


def _parse_x0(raw: str | None, n: int, default: float = 1.0) -> np.ndarray:
    if raw is None:
        return np.full(n, default)
    try:
        vals = np.array([float(v) for v in raw.split(",")], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"--x0: not a comma-separated vector ({exc})") from exc
    if vals.shape[0] != n:
        raise ConfigError(f"--x0: expected {n} entries, got {vals.shape[0]}")
    return vals


def _need_gamma(run: RunConfig) -> float:
    if run.gamma is None:
        raise ConfigError("an attenuation level is required: pass --gamma or set defaults.gamma")
    return run.gamma


def _report_stability(rep) -> dict:
    out = {
        "spectral_radius_L": rep.spectral_radius_L,
        "spectral_radius_T": rep.spectral_radius_T,
        "emss": rep.emss,
        "marginal": rep.marginal,
        "converged": rep.converged,
    }
    if rep.margin is not None:
        out["certificate_margin"] = rep.margin
    return out


def _game_report(sol) -> dict:
    return {
        "gamma": sol.gamma,
        "mode": sol.mode,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residuals": sol.residuals,
        "closed_loop_radius": sol.closed_loop_radius,
        "P1_max_eig": sol.P1.eig_max(),
        **({"P2_min_eig": sol.P2.eig_min()} if sol.P2 is not None else {}),
    }


def _emit_game_fields(bundle: ResultBundle, out: Path, sol) -> None:
    bundle.add_field(out, "P1", sol.P1)
    bundle.add_field(out, "K1", sol.K1)
    bundle.add_field(out, "K2", sol.K2)
    if sol.P2 is not None:
        bundle.add_field(out, "P2", sol.P2)


def cli_dispatch(argv: list[str]) -> int:
    args = _parser().parse_args(argv)
    try:
        model, run = load_config(args.config, grid_cells=args.grid_cells)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    run = run.merged(
        out_dir=args.out,
        gamma=getattr(args, "gamma", None),
        tol=args.tol,
        max_iter=args.max_iter,
        horizon=getattr(args, "horizon", None),
        paths=getattr(args, "paths", None),
        seed=getattr(args, "seed", None),
    )
    out = Path(run.out_dir)
    tol = run.tol if run.tol is not None else 1e-9
    max_iter = run.max_iter if run.max_iter is not None else 5000
    horizon = run.horizon if run.horizon is not None else 60
    paths = run.paths if run.paths is not None else 1000
    seed = run.seed if run.seed is not None else 0

    try:
        if args.command == "validate":
            print(
                f"{args.config}: valid model, M={model.grid.M} cells, "
                f"n={model.n}, m={model.m}, p={model.p}, q={model.q}, r={model.r}"
            )
            return 0

        bundle = ResultBundle(command=args.command, report={})

        if args.command == "stability":
            rep = check_emss(model.A, model.kernel)
            bundle.report = _report_stability(rep)
            if rep.lyapunov_certificate is not None:
                bundle.add_field(out, "U", rep.lyapunov_certificate)

        elif args.command == "detect":
            H = synth_detectability_gain(model.A, model.C, model.kernel)
            rep = verify_detectability_gain(model.A, model.C, H, model.kernel)
            bundle.report = {"detectable": rep.emss, **_report_stability(rep)}
            bundle.add_field(out, "H", H)

        elif args.command == "lyapunov":
            U = solve_lyapunov_identity(
                model.A, model.kernel, MatrixField.identity(model.grid, model.n), tol=min(tol, 1e-10)
            )
            bundle.report = {"U_min_eig": U.eig_min(), "U_norm_inf": U.norm_inf()}
            bundle.add_field(out, "U", U)

        elif args.command == "riccati":
            if args.q == "from:c":
                Q = model.output_weight()
            elif args.q == "identity":
                Q = MatrixField.identity(model.grid, model.n)
            else:
                try:
                    Q = float(args.q) * MatrixField.identity(model.grid, model.n)
                except ValueError:
                    raise ConfigError(f"--q must be 'from:c', 'identity', or a number, got {args.q!r}")
            R = float(args.r) * MatrixField.identity(model.grid, model.m)
            problem = RiccatiProblem(A=model.A, G=model.B, Q=Q, R=R, kernel=model.kernel)
            sol = solve_maximal(problem, tol=tol, max_iter=run.max_iter or 200)
            bundle.report = {
                "iterations": sol.iterations,
                "W_residual": sol.W_residual,
                "R_margin": sol.R_margin,
                "stabilizing": sol.stabilizing,
                "closed_loop_radius": sol.closed_loop_radius,
                "P_min_eig": sol.P.eig_min(),
            }
            if args.certify:
                cert = certify_stabilizing(problem, sol.P)
                bundle.report["certified"] = cert.stabilizing
                bundle.report["certified_W_residual"] = cert.W_residual
            bundle.add_field(out, "P", sol.P)
            bundle.add_field(out, "K", sol.K)

        elif args.command in ("game", "hinf", "h2hinf"):
            problem = GameProblem(system=model, gamma=_need_gamma(run))
            if args.command == "hinf":
                sol = solve_hinf(problem, tol=tol, max_iter=max_iter)
            else:
                sol = solve_game(problem, tol=tol, max_iter=max_iter)
            bundle.report = _game_report(sol)
            _emit_game_fields(bundle, out, sol)
            if args.command == "h2hinf":
                ok, diag = verify_brl(problem, sol.K2, sol.P1)
                bundle.report["brl_certified"] = ok
                bundle.report["brl"] = {k: v for k, v in diag.items()}
            if args.x0 is not None and sol.P2 is not None:
                j1, j2 = nash_values(sol, _parse_x0(args.x0, model.n), model.nu0)
                bundle.report["J1_star"] = j1
                bundle.report["J2_star"] = j2

        elif args.command == "simulate":
            gain = None
            if run.gamma is not None:
                gain = solve_game(GameProblem(system=model, gamma=run.gamma), tol=tol, max_iter=max_iter).K2
            plan = SimPlan(
                system=model,
                x0=_parse_x0(args.x0, model.n),
                horizon=horizon,
                n_paths=paths,
                seed=seed,
                control_gain=gain,
            )
            stats = run_paths(plan)
            bundle.report = {
                "horizon": horizon,
                "paths": paths,
                "seed": seed,
                "closed_loop": gain is not None,
                "final_mean_sq_norm": float(stats.mean_sq_norm[-1]),
                "overflow": stats.overflow,
            }
            bundle.add_timeseries(out, "trajectories", stats)

        elif args.command == "ratio":
            gamma = _need_gamma(run)
            problem = GameProblem(system=model, gamma=gamma)
            report = {"gamma": gamma, "horizon": horizon, "paths": paths, "seed": seed}
            wanted = ("mixed", "hinf") if args.controller == "both" else (args.controller,)
            for which in wanted:
                sol = solve_game(problem, tol=tol, max_iter=max_iter) if which == "mixed" else \
                    solve_hinf(problem, tol=tol, max_iter=max_iter)
                stats = hinf_ratio_run(model, sol.K2, horizon, n_paths=paths, seed=seed)
                tail = stats.ratio[min(20, horizon):]
                report[f"{which}_ratio_final"] = float(stats.ratio[-1])
                report[f"{which}_ratio_below_gamma_from_20"] = bool(np.all(tail < gamma))
                bundle.add_timeseries(out, f"ratio_{which}", stats)
            bundle.report = report

        elif args.command == "compare-j2":
            gamma = _need_gamma(run)
            problem = GameProblem(system=model, gamma=gamma)
            mixed = solve_game(problem, tol=tol, max_iter=max_iter)
            pure = solve_hinf(problem, tol=tol, max_iter=max_iter)
            x0 = _parse_x0(args.x0, model.n)
            common = dict(
                system=model, x0=x0, horizon=horizon, n_paths=paths, seed=seed,
                disturbance="feedback", disturbance_gain=mixed.K1,
            )
            cmp = compare_j2(
                SimPlan(control_gain=mixed.K2, **common),
                SimPlan(control_gain=pure.K2, **common),
            )
            final = cmp.difference[-1]
            se = cmp.difference_std_err[-1]
            bundle.report = {
                "gamma": gamma,
                "horizon": horizon,
                "paths": paths,
                "seed": seed,
                "J2_mixed_final": float(cmp.j2_a[-1]),
                "J2_hinf_final": float(cmp.j2_b[-1]),
                "difference_final": float(final),
                "difference_std_err_final": float(se),
                "mixed_no_worse_within_2se": bool(final <= 2.0 * se),
            }
            bundle.add_comparison(out, "j2_comparison", cmp)

        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")

        target = bundle.write(out)
        print(f"{args.command}: wrote {target}")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
