# === cli.py ===

import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import List, Optional

import click
import numpy as np

from fbac_lab import __version__
from fbac_lab.config_loader import MODES, load_config
from fbac_lab.errors import (
    Divergence,
    FbacError,
    FormatError,
    GraphCollision,
    LinearSolveStall,
    MaxIterations,
)
from fbac_lab.field import dump_field, load_field, sample
from fbac_lab.file_discovery import discover_reports
from fbac_lab.flow import integrate_many
from fbac_lab.levelset import extract_level, solution_surface
from fbac_lab.models import RunManifest, Solution
from fbac_lab.oracle_suite import DEFAULT_DTAU, DEFAULT_H, run_oracle_suite
from fbac_lab.report_generator import (
    read_gamma_csv,
    read_json,
    write_convergence_log,
    write_gamma_csvs,
    write_level_csv,
    write_manifest,
    write_oracle_csv,
    write_report_json,
    write_sweep_csv,
    write_trajectory_csv,
)
from fbac_lab.solver import solution_from_field, solve
from fbac_lab.verify import theorem_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGENCE = 2
EXIT_VERIFICATION = 3

NONCONVERGENCE = (MaxIterations, Divergence, LinearSolveStall, GraphCollision)


class ExitCodeGroup(click.Group):
    """click.Group whose usage errors exit with 1; click's own 2 is taken by non-convergence."""

    def main(self, *args, standalone_mode: bool = True, **kwargs):
        if not standalone_mode:
            return super().main(*args, standalone_mode=False, **kwargs)
        try:
            rv = super().main(*args, standalone_mode=False, **kwargs)
        except click.ClickException as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


def parse_number_list(text: Optional[str]) -> Optional[List[float]]:
    """Comma-separated numbers; fractions such as 1/64 are accepted."""
    if text is None:
        return None
    try:
        return [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError):
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


def _number_list(ctx, param, value):
    return parse_number_list(value)


def _threads(ctx, param, value):
    if value == "auto":
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise click.BadParameter(f"expected a positive integer or 'auto', got {value!r}")
    if n < 1:
        raise click.BadParameter(f"expected a positive integer or 'auto', got {value!r}")
    return n


def _fail(ctx: click.Context, e: Exception, code: int):
    click.echo(f"error: {e}", err=True)
    ctx.exit(code)


def _finish(ctx: click.Context, manifest: RunManifest, started: float):
    manifest.timings["total"] = time.perf_counter() - started
    write_manifest(manifest, ctx.obj["out_dir"])


def _solution_for(u, gamma_minus: Optional[str], gamma_plus: Optional[str]) -> Solution:
    base_size = int(np.prod(u.grid.shape[:-1]))
    gammas = []
    for path in (gamma_minus, gamma_plus):
        if path is None:
            gammas.append(None)
            continue
        _, heights = read_gamma_csv(path)
        if heights.size != base_size:
            raise FormatError(f"expected {base_size} base nodes, found {heights.size}", path)
        gammas.append(heights)
    return solution_from_field(u, gammas[0], gammas[1])


@click.group(cls=ExitCodeGroup)
@click.option("--out-dir", "-o", default="fbac_output", show_default=True,
              help="Directory for every output file and manifest.json")
@click.option("--threads", default="1", callback=_threads,
              help="Worker threads for per-level work: a number or 'auto'")
@click.option("--h", "h_text", default=None, callback=_number_list,
              help="Grid spacing; a comma-separated refinement list for 'oracle' (fractions allowed)")
@click.option("--dtau", "dtau_text", default=None, callback=_number_list,
              help="Flow step; a comma-separated refinement list for 'oracle'")
@click.option("--verbose", "-v", is_flag=True, default=False,
              help="Enable verbose (DEBUG) logging")
@click.version_option(__version__)
@click.pass_context
def cli(ctx, out_dir, threads, h_text, dtau_text, verbose):
    """Free-boundary Allen-Cahn laboratory: solve, check identities, verify estimates."""
    log_level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=log_level,
        format="%(asctime)s %(levelname)s: %(message)s",
        datefmt="%H:%M:%S"
    )
    os.makedirs(out_dir, exist_ok=True)
    ctx.obj = {"out_dir": out_dir, "threads": threads, "h": h_text, "dtau": dtau_text}


@cli.command("solve")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--eps", type=float, default=None, help="Override eps")
@click.option("--mode", type=click.Choice(MODES), default=None, help="Override the solver mode")
@click.option("--gamma0", default=None, help="Override the seed graph expression")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Field dump path (default: OUT_DIR/field.fbac)")
@click.pass_context
def cmd_solve(ctx, config_path, eps, mode, gamma0, out_path):
    """Solve the instance in CONFIG_PATH; writes the field dump, gamma CSVs and the convergence log."""
    started = time.perf_counter()
    out_dir = ctx.obj["out_dir"]
    h_list = ctx.obj["h"]
    if h_list is not None and len(h_list) != 1:
        raise click.BadParameter("solve takes a single --h value")
    overrides = {k: v for k, v in (("eps", eps), ("mode", mode), ("gamma0", gamma0),
                                   ("h", h_list[0] if h_list else None)) if v is not None}
    manifest = RunManifest("solve", config_path=config_path, inputs=[config_path],
                           overrides=overrides, version=__version__)

    # 1) configuration
    try:
        cfg = load_config(config_path, overrides)
    except FbacError as e:
        _fail(ctx, e, EXIT_USAGE)
    logger.info(f"Solving {cfg.describe()}")

    # 2) solve; a capped run still leaves its convergence log behind
    try:
        sol = solve(cfg)
    except NONCONVERGENCE as e:
        partial = e.detail
        log = partial.log if isinstance(partial, Solution) else partial
        if log is not None and hasattr(log, "residuals"):
            manifest.outputs.append(write_convergence_log(log, os.path.join(out_dir, "convergence.csv")))
        _finish(ctx, manifest, started)
        _fail(ctx, e, EXIT_NONCONVERGENCE)

    # 3) outputs
    manifest.outputs.append(dump_field(sol.u, out_path or os.path.join(out_dir, "field.fbac")))
    manifest.outputs.extend(write_gamma_csvs(sol, out_dir))
    manifest.outputs.append(write_convergence_log(sol.log, os.path.join(out_dir, "convergence.csv")))
    problems = sol.check_invariants()
    for p in problems:
        logger.warning(f"Solution invariant violated: {p}")
    _finish(ctx, manifest, started)
    logger.info(f"Solve complete: {sol.log.iterations} iterations, {sol.log.message}")


@cli.command("oracle")
@click.pass_context
def cmd_oracle(ctx):
    """Oracle identity suite over the --h / --dtau refinement lists; exit 3 when an order falls short."""
    started = time.perf_counter()
    h_list = ctx.obj["h"] or list(DEFAULT_H)
    dtau_list = ctx.obj["dtau"] or list(DEFAULT_DTAU)
    if len(h_list) != len(dtau_list):
        raise click.BadParameter(f"need as many --dtau values as --h values, got {len(h_list)} and {len(dtau_list)}")
    manifest = RunManifest("oracle", overrides={"h": h_list, "dtau": dtau_list}, version=__version__)

    rows = run_oracle_suite(h_list, dtau_list)
    manifest.outputs.append(write_oracle_csv(rows, os.path.join(ctx.obj["out_dir"], "oracle.csv")))
    _finish(ctx, manifest, started)

    failing = [r for r in rows if not r["passed"]]
    if failing:
        for r in failing:
            click.echo(f"FAILED {r['check']}/{r['oracle']}/{r['identity']} h={r['h']:g} "
                       f"max_residual={r['max_residual']:.3e} order={r['order']}", err=True)
        ctx.exit(EXIT_VERIFICATION)
    logger.info(f"Oracle suite passed: {len(rows)} rows")


@cli.command("analyze")
@click.argument("field_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--tau", "taus", type=float, multiple=True, help="Level to dump (repeatable)")
@click.option("--start", "starts", multiple=True, help="Flow start point 'x,y' (repeatable)")
@click.option("--span", type=float, default=0.25, show_default=True,
              help="Level span of every trajectory, starting from the level through the start point")
@click.pass_context
def cmd_analyze(ctx, field_path, taus, starts, span):
    """Level CSVs and flow trajectory CSVs from a field dump."""
    started = time.perf_counter()
    out_dir = ctx.obj["out_dir"]
    dtau = (ctx.obj["dtau"] or [DEFAULT_DTAU[0]])[0]
    manifest = RunManifest("analyze", inputs=[field_path], overrides={"dtau": dtau}, version=__version__)
    try:
        u = load_field(field_path)
        sol = solution_from_field(u) if u.eps is not None else None

        # 1) levels
        for k, tau in enumerate(taus):
            S = solution_surface(sol, tau) if sol is not None else extract_level(u, tau)
            manifest.outputs.append(write_level_csv(S, os.path.join(out_dir, f"level_{k:02d}.csv")))

        # 2) trajectories, each from the level through its start point
        pairs = []
        for text in starts:
            x0 = np.asarray(parse_number_list(text), dtype=float)
            if x0.size != u.grid.dim:
                raise click.BadParameter(f"start point needs {u.grid.dim} coordinates, got {text!r}")
            tau0 = float(sample(u, x0))
            pairs.append((x0, (tau0, tau0 + span)))
        if pairs:
            with ThreadPoolExecutor(max_workers=ctx.obj["threads"]) as pool:
                trajectories = integrate_many(u, pairs, dtau, executor=pool)
            for k, traj in enumerate(trajectories):
                manifest.outputs.append(write_trajectory_csv(traj, os.path.join(out_dir, f"trajectory_{k:02d}.csv")))
    except FbacError as e:
        _fail(ctx, e, EXIT_USAGE)
    _finish(ctx, manifest, started)


@cli.command("verify")
@click.argument("field_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", "alpha_text", default="0.25,0.5,0.75", show_default=True,
              callback=_number_list, help="Hoelder exponents")
@click.option("--gamma-minus", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Lower free boundary CSV (default: extrapolated from the field)")
@click.option("--gamma-plus", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Upper free boundary CSV (default: extrapolated from the field)")
@click.pass_context
def cmd_verify(ctx, field_path, alpha_text, gamma_minus, gamma_plus):
    """Geometry report (eta, bound ratios, barrier, identity residuals) for a solved field dump."""
    started = time.perf_counter()
    dtau = (ctx.obj["dtau"] or [DEFAULT_DTAU[0]])[0]
    inputs = [p for p in (field_path, gamma_minus, gamma_plus) if p is not None]
    manifest = RunManifest("verify", inputs=inputs, overrides={"alpha": alpha_text, "dtau": dtau},
                           version=__version__)
    try:
        sol = _solution_for(load_field(field_path), gamma_minus, gamma_plus)
        report = theorem_report(sol, alphas=alpha_text, threads=ctx.obj["threads"], dtau=dtau)
    except (FbacError, ValueError) as e:
        _fail(ctx, e, EXIT_USAGE)
    manifest.outputs.append(write_report_json(report, os.path.join(ctx.obj["out_dir"], "report.json")))
    manifest.timings.update(report.timings)
    _finish(ctx, manifest, started)


@cli.command("report")
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
@click.pass_context
def cmd_report(ctx, paths):
    """Sweep CSV from geometry reports (files, or directories searched for report.json)."""
    started = time.perf_counter()
    report_paths = discover_reports(paths)
    manifest = RunManifest("report", inputs=report_paths, version=__version__)
    if not report_paths:
        _fail(ctx, FormatError("no report.json found", ", ".join(paths)), EXIT_USAGE)
    try:
        reports = [(p, read_json(p)) for p in report_paths]
        manifest.outputs.append(write_sweep_csv(reports, os.path.join(ctx.obj["out_dir"], "sweep.csv")))
    except FormatError as e:
        _fail(ctx, e, EXIT_USAGE)
    _finish(ctx, manifest, started)


if __name__ == "__main__":
    cli()
