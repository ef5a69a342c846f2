"""Command-line entry point: ``tlsph run|convergence|grad1d|validate|cases``.

Exit codes: 0 clean, 1 usage or configuration error, 2 the run stopped on a
numerical instability (a report is still written).
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import numpy as np

from .cases import (CASE_SUMMARY, GRAD1D_COLUMNS, NORM_COLUMNS, RMSE_COLUMNS, build_case,
                    convergence_study, grad1d_study, run_case)
from .config import CASE_IDS, ConfigError, builtin_path, load_config
from .io import write_csv, write_report

EXIT_OK, EXIT_USAGE, EXIT_INSTABILITY = 0, 1, 2


def _resolve(config):
    """A file path, or ``case`` / ``case:preset`` naming a built-in."""
    p = Path(config)
    if p.exists():
        return p
    name, _, preset = config.partition(":")
    if name in CASE_IDS:
        return builtin_path(name, preset or "quick")
    raise ConfigError([("<file>", f"no such config file or built-in case: {config}")])


def _load(config):
    return load_config(_resolve(config))


def _out(cfg, out_dir):
    return Path(out_dir) if out_dir else Path(cfg.output.dir)


def _fail(exc):
    if isinstance(exc, ConfigError):
        click.echo("error: invalid configuration", err=True)
        for path, msg in exc.problems:
            click.echo(f"  {path}: {msg}", err=True)
    else:
        click.echo(f"error: {exc}", err=True)
    return EXIT_USAGE


def _common(f):
    f = click.option("--out-dir", type=click.Path(file_okay=False), default=None,
                     help="Output directory (default: output.dir from the config).")(f)
    f = click.option("--threads", type=int, default=1, show_default=True,
                     help="Worker threads; the solver is serial and only 1 is accepted.")(f)
    f = click.option("--seed", type=int, default=None,
                     help="Lattice jitter seed (jitter is off unless a seed is given).")(f)
    f = click.option("--jitter", type=float, default=0.0, show_default=True,
                     help="Lattice jitter as a fraction of the spacing (needs --seed).")(f)
    return f


def _check_threads(threads):
    if threads != 1:
        raise click.UsageError("only serial execution is available (--threads 1)")


def _jitter(case, seed, fraction):
    """Perturb reference positions; only for property-style experiments."""
    if seed is None or fraction == 0.0:
        return case
    from .cases import Case
    from .solver import JstParams, Solver
    rng = np.random.default_rng(seed)
    dom = case.domain
    dom.ref_positions = dom.ref_positions + rng.uniform(
        -fraction, fraction, dom.ref_positions.shape) * dom.spacing
    s = case.solver
    solver = Solver(dom, case.material, jst=JstParams(s.jst.eta2, s.jst.eta4, s.jst.harmonic),
                    alpha_cfl=s.alpha_cfl, constraints=s.constraints,
                    deformation=s.deformation, kernel=s.kernel)
    v = case.state.velocity(dom)
    return Case(case.config, dom, case.material, solver, solver.initial_state(v), case.center)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose):
    """Total-Lagrangian SPH with bond-based corrected deformation gradients."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("config")
@_common
@click.option("--t-end", type=float, default=None, help="Override time.end.")
@click.option("--deformation", type=click.Choice(["fullrank", "kinematic", "standard"]),
              default=None, help="Override the deformation-gradient variant.")
@click.option("--no-snapshots", is_flag=True, help="Skip VTK snapshots.")
@click.option("--kernel-dump", is_flag=True,
              help="Write per-particle correction diagnostics to kernel_diagnostics.csv.")
def run(config, out_dir, threads, seed, jitter, t_end, deformation, no_snapshots, kernel_dump):
    """Run a dynamic case; writes ledger.csv, report.json and snapshots."""
    _check_threads(threads)
    try:
        cfg = _load(config)
        if cfg.case == "grad1d_study":
            raise ConfigError([("case", "grad1d_study is not a dynamic case; use `grad1d`")])
        case = _jitter(build_case(cfg, deformation=deformation), seed, jitter)
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(exc)
    out = _out(cfg, out_dir)
    res = run_case(case, out, t_end=t_end, snapshots=not no_snapshots, kernel_dump=kernel_dump)
    r = res.report
    click.echo(f"{cfg.case} [{cfg.preset}] {r['status']}: t={r['final_time']:.6g} s, "
               f"{r['steps']} steps, {r['wall_time']:.1f} s wall")
    if "stretch_percent" in r:
        click.echo(f"stretch lambda3 = {r['stretch_percent']:.2f} %")
    if r["message"]:
        click.echo(r["message"])
    click.echo(f"report: {out / 'report.json'}")
    return res.exit_code


@main.command()
@click.argument("config")
@_common
def convergence(config, out_dir, threads, seed, jitter):
    """Sweep spacing, beta and kernel; writes norms.csv and slopes.csv."""
    _check_threads(threads)
    try:
        cfg = _load(config)
        if cfg.case != "swinging_plate" or cfg.convergence is None:
            raise ConfigError([("convergence", "needs a swinging_plate config with a "
                                               "convergence block")])
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(exc)
    out = _out(cfg, out_dir)
    try:
        rows, slopes = convergence_study(cfg)
    except RuntimeError as exc:
        click.echo(f"instability: {exc}", err=True)
        write_report(out / "report.json", {"status": "instability", "message": str(exc)})
        return EXIT_INSTABILITY
    write_csv(out / "norms.csv", NORM_COLUMNS, rows)
    write_csv(out / "slopes.csv", ("kernel", "beta", "l2_slope", "h1_slope"), slopes)
    for r in rows:
        click.echo(f"{r['kernel']} beta={r['beta']:<4} d={r['spacing']:<6} "
                   f"L2={r['l2']:.4e} H1={r['h1']:.4e}")
    for s in slopes:
        click.echo(f"{s['kernel']} beta={s['beta']}: L2 slope {s['l2_slope']:.3f}, "
                   f"H1 slope {s['h1_slope']:.3f}")
    write_report(out / "report.json", {"status": "finished", "slopes": slopes})
    return EXIT_OK


@main.command()
@click.argument("config")
@_common
def grad1d(config, out_dir, threads, seed, jitter):
    """1D gradient-estimator study; writes grad1d.csv and rmse.csv."""
    _check_threads(threads)
    try:
        cfg = _load(config)
        if cfg.case != "grad1d_study":
            raise ConfigError([("case", "grad1d needs a grad1d_study config")])
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(exc)
    out = _out(cfg, out_dir)
    rows, rmse = grad1d_study(cfg)
    write_csv(out / "grad1d.csv", GRAD1D_COLUMNS, rows)
    write_csv(out / "rmse.csv", RMSE_COLUMNS, rmse)
    for r in rmse:
        click.echo(f"{r['field']:<7} dx={r['spacing']:<9} " + " ".join(
            f"{c}={r[c]:.3e}" for c in RMSE_COLUMNS[2:]))
    return EXIT_OK


@main.command()
@click.argument("config")
def validate(config):
    """Parse and validate a config without running it."""
    try:
        cfg = _load(config)
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(exc)
    click.echo(f"ok: {cfg.case} [{cfg.preset}]")
    return EXIT_OK


@main.command()
def cases():
    """List built-in cases and their preset files."""
    for name in CASE_IDS:
        presets = ", ".join(p for p in ("paper", "quick") if builtin_path(name, p).exists())
        click.echo(f"{name:<16} {CASE_SUMMARY[name]}  [{presets}]")
    return EXIT_OK


def cli(argv=None) -> int:
    """Run the command line and return the exit code instead of exiting."""
    try:
        rv = main.main(args=argv, prog_name="tlsph", standalone_mode=False)
    except click.exceptions.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    return int(rv or 0)


def entry():
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    entry()
