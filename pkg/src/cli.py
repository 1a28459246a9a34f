"""Command line: nf, simulate, drift, clt, xi, zcheck, sweep."""
import copy
import functools
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import click

from src import presets
from src import z_projection as zp
from src.config_loader import load_defaults
from src.errors import ConfigError, HnnWalkError, RegimeError
from src.experiment import (
    Setup,
    build_setup,
    clt_pipeline,
    collect_cycles,
    drift_pipeline,
    load_experiment,
    parse_experiment,
    parse_grid,
    parse_schedule,
    provenance,
    resolve_settings,
    run_replicas,
    sweep,
    xi_pipeline,
    zcheck_pipeline,
)
from src.group_core import format_normal_form, normalize, parse_letters, validate_presentation
from src.report_writer import (
    clt_frame,
    cycles_frame,
    format_table,
    replica_frame,
    write_csv,
    write_summary,
)

logger = logging.getLogger(__name__)

EXIT_DOMAIN = 2
EXIT_IO = 3

# run-environment keys that never enter a summary (summaries must not depend on them)
_ENV_KEYS = ("workers", "out_dir")


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HnnWalkError as e:
            click.echo(f"error: {type(e).__name__}: {e}", err=True)
            sys.exit(EXIT_DOMAIN)
        except OSError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


def _progress(label: str):
    def cb(counts: Dict[str, int]) -> None:
        logger.info("%s: %d/%d done, %d failed", label, counts["completed"], counts["total"], counts["failed"])

    return cb


def run_options(fn):
    """Flags shared by every config-driven subcommand."""
    decorators = [
        click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Experiment JSON."),
        click.option("--steps", type=int, default=None, help="Steps per replica."),
        click.option("--replicas", type=int, default=None, help="Number of replicas."),
        click.option("--seed", type=int, default=None, help="Master seed."),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory."),
        click.option("--workers", type=int, default=None, help="Worker processes (HNNWALK_WORKERS)."),
        click.option("--safety-margin", type=int, default=None, help="Confirmation depth S for exit times."),
        click.option(
            "--length", "length_kind", default=None,
            type=click.Choice(["unit", "word", "t_only", "table", "greenian"]),
            help="Override the length function kind of the config.",
        ),
    ]
    for d in reversed(decorators):
        fn = d(fn)
    return fn


class RunContext:
    def __init__(self, setup: Setup, defaults: Dict[str, Any], overrides: Dict[str, Dict[str, Any]], workers: int, out_dir: str):
        self.setup = setup
        self.defaults = defaults
        self.overrides = overrides
        self.workers = workers
        self.out_dir = out_dir

    @property
    def seed(self) -> int:
        return int(self.setup.settings["run"]["seed"])

    def summary(self, command: str, results: Dict[str, Any]) -> Dict[str, Any]:
        settings = copy.deepcopy(self.setup.settings)
        for k in _ENV_KEYS:
            settings.get("run", {}).pop(k, None)
        return {
            "command": command,
            "config": self.setup.cfg.canonical(),
            "settings": settings,
            "regime": self.setup.regime.tag(),
            "provenance": provenance(self.setup.cfg, self.seed),
            "results": results,
        }


def _load_run(
    config_path: str,
    steps: Optional[int],
    replicas: Optional[int],
    seed: Optional[int],
    out_dir: Optional[str],
    workers: Optional[int],
    safety_margin: Optional[int],
    length_kind: Optional[str],
) -> RunContext:
    defaults = load_defaults()
    cfg = load_experiment(config_path)
    if length_kind:
        raw = cfg.canonical()
        raw["length"]["kind"] = length_kind
        cfg = parse_experiment(raw)
    overrides = {
        "run": {"steps": steps, "replicas": replicas, "seed": seed},
        "exits": {"safety_margin": safety_margin},
    }
    settings = resolve_settings(defaults, cfg, overrides)
    n_workers = int(workers if workers is not None else settings["run"].get("workers", 1))
    if n_workers < 1:
        raise ConfigError("--workers must be at least 1")
    setup = build_setup(cfg, settings)
    out = out_dir or settings["run"].get("out_dir", "results")
    return RunContext(setup, defaults, overrides, n_workers, out)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Random walks on HNN extensions: normal forms, drift and CLT estimation."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@_handle_errors
def nf(config_path: str) -> None:
    """Normal form of every whitespace-separated word read from stdin."""
    cfg = load_experiment(config_path)
    pres = validate_presentation(cfg.presentation_spec(), generators=list(cfg.mu0))
    for line in sys.stdin:
        if not line.strip():
            continue
        w = normalize(pres, parse_letters(pres, line))
        click.echo(format_normal_form(pres, w))


@main.command()
@run_options
@click.option("--emit-cycles", is_flag=True, help="Also write the regeneration cycles CSV.")
@click.option("--checkpoint-every", type=int, default=None, help="Record (n, t_length, word_length, l) every N steps.")
@_handle_errors
def simulate(emit_cycles: bool, checkpoint_every: Optional[int], **kw: Any) -> None:
    """Run replicas and write the per-replica CSV."""
    ctx = _load_run(**kw)
    s = ctx.setup
    run = s.settings["run"]
    every = int(checkpoint_every if checkpoint_every is not None else run.get("checkpoint_every", 0))
    trajs = run_replicas(
        s.pres, s.params, int(run["steps"]), ctx.seed, int(run["replicas"]),
        ell=s.ell, checkpoint_every=every, workers=ctx.workers, progress_cb=_progress("replicas"),
    )
    artifacts = {"replicas": os.path.basename(write_csv(ctx.out_dir, "replicas", replica_frame(trajs)))}
    results: Dict[str, Any] = {"final_depth": [tr.final_depth for tr in trajs]}
    if emit_cycles:
        if not s.regime.is_transient:
            raise RegimeError("no regeneration cycles in the recurrent regime")
        data = collect_cycles(
            s.pres, trajs, s.ell, s.regime,
            int(s.settings["exits"]["safety_margin"]), float(s.settings["exits"]["tail_discard"]),
        )
        artifacts["cycles"] = os.path.basename(write_csv(ctx.out_dir, "cycles", cycles_frame(data.cycles)))
        results["cycles"] = len(data.all_cycles)
    results["artifacts"] = artifacts
    path = write_summary(ctx.out_dir, "simulate", ctx.summary("simulate", results))
    click.echo(path)


def _drift_exact(setup: Setup) -> Dict[str, Any]:
    if setup.pres.is_degenerate and setup.ell.kind == "t_only":
        return {"degenerate_drift": zp.degenerate_drift(setup.params)}
    return {}


@main.command()
@run_options
@click.option("--emit-cycles", is_flag=True, help="Write the regeneration cycles CSV.")
@click.option("--emit-replicas", is_flag=True, help="Write the per-replica CSV.")
@_handle_errors
def drift(emit_cycles: bool, emit_replicas: bool, **kw: Any) -> None:
    """Three drift estimates, t-drift, word-length drift and sigma^2."""
    ctx = _load_run(**kw)
    outcome = drift_pipeline(ctx.setup, workers=ctx.workers, progress_cb=_progress("replicas"))
    rep = outcome.report
    artifacts: Dict[str, str] = {}
    if emit_cycles:
        artifacts["cycles"] = os.path.basename(write_csv(ctx.out_dir, "cycles", cycles_frame(outcome.data.cycles)))
    if emit_replicas:
        artifacts["replicas"] = os.path.basename(write_csv(ctx.out_dir, "replicas", replica_frame(outcome.trajs)))
    results = {
        "report": rep.as_dict(),
        "sensitivity": outcome.sensitivity,
        "diagnostics": outcome.diagnostics,
        "exact": _drift_exact(ctx.setup),
        "artifacts": artifacts,
    }
    path = write_summary(ctx.out_dir, "drift", ctx.summary("drift", results))
    click.echo(format_table({
        "regime": rep.regime,
        "lambda direct": rep.lambda_direct.point,
        "lambda regeneration": rep.lambda_regen.point,
        "lambda pi": rep.lambda_pi.point,
        "t drift": rep.t_drift.point,
        "word-length drift": rep.wl_drift.point,
        "sigma^2": rep.sigma2.point,
        "consistent": rep.cross_consistent,
        "summary": path,
    }))


@main.command()
@run_options
@click.option("--n", "n_steps", type=int, required=True, help="Walk length of the CLT sample.")
@click.option("--clt-replicas", type=int, default=None, help="Replicas of the CLT sample (default: --replicas).")
@click.option("--emit-replicas", is_flag=True, help="Write the per-replica CLT statistics CSV.")
@_handle_errors
def clt(n_steps: int, clt_replicas: Optional[int], emit_replicas: bool, **kw: Any) -> None:
    """Compare (l(X_n) - n lambda)/sqrt(n) with N(0, sigma^2)."""
    ctx = _load_run(**kw)
    reps = int(clt_replicas or ctx.setup.settings["run"]["replicas"])
    report, outcome = clt_pipeline(ctx.setup, n_steps, reps, workers=ctx.workers, progress_cb=_progress("replicas"))
    artifacts: Dict[str, str] = {}
    if emit_replicas:
        artifacts["clt_replicas"] = os.path.basename(write_csv(ctx.out_dir, "clt_replicas", clt_frame(report)))
    results = {"clt": report.as_dict(), "report": outcome.report.as_dict(), "artifacts": artifacts}
    path = write_summary(ctx.out_dir, "clt", ctx.summary("clt", results))
    click.echo(format_table({**{k: v for k, v in report.as_dict().items() if v is not None}, "summary": path}))


@main.command()
@run_options
@click.option("--start", "starts", multiple=True, type=click.Choice(["tb", "t^-1a"]), help="Start family (repeatable).")
@click.option("--horizon-schedule", default=None, help="H0,xK: horizons H0, K*H0, K^2*H0, ...")
@click.option("--trials", type=int, default=None, help="Monte Carlo trials per start.")
@_handle_errors
def xi(starts: List[str], horizon_schedule: Optional[str], trials: Optional[int], **kw: Any) -> None:
    """Escape probabilities xi(tb), xi(t^-1 a) (upper brackets)."""
    ctx = _load_run(**kw)
    if trials is not None:
        ctx.setup.settings["xi"]["trials"] = trials
    schedule = parse_schedule(horizon_schedule, ctx.setup.settings["xi"])
    estimates = xi_pipeline(ctx.setup, list(starts) or ["tb", "t^-1a"], schedule)
    path = write_summary(ctx.out_dir, "xi", ctx.summary("xi", {"xi": [e.as_dict() for e in estimates], "schedule": schedule}))
    click.echo(format_table({e.details["start"]: f"{e.point:.5f} [{e.ci_low:.5f}, {e.ci_high:.5f}]" for e in estimates}))
    click.echo(path)


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False), help="Degenerate experiment JSON.")
@click.option("--alpha", type=float, default=None)
@click.option("--p", "p", type=float, default=None)
@click.option("--z", "z", type=float, default=None, help="Generating-function argument (default 1).")
@click.option("--simulate", type=int, default=0, help="Monte Carlo sample size for the comparisons.")
@click.option("--pattern", default=None, help="Sign pattern for the first t-steps, e.g. ++-+.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@_handle_errors
def zcheck(
    config_path: Optional[str], alpha: Optional[float], p: Optional[float], z: Optional[float],
    simulate: int, pattern: Optional[str], seed: Optional[int], out_dir: Optional[str],
) -> None:
    """Closed forms of the integer projection in the degenerate regime."""
    defaults = load_defaults()
    if config_path:
        cfg = load_experiment(config_path)
    elif alpha is not None and p is not None:
        cfg = parse_experiment({**presets.degenerate_example(alpha, p), "name": "degenerate", "length": {"kind": "t_only"}})
    else:
        raise ConfigError("zcheck needs --config or both --alpha and --p")
    raw = cfg.canonical()
    if alpha is not None:
        raw["alpha"] = alpha
    if p is not None:
        raw["p"] = p
    cfg = parse_experiment(raw)
    settings = resolve_settings(defaults, cfg, {"run": {"seed": seed}})
    setup = build_setup(cfg, settings)
    if not setup.pres.is_degenerate:
        raise RegimeError("zcheck needs A = B = G0")
    law = zp.ZWalkLaw.from_params(setup.params)
    zc = settings.get("zcheck", {})
    z_val = float(z if z is not None else zc.get("z", 1.0))
    signs = zp.parse_pattern(pattern or zc.get("pattern", "++-+"))
    result = zcheck_pipeline(law, z_val, setup, simulate, signs)

    click.echo(format_table(result["exact"]))
    for name, row in result.get("simulated", {}).items():
        click.echo(
            f"{name}: {row['point']:.6g} [{row['ci_low']:.6g}, {row['ci_high']:.6g}] "
            f"target {row['target']:.6g} {'ok' if row['agrees'] else 'MISMATCH'}"
        )
    ctx = RunContext(setup, defaults, {}, 1, out_dir or settings["run"].get("out_dir", "results"))
    click.echo(write_summary(ctx.out_dir, "zcheck", ctx.summary("zcheck", result)))


@main.command("sweep")
@run_options
@click.option("--param", required=True, help="p, alpha or mu0:<element>.")
@click.option("--grid", required=True, help="LO:HI:STEP (inclusive) or a single value.")
@_handle_errors
def sweep_cmd(param: str, grid: str, **kw: Any) -> None:
    """Drift and sigma^2 across a parameter grid."""
    ctx = _load_run(**kw)
    values = parse_grid(grid)
    df = sweep(ctx.setup.cfg, ctx.defaults, param, values, ctx.overrides, ctx.workers, _progress("sweep"))
    csv_path = write_csv(ctx.out_dir, "sweep", df)
    results = {
        "param": param,
        "grid": values,
        "rows": int(len(df)),
        "failed": int((df["error"] != "").sum()),
        "segments": int(df["segment"].nunique()) if len(df) else 0,
        "artifacts": {"sweep": os.path.basename(csv_path)},
    }
    path = write_summary(ctx.out_dir, "sweep", ctx.summary("sweep", results))
    click.echo(csv_path)
    click.echo(path)


if __name__ == "__main__":
    main()
