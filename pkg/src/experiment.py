"""Experiment documents and the orchestration pipelines behind the CLI subcommands."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src import __version__
from src.config_loader import load_json
from src.errors import ConfigError, GridError, HnnWalkError, InsufficientData, NoRegenerations, RegimeError
from src.estimators import (
    CltReport,
    DriftReport,
    EstimateWithCI,
    assemble_drift_report,
    clt_check,
    compare_estimates,
    drift_direct,
    drift_pi_formula,
    drift_regeneration,
    estimate_greenian_length,
    estimate_xi,
    horizon_schedule,
    sigma2_regeneration,
    word_length_drift,
    xi_starts,
)
from src.exit_analysis import (
    Chain,
    RegenerationCycle,
    chain_violations,
    confirmed_level_count,
    duration_tail_slope,
    empirical_pi,
    extract_chain,
    extract_exits,
    extract_regenerations,
    independence_bound,
    lag1_correlation,
    merge_chains,
    reachable_within,
    stationarity_residual,
)
from src.group_core import (
    HnnPresentation,
    LengthFunction,
    check_growth_bound,
    format_normal_form,
    t_only_length,
    table_length,
    unit_length,
    validate_presentation,
    word_metric_length,
)
from src.walk_engine import Regime, TrajectoryState, WalkParams, classify_regime, run_trajectory
from src import z_projection as zp

logger = logging.getLogger(__name__)

ProgressCb = Optional[Callable[[Dict[str, int]], None]]


# -----------------------------
# 1) experiment document
# -----------------------------
class BaseGroupSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["finite_table", "integers"] = "finite_table"
    elements: List[str] = Field(default_factory=list)
    identity: str = ""
    table: List[List[str]] = Field(default_factory=list)


class LengthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["unit", "word", "t_only", "table", "greenian"] = "unit"
    values: Dict[str, float] = Field(default_factory=dict)
    t: float = Field(1.0, ge=0)
    t_inv: float = Field(1.0, ge=0)
    generators: Optional[List[str]] = None
    growth_bound: Optional[Tuple[float, int]] = None


class ExperimentConfig(BaseModel):
    """One parameter point (mu0, alpha, p) on one presentation, plus run controls."""

    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    base_group: BaseGroupSpec
    subgroup_A: List[str]
    subgroup_B: List[str]
    phi: Dict[str, str] = Field(default_factory=dict)
    mu0: Dict[str, float]
    alpha: float = Field(gt=0, lt=1)
    p: float = Field(gt=0, lt=1)
    length: LengthSpec = Field(default_factory=LengthSpec)
    seed: Optional[int] = None
    steps: Optional[int] = Field(None, ge=0)
    replicas: Optional[int] = Field(None, ge=1)
    # partial overrides of config/defaults.yaml (run / exits / thresholds / xi / greenian / zcheck)
    settings: Dict[str, Dict[str, Any]] = Field(default_factory=dict)

    @field_validator("mu0")
    @classmethod
    def _positive_masses(cls, v: Dict[str, float]) -> Dict[str, float]:
        if not v:
            raise ValueError("mu0 is empty")
        if any(m <= 0 for m in v.values()):
            raise ValueError("mu0 masses must be positive")
        if abs(math.fsum(v.values()) - 1.0) > 1e-12:
            raise ValueError(f"mu0 masses sum to {math.fsum(v.values())!r}, not 1")
        return v

    def presentation_spec(self) -> Dict[str, Any]:
        return {
            "base_group": self.base_group.model_dump(),
            "subgroup_A": list(self.subgroup_A),
            "subgroup_B": list(self.subgroup_B),
            "phi": dict(self.phi),
        }

    def canonical(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def parse_experiment(raw: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        fields = sorted({".".join(str(x) for x in err["loc"]) for err in e.errors()})
        raise ConfigError(f"invalid experiment config; offending fields: {', '.join(fields)}") from e


def load_experiment(path: str) -> ExperimentConfig:
    return parse_experiment(load_json(path))


def resolve_settings(defaults: Dict[str, Any], cfg: ExperimentConfig, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> Dict[str, Any]:
    """defaults.yaml <- experiment ``settings`` block <- top-level seed/steps/replicas <- CLI overrides (None values skipped)."""
    out = copy.deepcopy(defaults)
    walk = {"run": {"seed": cfg.seed, "steps": cfg.steps, "replicas": cfg.replicas}}
    for layer in (cfg.settings, walk, overrides or {}):
        for section, values in layer.items():
            target = out.setdefault(section, {})
            for k, v in (values or {}).items():
                if v is not None:
                    target[k] = v
    return out


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def provenance(cfg: ExperimentConfig, master_seed: int) -> Dict[str, Any]:
    return {
        "config_hash": config_hash(cfg),
        "master_seed": int(master_seed),
        "versions": {
            "hnnwalk": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "python": platform.python_version(),
        },
    }


def derive_seed(master_seed: int, *parts: Any) -> int:
    """Seed that depends only on (master_seed, parts), e.g. (param, value) of a sweep point."""
    key = ":".join([str(int(master_seed))] + [repr(p) for p in parts])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big") >> 1


@dataclass
class Setup:
    cfg: ExperimentConfig
    pres: HnnPresentation
    params: WalkParams
    regime: Regime
    ell: LengthFunction
    settings: Dict[str, Any]


def build_length(pres: HnnPresentation, params: WalkParams, spec: LengthSpec, settings: Dict[str, Any]) -> LengthFunction:
    if spec.kind == "unit":
        ell = unit_length(pres)
    elif spec.kind == "t_only":
        ell = t_only_length()
    elif spec.kind == "word":
        gens = [pres.base.lookup(g) for g in spec.generators] if spec.generators else sorted(params.mu0)
        ell = word_metric_length(pres, gens)
        ell = replace(ell, value_t=spec.t, value_t_inv=spec.t_inv)
    elif spec.kind == "table":
        ell = table_length(pres, spec.values, spec.t, spec.t_inv)
    else:
        g = settings.get("greenian", {})
        seed = derive_seed(settings["run"]["seed"], "greenian")
        ell = estimate_greenian_length(pres, params, int(g.get("horizon", 2000)), int(g.get("trials", 4000)), seed)
    if spec.growth_bound is not None:
        ell = replace(ell, growth_bound=(float(spec.growth_bound[0]), int(spec.growth_bound[1])))
        gens = [pres.base.lookup(x) for x in spec.generators] if spec.generators else sorted(params.mu0)
        bad = check_growth_bound(ell, pres, gens)
        if bad:
            raise ConfigError(f"length table exceeds its growth bound on {[pres.base.name(x) for x in bad]}")
    return ell


def build_setup(cfg: ExperimentConfig, settings: Dict[str, Any]) -> Setup:
    pres = validate_presentation(cfg.presentation_spec(), generators=list(cfg.mu0))
    params = WalkParams.from_names(pres, cfg.mu0, cfg.alpha, cfg.p)
    regime = classify_regime(pres, params)
    ell = build_length(pres, params, cfg.length, settings)
    logger.info("setup %s: regime=%s length=%s", cfg.name, regime.tag(), ell.kind)
    return Setup(cfg=cfg, pres=pres, params=params, regime=regime, ell=ell, settings=settings)


# -----------------------------
# 2) replicas
# -----------------------------
def run_replicas(
    pres: HnnPresentation,
    params: WalkParams,
    n_steps: int,
    seed: int,
    replicas: int,
    ell: Optional[LengthFunction] = None,
    checkpoint_every: int = 0,
    workers: int = 1,
    progress_cb: ProgressCb = None,
) -> List[TrajectoryState]:
    """Replicas 0..replicas-1 of master ``seed``, in replica order whatever the pool size."""
    counts = {"total": replicas, "pending": replicas, "completed": 0, "failed": 0}
    if progress_cb:
        progress_cb(counts)
    out: Dict[int, TrajectoryState] = {}

    def _done(r: int, traj: TrajectoryState) -> None:
        out[r] = traj
        counts["completed"] += 1
        counts["pending"] = max(0, counts["pending"] - 1)
        if progress_cb:
            progress_cb(counts)

    if workers <= 1 or replicas <= 1:
        for r in range(replicas):
            _done(r, run_trajectory(pres, params, n_steps, seed, r, ell, checkpoint_every))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(run_trajectory, pres, params, n_steps, seed, r, ell, checkpoint_every): r
                for r in range(replicas)
            }
            for fut in as_completed(futures):
                r = futures[fut]
                try:
                    _done(r, fut.result())
                except Exception:
                    counts["failed"] += 1
                    if progress_cb:
                        progress_cb(counts)
                    raise
    return [out[r] for r in range(replicas)]


@dataclass
class CycleData:
    chain: Chain
    exits: Dict[int, list]
    cycles: Dict[int, List[RegenerationCycle]]
    skipped: Dict[int, str] = field(default_factory=dict)

    @property
    def all_cycles(self) -> List[RegenerationCycle]:
        return [c for r in sorted(self.cycles) for c in self.cycles[r]]


def collect_cycles(
    pres: HnnPresentation,
    trajs: Sequence[TrajectoryState],
    ell: LengthFunction,
    regime: Regime,
    safety_margin: int,
    tail_discard: float,
) -> CycleData:
    """Per-replica exits, chain and regeneration cycles; replicas that yield too little are skipped."""
    chains: List[Chain] = []
    exits: Dict[int, list] = {}
    cycles: Dict[int, List[RegenerationCycle]] = {}
    skipped: Dict[int, str] = {}
    for r, tr in enumerate(trajs):
        ex = extract_exits(tr, safety_margin, tail_discard, regime=regime)
        exits[r] = ex
        try:
            chain = extract_chain(ex)
        except InsufficientData as e:
            skipped[r] = str(e)
            continue
        chains.append(chain)
        try:
            cycles[r] = extract_regenerations(chain, ex, ell, regime.direction, pres.identity)
        except NoRegenerations as e:
            skipped[r] = str(e)
    if skipped:
        logger.info("%d of %d replicas contributed no cycles", len(skipped), len(trajs))
    if not chains:
        raise InsufficientData("no replica produced 2 confirmed exits; increase steps")
    data = CycleData(chain=merge_chains(chains), exits=exits, cycles=cycles, skipped=skipped)
    if not data.all_cycles:
        raise NoRegenerations("the anchor state never recurred among confirmed exits; increase steps")
    return data


# -----------------------------
# 3) drift
# -----------------------------
def _require_transient(regime: Regime) -> None:
    if not regime.is_transient:
        raise RegimeError(
            "walk is recurrent (A = B = G0 and p = 1/2: the t-exponent sum is a driftless lazy walk), "
            "so exit times and regeneration cycles do not exist"
        )


@dataclass
class DriftOutcome:
    report: DriftReport
    trajs: List[TrajectoryState]
    data: CycleData
    pi_hat: Dict[Any, float]
    sensitivity: Dict[str, Any]
    diagnostics: Dict[str, Any]


def drift_estimates(setup: Setup, trajs: Sequence[TrajectoryState], safety_margin: int) -> Tuple[DriftReport, CycleData, Dict[Any, float]]:
    s = setup.settings
    th = s["thresholds"]
    z = float(th["confidence_z"])
    data = collect_cycles(setup.pres, trajs, setup.ell, setup.regime, safety_margin, float(s["exits"]["tail_discard"]))
    cycles = data.all_cycles
    pi_hat = empirical_pi(data.chain)
    lam_regen = drift_regeneration(cycles, z)
    report = assemble_drift_report(
        lambda_direct=drift_direct(trajs, setup.ell, z),
        lambda_regen=lam_regen,
        lambda_pi=drift_pi_formula(data.chain, pi_hat, setup.ell, int(th["batch_count"]), z),
        t_drift=drift_regeneration(cycles, z, gain="syllable_count"),
        wl_drift=word_length_drift(setup.pres, trajs, z),
        sigma2=sigma2_regeneration(cycles, lam_regen.point, z),
        sigma=float(th["agreement_sigma"]),
        regime=setup.regime.tag(),
    )
    return report, data, pi_hat


def chain_diagnostics(setup: Setup, trajs: Sequence[TrajectoryState], data: CycleData, pi_hat: Dict[Any, float], safety_margin: int) -> Dict[str, Any]:
    cycles = data.all_cycles
    z = float(setup.settings["thresholds"]["confidence_z"])
    sigma = float(setup.settings["thresholds"]["agreement_sigma"])
    out: Dict[str, Any] = {
        "cycles": len(cycles),
        "chain_states": len(data.chain),
        "distinct_states": len(pi_hat),
        "skipped_replicas": len(data.skipped),
        "confirmed_levels": [confirmed_level_count(tr, safety_margin, setup.regime) for tr in trajs],
        "forbidden_transitions": len(chain_violations(data.chain, setup.pres.identity)),
        "stationarity_residual": stationarity_residual(data.chain, pi_hat),
    }
    share, full = reachable_within(data.chain, steps=2)
    out["reachable_share_2"] = share
    out["reachable_all_2"] = full
    if len(cycles) >= 3:
        bound = independence_bound(len(cycles), sigma)
        durations = lag1_correlation([c.duration for c in cycles])
        gains = lag1_correlation([c.length_gain for c in cycles])
        out["lag1_duration"] = durations
        out["lag1_gain"] = gains
        out["independence_bound"] = bound
        out["independent"] = bool(abs(durations) <= bound and abs(gains) <= bound)
    try:
        fit = duration_tail_slope(cycles, z)
        out["tail_slope"] = {"slope": fit.slope, "std_error": fit.std_error, "ci": [fit.ci_low, fit.ci_high], "points": fit.n_points}
    except InsufficientData as e:
        out["tail_slope"] = {"error": str(e)}
    return out


def drift_pipeline(setup: Setup, workers: int = 1, progress_cb: ProgressCb = None) -> DriftOutcome:
    _require_transient(setup.regime)
    run = setup.settings["run"]
    S = int(setup.settings["exits"]["safety_margin"])
    trajs = run_replicas(
        setup.pres, setup.params, int(run["steps"]), int(run["seed"]), int(run["replicas"]),
        ell=setup.ell, checkpoint_every=int(run.get("checkpoint_every", 0)), workers=workers, progress_cb=progress_cb,
    )
    report, data, pi_hat = drift_estimates(setup, trajs, S)

    sensitivity: Dict[str, Any] = {"safety_margin": S, "doubled": 2 * S}
    try:
        wide, _, _ = drift_estimates(setup, trajs, 2 * S)
        sensitivity["lambda_regen"] = compare_estimates(report.lambda_regen, wide.lambda_regen)
        sensitivity["lambda_pi"] = compare_estimates(report.lambda_pi, wide.lambda_pi)
        sensitivity["sigma2"] = compare_estimates(report.sigma2, wide.sigma2)
    except HnnWalkError as e:
        sensitivity["error"] = str(e)

    diagnostics = chain_diagnostics(setup, trajs, data, pi_hat, S)
    return DriftOutcome(report, trajs, data, pi_hat, sensitivity, diagnostics)


# -----------------------------
# 4) CLT, xi, zcheck
# -----------------------------
def clt_pipeline(setup: Setup, n: int, replicas: int, workers: int = 1, progress_cb: ProgressCb = None) -> Tuple[CltReport, DriftOutcome]:
    """Calibrate lambda and sigma^2 on the drift run, then sample (l(X_n) - n lambda)/sqrt(n)."""
    outcome = drift_pipeline(setup, workers=workers, progress_cb=progress_cb)
    th = setup.settings["thresholds"]

    def _runner(pres, params, n_steps, seed, reps, ell=None):
        return run_replicas(pres, params, n_steps, seed, reps, ell=ell, workers=workers, progress_cb=progress_cb)

    report = clt_check(
        setup.pres, setup.params, setup.ell, n, replicas,
        derive_seed(setup.settings["run"]["seed"], "clt", n),
        lambda_hat=outcome.report.lambda_regen.point,
        sigma2=outcome.report.sigma2.point,
        runner=_runner,
        variance_band=float(th["clt_variance_band"]),
        skewness_max=float(th["clt_skewness_max"]),
        min_steps=int(th.get("clt_min_steps", 1000)),
    )
    return report, outcome


def xi_pipeline(setup: Setup, families: Sequence[str], schedule: Sequence[int]) -> List[EstimateWithCI]:
    _require_transient(setup.regime)
    xi = setup.settings["xi"]
    seed = int(setup.settings["run"]["seed"])
    z = float(setup.settings["thresholds"]["confidence_z"])
    out: List[EstimateWithCI] = []
    for family in families:
        for start in xi_starts(setup.pres, family):
            label = format_normal_form(setup.pres, start)
            est = estimate_xi(
                setup.pres, setup.params, start, schedule, int(xi["trials"]),
                derive_seed(seed, "xi", label), float(xi["tolerance"]), z,
            )
            logger.info("xi(%s) = %.5f +- %.5f", label, est.point, est.std_error)
            out.append(est)
    return out


def parse_schedule(text: Optional[str], xi_settings: Dict[str, Any]) -> List[int]:
    """'H0,xK' -> H0, K*H0, K^2*H0, ... (max_doublings + 1 horizons)."""
    start = int(xi_settings["horizon_start"])
    factor = int(xi_settings["horizon_factor"])
    if text:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        try:
            start = int(parts[0])
            if len(parts) > 1:
                factor = int(parts[1].lstrip("xX"))
        except (IndexError, ValueError):
            raise ConfigError(f"bad horizon schedule {text!r}; expected H0,xK") from None
    if start <= 0 or factor < 2:
        raise ConfigError("horizon schedule needs H0 > 0 and a factor of at least 2")
    return horizon_schedule(start, factor, int(xi_settings["max_doublings"]))


def zcheck_pipeline(
    law: zp.ZWalkLaw,
    z: float,
    setup: Optional[Setup] = None,
    simulate: int = 0,
    pattern: Sequence[int] = (1, 1, -1, 1),
) -> Dict[str, Any]:
    """Closed forms at ``z`` and, with ``simulate`` > 0, their Monte Carlo counterparts on the walk."""
    table = zp.zcheck_table(law, z)
    table["sign_pattern_weight"] = zp.sign_pattern_weight(law, pattern, z)
    out: Dict[str, Any] = {"law": {"p": law.p, "alpha": law.alpha, "z": z}, "exact": table, "pattern": list(pattern)}
    if not simulate:
        return out
    if setup is None:
        raise RegimeError("Monte Carlo comparisons need a degenerate experiment config")
    s = setup.settings
    seed = int(s["run"]["seed"])
    zc = s.get("zcheck", {})
    crit = float(s["thresholds"]["confidence_z"])
    sim = {
        "return_frequency": zp.return_frequency_mc(
            setup.pres, setup.params, simulate, derive_seed(seed, "returns"), int(zc.get("return_horizon", 2000)), crit),
        "visits": zp.visit_gf_mc(
            setup.pres, setup.params, z, int(zc.get("visit_horizon", 4000)), max(2, simulate // 100), derive_seed(seed, "visits"), crit),
        "sign_pattern": zp.sign_pattern_mc(setup.pres, setup.params, pattern, z, simulate, derive_seed(seed, "pattern"), crit),
    }
    targets = {"return_frequency": table["U"], "visits": table["lazy_green"], "sign_pattern": table["sign_pattern_weight"]}
    sigma = float(s["thresholds"]["agreement_sigma"])
    out["simulated"] = {
        k: {**est.as_dict(), "target": targets[k], "agrees": bool(abs(est.point - targets[k]) <= sigma * est.std_error + 1e-12)}
        for k, est in sim.items()
    }
    return out


# -----------------------------
# 5) sweeps
# -----------------------------
def parse_grid(text: str) -> List[float]:
    """'LO:HI:STEP' (inclusive) or a single value."""
    parts = text.split(":")
    try:
        nums = [float(x) for x in parts]
    except ValueError:
        raise GridError(f"bad grid {text!r}; expected LO:HI:STEP") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3:
        raise GridError(f"bad grid {text!r}; expected LO:HI:STEP")
    lo, hi, step = nums
    if step <= 0 or hi < lo:
        raise GridError(f"grid {text!r} needs STEP > 0 and LO <= HI")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(n)]


def split_segments(values: Sequence[float], param: str, degenerate: bool) -> List[List[float]]:
    """
    In the degenerate regime a p-grid is split at the recurrent point p = 1/2,
    which itself is never evaluated.
    """
    if param != "p" or not degenerate:
        return [list(values)]
    below = [v for v in values if v < 0.5]
    above = [v for v in values if v > 0.5]
    if len(below) + len(above) < len(values):
        logger.warning("sweep grid contains p = 1/2 (recurrent); skipped")
    segments = [s for s in (below, above) if s]
    if not segments:
        raise GridError("grid contains only the recurrent point p = 1/2")
    return segments


def with_param(cfg: ExperimentConfig, param: str, value: float) -> ExperimentConfig:
    data = cfg.canonical()
    if param in ("p", "alpha"):
        if not (0.0 < value < 1.0):
            raise GridError(f"{param} = {value} outside (0, 1)")
        data[param] = value
    elif param.startswith("mu0:"):
        name = param.split(":", 1)[1]
        mu0 = dict(data["mu0"])
        if name not in mu0:
            raise GridError(f"mu0 has no component {name!r}")
        if not (0.0 < value < 1.0):
            raise GridError(f"mu0 component {value} outside (0, 1)")
        rest = math.fsum(m for k, m in mu0.items() if k != name)
        if rest <= 0:
            raise GridError("cannot renormalise a single-point mu0")
        scale = (1.0 - value) / rest
        mu0 = {k: (value if k == name else m * scale) for k, m in mu0.items()}
        # absorb rounding so the masses sum to 1 within 1e-12
        others = [k for k in mu0 if k != name]
        mu0[others[-1]] = 1.0 - math.fsum(mu0[k] for k in mu0 if k != others[-1])
        data["mu0"] = mu0
    else:
        raise GridError(f"unknown sweep parameter {param!r}; use p, alpha or mu0:<element>")
    return parse_experiment(data)


SWEEP_COLUMNS = [
    "param", "value", "segment", "seed", "regime",
    "lambda", "lambda_se", "lambda_ci_low", "lambda_ci_high",
    "lambda_regen", "lambda_regen_se",
    "sigma2", "sigma2_se", "sigma2_ci_low", "sigma2_ci_high",
    "t_drift", "cross_consistent", "second_difference", "error",
]


def sweep(
    cfg: ExperimentConfig,
    defaults: Dict[str, Any],
    param: str,
    grid: Sequence[float],
    overrides: Optional[Dict[str, Dict[str, Any]]] = None,
    workers: int = 1,
    progress_cb: ProgressCb = None,
) -> pd.DataFrame:
    settings = resolve_settings(defaults, cfg, overrides)
    master = int(settings["run"]["seed"])
    base = build_setup(cfg, settings)
    segments = split_segments(grid, param, base.pres.is_degenerate)

    total = sum(len(s) for s in segments)
    counts = {"total": total, "pending": total, "completed": 0, "failed": 0}
    if progress_cb:
        progress_cb(counts)

    rows: List[Dict[str, Any]] = []
    for seg_id, seg in enumerate(segments):
        seg_rows: List[Dict[str, Any]] = []
        for value in seg:
            seed = derive_seed(master, param, float(value))
            row: Dict[str, Any] = {c: None for c in SWEEP_COLUMNS}
            row.update({"param": param, "value": float(value), "segment": seg_id, "seed": seed, "error": ""})
            try:
                point_cfg = with_param(cfg, param, float(value))
                point_overrides = copy.deepcopy(overrides or {})
                point_overrides.setdefault("run", {})["seed"] = seed
                point_settings = resolve_settings(defaults, point_cfg, point_overrides)
                setup = build_setup(point_cfg, point_settings)
                rep = drift_pipeline(setup, workers=workers).report
                row.update({
                    "regime": rep.regime,
                    "lambda": rep.lambda_direct.point,
                    "lambda_se": rep.lambda_direct.std_error,
                    "lambda_ci_low": rep.lambda_direct.ci_low,
                    "lambda_ci_high": rep.lambda_direct.ci_high,
                    "lambda_regen": rep.lambda_regen.point,
                    "lambda_regen_se": rep.lambda_regen.std_error,
                    "sigma2": rep.sigma2.point,
                    "sigma2_se": rep.sigma2.std_error,
                    "sigma2_ci_low": rep.sigma2.ci_low,
                    "sigma2_ci_high": rep.sigma2.ci_high,
                    "t_drift": rep.t_drift.point,
                    "cross_consistent": rep.cross_consistent,
                })
                counts["completed"] += 1
            except HnnWalkError as e:
                logger.warning("sweep %s=%s failed: %s", param, value, e)
                row["error"] = str(e)
                counts["failed"] += 1
            counts["pending"] = max(0, counts["pending"] - 1)
            if progress_cb:
                progress_cb(counts)
            seg_rows.append(row)
        _second_differences(seg_rows)
        rows.extend(seg_rows)
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def _second_differences(rows: List[Dict[str, Any]]) -> None:
    """Centred (l[i-1] - 2 l[i] + l[i+1]) / h^2 on an evenly spaced segment."""
    for i in range(1, len(rows) - 1):
        a, b, c = rows[i - 1], rows[i], rows[i + 1]
        if a["lambda"] is None or b["lambda"] is None or c["lambda"] is None:
            continue
        h = 0.5 * (c["value"] - a["value"])
        if h > 0:
            b["second_difference"] = (a["lambda"] - 2.0 * b["lambda"] + c["lambda"]) / (h * h)
