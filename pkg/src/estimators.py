"""Point estimates with normal-theory confidence intervals.

Every estimator returns an ``EstimateWithCI``; ratio estimators use the delta
method over i.i.d. units (regeneration cycles, or batches of the exit chain).
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from src.errors import InsufficientData, NoRegenerations, RegimeError, ZeroHitEstimate
from src.exit_analysis import Chain, RegenerationCycle, State
from src.group_core import (
    T,
    T_INV,
    HnnPresentation,
    LengthFunction,
    NormalForm,
    eval_length,
    format_normal_form,
    identity_form,
    normalize,
    push_inplace,
    word_length,
)
from src.walk_engine import (
    TrajectoryState,
    WalkParams,
    advance_until_base,
    classify_regime,
    replica_rng,
    run_trajectory,
    sample_steps,
    step_law,
)

logger = logging.getLogger(__name__)

Z95 = 1.96


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    std_error: float
    ci_low: float
    ci_high: float
    n_samples: int
    method: str
    details: Dict[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def normal(cls, point: float, std_error: float, n_samples: int, method: str, z: float = Z95, /, **details: Any) -> "EstimateWithCI":
        se = max(0.0, float(std_error))
        return cls(float(point), se, float(point) - z * se, float(point) + z * se, int(n_samples), method, dict(details))

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def excludes_zero(self) -> bool:
        return self.ci_low > 0 or self.ci_high < 0

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


def overlap(a: EstimateWithCI, b: EstimateWithCI, sigma: float = 3.0) -> bool:
    """|a - b| within ``sigma`` joint standard errors."""
    return abs(a.point - b.point) <= sigma * math.hypot(a.std_error, b.std_error) + 1e-12


def _ratio_se(y: np.ndarray, d: np.ndarray) -> Tuple[float, float]:
    """Ratio of means and its delta-method standard error over i.i.d. pairs (y_i, d_i)."""
    n = y.size
    d_bar = float(d.mean())
    if d_bar <= 0:
        raise InsufficientData("mean denominator is not positive")
    r = float(y.mean()) / d_bar
    if n < 2:
        return r, 0.0
    resid = y - r * d
    return r, math.sqrt(float(resid.var(ddof=1)) / n) / d_bar


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1)) / math.sqrt(values.size)


# -----------------------------
# drift
# -----------------------------
def drift_direct(trajs: Sequence[TrajectoryState], ell: LengthFunction, z: float = Z95) -> EstimateWithCI:
    """Mean of l(X_n)/n over replicas at the final step."""
    if not trajs:
        raise InsufficientData("no trajectories")
    if any(tr.step_count <= 0 for tr in trajs):
        raise InsufficientData("every replica needs at least one step")
    values = np.array([eval_length(ell, tr.current) / tr.step_count for tr in trajs], dtype=float)
    point, se = _mean_se(values)
    return EstimateWithCI.normal(point, se, len(trajs), "direct", z, steps=int(trajs[0].step_count))


def word_length_drift(pres: HnnPresentation, trajs: Sequence[TrajectoryState], z: float = Z95) -> EstimateWithCI:
    """Normal-form word length |X_n| / n across replicas; converges to 2/Lambda."""
    if not trajs:
        raise InsufficientData("no trajectories")
    values = np.array([word_length(pres, tr.current) / tr.step_count for tr in trajs], dtype=float)
    point, se = _mean_se(values)
    return EstimateWithCI.normal(point, se, len(trajs), "word_length", z)


def drift_regeneration(cycles: Sequence[RegenerationCycle], z: float = Z95, gain: str = "length_gain") -> EstimateWithCI:
    """
    (mean gain) / (mean duration) over regeneration cycles.

    ``gain="syllable_count"`` counts one per stabilised syllable, which
    estimates the t-drift 1/Lambda.
    """
    if not cycles:
        raise NoRegenerations("no complete regeneration cycle")
    y = np.array([getattr(c, gain) for c in cycles], dtype=float)
    d = np.array([c.duration for c in cycles], dtype=float)
    r, se = _ratio_se(y, d)
    return EstimateWithCI.normal(r, se, len(cycles), f"regeneration:{gain}", z, mean_duration=float(d.mean()))


def drift_pi_formula(
    chain: Chain,
    pi_hat: Dict[State, float],
    ell: LengthFunction,
    n_batches: int = 30,
    z: float = Z95,
) -> EstimateWithCI:
    """
    Delta / Lambda with Lambda = sum m pi(w, m) and Delta = sum l(g t^s) pi(g t^s h, m).

    The standard error treats contiguous batches of the chain as independent.
    """
    if not pi_hat or not chain.states:
        raise InsufficientData("empty invariant-measure estimate")
    lam = math.fsum(m * w for (_, _, _, m), w in pi_hat.items())
    delta = math.fsum(ell.syllable(g, s) * w for (g, s, _, _), w in pi_hat.items())
    if lam <= 0:
        raise InsufficientData("Lambda estimate is not positive")
    point = delta / lam

    gains = np.array([ell.syllable(g, s) for g, s, _, _ in chain.states], dtype=float)
    incs = np.array([m for _, _, _, m in chain.states], dtype=float)
    k = min(n_batches, gains.size)
    se = 0.0
    if k >= 2:
        y = np.array([b.mean() for b in np.array_split(gains, k)])
        d = np.array([b.mean() for b in np.array_split(incs, k)])
        _, se = _ratio_se(y, d)
    return EstimateWithCI.normal(point, se, len(chain.states), "pi_formula", z, Lambda=lam, Delta=delta, batches=k)


def sigma2_regeneration(cycles: Sequence[RegenerationCycle], lambda_hat: float, z: float = Z95) -> EstimateWithCI:
    """
    mean((gain - duration * lambda)^2) / mean(duration). Details carry the
    centred cycle increments L_i, whose mean should straddle 0.
    """
    if not cycles:
        raise NoRegenerations("no complete regeneration cycle")
    y = np.array([c.length_gain for c in cycles], dtype=float)
    d = np.array([c.duration for c in cycles], dtype=float)
    L = y - d * float(lambda_hat)
    s2, se = _ratio_se(L * L, d)
    mean_L, se_L = _mean_se(L)
    return EstimateWithCI.normal(
        s2, se, len(cycles), "sigma2_regeneration", z,
        mean_L=mean_L, mean_L_se=se_L,
        mean_L_ci=[mean_L - z * se_L, mean_L + z * se_L],
    )


def compare_estimates(base: EstimateWithCI, other: EstimateWithCI) -> Dict[str, Any]:
    """Shift between two estimates of the same quantity, against the base half-width."""
    shift = abs(other.point - base.point)
    return {
        "method": base.method,
        "base": base.point,
        "other": other.point,
        "shift": shift,
        "half_width": base.half_width,
        "within_ci": bool(shift <= base.half_width + 1e-12),
    }


@dataclass(frozen=True)
class DriftReport:
    lambda_direct: EstimateWithCI
    lambda_regen: EstimateWithCI
    lambda_pi: EstimateWithCI
    t_drift: EstimateWithCI
    wl_drift: EstimateWithCI
    sigma2: EstimateWithCI
    cross_consistent: bool
    regime: str = ""

    @property
    def wl_over_t(self) -> float:
        return self.wl_drift.point / self.t_drift.point if self.t_drift.point else float("nan")

    def as_dict(self) -> Dict[str, Any]:
        out = {
            "lambda_direct": self.lambda_direct.as_dict(),
            "lambda_regen": self.lambda_regen.as_dict(),
            "lambda_pi": self.lambda_pi.as_dict(),
            "t_drift": self.t_drift.as_dict(),
            "wl_drift": self.wl_drift.as_dict(),
            "sigma2": self.sigma2.as_dict(),
            "cross_consistent": self.cross_consistent,
            "regime": self.regime,
        }
        out["wl_over_t"] = self.wl_over_t
        return out


def assemble_drift_report(
    lambda_direct: EstimateWithCI,
    lambda_regen: EstimateWithCI,
    lambda_pi: EstimateWithCI,
    t_drift: EstimateWithCI,
    wl_drift: EstimateWithCI,
    sigma2: EstimateWithCI,
    sigma: float = 3.0,
    regime: str = "",
) -> DriftReport:
    trio = [lambda_direct, lambda_regen, lambda_pi]
    consistent = all(overlap(a, b, sigma) for i, a in enumerate(trio) for b in trio[i + 1:])
    if not consistent:
        logger.warning(
            "drift estimates disagree at %.1f sigma: direct=%.6f regen=%.6f pi=%.6f",
            sigma, lambda_direct.point, lambda_regen.point, lambda_pi.point,
        )
    return DriftReport(lambda_direct, lambda_regen, lambda_pi, t_drift, wl_drift, sigma2, consistent, regime)


# -----------------------------
# CLT
# -----------------------------
@dataclass(frozen=True)
class CltReport:
    n: int
    replicas: int
    lambda_hat: float
    mean: float
    variance: float
    sigma2: Optional[float]
    variance_ratio: Optional[float]
    skewness: Optional[float]
    excess_kurtosis: Optional[float]
    ks_statistic: Optional[float]
    ks_pvalue: Optional[float]
    passed: Optional[bool]
    # per replica, in replica order; kept out of the summary
    lengths: Tuple[float, ...] = field(default=(), repr=False, compare=False)
    statistics: Tuple[float, ...] = field(default=(), repr=False, compare=False)

    def as_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out.pop("lengths")
        out.pop("statistics")
        return out


def clt_statistics(
    trajs: Sequence[TrajectoryState],
    ell: LengthFunction,
    lambda_hat: Optional[float] = None,
    sigma2: Optional[float] = None,
    variance_band: float = 0.15,
    skewness_max: float = 0.15,
    min_steps: int = 1000,
) -> CltReport:
    """Moments and a KS distance of (l(X_n) - n lambda)/sqrt(n) across replicas."""
    if len(trajs) < 2:
        raise InsufficientData("need at least 2 replicas for a CLT check")
    n = int(trajs[0].step_count)
    if n <= 0 or any(tr.step_count != n for tr in trajs):
        raise InsufficientData("replicas must share a positive step count")
    lengths = np.array([eval_length(ell, tr.current) for tr in trajs], dtype=float)
    lam = float(lengths.mean() / n) if lambda_hat is None else float(lambda_hat)
    s = (lengths - n * lam) / math.sqrt(n)
    var = float(s.var(ddof=1))

    skew = kurt = ks_stat = ks_p = None
    if var > 0:
        skew = float(stats.skew(s, bias=False))
        kurt = float(stats.kurtosis(s, fisher=True, bias=False))
        ks = stats.kstest(s, "norm", args=(float(s.mean()), math.sqrt(var)))
        ks_stat, ks_p = float(ks.statistic), float(ks.pvalue)

    ratio = var / sigma2 if sigma2 else None
    passed: Optional[bool] = None
    if ratio is not None and skew is not None and n >= min_steps:
        passed = abs(ratio - 1.0) <= variance_band and abs(skew) < skewness_max
    return CltReport(
        n=n, replicas=len(trajs), lambda_hat=lam, mean=float(s.mean()), variance=var,
        sigma2=sigma2, variance_ratio=ratio, skewness=skew, excess_kurtosis=kurt,
        ks_statistic=ks_stat, ks_pvalue=ks_p, passed=passed,
        lengths=tuple(lengths.tolist()), statistics=tuple(s.tolist()),
    )


Runner = Callable[..., List[TrajectoryState]]


def _serial_runner(pres, params, n_steps, seed, replicas, ell=None, **_: Any) -> List[TrajectoryState]:
    return [run_trajectory(pres, params, n_steps, seed, r, ell) for r in range(replicas)]


def clt_check(
    pres: HnnPresentation,
    params: WalkParams,
    ell: LengthFunction,
    n: int,
    replicas: int,
    seed: int,
    lambda_hat: Optional[float] = None,
    sigma2: Optional[float] = None,
    runner: Optional[Runner] = None,
    **thresholds: Any,
) -> CltReport:
    run = runner or _serial_runner
    trajs = run(pres, params, n, seed, replicas, ell=ell)
    return clt_statistics(trajs, ell, lambda_hat, sigma2, **thresholds)


# -----------------------------
# xi: escape probabilities
# -----------------------------
XI_FAMILIES = ("tb", "t^-1a")


def xi_starts(pres: HnnPresentation, family: str) -> List[NormalForm]:
    """All starts t b (b in B) or t^-1 a (a in A)."""
    if family == "tb":
        return [normalize(pres, [T, b]) for b in sorted(pres.B)]
    if family in ("t^-1a", "t-1a", "t⁻¹a"):
        return [normalize(pres, [T_INV, a]) for a in sorted(pres.A)]
    raise InsufficientData(f"unknown start family: {family}")


def horizon_schedule(start: int, factor: int, max_doublings: int) -> List[int]:
    return [int(start) * int(factor) ** k for k in range(max_doublings + 1)]


def estimate_xi(
    pres: HnnPresentation,
    params: WalkParams,
    start: Union[NormalForm, Sequence[Any], str],
    schedule: Sequence[int],
    trials: int,
    seed: int,
    tolerance: float = 1e-3,
    z: float = Z95,
) -> EstimateWithCI:
    """
    P[the walk from ``start`` never re-enters G0], by survival up to growing horizons.
    Each survival fraction is an upper bracket; trials are continued, not restarted,
    when the horizon grows.
    """
    regime = classify_regime(pres, params)
    if not regime.is_transient:
        raise RegimeError("xi is only defined for transient walks; A = B = G0 with p = 1/2 is recurrent")
    if not schedule or trials <= 0:
        raise InsufficientData("empty horizon schedule or no trials")
    w0 = start if isinstance(start, NormalForm) else normalize(pres, start.split() if isinstance(start, str) else start)
    if not w0.syllables:
        raise InsufficientData("start point lies in G0")

    letters, probs = step_law(params)
    states = [w0.copy() for _ in range(trials)]
    rngs = [replica_rng(seed, i) for i in range(trials)]
    alive = list(range(trials))
    horizons: List[int] = []
    p_hats: List[float] = []
    zeros = 0
    converged = False
    done = 0
    for H in schedule:
        steps = int(H) - done
        if steps > 0:
            alive = [i for i in alive if advance_until_base(pres, letters, probs, states[i], rngs[i], steps) < 0]
            done = int(H)
        p = len(alive) / trials
        horizons.append(int(H))
        p_hats.append(p)
        logger.debug("xi(%s): H=%d survival=%.5f", format_normal_form(pres, w0), H, p)
        if p == 0.0:
            zeros += 1
            if zeros >= 2:
                converged = True
                break
            continue
        zeros = 0
        if len(p_hats) >= 2 and p_hats[-2] > 0 and abs(p - p_hats[-2]) / p_hats[-2] < tolerance:
            converged = True
            break

    p = p_hats[-1]
    se = math.sqrt(p * (1.0 - p) / trials)
    est = EstimateWithCI.normal(
        p, se, trials, "xi_survival", z,
        start=format_normal_form(pres, w0), horizons=horizons, survival=p_hats,
        converged=converged, upper_bracket=True,
    )
    return EstimateWithCI(est.point, est.std_error, max(0.0, est.ci_low), min(1.0, est.ci_high), est.n_samples, est.method, est.details)


# -----------------------------
# Greenian length
# -----------------------------
def greenian_hits(
    pres: HnnPresentation,
    params: WalkParams,
    horizon: int,
    trials: int,
    seed: int,
    z: float = Z95,
) -> Dict[str, EstimateWithCI]:
    """
    F(e, g) = P[X_n = g for some n <= horizon] for every g of G0 (finite base) or of
    supp(mu0) (integers), and for t, t^-1. Lower brackets of the true hitting probabilities.
    """
    base = pres.base
    g0 = sorted(pres.elements()) if base.is_finite else sorted(params.mu0)
    targets: Dict[Tuple, str] = {}
    for g in g0:
        targets[normalize(pres, [g]).key()] = base.name(g)
    targets[normalize(pres, [T]).key()] = "t"
    targets[normalize(pres, [T_INV]).key()] = "t^-1"
    labels = list(targets.values())
    hits = {label: 0 for label in labels}

    letters, probs = step_law(params)
    for i in range(trials):
        rng = replica_rng(seed, i)
        w = identity_form(pres)
        seen = {targets[w.key()]} if w.key() in targets else set()
        for x in sample_steps(letters, probs, horizon, rng):
            push_inplace(pres, w, x)
            if len(w.syllables) <= 1:
                label = targets.get(w.key())
                if label is not None:
                    seen.add(label)
                    if len(seen) == len(labels):
                        break
        for label in seen:
            hits[label] += 1

    out: Dict[str, EstimateWithCI] = {}
    for label in labels:
        f = hits[label] / trials
        se = math.sqrt(f * (1.0 - f) / trials)
        out[label] = EstimateWithCI.normal(f, se, trials, "hitting_probability", z, hits=hits[label], horizon=horizon, lower_bracket=True)
    return out


def estimate_greenian_length(
    pres: HnnPresentation,
    params: WalkParams,
    horizon: int,
    trials: int,
    seed: int,
    hits: Optional[Dict[str, EstimateWithCI]] = None,
) -> LengthFunction:
    """l_G(g) = -log F(e, g); raises ZeroHitEstimate when some target is never hit."""
    hits = hits if hits is not None else greenian_hits(pres, params, horizon, trials, seed)
    zero = sorted(label for label, est in hits.items() if est.point <= 0)
    if zero:
        raise ZeroHitEstimate(f"no hits for {zero} within horizon {horizon}; raise the horizon or trial count")
    values = {pres.base.lookup(label): _greenian(est.point) for label, est in hits.items() if label not in ("t", "t^-1")}
    # F(e, e) = 1 exactly
    values[pres.identity] = 0.0
    return LengthFunction(values, _greenian(hits["t"].point), _greenian(hits["t^-1"].point), kind="greenian")


def _greenian(f: float) -> float:
    return max(0.0, -math.log(f))
