"""Closed forms for the degenerate case A = B = G0.

There psi(X_n), the t-exponent sum, is a lazy biased walk on the integers:
+1 with probability (1-alpha)p, -1 with (1-alpha)(1-p), 0 with alpha.
The generating functions below are those of the non-lazy walk; laziness enters
through the substitution z -> (1-alpha)z / (1-alpha z).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Union

import numpy as np

from src.errors import DomainError, InvalidParams, RegimeError
from src.estimators import EstimateWithCI, Z95
from src.group_core import HnnPresentation, identity_form, push_inplace
from src.walk_engine import (
    WalkParams,
    advance_until_base,
    classify_regime,
    replica_rng,
    run_trajectory,
    sample_steps,
    signed_depth,
    step_law,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ZWalkLaw:
    p: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.p < 1.0) or self.p == 0.5:
            raise DomainError(f"p must lie in (0, 1) without 1/2, got {self.p}")
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    @classmethod
    def from_params(cls, params: WalkParams) -> "ZWalkLaw":
        return cls(p=params.p, alpha=params.alpha)

    @property
    def up(self) -> float:
        return (1.0 - self.alpha) * self.p

    @property
    def down(self) -> float:
        return (1.0 - self.alpha) * (1.0 - self.p)

    @property
    def hold(self) -> float:
        return self.alpha

    @property
    def radius(self) -> float:
        """Radius of convergence of the non-lazy first-passage series."""
        return 1.0 / (2.0 * math.sqrt(self.p * (1.0 - self.p)))


def _check_z(law: ZWalkLaw, z: float) -> None:
    if not (0.0 < z <= law.radius):
        raise DomainError(f"z = {z} outside (0, {law.radius:.6g}]")


def first_passage_gf(law: ZWalkLaw, direction: int, z: float) -> float:
    """
    Minimal root of F = q z + (1-q) z F^2 with q = P[step towards ``direction``];
    the power-series branch with F(0) = 0.
    """
    if direction not in (1, -1):
        raise DomainError(f"direction must be +1 or -1, got {direction}")
    _check_z(law, z)
    q = law.p if direction == 1 else 1.0 - law.p
    s = math.sqrt(max(0.0, 1.0 - 4.0 * law.p * (1.0 - law.p) * z * z))
    # 2qz / (1 + s) equals (1 - s) / (2(1-q)z) without the cancellation near z = 0
    return 2.0 * q * z / (1.0 + s)


def quadratic_roots(law: ZWalkLaw, direction: int, z: float) -> List[float]:
    """Both roots of the first-passage fixed-point equation, ascending."""
    _check_z(law, z)
    q = law.p if direction == 1 else 1.0 - law.p
    r = 1.0 - q
    coeffs = [r * z, -1.0, q * z]
    return sorted(float(x.real) for x in np.roots(coeffs))


def return_gf(law: ZWalkLaw, z: float) -> float:
    """U(z) = P(-1) z F+(z) + P(+1) z F-(z), the first-return generating function."""
    u = (1.0 - law.p) * z * first_passage_gf(law, 1, z) + law.p * z * first_passage_gf(law, -1, z)
    if u >= 1.0:
        raise DomainError(f"U({z}) = {u} is not below 1")
    return u


def green_gf(law: ZWalkLaw, z: float) -> float:
    return 1.0 / (1.0 - return_gf(law, z))


def lazy_argument(law: ZWalkLaw, z: float) -> float:
    return (1.0 - law.alpha) * z / (1.0 - law.alpha * z)


def lazy_green_identity(law: ZWalkLaw, z: float) -> float:
    """G(e, A | z) = G_Z((1-alpha)z / (1-alpha z)) / (1 - alpha z): expected visits of the lazy walk to 0."""
    if not (0.0 < z) or law.alpha * z >= 1.0:
        raise DomainError(f"z = {z} outside the lazy convergence region")
    return green_gf(law, lazy_argument(law, z)) / (1.0 - law.alpha * z)


def degenerate_drift(params: Union[WalkParams, "ZWalkLaw"]) -> float:
    return (1.0 - params.alpha) * abs(2.0 * params.p - 1.0)


def lazy_step_variance(params: Union[WalkParams, "ZWalkLaw"]) -> float:
    """Per-step variance of the psi increment."""
    a = 1.0 - params.alpha
    return a * (1.0 - a * (2.0 * params.p - 1.0) ** 2)


def sign_pattern_weight(law: ZWalkLaw, pattern: Sequence[int], z: float) -> float:
    """
    w(n_1..n_k) = (z / (1 - alpha z))^k * prod mu(t^{n_j - n_{j-1}}): the generating
    function of the time of the k-th t-step over paths whose t-steps follow ``pattern``.
    """
    if any(s not in (1, -1) for s in pattern):
        raise DomainError("pattern entries must be +1 or -1")
    if not (0.0 < z) or law.alpha * z >= 1.0:
        raise DomainError(f"z = {z} outside the lazy convergence region")
    w = (z / (1.0 - law.alpha * z)) ** len(pattern)
    for s in pattern:
        w *= law.up if s == 1 else law.down
    return w


def parse_pattern(text: str) -> List[int]:
    """'++-+' -> [1, 1, -1, 1]."""
    out = []
    for ch in text.strip():
        if ch == "+":
            out.append(1)
        elif ch == "-":
            out.append(-1)
        else:
            raise DomainError(f"pattern character {ch!r} is not + or -")
    return out


# -----------------------------
# Monte Carlo counterparts on the HNN walk itself
# -----------------------------
def _require_degenerate(pres: HnnPresentation, params: WalkParams) -> None:
    if not pres.is_degenerate:
        raise RegimeError("the integer projection needs A = B = G0")
    if not classify_regime(pres, params).is_transient:
        raise RegimeError("p = 1/2 with A = B = G0 is recurrent; the projection oracles need p != 1/2")


def sign_pattern_mc(
    pres: HnnPresentation,
    params: WalkParams,
    pattern: Sequence[int],
    z: float,
    trials: int,
    seed: int,
    z_crit: float = Z95,
    max_steps: int = 100_000,
) -> EstimateWithCI:
    """E[z^{time of k-th t-step} ; psi increments follow ``pattern``]."""
    _require_degenerate(pres, params)
    if trials <= 0:
        raise InvalidParams("trials must be positive")
    letters, probs = step_law(params)
    k = len(pattern)
    vals = np.zeros(trials)
    for i in range(trials):
        rng = replica_rng(seed, i)
        w = identity_form(pres)
        psi, matched, n = 0, 0, 0
        for x in sample_steps(letters, probs, max_steps, rng, chunk=256):
            n += 1
            push_inplace(pres, w, x)
            new = signed_depth(w)
            if new == psi:
                continue
            if new - psi != pattern[matched]:
                break
            psi = new
            matched += 1
            if matched == k:
                vals[i] = z ** n
                break
    se = float(vals.std(ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0
    return EstimateWithCI.normal(float(vals.mean()), se, trials, "sign_pattern_mc", z_crit, pattern=list(pattern), z=z)


def return_frequency_mc(
    pres: HnnPresentation,
    params: WalkParams,
    excursions: int,
    seed: int,
    horizon: int = 2000,
    z_crit: float = Z95,
) -> EstimateWithCI:
    """Share of excursions from G0 that come back (within ``horizon`` steps after leaving)."""
    _require_degenerate(pres, params)
    letters, probs = step_law(params)
    returned = 0
    for i in range(excursions):
        rng = replica_rng(seed, i)
        w = identity_form(pres)
        for x in sample_steps(letters, probs, horizon, rng, chunk=64):
            push_inplace(pres, w, x)
            if w.syllables:
                break
        # continue from the first departure
        if w.syllables and advance_until_base(pres, letters, probs, w, rng, horizon) >= 0:
            returned += 1
    f = returned / excursions
    se = math.sqrt(f * (1.0 - f) / excursions)
    return EstimateWithCI.normal(f, se, excursions, "return_frequency_mc", z_crit, returned=returned, horizon=horizon)


def visit_gf_mc(
    pres: HnnPresentation,
    params: WalkParams,
    z: float,
    horizon: int,
    replicas: int,
    seed: int,
    z_crit: float = Z95,
) -> EstimateWithCI:
    """Truncated sum_{n <= horizon} z^n 1{X_n in G0}, averaged over replicas."""
    _require_degenerate(pres, params)
    weights = np.power(float(z), np.arange(horizon + 1, dtype=float))
    vals = np.array([
        float(weights[run_trajectory(pres, params, horizon, seed, r).depth_log == 0].sum())
        for r in range(replicas)
    ])
    se = float(vals.std(ddof=1)) / math.sqrt(replicas) if replicas > 1 else 0.0
    return EstimateWithCI.normal(float(vals.mean()), se, replicas, "visit_gf_mc", z_crit, z=z, horizon=horizon)


def zcheck_table(law: ZWalkLaw, z: float = 1.0) -> Dict[str, float]:
    return {
        "F_plus": first_passage_gf(law, 1, z),
        "F_minus": first_passage_gf(law, -1, z),
        "U": return_gf(law, z),
        "G": green_gf(law, z),
        "lazy_green": lazy_green_identity(law, z),
        "degenerate_drift": degenerate_drift(law),
        "lazy_step_variance": lazy_step_variance(law),
    }
