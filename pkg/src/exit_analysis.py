"""Exit times, the (W_k, i_k) chain and regeneration cycles of finished trajectories.

The exit time e_k is the last time the walk creates level k; it depends on the
whole future, so only levels buried at least ``safety_margin`` syllables below
the final depth are treated as settled (and the deepest ``tail_discard`` share
of those is dropped as well).
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src.errors import InsufficientData, NoRegenerations
from src.group_core import LengthFunction
from src.walk_engine import CREATED, Regime, TrajectoryState

logger = logging.getLogger(__name__)

# (g, sign, h, increment)
State = Tuple[int, int, int, int]


@dataclass(frozen=True)
class ExitEvent:
    level: int
    exit_time: int
    increment: int
    g: int
    sign: int
    h: int
    confirmed: bool = True

    @property
    def state(self) -> State:
        return self.g, self.sign, self.h, self.increment


@dataclass(frozen=True)
class RegenerationCycle:
    index: int
    start: int
    end: int
    duration: int
    length_gain: float
    syllable_count: int


def extract_exits(
    traj: TrajectoryState,
    safety_margin: int = 10,
    tail_discard: float = 0.05,
    include_unconfirmed: bool = False,
    regime: Optional[Regime] = None,
) -> List[ExitEvent]:
    """
    Exit events of the settled levels, shallowest first.

    A recurrent walk returns to G0 infinitely often, so no level ever settles and
    the result is empty whatever the final depth happens to be.
    """
    if regime is not None and not regime.is_transient:
        return []
    cols = traj.events.columns()
    created = cols["kind"] == CREATED
    levels = cols["level"][created]
    final_depth = traj.final_depth
    if final_depth == 0 or levels.size == 0:
        return []

    # last creation of each level: first hit in the reversed log
    rev_levels = levels[::-1]
    uniq, first_rev = np.unique(rev_levels, return_index=True)
    last_pos = levels.size - 1 - first_rev
    live = uniq <= final_depth
    uniq, last_pos = uniq[live], last_pos[live]

    times = cols["time"][created][last_pos]
    gs = cols["g"][created][last_pos]
    signs = cols["sign"][created][last_pos]
    hs = cols["h"][created][last_pos]

    n_confirmed = max(0, final_depth - safety_margin)
    n_keep = int(math.floor(n_confirmed * (1.0 - tail_discard))) if tail_discard > 0 else n_confirmed

    out: List[ExitEvent] = []
    prev = 0
    for k, e, g, s, h in zip(uniq.tolist(), times.tolist(), gs.tolist(), signs.tolist(), hs.tolist()):
        confirmed = k <= n_keep
        if not confirmed and not include_unconfirmed:
            break
        out.append(ExitEvent(level=k, exit_time=e, increment=e - prev, g=g, sign=s, h=h, confirmed=confirmed))
        prev = e
    return out


def confirmed_level_count(traj: TrajectoryState, safety_margin: int = 10, regime: Optional[Regime] = None) -> int:
    if regime is not None and not regime.is_transient:
        return 0
    return max(0, traj.final_depth - safety_margin)


# -----------------------------
# (W, i) chain
# -----------------------------
@dataclass
class Chain:
    states: List[State] = field(default_factory=list)
    transitions: Counter = field(default_factory=Counter)
    # state-sequence lengths of the merged replicas
    segments: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)


def extract_chain(exits: Sequence[ExitEvent]) -> Chain:
    if len(exits) < 2:
        raise InsufficientData(f"need at least 2 confirmed exits, got {len(exits)}")
    states = [ev.state for ev in exits]
    return Chain(states=states, transitions=Counter(zip(states, states[1:])), segments=[len(states)])


def merge_chains(chains: Sequence[Chain]) -> Chain:
    out = Chain()
    for c in chains:
        out.states.extend(c.states)
        out.transitions.update(c.transitions)
        out.segments.extend(c.segments)
    return out


def chain_violations(chain: Chain, identity: int) -> List[Tuple[State, State]]:
    """Observed transitions whose next syllable would cancel the settled one (t e0 t^-1)."""
    return [
        (s1, s2)
        for (s1, s2), count in chain.transitions.items()
        if count > 0 and s2[0] == identity and s2[1] == -s1[1]
    ]


def reachable_within(chain: Chain, steps: int = 2, min_count: int = 1) -> Tuple[float, bool]:
    """
    Share of ordered pairs of observed states (visited >= min_count times) joined by a
    path of at most ``steps`` observed transitions; second value is True when all are.
    """
    visits = Counter(chain.states)
    keep = sorted(s for s, c in visits.items() if c >= min_count)
    if not keep:
        raise InsufficientData("no states pass the visit threshold")
    pos = {s: i for i, s in enumerate(keep)}
    m = len(keep)
    adj = np.zeros((m, m), dtype=np.int64)
    for (s1, s2), count in chain.transitions.items():
        if s1 in pos and s2 in pos and count > 0:
            adj[pos[s1], pos[s2]] = 1
    reach = adj.copy()
    power = adj.copy()
    for _ in range(steps - 1):
        power = np.minimum(power @ adj, 1)
        reach = np.maximum(reach, power)
    share = float(reach.sum()) / float(m * m)
    return share, bool(reach.all())


def empirical_pi(chain: Chain) -> Dict[State, float]:
    if not chain.states:
        raise InsufficientData("empty chain")
    counts = Counter(chain.states)
    n = len(chain.states)
    return {s: c / n for s, c in counts.items()}


def stationarity_residual(chain: Chain, pi: Dict[State, float]) -> float:
    """|| pi Q - pi ||_1 with Q the row-normalised empirical transition counts."""
    keys = sorted(pi)
    pos = {s: i for i, s in enumerate(keys)}
    q = np.zeros((len(keys), len(keys)))
    for (s1, s2), count in chain.transitions.items():
        if s1 in pos and s2 in pos:
            q[pos[s1], pos[s2]] += count
    rows = q.sum(axis=1, keepdims=True)
    q = np.divide(q, rows, out=np.zeros_like(q), where=rows > 0)
    vec = np.array([pi[s] for s in keys])
    return float(np.abs(vec @ q - vec).sum())


# -----------------------------
# regeneration cycles
# -----------------------------
def anchor_state(identity: int, direction: Optional[int]) -> State:
    sign = -1 if direction == -1 else 1
    return identity, sign, identity, 1


def bracket_lengths(exits: Sequence[ExitEvent], ell: LengthFunction, identity: int) -> np.ndarray:
    """
    l([X_{e_k}]) for every listed exit: eval_length of strip_trailing applied to the
    first k syllables, taken here as a running sum of syllable weights.
    """
    weights = np.array([ell.syllable(ev.g, ev.sign) for ev in exits], dtype=float)
    return ell.g0(identity) + np.cumsum(weights)


def extract_regenerations(
    chain: Chain,
    exits: Sequence[ExitEvent],
    ell: LengthFunction,
    direction: Optional[int],
    identity: int,
) -> List[RegenerationCycle]:
    """
    Cycles between consecutive visits of the anchor (e0 t e0, 1); the mirror anchor
    (e0 t^-1 e0, 1) is used when the degenerate walk drifts downwards.
    """
    if len(chain.states) != len(exits):
        raise InsufficientData("chain and exit list disagree in length")
    anchor = anchor_state(identity, direction)
    hits = [j for j, s in enumerate(chain.states) if s == anchor]
    if not hits:
        raise NoRegenerations(f"anchor {anchor} never occurs among {len(exits)} confirmed exits")
    prefix = bracket_lengths(exits, ell, identity)
    cycles: List[RegenerationCycle] = []
    for i, (j0, j1) in enumerate(zip(hits, hits[1:]), start=1):
        start, end = exits[j0].exit_time, exits[j1].exit_time
        cycles.append(
            RegenerationCycle(
                index=i,
                start=start,
                end=end,
                duration=end - start,
                length_gain=float(prefix[j1] - prefix[j0]),
                syllable_count=j1 - j0,
            )
        )
    return cycles


# -----------------------------
# diagnostics
# -----------------------------
def lag1_correlation(values: Sequence[float]) -> float:
    x = np.asarray(values, dtype=float)
    if x.size < 3:
        raise InsufficientData("need at least 3 values for a lag-1 correlation")
    a, b = x[:-1] - x[:-1].mean(), x[1:] - x[1:].mean()
    denom = math.sqrt(float((a * a).sum() * (b * b).sum()))
    return float((a * b).sum() / denom) if denom > 0 else 0.0


def independence_bound(n: int, sigma: float = 3.0) -> float:
    return sigma / math.sqrt(n)


@dataclass(frozen=True)
class TailFit:
    slope: float
    std_error: float
    ci_low: float
    ci_high: float
    n_points: int


def duration_tail_slope(cycles: Sequence[RegenerationCycle], z: float = 1.96, min_points: int = 3) -> TailFit:
    """Least-squares slope of log P[duration > d] against d."""
    d = np.sort(np.array([c.duration for c in cycles], dtype=float))
    if d.size == 0:
        raise InsufficientData("no cycles")
    grid = np.unique(d)
    surv = 1.0 - np.searchsorted(d, grid, side="right") / d.size
    ok = surv > 0
    grid, surv = grid[ok], surv[ok]
    if grid.size < min_points:
        raise InsufficientData(f"only {grid.size} distinct durations with positive survival")
    fit = stats.linregress(grid, np.log(surv))
    return TailFit(
        slope=float(fit.slope),
        std_error=float(fit.stderr),
        ci_low=float(fit.slope - z * fit.stderr),
        ci_high=float(fit.slope + z * fit.stderr),
        n_points=int(grid.size),
    )
