"""Trajectories of the right random walk X_n = z_1 ... z_n on an HNN extension."""
from __future__ import annotations

import logging
import math
from array import array
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.errors import InvalidParams
from src.group_core import (
    T,
    T_INV,
    HnnPresentation,
    LengthFunction,
    Letter,
    NormalForm,
    eval_length,
    identity_form,
    push_inplace,
    word_length,
    word_metric,
)

logger = logging.getLogger(__name__)

CHUNK = 1 << 16
CREATED = 1
DESTROYED = -1


# -----------------------------
# 1) parameters and regimes
# -----------------------------
@dataclass(frozen=True)
class WalkParams:
    mu0: Dict[int, float]
    alpha: float
    p: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise InvalidParams(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (0.0 < self.p < 1.0):
            raise InvalidParams(f"p must lie in (0, 1), got {self.p}")
        if not self.mu0:
            raise InvalidParams("mu0 is empty")
        if any(m <= 0 for m in self.mu0.values()):
            raise InvalidParams("mu0 masses must be positive")
        total = math.fsum(self.mu0.values())
        if abs(total - 1.0) > 1e-12:
            raise InvalidParams(f"mu0 masses sum to {total!r}, not 1")

    @staticmethod
    def from_names(pres: HnnPresentation, mu0: Dict[str, float], alpha: float, p: float) -> "WalkParams":
        ids: Dict[int, float] = {}
        for name, mass in mu0.items():
            g = pres.base.lookup(str(name))
            ids[g] = ids.get(g, 0.0) + float(mass)
        params = WalkParams(mu0=ids, alpha=float(alpha), p=float(p))
        check_generates(pres, params)
        return params

    def with_values(self, **changes: Any) -> "WalkParams":
        data = {"mu0": dict(self.mu0), "alpha": self.alpha, "p": self.p}
        data.update(changes)
        return WalkParams(**data)


def check_generates(pres: HnnPresentation, params: WalkParams) -> None:
    """supp(mu0) must generate G0 as a semigroup."""
    if pres.base.is_finite:
        reach = word_metric(pres, params.mu0.keys())
        if len(reach) != len(pres.base):  # type: ignore[arg-type]
            raise InvalidParams(f"supp(mu0) reaches {len(reach)} of {len(pres.base)} elements")  # type: ignore[arg-type]
        return
    supp = list(params.mu0.keys())
    pos = [g for g in supp if g > 0]
    neg = [-g for g in supp if g < 0]
    if not pos or not neg or math.gcd(*pos, *neg) != 1:
        raise InvalidParams("supp(mu0) does not generate the integers as a semigroup")


def step_law(params: WalkParams) -> Tuple[List[Letter], np.ndarray]:
    letters: List[Letter] = sorted(params.mu0)
    probs = [params.alpha * params.mu0[g] for g in letters]
    letters += [T, T_INV]
    probs += [(1 - params.alpha) * params.p, (1 - params.alpha) * (1 - params.p)]
    weights = np.asarray(probs, dtype=float)
    return letters, weights / weights.sum()


class RegimeKind(str, Enum):
    RECURRENT = "Recurrent"
    TRANSIENT_DEGENERATE = "TransientDegenerate"
    TRANSIENT_GENERAL = "TransientGeneral"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    direction: Optional[int] = None  # +1 / -1 for the degenerate transient case

    @property
    def is_transient(self) -> bool:
        return self.kind is not RegimeKind.RECURRENT

    def tag(self) -> str:
        if self.direction is None:
            return self.kind.value
        return f"{self.kind.value}({'+' if self.direction > 0 else '-'})"


def classify_regime(pres: HnnPresentation, params: WalkParams) -> Regime:
    if not pres.is_degenerate:
        return Regime(RegimeKind.TRANSIENT_GENERAL)
    if params.p == 0.5:
        return Regime(RegimeKind.RECURRENT)
    return Regime(RegimeKind.TRANSIENT_DEGENERATE, 1 if params.p > 0.5 else -1)


# -----------------------------
# 2) randomness
# -----------------------------
def replica_rng(master_seed: int, replica: int = 0) -> np.random.Generator:
    """Counter-based stream for (master_seed, replica); independent of worker layout."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica),))
    return np.random.Generator(np.random.Philox(seq))


def sample_step(params: WalkParams, rng: np.random.Generator) -> Letter:
    letters, probs = step_law(params)
    return letters[int(rng.choice(len(letters), p=probs))]


def sample_steps(
    letters: Sequence[Letter], probs: np.ndarray, n: int, rng: np.random.Generator, chunk: int = CHUNK
) -> Iterator[Letter]:
    done = 0
    while done < n:
        size = min(chunk, n - done)
        for j in rng.choice(len(letters), size=size, p=probs).tolist():
            yield letters[j]
        done += size


# -----------------------------
# 3) trajectory state
# -----------------------------
class LevelEvent(NamedTuple):
    time: int
    level: int
    g: int
    sign: int
    h: int
    kind: int  # CREATED / DESTROYED


@dataclass
class EventLog:
    """Columnar append-only log of level creations/destructions."""

    time: array = field(default_factory=lambda: array("q"))
    level: array = field(default_factory=lambda: array("q"))
    g: array = field(default_factory=lambda: array("q"))
    sign: array = field(default_factory=lambda: array("b"))
    h: array = field(default_factory=lambda: array("q"))
    kind: array = field(default_factory=lambda: array("b"))

    def append(self, time: int, level: int, g: int, sign: int, h: int, kind: int) -> None:
        self.time.append(time)
        self.level.append(level)
        self.g.append(g)
        self.sign.append(sign)
        self.h.append(h)
        self.kind.append(kind)

    def __len__(self) -> int:
        return len(self.time)

    def __iter__(self) -> Iterator[LevelEvent]:
        for row in zip(self.time, self.level, self.g, self.sign, self.h, self.kind):
            yield LevelEvent(*row)

    def columns(self) -> Dict[str, np.ndarray]:
        return {
            "time": np.frombuffer(self.time, dtype=np.int64) if len(self) else np.zeros(0, np.int64),
            "level": np.frombuffer(self.level, dtype=np.int64) if len(self) else np.zeros(0, np.int64),
            "g": np.frombuffer(self.g, dtype=np.int64) if len(self) else np.zeros(0, np.int64),
            "sign": np.frombuffer(self.sign, dtype=np.int8) if len(self) else np.zeros(0, np.int8),
            "h": np.frombuffer(self.h, dtype=np.int64) if len(self) else np.zeros(0, np.int64),
            "kind": np.frombuffer(self.kind, dtype=np.int8) if len(self) else np.zeros(0, np.int8),
        }


@dataclass
class TrajectoryState:
    current: NormalForm
    step_count: int = 0
    depth_deltas: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    events: EventLog = field(default_factory=EventLog)
    # (n, t_length, word_length, ell_value)
    checkpoints: List[Tuple[int, int, int, float]] = field(default_factory=list)
    replica: int = 0

    @property
    def depth_log(self) -> np.ndarray:
        """t_length(X_n) for n = 0..step_count."""
        out = np.zeros(self.step_count + 1, dtype=np.int64)
        out[1:] = np.cumsum(self.depth_deltas, dtype=np.int64)
        return out

    @property
    def final_depth(self) -> int:
        return len(self.current.syllables)


def run_trajectory(
    pres: HnnPresentation,
    params: WalkParams,
    n_steps: int,
    seed: int,
    replica: int = 0,
    ell: Optional[LengthFunction] = None,
    checkpoint_every: int = 0,
) -> TrajectoryState:
    """
    (pres, params, n_steps, seed, replica)의 결정적 함수.
    """
    if n_steps < 0:
        raise InvalidParams(f"n_steps must be non-negative, got {n_steps}")
    rng = replica_rng(seed, replica)
    letters, probs = step_law(params)
    traj = replay_letters(pres, sample_steps(letters, probs, n_steps, rng), n_steps, ell, checkpoint_every)
    traj.replica = replica
    return traj


def replay_letters(
    pres: HnnPresentation,
    word: Iterable[Letter],
    n_steps: Optional[int] = None,
    ell: Optional[LengthFunction] = None,
    checkpoint_every: int = 0,
) -> TrajectoryState:
    """Trajectory of X_n driven by a given letter sequence."""
    if n_steps is None:
        word = list(word)
        n_steps = len(word)
    w = identity_form(pres)
    deltas = np.zeros(n_steps, dtype=np.int8)
    events = EventLog()
    checkpoints: List[Tuple[int, int, int, float]] = []
    syl = w.syllables

    n = 0
    for x in word:
        n += 1
        if x is T or x is T_INV:
            top = syl[-1] if syl else None
            d = push_inplace(pres, w, x)
            if d > 0:
                g, s = syl[-1]
                events.append(n, len(syl), g, s, w.trailing, CREATED)
            else:
                events.append(n, len(syl) + 1, top[0], top[1], w.trailing, DESTROYED)  # type: ignore[index]
            deltas[n - 1] = d
        else:
            push_inplace(pres, w, x)
        if checkpoint_every and n % checkpoint_every == 0 and n != n_steps:
            checkpoints.append(_checkpoint(pres, w, n, ell))

    if n_steps:
        checkpoints.append(_checkpoint(pres, w, n_steps, ell))
    return TrajectoryState(
        current=w,
        step_count=n_steps,
        depth_deltas=deltas,
        events=events,
        checkpoints=checkpoints,
    )


def _checkpoint(pres: HnnPresentation, w: NormalForm, n: int, ell: Optional[LengthFunction]) -> Tuple[int, int, int, float]:
    return n, len(w.syllables), word_length(pres, w), (eval_length(ell, w) if ell is not None else float("nan"))


def replay_depth(traj: TrajectoryState) -> np.ndarray:
    """Depth log rebuilt from the event log alone."""
    cols = traj.events.columns()
    steps = np.zeros(traj.step_count + 1, dtype=np.int64)
    np.add.at(steps, cols["time"], cols["kind"].astype(np.int64))
    return np.cumsum(steps)


def signed_depth_log(traj: TrajectoryState) -> np.ndarray:
    """
    psi(X_n) for A = B = G0: every syllable then carries the sign of the first one,
    so psi = depth * (sign of the live level-1 syllable).
    """
    depth = traj.depth_log
    cols = traj.events.columns()
    first = (cols["level"] == 1) & (cols["kind"] == CREATED)
    times = cols["time"][first]
    signs = cols["sign"][first].astype(np.int64)
    sign_at = np.zeros(traj.step_count + 1, dtype=np.int64)
    if times.size:
        pos = np.searchsorted(times, np.arange(traj.step_count + 1), side="right") - 1
        ok = pos >= 0
        sign_at[ok] = signs[pos[ok]]
    return depth * sign_at


def signed_depth(w: NormalForm) -> int:
    if not w.syllables:
        return 0
    return len(w.syllables) * w.syllables[0][1]


def advance_until_base(
    pres: HnnPresentation,
    letters: Sequence[Letter],
    probs: np.ndarray,
    w: NormalForm,
    rng: np.random.Generator,
    steps: int,
    chunk: int = 1024,
) -> int:
    """Advance ``w`` in place by at most ``steps`` letters; stops at the first return to G0."""
    if not w.syllables:
        return 0
    n = 0
    for x in sample_steps(letters, probs, steps, rng, chunk):
        n += 1
        push_inplace(pres, w, x)
        if not w.syllables:
            return n
    return -1


def run_from(
    pres: HnnPresentation,
    params: WalkParams,
    start: NormalForm,
    rng: np.random.Generator,
    horizon: int,
) -> Tuple[NormalForm, int]:
    """
    Walk from ``start`` until the t-length returns to 0 or ``horizon`` steps pass.
    Returns (final state, hitting time or -1 when it survives).
    """
    letters, probs = step_law(params)
    w = start.copy()
    return w, advance_until_base(pres, letters, probs, w, rng, horizon)
