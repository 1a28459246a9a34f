"""Base groups, HNN presentations and normal-form arithmetic.

Elements of the base group are dense small integers internally; the group
specification names them and the names are mapped on load. The stable letter
and its inverse are the two members of ``Stable``.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import (
    InvalidParams,
    NotAGroupTable,
    NotAnIsomorphism,
    NotASubgroup,
    TrivialityViolation,
    UnknownLetter,
)

logger = logging.getLogger(__name__)


class Stable(Enum):
    T = 1
    T_INV = -1

    @property
    def sign(self) -> int:
        return self.value

    def inverse(self) -> "Stable":
        return Stable.T_INV if self is Stable.T else Stable.T


T = Stable.T
T_INV = Stable.T_INV

Letter = Union[int, Stable]
Syllable = Tuple[int, int]  # (g, sign)

T_NAMES = {"t": T, "t^-1": T_INV, "t^{-1}": T_INV, "t⁻¹": T_INV}


# -----------------------------
# 1) base groups
# -----------------------------
class BaseGroup:
    identity: int = 0
    is_finite: bool = True

    def mul(self, g: int, h: int) -> int:
        raise NotImplementedError

    def inv(self, g: int) -> int:
        raise NotImplementedError

    def name(self, g: int) -> str:
        raise NotImplementedError

    def lookup(self, name: str) -> int:
        raise NotImplementedError

    def contains(self, g: Any) -> bool:
        raise NotImplementedError


class FiniteTableGroup(BaseGroup):
    """
    Cayley table on dense ids. ``elements[i]`` is the human-readable name of id i.
    """

    is_finite = True

    def __init__(self, elements: Sequence[str], table: Sequence[Sequence[int]], identity: int):
        self.elements = list(elements)
        self.table = [list(row) for row in table]
        self.identity = identity
        self._index = {name: i for i, name in enumerate(self.elements)}
        self._inv = [self._find_inverse(g) for g in range(len(self.elements))]

    @classmethod
    def from_names(cls, elements: Sequence[str], identity: str, table: Sequence[Sequence[str]]) -> "FiniteTableGroup":
        names = [str(e) for e in elements]
        if len(set(names)) != len(names):
            raise NotAGroupTable("duplicate element names")
        index = {name: i for i, name in enumerate(names)}
        if str(identity) not in index:
            raise NotAGroupTable(f"identity {identity!r} is not an element")
        n = len(names)
        if len(table) != n or any(len(row) != n for row in table):
            raise NotAGroupTable(f"table must be {n}x{n}")
        ids: List[List[int]] = []
        for row in table:
            out = []
            for entry in row:
                if str(entry) not in index:
                    raise NotAGroupTable(f"table entry {entry!r} is not an element")
                out.append(index[str(entry)])
            ids.append(out)
        check_group_table(ids, index[str(identity)])
        return cls(names, ids, index[str(identity)])

    def __len__(self) -> int:
        return len(self.elements)

    def _find_inverse(self, g: int) -> int:
        row = self.table[g]
        for h, gh in enumerate(row):
            if gh == self.identity:
                return h
        raise NotAGroupTable(f"{self.elements[g]} has no inverse")

    def mul(self, g: int, h: int) -> int:
        return self.table[g][h]

    def inv(self, g: int) -> int:
        return self._inv[g]

    def name(self, g: int) -> str:
        return self.elements[g]

    def lookup(self, name: str) -> int:
        if name not in self._index:
            raise UnknownLetter(f"Unknown letter: {name}")
        return self._index[name]

    def contains(self, g: Any) -> bool:
        return isinstance(g, (int, np.integer)) and not isinstance(g, bool) and 0 <= g < len(self.elements)

    def has_name(self, name: str) -> bool:
        return name in self._index

    def ids(self) -> range:
        return range(len(self.elements))


class IntegerGroup(BaseGroup):
    """The integers under addition; ids are the integers themselves."""

    is_finite = False
    identity = 0

    def mul(self, g: int, h: int) -> int:
        return g + h

    def inv(self, g: int) -> int:
        return -g

    def name(self, g: int) -> str:
        return str(g)

    def lookup(self, name: str) -> int:
        try:
            return int(name)
        except (TypeError, ValueError):
            raise UnknownLetter(f"Unknown letter: {name}") from None

    def contains(self, g: Any) -> bool:
        return isinstance(g, (int, np.integer)) and not isinstance(g, bool)


def check_group_table(table: Sequence[Sequence[int]], identity: int) -> None:
    """Exhaustive identity, inverse and associativity check; raises NotAGroupTable."""
    t = np.asarray(table, dtype=np.int64)
    n = t.shape[0]
    idx = np.arange(n)
    if not (np.array_equal(t[identity], idx) and np.array_equal(t[:, identity], idx)):
        raise NotAGroupTable("identity law fails")
    # latin square <=> two-sided inverses exist and cancellation holds
    for i in range(n):
        if len(set(t[i].tolist())) != n or len(set(t[:, i].tolist())) != n:
            raise NotAGroupTable("table is not a latin square")
    left = t[t]  # left[i, j, k] = (i*j)*k
    right = t[idx[:, None, None], t[None, :, :]]  # right[i, j, k] = i*(j*k)
    bad = np.argwhere(left != right)
    if bad.size:
        i, j, k = bad[0].tolist()
        raise NotAGroupTable(f"associativity fails on ({i}, {j}, {k})")


# -----------------------------
# 2) presentation
# -----------------------------
@dataclass(frozen=True, eq=False)
class HnnPresentation:
    base: BaseGroup
    A: FrozenSet[int]
    B: FrozenSet[int]
    phi: Dict[int, int]
    phi_inv: Dict[int, int]
    X: Tuple[int, ...]
    Y: Tuple[int, ...]
    # g -> (representative, subgroup remainder); empty for the integers base
    coset_index_A: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    coset_index_B: Dict[int, Tuple[int, int]] = field(default_factory=dict)

    @property
    def identity(self) -> int:
        return self.base.identity

    @property
    def is_degenerate(self) -> bool:
        if not self.base.is_finite:
            return False
        n = len(self.base)  # type: ignore[arg-type]
        return len(self.A) == n and len(self.B) == n

    def split_A(self, g: int) -> Tuple[int, int]:
        if self.coset_index_A:
            return self.coset_index_A[g]
        return g, self.base.identity

    def split_B(self, g: int) -> Tuple[int, int]:
        if self.coset_index_B:
            return self.coset_index_B[g]
        return g, self.base.identity

    def elements(self) -> List[int]:
        if not self.base.is_finite:
            raise InvalidParams("the integers base has no finite element list")
        return list(self.base.ids())  # type: ignore[attr-defined]


def _bfs_order(group: FiniteTableGroup, generators: Sequence[int]) -> List[int]:
    seen = {group.identity}
    order = [group.identity]
    queue = deque([group.identity])
    while queue:
        g = queue.popleft()
        for s in generators:
            h = group.mul(g, s)
            if h not in seen:
                seen.add(h)
                order.append(h)
                queue.append(h)
    # 생성되지 않은 원소는 원래 순서대로 뒤에 붙임 (WalkParams 검증에서 걸러짐)
    order.extend(g for g in group.ids() if g not in seen)
    return order


def _check_subgroup(group: FiniteTableGroup, H: FrozenSet[int], label: str) -> None:
    if group.identity not in H:
        raise NotASubgroup(f"{label} does not contain the identity")
    for a, b in product(H, repeat=2):
        if group.mul(a, group.inv(b)) not in H:
            raise NotASubgroup(f"{label} is not closed: {group.name(a)}*{group.name(b)}^-1")


def _coset_index(group: FiniteTableGroup, H: FrozenSet[int], order: Sequence[int]) -> Tuple[Tuple[int, ...], Dict[int, Tuple[int, int]]]:
    reps: List[int] = []
    index: Dict[int, Tuple[int, int]] = {}
    for g in order:
        if g in index:
            continue
        reps.append(g)
        for h in H:
            index[group.mul(g, h)] = (g, h)
    return tuple(reps), index


def validate_presentation(spec: Dict[str, Any], generators: Optional[Iterable[str]] = None) -> HnnPresentation:
    """
    Build and check a presentation from the raw group specification.

    Coset representatives are the first element of each left coset met in
    breadth-first order from the identity over ``generators`` taken in element
    order (the support of mu0 when the spec carries one, else every element),
    so the key order of mu0 in a document does not matter.
    """
    base_spec = spec.get("base_group") or {}
    kind = base_spec.get("kind", "finite_table")
    A_names = [str(x) for x in spec.get("subgroup_A", [])]
    B_names = [str(x) for x in spec.get("subgroup_B", [])]
    phi_names = {str(k): str(v) for k, v in (spec.get("phi") or {}).items()}

    if kind == "integers":
        group = IntegerGroup()
        A = frozenset(group.lookup(x) for x in A_names) or frozenset({0})
        B = frozenset(group.lookup(x) for x in B_names) or frozenset({0})
        if A != {0} or B != {0}:
            raise TrivialityViolation("the integers base only admits A = B = {0}")
        if any(group.lookup(k) != 0 or group.lookup(v) != 0 for k, v in phi_names.items()):
            raise NotAnIsomorphism("phi must map 0 to 0")
        return HnnPresentation(base=group, A=A, B=B, phi={0: 0}, phi_inv={0: 0}, X=(0,), Y=(0,))

    if kind != "finite_table":
        raise NotAGroupTable(f"unknown base group kind: {kind}")

    group = FiniteTableGroup.from_names(base_spec.get("elements", []), base_spec.get("identity", ""), base_spec.get("table", []))

    def _ids(names: List[str], label: str) -> FrozenSet[int]:
        try:
            return frozenset(group.lookup(x) for x in names)
        except UnknownLetter as e:
            raise NotASubgroup(f"{label}: {e}") from None

    A = _ids(A_names, "A")
    B = _ids(B_names, "B")
    _check_subgroup(group, A, "A")
    _check_subgroup(group, B, "B")
    if len(A) != len(B):
        raise NotAnIsomorphism(f"|A| = {len(A)} but |B| = {len(B)}")

    phi: Dict[int, int] = {}
    for k, v in phi_names.items():
        if not group.has_name(k) or group.lookup(k) not in A:
            raise NotAnIsomorphism(f"phi is defined on {k}, which is not in A")
        if not group.has_name(v) or group.lookup(v) not in B:
            raise NotAnIsomorphism(f"phi({k}) = {v} is not in B")
        phi[group.lookup(k)] = group.lookup(v)
    # phi(e0) = e0 may be left implicit
    phi.setdefault(group.identity, group.identity)
    if set(phi) != set(A):
        missing = [group.name(a) for a in A if a not in phi]
        raise NotAnIsomorphism(f"phi is undefined on {missing}")
    if len(set(phi.values())) != len(phi):
        raise NotAnIsomorphism("phi is not injective")
    for a1, a2 in product(A, repeat=2):
        if phi[group.mul(a1, a2)] != group.mul(phi[a1], phi[a2]):
            raise NotAnIsomorphism(f"phi({group.name(a1)}*{group.name(a2)}) != phi({group.name(a1)})*phi({group.name(a2)})")
    phi_inv = {b: a for a, b in phi.items()}

    gens = sorted({group.lookup(str(g)) for g in generators}) if generators is not None else list(group.ids())
    order = _bfs_order(group, gens)
    X, index_A = _coset_index(group, A, order)
    Y, index_B = _coset_index(group, B, order)
    logger.debug("presentation: |G0|=%d |A|=%d X=%s Y=%s", len(group), len(A), X, Y)
    return HnnPresentation(
        base=group, A=A, B=B, phi=phi, phi_inv=phi_inv, X=X, Y=Y,
        coset_index_A=index_A, coset_index_B=index_B,
    )


# -----------------------------
# 3) normal forms
# -----------------------------
@dataclass
class NormalForm:
    syllables: List[Syllable] = field(default_factory=list)
    trailing: int = 0

    def copy(self) -> "NormalForm":
        return NormalForm(list(self.syllables), self.trailing)

    def key(self) -> Tuple[Tuple[Syllable, ...], int]:
        return tuple(self.syllables), self.trailing


def identity_form(pres: HnnPresentation) -> NormalForm:
    return NormalForm([], pres.identity)


def push_inplace(pres: HnnPresentation, w: NormalForm, x: Letter) -> int:
    """Right-multiply ``w`` by one letter in place; returns the t-length change."""
    base = pres.base
    if x is T:
        g, a = pres.split_A(w.trailing)
        syl = w.syllables
        if g == base.identity and syl and syl[-1][1] == -1:
            g_prev, _ = syl.pop()
            w.trailing = base.mul(g_prev, pres.phi[a])
            return -1
        syl.append((g, 1))
        w.trailing = pres.phi[a]
        return 1
    if x is T_INV:
        g, b = pres.split_B(w.trailing)
        syl = w.syllables
        if g == base.identity and syl and syl[-1][1] == 1:
            g_prev, _ = syl.pop()
            w.trailing = base.mul(g_prev, pres.phi_inv[b])
            return -1
        syl.append((g, -1))
        w.trailing = pres.phi_inv[b]
        return 1
    w.trailing = base.mul(w.trailing, x)
    return 0


def push_letter(pres: HnnPresentation, w: NormalForm, x: Letter) -> NormalForm:
    out = w.copy()
    push_inplace(pres, out, x)
    return out


def to_letter(pres: HnnPresentation, x: Union[Letter, str]) -> Letter:
    if isinstance(x, Stable):
        return x
    if isinstance(x, str):
        if x in T_NAMES:
            return T_NAMES[x]
        return pres.base.lookup(x)
    if pres.base.contains(x):
        return int(x)
    raise UnknownLetter(f"Unknown letter: {x!r}")


def parse_letters(pres: HnnPresentation, text: Union[str, Sequence[str]]) -> List[Letter]:
    tokens = text.split() if isinstance(text, str) else list(text)
    return [to_letter(pres, tok) for tok in tokens]


def normalize(pres: HnnPresentation, word: Iterable[Union[Letter, str]]) -> NormalForm:
    w = identity_form(pres)
    for x in word:
        push_inplace(pres, w, to_letter(pres, x))
    return w


def inverse_letters(pres: HnnPresentation, word: Sequence[Letter]) -> List[Letter]:
    out: List[Letter] = []
    for x in reversed(word):
        out.append(x.inverse() if isinstance(x, Stable) else pres.base.inv(x))
    return out


def letters_of(w: NormalForm) -> List[Letter]:
    out: List[Letter] = []
    for g, s in w.syllables:
        out.append(g)
        out.append(T if s == 1 else T_INV)
    out.append(w.trailing)
    return out


def t_length(w: NormalForm) -> int:
    return len(w.syllables)


def word_length(pres: HnnPresentation, w: NormalForm) -> int:
    return 2 * len(w.syllables) + (0 if w.trailing == pres.identity else 1)


def strip_trailing(pres: HnnPresentation, w: NormalForm) -> NormalForm:
    return NormalForm(list(w.syllables), pres.identity)


def format_normal_form(pres: HnnPresentation, w: NormalForm) -> str:
    parts: List[str] = []
    for g, s in w.syllables:
        parts.append(pres.base.name(g))
        parts.append("t" if s == 1 else "t^-1")
    parts.append(pres.base.name(w.trailing))
    return " ".join(parts)


def validate_normal_form(pres: HnnPresentation, w: NormalForm) -> List[str]:
    """Returns the list of violated invariants (empty when ``w`` is a normal form)."""
    problems: List[str] = []
    e = pres.identity
    X, Y = set(pres.X), set(pres.Y)
    for i, (g, s) in enumerate(w.syllables):
        if s not in (1, -1):
            problems.append(f"syllable {i}: sign {s}")
            continue
        if pres.base.is_finite:
            if s == 1 and g not in X:
                problems.append(f"syllable {i}: {pres.base.name(g)} not in X")
            if s == -1 and g not in Y:
                problems.append(f"syllable {i}: {pres.base.name(g)} not in Y")
        if i >= 1 and g == e and s == -w.syllables[i - 1][1]:
            problems.append(f"syllable {i}: cancelling pair")
    if not pres.base.contains(w.trailing):
        problems.append("trailing element is not in the base group")
    return problems


def relator_variant(pres: HnnPresentation, word: Sequence[Letter], rng: np.random.Generator, moves: int = 4) -> List[Letter]:
    """
    Random rewriting of ``word`` by relator moves; the result represents the same element.
    """
    base = pres.base
    out = list(word)
    A = sorted(pres.A)
    B = sorted(pres.B)
    for _ in range(moves):
        kind = int(rng.integers(0, 5))
        pos = int(rng.integers(0, len(out) + 1))
        if kind == 0:
            out[pos:pos] = [T, T_INV] if rng.random() < 0.5 else [T_INV, T]
        elif kind == 1:
            # a t phi(a)^-1 t^-1 = e
            a = A[int(rng.integers(0, len(A)))]
            out[pos:pos] = [a, T, base.inv(pres.phi[a]), T_INV]
        elif kind == 2:
            # b t^-1 phi^-1(b)^-1 t = e
            b = B[int(rng.integers(0, len(B)))]
            out[pos:pos] = [b, T_INV, base.inv(pres.phi_inv[b]), T]
        elif kind == 3:
            # a t -> t phi(a), b t^-1 -> t^-1 phi^-1(b)
            for i in range(len(out) - 1):
                x, y = out[i], out[i + 1]
                if isinstance(x, Stable):
                    continue
                if y is T and x in pres.A:
                    out[i:i + 2] = [T, pres.phi[x]]
                    break
                if y is T_INV and x in pres.B:
                    out[i:i + 2] = [T_INV, pres.phi_inv[x]]
                    break
        else:
            # g -> h (h^-1 g)
            if base.is_finite:
                h = int(rng.integers(0, len(base)))  # type: ignore[arg-type]
            else:
                h = int(rng.integers(-3, 4))
            g = out[pos] if pos < len(out) and not isinstance(out[pos], Stable) else base.identity
            replace = 1 if pos < len(out) and not isinstance(out[pos], Stable) else 0
            out[pos:pos + replace] = [h, base.mul(base.inv(h), g)]
    return out


# -----------------------------
# 4) length functions
# -----------------------------
@dataclass(frozen=True)
class LengthFunction:
    values_g0: Dict[int, float]
    value_t: float
    value_t_inv: float
    default_g0: float = 0.0
    growth_bound: Optional[Tuple[float, int]] = None
    kind: str = "table"

    def __post_init__(self):
        weights = list(self.values_g0.values()) + [self.value_t, self.value_t_inv, self.default_g0]
        if any(v < 0 or math.isnan(v) for v in weights):
            raise InvalidParams("length function weights must be non-negative")
        if self.growth_bound is not None:
            C, kappa = self.growth_bound
            if C <= 0 or int(kappa) != kappa or kappa <= 0:
                raise InvalidParams("growth bound needs C > 0 and a positive integer kappa")

    def g0(self, g: int) -> float:
        return self.values_g0.get(g, self.default_g0)

    def stable(self, sign: int) -> float:
        return self.value_t if sign == 1 else self.value_t_inv

    def syllable(self, g: int, sign: int) -> float:
        return self.values_g0.get(g, self.default_g0) + (self.value_t if sign == 1 else self.value_t_inv)

    def scaled(self, c: float) -> "LengthFunction":
        return LengthFunction(
            values_g0={g: c * v for g, v in self.values_g0.items()},
            value_t=c * self.value_t,
            value_t_inv=c * self.value_t_inv,
            default_g0=c * self.default_g0,
            kind=self.kind,
        )

    def is_zero(self) -> bool:
        return self.value_t == 0 and self.value_t_inv == 0 and self.default_g0 == 0 and not any(self.values_g0.values())


def eval_length(ell: LengthFunction, w: NormalForm) -> float:
    total = 0.0
    for g, s in w.syllables:
        total += ell.syllable(g, s)
    return total + ell.g0(w.trailing)


def unit_length(pres: HnnPresentation) -> LengthFunction:
    vals = {g: 1.0 for g in pres.elements()} if pres.base.is_finite else {}
    return LengthFunction(vals, 1.0, 1.0, default_g0=1.0, kind="unit")


def t_only_length() -> LengthFunction:
    return LengthFunction({}, 1.0, 1.0, kind="t_only")


def table_length(pres: HnnPresentation, values: Dict[str, float], t: float = 1.0, t_inv: float = 1.0) -> LengthFunction:
    vals = {pres.base.lookup(str(k)): float(v) for k, v in values.items()}
    return LengthFunction(vals, float(t), float(t_inv), kind="table")


def word_metric(pres: HnnPresentation, generators: Iterable[int]) -> Dict[int, int]:
    """BFS distance |g| from the identity w.r.t. right multiplication by ``generators``."""
    if not pres.base.is_finite:
        raise InvalidParams("word metric is only computed for finite base groups")
    base = pres.base
    gens = list(generators)
    dist = {base.identity: 0}
    queue = deque([base.identity])
    while queue:
        g = queue.popleft()
        for s in gens:
            h = base.mul(g, s)
            if h not in dist:
                dist[h] = dist[g] + 1
                queue.append(h)
    return dist


def word_metric_length(pres: HnnPresentation, generators: Iterable[int]) -> LengthFunction:
    dist = word_metric(pres, generators)
    return LengthFunction({g: float(d) for g, d in dist.items()}, 1.0, 1.0, kind="word")


def check_growth_bound(ell: LengthFunction, pres: HnnPresentation, generators: Iterable[int]) -> List[int]:
    """Elements violating l(g) <= C*|g|^kappa (empty list when the bound holds or is absent)."""
    if ell.growth_bound is None:
        return []
    C, kappa = ell.growth_bound
    dist = word_metric(pres, generators)
    return [g for g, d in dist.items() if ell.g0(g) > C * d ** int(kappa) + 1e-12]
