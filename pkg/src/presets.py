# src/presets.py
"""Ready-made group specifications (same JSON shape as config/experiments/*.json)."""
from itertools import product
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np


def table_from_func(elements: Sequence[Any], mult: Callable[[Any, Any], Any], names: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    names = [str(e) for e in elements] if names is None else list(names)
    index = {e: i for i, e in enumerate(elements)}
    table = [[names[index[mult(a, b)]] for b in elements] for a in elements]
    return {"kind": "finite_table", "elements": names, "identity": names[0], "table": table}


def cyclic_group(n: int) -> Dict[str, Any]:
    names = ["e"] + [f"r{i}" for i in range(1, n)]
    return table_from_func(list(range(n)), lambda a, b: (a + b) % n, names)


def abelian_product(orders: Sequence[int]) -> Dict[str, Any]:
    elements = list(product(*[range(n) for n in orders]))

    def mult(a, b):
        return tuple((x + y) % n for x, y, n in zip(a, b, orders))

    names = ["e" if not any(e) else "_".join(str(x) for x in e) for e in elements]
    return table_from_func(elements, mult, names)


def dihedral_group(n: int) -> Dict[str, Any]:
    """D_n of order 2n as pairs (i, j) = r^i s^j."""
    elements = [(i, j) for j in (0, 1) for i in range(n)]

    def mult(a, b):
        i1, j1 = a
        i2, j2 = b
        return ((i1 + (i2 if j1 == 0 else -i2)) % n, (j1 + j2) % 2)

    names = ["e" if e == (0, 0) else f"r{e[0]}" + ("s" if e[1] else "") for e in elements]
    return table_from_func(elements, mult, names)


def klein_four() -> Dict[str, Any]:
    elements = [(0, 0), (1, 0), (0, 1), (1, 1)]
    names = ["e", "a", "b", "ab"]
    return table_from_func(elements, lambda x, y: ((x[0] + y[0]) % 2, (x[1] + y[1]) % 2), names)


def klein_example(alpha: float = 0.5, p: float = 0.5) -> Dict[str, Any]:
    """Z/2 x Z/2 with A = {e, a}, B = {e, b}, phi(a) = b."""
    return {
        "base_group": klein_four(),
        "subgroup_A": ["e", "a"],
        "subgroup_B": ["e", "b"],
        "phi": {"e": "e", "a": "b"},
        "mu0": {"a": 0.5, "b": 0.5},
        "alpha": alpha,
        "p": p,
    }


def degenerate_example(alpha: float = 0.5, p: float = 0.8) -> Dict[str, Any]:
    """A = B = G0 on the Klein four group, phi swapping a and b."""
    return {
        "base_group": klein_four(),
        "subgroup_A": ["e", "a", "b", "ab"],
        "subgroup_B": ["e", "a", "b", "ab"],
        "phi": {"e": "e", "a": "b", "b": "a", "ab": "ab"},
        "mu0": {"a": 0.5, "b": 0.5},
        "alpha": alpha,
        "p": p,
    }


def integers_example(alpha: float = 0.5, p: float = 0.5) -> Dict[str, Any]:
    return {
        "base_group": {"kind": "integers"},
        "subgroup_A": ["0"],
        "subgroup_B": ["0"],
        "phi": {"0": "0"},
        "mu0": {"1": 0.5, "-1": 0.5},
        "alpha": alpha,
        "p": p,
    }


def _cyclic_subgroup(table: List[List[int]], identity: int, g: int) -> List[int]:
    out = [identity]
    x = g
    while x != identity:
        out.append(x)
        x = table[x][g]
    return out


def random_presentation(rng: np.random.Generator, max_order: int = 24) -> Dict[str, Any]:
    """
    Random finite presentation with cyclic associated subgroups A = <g>, B = <h>, phi(g^k) = h^k.
    """
    candidates: List[Dict[str, Any]] = []
    for n in range(2, max_order + 1):
        candidates.append(cyclic_group(n))
    for n in range(3, max_order // 2 + 1):
        candidates.append(dihedral_group(n))
    for m, n in [(2, 2), (2, 4), (2, 6), (3, 3), (2, 8), (3, 6), (4, 4), (2, 10), (2, 12)]:
        if m * n <= max_order:
            candidates.append(abelian_product([m, n]))
    base = candidates[int(rng.integers(0, len(candidates)))]

    names = base["elements"]
    index = {x: i for i, x in enumerate(names)}
    table = [[index[x] for x in row] for row in base["table"]]
    identity = index[base["identity"]]

    # 같은 차수의 원소 쌍을 골라 순환 부분군끼리 대응시킴
    cyclic = {g: _cyclic_subgroup(table, identity, g) for g in range(len(names))}
    g = int(rng.integers(0, len(names)))
    same_order = [h for h in range(len(names)) if len(cyclic[h]) == len(cyclic[g])]
    h = same_order[int(rng.integers(0, len(same_order)))]
    A, B = cyclic[g], cyclic[h]
    phi = {names[A[k]]: names[B[k]] for k in range(len(A))}

    # mu0: every element, random positive masses
    masses = rng.random(len(names)) + 0.1
    masses = masses / masses.sum()
    return {
        "base_group": base,
        "subgroup_A": [names[x] for x in A],
        "subgroup_B": [names[x] for x in B],
        "phi": phi,
        "mu0": {names[i]: float(masses[i]) for i in range(len(names))},
        "alpha": float(rng.uniform(0.2, 0.8)),
        "p": float(rng.uniform(0.2, 0.8)),
    }


