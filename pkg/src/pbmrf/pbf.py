"""Sparse pseudo-Boolean polynomials on dense interaction families.

A pseudo-Boolean function f: {0,1}^n -> R is stored as a multilinear
polynomial

    f(x) = sum over interaction sets L of  beta[L] * prod_{k in L} x_k,

where each interaction set L is a strictly increasing tuple of variable
indices.  The family S of stored sets is always *dense*: whenever L is
stored, every subset of L is stored too (possibly with a zero
coefficient).  Density is what makes the closed-form approximation
operators in :mod:`pbmrf.approx` valid, so every constructor and
operation in this module preserves it.

Besides the coefficient map, a function keeps explicit DAG links from
each set to its one-element-larger supersets, so subset-family queries
clip out the relevant subgraph instead of scanning all of S.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DENSE_TABLE_CAP",
    "PRUNE_TOL",
    "InteractionSet",
    "ResourceCapError",
    "interaction_set",
    "DenseLocalFunction",
    "PseudoBooleanFunction",
    "evaluate",
    "evaluate_many",
    "values_from_interactions",
    "interactions_from_values",
    "add_scaled",
    "scale",
    "extract_subset_family",
    "to_json",
    "from_json",
    "zeta_transform",
    "moebius_transform",
]

# Largest m for which a dense 2^m value table may be materialised.
DENSE_TABLE_CAP = 25

# Coefficients below this magnitude are dropped when no superset survives.
PRUNE_TOL = 1e-12

# An interaction set: strictly increasing tuple of 0-based variable indices.
# The empty tuple is the constant term.
InteractionSet = tuple[int, ...]


class ResourceCapError(RuntimeError):
    """An operation would materialise a table beyond the 2^25-entry cap."""


def interaction_set(indices) -> InteractionSet:
    """Canonicalise ``indices`` into a strictly increasing tuple.

    Raises ValueError on duplicates or negative indices.
    """
    t = tuple(sorted(indices))
    if any(i < 0 for i in t):
        raise ValueError(f"negative variable index in {t}")
    if any(t[k] == t[k + 1] for k in range(len(t) - 1)):
        raise ValueError(f"duplicate variable index in {t}")
    return t


def _check_table_size(m: int, context: str) -> None:
    if m > DENSE_TABLE_CAP:
        raise ResourceCapError(
            f"{context}: table over {m} variables needs 2^{m} entries, "
            f"cap is 2^{DENSE_TABLE_CAP}"
        )


def zeta_transform(weights: np.ndarray) -> np.ndarray:
    """Subset sums over the Boolean lattice.

    ``out[mask] = sum of weights[sub] over sub subseteq mask`` where bit k
    of the index is the value of the k-th variable.  In place over a copy,
    O(m 2^m).
    """
    v = np.array(weights, dtype=float)
    size = v.size
    if size & (size - 1):
        raise ValueError(f"table length {size} is not a power of two")
    step = 1
    while step < size:
        v = v.reshape(-1, 2 * step)
        v[:, step:] += v[:, :step]
        step *= 2
    return v.reshape(size)


def moebius_transform(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`zeta_transform`.

    Recovers the unique interaction coefficients reproducing ``values``:
    ``out[mask] = sum over sub subseteq mask of (-1)^(|mask|-|sub|) values[sub]``.
    """
    v = np.array(values, dtype=float)
    size = v.size
    if size & (size - 1):
        raise ValueError(f"table length {size} is not a power of two")
    step = 1
    while step < size:
        v = v.reshape(-1, 2 * step)
        v[:, step:] -= v[:, :step]
        step *= 2
    return v.reshape(size)


@dataclass(frozen=True)
class DenseLocalFunction:
    """All 2^m values of a function of m listed binary variables.

    ``values[idx]`` is the function value at the assignment where bit k of
    ``idx`` gives the value of ``variables[k]``.  The bit convention is
    fixed so serialized tables are portable.
    """

    variables: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        variables = tuple(int(v) for v in self.variables)
        if len(set(variables)) != len(variables):
            raise ValueError(f"duplicate variables in {variables}")
        m = len(variables)
        _check_table_size(m, "DenseLocalFunction")
        values = np.asarray(self.values, dtype=float).reshape(-1).copy()
        if values.size != 1 << m:
            raise ValueError(
                f"table for {m} variables needs {1 << m} values, got {values.size}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return len(self.variables)


class PseudoBooleanFunction:
    """A pseudo-Boolean function on a dense interaction family.

    Immutable after construction; safe to read from many threads.  The
    constructor takes any mapping/iterable of ``(indices, beta)`` pairs,
    adds the subset closure, and prunes negligible leaf coefficients.

    Attributes:
        n: number of binary variables (indices run 0..n-1).
    """

    __slots__ = ("n", "_beta", "_children")

    def __init__(self, n: int, terms=None, *, prune: bool = True):
        if n < 0:
            raise ValueError(f"variable count must be >= 0, got {n}")
        self.n = int(n)
        beta: dict[InteractionSet, float] = {}
        items = terms.items() if hasattr(terms, "items") else (terms or ())
        for raw, value in items:
            key = interaction_set(raw)
            if key and key[-1] >= self.n:
                raise ValueError(f"interaction {key} out of range for n={self.n}")
            beta[key] = beta.get(key, 0.0) + float(value)
        # Dense closure: every subset of a stored set is stored.
        stack = list(beta)
        while stack:
            key = stack.pop()
            for k in range(len(key)):
                sub = key[:k] + key[k + 1 :]
                if sub not in beta:
                    beta[sub] = 0.0
                    stack.append(sub)
        beta.setdefault((), 0.0)
        if prune:
            _prune_inplace(beta)
        self._beta = beta
        # DAG links: children of L are the stored sets L ∪ {i}.
        children: dict[InteractionSet, list[InteractionSet]] = {k: [] for k in beta}
        for key in beta:
            for k in range(len(key)):
                children[key[:k] + key[k + 1 :]].append(key)
        self._children = {k: tuple(sorted(v)) for k, v in children.items()}

    # -- queries ---------------------------------------------------------

    def beta(self, indices) -> float:
        """Coefficient of the given interaction set (0.0 if absent)."""
        return self._beta.get(interaction_set(indices), 0.0)

    def __contains__(self, indices) -> bool:
        return interaction_set(indices) in self._beta

    def terms(self) -> dict[InteractionSet, float]:
        """A copy of the coefficient map (includes closure zeros)."""
        return dict(self._beta)

    def interaction_sets(self) -> list[InteractionSet]:
        """All stored sets, sorted by (size, lexicographic)."""
        return sorted(self._beta, key=lambda s: (len(s), s))

    def children(self, indices) -> tuple[InteractionSet, ...]:
        """DAG links: stored supersets of the set with one extra index."""
        return self._children.get(interaction_set(indices), ())

    def variables(self) -> list[int]:
        """Sorted indices actually mentioned by some stored set."""
        seen: set[int] = set()
        for key in self._beta:
            seen.update(key)
        return sorted(seen)

    def degree(self) -> int:
        return max((len(k) for k in self._beta), default=0)

    def __len__(self) -> int:
        return len(self._beta)

    def __repr__(self) -> str:
        return f"PseudoBooleanFunction(n={self.n}, sets={len(self._beta)})"


def _prune_inplace(beta: dict[InteractionSet, float]) -> None:
    """Drop sets with |beta| < PRUNE_TOL and no surviving superset.

    Processing by decreasing size keeps the family dense: a set is kept
    whenever a kept superset needs it.  The constant term always stays.
    """
    needed: set[InteractionSet] = set()
    for key in sorted(beta, key=len, reverse=True):
        if not key:
            continue
        if key in needed or abs(beta[key]) >= PRUNE_TOL:
            for k in range(len(key)):
                needed.add(key[:k] + key[k + 1 :])
        else:
            del beta[key]


# -- evaluation and transforms -----------------------------------------


def evaluate(f: PseudoBooleanFunction, x) -> float:
    """Evaluate f at a single binary vector of length n."""
    x = np.asarray(x)
    if x.shape != (f.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({f.n},)")
    total = 0.0
    for key, b in f._beta.items():
        if b != 0.0 and all(x[k] for k in key):
            total += b
    return total


def evaluate_many(f: PseudoBooleanFunction, states: np.ndarray) -> np.ndarray:
    """Evaluate f at each row of a (count, n) 0/1 array."""
    states = np.asarray(states)
    if states.ndim != 2 or states.shape[1] != f.n:
        raise ValueError(f"states have shape {states.shape}, expected (*, {f.n})")
    out = np.zeros(states.shape[0])
    for key, b in f._beta.items():
        if b == 0.0:
            continue
        if key:
            out += b * states[:, key].prod(axis=1)
        else:
            out += b
    return out


def values_from_interactions(
    f: PseudoBooleanFunction, variables=None
) -> DenseLocalFunction:
    """Tabulate f over all assignments of the listed variables.

    ``variables`` defaults to the variables f actually mentions.  It is an
    error for f to mention a variable not listed.
    """
    mentioned = f.variables()
    if variables is None:
        variables = mentioned
    variables = tuple(int(v) for v in variables)
    position = {v: k for k, v in enumerate(variables)}
    if len(position) != len(variables):
        raise ValueError(f"duplicate variables in {variables}")
    missing = [v for v in mentioned if v not in position]
    if missing:
        raise ValueError(f"function mentions unlisted variables {missing}")
    m = len(variables)
    _check_table_size(m, "values_from_interactions")
    weights = np.zeros(1 << m)
    for key, b in f._beta.items():
        mask = 0
        for v in key:
            mask |= 1 << position[v]
        weights[mask] += b
    return DenseLocalFunction(variables, zeta_transform(weights))


def interactions_from_values(
    table: DenseLocalFunction, n: int | None = None
) -> PseudoBooleanFunction:
    """The unique coefficient set reproducing every table entry.

    Inverse of :func:`values_from_interactions`.  ``n`` defaults to one
    past the largest listed variable.
    """
    variables = table.variables
    if n is None:
        n = max(variables) + 1 if variables else 0
    coeffs = moebius_transform(table.values)
    terms: dict[InteractionSet, float] = {}
    for mask, value in enumerate(coeffs):
        key = interaction_set(v for k, v in enumerate(variables) if mask >> k & 1)
        terms[key] = terms.get(key, 0.0) + value
    return PseudoBooleanFunction(n, terms)


def add_scaled(
    f: PseudoBooleanFunction, g: PseudoBooleanFunction, a: float, b: float
) -> PseudoBooleanFunction:
    """The function a*f + b*g on the dense closure of both families."""
    if f.n != g.n:
        raise ValueError(f"dimension mismatch: {f.n} vs {g.n}")
    terms = {key: a * value for key, value in f._beta.items()}
    for key, value in g._beta.items():
        terms[key] = terms.get(key, 0.0) + b * value
    return PseudoBooleanFunction(f.n, terms)


def scale(f: PseudoBooleanFunction, a: float) -> PseudoBooleanFunction:
    """The function a*f."""
    return PseudoBooleanFunction(f.n, {k: a * v for k, v in f._beta.items()})


def extract_subset_family(
    f: PseudoBooleanFunction, lam, mode: str
) -> list[tuple[InteractionSet, float]]:
    """Subset-family query on the stored sets.

    mode "containing" returns {L in S : lam subseteq L} by clipping the DAG
    subgraph rooted at lam; "complement" returns S minus that family;
    "disjoint" returns {L in S : lam and L share no index}.  Pairs come
    back sorted by (size, lexicographic).
    """
    lam = interaction_set(lam)
    if mode == "containing":
        if lam not in f._beta:
            return []
        found: set[InteractionSet] = set()
        stack = [lam]
        while stack:
            key = stack.pop()
            if key in found:
                continue
            found.add(key)
            stack.extend(f._children[key])
        keys = found
    elif mode == "complement":
        lamset = set(lam)
        keys = {k for k in f._beta if not lamset.issubset(k)}
    elif mode == "disjoint":
        lamset = set(lam)
        keys = {k for k in f._beta if lamset.isdisjoint(k)}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return [(k, f._beta[k]) for k in sorted(keys, key=lambda s: (len(s), s))]


# -- serialization -------------------------------------------------------


def _fmt(x: float) -> str:
    """Reals printed with 17 significant digits (round-trip safe)."""
    return f"{float(x):.17g}"


def to_json(f: PseudoBooleanFunction) -> str:
    """Serialize with terms sorted by (size, lexicographic indices)."""
    parts = [f'{{"n": {f.n}, "terms": [']
    rows = []
    for key in f.interaction_sets():
        rows.append(f'{{"set": {list(key)}, "beta": {_fmt(f._beta[key])}}}')
    parts.append(", ".join(rows))
    parts.append("]}")
    return "".join(parts)


def from_json(text: str) -> PseudoBooleanFunction:
    doc = json.loads(text)
    terms = {tuple(entry["set"]): float(entry["beta"]) for entry in doc["terms"]}
    return PseudoBooleanFunction(int(doc["n"]), terms, prune=False)
