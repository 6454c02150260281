"""Variable elimination over pseudo-Boolean energies.

One elimination step splits the energy into the part touching the chosen
variable and the rest, folds the touching part over the variable's two
values (log-sum-exp for partition sums, max for Viterbi), and converts
the folded table back into interaction coefficients.  The cost of a step
is 2^eta for the variable's current neighbour count eta, so exact
elimination dies once neighbourhoods grow past the dense-table cap.

Three tactics keep eta at a user cap nu: before summing a variable whose
neighbourhood is too large, interactions linking it to a chosen partner
are removed either by the least-squares SOIR update (approximate mode)
or by a one-sided clamp bound (bound modes, giving certified lower/upper
log normalising constants).  Partners, and pivots for bound splitting,
are picked by the truncated worst-case error score of
:func:`pbmrf.approx.fstar_scores`.

As a by-product each step can record the variable's conditional
distribution, yielding a partially ordered Markov model: either before
the cap-forcing removals (closest to the target) or after them (every
dependency set is at most nu, so conditional normalisation stays cheap).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .approx import (
    bound_removal_updates,
    fstar_choice,
    fstar_scores,
    soir_removal_updates,
)
from .pbf import (
    DENSE_TABLE_CAP,
    InteractionSet,
    PseudoBooleanFunction,
    ResourceCapError,
    add_scaled,
    moebius_transform,
    zeta_transform,
)
from .pomm import PartiallyOrderedMarkovModel, PommConditional

__all__ = [
    "MODES",
    "MARGINALS",
    "POMM_VARIANTS",
    "EliminationConfig",
    "StepDiagnostics",
    "EliminationResult",
    "eliminate",
    "eliminate_exact_sum",
    "eliminate_approx",
    "eliminate_bound",
    "eliminate_max",
    "moment",
]

logger = logging.getLogger(__name__)

MODES = ("exact", "approximate", "lower_bound", "upper_bound")
MARGINALS = ("sum", "max")
POMM_VARIANTS = ("none", "pre_approximation", "post_approximation")


@dataclass(frozen=True)
class EliminationConfig:
    """How to run one elimination.

    ``nu`` caps the neighbourhood size in the non-exact modes (exact mode
    ignores it).  ``order`` is the elimination order, defaulting to the
    natural (row-major) node order.  ``table_cap`` limits the clamp
    canonicalisation tables in bound modes and defaults to nu.
    """

    mode: str = "exact"
    marginal: str = "sum"
    nu: int | None = None
    order: tuple[int, ...] | None = None
    pomm_variant: str = "none"
    table_cap: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.marginal not in MARGINALS:
            raise ValueError(f"unknown marginal {self.marginal!r}")
        if self.pomm_variant not in POMM_VARIANTS:
            raise ValueError(f"unknown pomm_variant {self.pomm_variant!r}")
        if self.nu is not None:
            object.__setattr__(self, "nu", int(self.nu))
        if self.mode != "exact" and (self.nu is None or self.nu < 1):
            raise ValueError(f"mode {self.mode!r} needs nu >= 1, got {self.nu}")
        if self.table_cap is not None:
            object.__setattr__(self, "table_cap", int(self.table_cap))
            if self.table_cap < 0:
                raise ValueError(f"table_cap must be >= 0, got {self.table_cap}")
            if self.table_cap > DENSE_TABLE_CAP:
                raise ResourceCapError(
                    f"table_cap {self.table_cap} exceeds the dense-table "
                    f"cap {DENSE_TABLE_CAP}"
                )
        if self.pomm_variant != "none" and self.marginal != "sum":
            raise ValueError("a POMM can only be recorded under the sum marginal")
        if self.order is not None:
            object.__setattr__(self, "order", tuple(int(v) for v in self.order))


@dataclass(frozen=True)
class StepDiagnostics:
    """What happened while eliminating one variable."""

    variable: int
    eta_before: int
    eta_after: int
    partners: tuple[int, ...] = ()
    fallback_partners: int = 0
    splits: int = 0


@dataclass(frozen=True)
class EliminationResult:
    """Outcome of one elimination run.

    ``log_value`` is ln of the computed quantity: the partition sum (or
    its bound) under the sum marginal, max_x exp{U(x)} under max.
    ``argmax`` is filled by the max marginal's backward pass.
    """

    log_value: float
    mode: str
    marginal: str
    nu: int | None
    argmax: np.ndarray | None = None
    pomm: PartiallyOrderedMarkovModel | None = None
    per_step: tuple[StepDiagnostics, ...] = ()

    def eta_trace(self) -> tuple[int, ...]:
        return tuple(step.eta_after for step in self.per_step)

    def to_json(self) -> str:
        nu = "null" if self.nu is None else str(self.nu)
        trace = ", ".join(str(e) for e in self.eta_trace())
        return (
            f'{{"mode": "{self.mode}", "marginal": "{self.marginal}", '
            f'"nu": {nu}, "log_value": {self.log_value:.17g}, '
            f'"eta_trace": [{trace}]}}'
        )


# -- mutable working state ---------------------------------------------------


class _TermStore:
    """Dense coefficient map with a per-variable membership index."""

    __slots__ = ("beta", "by_var")

    def __init__(self, terms: dict[InteractionSet, float]):
        self.beta = dict(terms)
        self.beta.setdefault((), 0.0)
        self.by_var: dict[int, set[InteractionSet]] = {}
        for key in self.beta:
            for v in key:
                self.by_var.setdefault(v, set()).add(key)

    def neighbours(self, i: int) -> list[int]:
        seen: set[int] = set()
        for key in self.by_var.get(i, ()):
            seen.update(key)
        seen.discard(i)
        return sorted(seen)

    def supersets(self, base: InteractionSet) -> list[tuple[InteractionSet, float]]:
        pools = [self.by_var.get(v, set()) for v in base]
        if not base:
            keys = list(self.beta)
        elif any(not pool for pool in pools):
            return []
        else:
            smallest = min(pools, key=len)
            baseset = set(base)
            keys = [k for k in smallest if baseset.issubset(k)]
        return sorted((k, self.beta[k]) for k in keys)

    def pop(self, key: InteractionSet) -> float:
        value = self.beta.pop(key)
        for v in key:
            self.by_var[v].discard(key)
        return value

    def add(self, key: InteractionSet, delta: float) -> None:
        if key in self.beta:
            self.beta[key] += delta
            return
        # New set: insert its full subset closure to keep the family dense.
        stack = [key]
        while stack:
            k = stack.pop()
            if k in self.beta:
                continue
            self.beta[k] = 0.0
            for v in k:
                self.by_var.setdefault(v, set()).add(k)
            for t in range(len(k)):
                stack.append(k[:t] + k[t + 1 :])
        self.beta[key] += delta

    def prune(self) -> None:
        # Only structurally dead sets (exact zeros with no surviving
        # superset) are dropped.  Discarding small-but-nonzero
        # coefficients would perturb the energy and void the bound
        # certificates at the same magnitude, so unlike public polynomial
        # arithmetic the engine never rounds mass away.
        needed: set[InteractionSet] = set()
        for key in sorted(self.beta, key=len, reverse=True):
            if not key:
                continue
            if key in needed or self.beta[key] != 0.0:
                for t in range(len(key)):
                    needed.add(key[:t] + key[t + 1 :])
            else:
                del self.beta[key]
                for v in key:
                    self.by_var[v].discard(key)


def _local_table(
    store: _TermStore, i: int, context: str
) -> tuple[list[int], np.ndarray]:
    """Tabulate the part of the energy touching variable i at x_i = 1.

    Returns the sorted neighbour list V and the table of
    sum over sets containing i of beta * prod_{k in set, k != i} x_k,
    indexed with bit t = value of V[t].
    """
    members = store.supersets((i,))
    extras = sorted({v for key, _ in members for v in key if v != i})
    if len(extras) > DENSE_TABLE_CAP:
        raise ResourceCapError(
            f"{context}: neighbourhood size {len(extras)} of variable {i} "
            f"exceeds the dense-table cap {DENSE_TABLE_CAP}"
        )
    position = {v: t for t, v in enumerate(extras)}
    weights = np.zeros(1 << len(extras))
    for key, b in members:
        mask = 0
        for v in key:
            if v != i:
                mask |= 1 << position[v]
        weights[mask] += b
    return extras, zeta_transform(weights)


def _expit(h: np.ndarray) -> np.ndarray:
    out = np.empty_like(h)
    pos = h >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-h[pos]))
    ez = np.exp(h[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _energy_of(target) -> PseudoBooleanFunction:
    if isinstance(target, PseudoBooleanFunction):
        return target
    energy = getattr(target, "energy", None)
    if isinstance(energy, PseudoBooleanFunction):
        return energy
    raise TypeError(f"expected an MRF or PseudoBooleanFunction, got {type(target)!r}")


# -- the engine ---------------------------------------------------------------


def eliminate(target, cfg: EliminationConfig) -> EliminationResult:
    """Run variable elimination on an MRF or a raw energy polynomial."""
    energy = _energy_of(target)
    n = energy.n
    order = cfg.order if cfg.order is not None else tuple(range(n))
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of all variable indices")

    store = _TermStore(energy.terms())
    approximating = cfg.mode != "exact"
    direction = {"lower_bound": "lower", "upper_bound": "upper"}.get(cfg.mode)
    table_cap = cfg.table_cap if cfg.table_cap is not None else cfg.nu
    summing = cfg.marginal == "sum"

    conditionals: list[PommConditional] = []
    max_records: list[tuple[int, list[int], np.ndarray]] = []
    steps: list[StepDiagnostics] = []

    for step_no, i in enumerate(order):
        eta_before = len(store.neighbours(i))
        if cfg.pomm_variant == "pre_approximation":
            conditionals.append(_capture_conditional(store, i, step_no))

        partners: list[int] = []
        fallbacks = 0
        splits = 0
        if approximating:
            neighbours = store.neighbours(i)
            while len(neighbours) > cfg.nu:
                members_i = store.supersets((i,))
                scores = fstar_scores((i,), neighbours, members_i)
                j = min(neighbours, key=lambda r: (scores[r], r))
                if max(scores.values()) == 0.0:
                    fallbacks += 1
                    logger.debug(
                        "step %d: truncated error score vanished for every "
                        "partner of %d; falling back to smallest index %d",
                        step_no,
                        i,
                        j,
                    )
                pair_sets = store.supersets(tuple(sorted((i, j))))
                if cfg.mode == "approximate":
                    updates = soir_removal_updates(pair_sets, i, j)
                else:
                    updates, n_splits = bound_removal_updates(
                        pair_sets, i, j, direction, table_cap, fstar_choice
                    )
                    splits += n_splits
                for key, _ in pair_sets:
                    store.pop(key)
                for key, delta in sorted(updates.items()):
                    store.add(key, delta)
                partners.append(j)
                neighbours = store.neighbours(i)
            if len(neighbours) > cfg.nu:
                raise RuntimeError(
                    f"internal error: eta {len(neighbours)} > nu {cfg.nu} "
                    f"after forced removals at step {step_no}"
                )

        if cfg.pomm_variant == "post_approximation":
            conditionals.append(_capture_conditional(store, i, step_no))

        extras, h = _local_table(store, i, f"step {step_no}")
        eta_after = len(extras)
        for key, _ in store.supersets((i,)):
            store.pop(key)
        if summing:
            folded = np.logaddexp(0.0, h)
        else:
            max_records.append((i, extras, h))
            folded = np.maximum(0.0, h)
        coeffs = moebius_transform(folded)
        for mask in range(coeffs.size):
            key = tuple(v for t, v in enumerate(extras) if mask >> t & 1)
            store.add(key, coeffs[mask])
        store.prune()
        steps.append(
            StepDiagnostics(
                variable=i,
                eta_before=eta_before,
                eta_after=eta_after,
                partners=tuple(partners),
                fallback_partners=fallbacks,
                splits=splits,
            )
        )

    leftovers = [k for k in store.beta if k]
    if leftovers:
        raise RuntimeError(f"internal error: sets {leftovers} survived elimination")
    log_value = store.beta.get((), 0.0)

    argmax = None
    if not summing:
        argmax = np.zeros(n, dtype=np.uint8)
        for i, extras, h in reversed(max_records):
            mask = 0
            for t, v in enumerate(extras):
                mask |= int(argmax[v]) << t
            argmax[i] = 1 if h[mask] > 0.0 else 0

    pomm = None
    if cfg.pomm_variant != "none":
        pomm = PartiallyOrderedMarkovModel(n, tuple(conditionals))

    return EliminationResult(
        log_value=float(log_value),
        mode=cfg.mode,
        marginal=cfg.marginal,
        nu=cfg.nu,
        argmax=argmax,
        pomm=pomm,
        per_step=tuple(steps),
    )


def _capture_conditional(store: _TermStore, i: int, step_no: int) -> PommConditional:
    extras, h = _local_table(store, i, f"POMM capture at step {step_no}")
    return PommConditional(i, tuple(extras), _expit(h))


# -- public entry points --------------------------------------------------------


def _require(cfg: EliminationConfig, modes: tuple[str, ...], marginal: str) -> None:
    if cfg.mode not in modes or cfg.marginal != marginal:
        raise ValueError(
            f"configuration ({cfg.mode}, {cfg.marginal}) not valid here; "
            f"expected mode in {modes} with marginal {marginal!r}"
        )


def eliminate_exact_sum(target, cfg: EliminationConfig | None = None) -> EliminationResult:
    """ln of the partition sum, exactly."""
    cfg = cfg or EliminationConfig()
    _require(cfg, ("exact",), "sum")
    return eliminate(target, cfg)


def eliminate_approx(target, cfg: EliminationConfig) -> EliminationResult:
    """ln of the approximate partition sum under the neighbourhood cap."""
    _require(cfg, ("approximate",), "sum")
    return eliminate(target, cfg)


def eliminate_bound(target, cfg: EliminationConfig) -> EliminationResult:
    """A certified lower or upper bound on ln of the partition sum."""
    _require(cfg, ("lower_bound", "upper_bound"), "sum")
    return eliminate(target, cfg)


def eliminate_max(target, cfg: EliminationConfig) -> EliminationResult:
    """max_x U(x) (exact, approximate, or bounded) plus a maximising state."""
    if cfg.marginal != "max":
        raise ValueError("eliminate_max needs the max marginal")
    return eliminate(target, cfg)


def moment(target, log_psi: PseudoBooleanFunction, cfg: EliminationConfig):
    """E{psi(x)} for psi given through its logarithm as a polynomial.

    Two elimination runs: one on U + ln(psi), one on U, and the moment is
    the exponentiated difference.  In the bound modes the result is the
    certified interval (divide the lower sum by the upper constant and
    vice versa).
    """
    if cfg.marginal != "sum":
        raise ValueError("moments need the sum marginal")
    energy = _energy_of(target)
    tilted = add_scaled(energy, log_psi, 1.0, 1.0)
    base = replace(cfg, pomm_variant="none")
    if cfg.mode in ("exact", "approximate"):
        num = eliminate(tilted, base).log_value
        den = eliminate(energy, base).log_value
        return float(np.exp(num - den))
    lo_cfg = replace(base, mode="lower_bound")
    hi_cfg = replace(base, mode="upper_bound")
    lower = np.exp(
        eliminate(tilted, lo_cfg).log_value - eliminate(energy, hi_cfg).log_value
    )
    upper = np.exp(
        eliminate(tilted, hi_cfg).log_value - eliminate(energy, lo_cfg).log_value
    )
    return float(lower), float(upper)
