"""Weighted model counting and the top-k partial losses.

A candidate set of label vectors becomes a positive DNF formula over
variables "position i carries label y"; the probability that independent
Bernoulli draws with the classifier's scores satisfy the formula (its
weighted model count) turns the formula into a differentiable loss,
``-log WMC``.  Counting is exact: inclusion-exclusion over the disjuncts for
the few-disjunct formulas the losses produce, with a brute-force
interpretation sum as second route for cross-checking and for many-disjunct
formulas over few variables.

Setting ``CROSS_CHECK = True`` makes every count run both routes and assert
agreement to 1e-12; tests flip it on.
"""

from __future__ import annotations

import math
import itertools
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .transitions import Transition

WEIGHT_EPS = 1e-12  # weights live in [WEIGHT_EPS, 1 - WEIGHT_EPS]
WMC_FLOOR = 1e-300  # counts are clamped here before the log
MAX_IE_DISJUNCTS = 20
MAX_ENUM_VARIABLES = 22
_IE_DIRECT_LIMIT = 12  # below this, enumerate subsets directly

CROSS_CHECK = False


class LabelVariable(NamedTuple):
    """The atom "instance at ``position`` (1-based) has label ``label``."""

    position: int
    label: int

    def __str__(self) -> str:
        return f"A[{self.position},{self.label}]"


@dataclass(frozen=True)
class DnfFormula:
    """Positive disjunctive normal form over label variables.

    ``exclusive`` conjoins exactly-one-label-per-position constraints; the
    count then runs over complete label choices instead of free
    interpretations.
    """

    disjuncts: tuple[frozenset[LabelVariable], ...]
    exclusive: bool = False

    def __post_init__(self):
        if not self.disjuncts:
            raise ValueError("a formula needs at least one disjunct")
        if len(set(self.disjuncts)) != len(self.disjuncts):
            raise ValueError("disjuncts must be distinct")

    def variables(self) -> list[LabelVariable]:
        """Distinct variables in first-occurrence order (within a disjunct: sorted)."""
        seen: dict[LabelVariable, None] = {}
        for conj in self.disjuncts:
            for var in sorted(conj):
                seen.setdefault(var)
        return list(seen)

    def __str__(self) -> str:
        parts = [
            "(" + " & ".join(str(v) for v in sorted(conj)) + ")"
            for conj in self.disjuncts
        ]
        return " | ".join(parts)


def formula_from_vectors(vectors, exclusive: bool = False) -> DnfFormula:
    """One conjunction per label vector, in input order.

    Each vector contributes the full assignment "position i has label v_i",
    so every disjunct covers all positions.
    """
    vectors = [tuple(int(y) for y in v) for v in vectors]
    if not vectors:
        raise ValueError("no label vectors given")
    arity = len(vectors[0])
    disjuncts = []
    for v in vectors:
        if len(v) != arity:
            raise ValueError(f"vector {v} does not match arity {arity}")
        disjuncts.append(
            frozenset(LabelVariable(i + 1, y) for i, y in enumerate(v))
        )
    return DnfFormula(tuple(disjuncts), exclusive=exclusive)


def _clamp_weight(p: float) -> float:
    return min(max(float(p), WEIGHT_EPS), 1.0 - WEIGHT_EPS)


class WeightAssignment:
    """Per-variable Bernoulli weights, clamped inside the open unit interval."""

    def __init__(self, weights: Mapping):
        self._w: dict[LabelVariable, float] = {}
        for key, p in weights.items():
            var = key if isinstance(key, LabelVariable) else LabelVariable(*key)
            self._w[var] = _clamp_weight(p)

    @classmethod
    def from_scores(cls, rows: Sequence) -> "WeightAssignment":
        """Weights from per-position score rows; row i feeds position i+1."""
        w = {}
        for i, row in enumerate(rows):
            for y, p in enumerate(np.asarray(row, dtype=np.float64)):
                w[LabelVariable(i + 1, y)] = p
        return cls(w)

    def weight(self, var: LabelVariable) -> float:
        try:
            return self._w[var]
        except KeyError:
            raise ValueError(f"no weight for variable {var}") from None

    def rows(self) -> dict[int, list[int]]:
        """Known labels per position, sorted; the exclusive-count universe."""
        out: dict[int, list[int]] = {}
        for var in self._w:
            out.setdefault(var.position, []).append(var.label)
        return {pos: sorted(labels) for pos, labels in sorted(out.items())}

    def __len__(self) -> int:
        return len(self._w)


# --- counting ----------------------------------------------------------------


def _compile(phi: DnfFormula, w: WeightAssignment):
    """Map the formula onto bitmasks plus a clamped weight vector."""
    variables = phi.variables()
    index = {var: i for i, var in enumerate(variables)}
    weights = [w.weight(var) for var in variables]
    masks = []
    for conj in phi.disjuncts:
        mask = 0
        for var in conj:
            mask |= 1 << index[var]
        masks.append(mask)
    return variables, masks, weights


def _mask_product(mask: int, weights: list[float]) -> float:
    p = 1.0
    while mask:
        p *= weights[(mask & -mask).bit_length() - 1]
        mask &= mask - 1
    return p


def _ie_terms(masks: list[int]):
    """Inclusion-exclusion as (union mask, integer coefficient) pairs."""
    k = len(masks)
    if k <= _IE_DIRECT_LIMIT:
        unions = [0] * (1 << k)
        for t in range(1, 1 << k):
            low = t & -t
            unions[t] = unions[t ^ low] | masks[low.bit_length() - 1]
            yield unions[t], (1 if t.bit_count() % 2 else -1)
        return
    # many disjuncts: identical unions collapse, keeping the term list short
    coeffs: dict[int, int] = {}
    for m in masks:
        add = {m: 1}
        for u, cu in coeffs.items():
            key = u | m
            add[key] = add.get(key, 0) - cu
        for u, cu in add.items():
            nc = coeffs.get(u, 0) + cu
            if nc:
                coeffs[u] = nc
            else:
                coeffs.pop(u, None)
    yield from coeffs.items()


def _ie_value(masks: list[int], weights: list[float]) -> float:
    value = 0.0
    for mask, coef in _ie_terms(masks):
        value += coef * _mask_product(mask, weights)
    return value


def _enum_value(masks: list[int], weights: list[float]) -> float:
    n = len(weights)
    if n > MAX_ENUM_VARIABLES:
        raise ValueError(f"{n} variables exceed the enumeration cap")
    idx = np.arange(1 << n, dtype=np.int64)
    sat = np.zeros(1 << n, dtype=bool)
    for m in masks:
        sat |= (idx & m) == m
    probs = np.ones(1 << n, dtype=np.float64)
    for v, wv in enumerate(weights):
        bit = (idx >> v) & 1
        probs *= np.where(bit == 1, wv, 1.0 - wv)
    return float(probs[sat].sum())


def _exclusive_value(phi: DnfFormula, w: WeightAssignment) -> float:
    """Count only interpretations with exactly one true label per position.

    The position universe comes from the weight assignment's rows, so score-
    sourced weights quantify over the full label alphabet.  Interpretation
    mass stays the independent-Bernoulli product.
    """
    rows = w.rows()
    for var in phi.variables():
        w.weight(var)  # missing-weight errors surface first
        if var.label not in rows.get(var.position, []):
            raise ValueError(f"no weight for variable {var}")
    positions = sorted(rows)
    combos = 1
    for pos in positions:
        combos *= len(rows[pos])
        if combos > 10**6:
            raise ValueError("exclusive count universe too large")
    disjuncts = [
        {var.position: var.label for var in conj} for conj in phi.disjuncts
    ]
    value = 0.0
    for choice in itertools.product(*(rows[pos] for pos in positions)):
        chosen = dict(zip(positions, choice))
        if not any(
            all(chosen.get(pos) == lab for pos, lab in conj.items())
            for conj in disjuncts
        ):
            continue
        mass = 1.0
        for pos in positions:
            for label in rows[pos]:
                p = w.weight(LabelVariable(pos, label))
                mass *= p if label == chosen[pos] else 1.0 - p
        value += mass
    return value


def wmc(phi: DnfFormula, w: WeightAssignment, method: str = "auto") -> float:
    """Probability that weighted independent draws satisfy the formula.

    ``method`` picks the route: "ie" (inclusion-exclusion over disjuncts,
    up to 20), "enumerate" (interpretation sum, up to 22 variables), or
    "auto" which prefers "ie" and falls back to "enumerate".
    """
    if phi.exclusive:
        return min(max(_exclusive_value(phi, w), 0.0), 1.0)
    _, masks, weights = _compile(phi, w)
    k, n = len(masks), len(weights)
    if method == "auto":
        method = "ie" if k <= MAX_IE_DISJUNCTS else "enumerate"
        if method == "enumerate" and n > MAX_ENUM_VARIABLES:
            raise ValueError(
                f"{k} disjuncts over {n} variables exceed both counting caps"
            )
    if method == "ie":
        if k > MAX_IE_DISJUNCTS:
            raise ValueError(f"{k} disjuncts exceed the inclusion-exclusion cap")
        value = _ie_value(masks, weights)
        if CROSS_CHECK and n <= MAX_ENUM_VARIABLES:
            other = _enum_value(masks, weights)
            assert abs(value - other) <= 1e-12, (value, other)
    elif method == "enumerate":
        value = _enum_value(masks, weights)
        if CROSS_CHECK and k <= MAX_IE_DISJUNCTS:
            other = _ie_value(masks, weights)
            assert abs(value - other) <= 1e-12, (value, other)
    else:
        raise ValueError(f"unknown method {method!r}")
    return min(max(value, 0.0), 1.0)


def semantic_loss(phi: DnfFormula, w: WeightAssignment) -> float:
    """Negative log model count, clamped so the log always exists."""
    return -math.log(min(max(wmc(phi, w), WMC_FLOOR), 1.0))


# --- gradients ----------------------------------------------------------------


@dataclass
class DualScalar:
    """A value with forward-mode partials for each weight it touched."""

    value: float
    wrt: tuple[LabelVariable, ...]
    grad: np.ndarray

    def neg_log(self) -> "DualScalar":
        """Chain -log through the clamp; flat outside the clamp window."""
        v = min(max(self.value, WMC_FLOOR), 1.0)
        inside = WMC_FLOOR <= self.value <= 1.0
        scale = -1.0 / v if inside else 0.0
        return DualScalar(-math.log(v), self.wrt, self.grad * scale)


def _grad_terms(masks: list[int], weights: list[float]) -> tuple[float, np.ndarray]:
    value = 0.0
    grad = np.zeros(len(weights))
    for mask, coef in _ie_terms(masks):
        p = coef * _mask_product(mask, weights)
        value += p
        mm = mask
        while mm:
            v = (mm & -mm).bit_length() - 1
            grad[v] += p / weights[v]
            mm &= mm - 1
    return value, grad


def _grad_enum(masks: list[int], weights: list[float]) -> tuple[float, np.ndarray]:
    # d wmc / d w_v = wmc(phi | v true) - wmc(phi | v false)
    n = len(weights)
    idx = np.arange(1 << n, dtype=np.int64)
    sat = np.zeros(1 << n, dtype=bool)
    for m in masks:
        sat |= (idx & m) == m
    probs = np.ones(1 << n, dtype=np.float64)
    for v, wv in enumerate(weights):
        probs *= np.where((idx >> v) & 1 == 1, wv, 1.0 - wv)
    grad = np.zeros(n)
    value = float(probs[sat].sum())
    for v, wv in enumerate(weights):
        on = sat & (((idx >> v) & 1) == 1)
        off = sat & ~(((idx >> v) & 1) == 1)
        grad[v] = float(probs[on].sum()) / wv - float(probs[off].sum()) / (1.0 - wv)
    return value, grad


def wmc_dual(phi: DnfFormula, w: WeightAssignment) -> DualScalar:
    """Model count with exact partials for every variable in the formula."""
    if phi.exclusive:
        raise ValueError("gradients are provided for the unconstrained count")
    variables, masks, weights = _compile(phi, w)
    if len(masks) <= MAX_IE_DISJUNCTS:
        value, grad = _grad_terms(masks, weights)
    elif len(weights) <= MAX_ENUM_VARIABLES:
        value, grad = _grad_enum(masks, weights)
    else:
        raise ValueError("formula exceeds both counting caps")
    return DualScalar(value, tuple(variables), grad)


# --- top-k losses --------------------------------------------------------------


def _score_rows(scores, t: Transition) -> list[np.ndarray]:
    rows = [np.asarray(row, dtype=np.float64) for row in scores]
    sizes = t.sizes
    if len(rows) != len(sizes):
        raise ValueError(f"expected {len(sizes)} score rows, got {len(rows)}")
    for i, (row, c) in enumerate(zip(rows, sizes)):
        if row.shape != (c,):
            raise ValueError(f"score row {i} has shape {row.shape}, expected ({c},)")
    return rows


def _preimage(t: Transition, s: int) -> np.ndarray:
    try:
        return t.preimages[int(s)]
    except KeyError:
        raise ValueError(f"partial label {s} is never produced by {t.name or 'σ'}")


def topk_select(scores, t: Transition, s: int, k: int) -> list[tuple[int, ...]]:
    """The k preimage vectors of s with the largest score products.

    Scores multiply across positions; exact ties fall back to lexicographic
    vector order.  Fewer than k vectors are returned only when the preimage
    is smaller than k.
    """
    if k < 1:
        raise ValueError("k must be positive")
    rows = _score_rows(scores, t)
    pre = _preimage(t, s)
    probs = np.ones(len(pre), dtype=np.float64)
    for i, row in enumerate(rows):
        probs *= row[pre[:, i].astype(np.int64)]
    order = np.argsort(-probs, kind="stable")[:k]  # stable keeps lex order on ties
    return [tuple(int(y) for y in pre[j]) for j in order]


def topk_partial_loss(
    scores, t: Transition, s: int, k: int, exclusive: bool = False
) -> float:
    """Semantic loss of the top-k candidate formula for observation s."""
    vectors = topk_select(scores, t, s, k)
    phi = formula_from_vectors(vectors, exclusive=exclusive)
    return semantic_loss(phi, WeightAssignment.from_scores(_score_rows(scores, t)))


def topk_l1_loss(scores, t: Transition, s: int, k: int) -> float:
    """One minus the top-k model count; bounded companion of the log loss."""
    vectors = topk_select(scores, t, s, k)
    phi = formula_from_vectors(vectors)
    return 1.0 - wmc(phi, WeightAssignment.from_scores(_score_rows(scores, t)))


def zero_one_partial_loss(prediction, t: Transition, s: int) -> int:
    """1 when the predicted label vector maps to a different partial label."""
    return int(t.apply(prediction) != int(s))


def grad_topk_loss(scores, t: Transition, s: int, k: int) -> list[np.ndarray]:
    """Exact gradient of the top-k loss in every (position, label) score entry.

    Returns one array per position, shaped like the score rows; entries whose
    variable does not appear in the selected formula are zero.
    """
    rows = _score_rows(scores, t)
    vectors = topk_select(rows, t, s, k)
    phi = formula_from_vectors(vectors)
    dual = wmc_dual(phi, WeightAssignment.from_scores(rows)).neg_log()
    grads = [np.zeros_like(row) for row in rows]
    for var, g in zip(dual.wrt, dual.grad):
        grads[var.position - 1][var.label] = g
    return grads


# --- trainer fast path ---------------------------------------------------------


def _count_and_grad_pairs(rows, vectors) -> tuple[float, list[tuple[int, int, float]]]:
    """Raw count plus sparse (position, label, d count/d score) entries.

    ``vectors`` are preselected top-k label rows; weights come straight from
    the 0-based score rows with the standard clamp.  Positions here are
    0-based row indices, unlike the public LabelVariable convention.
    """
    index: dict[tuple[int, int], int] = {}
    weights: list[float] = []
    masks = []
    for vec in vectors:
        mask = 0
        for i, y in enumerate(vec):
            key = (i, int(y))
            pos = index.get(key)
            if pos is None:
                pos = index[key] = len(weights)
                weights.append(_clamp_weight(rows[i][int(y)]))
            mask |= 1 << pos
        masks.append(mask)
    value, grad = _grad_terms(masks, weights)
    value = min(max(value, 0.0), 1.0)
    pairs = [(i, y, grad[j]) for (i, y), j in index.items()]
    return value, pairs
