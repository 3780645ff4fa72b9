"""Learnability diagnostics for transitions.

Whether hidden labels can be recovered from weak ones hinges on how sensitive
the transition is to label changes.  This module hosts exhaustive checkers for
the standard conditions (diagonal injectivity, single-position sensitivity,
index-set sensitivity, the block variant for multiple classifiers, and
distinguishability inside a candidate family), the two ambiguity degrees, and
per-position transition matrices with a numeric invertibility test.

Checkers never sample: they sweep the full table and report a deterministic
witness on failure.  Witnesses are the lexicographically smallest
counterexample so failures reproduce bit-for-bit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .transitions import Transition, TransitionSpace

WORK_CAP = 10**8  # table cells a single check may touch


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one condition check.

    ``witness`` is a condition-specific counterexample that can be re-verified
    with direct table lookups; ``witness_index`` is the qualifying position
    for single-position sensitivity.
    """

    verdict: bool
    witness: tuple | None = None
    witness_index: int | None = None

    def __bool__(self) -> bool:
        return self.verdict


def _single_block(t: Transition):
    if len(t.blocks) != 1:
        raise ValueError("this condition is defined for single-classifier transitions")
    return t.blocks[0][1]


def _diagonal_images(t: Transition) -> np.ndarray:
    c = _single_block(t).size
    diagonals = np.tile(np.arange(c, dtype=np.int64)[:, None], (1, t.arity))
    return t.apply_batch(diagonals)


def check_M_unambiguous(t: Transition) -> CheckReport:
    """True iff the transition is injective on diagonal label vectors.

    On failure the witness is the smallest pair ((l,..,l), (l',..,l')) of
    diagonals sharing an image, ordered l < l'.
    """
    images = _diagonal_images(t)
    first_seen: dict[int, int] = {}
    collisions = []
    for label, s in enumerate(images):
        s = int(s)
        if s in first_seen:
            collisions.append((first_seen[s], label))
        else:
            first_seen[s] = label
    if not collisions:
        return CheckReport(True)
    l0, l1 = min(collisions)
    m = t.arity
    return CheckReport(False, witness=((l0,) * m, (l1,) * m))


def check_1_unambiguous(t: Transition) -> CheckReport:
    """True iff some position is flip-sensitive everywhere.

    A position i qualifies when changing only the i-th label always changes
    the partial label.  ``witness_index`` reports the first qualifying i
    (1-based).  When no position qualifies the witness is the smallest
    (y, y', i) with equal images under a flip at i.
    """
    space = _single_block(t)
    c = space.size
    m = t.arity
    if t.table.size * c > WORK_CAP:
        raise ValueError("transition too large for the flip sweep")
    table_nd = t.table.reshape(t.sizes)
    best: tuple | None = None
    for i in range(m):
        rows = np.moveaxis(table_nd, i, -1).reshape(-1, c)
        order = np.argsort(rows, axis=1, kind="stable")
        srt = np.take_along_axis(rows, order, axis=1)
        dup_any = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
        if not dup_any.any():
            return CheckReport(True, witness_index=i + 1)
        other_sizes = t.sizes[:i] + t.sizes[i + 1 :]
        for ctx in np.nonzero(dup_any)[0]:
            pair = None
            row_order = order[ctx]
            row_srt = srt[ctx]
            for j in range(1, c):
                if row_srt[j] == row_srt[j - 1]:
                    cand = (int(row_order[j - 1]), int(row_order[j]))
                    if pair is None or cand < pair:
                        pair = cand
            rest = np.unravel_index(int(ctx), other_sizes) if other_sizes else ()
            rest = [int(x) for x in rest]
            y = tuple(rest[:i] + [pair[0]] + rest[i:])
            y2 = tuple(rest[:i] + [pair[1]] + rest[i:])
            cand_triple = (y, y2, i + 1)
            if best is None or cand_triple < best:
                best = cand_triple
    return CheckReport(False, witness=best)


def check_I_unambiguous(t: Transition, index_set) -> CheckReport:
    """True iff flipping the shared label on the whole index set always changes σ.

    Quantifies over vectors carrying one common label on every position of
    ``index_set`` (1-based positions); other positions are free.  With the
    full index set this is exactly diagonal injectivity.
    """
    space = _single_block(t)
    c = space.size
    m = t.arity
    idx = sorted(set(int(i) for i in index_set))
    if not idx or idx[0] < 1 or idx[-1] > m:
        raise ValueError(f"index set must be nonempty within 1..{m}")
    cols = [i - 1 for i in idx]
    if t.table.size * c > WORK_CAP:
        raise ValueError("transition too large for the flip sweep")
    vectors = _all_vectors(t)
    shared = vectors[:, cols]
    constant = (shared == shared[:, :1]).all(axis=1)
    stride_sum = int(t._strides[cols].sum())
    base_index = vectors.astype(np.int64) @ t._strides
    for row, flat in zip(vectors[constant], base_index[constant]):
        l = int(row[cols[0]])
        s = int(t.table[int(flat)])
        for l2 in range(c):
            if l2 == l:
                continue
            if int(t.table[int(flat) + (l2 - l) * stride_sum]) == s:
                y2 = list(int(x) for x in row)
                for j in cols:
                    y2[j] = l2
                return CheckReport(
                    False, witness=(tuple(int(x) for x in row), tuple(y2))
                )
    return CheckReport(True)


def _all_vectors(t: Transition) -> np.ndarray:
    sizes = t.sizes
    total = t.table.size
    out = np.empty((total, len(sizes)), dtype=np.int16)
    stride = total
    for i, s in enumerate(sizes):
        stride //= s
        out[:, i] = (np.arange(total) // stride) % s
    return out


def check_multi_unambiguous(t: Transition, spec: "MultiProblemSpec") -> CheckReport:
    """Block variant: replacing any one block's diagonal always changes σ.

    Scans block-diagonal vectors (each classifier's instances share a label)
    in lexicographic order; the witness is (y, y', block) for the first
    violation.  With a single block this is diagonal injectivity.
    """
    counts = tuple(c for c, _ in t.blocks)
    sizes = tuple(s.size for _, s in t.blocks)
    if spec.counts != counts or spec.sizes != sizes:
        raise ValueError("spec does not match the transition's block layout")
    starts = np.cumsum((0,) + counts)
    for labels in itertools.product(*(range(c) for c in sizes)):
        y = np.repeat(np.asarray(labels, dtype=np.int64), counts)
        s = t.apply_batch(y[None, :])[0]
        for i, (count, c_i) in enumerate(zip(counts, sizes)):
            lo, hi = starts[i], starts[i + 1]
            for flip in range(c_i):
                if flip == labels[i]:
                    continue
                y2 = y.copy()
                y2[lo:hi] = flip
                if t.apply_batch(y2[None, :])[0] == s:
                    return CheckReport(
                        False,
                        witness=(
                            tuple(int(x) for x in y),
                            tuple(int(x) for x in y2),
                            i + 1,
                        ),
                    )
    return CheckReport(True)


def check_space_unambiguous(g: TransitionSpace, true_index: int) -> CheckReport:
    """True iff every candidate separates every wrong diagonal from the truth.

    For the true transition σ, every candidate σ', every diagonal (l,..,l)
    and every other label l', some vector over {l, l'} must receive a partial
    label different from σ(l,..,l).  Witness: first failing
    (candidate index, l, l').
    """
    true = g.candidates[true_index]
    space = _single_block(true)
    c = space.size
    m = g.arity
    if len(g) * c * c * (2**m) > WORK_CAP:
        raise ValueError("candidate family too large for the diagonal sweep")
    true_diag = _diagonal_images(true)
    for j, cand in enumerate(g.candidates):
        for l in range(c):
            s = int(true_diag[l])
            for l2 in range(c):
                if l2 == l:
                    continue
                if not _separates(cand, l, l2, s, m):
                    return CheckReport(False, witness=(j, l, l2))
    return CheckReport(True)


def _separates(cand: Transition, l: int, l2: int, s: int, m: int) -> bool:
    for choice in itertools.product((l, l2), repeat=m):
        if cand.apply(choice) != s:
            return True
    return False


def check_space_unambiguous_all(g: TransitionSpace) -> CheckReport:
    """Conjunction of :func:`check_space_unambiguous` over every true candidate."""
    for true_index in range(len(g)):
        report = check_space_unambiguous(g, true_index)
        if not report.verdict:
            return CheckReport(False, witness=(true_index,) + report.witness)
    return CheckReport(True)


def ambiguity_degree_deterministic(t: Transition) -> int:
    """0 when diagonals map to distinct partial labels, else 1.

    A deterministic transition either separates every pair of constant label
    vectors (degree 0) or some wrong diagonal is always consistent with the
    observation (degree 1); nothing in between can occur.
    """
    images = _diagonal_images(t)
    return 0 if len(set(int(s) for s in images)) == len(images) else 1


def ambiguity_degree_stochastic(matrix, row_label_sets) -> float:
    """Worst-case co-occurrence probability for superset-valued transitions.

    ``matrix[r, y]`` is the probability that gold label ``y`` draws the
    partial-label set ``row_label_sets[r]``; the degree is the largest
    probability that some specific wrong label lands in the drawn set.
    """
    m = np.asarray(matrix, dtype=np.float64)
    sets = [frozenset(int(x) for x in s) for s in row_label_sets]
    if m.ndim != 2 or m.shape[0] != len(sets):
        raise ValueError("need one label set per matrix row")
    n_labels = m.shape[1]
    for r, labels in enumerate(sets):
        for y in range(n_labels):
            if m[r, y] > 0 and y not in labels:
                raise ValueError(f"row {r} excludes its own gold label {y}")
    degree = 0.0
    for y in range(n_labels):
        for wrong in range(n_labels):
            if wrong == y:
                continue
            p = float(sum(m[r, y] for r, labels in enumerate(sets) if wrong in labels))
            degree = max(degree, p)
    return degree


@dataclass
class TransitionMatrix:
    """Conditional law of the partial label given one position's gold label.

    Rows follow the sorted realised outputs, columns the label alphabet;
    every column is a probability distribution.
    """

    entries: np.ndarray
    position: int
    marginal: np.ndarray
    outputs: tuple[int, ...]


def build_transition_matrix(
    t: Transition, marginal, position: int = 1
) -> TransitionMatrix:
    """Tabulate P(s | Y_position = y) under an i.i.d. label marginal.

    Remaining positions are drawn independently from ``marginal``; the entry
    for (s, y) accumulates the joint weight of every preimage vector of s
    holding y at ``position`` (1-based).
    """
    space = _single_block(t)
    c = space.size
    m = t.arity
    if not 1 <= position <= m:
        raise ValueError(f"position must be in 1..{m}")
    p = np.asarray(marginal, dtype=np.float64)
    if p.shape != (c,) or abs(float(p.sum()) - 1.0) > 1e-12 or (p < 0).any():
        raise ValueError("marginal must be a probability vector over the labels")
    k = position - 1
    others = [j for j in range(m) if j != k]
    entries = np.zeros((len(t.outputs), c), dtype=np.float64)
    for row, s in enumerate(t.outputs):
        pre = t.preimages[s]
        weights = np.prod(p[pre[:, others].astype(np.int64)], axis=1)
        np.add.at(entries[row], pre[:, k].astype(np.int64), weights)
    return TransitionMatrix(
        entries=entries, position=position, marginal=p.copy(), outputs=t.outputs
    )


def left_invertible(matrix, tol: float = 1e-9) -> tuple[bool, int]:
    """Numeric left-invertibility via the singular-value rank.

    Returns (invertible, rank); singular values below ``tol`` times the
    largest one count as zero.
    """
    m = np.asarray(getattr(matrix, "entries", matrix), dtype=np.float64)
    if m.size == 0:
        raise ValueError("empty matrix")
    if not np.isfinite(m).all():
        raise ValueError("matrix entries must be finite")
    sv = np.linalg.svd(m, compute_uv=False)
    rank = int((sv > tol * sv[0]).sum()) if sv[0] > 0 else 0
    return rank == m.shape[1], rank


@dataclass(frozen=True)
class MultiProblemSpec:
    """Block layout of a multi-classifier problem.

    ``counts[i]`` instances are drawn for classifier i over ``sizes[i]``
    classes.  Derived aggregates feed the multi-classifier bounds.
    """

    counts: tuple[int, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != len(self.sizes) or not self.counts:
            raise ValueError("need matching, nonempty counts and sizes")
        if any(x < 1 for x in self.counts) or any(x < 1 for x in self.sizes):
            raise ValueError("counts and sizes must be positive")

    @classmethod
    def from_transition(cls, t: Transition) -> "MultiProblemSpec":
        return cls(
            counts=tuple(c for c, _ in t.blocks),
            sizes=tuple(s.size for _, s in t.blocks),
        )

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def arity_total(self) -> int:
        return sum(self.counts)

    @property
    def arity_max(self) -> int:
        return max(self.counts)

    @property
    def arity_min(self) -> int:
        return min(self.counts)

    @property
    def classes_max(self) -> int:
        return max(self.sizes)
