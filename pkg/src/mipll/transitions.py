"""Label spaces and tabulated transition functions.

A transition maps a vector of hidden instance labels to the single weak
(partial) label that annotators actually provide, e.g. the sum of two digits.
Transitions are materialised as full lookup tables at construction; the
enumeration is capped so accidental huge label spaces fail fast instead of
exhausting memory.

Labels are canonical 0-based ints everywhere in this package.  A
:class:`LabelSpace` carries a display ``offset`` so spaces such as the digits
``{3..9}`` can be rendered and entered in their natural values; expressions
are always evaluated on display values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .expr import TransitionExpr, parse_transition_expr

ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class LabelSpace:
    """A contiguous label alphabet of ``size`` classes displayed from ``offset``."""

    size: int
    offset: int = 0

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("a label space needs at least 2 classes")

    def display(self, label: int) -> int:
        return label + self.offset

    def internal(self, shown: int) -> int:
        label = shown - self.offset
        if not 0 <= label < self.size:
            raise ValueError(f"label {shown} outside {self}")
        return label

    def __str__(self) -> str:
        return f"{{{self.offset}..{self.offset + self.size - 1}}}"


Block = tuple[int, LabelSpace]  # (instance count, shared label space)


@dataclass
class Transition:
    """A total map from label vectors to partial labels, fully tabulated.

    ``blocks`` groups positions that share one classifier (single-classifier
    problems have exactly one block).  ``table`` is indexed by the mixed-radix
    encoding of an internal label vector; ``preimages[s]`` lists the vectors
    mapping to ``s`` in lexicographic order, which also fixes every
    witness/tie-break order downstream.
    """

    blocks: tuple[Block, ...]
    table: np.ndarray
    outputs: tuple[int, ...]
    preimages: dict[int, np.ndarray]
    name: str = ""
    tag: tuple | None = None
    _strides: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sizes = self.sizes
        strides = np.ones(len(sizes), dtype=np.int64)
        for i in range(len(sizes) - 2, -1, -1):
            strides[i] = strides[i + 1] * sizes[i + 1]
        self._strides = strides

    @property
    def arity(self) -> int:
        return sum(count for count, _ in self.blocks)

    @property
    def spaces(self) -> tuple[LabelSpace, ...]:
        """Label space at each position, blocks flattened in order."""
        out = []
        for count, space in self.blocks:
            out.extend([space] * count)
        return tuple(out)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(space.size for space in self.spaces)

    def apply(self, vector: Sequence[int]) -> int:
        """Partial label of one internal label vector."""
        v = np.asarray(vector, dtype=np.int64)
        if v.shape != (self.arity,):
            raise ValueError(f"expected {self.arity} labels, got shape {v.shape}")
        sizes = np.asarray(self.sizes)
        if (v < 0).any() or (v >= sizes).any():
            raise ValueError(f"label vector {tuple(int(x) for x in v)} out of range")
        return int(self.table[int(v @ self._strides)])

    def apply_batch(self, vectors: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`apply` over rows of an ``(m, M)`` array."""
        v = np.asarray(vectors, dtype=np.int64)
        return self.table[v @ self._strides]

    def to_display(self, vector: Sequence[int]) -> tuple[int, ...]:
        return tuple(space.display(int(l)) for space, l in zip(self.spaces, vector))

    def from_display(self, shown: Sequence[int]) -> tuple[int, ...]:
        return tuple(space.internal(int(l)) for space, l in zip(self.spaces, shown))


def _enumerate_vectors(sizes: Sequence[int]) -> np.ndarray:
    """All label vectors in lexicographic order, shape (prod(sizes), M)."""
    total = 1
    for s in sizes:
        total *= s
    if total > ENUMERATION_CAP:
        raise ValueError(f"label space has {total} vectors, cap is {ENUMERATION_CAP}")
    vectors = np.empty((total, len(sizes)), dtype=np.int16)
    stride = total
    for i, s in enumerate(sizes):
        stride //= s
        vectors[:, i] = (np.arange(total) // stride) % s
    return vectors


def tabulate(
    fn: Callable[..., np.ndarray],
    blocks: Sequence[Block],
    name: str = "",
    tag: tuple | None = None,
) -> Transition:
    """Build a transition from a vectorised callable on display-label columns.

    ``fn`` receives one int64 column per position (display values) and must
    return the partial label per row.
    """
    blocks = tuple(blocks)
    spaces = [space for count, space in blocks for _ in range(count)]
    vectors = _enumerate_vectors([sp.size for sp in spaces])
    columns = [
        vectors[:, i].astype(np.int64) + sp.offset for i, sp in enumerate(spaces)
    ]
    table = np.asarray(fn(*columns), dtype=np.int64)
    if table.shape != (len(vectors),):
        raise ValueError("transition must produce one output per label vector")
    outputs = np.unique(table)
    preimages = {}
    for s in outputs:
        preimages[int(s)] = vectors[table == s]  # keeps lexicographic order
    return Transition(
        blocks=blocks,
        table=table,
        outputs=tuple(int(s) for s in outputs),
        preimages=preimages,
        name=name,
        tag=tag,
    )


def materialize(
    expr: TransitionExpr | str,
    blocks: Sequence[Block] | None = None,
    arity: int | None = None,
    space: LabelSpace | None = None,
    name: str = "",
    tag: tuple | None = None,
) -> Transition:
    """Tabulate an expression transition.

    Pass ``blocks`` for multi-classifier layouts, or ``arity`` plus a shared
    ``space`` for the common single-classifier case.
    """
    if blocks is None:
        if arity is None or space is None:
            raise ValueError("need either blocks or arity and space")
        blocks = [(arity, space)]
    m = sum(count for count, _ in blocks)
    if isinstance(expr, str):
        expr = parse_transition_expr(expr, m)
    if expr.arity != m:
        raise ValueError(f"expression written for arity {expr.arity}, layout has {m}")
    return tabulate(
        lambda *cols: expr.evaluate(cols), blocks, name=name or str(expr), tag=tag
    )


def from_table(
    rows: Iterable[tuple[Sequence[int], int]],
    blocks: Sequence[Block],
    name: str = "",
) -> Transition:
    """Build a transition from explicit (display vector, partial label) rows.

    Every label vector must appear exactly once.
    """
    blocks = tuple(blocks)
    spaces = [space for count, space in blocks for _ in range(count)]
    sizes = [sp.size for sp in spaces]
    total = 1
    for s in sizes:
        total *= s
    if total > ENUMERATION_CAP:
        raise ValueError(f"label space has {total} vectors, cap is {ENUMERATION_CAP}")
    strides = np.ones(len(sizes), dtype=np.int64)
    for i in range(len(sizes) - 2, -1, -1):
        strides[i] = strides[i + 1] * sizes[i + 1]
    table = np.full(total, np.iinfo(np.int64).min, dtype=np.int64)
    for shown, s in rows:
        internal = [sp.internal(int(l)) for sp, l in zip(spaces, shown)]
        if len(internal) != len(sizes):
            raise ValueError(f"row {tuple(shown)} has wrong arity")
        idx = int(np.asarray(internal, dtype=np.int64) @ strides)
        if table[idx] != np.iinfo(np.int64).min:
            raise ValueError(f"duplicate row for vector {tuple(shown)}")
        table[idx] = int(s)
    if (table == np.iinfo(np.int64).min).any():
        missing = int((table == np.iinfo(np.int64).min).sum())
        raise ValueError(f"table is not total: {missing} vectors missing")
    return tabulate(
        lambda *cols: table[
            sum(
                (np.asarray(c) - sp.offset) * st
                for c, sp, st in zip(cols, spaces, strides)
            )
        ],
        blocks,
        name=name,
    )


@dataclass
class TransitionSpace:
    """A finite candidate set of transitions over one shared label layout."""

    candidates: tuple[Transition, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate set is empty")
        layout = [(c, s.size, s.offset) for c, s in self.candidates[0].blocks]
        for t in self.candidates[1:]:
            if [(c, s.size, s.offset) for c, s in t.blocks] != layout:
                raise ValueError("candidates disagree on the label layout")

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def arity(self) -> int:
        return self.candidates[0].arity

    @property
    def universe(self) -> tuple[int, ...]:
        """Union of realised partial labels across candidates."""
        out: set[int] = set()
        for t in self.candidates:
            out.update(t.outputs)
        return tuple(sorted(out))

    @property
    def tags(self) -> tuple:
        return tuple(t.tag for t in self.candidates)


def weighted_sum_space(
    weights: Iterable[Sequence[int]], arity: int, space: LabelSpace
) -> TransitionSpace:
    """Candidates ``sigma_w(y) = sum_i w_i * y_i`` for each weight tuple.

    Weights act on display values.  All-zero tuples are rejected since they
    collapse every vector onto one partial label.
    """
    candidates = []
    for w in weights:
        w = tuple(int(x) for x in w)
        if len(w) != arity:
            raise ValueError(f"weight tuple {w} has wrong arity")
        if not any(w):
            raise ValueError("all-zero weight tuple")
        candidates.append(
            tabulate(
                lambda *cols, _w=w: sum(wi * c for wi, c in zip(_w, cols)),
                [(arity, space)],
                name="+".join(f"{wi}*y{i + 1}" for i, wi in enumerate(w)),
                tag=w,
            )
        )
    return TransitionSpace(tuple(candidates))


# --- text format -------------------------------------------------------------
#
#   arity 2                          arity 3
#   labels 10 offset 0               block 1: count 2 labels 7 offset 3
#   expr y1 + y2                     block 2: count 1 labels 2
#                                    expr (y3 == 0)*(y1 + y2) + (y3 == 1)*(y1*y2)
#
# A `table` line followed by `y1 .. yM -> s` rows replaces `expr`.  Space files
# use the same header with one `expr` line per candidate.


def _parse_header(lines: list[tuple[int, str]]) -> tuple[tuple[Block, ...], int]:
    if not lines or not lines[0][1].startswith("arity"):
        raise ValueError("first line must be 'arity M'")
    try:
        arity = int(lines[0][1].split()[1])
    except (IndexError, ValueError):
        raise ValueError(f"bad arity line: {lines[0][1]!r}") from None
    blocks: list[Block] = []
    consumed = 1
    for lineno, line in lines[1:]:
        if line.startswith("labels"):
            if blocks:
                raise ValueError(f"line {lineno}: labels after block lines")
            blocks.append((arity, _parse_space(line.split()[1:], lineno)))
            consumed += 1
            break
        if line.startswith("block"):
            head, _, rest = line.partition(":")
            parts = rest.split()
            if len(parts) < 4 or parts[0] != "count" or parts[2] != "labels":
                raise ValueError(f"line {lineno}: bad block line {line!r}")
            blocks.append((int(parts[1]), _parse_space(parts[3:], lineno)))
            consumed += 1
            continue
        break
    if not blocks:
        raise ValueError("missing 'labels' or 'block' lines")
    if sum(c for c, _ in blocks) != arity:
        raise ValueError("block counts do not add up to the arity")
    return tuple(blocks), consumed


def _parse_space(parts: list[str], lineno: int) -> LabelSpace:
    try:
        size = int(parts[0])
        offset = 0
        if len(parts) >= 3 and parts[1] == "offset":
            offset = int(parts[2])
        return LabelSpace(size, offset)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"line {lineno}: bad label space: {exc}") from None


def _significant_lines(text: str) -> list[tuple[int, str]]:
    out = []
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append((i, line))
    return out


def parse_transition_text(text: str, name: str = "") -> Transition:
    lines = _significant_lines(text)
    blocks, consumed = _parse_header(lines)
    body = lines[consumed:]
    if not body:
        raise ValueError("missing 'expr' or 'table' section")
    lineno, line = body[0]
    if line.startswith("expr"):
        if len(body) > 1:
            raise ValueError(f"line {body[1][0]}: trailing content after expr")
        return materialize(line[4:].strip(), blocks=blocks, name=name)
    if line == "table":
        rows = []
        arity = sum(c for c, _ in blocks)
        for rowno, row in body[1:]:
            left, sep, right = row.partition("->")
            if not sep:
                raise ValueError(f"line {rowno}: table rows look like 'y1 .. yM -> s'")
            values = left.split()
            if len(values) != arity:
                raise ValueError(f"line {rowno}: expected {arity} labels")
            rows.append(([int(v) for v in values], int(right)))
        return from_table(rows, blocks, name=name)
    raise ValueError(f"line {lineno}: expected 'expr' or 'table', got {line!r}")


def parse_space_text(text: str) -> TransitionSpace:
    lines = _significant_lines(text)
    blocks, consumed = _parse_header(lines)
    candidates = []
    for lineno, line in lines[consumed:]:
        if not line.startswith("expr"):
            raise ValueError(f"line {lineno}: space files list one expr per line")
        candidates.append(materialize(line[4:].strip(), blocks=blocks))
    if not candidates:
        raise ValueError("space file has no candidates")
    return TransitionSpace(tuple(candidates))


def load_transition(path) -> Transition:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_transition_text(fh.read(), name=str(path))


def load_space(path) -> TransitionSpace:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_space_text(fh.read())
