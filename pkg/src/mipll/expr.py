"""Integer expressions over instance labels.

Transitions are usually written as small arithmetic expressions in the
position variables ``y1 .. yM`` (the label observed at each instance slot),
e.g. ``y1 + y2`` or ``(y3 == 0) * (y1 + y2) + (y3 == 1) * (y1 * y2)``.
This module parses such expressions into a tiny AST and evaluates them,
either on plain ints or vectorised over numpy columns.

Grammar (lowest precedence first)::

    comparison :=  sum  (("==" | "!=") sum)*        # yields 0/1
    sum        :=  term (("+" | "-") term)*
    term       :=  factor ("*" factor)*
    factor     :=  INT | VAR | "(" comparison ")" | "-" factor
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np


class ExprError(ValueError):
    """Malformed transition expression; ``offset`` is a byte offset into the text."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ExprSyntaxError(ExprError):
    pass


class UnknownVariableError(ExprError):
    pass


class VariableIndexError(ExprError):
    pass


# --- AST ------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Var:
    index: int  # 1-based position

    def __str__(self) -> str:
        return f"y{self.index}"


@dataclass(frozen=True)
class Neg:
    operand: "Node"

    def __str__(self) -> str:
        return f"(-{self.operand})"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * == !=
    left: "Node"
    right: "Node"

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


Node = Union[Num, Var, Neg, BinOp]


@dataclass(frozen=True)
class TransitionExpr:
    """A parsed expression together with the arity it was validated against."""

    root: Node
    arity: int

    def __str__(self) -> str:
        return str(self.root)

    def evaluate(self, values: Sequence) -> "np.ndarray | int":
        """Evaluate on one value per position.

        ``values[i]`` feeds ``y{i+1}`` and may be an int or a numpy array;
        arrays are evaluated elementwise.  Comparison nodes produce 0/1.
        """
        if len(values) < self.arity:
            raise ValueError(f"expected {self.arity} values, got {len(values)}")
        out = _eval(self.root, values)
        if np.isscalar(out) or getattr(out, "ndim", 1) == 0:
            return int(out)
        return out


def _eval(node: Node, values: Sequence):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return values[node.index - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, values)
    left = _eval(node.left, values)
    right = _eval(node.right, values)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "==":
        return np.asarray(left == right, dtype=np.int64) + 0
    if node.op == "!=":
        return np.asarray(left != right, dtype=np.int64) + 0
    raise AssertionError(f"unreachable op {node.op!r}")


# --- tokenizer / parser -----------------------------------------------------

_TOKEN_OPS = ("==", "!=", "+", "-", "*", "(", ")")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Return (kind, lexeme, offset) triples; kinds are int/var/op/end."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if text.startswith("==", i) or text.startswith("!=", i):
            tokens.append(("op", text[i : i + 2], i))
            i += 2
            continue
        if ch in "+-*()":
            tokens.append(("op", ch, i))
            i += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(("int", text[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("var", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, arity: int):
        self.text = text
        self.arity = arity
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, lexeme: str) -> None:
        kind, lex, off = self.peek()
        if kind != "op" or lex != lexeme:
            raise ExprSyntaxError(f"expected {lexeme!r}", off)
        self.advance()

    def parse(self) -> Node:
        node = self.comparison()
        kind, lex, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected trailing input {lex!r}", off)
        return node

    def comparison(self) -> Node:
        node = self.sum()
        while True:
            kind, lex, _ = self.peek()
            if kind == "op" and lex in ("==", "!="):
                self.advance()
                node = BinOp(lex, node, self.sum())
            else:
                return node

    def sum(self) -> Node:
        node = self.term()
        while True:
            kind, lex, _ = self.peek()
            if kind == "op" and lex in ("+", "-"):
                self.advance()
                node = BinOp(lex, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.factor()
        while True:
            kind, lex, _ = self.peek()
            if kind == "op" and lex == "*":
                self.advance()
                node = BinOp("*", node, self.factor())
            else:
                return node

    def factor(self) -> Node:
        kind, lex, off = self.advance()
        if kind == "int":
            return Num(int(lex))
        if kind == "var":
            if not (lex.startswith("y") and lex[1:].isdigit()):
                raise UnknownVariableError(f"unknown variable {lex!r}", off)
            index = int(lex[1:])
            if index < 1 or index > self.arity:
                raise VariableIndexError(
                    f"variable {lex!r} outside positions 1..{self.arity}", off
                )
            return Var(index)
        if kind == "op" and lex == "(":
            node = self.comparison()
            self.expect_op(")")
            return node
        if kind == "op" and lex == "-":
            return Neg(self.factor())
        raise ExprSyntaxError("expected a value", off)


def parse_transition_expr(text: str, arity: int) -> TransitionExpr:
    """Parse ``text`` over positions ``y1..y{arity}``.

    Raises :class:`ExprSyntaxError` (with a byte offset) on malformed input,
    :class:`UnknownVariableError` for identifiers other than ``y<digits>``,
    and :class:`VariableIndexError` for out-of-range positions.
    """
    if arity < 1:
        raise ValueError("arity must be at least 1")
    return TransitionExpr(_Parser(text, arity).parse(), arity)
