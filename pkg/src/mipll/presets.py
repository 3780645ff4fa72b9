"""Named experiment presets: transitions plus default run settings.

Each preset bundles a ready-made transition (or candidate space) with the
flat key=value defaults the CLI starts from, so the standard runs are single
commands.  Config files and command-line overrides win over these defaults.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .transitions import (
    LabelSpace,
    Transition,
    TransitionSpace,
    materialize,
    tabulate,
    weighted_sum_space,
)

_COMMON = {
    "mode": "single",
    "per_class": "500",
    "test_per_class": "200",
    "dim": "2",
    "separation": "4.0",
    "m_P": "4000",
    "k": "3",
    "rate": "0.5",
    "epochs": "30",
    "batch_size": "250",
    "lambda": "0.0",
    "weak_weight": "1.0",
    "seed": "0",
    "data_seed": "100",
    "delta": "0.05",
}


def _sum_transition(arity: int, labels: int = 10) -> Transition:
    expr = " + ".join(f"y{i+1}" for i in range(arity))
    return materialize(expr, arity=arity, space=LabelSpace(labels))


def _product_transition() -> Transition:
    return materialize("y1 * y2", arity=2, space=LabelSpace(10))


def _xor_transition() -> Transition:
    return materialize("y1 != y2", arity=2, space=LabelSpace(2))


def operator_transition(digit_lo: int = 3, digit_hi: int = 9) -> Transition:
    """Two digits and an operation label: 0 adds them, 1 multiplies them."""
    digits = LabelSpace(digit_hi - digit_lo + 1, offset=digit_lo)
    op = LabelSpace(2)

    def fn(d1, d2, o):
        return np.where(o == 0, d1 + d2, d1 * d2)

    return tabulate(
        fn,
        blocks=((2, digits), (1, op)),
        name=f"operator[{digit_lo}..{digit_hi}]",
    )


def wsum_space(lo: int = 1, hi: int = 5, labels: int = 10) -> TransitionSpace:
    grid = [
        (w1, w2) for w1 in range(lo, hi + 1) for w2 in range(lo, hi + 1)
    ]
    return weighted_sum_space(grid, arity=2, space=LabelSpace(labels))


@dataclass(frozen=True)
class Preset:
    name: str
    defaults: dict
    build: Callable[[], Transition | TransitionSpace]


def _make(name: str, build, **overrides) -> Preset:
    defaults = dict(_COMMON)
    defaults.update({str(k): str(v) for k, v in overrides.items()})
    defaults["preset"] = name
    return Preset(name, defaults, build)


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in [
        _make("sum2", lambda: _sum_transition(2)),
        _make("sum3", lambda: _sum_transition(3)),
        _make("sum4", lambda: _sum_transition(4)),
        _make("product2", lambda: _product_transition()),
        _make(
            "xor",
            lambda: _xor_transition(),
            m_P="2000",
            epochs="30",
            k="1",
        ),
        _make(
            "operator",
            lambda: operator_transition(3, 9),
            mode="multi",
            m_P="10000",
            epochs="40",
        ),
        _make(
            "wsum-unknown",
            lambda: wsum_space(1, 5),
            mode="unknown",
            true_weights="2,3",
            epochs="25",
            posterior_rate="5.0",
            unknown_mode="mixture",
        ),
    ]
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ValueError(f"unknown preset {name!r} (known: {known})") from None
