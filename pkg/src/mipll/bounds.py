"""Closed-form risk-transfer, sample-complexity, and error-bound calculators.

Pure arithmetic on the problem constants: label alphabet size c, bag size M,
dimension surrogates, boundedness constants.  Universal constants are caller
parameters defaulting to 1, so the values are exact in shape and relative
behavior rather than absolute thresholds.  Every risk-style output is capped
at its trivial ceiling (1 for a single classifier, n for n of them).

Logs are natural throughout.
"""

from __future__ import annotations

import math
from typing import Sequence

from .unambiguity import MultiProblemSpec


def _check_unit_open(name: str, v: float) -> float:
    v = float(v)
    if not 0.0 < v < 1.0:
        raise ValueError(f"{name} must lie in (0,1), got {v}")
    return v


def _check_risk(name: str, v: float) -> float:
    v = float(v)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0,1], got {v}")
    return v


def _check_pos_int(name: str, v: int, least: int = 1) -> int:
    v = int(v)
    if v < least:
        raise ValueError(f"{name} must be >= {least}, got {v}")
    return v


def _check_nonneg(name: str, v: float) -> float:
    v = float(v)
    if not v >= 0.0:
        raise ValueError(f"{name} must be nonnegative, got {v}")
    return v


def risk_transfer_M(t_risk: float, c: int, M: int) -> float:
    """Classification risk from partial risk t under an M-unambiguous map."""
    t = _check_risk("t_risk", t_risk)
    c = _check_pos_int("c", c, 2)
    M = _check_pos_int("M", M)
    return min(1.0, (c ** (2 * M - 2) * t) ** (1.0 / M))


def phi_I(t: float, I: int, M: int, c: int) -> float:
    """Transfer function for maps that are both I- and M-unambiguous.

    The sharper branch needs (c^{2M-2} t)^{1/M} < 1; past that it is treated
    as infinite and the coarse branch t^{1/M} c^2 takes over.  Capped at 1.
    """
    t = _check_risk("t", t)
    c = _check_pos_int("c", c, 2)
    M = _check_pos_int("M", M)
    I = _check_pos_int("I", I)
    if I > M:
        raise ValueError(f"I must be at most M, got I={I}, M={M}")
    coarse = t ** (1.0 / M) * c**2
    inner = (c ** (2 * M - 2) * t) ** (1.0 / M)
    if inner >= 1.0:
        sharp = math.inf
    else:
        sharp = (t * c ** (2 * I - 2) / (1.0 - inner) ** (M - I)) ** (1.0 / I)
    return min(1.0, sharp, coarse)


def sample_complexity_known(
    c: int, M: int, eps: float, delta: float, d_F: int, C: float = 1.0
) -> int:
    """Samples sufficient for the zero-risk ERM under a known transition."""
    c = _check_pos_int("c", c, 2)
    M = _check_pos_int("M", M)
    eps = _check_unit_open("eps", eps)
    delta = _check_unit_open("delta", delta)
    d_F = _check_pos_int("d_F", d_F)
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    lead = c ** (2 * M - 2) / eps**M
    raw = C * lead * (d_F * math.log(6 * c * M * d_F) * math.log(lead) + math.log(1 / delta))
    return math.ceil(raw)


def sample_complexity_sensitive(
    c: int, M: int, eps: float, delta: float, d_F: int, C: float = 1.0
) -> tuple[int, bool]:
    """Faster 1/eps rate available near zero risk, plus its validity flag.

    The flag records whether eps is small enough for the rate to apply
    (eps <= 1/((2M)^M c^{2M-2})); the value is returned either way.
    """
    c = _check_pos_int("c", c, 2)
    M = _check_pos_int("M", M)
    eps = _check_unit_open("eps", eps)
    delta = _check_unit_open("delta", delta)
    d_F = _check_pos_int("d_F", d_F)
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    raw = C * (1.0 / eps) * (
        d_F * math.log(6 * c * M * d_F) * math.log(2 / eps) + math.log(1 / delta)
    )
    valid = eps <= 1.0 / ((2 * M) ** M * c ** (2 * M - 2))
    return math.ceil(raw), valid


def _multi_dims(spec: MultiProblemSpec, d: Sequence[int]) -> list[int]:
    d = [int(x) for x in d]
    if len(d) != spec.n:
        raise ValueError(f"expected {spec.n} dimension entries, got {len(d)}")
    for x in d:
        if x < 1:
            raise ValueError(f"dimensions must be >= 1, got {x}")
    return d


def sample_complexity_multi(
    spec: MultiProblemSpec,
    eps: float,
    delta: float,
    R: float,
    d: Sequence[int],
    C: float = 1.0,
    proof_form: bool = False,
) -> int:
    """Samples sufficient for n jointly trained classifiers.

    ``proof_form`` switches the (1-R) exponent from the stated M to the
    derived M - M_min; the two are not reconciled upstream, so the choice is
    explicit.
    """
    eps = _check_unit_open("eps", eps)
    delta = _check_unit_open("delta", delta)
    R = float(R)
    if not 0.0 <= R < 1.0:
        raise ValueError(f"R must lie in [0,1), got {R}")
    d = _multi_dims(spec, d)
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    expo = spec.arity_total - spec.arity_min if proof_form else spec.arity_total
    lead = (
        spec.n
        * spec.classes_max ** (2 * spec.arity_max - 2)
        / (eps**spec.arity_max * (1.0 - R) ** expo)
    )
    dim_sum = sum(
        d_i * math.log(spec.n * c_i * M_i * d_i)
        for d_i, (M_i, c_i) in zip(d, spec_blocks(spec))
    )
    raw = C * lead * (dim_sum * math.log(lead) + math.log(1 / delta))
    return math.ceil(raw)


def spec_blocks(spec: MultiProblemSpec) -> list[tuple[int, int]]:
    """(M_i, c_i) pairs for each classifier block."""
    return list(zip(spec.counts, spec.sizes))


def sample_complexity_unknown(
    c: int,
    M: int,
    eps: float,
    delta: float,
    r: float,
    d_F: int,
    d_G: int,
    C: float = 1.0,
) -> int:
    """Samples sufficient when the transition itself is learned from a class."""
    c = _check_pos_int("c", c, 2)
    M = _check_pos_int("M", M)
    eps = _check_unit_open("eps", eps)
    delta = _check_unit_open("delta", delta)
    r = float(r)
    if not 0.0 < r <= 1.0:
        raise ValueError(f"r must lie in (0,1], got {r}")
    d_F = _check_pos_int("d_F", d_F)
    d_G = _check_pos_int("d_G", d_G, 0)
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    lead = c ** (2 * M - 2) / (r**M * eps**M)
    dim = (d_F + d_G) * math.log(6 * M * (d_F + d_G)) + d_F * math.log(c)
    raw = C * lead * (dim * math.log(lead) + math.log(1 / delta))
    return math.ceil(raw)


def vc_bounds(
    mode: str,
    d_F: int = 1,
    d_G: int = 0,
    M: int = 1,
    c: int = 2,
    spec: MultiProblemSpec | None = None,
    d: Sequence[int] | None = None,
) -> float:
    """Composed VC-dimension bound for the induced binary class.

    Modes: "unknown" (classifier plus transition class), "known" (transition
    fixed), "multi" (one classifier per block; needs ``spec`` and per-block
    dimensions ``d``).
    """
    if mode == "unknown":
        d_F = _check_pos_int("d_F", d_F)
        d_G = _check_pos_int("d_G", d_G, 0)
        M = _check_pos_int("M", M)
        c = _check_pos_int("c", c, 2)
        both = d_F + d_G
        return 2.0 * (both * math.log(6 * M * both) + 2 * d_F * math.log(c))
    if mode == "known":
        d_F = _check_pos_int("d_F", d_F)
        M = _check_pos_int("M", M)
        c = _check_pos_int("c", c, 2)
        return 2.0 * (d_F * math.log(6 * M * d_F) + 2 * d_F * math.log(c))
    if mode == "multi":
        if spec is None or d is None:
            raise ValueError("multi mode needs spec and per-classifier dimensions")
        d = _multi_dims(spec, d)
        return 4.0 * sum(
            d_i * math.log(M_i * spec.n * d_i) + 2 * d_i * math.log(c_i)
            for d_i, (M_i, c_i) in zip(d, spec_blocks(spec))
        )
    raise ValueError(f"unknown mode {mode!r}")


def error_bound_topk(
    emp_topk_risk: float,
    rad_est: float,
    m_P: int,
    delta: float,
    k: int,
    M: int,
    c: int,
) -> float:
    """High-probability classification-risk bound from the top-k training risk."""
    emp = _check_nonneg("emp_topk_risk", emp_topk_risk)
    rad = _check_nonneg("rad_est", rad_est)
    m_P = _check_pos_int("m_P", m_P)
    delta = _check_unit_open("delta", delta)
    k = _check_pos_int("k", k)
    M = _check_pos_int("M", M)
    c = _check_pos_int("c", c, 2)
    t = (k + 1) * (
        emp
        + 2.0 * math.sqrt(k) * M**1.5 * rad
        + math.sqrt(math.log(1 / delta) / (2 * m_P))
    )
    return phi_I(min(t, 1.0), 1, M, c)


def error_bound_topk_multi(
    emp_topk_risk: float,
    rad_ests: Sequence[float],
    m_P: int,
    delta: float,
    k: int,
    spec: MultiProblemSpec,
    R: float,
) -> float:
    """Risk bound for n block classifiers trained on the joint top-k loss."""
    emp = _check_nonneg("emp_topk_risk", emp_topk_risk)
    rads = [_check_nonneg("rad_est", x) for x in rad_ests]
    if len(rads) != spec.n:
        raise ValueError(f"expected {spec.n} Rademacher estimates, got {len(rads)}")
    m_P = _check_pos_int("m_P", m_P)
    delta = _check_unit_open("delta", delta)
    k = _check_pos_int("k", k)
    R = _check_unit_open("R", R)
    M = spec.arity_total
    inner = (
        emp
        + math.sqrt(k * M) * sum(M_i * rad for (M_i, _), rad in zip(spec_blocks(spec), rads))
        + math.sqrt(math.log(1 / delta) / (2 * m_P))
    )
    lead = spec.n * spec.classes_max ** (2 * spec.arity_max - 2) * (k + 1)
    raw = (lead / (1.0 - R) ** M * inner) ** (1.0 / spec.arity_max)
    return min(float(spec.n), raw)


def risk_transfer_ambiguity(gamma: float, partial_risk: float, c: int, M: int) -> float:
    """Risk transfer weakened by a nonzero diagonal ambiguity degree."""
    gamma = float(gamma)
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0,1), got {gamma}")
    t = _check_risk("partial_risk", partial_risk)
    c = _check_pos_int("c", c, 2)
    M = _check_pos_int("M", M)
    return min(1.0, (c ** (2 * M - 2) * t) ** (1.0 / M) / (1.0 - gamma))


def risk_transfer_multi(
    partial_risk: float,
    spec: MultiProblemSpec,
    R: float,
    proof_form: bool = True,
) -> float:
    """Summed classification risk of n block classifiers from the partial risk."""
    t = _check_risk("partial_risk", partial_risk)
    R = float(R)
    if not 0.0 <= R < 1.0:
        raise ValueError(f"R must lie in [0,1), got {R}")
    expo = spec.arity_total - spec.arity_min if proof_form else spec.arity_total
    lead = (spec.n * spec.classes_max**2) ** (spec.arity_max - 1)
    raw = (lead / (1.0 - R) ** expo * t) ** (1.0 / spec.arity_max)
    return min(float(spec.n), raw)
