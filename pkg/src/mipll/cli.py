"""Command-line front end: checks, training runs, sweeps, and calculators.

Exit codes are a stable contract: 0 success, 1 a requested condition or test
failed, 2 input/parse errors, 3 training divergence.  Every subcommand is
deterministic under fixed seed and inputs, producing byte-identical
artifacts.  Config files are flat ``key = value`` text; '#' starts a comment.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import bounds as _bounds
from .expr import ExprError
from .learner import (
    EvalReport,
    LabeledData,
    TrainConfig,
    TrainingDiverged,
    TransitionPosterior,
    evaluate,
    make_synthetic_dataset,
    rademacher_estimate,
    save_models,
    train_multi,
    train_single,
    train_unknown,
    weak_labelize,
    write_history,
)
from .presets import get_preset
from .transitions import (
    Block,
    LabelSpace,
    Transition,
    TransitionSpace,
    load_space,
    load_transition,
    materialize,
)
from .unambiguity import (
    MultiProblemSpec,
    build_transition_matrix,
    check_1_unambiguous,
    check_I_unambiguous,
    check_M_unambiguous,
    check_multi_unambiguous,
    check_space_unambiguous,
    check_space_unambiguous_all,
    left_invertible,
)


def _read_config(path: str) -> dict[str, str]:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from None
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse_blocks(text: str) -> tuple[Block, ...]:
    """count:labels[:offset] groups, comma separated, e.g. '2:7:3,1:2'."""
    blocks = []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) not in (2, 3):
            raise ValueError(f"bad block spec {part!r}, want count:labels[:offset]")
        count, labels = int(pieces[0]), int(pieces[1])
        offset = int(pieces[2]) if len(pieces) == 3 else 0
        blocks.append((count, LabelSpace(labels, offset)))
    return tuple(blocks)


def _transition_from_flags(args) -> Transition | TransitionSpace:
    given = [
        name
        for name, val in (
            ("--preset", getattr(args, "preset", None)),
            ("--file", getattr(args, "file", None)),
            ("--expr", getattr(args, "expr", None)),
        )
        if val
    ]
    if len(given) != 1:
        raise ValueError("give exactly one of --preset, --file, --expr")
    if args.preset:
        return get_preset(args.preset).build()
    if args.file:
        return load_transition(args.file)
    if args.blocks:
        blocks = _parse_blocks(args.blocks)
    else:
        if args.arity is None or args.labels is None:
            raise ValueError("--expr needs --arity and --labels (or --blocks)")
        blocks = ((args.arity, LabelSpace(args.labels, args.offset)),)
    return materialize(args.expr, blocks=blocks)


def _fmt_vec(t: Transition, vec) -> str:
    shown = t.to_display(vec)
    return "(" + ",".join(str(v) for v in shown) + ")"


# --- check ---------------------------------------------------------------


def _run_condition(token: str, t, space, true_index):
    if token == "M":
        return check_M_unambiguous(t)
    if token == "1":
        return check_1_unambiguous(t)
    if token.startswith("I:"):
        positions = tuple(int(x) for x in token[2:].split("+"))
        return check_I_unambiguous(t, positions)
    if token == "multi":
        return check_multi_unambiguous(t, MultiProblemSpec.from_transition(t))
    if token == "space":
        if space is None:
            raise ValueError("the space condition needs --space-file or a space preset")
        if true_index is None:
            return check_space_unambiguous_all(space)
        return check_space_unambiguous(space, true_index)
    raise ValueError(f"unknown condition {token!r}")


def _format_witness(token: str, report, t, space) -> str:
    w = report.witness
    if w is None:
        return "-"
    if token == "M" or token.startswith("I:"):
        return f"{_fmt_vec(t, w[0])}->{_fmt_vec(t, w[1])}"
    if token == "1":
        return f"{_fmt_vec(t, w[0])}->{_fmt_vec(t, w[1])}@pos={w[2]}"
    if token == "multi":
        return f"{_fmt_vec(t, w[0])}->{_fmt_vec(t, w[1])}@block={w[2]}"
    # space fails with candidate index plus the two labels; show display labels
    ref = space.candidates[0]
    sp = ref.blocks[0][1]
    if len(w) == 4:
        ti, j, l, l2 = w
        return f"true={ti} candidate={j} l={sp.display(l)} l'={sp.display(l2)}"
    j, l, l2 = w
    return f"candidate={j} l={sp.display(l)} l'={sp.display(l2)}"


def _cmd_check(args) -> int:
    base = _transition_from_flags(args) if (args.preset or args.file or args.expr) else None
    space = None
    t = None
    if isinstance(base, TransitionSpace):
        space = base
        t = base.candidates[args.true_index] if args.true_index is not None else None
    else:
        t = base
    if args.space_file:
        space = load_space(args.space_file)
    tokens = [tok for tok in args.conditions.split(",") if tok]
    if not tokens:
        raise ValueError("no conditions requested")
    all_true = True
    for token in tokens:
        if token != "space" and t is None:
            raise ValueError(f"condition {token} needs a transition, not a space")
        report = _run_condition(token, t, space, args.true_index)
        all_true &= bool(report)
        witness = _format_witness(token, report, t, space)
        index = report.witness_index if report.witness_index is not None else "-"
        print(
            f"condition={token} verdict={'true' if report else 'false'} "
            f"witness={witness} index={index}"
        )
    return 0 if all_true else 1


# --- train / sweep ----------------------------------------------------------


def _settings(args) -> dict[str, str]:
    config = _read_config(args.config) if getattr(args, "config", None) else {}
    name = getattr(args, "preset", None) or config.get("preset")
    merged: dict[str, str] = {}
    if name:
        merged.update(get_preset(name).defaults)
    merged.update(config)
    for pair in getattr(args, "set", None) or []:
        if "=" not in pair:
            raise ValueError(f"--set wants key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        merged[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        merged["seed"] = str(args.seed)
    return merged


def _build_base(settings: dict[str, str]):
    if settings.get("preset"):
        return get_preset(settings["preset"]).build()
    if settings.get("file"):
        return load_transition(settings["file"])
    if settings.get("expr"):
        offset = int(settings.get("offset", "0"))
        space = LabelSpace(int(settings["labels"]), offset)
        return materialize(settings["expr"], arity=int(settings["arity"]), space=space)
    raise ValueError("config needs a preset, file, or expr")


def _train_config(settings: dict[str, str]) -> TrainConfig:
    post = settings.get("posterior_rate", "")
    return TrainConfig(
        k=int(settings.get("k", "1")),
        rate=float(settings.get("rate", "0.5")),
        epochs=int(settings.get("epochs", "50")),
        batch_size=int(settings.get("batch_size", "0")),
        lam=float(settings.get("lambda", "0.0")),
        weak_weight=float(settings.get("weak_weight", "1.0")),
        seed=int(settings.get("seed", "0")),
        unknown_mode=settings.get("unknown_mode", "mixture"),
        posterior_rate=float(post) if post else None,
    )


@dataclass
class RunResult:
    settings: dict[str, str]
    models: list
    posterior: TransitionPosterior | None
    history: list
    report: EvalReport
    bound: float
    rad_ests: list[float]
    transition: Transition


def _run_training(settings: dict[str, str]) -> RunResult:
    mode = settings.get("mode", "single")
    base = _build_base(settings)
    cfg = _train_config(settings)
    data_seed = int(settings.get("data_seed", "100"))
    per_class = int(settings.get("per_class", "500"))
    test_per_class = int(settings.get("test_per_class", "200"))
    dim = int(settings.get("dim", "2"))
    sep = float(settings.get("separation", "4.0"))
    m_P = int(settings.get("m_P", "1000"))
    delta = float(settings.get("delta", "0.05"))
    if m_P < 1:
        raise ValueError("m_P must be positive")

    if mode == "unknown":
        if not isinstance(base, TransitionSpace):
            raise ValueError("unknown mode needs a transition space")
        tags = base.tags
        true_tag = tuple(
            int(v) for v in settings.get("true_weights", "").split(",") if v
        )
        if true_tag not in tags:
            raise ValueError(f"true_weights {true_tag} not in the candidate grid")
        t_true = base.candidates[tags.index(true_tag)]
    else:
        if isinstance(base, TransitionSpace):
            raise ValueError(f"{mode} mode needs a single transition, got a space")
        t_true = base
    spec = MultiProblemSpec.from_transition(t_true)

    pools = [
        make_synthetic_dataset(c, per_class, dim, sep, seed=data_seed + b)
        for b, c in enumerate(spec.sizes)
    ]
    tests = [
        make_synthetic_dataset(c, test_per_class, dim, sep, seed=data_seed + 1000 + b)
        for b, c in enumerate(spec.sizes)
    ]
    ds = weak_labelize(pools if spec.n > 1 else pools[0], t_true, m_P, seed=data_seed + 2000)

    labeled = None
    if cfg.lam > 0:
        m_L = int(settings.get("m_L", "0"))
        if m_L < 1:
            raise ValueError("lambda > 0 needs m_L labeled examples")
        src = make_synthetic_dataset(
            spec.sizes[0], math.ceil(m_L / spec.sizes[0]), dim, sep, seed=data_seed + 3000
        )
        order = np.random.default_rng(data_seed + 3001).permutation(len(src))[:m_L]
        labeled = LabeledData(src.features[order], src.labels[order], src.num_classes)

    posterior = None
    if mode == "single":
        model, history = train_single(ds, t_true, cfg, test=tests[0], labeled=labeled)
        models = [model]
    elif mode == "multi":
        models, history = train_multi(ds, t_true, spec, cfg, tests=tests)
    elif mode == "unknown":
        model, posterior, history = train_unknown(ds, base, cfg, test=tests[0])
        models = [model]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    report = evaluate(models, tests, t_true, k=cfg.k)
    rad_ests = []
    for b, model in enumerate(models):
        feats = np.vstack(
            [col for col, blk in zip(ds.features, _blocks_of(spec)) if blk == b]
        )
        B = float(np.linalg.norm(model.weights))
        rad_ests.append(rademacher_estimate(B, feats, draws=50, seed=cfg.seed))
    if spec.n == 1:
        bound = _bounds.error_bound_topk(
            report.topk_risk,
            rad_ests[0],
            m_P,
            delta,
            cfg.k,
            spec.arity_total,
            spec.sizes[0],
        )
    else:
        R = min(0.99, max(max(report.per_risk), 0.01))
        bound = _bounds.error_bound_topk_multi(
            report.topk_risk, rad_ests, m_P, delta, cfg.k, spec, R
        )
    return RunResult(settings, models, posterior, history, report, bound, rad_ests, t_true)


def _blocks_of(spec: MultiProblemSpec) -> list[int]:
    out = []
    for b, count in enumerate(spec.counts):
        out.extend([b] * count)
    return out


def _scalar(x) -> float:
    return float(x)


def _summary_lines(result: RunResult) -> list[str]:
    s = result.settings
    rep = result.report
    lines = [
        f"preset={s.get('preset', '-')}",
        f"mode={s.get('mode', 'single')}",
        f"m_P={s.get('m_P')}",
        f"k={s.get('k')}",
        f"seed={s.get('seed', '0')}",
        f"final_acc={_scalar(np.mean(rep.per_accuracy))!r}",
        f"partial01={rep.partial01_risk!r}",
        f"topk_risk={rep.topk_risk!r}",
        f"rad_est={result.rad_ests[0]!r}",
        f"risk_bound={result.bound!r}",
    ]
    if result.posterior is not None:
        lines.append(f"posterior_argmax={result.posterior.argmax_name()}")
        lines.append(f"posterior_entropy={result.posterior.entropy()!r}")
    return lines


def _cmd_train(args) -> int:
    settings = _settings(args)
    result = _run_training(settings)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    write_history(os.path.join(out, "history.csv"), result.history)
    save_models(os.path.join(out, "model.txt"), result.models, result.posterior)
    lines = _summary_lines(result)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    rep = result.report
    print(
        f"final_acc={_scalar(np.mean(rep.per_accuracy))!r} "
        f"partial01={rep.partial01_risk!r} risk_bound={result.bound!r}"
    )
    return 0


_SUM_LABELS = 10


def _cmd_sweep(args) -> int:
    settings = _settings(args)
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise ValueError("empty value list")
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    rows = []
    for value in values:
        run = dict(settings)
        if args.axis == "M":
            m = int(value)
            if m < 1:
                raise ValueError("M must be positive")
            run.pop("preset", None)
            run.pop("file", None)
            run["expr"] = " + ".join(f"y{i+1}" for i in range(m))
            run["arity"] = str(m)
            run.setdefault("labels", str(_SUM_LABELS))
        elif args.axis == "k":
            run["k"] = value
        else:
            run["m_P"] = value
        result = _run_training(run)
        rep = result.report
        rows.append(
            f"{args.axis},{value},{_scalar(np.mean(rep.per_accuracy))!r},"
            f"{rep.partial01_risk!r},{rep.topk_risk!r}"
        )
        print(f"{args.axis}={value} final_acc={_scalar(np.mean(rep.per_accuracy))!r}")
    with open(os.path.join(out, "sweep.csv"), "w") as fh:
        fh.write("axis,value,final_acc,partial01_risk,topk_risk\n")
        fh.write("\n".join(rows) + "\n")
    return 0


# --- wmc / bounds / matrix ------------------------------------------------------


def _cmd_wmc(args) -> int:
    from .wmc import WeightAssignment, formula_from_vectors, semantic_loss
    from .wmc import wmc as count

    vectors = []
    for part in args.vectors.split(";"):
        part = part.strip()
        if part:
            vectors.append(tuple(int(v) for v in part.split(",")))
    weights = {}
    with open(args.weights) as fh:
        for lineno, raw in enumerate(fh.read().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            pieces = line.split()
            if len(pieces) != 3:
                raise ValueError(f"{args.weights}:{lineno}: want 'pos label weight'")
            weights[(int(pieces[0]), int(pieces[1]))] = float(pieces[2])
    phi = formula_from_vectors(vectors, exclusive=args.exclusive)
    w = WeightAssignment(weights)
    value = count(phi, w, method=args.method)
    print(f"wmc={value!r} sl={semantic_loss(phi, w)!r}")
    return 0


def _parse_kv(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"bounds arguments are key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _kv_spec(kv: dict[str, str]) -> MultiProblemSpec:
    blocks = _parse_blocks(kv["blocks"])
    return MultiProblemSpec(
        counts=tuple(c for c, _ in blocks), sizes=tuple(sp.size for _, sp in blocks)
    )


def _kv_list(kv: dict[str, str], key: str) -> list[float]:
    return [float(v) for v in kv[key].split(",") if v]


def _kv_flag(kv: dict[str, str], key: str, default: bool = False) -> bool:
    if key not in kv:
        return default
    value = kv[key].lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise ValueError(f"{key} must be true or false, got {kv[key]!r}")


def _cmd_bounds(args) -> int:
    kv = _parse_kv(args.params)
    name = args.name
    flags = ""
    if name == "risk_transfer_M":
        value = _bounds.risk_transfer_M(float(kv["t"]), int(kv["c"]), int(kv["M"]))
    elif name == "phi_I":
        value = _bounds.phi_I(float(kv["t"]), int(kv["I"]), int(kv["M"]), int(kv["c"]))
    elif name == "sample_complexity_known":
        value = _bounds.sample_complexity_known(
            int(kv["c"]), int(kv["M"]), float(kv["eps"]), float(kv["delta"]),
            int(kv["d_F"]), float(kv.get("C", "1")),
        )
    elif name == "sample_complexity_sensitive":
        value, valid = _bounds.sample_complexity_sensitive(
            int(kv["c"]), int(kv["M"]), float(kv["eps"]), float(kv["delta"]),
            int(kv["d_F"]), float(kv.get("C", "1")),
        )
        flags = f" valid={'true' if valid else 'false'}"
    elif name == "sample_complexity_multi":
        value = _bounds.sample_complexity_multi(
            _kv_spec(kv), float(kv["eps"]), float(kv["delta"]), float(kv["R"]),
            [int(x) for x in _kv_list(kv, "d")], float(kv.get("C", "1")),
            _kv_flag(kv, "proof_form"),
        )
    elif name == "sample_complexity_unknown":
        value = _bounds.sample_complexity_unknown(
            int(kv["c"]), int(kv["M"]), float(kv["eps"]), float(kv["delta"]),
            float(kv["r"]), int(kv["d_F"]), int(kv["d_G"]), float(kv.get("C", "1")),
        )
    elif name == "vc_bounds":
        mode = kv.get("mode", "unknown")
        if mode == "multi":
            value = _bounds.vc_bounds(
                "multi", spec=_kv_spec(kv), d=[int(x) for x in _kv_list(kv, "d")]
            )
        else:
            value = _bounds.vc_bounds(
                mode, d_F=int(kv["d_F"]), d_G=int(kv.get("d_G", "0")),
                M=int(kv["M"]), c=int(kv["c"]),
            )
    elif name == "error_bound_topk":
        value = _bounds.error_bound_topk(
            float(kv["emp"]), float(kv["rad"]), int(kv["m_P"]), float(kv["delta"]),
            int(kv["k"]), int(kv["M"]), int(kv["c"]),
        )
    elif name == "error_bound_topk_multi":
        value = _bounds.error_bound_topk_multi(
            float(kv["emp"]), _kv_list(kv, "rads"), int(kv["m_P"]),
            float(kv["delta"]), int(kv["k"]), _kv_spec(kv), float(kv["R"]),
        )
    elif name == "risk_transfer_ambiguity":
        value = _bounds.risk_transfer_ambiguity(
            float(kv["gamma"]), float(kv["t"]), int(kv["c"]), int(kv["M"])
        )
    elif name == "risk_transfer_multi":
        value = _bounds.risk_transfer_multi(
            float(kv["t"]), _kv_spec(kv), float(kv["R"]),
            _kv_flag(kv, "proof_form", default=True),
        )
    else:
        raise ValueError(f"unknown calculator {name!r}")
    print(f"{name} = {value:.12g}{flags}")
    return 0


def _cmd_matrix(args) -> int:
    t = _transition_from_flags(args)
    if isinstance(t, TransitionSpace):
        raise ValueError("matrix needs a single transition, not a space")
    c = t.sizes[args.position - 1]
    if args.marginal == "uniform":
        marginal = np.full(c, 1.0 / c)
    else:
        marginal = np.array([float(v) for v in args.marginal.split(",")])
    tm = build_transition_matrix(t, marginal, position=args.position)
    for s, row in zip(tm.outputs, tm.entries):
        print(f"s={s}: " + " ".join(f"{v:.12g}" for v in row))
    ok, rank = left_invertible(tm)
    print(f"rank={rank}")
    print(f"left_invertible={'true' if ok else 'false'}")
    if args.test_invertible and not ok:
        return 1
    return 0


# --- parser -----------------------------------------------------------------------


def _add_transition_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help="named preset")
    p.add_argument("--file", help="transition text file")
    p.add_argument("--expr", help="inline transition expression")
    p.add_argument("--arity", type=int, help="positions for --expr")
    p.add_argument("--labels", type=int, help="labels per position for --expr")
    p.add_argument("--offset", type=int, default=0, help="display offset for --expr")
    p.add_argument("--blocks", help="block layout count:labels[:offset],...")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mipll",
        description="Weak supervision through transition maps: checks, training, bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="run unambiguity checks")
    _add_transition_flags(p)
    p.add_argument("--space-file", help="candidate space text file")
    p.add_argument("--true-index", type=int, help="candidate index for the space check")
    p.add_argument(
        "--conditions",
        required=True,
        help="comma list: M, 1, I:<pos+pos>, multi, space",
    )
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("train", help="train on a preset or config")
    p.add_argument("--preset")
    p.add_argument("--config")
    p.add_argument("--set", action="append", help="override key=value", default=[])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="artifact directory (default .)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="train across one axis")
    p.add_argument("--preset")
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[])
    p.add_argument("--seed", type=int)
    p.add_argument("--axis", choices=("M", "k", "m_P"), required=True)
    p.add_argument("--values", required=True, help="comma list of axis values")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("wmc", help="count one formula")
    p.add_argument("--vectors", required=True, help="label vectors '1,1;0,2'")
    p.add_argument("--weights", required=True, help="file of 'pos label weight' lines")
    p.add_argument("--exclusive", action="store_true")
    p.add_argument("--method", choices=("auto", "ie", "enumerate"), default="auto")
    p.set_defaults(func=_cmd_wmc)

    p = sub.add_parser("bounds", help="evaluate a bound calculator")
    p.add_argument("name")
    p.add_argument("params", nargs="*", help="key=value arguments")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("matrix", help="print a transition matrix and its rank")
    _add_transition_flags(p)
    p.add_argument("--marginal", default="uniform", help="'uniform' or comma probs")
    p.add_argument("--position", type=int, default=1)
    p.add_argument("--test-invertible", action="store_true")
    p.set_defaults(func=_cmd_matrix)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ExprError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
