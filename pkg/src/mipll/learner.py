"""Synthetic data, weak-label datasets, and gradient-descent trainers.

Three training settings share one core: a single classifier under a known
transition, one classifier per block under a known transition, and a single
classifier under an unknown transition drawn from a finite candidate space.
Models are softmax-linear throughout; the loss is the top-k count loss from
:mod:`.wmc`, optionally mixed with a cross-entropy term on a small labeled
set.

Everything is deterministic under (dataset seed, config seed): plain
full-batch or seeded mini-batch gradient descent, no hidden randomness.
Weak samples carry their gold labels for evaluation only; trainers read
datasets through :meth:`WeakDataset.training_view`, which does not expose
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .transitions import Transition, TransitionSpace
from .unambiguity import MultiProblemSpec
from .wmc import WMC_FLOOR, _count_and_grad_pairs


class TrainingDiverged(RuntimeError):
    """Loss became non-finite and retries ran out."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch


# --- datasets -------------------------------------------------------------


@dataclass
class LabeledData:
    """Fully labeled instances; labels are 0-based class indices."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be (N, D) aligned with labels")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if len(self.labels) and not (
            0 <= self.labels.min() and self.labels.max() < self.num_classes
        ):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def make_synthetic_dataset(
    num_classes: int,
    per_class: int,
    dim: int = 2,
    separation: float = 4.0,
    seed: int = 0,
) -> LabeledData:
    """Isotropic unit-variance Gaussian clusters, one mean per class.

    Means sit on a circle in the first two coordinates, scaled so adjacent
    means are ``separation`` apart; remaining coordinates are pure noise.
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if dim < 2:
        raise ValueError("need at least two feature dimensions")
    rng = np.random.default_rng(seed)
    radius = separation / (2.0 * math.sin(math.pi / num_classes))
    means = np.zeros((num_classes, dim))
    angles = 2.0 * math.pi * np.arange(num_classes) / num_classes
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    features = means[labels] + rng.standard_normal((len(labels), dim))
    return LabeledData(features, labels, num_classes)


@dataclass(frozen=True)
class WeakSample:
    """One weak observation: M instances and the partial label they produced."""

    features: tuple[np.ndarray, ...]
    s: int
    gold: tuple[int, ...] | None = None


@dataclass
class WeakDataset:
    """Column-stored weak samples plus the block layout they follow.

    ``gold`` is evaluation-only; training code must go through
    :meth:`training_view`.
    """

    features: tuple[np.ndarray, ...]
    s: np.ndarray
    gold: np.ndarray | None
    spec: MultiProblemSpec
    seed: int = 0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.int64)
        if len(self.features) != self.spec.arity_total:
            raise ValueError("feature columns must match the total arity")
        if len(self.s) == 0:
            raise ValueError("a weak dataset needs at least one sample")
        for col in self.features:
            if len(col) != len(self.s):
                raise ValueError("feature columns must align with s")
        if self.gold is not None:
            self.gold = np.asarray(self.gold, dtype=np.int64)
            if self.gold.shape != (len(self.s), self.spec.arity_total):
                raise ValueError("gold block must be (m_P, M)")

    def __len__(self) -> int:
        return len(self.s)

    def training_view(self) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
        """What trainers are allowed to see: features and partial labels."""
        return self.features, self.s

    def sample(self, i: int) -> WeakSample:
        gold = None if self.gold is None else tuple(int(y) for y in self.gold[i])
        return WeakSample(
            tuple(col[i] for col in self.features), int(self.s[i]), gold
        )


def _position_blocks(spec: MultiProblemSpec) -> list[int]:
    out = []
    for b, count in enumerate(spec.counts):
        out.extend([b] * count)
    return out


def weak_labelize(
    labeled: LabeledData | Sequence[LabeledData],
    t: Transition,
    m_P: int,
    seed: int = 0,
) -> WeakDataset:
    """Draw m_P weak samples: independent instances per position, s by the map.

    ``labeled`` is one pool, or one pool per block in the multi setting.
    Gold labels ride along for evaluation.
    """
    if m_P < 1:
        raise ValueError("m_P must be positive")
    spec = MultiProblemSpec.from_transition(t)
    pools = [labeled] if isinstance(labeled, LabeledData) else list(labeled)
    if len(pools) != spec.n:
        raise ValueError(f"expected {spec.n} labeled pools, got {len(pools)}")
    for pool, c in zip(pools, spec.sizes):
        if pool.num_classes != c:
            raise ValueError("pool classes must match the block label count")
    rng = np.random.default_rng(seed)
    blocks_of = _position_blocks(spec)
    cols, gold = [], np.zeros((m_P, spec.arity_total), dtype=np.int64)
    for pos, b in enumerate(blocks_of):
        idx = rng.integers(0, len(pools[b]), size=m_P)
        cols.append(pools[b].features[idx])
        gold[:, pos] = pools[b].labels[idx]
    s = t.apply_batch(gold)
    return WeakDataset(tuple(cols), s, gold, spec, seed)


# --- CSV artifacts ---------------------------------------------------------


def save_labeled(path, data: LabeledData) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(f"f{j+1}" for j in range(data.dim)) + ",label\n")
        for row, y in zip(data.features, data.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(y)}\n")


def load_labeled(path, num_classes: int) -> LabeledData:
    with open(path) as fh:
        lines = fh.read().splitlines()
    rows = [line.split(",") for line in lines[1:] if line]
    features = np.array([[float(v) for v in r[:-1]] for r in rows])
    labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    return LabeledData(features, labels, num_classes)


def save_weak(path, ds: WeakDataset) -> None:
    """One row per instance: block, sample index, features, s (no gold)."""
    dims = {col.shape[1] for col in ds.features}
    if len(dims) != 1:
        raise ValueError("the weak CSV format needs a shared feature dimension")
    (dim,) = dims
    blocks_of = _position_blocks(ds.spec)
    with open(path, "w") as fh:
        fh.write("block,idx," + ",".join(f"f{j+1}" for j in range(dim)) + ",s\n")
        for i in range(len(ds)):
            for pos, b in enumerate(blocks_of):
                feats = ",".join(repr(float(v)) for v in ds.features[pos][i])
                fh.write(f"{b+1},{i},{feats},{int(ds.s[i])}\n")


def load_weak(path, spec: MultiProblemSpec) -> WeakDataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    rows = [line.split(",") for line in lines[1:] if line]
    M = spec.arity_total
    if len(rows) % M:
        raise ValueError("row count is not a multiple of the arity")
    m = len(rows) // M
    dim = len(rows[0]) - 3
    cols = [np.zeros((m, dim)) for _ in range(M)]
    s = np.zeros(m, dtype=np.int64)
    for i in range(m):
        for pos in range(M):
            r = rows[i * M + pos]
            cols[pos][i] = [float(v) for v in r[2:-1]]
            s[i] = int(r[-1])
    return WeakDataset(tuple(cols), s, None, spec)


# --- model ------------------------------------------------------------------


def _phi(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.ones((len(X), 1))])


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ScoringModel:
    """Softmax of a linear map; weights are (classes, features + 1), bias last."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a matrix")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1] - 1

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Probability rows, one per instance; rows sum to 1."""
        return _softmax(_phi(X) @ self.weights.T)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Argmax labels; ties resolve to the smallest label."""
        return np.argmax(self.forward(X), axis=1)

    @classmethod
    def init(cls, num_classes: int, dim: int, rng: np.random.Generator) -> "ScoringModel":
        # small uniform init keeps early score rows near uniform
        return cls(rng.uniform(-0.01, 0.01, size=(num_classes, dim + 1)))


def save_models(path, models: Sequence[ScoringModel], posterior=None) -> None:
    with open(path, "w") as fh:
        fh.write(f"models {len(models)}\n")
        for i, m in enumerate(models):
            fh.write(f"model {i} classes {m.num_classes} dim {m.dim}\n")
            for row in m.weights:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        if posterior is not None:
            fh.write(f"posterior {len(posterior.logits)}\n")
            fh.write(" ".join(repr(float(v)) for v in posterior.logits) + "\n")


def load_models(path) -> tuple[list[ScoringModel], np.ndarray | None]:
    with open(path) as fh:
        lines = [line for line in fh.read().splitlines() if line]
    n = int(lines[0].split()[1])
    models, at = [], 1
    for _ in range(n):
        head = lines[at].split()
        classes = int(head[3])
        rows = [[float(v) for v in lines[at + 1 + r].split()] for r in range(classes)]
        models.append(ScoringModel(np.array(rows)))
        at += 1 + classes
    logits = None
    if at < len(lines) and lines[at].startswith("posterior"):
        logits = np.array([float(v) for v in lines[at + 1].split()])
    return models, logits


# --- training ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Plain gradient descent settings shared by all trainers."""

    k: int = 1
    rate: float = 0.5
    epochs: int = 50
    batch_size: int = 0  # 0 = full batch
    lam: float = 0.0  # weight of the labeled cross-entropy term
    weak_weight: float = 1.0  # weight of the weak top-k term
    seed: int = 0
    unknown_mode: str = "mixture"  # or "hard"
    posterior_rate: float | None = None  # defaults to rate

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.rate > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0 or self.batch_size < 0:
            raise ValueError("epochs and batch size must be nonnegative")
        if self.lam < 0 or self.weak_weight < 0:
            raise ValueError("term weights must be nonnegative")
        if self.unknown_mode not in ("mixture", "hard"):
            raise ValueError("unknown_mode must be mixture or hard")


@dataclass
class EpochStats:
    """One history row; posterior fields stay None outside train_unknown."""

    epoch: int
    topk_risk: float
    partial01_risk: float
    test_acc: float
    per_block_acc: tuple[float, ...] = ()
    posterior_entropy: float | None = None
    posterior_argmax: str | None = None


def write_history(path, history: Sequence[EpochStats]) -> None:
    """history.csv artifact; float cells use shortest round-trip repr."""
    with_post = any(h.posterior_entropy is not None for h in history)
    cols = "epoch,topk_risk,partial01_risk,test_acc"
    if with_post:
        cols += ",posterior_entropy,posterior_argmax"
    with open(path, "w") as fh:
        fh.write(cols + "\n")
        for h in history:
            row = (
                f"{h.epoch},{repr(h.topk_risk)},{repr(h.partial01_risk)},"
                f"{repr(h.test_acc)}"
            )
            if with_post:
                row += f",{repr(h.posterior_entropy)},{h.posterior_argmax}"
            fh.write(row + "\n")


def _batch_select(rows: list[np.ndarray], pre: np.ndarray, k: int) -> np.ndarray:
    """Top-k preimage rows for every sample at once; (m, k', M) labels."""
    m = len(rows[0])
    probs = np.ones((m, len(pre)), dtype=np.float64)
    for pos in range(pre.shape[1]):
        probs *= rows[pos][:, pre[:, pos].astype(np.int64)]
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    return pre.astype(np.int64)[order]


def _group_by_s(s: np.ndarray) -> dict[int, np.ndarray]:
    values, inverse = np.unique(s, return_inverse=True)
    return {int(v): np.where(inverse == j)[0] for j, v in enumerate(values)}


def _weak_pass(probs_list, groups, t: Transition, k: int, want_grad: bool):
    """Total top-k loss over the batch, plus d loss/d probability rows."""
    M = len(probs_list)
    loss_sum = 0.0
    dp = [np.zeros_like(p) for p in probs_list] if want_grad else None
    for s, idx in groups.items():
        sel = _batch_select([probs_list[pos][idx] for pos in range(M)], t.preimages[s], k)
        for j, i in enumerate(idx):
            rows = [probs_list[pos][i] for pos in range(M)]
            value, pairs = _count_and_grad_pairs(rows, sel[j])
            if value <= WMC_FLOOR:
                loss_sum += -math.log(WMC_FLOOR)
                continue  # clamped flat region
            loss_sum += -math.log(value)
            if want_grad:
                for pos, label, g in pairs:
                    dp[pos][i, label] += -g / value
    return loss_sum, dp


def _softmax_backprop(probs: np.ndarray, dp: np.ndarray) -> np.ndarray:
    dots = np.einsum("ij,ij->i", dp, probs)
    return probs * (dp - dots[:, None])


def _topk_risk(probs_list, groups, t: Transition, k: int) -> float:
    loss, _ = _weak_pass(probs_list, groups, t, k, want_grad=False)
    return loss / len(probs_list[0])


def _partial01_risk(probs_list, s: np.ndarray, t: Transition) -> float:
    preds = np.stack([np.argmax(p, axis=1) for p in probs_list], axis=1)
    return float(np.mean(t.apply_batch(preds) != s))


def _mean_accuracy(models, tests) -> tuple[float, tuple[float, ...]]:
    if not tests:
        return math.nan, ()
    accs = tuple(
        float(np.mean(m.predict(data.features) == data.labels))
        for m, data in zip(models, tests)
    )
    return float(np.mean(accs)), accs


def _normalize_tests(tests) -> list[LabeledData]:
    if tests is None:
        return []
    if isinstance(tests, LabeledData):
        return [tests]
    return list(tests)


class _Descent:
    """Shared epoch driver: snapshots, divergence retries, history rows."""

    MAX_RETRIES = 5

    def __init__(self, cfg: TrainConfig, m: int):
        self.cfg = cfg
        self.m = m
        self.lr = cfg.rate
        self.retries = 0

    def batches(self, rng: np.random.Generator):
        if self.cfg.batch_size == 0 or self.cfg.batch_size >= self.m:
            yield np.arange(self.m)
            return
        perm = rng.permutation(self.m)
        for start in range(0, self.m, self.cfg.batch_size):
            yield perm[start : start + self.cfg.batch_size]

    def handle_bad_epoch(self, epoch: int) -> None:
        self.retries += 1
        if self.retries > self.MAX_RETRIES:
            raise TrainingDiverged(epoch)
        self.lr *= 0.5


def _ce_term(model: ScoringModel, labeled: LabeledData, lam: float):
    """Mean cross-entropy and its weight gradient, scaled by lam."""
    Phi = _phi(labeled.features)
    probs = _softmax(Phi @ model.weights.T)
    picked = probs[np.arange(len(labeled)), labeled.labels]
    loss = -float(np.log(np.maximum(picked, 1e-300)).mean()) * lam
    dz = probs.copy()
    dz[np.arange(len(labeled)), labeled.labels] -= 1.0
    grad = (lam / len(labeled)) * dz.T @ Phi
    return loss, grad


def train_multi(
    ds: WeakDataset,
    t: Transition,
    spec: MultiProblemSpec,
    cfg: TrainConfig,
    tests=None,
    labeled: LabeledData | None = None,
) -> tuple[list[ScoringModel], list[EpochStats]]:
    """Joint descent of one classifier per block on the shared top-k loss.

    ``tests`` (one labeled set per block) feeds the history's accuracy
    column; ``labeled`` (single-block only) adds the cross-entropy term
    weighted by ``cfg.lam``.
    """
    if spec != ds.spec:
        raise ValueError("dataset block layout does not match the problem spec")
    features, s = ds.training_view()
    missing = set(np.unique(s)) - set(t.preimages)
    if missing:
        raise ValueError(f"partial labels {sorted(missing)} outside the map's outputs")
    tests = _normalize_tests(tests)
    if labeled is not None and spec.n != 1:
        raise ValueError("the labeled term is supported for a single block only")
    blocks_of = _position_blocks(spec)
    rng = np.random.default_rng(cfg.seed)
    models = [
        ScoringModel.init(c, features[blocks_of.index(b)].shape[1], rng)
        for b, c in enumerate(spec.sizes)
    ]
    Phis = [_phi(col) for col in features]
    groups_all = _group_by_s(s)
    driver = _Descent(cfg, len(ds))
    history: list[EpochStats] = []

    def measure(epoch: int) -> EpochStats:
        probs = [models[blocks_of[pos]].forward(features[pos]) for pos in range(len(features))]
        mean_acc, accs = _mean_accuracy(models, tests)
        return EpochStats(
            epoch,
            _topk_risk(probs, groups_all, t, cfg.k),
            _partial01_risk(probs, s, t),
            mean_acc,
            accs,
        )

    for epoch in range(1, cfg.epochs + 1):
        while True:
            snapshot = [m.weights.copy() for m in models]
            rng_state = rng.bit_generator.state
            epoch_loss = 0.0
            for batch in driver.batches(rng):
                probs = [
                    _softmax(Phis[pos][batch] @ models[blocks_of[pos]].weights.T)
                    for pos in range(len(features))
                ]
                groups = _group_by_s(s[batch])
                loss_sum, dp = _weak_pass(probs, groups, t, cfg.k, want_grad=True)
                scale = cfg.weak_weight / len(batch)
                epoch_loss += cfg.weak_weight * loss_sum / len(ds)
                grads = [np.zeros_like(m.weights) for m in models]
                for pos in range(len(features)):
                    dz = _softmax_backprop(probs[pos], dp[pos])
                    grads[blocks_of[pos]] += scale * dz.T @ Phis[pos][batch]
                if labeled is not None and cfg.lam > 0:
                    ce_loss, ce_grad = _ce_term(models[0], labeled, cfg.lam)
                    epoch_loss += ce_loss * len(batch) / len(ds)
                    grads[0] += ce_grad
                for m, g in zip(models, grads):
                    m.weights -= driver.lr * g
            if math.isfinite(epoch_loss):
                break
            for m, w in zip(models, snapshot):
                m.weights = w
            rng.bit_generator.state = rng_state
            driver.handle_bad_epoch(epoch)
        history.append(measure(epoch))
    return models, history


def train_single(
    ds: WeakDataset,
    t: Transition,
    cfg: TrainConfig,
    test: LabeledData | None = None,
    labeled: LabeledData | None = None,
) -> tuple[ScoringModel, list[EpochStats]]:
    """Single-classifier trainer; the one-block case of :func:`train_multi`."""
    spec = MultiProblemSpec.from_transition(t)
    if spec.n != 1:
        raise ValueError("train_single needs a single-block transition")
    models, history = train_multi(ds, t, spec, cfg, _normalize_tests(test), labeled)
    return models[0], history


# --- unknown transition --------------------------------------------------------


@dataclass
class TransitionPosterior:
    """Categorical weights over the candidate transitions, softmax of logits."""

    logits: np.ndarray
    space: TransitionSpace

    def q(self) -> np.ndarray:
        z = self.logits - self.logits.max()
        e = np.exp(z)
        return e / e.sum()

    def entropy(self) -> float:
        q = self.q()
        return float(-(q * np.log(np.maximum(q, 1e-300))).sum())

    def argmax_index(self) -> int:
        return int(np.argmax(self.q()))

    def argmax_tag(self):
        return self.space.tags[self.argmax_index()]

    def argmax_name(self) -> str:
        member = self.space.candidates[self.argmax_index()]
        return member.name or str(self.argmax_index())


_Q_SKIP = 1e-12  # candidates below this mixture weight skip the count work


def train_unknown(
    ds: WeakDataset,
    g: TransitionSpace,
    cfg: TrainConfig,
    test: LabeledData | None = None,
) -> tuple[ScoringModel, TransitionPosterior, list[EpochStats]]:
    """Jointly learn the classifier and a posterior over candidate transitions.

    Mixture mode descends -log sum_j q_j exp(-loss_j) per sample in both the
    model and the posterior logits.  Hard mode alternates: pick the candidate
    with the lowest mean loss, then take a plain descent epoch under it.
    A candidate that cannot produce a sample's s contributes count 0 there.
    """
    features, s = ds.training_view()
    members = list(g.candidates)
    spec = MultiProblemSpec.from_transition(members[0])
    if spec.n != 1:
        raise ValueError("the unknown-transition trainer is single-block")
    if spec != ds.spec:
        raise ValueError("dataset block layout does not match the candidates")
    tests = _normalize_tests(test)
    M = spec.arity_total
    rng = np.random.default_rng(cfg.seed)
    model = ScoringModel.init(spec.sizes[0], features[0].shape[1], rng)
    logits = np.zeros(len(members))
    Phis = [_phi(col) for col in features]
    groups_all = _group_by_s(s)
    covered = [
        {s_val: t_j.preimages[s_val] for s_val in groups_all if s_val in t_j.preimages}
        for t_j in members
    ]
    driver = _Descent(cfg, len(ds))
    lr_post = cfg.posterior_rate if cfg.posterior_rate is not None else cfg.rate
    history: list[EpochStats] = []

    def candidate_counts(probs, groups, j: int, want_grad: bool):
        """Per-sample counts v_ij (0 where s is uncovered) and grad pairs."""
        values = np.zeros(len(probs[0]))
        pairs_by_sample: dict[int, list] = {}
        for s_val, idx in groups.items():
            pre = covered[j].get(s_val)
            if pre is None:
                continue
            sel = _batch_select([probs[pos][idx] for pos in range(M)], pre, cfg.k)
            for jj, i in enumerate(idx):
                rows = [probs[pos][i] for pos in range(M)]
                value, pairs = _count_and_grad_pairs(rows, sel[jj])
                values[i] = min(max(value, 0.0), 1.0)
                if want_grad:
                    pairs_by_sample[i] = pairs
        return values, pairs_by_sample

    def posterior() -> TransitionPosterior:
        return TransitionPosterior(logits.copy(), g)

    def measure(epoch: int) -> EpochStats:
        probs = [model.forward(col) for col in features]
        post = posterior()
        j_hat = post.argmax_index()
        t_hat = members[j_hat]
        # risks are reported under the current best candidate
        values, _ = candidate_counts(probs, groups_all, j_hat, want_grad=False)
        topk = float(np.mean(-np.log(np.maximum(values, WMC_FLOOR))))
        preds = np.stack([np.argmax(p, axis=1) for p in probs], axis=1)
        partial01 = float(np.mean(t_hat.apply_batch(preds) != s))
        mean_acc, accs = _mean_accuracy([model], tests)
        return EpochStats(
            epoch, topk, partial01, mean_acc, accs, post.entropy(), post.argmax_name()
        )

    for epoch in range(1, cfg.epochs + 1):
        while True:
            snapshot = model.weights.copy()
            logit_snapshot = logits.copy()
            rng_state = rng.bit_generator.state
            epoch_loss = 0.0
            for batch in driver.batches(rng):
                probs = [_softmax(Phis[pos][batch] @ model.weights.T) for pos in range(M)]
                groups = _group_by_s(s[batch])
                q = TransitionPosterior(logits, g).q()
                if cfg.unknown_mode == "hard":
                    # dataset-level argmin candidate, then one plain step under it
                    means = []
                    for j in range(len(members)):
                        values, _ = candidate_counts(probs, groups, j, want_grad=False)
                        means.append(
                            float(np.mean(-np.log(np.maximum(values, WMC_FLOOR))))
                        )
                    j_hat = int(np.argmin(means))
                    logits[:] = -1e3
                    logits[j_hat] = 0.0
                    t_hat = members[j_hat]
                    usable = {
                        sv: idx for sv, idx in groups.items() if sv in covered[j_hat]
                    }
                    loss_sum, dp = _weak_pass(probs, usable, t_hat, cfg.k, want_grad=True)
                    epoch_loss += cfg.weak_weight * loss_sum / len(ds)
                    dz_scale = cfg.weak_weight / len(batch)
                    grad = np.zeros_like(model.weights)
                    for pos in range(M):
                        dz = _softmax_backprop(probs[pos], dp[pos])
                        grad += dz_scale * dz.T @ Phis[pos][batch]
                    model.weights -= driver.lr * grad
                    continue
                values = np.zeros((len(members), len(batch)))
                pairs_all: list[dict] = [{} for _ in members]
                for j in range(len(members)):
                    if q[j] < _Q_SKIP:
                        continue  # negligible mixture weight, count treated as 0
                    values[j], pairs_all[j] = candidate_counts(
                        probs, groups, j, want_grad=True
                    )
                S = q @ values
                S_safe = np.maximum(S, WMC_FLOOR)
                epoch_loss += cfg.weak_weight * float(-np.log(S_safe).mean()) * (
                    len(batch) / len(ds)
                )
                dp = [np.zeros_like(p) for p in probs]
                live = S > WMC_FLOOR
                for j in range(len(members)):
                    if q[j] < _Q_SKIP:
                        continue
                    for i, pairs in pairs_all[j].items():
                        if not live[i]:
                            continue
                        scale = -q[j] / S[i]
                        for pos, label, gval in pairs:
                            dp[pos][i, label] += scale * gval
                dz_scale = cfg.weak_weight / len(batch)
                grad = np.zeros_like(model.weights)
                for pos in range(M):
                    dz = _softmax_backprop(probs[pos], dp[pos])
                    grad += dz_scale * dz.T @ Phis[pos][batch]
                # clamped samples are flat: they contribute no posterior pull
                term = np.zeros_like(values)
                term[:, live] = 1.0 - values[:, live] / S[live][None, :]
                dlogits = (q[:, None] * term).mean(axis=1)
                model.weights -= driver.lr * grad
                logits -= lr_post * dlogits
            if math.isfinite(epoch_loss):
                break
            model.weights = snapshot
            logits = logit_snapshot
            rng.bit_generator.state = rng_state
            driver.handle_bad_epoch(epoch)
        history.append(measure(epoch))
    return model, posterior(), history


# --- evaluation -----------------------------------------------------------------


@dataclass
class ConfusionStats:
    """Joint (gold, predicted) frequency estimates; off-diagonal mass is risk."""

    matrix: np.ndarray

    @property
    def zero_one_risk(self) -> float:
        return float(self.matrix.sum() - np.trace(self.matrix))

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.matrix))


@dataclass
class EvalReport:
    """Held-out metrics; partial risks come from sequentially regrouped tests."""

    per_accuracy: tuple[float, ...]
    per_risk: tuple[float, ...]
    risk_sum: float
    confusions: tuple[ConfusionStats, ...]
    partial01_risk: float
    topk_risk: float
    num_groups: int

    @property
    def accuracy(self) -> float:
        return self.per_accuracy[0]


def evaluate(models, tests, t: Transition, k: int = 1) -> EvalReport:
    """Risks and confusion stats on labeled tests, plus regrouped partial risks.

    Each block's test stream is cut into consecutive tuples of its arity; the
    tuples' gold labels produce s, so partial risks need no weak dataset.
    """
    models = [models] if isinstance(models, ScoringModel) else list(models)
    tests = _normalize_tests(tests)
    if len(models) != len(tests) or not tests:
        raise ValueError("need one nonempty test set per model")
    spec = MultiProblemSpec.from_transition(t)
    if len(models) != spec.n:
        raise ValueError(f"expected {spec.n} models, got {len(models)}")
    accs, risks, confusions = [], [], []
    preds_all = []
    for m, data in zip(models, tests):
        if len(data) == 0:
            raise ValueError("test sets must be nonempty")
        preds = m.predict(data.features)
        preds_all.append(preds)
        count = np.zeros((data.num_classes, data.num_classes))
        np.add.at(count, (data.labels, preds), 1.0)
        confusions.append(ConfusionStats(count / len(data)))
        accs.append(float(np.mean(preds == data.labels)))
        risks.append(1.0 - accs[-1])
    blocks_of = _position_blocks(spec)
    num_groups = min(
        len(tests[b]) // count for b, count in zip(range(spec.n), spec.counts)
    )
    if num_groups == 0:
        raise ValueError("test sets are too small to regroup")
    gold = np.zeros((num_groups, spec.arity_total), dtype=np.int64)
    pred_vec = np.zeros_like(gold)
    probs_list = []
    offset_in_block = [0] * spec.n
    for pos, b in enumerate(blocks_of):
        r = offset_in_block[b]
        offset_in_block[b] += 1
        take = np.arange(num_groups) * spec.counts[b] + r
        gold[:, pos] = tests[b].labels[take]
        pred_vec[:, pos] = preds_all[b][take]
        probs_list.append(models[b].forward(tests[b].features[take]))
    s = t.apply_batch(gold)
    partial01 = float(np.mean(t.apply_batch(pred_vec) != s))
    topk = _topk_risk(probs_list, _group_by_s(s), t, k)
    return EvalReport(
        tuple(accs),
        tuple(risks),
        float(sum(risks)),
        tuple(confusions),
        partial01,
        topk,
        num_groups,
    )


# --- complexity estimate ----------------------------------------------------------


def rademacher_estimate(
    bound: float,
    features: np.ndarray,
    draws: int = 100,
    seed: int = 0,
    steps: int = 200,
) -> float:
    """Monte-Carlo Rademacher complexity of the norm-bounded linear class.

    For each sign draw the supremum of the mean correlation over the ball
    ||w|| <= bound is found by projected gradient ascent (the objective is
    linear, so the iterate reaches the boundary and stays).
    """
    if bound < 0:
        raise ValueError("the norm bound must be nonnegative")
    if draws < 1:
        raise ValueError("need at least one draw")
    Phi = _phi(np.asarray(features, dtype=np.float64))
    m = len(Phi)
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(draws):
        eps = rng.integers(0, 2, size=m) * 2 - 1
        target = eps @ Phi / m
        norm = float(np.linalg.norm(target))
        if norm == 0.0 or bound == 0.0:
            continue
        w = np.zeros_like(target)
        step = bound / (norm * 20.0)  # reaches the boundary well inside the budget
        for _ in range(steps):
            w = w + step * target
            wn = float(np.linalg.norm(w))
            if wn > bound:
                w *= bound / wn
        total += float(w @ target)
    return total / draws
