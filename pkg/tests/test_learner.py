"""Datasets, trainers, evaluation, and the complexity estimate.

Training assertions here stay cheap and structural (determinism, gold
blindness, equivalences between the three trainers); the statistical
accuracy targets live in the acceptance suite.
"""

import math

import numpy as np
import pytest

from mipll import (
    LabeledData,
    MultiProblemSpec,
    ScoringModel,
    TrainConfig,
    TrainingDiverged,
    TransitionSpace,
    evaluate,
    load_labeled,
    load_models,
    load_weak,
    make_synthetic_dataset,
    materialize,
    rademacher_estimate,
    save_labeled,
    save_models,
    save_weak,
    train_multi,
    train_single,
    train_unknown,
    weak_labelize,
    write_history,
    LabelSpace,
    WeakDataset,
)


def onehot_data(labels, num_classes, scale=10.0):
    labels = np.asarray(labels, dtype=np.int64)
    features = scale * np.eye(num_classes)[labels]
    return LabeledData(features, labels, num_classes)


def identity_model(num_classes):
    w = np.hstack([np.eye(num_classes), np.zeros((num_classes, 1))])
    return ScoringModel(w)


# --- synthetic data ---------------------------------------------------------


def test_make_synthetic_shapes_and_determinism():
    data = make_synthetic_dataset(10, 500, dim=2, separation=4.0, seed=3)
    assert len(data) == 5000 and data.dim == 2
    np.testing.assert_array_equal(
        data.labels, np.repeat(np.arange(10), 500)
    )
    again = make_synthetic_dataset(10, 500, dim=2, separation=4.0, seed=3)
    np.testing.assert_array_equal(data.features, again.features)
    other = make_synthetic_dataset(10, 500, dim=2, separation=4.0, seed=4)
    assert not np.array_equal(data.features, other.features)


def test_make_synthetic_separation_controls_radius():
    wide = make_synthetic_dataset(4, 2000, separation=8.0, seed=0)
    tight = make_synthetic_dataset(4, 2000, separation=0.0, seed=0)
    # zero separation collapses every class mean to the origin
    for y in range(4):
        center = tight.features[tight.labels == y].mean(axis=0)
        assert np.linalg.norm(center) < 0.2
        far = wide.features[wide.labels == y].mean(axis=0)
        assert np.linalg.norm(far) > 3.0


def test_make_synthetic_validation():
    with pytest.raises(ValueError):
        make_synthetic_dataset(1, 10)
    with pytest.raises(ValueError):
        make_synthetic_dataset(3, 10, dim=1)


def test_labeled_data_validation():
    with pytest.raises(ValueError):
        LabeledData(np.zeros((3, 2)), np.array([0, 1]), 2)
    with pytest.raises(ValueError):
        LabeledData(np.zeros((2, 2)), np.array([0, 5]), 3)
    with pytest.raises(ValueError):
        LabeledData(np.zeros((2, 2)), np.array([0, 1]), 1)


# --- weak data --------------------------------------------------------------


def test_weak_labelize_consistency(sum2):
    pool = make_synthetic_dataset(10, 200, seed=1)
    ds = weak_labelize(pool, sum2, 500, seed=2)
    assert len(ds) == 500
    assert ds.spec == MultiProblemSpec.from_transition(sum2)
    for i in range(0, 500, 50):
        sample = ds.sample(i)
        assert sample.s == sum2.apply(sample.gold)
    again = weak_labelize(pool, sum2, 500, seed=2)
    np.testing.assert_array_equal(ds.s, again.s)
    np.testing.assert_array_equal(ds.gold, again.gold)


def test_weak_labelize_identity_is_supervised():
    ident = materialize("y1", arity=1, space=LabelSpace(10))
    pool = make_synthetic_dataset(10, 100, seed=5)
    ds = weak_labelize(pool, ident, 400, seed=6)
    np.testing.assert_array_equal(ds.s, ds.gold[:, 0])


def test_weak_labelize_sum_histogram(sum2):
    # uniform pools make P(s) proportional to the pair count min(s, 18-s)+1
    pool = make_synthetic_dataset(10, 300, seed=7)
    ds = weak_labelize(pool, sum2, 20000, seed=8)
    counts = np.bincount(ds.s, minlength=19)
    assert counts.argmax() == 9
    assert set(np.nonzero(counts)[0]) == set(range(19))
    expected = 20000 * 10 / 100
    assert abs(counts[9] - expected) < 6 * math.sqrt(expected)


def test_weak_labelize_validation(sum2, operator39):
    pool = make_synthetic_dataset(10, 50, seed=9)
    with pytest.raises(ValueError):
        weak_labelize(pool, sum2, 0)
    with pytest.raises(ValueError):
        weak_labelize([pool, pool], sum2, 10)
    with pytest.raises(ValueError):
        weak_labelize(make_synthetic_dataset(9, 50), sum2, 10)
    with pytest.raises(ValueError):
        weak_labelize(pool, operator39, 10)  # needs one pool per block


def test_weak_dataset_validation(sum2):
    spec = MultiProblemSpec.from_transition(sum2)
    col = np.zeros((4, 2))
    with pytest.raises(ValueError):
        WeakDataset((col,), np.zeros(4, dtype=int), None, spec)
    with pytest.raises(ValueError):
        WeakDataset((col, col), np.zeros(0, dtype=int), None, spec)
    with pytest.raises(ValueError):
        WeakDataset((col, col), np.zeros(4, dtype=int), np.zeros((4, 3), dtype=int), spec)


# --- trainers ----------------------------------------------------------------


def small_problem(t, m_P=300, seed=0, per_class=60):
    c = t.blocks[0][1].size
    pool = make_synthetic_dataset(c, per_class, seed=seed)
    test = make_synthetic_dataset(c, per_class, seed=seed + 1)
    ds = weak_labelize(pool, t, m_P, seed=seed + 2)
    return ds, test


def test_training_is_deterministic(sum2):
    ds, test = small_problem(sum2)
    cfg = TrainConfig(k=2, rate=0.5, epochs=4, batch_size=100, seed=3)
    model1, hist1 = train_single(ds, sum2, cfg, test=test)
    model2, hist2 = train_single(ds, sum2, cfg, test=test)
    np.testing.assert_array_equal(model1.weights, model2.weights)
    assert [h.topk_risk for h in hist1] == [h.topk_risk for h in hist2]
    assert [h.test_acc for h in hist1] == [h.test_acc for h in hist2]


def test_training_never_reads_gold(sum2):
    ds, test = small_problem(sum2, seed=11)
    scrambled = WeakDataset(
        ds.features, ds.s, np.zeros_like(ds.gold), ds.spec, ds.seed
    )
    cfg = TrainConfig(k=2, rate=0.5, epochs=3, batch_size=100, seed=1)
    model1, hist1 = train_single(ds, sum2, cfg, test=test)
    model2, hist2 = train_single(scrambled, sum2, cfg, test=test)
    np.testing.assert_array_equal(model1.weights, model2.weights)
    assert [h == h2 for h, h2 in zip(hist1, hist2)]


def test_zero_epochs_returns_init(sum2):
    ds, _ = small_problem(sum2)
    model, history = train_single(ds, sum2, TrainConfig(epochs=0, seed=7))
    assert history == []
    rng = np.random.default_rng(7)
    expected = ScoringModel.init(10, 2, rng)
    np.testing.assert_array_equal(model.weights, expected.weights)


def test_identity_transition_reduces_to_cross_entropy():
    ident = materialize("y1", arity=1, space=LabelSpace(4))
    pool = make_synthetic_dataset(4, 60, seed=13)
    ds = weak_labelize(pool, ident, 240, seed=14)
    cfg = TrainConfig(k=1, rate=0.5, epochs=5, seed=2)
    model, history = train_single(ds, ident, cfg)
    probs = model.forward(np.vstack([col for col in ds.features]))
    # k=1 under the identity map scores exactly the gold class
    ce = float(np.mean(-np.log(probs[np.arange(len(ds)), ds.s])))
    assert history[-1].topk_risk == pytest.approx(ce, rel=1e-12)
    assert math.isnan(history[-1].test_acc)  # no test set supplied


def test_supervised_term_alone_learns(sum2):
    pool = make_synthetic_dataset(10, 150, seed=17)
    test = make_synthetic_dataset(10, 150, seed=18)
    ds = weak_labelize(pool, sum2, 50, seed=19)
    cfg = TrainConfig(
        k=1, rate=0.5, epochs=80, batch_size=100, weak_weight=0.0, lam=1.0, seed=3
    )
    model, history = train_single(ds, sum2, cfg, test=test, labeled=pool)
    # nearest-true-mean is the exact Bayes rule for these equal-prior clusters
    radius = 4.0 / (2.0 * math.sin(math.pi / 10))
    angles = 2.0 * math.pi * np.arange(10) / 10
    means = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    d2 = ((test.features[:, None, :] - means[None]) ** 2).sum(axis=2)
    bayes = float(np.mean(d2.argmin(axis=1) == test.labels))
    assert history[-1].test_acc >= bayes - 0.02


def test_single_is_one_block_multi(sum2):
    ds, test = small_problem(sum2, seed=23)
    cfg = TrainConfig(k=2, rate=0.5, epochs=3, seed=5)
    spec = MultiProblemSpec.from_transition(sum2)
    single_model, single_hist = train_single(ds, sum2, cfg, test=test)
    models, hist = train_multi(ds, sum2, spec, cfg, tests=[test])
    np.testing.assert_array_equal(single_model.weights, models[0].weights)
    assert [h.topk_risk for h in hist] == [h.topk_risk for h in single_hist]


def test_multi_requires_matching_spec(sum2, operator39):
    ds, _ = small_problem(sum2, seed=29)
    with pytest.raises(ValueError):
        train_multi(ds, sum2, MultiProblemSpec((2,), (9,)), TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        train_single(ds, operator39, TrainConfig(epochs=1))


def test_alien_partial_labels_rejected(sum2, xor2):
    ds, _ = small_problem(sum2, seed=31)
    aliens = WeakDataset(
        (ds.features[0][:, :2], ds.features[1][:, :2]),
        np.full(len(ds), 5),
        None,
        MultiProblemSpec.from_transition(xor2),
    )
    with pytest.raises(ValueError, match="outside"):
        train_multi(
            aliens, xor2, aliens.spec, TrainConfig(epochs=1)
        )


def test_multi_block_training_runs(operator39):
    digits = make_synthetic_dataset(7, 150, seed=37)
    ops = make_synthetic_dataset(2, 150, seed=38)
    test_digits = make_synthetic_dataset(7, 100, seed=39)
    test_ops = make_synthetic_dataset(2, 100, seed=40)
    ds = weak_labelize([digits, ops], operator39, 1500, seed=41)
    spec = MultiProblemSpec.from_transition(operator39)
    cfg = TrainConfig(k=2, rate=0.5, epochs=10, batch_size=250, seed=6)
    models, history = train_multi(
        ds, operator39, spec, cfg, tests=[test_digits, test_ops]
    )
    assert len(models) == 2
    assert models[0].num_classes == 7 and models[1].num_classes == 2
    last = history[-1]
    assert len(last.per_block_acc) == 2
    assert last.test_acc == pytest.approx(
        (last.per_block_acc[0] + last.per_block_acc[1]) / 2
    )
    assert last.per_block_acc[1] > 0.7  # the binary block is easy
    assert last.test_acc > history[0].test_acc - 0.05


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_after_retries(sum2):
    ds, _ = small_problem(sum2, seed=43)
    bad_col = ds.features[0].copy()
    bad_col[0, 0] = np.inf
    broken = WeakDataset((bad_col, ds.features[1]), ds.s, None, ds.spec)
    with pytest.raises(TrainingDiverged) as err:
        train_single(broken, sum2, TrainConfig(epochs=2, seed=1))
    assert err.value.epoch == 1


def test_train_config_validation():
    for kwargs in (
        dict(k=0),
        dict(rate=0.0),
        dict(epochs=-1),
        dict(batch_size=-2),
        dict(lam=-0.1),
        dict(weak_weight=-1.0),
        dict(unknown_mode="soft"),
    ):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


# --- unknown transition --------------------------------------------------------


def test_singleton_space_matches_known_trainer(sum2):
    ds, test = small_problem(sum2, seed=47)
    cfg = TrainConfig(k=2, rate=0.5, epochs=3, seed=9)
    model, hist = train_single(ds, sum2, cfg, test=test)
    space = TransitionSpace((sum2,))
    model_u, post, hist_u = train_unknown(ds, space, cfg, test=test)
    np.testing.assert_allclose(model_u.weights, model.weights, atol=1e-9)
    assert post.argmax_index() == 0
    assert post.entropy() == pytest.approx(0.0, abs=1e-12)
    for a, b in zip(hist, hist_u):
        assert b.topk_risk == pytest.approx(a.topk_risk, abs=1e-9)
        assert b.test_acc == pytest.approx(a.test_acc, abs=1e-9)


def test_unknown_on_identically_ambiguous_pair(quartic_pair):
    pool = make_synthetic_dataset(2, 80, seed=53)
    true = quartic_pair.candidates[0]
    ds = weak_labelize(pool, true, 300, seed=54)
    cfg = TrainConfig(k=1, rate=0.5, epochs=5, seed=4)
    model, post, history = train_unknown(ds, quartic_pair, cfg)
    assert len(history) == 5
    # the candidates define the same map, so nothing can separate them
    assert post.entropy() == pytest.approx(math.log(2), abs=1e-12)
    assert np.all(ds.s == 0)


def test_unknown_hard_mode_runs(sum2, wsum_grid):
    pool = make_synthetic_dataset(10, 80, seed=59)
    ds = weak_labelize(pool, sum2, 400, seed=60)
    cfg = TrainConfig(k=2, rate=0.5, epochs=4, seed=11, unknown_mode="hard")
    space = TransitionSpace((sum2, wsum_grid.candidates[10]))
    model, post, history = train_unknown(ds, space, cfg)
    assert post.entropy() == pytest.approx(0.0, abs=1e-9)  # hard mode commits
    assert len(history) == 4
    assert history[-1].posterior_argmax is not None


def test_unknown_requires_single_block(operator39):
    digits = make_synthetic_dataset(7, 30, seed=61)
    ops = make_synthetic_dataset(2, 30, seed=62)
    ds = weak_labelize([digits, ops], operator39, 50, seed=63)
    with pytest.raises(ValueError):
        train_unknown(ds, TransitionSpace((operator39,)), TrainConfig(epochs=1))


# --- evaluation -----------------------------------------------------------------


def test_evaluate_perfect_model(sum2):
    test = onehot_data([3, 4, 5, 6, 0, 9], 10)
    report = evaluate(identity_model(10), test, sum2, k=1)
    assert report.accuracy == 1.0
    assert report.per_risk == (0.0,)
    assert report.risk_sum == 0.0
    assert report.partial01_risk == 0.0
    assert report.num_groups == 3
    assert report.topk_risk < 0.01
    assert report.confusions[0].zero_one_risk == pytest.approx(0.0, abs=1e-12)
    assert report.confusions[0].accuracy == pytest.approx(1.0, abs=1e-12)


def test_evaluate_constant_model(sum2):
    labels = np.repeat(np.arange(10), 10)
    test = onehot_data(labels, 10)
    constant = ScoringModel(np.zeros((10, 11)))  # uniform scores, argmax 0
    report = evaluate(constant, test, sum2, k=3)
    assert report.accuracy == pytest.approx(0.1)
    assert report.per_risk[0] == pytest.approx(0.9)
    assert report.confusions[0].zero_one_risk == pytest.approx(0.9, abs=1e-12)


def test_evaluate_regroups_sequentially(sum2):
    test = onehot_data([3, 4, 5, 6], 10)
    report = evaluate(identity_model(10), test, sum2, k=1)
    # consecutive pairs (3,4) and (5,6) feed the partial metrics
    assert report.num_groups == 2
    assert report.partial01_risk == 0.0


def test_evaluate_risk_decomposition(sum2):
    rng = np.random.default_rng(67)
    labels = rng.integers(0, 10, size=40)
    test = onehot_data(labels, 10, scale=0.0)  # features carry no signal
    model = ScoringModel(rng.uniform(-1, 1, size=(10, 11)))
    report = evaluate(model, test, sum2)
    conf = report.confusions[0]
    assert conf.zero_one_risk == pytest.approx(report.per_risk[0], abs=1e-12)
    assert conf.accuracy == pytest.approx(report.per_accuracy[0], abs=1e-12)
    assert conf.matrix.sum() == pytest.approx(1.0, abs=1e-12)


def test_evaluate_validation(sum2, operator39):
    test = onehot_data([1, 2], 10)
    with pytest.raises(ValueError):
        evaluate([identity_model(10)] * 2, [test, test], sum2)
    with pytest.raises(ValueError):
        evaluate(identity_model(10), [], sum2)
    with pytest.raises(ValueError):
        evaluate(identity_model(10), onehot_data([3], 10), sum2)  # cannot regroup
    with pytest.raises(ValueError):
        evaluate(identity_model(10), test, operator39)


# --- artifacts -------------------------------------------------------------------


def test_labeled_csv_round_trip(tmp_path):
    data = make_synthetic_dataset(5, 20, seed=71)
    path = tmp_path / "labeled.csv"
    save_labeled(path, data)
    back = load_labeled(path, 5)
    np.testing.assert_array_equal(back.features, data.features)
    np.testing.assert_array_equal(back.labels, data.labels)


def test_weak_csv_round_trip_drops_gold(sum2, tmp_path):
    pool = make_synthetic_dataset(10, 30, seed=73)
    ds = weak_labelize(pool, sum2, 40, seed=74)
    path = tmp_path / "weak.csv"
    save_weak(path, ds)
    text = path.read_text()
    assert "gold" not in text.splitlines()[0]
    back = load_weak(path, ds.spec)
    assert back.gold is None
    np.testing.assert_array_equal(back.s, ds.s)
    for mine, theirs in zip(back.features, ds.features):
        np.testing.assert_array_equal(mine, theirs)


def test_load_weak_rejects_ragged_files(sum2, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("block,idx,f1,f2,s\n1,0,0.0,0.0,3\n")
    with pytest.raises(ValueError):
        load_weak(path, MultiProblemSpec.from_transition(sum2))


def test_model_file_round_trip(tmp_path, sum2):
    rng = np.random.default_rng(79)
    models = [ScoringModel(rng.uniform(-1, 1, size=(10, 3))) for _ in range(2)]
    path = tmp_path / "model.txt"
    save_models(path, models)
    back, logits = load_models(path)
    assert logits is None
    for a, b in zip(models, back):
        np.testing.assert_array_equal(a.weights, b.weights)


def test_model_file_posterior_round_trip(tmp_path, sum2, wsum_grid):
    model = ScoringModel(np.zeros((10, 3)))
    post_logits = np.array([0.5, -1.25, 3.0])
    from mipll import TransitionPosterior

    post = TransitionPosterior(post_logits, TransitionSpace(wsum_grid.candidates[:3]))
    path = tmp_path / "model.txt"
    save_models(path, [model], posterior=post)
    back, logits = load_models(path)
    np.testing.assert_array_equal(logits, post_logits)


def test_write_history_layout(tmp_path):
    from mipll import EpochStats

    rows = [
        EpochStats(1, 0.5, 0.25, 0.75),
        EpochStats(2, 0.25, 0.125, 0.875),
    ]
    path = tmp_path / "history.csv"
    write_history(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,topk_risk,partial01_risk,test_acc"
    assert lines[1] == "1,0.5,0.25,0.75"
    posterior_rows = [
        EpochStats(1, 0.5, 0.25, 0.75, (), 0.69, "sum"),
    ]
    write_history(path, posterior_rows)
    lines = path.read_text().splitlines()
    assert lines[0].endswith("posterior_entropy,posterior_argmax")
    assert lines[1].endswith("0.69,sum")


# --- complexity estimate -----------------------------------------------------------


def test_rademacher_zero_bound():
    rng = np.random.default_rng(83)
    X = rng.standard_normal((50, 2))
    assert rademacher_estimate(0.0, X, draws=5) == 0.0


def test_rademacher_homogeneity():
    rng = np.random.default_rng(89)
    X = rng.standard_normal((100, 2))
    one = rademacher_estimate(1.0, X, draws=20, seed=1)
    two = rademacher_estimate(2.0, X, draws=20, seed=1)
    assert two == pytest.approx(2 * one, rel=1e-9)
    assert one > 0


def test_rademacher_shrinks_with_sample_size():
    rng = np.random.default_rng(97)
    small = rng.standard_normal((100, 2))
    large = rng.standard_normal((1600, 2))
    est_small = rademacher_estimate(1.0, small, draws=30, seed=2)
    est_large = rademacher_estimate(1.0, large, draws=30, seed=2)
    assert est_large < est_small


def test_rademacher_validation():
    X = np.zeros((10, 2))
    with pytest.raises(ValueError):
        rademacher_estimate(-1.0, X)
    with pytest.raises(ValueError):
        rademacher_estimate(1.0, X, draws=0)
