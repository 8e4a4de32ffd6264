import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csgaze.evaluation import (
    ABLATION_CONFIGS,
    PAIR_PRESETS,
    SUBSET_PRESETS,
    ablation_matrix,
    accuracy,
    ap_over_runs,
    attention_report,
    average_precision,
    class_subset_eval,
    export_report,
    f1_per_class,
    metrics_report,
    read_predictions,
    report_from_probabilities,
    subsample_ap_run,
    subset_preset,
    write_predictions,
)
from csgaze.training import loss_binary_ce, loss_categorical_ce
from csgaze.types import GazeClass, PredictionRecord

from oracles import brute_accuracy, brute_average_precision, brute_f1


def random_instance(rng):
    n_classes = int(rng.integers(2, 6))
    n = int(rng.integers(1, 51))
    return n_classes, rng.integers(n_classes, size=n), rng.integers(n_classes, size=n)


def test_metrics_match_brute_force_on_1000_instances():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        k, preds, labels = random_instance(rng)
        worst = max(worst, np.abs(f1_per_class(preds, labels, k) - brute_f1(preds, labels, k)).max())
        worst = max(worst, abs(accuracy(preds, labels) - brute_accuracy(preds, labels)))
        y = rng.random(len(labels)) < 0.4
        y[rng.integers(len(y))] = True
        # coarse scores force ties
        scores = np.round(rng.random(len(y)), 1)
        worst = max(worst, abs(average_precision(scores, y) - brute_average_precision(scores, y)))
    assert worst <= 1e-9


def test_closed_forms():
    assert loss_categorical_ce([0.2] * 5, 3) == pytest.approx(math.log(5), abs=1e-12)
    assert loss_categorical_ce([0.7, 0.2, 0.1], 1) == pytest.approx(-math.log(0.2), abs=1e-12)
    assert loss_categorical_ce([0.0, 1.0], 1) == 0.0
    assert loss_binary_ce(1.0, 1) == 0.0 and loss_binary_ce(0.0, 1) == pytest.approx(-math.log(1e-12))
    assert average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(5 / 6, abs=1e-12)
    assert round(average_precision([0.9, 0.8, 0.7], [1, 0, 1]), 4) == 0.8333
    assert average_precision([0.3], [1]) == 1.0
    assert average_precision([0.9, 0.8, 0.1, 0.0], [1, 1, 0, 0]) == 1.0


def test_f1_hand_count():
    # class 0: TP=8, FP=2, FN=4
    labels = [0] * 8 + [1] * 2 + [0] * 4
    preds = [0] * 8 + [0] * 2 + [1] * 4
    assert f1_per_class(preds, labels, 2)[0] == pytest.approx(16 / 22, abs=1e-12)


def test_degenerate_class_is_flagged():
    r = metrics_report([0, 1, 0], [0, 1, 0], ["a", "b", "c"])
    assert r.f1 == [1.0, 1.0, 0.0]
    assert r.degenerate_classes == ["c"]


def test_errors():
    with pytest.raises(ValueError):
        f1_per_class([0, 1], [0], 2)
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [0, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40),
       st.randoms(use_true_random=False))
def test_permutation_invariance(pairs, rnd):
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    p, y = zip(*pairs)
    ps, ys = zip(*shuffled)
    assert np.array_equal(f1_per_class(p, y, 4), f1_per_class(ps, ys, 4))
    assert accuracy(p, y) == accuracy(ps, ys)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), min_size=2, max_size=30).filter(any), st.data())
def test_ap_monotone_when_a_positive_moves_up(labels, data):
    n = len(labels)
    scores = list(np.linspace(1.0, 0.0, n))
    pos = [i for i, v in enumerate(labels) if v]
    i = data.draw(st.sampled_from(pos))
    j = data.draw(st.integers(0, i))
    moved = labels[:]
    moved.insert(j, moved.pop(i))
    assert average_precision(scores, moved) >= average_precision(scores, labels) - 1e-15


def test_ap_over_runs():
    assert ap_over_runs(lambda s: 0.7, 10) == (0.7, 0.0)
    mean, std = ap_over_runs(lambda s: s / 100, 100)
    assert mean == pytest.approx(0.495, abs=1e-12)
    assert ap_over_runs(lambda s: 0.3, 1) == (0.3, 0.0)
    with ThreadPoolExecutor(4) as ex:
        assert ap_over_runs(lambda s: s / 100, 100, ex) == (mean, std)

    def bad(seed):
        if seed == 3:
            raise ValueError("boom")
        return 0.5

    with pytest.raises(RuntimeError, match="run 3"):
        ap_over_runs(bad, 5)


def test_subsample_protocol_is_deterministic():
    rng = np.random.default_rng(1)
    scores, labels = rng.random(200), rng.random(200) < 0.1
    run = subsample_ap_run(scores, labels)
    assert run(4) == run(4)
    mean, std = ap_over_runs(run, 20)
    assert 0 < mean <= 1 and std > 0


# ------------------------------------------------------------- class subsets

def test_subset_with_all_classes_is_identity():
    rng = np.random.default_rng(2)
    p = rng.dirichlet(np.ones(5), size=60)
    y = rng.integers(5, size=60)
    full = report_from_probabilities(p, y, [c.tag for c in GazeClass])
    assert class_subset_eval(p, y, range(5)).to_dict() == full.to_dict()


def test_subset_hand_example():
    # columns: Share, Mutual, Single, Miss, Void
    p = np.array([
        [0.30, 0.10, 0.20, 0.20, 0.20],  # Mutual -> Share wins inside {Mutual, Share}
        [0.05, 0.15, 0.40, 0.20, 0.20],  # Mutual -> Mutual
        [0.20, 0.30, 0.10, 0.10, 0.30],  # Share -> Mutual
        [0.40, 0.20, 0.10, 0.10, 0.20],  # Share -> Share
        [0.10, 0.10, 0.60, 0.10, 0.10],  # Single, dropped
        [0.30, 0.20, 0.10, 0.10, 0.30],  # Mutual -> Share
        [0.10, 0.50, 0.10, 0.20, 0.10],  # Mutual -> Mutual
        [0.25, 0.25, 0.20, 0.10, 0.20],  # Share -> Mutual (tie, first subset class wins)
        [0.20, 0.10, 0.10, 0.50, 0.10],  # Share -> Share
        [0.10, 0.10, 0.10, 0.10, 0.60],  # Void, dropped
    ])
    y = [1, 1, 0, 0, 2, 1, 1, 0, 0, 4]
    r = class_subset_eval(p, y, subset_preset("2:mutual+share"))
    assert r.class_names == ["Mutual", "Share"]
    # rows true (Mutual, Share), columns predicted
    assert r.confusion == [[2, 2], [2, 2]]
    assert r.n_samples == 8


def test_subset_perfect_model():
    y = np.array([0, 1, 0, 1, 2])
    p = np.full((5, 5), 0.1)
    p[np.arange(5), y] = 0.6
    r = class_subset_eval(p, y, [GazeClass.MUTUAL, GazeClass.SHARE])
    assert r.f1 == [1.0, 1.0]


def test_subset_errors_and_presets():
    p = np.full((2, 5), 0.2)
    with pytest.raises(ValueError):
        class_subset_eval(p, [4, 4], [0, 1])
    with pytest.raises(ValueError):
        class_subset_eval(p, [0, 1], [0])
    assert len(SUBSET_PRESETS) == 6 and len(PAIR_PRESETS) == 3
    assert subset_preset("lah+sa") == (0, 2)


# --------------------------------------------------------------- attention

class T:
    def __init__(self, att, label):
        self.merge_attention, self.label = att, label


def test_attention_report_rows():
    r = attention_report([T((0.5, 0.5), c) for c in (0, 1, 1, 4)])
    assert r.rows["Share"] == (0.5, 0.5)
    assert r.omitted == ["Single", "Miss"]
    rng = np.random.default_rng(0)
    traces = []
    for _ in range(50):
        a = rng.random()
        traces.append(T((a, 1 - a), int(rng.integers(5))))
    rep = attention_report(traces)
    for s, f in rep.rows.values():
        assert abs(s + f - 1) <= 1e-6
    assert json.loads(rep.to_json())["columns"] == ["scene", "face"]


# ---------------------------------------------------------------- ablation

def test_ablation_matrix_has_seven_rows():
    seen = []

    def run(mods):
        seen.append(mods)
        return metrics_report([0, 1], [0, 1], ["a", "b"])

    table = ablation_matrix(run)
    assert list(table.rows) == list(ABLATION_CONFIGS) == seen
    assert len(table.table().splitlines()) == 8
    with pytest.raises(ValueError):
        ablation_matrix(run, ["X"])


# -------------------------------------------------------------------- files

def test_prediction_file_round_trip(tmp_path):
    recs = [PredictionRecord.from_logits(f"s{i}", np.arange(5.0) * i) for i in range(4)]
    write_predictions(recs, [0, 1, -1, 3], tmp_path / "p.jsonl")
    ids, labels, probs = read_predictions(tmp_path / "p.jsonl")
    assert ids == ["s0", "s1", "s2", "s3"]
    assert labels.tolist() == [0, 1, -1, 3]
    assert np.allclose(probs, [r.probabilities for r in recs], atol=1e-12)


def test_export_report(tmp_path):
    r = metrics_report([0, 1, 1], [0, 1, 0], ["a", "b"])
    paths = export_report(r, tmp_path, "m", plot=True)
    assert json.loads(paths[0].read_text())["accuracy"] == pytest.approx(2 / 3)
    assert "macro F1" in paths[1].read_text()
