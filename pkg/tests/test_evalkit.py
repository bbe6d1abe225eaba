import json
import os

import numpy as np
import pytest
from PIL import Image

from ufdanet.services.datakit import read_manifest, split_records
from ufdanet.services.evalkit import (
    REPORT_FILE,
    ROC_FILE,
    ScoreSet,
    auc,
    diagnose_features,
    emit_report,
    evaluate_run,
    pad_metrics,
    read_score_dump,
    roc_curve,
    score,
    score_records,
    write_score_dump,
    youden_threshold,
)
from ufdanet.utils.errors import InputError


def scores_of(live, attack) -> ScoreSet:
    return ScoreSet(list(live) + list(attack), [1] * len(live) + [0] * len(attack))


def pair_count_auc(score_set: ScoreSet) -> float:
    live = score_set.scores[score_set.labels == 1]
    attack = score_set.scores[score_set.labels == 0]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in live for b in attack)
    return wins / (len(live) * len(attack))


def exhaustive_youden(score_set: ScoreSet) -> float:
    live = score_set.scores[score_set.labels == 1]
    attack = score_set.scores[score_set.labels == 0]
    best = 0.0
    for cut in list(np.unique(score_set.scores)) + [np.inf]:
        best = max(best, float((live >= cut).mean() - (attack >= cut).mean()))
    return best


def random_score_sets(n_sets: int = 200, seed: int = 0):
    rng = np.random.default_rng(seed)
    for _ in range(n_sets):
        size = int(rng.integers(2, 33))
        labels = np.zeros(size, dtype=np.int64)
        labels[rng.choice(size, size=int(rng.integers(1, size)), replace=False)] = 1
        # pontuações quantizadas para produzir empates
        scores = np.round(rng.uniform(size=size), int(rng.integers(1, 4)))
        yield ScoreSet(scores, labels)


# ==================== ROC / AUC / YOUDEN ====================

def test_roc_examples():
    separated = roc_curve(scores_of([0.9, 0.8], [0.2, 0.1]))
    assert (0.0, 1.0) in [(f, t) for f, t, _ in separated.points()]

    flat = roc_curve(scores_of([0.5, 0.5], [0.5]))
    assert [(f, t) for f, t, _ in flat.points()] == [(0.0, 0.0), (1.0, 1.0)]

    mixed = roc_curve(scores_of([0.9, 0.4], [0.6, 0.1]))
    at_cut = [(f, t) for f, t, h in mixed.points() if h == 0.4]
    assert at_cut == [(0.5, 1.0)]
    between = [(f, t) for f, t, h in mixed.points() if h == 0.6]
    assert between == [(0.5, 0.5)]


def test_roc_is_monotone():
    for score_set in random_score_sets(50, seed=1):
        roc = roc_curve(score_set)
        assert np.all(np.diff(roc.fpr) >= 0)
        assert np.all(np.diff(roc.tpr) >= 0)


def test_auc_examples():
    assert auc(roc_curve(scores_of([0.9, 0.8], [0.2, 0.1]))) == 1.0
    assert auc(roc_curve(scores_of([0.2, 0.1], [0.9, 0.8]))) == 0.0
    assert auc(roc_curve(scores_of([0.9, 0.4], [0.6, 0.1]))) == pytest.approx(0.75, abs=1e-12)


def test_auc_matches_pair_counting():
    for score_set in random_score_sets():
        assert abs(auc(roc_curve(score_set)) - pair_count_auc(score_set)) <= 1e-12


@pytest.mark.parametrize('transform', [
    lambda s: s ** 3,
    lambda s: np.sqrt(s),
    lambda s: 0.1 + 0.5 * s,
])
def test_auc_is_invariant_to_monotone_maps(transform):
    for score_set in random_score_sets(50, seed=2):
        mapped = ScoreSet(transform(score_set.scores), score_set.labels)
        assert abs(auc(roc_curve(mapped)) - auc(roc_curve(score_set))) <= 1e-9


def test_youden_examples():
    tau, j = youden_threshold(roc_curve(scores_of([0.9, 0.8], [0.2, 0.1])))
    assert j == 1.0
    assert tau == pytest.approx(0.5)

    _, j = youden_threshold(roc_curve(scores_of([0.3, 0.3], [0.3, 0.3])))
    assert j == 0.0


def test_youden_matches_exhaustive_search():
    for score_set in random_score_sets(seed=3):
        tau, j = youden_threshold(roc_curve(score_set))
        assert j == pytest.approx(exhaustive_youden(score_set), abs=1e-12)
        report = pad_metrics(score_set, tau)
        assert 1.0 - report.bpcer - report.apcer == pytest.approx(j, abs=1e-12)


def test_youden_prefers_smallest_threshold_on_ties():
    # cortes em 0.8 e 0.4 empatam com J = 0.5; fica o menor
    tau, j = youden_threshold(roc_curve(scores_of([0.9, 0.4], [0.6, 0.1])))
    assert j == pytest.approx(0.5)
    assert tau == pytest.approx(0.25)


def test_single_class_is_rejected():
    with pytest.raises(InputError):
        roc_curve(scores_of([0.9, 0.8], []))
    with pytest.raises(InputError):
        pad_metrics(scores_of([], [0.1, 0.2]), 0.5)


def test_score_set_validation():
    with pytest.raises(InputError):
        ScoreSet([0.1, 0.2], [1])
    with pytest.raises(InputError):
        ScoreSet([0.1, 1.2], [1, 0])
    with pytest.raises(InputError):
        ScoreSet([0.1, 0.2], [1, 2])


# ==================== MÉTRICAS PAD ====================

def test_pad_metrics_counting_example():
    attack = [0.6, 0.7] + [0.1] * 8
    live = [0.3] + [0.9] * 9
    report = pad_metrics(scores_of(live, attack), 0.5)
    assert report.apcer == pytest.approx(0.2)
    assert report.bpcer == pytest.approx(0.1)
    assert report.acer == pytest.approx(0.15)
    assert report.acer == (report.apcer + report.bpcer) / 2
    assert report.hter == report.acer
    assert (report.tp, report.fp, report.tn, report.fn) == (9, 2, 8, 1)


def test_pad_metrics_boundaries():
    score_set = scores_of([0.9, 0.8], [0.2, 0.1])
    tau, _ = youden_threshold(roc_curve(score_set))
    perfect = pad_metrics(score_set, tau)
    assert perfect.apcer == perfect.bpcer == perfect.acer == 0.0

    everything_live = pad_metrics(score_set, 0.0)
    assert everything_live.bpcer == 0.0 and everything_live.apcer == 1.0

    tie = pad_metrics(scores_of([0.5], [0.5]), 0.5)
    assert tie.bpcer == 0.0 and tie.apcer == 1.0

    with pytest.raises(InputError):
        pad_metrics(score_set, 1.5)


def test_error_rates_are_monotone_in_threshold():
    for score_set in random_score_sets(30, seed=4):
        reports = [pad_metrics(score_set, tau) for tau in np.linspace(0, 1, 21)]
        apcer = [r.apcer for r in reports]
        bpcer = [r.bpcer for r in reports]
        assert all(a >= b for a, b in zip(apcer, apcer[1:]))
        assert all(a <= b for a, b in zip(bpcer, bpcer[1:]))
        assert all(r.acer == (r.apcer + r.bpcer) / 2 for r in reports)


# ==================== ARQUIVOS ====================

def test_score_dump_round_trip(tmp_path):
    original = ScoreSet([0.125, 0.9, 1 / 3], [1, 1, 0], 'test', ['a', 'b', 'c'])
    path = write_score_dump(original, str(tmp_path / 'scores.tsv'))
    restored = read_score_dump(path)
    assert restored.sample_ids == ['a', 'b', 'c']
    assert np.array_equal(restored.scores, original.scores)
    assert np.array_equal(restored.labels, original.labels)

    with pytest.raises(InputError):
        read_score_dump(str(tmp_path / 'missing.tsv'))


def test_emit_report_is_idempotent_and_plot_is_readable(tmp_path):
    score_set = scores_of([0.9, 0.7, 0.4], [0.6, 0.2, 0.1])
    roc = roc_curve(score_set)
    tau, j = youden_threshold(roc)
    report = pad_metrics(score_set, tau, youden_j=j)

    paths = emit_report(report, str(tmp_path), roc)
    with open(paths['report'], 'rb') as f:
        first = f.read()
    loaded = json.loads(first)
    assert loaded['auc'] == report.auc and loaded['acer'] == report.acer
    assert loaded['threshold'] == report.threshold
    assert 'hter_mapping' in loaded

    emit_report(report, str(tmp_path), roc)
    with open(paths['report'], 'rb') as f:
        assert f.read() == first

    assert os.path.getsize(paths['roc']) > 0
    with Image.open(paths['roc']) as image:
        assert image.format == 'PNG'
        image.verify()


# ==================== PONTUAÇÃO COM MODELO ====================

def test_score_is_deterministic_and_bounded(tiny_state):
    image = np.random.default_rng(0).uniform(size=(48, 48, 3)).astype(np.float32)
    first = score(tiny_state, image, (10, 10, 24, 24))
    assert first == score(tiny_state, image, (10, 10, 24, 24))
    assert 0.0 <= first <= 1.0
    with pytest.raises(InputError):
        score(tiny_state, image, None)
    with pytest.raises(InputError):
        score(tiny_state, image, (40, 40, 24, 24))


def test_score_accepts_face_box_covering_the_image(tiny_state):
    image = np.random.default_rng(1).uniform(size=(32, 40, 3)).astype(np.float32)
    value = score(tiny_state, image, (0, 0, 40, 32))
    assert 0.0 < value < 1.0


def test_evaluate_run_writes_outputs(tiny_state, synthetic_manifest, tmp_path):
    records = read_manifest(synthetic_manifest)
    result = evaluate_run(tiny_state, records, str(tmp_path / 'eval'), batch_size=5)
    report = result.report
    for key in ('report', 'roc', 'scores_test'):
        assert os.path.exists(result.paths[key])
    assert os.path.basename(result.paths['report']) == REPORT_FILE
    assert os.path.basename(result.paths['roc']) == ROC_FILE
    assert report.n_live == 8 and report.n_attack == 8
    assert report.acer == (report.apcer + report.bpcer) / 2

    dumped = read_score_dump(result.paths['scores_test'])
    recomputed = pad_metrics(dumped, report.threshold)
    assert recomputed.apcer == report.apcer and recomputed.bpcer == report.bpcer
    assert auc(roc_curve(dumped)) == report.auc

    again = score_records(tiny_state, split_records(records, 'test'), batch_size=5)
    assert np.array_equal(again.scores, result.test_scores.scores)


def test_dev_threshold_needs_dev_split(tiny_state, synthetic_manifest, tmp_path):
    with pytest.raises(InputError):
        evaluate_run(tiny_state, read_manifest(synthetic_manifest), str(tmp_path), threshold_split='dev')


def test_diagnose_features(tiny_state, synthetic_manifest):
    records = split_records(read_manifest(synthetic_manifest), 'test')
    diagnostics = diagnose_features(tiny_state, records, batch_size=4)
    assert diagnostics.n_samples == 8
    assert 0.0 <= diagnostics.mean_abs_cos_l_d <= 1.0
    assert 0.0 < diagnostics.mean_p_domain_dhat < 1.0
    assert -1.0 <= diagnostics.mean_cos_ltilde_l <= 1.0
    assert diagnostics == diagnose_features(tiny_state, records, batch_size=4)
