import numpy as np
import pytest

import oracles
from wcecnn import evaluate as E

rng = np.random.default_rng(8)
labels = np.repeat(np.arange(6), 20)


def test_confusion_matches_loop_oracle():
    for _ in range(20):
        t = rng.integers(0, 6, 50)
        p = rng.integers(0, 6, 50)
        np.testing.assert_array_equal(E.confusion_matrix(t, p).counts, oracles.confusion(t, p))


def test_perfect_and_constant_classifiers():
    cm, rep = E.evaluate(lambda x: x, labels, labels)
    np.testing.assert_array_equal(cm.counts, np.diag([20] * 6))
    assert rep.mean == 1.0
    cm, rep = E.evaluate(lambda x: np.zeros_like(x), labels, labels)
    assert rep.per_class == (1.0, 0, 0, 0, 0, 0) and abs(rep.mean - 1 / 6) < 1e-12


def test_random_classifier_near_chance():
    t = np.repeat(np.arange(6), 10_000 // 6 + 1)[:10_000]
    _, rep = E.evaluate(lambda x: np.random.default_rng(0).integers(0, 6, len(x)), t, t)
    assert abs(rep.mean - 1 / 6) < 0.03


def test_rows_normalize_to_one():
    t = rng.integers(0, 6, 300)
    cm = E.confusion_matrix(t, rng.integers(0, 6, 300))
    np.testing.assert_allclose(cm.normalized().sum(axis=1), 1.0, atol=1e-9)
    assert cm.counts.sum(axis=1).tolist() == np.bincount(t, minlength=6).tolist()


def test_order_invariance():
    t = rng.integers(0, 6, 200)
    t[:6] = np.arange(6)
    p = rng.integers(0, 6, 200)
    perm = rng.permutation(200)
    a = E.report_from(E.confusion_matrix(t, p))
    b = E.report_from(E.confusion_matrix(t[perm], p[perm]))
    assert a == b


def test_missing_class_rejected():
    with pytest.raises(ValueError, match="no samples of Undefined"):
        E.report_from(E.confusion_matrix(np.arange(5), np.arange(5)))


def test_pair_accuracy():
    scores = np.zeros((4, 6))
    scores[:, 1] = [1, 0, 1, 0]
    scores[:, 4] = [0, 1, 0, 1]
    scores[:, 0] = 9  # ignored: only the two pair columns compete
    assert E.pair_accuracy(scores, np.array([1, 4, 4, 4]), (1, 4)) == 0.75


def test_report_and_confusion_csv(tmp_path):
    cm, rep = E.evaluate(lambda x: x, labels, labels)
    E.write_report_csv(rep, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "class,accuracy" and lines[1] == "Wall,100.0" and lines[-1] == "Mean,100.0"
    E.write_confusion_csv(cm, tmp_path / "c.csv", tmp_path / "n.csv")
    back = E.read_confusion_counts(tmp_path / "n.csv")
    np.testing.assert_array_equal(back.counts, cm.counts)


def test_features_csv(tmp_path):
    feats = rng.standard_normal((3, 512))
    E.write_features_csv(tmp_path / "f.csv", ["a", "b", "c"], [0, 1, 2], feats)
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert len(rows) == 4 and rows[0].startswith("sample_id,label_code,f0,") and rows[0].endswith("f511")
    assert [float(v) for v in rows[2].split(",")[2:]] == feats[1].tolist()


def test_heatmap_pixels_and_bytes(tmp_path):
    ident = E.ConfusionMatrix(np.diag([5] * 6))
    px = E.confusion_pixels(ident, cell=4)
    assert px.shape == (24, 24, 3)
    assert px[0, 0, 0] == 255 and px[0, 5, 0] == 0
    flat = E.confusion_pixels(E.ConfusionMatrix(np.ones((6, 6), int)), cell=4)
    assert len(np.unique(flat)) == 1
    E.render_confusion(ident, tmp_path / "a.ppm")
    E.render_confusion(ident, tmp_path / "b.ppm")
    data = (tmp_path / "a.ppm").read_bytes()
    assert data == (tmp_path / "b.ppm").read_bytes() and data.startswith(b"P6")
