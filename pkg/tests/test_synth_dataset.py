import colorsys

import numpy as np
import pytest

from wcecnn import dataset as D
from wcecnn.synth import CLASS_NAMES, ClassLabel, generate


def mean_hue(img):
    """Hue in degrees of the mean colour."""
    r, g, b = np.asarray(img, dtype=float).reshape(-1, 3).mean(axis=0) / 255
    return colorsys.rgb_to_hsv(r, g, b)[0] * 360


def test_generate_is_deterministic():
    for label in ClassLabel:
        np.testing.assert_array_equal(generate(label, 7, 96), generate(label, 7, 96))
    assert not np.array_equal(generate(ClassLabel.WALL, 1, 96), generate(ClassLabel.WALL, 2, 96))


def test_generate_shape_and_side_limit():
    img = generate(ClassLabel.BUBBLES, 0, 128)
    assert img.shape == (128, 128, 3) and img.dtype == np.uint8
    with pytest.raises(ValueError):
        generate(ClassLabel.WALL, 0, 63)


def test_wall_hue_within_palette():
    hues = [mean_hue(generate(ClassLabel.WALL, s, 64)) for s in range(100)]
    assert 20 <= min(hues) and max(hues) <= 35


def test_turbid_is_green():
    hues = [mean_hue(generate(ClassLabel.TURBID, s, 64)) for s in range(50)]
    assert 70 <= min(hues) and max(hues) <= 110


def test_clear_blob_dark_region_area():
    # threshold oracle: pixels darker than half the median brightness
    for s in range(100):
        v = generate(ClassLabel.CLEAR_BLOB, s, 128).astype(float).max(axis=2)
        dark = v < 0.5 * np.median(v)
        assert dark.mean() >= 0.08 * 0.9, s


def _heuristic(img):
    """Hand-written pixel-statistics classifier: mean hue, darkness levels, dark-region shape."""
    v = np.asarray(img, dtype=float).max(axis=2) / 255
    med = np.median(v)
    hue = mean_hue(img)
    dark = v < 0.5 * med
    deep, mid, bright = dark.mean(), (v < 0.75 * med).mean(), (v > 1.15 * med).mean()
    if deep > 0.06 and bright > 0.05:
        return ClassLabel.BUBBLES
    if hue > 70 and mid < 0.03:
        return ClassLabel.TURBID
    if deep > 0.07:
        ys, xs = np.nonzero(dark)
        spread = np.hypot(ys - ys.mean(), xs - xs.mean()).mean()
        # an ellipse fills its own spread, a star of thin wedges does not
        fill = dark.sum() / (np.pi * 2 * max(spread, 1.0) ** 2)
        return ClassLabel.CLEAR_BLOB if fill > 0.5 else ClassLabel.WRINKLES
    if mid > 0.03 or 35 < hue < 70:
        return ClassLabel.UNDEFINED
    return ClassLabel.WALL if hue <= 35 else ClassLabel.TURBID


def test_heuristic_oracle_separates_classes():
    labels = [c for c in ClassLabel for _ in range(30)]
    pred = [_heuristic(generate(c, 1000 + i, 128)) for i, c in enumerate(labels)]
    assert np.mean(np.array(pred) == np.array(labels)) >= 0.8


def test_mean_hue_cannot_separate_wrinkles_from_blob():
    w = [mean_hue(generate(ClassLabel.WRINKLES, s, 64)) for s in range(100)]
    b = [mean_hue(generate(ClassLabel.CLEAR_BLOB, s, 64)) for s in range(100)]
    hues = np.array(w + b)
    truth = np.array([0] * 100 + [1] * 100)
    # best single threshold on mean hue, either direction
    best = max(max(np.mean((hues > t) == truth), np.mean((hues <= t) == truth)) for t in hues)
    assert best < 0.6


def test_wrinkles_and_blob_share_darkness_levels():
    # share of core-dark and ramp pixels, relative to the median, averaged over seeds
    def levels(label):
        out = []
        for s in range(40):
            v = generate(label, s, 96).astype(float).max(axis=2)
            r = v / np.median(v)
            out.append([(r < 0.45).mean(), ((r >= 0.45) & (r < 0.85)).mean()])
        return np.mean(out, axis=0)
    w, b = levels(ClassLabel.WRINKLES), levels(ClassLabel.CLEAR_BLOB)
    np.testing.assert_allclose(w, b, rtol=0.2)


def test_make_dataset_counts_and_uniqueness():
    ds = D.make_dataset(10, seed=4, side=64)
    assert len(ds) == 60 and ds.counts() == [10] * 6
    digests = {D.image_digest(s.image) for s in ds.samples}
    assert len(digests) == 60
    other = D.make_dataset(10, seed=5, side=64)
    assert digests.isdisjoint(D.image_digest(s.image) for s in other.samples)
    assert ds.meta["generator_version"] == 2 and ds.meta["counts"] == [10] * 6


def test_stratified_split_rounding_and_partition():
    ds = _cheap_dataset(100)
    train, test = D.stratified_split(ds, 1 / 6, seed=3)
    assert test.counts() == [17] * 6 and train.counts() == [83] * 6
    ids_train = {s.id for s in train.samples}
    ids_test = {s.id for s in test.samples}
    assert not ids_train & ids_test
    assert ids_train | ids_test == {s.id for s in ds.samples}
    again = D.stratified_split(ds, 1 / 6, seed=3)[1]
    assert [s.id for s in again.samples] == [s.id for s in test.samples]


def _cheap_dataset(per_class):
    samples = [D.Sample(f"{c}-{i}", c, np.zeros((2, 2, 3), np.uint8))
               for c in range(6) for i in range(per_class)]
    return D.Dataset(samples)


def test_split_rejects_tiny_classes_and_bad_fraction():
    ds = _cheap_dataset(1)
    with pytest.raises(ValueError, match="need >= 2"):
        D.stratified_split(ds, 0.5, 0)
    with pytest.raises(ValueError):
        D.stratified_split(_cheap_dataset(4), 1.0, 0)


def test_save_load_round_trip(tmp_path):
    ds = D.make_dataset(2, seed=9, side=64)
    D.save_dataset(ds, tmp_path / "d")
    back = D.load_dataset(tmp_path / "d")
    assert [s.id for s in back.samples] == [s.id for s in ds.samples]
    assert back.labels.tolist() == ds.labels.tolist()
    for a, b in zip(ds.samples, back.samples):
        np.testing.assert_array_equal(a.image, b.image)
    header, first = (tmp_path / "d" / "manifest.csv").read_text().splitlines()[:2]
    assert header == "relative_path,label_code,label_name"
    assert first == f"images/000000.ppm,0,{CLASS_NAMES[0]}"
    assert (tmp_path / "d" / "images" / "000000.ppm").read_bytes()[:2] == b"P6"


def test_load_errors(tmp_path):
    with pytest.raises(D.DatasetError, match="manifest"):
        D.load_dataset(tmp_path)
    ds = D.make_dataset(1, seed=0, side=64)
    D.save_dataset(ds, tmp_path / "d")
    (tmp_path / "d" / "images" / "000003.ppm").unlink()
    with pytest.raises(D.DatasetError, match="missing image"):
        D.load_dataset(tmp_path / "d")
    (tmp_path / "d" / "manifest.csv").write_text("relative_path,label_code,label_name\nx.ppm,9,Foo\n")
    with pytest.raises(D.DatasetError, match="bad label"):
        D.load_dataset(tmp_path / "d")
