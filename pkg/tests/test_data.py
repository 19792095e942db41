import numpy as np
import pytest

from robust_transfer.data import Dataset, corrupt_gaussian, gen_blobs, gen_factor_regression, load_csv, save_csv, \
    split
from robust_transfer.errors import InputError, ParseError


def test_blobs_counts_range_and_balance():
    ds = gen_blobs(3, 5, 10, seed=1)
    assert len(ds) == 30 and ds.dim == 5
    assert np.bincount(ds.labels).tolist() == [10, 10, 10]
    assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0
    assert ds.feature_range == (0.0, 1.0)


def test_blobs_zero_spread_collapses_classes():
    ds = gen_blobs(3, 6, 4, spread=0.0, seed=2)
    for c in range(3):
        pts = ds.inputs[ds.labels == c]
        assert np.array_equal(pts, np.repeat(pts[:1], len(pts), axis=0))


def test_blobs_errors_and_determinism():
    with pytest.raises(InputError):
        gen_blobs(1, 5, 10)
    with pytest.raises(InputError, match="fewer classes"):
        gen_blobs(40, 2, 1)
    a, b = gen_blobs(4, 8, 5, seed=3), gen_blobs(4, 8, 5, seed=3)
    assert a.inputs.tobytes() == b.inputs.tobytes()


def test_factor_regression_shares_inputs():
    a = gen_factor_regression(6, 40, 3, 0, seed=4)
    b = gen_factor_regression(6, 40, 3, 2, seed=4)
    assert np.array_equal(a.inputs, b.inputs) and not np.array_equal(a.labels, b.labels)
    assert a.labels.shape == (40, 1) and not a.is_classification


def test_factor_regression_identity_mixing_is_tanh():
    ds = gen_factor_regression(1, 30, 1, 0, seed=5, noise=0.0, mixing=np.eye(1))
    assert np.array_equal(ds.inputs, np.tanh(ds.labels))
    with pytest.raises(InputError):
        gen_factor_regression(3, 10, 4, 0)


def test_corrupt_gaussian():
    ds = gen_blobs(2, 4, 5, seed=6)
    same = corrupt_gaussian(ds, 0.0, seed=1)
    assert np.array_equal(same.inputs, ds.inputs)
    noisy = corrupt_gaussian(ds, 0.1, seed=1)
    assert noisy.inputs.shape == ds.inputs.shape and np.array_equal(noisy.labels, ds.labels)
    assert noisy.inputs.min() >= 0 and noisy.inputs.max() <= 1
    with pytest.raises(InputError):
        corrupt_gaussian(Dataset(ds.inputs, ds.labels), 0.1)
    with pytest.raises(InputError):
        corrupt_gaussian(ds, -0.1)


@pytest.mark.parametrize("severity", [0.04, 0.06, 0.10])
def test_corruption_std_matches_severity(severity):
    # interior values so clamping never triggers
    ds = Dataset(np.full((1000, 100), 0.5), np.zeros(1000, dtype=np.int64), feature_range=(0.0, 1.0))
    diff = corrupt_gaussian(ds, severity, seed=7).inputs - 0.5
    assert abs(diff.std() / severity - 1) <= 0.02


def test_split():
    ds = gen_blobs(2, 3, 50, seed=8)
    tr, te = split(ds, 0.8, seed=1)
    assert (len(tr), len(te)) == (80, 20)
    rows = sorted(map(tuple, np.vstack([tr.inputs, te.inputs])))
    assert rows == sorted(map(tuple, ds.inputs))
    tr2, _ = split(ds, 0.8, seed=1)
    assert np.array_equal(tr.inputs, tr2.inputs)
    with pytest.raises(InputError):
        split(ds, 1.0)


def test_csv_round_trip(tmp_path):
    for ds in (gen_blobs(3, 4, 5, seed=9), gen_factor_regression(5, 12, 2, 1, seed=9)):
        path = tmp_path / "d.csv"
        save_csv(ds, path)
        back = load_csv(path)
        assert back.inputs.tobytes() == ds.inputs.tobytes()
        assert np.array_equal(back.labels, ds.labels)


def test_csv_hand_fixture(tmp_path):
    path = tmp_path / "hand.csv"
    path.write_text("f0,f1,label\n0.5,1,0\n-2.25,3e-3,1\n0,0,2\n")
    ds = load_csv(path)
    assert np.array_equal(ds.inputs, [[0.5, 1.0], [-2.25, 0.003], [0.0, 0.0]])
    assert ds.labels.tolist() == [0, 1, 2]


@pytest.mark.parametrize("text, match", [
    ("f0,f1,label\n", "header only"),
    ("f0,f1,label\n1,2,0\n1,2\n", "line 3"),
    ("f0,f1,label\n1,x,0\n", "line 2"),
    ("f0,f1,target\n1,2,0\n", "line 1"),
    ("f0,label\nnan,0\n", "line 2"),
    ("", "empty"),
])
def test_csv_parse_errors(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ParseError, match=match):
        load_csv(path)
