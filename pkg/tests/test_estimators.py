import numpy as np
import pytest
from sklearn.base import clone

from robust_transfer.data import gen_blobs, gen_factor_regression, split
from robust_transfer.errors import InputError
from robust_transfer.estimators import RepresentationTransformer, TransferClassifier, TransferRegressor
from robust_transfer.model import rep_forward


@pytest.fixture(scope="module")
def blobs():
    train, test = split(gen_blobs(3, 10, 40, separation=8.0, seed=0), 0.8, seed=0)
    return train, test


@pytest.fixture(scope="module")
def rep(blobs):
    train, _ = blobs
    return RepresentationTransformer(hidden=(12, 8), epochs=20, batch_size=16, lr=0.05, adv_eps=0.02,
                                     attack_steps=3, random_state=1).fit(train.inputs, train.labels)


def test_transformer_outputs_features(rep, blobs):
    _, test = blobs
    Z = rep.transform(test.inputs)
    assert Z.shape == (len(test), 8)
    assert np.array_equal(Z, rep_forward(rep.representation_, test.inputs))
    assert rep.as_score(test.inputs, 0.0) == 0.0
    assert rep.as_score(test.inputs, 0.05, steps=5) > 0.0
    with pytest.raises(InputError):
        rep.transform(test.inputs[:, :5])


def test_transformer_is_deterministic(rep, blobs):
    train, _ = blobs
    again = clone(rep).fit(train.inputs, train.labels)
    for a, b in zip(rep.representation_.parameters(), again.representation_.parameters()):
        assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("method", ["lp", "ft", "lpft"])
def test_classifier_methods(rep, blobs, method):
    train, test = blobs
    labels = np.array(["a", "b", "c"])[train.labels]
    clf = TransferClassifier(rep, method=method, epochs=30, batch_size=16, lr=0.05, random_state=2)
    clf.fit(train.inputs, labels)
    assert set(clf.predict(test.inputs)) <= {"a", "b", "c"}
    proba = clf.predict_proba(test.inputs)
    assert proba.shape == (len(test), 3) and np.allclose(proba.sum(axis=1), 1.0)
    assert np.array_equal(clf.classes_[proba.argmax(axis=1)], clf.predict(test.inputs))
    assert clf.score(test.inputs, np.array(["a", "b", "c"])[test.labels]) >= 0.9


def test_lp_leaves_representation_untouched(rep, blobs):
    train, _ = blobs
    clf = TransferClassifier(rep, epochs=3, batch_size=16).fit(train.inputs, train.labels)
    for a, b in zip(rep.representation_.parameters(), clf.model_.rep.parameters()):
        assert a.tobytes() == b.tobytes()


def test_clone_and_params(rep):
    clf = TransferClassifier(rep, method="ft", lr=0.1, finetune_lr=0.01)
    params = clone(clf).get_params()
    assert params["method"] == "ft" and params["finetune_lr"] == 0.01 and params["lr"] == 0.1


def test_classifier_errors(rep, blobs):
    train, test = blobs
    with pytest.raises(InputError):
        TransferClassifier(rep, method="sgd").fit(train.inputs, train.labels)
    with pytest.raises(InputError):
        TransferClassifier("not a rep").fit(train.inputs, train.labels)
    with pytest.raises(InputError):
        TransferClassifier(rep).fit(train.inputs, np.zeros(len(train), dtype=int))
    with pytest.raises(ValueError):
        TransferClassifier(rep).fit(train.inputs, train.inputs[:, 0])
    with pytest.raises(Exception):
        TransferClassifier(rep).predict(test.inputs)


def test_regressor_shapes():
    ds = gen_factor_regression(6, 60, 2, 0, seed=3)
    rep = RepresentationTransformer(hidden=(8,), epochs=1, random_state=0).fit(ds.inputs, (ds.labels[:, 0] > 0).astype(int))
    reg = TransferRegressor(rep, epochs=5, batch_size=10, lr=0.05).fit(ds.inputs, ds.labels[:, 0])
    assert reg.predict(ds.inputs).shape == (60,)
    reg2 = TransferRegressor(rep, epochs=5, batch_size=10, lr=0.05).fit(ds.inputs, np.hstack([ds.labels, ds.labels]))
    assert reg2.predict(ds.inputs).shape == (60, 2)
