import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ucmnet import UCMNetRestorer
from ucmnet.validation import check_images, check_pairs


def _pairs(n=3, size=16, seed=0):
    r = np.random.default_rng(seed)
    clean = r.uniform(size=(n, size, size, 3))
    return 0.7 * clean, clean


def test_get_params_and_clone():
    est = UCMNetRestorer(preset="tiny", steps=7, bank_size=4)
    params = est.get_params()
    assert params["steps"] == 7 and params["bank_size"] == 4 and params["preset"] == "tiny"
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(lr=1e-3)
    assert est.lr == 1e-3


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        UCMNetRestorer(preset="tiny").predict(np.zeros((1, 16, 16, 3)))


def test_fit_predict_score():
    X, y = _pairs()
    est = UCMNetRestorer(preset="tiny", steps=4, batch_size=2, patch_size=16, dtype="float64", bank_size=4)
    assert est.fit(X, y) is est
    assert len(est.history_) == 4 and est.n_features_in_ == 3
    assert est.model_.banks()[0].memory.shape[0] == 4
    out = est.predict(X)
    assert out.shape == X.shape and out.min() >= 0 and out.max() <= 1
    assert np.isfinite(est.score(X, y))
    # a single image is promoted to a batch of one
    assert est.predict(X[0]).shape == (1, 16, 16, 3)


def test_fit_is_seeded():
    X, y = _pairs()
    kw = dict(preset="tiny", steps=3, batch_size=2, patch_size=16, dtype="float64", random_state=3)
    a = UCMNetRestorer(**kw).fit(X, y).predict(X)
    b = UCMNetRestorer(**kw).fit(X, y).predict(X)
    np.testing.assert_array_equal(a, b)


def test_input_validation():
    with pytest.raises(ValueError):
        check_images(np.zeros((2, 8, 8, 4)))
    with pytest.raises(ValueError):
        check_images(np.full((1, 8, 8, 3), 1.5))
    with pytest.raises(ValueError):
        check_images(np.full((1, 8, 8, 3), np.nan))
    with pytest.raises(ValueError):
        check_pairs(np.zeros((2, 8, 8, 3)), np.zeros((3, 8, 8, 3)))
