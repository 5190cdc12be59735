import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from protoseg import PrototypeSegmenter
from protoseg.data import sample_episode
from protoseg.exceptions import ConfigError, DataError, ShapeMismatch
from protoseg.protocol import get_variant


def test_get_params_and_clone():
    m = PrototypeSegmenter(alpha=5.0, n_prototypes=3)
    params = m.get_params()
    assert params["alpha"] == 5.0 and params["n_prototypes"] == 3
    c = clone(m)
    assert c.get_params() == params
    m.set_params(eta=0.2)
    assert m.eta == 0.2


@pytest.mark.parametrize("name", ["cos", "f", "f-srp", "f-iqi", "f-srp-iqi"])
def test_from_variant(name):
    v = get_variant(name)
    m = PrototypeSegmenter.from_variant(name)
    assert m.metric == v.metric.value
    assert (m.w_s > 0) == v.srp
    assert (m.n_prototypes > 1) == v.iqi
    with pytest.raises(ConfigError):
        PrototypeSegmenter.from_variant("euclid")


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        PrototypeSegmenter().transform([np.zeros((4, 4, 3))])


def test_fit_on_dataset_and_predict(small_dataset):
    m = PrototypeSegmenter(n_iter=5, random_state=2).fit(small_dataset)
    assert len(m.training_log_) == 5 and m.n_features_in_ == 3
    ep = sample_episode(small_dataset, "unseen", 1, 1, 2, seed=4)
    pred = m.predict(ep.query_images, ep.support_images[0], ep.support_masks[0])
    assert pred.shape == (2, 16, 16)
    seg = m.predict_episode(ep)
    np.testing.assert_array_equal(pred, np.stack(seg.query_predictions))
    assert 0.0 <= m.score([ep]) <= 1.0


def test_fit_on_raw_arrays(small_dataset):
    idx = [i for i, s in enumerate(small_dataset.splits) if s == "seen"]
    X = [small_dataset.images[i] for i in idx]
    y = [small_dataset.masks[i] for i in idx]
    m = PrototypeSegmenter(n_iter=3, random_state=0).fit(X, y)
    assert m.transform(X[:2]).shape == (2, 16, 16, 32)
    with pytest.raises(ConfigError):
        PrototypeSegmenter(n_iter=1).fit(X)


def test_iqi_estimator_with_one_prototype_matches_base(small_dataset):
    base = PrototypeSegmenter(random_state=1).initialize()
    iqi = PrototypeSegmenter(n_prototypes=1, eta=0.3, random_state=1).initialize()
    ep = sample_episode(small_dataset, "unseen", 2, 1, 2, seed=9)
    a = base.predict_episode(ep).query_predictions
    b = iqi.predict_episode(ep).query_predictions
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()


def test_support_grouping_and_errors(small_dataset):
    m = PrototypeSegmenter(random_state=3).initialize()
    ep = sample_episode(small_dataset, "unseen", 2, 2, 1, seed=1)
    imgs, masks = ep.flat_support()
    classes = [1, 1, 2, 2]
    pred = m.predict(ep.query_images, imgs, masks, support_classes=classes)
    np.testing.assert_array_equal(pred[0], m.predict_episode(ep).query_predictions[0])
    with pytest.raises(DataError):
        m.predict(ep.query_images, imgs[:1], [np.zeros((16, 16), dtype=int)])
    with pytest.raises(ShapeMismatch):
        m.predict(ep.query_images, imgs[:1], [np.zeros((8, 8), dtype=int)])


def test_evaluate_report(small_dataset):
    m = PrototypeSegmenter.from_variant("f-srp-iqi", n_prototypes=3).initialize()
    rep = m.evaluate(small_dataset, seeds=[0, 1], episodes=3, name="f-srp-iqi")
    s = rep.summary()
    assert len(rep.runs) == 2
    for key in ("query_miou", "query_dice", "query_binary_iou", "support_miou"):
        assert 0.0 <= s[key]["mean"] <= 1.0 and s[key]["std"] >= 0.0
