import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memefuse.errors import ConfigError, ShapeError, UsageError
from memefuse.fusion import FusionHead, MemberSpec, cross_entropy, member_forward, predict_label, soft_vote
from memefuse.tensor import Rng, softmax


def head_params(head):
    return {name: p for name, p, _ in head.named_parameters()}


def test_member_spec_validation():
    MemberSpec(4, 2, 128, 3)
    for args in [(0, 1, 8, 3), (1, 3, 8, 3), (1, 1, -1, 3), (1, 1, 8, 1)]:
        with pytest.raises(ConfigError):
            MemberSpec(*args)


def test_zero_head_is_uniform(rng):
    head = FusionHead(10, 4, 3, rng)
    for _, p, _ in head.named_parameters():
        p[...] = 0.0
    np.testing.assert_allclose(member_forward(head_params(head), rng.normal((6,)), rng.normal((4,))), [1 / 3] * 3)


def test_table_sizes(rng):
    head = FusionHead(320 + 4096, 128, 3, rng)
    probs = member_forward(head_params(head), rng.normal((320,)), rng.normal((4096,)))
    assert probs.shape == (3,)
    with pytest.raises(ShapeError):
        member_forward(head_params(head), rng.normal((319,)), rng.normal((4096,)))


def test_head_hand_composition():
    head = FusionHead(3, 2, 2, Rng(0))
    params = head_params(head)
    params["dense1.W"][...] = [[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]]
    params["dense1.b"][...] = [0.0, -1.0]
    params["dense2.W"][...] = [[2.0, 0.0], [0.0, 1.0]]
    params["dense2.b"][...] = [0.1, 0.0]
    text, image = np.array([2.0, 1.0]), np.array([0.5])
    hidden = [max(2.0 - 0.5, 0.0), max(0.5 * 3.5 - 1.0, 0.0)]
    logits = np.array([2 * hidden[0] + 0.1, hidden[1]])
    e = np.exp(logits - logits.max())
    np.testing.assert_allclose(member_forward(params, text, image), e / e.sum(), atol=1e-15)
    batch = head.forward(np.array([[2.0, 1.0, 0.5]]))
    np.testing.assert_allclose(softmax(batch[0]), e / e.sum(), atol=1e-15)


def test_single_layer_head(rng):
    head = FusionHead(5, 0, 4, rng)
    assert head.hidden is None
    assert member_forward(head_params(head), rng.normal((2,)), rng.normal((3,))).shape == (4,)


@given(st.lists(st.floats(-1e3, 1e3), min_size=8, max_size=8))
def test_member_output_normalized(vals):
    head = FusionHead(8, 4, 3, Rng(3))
    p = member_forward(head_params(head), np.array(vals[:5]), np.array(vals[5:]))
    assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-9


def test_soft_vote_examples():
    a, b = np.array([0.6, 0.4]), np.array([0.2, 0.8])
    np.testing.assert_array_equal(soft_vote([a]), a)
    np.testing.assert_allclose(soft_vote([a, b]), [0.4, 0.6], atol=1e-15)
    assert predict_label(soft_vote([a, b])) == 1
    np.testing.assert_allclose(soft_vote([a, b], [3.0, 1.0]), [0.5, 0.5], atol=1e-15)
    with pytest.raises(UsageError):
        soft_vote([])
    with pytest.raises(ShapeError):
        soft_vote([a, np.array([0.1, 0.2, 0.7])])
    with pytest.raises(UsageError):
        soft_vote([a, b], [0.0, 0.0])
    with pytest.raises(UsageError):
        soft_vote([a, b], [1.0, -1.0])


def test_predict_label_ties():
    assert predict_label([0.1, 0.7, 0.2]) == 1
    assert predict_label([0.5, 0.5]) == 0
    assert predict_label([1 / 3] * 3) == 0
    np.testing.assert_array_equal(predict_label(np.array([[0.2, 0.8], [0.5, 0.5]])), [1, 0])


def test_cross_entropy_values(rng):
    logits = rng.normal((4, 3))
    labels = np.array([0, 2, 1, 2])
    loss, grad = cross_entropy(logits, labels)
    p = softmax(logits, axis=1)
    assert loss == pytest.approx(-np.mean(np.log(p[np.arange(4), labels])), abs=1e-14)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)
    wloss, _ = cross_entropy(logits, labels, [1.0, 0.0, 0.0])
    assert wloss == pytest.approx(-np.log(p[0, 0]), abs=1e-14)
