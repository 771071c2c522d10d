"""
Tests for the EMA teacher
"""

import numpy as np
import pytest

from src.ignet_core.errors import ConfigError, ShapeError
from src.ignet_core.numerics import ParamVector, Tape, value_of
from src.ignet_student.network import StudentNet
from src.ignet_student.teacher import (
    TeacherState,
    assign_classes,
    ema_update,
    init_teacher,
    teacher_predict,
)


def test_ema_update_is_a_convex_combination():
    """Test one EMA step"""
    state = init_teacher(ParamVector({"w": np.ones(3)}), alpha=0.9)
    state = ema_update(state, ParamVector({"w": np.full(3, 3.0)}))
    np.testing.assert_allclose(state.shadow["w"], 1.2)
    assert state.step == 1


@pytest.mark.parametrize("alpha", [0.0, 0.5, 0.999, 1.0])
def test_ema_converges_geometrically_to_a_fixed_student(alpha):
    """Test shadow_t - student = alpha^t (shadow_0 - student) for a fixed student"""
    start = np.array([0.0, 10.0, -3.5])
    state = init_teacher(ParamVector({"w": start}), alpha)
    student = ParamVector({"w": np.array([2.0, -2.0, 0.25])})
    for t in range(1, 51):
        state = ema_update(state, student)
        expected = student["w"] + alpha ** t * (start - student["w"])
        np.testing.assert_allclose(state.shadow["w"], expected, rtol=0.0, atol=1e-12)
    assert state.step == 50


def test_extreme_alphas():
    """Test alpha 1 freezing, alpha 0 copying and out-of-range alphas"""
    start = ParamVector({"w": np.zeros(2)})
    student = ParamVector({"w": np.ones(2)})
    frozen = ema_update(init_teacher(start, 1.0), student)
    np.testing.assert_array_equal(frozen.shadow["w"], 0.0)
    copied = ema_update(init_teacher(start, 0.0), student)
    np.testing.assert_array_equal(copied.shadow["w"], 1.0)
    with pytest.raises(ConfigError):
        init_teacher(start, 1.5)
    with pytest.raises(ConfigError):
        TeacherState(shadow=start, alpha=-0.1)


def test_teacher_starts_as_an_independent_copy():
    """Test that the initial shadow does not alias the student"""
    student = ParamVector({"w": np.ones(2)})
    state = init_teacher(student, 0.5)
    student["w"][0] = 7.0
    assert state.shadow["w"][0] == 1.0


def test_incompatible_update_names_the_layer():
    """Test that a shape mismatch names the layer"""
    state = init_teacher(ParamVector({"a.w": np.ones((2, 2)), "a.b": np.ones(2)}), 0.9)
    with pytest.raises(ShapeError) as exc:
        ema_update(state, ParamVector({"a.w": np.ones((2, 3)), "a.b": np.ones(2)}))
    assert exc.value.layer == "a.w"


def test_teacher_prediction_records_nothing():
    """Test that teacher inference leaves the tape untouched"""
    rng = np.random.default_rng(0)
    net = StudentNet(num_classes=3, feature_dim=2, hidden=4)
    state = init_teacher(net.init(rng), 0.99)
    feats = rng.normal(size=(7, net.in_features))
    with Tape() as tape:
        before = len(tape)
        pred = teacher_predict(state, feats, net)
        assert len(tape) == before
    direct = net.forward(state.shadow, feats)
    np.testing.assert_array_equal(pred.logits, value_of(direct.logits))
    np.testing.assert_array_equal(pred.aux_features, value_of(direct.aux_features))


def test_assign_classes_breaks_ties_toward_lowest_index():
    """Test argmax tie-breaking"""
    logits = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0], [3.0, 3.0, 3.0]])
    assert assign_classes(logits).tolist() == [0, 1, 0]


def _reference_student(params, feats):
    h = np.tanh(feats @ params["backbone.l0.w"] + params["backbone.l0.b"])
    h = np.tanh(h @ params["backbone.l1.w"] + params["backbone.l1.b"])
    logits = h @ params["head.l0.w"] + params["head.l0.b"]
    aux = h @ params["aux.l0.w"] + params["aux.l0.b"]
    return logits, aux


@pytest.mark.parametrize("seed", range(5))
def test_teacher_prediction_uses_the_shadow_weights(seed):
    """Test teacher inference against a numpy forward pass of the shadow"""
    rng = np.random.default_rng(seed)
    net = StudentNet(num_classes=4, feature_dim=3, hidden=5)
    state = init_teacher(net.init(rng), 0.7)
    for _ in range(3):
        student = net.init(rng)
        student = ParamVector({name: value + rng.normal(size=value.shape) for name, value in student.items()})
        state = ema_update(state, student)
    feats = rng.normal(size=(9, net.in_features))
    pred = teacher_predict(state, feats, net)
    logits, aux = _reference_student(state.shadow, feats)
    np.testing.assert_allclose(pred.logits, logits, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pred.aux_features, aux, rtol=1e-12, atol=1e-12)
    # the student weights are not the shadow
    s_logits, _ = _reference_student(student, feats)
    assert not np.allclose(pred.logits, s_logits)
