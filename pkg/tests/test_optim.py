"""Tests for AdamW."""
import math

import numpy as np
import pytest

from anomaly_filter.autodiff import Tensor
from anomaly_filter.exceptions import ShapeError, TrainingError
from anomaly_filter.optim import AdamW


def test_zero_gradient_without_decay_is_a_no_op() -> None:
    """Zero gradients and no weight decay leave parameters unchanged."""
    w = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    optimizer = AdamW({"w": w}, lr=0.1, weight_decay=0.0)
    for _ in range(5):
        optimizer.step({"w": np.zeros(3)})
    np.testing.assert_array_equal(w.value, [1.0, -2.0, 3.0])
    assert optimizer.state.step == 5


def test_scalar_recurrence() -> None:
    """A constant gradient follows the hand-written Adam recurrence."""
    lr, beta1, beta2, eps, g = 0.01, 0.9, 0.999, 1e-8, 0.3
    w = Tensor([0.5], requires_grad=True)
    optimizer = AdamW({"w": w}, lr=lr, weight_decay=0.0, beta1=beta1, beta2=beta2, eps=eps)
    expected, m, v = 0.5, 0.0, 0.0
    for k in range(1, 11):
        optimizer.step({"w": np.array([g])})
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        expected -= lr * (m / (1 - beta1**k)) / (math.sqrt(v / (1 - beta2**k)) + eps)
        assert w.value[0] == pytest.approx(expected, abs=1e-12)


def test_decoupled_weight_decay() -> None:
    """With zero gradients the parameter shrinks by (1 - lr * lambda) per step."""
    lr, decay = 0.01, 0.5
    w = Tensor([2.0, -4.0], requires_grad=True)
    optimizer = AdamW({"w": w}, lr=lr, weight_decay=decay)
    for _ in range(3):
        optimizer.step({"w": np.zeros(2)})
    np.testing.assert_allclose(w.value, np.array([2.0, -4.0]) * (1 - lr * decay) ** 3, rtol=1e-14)


def test_non_finite_gradient_names_parameter() -> None:
    """A NaN gradient raises before any parameter moves."""
    a = Tensor([1.0], requires_grad=True)
    b = Tensor([1.0], requires_grad=True)
    optimizer = AdamW({"a": a, "b": b}, lr=0.1)
    with pytest.raises(TrainingError, match="'b'"):
        optimizer.step({"a": np.array([1.0]), "b": np.array([np.nan])})
    assert a.value[0] == 1.0
    assert optimizer.state.step == 0


def test_gradient_shape_mismatch() -> None:
    """Gradients must match parameter shapes."""
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    optimizer = AdamW({"w": w})
    with pytest.raises(ShapeError, match="does not match"):
        optimizer.step({"w": np.ones(4)})


def test_missing_gradient() -> None:
    """Every parameter needs a gradient."""
    optimizer = AdamW({"w": Tensor([1.0], requires_grad=True)})
    with pytest.raises(ShapeError, match="missing"):
        optimizer.step({})
