import math
import zlib

import numpy as np
import pytest

from sinrlab.autodiff import (AdamState, EarlyStopper, LrSchedule, Tape, Tensor, adam_step, backward,
                              early_stop_update, lr_at_epoch, ops)
from sinrlab.errors import DisconnectedGraph, ShapeMismatch

STEP = 1e-5


def fd_errors(fn, arrays, rng, probes=100):
    """Relative errors of analytic vs central-difference gradients of ``sum(fn(*x) * r)``."""
    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*ts)
    r = rng.standard_normal(out.shape)

    def value():
        return float(np.sum(fn(*[Tensor(t.data) for t in ts]).data * r))

    backward(ops.total(ops.mul(out, r)))
    errs = []
    for _ in range(probes):
        j = int(rng.integers(len(ts)))
        t = ts[j]
        i = tuple(int(rng.integers(s)) for s in t.shape)
        old = t.data[i]
        t.data[i] = old + STEP
        up = value()
        t.data[i] = old - STEP
        down = value()
        t.data[i] = old
        fd = (up - down) / (2 * STEP)
        errs.append(abs(fd - t.grad[i]) / max(abs(fd), abs(t.grad[i]), 1e-6))
    return np.array(errs)


def away_from_zero(rng, shape):
    x = rng.uniform(0.05, 2.0, shape)
    return x * rng.choice([-1.0, 1.0], shape)


def causal_mask(n):
    return np.where(np.tril(np.ones((n, n))) > 0, 0.0, ops.MASK_NEG)


PRIMITIVES = {
    "add": (ops.add, lambda r: [r.standard_normal((3, 4)), r.standard_normal((4,))]),
    "sub": (ops.sub, lambda r: [r.standard_normal((2, 3, 4)), r.standard_normal((3, 1))]),
    "mul": (ops.mul, lambda r: [r.standard_normal((3, 4)), r.standard_normal((3, 4))]),
    "scale": (lambda a: ops.scale(a, -1.7), lambda r: [r.standard_normal((5,))]),
    "matmul": (ops.matmul, lambda r: [r.standard_normal((2, 3, 4)), r.standard_normal((4, 5))]),
    "affine": (ops.affine, lambda r: [r.standard_normal((2, 3, 4)), r.standard_normal((4, 2)), r.standard_normal(2)]),
    "reshape": (lambda a: ops.mul(ops.reshape(a, (6, 2)), ops.reshape(a, (6, 2))),
                lambda r: [r.standard_normal((3, 4))]),
    "transpose": (lambda a: ops.transpose(a, (2, 0, 1)), lambda r: [r.standard_normal((2, 3, 4))]),
    "total": (lambda a: ops.mul(ops.total(a), ops.total(a)), lambda r: [r.standard_normal((3, 2))]),
    "leaky_relu": (lambda a: ops.leaky_relu(a, 0.01), lambda r: [away_from_zero(r, (4, 5))]),
    "layer_norm": (ops.layer_norm, lambda r: [r.standard_normal((2, 3, 6)), r.standard_normal(6),
                                              r.standard_normal(6)]),
    "masked_softmax": (lambda a: ops.masked_softmax(a, causal_mask(4)), lambda r: [r.standard_normal((2, 4, 4))]),
    "concat_heads": (lambda a: ops.mul(ops.concat_heads(a), ops.concat_heads(a)),
                     lambda r: [r.standard_normal((2, 3, 4, 2))]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    fn, make = PRIMITIVES[name]
    errs = fd_errors(fn, make(rng), rng)
    assert errs.size == 100 and errs.max() <= 1e-4


def test_operator_sugar():
    a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
    np.testing.assert_array_equal((a + b).data, [4, 7])
    np.testing.assert_array_equal((a - b).data, [-2, -3])
    np.testing.assert_array_equal((a * b).data, [3, 10])
    np.testing.assert_array_equal((Tensor([[1.0, 2.0]]) @ Tensor([[1.0], [1.0]])).data, [[3.0]])


def test_leaky_relu_values():
    assert ops.leaky_relu(Tensor(-1.0), 0.01).data == pytest.approx(-0.01)
    assert ops.leaky_relu(Tensor(2.5)).data == 2.5


def test_layer_norm_constant_vector():
    out = ops.layer_norm(Tensor(np.full((2, 5), 3.3)), np.ones(5), np.zeros(5))
    np.testing.assert_array_equal(out.data, np.zeros((2, 5)))


def test_layer_norm_moments():
    x = np.random.default_rng(0).standard_normal((4, 16)) * 5 + 2
    out = ops.layer_norm(Tensor(x), np.ones(16), np.zeros(16)).data
    np.testing.assert_allclose(out.mean(axis=-1), 0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), 1, rtol=1e-5)


def test_masked_softmax_single_allowed_and_empty_rows():
    w = ops.masked_softmax(Tensor([[0.0, 0.0], [1.0, 2.0]]), [[0.0, -np.inf], [ops.MASK_NEG, ops.MASK_NEG]]).data
    np.testing.assert_array_equal(w, [[1.0, 0.0], [0.0, 0.0]])
    w = ops.masked_softmax(Tensor([[0.0, math.log(3.0)]]), [[0.0, 0.0]]).data
    np.testing.assert_allclose(w, [[0.25, 0.75]], rtol=1e-12)


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        ops.add(np.ones(3), np.ones(4))
    with pytest.raises(ShapeMismatch):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        ops.layer_norm(np.ones((2, 3)), np.ones(2), np.ones(3))
    with pytest.raises(ShapeMismatch):
        ops.concat_heads(np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        backward(Tensor([1.0, 2.0], requires_grad=True))


def test_sum_of_squares_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    backward(ops.total(x * x))
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_shared_node_gradients_accumulate():
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    backward(ops.total(y + y * x))  # d/dx (x^2 + x^3) = 2x + 3x^2
    assert x.grad == pytest.approx(6.0 + 27.0)


def test_tape_order_and_membership():
    x = Tensor(1.0, requires_grad=True)
    y = ops.scale(x, 2.0)
    z = ops.add(y, x)
    tape = Tape.from_output(z)
    assert len(tape) == 3 and x in tape and tape.nodes[-1] is z
    assert tape.nodes.index(x) < tape.nodes.index(y)


def test_disconnected_watch_warns():
    x = Tensor([1.0], requires_grad=True)
    stray = Tensor([5.0, 6.0], requires_grad=True)
    with pytest.warns(DisconnectedGraph):
        backward(ops.total(x * x), watch=[stray])
    np.testing.assert_array_equal(stray.grad, [0.0, 0.0])


def test_adam_first_step_is_lr():
    p = {"w": np.array([0.5, -1.0])}
    adam_step(p, {"w": np.ones(2)}, AdamState(), lr=0.01)
    np.testing.assert_allclose(p["w"], [0.5 - 0.01, -1.0 - 0.01], rtol=1e-6)


def test_adam_zero_gradient_fixed_point():
    p = {"w": np.array([0.5, -1.0]), "b": np.array(2.0)}
    before = {k: v.copy() for k, v in p.items()}
    st = AdamState()
    for _ in range(5):
        adam_step(p, {k: np.zeros_like(v) for k, v in p.items()}, st, lr=0.1)
    for k in p:
        np.testing.assert_array_equal(p[k], before[k])
    assert st.step_count == 5


def test_adam_l2_enters_the_gradient():
    p = {"w": np.array([2.0])}
    adam_step(p, {"w": np.zeros(1)}, AdamState(), lr=0.01, l2=1e-6)
    # effective gradient l2 * w > 0, so the first step moves by ~ -lr
    assert p["w"][0] == pytest.approx(2.0 - 0.01, rel=1e-4)


def test_adam_scalar_convergence():
    w = np.array([0.0])
    st = AdamState()
    for _ in range(200):
        adam_step({"w": w}, {"w": 2 * (w - 3.0)}, st, lr=0.1)
    assert abs(w[0] - 3.0) < 0.05


def test_lr_schedule_values():
    s = LrSchedule()
    assert lr_at_epoch(0, s) == pytest.approx(1e-4, rel=1e-12)
    assert lr_at_epoch(40, s) == pytest.approx(5e-3, rel=1e-12)
    assert lr_at_epoch(90, s) == pytest.approx(2.55e-3, abs=1e-9)
    assert lr_at_epoch(140, s) == pytest.approx(5e-3, rel=1e-12)
    assert lr_at_epoch(20, s) == pytest.approx(1e-4 + 0.5 * (5e-3 - 1e-4), rel=1e-12)


def test_lr_continuous_at_warmup_boundary():
    s = LrSchedule()
    left = s.lr_min + (s.lr_max - s.lr_min) * (s.warmup_epochs - 1e-9) / s.warmup_epochs
    assert lr_at_epoch(s.warmup_epochs, s) == pytest.approx(left, rel=1e-9)
    assert s.cycle_index(39) == -1 and s.cycle_index(40) == 0 and s.cycle_index(140) == 1
    with pytest.raises(ValueError):
        lr_at_epoch(-1, s)
    with pytest.raises(ValueError):
        LrSchedule(lr_min=1e-2, lr_max=1e-3)


def test_early_stop_improving_never_stops():
    st = EarlyStopper()
    assert not any(early_stop_update(st, 1.0 - 0.1 * i) for i in range(8))


def test_early_stop_after_patience():
    st = EarlyStopper()
    decisions = [early_stop_update(st, x) for x in (1.0, 1.2, 1.1, 1.05, 1.3)]
    assert decisions == [False, False, False, False, True]


def test_early_stop_equal_losses_count_as_stale():
    st = EarlyStopper()
    decisions = [early_stop_update(st, 0.5) for _ in range(5)]
    assert decisions == [False, False, False, False, True]
    assert st.cycles_since_improvement <= st.patience_cycles
