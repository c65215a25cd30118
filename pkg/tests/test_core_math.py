import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advemb.autodiff import (Parameter, Tape, euclidean_distance, hinge, matmul,
                             scaled_softmax)
from advemb.errors import (DimensionMismatch, NumericError, OptimizerError,
                           TapeStateError)
from advemb.optim import adam_step, fd_gradient_check

import oracle


# ---------------------------------------------------------------------------
# plain kernels


def test_matmul_identity():
    m = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(matmul(np.eye(3), m), m)


def test_matmul_zero():
    m = np.arange(6.0).reshape(2, 3) + 1
    assert np.array_equal(matmul(np.zeros((2, 2)), m[:2, :2].copy() * 0 + m[:2, :2]),
                          np.zeros((2, 2)) @ m[:2, :2])
    assert np.array_equal(matmul(np.zeros((3, 2)), m[:2]), np.zeros((3, 3)))


def test_matmul_direct():
    out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
    assert np.array_equal(out, np.array([[3.0], [7.0]]))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionMismatch, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 2)))


def test_matmul_associative(rng):
    for _ in range(20):
        a = rng.standard_normal((4, 5))
        b = rng.standard_normal((5, 3))
        c = rng.standard_normal((3, 6))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.allclose(left, right, rtol=1e-9, atol=1e-12)


def test_softmax_symmetry():
    out = scaled_softmax(np.array([2.5, 2.5, 2.5]), 17.0)
    assert np.allclose(out, [1 / 3, 1 / 3, 1 / 3])


def test_softmax_closed_forms():
    out = scaled_softmax(np.array([math.log(2), 0.0]), 1.0)
    assert np.allclose(out, [2 / 3, 1 / 3])
    out = scaled_softmax(np.array([2 * math.log(3), 0.0]), 2.0)
    assert np.allclose(out, [3 / 4, 1 / 4])


def test_softmax_rejects_nonfinite():
    with pytest.raises(NumericError):
        scaled_softmax(np.array([np.inf, 0.0]), 1.0)
    with pytest.raises(ValueError):
        scaled_softmax(np.array([1.0, 0.0]), 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12),
       st.floats(0.5, 10), st.floats(-30, 30))
def test_softmax_sum_and_shift_invariance(logits, scale, shift):
    logits = np.array(logits)
    p = scaled_softmax(logits, scale)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p > 0) and np.all(p < 1 + 1e-15)
    q = scaled_softmax(logits + shift * scale, scale)
    assert np.allclose(p, q, atol=1e-12)


def test_euclidean_345():
    assert euclidean_distance(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == 5.0


def test_euclidean_identity(rng):
    u = rng.standard_normal(10)
    assert euclidean_distance(u, u) == 0.0


def test_euclidean_matches_loop_oracle(rng):
    u = rng.standard_normal(300)
    v = rng.standard_normal(300)
    assert math.isclose(euclidean_distance(u, v), oracle.euclid(u.tolist(), v.tolist()),
                        rel_tol=1e-12)


def test_euclidean_length_mismatch():
    with pytest.raises(DimensionMismatch):
        euclidean_distance(np.zeros(3), np.zeros(4))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_euclidean_symmetry_and_triangle(seed):
    r = np.random.default_rng(seed)
    u, v, w = r.standard_normal((3, 8))
    duv = euclidean_distance(u, v)
    assert duv == euclidean_distance(v, u)
    assert duv <= euclidean_distance(u, w) + euclidean_distance(w, v) + 1e-12


@pytest.mark.parametrize("x,expect", [(-0.3, 0.0), (0.0, 0.0), (0.5, 0.5)])
def test_hinge(x, expect):
    assert hinge(x) == expect


# ---------------------------------------------------------------------------
# tape


def test_backward_constant_output_gives_zero_grads(rng):
    p = Parameter(rng.standard_normal((3, 3)), "p")
    tape = Tape()
    tape.param(p)
    out = tape.scale(tape.constant(4.0), 1.0)
    tape.backward(out)
    assert np.array_equal(p.grad, np.zeros((3, 3)))


def test_backward_sqnorm_closed_form(rng):
    w = Parameter(rng.standard_normal((4, 6)), "w")
    z = rng.standard_normal(6)
    tape = Tape()
    y = tape.matmul(tape.param(w), tape.constant(z))
    tape.backward(tape.sqnorm(y))
    assert np.allclose(w.grad, 2.0 * np.outer(w.value @ z, z), rtol=1e-12)


def test_backward_twice_is_error(rng):
    p = Parameter(rng.standard_normal(3), "p")
    tape = Tape()
    out = tape.sqnorm(tape.param(p))
    tape.backward(out)
    with pytest.raises(TapeStateError):
        tape.backward(out)


def test_backward_requires_scalar(rng):
    p = Parameter(rng.standard_normal(3), "p")
    tape = Tape()
    node = tape.scale(tape.param(p), 2.0)
    with pytest.raises(TapeStateError):
        tape.backward(node)


def test_backward_accumulates_once_per_call(rng):
    p = Parameter(rng.standard_normal(3), "p")
    for _ in range(2):
        tape = Tape()
        tape.backward(tape.sqnorm(tape.param(p)))
    assert np.allclose(p.grad, 2 * (2.0 * p.value))


@pytest.mark.parametrize("op_seed", range(100))
def test_taped_ops_match_finite_differences(op_seed):
    """Analytic vs central-difference gradients over the op set."""
    r = np.random.default_rng(op_seed)
    n, m = int(r.integers(2, 5)), int(r.integers(2, 5))
    a = Parameter(r.standard_normal((n, m)), "a")
    b = Parameter(r.standard_normal((m, n)), "b")
    v = Parameter(r.standard_normal(m), "v")
    kind = op_seed % 8

    def forward():
        tape = Tape()
        na, nb, nv = tape.param(a), tape.param(b), tape.param(v)
        if kind == 0:
            out = tape.sqnorm(tape.matmul(na, nb))
        elif kind == 1:
            out = tape.sqnorm(tape.matmul(na, nv))
        elif kind == 2:
            out = tape.sqnorm(tape.relu(tape.matmul(na, nv)))
        elif kind == 3:
            out = tape.sqnorm(tape.tanh(tape.matmul(na, nv)))
        elif kind == 4:
            keep = np.ones(n, dtype=bool)
            keep[-1] = n < 3
            out = tape.sqnorm(tape.masked_softmax(tape.matmul(na, nv), 2.0, keep))
        elif kind == 5:
            out = tape.euclidean(tape.matmul(na, nv), tape.row(nb, 0))
        elif kind == 6:
            out = tape.hinge(tape.shift(tape.euclidean(
                tape.matmul(na, nv),
                tape.matmul(na, tape.row(tape.transpose(nb), 0))), 1.0))
        else:
            out = tape.sqnorm(tape.concat([tape.flatten(na), tape.block(nv, 0, m - 1)]))
        return tape, out

    report = fd_gradient_check(forward, [a, b, v])
    assert all(row["ok"] for row in report), report


# ---------------------------------------------------------------------------
# adam


def test_adam_first_step_magnitude():
    p = Parameter(np.zeros((2, 3)), "p")
    p.grad[...] = 0.7
    adam_step(p, lr=0.01)
    # bias correction makes the first update essentially lr * sign(grad)
    assert np.allclose(np.abs(p.value), 0.01, rtol=1e-6)
    assert p.step == 1
    assert np.array_equal(p.grad, np.zeros_like(p.grad))


def test_adam_zero_grad_leaves_value():
    p = Parameter(np.full((2, 2), 3.5), "p")
    adam_step(p, lr=0.1)
    assert np.array_equal(p.value, np.full((2, 2), 3.5))
    assert p.step == 1


def test_adam_zero_grad_after_history_still_no_op_is_false():
    # zero grad with accumulated momentum may still move the value; the
    # invariant is only about the all-zero-state case above
    p = Parameter(np.zeros(1), "p")
    p.grad[...] = 1.0
    adam_step(p, lr=0.1)
    moved = p.value.copy()
    adam_step(p, lr=0.1)  # zero grad, momentum decays but is nonzero
    assert not np.array_equal(p.value, moved)


def test_adam_three_step_recursion_oracle():
    """1-D quadratic f(x) = x^2 / 2, gradient x; hand-rolled recursion."""
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    p = Parameter(np.array([1.0]), "x")
    x, m, v = 1.0, 0.0, 0.0
    for t in range(1, 4):
        g = x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        x = x - lr * m_hat / (math.sqrt(v_hat) + eps)

        p.grad[...] = p.value
        adam_step(p, lr)
        assert math.isclose(float(p.value[0]), x, rel_tol=1e-12)


def test_adam_rejects_nonfinite_grad():
    p = Parameter(np.zeros(2), "bad_param")
    p.grad[...] = np.nan
    with pytest.raises(OptimizerError, match="bad_param"):
        adam_step(p, lr=0.1)


# ---------------------------------------------------------------------------
# fd_gradient_check itself


def test_fd_check_linear_model_machine_precision(rng):
    w = Parameter(rng.standard_normal(5), "w")
    c = rng.standard_normal(5)

    def forward():
        tape = Tape()
        return tape, tape.matmul(tape.param(w), tape.constant(c))

    report = fd_gradient_check(forward, [w])
    assert report[0]["max_rel_err"] < 1e-8


def test_fd_check_flags_corrupted_gradient(rng):
    w = Parameter(rng.standard_normal(4), "w")

    class LyingNode:
        pass

    def forward():
        tape = Tape()
        node = tape.sqnorm(tape.param(w))
        return tape, node

    # corrupt by scaling the analytic gradient after the fact
    report_ok = fd_gradient_check(forward, [w])
    assert report_ok[0]["ok"]

    def forward_corrupt():
        tape = Tape()
        n = tape.param(w)
        bad = tape._record(np.float64(np.sum(w.value ** 2)),
                           lambda g: n._add_grad(3.0 * g * w.value))  # wrong factor
        return tape, bad

    report = fd_gradient_check(forward_corrupt, [w])
    assert not report[0]["ok"]
    assert report[0]["max_rel_err"] > 1e-2
