import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricprior import autodiff as ad
from metricprior.errors import ValidationError


def check(f, *values, tol=1e-6, step=1e-6):
    rep = ad.grad_check(f, values, step=step, tolerance=tol)
    assert rep.passed, rep.deviations


def test_matmul_identity():
    X = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(ad.matmul(np.eye(3), X).value, X)


def test_max_reduce_routes_to_argmax():
    tape = ad.Tape()
    a = tape.leaf([[1.0, 3.0], [2.0, 0.0]])
    out = ad.max_reduce(a, axis=1)
    np.testing.assert_array_equal(out.value, [3.0, 2.0])
    g = ad.backward(ad.sum(out))[a]
    np.testing.assert_array_equal(g, [[0, 1], [1, 0]])


def test_max_reduce_tie_goes_to_first():
    tape = ad.Tape()
    a = tape.leaf([[2.0, 2.0]])
    g = ad.backward(ad.sum(ad.max_reduce(a, axis=1)))[a]
    np.testing.assert_array_equal(g, [[1, 0]])


def test_pairwise_two_points():
    D = ad.pairwise_dist(np.array([[0.0, 0, 0], [3.0, 4.0, 0]])).value
    np.testing.assert_array_equal(D, [[0, 5], [5, 0]])


def test_solve_identity():
    tape = ad.Tape()
    A = tape.leaf(np.eye(3))
    b = tape.leaf([1.0, 2.0, 3.0])
    x = ad.solve(A, b)
    np.testing.assert_array_equal(x.value, b.value)
    xbar = np.array([0.5, -1.0, 2.0])
    grads = ad.backward(ad.sum(x * xbar))
    np.testing.assert_allclose(grads[b], xbar)
    np.testing.assert_allclose(grads[A], -np.outer(xbar, b.value))


def test_solve_two_by_two():
    x = ad.solve(np.array([[2.0, 1.0], [1.0, 3.0]]), np.array([3.0, 5.0])).value
    np.testing.assert_allclose(x, [0.8, 1.4], rtol=1e-14)


def test_solve_random_20():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((20, 20)) + 6 * np.eye(20)
    b = rng.standard_normal((20, 2))
    W = rng.standard_normal((20, 2))
    check(lambda A, b: ad.sum(ad.solve(A, b) * W), A, b)


def test_sum_gradient_ones():
    tape = ad.Tape()
    x = tape.leaf(np.arange(4.0))
    np.testing.assert_array_equal(ad.backward(ad.sum(x))[x], np.ones(4))


def test_half_square_gradient():
    tape = ad.Tape()
    x = tape.leaf([1.0, -2.0, 3.0])
    np.testing.assert_allclose(ad.backward(ad.sum(x * x) * 0.5)[x], x.value)


def test_grad_check_sum_of_squares():
    rep = ad.grad_check(lambda x: ad.sum(ad.square(x)), [np.random.default_rng(0).standard_normal(5)])
    assert rep.max_deviation <= 1e-9


def test_detached_leaf_zero():
    rep = ad.grad_check(lambda x, y: ad.sum(x * 2.0) + ad.sum(y.value), [np.ones(3), np.ones(2)],
                        requires_grad=[True, False])
    assert rep.deviations[1] == 0.0


def test_backward_needs_scalar():
    tape = ad.Tape()
    with pytest.raises(ValidationError):
        ad.backward(tape.leaf(np.ones(2)) * 2.0)


def test_mixing_tapes_rejected():
    a, b = ad.Tape().leaf(1.0), ad.Tape().leaf(2.0)
    with pytest.raises(ValidationError):
        a + b


def test_unused_leaf_gets_zeros():
    tape = ad.Tape()
    x, y = tape.leaf(np.ones(2)), tape.leaf(np.ones(3))
    grads = ad.backward(ad.sum(x))
    assert y not in grads
    np.testing.assert_array_equal(ad.grad_of(grads, y), np.zeros(3))


def test_no_recording_without_grad():
    tape = ad.Tape()
    c = tape.const(np.ones(3))
    ad.exp(c) * 2.0
    assert tape.nodes == []


def test_broadcast_adjoint():
    check(lambda a, b: ad.sum(ad.square(a * b + b)), np.random.default_rng(1).standard_normal((4, 3)),
          np.random.default_rng(2).standard_normal(3))


def test_incompatible_shapes():
    with pytest.raises(ValidationError):
        ad.add(np.ones(3), np.ones(4))


def _rand(seed, shape, away_from_zero=False):
    x = np.random.default_rng(seed).standard_normal(shape)
    if away_from_zero:
        x = np.where(np.abs(x) < 0.1, 0.5, x)
    return x


W34 = np.random.default_rng(99).standard_normal((3, 4))
W43 = W34.T.copy()

PRIMITIVES = {
    "add": (lambda a, b: ad.sum(ad.add(a, b) * W34), [(3, 4), (3, 4)]),
    "sub": (lambda a, b: ad.sum(ad.sub(a, b) * W34), [(3, 4), (4,)]),
    "mul": (lambda a, b: ad.sum(ad.mul(a, b) * W34), [(3, 4), (3, 4)]),
    "div": (lambda a, b: ad.sum(ad.div(a, ad.exp(b)) * W34), [(3, 4), (3, 4)]),
    "matmul": (lambda a, b: ad.sum(ad.matmul(a, b) * np.ones((3, 2))), [(3, 4), (4, 2)]),
    "transpose": (lambda a: ad.sum(ad.transpose(a) * W43), [(3, 4)]),
    "reshape": (lambda a: ad.sum(ad.reshape(a, (4, 3)) * W43), [(3, 4)]),
    "concat": (lambda a, b: ad.sum(ad.concat([a, b], axis=1) * np.ones((3, 6)) * np.arange(6.0)), [(3, 4), (3, 2)]),
    "split": (lambda a: ad.sum(ad.split(a, [1, 3], axis=1)[1] * W34[:, :3]), [(3, 4)]),
    "take": (lambda a: ad.sum(ad.take(a, np.array([2, 0, 2])) * np.ones((3, 4))), [(3, 4)]),
    "masked_select": (lambda a: ad.sum(ad.square(ad.masked_select(a, W34 > 0))), [(3, 4)]),
    "sum_axis": (lambda a: ad.sum(ad.square(ad.sum(a, axis=0))), [(3, 4)]),
    "mean": (lambda a: ad.sum(ad.square(ad.mean(a, axis=1))), [(3, 4)]),
    "max_reduce": (lambda a: ad.sum(ad.max_reduce(a, axis=0) * np.arange(4.0)), [(3, 4)]),
    "elu": (lambda a: ad.sum(ad.elu(a) * W34), [(3, 4)]),
    "tanh": (lambda a: ad.sum(ad.tanh(a) * W34), [(3, 4)]),
    "exp": (lambda a: ad.sum(ad.exp(a) * W34), [(3, 4)]),
    "square": (lambda a: ad.sum(ad.square(a) * W34), [(3, 4)]),
    "sqrt": (lambda a: ad.sum(ad.sqrt(ad.exp(a)) * W34), [(3, 4)]),
    "pairwise_dist": (lambda a: ad.sum(ad.pairwise_dist(a) * np.arange(25.0).reshape(5, 5)), [(5, 3)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@pytest.mark.parametrize("seed", range(3))
def test_primitive_gradients(name, seed):
    f, shapes = PRIMITIVES[name]
    values = [_rand(seed * 10 + k, s, away_from_zero=True) for k, s in enumerate(shapes)]
    check(f, *values)


def test_sqrt_zero_gradient():
    tape = ad.Tape()
    x = tape.leaf([0.0, 4.0])
    np.testing.assert_array_equal(ad.backward(ad.sum(ad.sqrt(x)))[x], [0.0, 0.25])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_backward_linearity(seed, a, b):
    x0 = np.random.default_rng(seed).standard_normal((4, 3))

    def grad(fn):
        tape = ad.Tape()
        x = tape.leaf(x0)
        return ad.backward(fn(x))[x]

    f = lambda x: ad.sum(ad.tanh(x) * x)
    g = lambda x: ad.sum(ad.pairwise_dist(x))
    combined = grad(lambda x: f(x) * a + g(x) * b)
    np.testing.assert_allclose(combined, a * grad(f) + b * grad(g), atol=1e-12)


def test_backward_deterministic():
    x0 = np.random.default_rng(5).standard_normal((6, 3))
    out = []
    for _ in range(2):
        tape = ad.Tape()
        x = tape.leaf(x0)
        out.append(ad.backward(ad.sum(ad.elu(ad.pairwise_dist(x) @ x)))[x])
    assert out[0].tobytes() == out[1].tobytes()


def test_geodesic_node(small_sphere):
    rng = np.random.default_rng(0)
    X = small_sphere.vertices * (1 + 0.1 * rng.uniform(-1, 1, (42, 1)))
    W = rng.standard_normal((42, 42))
    rep = ad.grad_check(lambda X: ad.sum(ad.geodesic(X, small_sphere.faces) * W), [X], step=1e-6)
    assert rep.max_deviation <= 1e-4
