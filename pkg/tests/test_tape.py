import numpy as np
import pytest

from auginv import tape
from auginv.core import RngStream


def numeric_grad(fn, x, h=1e-6):
    """Central finite differences of a scalar function of one array."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def check_op(build, x0, tol=1e-7):
    """build(Tensor) -> scalar Tensor; compares tape grad to finite diffs."""
    t = tape.param(x0.copy())
    out = build(t)
    tape.backward(out)
    num = numeric_grad(lambda x: float(build(tape.param(x)).value), x0.copy())
    np.testing.assert_allclose(t.grad, num, atol=tol, rtol=tol)


RNG = RngStream(5)
X = RNG.child("x").normal(size=(4, 3))
Y = RNG.child("y").normal(size=(4, 3)) + 2.0


@pytest.mark.parametrize("name,build", [
    ("add", lambda t: tape.tsum(tape.square(tape.add(t, tape.wrap(Y))))),
    ("sub", lambda t: tape.tsum(tape.square(tape.sub(tape.wrap(Y), t)))),
    ("mul", lambda t: tape.tsum(tape.mul(t, tape.wrap(Y)))),
    ("matmul", lambda t: tape.tsum(tape.square(tape.matmul(t, tape.wrap(Y.T))))),
    ("relu", lambda t: tape.tsum(tape.relu(t))),
    ("power", lambda t: tape.tsum(tape.power(tape.square(t), 1.5))),
    ("exp", lambda t: tape.tsum(tape.exp(t))),
    ("log", lambda t: tape.tsum(tape.log(tape.add(tape.square(t), tape.wrap(1.0))))),
    ("mean_axis", lambda t: tape.tsum(tape.square(tape.tmean(t, axis=0)))),
    ("sum_keepdims", lambda t: tape.tsum(tape.square(tape.tsum(t, axis=1, keepdims=True)))),
    ("transpose", lambda t: tape.tsum(tape.square(tape.transpose(t)))),
    ("row_normalize", lambda t: tape.tsum(tape.mul(tape.row_normalize(t), tape.wrap(Y)))),
    ("logsumexp", lambda t: tape.tsum(tape.logsumexp_rows(t))),
    ("take_rows", lambda t: tape.tsum(tape.square(tape.take_rows(t, np.array([0, 2, 2, 1]))))),
    ("concat", lambda t: tape.tsum(tape.square(tape.concat_rows([t, tape.mul(t, tape.wrap(2.0))])))),
])
def test_op_gradients(name, build):
    check_op(build, X)


def test_take_along_cols_gradient():
    idx = np.argsort(X, axis=0)

    def build(t):
        return tape.tsum(tape.mul(tape.take_along_cols(t, idx), tape.wrap(Y)))

    check_op(build, X)


def test_affine_matches_manual():
    w = tape.param(RNG.child("w").normal(size=(2, 3)))
    b = tape.param(RNG.child("b").normal(size=2))
    out = tape.affine(tape.wrap(X), w, b)
    np.testing.assert_allclose(out.value, X @ w.value.T + b.value)
    loss = tape.tsum(tape.square(out))
    tape.backward(loss)
    assert w.grad.shape == (2, 3) and b.grad.shape == (2,)
    num = numeric_grad(
        lambda bb: float(np.sum((X @ w.value.T + bb) ** 2)), b.value.copy()
    )
    np.testing.assert_allclose(b.grad, num, atol=1e-6)


def test_broadcast_unbroadcast():
    # (4, 3) + (3,) broadcast: bias grad must sum over rows.
    bias = tape.param(np.array([1.0, 2.0, 3.0]))
    out = tape.tsum(tape.add(tape.wrap(X), bias))
    tape.backward(out)
    np.testing.assert_allclose(bias.grad, np.full(3, 4.0))


def test_logsumexp_matches_scipy():
    from scipy.special import logsumexp

    out = tape.logsumexp_rows(tape.wrap(X * 10))
    np.testing.assert_allclose(out.value, logsumexp(X * 10, axis=1), atol=1e-12)


def test_backward_seed_injection():
    t = tape.param(X.copy())
    out = tape.mul(t, tape.wrap(3.0))
    seed = RNG.child("seed").normal(size=X.shape)
    tape.backward(out, seed=seed)
    np.testing.assert_allclose(t.grad, 3.0 * seed)


def test_grad_accumulates_over_reuse():
    t = tape.param(np.array([[2.0]]))
    out = tape.tsum(tape.add(tape.square(t), t))  # x^2 + x -> 2x + 1 = 5
    tape.backward(out)
    np.testing.assert_allclose(t.grad, [[5.0]])


def test_constants_get_no_grad():
    c = tape.wrap(X)
    out = tape.tsum(tape.square(c))
    tape.backward(out)
    assert c.grad is None or not c.requires_grad
