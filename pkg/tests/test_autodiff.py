import numpy as np
import pytest

from meshdeform import Tensor, gradcheck
from meshdeform import autodiff as ad
from meshdeform import mesh_operators
from meshdeform.synth import bar_template


def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def test_matmul_identity_forward_and_grad():
    x = Tensor(np.arange(9.0).reshape(3, 3), requires_grad=True)
    out = ad.matmul(Tensor(np.eye(3)), x)
    assert np.array_equal(out.data, x.data)
    ad.tsum(out).backward()
    assert np.array_equal(x.grad, np.ones((3, 3)))


def test_tanh_at_zero():
    x = Tensor(np.zeros(4), requires_grad=True)
    out = ad.tanh(x)
    assert np.array_equal(out.data, np.zeros(4))
    ad.tsum(out).backward()
    assert np.allclose(x.grad, 1.0)


def test_fanout_doubles_gradient():
    x = Tensor([1.5, -0.3], requires_grad=True)
    y = ad.add(ad.tanh(x), ad.tanh(x))
    ad.tsum(y).backward()
    double = np.array(x.grad)
    x.zero_grad()
    ad.tsum(ad.tanh(x)).backward()
    assert np.array_equal(double, 2.0 * x.grad)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        ad.tanh(x).backward()


def test_no_grad_skips_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = ad.tanh(x)
    assert y._parents == ()


OP_CASES = {}


def case(name):
    def deco(fn):
        OP_CASES[name] = fn
        return fn

    return deco


@case("matmul_2d")
def _(rng):
    a, b = leaf(rng, 4, 3), leaf(rng, 3, 5)
    return lambda: ad.tsum(ad.tanh(ad.matmul(a, b))), [a, b]


@case("matmul_batched")
def _(rng):
    a, b = leaf(rng, 6, 3, 3), leaf(rng, 6, 3, 2)
    return lambda: ad.tsum(ad.tanh(ad.matmul(a, b))), [a, b]


@case("matmul_broadcast_const_rhs")
def _(rng):
    a, b = leaf(rng, 5, 3, 3), leaf(rng, 3, 3)
    return lambda: ad.tsum(ad.tanh(ad.matmul(a, b))), [a, b]


@case("add_broadcast")
def _(rng):
    a, b = leaf(rng, 4, 3), leaf(rng, 3)
    return lambda: ad.tsum(ad.tanh(ad.add(a, b))), [a, b]


@case("sub")
def _(rng):
    a, b = leaf(rng, 4, 3), leaf(rng, 4, 3)
    return lambda: ad.tsum(ad.tanh(ad.sub(a, b))), [a, b]


@case("mul_broadcast")
def _(rng):
    a, b = leaf(rng, 2, 1, 3), leaf(rng, 4, 1)
    return lambda: ad.tsum(ad.tanh(ad.mul(a, b))), [a, b]


@case("neg")
def _(rng):
    a = leaf(rng, 5)
    return lambda: ad.tsum(ad.tanh(ad.neg(a))), [a]


@case("concat")
def _(rng):
    a, b = leaf(rng, 3, 2), leaf(rng, 3, 4)
    return lambda: ad.tsum(ad.tanh(ad.concat([a, b], axis=1))), [a, b]


@case("reshape_swap")
def _(rng):
    a = leaf(rng, 4, 6)
    return lambda: ad.tsum(ad.tanh(ad.swap_last2(ad.reshape(a, (4, 2, 3))))), [a]


@case("relu")
def _(rng):
    a = leaf(rng, 40)
    a.data[np.abs(a.data) < 0.05] += 0.1  # stay away from the kink
    return lambda: ad.tsum(ad.relu(a)), [a]


@case("exp")
def _(rng):
    a = leaf(rng, 7)
    return lambda: ad.tsum(ad.exp(a)), [a]


@case("pow_sqrt")
def _(rng):
    a = Tensor(rng.uniform(0.5, 2.0, size=6), requires_grad=True)
    return lambda: ad.tsum(ad.mul(ad.sqrt(a), ad.powc(a, -1.0))), [a]


@case("sum_axis_mean")
def _(rng):
    a = leaf(rng, 3, 5)
    return lambda: ad.tsum(ad.tanh(ad.tmean(ad.tsum(a, axis=1, keepdims=True)))), [a]


@case("row_scale")
def _(rng):
    a, s = leaf(rng, 6, 3), leaf(rng, 6)
    return lambda: ad.tsum(ad.tanh(ad.row_scale(a, s))), [a, s]


@case("cross")
def _(rng):
    a, b = leaf(rng, 8, 3), leaf(rng, 8, 3)
    return lambda: ad.tsum(ad.tanh(ad.cross3(a, b))), [a, b]


@case("spmm")
def _(rng):
    import scipy.sparse as sp

    s = sp.random(7, 5, density=0.4, random_state=3, format="csr")
    x = leaf(rng, 5, 2)
    return lambda: ad.tsum(ad.tanh(ad.spmm(s, x))), [x]


@case("composite_graph")
def _(rng):
    a, b = leaf(rng, 4, 4), leaf(rng, 4, 4)
    def fn():
        h = ad.tanh(ad.matmul(a, b))
        g = ad.mul(h, ad.exp(ad.mul(b, 0.1)))
        return ad.tmean(ad.add(g, ad.sub(h, b)))
    return fn, [a, b]


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_gradcheck_ops(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    fn, tensors = OP_CASES[name](rng)
    gradcheck(fn, tensors, samples=4, rng=rng)


class TestPoissonDifferentiable:
    def test_zero_jacobians_zero_gradient(self):
        bar = bar_template(40)
        ops = mesh_operators(bar)
        J = Tensor(np.zeros((bar.n_faces, 3, 3)), requires_grad=True)
        v = ad.poisson_apply(ops.poisson, J)
        loss = ad.tsum(ad.mul(v, v))
        loss.backward()
        assert np.array_equal(J.grad, np.zeros_like(J.data))

    def test_gradcheck_through_solve(self):
        bar = bar_template(40)
        ops = mesh_operators(bar)
        rng = np.random.default_rng(21)
        J = Tensor(0.3 * rng.standard_normal((bar.n_faces, 3, 3)), requires_grad=True)
        target = rng.standard_normal((bar.n_vertices, 3))

        def fn():
            v = ad.poisson_apply(ops.poisson, J)
            d = ad.sub(v, Tensor(target))
            return ad.tsum(ad.mul(d, d))

        gradcheck(fn, [J], samples=5, rng=rng)

    def test_adjoint_dot_product_identity(self):
        # <vbar, solve(dJ)> == <adjoint(vbar), dJ> for random directions
        bar = bar_template(50)
        system = mesh_operators(bar).poisson
        rng = np.random.default_rng(22)
        for _ in range(5):
            dJ = rng.standard_normal((bar.n_faces, 3, 3))
            vbar = rng.standard_normal((bar.n_vertices, 3))
            lhs = float(np.sum(vbar * system.solve(dJ)))
            rhs = float(np.sum(system.adjoint(vbar) * dJ))
            assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))
