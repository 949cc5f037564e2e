import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from meshdeform import Tensor, gradcheck, mesh_operators
from meshdeform import autodiff as ad
from meshdeform import nn
from meshdeform.synth import bar_template


class TestAdam:
    def test_first_step_is_signed_lr(self):
        store = nn.ParamStore()
        w = store.add("w", np.array([2.0, -1.0, 0.5]))
        w.grad = np.array([0.3, -0.7, 1.2])
        before = w.data.copy()
        nn.adam_step(store, lr=1e-3)
        delta = w.data - before
        # step 1 of bias-corrected Adam: -lr * g / (|g| + eps)
        assert np.max(np.abs(delta + 1e-3 * np.sign([0.3, -0.7, 1.2]))) < 1e-6 * 1e-3

    def test_zero_gradient_no_change(self):
        store = nn.ParamStore()
        w = store.add("w", np.array([1.0, 2.0]))
        w.grad = np.zeros(2)
        nn.adam_step(store, lr=0.1)
        assert np.array_equal(w.data, [1.0, 2.0])

    def test_missing_gradient_raises(self):
        store = nn.ParamStore()
        store.add("w", np.ones(2))
        with pytest.raises(nn.OptimizerError, match="missing gradient"):
            nn.adam_step(store, lr=0.1)

    def test_three_steps_match_reference_trace(self):
        # hand-rolled scalar Adam on f(w) = w^2 / 2 from w = 1
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        w_ref, m, v = 1.0, 0.0, 0.0
        trace = []
        for t in range(1, 4):
            g = w_ref
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1**t)
            vhat = v / (1 - b2**t)
            w_ref -= lr * mhat / (np.sqrt(vhat) + eps)
            trace.append(w_ref)

        store = nn.ParamStore()
        w = store.add("w", np.array([1.0]))
        got = []
        for _ in range(3):
            loss = ad.mul(ad.tsum(ad.mul(w, w)), 0.5)
            loss.backward()
            nn.adam_step(store, lr=lr, beta1=b1, beta2=b2, eps=eps)
            got.append(float(w.data[0]))
        assert np.allclose(got, trace, atol=1e-14)

    def test_gradients_cleared_after_step(self):
        store = nn.ParamStore()
        w = store.add("w", np.ones(2))
        w.grad = np.ones(2)
        nn.adam_step(store, lr=0.1)
        assert w.grad is None


class TestMLP:
    def test_zero_final_layer(self):
        rng = np.random.default_rng(0)
        layers = [(Tensor(rng.standard_normal((4, 8))), Tensor(np.zeros(8))),
                  (Tensor(np.zeros((8, 3))), Tensor(np.zeros(3)))]
        out = nn.mlp_forward(Tensor(rng.standard_normal((5, 4))), layers)
        assert np.array_equal(out.data, np.zeros((5, 3)))

    def test_single_affine_matches_hand_computation(self):
        w = Tensor([[2.0, 0.0], [1.0, -1.0]])
        b = Tensor([0.5, -0.5])
        x = np.array([[1.0, 3.0]])
        out = nn.mlp_forward(Tensor(x), [(w, b)])
        assert np.allclose(out.data, x @ w.data + b.data, atol=1e-15)

    def test_gradcheck(self):
        rng = np.random.default_rng(5)
        w1 = Tensor(rng.standard_normal((3, 6)), requires_grad=True)
        b1 = Tensor(rng.standard_normal(6), requires_grad=True)
        w2 = Tensor(rng.standard_normal((6, 2)), requires_grad=True)
        b2 = Tensor(rng.standard_normal(2), requires_grad=True)
        x = Tensor(rng.standard_normal((4, 3)))

        def fn():
            return ad.tsum(ad.tanh(nn.mlp_forward(x, [(w1, b1), (w2, b2)])))

        gradcheck(fn, [w1, b1, w2, b2], samples=4, rng=rng)


class TestDiffusionLayer:
    def test_zero_time_is_projection(self):
        bar = bar_template(40)
        ops = mesh_operators(bar)
        basis = ops.basis(bar.n_vertices)  # full basis: projection is identity
        rng = np.random.default_rng(7)
        field = rng.standard_normal((bar.n_vertices, 3))
        out = nn.diffusion_layer(Tensor(field), basis, ops.mass_diag,
                                 Tensor(np.zeros(3)))
        assert np.max(np.abs(out.data - field)) < 1e-8

    def test_zero_time_projection_partial_basis(self):
        bar = bar_template(40)
        ops = mesh_operators(bar)
        basis = ops.basis(6)
        rng = np.random.default_rng(8)
        field = rng.standard_normal((bar.n_vertices, 2))
        out = nn.diffusion_layer(Tensor(field), basis, ops.mass_diag,
                                 Tensor(np.zeros(2)))
        phi = basis.orthonormal
        expect = phi @ (phi.T * ops.mass_diag) @ field
        assert np.max(np.abs(out.data - expect)) < 1e-10

    def test_large_time_tends_to_area_weighted_mean(self):
        bar = bar_template(40)
        ops = mesh_operators(bar)
        basis = ops.basis(10)
        rng = np.random.default_rng(9)
        field = rng.standard_normal((bar.n_vertices, 2))
        out = nn.diffusion_layer(Tensor(field), basis, ops.mass_diag,
                                 Tensor([1e6, 1e6]))
        mean = ops.mass_diag @ field / ops.total_area
        assert np.max(np.abs(out.data - mean)) < 1e-10

    def test_matches_dense_heat_kernel_oracle(self):
        bar = bar_template(30)
        ops = mesh_operators(bar)
        n = bar.n_vertices
        basis = ops.basis(n)
        rng = np.random.default_rng(10)
        field = rng.standard_normal((n, 2))
        times = np.array([0.05, 0.4])
        out = nn.diffusion_layer(Tensor(field), basis, ops.mass_diag, Tensor(times))
        Ldense = ops.laplacian.toarray()
        Minv = np.diag(1.0 / ops.mass_diag)
        for j, t in enumerate(times):
            expect = scipy.linalg.expm(-t * Minv @ Ldense) @ field[:, j]
            assert np.max(np.abs(out.data[:, j] - expect)) < 1e-6

    def test_linear_in_field(self):
        bar = bar_template(40)
        ops = mesh_operators(bar)
        basis = ops.basis(8)
        rng = np.random.default_rng(11)
        u = rng.standard_normal((bar.n_vertices, 2))
        w = rng.standard_normal((bar.n_vertices, 2))
        times = Tensor(np.array([0.1, 0.7]))

        def run(x):
            return nn.diffusion_layer(Tensor(x), basis, ops.mass_diag, times).data

        combo = run(2.0 * u - 3.0 * w)
        assert np.max(np.abs(combo - (2.0 * run(u) - 3.0 * run(w)))) < 1e-10

    def test_gradients_flow_to_field_and_times(self):
        bar = bar_template(30)
        ops = mesh_operators(bar)
        basis = ops.basis(6)
        rng = np.random.default_rng(12)
        field = Tensor(rng.standard_normal((bar.n_vertices, 2)), requires_grad=True)
        log_times = Tensor(np.log([0.05, 0.2]), requires_grad=True)

        def fn():
            out = nn.diffusion_layer(field, basis, ops.mass_diag, ad.exp(log_times))
            return ad.tsum(ad.mul(out, out))

        gradcheck(fn, [field, log_times], samples=5, rng=rng)


class TestWeightContainer:
    def test_round_trip_bit_exact(self, tmp_path):
        store = nn.ParamStore()
        rng = np.random.default_rng(13)
        store.add("a.w", rng.standard_normal((3, 5)))
        store.add("a.b", rng.standard_normal(5))
        store.add("scalar", np.array(0.25))
        cfg = {"width": 5, "name": "demo"}
        path = tmp_path / "w.pnds"
        nn.save_weights(path, store, cfg)
        got_cfg, arrays = nn.load_weights(path)
        assert got_cfg == cfg
        assert set(arrays) == {"a.w", "a.b", "scalar"}
        for name in arrays:
            assert np.array_equal(arrays[name], store.params[name].data)
            assert arrays[name].shape == store.params[name].data.shape

    def test_magic_and_version_checked(self, tmp_path):
        path = tmp_path / "bad.pnds"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(nn.WeightFormatError, match="magic"):
            nn.load_weights(path)
        blob = bytearray()
        blob += nn.MAGIC
        blob += (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(nn.WeightFormatError, match="version"):
            nn.load_weights(path)

    def test_truncated_rejected(self, tmp_path):
        store = nn.ParamStore()
        store.add("w", np.ones((4, 4)))
        path = tmp_path / "w.pnds"
        nn.save_weights(path, store, {})
        (tmp_path / "t.pnds").write_bytes(path.read_bytes()[:-8])
        with pytest.raises(nn.WeightFormatError, match="truncated"):
            nn.load_weights(tmp_path / "t.pnds")
