import numpy as np
import pytest
import torch

from auginv.core import RngStream
from auginv.errors import CorruptFileError, InvalidConfigError, InvalidInputError, NumericalError
from auginv.nn import (
    AdamWState,
    AdapterMlp,
    DecoderMlp,
    Mlp,
    ProbeHead,
    adamw_step,
    cosine_lr,
    cross_entropy,
    load_checkpoint,
    save_checkpoint,
)


class TestForward:
    def test_zero_net_zero_output(self):
        net = Mlp([3, 4, 2])
        assert np.all(net.forward(RngStream(0).normal(size=(5, 3))) == 0)

    def test_identity_weights_on_nonnegative_input(self):
        net = Mlp([3, 3, 3])
        net.params["W0"] = np.eye(3)
        net.params["W1"] = np.eye(3)
        x = np.abs(RngStream(1).normal(size=(4, 3)))
        np.testing.assert_allclose(net.forward(x), x)

    def test_matches_scalar_loop_oracle(self):
        net = AdapterMlp(3, 5, 2, RngStream(2))
        x = RngStream(3).normal(size=(2, 3))
        out = net.forward(x)
        w0, b0 = net.params["W0"], net.params["b0"]
        w1, b1 = net.params["W1"], net.params["b1"]
        for r in range(2):
            for o in range(2):
                acc = b1[o]
                for hid in range(5):
                    pre = b0[hid] + sum(w0[hid, i] * x[r, i] for i in range(3))
                    acc += w1[o, hid] * max(pre, 0.0)
                assert out[r, o] == pytest.approx(acc, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            Mlp([3, 2]).forward(np.zeros((4, 5)))

    def test_probe_kinds_depths(self):
        assert ProbeHead("linear", 6, 3).n_layers == 1
        assert ProbeHead("nonlinear", 6, 3, hidden=9).n_layers == 2
        assert ProbeHead("end_to_end", 6, 3, hidden=9).n_layers == 3
        with pytest.raises(InvalidConfigError):
            ProbeHead("conv", 6, 3)


class TestAdamW:
    def test_zero_grad_no_decay_unchanged(self):
        params = {"w": np.array([1.0, -2.0])}
        adamw_step(params, {"w": np.zeros(2)}, AdamWState(), lr=0.1, weight_decay=0.0)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0])

    def test_first_step_moves_by_lr(self):
        params = {"w": np.array([1.0])}
        adamw_step(params, {"w": np.array([1.0])}, AdamWState(), lr=0.1, weight_decay=0.0)
        assert params["w"][0] == pytest.approx(0.9, abs=1e-7)

    def test_pure_decoupled_decay(self):
        params = {"w": np.array([1.0])}
        adamw_step(params, {"w": np.zeros(1)}, AdamWState(), lr=0.1, weight_decay=0.1)
        assert params["w"][0] == pytest.approx(0.99, abs=1e-12)

    def test_nonfinite_gradient_rejected(self):
        params = {"w": np.array([1.0])}
        with pytest.raises(NumericalError):
            adamw_step(params, {"w": np.array([np.nan])}, AdamWState(), 0.1, 0.0)

    @pytest.mark.parametrize("weight_decay", [0.0, 0.05])
    def test_matches_torch_adamw(self, weight_decay):
        rng = RngStream(4)
        init = rng.child("init").normal(size=(3, 2))
        grads = [rng.child(f"g{t}").normal(size=(3, 2)) for t in range(10)]

        params = {"w": init.copy()}
        state = AdamWState()
        for g in grads:
            adamw_step(params, {"w": g}, state, lr=0.01, weight_decay=weight_decay)

        tw = torch.nn.Parameter(torch.tensor(init))
        opt = torch.optim.AdamW([tw], lr=0.01, weight_decay=weight_decay,
                                betas=(0.9, 0.999), eps=1e-8)
        for g in grads:
            opt.zero_grad()
            tw.grad = torch.tensor(g)
            opt.step()
        np.testing.assert_allclose(params["w"], tw.detach().numpy(), atol=1e-12)

    def test_wd_zero_equals_plain_adam(self):
        rng = RngStream(5)
        init = rng.child("init").normal(size=4)
        grads = [rng.child(f"g{t}").normal(size=4) for t in range(5)]
        params = {"w": init.copy()}
        state = AdamWState()
        for g in grads:
            adamw_step(params, {"w": g}, state, lr=0.02, weight_decay=0.0)
        tw = torch.nn.Parameter(torch.tensor(init))
        opt = torch.optim.Adam([tw], lr=0.02, betas=(0.9, 0.999), eps=1e-8)
        for g in grads:
            opt.zero_grad()
            tw.grad = torch.tensor(g)
            opt.step()
        np.testing.assert_allclose(params["w"], tw.detach().numpy(), atol=1e-12)


class TestCosine:
    def test_endpoints(self):
        assert cosine_lr(0, 100, 1e-3, 4e-4) == pytest.approx(1e-3, abs=1e-12)
        assert cosine_lr(99, 100, 1e-3, 4e-4) == pytest.approx(4e-4, abs=1e-12)

    def test_monotone_and_bounded(self):
        values = [cosine_lr(s, 50, 1e-3, 4e-4) for s in range(50)]
        assert all(4e-4 - 1e-12 <= v <= 1e-3 + 1e-12 for v in values)
        assert all(a >= b for a, b in zip(values, values[1:]))


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss, _ = cross_entropy(np.zeros((6, 4)), np.array([0, 1, 2, 3, 0, 1]))
        assert loss == pytest.approx(np.log(4.0), abs=1e-12)

    def test_large_margin_tends_to_zero(self):
        logits = np.full((2, 3), -50.0)
        logits[0, 1] = 50.0
        logits[1, 2] = 50.0
        loss, _ = cross_entropy(logits, np.array([1, 2]))
        assert loss < 1e-12

    def test_matches_naive_loop(self):
        logits = RngStream(6).normal(size=(3, 3))
        labels = np.array([2, 0, 1])
        loss, grad = cross_entropy(logits, labels)
        total = 0.0
        for i in range(3):
            probs = np.exp(logits[i]) / np.exp(logits[i]).sum()
            total += -np.log(probs[labels[i]])
        assert loss == pytest.approx(total / 3, abs=1e-12)
        # Gradient rows sum to zero (softmax minus one-hot, averaged).
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_out_of_range_label(self):
        with pytest.raises(InvalidInputError):
            cross_entropy(np.zeros((2, 3)), np.array([0, 3]))


class TestCheckpoint:
    def _nets(self):
        rng = RngStream(7)
        return {
            "adapter": AdapterMlp(4, 6, 3, rng.child("a")),
            "decoder": DecoderMlp(3, 6, 4, rng.child("d")),
            "probe": ProbeHead("nonlinear", 3, 2, hidden=5, rng=rng.child("p")),
        }

    def test_round_trip_bit_exact(self, tmp_path):
        nets = self._nets()
        path = tmp_path / "ckpt.aimk"
        save_checkpoint(path, nets, {"loss": "waco", "seed": 3})
        loaded, meta = load_checkpoint(path)
        assert meta == {"loss": "waco", "seed": 3}
        assert set(loaded) == set(nets)
        for name, net in nets.items():
            for key, value in net.params.items():
                np.testing.assert_array_equal(loaded[name].params[key], value)
        assert isinstance(loaded["probe"], ProbeHead)
        assert loaded["probe"].probe_kind == "nonlinear"

    def test_save_is_deterministic(self, tmp_path):
        nets = self._nets()
        p1, p2 = tmp_path / "a.aimk", tmp_path / "b.aimk"
        save_checkpoint(p1, nets, {"k": 1})
        save_checkpoint(p2, nets, {"k": 1})
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupted_byte_detected(self, tmp_path):
        path = tmp_path / "ckpt.aimk"
        save_checkpoint(path, self._nets())
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptFileError):
            load_checkpoint(path)

    def test_truncated_detected(self, tmp_path):
        path = tmp_path / "ckpt.aimk"
        save_checkpoint(path, self._nets())
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(CorruptFileError):
            load_checkpoint(path)

    def test_bad_magic_detected(self, tmp_path):
        path = tmp_path / "ckpt.aimk"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(CorruptFileError):
            load_checkpoint(path)
