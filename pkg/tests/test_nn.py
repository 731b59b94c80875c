import numpy as np
import pytest

from ilsa import autodiff as ad
from ilsa import nn
from ilsa.autodiff import Tensor, backward
from ilsa.errors import ShapeError, TrainingError
from ilsa.nn import (Adam, ParamSet, init_mlp, init_transformer, load_checkpoint,
                     mlp_forward, save_checkpoint, transformer_forward)


def _rng(seed=0):
    return np.random.default_rng(seed)


def _mlp_params(dims, seed=0, partition="state_embed"):
    p = ParamSet()
    init_mlp(p, "net", dims, partition, _rng(seed))
    return p


class TestParamSet:
    def test_duplicate_name_rejected(self):
        p = ParamSet()
        p.add("w", np.zeros(3), "transformer")
        with pytest.raises(ShapeError):
            p.add("w", np.zeros(3), "transformer")

    def test_unknown_partition_rejected(self):
        p = ParamSet()
        with pytest.raises(ShapeError):
            p.add("w", np.zeros(3), "decoder")

    def test_frozen_leaves_get_no_gradient_entry(self):
        p = _mlp_params([3, 4, 4, 2])
        leaves = p.leaves({"final_head"})  # nothing trainable here
        x = Tensor(_rng(1).normal(size=(5, 3)))
        out = mlp_forward(leaves, "net", x)
        backward(ad.tsum(out))
        assert nn.collect_gradients(leaves) == {}

    def test_changed_names(self):
        p = _mlp_params([2, 3, 3, 1])
        q = p.copy()
        q.entries["net.w1"].data[0, 0] += 1.0
        assert p.changed_names(q) == ["net.w1"]


class TestMlpForward:
    def test_all_zero_weights_give_zero_output(self):
        p = ParamSet()
        for i, (a, b) in enumerate([(3, 4), (4, 4), (4, 2)]):
            p.add(f"net.w{i}", np.zeros((a, b)), "state_embed")
            p.add(f"net.b{i}", np.zeros(b), "state_embed")
        out = mlp_forward(p.leaves(None), "net", Tensor(_rng(0).normal(size=(6, 3))))
        assert np.array_equal(out.data, np.zeros((6, 2)))

    def test_identity_single_unit_passthrough(self):
        p = ParamSet()
        for i in range(3):
            p.add(f"net.w{i}", np.ones((1, 1)), "state_embed")
            p.add(f"net.b{i}", np.zeros(1), "state_embed")
        out = mlp_forward(p.leaves(None), "net", Tensor(np.array([[2.0]])))
        assert out.data[0, 0] == pytest.approx(2.0)  # relu(2) = 2 throughout

    def test_random_mlp_matches_matrix_oracle(self):
        p = _mlp_params([3, 4, 4, 2], seed=3)
        x = _rng(4).normal(size=(7, 3))
        out = mlp_forward(p.leaves(None), "net", Tensor(x)).data
        # independent matrix arithmetic
        h = np.maximum(x @ p["net.w0"] + p["net.b0"], 0.0)
        h = np.maximum(h @ p["net.w1"] + p["net.b1"], 0.0)
        expect = h @ p["net.w2"] + p["net.b2"]
        np.testing.assert_allclose(out, expect, atol=1e-12, rtol=0)

    def test_shape_mismatch_names_offender(self):
        p = _mlp_params([3, 4, 4, 2])
        with pytest.raises(ShapeError, match="net.w0"):
            mlp_forward(p.leaves(None), "net", Tensor(np.zeros((2, 5))))


def _transformer_params(n_layers=1, d_model=8, ffn=16, seed=0):
    p = ParamSet()
    init_transformer(p, "tf", n_layers, d_model, ffn, _rng(seed))
    return p


class TestTransformerForward:
    def test_single_token_softmax_is_one(self):
        p = _transformer_params()
        x = _rng(5).normal(size=(1, 1, 8))
        out = transformer_forward(p.leaves(None), "tf", Tensor(x), 1, 2)
        assert out.data.shape == (1, 1, 8)
        # attention over a single key contributes exactly its value path:
        # replicating the token must replicate the output rows
        x2 = np.concatenate([x, x], axis=1)
        out2 = transformer_forward(p.leaves(None), "tf", Tensor(x2), 1, 2)
        np.testing.assert_allclose(out2.data[0, 0], out.data[0, 0], atol=1e-12)
        np.testing.assert_allclose(out2.data[0, 1], out.data[0, 0], atol=1e-12)

    def test_all_zero_parameters_reduce_to_zero_output(self):
        # with every gain, weight, and bias at zero each sublayer contributes
        # nothing, residuals pass the input through, and the zero-gain final
        # layer norm collapses the result to exactly zero
        p = _transformer_params()
        for entry in p.entries.values():
            entry.data[...] = 0.0
        x = _rng(6).normal(size=(2, 3, 8))
        out = transformer_forward(p.leaves(None), "tf", Tensor(x), 1, 2)
        assert np.array_equal(out.data, np.zeros((2, 3, 8)))

    def test_permutation_equivariance(self):
        p = _transformer_params(n_layers=2, seed=9)
        x = _rng(7).normal(size=(1, 5, 8))
        perm = np.array([3, 0, 4, 1, 2])
        out = transformer_forward(p.leaves(None), "tf", Tensor(x), 2, 2).data
        out_p = transformer_forward(p.leaves(None), "tf", Tensor(x[:, perm]), 2, 2).data
        np.testing.assert_allclose(out_p, out[:, perm], atol=1e-12, rtol=0)

    def test_head_count_must_divide_d_model(self):
        p = _transformer_params()
        with pytest.raises(ShapeError):
            transformer_forward(p.leaves(None), "tf", Tensor(np.zeros((1, 2, 8))), 1, 3)

    def test_gradients_match_finite_differences(self):
        # keep the loss O(1e-1) so float64 roundoff in the central difference
        # stays far below the tolerance for small-gradient coordinates
        p = _transformer_params(n_layers=1, d_model=4, ffn=8, seed=11)
        x0 = _rng(12).normal(size=(2, 3, 4))

        def value(flat):
            q = p.copy()
            i = 0
            for name in q.entries:
                size = q.entries[name].data.size
                q.entries[name].data[...] = flat[i:i + size].reshape(
                    q.entries[name].data.shape)
                i += size
            out = transformer_forward(q.leaves(None), "tf", Tensor(x0), 1, 2)
            return float(ad.tmean(ad.square(out)).data)

        flat0 = np.concatenate([p.entries[n].data.ravel() for n in p.entries])
        leaves = p.leaves(set(nn.PARTITIONS))
        out = transformer_forward(leaves, "tf", Tensor(x0), 1, 2)
        backward(ad.tmean(ad.square(out)))
        grads = nn.collect_gradients(leaves)
        flat_grad = np.concatenate([
            grads.get(n, np.zeros_like(p.entries[n].data)).ravel()
            for n in p.entries
        ])
        h = 1e-6
        for i in _rng(13).choice(flat0.size, size=60, replace=False):
            xp, xm = flat0.copy(), flat0.copy()
            xp[i] += h
            xm[i] -= h
            fd = (value(xp) - value(xm)) / (2 * h)
            if abs(flat_grad[i]) > 1e-6 or abs(fd) > 1e-6:
                rel = abs(flat_grad[i] - fd) / max(abs(flat_grad[i]), abs(fd))
                assert rel < 1e-4, f"coordinate {i}: ad={flat_grad[i]} fd={fd}"


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = _mlp_params([2, 3, 3, 1])
        snap = p.copy()
        opt = Adam(lr=0.1)
        opt.step(p, {n: np.zeros_like(p.entries[n].data) for n in p.entries})
        assert p.changed_names(snap) == []

    def test_constant_gradient_step_magnitude_approaches_lr(self):
        p = ParamSet()
        p.add("x", np.array([0.0]), "transformer")
        opt = Adam(lr=0.01)
        g = np.array([3.7])
        prev = p["x"].copy()
        sizes = []
        for _ in range(200):
            opt.step(p, {"x": g})
            sizes.append(abs(float(p["x"] - prev)))
            prev = p["x"].copy()
        # parameter moves opposite the gradient with |step| -> lr
        assert p["x"][0] < 0
        assert sizes[-1] == pytest.approx(0.01, rel=1e-3)

    def test_frozen_parameter_bit_identical(self):
        p = _mlp_params([2, 3, 3, 1])
        snap = p.copy()
        opt = Adam(lr=0.5)
        grads = {"net.w0": np.ones_like(p["net.w0"])}  # only one entry present
        opt.step(p, grads)
        changed = p.changed_names(snap)
        assert changed == ["net.w0"]
        assert np.array_equal(p["net.b2"], snap["net.b2"])


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        p = _mlp_params([3, 5, 5, 2], seed=21)
        p.add("extra.type_emb", _rng(22).normal(size=(3, 5)), "transformer")
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, p, {"policy": {"d_model": 5}, "note": "x"})
        q, meta = load_checkpoint(path)
        assert meta["policy"]["d_model"] == 5
        assert list(q.entries) == list(p.entries)
        for name in p.entries:
            assert np.array_equal(q[name], p[name])
            assert q.entries[name].partition == p.entries[name].partition

    def test_magic_string_enforced(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(TrainingError):
            load_checkpoint(path)

    def test_reloaded_params_give_bit_identical_forward(self, tmp_path):
        p = _mlp_params([4, 6, 6, 3], seed=31)
        x = Tensor(_rng(32).normal(size=(10, 4)))
        before = mlp_forward(p.leaves(None), "net", x).data.copy()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, p, {})
        q, _ = load_checkpoint(path)
        after = mlp_forward(q.leaves(None), "net", x).data
        assert np.array_equal(before, after)
