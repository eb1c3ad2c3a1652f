import numpy as np
import pytest

from sbridge.denoisers import (ConstantDenoiser, OracleDenoiser, TinyDenoiser,
                               pack_weights, time_embedding, unpack_weights)


def grid(rng, shape=(12, 9)):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestInstruments:
    def test_oracle_ignores_inputs(self, rng):
        clean = grid(rng)
        oracle = OracleDenoiser(clean)
        assert np.array_equal(oracle(grid(rng), grid(rng), 0.3), clean)
        assert np.array_equal(oracle(grid(rng), grid(rng), 0.9), clean)

    def test_constant_returns_its_grid(self, rng):
        y = grid(rng)
        stub = ConstantDenoiser(y)
        assert np.array_equal(stub(grid(rng), y, 0.1), y)

    def test_shape_mismatch_at_call(self, rng):
        oracle = OracleDenoiser(grid(rng))
        with pytest.raises(ValueError, match="shape"):
            oracle(grid(rng, (3, 3)), grid(rng, (3, 3)), 0.5)


class TestTinyDenoiser:
    def test_output_shape_and_dtype(self, rng):
        net = TinyDenoiser(seed=0)
        x_t, y = grid(rng), grid(rng)
        out = net(x_t, y, 0.5)
        assert out.shape == x_t.shape
        assert out.dtype == np.complex128
        assert np.all(np.isfinite(out))

    def test_default_parameter_budget(self):
        assert TinyDenoiser().parameter_count() < 100_000

    def test_same_seed_same_weights(self):
        a, b = TinyDenoiser(seed=7), TinyDenoiser(seed=7)
        for key in a.weights:
            assert np.array_equal(a.weights[key], b.weights[key])

    def test_deterministic_forward(self, rng):
        net = TinyDenoiser(seed=1)
        x_t, y = grid(rng), grid(rng)
        assert np.array_equal(net(x_t, y, 0.25), net(x_t, y, 0.25))

    def test_time_input_changes_output(self, rng):
        net = TinyDenoiser(seed=1)
        x_t, y = grid(rng), grid(rng)
        assert not np.array_equal(net(x_t, y, 0.1), net(x_t, y, 0.9))

    def test_small_grids_do_not_crash(self, rng):
        net = TinyDenoiser(hidden_sizes=(8,), seed=0)
        for shape in ((2, 2), (1, 5), (5, 1)):
            out = net(grid(rng, shape), grid(rng, shape), 0.5)
            assert out.shape == shape

    def test_mismatched_grids_rejected(self, rng):
        net = TinyDenoiser(seed=0)
        with pytest.raises(ValueError, match="shape mismatch"):
            net(grid(rng, (4, 4)), grid(rng, (4, 5)), 0.5)

    def test_spawn_copies_architecture_and_weights(self, rng):
        net = TinyDenoiser(hidden_sizes=(16, 8), time_freqs=3, seed=2)
        clone = net.spawn()
        assert clone.hidden_sizes == (16, 8)
        x_t, y = grid(rng), grid(rng)
        assert np.array_equal(net(x_t, y, 0.4), clone(x_t, y, 0.4))
        clone.weights["w0"][0, 0] += 1.0
        assert not np.array_equal(net.weights["w0"], clone.weights["w0"])

    def test_set_weights_validates(self):
        net = TinyDenoiser(seed=0)
        with pytest.raises(ValueError, match="unknown weight"):
            net.set_weights({"nope": np.zeros(3)})
        with pytest.raises(ValueError, match="shape"):
            net.set_weights({"w0": np.zeros((1, 1))})

    def test_pack_unpack_round_trip(self):
        net = TinyDenoiser(hidden_sizes=(10,), seed=3)
        vec = pack_weights(net.weights)
        assert vec.size == net.parameter_count()
        restored = unpack_weights(vec, net.weights)
        for key in net.weights:
            assert np.array_equal(restored[key], net.weights[key])

    def test_backward_matches_finite_differences(self, rng):
        net = TinyDenoiser(hidden_sizes=(12,), time_freqs=2, seed=4)
        x_t, y = grid(rng, (6, 5)), grid(rng, (6, 5))
        probe = grid(rng, (6, 5))

        def scalar(v):
            net.set_weights(unpack_weights(v, net.weights))
            out = net(x_t, y, 0.3)
            return float(np.sum(out.real * probe.real + out.imag * probe.imag))

        base = pack_weights(net.weights)
        _, cache = net.forward_cached(x_t, y, 0.3)
        grads = pack_weights(net.backward(cache, probe))
        h = 1e-6
        idx = np.random.default_rng(0).choice(base.size, 25, replace=False)
        for i in idx:
            up, down = base.copy(), base.copy()
            up[i] += h
            down[i] -= h
            fd = (scalar(up) - scalar(down)) / (2 * h)
            assert grads[i] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_time_embedding_range_and_size():
    emb = time_embedding(0.37, 4)
    assert emb.shape == (8,)
    assert np.all(np.abs(emb) <= 1.0)
    assert not np.array_equal(time_embedding(0.1, 4), time_embedding(0.2, 4))
