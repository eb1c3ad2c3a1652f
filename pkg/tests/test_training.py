import numpy as np
import pytest

from sbridge.bridge import complex_normal
from sbridge.denoisers import TinyDenoiser, pack_weights, unpack_weights
from sbridge.schedules import VESchedule
from sbridge.training import (Adam, TrainConfig, TrainingDivergedError,
                              WeightAverage, example_loss_and_grads,
                              load_checkpoint, save_checkpoint, train)
from sbridge.transforms import CompressedSTFT


@pytest.fixture(scope="module")
def tiny_pairs():
    # short signals keep each epoch cheap
    rng = np.random.default_rng(0)
    pairs = []
    for _ in range(4):
        clean = rng.standard_normal(1600) * 0.3
        pairs.append((clean, clean + 0.1 * rng.standard_normal(1600)))
    return pairs


@pytest.fixture(scope="module")
def setup():
    return CompressedSTFT().fit(), VESchedule()


def small_config(**overrides):
    base = dict(hidden_sizes=(12,), max_epochs=2, batch_size=2, seed=0,
                lambda_aux=1e-3, aux_kind="l1")
    base.update(overrides)
    return TrainConfig(**base)


class TestConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            TrainConfig(lambda_aux=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(aux_kind="l2")
        with pytest.raises(ValueError):
            TrainConfig(ema_decay=1.0)
        with pytest.raises(ValueError):
            TrainConfig(select_by="pesq")


class TestOptimizer:
    def test_zero_learning_rate_is_identity(self, tiny_pairs, setup):
        transform, schedule = setup
        result = train(tiny_pairs, schedule, transform, small_config(lr=0.0, max_epochs=1))
        fresh = TinyDenoiser((12,), 4, seed=0)
        for key in fresh.weights:
            assert np.array_equal(result.denoiser.weights[key], fresh.weights[key])
            assert np.array_equal(result.ema_denoiser.weights[key], fresh.weights[key])

    def test_adam_moves_against_gradient(self):
        weights = {"w": np.array([1.0, -2.0])}
        opt = Adam(weights, lr=0.1)
        opt.step(weights, {"w": np.array([1.0, -1.0])})
        assert weights["w"][0] < 1.0 and weights["w"][1] > -2.0

    def test_overfit_single_fixed_tuple(self, setup):
        # 200 steps on one fixed (x, y, t, z) drives the loss below 10%
        transform, schedule = setup
        rng = np.random.default_rng(3)
        clean = rng.standard_normal(1600) * 0.3
        degraded = clean + 0.2 * rng.standard_normal(1600)
        item = {
            "clean_time": clean,
            "clean_coeffs": transform.analyze_array(clean),
            "degraded_coeffs": transform.analyze_array(degraded),
            "original_length": 1600,
        }
        t = 0.5
        z = complex_normal(rng, item["clean_coeffs"].shape)
        cfg = small_config(lr=3e-3)
        net = TinyDenoiser(cfg.hidden_sizes, cfg.time_freqs, seed=1)
        opt = Adam(net.weights, lr=cfg.lr)
        losses = []
        for _ in range(200):
            data_term, aux_term, grads = example_loss_and_grads(
                net, transform, schedule, item, t, z, cfg)
            losses.append(data_term + cfg.lambda_aux * aux_term)
            opt.step(net.weights, grads)
        assert losses[-1] < 0.1 * losses[0]


class TestWeightAverage:
    def test_geometric_contraction_exact(self):
        target = {"w": np.array([2.0, -1.0])}
        ema = WeightAverage({"w": np.zeros(2)}, decay=0.9)
        start_gap = target["w"] - ema.shadow["w"]
        for n in range(1, 12):
            ema.update(target)
            np.testing.assert_allclose(target["w"] - ema.shadow["w"],
                                       0.9 ** n * start_gap, rtol=1e-12)


class TestGradients:
    @pytest.mark.parametrize("aux_kind,lam", [(None, 0.0), ("l1", 1e-3),
                                              ("soft_sisdr", 1e-3)])
    def test_full_loss_gradcheck(self, setup, aux_kind, lam):
        transform, schedule = setup
        rng = np.random.default_rng(5)
        clean = rng.standard_normal(1200) * 0.2
        degraded = clean + 0.1 * rng.standard_normal(1200)
        item = {
            "clean_time": clean,
            "clean_coeffs": transform.analyze_array(clean),
            "degraded_coeffs": transform.analyze_array(degraded),
            "original_length": 1200,
        }
        cfg = TrainConfig(lambda_aux=lam, aux_kind=aux_kind, hidden_sizes=(20,), seed=0)
        net = TinyDenoiser(cfg.hidden_sizes, cfg.time_freqs, seed=2)
        t = 0.63
        z = complex_normal(rng, item["clean_coeffs"].shape)
        _, _, grads = example_loss_and_grads(net, transform, schedule, item, t, z, cfg)
        base = pack_weights(net.weights)
        grad_vec = pack_weights(grads)

        def total(vec):
            net.set_weights(unpack_weights(vec, net.weights))
            data_term, aux_term, _ = example_loss_and_grads(
                net, transform, schedule, item, t, z, cfg)
            return data_term + lam * aux_term

        eps = 1e-4
        idx = np.random.default_rng(0).choice(base.size, 30, replace=False)
        for i in idx:
            up, down = base.copy(), base.copy()
            up[i] += eps
            down[i] -= eps
            fd = (total(up) - total(down)) / (2 * eps)
            rel = abs(fd - grad_vec[i]) / max(abs(fd), abs(grad_vec[i]), 1e-10)
            assert rel < 1e-4
        net.set_weights(unpack_weights(base, net.weights))


class TestTrainLoop:
    def test_reproducible_histories(self, tiny_pairs, setup):
        transform, schedule = setup
        a = train(tiny_pairs, schedule, transform, small_config(lr=1e-3))
        b = train(tiny_pairs, schedule, transform, small_config(lr=1e-3))
        assert a.history == b.history
        for key in a.denoiser.weights:
            assert np.array_equal(a.denoiser.weights[key], b.denoiser.weights[key])

    def test_empty_dataset_rejected(self, setup):
        transform, schedule = setup
        with pytest.raises(ValueError, match="non-empty"):
            train([], schedule, transform, small_config())

    def test_divergence_aborts_with_step(self, tiny_pairs, setup):
        # a catastrophic step size overflows the squared loss to inf
        transform, schedule = setup
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDivergedError) as info:
                train(tiny_pairs, schedule, transform,
                      small_config(lr=1e200, max_epochs=50))
        assert info.value.step >= 1

    def test_validation_tracks_best_epoch(self, tiny_pairs, setup):
        transform, schedule = setup
        result = train(tiny_pairs[:3], schedule, transform,
                       small_config(lr=1e-3, max_epochs=4, patience=50),
                       val_pairs=tiny_pairs[3:])
        metrics = [row["val_metric"] for row in result.history]
        assert result.best_epoch == int(np.argmin(metrics))

    def test_history_loss_decreases_on_toy(self, tiny_pairs, setup):
        transform, schedule = setup
        result = train(tiny_pairs, schedule, transform,
                       small_config(lr=3e-3, max_epochs=10))
        assert result.history[-1]["train_loss"] < result.history[0]["train_loss"]


class TestCheckpoint:
    def test_round_trip(self, tiny_pairs, setup, tmp_path):
        transform, schedule = setup
        result = train(tiny_pairs, schedule, transform, small_config(lr=1e-3))
        path = tmp_path / "ck.npz"
        save_checkpoint(path, result, transform, schedule)
        loaded = load_checkpoint(path)
        for key in result.denoiser.weights:
            assert np.array_equal(loaded.denoiser.weights[key],
                                  result.denoiser.weights[key])
            assert np.array_equal(loaded.ema_denoiser.weights[key],
                                  result.ema_denoiser.weights[key])
        assert loaded.train_config == result.config
        assert loaded.schedule.to_dict() == schedule.to_dict()
        assert loaded.transform.get_params() == transform.get_params()

    def test_shape_mismatch_detected(self, tiny_pairs, setup, tmp_path):
        transform, schedule = setup
        result = train(tiny_pairs, schedule, transform, small_config(lr=1e-3))
        path = tmp_path / "ck.npz"
        save_checkpoint(path, result, transform, schedule)
        blob = dict(np.load(path, allow_pickle=False))
        blob["raw.w0"] = np.zeros((2, 2))
        tampered = tmp_path / "bad.npz"
        np.savez(tampered, **blob)
        with pytest.raises(ValueError, match="shape"):
            load_checkpoint(tampered)

    def test_resume_reproduces_uninterrupted_run(self, tiny_pairs, setup, tmp_path):
        transform, schedule = setup
        full = train(tiny_pairs, schedule, transform,
                     small_config(lr=1e-3, max_epochs=4))
        first = train(tiny_pairs, schedule, transform,
                      small_config(lr=1e-3, max_epochs=2))
        resumed = train(tiny_pairs, schedule, transform,
                        small_config(lr=1e-3, max_epochs=4),
                        resume_state=first.training_state)
        assert len(resumed.history) == 2
        for row_full, row_resumed in zip(full.history[2:], resumed.history):
            assert row_full["train_loss"] == pytest.approx(
                row_resumed["train_loss"], abs=1e-10)
        for key in full.denoiser.weights:
            np.testing.assert_allclose(resumed.denoiser.weights[key],
                                       full.denoiser.weights[key], atol=1e-12)
