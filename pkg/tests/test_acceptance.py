"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The end-to-end training
criterion dominates the runtime (several minutes on a laptop CPU); everything
else completes in seconds.
"""

import time

import numpy as np
import pytest

from sbridge.bridge import (complex_normal, gaussian_score, ode_step,
                            run_reverse, sample_marginal, sde_step, time_grid)
from sbridge.cli import EXIT_OK, main
from sbridge.datasets import DatasetSpec, gen_clean, iter_examples
from sbridge.denoisers import OracleDenoiser, TinyDenoiser, pack_weights, unpack_weights
from sbridge.enhance import enhance_signal
from sbridge.losses import score_matching_loss
from sbridge.metrics import si_sdr
from sbridge.schedules import OUVESchedule, VESchedule, VPSchedule
from sbridge.seeding import derive_rng
from sbridge.training import TrainConfig, example_loss_and_grads, train
from sbridge.transforms import CompressedSTFT

BRIDGE_SCHEDULES = (VESchedule(), VPSchedule())


def check(criterion, passed, detail):
    print(f"\n[acceptance] criterion {criterion:2d}: "
          f"{'PASS' if passed else 'FAIL'} - {detail}", flush=True)
    assert passed, f"criterion {criterion} failed: {detail}"


class ZeroNoise:
    def standard_normal(self, shape):
        return np.zeros(shape)


class UnitNoise:
    def standard_normal(self, shape):
        return np.ones(shape)


def test_criterion_01_schedule_boundary_identities():
    worst = 0.0
    for s in BRIDGE_SCHEDULES:
        w_x0, w_y0 = s.weights(0.0)
        w_xT, w_yT = s.weights(s.T)
        values = [float(w_x0) - 1.0, float(w_y0), float(w_xT), float(w_yT) - 1.0,
                  float(s.marginal_variance(0.0)), float(s.marginal_variance(s.T))]
        worst = max(worst, max(abs(v) for v in values))
    check(1, worst <= 1e-12, f"boundary identity deviation {worst:.2e} (tol 1e-12)")


def test_criterion_02_maximum_variance():
    grid = np.linspace(0.0, 1.0, 10001)
    ve = VESchedule()
    ve_peak = float(np.max(ve.marginal_variance(grid)))
    quarter = float(ve.sigma2_total) / 4.0
    ve_ok = (abs(ve_peak - quarter) <= 1e-6 * quarter
             and abs(ve_peak - 0.3) <= 0.005 * 0.3)
    vp_peak = float(np.max(VPSchedule().marginal_variance(grid)))
    vp_ok = abs(vp_peak - 0.3) <= 0.05 * 0.3
    check(2, ve_ok and vp_ok,
          f"ve peak {ve_peak:.4f} (= total/4 {quarter:.4f}), vp peak {vp_peak:.4f}")


def test_criterion_03_oracle_exactness():
    rng = np.random.default_rng(0)
    worst = 0.0
    for s in BRIDGE_SCHEDULES:
        for case in range(10):
            clean = rng.standard_normal((24, 16)) + 1j * rng.standard_normal((24, 16))
            degraded = clean + 0.7 * (rng.standard_normal((24, 16))
                                      + 1j * rng.standard_normal((24, 16)))
            for kind in ("sde", "ode"):
                outs = [run_reverse(degraded, OracleDenoiser(clean), s, kind=kind,
                                    n_steps=n, rng=case) for n in (1, 5, 50)]
                for out in outs:
                    rel = float(np.max(np.abs(out - clean)) / np.max(np.abs(clean)))
                    worst = max(worst, rel)
                assert np.array_equal(outs[0], outs[1]) and np.array_equal(outs[0], outs[2])
    check(3, worst < 1e-6, f"worst oracle relative error {worst:.2e} (tol 1e-6), "
                           "outputs independent of step count")


def test_criterion_04_ode_mean_path_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    y = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    worst = 0.0
    for s in BRIDGE_SCHEDULES:
        grid = time_grid(s, 50)
        state = y.copy()
        for i in range(len(grid) - 1):
            state = ode_step(state, x, y, float(grid[i]), float(grid[i + 1]), s)
            w_x, w_y = s.weights(float(grid[i + 1]))
            mean = w_x * x + w_y * y
            scale = max(float(np.max(np.abs(mean))), 1e-30)
            worst = max(worst, float(np.max(np.abs(state - mean))) / scale)
    check(4, worst < 1e-8, f"worst grid-point deviation from the mean path {worst:.2e}")


def test_criterion_05_one_step_marginal_equivalence():
    x = np.array([1.0 + 0.5j, -0.3 + 0.2j])
    y = np.array([0.2 - 1.0j, 0.8 + 0.1j])
    zeros = np.zeros(2, dtype=complex)
    worst = 0.0
    for s in BRIDGE_SCHEDULES:
        for t in (0.1, 0.25, 0.5, 0.75, 0.9):
            w_x, w_y = (float(v) for v in s.weights(t))
            std = float(np.sqrt(s.marginal_variance(t)))
            coef_y = sde_step(y, zeros, s.T, t, s, ZeroNoise()) / y
            coef_x = sde_step(zeros, x, s.T, t, s, ZeroNoise()) / x
            noise = sde_step(zeros, zeros, s.T, t, s, UnitNoise())
            worst = max(worst,
                        float(np.max(np.abs(coef_y - w_y))),
                        float(np.max(np.abs(coef_x - w_x))),
                        float(np.max(np.abs(np.abs(noise) - std))))
    algebra_ok = worst <= 1e-12

    s = VESchedule()
    t = 0.5
    n = 100_000
    states = np.broadcast_to(y[:1], (n,))
    estimates = np.broadcast_to(x[:1], (n,))
    draws = sde_step(states, estimates, s.T, t, s, np.random.default_rng(0))
    w_x, w_y = s.weights(t)
    mean = complex(w_x * x[0] + w_y * y[0])
    var = float(s.marginal_variance(t))
    se = np.sqrt(var / 2 / n)
    mc_ok = (abs(draws.real.mean() - mean.real) <= 3 * se
             and abs(draws.imag.mean() - mean.imag) <= 3 * se
             and abs(np.var(draws.real, ddof=1) - var / 2) <= 0.05 * var / 2
             and abs(np.var(draws.imag, ddof=1) - var / 2) <= 0.05 * var / 2)
    check(5, algebra_ok and mc_ok,
          f"coefficient deviation {worst:.2e} (tol 1e-12); Monte-Carlo mean within "
          f"3 SE and variance within 5% over {n} draws")


def test_criterion_06_forward_marginal_statistics(tmp_path):
    start = time.time()
    code = main(["simulate", "--out-dir", str(tmp_path), "--schedule", "all",
                 "--trajectories", "100000", "--seed", "0"])
    elapsed = time.time() - start
    check(6, code == EXIT_OK and elapsed < 30.0,
          f"simulate gate exit={code} in {elapsed:.1f}s for sbve/sbvp/ouve "
          "at t=0.1..0.9")


def test_criterion_07_transform_round_trip():
    transform = CompressedSTFT(win_size=510, hop_size=128, compression=0.5,
                               scale=0.33).fit()
    rng = np.random.default_rng(7)
    signals = [rng.standard_normal(rng.integers(600, 20000)) for _ in range(12)]
    t_axis = np.arange(8000) / 16000.0
    signals += [
        np.sin(2 * np.pi * 440 * t_axis),
        np.sin(2 * np.pi * (100 + 1500 * t_axis) * t_axis),  # chirp
        gen_clean(DatasetSpec(clean_kind="harmonic"), 0).samples,
        gen_clean(DatasetSpec(clean_kind="ar2"), 1).samples,
        np.where(np.arange(5000) == 2500, 1.0, 0.0),          # impulse
        np.concatenate([np.zeros(3000), np.ones(2000) * 0.4]),  # step
        np.full(2000, 0.25),
        np.concatenate([np.zeros(1000), rng.standard_normal(1000), np.zeros(1000)]),
    ]
    assert len(signals) == 20
    worst = 0.0
    for x in signals:
        back = transform.inverse_transform(transform.transform(x))
        worst = max(worst, float(np.max(np.abs(back.samples - x))))
    check(7, worst < 1e-6, f"worst round-trip absolute error {worst:.2e} over "
                           f"{len(signals)} signals")


def test_criterion_08_gradient_correctness():
    transform = CompressedSTFT().fit()
    schedule = VESchedule()
    rng = np.random.default_rng(5)
    clean = rng.standard_normal(1200) * 0.2
    degraded = clean + 0.1 * rng.standard_normal(1200)
    item = {
        "clean_time": clean,
        "clean_coeffs": transform.analyze_array(clean),
        "degraded_coeffs": transform.analyze_array(degraded),
        "original_length": 1200,
    }
    t_draw = 0.63
    z = complex_normal(rng, item["clean_coeffs"].shape)
    n_probes = 0
    worst = 0.0
    for aux_kind in ("l1", "soft_sisdr"):
        for lam in (0.0, 1e-3):
            cfg = TrainConfig(lambda_aux=lam, aux_kind=aux_kind,
                              hidden_sizes=(20,), seed=0)
            net = TinyDenoiser(cfg.hidden_sizes, cfg.time_freqs, seed=2)
            _, _, grads = example_loss_and_grads(net, transform, schedule,
                                                 item, t_draw, z, cfg)
            base = pack_weights(net.weights)
            grad_vec = pack_weights(grads)

            def total(vec, net=net, cfg=cfg, lam=lam):
                net.set_weights(unpack_weights(vec, net.weights))
                data_term, aux_term, _ = example_loss_and_grads(
                    net, transform, schedule, item, t_draw, z, cfg)
                return data_term + lam * aux_term

            eps = 1e-4
            idx = np.random.default_rng(n_probes).choice(base.size, 30, replace=False)
            for i in idx:
                up, down = base.copy(), base.copy()
                up[i] += eps
                down[i] -= eps
                fd = (total(up) - total(down)) / (2 * eps)
                rel = abs(fd - grad_vec[i]) / max(abs(fd), abs(grad_vec[i]), 1e-10)
                worst = max(worst, rel)
                n_probes += 1
            net.set_weights(unpack_weights(base, net.weights))
    check(8, n_probes >= 100 and worst < 1e-4,
          f"{n_probes} probed parameters, worst relative error {worst:.2e} (tol 1e-4)")


def test_criterion_09_score_target_sanity():
    schedule = OUVESchedule()
    x = np.array([1.0 + 0.5j, -0.3 + 0.2j])
    y = np.array([0.2 - 1.0j, 0.8 + 0.1j])
    t = 0.45
    rng = np.random.default_rng(2)
    x_t = sample_marginal(x, y, t, schedule, rng)
    w_x, w_y = schedule.weights(t)
    mean = w_x * x + w_y * y
    var = float(schedule.marginal_variance(t))

    def log_density(v):
        return float(-np.sum(np.abs(v - mean) ** 2) / var)

    h = 1e-6
    fd = np.zeros_like(x_t)
    for i in range(x_t.size):
        for delta, weight in ((h, 1.0), (1j * h, 1j)):
            shift = np.zeros_like(x_t)
            shift[i] = delta
            fd[i] += weight * (log_density(x_t + shift) - log_density(x_t - shift)) / (2 * h)
    fd *= 0.5  # complex score convention: half the stacked real gradient
    score = gaussian_score(x_t, x, y, t, schedule)
    score_dev = float(np.max(np.abs(score - fd)))

    z = complex_normal(rng, x.shape)
    sigma = float(np.sqrt(var))
    loss_at_minimizer = score_matching_loss(-z / sigma, sigma, z)
    check(9, score_dev < 1e-5 and loss_at_minimizer < 1e-25,
          f"score vs finite differences {score_dev:.2e} (tol 1e-5); "
          f"loss at analytic minimizer {loss_at_minimizer:.2e}")


# -- end-to-end training (criteria 10 and 12 share the trained model) ---------


@pytest.fixture(scope="module")
def toy_enhancement():
    train_pairs = list(iter_examples(DatasetSpec(n_examples=64, master_seed=0)))
    test_pairs = list(iter_examples(DatasetSpec(n_examples=16, master_seed=1)))
    transform = CompressedSTFT().fit()
    schedule = VESchedule()
    cfg = TrainConfig(lr=3e-3, batch_size=4, max_epochs=28, seed=0,
                      ema_decay=0.98, lambda_aux=1e-3, aux_kind="l1")
    result = train(train_pairs, schedule, transform, cfg)

    cache = {}

    def improvements(n_steps):
        if n_steps not in cache:
            values = []
            for i, pair in enumerate(test_pairs):
                estimate = enhance_signal(pair.degraded, result.denoiser, transform,
                                          schedule, sampler="sde", n_steps=n_steps,
                                          rng=derive_rng(0, 10, i))
                values.append(si_sdr(pair.clean.samples, estimate)
                              - si_sdr(pair.clean.samples, pair.degraded.samples))
            cache[n_steps] = float(np.mean(values))
        return cache[n_steps]

    return improvements


def test_criterion_10_end_to_end_toy_enhancement(toy_enhancement):
    improvement = toy_enhancement(50)
    check(10, improvement >= 3.0,
          f"mean SI-SDR improvement {improvement:.2f} dB over 16 held-out "
          "examples (threshold 3 dB, SDE sampler, 50 steps)")


def test_criterion_11_figure_shape_reproduction(tmp_path):
    code = main(["schedule-dump", "--out-dir", str(tmp_path), "--points", "101"])
    assert code == EXIT_OK
    import csv
    with open(tmp_path / "schedules.csv") as fh:
        rows = list(csv.DictReader(fh))
    end = {r["schedule"]: (float(r["w_x"]), float(r["w_y"]))
           for r in rows if r["t"] == "1"}
    start = {r["schedule"]: (float(r["w_x"]), float(r["w_y"]))
             for r in rows if r["t"] == "0"}
    sb_ok = all(start[k] == (1.0, 0.0) and end[k] == (0.0, 1.0)
                for k in ("sbve", "sbvp"))
    ouve_end = end["ouve"][0]
    ouve_ok = abs(ouve_end - np.exp(-1.5)) < 1e-9 and ouve_end > 0
    check(11, sb_ok and ouve_ok,
          f"bridge weights interpolate endpoints exactly; baseline w_x(1)="
          f"{ouve_end:.4f} > 0 shows the mean mismatch")


def test_criterion_12_step_count_robustness_report(toy_enhancement):
    imp_50 = toy_enhancement(50)
    imp_5 = toy_enhancement(5)
    degradation = (imp_50 - imp_5) / imp_50 if imp_50 > 0 else float("nan")
    # report-only: logged alongside criterion 10, no hard threshold
    print(f"\n[acceptance] criterion 12: REPORT - SDE improvement at 5 steps "
          f"{imp_5:.2f} dB vs {imp_50:.2f} dB at 50 steps "
          f"({degradation:.0%} degradation; qualitative robustness analogue)",
          flush=True)
