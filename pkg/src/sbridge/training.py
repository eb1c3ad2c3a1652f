"""Training loop for the small denoiser: objective, Adam, weight averaging.

The loop follows the data-prediction recipe: draw a clean/degraded pair,
draw a process time uniformly on ``[t_min, T]``, perturb the clean
coefficients to the forward marginal, regress the denoiser output onto the
clean coefficients, and optionally add the time-domain auxiliary loss
propagated through the inverse transform.  The optimizer is Adam with bias
correction, kept in-module so the gradient path stays fully inspectable; an
exponential moving average of the weights is maintained for evaluation.

Everything is driven by a single seeded generator, so runs are bit
reproducible and a checkpoint carrying the optimizer and generator state
resumes exactly.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .bridge import complex_normal
from .denoisers import TinyDenoiser
from .enhance import enhance_signal
from .losses import AUX_KINDS, aux_loss_and_grad, data_mse, data_mse_grad
from .metrics import si_sdr
from .schedules import make_schedule
from .seeding import derive_rng
from .transforms import CompressedSTFT, TimeSignal

CHECKPOINT_FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite during optimization."""

    def __init__(self, step):
        super().__init__(f"non-finite loss at training step {step}")
        self.step = step


@dataclass
class TrainConfig:
    """Hyperparameters of the toy training loop."""

    lambda_aux: float = 1e-3
    aux_kind: str | None = "l1"
    lr: float = 1e-4
    batch_size: int = 8
    ema_decay: float = 0.999
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    hidden_sizes: tuple = (64, 64)
    time_freqs: int = 4
    snr_max_db: float = 30.0
    select_by: str = "val_loss"  # or "si_sdr"
    val_sampler_steps: int = 10

    def __post_init__(self):
        if self.lambda_aux < 0:
            raise ValueError(f"lambda_aux must be non-negative, got {self.lambda_aux}")
        if self.aux_kind not in AUX_KINDS:
            raise ValueError(f"aux_kind must be one of {AUX_KINDS}, got {self.aux_kind!r}")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must lie in (0, 1), got {self.ema_decay}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.select_by not in ("val_loss", "si_sdr"):
            raise ValueError(f"select_by must be 'val_loss' or 'si_sdr', got {self.select_by!r}")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)


class Adam:
    """Adam with bias correction over a dict of weight arrays."""

    def __init__(self, template, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in template.items()}
        self.v = {k: np.zeros_like(v) for k, v in template.items()}

    def step(self, weights, grads):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for key, grad in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * grad ** 2
            m_hat = self.m[key] / correction1
            v_hat = self.v[key] / correction2
            weights[key] = weights[key] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class WeightAverage:
    """Exponential moving average of a weight dict."""

    def __init__(self, weights, decay):
        self.decay = decay
        self.shadow = {k: v.copy() for k, v in weights.items()}

    def update(self, weights):
        for key, value in weights.items():
            self.shadow[key] = self.decay * self.shadow[key] + (1.0 - self.decay) * value


def _pair_signals(pair):
    """Accept PairedExample-likes or (clean, degraded) tuples of arrays."""
    if hasattr(pair, "clean") and hasattr(pair, "degraded"):
        clean, degraded = pair.clean, pair.degraded
    else:
        clean, degraded = pair
    if isinstance(clean, TimeSignal):
        clean = clean.samples
    if isinstance(degraded, TimeSignal):
        degraded = degraded.samples
    return np.asarray(clean, dtype=np.float64), np.asarray(degraded, dtype=np.float64)


def _prepare(pairs, transform):
    """Normalize by the degraded peak and precompute coefficient grids."""
    prepared = []
    for pair in pairs:
        clean, degraded = _pair_signals(pair)
        if clean.shape != degraded.shape:
            raise ValueError("clean and degraded signals must have equal length")
        scale = float(np.max(np.abs(degraded)))
        if scale == 0.0:
            scale = 1.0
        clean_norm = clean / scale
        prepared.append({
            "clean_time": clean_norm,
            "degraded_time": degraded / scale,
            "clean_coeffs": transform.analyze_array(clean_norm),
            "degraded_coeffs": transform.analyze_array(degraded / scale),
            "original_length": len(clean),
            "scale": scale,
        })
    return prepared


def example_loss_and_grads(denoiser, transform, schedule, item, t, z, cfg):
    """Objective value and parameter gradients for one perturbed example."""
    w_x, w_y = schedule.weights(t)
    std = np.sqrt(schedule.marginal_variance(t))
    x = item["clean_coeffs"]
    y = item["degraded_coeffs"]
    x_t = w_x * x + w_y * y + std * z
    estimate, cache = denoiser.forward_cached(x_t, y, t)
    data_term = data_mse(estimate, x)
    grad_estimate = data_mse_grad(estimate, x)
    aux_term = 0.0
    if cfg.lambda_aux > 0 and cfg.aux_kind is not None:
        estimate_time = transform.synthesize_array(estimate, item["original_length"])
        aux_term, grad_time = aux_loss_and_grad(
            cfg.aux_kind, estimate_time, item["clean_time"], cfg.snr_max_db)
        grad_estimate = grad_estimate + cfg.lambda_aux * transform.synthesize_vjp(
            estimate, grad_time)
    grads = denoiser.backward(cache, grad_estimate)
    return data_term, aux_term, grads


@dataclass
class TrainResult:
    denoiser: TinyDenoiser
    ema_denoiser: TinyDenoiser
    history: list
    best_epoch: int
    config: TrainConfig
    training_state: dict = field(repr=False, default_factory=dict)


def _val_metric(prepared_val, val_draws, denoiser, ema, transform, schedule, cfg):
    """Selection metric on the validation set; lower is better."""
    ema_denoiser = denoiser.spawn(ema.shadow)
    if cfg.select_by == "si_sdr":
        scores = []
        for i, item in enumerate(prepared_val):
            estimate = enhance_signal(
                item["degraded_time"], ema_denoiser, transform, schedule,
                sampler="sde", n_steps=cfg.val_sampler_steps,
                rng=derive_rng(cfg.seed, 1, i))
            scores.append(si_sdr(item["clean_time"], estimate))
        return -float(np.mean(scores))
    losses = []
    for item, (t, z) in zip(prepared_val, val_draws):
        data_term, aux_term, _ = example_loss_and_grads(
            ema_denoiser, transform, schedule, item, t, z, cfg)
        losses.append(data_term + cfg.lambda_aux * aux_term)
    return float(np.mean(losses))


def train(pairs, schedule, transform, cfg, val_pairs=None, resume_state=None):
    """Optimize a TinyDenoiser on clean/degraded pairs.

    Parameters
    ----------
    pairs : sequence
        PairedExample-likes or (clean, degraded) waveform tuples.
    schedule : NoiseSchedule
        Drives the forward perturbation; bridge schedules expected.
    transform : CompressedSTFT
        Analysis transform shared by training and inference.
    cfg : TrainConfig
    val_pairs : sequence, optional
        Held-out pairs; enables early stopping with ``cfg.patience`` and
        best-epoch selection by ``cfg.select_by``.
    resume_state : dict, optional
        ``training_state`` of a previous run (weights, optimizer moments,
        generator state); continues the run exactly where it stopped.

    Returns
    -------
    TrainResult with the selected raw and averaged denoisers, the per-epoch
    history, and the final ``training_state`` for exact resumption.
    """
    if len(pairs) == 0:
        raise ValueError("training requires a non-empty dataset")
    prepared = _prepare(pairs, transform)
    prepared_val = _prepare(val_pairs, transform) if val_pairs else []

    denoiser = TinyDenoiser(cfg.hidden_sizes, cfg.time_freqs, seed=cfg.seed)
    optimizer = Adam(denoiser.weights, lr=cfg.lr)
    ema = WeightAverage(denoiser.weights, cfg.ema_decay)
    rng = derive_rng(cfg.seed, 0)
    start_epoch = 0
    if resume_state:
        denoiser.set_weights(resume_state["weights"])
        ema.shadow = {k: v.copy() for k, v in resume_state["ema"].items()}
        optimizer.m = {k: v.copy() for k, v in resume_state["adam_m"].items()}
        optimizer.v = {k: v.copy() for k, v in resume_state["adam_v"].items()}
        optimizer.t = resume_state["adam_t"]
        rng.bit_generator.state = resume_state["rng_state"]
        start_epoch = resume_state["epochs_done"]

    # fixed validation draws keep the early-stopping metric deterministic
    val_rng = derive_rng(cfg.seed, 2)
    val_draws = [(val_rng.uniform(schedule.t_min, schedule.T),
                  complex_normal(val_rng, item["clean_coeffs"].shape))
                 for item in prepared_val]

    history = []
    best_metric = np.inf
    best_epoch = -1
    best_weights = None
    best_ema = None
    bad_epochs = 0
    step = optimizer.t

    for epoch in range(start_epoch, cfg.max_epochs):
        order = rng.permutation(len(prepared))
        epoch_loss, epoch_data, epoch_aux, n_batches = 0.0, 0.0, 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            batch_grads = None
            batch_loss, batch_data, batch_aux = 0.0, 0.0, 0.0
            for idx in batch:
                item = prepared[idx]
                t = rng.uniform(schedule.t_min, schedule.T)
                z = complex_normal(rng, item["clean_coeffs"].shape)
                data_term, aux_term, grads = example_loss_and_grads(
                    denoiser, transform, schedule, item, t, z, cfg)
                batch_data += data_term
                batch_aux += aux_term
                batch_loss += data_term + cfg.lambda_aux * aux_term
                if batch_grads is None:
                    batch_grads = grads
                else:
                    for key in batch_grads:
                        batch_grads[key] += grads[key]
            scale = 1.0 / len(batch)
            step += 1
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(step)
            for key in batch_grads:
                batch_grads[key] *= scale
            optimizer.step(denoiser.weights, batch_grads)
            ema.update(denoiser.weights)
            epoch_loss += batch_loss * scale
            epoch_data += batch_data * scale
            epoch_aux += batch_aux * scale
            n_batches += 1

        row = {
            "epoch": epoch,
            "train_loss": epoch_loss / n_batches,
            "data_term": epoch_data / n_batches,
            "aux_term": epoch_aux / n_batches,
        }
        if prepared_val:
            metric = _val_metric(prepared_val, val_draws, denoiser, ema,
                                 transform, schedule, cfg)
            row["val_metric"] = metric
            if metric < best_metric - 1e-12:
                best_metric = metric
                best_epoch = epoch
                best_weights = denoiser.get_weights()
                best_ema = {k: v.copy() for k, v in ema.shadow.items()}
                bad_epochs = 0
            else:
                bad_epochs += 1
        history.append(row)
        if prepared_val and bad_epochs > cfg.patience:
            break

    training_state = {
        "weights": denoiser.get_weights(),
        "ema": {k: v.copy() for k, v in ema.shadow.items()},
        "adam_m": {k: v.copy() for k, v in optimizer.m.items()},
        "adam_v": {k: v.copy() for k, v in optimizer.v.items()},
        "adam_t": optimizer.t,
        "rng_state": rng.bit_generator.state,
        "epochs_done": history[-1]["epoch"] + 1 if history else start_epoch,
    }
    if best_weights is not None:
        selected = denoiser.spawn(best_weights)
        selected_ema = denoiser.spawn(best_ema)
    else:
        best_epoch = history[-1]["epoch"] if history else -1
        selected = denoiser
        selected_ema = denoiser.spawn(ema.shadow)
    return TrainResult(selected, selected_ema, history, best_epoch, cfg, training_state)


# -- checkpoint I/O ----------------------------------------------------------


def save_checkpoint(path, result, transform, schedule):
    """Serialize a training result to a single ``.npz`` container.

    Holds the selected raw and averaged weight sets in 64-bit floats, the
    architecture and config metadata, and the optimizer/generator state
    needed to resume the run exactly.
    """
    denoiser = result.denoiser
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "architecture": {
            "hidden_sizes": list(denoiser.hidden_sizes),
            "time_freqs": denoiser.time_freqs,
            "layer_shapes": {k: list(v.shape) for k, v in denoiser.weights.items()},
        },
        "train_config": {**asdict(result.config),
                         "hidden_sizes": list(result.config.hidden_sizes)},
        "transform_params": transform.get_params(),
        "schedule": schedule.to_dict(),
        "best_epoch": result.best_epoch,
        "adam_t": result.training_state.get("adam_t", 0),
        "epochs_done": result.training_state.get("epochs_done", 0),
        "rng_state": result.training_state.get("rng_state"),
    }
    arrays = {}
    for key, value in result.denoiser.weights.items():
        arrays[f"raw.{key}"] = value
    for key, value in result.ema_denoiser.weights.items():
        arrays[f"ema.{key}"] = value
    state = result.training_state
    for section in ("weights", "ema", "adam_m", "adam_v"):
        for key, value in state.get(section, {}).items():
            arrays[f"state_{section}.{key}"] = value
    np.savez(path, meta=json.dumps(meta), **arrays)


@dataclass
class Checkpoint:
    denoiser: TinyDenoiser
    ema_denoiser: TinyDenoiser
    train_config: TrainConfig
    transform: CompressedSTFT
    schedule: object
    best_epoch: int
    training_state: dict


def load_checkpoint(path):
    """Load and validate a checkpoint written by `save_checkpoint`."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint format {meta.get('format_version')!r}")
        arch = meta["architecture"]
        expected = {k: tuple(v) for k, v in arch["layer_shapes"].items()}
        sections = {}
        for name in data.files:
            if name == "meta":
                continue
            section, _, key = name.partition(".")
            if key in expected and data[name].shape != expected[key]:
                raise ValueError(
                    f"checkpoint array {name} has shape {data[name].shape}, "
                    f"metadata says {expected[key]}")
            sections.setdefault(section, {})[key] = data[name]
    cfg_dict = meta["train_config"]
    cfg = TrainConfig(**cfg_dict)
    denoiser = TinyDenoiser(arch["hidden_sizes"], arch["time_freqs"])
    missing = set(denoiser.weights) - set(sections.get("raw", {}))
    if missing:
        raise ValueError(f"checkpoint is missing weight arrays: {sorted(missing)}")
    denoiser.set_weights(sections["raw"])
    ema_denoiser = denoiser.spawn(sections["ema"])
    transform = CompressedSTFT(**meta["transform_params"])
    schedule = make_schedule(**meta["schedule"])
    training_state = {}
    if "state_weights" in sections:
        training_state = {
            "weights": sections["state_weights"],
            "ema": sections["state_ema"],
            "adam_m": sections["state_adam_m"],
            "adam_v": sections["state_adam_v"],
            "adam_t": meta["adam_t"],
            "epochs_done": meta["epochs_done"],
            "rng_state": _rng_state_from_json(meta["rng_state"]),
        }
    return Checkpoint(denoiser, ema_denoiser, cfg, transform, schedule,
                      meta["best_epoch"], training_state)


def _rng_state_from_json(state):
    # json round-trips the PCG64 state dict unchanged (python ints are exact)
    return state
