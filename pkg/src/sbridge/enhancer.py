"""sklearn-style estimator wrapping training and reverse-process inference."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .enhance import enhance_signal
from .metrics import si_sdr
from .schedules import make_schedule
from .seeding import derive_rng
from .training import TrainConfig, train
from .transforms import CompressedSTFT, TimeSignal


class BridgeEnhancer(BaseEstimator):
    """Signal enhancer with the usual fit/predict surface.

    ``fit(X, y)`` trains the small denoiser on degraded inputs ``X`` paired
    with clean targets ``y`` (sequences of 1-D waveforms or TimeSignals);
    ``predict(X)`` runs the reverse sampler on new degraded signals.  All
    hyperparameters live in ``__init__`` so the estimator clones and grid
    searches like any other.

    Parameters mirror the underlying modules: the noise schedule and sampler
    (``schedule``, ``schedule_params``, ``sampler``, ``n_steps``), the
    training objective (``lambda_aux``, ``aux_kind``, ``lr`` ...), and the
    analysis transform (``win_size`` ...).  ``use_ema`` selects the averaged
    weights for inference.
    """

    def __init__(self, schedule="sbve", schedule_params=None, sampler="sde",
                 n_steps=50, lambda_aux=1e-3, aux_kind="l1", lr=1e-4,
                 batch_size=8, ema_decay=0.999, max_epochs=50, patience=10,
                 hidden_sizes=(64, 64), time_freqs=4, val_fraction=0.0,
                 win_size=510, hop_size=128, compression=0.5, scale=0.33,
                 sample_rate=16000, use_ema=True, seed=0):
        self.schedule = schedule
        self.schedule_params = schedule_params
        self.sampler = sampler
        self.n_steps = n_steps
        self.lambda_aux = lambda_aux
        self.aux_kind = aux_kind
        self.lr = lr
        self.batch_size = batch_size
        self.ema_decay = ema_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.hidden_sizes = hidden_sizes
        self.time_freqs = time_freqs
        self.val_fraction = val_fraction
        self.win_size = win_size
        self.hop_size = hop_size
        self.compression = compression
        self.scale = scale
        self.sample_rate = sample_rate
        self.use_ema = use_ema
        self.seed = seed

    @staticmethod
    def _signals(X):
        return [x.samples if isinstance(x, TimeSignal) else np.asarray(x, dtype=np.float64)
                for x in X]

    def _train_config(self):
        return TrainConfig(
            lambda_aux=self.lambda_aux, aux_kind=self.aux_kind, lr=self.lr,
            batch_size=self.batch_size, ema_decay=self.ema_decay,
            max_epochs=self.max_epochs, patience=self.patience, seed=self.seed,
            hidden_sizes=tuple(self.hidden_sizes), time_freqs=self.time_freqs)

    def fit(self, X, y):
        """Train on degraded signals ``X`` and clean targets ``y``."""
        degraded = self._signals(X)
        clean = self._signals(y)
        if len(degraded) != len(clean):
            raise ValueError(f"got {len(degraded)} degraded and {len(clean)} clean signals")
        if not degraded:
            raise ValueError("fit requires at least one signal pair")
        self.transform_ = CompressedSTFT(
            win_size=self.win_size, hop_size=self.hop_size,
            compression=self.compression, scale=self.scale,
            sample_rate=self.sample_rate).fit()
        self.schedule_ = make_schedule(self.schedule, **(self.schedule_params or {}))
        pairs = list(zip(clean, degraded))
        val_pairs = None
        if self.val_fraction > 0 and len(pairs) > 1:
            n_val = max(1, int(round(self.val_fraction * len(pairs))))
            order = derive_rng(self.seed, 99).permutation(len(pairs))
            val_pairs = [pairs[i] for i in order[:n_val]]
            pairs = [pairs[i] for i in order[n_val:]]
        result = train(pairs, self.schedule_, self.transform_,
                       self._train_config(), val_pairs=val_pairs)
        self.denoiser_ = result.denoiser
        self.ema_denoiser_ = result.ema_denoiser
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def _inference_denoiser(self):
        return self.ema_denoiser_ if self.use_ema else self.denoiser_

    def predict(self, X):
        """Enhanced waveforms for degraded inputs, one per entry of ``X``."""
        check_is_fitted(self, "denoiser_")
        denoiser = self._inference_denoiser()
        return [enhance_signal(s, denoiser, self.transform_, self.schedule_,
                               sampler=self.sampler, n_steps=self.n_steps,
                               rng=derive_rng(self.seed, 10, i))
                for i, s in enumerate(self._signals(X))]

    def score(self, X, y):
        """Mean SI-SDR (dB) of ``predict(X)`` against the clean references."""
        estimates = self.predict(X)
        references = self._signals(y)
        return float(np.mean([si_sdr(ref, est)
                              for ref, est in zip(references, estimates)]))
