"""Bridge-process generative signal enhancement.

A data-to-data stochastic process connects clean and degraded complex
time-frequency coefficients; reverse sampling from the degraded endpoint,
guided by a trained denoiser, produces the enhanced signal.  The package
provides the closed-form noise schedules, forward-marginal sampling, SDE and
ODE reverse samplers, the compressed-STFT transform with an exact inverse,
training objectives with time-domain auxiliary terms, synthetic paired-data
generation, and desk-scale metrics, all tied together by the
``BridgeEnhancer`` estimator and the ``sbridge`` CLI.
"""

__version__ = "0.1.0"

from .bridge import (DivergenceError, complex_normal, gaussian_score, ode_step,
                     ouve_em_step, ouve_score_target, run_reverse,
                     sample_marginal, sde_step, time_grid)
from .datasets import (DatasetSpec, PairedExample, apply_reverb, gen_clean,
                       gen_noise, gen_rir, generate_dataset, load_dataset,
                       make_example, mix_noise, read_wav, write_wav)
from .denoisers import ConstantDenoiser, OracleDenoiser, TinyDenoiser
from .enhance import enhance_signal
from .enhancer import BridgeEnhancer
from .losses import (data_mse, data_prediction_loss, l1_loss,
                     score_matching_loss, soft_sisdr_loss)
from .metrics import MetricReport, si_sdr, snr, spectral_log_mse
from .schedules import (OUVESchedule, VESchedule, VPSchedule, make_schedule)
from .training import (Checkpoint, TrainConfig, TrainResult,
                       TrainingDivergedError, load_checkpoint,
                       save_checkpoint, train)
from .transforms import ComplexSpectrogram, CompressedSTFT, TimeSignal

__all__ = [name for name in dir() if not name.startswith("_")]
