"""End-to-end enhancement of a single waveform.

Ties the pieces together: peak-normalize by the input's maximum amplitude,
analyze, run the reverse sampler, resynthesize, undo the normalization.  The
same path serves the estimator facade, the CLI and validation-time scoring.
"""

import numpy as np

from .bridge import run_reverse
from .transforms import TimeSignal
from .validation import as_float_array


def enhance_signal(samples, denoiser, transform, schedule, sampler="sde",
                   n_steps=50, rng=None, hook=None):
    """Enhance one waveform; returns the estimate at the input length.

    ``samples`` may be a raw array or a TimeSignal.  Normalization uses the
    input's max amplitude, matching how training normalizes its inputs.
    """
    if isinstance(samples, TimeSignal):
        samples = samples.samples
    samples = as_float_array(samples, "input signal")
    scale = float(np.max(np.abs(samples)))
    if scale == 0.0:
        scale = 1.0
    normalized = samples / scale
    degraded = transform.analyze_array(normalized)
    clean_coeffs = run_reverse(degraded, denoiser, schedule,
                               kind=sampler, n_steps=n_steps, rng=rng, hook=hook)
    estimate = transform.synthesize_array(clean_coeffs, len(samples))
    return estimate * scale
