"""Training objectives and their gradients.

The main objective regresses the denoiser output onto the clean coefficients
(mean squared error over complex components) and optionally adds a
time-domain auxiliary term on the resynthesized waveform, weighted by
``lambda_aux``.  The score-matching objective drives the diffusion-baseline
pathway.

Complex gradients follow the ``dL/dRe + 1j * dL/dIm`` convention used across
the package.
"""

import numpy as np

from .validation import check_same_shape

AUX_KINDS = (None, "l1", "soft_sisdr")


def data_mse(x_hat, x):
    """Mean squared error over complex components: ``sum|x_hat - x|^2 / D``."""
    check_same_shape(x_hat, x, "x_hat", "x")
    diff = np.asarray(x_hat) - np.asarray(x)
    return float(np.sum(diff.real ** 2 + diff.imag ** 2) / diff.size)


def data_mse_grad(x_hat, x):
    check_same_shape(x_hat, x, "x_hat", "x")
    diff = np.asarray(x_hat) - np.asarray(x)
    return 2.0 / diff.size * diff


def l1_loss(estimate, reference):
    """Mean absolute deviation between time-domain signals."""
    check_same_shape(estimate, reference, "estimate", "reference")
    return float(np.mean(np.abs(np.asarray(estimate) - np.asarray(reference))))


def l1_loss_grad(estimate, reference):
    check_same_shape(estimate, reference, "estimate", "reference")
    diff = np.asarray(estimate) - np.asarray(reference)
    return np.sign(diff) / diff.size


def soft_sisdr_loss(estimate, reference, snr_max_db=30.0):
    """Negative soft-thresholded signal ratio in dB.

    ``-10 log10(||ref||^2 / (||ref - est||^2 + tau ||ref||^2))`` with
    ``tau = 10**(-snr_max_db / 10)``; the threshold caps the reward at
    ``snr_max_db`` so a perfect estimate scores exactly ``-snr_max_db``.
    """
    check_same_shape(estimate, reference, "estimate", "reference")
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    ref_energy = float(np.sum(reference ** 2))
    if ref_energy == 0.0:
        raise ValueError("soft SI-SDR is undefined for a zero reference signal")
    tau = 10.0 ** (-snr_max_db / 10.0)
    residual = float(np.sum((reference - estimate) ** 2))
    return float(-10.0 * np.log10(ref_energy / (residual + tau * ref_energy)))


def soft_sisdr_grad(estimate, reference, snr_max_db=30.0):
    check_same_shape(estimate, reference, "estimate", "reference")
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    ref_energy = float(np.sum(reference ** 2))
    if ref_energy == 0.0:
        raise ValueError("soft SI-SDR is undefined for a zero reference signal")
    tau = 10.0 ** (-snr_max_db / 10.0)
    err = estimate - reference
    denom = float(np.sum(err ** 2)) + tau * ref_energy
    return (20.0 / np.log(10.0)) * err / denom


def aux_loss_and_grad(kind, estimate, reference, snr_max_db=30.0):
    """Dispatch on the auxiliary-loss kind; returns ``(value, grad)``."""
    if kind is None:
        return 0.0, np.zeros_like(np.asarray(estimate, dtype=np.float64))
    if kind == "l1":
        return l1_loss(estimate, reference), l1_loss_grad(estimate, reference)
    if kind == "soft_sisdr":
        return (soft_sisdr_loss(estimate, reference, snr_max_db),
                soft_sisdr_grad(estimate, reference, snr_max_db))
    raise ValueError(f"unknown auxiliary loss {kind!r}; choose from {AUX_KINDS}")


def data_prediction_loss(x_hat, x, x_hat_time, x_time, lambda_aux=1e-3,
                         aux_kind="l1", snr_max_db=30.0):
    """Total training objective: coefficient MSE plus weighted time-domain aux.

    ``lambda_aux = 0`` recovers the pure data-prediction loss; the time
    signals are then ignored.
    """
    if lambda_aux < 0:
        raise ValueError(f"lambda_aux must be non-negative, got {lambda_aux}")
    total = data_mse(x_hat, x)
    if lambda_aux > 0 and aux_kind is not None:
        aux, _ = aux_loss_and_grad(aux_kind, x_hat_time, x_time, snr_max_db)
        total += lambda_aux * aux
    return total


def score_matching_loss(score_out, sigma_x, z):
    """Scaled-score regression loss ``sum|sigma_x * s + z|^2 / D``.

    The analytic minimizer is the true transition score ``s = -z / sigma_x``;
    the network learns the score itself, with the ``-z`` target absorbed by
    the sign here.
    """
    check_same_shape(score_out, z, "score_out", "z")
    sigma_x = float(sigma_x)
    if sigma_x <= 0.0:
        raise ValueError(f"sigma_x must be positive, got {sigma_x}")
    resid = sigma_x * np.asarray(score_out) + np.asarray(z)
    return float(np.sum(resid.real ** 2 + resid.imag ** 2) / resid.size)


def score_matching_grad(score_out, sigma_x, z):
    check_same_shape(score_out, z, "score_out", "z")
    sigma_x = float(sigma_x)
    if sigma_x <= 0.0:
        raise ValueError(f"sigma_x must be positive, got {sigma_x}")
    resid = sigma_x * np.asarray(score_out) + np.asarray(z)
    return 2.0 * sigma_x / resid.size * resid
