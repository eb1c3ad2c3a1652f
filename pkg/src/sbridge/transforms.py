"""Analysis transform for the bridge state space and its exact inverse.

The forward transform maps a waveform to complex time-frequency coefficients:
STFT with a periodic Hann window, followed by element-wise magnitude
compression ``mag -> scale * mag**compression`` with the phase kept.  The
inverse undoes the compression and resynthesizes with weighted overlap-add,
normalizing by the accumulated squared window so the round trip is exact up
to float rounding.

Conventions baked in here:

* the signal is zero-padded by ``win_size // 2`` on both sides before
  framing, the original length is recorded, and synthesis trims back to it;
* tail frames that run past the padded signal are zero-padded;
* a zero magnitude maps to a zero coefficient in both directions.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .validation import as_complex_array, as_float_array


@dataclass
class TimeSignal:
    """A real sampled waveform at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = as_float_array(self.samples, "samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class ComplexSpectrogram:
    """Complex coefficient grid (bins x frames) with inversion provenance.

    ``transform_params`` records the parameters of the transformer that
    produced the grid; ``inverse_transform`` refuses grids produced under
    different settings.
    """

    coefficients: np.ndarray
    original_length: int
    transform_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = as_complex_array(self.coefficients)
        if self.coefficients.ndim != 2:
            raise ValueError(
                f"coefficients must be 2-D (bins x frames), got {self.coefficients.shape}"
            )

    @property
    def n_bins(self):
        return self.coefficients.shape[0]

    @property
    def n_frames(self):
        return self.coefficients.shape[1]


class CompressedSTFT(BaseEstimator):
    """STFT analysis/synthesis with magnitude compression, sklearn-style.

    Stateless transformer: ``fit`` is a no-op and exists so the class plugs
    into sklearn pipelines; parameters follow the usual get_params/set_params
    contract.

    Parameters
    ----------
    win_size : int
        Window length in samples. The coefficient grid has
        ``win_size // 2 + 1`` frequency bins.
    hop_size : int
        Frame advance in samples; must be smaller than ``win_size``.
    compression : float
        Magnitude compression exponent in (0, 1]. ``1.0`` disables
        compression.
    scale : float
        Multiplicative scale applied to compressed magnitudes.
    sample_rate : int
        Expected sample rate of input signals.
    """

    def __init__(self, win_size=510, hop_size=128, compression=0.5, scale=0.33,
                 sample_rate=16000):
        self.win_size = win_size
        self.hop_size = hop_size
        self.compression = compression
        self.scale = scale
        self.sample_rate = sample_rate

    # -- sklearn plumbing ------------------------------------------------

    def fit(self, X=None, y=None):
        self._check_params()
        return self

    @property
    def n_bins(self):
        return self.win_size // 2 + 1

    def _check_params(self):
        if not 0 < self.compression <= 1:
            raise ValueError(f"compression must be in (0, 1], got {self.compression}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not 0 < self.hop_size < self.win_size:
            raise ValueError(
                f"hop_size must satisfy 0 < hop < win, got hop={self.hop_size} win={self.win_size}"
            )
        if self.win_size % 2 != 0:
            raise ValueError(f"win_size must be even, got {self.win_size}")

    def _window(self):
        # Periodic Hann; w[0] = 0, strictly positive elsewhere.
        n = np.arange(self.win_size)
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / self.win_size))

    # -- public API -------------------------------------------------------

    def transform(self, signal):
        """Analyze a waveform into a compressed complex spectrogram."""
        self._check_params()
        if isinstance(signal, TimeSignal):
            if signal.sample_rate != self.sample_rate:
                raise ValueError(
                    f"signal sample rate {signal.sample_rate} != transform rate {self.sample_rate}"
                )
            samples = signal.samples
        else:
            samples = as_float_array(signal, "signal")
        coeffs = self.compress(self._stft(samples))
        return ComplexSpectrogram(coeffs, len(samples), self.get_params())

    def inverse_transform(self, spec):
        """Invert ``transform``, trimming to the recorded original length."""
        self._check_params()
        if spec.transform_params and spec.transform_params != self.get_params():
            ours = self.get_params()
            bad = sorted(k for k, v in spec.transform_params.items() if ours.get(k) != v)
            raise ValueError(f"spectrogram was produced with different settings: {bad}")
        samples = self.synthesize_array(spec.coefficients, spec.original_length)
        return TimeSignal(samples, self.sample_rate)

    def compress(self, coeffs):
        """Apply ``scale * mag**compression`` keeping phase; 0 maps to 0."""
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        mag = np.abs(coeffs)
        safe = np.where(mag > 0.0, mag, 1.0)
        return self.scale * safe ** (self.compression - 1.0) * coeffs

    def decompress(self, coeffs):
        """Exact inverse of ``compress`` on magnitudes; phase unchanged."""
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        rho = 1.0 / self.compression
        mag = np.abs(coeffs)
        safe = np.where(mag > 0.0, mag, 1.0)
        return self.scale ** (-rho) * safe ** (rho - 1.0) * coeffs

    # -- array-level core (no dataclass wrapping) -------------------------

    def analyze_array(self, samples):
        """Compressed coefficients for a raw sample array."""
        return self.compress(self._stft(as_float_array(samples, "signal")))

    def synthesize_array(self, coeffs, original_length):
        """Waveform for a compressed coefficient grid."""
        coeffs = as_complex_array(coeffs)
        return self._istft(self.decompress(coeffs), original_length)

    def synthesize_vjp(self, coeffs, grad_time):
        """Vector-Jacobian product of ``synthesize_array`` at ``coeffs``.

        ``grad_time`` is the gradient of a scalar loss with respect to the
        synthesized waveform; the result is the gradient with respect to the
        compressed coefficients, encoded as ``dL/dRe + 1j * dL/dIm``.
        """
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        grad_dec = self._istft_vjp(coeffs.shape[1], len(grad_time), np.asarray(grad_time))
        return self._decompress_vjp(coeffs, grad_dec)

    # -- internals ---------------------------------------------------------

    def _frame_geometry(self, original_length):
        pad = self.win_size // 2
        padded = original_length + 2 * pad
        n_frames = 1 + int(np.ceil((padded - self.win_size) / self.hop_size))
        cover = (n_frames - 1) * self.hop_size + self.win_size
        return pad, n_frames, cover

    def _frame_indices(self, n_frames):
        return (np.arange(n_frames)[:, None] * self.hop_size
                + np.arange(self.win_size)[None, :])

    def _stft(self, samples):
        pad, n_frames, cover = self._frame_geometry(len(samples))
        buf = np.zeros(cover)
        buf[pad:pad + len(samples)] = samples
        frames = buf[self._frame_indices(n_frames)] * self._window()
        return np.fft.rfft(frames, axis=1).T

    def _ola_envelope(self, n_frames, cover):
        # Accumulated squared window; the denominator of weighted overlap-add.
        den = np.zeros(cover)
        w2 = self._window() ** 2
        np.add.at(den, self._frame_indices(n_frames), np.broadcast_to(w2, (n_frames, self.win_size)))
        return den

    def _istft(self, coeffs, original_length):
        n_bins, n_frames = coeffs.shape
        if n_bins != self.n_bins:
            raise ValueError(f"expected {self.n_bins} frequency bins, got {n_bins}")
        pad, expected_frames, cover = self._frame_geometry(original_length)
        if n_frames != expected_frames:
            raise ValueError(
                f"grid has {n_frames} frames but original_length {original_length} needs {expected_frames}"
            )
        frames = np.fft.irfft(coeffs.T, n=self.win_size, axis=1) * self._window()
        num = np.zeros(cover)
        np.add.at(num, self._frame_indices(n_frames), frames)
        den = self._ola_envelope(n_frames, cover)
        region = slice(pad, pad + original_length)
        if np.any(den[region] < 1e-10):
            raise ValueError("overlap-add window sum vanishes; win/hop pair is ill-posed")
        return num[region] / den[region]

    def _istft_vjp(self, n_frames, original_length, grad_time):
        pad, expected_frames, cover = self._frame_geometry(original_length)
        if n_frames != expected_frames:
            raise ValueError("frame count inconsistent with original_length")
        den = self._ola_envelope(n_frames, cover)
        g = np.zeros(cover)
        region = slice(pad, pad + original_length)
        g[region] = grad_time / den[region]
        g_frames = g[self._frame_indices(n_frames)] * self._window()
        # Adjoint of irfft as a real-linear map: rfft scaled by 2/n, with the
        # DC and Nyquist bins halved and their imaginary gradients dropped
        # (irfft ignores those components).
        grad = np.fft.rfft(g_frames, axis=1) * (2.0 / self.win_size)
        grad[:, 0] = grad[:, 0].real * 0.5
        grad[:, -1] = grad[:, -1].real * 0.5
        return grad.T

    def _decompress_vjp(self, coeffs, grad_out):
        rho = 1.0 / self.compression
        s = self.scale ** (-rho)
        mag = np.abs(coeffs)
        safe = np.where(mag > 0.0, mag, 1.0)
        radial = np.real(np.conj(coeffs) * grad_out)
        grad = s * (safe ** (rho - 1.0) * grad_out
                    + (rho - 1.0) * safe ** (rho - 3.0) * radial * coeffs)
        return np.where(mag > 0.0, grad, 0.0 if rho > 1.0 else s * grad_out)
