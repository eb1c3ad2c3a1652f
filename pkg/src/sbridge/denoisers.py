"""Denoisers: test instruments and the small trainable network.

A denoiser is any callable ``(state, y, t) -> estimate`` mapping the current
process state and the degraded coefficients to an estimate of the clean
coefficients, with matching shapes.  Calls must be reentrant: nothing here
mutates shared state after construction.
"""

import numpy as np

from .validation import as_complex_array


class OracleDenoiser:
    """Returns the bound clean coefficients regardless of input.

    Turns sampler-correctness tests into exact checks: both bridge samplers
    must reproduce the clean coefficients exactly under this denoiser.
    """

    def __init__(self, clean):
        self.clean = as_complex_array(clean, "clean")

    def __call__(self, state, y, t):
        if np.shape(state) != self.clean.shape:
            raise ValueError(
                f"state shape {np.shape(state)} does not match bound clean shape {self.clean.shape}"
            )
        return self.clean


class ConstantDenoiser:
    """Returns a fixed grid; `ConstantDenoiser(y)` is the identity stub."""

    def __init__(self, constant):
        self.constant = as_complex_array(constant, "constant")

    def __call__(self, state, y, t):
        if np.shape(state) != self.constant.shape:
            raise ValueError(
                f"state shape {np.shape(state)} does not match constant shape {self.constant.shape}"
            )
        return self.constant


def _patch_features(grid):
    """3x3 neighborhood features of a complex grid: (F*T, 18) real matrix."""
    f, n = grid.shape
    mode = "reflect" if min(f, n) > 1 else "edge"
    padded = np.pad(grid, 1, mode=mode)
    shifts = [padded[1 + di:1 + di + f, 1 + dj:1 + dj + n].ravel()
              for di in (-1, 0, 1) for dj in (-1, 0, 1)]
    block = np.stack(shifts, axis=1)
    return np.concatenate([block.real, block.imag], axis=1)


def time_embedding(t, n_freqs):
    """Sinusoidal embedding of a process time in [0, T]."""
    freqs = 2.0 ** np.arange(n_freqs)
    angles = 2.0 * np.pi * freqs * t
    return np.concatenate([np.sin(angles), np.cos(angles)])


class TinyDenoiser:
    """Feed-forward denoiser applied independently at every TF position.

    Each position sees the 3x3 patches of the state and of the degraded
    coefficients (real/imaginary stacked, 36 features) plus a sinusoidal
    embedding of the process time, and emits the real/imaginary parts of the
    clean estimate.  tanh hidden layers keep the forward pass smooth, which
    the finite-difference gradient checks rely on.

    Weights are float64 numpy arrays; `forward_cached`/`backward` implement
    the exact gradient used by training.
    """

    def __init__(self, hidden_sizes=(64, 64), time_freqs=4, seed=0):
        self.hidden_sizes = tuple(int(h) for h in hidden_sizes)
        self.time_freqs = int(time_freqs)
        self.in_dim = 36 + 2 * self.time_freqs
        rng = np.random.default_rng(seed)
        sizes = (self.in_dim, *self.hidden_sizes, 2)
        self.weights = {}
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights[f"w{i}"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.weights[f"b{i}"] = np.zeros(fan_out)
        self.n_layers = len(sizes) - 1

    # -- parameter plumbing -------------------------------------------------

    def parameter_count(self):
        return sum(v.size for v in self.weights.values())

    def get_weights(self):
        return {k: v.copy() for k, v in self.weights.items()}

    def set_weights(self, weights):
        for key, value in weights.items():
            if key not in self.weights:
                raise ValueError(f"unknown weight {key!r}")
            if value.shape != self.weights[key].shape:
                raise ValueError(
                    f"weight {key!r} has shape {value.shape}, expected {self.weights[key].shape}"
                )
            self.weights[key] = np.asarray(value, dtype=np.float64).copy()

    def spawn(self, weights=None):
        """A fresh instance with the same architecture (and given weights)."""
        clone = TinyDenoiser(self.hidden_sizes, self.time_freqs)
        clone.set_weights(self.weights if weights is None else weights)
        return clone

    # -- forward / backward ---------------------------------------------------

    def _features(self, x_t, y, t):
        x_t = as_complex_array(x_t, "x_t")
        y = as_complex_array(y, "y")
        if x_t.shape != y.shape:
            raise ValueError(f"shape mismatch: state {x_t.shape} vs degraded {y.shape}")
        if x_t.ndim != 2:
            raise ValueError(f"expected a 2-D coefficient grid, got shape {x_t.shape}")
        emb = time_embedding(float(t), self.time_freqs)
        feats = np.concatenate(
            [_patch_features(x_t), _patch_features(y),
             np.broadcast_to(emb, (x_t.size, emb.size))],
            axis=1,
        )
        return feats

    def forward_cached(self, x_t, y, t):
        """Estimate plus the activation cache consumed by `backward`."""
        feats = self._features(x_t, y, t)
        activations = [feats]
        h = feats
        for i in range(self.n_layers - 1):
            h = np.tanh(h @ self.weights[f"w{i}"] + self.weights[f"b{i}"])
            activations.append(h)
        last = self.n_layers - 1
        out = h @ self.weights[f"w{last}"] + self.weights[f"b{last}"]
        estimate = (out[:, 0] + 1j * out[:, 1]).reshape(x_t.shape)
        return estimate, activations

    def __call__(self, x_t, y, t):
        estimate, _ = self.forward_cached(x_t, y, t)
        return estimate

    def backward(self, activations, grad_estimate):
        """Parameter gradients for a complex-valued estimate gradient.

        ``grad_estimate`` follows the ``dL/dRe + 1j * dL/dIm`` convention.
        """
        g = np.stack([grad_estimate.real.ravel(), grad_estimate.imag.ravel()], axis=1)
        grads = {}
        for i in range(self.n_layers - 1, -1, -1):
            h_in = activations[i]
            grads[f"w{i}"] = h_in.T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[f"w{i}"].T) * (1.0 - h_in ** 2)
        return grads


def pack_weights(weights):
    """Flatten a weight dict into a single vector (stable key order)."""
    keys = sorted(weights)
    return np.concatenate([weights[k].ravel() for k in keys])


def unpack_weights(vector, template):
    """Inverse of `pack_weights` for a dict shaped like ``template``."""
    keys = sorted(template)
    out, offset = {}, 0
    for k in keys:
        size = template[k].size
        out[k] = vector[offset:offset + size].reshape(template[k].shape).copy()
        offset += size
    if offset != vector.size:
        raise ValueError(f"vector has {vector.size} entries, expected {offset}")
    return out
