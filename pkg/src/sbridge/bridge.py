"""Forward marginal sampling and reverse-process samplers.

The state lives on complex coefficient grids; all functions operate on plain
``complex128`` arrays of any shape (scalars and 1-D toys included), with the
time axis handled as scalars.

Complex noise convention: ``z ~ CN(0, I)`` has i.i.d. real and imaginary
parts of variance 1/2 each, so ``E|z|^2 = 1`` per component and
``marginal_variance`` is the per-complex-component variance.

Reverse inference runs on a uniform grid of ``n_steps`` intervals from ``T``
down to ``t_min``; the bridge samplers then take one extra closed-form step
to exactly ``t = 0`` (where the update collapses onto the current estimate),
while the Euler-Maruyama baseline stops at ``t_min``.
"""

import numpy as np

from .schedules import OUVESchedule
from .seeding import as_rng
from .validation import as_complex_array, check_same_shape

__all__ = [
    "DivergenceError",
    "complex_normal",
    "sample_marginal",
    "sde_step",
    "ode_step",
    "ouve_em_step",
    "ouve_score_target",
    "gaussian_score",
    "time_grid",
    "run_reverse",
]


class DivergenceError(RuntimeError):
    """Reverse trajectory left the trust region or went non-finite."""

    def __init__(self, message, step_index=None, t=None):
        if step_index is not None:
            message = f"{message} (step {step_index}, t={t:.6g})"
        super().__init__(message)
        self.step_index = step_index
        self.t = t


def complex_normal(rng, shape):
    """Draw circularly-symmetric unit complex Gaussians, E|z|^2 = 1."""
    z = rng.standard_normal((2,) + tuple(shape))
    return np.sqrt(0.5) * (z[0] + 1j * z[1])


def _check_scalar_time(t, schedule, name="t"):
    t = float(t)
    if not 0.0 <= t <= schedule.T:
        raise ValueError(f"{name} must lie in [0, {schedule.T}], got {t}")
    return t


def marginal_state(x, y, t, schedule, z):
    """State at time t for a given unit complex noise draw ``z``."""
    x = as_complex_array(x, "x")
    y = as_complex_array(y, "y")
    check_same_shape(x, y, "x", "y")
    check_same_shape(x, z, "x", "z")
    t = _check_scalar_time(t, schedule)
    w_x, w_y = schedule.weights(t)
    std = np.sqrt(schedule.marginal_variance(t))
    return w_x * x + w_y * y + std * z


def sample_marginal(x, y, t, schedule, rng):
    """Draw the state at time t given the endpoint pair ``(x, y)``.

    Returns ``w_x(t) x + w_y(t) y + sigma_x(t) z``.  At ``t=0`` this is
    exactly ``x`` and, for bridge schedules, exactly ``y`` at ``t=T``.
    """
    x = as_complex_array(x, "x")
    return marginal_state(x, y, t, schedule,
                          complex_normal(as_rng(rng), x.shape))


def _check_step_times(t, tau, schedule):
    tau = _check_scalar_time(tau, schedule, "tau")
    t = _check_scalar_time(t, schedule)
    if not t < tau:
        raise ValueError(f"step requires t < tau, got t={t}, tau={tau}")
    return t, tau


def sde_step(x_tau, x_hat, tau, t, schedule, rng):
    """One stochastic reverse step from time ``tau`` down to ``t``.

    First-order solve of the reverse bridge SDE given the current data
    estimate ``x_hat``; at ``t=0`` the output is exactly ``x_hat``.
    """
    if not schedule.is_bridge:
        raise ValueError("sde_step requires a bridge schedule")
    x_tau = as_complex_array(x_tau, "x_tau")
    x_hat = as_complex_array(x_hat, "x_hat")
    check_same_shape(x_tau, x_hat, "x_tau", "x_hat")
    t, tau = _check_step_times(t, tau, schedule)
    s2_tau = schedule.sigma2(tau)
    if s2_tau == 0.0:
        raise ValueError("cannot step from tau with zero variance (tau=0)")
    s2_t = schedule.sigma2(t)
    alpha_t = schedule.alpha(t)
    alpha_ratio = np.exp(schedule.log_alpha(t) - schedule.log_alpha(tau))
    remaining = schedule.sigma2_gap(t, tau) / s2_tau  # = 1 - s2_t / s2_tau
    coef_state = alpha_ratio * s2_t / s2_tau
    coef_estimate = alpha_t * remaining
    noise_scale = alpha_t * np.sqrt(s2_t) * np.sqrt(remaining)
    z = complex_normal(as_rng(rng), x_tau.shape)
    return coef_state * x_tau + coef_estimate * x_hat + noise_scale * z


def ode_step(x_tau, x_hat, y, tau, t, schedule):
    """One deterministic reverse step from ``tau`` down to ``t``.

    Exact solve of the probability-flow ODE for a constant data estimate,
    hence invariant to step size.  The first step from ``tau = T`` uses the
    algebraically reduced form with the state pinned to ``y`` (the raw
    coefficients are singular through ``sigma2_bar(T) = 0`` but their
    combination is not).
    """
    if not schedule.is_bridge:
        raise ValueError("ode_step requires a bridge schedule")
    x_tau = as_complex_array(x_tau, "x_tau")
    x_hat = as_complex_array(x_hat, "x_hat")
    y = as_complex_array(y, "y")
    check_same_shape(x_tau, x_hat, "x_tau", "x_hat")
    check_same_shape(x_tau, y, "x_tau", "y")
    t, tau = _check_step_times(t, tau, schedule)
    if tau == schedule.T:
        w_x, w_y = schedule.weights(t)
        return w_x * x_hat + w_y * y
    sb2_tau = schedule.sigma2_bar(tau)
    if sb2_tau == 0.0:
        raise ValueError("sigma2_bar vanishes at interior tau; schedule is degenerate")
    s_t = np.sqrt(schedule.sigma2(t))
    s_tau = np.sqrt(schedule.sigma2(tau))
    sb_t = np.sqrt(schedule.sigma2_bar(t))
    sb_tau = np.sqrt(sb2_tau)
    total = schedule.sigma2_total
    alpha_t = schedule.alpha(t)
    alpha_ratio = np.exp(schedule.log_alpha(t) - schedule.log_alpha(tau))
    alpha_bar_t = schedule.alpha_bar(t)
    coef_state = alpha_ratio * (s_t * sb_t) / (s_tau * sb_tau)
    coef_estimate = alpha_t * (sb_t ** 2 - sb_tau * s_t * sb_t / s_tau) / total
    coef_noisy = alpha_bar_t * (s_t ** 2 - s_tau * s_t * sb_t / sb_tau) / total
    return coef_state * x_tau + coef_estimate * x_hat + coef_noisy * y


def ouve_em_step(x_tau, score, y, tau, t, schedule, rng):
    """Euler-Maruyama step of the reverse diffusion SDE from ``tau`` to ``t``.

    ``score`` is the score estimate at ``(x_tau, tau)``; the drift is the
    affine pull ``gamma * (y - x)`` minus ``g2 * score``.
    """
    if not isinstance(schedule, OUVESchedule):
        raise ValueError("ouve_em_step requires an OUVE schedule")
    x_tau = as_complex_array(x_tau, "x_tau")
    score = as_complex_array(score, "score")
    y = as_complex_array(y, "y")
    check_same_shape(x_tau, score, "x_tau", "score")
    check_same_shape(x_tau, y, "x_tau", "y")
    t, tau = _check_step_times(t, tau, schedule)
    dt = tau - t
    _, g2 = schedule.drift_diffusion(tau)
    g2 = float(g2)
    drift = schedule.gamma * (y - x_tau) - g2 * score
    z = complex_normal(as_rng(rng), x_tau.shape)
    return x_tau - dt * drift + np.sqrt(g2 * dt) * z


def ouve_score_target(x, y, t, schedule, z):
    """Perturbed state and regression target for scaled-score training.

    Returns ``(x_t, target)`` with ``x_t = mu_x(t) + sigma_x(t) z`` and
    ``target = -z``: the scaled true score ``sigma_x(t) * grad log p`` of the
    Gaussian transition equals ``-z`` at ``x_t``.
    """
    if not isinstance(schedule, OUVESchedule):
        raise ValueError("ouve_score_target requires an OUVE schedule")
    z = as_complex_array(z, "z")
    return marginal_state(x, y, t, schedule, z), -z


def gaussian_score(x_t, x, y, t, schedule):
    """Analytic score of the Gaussian transition at ``x_t``: -(x_t - mu)/var."""
    t = _check_scalar_time(t, schedule)
    var = schedule.marginal_variance(t)
    if var == 0.0:
        raise ValueError(f"score is undefined at t={t} where the variance vanishes")
    w_x, w_y = schedule.weights(t)
    return -(x_t - (w_x * x + w_y * y)) / var


def time_grid(schedule, n_steps, t_min=None, final_zero=True):
    """Reverse-time grid: ``n_steps`` uniform intervals on [t_min, T].

    With ``final_zero`` a trailing exact-zero point is appended for the
    closed-form last step of the bridge samplers.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    t_min = schedule.t_min if t_min is None else float(t_min)
    if not 0.0 < t_min < schedule.T:
        raise ValueError(f"t_min must lie in (0, T), got {t_min}")
    grid = np.linspace(schedule.T, t_min, n_steps + 1)
    if final_zero:
        grid = np.append(grid, 0.0)
    return grid


def run_reverse(y, model, schedule, kind="sde", n_steps=50, rng=None,
                t_min=None, guard_factor=1e6, hook=None):
    """Run the reverse process from the degraded coefficients ``y``.

    Parameters
    ----------
    y : complex array
        Degraded coefficients; the bridge samplers start exactly from ``y``,
        the diffusion baseline from ``y`` plus terminal-variance noise.
    model : callable ``(state, y, t) -> array``
        Data estimator for the bridge samplers (``kind`` 'sde'/'ode'),
        score estimator for the baseline (``kind`` 'ouve_em').  Called once
        per step.
    schedule : NoiseSchedule
        Must be a bridge schedule for 'sde'/'ode' and an OUVE schedule for
        'ouve_em'.
    kind : str
        'sde', 'ode' or 'ouve_em'.
    n_steps : int
        Number of uniform intervals on [t_min, T].
    rng : Generator or seed
        Drives the stochastic samplers; the ODE path never consumes it.
    hook : callable ``(step_index, t, state)``, optional
        Invoked after every step, e.g. for trajectory dumps.

    Returns
    -------
    The final state: at ``t = 0`` for the bridge samplers, at ``t_min`` for
    the baseline.
    """
    y = as_complex_array(y, "y")
    if kind in ("sde", "ode"):
        if not schedule.is_bridge:
            raise ValueError(f"sampler {kind!r} requires a bridge schedule, got {schedule.kind!r}")
    elif kind == "ouve_em":
        if not isinstance(schedule, OUVESchedule):
            raise ValueError("sampler 'ouve_em' requires an OUVE schedule")
    else:
        raise ValueError(f"unknown sampler kind {kind!r}")
    rng = as_rng(rng)
    grid = time_grid(schedule, n_steps, t_min=t_min, final_zero=kind != "ouve_em")
    guard = guard_factor * max(float(np.linalg.norm(y)), np.sqrt(y.size))

    if kind == "ouve_em":
        state = y + np.sqrt(schedule.marginal_variance(schedule.T)) * complex_normal(rng, y.shape)
    else:
        state = y.copy()

    for i in range(len(grid) - 1):
        tau, t = float(grid[i]), float(grid[i + 1])
        estimate = np.asarray(model(state, y, tau))
        if estimate.shape != y.shape:
            raise ValueError(
                f"model output shape {estimate.shape} does not match state shape {y.shape}"
            )
        if not np.all(np.isfinite(estimate)):
            raise DivergenceError("non-finite model output in reverse trajectory", i, tau)
        if kind == "sde":
            state = sde_step(state, estimate, tau, t, schedule, rng)
        elif kind == "ode":
            state = ode_step(state, estimate, y, tau, t, schedule)
        else:
            state = ouve_em_step(state, estimate, y, tau, t, schedule, rng)
        if not np.all(np.isfinite(state)):
            raise DivergenceError("non-finite state in reverse trajectory", i, t)
        if np.linalg.norm(state) > guard:
            raise DivergenceError("state norm exceeded divergence guard", i, t)
        if hook is not None:
            hook(i, t, state)
    return state
