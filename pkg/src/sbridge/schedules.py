"""Closed-form noise schedules for the bridge process and the diffusion baseline.

Every schedule exposes the drift/diffusion pair ``(f(t), g2(t))`` of the
reference SDE together with the derived quantities used by the samplers:

* ``alpha(t)    = exp(int_0^t f)``
* ``sigma2(t)   = int_0^t g2 / alpha^2``
* ``sigma2_bar(t) = sigma2(T) - sigma2(t)``
* ``weights(t)``  -- the pair ``(w_x, w_y)`` interpolating the state mean
  between the clean endpoint at ``t=0`` and the degraded endpoint at ``t=T``
* ``marginal_variance(t)`` -- per-complex-component variance of the state

The bridge schedules (``ve``/``vp``) pin both endpoints exactly; the
Ornstein-Uhlenbeck baseline (``ouve``) does not reach the degraded endpoint
at ``t=T``, which is precisely the mean mismatch the bridge removes.

Variance differences are evaluated through ``expm1`` factorizations rather
than naive subtraction, so endpoint identities hold to the last bit even for
the vp schedule whose raw variance reaches ~6.6e3 at ``t=1``.
"""

import numpy as np

from .validation import check_positive, check_time_range


class NoiseSchedule:
    """Common derived quantities; subclasses supply the closed forms."""

    kind = None
    is_bridge = False

    def __init__(self, T=1.0, t_min=1e-4):
        check_positive(T, "T")
        if not 0 < t_min < T:
            raise ValueError(f"t_min must lie in (0, T), got {t_min}")
        self.T = float(T)
        self.t_min = float(t_min)

    # subclass hooks ------------------------------------------------------

    def log_alpha(self, t):
        raise NotImplementedError

    def _variance_gap(self, t, tau):
        """sigma2(tau) - sigma2(t) for t <= tau, computed cancellation-free."""
        raise NotImplementedError

    def drift_diffusion(self, t):
        """SDE coefficients ``(f, g2)`` at time t."""
        raise NotImplementedError

    # derived -------------------------------------------------------------

    def alpha(self, t):
        return np.exp(self.log_alpha(t))

    def sigma2(self, t):
        t = check_time_range(t, self.T)
        return self._variance_gap(0.0, t)

    def sigma2_bar(self, t):
        t = check_time_range(t, self.T)
        return self._variance_gap(t, self.T)

    def sigma2_gap(self, t, tau):
        """``sigma2(tau) - sigma2(t)`` for ``t <= tau``, cancellation-free."""
        t = check_time_range(t, self.T)
        tau = check_time_range(tau, self.T, name="tau")
        if np.any(t > tau):
            raise ValueError("sigma2_gap requires t <= tau")
        return self._variance_gap(t, tau)

    @property
    def sigma2_total(self):
        return self._variance_gap(0.0, self.T)

    def alpha_bar(self, t):
        return np.exp(self.log_alpha(t) - self.log_alpha(self.T))

    def weights(self, t):
        """Mean-interpolation weights ``(w_x, w_y)`` of the state marginal."""
        t = check_time_range(t, self.T)
        total = self.sigma2_total
        w_x = self.alpha(t) * self._variance_gap(t, self.T) / total
        w_y = self.alpha_bar(t) * self._variance_gap(0.0, t) / total
        return w_x, w_y

    def marginal_variance(self, t):
        """Per-complex-component variance of the state at time t."""
        t = check_time_range(t, self.T)
        a2 = np.exp(2.0 * self.log_alpha(t))
        return a2 * self._variance_gap(t, self.T) * self._variance_gap(0.0, t) / self.sigma2_total

    def to_dict(self):
        """Constructor arguments plus kind, for checkpoints and manifests."""
        out = {"kind": self.kind, "T": self.T, "t_min": self.t_min}
        for name in self._param_names:
            out[name] = getattr(self, name)
        return out


class VESchedule(NoiseSchedule):
    """Variance-exploding bridge schedule: zero drift, ``g2 = c * k**(2t)``.

    Defaults give a maximum state variance of ~0.3 at the midpoint of the
    variance ramp.
    """

    kind = "sbve"
    is_bridge = True
    _param_names = ("c", "k")

    def __init__(self, c=0.40, k=2.6, T=1.0, t_min=1e-4):
        super().__init__(T=T, t_min=t_min)
        check_positive(c, "c")
        if not k > 1:
            raise ValueError(f"k must exceed 1, got {k}")
        self.c = float(c)
        self.k = float(k)

    def log_alpha(self, t):
        t = check_time_range(t, self.T)
        return np.zeros_like(np.asarray(t, dtype=np.float64))

    def _variance_gap(self, t, tau):
        log_k = np.log(self.k)
        return (self.c / (2.0 * log_k)
                * np.exp(2.0 * np.asarray(t) * log_k)
                * np.expm1(2.0 * (np.asarray(tau) - np.asarray(t)) * log_k))

    def drift_diffusion(self, t):
        t = check_time_range(t, self.T)
        return np.zeros_like(t), self.c * self.k ** (2.0 * t)


class VPSchedule(NoiseSchedule):
    """Scaled variance-preserving bridge schedule.

    ``f = -(beta0 + (beta1 - beta0) t) / 2`` and ``g2 = c (beta0 +
    (beta1 - beta0) t)``; the extra scale ``c`` matches the maximum state
    variance of the ve schedule.
    """

    kind = "sbvp"
    is_bridge = True
    _param_names = ("beta0", "beta1", "c")

    def __init__(self, beta0=0.01, beta1=20.0, c=0.3, T=1.0, t_min=1e-4):
        super().__init__(T=T, t_min=t_min)
        check_positive(beta0, "beta0")
        check_positive(c, "c")
        if not beta1 > beta0:
            raise ValueError(f"beta1 must exceed beta0, got {beta0} >= {beta1}")
        self.beta0 = float(beta0)
        self.beta1 = float(beta1)
        self.c = float(c)

    def _beta_integral(self, t):
        # int_0^t (beta0 + (beta1-beta0) tau) dtau
        t = np.asarray(t, dtype=np.float64)
        return self.beta0 * t + 0.5 * (self.beta1 - self.beta0) * t ** 2

    def log_alpha(self, t):
        t = check_time_range(t, self.T)
        return -0.5 * self._beta_integral(t)

    def _variance_gap(self, t, tau):
        t = np.asarray(t, dtype=np.float64)
        tau = np.asarray(tau, dtype=np.float64)
        # E(tau) - E(t) factored to avoid cancellation near tau ~= t
        delta = (tau - t) * (self.beta0 + 0.5 * (self.beta1 - self.beta0) * (tau + t))
        return self.c * np.exp(self._beta_integral(t)) * np.expm1(delta)

    def drift_diffusion(self, t):
        t = check_time_range(t, self.T)
        beta = self.beta0 + (self.beta1 - self.beta0) * t
        return -0.5 * beta, self.c * beta


class OUVESchedule(NoiseSchedule):
    """Ornstein-Uhlenbeck drift with variance-exploding diffusion (baseline).

    The affine drift ``gamma * (y - x)`` pulls the state toward the degraded
    signal while ``g2 = c * k**(2t)`` injects noise.  Mean weights are
    ``(exp(-gamma t), 1 - exp(-gamma t))``, so the degraded endpoint is only
    approached asymptotically.

    Defaults follow the ``sigma_min/sigma_max`` convention of the diffusion
    literature with ``sigma_min = 0.05`` and ``sigma_max = 0.5``:
    ``k = sigma_max / sigma_min`` and ``c = 2 * sigma_min**2 * log(k)``,
    which lands the maximum state variance near 0.15.
    """

    kind = "ouve"
    is_bridge = False
    _param_names = ("gamma", "c", "k")

    #: c implied by sigma_min=0.05, sigma_max=0.5
    DEFAULT_C = 2.0 * 0.05 ** 2 * np.log(10.0)

    def __init__(self, gamma=1.5, c=DEFAULT_C, k=10.0, T=1.0, t_min=1e-4):
        super().__init__(T=T, t_min=t_min)
        check_positive(gamma, "gamma")
        check_positive(c, "c")
        if not k > 1:
            raise ValueError(f"k must exceed 1, got {k}")
        self.gamma = float(gamma)
        self.c = float(c)
        self.k = float(k)

    @classmethod
    def figure_preset(cls, max_variance=0.15, tolerance=0.02):
        """Defaults plus a startup check that the variance peak lands at 0.15."""
        schedule = cls()
        grid = np.linspace(0.0, schedule.T, 4097)
        peak = float(np.max(schedule.marginal_variance(grid)))
        if abs(peak - max_variance) > tolerance * max_variance:
            raise ValueError(
                f"preset variance peak {peak:.4f} deviates from {max_variance} by more than "
                f"{tolerance:.0%}"
            )
        return schedule

    def log_alpha(self, t):
        t = check_time_range(t, self.T)
        return np.zeros_like(np.asarray(t, dtype=np.float64))

    def sigma2(self, t):
        # State variance of the transition distribution; no bridge
        # decomposition exists for the affine drift, so this doubles as the
        # marginal variance.
        return self.marginal_variance(t)

    def _variance_gap(self, t, tau):
        raise NotImplementedError("ouve has no bridge variance decomposition")

    def weights(self, t):
        t = check_time_range(t, self.T)
        w_x = np.exp(-self.gamma * t)
        return w_x, 1.0 - w_x

    def marginal_variance(self, t):
        t = check_time_range(t, self.T)
        log_k = np.log(self.k)
        num = np.exp(-2.0 * self.gamma * t) * np.expm1(2.0 * t * (self.gamma + log_k))
        return self.c * num / (2.0 * (self.gamma + log_k))

    def drift_diffusion(self, t):
        """Returns ``(gamma, g2)``; the drift itself is ``gamma * (y - x)``."""
        t = check_time_range(t, self.T)
        return np.full_like(t, self.gamma), self.c * self.k ** (2.0 * t)


SCHEDULES = {cls.kind: cls for cls in (VESchedule, VPSchedule, OUVESchedule)}


def make_schedule(kind, **params):
    """Build a schedule by kind name ('sbve', 'sbvp' or 'ouve')."""
    try:
        cls = SCHEDULES[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown schedule kind {kind!r}; choose from {sorted(SCHEDULES)}")
    return cls(**params)
