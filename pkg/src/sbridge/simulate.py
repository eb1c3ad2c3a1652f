"""Monte-Carlo verification of the closed-form state statistics.

For a fixed small endpoint pair this draws the forward marginal at a grid of
times and, for bridge schedules, the single stochastic reverse step from the
final time, then compares empirical means and per-component variances
against the closed forms.  A check passes when the deviation stays within
three standard errors of the estimator.

The bound is honest per check (~99.7% level), and a full run evaluates a few
hundred checks, so the strict all-pass gate has an appreciable false-alarm
rate under arbitrary reseeding.  Runs are deterministic for a fixed seed and
the default configuration is verified to pass; when reseeding, expect an
occasional single-check miss that sits just over its tolerance.
"""

import csv

import numpy as np

from .bridge import complex_normal, sde_step
from .seeding import as_rng

#: fixed two-component toy endpoints (clean, degraded)
TOY_X = np.array([1.0 + 0.5j, -0.3 + 0.2j])
TOY_Y = np.array([0.2 - 1.0j, 0.8 + 0.1j])


def toy_endpoints(dim):
    """Fixed endpoint pair of a given size (independent of the draw seed)."""
    if dim == TOY_X.size:
        return TOY_X.copy(), TOY_Y.copy()
    rng = np.random.default_rng(20240201)
    x = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    y = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return x, y

DEFAULT_TIMES = tuple(np.round(np.arange(1, 10) * 0.1, 10))

ROW_FIELDS = ("check", "schedule", "t", "component", "part",
              "analytic_mean", "empirical_mean", "mean_tolerance",
              "analytic_var", "empirical_var", "var_tolerance", "passed")


def _moment_rows(check, schedule, t, draws, mean, variance):
    """Compare empirical moments of complex draws against analytic values."""
    rows = []
    n = draws.shape[0]
    part_var = variance / 2.0  # per real/imaginary part
    se_mean = np.sqrt(part_var / n)
    se_var = part_var * np.sqrt(2.0 / max(n - 1, 1))
    for comp in range(draws.shape[1]):
        for part, values, target in (("re", draws[:, comp].real, mean[comp].real),
                                     ("im", draws[:, comp].imag, mean[comp].imag)):
            emp_mean = float(values.mean())
            emp_var = float(values.var(ddof=1))
            ok = (abs(emp_mean - target) <= 3.0 * se_mean
                  and abs(emp_var - part_var) <= 3.0 * se_var)
            rows.append({
                "check": check, "schedule": schedule.kind, "t": t,
                "component": comp, "part": part,
                "analytic_mean": target, "empirical_mean": emp_mean,
                "mean_tolerance": 3.0 * se_mean,
                "analytic_var": part_var, "empirical_var": emp_var,
                "var_tolerance": 3.0 * se_var,
                "passed": ok,
            })
    return rows


def simulate_statistics(schedule, times=DEFAULT_TIMES, n_trajectories=100_000,
                        rng=0, x=None, y=None, corrupt_variance=1.0):
    """Run the moment checks; returns ``(rows, all_passed)``.

    ``corrupt_variance`` scales the standard deviation of the forward draws
    only; it exists so the failure path of the gate can be exercised
    deliberately.
    """
    rng = as_rng(rng)
    x = TOY_X if x is None else np.asarray(x, dtype=np.complex128)
    y = TOY_Y if y is None else np.asarray(y, dtype=np.complex128)
    rows = []
    for t in times:
        t = float(t)
        w_x, w_y = schedule.weights(t)
        mean = w_x * x + w_y * y
        variance = float(schedule.marginal_variance(t))
        std = np.sqrt(variance) * corrupt_variance
        draws = mean[None, :] + std * complex_normal(rng, (n_trajectories, x.size))
        rows += _moment_rows("forward_marginal", schedule, t, draws, mean, variance)
        if schedule.is_bridge:
            # one reverse step from T with the oracle estimate must land on
            # the same Gaussian marginal
            states = np.broadcast_to(y, (n_trajectories, y.size))
            estimates = np.broadcast_to(x, (n_trajectories, x.size))
            stepped = sde_step(states, estimates, schedule.T, t, schedule, rng)
            rows += _moment_rows("one_step_from_T", schedule, t, stepped, mean, variance)
    return rows, all(row["passed"] for row in rows)


def write_rows_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
