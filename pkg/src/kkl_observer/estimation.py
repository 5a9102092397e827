"""Running a learned observer against a (possibly noisy) plant, and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import MlpParams, forward
from .observer import ObserverMatrices
from .ode import integrate, integrate_driven
from .systems import NoiseSpec, SystemModel, noisy_output_sequence, perturbed_dynamics


@dataclass(eq=False)
class EstimationRun:
    times: np.ndarray  # (K,)
    x: np.ndarray  # true (perturbed) plant state (K, n_x)
    x_hat: np.ndarray  # (K, n_x)
    z_hat: np.ndarray  # observer state driven by noisy output (K, n_z)
    z_ref: np.ndarray  # filter copy driven by the nominal clean output (K, n_z)
    y_clean: np.ndarray  # (K, n_y)
    y_noisy: np.ndarray  # (K, n_y)
    wbar: float = 0.0
    vbar: float = 0.0

    @property
    def errors(self) -> np.ndarray:
        return np.linalg.norm(self.x - self.x_hat, axis=1)


def simulate_observer(
    sys: SystemModel,
    obs: ObserverMatrices,
    eta: MlpParams,
    x0,
    noise: NoiseSpec | None = None,
    T: float = 50.0,
    dt: float = 0.1,
    z0=None,
    z_ref0=None,
) -> EstimationRun:
    """Simulate plant + observer; ``z0`` (observer start) defaults to zero."""
    if eta.n_in != obs.n_z or eta.n_out != sys.n_x:
        raise ValueError(f"inverse map must be {obs.n_z} -> {sys.n_x}, got {eta.n_in} -> {eta.n_out}")
    noise = noise or NoiseSpec()
    z0 = np.zeros(obs.n_z) if z0 is None else np.asarray(z0, dtype=float)
    z_ref0 = np.zeros(obs.n_z) if z_ref0 is None else np.asarray(z_ref0, dtype=float)

    field = perturbed_dynamics(sys, noise)
    traj = integrate(field, x0, T, dt, step_hook=field.set_step, substeps=sys.substeps)
    x = traj.states
    y_clean = sys.output(x)
    y_noisy = noisy_output_sequence(sys, x, noise)
    if field.wbar > 0:
        nominal = integrate(sys.dynamics, x0, T, dt, substeps=sys.substeps).states
    else:
        nominal = x
    z_hat = integrate_driven(obs.A, obs.B, z0, y_noisy, dt).states
    z_ref = integrate_driven(obs.A, obs.B, z_ref0, sys.output(nominal), dt).states
    x_hat = forward(eta, z_hat)
    vbar = float(np.max(np.abs(y_noisy - y_clean)))
    return EstimationRun(traj.times, x, x_hat, z_hat, z_ref, y_clean, y_noisy, field.wbar, vbar)


def _tail(run: EstimationRun, t_cutoff: float):
    # tolerate grid round-off at the cutoff instant
    return run.times >= t_cutoff - 1e-9


def rmse(runs, t_cutoff: float = 0.0) -> float:
    """Pooled root-mean-square of ``||x - x_hat||`` over samples with ``t >= t_cutoff``."""
    runs = list(runs)
    if not runs:
        raise ValueError("no runs")
    sq = [run.errors[_tail(run, t_cutoff)] ** 2 for run in runs]
    n = sum(len(s) for s in sq)
    if n == 0:
        raise ValueError("no samples after cutoff")
    return math.sqrt(sum(float(np.sum(s)) for s in sq) / n)


def smape_terms(run: EstimationRun, t_cutoff: float = 0.0):
    """Per-sample ``200 ||e|| / (||x|| + ||x_hat||)`` and the count of skipped 0/0 samples."""
    mask = _tail(run, t_cutoff)
    num = 2.0 * run.errors[mask]
    den = np.linalg.norm(run.x[mask], axis=1) + np.linalg.norm(run.x_hat[mask], axis=1)
    ok = den > 0
    return 100.0 * num[ok] / den[ok], int(np.sum(~ok))


def smape(runs, t_cutoff: float = 0.0) -> float:
    """Symmetric mean absolute percentage error in ``[0, 200]``."""
    runs = list(runs)
    if not runs:
        raise ValueError("no runs")
    terms = [smape_terms(run, t_cutoff)[0] for run in runs]
    n = sum(len(t) for t in terms)
    if n == 0:
        raise ValueError("all samples degenerate (x = x_hat = 0)")
    return sum(float(np.sum(t)) for t in terms) / n


def metrics_report(runs, t_cutoff: float = 0.0, tail_cutoff: float | None = None) -> dict:
    runs = list(runs)
    report = {
        "rmse": rmse(runs, t_cutoff),
        "smape": smape(runs, t_cutoff),
        "t_cutoff": t_cutoff,
        "n_traj": len(runs),
        "n_steps": int(np.sum(_tail(runs[0], t_cutoff))),
        "skipped_degenerate": sum(smape_terms(r, t_cutoff)[1] for r in runs),
        "per_trajectory": [{"rmse": rmse([r], t_cutoff), "smape": smape([r], t_cutoff)} for r in runs],
    }
    if tail_cutoff is not None:
        report["tail"] = {"t_cutoff": tail_cutoff, "rmse": rmse(runs, tail_cutoff), "smape": smape(runs, tail_cutoff)}
    return report


def z_error_envelope_check(
    run: EstimationRun,
    obs: ObserverMatrices,
    ell_h: float,
    psi_wbar: float,
    vbar: float,
    burn_in: float = 0.0,
) -> dict:
    """Check ``||z_ref - z_hat||`` against the ISS envelope at every sample from ``burn_in``.

    The envelope restarts at ``burn_in`` with the filter-state difference
    there as the initial error.
    """
    mask = _tail(run, burn_in)
    t = run.times[mask] - run.times[mask][0]
    zt = np.linalg.norm(run.z_ref[mask] - run.z_hat[mask], axis=1)
    decay = obs.cond_V * np.exp(obs.lambda_min * t)
    forcing = obs.cond_V / abs(obs.lambda_min) * obs.norm_B * (1.0 - np.exp(obs.lambda_min * t))
    bound = zt[0] * decay + forcing * (ell_h * psi_wbar + math.sqrt(obs.n_y) * vbar)
    margin = bound - zt
    worst = int(np.argmin(margin))
    return {
        "passed": bool(margin[worst] >= 0.0),
        "min_margin": float(margin[worst]),
        "at_time": float(run.times[mask][worst]),
        "margin": margin,
        "z_error": zt,
        "bound": bound,
    }


def fit_decay_rate(times, values) -> float:
    """Slope of a least-squares line through ``log(values)``."""
    values = np.asarray(values, dtype=float)
    keep = values > 0
    slope, _ = np.polyfit(np.asarray(times)[keep], np.log(values[keep]), 1)
    return float(slope)
