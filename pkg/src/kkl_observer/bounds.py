"""Closed-form learning and robustness bounds, and the numbers they are checked against."""

from __future__ import annotations

import math

import numpy as np

from .datagen import sample_box


def complexity_term(M: float, d: float, N: float, delta: float) -> float:
    """Estimation-error penalty for a loss bounded by ``M`` over a class of pseudo-dimension ``d``."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    if d < 1 or N < d:
        raise ValueError(f"need N >= d >= 1 (got N={N}, d={d})")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return M * math.sqrt(2.0 * d * math.log(math.e * N / d) / N) + M * math.sqrt(math.log(1.0 / delta) / (2.0 * N))


def _nonneg(**kw):
    for k, v in kw.items():
        if v < 0:
            raise ValueError(f"{k} must be nonnegative")


def lemma2_chain(r2: float, ell_eta: float, r_T: float) -> float:
    """Inverse-map error from reconstruction risk and forward-map error."""
    _nonneg(r2=r2, ell_eta=ell_eta, r_T=r_T)
    return 2.0 * r2 + 2.0 * ell_eta**2 * r_T


def inverse_error_bound(emp_r2: float, comp_eta: float, ell_eta: float, emp_r1: float, comp_theta: float) -> float:
    """High-probability bound on the inverse-map error from empirical risks and complexity terms."""
    _nonneg(emp_r2=emp_r2, comp_eta=comp_eta, ell_eta=ell_eta, emp_r1=emp_r1, comp_theta=comp_theta)
    return 2.0 * (emp_r2 + 2.0 * comp_eta) + 2.0 * ell_eta**2 * (emp_r1 + 2.0 * comp_theta)


def z_gain(cond_V: float, lambda_min: float, norm_B: float) -> float:
    if lambda_min >= 0:
        raise ValueError("lambda_min must be negative")
    return cond_V / abs(lambda_min) * norm_B


def steady_state_bound(
    r_Tstar: float,
    ell_eta: float,
    cond_V: float,
    lambda_min: float,
    norm_B: float,
    ell_h: float,
    psi_wbar: float,
    n_y: int,
    vbar: float,
) -> float:
    """Bound on the expected squared steady-state estimation error under noise.

    With ``psi_wbar = vbar = 0`` this reduces to ``2 * r_Tstar``.
    """
    _nonneg(r_Tstar=r_Tstar, ell_eta=ell_eta, cond_V=cond_V, norm_B=norm_B, ell_h=ell_h, psi_wbar=psi_wbar, vbar=vbar)
    sigma = ell_h * psi_wbar + math.sqrt(n_y) * vbar
    return 2.0 * r_Tstar + 2.0 * ell_eta**2 * z_gain(cond_V, lambda_min, norm_B) ** 2 * sigma**2


def estimate_ell_h(sys, lo, hi, n_samples: int, seed=0) -> float:
    """Sampled sup of the largest singular value of the output Jacobian."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    pts = sample_box(n_samples, lo, hi, seed)
    best = 0.0
    for x in pts:
        best = max(best, float(np.linalg.norm(sys.output_jacobian(x), 2)))
    return best


def empirical_steady_state_error(runs, t_cutoff: float) -> float:
    """Mean of ``||x - x_hat||^2`` over tail samples (``t >= t_cutoff``) of all runs."""
    total, count = 0.0, 0
    for run in runs:
        if t_cutoff >= run.times[-1]:
            raise ValueError("t_cutoff must lie before the end of the horizon")
        mask = run.times >= t_cutoff - 1e-9
        e = run.x[mask] - run.x_hat[mask]
        total += float(np.sum(e * e))
        count += int(mask.sum())
    if count == 0:
        raise ValueError("empty window")
    return total / count
