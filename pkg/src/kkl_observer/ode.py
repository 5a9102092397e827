"""Fixed-step RK4 integration of autonomous and input-driven ODEs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

VectorField = Callable[[np.ndarray], np.ndarray]


class IntegrationDivergence(RuntimeError):
    """Raised when a stage of the integrator produces a non-finite value."""

    def __init__(self, step: int, t: float):
        super().__init__(f"integration diverged at step {step} (t = {t:.6g})")
        self.step = step
        self.t = t


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # (K,)
    states: np.ndarray  # (K, n)

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.ndim != 2:
            raise ValueError("times must be 1-D and states 2-D")
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return len(self.times)


def time_grid(n_steps: int, dt: float) -> np.ndarray:
    # k * dt rather than cumulative sums, so grids are exact multiples
    return np.arange(n_steps + 1, dtype=float) * dt


def rk4_step(f: VectorField, x, dt: float, *, step: int = 0, t: float = 0.0) -> np.ndarray:
    """One classical Runge-Kutta step of size ``dt`` for ``x' = f(x)``.

    ``x`` may also be a batch ``(B, n)`` if ``f`` is vectorised over rows.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not (np.all(np.isfinite(k4)) and np.all(np.isfinite(out))):
        raise IntegrationDivergence(step, t)
    return out


def n_steps_for(t_end: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < dt * (1 - 1e-12):
        raise ValueError("t_end must be at least dt")
    # tolerate floating noise such as 50 / 0.1 = 499.99999999999994
    return int(np.floor(t_end / dt + 1e-9))


def integrate_batch(f: VectorField, x0, t_end: float, dt: float, step_hook=None, substeps: int = 1) -> np.ndarray:
    """Integrate a batch of initial conditions; returns states ``(K, B, n)``.

    ``step_hook(k)`` is called before sample interval ``k`` (used by noise
    channels that hold a value constant over each interval). Each interval
    is covered by ``substeps`` RK4 steps of size ``dt / substeps``.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    n = n_steps_for(t_end, dt)
    h = dt / substeps
    out = np.empty((n + 1,) + x.shape)
    out[0] = x
    for k in range(n):
        if step_hook is not None:
            step_hook(k)
        for _ in range(substeps):
            x = rk4_step(f, x, h, step=k, t=k * dt)
        out[k + 1] = x
    return out


def integrate(f: VectorField, x0, t_end: float, dt: float, step_hook=None, substeps: int = 1) -> Trajectory:
    """Sample the solution of ``x' = f(x)`` at ``0, dt, ..., floor(t_end/dt)*dt``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    states = integrate_batch(f, x0[None, :], t_end, dt, step_hook, substeps)[:, 0, :]
    return Trajectory(time_grid(len(states) - 1, dt), states)


def integrate_driven_batch(A, B, z0, u, dt: float) -> np.ndarray:
    """Batched version of :func:`integrate_driven`.

    ``z0`` is ``(P, n_z)``, ``u`` is ``(K, P, n_u)``; returns ``(K, P, n_z)``.
    The input is held at its left sample across all four RK4 stages.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    z = np.atleast_2d(np.asarray(z0, dtype=float)).copy()
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        u = u[:, None, :] if z.shape[0] == 1 else u[:, :, None]
    n_z = A.shape[0]
    if A.shape != (n_z, n_z) or B.shape[0] != n_z or z.shape[1] != n_z:
        raise ValueError("dimension mismatch between A, B and z0")
    if u.shape[1] != z.shape[0] or u.shape[2] != B.shape[1]:
        raise ValueError(f"input signal shape {u.shape} incompatible with B {B.shape}")
    K = u.shape[0]
    out = np.empty((K, z.shape[0], n_z))
    out[0] = z
    At = A.T
    for k in range(K - 1):
        bu = u[k] @ B.T
        z = rk4_step(lambda s: s @ At + bu, z, dt, step=k, t=k * dt)
        out[k + 1] = z
    return out


def integrate_driven(A, B, z0, u, dt: float, n_samples: int | None = None) -> Trajectory:
    """Integrate ``z' = A z + B u(t)`` with ``u`` sampled on the ``dt`` grid.

    ``u`` has shape ``(K, n_u)``; the trajectory has ``n_samples`` samples
    (default ``K``).
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if n_samples is None:
        n_samples = len(u)
    if n_samples > len(u):
        raise ValueError(f"input signal has {len(u)} samples, {n_samples} requested")
    z0 = np.asarray(z0, dtype=float).reshape(1, -1)
    states = integrate_driven_batch(A, B, z0, u[:n_samples, None, :], dt)[:, 0, :]
    return Trajectory(time_grid(n_samples - 1, dt), states)
