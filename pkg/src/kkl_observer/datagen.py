"""Synthetic training data for the forward map (S1) and the inverse map (S2).

Time indexing: sample ``k`` of a trajectory is at ``t_k = k * dt`` for
``k = 0 .. tau`` with ``tau = T / dt``. Labelled pairs keep ``k* .. tau``
(``tau - k* + 1`` samples per trajectory); collocation points use
``k = 1 .. tau`` (``tau`` per trajectory).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import MlpParams, forward
from .observer import ObserverMatrices, truncation_index, truncation_time
from .ode import integrate_batch, integrate_driven_batch, n_steps_for
from .systems import SystemModel

S2_MODES = ("iid_points", "trajectories")


class HorizonTooShort(ValueError):
    pass


def sample_box(count: int, lo, hi, seed) -> np.ndarray:
    """``count`` i.i.d. uniform points in the box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ValueError("lo and hi must be vectors of equal length")
    if np.any(hi <= lo):
        raise ValueError("degenerate box: need lo < hi in every coordinate")
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((count, len(lo)))


def box(half_width: float, dim: int, center: float = 0.0):
    return (np.full(dim, center - half_width), np.full(dim, center + half_width))


@dataclass(eq=False)
class DatasetS1:
    x_data: np.ndarray  # (N_data, n_x)
    z_data: np.ndarray  # (N_data, n_z)
    x_pde: np.ndarray  # (N_pde, n_x)
    k_star: int
    tau: int
    dt: float
    t_star_max: float
    x0: np.ndarray  # (p, n_x)
    z0: np.ndarray  # (p, n_z)
    # per labelled pair: source trajectory and sample index
    traj_index: np.ndarray = field(default=None)
    time_index: np.ndarray = field(default=None)

    @property
    def n_data(self) -> int:
        return len(self.x_data)

    @property
    def n_pde(self) -> int:
        return len(self.x_pde)


@dataclass(eq=False)
class DatasetS2:
    z: np.ndarray  # (N2, n_z)
    x: np.ndarray  # (N2, n_x)

    def __len__(self) -> int:
        return len(self.x)


def simulate_plant_and_filter(sys: SystemModel, obs: ObserverMatrices, x0, z0, T: float, dt: float):
    """Plant trajectories and clean-output-driven filter trajectories, ``(K, P, .)``."""
    X = integrate_batch(sys.dynamics, x0, T, dt, substeps=sys.substeps)
    Y = sys.output(X)
    Z = integrate_driven_batch(obs.A, obs.B, z0, Y, dt)
    return X, Z


def generate_s1(
    sys: SystemModel,
    obs: ObserverMatrices,
    p: int,
    q: int,
    T: float,
    dt: float,
    eps: float,
    x_box,
    z_box,
    seed: int,
    k_star_fraction: float | None = None,
) -> DatasetS1:
    """Labelled pairs from truncated (x, z) trajectories plus collocation points.

    ``k*`` is the first sample at which every sampled ``z0`` has been
    forgotten to within ``eps``. If ``k_star_fraction`` is given, ``k*`` is
    raised to at least ``round(k_star_fraction * tau)``.
    """
    if p < 1 or q < 0:
        raise ValueError("need p >= 1 and q >= 0")
    tau = n_steps_for(T, dt)
    x0 = sample_box(p, *x_box, seed=[seed, 0])
    z0 = sample_box(p, *z_box, seed=[seed, 1])
    x0_pde = sample_box(q, *x_box, seed=[seed, 2])

    z0_norms = np.linalg.norm(z0, axis=1)
    t_star_max = max(truncation_time(eps, float(nrm), obs.cond_V, obs.lambda_min) for nrm in z0_norms)
    k_star = truncation_index(t_star_max, dt)
    if k_star_fraction is not None:
        k_star = max(k_star, int(round(k_star_fraction * tau)))
    if tau < k_star + 1:
        raise HorizonTooShort(f"horizon has {tau} steps but truncation needs k* + 1 = {k_star + 1}")

    X, Z = simulate_plant_and_filter(sys, obs, x0, z0, T, dt)
    # trajectory-major ordering: all retained samples of trajectory 0, then 1, ...
    x_data = X[k_star:].transpose(1, 0, 2).reshape(-1, sys.n_x)
    z_data = Z[k_star:].transpose(1, 0, 2).reshape(-1, obs.n_z)
    n_keep = tau - k_star + 1
    traj_index = np.repeat(np.arange(p), n_keep)
    time_index = np.tile(np.arange(k_star, tau + 1), p)

    if q > 0:
        Xp = integrate_batch(sys.dynamics, x0_pde, T, dt, substeps=sys.substeps)
        x_pde = Xp[1:].transpose(1, 0, 2).reshape(-1, sys.n_x)
    else:
        x_pde = np.empty((0, sys.n_x))

    return DatasetS1(
        x_data, z_data, x_pde, k_star, tau, dt, t_star_max, x0, z0, traj_index, time_index
    )


def generate_s2(
    theta: MlpParams,
    sys: SystemModel,
    n2: int,
    x_box,
    mode: str = "iid_points",
    dt: float = 0.1,
    T: float = 50.0,
    seed: int = 0,
) -> DatasetS2:
    """Pairs ``(T_theta(x'), x')`` from the frozen forward map."""
    if mode not in S2_MODES:
        raise ValueError(f"unknown S2 mode {mode!r}; expected one of {S2_MODES}")
    if n2 < 0:
        raise ValueError("N2 must be nonnegative")
    if n2 == 0:
        return DatasetS2(np.empty((0, theta.n_out)), np.empty((0, sys.n_x)))
    if mode == "iid_points":
        xs = sample_box(n2, *x_box, seed=[seed, 3])
    else:
        per_traj = n_steps_for(T, dt) + 1
        n_traj = math.ceil(n2 / per_traj)
        x0 = sample_box(n_traj, *x_box, seed=[seed, 4])
        X = integrate_batch(sys.dynamics, x0, T, dt, substeps=sys.substeps)
        xs = X.transpose(1, 0, 2).reshape(-1, sys.n_x)[:n2]
    return DatasetS2(forward(theta, xs), xs)
