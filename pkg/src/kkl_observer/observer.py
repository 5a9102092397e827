"""The lifted linear filter ``z' = A z + B y`` and its truncation machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_EPS = 1e-4
DEFAULT_LAMBDA_RANGE = (-2.0, -0.5)


@dataclass(frozen=True, eq=False)
class ObserverMatrices:
    eigenvalues: np.ndarray  # (n_z,), distinct and negative
    B: np.ndarray  # (n_z, n_y)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or np.any(lam >= 0):
            raise ValueError("eigenvalues must be a vector of negative reals")
        if len(np.unique(lam)) != len(lam):
            raise ValueError("eigenvalues must be pairwise distinct")
        if self.B.shape[0] != len(lam):
            raise ValueError("B must have n_z rows")

    @property
    def n_z(self) -> int:
        return len(self.eigenvalues)

    @property
    def n_y(self) -> int:
        return self.B.shape[1]

    @property
    def A(self) -> np.ndarray:
        return np.diag(self.eigenvalues)

    @property
    def cond_V(self) -> float:
        # A is diagonal, so V = I
        return 1.0

    @property
    def lambda_min(self) -> float:
        """Eigenvalue closest to the imaginary axis."""
        return float(np.max(self.eigenvalues))

    @property
    def norm_B(self) -> float:
        return float(np.linalg.norm(self.B, 2))

    def to_dict(self) -> dict:
        return {
            "n_z": self.n_z,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "B": [[float(v) for v in row] for row in self.B],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObserverMatrices":
        obs = cls(np.asarray(d["eigenvalues"], dtype=float), np.asarray(d["B"], dtype=float))
        if obs.n_z != d["n_z"]:
            raise ValueError("observer block: n_z inconsistent with eigenvalues")
        return obs

    def same_as(self, other: "ObserverMatrices") -> bool:
        return (
            self.n_z == other.n_z
            and np.array_equal(self.eigenvalues, other.eigenvalues)
            and np.array_equal(self.B, other.B)
        )


def observer_dimension(n_x: int, n_y: int) -> int:
    return n_y * (2 * n_x + 1)


def build_observer(n_x: int, n_y: int, lambda_lo: float = -2.0, lambda_hi: float = -0.5) -> ObserverMatrices:
    """Diagonal Hurwitz ``A`` with equally spaced eigenvalues and ``B`` of ones."""
    if lambda_hi >= 0:
        raise ValueError("lambda_hi must be negative")
    if not lambda_lo < lambda_hi:
        raise ValueError("need lambda_lo < lambda_hi")
    n_z = observer_dimension(n_x, n_y)
    lam = np.linspace(lambda_lo, lambda_hi, n_z)
    return ObserverMatrices(lam, np.ones((n_z, n_y)))


def truncation_time(eps: float, z0_norm: float, cond_V: float, lambda_min: float) -> float:
    """Time after which ``||exp(At) z0|| <= eps`` is guaranteed (clamped at 0)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if z0_norm <= 0:
        raise ValueError("z0_norm must be positive")
    if lambda_min >= 0:
        raise ValueError("lambda_min must be negative")
    return max(0.0, math.log(eps / (cond_V * z0_norm)) / lambda_min)


def truncation_index(t_star_max: float, dt: float) -> int:
    """Smallest ``k`` with ``k * dt >= t_star_max``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_star_max <= 0:
        return 0
    k = math.ceil(t_star_max / dt)
    # undo ceil overshoot from floating noise, e.g. 0.1 / 0.1 style ratios
    if k > 0 and (k - 1) * dt >= t_star_max:
        k -= 1
    return k


def exp_envelope(obs: ObserverMatrices, t) -> np.ndarray | float:
    """Upper bound ``cond(V) exp(lambda_min t)`` on ``||exp(At)||``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    out = obs.cond_V * np.exp(obs.lambda_min * t)
    return float(out) if out.ndim == 0 else out


def expm_norm(obs: ObserverMatrices, t: float) -> float:
    """Spectral norm of ``exp(At)`` computed directly (diagonal ``A``)."""
    return float(np.max(np.exp(obs.eigenvalues * t)))


def input_gain_bound(obs: ObserverMatrices, t) -> np.ndarray | float:
    """Bound on ``int_0^t ||exp(A s) B|| ds``."""
    t = np.asarray(t, dtype=float)
    out = obs.cond_V / abs(obs.lambda_min) * obs.norm_B * (1.0 - np.exp(obs.lambda_min * t))
    return float(out) if out.ndim == 0 else out


def controllability_rank(obs: ObserverMatrices) -> int:
    A = obs.A
    blocks = [obs.B]
    for _ in range(obs.n_z - 1):
        blocks.append(A @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks)))
