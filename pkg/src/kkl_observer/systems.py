"""Benchmark plants and their noise channels.

All dynamics/output functions are vectorised over leading axes: ``x`` may be
a single state ``(n_x,)`` or a batch ``(..., n_x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYSTEM_NAMES = ("duffing", "vanderpol", "rossler", "lorenz")

DEFAULT_PARAMS = {
    "duffing": {},
    "vanderpol": {"mu": 3.0},
    "rossler": {"a": 0.2, "b": 0.2, "c": 5.7},
    "lorenz": {"p": 28.0, "q": 10.0, "r": 8.0 / 3.0},
}
STATE_DIMS = {"duffing": 2, "vanderpol": 2, "rossler": 3, "lorenz": 3}
# index of the measured state component
OUTPUT_INDEX = {"duffing": 0, "vanderpol": 0, "rossler": 1, "lorenz": 1}
# RK4 substeps per sample interval; Lorenz has a linear mode near -36, which
# leaves the RK4 stability region at a 0.1 step
SUBSTEPS = {"duffing": 1, "vanderpol": 1, "rossler": 1, "lorenz": 4}


class UnknownSystem(ValueError):
    pass


def _duffing(x, prm):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x2**3, -x1], axis=-1)


def _vanderpol(x, prm):
    mu = prm["mu"]
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x2, mu * (1.0 - x1**2) * x2 - x1], axis=-1)


def _rossler(x, prm):
    a, b, c = prm["a"], prm["b"], prm["c"]
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([-x2 - x3, x1 + a * x2, b + x3 * (x1 - c)], axis=-1)


def _lorenz(x, prm):
    # benchmark parameter names: p multiplies (x2 - x1), q is the x3 offset
    p, q, r = prm["p"], prm["q"], prm["r"]
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([p * (x2 - x1), x1 * (q - x3) - x2, x1 * x2 - r * x3], axis=-1)


_FIELDS = {"duffing": _duffing, "vanderpol": _vanderpol, "rossler": _rossler, "lorenz": _lorenz}


@dataclass(frozen=True, eq=False)
class SystemModel:
    name: str
    n_x: int
    n_y: int = 1
    params: dict = field(default_factory=dict)
    substeps: int = 1

    def __post_init__(self):
        if self.name not in _FIELDS:
            raise UnknownSystem(f"unknown system {self.name!r}; expected one of {SYSTEM_NAMES}")
        if not 1 <= self.n_y <= self.n_x:
            raise ValueError("need 1 <= n_y <= n_x")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_x:
            raise ValueError(f"{self.name}: expected state dimension {self.n_x}, got {x.shape[-1]}")
        return x

    def dynamics(self, x) -> np.ndarray:
        return _FIELDS[self.name](self._check(x), self.params)

    def output(self, x) -> np.ndarray:
        x = self._check(x)
        i = OUTPUT_INDEX[self.name]
        return x[..., i : i + 1]

    def output_jacobian(self, x) -> np.ndarray:
        self._check(x)
        jac = np.zeros((self.n_y, self.n_x))
        jac[0, OUTPUT_INDEX[self.name]] = 1.0
        return jac


def make_system(name: str, substeps: int | None = None, **overrides) -> SystemModel:
    if name not in _FIELDS:
        raise UnknownSystem(f"unknown system {name!r}; expected one of {SYSTEM_NAMES}")
    params = dict(DEFAULT_PARAMS[name])
    unknown = set(overrides) - set(params)
    if unknown:
        raise ValueError(f"{name}: unknown parameter(s) {sorted(unknown)}")
    params.update({k: float(v) for k, v in overrides.items()})
    return SystemModel(name, STATE_DIMS[name], 1, params, SUBSTEPS[name] if substeps is None else int(substeps))


def eval_dynamics(sys: SystemModel, x) -> np.ndarray:
    return sys.dynamics(x)


def eval_output(sys: SystemModel, x) -> np.ndarray:
    return sys.output(x)


def eval_output_jacobian(sys: SystemModel, x) -> np.ndarray:
    return sys.output_jacobian(x)


# --- noise channels -------------------------------------------------------

_PROCESS, _MEASUREMENT = 1, 2


@dataclass(frozen=True)
class NoiseSpec:
    w_std: tuple = ()  # per state channel; empty means zero
    v_std: tuple = ()  # per output channel; empty means zero
    seed: int = 0

    def __post_init__(self):
        if any(s < 0 for s in tuple(self.w_std) + tuple(self.v_std)):
            raise ValueError("noise standard deviations must be nonnegative")

    @classmethod
    def make(cls, sys: SystemModel, w_std=0.0, v_std=0.0, seed: int = 0) -> "NoiseSpec":
        w = np.broadcast_to(np.asarray(w_std, dtype=float), (sys.n_x,))
        v = np.broadcast_to(np.asarray(v_std, dtype=float), (sys.n_y,))
        return cls(tuple(float(s) for s in w), tuple(float(s) for s in v), int(seed))

    def w(self, n_x: int) -> np.ndarray:
        return np.zeros(n_x) if not self.w_std else np.asarray(self.w_std, dtype=float)

    def v(self, n_y: int) -> np.ndarray:
        return np.zeros(n_y) if not self.v_std else np.asarray(self.v_std, dtype=float)


def _draw(seed: int, channel: int, step: int, size: int) -> np.ndarray:
    return np.random.default_rng([int(seed), channel, int(step)]).standard_normal(size)


class PerturbedField:
    """``x -> f(x) + w_k`` with ``w_k`` held constant during integration step ``k``.

    Pass :meth:`set_step` as the ``step_hook`` of :func:`kkl_observer.ode.integrate`.
    Every step's draw is recorded in :attr:`realized`.
    """

    def __init__(self, sys: SystemModel, noise: NoiseSpec):
        self.sys = sys
        self.std = noise.w(sys.n_x)
        self.seed = noise.seed
        self.w = np.zeros(sys.n_x)
        self.realized: dict[int, np.ndarray] = {}

    def set_step(self, k: int) -> None:
        if np.any(self.std > 0):
            self.w = self.std * _draw(self.seed, _PROCESS, k, self.sys.n_x)
        self.realized[k] = self.w

    def __call__(self, x):
        return self.sys.dynamics(x) + self.w

    @property
    def wbar(self) -> float:
        """Empirical sup-norm of the realised process noise."""
        if not self.realized:
            return 0.0
        return float(np.max(np.abs(np.array(list(self.realized.values())))))


def perturbed_dynamics(sys: SystemModel, noise: NoiseSpec) -> PerturbedField:
    return PerturbedField(sys, noise)


def measurement_noise(sys: SystemModel, noise: NoiseSpec, step: int) -> np.ndarray:
    std = noise.v(sys.n_y)
    if not np.any(std > 0):
        return np.zeros(sys.n_y)
    return std * _draw(noise.seed, _MEASUREMENT, step, sys.n_y)


def noisy_output(sys: SystemModel, x, noise: NoiseSpec, step: int) -> np.ndarray:
    return sys.output(x) + measurement_noise(sys, noise, step)


def noisy_output_sequence(sys: SystemModel, states, noise: NoiseSpec) -> np.ndarray:
    """Noisy outputs for a sampled trajectory ``(K, n_x)``; row ``k`` uses step ``k``."""
    states = np.asarray(states, dtype=float)
    clean = sys.output(states)
    v = np.stack([measurement_noise(sys, noise, k) for k in range(len(states))])
    return clean + v
