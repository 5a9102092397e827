"""Physics-informed risk and the two sequential training stages."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .datagen import DatasetS1, DatasetS2
from .nn import MlpParams, backward, flatten_grads, forward, forward_tangent, init_params
from .observer import ObserverMatrices
from .systems import SystemModel


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) in epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    hidden_layers: int = 3
    layer_size: int = 150
    learning_rate: float = 1e-3
    nu: float = 1.0
    epochs: int = 15
    batch_size: int = 256
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.nu < 0 or self.weight_decay < 0:
            raise ValueError("nu and weight_decay must be nonnegative")
        if self.batch_size < 1 or self.hidden_layers < 0 or self.layer_size < 1:
            raise ValueError("batch_size, layer_size must be positive and hidden_layers >= 0")

    def layer_sizes(self, n_in: int, n_out: int) -> list:
        return [n_in] + [self.layer_size] * self.hidden_layers + [n_out]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    data_loss: list = field(default_factory=list)
    pde_loss: list = field(default_factory=list)
    total_loss: list = field(default_factory=list)
    initial: dict = field(default_factory=dict)
    best_epoch: int = -1
    wall_time: float = 0.0
    checksum: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


# --- risks ----------------------------------------------------------------


def pde_residual(theta: MlpParams, obs: ObserverMatrices, sys: SystemModel, x) -> np.ndarray:
    """``dT/dx(x) f(x) - A T(x) - B h(x)``; batched over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    if theta.n_in != sys.n_x or theta.n_out != obs.n_z:
        raise ValueError("network dimensions do not match the system and observer")
    out, jf, _ = forward_tangent(theta, x, sys.dynamics(x))
    return jf - out * obs.eigenvalues - sys.output(x) @ obs.B.T


def _data_term(theta, x, z):
    out, _, cache = forward_tangent(theta, x, None)
    r = out - z
    n = len(x)
    value = float(np.sum(r * r)) / n
    return value, cache, (2.0 / n) * r


def _pde_term(theta, obs, sys, x):
    out, jf, cache = forward_tangent(theta, x, sys.dynamics(x))
    lam = obs.eigenvalues
    r = jf - out * lam - sys.output(x) @ obs.B.T
    n = len(x)
    value = float(np.sum(r * r)) / n
    g_tan = (2.0 / n) * r
    return value, cache, -g_tan * lam, g_tan


def physics_informed_loss(theta, obs, sys, x, z, x_pde=None, nu: float = 1.0):
    """Minibatch physics-informed loss and its flat parameter gradient."""
    value, cache, g_out = _data_term(theta, x, z)
    g = flatten_grads(backward(theta, cache, g_out))
    if x_pde is not None and nu > 0:
        v_pde, cache, g_out, g_tan = _pde_term(theta, obs, sys, x_pde)
        value += nu * v_pde
        g = g + nu * flatten_grads(backward(theta, cache, g_out, g_tan))
    return value, g


def empirical_risk_s1(theta: MlpParams, s1: DatasetS1, obs: ObserverMatrices, sys: SystemModel, nu: float):
    """Returns ``(total, data_fit, pde)`` with ``total = data_fit + nu * pde``."""
    if s1.n_data == 0 or (nu > 0 and s1.n_pde == 0):
        raise ValueError("empty dataset partition")
    data = float(np.mean(np.sum((forward(theta, s1.x_data) - s1.z_data) ** 2, axis=1)))
    pde = 0.0
    if s1.n_pde:
        pde = float(np.mean(np.sum(pde_residual(theta, obs, sys, s1.x_pde) ** 2, axis=1)))
    return data + nu * pde, data, pde


def empirical_risk_s2(eta: MlpParams, s2: DatasetS2) -> float:
    if len(s2) == 0:
        raise ValueError("empty dataset")
    return float(np.mean(np.sum((s2.x - forward(eta, s2.z)) ** 2, axis=1)))


# --- optimiser ------------------------------------------------------------


class Adam:
    """Adam on a flat parameter vector with optional decoupled weight decay."""

    def __init__(self, theta, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0, decay_mask=None):
        self.theta = np.array(theta, dtype=float)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.decay_mask = decay_mask
        self.m = np.zeros_like(self.theta)
        self.v = np.zeros_like(self.theta)
        self.t = 0

    def step(self, grad) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        update = m_hat / (np.sqrt(v_hat) + self.eps)
        if self.weight_decay:
            decay = self.theta if self.decay_mask is None else self.theta * self.decay_mask
            update = update + self.weight_decay * decay
        self.theta = self.theta - self.lr * update
        return self.theta


def _weight_mask(p: MlpParams) -> np.ndarray:
    # decay weights only, never biases
    return np.concatenate([np.r_[np.ones(W.size), np.zeros(b.size)] for W, b in zip(p.weights, p.biases)])


def _batches(n: int, n_steps: int, rng) -> list:
    """Split a fresh permutation of ``range(n)`` into ``n_steps`` near-equal batches."""
    perm = rng.permutation(n)
    size = math.ceil(n / n_steps)
    return [perm[i * size : (i + 1) * size] for i in range(n_steps)]


def _run(p0: MlpParams, cfg: TrainConfig, n_main: int, n_aux: int, step_grad, evaluate):
    """Shared minibatch loop; ``step_grad(params, idx_main, idx_aux) -> flat grad``."""
    start = time.perf_counter()
    rng = np.random.default_rng([cfg.seed, 10])
    opt = Adam(p0.flat(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay, decay_mask=_weight_mask(p0))
    report = TrainReport()
    report.initial = evaluate(p0)
    best, best_total = p0.copy(), math.inf
    params = p0
    n_steps = max(1, math.ceil(n_main / cfg.batch_size))
    for epoch in range(1, cfg.epochs + 1):
        main = _batches(n_main, n_steps, rng)
        aux = _batches(n_aux, n_steps, rng) if n_aux else [None] * n_steps
        for idx, idx_aux in zip(main, aux):
            g = step_grad(params, idx, idx_aux)
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(epoch)
            params = params.with_flat(opt.step(g))
        losses = evaluate(params)
        if not all(math.isfinite(v) for v in losses.values()):
            raise TrainingDiverged(epoch)
        report.data_loss.append(losses["data"])
        report.pde_loss.append(losses["pde"])
        report.total_loss.append(losses["total"])
        if losses["total"] < best_total:
            best, best_total = params, losses["total"]
            report.best_epoch = epoch
    report.wall_time = time.perf_counter() - start
    report.checksum = best.checksum()
    return best, report


def train_forward(s1: DatasetS1, obs: ObserverMatrices, sys: SystemModel, cfg: TrainConfig, init: MlpParams | None = None):
    """Minimise the physics-informed empirical risk over the forward map."""
    if s1.n_data == 0:
        raise ValueError("empty labelled partition")
    use_pde = cfg.nu > 0 and s1.n_pde > 0
    p0 = init if init is not None else init_params(cfg.layer_sizes(sys.n_x, obs.n_z), cfg.seed)

    def step_grad(params, idx, idx_pde):
        x_pde = s1.x_pde[idx_pde] if use_pde and idx_pde is not None and len(idx_pde) else None
        return physics_informed_loss(params, obs, sys, s1.x_data[idx], s1.z_data[idx], x_pde, cfg.nu)[1]

    def evaluate(params):
        total, data, pde = empirical_risk_s1(params, s1, obs, sys, cfg.nu)
        return {"total": total, "data": data, "pde": pde}

    return _run(p0, cfg, s1.n_data, s1.n_pde if use_pde else 0, step_grad, evaluate)


def train_inverse(s2: DatasetS2, cfg: TrainConfig, init: MlpParams | None = None):
    """Minimise the reconstruction risk over the inverse map ``z -> x``."""
    if len(s2) == 0:
        raise ValueError("empty dataset")
    n_z, n_x = s2.z.shape[1], s2.x.shape[1]
    p0 = init if init is not None else init_params(cfg.layer_sizes(n_z, n_x), cfg.seed)

    def step_grad(params, idx, _):
        out, _, cache = forward_tangent(params, s2.z[idx], None)
        g_out = (2.0 / len(idx)) * (out - s2.x[idx])
        return flatten_grads(backward(params, cache, g_out))

    def evaluate(params):
        r = empirical_risk_s2(params, s2)
        return {"total": r, "data": r, "pde": 0.0}

    return _run(p0, cfg, len(s2), 0, step_grad, evaluate)
