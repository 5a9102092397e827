"""Small tanh MLPs with exact forward-mode and reverse-mode derivatives.

Weights follow the ``y = W a + b`` convention, so ``W`` has shape
``(n_out, n_in)``. Batched inputs are rows: ``x`` of shape ``(N, n_in)``.

The PDE residual needs ``J(x) v`` for a direction ``v = f(x)``, and its
parameter gradient needs derivatives of that Jacobian-vector product. Both
are computed here: :func:`forward_tangent` pushes a tangent through the
network alongside the primal pass, and :func:`backward` runs reverse mode
over that joint graph.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class MlpParams:
    layer_sizes: tuple
    weights: list  # per layer (n_out, n_in)
    biases: list  # per layer (n_out,)
    activation: str = "tanh"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of weight/bias arrays inconsistent with layer_sizes")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            n_in, n_out = self.layer_sizes[i], self.layer_sizes[i + 1]
            if W.shape != (n_out, n_in) or b.shape != (n_out,):
                raise ValueError(f"layer {i}: expected W {(n_out, n_in)} and b {(n_out,)}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def arrays(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, theta: np.ndarray) -> "MlpParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError("flat parameter vector has the wrong length")
        Ws, bs, i = [], [], 0
        for W, b in zip(self.weights, self.biases):
            Ws.append(theta[i : i + W.size].reshape(W.shape))
            i += W.size
            bs.append(theta[i : i + b.size].copy())
            i += b.size
        return MlpParams(self.layer_sizes, [W.copy() for W in Ws], bs, self.activation)

    def copy(self) -> "MlpParams":
        return self.with_flat(self.flat())

    def checksum(self) -> str:
        return hashlib.sha256(self.flat().tobytes()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        return cls(
            tuple(d["layer_sizes"]),
            [np.asarray(W, dtype=float).reshape(d["layer_sizes"][i + 1], d["layer_sizes"][i]) for i, W in enumerate(d["weights"])],
            [np.asarray(b, dtype=float) for b in d["biases"]],
            d.get("activation", "tanh"),
        )


def init_params(layer_sizes, seed: int) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError("layer_sizes needs at least input and output sizes, all positive")
    rng = np.random.default_rng(seed)
    Ws, bs = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        Ws.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        bs.append(np.zeros(n_out))
    return MlpParams(sizes, Ws, bs)


def zeros_like(p: MlpParams) -> MlpParams:
    return p.with_flat(np.zeros(p.n_params))


def _as_batch(p: MlpParams, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != p.n_in:
        raise ValueError(f"network expects input dimension {p.n_in}, got {x.shape[1]}")
    return x, single


def forward(p: MlpParams, x) -> np.ndarray:
    """Evaluate the network; hidden layers use tanh, the last layer is affine."""
    a, single = _as_batch(p, x)
    L = len(p.weights)
    for i, (W, b) in enumerate(zip(p.weights, p.biases)):
        a = a @ W.T + b
        if i < L - 1:
            a = np.tanh(a)
    return a[0] if single else a


def forward_tangent(p: MlpParams, x, v):
    """Primal output, directional derivative ``J(x) v``, and a cache for :func:`backward`.

    With ``v=None`` only the primal pass runs and the tangent output is ``None``.
    """
    a, single = _as_batch(p, x)
    da = None
    if v is not None:
        da = np.atleast_2d(np.asarray(v, dtype=float))
        if da.shape != a.shape:
            raise ValueError("tangent must have the same shape as x")
    acts, tans, pre_tans = [a], [da], []
    L = len(p.weights)
    for i, (W, b) in enumerate(zip(p.weights, p.biases)):
        s = a @ W.T + b
        ds = None if da is None else da @ W.T
        if i < L - 1:
            a = np.tanh(s)
            da = None if ds is None else (1.0 - a * a) * ds
            acts.append(a)
            tans.append(da)
            pre_tans.append(ds)
        else:
            a, da = s, ds
    cache = (acts, tans, pre_tans)
    if single:
        return a[0], (None if da is None else da[0]), cache
    return a, da, cache


def input_jacobian(p: MlpParams, x) -> np.ndarray:
    """Exact Jacobian ``d out / d in`` by forward mode over all input directions.

    Returns ``(n_out, n_in)`` for one point or ``(N, n_out, n_in)`` for a batch.
    """
    x2, single = _as_batch(p, x)
    N, n = x2.shape
    # one tangent per coordinate: batch of N * n rows
    xs = np.repeat(x2, n, axis=0)
    vs = np.tile(np.eye(n), (N, 1))
    _, jv, _ = forward_tangent(p, xs, vs)
    jac = jv.reshape(N, n, p.n_out).transpose(0, 2, 1)
    return jac[0] if single else jac


def backward(p: MlpParams, cache, g_out, g_tan=None) -> list:
    """Reverse mode over the primal+tangent graph.

    ``g_out`` and ``g_tan`` are the loss gradients with respect to the
    network output and the tangent output. Returns gradients in the order of
    :meth:`MlpParams.arrays` (``W0, b0, W1, b1, ...``).
    """
    acts, tans, pre_tans = cache
    g_a = np.atleast_2d(np.asarray(g_out, dtype=float))
    g_da = None if g_tan is None else np.atleast_2d(np.asarray(g_tan, dtype=float))
    L = len(p.weights)
    grads = [None] * (2 * L)

    # output layer: out = W a + b, tangent = W da
    W = p.weights[-1]
    a_prev, da_prev = acts[L - 1], tans[L - 1]
    gW = g_a.T @ a_prev
    if g_da is not None:
        gW += g_da.T @ da_prev
    grads[2 * L - 2] = gW
    grads[2 * L - 1] = g_a.sum(axis=0)
    g_a = g_a @ W
    if g_da is not None:
        g_da = g_da @ W

    for i in range(L - 2, -1, -1):
        a, ds = acts[i + 1], pre_tans[i]
        d = 1.0 - a * a
        if g_da is not None:
            # da = d * ds  with  d = 1 - tanh(s)^2,  dd/ds = -2 a d
            g_ds = g_da * d
            g_a = g_a + g_da * ds * (-2.0 * a)
        g_s = g_a * d
        a_prev, da_prev = acts[i], tans[i]
        gW = g_s.T @ a_prev
        if g_da is not None:
            gW += g_ds.T @ da_prev
        grads[2 * i] = gW
        grads[2 * i + 1] = g_s.sum(axis=0)
        if i > 0:
            W = p.weights[i]
            g_a = g_s @ W
            if g_da is not None:
                g_da = g_ds @ W
    return grads


def flatten_grads(grads) -> np.ndarray:
    return np.concatenate([g.ravel() for g in grads])


def loss_gradient(p: MlpParams, x, v, loss):
    """Value and flat parameter gradient of ``loss(out, tangent)``.

    ``loss`` returns ``(value, d value / d out, d value / d tangent)``.
    With ``v=None`` the tangent is ``None`` and the third item must be ``None``.
    """
    out, tan, cache = forward_tangent(p, x, v)
    value, g_out, g_tan = loss(out, tan)
    if not np.isfinite(value):
        raise FloatingPointError("loss is not finite")
    return float(value), flatten_grads(backward(p, cache, g_out, g_tan))


def spectral_norm(W: np.ndarray, iters: int = 100, tol: float = 1e-9) -> float:
    """Largest singular value by power iteration on ``W^T W``.

    Falls back to an SVD when the iteration has not settled to ``tol``
    (power iteration approaches the norm from below).
    """
    W = np.asarray(W, dtype=float)
    if not np.any(W):
        return 0.0
    v = np.ones(W.shape[1]) / np.sqrt(W.shape[1])
    sigma = 0.0
    converged = False
    for _ in range(iters):
        u = W @ v
        w = W.T @ u
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            break
        v = w / nrm
        new = float(np.sqrt(nrm))
        if abs(new - sigma) <= tol * new:
            sigma, converged = new, True
            break
        sigma = new
    if not converged:
        sigma = float(np.linalg.norm(W, 2))
    return sigma


def lipschitz_upper_bound(p: MlpParams) -> float:
    """Product of layer spectral norms (tanh is 1-Lipschitz)."""
    out = 1.0
    for W in p.weights:
        out *= spectral_norm(W)
    return out
