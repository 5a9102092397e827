"""Pipeline configuration: per-system defaults, JSON file, CLI overrides.

Precedence is CLI > file > per-system defaults. ``KKL_SEED`` in the
environment overrides every seed.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import asdict, dataclass, field

from .systems import DEFAULT_PARAMS, STATE_DIMS, SUBSTEPS, SYSTEM_NAMES
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid or incomplete configuration; ``path`` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


# hidden layers, layer size, number of labelled trajectories
NETWORK_SIZES = {
    "duffing": (3, 150, 100),
    "vanderpol": (2, 350, 100),
    "rossler": (3, 250, 200),
    "lorenz": (2, 350, 200),
}
MEASUREMENT_STD = {"duffing": 0.1, "vanderpol": 0.1, "rossler": 0.1, "lorenz": 2.0}


@dataclass
class ObserverConfig:
    lambda_lo: float = -2.0
    lambda_hi: float = -0.5
    eps: float = 1e-4


@dataclass
class DatagenConfig:
    p: int = 100
    q: int = 100
    T: float = 50.0
    dt: float = 0.1
    x_box: float = 1.0  # half-width of the initial-state box
    z_box: float = 5e-4  # half-width of the filter initial-state box
    k_star_fraction: float | None = 0.1
    seed: int = 0
    n2: int | None = None  # defaults to N_data
    s2_mode: str = "iid_points"


@dataclass
class EvalConfig:
    n_test: int = 100
    test_box: float = 1.0
    ood_box: float = 3.0
    v_std: float = 0.1
    w_std: float = 0.0
    noise_seed: int = 1000
    test_seed: int = 2000
    T: float = 50.0
    dt: float = 0.1
    t_cutoff: float = 0.0
    tail_cutoff: float | None = None  # defaults to T / 2
    delta: float = 0.05
    d_theta: int | None = None  # defaults to parameter count
    d_eta: int | None = None
    ell_h_samples: int = 1000


@dataclass
class PipelineConfig:
    system: str
    system_params: dict = field(default_factory=dict)
    substeps: int = 1  # RK4 steps per sample interval
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    datagen: DatagenConfig = field(default_factory=DatagenConfig)
    forward: TrainConfig = field(default_factory=TrainConfig)
    inverse: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    ablation_seeds: list = field(default_factory=lambda: [0, 1, 2])
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def tail_cutoff(self) -> float:
        ev = self.evaluation
        return ev.T / 2.0 if ev.tail_cutoff is None else ev.tail_cutoff


# Van der Pol, Rossler and Lorenz settle on attractors that leave the
# initial-state box, so the inverse map is fitted along trajectories there.
S2_MODE = {"duffing": "iid_points", "vanderpol": "trajectories", "rossler": "trajectories", "lorenz": "trajectories"}


def system_defaults(name: str) -> dict:
    if name not in SYSTEM_NAMES:
        raise ConfigError("system", f"unknown system {name!r}; expected one of {list(SYSTEM_NAMES)}")
    hidden, size, p = NETWORK_SIZES[name]
    net = {"hidden_layers": hidden, "layer_size": size, "learning_rate": 1e-3, "nu": 1.0, "epochs": 15}
    return {
        "system": name,
        "system_params": dict(DEFAULT_PARAMS[name]),
        "substeps": SUBSTEPS[name],
        "datagen": {"p": p, "q": p, "s2_mode": S2_MODE[name]},
        "forward": dict(net),
        "inverse": dict(net),
        "evaluation": {"v_std": MEASUREMENT_STD[name]},
    }


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0], "unknown field")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path or "<root>", str(exc)) from exc


def set_dotted(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def resolve(file_cfg: dict | None = None, overrides: dict | None = None, env=None) -> PipelineConfig:
    """Resolve a configuration from defaults, a parsed JSON file and dotted overrides."""
    env = os.environ if env is None else env
    raw = _merge(file_cfg or {}, {})
    for key, value in (overrides or {}).items():
        set_dotted(raw, key, value)
    name = raw.get("system")
    if not name:
        raise ConfigError("system", "missing system name")
    merged = _merge(system_defaults(name), raw)
    unknown_params = set(merged["system_params"]) - set(DEFAULT_PARAMS[name])
    if unknown_params:
        raise ConfigError(f"system_params.{sorted(unknown_params)[0]}", "unknown parameter")

    sub = {
        "observer": ObserverConfig,
        "datagen": DatagenConfig,
        "forward": TrainConfig,
        "inverse": TrainConfig,
        "evaluation": EvalConfig,
    }
    kwargs = {k: v for k, v in merged.items() if k not in sub}
    for key, cls in sub.items():
        kwargs[key] = _build(cls, merged.get(key, {}), key)
    cfg = _build(PipelineConfig, kwargs, "")

    seed = env.get("KKL_SEED")
    if seed not in (None, ""):
        try:
            s = int(seed)
        except ValueError as exc:
            raise ConfigError("KKL_SEED", "must be an integer") from exc
        cfg.datagen.seed = s
        cfg.forward.seed = s
        cfg.inverse.seed = s
        cfg.evaluation.noise_seed = s + 1000
        cfg.evaluation.test_seed = s + 2000
        cfg.ablation_seeds = [s, s + 1, s + 2]
    validate(cfg)
    return cfg


def validate(cfg: PipelineConfig) -> None:
    ob, dg, ev = cfg.observer, cfg.datagen, cfg.evaluation
    if not ob.lambda_lo < ob.lambda_hi < 0:
        raise ConfigError("observer.lambda_hi", "need lambda_lo < lambda_hi < 0")
    if cfg.substeps < 1:
        raise ConfigError("substeps", "must be >= 1")
    if ob.eps <= 0:
        raise ConfigError("observer.eps", "must be positive")
    if dg.p < 1 or dg.q < 0:
        raise ConfigError("datagen.p", "need p >= 1 and q >= 0")
    if dg.dt <= 0 or dg.T < dg.dt:
        raise ConfigError("datagen.T", "need T >= dt > 0")
    if dg.x_box <= 0 or dg.z_box <= 0:
        raise ConfigError("datagen.x_box", "box half-widths must be positive")
    if dg.s2_mode not in ("iid_points", "trajectories"):
        raise ConfigError("datagen.s2_mode", f"unknown mode {dg.s2_mode!r}")
    if ev.n_test < 1:
        raise ConfigError("evaluation.n_test", "must be >= 1")
    if ev.v_std < 0 or ev.w_std < 0:
        raise ConfigError("evaluation.v_std", "noise std must be nonnegative")
    if not 0 < ev.delta < 1:
        raise ConfigError("evaluation.delta", "must lie in (0, 1)")
    if cfg.tail_cutoff >= ev.T:
        raise ConfigError("evaluation.tail_cutoff", "must lie before T")


def n_x_of(cfg: PipelineConfig) -> int:
    return STATE_DIMS[cfg.system]
