"""End-to-end commands: data generation, both training stages, simulation, evaluation.

Every command reads and writes files under ``cfg.output_dir`` and embeds the
resolved configuration in what it writes.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from . import io
from .bounds import (
    complexity_term,
    empirical_steady_state_error,
    estimate_ell_h,
    inverse_error_bound,
    lemma2_chain,
    steady_state_bound,
)
from .config import ConfigError, PipelineConfig
from .datagen import DatasetS1, DatasetS2, box, generate_s1, generate_s2, sample_box
from .estimation import metrics_report, rmse, simulate_observer, smape, z_error_envelope_check
from .nn import MlpParams, forward, lipschitz_upper_bound
from .observer import ObserverMatrices, build_observer
from .systems import NoiseSpec, SystemModel, make_system
from .training import empirical_risk_s1, empirical_risk_s2, pde_residual, train_forward, train_inverse

log = logging.getLogger(__name__)

S_DATA, S_PDE, S1_META = "s_data.csv", "s_pde.csv", "s1_meta.json"
S2_FILE, S2_META = "s2.csv", "s2_meta.json"
FORWARD_MODEL, FORWARD_REPORT = "forward_model.json", "forward_report.json"
INVERSE_MODEL, INVERSE_REPORT = "inverse_model.json", "inverse_report.json"
RUNS_DIR, RUNS_INDEX = "runs", "index.json"
METRICS, CERTIFICATE, ABLATION = "metrics.json", "certificate.json", "ablation.json"


class MissingInput(ConfigError):
    pass


def setup(cfg: PipelineConfig):
    sys = make_system(cfg.system, cfg.substeps, **cfg.system_params)
    obs = build_observer(sys.n_x, sys.n_y, cfg.observer.lambda_lo, cfg.observer.lambda_hi)
    return sys, obs


def _out(cfg: PipelineConfig) -> Path:
    return Path(cfg.output_dir)


def _need(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingInput(str(path), f"missing; run `{producer}` first")
    return path


# --- data -------------------------------------------------------------------


def build_s1(cfg: PipelineConfig, sys: SystemModel, obs: ObserverMatrices, seed: int | None = None) -> DatasetS1:
    dg = cfg.datagen
    return generate_s1(
        sys,
        obs,
        dg.p,
        dg.q,
        dg.T,
        dg.dt,
        cfg.observer.eps,
        box(dg.x_box, sys.n_x),
        box(dg.z_box, obs.n_z),
        dg.seed if seed is None else seed,
        dg.k_star_fraction,
    )


def cmd_generate_data(cfg: PipelineConfig) -> dict:
    sys, obs = setup(cfg)
    s1 = build_s1(cfg, sys, obs)
    out = _out(cfg)
    io.write_csv(out / S_DATA, io.names("x", sys.n_x) + io.names("z", obs.n_z), np.hstack([s1.x_data, s1.z_data]))
    io.write_csv(out / S_PDE, io.names("x", sys.n_x), s1.x_pde)
    meta = {
        "config": cfg.to_dict(),
        "seed": cfg.datagen.seed,
        "k_star": s1.k_star,
        "tau": s1.tau,
        "t_star_max": s1.t_star_max,
        "n_data": s1.n_data,
        "n_pde": s1.n_pde,
        "observer": obs.to_dict(),
    }
    io.write_json(out / S1_META, meta)
    log.info("S1: N_data=%d N_pde=%d k*=%d", s1.n_data, s1.n_pde, s1.k_star)
    return meta


def load_s1(cfg: PipelineConfig, sys: SystemModel, obs: ObserverMatrices) -> DatasetS1:
    out = _out(cfg)
    meta = io.read_json(_need(out / S1_META, "generate-data"))
    _, data = io.read_csv(_need(out / S_DATA, "generate-data"))
    _, pde = io.read_csv(_need(out / S_PDE, "generate-data"))
    if data.shape[1] != sys.n_x + obs.n_z:
        raise ConfigError("datagen", f"{S_DATA} has {data.shape[1]} columns, expected {sys.n_x + obs.n_z}")
    return DatasetS1(
        data[:, : sys.n_x],
        data[:, sys.n_x :],
        pde.reshape(-1, sys.n_x),
        meta["k_star"],
        meta["tau"],
        cfg.datagen.dt,
        meta["t_star_max"],
        np.empty((0, sys.n_x)),
        np.empty((0, obs.n_z)),
    )


# --- training -----------------------------------------------------------------


def forward_risks(theta: MlpParams, s1: DatasetS1, obs, sys, nu: float) -> dict:
    total, data, pde = empirical_risk_s1(theta, s1, obs, sys, nu)
    per_data = np.sum((forward(theta, s1.x_data) - s1.z_data) ** 2, axis=1)
    m = float(per_data.max())
    if s1.n_pde and nu > 0:
        m = max(m, nu * float(np.max(np.sum(pde_residual(theta, obs, sys, s1.x_pde) ** 2, axis=1))))
    return {"total": total, "data": data, "pde": pde, "max_sample_loss": m, "n": s1.n_data + s1.n_pde}


def inverse_risks(eta: MlpParams, s2: DatasetS2) -> dict:
    per = np.sum((s2.x - forward(eta, s2.z)) ** 2, axis=1)
    return {"r2": empirical_risk_s2(eta, s2), "max_sample_loss": float(per.max()), "n": len(s2)}


def _train_doc(report) -> dict:
    return {
        "best_epoch": report.best_epoch,
        "checksum": report.checksum,
        "initial": report.initial,
        "data_loss": report.data_loss,
        "pde_loss": report.pde_loss,
        "total_loss": report.total_loss,
    }


def cmd_train_forward(cfg: PipelineConfig) -> MlpParams:
    sys, obs = setup(cfg)
    s1 = load_s1(cfg, sys, obs)
    theta, report = train_forward(s1, obs, sys, cfg.forward)
    out = _out(cfg)
    extra = {"role": "forward", "risks": forward_risks(theta, s1, obs, sys, cfg.forward.nu), "train": _train_doc(report)}
    io.write_json(out / FORWARD_MODEL, io.model_document(theta, obs, cfg.to_dict(), extra))
    io.write_json(out / FORWARD_REPORT, report.to_dict())
    log.info("forward map trained in %.1f s (final total loss %.3g)", report.wall_time, report.total_loss[-1])
    return theta


def _s2_for(cfg, sys, theta: MlpParams, n_data: int, seed: int) -> DatasetS2:
    dg = cfg.datagen
    n2 = n_data if dg.n2 is None else dg.n2
    return generate_s2(theta, sys, n2, box(dg.x_box, sys.n_x), dg.s2_mode, dg.dt, dg.T, seed)


def cmd_train_inverse(cfg: PipelineConfig) -> MlpParams:
    sys, obs = setup(cfg)
    out = _out(cfg)
    theta, model_obs, doc = io.load_model(_need(out / FORWARD_MODEL, "train-forward"))
    if not model_obs.same_as(obs):
        raise ConfigError("observer", "forward model's observer block does not match the configuration")
    meta_path = out / S2_META
    n_data = io.read_json(_need(out / S1_META, "generate-data"))["n_data"]
    dg = cfg.datagen
    key = {
        "forward_checksum": theta.checksum(),
        "n2": n_data if dg.n2 is None else dg.n2,
        "mode": dg.s2_mode,
        "seed": dg.seed,
        "x_box": dg.x_box,
    }
    s2 = None
    if (out / S2_FILE).exists() and meta_path.exists():
        meta = io.read_json(meta_path)
        if all(meta.get(k) == v for k, v in key.items()):
            _, a = io.read_csv(out / S2_FILE)
            s2 = DatasetS2(a[:, : obs.n_z], a[:, obs.n_z :])
    if s2 is None:
        s2 = _s2_for(cfg, sys, theta, n_data, dg.seed)
        io.write_csv(out / S2_FILE, io.names("z", obs.n_z) + io.names("x", sys.n_x), np.hstack([s2.z, s2.x]))
        io.write_json(meta_path, {"config": cfg.to_dict(), **key})
    eta, report = train_inverse(s2, cfg.inverse)
    extra = {
        "role": "inverse",
        "risks": inverse_risks(eta, s2),
        "lipschitz_upper_bound": lipschitz_upper_bound(eta),
        "forward_checksum": theta.checksum(),
        "forward_risks": doc["risks"],
        "forward_n_params": theta.n_params,
        "train": _train_doc(report),
    }
    io.write_json(out / INVERSE_MODEL, io.model_document(eta, obs, cfg.to_dict(), extra))
    io.write_json(out / INVERSE_REPORT, report.to_dict())
    log.info("inverse map trained in %.1f s (final loss %.3g)", report.wall_time, report.total_loss[-1])
    return eta


# --- simulation and evaluation ---------------------------------------------------


def test_initial_states(cfg: PipelineConfig, n_x: int, half_width: float, n: int | None = None):
    ev = cfg.evaluation
    return sample_box(ev.n_test if n is None else n, *box(half_width, n_x), seed=[ev.test_seed])


def simulate_many(cfg, sys, obs, eta, x0s, v_std=None, w_std=None, theta=None):
    """One run per initial state; run ``i`` uses noise seed ``noise_seed + i``.

    With a forward map ``theta`` the reference filter starts at ``theta(x0)``.
    """
    ev = cfg.evaluation
    v_std = ev.v_std if v_std is None else v_std
    w_std = ev.w_std if w_std is None else w_std
    runs = []
    for i, x0 in enumerate(x0s):
        noise = NoiseSpec.make(sys, w_std, v_std, seed=ev.noise_seed + i)
        z_ref0 = None if theta is None else forward(theta, x0)
        runs.append(simulate_observer(sys, obs, eta, x0, noise, ev.T, ev.dt, z_ref0=z_ref0))
    return runs


def cmd_simulate(cfg: PipelineConfig, emit_plot_data: bool = False, domain: str = "test") -> list:
    sys, obs = setup(cfg)
    out = _out(cfg)
    eta, model_obs, _ = io.load_model(_need(out / INVERSE_MODEL, "train-inverse"))
    if not model_obs.same_as(obs):
        raise ConfigError("observer", "inverse model's observer block does not match the configuration")
    theta, _, _ = io.load_model(_need(out / FORWARD_MODEL, "train-forward"))
    half = cfg.evaluation.test_box if domain == "test" else cfg.evaluation.ood_box
    x0s = test_initial_states(cfg, sys.n_x, half)
    runs = simulate_many(cfg, sys, obs, eta, x0s, theta=theta)
    index = []
    for i, (x0, run) in enumerate(zip(x0s, runs)):
        name = f"run_{i:03d}.csv"
        io.write_run(out / RUNS_DIR / name, run)
        index.append({"file": name, "x0": x0, "wbar": run.wbar, "vbar": run.vbar, "noise_seed": cfg.evaluation.noise_seed + i})
    io.write_json(out / RUNS_DIR / RUNS_INDEX, {"config": cfg.to_dict(), "domain": domain, "box": half, "runs": index})
    if emit_plot_data:
        write_plot_data(out / "plots", runs[0])
    return runs


def write_plot_data(folder: Path, run) -> None:
    """One CSV per state component: time, true state, estimate."""
    for j in range(run.x.shape[1]):
        io.write_csv(folder / f"fig2_x{j + 1}.csv", ["t", f"x{j + 1}", f"xhat{j + 1}"], np.column_stack([run.times, run.x[:, j], run.x_hat[:, j]]))


def load_runs(cfg: PipelineConfig, sys, obs) -> list:
    folder = _out(cfg) / RUNS_DIR
    index = io.read_json(_need(folder / RUNS_INDEX, "simulate"))
    return [io.read_run(folder / r["file"], sys.n_x, obs.n_z, sys.n_y, r["wbar"], r["vbar"]) for r in index["runs"]]


def _complexity(M, d, N, delta):
    try:
        return complexity_term(M, d, N, delta), None
    except ValueError as exc:
        return None, str(exc)


def certificate(cfg: PipelineConfig, sys, obs, eta: MlpParams, eta_doc: dict, runs: list) -> dict:
    """Every bound input, every bound, and every empirical check with its margin."""
    ev = cfg.evaluation
    ell_eta = lipschitz_upper_bound(eta)
    ell_h = estimate_ell_h(sys, *box(ev.test_box, sys.n_x), ev.ell_h_samples, seed=[ev.test_seed, 1])
    wbar = max(r.wbar for r in runs)
    vbar = max(r.vbar for r in runs)
    psi_wbar = wbar  # psi = identity
    fr, ir = eta_doc["forward_risks"], eta_doc["risks"]
    d_theta = ev.d_theta or eta_doc["forward_n_params"]
    d_eta = ev.d_eta or eta.n_params
    c_theta, why_theta = _complexity(fr["max_sample_loss"], d_theta, fr["n"], ev.delta)
    c_eta, why_eta = _complexity(ir["max_sample_loss"], d_eta, ir["n"], ev.delta)

    r_plugin = lemma2_chain(ir["r2"], ell_eta, fr["data"])
    r_generalization = None
    if c_theta is not None and c_eta is not None:
        r_generalization = inverse_error_bound(ir["r2"], c_eta, ell_eta, fr["total"], c_theta)

    common = dict(ell_eta=ell_eta, cond_V=obs.cond_V, lambda_min=obs.lambda_min, norm_B=obs.norm_B, ell_h=ell_h, psi_wbar=psi_wbar, n_y=sys.n_y, vbar=vbar)
    ss_plugin = steady_state_bound(r_plugin, **common)
    ss_general = None if r_generalization is None else steady_state_bound(r_generalization, **common)

    tail = cfg.tail_cutoff
    emp = empirical_steady_state_error(runs, tail)
    envelopes = [z_error_envelope_check(r, obs, ell_h, psi_wbar, vbar) for r in runs]
    env_margin = min(e["min_margin"] for e in envelopes)
    checks = {
        "steady_state": {
            "empirical": emp,
            "bound": ss_plugin,
            "margin": ss_plugin - emp,
            "passed": bool(emp <= ss_plugin),
            "theorem": "noise-free (2 R)" if vbar == 0 and wbar == 0 else "noisy (ISS)",
        },
        "z_envelope": {"min_margin": env_margin, "passed": bool(env_margin >= 0), "n_runs": len(runs)},
    }
    if ss_general is not None:
        checks["steady_state_generalization"] = {"bound": ss_general, "margin": ss_general - emp, "passed": bool(emp <= ss_general)}
    return {
        "config": cfg.to_dict(),
        "assumptions": {
            "psi": "identity (no uncertainty-effect function supplied)",
            "pseudo_dimension": "user-supplied; defaults to parameter count",
            "steady_state_expectation": f"time average over t >= {tail} across runs",
            "noise_bounds": "empirical sup-norm of each realisation",
        },
        "inputs": {
            "ell_eta": ell_eta,
            "ell_h": ell_h,
            "cond_V": obs.cond_V,
            "lambda_min": obs.lambda_min,
            "norm_B": obs.norm_B,
            "n_y": sys.n_y,
            "wbar": wbar,
            "vbar": vbar,
            "psi_wbar": psi_wbar,
            "delta": ev.delta,
            "emp_r1": fr["total"],
            "emp_forward_data": fr["data"],
            "emp_r2": ir["r2"],
            "M_theta": fr["max_sample_loss"],
            "M_eta": ir["max_sample_loss"],
            "N1": fr["n"],
            "N2": ir["n"],
            "d_theta": d_theta,
            "d_eta": d_eta,
        },
        "bounds": {
            "complexity_theta": c_theta,
            "complexity_theta_unavailable": why_theta,
            "complexity_eta": c_eta,
            "complexity_eta_unavailable": why_eta,
            "inverse_error_plugin": r_plugin,
            "inverse_error_generalization": r_generalization,
            "steady_state_plugin": ss_plugin,
            "steady_state_generalization": ss_general,
        },
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }


def cmd_bounds(cfg: PipelineConfig) -> dict:
    sys, obs = setup(cfg)
    out = _out(cfg)
    eta, _, doc = io.load_model(_need(out / INVERSE_MODEL, "train-inverse"))
    cert = certificate(cfg, sys, obs, eta, doc, load_runs(cfg, sys, obs))
    io.write_json(out / CERTIFICATE, cert)
    return cert


def cmd_evaluate(cfg: PipelineConfig) -> tuple:
    sys, obs = setup(cfg)
    out = _out(cfg)
    runs = load_runs(cfg, sys, obs)
    metrics = metrics_report(runs, cfg.evaluation.t_cutoff, cfg.tail_cutoff)
    metrics["config"] = cfg.to_dict()
    metrics["horizon"] = {"T": cfg.evaluation.T, "dt": cfg.evaluation.dt}
    io.write_json(out / METRICS, metrics)
    cert = cmd_bounds(cfg)
    return metrics, cert


# --- ablation ----------------------------------------------------------------


def train_pair(cfg: PipelineConfig, sys, obs, s1: DatasetS1, nu: float, seed: int):
    fwd = _replace(cfg.forward, nu=nu, seed=seed)
    inv = _replace(cfg.inverse, seed=seed)
    theta, _ = train_forward(s1, obs, sys, fwd)
    s2 = _s2_for(cfg, sys, theta, s1.n_data, seed)
    eta, _ = train_inverse(s2, inv)
    return theta, eta


def _replace(tc, **kw):
    from dataclasses import replace

    return replace(tc, **kw)


def cmd_ablate(cfg: PipelineConfig, nus=(1.0, 0.0)) -> dict:
    """Physics-informed vs purely supervised forward map, shared seeds and datasets."""
    sys, obs = setup(cfg)
    ev = cfg.evaluation
    domains = {"in_domain": ev.test_box, "out_of_domain": ev.ood_box}
    x0 = {k: test_initial_states(cfg, sys.n_x, h) for k, h in domains.items()}
    per_seed = []
    for seed in cfg.ablation_seeds:
        s1 = build_s1(cfg, sys, obs, seed)
        row = {"seed": seed}
        for nu in nus:
            _, eta = train_pair(cfg, sys, obs, s1, nu, seed)
            for dom in domains:
                runs = simulate_many(cfg, sys, obs, eta, x0[dom], v_std=0.0, w_std=0.0)
                row[f"nu={nu:g}/{dom}"] = {"rmse": rmse(runs), "smape": smape(runs)}
            log.info("ablation seed %d nu=%g done", seed, nu)
        per_seed.append(row)
    summary = {}
    for nu in nus:
        for dom in domains:
            key = f"nu={nu:g}/{dom}"
            summary[key] = {m: float(np.mean([r[key][m] for r in per_seed])) for m in ("rmse", "smape")}
    result = {"config": cfg.to_dict(), "per_seed": per_seed, "mean": summary, "noise": "noise-free test runs"}
    io.write_json(_out(cfg) / ABLATION, result)
    return result


def run_all(cfg: PipelineConfig, emit_plot_data: bool = False) -> dict:
    cmd_generate_data(cfg)
    cmd_train_forward(cfg)
    cmd_train_inverse(cfg)
    cmd_simulate(cfg, emit_plot_data)
    metrics, cert = cmd_evaluate(cfg)
    return {"metrics": metrics, "certificate": cert}
