"""Config-driven experiment definitions shared by the CLI and the tests.

An experiment config is a JSON document validated here against the module
preconditions before any computation runs.  Each kind writes its own set of
CSV/JSON outputs into `<out_dir>/<name>/` and returns a summary dict.
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np

from . import analysis, manifolds, slowfast_maps
from .errors import ConfigurationError, DomainError
from .integrator import IntegratorOptions, integrate
from .models import AfoParams, PoolParams, afo_system, pool_system
from .signals import Constant, SignalSpec, lorenz_trace, zero_crossings

EXPERIMENT_KINDS = ("simulate", "pool", "predict", "manifold", "freqresp",
                    "syncregion", "spectrogram")


def _grid(value, what):
    """Accept either an explicit list or {"linspace"/"logspace": [a, b, n]}."""
    if isinstance(value, dict):
        if set(value) == {"linspace"}:
            a, b, n = value["linspace"]
            return np.linspace(float(a), float(b), int(n))
        if set(value) == {"logspace"}:
            a, b, n = value["logspace"]
            return np.logspace(float(a), float(b), int(n))
        raise ConfigurationError(f"{what}: expected a list or linspace/logspace spec")
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigurationError(f"{what}: expected a non-empty 1-d grid")
    return arr


def _require(cfg, key, what="config"):
    if key not in cfg:
        raise ConfigurationError(f"{what}: missing required field {key!r}")
    return cfg[key]


def _positive(value, what):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{what} must be a number") from None
    if not (v > 0 and math.isfinite(v)):
        raise ConfigurationError(f"{what} must be positive and finite")
    return v


def build_signal(cfg: dict) -> SignalSpec:
    """Materialize the input signal from `signal` terms and/or the
    `signal_generator` directive (currently: a centered Lorenz z trace)."""
    spec = None
    if "signal" in cfg and cfg["signal"] is not None:
        spec = SignalSpec.from_json_dict(cfg["signal"])
    if "signal_generator" in cfg and cfg["signal_generator"] is not None:
        g = dict(cfg["signal_generator"])
        kind = g.pop("kind", None)
        if kind != "lorenz_z":
            raise ConfigurationError(f"unknown signal generator {kind!r}")
        t1 = _positive(g.pop("t1", 60.0), "signal_generator.t1")
        offset = float(g.pop("offset", 0.0))
        tol = float(g.pop("tol", 1e-9))
        discard = float(g.pop("discard", 10.0))
        init = tuple(g.pop("init", (-8.0, 8.0, 27.0)))
        if g:
            raise ConfigurationError(f"unknown signal_generator fields: {sorted(g)}")
        trace = lorenz_trace(t1, tol=tol, init=init, discard=discard)
        gen = SignalSpec([trace] + ([Constant(offset)] if offset else []))
        spec = gen if spec is None else spec + gen
    if spec is None:
        raise ConfigurationError("config needs `signal` and/or `signal_generator`")
    return spec


def _integrator_options(cfg: dict, signal: SignalSpec | None, horizon: float,
                        default_output_step: float = 1e-3) -> IntegratorOptions:
    sub = dict(cfg.get("integrator", {}))
    max_step = sub.pop("max_step", None)
    if max_step is None and signal is not None:
        bound = signal.frequency_bound(0.0, horizon)
        if bound > 0:
            max_step = math.pi / (50.0 * bound)
    kwargs = dict(
        rel_tol=float(sub.pop("rel_tol", 1e-9)),
        abs_tol=float(sub.pop("abs_tol", 1e-11)),
        output_step=float(sub.pop("output_step", default_output_step)),
        event_time_tol=float(sub.pop("event_time_tol", 1e-9)),
        initial_step=float(sub.pop("initial_step", 0.0)),
    )
    if max_step is not None:
        kwargs["max_step"] = float(max_step)
    if sub:
        raise ConfigurationError(f"unknown integrator options: {sorted(sub)}")
    try:
        return IntegratorOptions(**kwargs)
    except DomainError as exc:
        raise ConfigurationError(str(exc)) from exc


def _initial_phase(value, signal: SignalSpec) -> float:
    if value == "auto":
        # start on an attracting branch: phi = 0 needs F(0) > 0
        return 0.0 if signal.eval(0.0) > 0 else math.pi
    return float(value)


def _write_summary(out: Path, summary: dict):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)


def run_simulate(cfg: dict, out: Path, threads=None) -> dict:
    signal = build_signal(cfg)
    pars = _require(cfg, "params")
    lam = _positive(_require(pars, "lambda", "params"), "lambda")
    K = _positive(_require(pars, "K", "params"), "K")
    horizon = _positive(_require(cfg, "horizon"), "horizon")
    init = _require(cfg, "initial")
    omega0 = float(_require(init, "omega", "initial"))
    phi0 = _initial_phase(init.get("phi", "auto"), signal)
    opts = _integrator_options(cfg, signal, horizon)
    want_predict = bool(cfg.get("predict", True))

    traj = integrate(afo_system(AfoParams(lam, K), signal),
                     np.array([phi0, omega0]), 0.0, horizon, opts,
                     event_signals=[("input", signal)])
    traj.to_csv(out / "trajectory.csv")
    traj.events_to_csv(out / "events.csv")
    report = analysis.fit_convergence(traj, lam)
    summary = {
        "lambda_omega_final": report.omega_final,
        "converged": report.converged,
        "fitted_rate": report.fitted_rate,
        "fit_r2": report.fit_r2,
        "ripple_amplitude": report.ripple_amplitude,
        "n_events": len(traj.events),
        "n_steps": traj.stats["n_steps"],
    }
    if want_predict and len(traj.events):
        crossings = zero_crossings(
            signal, 0.0, horizon,
            omega_max_hint=signal.frequency_bound(0.0, horizon))
        pred = slowfast_maps.predict_sequence(omega0, crossings, lam)
        pred.to_csv(out / "prediction.csv")
        comp = analysis.compare_maps(traj, pred, K)
        comp.to_csv(out / "map_comparison.csv")
        summary["map_max_error"] = comp.max_error
        summary["map_mean_error"] = comp.mean_error
    return summary


def _pool_initial(init: dict, n: int):
    phi_spec = init.get("phi", "spread")
    if phi_spec == "spread":
        phi = 2.0 * math.pi * np.arange(n) / n
    else:
        phi = np.atleast_1d(np.asarray(phi_spec, dtype=float))
    omega_spec = _require(init, "omega", "initial")
    if np.isscalar(omega_spec):
        omega = np.full(n, float(omega_spec))
    else:
        omega = _grid(omega_spec, "initial.omega")
    alpha_spec = init.get("alpha", 0.0)
    if np.isscalar(alpha_spec):
        alpha = np.full(n, float(alpha_spec))
    else:
        alpha = np.asarray(alpha_spec, dtype=float)
    if not (phi.size == n and omega.size == n and alpha.size == n):
        raise ConfigurationError(f"initial arrays must have length {n}")
    return np.concatenate([phi, omega, alpha])


def _pool_run(cfg: dict, out: Path):
    signal = build_signal(cfg)
    pars = _require(cfg, "params")
    lam = _positive(_require(pars, "lambda", "params"), "lambda")
    K = _positive(_require(pars, "K", "params"), "K")
    eta = _positive(_require(pars, "eta", "params"), "eta")
    n = int(_require(pars, "n_oscillators", "params"))
    horizon = _positive(_require(cfg, "horizon"), "horizon")
    y0 = _pool_initial(_require(cfg, "initial"), n)
    opts = _integrator_options(cfg, signal, horizon)

    traj = integrate(pool_system(PoolParams(n, lam, K, eta), signal),
                     y0, 0.0, horizon, opts)
    traj.to_csv(out / "trajectory.csv")
    err = manifolds.reconstruction_error(traj, signal)
    with open(out / "recon_error.csv", "w") as f:
        f.write("t,error\n")
        for t, e in zip(traj.times, err):
            f.write(f"{t:.17g},{e:.17g}\n")
    tail = traj.times >= traj.t1 - max(1.0 / lam, 0.05 * horizon)
    lam_omega = [lam * float(traj.column(f"omega_{i}")[tail].mean()) for i in range(n)]
    alate = [float(traj.column(f"alpha_{i}")[tail].mean()) for i in range(n)]
    summary = {
        "lambda_omega_final": lam_omega,
        "alpha_final": alate,
        "recon_mse_tail": float(np.mean(err[tail] ** 2)),
        "n_steps": traj.stats["n_steps"],
    }
    return traj, signal, lam, summary


def run_pool(cfg: dict, out: Path, threads=None) -> dict:
    _, _, _, summary = _pool_run(cfg, out)
    return summary


def run_predict(cfg: dict, out: Path, threads=None) -> dict:
    signal = build_signal(cfg)
    pars = _require(cfg, "params")
    lam = _positive(_require(pars, "lambda", "params"), "lambda")
    horizon = _positive(_require(cfg, "horizon"), "horizon")
    omega0 = float(_require(_require(cfg, "initial"), "omega", "initial"))
    crossings = zero_crossings(signal, 0.0, horizon,
                               omega_max_hint=signal.frequency_bound(0.0, horizon))
    pred = slowfast_maps.predict_sequence(omega0, crossings, lam)
    pred.to_csv(out / "prediction.csv")
    return {"n_events": len(pred),
            "lambda_omega_last_plus": lam * float(pred.omega_plus[-1]),
            "lambda_omega_last_minus": lam * float(pred.omega_minus[-1])}


def run_manifold(cfg: dict, out: Path, threads=None) -> dict:
    pars = _require(cfg, "params")
    lam = _positive(_require(pars, "lambda", "params"), "lambda")
    eps = _positive(_require(pars, "epsilon", "params"), "epsilon")
    grid = _require(cfg, "grid")
    ks = [int(k) for k in _require(grid, "k", "grid")]
    Omega = float(_require(grid, "Omega", "grid"))
    F_values = _grid(_require(grid, "F", "grid"), "grid.F")
    manifolds.sample_surface(ks, Omega, F_values, lam, eps, out / "manifold_grid.csv")
    return {"n_branches": len(ks), "n_F": int(F_values.size)}


def run_freqresp(cfg: dict, out: Path, threads=None) -> dict:
    pars = _require(cfg, "params")
    lam = _positive(_require(pars, "lambda", "params"), "lambda")
    K = _positive(_require(pars, "K", "params"), "K")
    omega_F = _positive(_require(cfg, "omega_F"), "omega_F")
    omega_C = _grid(_require(cfg, "omega_C"), "omega_C")
    points = analysis.frequency_response(lam, omega_F, omega_C, K)
    analysis.freq_response_to_csv(points, out / "freqresp.csv")
    at_cut = min(points, key=lambda p: abs(p.mod_freq - lam))
    return {
        "omega_F": omega_F,
        "magnitude_db_at_lambda": at_cut.magnitude_db,
        "phase_deg_at_lambda": math.degrees(at_cut.phase),
        "n_points": len(points),
    }


def run_syncregion(cfg: dict, out: Path, threads=None) -> dict:
    signal = build_signal(cfg)
    pars = _require(cfg, "params")
    lam = _positive(_require(pars, "lambda", "params"), "lambda")
    K_grid = _grid(_require(cfg, "K_grid"), "K_grid")
    omega0_grid = _grid(_require(cfg, "omega0_grid"), "omega0_grid")
    horizon = cfg.get("horizon")
    result = analysis.sync_region_sweep(
        signal, K_grid, omega0_grid, lam,
        horizon=None if horizon is None else _positive(horizon, "horizon"),
        threads=threads)
    result.to_csv(out / "syncregion.csv")
    with open(out / "syncregion.json", "w") as f:
        json.dump(result.to_json_dict(), f, indent=2, sort_keys=True)
    return {
        "n_cells": int(result.locked.size),
        "n_locked": int(result.locked.sum()),
        "n_exponential": int(result.exponential.sum()),
    }


def run_spectrogram(cfg: dict, out: Path, threads=None) -> dict:
    traj, _, _, summary = _pool_run(cfg, out)
    horizon = float(cfg["horizon"])
    bin_width = _positive(cfg.get("bin_width", 1.0), "bin_width")
    frames = _grid(cfg.get("frame_times", {"linspace": [0.0, horizon, 21]}),
                   "frame_times")
    spec_frames = analysis.spectrogram(traj, bin_width, frames)
    analysis.spectrogram_to_csv(spec_frames, out / "spectrogram.csv")
    summary["n_frames"] = len(spec_frames)
    return summary


_RUNNERS = {
    "simulate": run_simulate,
    "pool": run_pool,
    "predict": run_predict,
    "manifold": run_manifold,
    "freqresp": run_freqresp,
    "syncregion": run_syncregion,
    "spectrogram": run_spectrogram,
}


def validate_config(cfg: dict) -> str:
    """Check the config shape before any computation; returns the kind."""
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    kind = cfg.get("experiment")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigurationError(
            f"experiment must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    name = cfg.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigurationError("config needs a non-empty `name`")
    if kind not in ("manifold", "freqresp"):
        if cfg.get("signal") is None and cfg.get("signal_generator") is None:
            raise ConfigurationError("config needs `signal` or `signal_generator`")
    if cfg.get("signal") is not None:
        SignalSpec.from_json_dict(cfg["signal"])  # raises on malformed terms
    if "params" in cfg and not isinstance(cfg["params"], dict):
        raise ConfigurationError("`params` must be an object")
    return kind


def run_experiment(cfg: dict, out_dir, threads=None, quiet=False) -> dict:
    """Validate, run and persist one experiment.  Returns the summary dict
    (also written to <out_dir>/<name>/summary.json)."""
    kind = validate_config(cfg)
    out = Path(out_dir) / cfg["name"]
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    summary = _RUNNERS[kind](cfg, out, threads=threads)
    summary.update({
        "experiment": kind,
        "name": cfg["name"],
        "runtime_s": round(time.perf_counter() - start, 3),
    })
    _write_summary(out, summary)
    if not quiet:
        line = f"{cfg['name']}: "
        if "lambda_omega_final" in summary:
            lof = summary["lambda_omega_final"]
            if isinstance(lof, list):
                line += "lambda*omega=" + "/".join(f"{v:.3f}" for v in lof)
            else:
                line += f"lambda*omega={lof:.4f}"
            if "converged" in summary:
                line += f" converged={summary['converged']}"
        else:
            line += f"{kind} done"
        line += f" runtime={summary['runtime_s']:.1f}s"
        print(line)
    return summary
