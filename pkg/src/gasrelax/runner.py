"""Dispatch a validated config to its experiment and write outputs plus a manifest."""

from __future__ import annotations

import json
import logging
import math
import os
import platform
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .boltzmann import DensityGrid, evolve_snapshots, stationarity_residual
from .chain import chain_ensemble, variance_standard_error
from .config import dump_config
from .crossings import (
    crossing_frequency_curve,
    dephasing_ensemble,
    fit_decay_rate,
    hitting_time_stats,
    kubo_envelope,
    kubo_envelope_exact,
    kubo_trace,
    recurrence_evidence,
    temperature_scaling_experiment,
    time_crossing_frequency,
)
from .export import chain_rows, sha256, time_rows, write_csv
from .model import chain_variance, equilibrium_spec, time_variance
from .ou import coupled_experiment
from .streams import RNG_CONSTRUCTION, StreamId
from .timeproc import mixture, simulate_time_trajectory, time_ensemble

log = logging.getLogger(__name__)

OUTPUT_ENV = "GASRELAX_OUTPUT_DIR"
DEFAULT_OUTPUT = "gasrelax-out"
MANIFEST = "manifest.json"

# Documented CSV headers; every writer below uses exactly these.
HEADERS = {
    "chain.csv": ("trajectory_id", "n", "velocity"),
    "chain_moments.csv": ("n", "mean", "variance", "se_variance", "theory_variance"),
    "time.csv": ("trajectory_id", "jump_index", "jump_time", "velocity"),
    "time_moments.csv": ("t", "mean", "variance", "se_variance", "theory_variance", "mean_jumps"),
    "density.csv": ("t", "v", "density"),
    "boltzmann.csv": ("t", "v", "f"),
    "boltzmann_check.csv": ("t", "l1_to_mixture", "mass", "variance", "theory_variance", "residual"),
    "ou_errors.csv": ("lambda_n", "t", "trial", "abs_error"),
    "ou_summary.csv": ("lambda_n", "t", "exceedance", "ci_lo", "ci_hi"),
    "crossing_curve.csv": ("n", "mean_w", "se"),
    "time_crossing_curve.csv": ("t", "mean_w", "se", "n_used", "zero_fraction"),
    "recurrence.csv": ("n_max", "k", "fraction", "ci_lo", "ci_hi"),
    "hitting.csv": ("trial", "n1", "tau1", "censored"),
    "temperature.csv": ("ratio", "lambda", "bound", "mean_tau1", "ci_lo", "ci_hi", "censored_fraction"),
    "dephasing.csv": ("t", "mean_ke", "se"),
    "states.csv": ("t", "trace_id", "state"),
    "kubo.csv": ("t", "y", "trace_id"),
    "kubo_envelope.csv": ("t", "mean_cos", "se", "exact"),
}


class RunError(RuntimeError):
    """An experiment failed at runtime; carries the experiment name."""

    def __init__(self, experiment, message):
        self.experiment = experiment
        super().__init__(f"{experiment}: {message}")


class _Outputs:
    def __init__(self, directory: Path):
        self.dir = directory
        self.written: list[Path] = []

    def csv(self, name, rows):
        path = write_csv(self.dir / name, HEADERS[name], rows)
        self.written.append(path)
        return path

    def cleanup(self):
        for path in self.written:
            path.unlink(missing_ok=True)


def resolve_output_dir(cfg, override=None) -> Path:
    return Path(override or cfg.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _chain(cfg, out):
    p = cfg.params.gas()
    paths = chain_ensemble(p, cfg.n, cfg.trials, cfg.seed, cfg.block_size, cfg.workers)
    out.csv("chain.csv", chain_rows(paths[: cfg.export_trajectories]))
    rows = []
    for n in range(cfg.n + 1):
        var, se = variance_standard_error(paths[:, n])
        rows.append((n, float(paths[:, n].mean()), var, se, chain_variance(n, p)))
    out.csv("chain_moments.csv", rows)
    var_n, se_n = rows[-1][2], rows[-1][3]
    return {"final_variance": var_n, "final_se": se_n, "theory_variance": rows[-1][4]}


def _time(cfg, out):
    p = cfg.params.gas()
    times = np.asarray(cfg.times)
    horizon = float(times.max()) if times.max() > 0 else 1.0
    trajs = [simulate_time_trajectory(p, horizon, StreamId(cfg.seed, "time-trajectory", i))
             for i in range(cfg.export_trajectories)]
    out.csv("time.csv", time_rows(trajs))
    s = time_ensemble(p, times, cfg.trials, cfg.seed, cfg.block_size, cfg.workers)
    rows = []
    for j, t in enumerate(times):
        v = s.v[:, j]
        var = float(v.var(ddof=1))
        m4 = float(np.mean((v - v.mean()) ** 4))
        se = math.sqrt(max(m4 - var**2, 0.0) / len(v))
        rows.append((t, float(v.mean()), var, se, time_variance(t, p), float(s.n_jumps[:, j].mean())))
    out.csv("time_moments.csv", rows)
    sd = math.sqrt(max(p.sigma0_sq, equilibrium_spec(p).variance))
    grid = np.linspace(-10 * sd, 10 * sd, cfg.density_points)

    def density_rows():
        for t in times:
            f = mixture(t, p, cfg.density_tol)(grid)
            for v, d in zip(grid, f):
                yield t, v, d

    out.csv("density.csv", density_rows())
    return {"max_abs_z_variance": max(abs(r[2] - r[4]) / r[3] for r in rows)}


def _boltzmann(cfg, out):
    p = cfg.params.gas()
    v_max = cfg.v_max or 10.0 * math.sqrt(max(p.sigma0_sq, equilibrium_spec(p).variance))
    g0 = DensityGrid.gaussian(p.sigma0_sq, v_max, cfg.grid_points)
    snaps = [g0] + evolve_snapshots(g0, p, cfg.times, cfg.dt, cfg.quadrature,
                                    mass_tol=cfg.mass_tol, clip_tol=cfg.clip_tol)

    def grid_rows():
        for g in snaps:
            for v, f in zip(g.points, g.values):
                yield g.t, v, f

    out.csv("boltzmann.csv", grid_rows())
    rows = []
    for g in snaps:
        ref = mixture(g.t, p, cfg.density_tol)(g.points)
        rows.append((g.t, g.l1_distance(ref), g.mass, g.variance, time_variance(g.t, p),
                     stationarity_residual(g, p, cfg.quadrature)))
    out.csv("boltzmann_check.csv", rows)
    eq = DensityGrid.gaussian(equilibrium_spec(p).variance, v_max, cfg.grid_points)
    return {
        "max_l1": max(r[1] for r in rows),
        "equilibrium_residual": stationarity_residual(eq, p, cfg.quadrature),
        "max_step_drift": snaps[-1].max_step_drift,
        "clipped_mass": snaps[-1].clipped_mass,
    }


def _ou(cfg, out):
    r = cfg.renormalized()
    results = coupled_experiment(r, cfg.t_eval, cfg.trials, cfg.seed, cfg.epsilon, cfg.workers, cfg.refine)

    def err_rows():
        for res in results:
            for trial, errs in enumerate(res.abs_errors):
                for t, e in zip(res.t_eval, errs):
                    yield res.lambda_n, t, trial, e

    out.csv("ou_errors.csv", err_rows())
    rows = []
    for res in results:
        for t, ex, (lo, hi) in zip(res.t_eval, res.exceedance, res.interval()):
            rows.append((res.lambda_n, t, ex, lo, hi))
    out.csv("ou_summary.csv", rows)
    return {"exceedance": {repr(res.lambda_n): res.exceedance.tolist() for res in results}}


def _crossings(cfg, out):
    p = cfg.params.gas()
    curve = crossing_frequency_curve(p, cfg.n_max, cfg.trials, cfg.seed, cfg.block_size, cfg.workers)
    out.csv("crossing_curve.csv", zip(curve.n, curve.mean_w, curve.se))
    summary = {"isotonic_violation": curve.isotonic_violation(), "mean_w_last": float(curve.mean_w[-1])}
    if cfg.times:
        tc = time_crossing_frequency(p, cfg.times, cfg.trials, cfg.seed, cfg.block_size, cfg.workers)
        out.csv("time_crossing_curve.csv", zip(tc.times, tc.mean_w, tc.se, tc.n_used, tc.zero_fraction))
    if cfg.recurrence:
        rc = cfg.recurrence
        rec = recurrence_evidence(p, rc.n_max, rc.k, rc.trials, cfg.seed, cfg.block_size, cfg.workers)
        out.csv("recurrence.csv", [(n, rec.k, f, lo, hi) for n, f, lo, hi in
                                   zip(rec.n_max, rec.fraction, rec.ci_lo, rec.ci_hi)])
        summary["recurrence_fraction"] = rec.fraction.tolist()
    return summary


def _hitting(cfg, out):
    p = cfg.params.gas()
    h = hitting_time_stats(p, cfg.n_cap, cfg.trials, cfg.seed, cfg.block_size, cfg.workers)
    out.csv("hitting.csv", zip(range(h.trials), h.n1, h.tau1, h.censored))
    return h.summary()


def _temperature(cfg, out):
    rows = temperature_scaling_experiment(cfg.ratios, cfg.params.gas(), cfg.mode, cfg.n_cap, cfg.trials,
                                          cfg.seed, cfg.block_size, cfg.workers)
    out.csv("temperature.csv", [tuple(asdict(r).values()) for r in rows])
    return {"mode": cfg.mode, "bounds": [r.bound for r in rows]}


def _dephasing(cfg, out):
    p = cfg.params.gas()
    d = dephasing_ensemble(p, cfg.ensemble_size, cfg.horizon, cfg.dt_sample, cfg.seed,
                           cfg.state_traces, cfg.block_size, cfg.workers)
    out.csv("dephasing.csv", zip(d.times, d.mean_ke, d.se))
    if d.state_traces is not None:
        out.csv("states.csv", [(t, i, "F" if d.state_traces[i, j] else "D")
                               for j, t in enumerate(d.times) for i in range(d.state_traces.shape[0])])
    summary = {"equilibrium_ke": d.equilibrium_ke, "theory_rate": p.relaxation_rate}
    if cfg.ensemble_size > 1:
        rate, _ = fit_decay_rate(d)
        summary["fitted_rate"] = rate
    return summary


def _kubo(cfg, out):
    t, y = kubo_trace(cfg.omega0, cfg.sigma_w, cfg.horizon, cfg.dt, StreamId(cfg.seed, "kubo"), cfg.n_traces)
    out.csv("kubo.csv", [(ti, y[k, j], k) for k in range(y.shape[0]) for j, ti in enumerate(t)])
    summary = {}
    if cfg.envelope_paths:
        times = cfg.envelope_times or [cfg.horizon / 4, cfg.horizon / 2, cfg.horizon]
        mean, se = kubo_envelope(cfg.sigma_w, times, cfg.envelope_paths, cfg.dt, cfg.seed,
                                 block_size=cfg.block_size, workers=cfg.workers)
        exact = kubo_envelope_exact(cfg.sigma_w, times)
        out.csv("kubo_envelope.csv", zip(times, mean, se, exact))
        summary["max_abs_z"] = float(np.max(np.abs(mean - exact) / se))
    return summary


DISPATCH = {
    "chain": _chain,
    "time": _time,
    "boltzmann": _boltzmann,
    "ou-converge": _ou,
    "crossings": _crossings,
    "hitting": _hitting,
    "temperature": _temperature,
    "dephasing": _dephasing,
    "kubo": _kubo,
}


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run(cfg, output_dir=None) -> dict:
    """Execute ``cfg``; write CSVs and ``manifest.json`` into the output directory.

    On failure every file written by this run is removed and ``RunError`` is
    raised.
    """
    directory = resolve_output_dir(cfg, output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    out = _Outputs(directory)
    start = time.perf_counter()
    try:
        summary = DISPATCH[cfg.experiment](cfg, out)
    except Exception as exc:
        out.cleanup()
        log.error("experiment %s failed: %s", cfg.experiment, exc)
        raise RunError(cfg.experiment, f"{type(exc).__name__}: {exc}") from exc
    manifest = {
        "tool": "gasrelax",
        "version": __version__,
        "config": dump_config(cfg),
        "rng": {"construction": RNG_CONSTRUCTION, "block_size": cfg.block_size},
        "platform": {"python": platform.python_version(), "numpy": np.__version__},
        "duration_s": round(time.perf_counter() - start, 3),
        "outputs": {p.name: sha256(p) for p in out.written},
        "summary": _jsonable(summary),
    }
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
