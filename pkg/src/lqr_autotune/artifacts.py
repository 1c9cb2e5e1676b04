"""Run-artifact serialization: resolved config, per-evaluation history,
final surrogate snapshot and acquisition traces."""

import csv
import json
from pathlib import Path
from typing import List

from .gp import export_surrogate_json
from .tuner import IterationRecord, TunerConfig, TuningResult


def config_to_dict(config: TunerConfig) -> dict:
    """JSON-ready view of a resolved tuner configuration."""
    return {
        "design_map": {
            "kind": config.design_map.kind,
            "domain": config.design_map.domain.tolist(),
        },
        "theta0": config.theta0.tolist(),
        "nominal": {
            "a": config.nominal.a.tolist(),
            "b": config.nominal.b.tolist(),
            "dt": config.nominal.dt,
        },
        "plant": {"m": config.plant.m, "r": config.plant.r,
                  "xi": config.plant.xi, "g": config.plant.g},
        "perf": {"wx": config.perf.wx.tolist(), "wu": config.perf.wu.tolist()},
        "episode": {
            "dt": config.episode.dt,
            "horizon_s": config.episode.horizon_s,
            "burn_in_s": config.episode.burn_in_s,
            "noise_psi_std": config.episode.noise_psi_std,
            "noise_psi_dot_std": config.episode.noise_psi_dot_std,
            "psi0": config.episode.psi0,
            "psi0_range": config.episode.psi0_range,
            "j_unstable": config.episode.j_unstable,
        },
        "limits": {"s_max": config.limits.s_max, "u_max": config.limits.u_max,
                   "psi_max": config.limits.psi_max},
        "priors": {
            "lengthscale": [config.priors.lengthscale.mean, config.priors.lengthscale.std],
            "signal_std": [config.priors.signal_std.mean, config.priors.signal_std.std],
            "noise_std": [config.priors.noise_std.mean, config.priors.noise_std.std],
        },
        "fz": config.fz,
        "n_iterations": config.n_iterations,
        "init_corner_evals": config.init_corner_evals,
        "n_representers": config.n_representers,
        "n_candidates": config.n_candidates,
        "n_mc_samples": config.n_mc_samples,
        "quadrature_order": config.quadrature_order,
        "fit_restarts": config.fit_restarts,
        "master_seed": config.master_seed,
    }


def history_header(dim: int) -> List[str]:
    cols = ["iter"]
    cols += [f"theta{j + 1}" for j in range(dim)]
    cols += ["j_hat", "stable"]
    cols += [f"bg_theta{j + 1}" for j in range(dim)]
    cols += ["bg_mean"]
    cols += [f"lambda{j + 1}" for j in range(dim)]
    cols += ["sigma", "sigma_n", "wall_ms"]
    return cols


def history_row(record: IterationRecord, wall_times: bool = False) -> list:
    row = [record.index]
    row += [repr(float(v)) for v in record.theta]
    row += [repr(float(record.j_hat)), "true" if record.stable else "false"]
    row += [repr(float(v)) for v in record.best_guess]
    row += [repr(float(record.best_guess_mean))]
    row += [repr(float(v)) for v in record.hyper.lengthscales]
    row += [repr(float(record.hyper.signal_std)), repr(float(record.hyper.noise_std))]
    # wall time is the one non-reproducible field; zeroed unless asked for
    row += [repr(round(float(record.wall_ms), 3)) if wall_times else "0.0"]
    return row


def write_history_csv(records: List[IterationRecord], path,
                      wall_times: bool = False) -> None:
    if not records:
        raise ValueError("no records to write")
    dim = len(records[0].theta)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(history_header(dim))
        for record in records:
            writer.writerow(history_row(record, wall_times))


def write_run_artifact(outdir, config: TunerConfig, result: TuningResult,
                       wall_times: bool = False) -> Path:
    """Write config.json, history.csv, surrogate_final.json (and trace.json
    when the run collected one) into ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
        fh.write("\n")
    write_history_csv(result.records, out / "history.csv", wall_times=wall_times)
    export_surrogate_json(result.final_surrogate, out / "surrogate_final.json",
                          domain=config.design_map.domain)
    if result.trace is not None:
        with open(out / "trace.json", "w") as fh:
            json.dump(result.trace, fh)
            fh.write("\n")
    return out
