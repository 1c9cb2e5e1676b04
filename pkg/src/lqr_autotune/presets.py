"""Ready-made experiment configurations.

Three presets mirror the benchmark scenarios: tuning with a faithful
nominal model (short pole everywhere), and tuning a mismatched plant
(long pole simulated, short-pole nominal model kept) in two and four
parameters.  The nominal model is always linearized from the short pole
at 1 kHz; the performance weights never change.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .gp import GammaPrior, HyperPriors
from .lqr import WeightPair
from .plant import (LONG_POLE, SHORT_POLE, EpisodeConfig, PoleParams,
                    SafetyLimits, linearize_and_discretize)
from .tuner import DesignWeightMap, TunerConfig

PRESET_NAMES = ("good2d", "poor2d", "poor4d")

DT = 1e-3
PERF_WEIGHTS = WeightPair(wx=np.diag([1.0, 100.0, 10.0, 200.0]), wu=np.array([[10.0]]))

# integrator gain on the base-position integral; magnitude from the
# reference hardware, sign matching the z' = +s state convention
FZ = 0.3

PRIORS_2D = HyperPriors(lengthscale=GammaPrior(2.5, 0.11),
                        signal_std=GammaPrior(0.2, 0.02),
                        noise_std=GammaPrior(0.033, 0.0033))
PRIORS_4D = HyperPriors(lengthscale=GammaPrior(2.0, 0.63),
                        signal_std=GammaPrior(0.75, 0.075),
                        noise_std=GammaPrior(0.033, 0.010))


@dataclass(frozen=True)
class ExperimentPreset:
    """Named bundle tying a plant, nominal source and search space together."""

    name: str
    plant: PoleParams
    nominal_source: PoleParams
    design_map: DesignWeightMap
    theta0: np.ndarray
    priors: HyperPriors
    j_unstable: float
    init_corner_evals: bool
    n_representers: int
    n_candidates: Optional[int]


def get_preset(name: str) -> ExperimentPreset:
    if name == "good2d":
        return ExperimentPreset(
            name=name, plant=SHORT_POLE, nominal_source=SHORT_POLE,
            design_map=DesignWeightMap(kind="2d"), theta0=np.array([2.0, 4.0]),
            priors=PRIORS_2D, j_unstable=3.0, init_corner_evals=True,
            n_representers=400, n_candidates=None)
    if name == "poor2d":
        return ExperimentPreset(
            name=name, plant=LONG_POLE, nominal_source=SHORT_POLE,
            design_map=DesignWeightMap(kind="2d"), theta0=np.array([2.0, 4.0]),
            priors=PRIORS_2D, j_unstable=3.0, init_corner_evals=True,
            n_representers=400, n_candidates=None)
    if name == "poor4d":
        return ExperimentPreset(
            name=name, plant=LONG_POLE, nominal_source=SHORT_POLE,
            design_map=DesignWeightMap(kind="4d"), theta0=np.array([1.0, 4.0, 1.0, 8.0]),
            priors=PRIORS_4D, j_unstable=5.0, init_corner_evals=False,
            n_representers=1000, n_candidates=250)
    raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")


def make_config(preset_name: str, n_iterations: int = 20, master_seed: int = 0,
                episode: Optional[EpisodeConfig] = None,
                limits: Optional[SafetyLimits] = None,
                **overrides) -> TunerConfig:
    """Build a TunerConfig for a preset, with optional field overrides."""
    preset = get_preset(preset_name)
    nominal = linearize_and_discretize(preset.nominal_source, DT)
    if episode is None:
        episode = EpisodeConfig(j_unstable=preset.j_unstable)
    else:
        episode = replace(episode, j_unstable=preset.j_unstable)
    config = TunerConfig(
        design_map=preset.design_map,
        theta0=preset.theta0,
        nominal=nominal,
        plant=preset.plant,
        perf=PERF_WEIGHTS,
        episode=episode,
        limits=limits if limits is not None else SafetyLimits(),
        priors=preset.priors,
        fz=FZ,
        n_iterations=n_iterations,
        init_corner_evals=preset.init_corner_evals,
        n_representers=preset.n_representers,
        n_candidates=preset.n_candidates,
        master_seed=master_seed,
    )
    if overrides:
        config = replace(config, **overrides)
    return config
