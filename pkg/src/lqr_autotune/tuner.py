"""Tuning loop: map parameters to design weights, synthesize controllers,
run episodes, feed the surrogate, pick the next evaluation.

One tuning run is fully determined by its master seed; every random
stream (episode noise, representer draws, acquisition sampling, fit
restarts, validation episodes) is derived from it with fixed tags.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .entropy import AcquisitionConfig, build_representers, score_candidates
from .gp import Dataset, GpSurrogate, HyperPriors, Hyperparams, IllConditioned, fit_map, posterior
from .lqr import ControllerGain, NominalModel, NonConvergence, WeightPair, lqr_gain
from .plant import CostEvaluation, EpisodeConfig, PoleParams, SafetyLimits, run_episode

log = logging.getLogger(__name__)

# seed-stream tags
(_TAG_EPISODE, _TAG_REPRESENTERS, _TAG_ACQUISITION, _TAG_FIT,
 _TAG_VALIDATION, _TAG_CANDIDATES) = range(6)


class OutOfDomain(ValueError):
    """Requested parameters fall outside the design-weight domain box."""


def derive_seed(master_seed: int, tag: int, index: int) -> int:
    """Deterministic child seed for one consumer of the master stream."""
    ss = np.random.SeedSequence([int(master_seed), int(tag), int(index)])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


@dataclass(frozen=True)
class DesignWeightMap:
    """Parameter-to-LQR-weight map with its domain box.

    The built-in kinds cover the two- and four-parameter diagonal layouts;
    ``custom`` takes explicit builder callables.
    """

    kind: str = "2d"
    domain: np.ndarray = None
    wx_builder: Optional[Callable[[np.ndarray], np.ndarray]] = None
    wu_builder: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("2d", "4d", "custom"):
            raise ValueError(f"unknown design map kind {self.kind!r}")
        if self.kind == "custom" and (self.wx_builder is None or self.wu_builder is None):
            raise ValueError("custom maps need wx_builder and wu_builder")
        if self.domain is None:
            dim = {"2d": 2, "4d": 4}.get(self.kind)
            if dim is None:
                raise ValueError("custom maps need an explicit domain box")
            object.__setattr__(self, "domain", np.tile([0.01, 10.0], (dim, 1)))
        else:
            object.__setattr__(self, "domain", np.atleast_2d(np.asarray(self.domain, float)))

    @property
    def dim(self) -> int:
        return self.domain.shape[0]

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return (theta.shape[0] == self.dim
                and bool(np.all(theta >= self.domain[:, 0]))
                and bool(np.all(theta <= self.domain[:, 1])))


def design_weights(design_map: DesignWeightMap, theta) -> WeightPair:
    """Design weights (Wx, Wu) for a parameter vector inside the box."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not design_map.contains(theta):
        raise OutOfDomain(f"theta {theta.tolist()} outside domain box")
    if design_map.kind == "2d":
        wx = np.diag([1.0, 50.0 * theta[0], 10.0, 50.0 * theta[1]])
        wu = np.array([[10.0]])
    elif design_map.kind == "4d":
        wx = np.diag([theta[0], 25.0 * theta[1], 10.0 * theta[2], 25.0 * theta[3]])
        wu = np.array([[10.0]])
    else:
        wx = np.asarray(design_map.wx_builder(theta), dtype=float)
        wu = np.asarray(design_map.wu_builder(theta), dtype=float)
    return WeightPair(wx=wx, wu=wu)


@dataclass(frozen=True)
class TunerConfig:
    """Everything one tuning run needs, bundled for reproducibility."""

    design_map: DesignWeightMap
    theta0: np.ndarray
    nominal: NominalModel
    plant: PoleParams
    perf: WeightPair
    episode: EpisodeConfig = EpisodeConfig()
    limits: SafetyLimits = SafetyLimits()
    priors: HyperPriors = None
    init_hyper: Hyperparams = None
    fz: float = 0.3
    n_iterations: int = 20
    init_corner_evals: bool = True
    n_representers: int = 400
    n_candidates: Optional[int] = None
    n_mc_samples: int = 2000
    quadrature_order: int = 9
    fit_restarts: int = 4
    master_seed: int = 0

    def __post_init__(self):
        theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        object.__setattr__(self, "theta0", theta0)
        if not self.design_map.contains(theta0):
            raise OutOfDomain("theta0 outside the domain box")
        if self.n_iterations < 1:
            raise ValueError("need at least one iteration")
        if self.j_unstable <= 0:
            raise ValueError("unstable penalty must be positive")
        if self.init_hyper is None:
            if self.priors is None:
                raise ValueError("either init_hyper or priors must be given")
            means = Hyperparams(
                lengthscales=np.full(self.design_map.dim, self.priors.lengthscale.mean),
                signal_std=self.priors.signal_std.mean,
                noise_std=self.priors.noise_std.mean,
            )
            object.__setattr__(self, "init_hyper", means)

    @property
    def j_unstable(self) -> float:
        return self.episode.j_unstable


@dataclass(frozen=True)
class IterationRecord:
    index: int
    theta: np.ndarray
    j_hat: float
    stable: bool
    best_guess: np.ndarray
    best_guess_mean: float
    hyper: Hyperparams
    wall_ms: float


@dataclass
class TuningResult:
    records: List[IterationRecord]
    best_guess: np.ndarray
    dataset: Dataset
    final_hyper: Hyperparams
    aborted: bool = False
    trace: Optional[list] = None

    @property
    def final_surrogate(self) -> GpSurrogate:
        return GpSurrogate(hyper=self.final_hyper, data=self.dataset)


def synthesize_gain(theta, config: TunerConfig) -> ControllerGain:
    weights = design_weights(config.design_map, theta)
    return lqr_gain(config.nominal, weights, fz=config.fz)


def cost_evaluation(theta, config: TunerConfig, rng_seed: int,
                    trajectory_sink: Optional[Callable] = None) -> CostEvaluation:
    """Synthesize the controller for theta and run one episode on the plant.

    The gain always comes from the configured nominal model, regardless of
    which plant the episode runs.  A synthesis failure is treated like an
    unstable experiment (penalty cost) so the search can route around it.
    """
    try:
        gain = synthesize_gain(theta, config)
    except NonConvergence:
        log.warning("LQR synthesis failed at theta=%s; scoring as unstable",
                    np.asarray(theta).tolist())
        return CostEvaluation(j_hat=config.j_unstable, stable=False,
                              steps_run=0, failure_step=0, violation="synthesis")
    result = run_episode(gain, config.plant, config.episode, config.perf,
                         config.limits, rng_seed)
    if trajectory_sink is not None:
        trajectory_sink(theta, result)
    return result.cost


def _corner_points(domain: np.ndarray) -> np.ndarray:
    lo, hi = domain[:, 0], domain[:, 1]
    dim = domain.shape[0]
    corners = np.empty((2**dim, dim))
    for i in range(2**dim):
        for j in range(dim):
            corners[i, j] = hi[j] if (i >> j) & 1 else lo[j]
    return corners


def run_tuning(config: TunerConfig,
               on_iteration: Optional[Callable[[IterationRecord], None]] = None,
               trajectory_sink: Optional[Callable] = None,
               collect_trace: bool = False) -> TuningResult:
    """Execute the full tuning loop.

    Initialization evaluates theta0 (plus the domain corners when
    enabled).  Each iteration then refits the hyperparameters (MAP,
    warm-started), rebuilds representers, approximates the minimizer
    belief, evaluates the candidate of maximal expected entropy gain and
    updates the best guess.  More than three consecutive surrogate
    factorization failures abort the run with the partial history.
    """
    domain = config.design_map.domain
    acq_all_reps = config.n_candidates is None or config.n_candidates >= config.n_representers
    eval_count = 0
    records: List[IterationRecord] = []
    trace: List[dict] = [] if collect_trace else None
    thetas: List[np.ndarray] = []
    values: List[float] = []

    def evaluate(theta) -> CostEvaluation:
        nonlocal eval_count
        seed = derive_seed(config.master_seed, _TAG_EPISODE, eval_count)
        ce = cost_evaluation(theta, config, seed, trajectory_sink)
        thetas.append(np.atleast_1d(np.asarray(theta, dtype=float)))
        values.append(ce.j_hat)
        eval_count += 1
        return ce

    def emit(record: IterationRecord):
        records.append(record)
        if on_iteration is not None:
            on_iteration(record)

    # initialization phase: theta0, then optionally the domain corners
    init_points = [config.theta0]
    if config.init_corner_evals:
        init_points.extend(_corner_points(domain))
    hyper = config.init_hyper
    for point in init_points:
        t_start = time.perf_counter()
        ce = evaluate(point)
        incumbent = int(np.argmin(values))
        emit(IterationRecord(
            index=eval_count - 1, theta=thetas[-1], j_hat=ce.j_hat, stable=ce.stable,
            best_guess=thetas[incumbent], best_guess_mean=values[incumbent],
            hyper=hyper, wall_ms=(time.perf_counter() - t_start) * 1e3))

    best_guess = records[-1].best_guess
    dataset = Dataset(locations=np.vstack(thetas), values=np.array(values))
    consecutive_failures = 0
    aborted = False

    for i in range(1, config.n_iterations + 1):
        t_start = time.perf_counter()
        dataset = Dataset(locations=np.vstack(thetas), values=np.array(values))
        try:
            hyper = fit_map(dataset, config.priors, hyper,
                            rng_seed=derive_seed(config.master_seed, _TAG_FIT, i),
                            n_restarts=config.fit_restarts)
            surrogate = GpSurrogate(hyper=hyper, data=dataset)
            reps = build_representers(
                domain, surrogate, config.n_representers,
                rng_seed=derive_seed(config.master_seed, _TAG_REPRESENTERS, i))
            acq_seed = derive_seed(config.master_seed, _TAG_ACQUISITION, i)
            acq = AcquisitionConfig(n_samples=config.n_mc_samples,
                                    quadrature_order=config.quadrature_order,
                                    rng_seed=acq_seed)
            if acq_all_reps:
                cand_idx = None
            else:
                idx_rng = np.random.default_rng(
                    derive_seed(config.master_seed, _TAG_CANDIDATES, i))
                cand_idx = np.sort(idx_rng.choice(
                    len(reps), size=config.n_candidates, replace=False))
            gains, pmin, cand_points = score_candidates(
                surrogate, reps, None, acq, candidate_indices=cand_idx)
        except IllConditioned:
            consecutive_failures += 1
            log.warning("surrogate factorization failed at iteration %d "
                        "(%d consecutive)", i, consecutive_failures)
            if consecutive_failures > 3:
                aborted = True
                break
            continue
        consecutive_failures = 0

        next_theta = cand_points[int(np.argmax(gains))]
        bg_idx = int(np.argmax(pmin.probs))
        best_guess = reps.points[bg_idx].copy()
        bg_mean, _ = posterior(surrogate, best_guess)
        if collect_trace:
            trace.append({
                "iteration": i,
                "candidates": cand_points.tolist(),
                "gains": gains.tolist(),
                "pmin": pmin.probs.tolist(),
                "best_guess": best_guess.tolist(),
            })

        ce = evaluate(next_theta)
        emit(IterationRecord(
            index=eval_count - 1, theta=thetas[-1], j_hat=ce.j_hat, stable=ce.stable,
            best_guess=best_guess, best_guess_mean=float(bg_mean),
            hyper=hyper, wall_ms=(time.perf_counter() - t_start) * 1e3))

    dataset = Dataset(locations=np.vstack(thetas), values=np.array(values))
    return TuningResult(records=records, best_guess=best_guess, dataset=dataset,
                        final_hyper=hyper, aborted=aborted, trace=trace)


@dataclass(frozen=True)
class ValidationResult:
    mean: float
    std: float
    n_stable: int
    n_episodes: int
    costs: np.ndarray
    stables: np.ndarray


def validate_controller(theta, config: TunerConfig, n_episodes: int = 5,
                        seeds: Optional[List[int]] = None) -> ValidationResult:
    """Evaluate one controller over repeated independent episodes.

    Unstable episodes contribute the penalty cost.  The standard deviation
    is the sample one; a single episode reports 0 by convention.
    """
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    if seeds is None:
        seeds = [derive_seed(config.master_seed, _TAG_VALIDATION, k)
                 for k in range(n_episodes)]
    if len(seeds) != n_episodes:
        raise ValueError("seed count must match episode count")
    evals = [cost_evaluation(theta, config, s) for s in seeds]
    costs = np.array([e.j_hat for e in evals])
    stables = np.array([e.stable for e in evals])
    std = float(np.std(costs, ddof=1)) if n_episodes > 1 else 0.0
    return ValidationResult(mean=float(costs.mean()), std=std,
                            n_stable=int(stables.sum()),
                            n_episodes=n_episodes, costs=costs, stables=stables)
