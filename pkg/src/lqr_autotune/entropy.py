"""Acquisition engine for information-based tuning.

The belief over the minimizer location is approximated on a finite
representer set by Monte-Carlo argmin sampling of the joint posterior.
Candidate scoring fantasizes each candidate's observation at Gauss-Hermite
nodes and measures the expected growth of the relative entropy of that
belief against the uniform base measure; common random numbers are shared
across fantasies (and across candidates in the batch scorer) so that gain
differences are low-variance.  PI, EI and a confidence-bound rule are
provided as baselines.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .gp import GpSurrogate, IllConditioned, joint_posterior, posterior, posterior_batch

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class RepresenterSet:
    """Finite point set carrying the minimizer belief; the base measure
    over the domain box is uniform."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class PminDistribution:
    """Probability that each representer point is the minimizer."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        object.__setattr__(self, "probs", p)
        if abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
            raise ValueError("probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True)
class AcquisitionChoice:
    next_theta: np.ndarray
    expected_gain: float
    best_guess: np.ndarray


@dataclass(frozen=True)
class AcquisitionConfig:
    n_samples: int = 2000
    quadrature_order: int = 9
    rng_seed: int = 0


def _chol_with_jitter(cov: np.ndarray, signal_var: float) -> np.ndarray:
    """Cholesky factor of cov + jitter, escalating jitter when needed."""
    n = cov.shape[0]
    for jit in (1e-10, 1e-8, 1e-6, 1e-4):
        try:
            return np.linalg.cholesky(cov + jit * signal_var * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise IllConditioned("joint covariance not factorizable even with jitter")


def _pmin_probs(mean: np.ndarray, cov: np.ndarray, eps: np.ndarray,
                signal_var: float) -> np.ndarray:
    chol = _chol_with_jitter(cov, signal_var)
    samples = mean[:, None] + chol @ eps
    counts = np.bincount(np.argmin(samples, axis=0), minlength=len(mean))
    return counts / eps.shape[1]


def approximate_pmin(surrogate: GpSurrogate, reps: RepresenterSet,
                     n_samples: int = 2000, rng_seed: int = 0) -> PminDistribution:
    """Minimizer belief by argmin frequency over joint posterior samples.

    Ties go to the lowest index.  Deterministic for a fixed seed.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(rng_seed)
    eps = rng.standard_normal((len(reps), n_samples))
    mean, cov = joint_posterior(surrogate, reps.points)
    probs = _pmin_probs(mean, cov, eps, surrogate.hyper.signal_std**2)
    return PminDistribution(probs=probs)


def _rel_entropy(probs: np.ndarray) -> float:
    m = len(probs)
    nz = probs[probs > 0]
    return float(np.sum(nz * np.log(nz * m)))


def relative_entropy(p: PminDistribution) -> float:
    """KL divergence of the belief from uniform; in [0, log M]."""
    return _rel_entropy(p.probs)


def expected_improvement_batch(surrogate: GpSurrogate, queries: np.ndarray,
                               incumbent: Optional[float] = None) -> np.ndarray:
    """EI (for minimization) at each query row under the surrogate."""
    if incumbent is None:
        if len(surrogate.data) == 0:
            raise ValueError("EI needs an incumbent or at least one observation")
        incumbent = float(surrogate.data.values.min())
    mean, var = posterior_batch(surrogate, queries)
    std = np.sqrt(var)
    out = np.maximum(incumbent - mean, 0.0)
    positive = std > 0
    z = (incumbent - mean[positive]) / std[positive]
    out[positive] = (incumbent - mean[positive]) * ndtr(z) \
        + std[positive] * np.exp(-0.5 * z * z) / _SQRT_2PI
    return out


def build_representers(domain: np.ndarray, surrogate: GpSurrogate, m: int,
                       rng_seed: int = 0) -> RepresenterSet:
    """Sample m representer points inside the domain box.

    Half are uniform; the other half are rejection-sampled proportionally
    to expected improvement so resolution concentrates where the surrogate
    sees promise.  With no data yet, everything is uniform.
    """
    if m < 2:
        raise ValueError("need at least two representer points")
    box = np.atleast_2d(np.asarray(domain, dtype=float))
    lo, hi = box[:, 0], box[:, 1]
    rng = np.random.default_rng(rng_seed)
    n_uniform = m // 2
    n_focus = m - n_uniform
    chunks = [rng.uniform(lo, hi, size=(n_uniform, len(lo)))]

    if len(surrogate.data) == 0:
        chunks.append(rng.uniform(lo, hi, size=(n_focus, len(lo))))
    else:
        pilot = rng.uniform(lo, hi, size=(512, len(lo)))
        cap = expected_improvement_batch(surrogate, pilot).max() * 1.25
        accepted = []
        budget = 200 * m
        while len(accepted) < n_focus and budget > 0:
            batch = min(512, budget)
            budget -= batch
            props = rng.uniform(lo, hi, size=(batch, len(lo)))
            ei = expected_improvement_batch(surrogate, props)
            if cap <= 0:
                accepted.extend(props)
                continue
            keep = rng.uniform(0.0, cap, size=batch) < ei
            accepted.extend(props[keep])
        accepted = accepted[:n_focus]
        if len(accepted) < n_focus:
            fill = rng.uniform(lo, hi, size=(n_focus - len(accepted), len(lo)))
            accepted.extend(fill)
        chunks.append(np.asarray(accepted))
    return RepresenterSet(points=np.vstack(chunks))


def expected_entropy_change(surrogate: GpSurrogate, reps: RepresenterSet,
                            candidate, quadrature_order: int = 9,
                            n_samples: int = 2000, rng_seed: int = 0) -> float:
    """Expected entropy gain from one evaluation at ``candidate``.

    The candidate's outcome is fantasized at Gauss-Hermite nodes of its
    predictive distribution; each fantasy conditions a copy of the
    surrogate, after which the minimizer belief and its relative entropy
    are recomputed with the same random draws (common random numbers).
    Returns the quadrature average minus the current entropy.
    """
    candidate = np.atleast_1d(np.asarray(candidate, dtype=float))
    rng = np.random.default_rng(rng_seed)
    eps = rng.standard_normal((len(reps), n_samples))
    signal_var = surrogate.hyper.signal_std**2

    mean0, cov0 = joint_posterior(surrogate, reps.points)
    h_now = _rel_entropy(_pmin_probs(mean0, cov0, eps, signal_var))

    mu_c, var_c = posterior(surrogate, candidate)
    pred_sd = math.sqrt(var_c + surrogate.hyper.noise_std**2)
    nodes, weights = np.polynomial.hermite.hermgauss(quadrature_order)
    weights = weights / math.sqrt(math.pi)

    h_fantasy = 0.0
    for node, weight in zip(nodes, weights):
        y_q = mu_c + math.sqrt(2.0) * pred_sd * node
        fantasy = surrogate.with_observation(candidate, y_q)
        mean_q, cov_q = joint_posterior(fantasy, reps.points)
        h_fantasy += weight * _rel_entropy(_pmin_probs(mean_q, cov_q, eps, signal_var))
    return h_fantasy - h_now


def score_candidates(surrogate: GpSurrogate, reps: RepresenterSet,
                     candidates: Optional[np.ndarray],
                     config: AcquisitionConfig,
                     candidate_indices: Optional[np.ndarray] = None):
    """Expected entropy gain for every candidate, plus the current belief.

    Joint posterior samples are drawn once over representers and
    candidates together; each candidate's fantasy posteriors are then
    obtained by exact Gaussian-conditioning shifts of those samples, so
    all candidates share one set of random numbers.  Candidates default
    to the representer points themselves; ``candidate_indices`` restricts
    them to a subset of representer rows instead.

    Returns (gains, pmin, candidate_array).
    """
    m = len(reps)
    if candidates is not None and candidate_indices is not None:
        raise ValueError("pass explicit candidates or indices, not both")
    if candidate_indices is not None:
        points = reps.points
        cand_rows = np.asarray(candidate_indices, dtype=int)
    elif candidates is None:
        points = reps.points
        cand_rows = np.arange(m)
    else:
        cand = np.atleast_2d(np.asarray(candidates, dtype=float))
        points = np.vstack([reps.points, cand])
        cand_rows = m + np.arange(cand.shape[0])
    n_cand = len(cand_rows)
    n = config.n_samples
    order = config.quadrature_order

    rng = np.random.default_rng(config.rng_seed)
    eps = rng.standard_normal((points.shape[0], n))
    eta = rng.standard_normal(n)

    signal_var = surrogate.hyper.signal_std**2
    noise_var = surrogate.hyper.noise_std**2
    mean, cov = joint_posterior(surrogate, points)
    chol = _chol_with_jitter(cov, signal_var)
    samples = mean[:, None] + chol @ eps

    rep_samples = samples[:m]
    pmin_probs = np.bincount(np.argmin(rep_samples, axis=0), minlength=m) / n
    h_now = _rel_entropy(pmin_probs)

    nodes, weights = np.polynomial.hermite.hermgauss(order)
    weights = weights / math.sqrt(math.pi)
    noise_sd = math.sqrt(noise_var)

    # The fantasy scan is memory-bound; single precision is far below the
    # Monte-Carlo error and halves the traffic.
    gains = np.empty(n_cand)
    rep_samples_t = np.ascontiguousarray(rep_samples.T, dtype=np.float32)  # (n, m)
    buf = np.empty((order, n, m), dtype=np.float32)      # argmin over last axis
    for j, row in enumerate(cand_rows):
        s2 = cov[row, row] + noise_var
        shift = (cov[:m, row] / s2).astype(np.float32)   # conditioning weights
        y_draw = samples[row] + noise_sd * eta           # sampled observations
        y_nodes = mean[row] + math.sqrt(2.0 * s2) * nodes
        delta = (y_nodes[:, None] - y_draw[None, :]).astype(np.float32)  # (order, n)
        np.multiply(delta[:, :, None], shift[None, None, :], out=buf)
        buf += rep_samples_t[None, :, :]
        argmins = buf.argmin(axis=2)
        h_fantasy = 0.0
        for q in range(order):
            counts = np.bincount(argmins[q], minlength=m)
            h_fantasy += weights[q] * _rel_entropy(counts / n)
        gains[j] = h_fantasy - h_now
    return gains, PminDistribution(probs=pmin_probs), points[cand_rows]


def select_next(surrogate: GpSurrogate, reps: RepresenterSet,
                candidates: Optional[np.ndarray] = None,
                config: AcquisitionConfig = AcquisitionConfig()) -> AcquisitionChoice:
    """Pick the candidate of maximal expected entropy gain.

    The best guess is the representer point of highest minimizer
    probability under the current belief.  All ties break to the lowest
    index, keeping the choice deterministic for a fixed seed.
    """
    gains, pmin, cand_points = score_candidates(surrogate, reps, candidates, config)
    if len(cand_points) == 0:
        raise ValueError("candidate set must be nonempty")
    best = int(np.argmax(gains))
    guess = reps.points[int(np.argmax(pmin.probs))]
    return AcquisitionChoice(next_theta=cand_points[best].copy(),
                             expected_gain=float(gains[best]),
                             best_guess=guess.copy())


def pi_value(mean: float, std: float, incumbent: float) -> float:
    """Probability of improving on the incumbent (minimization)."""
    if std == 0.0:
        return 1.0 if mean < incumbent else 0.0
    return float(ndtr((incumbent - mean) / std))


def ei_value(mean: float, std: float, incumbent: float) -> float:
    """Expected improvement below the incumbent (minimization)."""
    if std == 0.0:
        return max(incumbent - mean, 0.0)
    z = (incumbent - mean) / std
    return float((incumbent - mean) * ndtr(z) + std * math.exp(-0.5 * z * z) / _SQRT_2PI)


def ucb_value(mean: float, std: float, beta: float) -> float:
    """Optimism score for minimization: -mean + beta * std (maximize)."""
    return -mean + beta * std


def baseline_acquisition(kind: str, surrogate: GpSurrogate, candidate,
                         incumbent: Optional[float] = None,
                         beta: float = 2.0) -> float:
    """Score a candidate under PI, EI or a confidence-bound rule.

    All three are oriented for minimization and return values to
    maximize.  A degenerate predictive std falls back to the limit
    values: PI in {0, 1}, EI = max(incumbent - mean, 0).
    """
    kind = kind.lower()
    if kind not in ("pi", "ei", "ucb"):
        raise ValueError(f"unknown acquisition kind: {kind!r}")
    mean, var = posterior(surrogate, candidate)
    std = math.sqrt(var)
    if kind == "ucb":
        return ucb_value(mean, std, beta)
    if incumbent is None:
        if len(surrogate.data) == 0:
            raise ValueError(f"{kind} needs an incumbent or at least one observation")
        incumbent = float(surrogate.data.values.min())
    if kind == "pi":
        return pi_value(mean, std, incumbent)
    return ei_value(mean, std, incumbent)
