"""Gaussian-process surrogate of the cost surface.

Zero-mean GP with a squared-exponential ARD kernel, exact conditioning on
noisy observations, and MAP hyperparameter fitting under per-parameter
Gamma priors.  Everything is written against small datasets (tens of
points), so dense Cholesky algebra throughout.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

log = logging.getLogger(__name__)

# relative jitter added to the Gram diagonal before factorization
JITTER = 1e-10


class IllConditioned(RuntimeError):
    """Gram matrix factorization failed despite jitter."""


@dataclass(frozen=True)
class Hyperparams:
    """Kernel/likelihood hyperparameters: per-dimension lengthscales,
    signal standard deviation and observation-noise standard deviation."""

    lengthscales: np.ndarray
    signal_std: float
    noise_std: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        vals = np.concatenate([ls, [self.signal_std, self.noise_std]])
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ValueError("hyperparameters must be positive and finite")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.lengthscales, [self.signal_std, self.noise_std]])

    @staticmethod
    def from_vector(v: np.ndarray) -> "Hyperparams":
        return Hyperparams(lengthscales=v[:-2], signal_std=float(v[-2]),
                           noise_std=float(v[-1]))


@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior given by its mean and standard deviation."""

    mean: float
    std: float

    def __post_init__(self):
        if self.mean <= 0 or self.std <= 0:
            raise ValueError("Gamma prior mean and std must be positive")

    @property
    def shape(self) -> float:
        return (self.mean / self.std) ** 2

    @property
    def scale(self) -> float:
        return self.std**2 / self.mean

    @property
    def mode(self) -> float:
        return max(self.shape - 1.0, 0.0) * self.scale

    def log_pdf(self, x: float) -> float:
        if x <= 0:
            return -math.inf
        k, th = self.shape, self.scale
        return (k - 1.0) * math.log(x) - x / th - k * math.log(th) - math.lgamma(k)

    def log_pdf_grad(self, x: float) -> float:
        return (self.shape - 1.0) / x - 1.0 / self.scale

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.gamma(self.shape, self.scale))


@dataclass(frozen=True)
class HyperPriors:
    """One Gamma prior per hyperparameter group; the lengthscale prior is
    shared across input dimensions."""

    lengthscale: GammaPrior
    signal_std: GammaPrior
    noise_std: GammaPrior

    def log_pdf(self, h: Hyperparams) -> float:
        total = sum(self.lengthscale.log_pdf(l) for l in h.lengthscales)
        return total + self.signal_std.log_pdf(h.signal_std) + self.noise_std.log_pdf(h.noise_std)

    def log_pdf_grad(self, h: Hyperparams) -> np.ndarray:
        g = [self.lengthscale.log_pdf_grad(l) for l in h.lengthscales]
        g.append(self.signal_std.log_pdf_grad(h.signal_std))
        g.append(self.noise_std.log_pdf_grad(h.noise_std))
        return np.array(g)

    def sample(self, dim: int, rng: np.random.Generator) -> Hyperparams:
        ls = np.array([self.lengthscale.sample(rng) for _ in range(dim)])
        return Hyperparams(lengthscales=ls,
                           signal_std=self.signal_std.sample(rng),
                           noise_std=self.noise_std.sample(rng))


@dataclass(frozen=True)
class Dataset:
    """Evaluation locations (N x D) with their scalar observed costs (N,)."""

    locations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
        val = np.atleast_1d(np.asarray(self.values, dtype=float))
        if loc.size == 0:
            loc = loc.reshape(0, max(loc.shape[-1], 1) if loc.ndim == 2 else 1)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", val)
        if loc.shape[0] != val.shape[0]:
            raise ValueError("locations and values must have equal length")
        if not np.all(np.isfinite(val)):
            raise ValueError("observed values must be finite")

    def __len__(self) -> int:
        return len(self.values)

    def appended(self, theta: np.ndarray, y: float) -> "Dataset":
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if len(self) == 0:
            return Dataset(locations=theta[None, :], values=np.array([y]))
        return Dataset(locations=np.vstack([self.locations, theta]),
                       values=np.append(self.values, y))


def kernel_se_ard(a, b, hyper: Hyperparams) -> float:
    """sigma^2 exp(-1/2 sum_j (a_j - b_j)^2 / lambda_j^2)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    d = (a - b) / hyper.lengthscales
    return float(hyper.signal_std**2 * np.exp(-0.5 * np.dot(d, d)))


def _cross_gram(xa: np.ndarray, xb: np.ndarray, hyper: Hyperparams) -> np.ndarray:
    da = xa / hyper.lengthscales
    db = xb / hyper.lengthscales
    sq = (
        np.sum(da**2, axis=1)[:, None]
        + np.sum(db**2, axis=1)[None, :]
        - 2.0 * da @ db.T
    )
    return hyper.signal_std**2 * np.exp(-0.5 * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class GpSurrogate:
    """Immutable conditioned GP: hyperparameters, data and the cached
    Cholesky factorization of K + sigma_n^2 I (plus jitter)."""

    hyper: Hyperparams
    data: Dataset

    def __post_init__(self):
        n = len(self.data)
        if n == 0:
            object.__setattr__(self, "_chol", None)
            object.__setattr__(self, "_alpha", None)
            return
        k = _cross_gram(self.data.locations, self.data.locations, self.hyper)
        c = k + (self.hyper.noise_std**2 + JITTER * self.hyper.signal_std**2) * np.eye(n)
        try:
            chol = cho_factor(c, lower=True)
        except np.linalg.LinAlgError as exc:
            raise IllConditioned(f"Gram factorization failed for N={n}") from exc
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_alpha", cho_solve(chol, self.data.values))

    @property
    def dim(self) -> int:
        if len(self.data) > 0:
            return self.data.locations.shape[1]
        return self.hyper.dim

    def with_observation(self, theta, y: float) -> "GpSurrogate":
        return GpSurrogate(hyper=self.hyper, data=self.data.appended(theta, float(y)))


def posterior_batch(surrogate: GpSurrogate, queries: np.ndarray):
    """Marginal posterior mean and variance at each query row."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    s2 = surrogate.hyper.signal_std**2
    if len(surrogate.data) == 0:
        m = queries.shape[0]
        return np.zeros(m), np.full(m, s2)
    ks = _cross_gram(surrogate.data.locations, queries, surrogate.hyper)
    mean = ks.T @ surrogate._alpha
    v = cho_solve(surrogate._chol, ks)
    var = s2 - np.sum(ks * v, axis=0)
    return mean, np.maximum(var, 0.0)


def posterior(surrogate: GpSurrogate, query):
    """Posterior (mean, variance) at one location; variance clamped at 0."""
    mean, var = posterior_batch(surrogate, np.atleast_1d(np.asarray(query, float))[None, :])
    return float(mean[0]), float(var[0])


def joint_posterior(surrogate: GpSurrogate, queries: np.ndarray):
    """Posterior mean vector and full covariance over a set of locations."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    prior_cov = _cross_gram(queries, queries, surrogate.hyper)
    if len(surrogate.data) == 0:
        return np.zeros(queries.shape[0]), prior_cov
    ks = _cross_gram(surrogate.data.locations, queries, surrogate.hyper)
    mean = ks.T @ surrogate._alpha
    v = cho_solve(surrogate._chol, ks)
    cov = prior_cov - ks.T @ v
    return mean, 0.5 * (cov + cov.T)


def log_marginal_likelihood(surrogate: GpSurrogate) -> float:
    """-1/2 y' C^-1 y - 1/2 log|C| - N/2 log(2 pi), C = K + sigma_n^2 I."""
    n = len(surrogate.data)
    if n == 0:
        return 0.0
    y = surrogate.data.values
    chol_l = surrogate._chol[0]
    log_det = 2.0 * np.sum(np.log(np.diag(chol_l)))
    return float(-0.5 * y @ surrogate._alpha - 0.5 * log_det - 0.5 * n * math.log(2 * math.pi))


def lml_gradient(surrogate: GpSurrogate) -> np.ndarray:
    """Gradient of the log marginal likelihood w.r.t. each hyperparameter
    (natural space, order: lengthscales..., signal_std, noise_std)."""
    n = len(surrogate.data)
    h = surrogate.hyper
    d = h.dim
    if n == 0:
        return np.zeros(d + 2)
    x = surrogate.data.locations
    k = _cross_gram(x, x, h)
    alpha = surrogate._alpha
    c_inv = cho_solve(surrogate._chol, np.eye(n))
    t = np.outer(alpha, alpha) - c_inv

    grad = np.empty(d + 2)
    for j in range(d):
        dsq = (x[:, j][:, None] - x[:, j][None, :]) ** 2
        dk = k * dsq / h.lengthscales[j] ** 3
        grad[j] = 0.5 * np.sum(t * dk)
    # signal std enters K as sigma^2 and the jitter as JITTER*sigma^2
    dk_sig = 2.0 * k / h.signal_std + 2.0 * JITTER * h.signal_std * np.eye(n)
    grad[d] = 0.5 * np.sum(t * dk_sig)
    grad[d + 1] = 0.5 * np.trace(t) * 2.0 * h.noise_std
    return grad


def _map_objective(vector: np.ndarray, data: Dataset, priors: HyperPriors):
    """MAP objective (LML + log prior) and its log-space gradient."""
    try:
        hyper = Hyperparams.from_vector(vector)
        surr = GpSurrogate(hyper=hyper, data=data)
    except (IllConditioned, ValueError):
        return -math.inf, None
    obj = log_marginal_likelihood(surr) + priors.log_pdf(hyper)
    grad_nat = lml_gradient(surr) + priors.log_pdf_grad(hyper)
    return obj, grad_nat * hyper.as_vector()


def fit_map(data: Dataset, priors: HyperPriors, init: Hyperparams,
            rng_seed: int = 0, n_restarts: int = 4,
            max_iter: int = 200) -> Hyperparams:
    """Maximize LML + log Gamma priors over the positive orthant.

    Gradient ascent with backtracking in log-space, multi-start from the
    initial point plus ``n_restarts`` prior samples.  Guaranteed to return
    a point whose objective is >= the initial one; falls back to ``init``
    (with a logged warning) when nothing improves.
    """
    if len(data) < 1:
        raise ValueError("need at least one observation to fit hyperparameters")
    rng = np.random.default_rng(rng_seed)
    dim = init.dim

    f_init, _ = _map_objective(init.as_vector(), data, priors)
    starts = [init] + [priors.sample(dim, rng) for _ in range(n_restarts)]
    best_x, best_f = np.log(init.as_vector()), f_init

    for start in starts:
        x = np.log(start.as_vector())
        f, g = _map_objective(np.exp(x), data, priors)
        if not np.isfinite(f):
            continue
        for _ in range(max_iter):
            gnorm = np.linalg.norm(g)
            if gnorm < 1e-8:
                break
            step = 0.5
            improved = False
            while step > 1e-12:
                x_try = x + step * g / max(gnorm, 1.0)
                f_try, g_try = _map_objective(np.exp(x_try), data, priors)
                if np.isfinite(f_try) and f_try > f + 1e-4 * step * gnorm:
                    x, f, g = x_try, f_try, g_try
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
        if f > best_f:
            best_f, best_x = f, x.copy()

    if not (best_f > f_init):
        log.warning("MAP hyperparameter fit could not improve on the initial point")
        return init
    return Hyperparams.from_vector(np.exp(best_x))


def ard_relevance(hyper: Hyperparams, domain_widths, threshold: float = 0.1):
    """Relevance score per dimension, domain_width_j / lambda_j.

    Dimensions scoring below ``threshold`` are flagged as having little
    influence on the modelled cost.  Diagnostic only; nothing is dropped.
    """
    widths = np.atleast_1d(np.asarray(domain_widths, dtype=float))
    if widths.shape[0] != hyper.dim:
        raise ValueError("domain width count must match the input dimension")
    scores = widths / hyper.lengthscales
    return scores, scores < threshold


def surrogate_snapshot(surrogate: GpSurrogate, domain: Optional[np.ndarray] = None) -> dict:
    """JSON-ready summary of a fitted surrogate for post-hoc plotting."""
    snap = {
        "hyperparameters": {
            "lengthscales": surrogate.hyper.lengthscales.tolist(),
            "signal_std": surrogate.hyper.signal_std,
            "noise_std": surrogate.hyper.noise_std,
        },
        "dataset": {
            "locations": surrogate.data.locations.tolist(),
            "values": surrogate.data.values.tolist(),
        },
    }
    if domain is not None:
        snap["domain"] = np.asarray(domain, dtype=float).tolist()
    return snap


def export_surrogate_json(surrogate: GpSurrogate, path,
                          domain: Optional[np.ndarray] = None) -> None:
    with open(path, "w") as fh:
        json.dump(surrogate_snapshot(surrogate, domain), fh, indent=2)
        fh.write("\n")
