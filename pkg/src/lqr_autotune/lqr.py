"""Discrete-time infinite-horizon LQR synthesis.

The Riccati fixed point is solved by value iteration from P = Wx,
evaluated with a doubling recursion so marginally damped plants converge
in a few dozen matrix operations instead of tens of thousands of steps.
Dependency-free and entirely adequate for the small plants handled here
(n_x <= 10).  The project-wide sign convention is u_k = F x_k, i.e. the
gain absorbs the minus sign.
"""

from dataclasses import dataclass

import numpy as np


class NonConvergence(RuntimeError):
    """Riccati recursion failed to reach the residual tolerance.

    Usually indicates a non-stabilizable (A, B) pair or severely
    ill-conditioned weights.
    """


@dataclass(frozen=True)
class NominalModel:
    """Discrete-time linear pair (A_n, B_n) with its sampling time in seconds."""

    a: np.ndarray
    b: np.ndarray
    dt: float

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"A must be square, got {a.shape}")
        if b.shape[0] != a.shape[0]:
            raise ValueError(f"B row count {b.shape[0]} != state dimension {a.shape[0]}")
        if not self.dt > 0:
            raise ValueError("sampling time must be positive")

    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_u(self) -> int:
        return self.b.shape[1]


_SYM_TOL = 1e-12


@dataclass(frozen=True)
class WeightPair:
    """Symmetric positive-definite state/input weights (Wx, Wu).

    Used both for the fixed performance weights (Q, R) and for the
    tunable design weights fed to the LQR synthesis.
    """

    wx: np.ndarray
    wu: np.ndarray

    def __post_init__(self):
        wx = np.atleast_2d(np.asarray(self.wx, dtype=float))
        wu = np.atleast_2d(np.asarray(self.wu, dtype=float))
        object.__setattr__(self, "wx", wx)
        object.__setattr__(self, "wu", wu)
        for name, w in (("Wx", wx), ("Wu", wu)):
            scale = max(np.abs(w).max(), 1.0)
            if np.abs(w - w.T).max() > _SYM_TOL * scale:
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(w).min() <= 0:
                raise ValueError(f"{name} is not positive definite")


@dataclass(frozen=True)
class ControllerGain:
    """State-feedback gain F plus the fixed scalar integrator gain Fz."""

    f: np.ndarray
    fz: float = 0.0

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.f, dtype=float))
        object.__setattr__(self, "f", f)
        if not np.all(np.isfinite(f)):
            raise ValueError("gain matrix has non-finite entries")


def _riccati_step(p, a, b, wx, wu):
    """One step of the Riccati value recursion, re-symmetrized."""
    at, bt = a.T, b.T
    pa = p @ a
    pb = p @ b
    g = wu + bt @ pb
    p_next = wx + at @ pa - (at @ pb) @ np.linalg.solve(g, bt @ pa)
    return 0.5 * (p_next + p_next.T)


def solve_dare(model: NominalModel, weights: WeightPair,
               tol: float = 1e-10, max_doublings: int = 64) -> np.ndarray:
    """Solve P = Wx + A'PA - A'PB (Wu + B'PB)^-1 B'PA.

    Runs the Riccati value recursion started from P = Wx, accelerated by
    doubling: iterate k of the loop below equals plain value iteration at
    horizon 2^k - 1, so convergence is quadratic while the computed
    sequence stays the classic one.  Terminates once the relative change
    drops below ``tol`` and a direct residual check confirms the fixed
    point; anything else (slowly diverging iterates of a non-stabilizable
    pair, singular intermediate factors) raises NonConvergence.
    """
    a, b = model.a, model.b
    wx, wu = weights.wx, weights.wu
    n = model.n_x
    eye = np.eye(n)

    ak = a.copy()
    gk = b @ np.linalg.solve(wu, b.T)
    hk = wx.copy()
    try:
        for _ in range(max_doublings):
            w = eye + gk @ hk
            aw = np.linalg.solve(w.T, ak.T).T            # Ak (I + Gk Hk)^-1
            hk_next = hk + ak.T @ hk @ np.linalg.solve(w, ak)
            hk_next = 0.5 * (hk_next + hk_next.T)
            gk_next = gk + aw @ gk @ ak.T
            ak = aw @ ak
            gk = 0.5 * (gk_next + gk_next.T)
            change = np.linalg.norm(hk_next - hk, "fro")
            hk = hk_next
            hk_norm = np.linalg.norm(hk, "fro")
            if not np.isfinite(hk_norm):
                break
            if change <= tol * max(hk_norm, 1e-300):
                defect = np.linalg.norm(hk - _riccati_step(hk, a, b, wx, wu), "fro")
                if np.isfinite(defect) and defect <= tol * max(hk_norm, 1e-300):
                    return hk
    except np.linalg.LinAlgError:
        pass
    raise NonConvergence(
        "Riccati recursion did not converge; (A, B) may not be stabilizable"
    )


def lqr_gain(model: NominalModel, weights: WeightPair, fz: float = 0.0) -> ControllerGain:
    """Synthesize the optimal static gain, F = -(Wu + B'PB)^-1 B'PA."""
    p = solve_dare(model, weights)
    bt = model.b.T
    g = weights.wu + bt @ p @ model.b
    f = -np.linalg.solve(g, bt @ p @ model.a)
    return ControllerGain(f=f, fz=fz)


def closed_loop_spectral_radius(model: NominalModel, gain: ControllerGain) -> float:
    """Largest eigenvalue magnitude of A + B F; < 1 means nominally stable."""
    return float(np.abs(np.linalg.eigvals(model.a + model.b @ gain.f)).max())


def dare_residual(model: NominalModel, weights: WeightPair, p: np.ndarray) -> float:
    """Relative Frobenius defect of a candidate Riccati solution."""
    a, b = model.a, model.b
    g = weights.wu + b.T @ p @ b
    rhs = weights.wx + a.T @ p @ a - (a.T @ p @ b) @ np.linalg.solve(g, b.T @ p @ a)
    return float(np.linalg.norm(p - rhs, "fro") / max(np.linalg.norm(p, "fro"), 1e-300))
