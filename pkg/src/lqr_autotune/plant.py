"""Nonlinear pole-on-moving-base plant: dynamics, episodes, safety, cost.

State layout is [psi, psi_dot, s, s_dot] plus a controller-side integrator
state z with z_dot = s.  The commanded input u is the base acceleration,
held constant over each sampling interval (zero-order hold).  Integration
is classic RK4 at the controller rate; the inner loop runs on plain floats
for speed.
"""

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lqr import ControllerGain, NominalModel, WeightPair


@dataclass(frozen=True)
class PoleParams:
    """Physical pole parameters: mass, distance to COM, pivot friction, gravity."""

    m: float = 0.27      # kg
    r: float = 0.33      # m
    xi: float = 0.012    # N m s
    g: float = 9.81      # m/s^2

    def __post_init__(self):
        if self.m <= 0 or self.r <= 0 or self.g <= 0:
            raise ValueError("m, r and g must be positive")
        if self.xi < 0:
            raise ValueError("friction coefficient cannot be negative")


# Pole configurations used throughout: the short pole is also the source of
# the nominal model; the long pole plays the badly modelled plant.
SHORT_POLE = PoleParams(m=0.27, r=0.33, xi=0.012, g=9.81)
LONG_POLE = PoleParams(m=0.29, r=0.64, xi=0.012, g=9.81)


@dataclass
class PlantState:
    psi: float = 0.0       # pole angle from vertical, rad
    psi_dot: float = 0.0   # rad/s
    s: float = 0.0         # base deviation, m
    s_dot: float = 0.0     # m/s
    z: float = 0.0         # integral of s, m*s

    def as_array(self) -> np.ndarray:
        return np.array([self.psi, self.psi_dot, self.s, self.s_dot, self.z])


@dataclass(frozen=True)
class SafetyLimits:
    """Inclusive bounds on |s|, |u| and |psi|; exceeding any one stops an episode."""

    s_max: float = 0.5     # m
    u_max: float = 5.0     # m/s^2
    psi_max: float = 0.35  # rad

    def __post_init__(self):
        if min(self.s_max, self.u_max, self.psi_max) <= 0:
            raise ValueError("safety bounds must be positive")


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode shape: timing, burn-in, measurement noise, initial condition.

    ``psi0=None`` draws the initial angle uniformly from
    [-psi0_range, +psi0_range]; a float pins it exactly.  The unstable
    penalty is the cost assigned to episodes that hit a safety bound.
    """

    dt: float = 1e-3
    horizon_s: float = 120.0
    burn_in_s: float = 30.0
    noise_psi_std: float = 1e-3
    noise_psi_dot_std: float = 1e-2
    psi0: Optional[float] = None
    psi0_range: float = 0.02
    j_unstable: float = 3.0

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_s / self.dt))

    @property
    def burn_in_steps(self) -> int:
        return int(round(self.burn_in_s / self.dt))


@dataclass(frozen=True)
class CostEvaluation:
    j_hat: float
    stable: bool
    steps_run: int
    failure_step: Optional[int] = None
    violation: Optional[str] = None


@dataclass(frozen=True)
class Trajectory:
    """Per-step log of an episode; column layout matches the CSV export."""

    k: np.ndarray
    t: np.ndarray
    psi: np.ndarray
    psi_dot: np.ndarray
    s: np.ndarray
    s_dot: np.ndarray
    z: np.ndarray
    u: np.ndarray

    def __len__(self) -> int:
        return len(self.k)


@dataclass(frozen=True)
class EpisodeResult:
    cost: CostEvaluation
    trajectory: Trajectory


def pole_derivatives(state: PlantState, u: float, params: PoleParams):
    """Time derivatives (psi_dot, psi_ddot, s_dot, s_ddot, z_dot).

    From m r^2 psi_ddot - m g r sin(psi) + m r cos(psi) u + xi psi_dot = 0:
        psi_ddot = (g/r) sin(psi) - cos(psi)/r * u - xi/(m r^2) * psi_dot
        s_ddot   = u
    """
    psi_ddot = (
        params.g / params.r * math.sin(state.psi)
        - math.cos(state.psi) / params.r * u
        - params.xi / (params.m * params.r**2) * state.psi_dot
    )
    return (state.psi_dot, psi_ddot, state.s_dot, u, state.s)


def rk4_step(state: PlantState, u: float, params: PoleParams, dt: float) -> PlantState:
    """One RK4 step of the nonlinear dynamics with u held constant."""
    g_r = params.g / params.r
    inv_r = 1.0 / params.r
    damp = params.xi / (params.m * params.r**2)
    out = _rk4_raw(state.psi, state.psi_dot, state.s, state.s_dot, state.z,
                   u, dt, g_r, inv_r, damp)
    return PlantState(*out)


def _rk4_raw(psi, psid, s, sd, z, u, dt, g_r, inv_r, damp):
    # derivative of (psi, psid, s, sd, z) at fixed u, inlined four times
    k1p = psid
    k1pd = g_r * math.sin(psi) - math.cos(psi) * inv_r * u - damp * psid
    k1s = sd
    k1z = s

    h = 0.5 * dt
    p2, pd2, s2 = psi + h * k1p, psid + h * k1pd, s + h * k1s
    k2p = pd2
    k2pd = g_r * math.sin(p2) - math.cos(p2) * inv_r * u - damp * pd2
    k2s = sd + h * u
    k2z = s2

    p3, pd3, s3 = psi + h * k2p, psid + h * k2pd, s + h * k2s
    k3p = pd3
    k3pd = g_r * math.sin(p3) - math.cos(p3) * inv_r * u - damp * pd3
    k3s = sd + h * u
    k3z = s3

    p4, pd4, s4 = psi + dt * k3p, psid + dt * k3pd, s + dt * k3s
    k4p = pd4
    k4pd = g_r * math.sin(p4) - math.cos(p4) * inv_r * u - damp * pd4
    k4s = sd + dt * u
    k4z = s4

    w = dt / 6.0
    return (
        psi + w * (k1p + 2.0 * (k2p + k3p) + k4p),
        psid + w * (k1pd + 2.0 * (k2pd + k3pd) + k4pd),
        s + w * (k1s + 2.0 * (k2s + k3s) + k4s),
        sd + dt * u,
        z + w * (k1z + 2.0 * (k2z + k3z) + k4z),
    )


def check_safety(state: PlantState, u: float, limits: SafetyLimits) -> Optional[str]:
    """Name of the first violated bound ('position', 'acceleration', 'angle'),
    or None.  Bounds are inclusive: hitting a limit exactly is still safe."""
    if abs(state.s) > limits.s_max:
        return "position"
    if abs(u) > limits.u_max:
        return "acceleration"
    if abs(state.psi) > limits.psi_max:
        return "angle"
    return None


def linearize_and_discretize(params: PoleParams, dt: float) -> NominalModel:
    """Linearize about the upright equilibrium and apply zero-order hold.

    The continuous Jacobian over [psi, psi_dot, s, s_dot] is discretized by
    exponentiating the augmented block [[A, B], [0, 0]] * dt with a
    scaled-and-squared truncated series.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    g_r = params.g / params.r
    damp = params.xi / (params.m * params.r**2)
    a_c = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [g_r, -damp, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    b_c = np.array([[0.0], [-1.0 / params.r], [0.0], [1.0]])
    n = 4
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = a_c * dt
    aug[:n, n:] = b_c * dt
    e = _expm_series(aug)
    return NominalModel(a=e[:n, :n], b=e[:n, n:], dt=dt)


def _expm_series(m: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring of the Taylor series."""
    norm = np.linalg.norm(m, 1)
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    t = m / (2.0**squarings)
    result = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for k in range(1, 60):
        term = term @ t / k
        result = result + term
        if np.linalg.norm(term, 1) < 1e-18 * max(np.linalg.norm(result, 1), 1.0):
            break
    for _ in range(squarings):
        result = result @ result
    return result


def run_episode(gain: ControllerGain, params: PoleParams, config: EpisodeConfig,
                perf: WeightPair, limits: SafetyLimits, rng_seed: int) -> EpisodeResult:
    """Simulate one balancing episode under u = F x_meas + Fz z.

    The controller sees the true state corrupted by per-step Gaussian noise
    on psi and psi_dot.  The accumulated cost averages x'Qx + u'Ru over the
    post-burn-in steps only (the integrator state never enters the cost).
    Hitting a safety bound ends the episode with the fixed unstable penalty.
    """
    if gain.f.shape != (1, 4):
        raise ValueError(f"expected a 1x4 gain for the 4-state plant, got {gain.f.shape}")
    n_steps = config.n_steps
    burn_in = config.burn_in_steps
    if n_steps > 0 and n_steps <= burn_in:
        raise ValueError("horizon must exceed the burn-in window")

    rng = np.random.default_rng(rng_seed)
    if config.psi0 is None:
        psi = float(rng.uniform(-config.psi0_range, config.psi0_range))
    else:
        psi = float(config.psi0)
    psi_d, s, s_d, z = 0.0, 0.0, 0.0, 0.0

    if config.noise_psi_std > 0:
        noise_psi = (config.noise_psi_std * rng.standard_normal(n_steps)).tolist()
    else:
        noise_psi = [0.0] * n_steps
    if config.noise_psi_dot_std > 0:
        noise_psi_d = (config.noise_psi_dot_std * rng.standard_normal(n_steps)).tolist()
    else:
        noise_psi_d = [0.0] * n_steps

    f0, f1, f2, f3 = (float(v) for v in gain.f[0])
    fz = float(gain.fz)
    q = perf.wx
    r_w = perf.wu
    diag_q = bool(np.allclose(q, np.diag(np.diag(q)), atol=0.0))
    q0, q1, q2, q3 = (float(v) for v in np.diag(q))
    r0 = float(r_w[0, 0])

    dt = config.dt
    g_r = params.g / params.r
    inv_r = 1.0 / params.r
    damp = params.xi / (params.m * params.r**2)
    u_max = limits.u_max
    s_max = limits.s_max
    psi_max = limits.psi_max

    log_psi = np.empty(n_steps)
    log_psi_d = np.empty(n_steps)
    log_s = np.empty(n_steps)
    log_s_d = np.empty(n_steps)
    log_z = np.empty(n_steps)
    log_u = np.empty(n_steps)

    cost_sum = 0.0
    failure_step = None
    violation = None
    steps_run = 0

    for k in range(n_steps):
        psi_m = psi + noise_psi[k]
        psi_d_m = psi_d + noise_psi_d[k]
        u = f0 * psi_m + f1 * psi_d_m + f2 * s + f3 * s_d + fz * z

        log_psi[k] = psi
        log_psi_d[k] = psi_d
        log_s[k] = s
        log_s_d[k] = s_d
        log_z[k] = z
        log_u[k] = u

        if abs(s) > s_max:
            failure_step, violation = k, "position"
        elif abs(u) > u_max:
            failure_step, violation = k, "acceleration"
        elif abs(psi) > psi_max:
            failure_step, violation = k, "angle"
        if failure_step is not None:
            steps_run = k + 1
            break

        if k >= burn_in:
            if diag_q:
                cost_sum += (q0 * psi * psi + q1 * psi_d * psi_d
                             + q2 * s * s + q3 * s_d * s_d + r0 * u * u)
            else:
                x = np.array([psi, psi_d, s, s_d])
                cost_sum += float(x @ q @ x) + r0 * u * u

        u_applied = u_max if u > u_max else (-u_max if u < -u_max else u)
        psi, psi_d, s, s_d, z = _rk4_raw(psi, psi_d, s, s_d, z,
                                         u_applied, dt, g_r, inv_r, damp)
        steps_run = k + 1

    if failure_step is not None:
        cost = CostEvaluation(j_hat=config.j_unstable, stable=False,
                              steps_run=steps_run, failure_step=failure_step,
                              violation=violation)
    else:
        n_counted = max(n_steps - burn_in, 1)
        cost = CostEvaluation(j_hat=cost_sum / n_counted, stable=True,
                              steps_run=steps_run)

    n_log = steps_run
    traj = Trajectory(
        k=np.arange(n_log),
        t=np.arange(n_log) * dt,
        psi=log_psi[:n_log].copy(),
        psi_dot=log_psi_d[:n_log].copy(),
        s=log_s[:n_log].copy(),
        s_dot=log_s_d[:n_log].copy(),
        z=log_z[:n_log].copy(),
        u=log_u[:n_log].copy(),
    )
    return EpisodeResult(cost=cost, trajectory=traj)


def recompute_cost(traj: Trajectory, perf: WeightPair, burn_in_steps: int,
                   horizon_steps: Optional[int] = None) -> float:
    """Re-evaluate the episode cost from a logged trajectory.

    Uses the same per-step arithmetic as the episode loop so a stable
    episode reproduces j_hat bit for bit.  ``horizon_steps`` defaults to
    the trajectory length (a full, unstopped episode).
    """
    q = perf.wx
    r0 = float(perf.wu[0, 0])
    diag_q = bool(np.allclose(q, np.diag(np.diag(q)), atol=0.0))
    q0, q1, q2, q3 = (float(v) for v in np.diag(q))
    if horizon_steps is None:
        horizon_steps = len(traj)
    total = 0.0
    for k in range(len(traj)):
        if traj.k[k] < burn_in_steps:
            continue
        psi, psi_d = float(traj.psi[k]), float(traj.psi_dot[k])
        s, s_d, u = float(traj.s[k]), float(traj.s_dot[k]), float(traj.u[k])
        if diag_q:
            total += (q0 * psi * psi + q1 * psi_d * psi_d
                      + q2 * s * s + q3 * s_d * s_d + r0 * u * u)
        else:
            x = np.array([psi, psi_d, s, s_d])
            total += float(x @ q @ x) + r0 * u * u
    return total / max(horizon_steps - burn_in_steps, 1)


def write_trajectory_csv(traj: Trajectory, path, downsample: int = 1) -> None:
    """Dump a trajectory as CSV (columns k,t,psi,psi_dot,s,s_dot,z,u)."""
    if downsample < 1:
        raise ValueError("downsample factor must be >= 1")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t", "psi", "psi_dot", "s", "s_dot", "z", "u"])
        for k in range(0, len(traj), downsample):
            writer.writerow([
                int(traj.k[k]), repr(float(traj.t[k])),
                repr(float(traj.psi[k])), repr(float(traj.psi_dot[k])),
                repr(float(traj.s[k])), repr(float(traj.s_dot[k])),
                repr(float(traj.z[k])), repr(float(traj.u[k])),
            ])
