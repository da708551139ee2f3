"""Deterministic cores: Lorenz '63, two-scale Lorenz '96, RK4 integration and
largest-Lyapunov-exponent estimation.

States are plain float64 numpy arrays. Every right-hand side broadcasts over
leading batch axes, so ``rhs`` functions accept ``(d,)`` vectors as well as
``(B, d)`` batches; the integrators exploit this to step ensembles in lockstep.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BlowUpError",
    "ConvergenceError",
    "L63Spec",
    "L96Spec",
    "Trajectory",
    "LyapunovEstimate",
    "l63_rhs",
    "l96_full_rhs",
    "l96_reduced_rhs",
    "rk4_step",
    "integrate",
    "estimate_lyapunov_time",
    "l63_lyapunov_estimate",
]


class BlowUpError(RuntimeError):
    """An integration step produced non-finite values.

    ``step`` is the index of the offending step when known.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ConvergenceError(RuntimeError):
    """An iterative estimate failed its convergence check."""


@dataclass(frozen=True)
class L63Spec:
    """Lorenz '63 parameters; defaults are the classical chaotic values."""

    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0


@dataclass(frozen=True)
class L96Spec:
    """Two-scale Lorenz '96 parameters.

    ``n_large`` large-scale sites, each coupled to ``n_small`` small-scale
    sites; ``h`` coupling strength, ``forcing`` amplitude, ``b``/``c`` spatial
    and temporal scale ratios. Defaults are the canonical strongly-coupled,
    strongly scale-separated regime.
    """

    h: float = 1.0
    forcing: float = 20.0
    b: float = 10.0
    c: float = 10.0
    n_large: int = 8
    n_small: int = 32

    def __post_init__(self) -> None:
        if self.n_large < 4:
            raise ValueError("need at least 4 large-scale sites for cyclic indexing")
        if self.n_small < 1:
            raise ValueError("need at least 1 small-scale site per large-scale site")

    @property
    def full_dim(self) -> int:
        return self.n_large * (1 + self.n_small)


@dataclass
class Trajectory:
    """Uniformly-sampled trajectory: ``states[k]`` is the state at ``t0 + k*dt``."""

    states: np.ndarray  # (n_steps + 1, d)
    dt: float
    t0: float = 0.0

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2:
            raise ValueError("states must be a 2-D (time, dim) array")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])

    def __len__(self) -> int:
        return self.states.shape[0]


def _check_dim(state: np.ndarray, dim: int, what: str) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != dim:
        raise ValueError(f"{what} expects a state of dimension {dim}, got {state.shape[-1]}")
    return state


def l63_rhs(state: np.ndarray, spec: L63Spec = L63Spec()) -> np.ndarray:
    """Lorenz '63 tendencies (sigma(y-x), x(rho-z)-y, xy - beta*z)."""
    state = _check_dim(state, 3, "l63_rhs")
    x, y, z = state[..., 0], state[..., 1], state[..., 2]
    return np.stack(
        [spec.sigma * (y - x), x * (spec.rho - z) - y, x * y - spec.beta * z],
        axis=-1,
    )


def l96_full_rhs(state: np.ndarray, spec: L96Spec = L96Spec()) -> np.ndarray:
    """Two-scale Lorenz '96 tendencies on the concatenated (X, Y) state.

    Layout: ``state[..., :n_large]`` is X, the remaining ``n_large * n_small``
    entries are Y ordered along the single cyclic small-scale ring. All site
    indices wrap periodically. The coupling follows the classical convention:
    each X site is damped by the sum of its Y sites, each Y site is driven by
    +(hc/b) times its parent X.
    """
    spec_dim = spec.full_dim
    state = _check_dim(state, spec_dim, "l96_full_rhs")
    n_x = spec.n_large
    x = state[..., :n_x]
    y = state[..., n_x:]

    coupling = spec.h * spec.c / spec.b
    y_site_sums = y.reshape(y.shape[:-1] + (n_x, spec.n_small)).sum(axis=-1)
    dx = (
        -np.roll(x, 1, axis=-1) * (np.roll(x, 2, axis=-1) - np.roll(x, -1, axis=-1))
        - x
        + spec.forcing
        - coupling * y_site_sums
    )

    x_of_site = np.repeat(x, spec.n_small, axis=-1)
    dy = (
        -spec.c * spec.b * np.roll(y, -1, axis=-1) * (np.roll(y, -2, axis=-1) - np.roll(y, 1, axis=-1))
        - spec.c * y
        + coupling * x_of_site
    )
    return np.concatenate([dx, dy], axis=-1)


def l96_reduced_rhs(state: np.ndarray, spec: L96Spec = L96Spec()) -> np.ndarray:
    """Reduced Lorenz '96 tendencies: the large-scale equation with the
    small-scale coupling term dropped entirely."""
    state = _check_dim(state, spec.n_large, "l96_reduced_rhs")
    return (
        -np.roll(state, 1, axis=-1) * (np.roll(state, 2, axis=-1) - np.roll(state, -1, axis=-1))
        - state
        + spec.forcing
    )


def rk4_step(rhs, state: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of size ``dt``."""
    k1 = rhs(state)
    k2 = rhs(state + 0.5 * dt * k1)
    k3 = rhs(state + 0.5 * dt * k2)
    k4 = rhs(state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(out).all():
        raise BlowUpError("non-finite state after RK4 step")
    return out


def integrate(rhs, x0: np.ndarray, dt: float, n_steps: int, t0: float = 0.0) -> Trajectory:
    """Integrate ``n_steps`` RK4 steps from ``x0``; returns ``n_steps + 1`` states."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    x0 = np.asarray(x0, dtype=float)
    states = np.empty((n_steps + 1, x0.shape[-1]))
    states[0] = x0
    x = x0
    for k in range(n_steps):
        try:
            x = rk4_step(rhs, x, dt)
        except BlowUpError as exc:
            raise BlowUpError(f"integration blew up at step {k}", step=k) from exc
        states[k + 1] = x
    return Trajectory(states=states, dt=dt, t0=t0)


@dataclass
class LyapunovEstimate:
    """Largest-Lyapunov-exponent estimate with its convergence history.

    ``history`` holds the running estimate after each renormalisation event;
    ``time`` is the Lyapunov time 1/exponent, or None when the exponent is not
    positive (contracting dynamics have no finite predictability horizon).
    """

    exponent: float
    dt: float
    n_steps: int
    history: np.ndarray = field(repr=False)

    @property
    def time(self) -> float | None:
        return 1.0 / self.exponent if self.exponent > 0 else None


def estimate_lyapunov_time(
    rhs,
    x0: np.ndarray,
    dt: float,
    n_steps: int = 1_000_000,
    renorm_interval: int = 10,
    spinup_steps: int = 10_000,
    delta0: float = 1e-8,
    seed: int | np.random.Generator | None = 0,
    drift_tol: float = 0.01,
) -> LyapunovEstimate:
    """Estimate the largest Lyapunov exponent by perturbation renormalisation.

    A reference orbit and a copy displaced by ``delta0`` in a random direction
    are advanced together; every ``renorm_interval`` steps the separation is
    measured, its log-growth accumulated, and the perturbation rescaled back
    to ``delta0``. The exponent is the time-averaged log growth rate. The
    first few renormalisation events are discarded so the perturbation can
    align with the leading direction.

    Raises ConvergenceError when the running estimate still drifts by more
    than ``drift_tol`` (relative) over the final 10% of events.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float)
    for _ in range(spinup_steps):
        x = rk4_step(rhs, x, dt)

    direction = rng.standard_normal(x.shape)
    direction /= np.linalg.norm(direction)
    pair = np.stack([x, x + delta0 * direction])

    n_events = n_steps // renorm_interval
    align_discard = min(100, max(1, n_events // 100))
    if n_events <= align_discard + 10:
        raise ValueError("n_steps too small for a meaningful estimate")

    log_growth = np.empty(n_events)
    for ev in range(n_events):
        for _ in range(renorm_interval):
            pair = rk4_step(rhs, pair, dt)
        diff = pair[1] - pair[0]
        dist = np.linalg.norm(diff)
        log_growth[ev] = np.log(dist / delta0)
        pair[1] = pair[0] + (delta0 / dist) * diff

    span = renorm_interval * dt
    kept = log_growth[align_discard:]
    running = np.cumsum(kept) / (span * np.arange(1, kept.size + 1))
    exponent = running[-1]

    _check_drift(running, drift_tol)
    return LyapunovEstimate(exponent=float(exponent), dt=dt, n_steps=n_steps, history=running)


def _check_drift(running: np.ndarray, drift_tol: float) -> None:
    exponent = running[-1]
    start = running[-max(2, running.size // 10)]
    scale = max(abs(exponent), 1e-12)
    drift = abs(exponent - start) / scale
    if drift > drift_tol:
        raise ConvergenceError(
            f"Lyapunov estimate changed {100 * drift:.2f}% over the final 10% of "
            f"steps (tolerance {100 * drift_tol:.1f}%)"
        )


def l63_lyapunov_estimate(
    spec: L63Spec = L63Spec(),
    dt: float = 1e-3,
    n_steps: int = 1_000_000,
    renorm_interval: int = 10,
    spinup_steps: int = 10_000,
    delta0: float = 1e-8,
    seed: int | np.random.Generator | None = 0,
    drift_tol: float = 0.01,
    x0: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> LyapunovEstimate:
    """Largest Lyapunov exponent of the (unforced) Lorenz '63 system.

    Same renormalisation algorithm as :func:`estimate_lyapunov_time`, but with
    the three-variable stepping unrolled into scalar arithmetic, which is
    several times faster than array dispatch at this dimension. Used by the
    command-line ``lyapunov`` subcommand and anywhere lead times need to be
    expressed in Lyapunov-time units.
    """
    import math

    sg, rho, beta = spec.sigma, spec.rho, spec.beta

    def step3(x: float, y: float, z: float) -> tuple[float, float, float]:
        k1x = sg * (y - x); k1y = x * (rho - z) - y; k1z = x * y - beta * z
        ax = x + 0.5 * dt * k1x; ay = y + 0.5 * dt * k1y; az = z + 0.5 * dt * k1z
        k2x = sg * (ay - ax); k2y = ax * (rho - az) - ay; k2z = ax * ay - beta * az
        bx = x + 0.5 * dt * k2x; by = y + 0.5 * dt * k2y; bz = z + 0.5 * dt * k2z
        k3x = sg * (by - bx); k3y = bx * (rho - bz) - by; k3z = bx * by - beta * bz
        cx = x + dt * k3x; cy = y + dt * k3y; cz = z + dt * k3z
        k4x = sg * (cy - cx); k4y = cx * (rho - cz) - cy; k4z = cx * cy - beta * cz
        s = dt / 6.0
        return (
            x + s * (k1x + 2.0 * (k2x + k3x) + k4x),
            y + s * (k1y + 2.0 * (k2y + k3y) + k4y),
            z + s * (k1z + 2.0 * (k2z + k3z) + k4z),
        )

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x, y, z = float(x0[0]), float(x0[1]), float(x0[2])
    for _ in range(spinup_steps):
        x, y, z = step3(x, y, z)

    direction = rng.standard_normal(3)
    direction *= delta0 / np.linalg.norm(direction)
    px, py, pz = x + direction[0], y + direction[1], z + direction[2]

    n_events = n_steps // renorm_interval
    align_discard = min(100, max(1, n_events // 100))
    if n_events <= align_discard + 10:
        raise ValueError("n_steps too small for a meaningful estimate")

    log_growth = np.empty(n_events)
    for ev in range(n_events):
        for _ in range(renorm_interval):
            x, y, z = step3(x, y, z)
            px, py, pz = step3(px, py, pz)
        dx, dy, dz = px - x, py - y, pz - z
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        log_growth[ev] = math.log(dist / delta0)
        scale = delta0 / dist
        px, py, pz = x + scale * dx, y + scale * dy, z + scale * dz
    if not math.isfinite(x + y + z):
        raise BlowUpError("non-finite state during Lyapunov estimation")

    span = renorm_interval * dt
    kept = log_growth[align_discard:]
    running = np.cumsum(kept) / (span * np.arange(1, kept.size + 1))
    _check_drift(running, drift_tol)
    return LyapunovEstimate(
        exponent=float(running[-1]), dt=dt, n_steps=n_steps, history=running
    )
