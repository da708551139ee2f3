"""Synthetic stochastic error processes and their Markovian approximations.

Implements the scalar AR(2) process and the two AR(1) surrogates derived from
its Yule-Walker structure (the one-step-matching "natural" surrogate and the
dominant-root surrogate with extended memory), plus a spatially-correlated
VAR(1) process for multiplicative forcing. Process state carries array-valued
lags, so one state object can drive any batch shape of independent component
processes in lockstep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Ar1Spec",
    "Ar2Spec",
    "Var1Spec",
    "ProcessState",
    "equicorrelation",
    "ar2_gamma0",
    "ar2_roots",
    "ar2_autocov_closed_form",
    "ar1_autocov",
    "derive_ar1_natural",
    "derive_ar1_plus",
    "ar1_step",
    "ar2_step",
    "var1_step",
    "multiplicative_error",
    "sample_stationary_init",
]


@dataclass(frozen=True)
class Ar2Spec:
    """Second-order autoregression M_n = phi1*M_{n-1} + phi2*M_{n-2} + eps_n.

    Defaults give a mildly non-Markovian process with stationary variance 1e-4.
    """

    phi1: float = 0.45
    phi2: float = 0.5
    sigma_eps2: float = 1.425e-5

    def __post_init__(self) -> None:
        if not (
            self.phi2 + self.phi1 < 1.0
            and self.phi2 - self.phi1 < 1.0
            and abs(self.phi2) < 1.0
        ):
            raise ValueError("AR(2) coefficients outside the stationarity triangle")
        if self.sigma_eps2 < 0:
            raise ValueError("innovation variance must be nonnegative")

    @property
    def order(self) -> int:
        return 2


@dataclass(frozen=True)
class Ar1Spec:
    """First-order autoregression M_n = phi*M_{n-1} + eps_n."""

    phi: float
    innovation_var: float

    def __post_init__(self) -> None:
        if abs(self.phi) >= 1.0:
            raise ValueError("|phi| must be < 1 for stationarity")
        if self.innovation_var < 0:
            raise ValueError("innovation variance must be nonnegative")

    @property
    def order(self) -> int:
        return 1

    @property
    def gamma0(self) -> float:
        return self.innovation_var / (1.0 - self.phi**2)


def equicorrelation(dim: int, alpha: float, kappa: float) -> np.ndarray:
    """kappa * (identity + alpha * off-diagonal ones): the constant-correlation
    covariance used for spatially-correlated innovations."""
    return kappa * ((1.0 - alpha) * np.eye(dim) + alpha * np.ones((dim, dim)))


@dataclass(frozen=True, eq=False)
class Var1Spec:
    """Vector AR(1) with scalar coefficient: M_n = phi*M_{n-1} + eps_n,
    eps_n ~ N(0, sigma). ``sigma`` must be symmetric positive-definite; its
    Cholesky factor is computed once at construction."""

    phi: float = 0.999
    sigma: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if abs(self.phi) >= 1.0:
            raise ValueError("|phi| must be < 1 for stationarity")
        sigma = self.sigma if self.sigma is not None else equicorrelation(3, -0.45, 1.81e-10)
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError("sigma must be a square matrix")
        if not np.allclose(sigma, sigma.T):
            raise ValueError("sigma must be symmetric")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise ValueError("sigma must be positive-definite") from exc
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_chol", chol)

    @property
    def chol(self) -> np.ndarray:
        return self._chol  # type: ignore[attr-defined]

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def order(self) -> int:
        return 1

    @property
    def stationary_cov(self) -> np.ndarray:
        return self.sigma / (1.0 - self.phi**2)


@dataclass
class ProcessState:
    """Mutable lag buffer plus the rng stream that drives the innovations.

    ``lags[0]`` is the most recent value; each lag has the value shape of the
    process (scalar (), a component vector (d,), or a batch (B, d)).
    """

    lags: np.ndarray  # (order,) + value_shape
    rng: np.random.Generator

    def __post_init__(self) -> None:
        self.lags = np.asarray(self.lags, dtype=float)

    @property
    def order(self) -> int:
        return self.lags.shape[0]


def ar2_gamma0(spec: Ar2Spec) -> float:
    """Stationary variance of the AR(2) process, in closed form."""
    p1, p2 = spec.phi1, spec.phi2
    return (1.0 - p2) * spec.sigma_eps2 / ((1.0 + p2) * (1.0 - p1 - p2) * (1.0 + p1 - p2))


def ar2_roots(spec: Ar2Spec) -> tuple[complex, complex]:
    """Characteristic roots phi_+/- = (phi1 +- sqrt(phi1^2 + 4 phi2)) / 2."""
    disc = complex(spec.phi1**2 + 4.0 * spec.phi2)
    root = np.sqrt(disc)
    return 0.5 * (spec.phi1 + root), 0.5 * (spec.phi1 - root)


def ar2_autocov_closed_form(spec: Ar2Spec, lag) -> float | np.ndarray:
    """Autocovariance gamma(lag) of the AR(2) process via the Yule-Walker
    recurrence solution gamma(m) = A*phi_+^m + B*phi_-^m.

    ``lag`` may be a nonnegative integer or an array of them. Repeated
    characteristic roots are rejected (the confluent form is out of scope).
    """
    lag_arr = np.asarray(lag)
    if np.any(lag_arr < 0):
        raise ValueError("lags must be nonnegative")
    plus, minus = ar2_roots(spec)
    if plus == minus:
        raise ValueError("repeated characteristic roots: closed form is degenerate")
    g0 = ar2_gamma0(spec)
    g1 = spec.phi1 * g0 / (1.0 - spec.phi2)
    a = (g1 - g0 * minus) / (plus - minus)
    b = g0 - a
    values = (a * plus**lag_arr + b * minus**lag_arr).real
    return float(values) if np.isscalar(lag) else values


def ar1_autocov(spec: Ar1Spec, lag) -> float | np.ndarray:
    """Autocovariance gamma(lag) = phi^lag * gamma(0) of an AR(1) process."""
    lag_arr = np.asarray(lag)
    if np.any(lag_arr < 0):
        raise ValueError("lags must be nonnegative")
    values = spec.gamma0 * spec.phi ** np.asarray(lag_arr, dtype=float)
    return float(values) if np.isscalar(lag) else values


def derive_ar1_natural(spec: Ar2Spec) -> Ar1Spec:
    """AR(1) surrogate matching the AR(2)'s one-step transition density
    (and hence its stationary distribution): phi = phi1 / (1 - phi2)."""
    if spec.phi2 == 1.0:
        raise ValueError("phi2 = 1 has no natural AR(1) reduction")
    return Ar1Spec(
        phi=spec.phi1 / (1.0 - spec.phi2),
        innovation_var=spec.sigma_eps2 / (1.0 - spec.phi2**2),
    )


def derive_ar1_plus(spec: Ar2Spec) -> Ar1Spec:
    """AR(1) surrogate with coefficient equal to the dominant characteristic
    root of the AR(2), keeping the same stationary variance.

    The slower root decay reproduces the AR(2)'s long-range memory better than
    the natural surrogate. Requires real distinct roots.
    """
    disc = spec.phi1**2 + 4.0 * spec.phi2
    if disc < 0:
        raise ValueError("complex characteristic roots: no dominant real root exists")
    if disc == 0:
        raise ValueError("repeated characteristic roots: surrogate is degenerate")
    phi_plus = 0.5 * (spec.phi1 + math.sqrt(disc))
    g0 = ar2_gamma0(spec)
    return Ar1Spec(phi=phi_plus, innovation_var=g0 * (1.0 - phi_plus**2))


def ar1_step(state: ProcessState, spec: Ar1Spec):
    """Advance the AR(1) process one step; returns the new value and updates
    the lag buffer in place."""
    if state.order != 1:
        raise ValueError("AR(1) state must hold exactly one lag")
    eps = state.rng.normal(0.0, math.sqrt(spec.innovation_var), size=state.lags[0].shape)
    value = spec.phi * state.lags[0] + eps
    state.lags[0] = value
    return value


def ar2_step(state: ProcessState, spec: Ar2Spec):
    """Advance the AR(2) process one step; returns the new value and shifts
    the two-deep lag buffer in place."""
    if state.order != 2:
        raise ValueError("AR(2) state must hold exactly two lags")
    eps = state.rng.normal(0.0, math.sqrt(spec.sigma_eps2), size=state.lags[0].shape)
    value = spec.phi1 * state.lags[0] + spec.phi2 * state.lags[1] + eps
    state.lags[1] = state.lags[0]
    state.lags[0] = value
    return value


def var1_step(state: ProcessState, spec: Var1Spec) -> np.ndarray:
    """Advance the VAR(1) process one step. Correlated innovations are drawn
    by applying the Cholesky factor of sigma to iid standard normals."""
    if state.order != 1:
        raise ValueError("VAR(1) state must hold exactly one lag")
    if state.lags.shape[-1] != spec.dim:
        raise ValueError("state dimension does not match sigma")
    z = state.rng.standard_normal(state.lags[0].shape)
    eps = z @ spec.chol.T
    value = spec.phi * state.lags[0] + eps
    state.lags[0] = value
    return value


def multiplicative_error(m_tilde: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Elementwise (Hadamard) modulation of the pre-step state by the process
    value: the multiplicative error is m_tilde * x, component by component."""
    m_tilde = np.asarray(m_tilde, dtype=float)
    x = np.asarray(x, dtype=float)
    if m_tilde.shape != x.shape:
        raise ValueError(f"shape mismatch: {m_tilde.shape} vs {x.shape}")
    return m_tilde * x


def sample_stationary_init(
    spec: Ar1Spec | Ar2Spec | Var1Spec,
    rng: np.random.Generator,
    shape: tuple[int, ...] = (),
) -> ProcessState:
    """Draw lag values from the process's stationary distribution.

    ``shape`` is the value shape of the process (e.g. ``(3,)`` for three
    independent scalar components, ``(B, 3)`` for a batch of them). For the
    VAR(1) process the trailing axis must equal the process dimension and the
    stationary draw is correlated accordingly.
    """
    if isinstance(spec, Ar1Spec):
        lag = rng.normal(0.0, math.sqrt(spec.gamma0), size=shape)
        return ProcessState(lags=np.asarray(lag)[None, ...], rng=rng)
    if isinstance(spec, Ar2Spec):
        g0 = ar2_gamma0(spec)
        g1 = spec.phi1 * g0 / (1.0 - spec.phi2)
        # 2x2 stationary covariance [[g0, g1], [g1, g0]] via its Cholesky factor
        z1 = rng.standard_normal(shape)
        z2 = rng.standard_normal(shape)
        first = math.sqrt(g0) * z1
        second = (g1 / g0) * first + math.sqrt(max(g0 - g1**2 / g0, 0.0)) * z2 if g0 > 0 else first
        return ProcessState(lags=np.stack([first, second]), rng=rng)
    if isinstance(spec, Var1Spec):
        if shape == () or shape[-1] != spec.dim:
            raise ValueError(f"value shape must end with the process dimension {spec.dim}")
        chol_stat = np.linalg.cholesky(spec.stationary_cov)
        lag = rng.standard_normal(shape) @ chol_stat.T
        return ProcessState(lags=lag[None, ...], rng=rng)
    raise TypeError(f"unsupported process spec: {type(spec).__name__}")
