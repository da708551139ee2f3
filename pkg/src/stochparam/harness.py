"""Experiment orchestration: error diagnosis, parameterised simulation with a
hold-timestep, dataset generation, ensemble forecasting and scoring.

The parameterised update is X_{n+1} = psi0(X_n) + M_n, where psi0 is one RK4
step of the reduced model and M_n comes from the active error model. M_n is
freshly sampled whenever the step index is a multiple of the hold length and
held fixed in between, so longer holds both add memory to the error process
and cut the sampling cost by the same factor.

All simulators run on (batch, dim) state blocks; ensemble members, seed
replicas and weather instances ride the batch axis.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import forcing as _forcing
from . import mdn as _mdn
from .dynamics import BlowUpError, L96Spec, Trajectory, l96_full_rhs, l96_reduced_rhs
from .scores import (
    ScoreReport,
    d_r,
    empirical_autocov,
    energy_score_matrix,
    hellinger_distance,
    kde_fit,
    kl_divergence,
)

__all__ = [
    "PairDataset",
    "WeatherSet",
    "ParamSpec",
    "EnsembleForecast",
    "SimResult",
    "ClimateReference",
    "WeatherScores",
    "OneStepMap",
    "SweepTable",
    "make_psi0",
    "derive_rng",
    "diagnose_model_error",
    "simulate_parameterised",
    "simulate_batch",
    "generate_climate_dataset",
    "partition_weather",
    "run_ensemble",
    "evaluate_climate",
    "evaluate_weather",
    "sweep_tp",
    "describe_spec",
]

SPINUP_TIME = 10.0  # model time units discarded before any statistics

PARAM_KINDS = ("none", "synthetic", "mdn", "deterministic", "poly-ar1", "replay")


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Reproducible keyed stream: the same (seed, key...) always yields the
    same generator, independent of call order elsewhere."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _rk4_raw(rhs, state: np.ndarray, dt: float) -> np.ndarray:
    # no finiteness check: batched simulators track blow-ups per member
    k1 = rhs(state)
    k2 = rhs(state + 0.5 * dt * k1)
    k3 = rhs(state + 0.5 * dt * k2)
    k4 = rhs(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class OneStepMap:
    """One RK4 step of a right-hand side: the reduced one-step model map."""

    rhs: object
    dt: float

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return _rk4_raw(self.rhs, state, self.dt)


def make_psi0(rhs, dt: float) -> OneStepMap:
    return OneStepMap(rhs=rhs, dt=dt)


@dataclass
class PairDataset:
    """Aligned (state, one-step error) pairs diagnosed along a trajectory."""

    x: np.ndarray  # (N, d)
    m: np.ndarray  # (N, d)
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        if self.x.shape != self.m.shape:
            raise ValueError("state and error arrays must have identical shapes")

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class WeatherSet:
    """Contiguous non-overlapping slices of a climate dataset, used as truth
    trajectories for finite-lead-time forecasting."""

    x: np.ndarray  # (n_slices, slice_len, d)
    dt: float
    m: np.ndarray | None = None

    @property
    def n_slices(self) -> int:
        return self.x.shape[0]

    @property
    def slice_len(self) -> int:
        return self.x.shape[1]


@dataclass
class ParamSpec:
    """An error model plus the hold length of the parameterisation.

    kind: 'none' (run the reduced model bare), 'synthetic' (a stochastic
    process, optionally applied multiplicatively), 'mdn', 'deterministic',
    'poly-ar1' (state-conditional models), or 'replay' (feed back a recorded
    error sequence verbatim).
    """

    kind: str
    hold_steps: int = 1
    process: object | None = None  # Ar1Spec | Ar2Spec | Var1Spec
    model: object | None = None  # MdnModel | DeterministicModel | PolyAr1Model
    multiplicative: bool = False
    replay_values: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in PARAM_KINDS:
            raise ValueError(f"unknown parameterisation kind {self.kind!r}")
        if not (isinstance(self.hold_steps, (int, np.integer)) and self.hold_steps >= 1):
            raise ValueError("hold_steps must be a positive integer")
        if self.kind == "synthetic" and self.process is None:
            raise ValueError("synthetic spec needs a process")
        if self.kind in ("mdn", "deterministic", "poly-ar1") and self.model is None:
            raise ValueError(f"{self.kind} spec needs a model")
        if self.kind == "replay":
            if self.replay_values is None:
                raise ValueError("replay spec needs the recorded error sequence")
            self.replay_values = np.asarray(self.replay_values, dtype=float)
        if self.multiplicative and self.kind != "synthetic":
            raise ValueError("multiplicative application only defined for synthetic processes")

    @classmethod
    def none(cls) -> "ParamSpec":
        return cls(kind="none")

    @classmethod
    def synthetic(cls, process, hold_steps: int = 1, multiplicative: bool = False) -> "ParamSpec":
        return cls(kind="synthetic", process=process, hold_steps=hold_steps,
                   multiplicative=multiplicative)

    @classmethod
    def mdn(cls, model, hold_steps: int = 1) -> "ParamSpec":
        return cls(kind="mdn", model=model, hold_steps=hold_steps)

    @classmethod
    def deterministic(cls, model, hold_steps: int = 1) -> "ParamSpec":
        return cls(kind="deterministic", model=model, hold_steps=hold_steps)

    @classmethod
    def poly_ar1(cls, model, hold_steps: int = 1) -> "ParamSpec":
        return cls(kind="poly-ar1", model=model, hold_steps=hold_steps)

    @classmethod
    def replay_of(cls, values) -> "ParamSpec":
        return cls(kind="replay", replay_values=values)


def describe_spec(spec: ParamSpec) -> dict:
    """Plain-dict description of a parameterisation for report provenance."""
    out = {"kind": spec.kind, "hold_steps": int(spec.hold_steps)}
    proc = spec.process
    if isinstance(proc, _forcing.Ar2Spec):
        out["process"] = {"family": "ar2", "phi1": proc.phi1, "phi2": proc.phi2,
                          "sigma_eps2": proc.sigma_eps2}
    elif isinstance(proc, _forcing.Ar1Spec):
        out["process"] = {"family": "ar1", "phi": proc.phi,
                          "innovation_var": proc.innovation_var}
    elif isinstance(proc, _forcing.Var1Spec):
        out["process"] = {
            "family": "var1",
            "phi": proc.phi,
            "sigma": proc.sigma.tolist(),
            "stationary_component_var": float(proc.stationary_cov[0, 0]),
        }
    if spec.multiplicative:
        out["multiplicative"] = True
    model = spec.model
    if isinstance(model, _mdn.MdnModel):
        out["model"] = {"family": "mdn", "mode": model.mode, "hidden": list(model.hidden),
                        "n_components": model.n_components, "seed": model.seed}
    elif isinstance(model, _mdn.DeterministicModel):
        out["model"] = {"family": "deterministic", "hidden": list(model.hidden),
                        "seed": model.seed}
    elif isinstance(model, _mdn.PolyAr1Model):
        out["model"] = {"family": "poly-ar1", "degree": model.degree,
                        "phi_r": model.phi_r, "innovation_var": model.innovation_var}
    return out


# ---------------------------------------------------------------------------
# error-model samplers


class _NoneSampler:
    """No error model; the update is the bare reduced map."""

    def start(self, batch: int, dim: int, rng) -> None:
        pass

    def sample(self, x, step, rng, rows=slice(None)):
        return None


class _SyntheticSampler:
    """A stochastic process stepped once per sampling event. When only a
    subset of batch rows is due (per-row hold lengths), only those rows'
    process states advance: each row's process is frozen between its own
    events."""

    def __init__(self, spec: ParamSpec):
        self.process = spec.process
        self.multiplicative = spec.multiplicative
        self.lags = None

    def start(self, batch: int, dim: int, rng) -> None:
        state = _forcing.sample_stationary_init(self.process, rng, shape=(batch, dim))
        self.lags = state.lags

    def sample(self, x, step, rng, rows=slice(None)):
        proc = self.process
        if isinstance(proc, _forcing.Ar2Spec):
            eps = rng.normal(0.0, math.sqrt(proc.sigma_eps2), size=x.shape)
            value = proc.phi1 * self.lags[0][rows] + proc.phi2 * self.lags[1][rows] + eps
            self.lags[1][rows] = self.lags[0][rows]
            self.lags[0][rows] = value
        elif isinstance(proc, _forcing.Ar1Spec):
            eps = rng.normal(0.0, math.sqrt(proc.innovation_var), size=x.shape)
            value = proc.phi * self.lags[0][rows] + eps
            self.lags[0][rows] = value
        else:
            eps = rng.standard_normal(x.shape) @ proc.chol.T
            value = proc.phi * self.lags[0][rows] + eps
            self.lags[0][rows] = value
        if self.multiplicative:
            return _forcing.multiplicative_error(value, x)
        return value


class _ReplaySampler:
    def __init__(self, values: np.ndarray):
        self.values = values

    def start(self, batch: int, dim: int, rng) -> None:
        if self.values.shape[-1] != dim:
            raise ValueError("replayed error dimension does not match the state")

    def sample(self, x, step, rng, rows=slice(None)):
        if step >= self.values.shape[0]:
            raise ValueError("replayed error sequence shorter than the run")
        return np.broadcast_to(self.values[step], x.shape)


class _MdnSampler:
    def __init__(self, model: _mdn.MdnModel):
        self.model = model
        self.per_site = model.mode == "strongly-local"

    def start(self, batch: int, dim: int, rng) -> None:
        if not self.per_site and self.model.input_dim != dim:
            raise ValueError(
                f"model conditions on dimension {self.model.input_dim}, state has {dim}"
            )

    def sample(self, x, step, rng, rows=slice(None)):
        if self.per_site:
            b, d = x.shape
            params = _mdn.forward(self.model, x.reshape(b * d, 1))
            return _mdn.sample_mixture(params, rng).reshape(b, d)
        params = _mdn.forward(self.model, x)
        return _mdn.sample_mixture(params, rng)


class _DeterministicSampler:
    def __init__(self, model: _mdn.DeterministicModel):
        self.model = model

    def start(self, batch: int, dim: int, rng) -> None:
        if self.model.input_dim != dim:
            raise ValueError("model input dimension does not match the state")

    def sample(self, x, step, rng, rows=slice(None)):
        return self.model.predict(x)


class _PolyAr1Sampler:
    def __init__(self, model: _mdn.PolyAr1Model):
        self.model = model
        self.resid = None

    def start(self, batch: int, dim: int, rng) -> None:
        self.resid = rng.normal(0.0, math.sqrt(self.model.residual_var), size=(batch, dim))

    def sample(self, x, step, rng, rows=slice(None)):
        eta = rng.normal(0.0, math.sqrt(self.model.innovation_var), size=x.shape)
        self.resid[rows] = self.model.phi_r * self.resid[rows] + eta
        return self.model.conditional_mean(x) + self.resid[rows]


def _make_sampler(spec: ParamSpec):
    if spec.kind == "none":
        return _NoneSampler()
    if spec.kind == "synthetic":
        return _SyntheticSampler(spec)
    if spec.kind == "replay":
        return _ReplaySampler(spec.replay_values)
    if spec.kind == "mdn":
        return _MdnSampler(spec.model)
    if spec.kind == "deterministic":
        return _DeterministicSampler(spec.model)
    return _PolyAr1Sampler(spec.model)


# ---------------------------------------------------------------------------
# simulation


@dataclass
class SimResult:
    """Batched simulation output.

    ``states`` is (batch, n_saved, d) for record='all' or (batch, n_saved)
    for record='first' (first state component only). ``blown_at[b]`` is the
    step at which member b went non-finite, or -1. ``events_per_row`` counts
    error-model sampling events per batch row (one per hold window);
    ``sampling_events`` is the per-row count when uniform.
    """

    states: np.ndarray
    dt: float
    save_stride: int
    events_per_row: np.ndarray
    blown_at: np.ndarray

    @property
    def sampling_events(self) -> int:
        unique = np.unique(self.events_per_row)
        if unique.size != 1:
            raise ValueError("event counts differ per row; use events_per_row")
        return int(unique[0])

    @property
    def n_blown(self) -> int:
        return int((self.blown_at >= 0).sum())


def simulate_batch(
    psi0: OneStepMap,
    x0s: np.ndarray,
    spec: ParamSpec,
    n_steps: int,
    rng: np.random.Generator,
    save_stride: int = 1,
    record: str = "all",
    hold_per_row: np.ndarray | None = None,
) -> SimResult:
    """Advance a batch of states under the parameterised update.

    Members that blow up are frozen at NaN and reported in ``blown_at``; the
    rest of the batch continues. States are recorded every ``save_stride``
    steps (step 0 included; ``n_steps`` must be a multiple). ``hold_per_row``
    overrides the spec's hold length with one value per batch row, letting a
    whole hold-length sweep share one integration loop.
    """
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    batch, dim = x0s.shape
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if n_steps % save_stride != 0:
        raise ValueError("n_steps must be a multiple of save_stride")
    if record not in ("all", "first"):
        raise ValueError("record must be 'all' or 'first'")
    if hold_per_row is None:
        hold = np.full(batch, spec.hold_steps, dtype=int)
    else:
        hold = np.asarray(hold_per_row, dtype=int)
        if hold.shape != (batch,) or np.any(hold < 1):
            raise ValueError("hold_per_row must give a positive length per batch row")
    uniform_hold = int(hold[0]) if np.all(hold == hold[0]) else None

    sampler = _make_sampler(spec)
    sampler.start(batch, dim, rng)

    n_saved = n_steps // save_stride + 1
    if record == "all":
        saved = np.empty((batch, n_saved, dim))
        saved[:, 0] = x0s
    else:
        saved = np.empty((batch, n_saved))
        saved[:, 0] = x0s[:, 0]

    blown_at = np.full(batch, -1, dtype=int)
    events = np.zeros(batch, dtype=int)
    x = x0s.copy()
    m_cur = None if spec.kind == "none" else np.zeros((batch, dim))
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            if uniform_hold is not None:
                if n % uniform_hold == 0:
                    value = sampler.sample(x, n, rng)
                    if value is not None:
                        m_cur = value
                    events += 1
            else:
                due = n % hold == 0
                if due.all():
                    value = sampler.sample(x, n, rng)
                    if value is not None:
                        m_cur = value
                    events += 1
                elif due.any():
                    value = sampler.sample(x[due], n, rng, rows=due)
                    if value is not None:
                        m_cur[due] = value
                    events += due
            x = psi0(x)
            if m_cur is not None:
                x = x + m_cur
            finite = np.isfinite(x).all(axis=-1)
            if not finite.all():
                newly = ~finite & (blown_at < 0)
                if newly.any():
                    blown_at[newly] = n
                    x[~finite] = np.nan
            if (n + 1) % save_stride == 0:
                idx = (n + 1) // save_stride
                saved[:, idx] = x if record == "all" else x[:, 0]
    return SimResult(states=saved, dt=psi0.dt, save_stride=save_stride,
                     events_per_row=events, blown_at=blown_at)


def simulate_parameterised(
    psi0: OneStepMap,
    x0: np.ndarray,
    spec: ParamSpec,
    n_steps: int,
    rng: np.random.Generator,
    save_stride: int = 1,
) -> Trajectory:
    """Single parameterised trajectory from ``x0``; raises BlowUpError with
    the step index if the state goes non-finite."""
    result = simulate_batch(psi0, np.asarray(x0, dtype=float)[None, :], spec,
                            n_steps, rng, save_stride=save_stride)
    if result.blown_at[0] >= 0:
        raise BlowUpError(
            f"parameterised simulation blew up at step {result.blown_at[0]}",
            step=int(result.blown_at[0]),
        )
    return Trajectory(states=result.states[0], dt=psi0.dt * save_stride)


# ---------------------------------------------------------------------------
# datasets


def diagnose_model_error(full_traj: Trajectory, psi0: OneStepMap, n_resolved: int,
                         chunk: int = 1_000_000) -> PairDataset:
    """Diagnose the one-step error of the reduced map along a reference
    trajectory: M_n = X_{n+1} - psi0(X_n), with X the resolved block."""
    states = full_traj.states
    if states.shape[0] < 2:
        raise ValueError("trajectory too short to diagnose errors")
    if states.shape[1] < n_resolved:
        raise ValueError("trajectory dimension smaller than the resolved block")
    x = states[:, :n_resolved]
    m = np.empty((x.shape[0] - 1, n_resolved))
    for start in range(0, m.shape[0], chunk):
        stop = min(start + chunk, m.shape[0])
        m[start:stop] = x[start + 1 : stop + 1] - psi0(x[start:stop])
    return PairDataset(x=x[:-1].copy(), m=m, dt=full_traj.dt)


def generate_climate_dataset(
    system: L96Spec,
    n_steps: int,
    dt: float = 1e-3,
    seed: int = 0,
    spinup_time: float = SPINUP_TIME,
) -> PairDataset:
    """Integrate the full two-scale system from a standard-normal initial
    condition, discard the spin-up, and diagnose the reduced-model error
    along the resolved block."""
    rng = derive_rng(seed, 0)
    state = rng.standard_normal(system.full_dim)

    def rhs(s):
        return l96_full_rhs(s, system)

    spinup_steps = int(round(spinup_time / dt))
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(spinup_steps):
            state = _rk4_raw(rhs, state, dt)
        if not np.isfinite(state).all():
            raise BlowUpError("full system blew up during spin-up")
        n_x = system.n_large
        x_block = np.empty((n_steps + 1, n_x))
        x_block[0] = state[:n_x]
        for n in range(n_steps):
            state = _rk4_raw(rhs, state, dt)
            x_block[n + 1] = state[:n_x]
    if not np.isfinite(state).all():
        raise BlowUpError("full system blew up during dataset generation")

    psi0 = make_psi0(lambda s: l96_reduced_rhs(s, system), dt)
    ds = diagnose_model_error(Trajectory(states=x_block, dt=dt), psi0, n_x)
    ds.meta = {
        "system": {"h": system.h, "forcing": system.forcing, "b": system.b,
                   "c": system.c, "n_large": system.n_large, "n_small": system.n_small},
        "dt": dt,
        "seed": seed,
        "spinup_time": spinup_time,
        "n_steps": n_steps,
    }
    return ds


def partition_weather(climate: PairDataset, n_slices: int, slice_len: int) -> WeatherSet:
    """Cut the climate dataset into contiguous non-overlapping slices."""
    needed = n_slices * slice_len
    if needed > len(climate):
        raise ValueError(
            f"requested {n_slices} x {slice_len} = {needed} pairs, dataset has {len(climate)}"
        )
    d = climate.x.shape[1]
    x = climate.x[:needed].reshape(n_slices, slice_len, d)
    m = climate.m[:needed].reshape(n_slices, slice_len, d)
    return WeatherSet(x=x, m=m, dt=climate.dt)


# ---------------------------------------------------------------------------
# ensembles and evaluation


@dataclass
class EnsembleForecast:
    """Ensemble members alongside the verifying truth, on a common save grid.

    All members start from the truth's initial state; members that blew up
    are excluded (their count is kept in ``n_blown``).
    """

    members: np.ndarray  # (n_members, n_saved, d)
    truth: np.ndarray  # (n_saved, d)
    dt: float  # time between saved states
    n_blown: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.truth.shape[0])


def run_ensemble(
    psi0: OneStepMap,
    truth: np.ndarray,
    spec: ParamSpec,
    n_ens: int,
    rng: np.random.Generator,
    save_stride: int = 1,
    max_blown_frac: float = 0.1,
) -> EnsembleForecast:
    """Forecast ensemble from the truth's initial state.

    ``truth`` is the full-resolution verifying trajectory (n_steps+1, d).
    Synthetic error processes start from stationary draws: the truth's actual
    process state is not observable to a forecaster. The run fails if more
    than ``max_blown_frac`` of the members blow up.
    """
    truth = np.asarray(truth, dtype=float)
    n_steps = truth.shape[0] - 1
    x0s = np.broadcast_to(truth[0], (n_ens, truth.shape[1])).copy()
    result = simulate_batch(psi0, x0s, spec, n_steps, rng, save_stride=save_stride)
    n_blown = result.n_blown
    if n_blown > max_blown_frac * n_ens:
        raise BlowUpError(f"{n_blown}/{n_ens} ensemble members blew up")
    keep = result.blown_at < 0
    return EnsembleForecast(
        members=result.states[keep],
        truth=truth[::save_stride],
        dt=psi0.dt * save_stride,
        n_blown=n_blown,
    )


@dataclass
class ClimateReference:
    """Stationary statistics of a reference run: the first-component density
    estimate and autocovariance curve that candidate runs are scored against."""

    kde: object
    autocov: AutocovCurve
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_series(
        cls,
        series: np.ndarray,
        dt: float,
        lag_max: float,
        kde_stride: int = 100,
        acov_stride: int = 10,
        grid_size: int = 2048,
    ) -> "ClimateReference":
        series = np.asarray(series, dtype=float)
        return cls(
            kde=kde_fit(series[::kde_stride], grid_size=grid_size),
            autocov=empirical_autocov(series, dt, lag_max, stride=acov_stride),
            meta={"n_samples": series.size, "dt": dt, "lag_max": lag_max,
                  "kde_stride": kde_stride, "acov_stride": acov_stride},
        )


def evaluate_climate(
    psi0: OneStepMap,
    spec: ParamSpec,
    x0: np.ndarray,
    n_steps: int,
    rng: np.random.Generator,
    reference: "ClimateReference | list[ClimateReference]",
    lag_max: float,
    spinup_steps: int | None = None,
    kde_stride: int = 100,
    acov_stride: int = 10,
    grid_size: int = 2048,
    meta: dict | None = None,
):
    """Simulate the parameterised system and score its stationary statistics
    against a reference: KL and Hellinger on the first-component density,
    relative L2 error on the first-component autocovariance.

    A 2-D ``x0`` runs one replica per row (sharing the rng stream) and returns
    a list of reports, one per row, scored against the matching reference
    (``reference`` may be one object or a per-row list).
    """
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    x0s = x0[None, :] if single else x0
    if spinup_steps is None:
        spinup_steps = int(round(SPINUP_TIME / psi0.dt))
    refs = [reference] * x0s.shape[0] if isinstance(reference, ClimateReference) else list(reference)
    if len(refs) != x0s.shape[0]:
        raise ValueError("need one reference per initial-condition row")

    result = simulate_batch(psi0, x0s, spec, n_steps, rng, record="first")
    if result.n_blown:
        raise BlowUpError(f"{result.n_blown} climate run(s) blew up")
    reports = []
    for row, ref in zip(result.states, refs):
        series = row[spinup_steps:]
        run_kde = kde_fit(series[::kde_stride], grid_size=grid_size)
        run_acov = empirical_autocov(series, psi0.dt, lag_max, stride=acov_stride)
        report = ScoreReport(
            kl=kl_divergence(ref.kde, run_kde),
            hellinger=hellinger_distance(ref.kde, run_kde),
            d_r=d_r(ref.autocov, run_acov),
            metadata={
                "spec": describe_spec(spec),
                "n_steps": int(n_steps),
                "dt": psi0.dt,
                "spinup_steps": int(spinup_steps),
                "lag_max": lag_max,
                "kde_stride": kde_stride,
                "acov_stride": acov_stride,
                **(meta or {}),
            },
        )
        reports.append(report)
    return reports[0] if single else reports


@dataclass
class WeatherScores:
    """Mean energy score per lead time with its standard error over weather
    instances; ``per_instance`` keeps the full (instance, lead) score matrix."""

    lead_times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    per_instance: np.ndarray

    @property
    def curve(self) -> np.ndarray:
        """(lead time, mean score) pairs."""
        return np.column_stack([self.lead_times, self.mean])


def evaluate_weather(
    psi0: OneStepMap,
    spec: ParamSpec,
    weather: WeatherSet,
    n_ens: int,
    lead_stride: int,
    n_leads: int,
    rng: np.random.Generator,
    time_scale: float = 1.0,
    n_instances: int | None = None,
    threads: int = 1,
    max_blown_frac: float = 0.1,
    instances_per_batch: int = 1,
) -> WeatherScores:
    """Mean energy score as a function of lead time, averaged over weather
    instances.

    Ensembles start from each instance's initial truth state and are scored
    against the truth every ``lead_stride`` steps, ``n_leads`` times (lead 0
    included, where the score is zero by construction). ``time_scale``
    converts lead times from model time units (e.g. into Lyapunov times).
    Instances are independent; ``instances_per_batch`` fuses groups of them
    into one batched simulation (much faster when sampling dominates, as for
    network models). Work is split over pre-derived per-group rng streams, so
    results are independent of ``threads``.
    """
    n_inst = weather.n_slices if n_instances is None else min(n_instances, weather.n_slices)
    if n_inst < 1:
        raise ValueError("need at least one weather instance")
    n_steps = lead_stride * (n_leads - 1)
    if n_steps + 1 > weather.slice_len:
        raise ValueError("lead horizon exceeds the weather slice length")

    group = max(1, instances_per_batch)
    starts = list(range(0, n_inst, group))
    child_seeds = rng.bit_generator.seed_seq.spawn(len(starts))
    per_instance = np.empty((n_inst, n_leads))
    dim = weather.x.shape[2]

    def run_group(g: int) -> np.ndarray:
        k0 = starts[g]
        k1 = min(k0 + group, n_inst)
        g_rng = np.random.default_rng(child_seeds[g])
        x0s = np.repeat(weather.x[k0:k1, 0], n_ens, axis=0)
        result = simulate_batch(psi0, x0s, spec, n_steps, g_rng, save_stride=lead_stride)
        states = result.states.reshape(k1 - k0, n_ens, n_leads, dim)
        blown = (result.blown_at >= 0).reshape(k1 - k0, n_ens)
        out = np.empty((k1 - k0, n_leads))
        for j in range(k1 - k0):
            n_blown = int(blown[j].sum())
            if n_blown > max_blown_frac * n_ens:
                raise BlowUpError(f"{n_blown}/{n_ens} members blew up in instance {k0 + j}")
            members = states[j][~blown[j]].transpose(1, 0, 2)  # (lead, member, d)
            truth = weather.x[k0 + j, : n_steps + 1 : lead_stride]
            out[j] = energy_score_matrix(members[None], truth[None])[0]
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for g, scores in enumerate(pool.map(run_group, range(len(starts)))):
                per_instance[starts[g] : starts[g] + scores.shape[0]] = scores
    else:
        for g in range(len(starts)):
            scores = run_group(g)
            per_instance[starts[g] : starts[g] + scores.shape[0]] = scores

    lead_times = (np.arange(n_leads) * lead_stride * psi0.dt) / time_scale
    stderr = per_instance.std(axis=0, ddof=1) / math.sqrt(n_inst) if n_inst > 1 else np.zeros(n_leads)
    return WeatherScores(
        lead_times=lead_times,
        mean=per_instance.mean(axis=0),
        stderr=stderr,
        per_instance=per_instance,
    )


# ---------------------------------------------------------------------------
# hold-length sweeps


@dataclass
class SweepTable:
    """Scores per hold length; rows are (hold_steps, ScoreReport)."""

    rows: list

    def hold_values(self) -> list[int]:
        return [tp for tp, _ in self.rows]

    def scores(self, metric: str) -> np.ndarray:
        """Score per row. 'kl', 'hellinger', 'd_r', or 'energy' (the final
        lead time of the energy curve)."""
        out = []
        for _, report in self.rows:
            if metric == "energy":
                if report.energy_curve is None:
                    raise ValueError("report has no energy curve")
                out.append(report.energy_curve[-1, 1])
            else:
                value = getattr(report, metric)
                if value is None:
                    raise ValueError(f"report has no {metric} score")
                out.append(value)
        return np.asarray(out, dtype=float)

    def argmin(self, metric: str) -> int:
        """Hold length with the best (lowest) score for ``metric``."""
        return self.hold_values()[int(np.argmin(self.scores(metric)))]


def sweep_tp(spec_for_tp, tp_values, evaluate_fn) -> SweepTable:
    """Evaluate a parameterisation family across hold lengths.

    ``spec_for_tp(tp)`` builds the ParamSpec for one hold length;
    ``evaluate_fn(spec, tp)`` returns its ScoreReport.
    """
    rows = []
    for tp in tp_values:
        report = evaluate_fn(spec_for_tp(tp), tp)
        rows.append((int(tp), report))
    return SweepTable(rows=rows)
