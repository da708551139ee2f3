"""Data-driven conditional models of the one-step error given the resolved state.

Mixture density networks (an MLP trunk with a Gaussian-mixture head) at three
locality levels, a deterministic point-estimate network with the same trunk,
and a polynomial-mean + AR(1)-residual baseline. Networks are plain numpy with
hand-rolled backpropagation (verified against finite differences) and Adam.

Locality levels
---------------
nonlocal       full state in, full covariance per mixture component
weakly-local   full state in, diagonal covariance (components of the error
               conditionally independent given the state)
strongly-local scalar site value in, scalar variance; one model shared across
               sites, trained on site-pooled pairs
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MODES",
    "MdnModel",
    "MixtureParams",
    "TrainConfig",
    "DeterministicModel",
    "PolyAr1Model",
    "TrainingDivergedError",
    "head_size",
    "forward",
    "log_likelihood",
    "mixture_mean",
    "sample_mixture",
    "train_mdn",
    "train_deterministic",
    "gradient_check",
    "fit_poly_ar1",
]

MODES = ("nonlocal", "weakly-local", "strongly-local")

# minimum diagonal scale after standardisation; guards against mixture collapse
DIAG_FLOOR = 1e-6

_LOG_2PI = math.log(2.0 * math.pi)


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite; ``epoch`` is where it happened."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TrainConfig:
    """Optimiser and architecture settings for network training."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 1024
    epochs: int = 50
    val_fraction: float = 0.1
    patience: int = 5
    seed: int = 0
    hidden: tuple[int, ...] = (128, 128, 128, 128)
    n_components: int = 32
    max_train: int | None = None  # optional cap on training pairs (fast presets)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.val_fraction <= 0.5:
            raise ValueError("val_fraction must be in (0, 0.5]")

    @classmethod
    def fast(cls, **overrides) -> "TrainConfig":
        """Small-network preset for quick runs and CI-scale experiments; the
        epoch budget is chosen so the full-covariance head still converges."""
        defaults = dict(hidden=(64, 64), n_components=8, epochs=25, max_train=400_000)
        defaults.update(overrides)
        return cls(**defaults)


def head_size(mode: str, target_dim: int, n_components: int) -> int:
    """Number of head outputs: mixture logits + means + covariance factors.

    Grows quadratically with the error dimension for the nonlocal mode,
    linearly for weakly-local, and is dimension-independent for strongly-local
    (which always models a scalar site value).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    d = 1 if mode == "strongly-local" else target_dim
    k = n_components
    if mode == "nonlocal":
        return k * (1 + d + d * (d + 1) // 2)
    return k * (1 + 2 * d)


@dataclass
class MixtureParams:
    """Gaussian-mixture parameters, optionally batched over leading axes.

    Exactly one of ``scale_tril`` (lower-triangular covariance factors,
    shape (..., K, d, d)) and ``scales`` (per-dimension standard deviations,
    shape (..., K, d)) is set.
    """

    weights: np.ndarray  # (..., K)
    means: np.ndarray  # (..., K, d)
    scale_tril: np.ndarray | None = None
    scales: np.ndarray | None = None

    @property
    def n_components(self) -> int:
        return self.weights.shape[-1]

    @property
    def dim(self) -> int:
        return self.means.shape[-1]

    def validate(self) -> None:
        if (self.scale_tril is None) == (self.scales is None):
            raise ValueError("exactly one of scale_tril/scales must be set")
        if not np.allclose(self.weights.sum(axis=-1), 1.0, atol=1e-9):
            raise ValueError("mixture weights must sum to 1")
        if np.any(self.weights <= 0):
            raise ValueError("mixture weights must be strictly positive")
        for arr in (self.weights, self.means, self.scale_tril, self.scales):
            if arr is not None and not np.isfinite(arr).all():
                raise ValueError("non-finite mixture parameters")
        if self.scales is not None and np.any(self.scales <= 0):
            raise ValueError("scales must be strictly positive")
        if self.scale_tril is not None:
            diag = np.diagonal(self.scale_tril, axis1=-2, axis2=-1)
            if np.any(diag <= 0):
                raise ValueError("triangular factors need strictly positive diagonals")


@dataclass
class MdnModel:
    """Mixture density network: MLP trunk, Gaussian-mixture head, and the
    standardisation statistics of its training data.

    ``weights`` alternates (W, b) per layer, trunk first, head last; all
    matrices are (fan_in, fan_out) for batch-first matmul.
    """

    mode: str
    input_dim: int
    target_dim: int
    n_components: int
    hidden: tuple[int, ...]
    weights: list[np.ndarray]
    x_mean: np.ndarray
    x_std: np.ndarray
    m_mean: np.ndarray
    m_std: np.ndarray
    seed: int | None = None
    loss_history: dict = field(default_factory=dict)

    @property
    def cov_kind(self) -> str:
        return "full" if self.mode == "nonlocal" else "diag"

    def forward(self, x: np.ndarray) -> MixtureParams:
        return forward(self, x)


def _init_trunk(rng, sizes: list[int]) -> list[np.ndarray]:
    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in))
        weights.append(np.zeros(fan_out))
    return weights


def _init_head_bias(rng, k: int, d: int, cov: str) -> np.ndarray:
    """Head bias making the initial mixture roughly standard normal: uniform
    weights, jittered near-zero means, unit scales."""
    parts = [np.zeros(k), 0.3 * rng.standard_normal(k * d)]
    parts.append(np.zeros(k * d))  # log-scales -> exp(0) = 1
    if cov == "full":
        parts.append(np.zeros(k * (d * (d - 1) // 2)))
    return np.concatenate(parts)


def _new_model(mode: str, input_dim: int, target_dim: int, config: TrainConfig,
               stats: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]) -> MdnModel:
    rng = np.random.default_rng(config.seed)
    cov = "full" if mode == "nonlocal" else "diag"
    p = head_size(mode, target_dim, config.n_components)
    sizes = [input_dim, *config.hidden]
    weights = _init_trunk(rng, sizes)
    weights.append(0.01 * rng.standard_normal((sizes[-1], p)) / math.sqrt(sizes[-1]))
    weights.append(_init_head_bias(rng, config.n_components, target_dim, cov))
    x_mean, x_std, m_mean, m_std = stats
    return MdnModel(
        mode=mode,
        input_dim=input_dim,
        target_dim=target_dim,
        n_components=config.n_components,
        hidden=tuple(config.hidden),
        weights=weights,
        x_mean=x_mean,
        x_std=x_std,
        m_mean=m_mean,
        m_std=m_std,
        seed=config.seed,
    )


def _net_apply(weights: list[np.ndarray], x: np.ndarray):
    """Trunk + head forward pass; returns head activations and the per-layer
    post-tanh activations (for backprop)."""
    hs = [x]
    h = x
    for i in range(0, len(weights) - 2, 2):
        h = np.tanh(h @ weights[i] + weights[i + 1])
        hs.append(h)
    a = h @ weights[-2] + weights[-1]
    return a, hs


def _split_head(a: np.ndarray, k: int, d: int, cov: str):
    """Split flat head activations into logits, means, log-scales, off-diagonals."""
    b = a.shape[:-1]
    logits = a[..., :k]
    means = a[..., k : k + k * d].reshape(b + (k, d))
    s = a[..., k + k * d : k + 2 * k * d].reshape(b + (k, d))
    off = None
    if cov == "full":
        n_off = d * (d - 1) // 2
        off = a[..., k + 2 * k * d :].reshape(b + (k, n_off))
    return logits, means, s, off


def _build_tril(s: np.ndarray, off: np.ndarray, d: int) -> np.ndarray:
    tril = np.zeros(s.shape[:-1] + (d, d))
    rows, cols = np.tril_indices(d, -1)
    tril[..., rows, cols] = off
    idx = np.arange(d)
    tril[..., idx, idx] = np.exp(s) + DIAG_FLOOR
    return tril


def _solve_lower(tril: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Forward substitution for L u = v, batched over leading axes."""
    d = v.shape[-1]
    u = np.empty_like(v)
    for i in range(d):
        acc = v[..., i]
        if i:
            acc = acc - np.einsum("...j,...j->...", tril[..., i, :i], u[..., :i])
        u[..., i] = acc / tril[..., i, i]
    return u


def _solve_lower_t(tril: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Backward substitution for L^T w = u, batched over leading axes."""
    d = u.shape[-1]
    w = np.empty_like(u)
    for i in reversed(range(d)):
        acc = u[..., i]
        if i < d - 1:
            acc = acc - np.einsum("...j,...j->...", tril[..., i + 1 :, i], w[..., i + 1 :])
        w[..., i] = acc / tril[..., i, i]
    return w


def _params_from_head(a: np.ndarray, k: int, d: int, cov: str) -> MixtureParams:
    if not np.isfinite(a).all():
        raise FloatingPointError("non-finite network activations")
    logits, means, s, off = _split_head(a, k, d, cov)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expl = np.exp(shifted)
    weights = expl / expl.sum(axis=-1, keepdims=True)
    if cov == "full":
        return MixtureParams(weights=weights, means=means, scale_tril=_build_tril(s, off, d))
    return MixtureParams(weights=weights, means=means, scales=np.exp(s) + DIAG_FLOOR)


def forward(model: MdnModel, x: np.ndarray) -> MixtureParams:
    """Mixture parameters of the error distribution at state(s) ``x``.

    ``x`` is unstandardised; the returned parameters are in the raw target
    space (standardisation is folded into the means and scale factors).
    Accepts a single state ``(input_dim,)`` or a batch ``(B, input_dim)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and model.input_dim == 1 and x.shape[0] != 1:
        x = x[:, None]  # batch of scalar sites
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"expected input dimension {model.input_dim}, got {x.shape[-1]}")
    x_std = (x - model.x_mean) / model.x_std
    a, _ = _net_apply(model.weights, x_std)
    params = _params_from_head(a, model.n_components, model.target_dim, model.cov_kind)
    # de-standardise: mu -> sigma*mu + mean, L -> diag(sigma) L
    means = params.means * model.m_std + model.m_mean
    if params.scale_tril is not None:
        tril = params.scale_tril * model.m_std[..., :, None]
        return MixtureParams(weights=params.weights, means=means, scale_tril=tril)
    return MixtureParams(weights=params.weights, means=means, scales=params.scales * model.m_std)


def log_likelihood(params: MixtureParams, m: np.ndarray) -> float | np.ndarray:
    """Log-density of ``m`` under the Gaussian mixture, via max-shifted
    log-sum-exp over components. Batched inputs return an array."""
    m = np.asarray(m, dtype=float)
    if m.shape[-1] != params.dim:
        raise ValueError(f"target dimension {m.shape[-1]} != mixture dimension {params.dim}")
    scalar_in = m.ndim == 1 and params.weights.ndim == 1
    v = m[..., None, :] - params.means  # (..., K, d)
    if params.scale_tril is not None:
        u = _solve_lower(params.scale_tril, v)
        logdet = np.log(np.diagonal(params.scale_tril, axis1=-2, axis2=-1)).sum(axis=-1)
    else:
        u = v / params.scales
        logdet = np.log(params.scales).sum(axis=-1)
    log_comp = -0.5 * params.dim * _LOG_2PI - logdet - 0.5 * (u**2).sum(axis=-1)
    z = np.log(params.weights) + log_comp
    zmax = z.max(axis=-1, keepdims=True)
    out = zmax[..., 0] + np.log(np.exp(z - zmax).sum(axis=-1))
    return float(out) if scalar_in else out


def mixture_mean(params: MixtureParams) -> np.ndarray:
    """Mean of the mixture: the weight-averaged component means."""
    return (params.weights[..., None] * params.means).sum(axis=-2)


def sample_mixture(params: MixtureParams, rng: np.random.Generator) -> np.ndarray:
    """Draw one vector per batch element: pick a component by weight, then a
    Gaussian draw through its scale factor."""
    batch = params.weights.shape[:-1]
    k, d = params.n_components, params.dim
    cum = np.cumsum(params.weights, axis=-1)
    r = rng.random(batch + (1,))
    idx = np.minimum((r > cum).sum(axis=-1), k - 1)  # (...,)
    z = rng.standard_normal(batch + (d,))
    take = np.take_along_axis
    mu = take(params.means, idx[..., None, None], axis=-2)[..., 0, :]
    if params.scale_tril is not None:
        tril = take(params.scale_tril, idx[..., None, None, None], axis=-3)[..., 0, :, :]
        return mu + np.einsum("...ij,...j->...i", tril, z)
    scales = take(params.scales, idx[..., None, None], axis=-2)[..., 0, :]
    return mu + scales * z


# ---------------------------------------------------------------------------
# training


def _nll_and_grads(weights: list[np.ndarray], x: np.ndarray, m: np.ndarray,
                   k: int, d: int, cov: str):
    """Mean negative log-likelihood of the batch and its gradient with respect
    to every weight array (standardised inputs/targets)."""
    a, hs = _net_apply(weights, x)
    logits, means, s, off = _split_head(a, k, d, cov)
    n = x.shape[0]

    shifted = logits - logits.max(axis=-1, keepdims=True)
    expl = np.exp(shifted)
    wmix = expl / expl.sum(axis=-1, keepdims=True)  # (B, K)
    log_w = shifted - np.log(expl.sum(axis=-1, keepdims=True))

    v = m[:, None, :] - means  # (B, K, d)
    if cov == "full":
        tril = _build_tril(s, off, d)
        u = _solve_lower(tril, v)
        diag = np.diagonal(tril, axis1=-2, axis2=-1)
        logdet = np.log(diag).sum(axis=-1)
    else:
        scales = np.exp(s) + DIAG_FLOOR
        u = v / scales
        logdet = np.log(scales).sum(axis=-1)
    log_comp = -0.5 * d * _LOG_2PI - logdet - 0.5 * (u**2).sum(axis=-1)

    z = log_w + log_comp  # (B, K)
    zmax = z.max(axis=-1, keepdims=True)
    log_mix = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=-1))
    nll = -log_mix.mean()

    resp = np.exp(z - log_mix[:, None])  # responsibilities (B, K)
    d_logits = (wmix - resp) / n
    if cov == "full":
        w_vec = _solve_lower_t(tril, u)  # dlogN/dmu
        d_means = -resp[..., None] * w_vec / n
        grad_diag = w_vec * u - 1.0 / diag  # dlogN/dL_ii
        d_s = -resp[..., None] * grad_diag * np.exp(s) / n
        rows, cols = np.tril_indices(d, -1)
        grad_off = w_vec[..., rows] * u[..., cols]  # dlogN/dL_ij, i > j
        d_off = -resp[..., None] * grad_off / n
        d_a = np.concatenate(
            [d_logits, d_means.reshape(n, k * d), d_s.reshape(n, k * d), d_off.reshape(n, -1)],
            axis=-1,
        )
    else:
        w_vec = u / scales
        d_means = -resp[..., None] * w_vec / n
        d_s = -resp[..., None] * (u**2 - 1.0) * (np.exp(s) / scales) / n
        d_a = np.concatenate(
            [d_logits, d_means.reshape(n, k * d), d_s.reshape(n, k * d)], axis=-1
        )

    grads = _backprop(weights, hs, d_a)
    return nll, grads


def _backprop(weights: list[np.ndarray], hs: list[np.ndarray], d_a: np.ndarray):
    """Gradients for all layers given the head-activation gradient."""
    grads = [None] * len(weights)
    grads[-2] = hs[-1].T @ d_a
    grads[-1] = d_a.sum(axis=0)
    delta = d_a @ weights[-2].T
    for layer in range(len(weights) // 2 - 2, -1, -1):
        h_out = hs[layer + 1]
        delta = delta * (1.0 - h_out**2)  # through tanh
        grads[2 * layer] = hs[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer:
            delta = delta @ weights[2 * layer].T
    return grads


class _Adam:
    def __init__(self, weights: list[np.ndarray], config: TrainConfig):
        self.cfg = config
        self.m = [np.zeros_like(w) for w in weights]
        self.v = [np.zeros_like(w) for w in weights]
        self.t = 0

    def step(self, weights: list[np.ndarray], grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1**self.t
        b2t = 1.0 - c.beta2**self.t
        for w, g, m, v in zip(weights, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g**2
            w -= c.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + c.adam_eps)


def _extract_pairs(dataset) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(dataset, "x") and hasattr(dataset, "m"):
        x, m = dataset.x, dataset.m
    else:
        x, m = dataset
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if x.shape[0] != m.shape[0]:
        raise ValueError("state and error sequences have different lengths")
    return x, m


def _standardise_stats(x: np.ndarray, m: np.ndarray):
    x_mean, x_std = x.mean(axis=0), x.std(axis=0)
    m_mean, m_std = m.mean(axis=0), m.std(axis=0)
    x_std = np.where(x_std > 0, x_std, 1.0)
    m_std = np.where(m_std > 0, m_std, 1.0)
    return x_mean, x_std, m_mean, m_std


def _split_train_val(n: int, config: TrainConfig, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = max(1, int(round(config.val_fraction * n)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if config.max_train is not None:
        train_idx = train_idx[: config.max_train]
    return train_idx, val_idx


def _train_network(model_weights: list[np.ndarray], loss_fn, x_tr, m_tr, x_val, m_val,
                   config: TrainConfig, rng: np.random.Generator):
    """Generic minibatch Adam loop with early stopping on validation loss.

    ``loss_fn(weights, x, m)`` returns (loss, grads). Returns the best weights
    and the loss history; raises TrainingDivergedError on non-finite loss.
    """
    def val_loss(ws):
        total, count = 0.0, 0
        for start in range(0, x_val.shape[0], 4096):
            xb = x_val[start : start + 4096]
            mb = m_val[start : start + 4096]
            total += loss_fn(ws, xb, mb)[0] * xb.shape[0]
            count += xb.shape[0]
        return total / count

    adam = _Adam(model_weights, config)
    history = {"train": [], "val": [float(val_loss(model_weights))]}
    best = [w.copy() for w in model_weights]
    best_val = history["val"][0]
    stale = 0
    n = x_tr.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        epoch_loss, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_fn(model_weights, x_tr[idx], m_tr[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}", epoch)
            adam.step(model_weights, grads)
            epoch_loss += loss * idx.size
            seen += idx.size
        vl = float(val_loss(model_weights))
        if not math.isfinite(vl):
            raise TrainingDivergedError(f"validation loss non-finite at epoch {epoch}", epoch)
        history["train"].append(epoch_loss / seen)
        history["val"].append(vl)
        if vl < best_val - 1e-6:
            best_val = vl
            best = [w.copy() for w in model_weights]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history


def train_mdn(dataset, config: TrainConfig, mode: str = "nonlocal") -> MdnModel:
    """Fit a mixture density network to (state, error) pairs by maximum
    likelihood.

    ``dataset`` is anything with ``.x``/``.m`` arrays of shape (N, d), or an
    (x, m) tuple. Strongly-local mode pools the site-wise scalar pairs and
    fits one shared model, exploiting the translational symmetry of the ring.
    Inputs and targets are standardised with training statistics; the returned
    model folds those statistics back into its outputs.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    x, m = _extract_pairs(dataset)
    if mode == "strongly-local":
        x = x.reshape(-1, 1)
        m = m.reshape(-1, 1)
    stats = _standardise_stats(x, m)
    x_std = (x - stats[0]) / stats[1]
    m_std = (m - stats[2]) / stats[3]

    model = _new_model(mode, x.shape[1], m.shape[1], config, stats)
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = _split_train_val(x.shape[0], config, rng)
    k, d, cov = model.n_components, model.target_dim, model.cov_kind

    def loss_fn(ws, xb, mb):
        return _nll_and_grads(ws, xb, mb, k, d, cov)

    best, history = _train_network(
        model.weights, loss_fn, x_std[train_idx], m_std[train_idx],
        x_std[val_idx], m_std[val_idx], config, rng,
    )
    model.weights = best
    model.loss_history = history
    return model


@dataclass
class DeterministicModel:
    """Point-estimate network: same trunk as the MDN, linear head, MSE loss."""

    input_dim: int
    target_dim: int
    hidden: tuple[int, ...]
    weights: list[np.ndarray]
    x_mean: np.ndarray
    x_std: np.ndarray
    m_mean: np.ndarray
    m_std: np.ndarray
    seed: int | None = None
    loss_history: dict = field(default_factory=dict)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected input dimension {self.input_dim}")
        a, _ = _net_apply(self.weights, (x - self.x_mean) / self.x_std)
        if not np.isfinite(a).all():
            raise FloatingPointError("non-finite network activations")
        return a * self.m_std + self.m_mean


def _mse_and_grads(weights: list[np.ndarray], x: np.ndarray, m: np.ndarray):
    a, hs = _net_apply(weights, x)
    diff = a - m
    n = x.shape[0]
    loss = float((diff**2).mean())
    d_a = 2.0 * diff / diff.size
    return loss, _backprop(weights, hs, d_a)


def train_deterministic(dataset, config: TrainConfig) -> DeterministicModel:
    """Fit the point-estimate network by mean squared error (nonlocal: full
    state in, full error vector out)."""
    x, m = _extract_pairs(dataset)
    stats = _standardise_stats(x, m)
    x_std = (x - stats[0]) / stats[1]
    m_std = (m - stats[2]) / stats[3]

    rng = np.random.default_rng(config.seed)
    sizes = [x.shape[1], *config.hidden]
    weights = _init_trunk(rng, sizes)
    weights.append(0.01 * rng.standard_normal((sizes[-1], m.shape[1])) / math.sqrt(sizes[-1]))
    weights.append(np.zeros(m.shape[1]))

    train_idx, val_idx = _split_train_val(x.shape[0], config, rng)
    best, history = _train_network(
        weights, _mse_and_grads, x_std[train_idx], m_std[train_idx],
        x_std[val_idx], m_std[val_idx], config, rng,
    )
    return DeterministicModel(
        input_dim=x.shape[1],
        target_dim=m.shape[1],
        hidden=tuple(config.hidden),
        weights=best,
        x_mean=stats[0],
        x_std=stats[1],
        m_mean=stats[2],
        m_std=stats[3],
        seed=config.seed,
        loss_history=history,
    )


def gradient_check(model: MdnModel | DeterministicModel, batch, step: float = 1e-5) -> float:
    """Maximum relative error between analytic and central finite-difference
    gradients of the training loss on ``batch`` = (x, m) in raw units.

    The relative error of each parameter uses |fd| + |analytic| as the scale,
    so parameters with (near-)zero gradient compare at absolute precision.
    """
    x, m = batch
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = np.atleast_2d(np.asarray(m, dtype=float))
    x_std = (x - model.x_mean) / model.x_std
    m_std = (m - model.m_mean) / model.m_std
    if isinstance(model, MdnModel):
        k, d, cov = model.n_components, model.target_dim, model.cov_kind

        def loss_fn(ws):
            return _nll_and_grads(ws, x_std, m_std, k, d, cov)

    else:

        def loss_fn(ws):
            return _mse_and_grads(ws, x_std, m_std)

    weights = [w.copy() for w in model.weights]
    _, grads = loss_fn(weights)
    worst = 0.0
    for w, g in zip(weights, grads):
        flat_w = w.ravel()
        flat_g = g.ravel()
        for i in range(flat_w.size):
            orig = flat_w[i]
            flat_w[i] = orig + step
            up = loss_fn(weights)[0]
            flat_w[i] = orig - step
            down = loss_fn(weights)[0]
            flat_w[i] = orig
            fd = (up - down) / (2.0 * step)
            scale = max(abs(fd) + abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(fd - flat_g[i]) / scale)
    return worst


# ---------------------------------------------------------------------------
# polynomial + AR(1)-residual baseline


@dataclass(frozen=True)
class PolyAr1Model:
    """Strongly-local Gaussian baseline: polynomial conditional mean of the
    co-located site value, AR(1) residuals in time."""

    coeffs: np.ndarray  # ascending powers
    phi_r: float
    innovation_var: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if abs(self.phi_r) >= 1.0:
            raise ValueError("|phi_r| must be < 1")

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def residual_var(self) -> float:
        return self.innovation_var / (1.0 - self.phi_r**2)

    def conditional_mean(self, x: np.ndarray) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)


def fit_poly_ar1(dataset, degree: int = 3) -> PolyAr1Model:
    """Least-squares polynomial fit of the site-pooled conditional mean, with
    the residual lag-1 autocorrelation (in time, pooled over sites) as the
    AR(1) coefficient and the matching innovation variance."""
    x, m = _extract_pairs(dataset)
    x_flat, m_flat = x.ravel(), m.ravel()
    design = np.vander(x_flat, degree + 1, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(design, m_flat, rcond=None)
    if rank < degree + 1:
        raise ValueError("rank-deficient polynomial design matrix")
    resid = m - np.polynomial.polynomial.polyval(x, coeffs)  # (N, d): time x site
    var = float(resid.var())
    if var <= 1e-16 * float(m_flat.var()):  # exact fit up to rounding noise
        return PolyAr1Model(coeffs=coeffs, phi_r=0.0, innovation_var=0.0)
    num = float((resid[:-1] * resid[1:]).sum())
    den = float((resid**2).sum())
    phi_r = num / den
    return PolyAr1Model(coeffs=coeffs, phi_r=phi_r, innovation_var=var * (1.0 - phi_r**2))
