"""Single-cause DeepHit network in numpy with hand-written backpropagation.

Architecture: two shared fully connected layers, then a cause-specific hidden
layer fed with ``[trunk output, raw input]`` (the residual connection), then a
softmax over ``B`` time bins.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import SurvivalDataset
from .errors import (
    DimensionMismatch,
    DivergedLoss,
    InvalidHyperparameter,
    NoEvents,
    ShapeMismatch,
    TooFewDistinctTimes,
)
from .optim import make_optimizer

LOG_FLOOR = 1e-12
LEAKY_SLOPE = 0.01
ACTIVATIONS = ("relu", "elu", "leakyrelu")
OPTIMIZERS = ("adam", "adamw")
LEARNING_RATES = (0.001, 0.01)
PATIENCES = (10, 150)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Bin edges ``0 = c_0 < c_1 < ... < c_B``; bin ``b`` is ``(c_{b-1}, c_b]``."""

    cuts: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.cuts.size - 1

    def bin(self, t):
        """Bin index in ``1..B``; 0 for ``t <= 0``, ``B`` for times past the last edge."""
        idx = np.searchsorted(self.cuts, np.asarray(t, dtype=float), side="left")
        return np.minimum(idx, self.n_bins)


def make_time_grid(time, bins: int = 10, event=None) -> TimeGrid:
    """Edges at empirical quantiles of event times (all times if none), last edge at max time."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    time = np.asarray(time, dtype=float)
    source = time
    if event is not None and np.any(event):
        source = time[np.asarray(event).astype(bool)]
    t_max = float(time.max())
    interior = np.quantile(source, np.arange(1, bins) / bins)
    interior = interior[(interior > 0) & (interior < t_max)]
    cuts = np.unique(np.concatenate(([0.0], interior, [t_max])))
    if cuts.size < 3:
        raise TooFewDistinctTimes(f"only {cuts.size - 1} distinct time bin(s) could be formed")
    return TimeGrid(cuts)


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "elu":
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    if name == "leakyrelu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    raise InvalidHyperparameter(f"unknown activation {name!r}")


def _act_grad(name, z):
    if name == "relu":
        return (z > 0).astype(float)
    if name == "elu":
        return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


def init_params(p: int, nodes: int, n_bins: int, rng) -> list:
    """Glorot-uniform weights, zero biases: ``[W1, b1, W2, b2, W3, b3, W4, b4]``."""
    shapes = [(p, nodes), (nodes, nodes), (nodes + p, nodes), (nodes, n_bins)]
    params = []
    for fan_in, fan_out in shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, x, activation="relu", cache=False):
    """Softmax bin probabilities for standardized rows ``x``."""
    w1, b1, w2, b2, w3, b3, w4, b4 = params
    z1 = x @ w1 + b1
    a1 = _act(activation, z1)
    z2 = a1 @ w2 + b2
    a2 = _act(activation, z2)
    h = np.concatenate([a2, x], axis=1)
    z3 = h @ w3 + b3
    a3 = _act(activation, z3)
    logits = a3 @ w4 + b4
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    if cache:
        return probs, (x, z1, a1, z2, a2, h, z3, a3)
    return probs


def _loss_terms(probs, bin_idx, event, alpha_rank, sigma, want_grad):
    """Loss and d(loss)/d(probs); ``bin_idx`` is 0-based here."""
    n, nb = probs.shape
    rows = np.arange(n)
    event = event.astype(bool)
    dq = np.zeros_like(probs) if want_grad else None

    q_event = probs[rows, bin_idx]
    after = np.arange(nb)[None, :] > bin_idx[:, None]
    surv = np.where(after, probs, 0.0).sum(axis=1)
    lik = np.where(event, q_event, surv)
    loss = -np.sum(np.log(np.maximum(lik, LOG_FLOOR)))
    if want_grad:
        live = lik > LOG_FLOOR
        ev = event & live
        dq[rows[ev], bin_idx[ev]] -= 1.0 / q_event[ev]
        ce = ~event & live
        dq[ce] -= after[ce] / surv[ce, None]

    if alpha_rank > 0:
        cdf = np.cumsum(probs, axis=1)
        own = cdf[rows, bin_idx]  # F_i(b_i)
        other = cdf[:, bin_idx].T  # [i, j] = F_j(b_i)
        pairs = event[:, None] & (bin_idx[:, None] < bin_idx[None, :])
        eta = np.where(pairs, np.exp(-(own[:, None] - other) / sigma), 0.0)
        loss += alpha_rank * eta.sum()
        if want_grad:
            g = alpha_rank / sigma * eta
            d_cdf = np.zeros_like(probs)
            d_cdf[rows, bin_idx] -= g.sum(axis=1)
            onehot = np.zeros_like(probs)
            onehot[rows, bin_idx] = 1.0
            d_cdf += g.T @ onehot
            dq += np.cumsum(d_cdf[:, ::-1], axis=1)[:, ::-1]
    return float(loss), dq


def deephit_loss(probs, bin_of_t, event, alpha_rank=0.1, sigma=0.1) -> float:
    """Negative log-likelihood plus ``alpha_rank`` times the pairwise ranking penalty.

    ``bin_of_t`` holds 1-based bins. Censored subjects contribute the mass
    strictly after their bin; events the mass in their bin. Ranking pairs are
    ``(i, j)`` with an event for ``i`` and ``bin_i < bin_j``, penalized by
    ``exp(-(F_i(bin_i) - F_j(bin_i)) / sigma)``.
    """
    probs = np.asarray(probs, dtype=float)
    bins = np.asarray(bin_of_t)
    event = np.asarray(event)
    if probs.ndim != 2 or bins.shape != (probs.shape[0],) or event.shape != bins.shape:
        raise ShapeMismatch(f"probs {probs.shape}, bins {bins.shape}, event {event.shape}")
    if np.any(bins < 1) or np.any(bins > probs.shape[1]):
        raise ShapeMismatch("bin indices must lie in 1..B")
    if alpha_rank < 0 or sigma <= 0:
        raise ValueError("need alpha_rank >= 0 and sigma > 0")
    return _loss_terms(probs, bins - 1, event, alpha_rank, sigma, want_grad=False)[0]


def loss_and_grad(params, x, bin_of_t, event, activation="relu", alpha_rank=0.1, sigma=0.1):
    """Loss of the network on ``x`` and its gradient for every parameter array."""
    probs, (x, z1, a1, z2, a2, h, z3, a3) = forward(params, x, activation, cache=True)
    loss, dq = _loss_terms(probs, np.asarray(bin_of_t) - 1, np.asarray(event), alpha_rank, sigma, True)
    w1, _, w2, _, w3, _, w4, _ = params
    dz4 = probs * (dq - np.sum(dq * probs, axis=1, keepdims=True))
    g_w4, g_b4 = a3.T @ dz4, dz4.sum(axis=0)
    dz3 = (dz4 @ w4.T) * _act_grad(activation, z3)
    g_w3, g_b3 = h.T @ dz3, dz3.sum(axis=0)
    dh = dz3 @ w3.T
    nodes = a2.shape[1]
    dz2 = dh[:, :nodes] * _act_grad(activation, z2)
    g_w2, g_b2 = a1.T @ dz2, dz2.sum(axis=0)
    dz1 = (dz2 @ w2.T) * _act_grad(activation, z1)
    g_w1, g_b1 = x.T @ dz1, dz1.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3, g_w4, g_b4]


@dataclass(frozen=True)
class DeepHitParams:
    nodes: int = 32
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.001
    activation: str = "relu"
    optimizer: str = "adam"
    patience: int = 10
    bins: int = 10
    alpha_rank: float = 0.1
    sigma: float = 0.1
    weight_decay: float = 0.01
    val_fraction: float = 0.1

    @classmethod
    def from_dict(cls, d: dict) -> "DeepHitParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidHyperparameter(f"unknown DeepHit hyperparameters {sorted(unknown)}")
        return cls(**d)

    def validate(self) -> None:
        checks = [
            (2 <= self.nodes <= 300, f"nodes={self.nodes} outside [2, 300]"),
            (10 <= self.epochs <= 400, f"epochs={self.epochs} outside [10, 400]"),
            (self.batch_size == 32, f"batch_size={self.batch_size}, expected 32"),
            (self.learning_rate in LEARNING_RATES, f"learning_rate not in {LEARNING_RATES}"),
            (self.activation in ACTIVATIONS, f"activation not in {ACTIVATIONS}"),
            (self.optimizer in OPTIMIZERS, f"optimizer not in {OPTIMIZERS}"),
            (self.patience in PATIENCES, f"patience not in {PATIENCES}"),
            (self.bins >= 2, "bins must be >= 2"),
            (self.alpha_rank >= 0 and self.sigma > 0, "need alpha_rank >= 0, sigma > 0"),
            (0 < self.val_fraction < 1, "val_fraction must lie in (0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidHyperparameter(msg)


@dataclass(frozen=True, eq=False)
class DiscreteTimeNet:
    params: list
    grid: TimeGrid
    mean: np.ndarray
    scale: np.ndarray
    hp: DeepHitParams
    val_losses: tuple = field(default=())
    best_epoch: int = 0

    kind = "deephit"

    @property
    def p(self) -> int:
        return self.mean.size

    @property
    def best_val_loss(self) -> float:
        return self.val_losses[self.best_epoch - 1] if self.val_losses else float("nan")

    @property
    def epochs_run(self) -> int:
        return len(self.val_losses)

    def _rows(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rows = x.reshape(1, -1) if x.ndim == 1 else x
        if rows.ndim != 2 or rows.shape[1] != self.p:
            raise DimensionMismatch(f"expected rows of length {self.p}, got shape {x.shape}")
        return rows

    def predict_proba(self, x) -> np.ndarray:
        rows = self._rows(x)
        return forward(self.params, (rows - self.mean) / self.scale, self.hp.activation)

    def predict_cumhaz(self, x, t) -> np.ndarray:
        """``-log S(t)`` with ``S(t)`` the mass in bins strictly after ``bin(t)``."""
        probs = self.predict_proba(x)
        return cumhaz_from_probs(probs, self.grid, t)

    def predict_risk(self, x) -> np.ndarray:
        """Mean cumulative incidence over the bins, ``sum_b F(b) / B``."""
        return risk_from_probs(self.predict_proba(x))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": [w.tolist() for w in self.params],
            "cuts": self.grid.cuts.tolist(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "hp": asdict(self.hp),
            "val_losses": list(self.val_losses),
            "best_epoch": self.best_epoch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteTimeNet":
        return cls(
            [np.asarray(w, float) for w in d["params"]],
            TimeGrid(np.asarray(d["cuts"], float)),
            np.asarray(d["mean"], float),
            np.asarray(d["scale"], float),
            DeepHitParams(**d["hp"]),
            tuple(d["val_losses"]),
            int(d["best_epoch"]),
        )


def cumhaz_from_probs(probs, grid: TimeGrid, t) -> np.ndarray:
    t = np.broadcast_to(np.asarray(t, dtype=float), (probs.shape[0],))
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    b = grid.bin(t)
    cdf = np.concatenate([np.zeros((probs.shape[0], 1)), np.cumsum(probs, axis=1)], axis=1)
    surv = 1.0 - cdf[np.arange(probs.shape[0]), b]
    return -np.log(np.clip(surv, LOG_FLOOR, 1.0))


def risk_from_probs(probs) -> np.ndarray:
    return np.cumsum(probs, axis=1).mean(axis=1)


def _validation_split(event, fraction, rng):
    val = []
    for label in (0, 1):
        members = np.flatnonzero(event == label)
        rng.shuffle(members)
        val.extend(members[: int(round(fraction * members.size))])
    mask = np.zeros(event.size, dtype=bool)
    mask[val] = True
    return np.flatnonzero(~mask), np.flatnonzero(mask)


def fit_deephit(data: SurvivalDataset, hp: DeepHitParams | None = None, seed: int = 0) -> DiscreteTimeNet:
    """Minibatch training with early stopping on a stratified validation split.

    The parameters of the epoch with the lowest validation loss are restored.
    """
    hp = hp or DeepHitParams()
    hp.validate()
    if not data.event.any():
        raise NoEvents("DeepHit needs at least one event")
    rng = np.random.default_rng(seed)

    fit_idx, val_idx = _validation_split(data.event, hp.val_fraction, rng)
    if val_idx.size == 0 or fit_idx.size == 0:
        raise ShapeMismatch("too few subjects for a validation split")
    grid = make_time_grid(data.time, hp.bins, data.event)
    mean = data.features[fit_idx].mean(axis=0)
    scale = data.features[fit_idx].std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    x = (data.features - mean) / scale
    bins = grid.bin(data.time)
    event = data.event

    params = init_params(data.p, hp.nodes, grid.n_bins, rng)
    opt = make_optimizer(hp.optimizer, params, hp.learning_rate, hp.weight_decay)

    def val_loss(ps):
        probs = forward(ps, x[val_idx], hp.activation)
        return _loss_terms(probs, bins[val_idx] - 1, event[val_idx], hp.alpha_rank, hp.sigma, False)[0]

    best_params = [w.copy() for w in params]
    best_loss, best_epoch, history = np.inf, 0, []
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(fit_idx)
        for start in range(0, order.size, hp.batch_size):
            batch = order[start : start + hp.batch_size]
            loss, grads = loss_and_grad(
                params, x[batch], bins[batch], event[batch], hp.activation, hp.alpha_rank, hp.sigma
            )
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}, batch start {start}")
            opt.step(grads)
        current = val_loss(params)
        if not np.isfinite(current):
            raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
        history.append(current)
        if current < best_loss:
            best_loss, best_epoch = current, epoch
            best_params = [w.copy() for w in params]
        elif epoch - best_epoch >= hp.patience:
            break

    return DiscreteTimeNet(best_params, grid, mean, scale, hp, tuple(history), best_epoch)


def deephit_cumhaz(net: DiscreteTimeNet, x, t):
    out = net.predict_cumhaz(x, t)
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def deephit_risk_score(net: DiscreteTimeNet, x):
    out = net.predict_risk(x)
    return float(out[0]) if np.asarray(x).ndim == 1 else out
