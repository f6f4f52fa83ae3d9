"""Small autoregressive forecaster trained with masked MSE.

Each context hour (values plus mask bits) is projected through one tanh layer;
the mean of these hidden states is the context code. Decoding is step-by-step:
the previous output (ground truth under teacher forcing, own prediction when
rolling out) feeds the hidden layer together with the context code, and the
output head adds a linear skip from the previous output, so the all-zero
parameter setting with an identity skip is exactly the persistence model.
Hidden encoder states double as block embeddings for embd-mode symbolization.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .data import DenseSeries
from .errors import DataError, NumericError
from .seeding import spawn_rng


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 60
    patience: int = 6
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size <= 0 or self.epochs <= 0 \
                or self.patience <= 0:
            raise DataError("train config values must be positive")


@dataclass
class ForecastModel:
    n_features: int
    context: int = 24
    horizon: int = 24
    hidden: int = 50
    params: dict = field(default_factory=dict)
    trained: bool = False
    seed: int = 0

    @classmethod
    def init(cls, n_features, context=24, horizon=24, hidden=50, seed=0) -> "ForecastModel":
        rng = spawn_rng(seed, "init")
        f, h = n_features, hidden
        params = {
            "W_x": rng.normal(0, 0.5 / np.sqrt(2 * f), (h, 2 * f)),
            "b_x": np.zeros(h),
            "W_y": rng.normal(0, 0.5 / np.sqrt(f), (h, f)),
            "b_h": np.zeros(h),
            "W_o": rng.normal(0, 0.5 / np.sqrt(h), (f, h)),
            "b_o": np.zeros(f),
            "W_r": np.eye(f),  # persistence warm start
        }
        return cls(f, context, horizon, hidden, params, trained=False, seed=seed)

    def to_jsonable(self) -> dict:
        return {
            "version": 1,
            "config": {
                "n_features": self.n_features, "context": self.context,
                "horizon": self.horizon, "hidden": self.hidden, "seed": self.seed,
                "trained": self.trained,
            },
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "ForecastModel":
        cfg = obj["config"]
        model = cls(cfg["n_features"], cfg["context"], cfg["horizon"],
                    cfg["hidden"], {k: np.array(v) for k, v in obj["params"].items()},
                    trained=cfg["trained"], seed=cfg["seed"])
        return model

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_jsonable(), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "ForecastModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonable(json.load(fh))


@dataclass
class RiskEstimate:
    mse: float
    per_seed: tuple
    mean: float
    se: float
    n_test: int

    def __post_init__(self):
        if self.per_seed:
            m = float(np.mean(self.per_seed))
            if abs(m - self.mean) > 1e-9 * max(1.0, abs(m)):
                raise DataError("risk estimate mean inconsistent with per-seed list")

    @classmethod
    def from_runs(cls, mses, n_test: int) -> "RiskEstimate":
        mses = tuple(float(m) for m in mses)
        mean = float(np.mean(mses))
        se = float(np.std(mses, ddof=1) / np.sqrt(len(mses))) if len(mses) > 1 else 0.0
        return cls(mse=mean, per_seed=mses, mean=mean, se=se, n_test=n_test)


def masked_mse(y, y_hat, mask) -> float:
    """(1/NT) * sum over series and steps of ||(y - y_hat) * mask||^2."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    m = np.asarray(mask, dtype=float)
    if y.shape != y_hat.shape or y.shape != m.shape:
        raise DataError(f"shape mismatch: {y.shape} vs {y_hat.shape} vs {m.shape}")
    if y.ndim == 2:
        y, y_hat, m = y[None], y_hat[None], m[None]
    if y.ndim != 3:
        raise DataError(f"expected (N, T, F) arrays, got {y.shape}")
    n, t, _ = y.shape
    return float((((y - y_hat) * m) ** 2).sum() / (n * t))


def _windows(data, context, horizon):
    """Stack non-overlapping (context, horizon) windows from each series."""
    xs, ys, ms = [], [], []
    span = context + horizon
    for s in data:
        if s.horizon < span:
            raise DataError(
                f"stay {s.stay_id}: horizon {s.horizon} < context+horizon {span}"
            )
        for off in range(0, s.horizon - span + 1, span):
            v = s.values[off:off + span]
            mk = s.mask[off:off + span]
            xs.append(np.concatenate([v[:context], mk[:context]], axis=1))
            ys.append(v[context:])
            ms.append(mk[context:])
    return np.stack(xs), np.stack(ys), np.stack(ms).astype(float)


def _encode(params, x):
    g = np.tanh(x @ params["W_x"].T + params["b_x"])
    return g, g.mean(axis=1)


def _decode_tf(params, c, y_prev_seq):
    # teacher forcing: all steps computed against given previous outputs
    pre = c[:, None, :] + y_prev_seq @ params["W_y"].T + params["b_h"]
    h = np.tanh(pre)
    y_hat = h @ params["W_o"].T + params["b_o"] + y_prev_seq @ params["W_r"].T
    return h, y_hat


def loss_and_grad(params, x, y, m):
    """Teacher-forced masked-MSE loss and analytic gradients.

    Masked target cells are zeroed before use, so they influence neither the
    loss nor the teacher-forced decoder inputs.
    """
    n, t, f = y.shape
    ym = y * m
    g, c = _encode(params, x)
    y_prev = np.concatenate([x[:, -1:, :f], ym[:, :-1]], axis=1)
    h, y_hat = _decode_tf(params, c, y_prev)

    diff = (y_hat - ym) * m
    loss = float((diff ** 2).sum() / (n * t))
    go = 2.0 * diff / (n * t)  # d loss / d y_hat; mask is binary so m^2 = m

    grads = {}
    grads["W_o"] = np.einsum("ntf,nth->fh", go, h)
    grads["b_o"] = go.sum(axis=(0, 1))
    grads["W_r"] = np.einsum("ntf,ntg->fg", go, y_prev)
    dpre = (go @ params["W_o"]) * (1.0 - h * h)
    grads["W_y"] = np.einsum("nth,ntf->hf", dpre, y_prev)
    grads["b_h"] = dpre.sum(axis=(0, 1))
    dc = dpre.sum(axis=1)
    denc = (dc[:, None, :] / x.shape[1]) * (1.0 - g * g)
    grads["W_x"] = np.einsum("nch,nci->hi", denc, x)
    grads["b_x"] = denc.sum(axis=(0, 1))
    return loss, grads


def rollout(model: ForecastModel, x, n_steps=None):
    """Free-running prediction for a batch of encoded context windows."""
    params = model.params
    f = model.n_features
    if n_steps is None:
        n_steps = model.horizon
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.shape[1] != model.context or x.shape[2] != 2 * f:
        raise DataError(f"context shape {x.shape[1:]} != ({model.context}, {2 * f})")
    _, c = _encode(params, x)
    prev = x[:, -1, :f]
    steps = []
    for _ in range(n_steps):
        h = np.tanh(c + prev @ params["W_y"].T + params["b_h"])
        prev = h @ params["W_o"].T + params["b_o"] + prev @ params["W_r"].T
        steps.append(prev)
    out = (np.stack(steps, axis=1) if steps
           else np.zeros((x.shape[0], 0, f)))
    return out[0] if squeeze else out


def predict(model: ForecastModel, values, mask, n_steps=None):
    """Autoregressive forecast from one context window of values + mask."""
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if values.shape != mask.shape:
        raise DataError("context values and mask must have equal shapes")
    x = np.concatenate([values, mask], axis=1)
    return rollout(model, x, n_steps)


def train(data, cfg: TrainConfig, context=24, horizon=24, hidden=50) -> ForecastModel:
    """Minibatch Adam with teacher forcing and early stopping.

    The validation split (free-running masked MSE) drives early stopping;
    the returned model carries the best validation parameters. Deterministic
    for a fixed (data, config).
    """
    if not data:
        raise DataError("no training series")
    x, y, m = _windows(data, context, horizon)
    n = x.shape[0]
    model = ForecastModel.init(y.shape[2], context, horizon, hidden, seed=cfg.seed)
    params = model.params

    rng = spawn_rng(cfg.seed, "train")
    order = rng.permutation(n)
    n_val = int(round(n * cfg.val_fraction)) if n >= 5 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    xv, yv, mv = x[val_idx], y[val_idx], m[val_idx]
    xt, yt, mt = x[train_idx], y[train_idx], m[train_idx]

    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0

    def val_loss():
        if n_val == 0:
            loss, _ = loss_and_grad(params, xt, yt, mt)
            return loss
        return masked_mse(yv, rollout(model, xv), mv)

    best = val_loss()
    best_params = {k: v.copy() for k, v in params.items()}
    stale = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        n_batches = 0
        for s in range(0, len(perm), cfg.batch_size):
            sel = perm[s:s + cfg.batch_size]
            loss, grads = loss_and_grad(params, xt[sel], yt[sel], mt[sel])
            if not np.isfinite(loss):
                raise NumericError(
                    f"training diverged: loss={loss} at epoch {epoch}, step {step}"
                )
            epoch_loss += loss
            n_batches += 1
            step += 1
            for k in params:
                adam_m[k] = b1 * adam_m[k] + (1 - b1) * grads[k]
                adam_v[k] = b2 * adam_v[k] + (1 - b2) * grads[k] ** 2
                m_hat = adam_m[k] / (1 - b1 ** step)
                v_hat = adam_v[k] / (1 - b2 ** step)
                params[k] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        current = val_loss()
        if not np.isfinite(current):
            raise NumericError(
                f"training diverged: val loss={current} after epoch {epoch} "
                f"(mean train loss {epoch_loss / max(1, n_batches):.4g})"
            )
        if current < best:
            best = current
            best_params = {k: v.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.params = best_params
    model.trained = True
    return model


def evaluate(model: ForecastModel, test) -> RiskEstimate:
    """Free-running masked MSE over a test corpus."""
    if not test:
        raise DataError("empty test set")
    x, y, m = _windows(test, model.context, model.horizon)
    mse = masked_mse(y, rollout(model, x), m)
    return RiskEstimate(mse=mse, per_seed=(mse,), mean=mse, se=0.0, n_test=len(test))


def block_embedding(model: ForecastModel, block) -> np.ndarray:
    """Mean of the encoder's hidden states over the block's hours."""
    if not model.trained:
        raise DataError("block embeddings require a trained model")
    u = np.concatenate([block.data, block.mask.astype(float)], axis=1)
    g = np.tanh(u @ model.params["W_x"].T + model.params["b_x"])
    return g.mean(axis=0)


def embedder_from(model: ForecastModel):
    return lambda block: block_embedding(model, block)
