"""Deep LSTM supervised autoencoder.

An encoder LSTM stack maps each window to per-timestep latents; a decoder
LSTM stack (last hidden size = feature count) reconstructs the window; a
softmax head on the final-timestep latent predicts the class. The loss is

    (1/N) [ lam1 * sum ||x - x_hat||^2
          + lam2 * sum cross-entropy
          + lam3 * sum ||W||^2 over weight matrices ]

where the regularizer covers input/recurrent kernels and the classifier
matrix but no biases.
"""

from dataclasses import dataclass, field, asdict, replace
import json
import math

import numpy as np

from .dataio import Scaler, WindowBatch
from .errors import (ConfigError, DimensionError, NumericDivergenceError)
from .recurrent import (ParamSet, adam_step, clip_global_norm, init_adam,
                        init_params, load_params, lstm_backward,
                        lstm_forward_batch, save_params, softmax)

LOG_CLAMP = 1e-12
GRAD_CLIP = 5.0

# Learning-rate grid searched by default; the other fields stay at the
# base config unless a search space overrides them.
DEFAULT_SEARCH_SPACE = {"learning_rate": [1e-1, 2e-1, 3e-1, 1e-2]}


@dataclass
class ModelConfig:
    encoder: tuple
    decoder: tuple
    n_features: int
    n_classes: int
    horizon: int
    lam1: float = 1.0
    lam2: float = 1.0
    lam3: float = 1e-4
    learning_rate: float = 1e-2
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        self.encoder = tuple(int(v) for v in self.encoder)
        self.decoder = tuple(int(v) for v in self.decoder)
        if not self.encoder or not self.decoder:
            raise ConfigError("encoder and decoder need at least one layer each")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        if min(self.lam1, self.lam2, self.lam3) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.decoder[-1] != self.n_features:
            raise DimensionError(
                f"decoder must end at the feature count {self.n_features}, "
                f"got {self.decoder[-1]}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")

    @property
    def d_z(self):
        return self.encoder[-1]

    def layer_dims(self):
        dims = []
        prev = self.n_features
        for size in self.encoder + self.decoder:
            dims.append((prev, size))
            prev = size
        return dims


def build_params(config):
    return init_params(config.layer_dims(), config.n_classes, config.seed,
                       n_encoder=len(config.encoder))


def _as_windows(batch):
    if isinstance(batch, WindowBatch):
        return batch.windows, batch.labels
    return np.asarray(batch, dtype=np.float64), None


def _forward_caches(windows, params):
    caches = []
    cur = windows
    z_seq = None
    for k, layer in enumerate(params.layers):
        h, _, cache = lstm_forward_batch(cur, layer)
        caches.append(cache)
        cur = h
        if k == params.n_encoder - 1:
            z_seq = h
    logits = z_seq[:, -1] @ params.W_c.T + params.b_c
    return cur, softmax(logits), z_seq, caches


def model_forward(batch, params, config=None):
    """Run the full model.

    Returns (reconstructions N x H x d_x, class probabilities N x m,
    final-timestep latents N x d_z).
    """
    windows, _ = _as_windows(batch)
    if config is not None and windows.shape[2] != config.n_features:
        raise DimensionError(
            f"batch has {windows.shape[2]} features, config expects "
            f"{config.n_features}")
    recon, probs, z_seq, _ = _forward_caches(windows, params)
    return recon, probs, z_seq[:, -1]


def _reg_sum(params):
    total = 0.0
    for layer in params.layers:
        total += float(np.sum(layer.W ** 2) + np.sum(layer.R ** 2))
    return total + float(np.sum(params.W_c ** 2))


def sae_loss(recon, inputs, probs, labels, lam1, lam2, lam3, params):
    """Composite loss; see the module docstring for the exact form."""
    if min(lam1, lam2, lam3) < 0:
        raise ConfigError("loss weights must be nonnegative")
    recon = np.asarray(recon, dtype=np.float64)
    inputs = np.asarray(inputs, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if recon.shape != inputs.shape:
        raise DimensionError("reconstruction and input shapes differ")
    n = recon.shape[0]
    mse = float(np.sum((inputs - recon) ** 2))
    p_true = np.clip(probs[np.arange(n), labels], LOG_CLAMP, None)
    ce = float(-np.sum(np.log(p_true)))
    return (lam1 * mse + lam2 * ce + lam3 * _reg_sum(params)) / n


def loss_and_grads(windows, labels, params, config):
    """Loss plus exact gradients for one (already standardized) batch."""
    windows = np.asarray(windows, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    recon, probs, z_seq, caches = _forward_caches(windows, params)
    loss = sae_loss(recon, windows, probs, labels, config.lam1, config.lam2,
                    config.lam3, params)

    n = windows.shape[0]
    n_enc = params.n_encoder
    grads = params.zeros_like()

    grad_h = (2.0 * config.lam1 / n) * (recon - windows)
    for k in range(len(params.layers) - 1, n_enc - 1, -1):
        grads.layers[k], grad_h = lstm_backward(caches[k], grad_h)

    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    dlogits = (config.lam2 / n) * (probs - onehot)
    grads.W_c[...] = dlogits.T @ z_seq[:, -1]
    grads.b_c[...] = dlogits.sum(axis=0)
    grad_h[:, -1] += dlogits @ params.W_c

    for k in range(n_enc - 1, -1, -1):
        grads.layers[k], grad_h = lstm_backward(caches[k], grad_h)

    scale = 2.0 * config.lam3 / n
    for gl, pl in zip(grads.layers, params.layers):
        gl.W += scale * pl.W
        gl.R += scale * pl.R
    grads.W_c += scale * params.W_c
    return loss, grads


def predict_proba(params, batch):
    windows, _ = _as_windows(batch)
    _, probs, _, _ = _forward_caches(windows, params)
    return probs


def predict(params, batch):
    return np.argmax(predict_proba(params, batch), axis=1)


def batch_accuracy(params, batch):
    if len(batch) == 0:
        return math.nan
    return float(np.mean(predict(params, batch) == batch.labels))


@dataclass
class TrainedModel:
    """Frozen training outcome. predict expects standardized windows; the
    scaler is carried along so callers can standardize consistently."""

    config: ModelConfig
    params: ParamSet
    history: list = field(default_factory=list)
    scaler: Scaler = None

    def predict(self, batch):
        return predict(self.params, batch)

    def predict_proba(self, batch):
        return predict_proba(self.params, batch)

    def accuracy(self, batch):
        return batch_accuracy(self.params, batch)


def train(train_batch, val_batch, config, scaler=None):
    """Minibatch Adam on the composite loss.

    Shuffling, initialization, and therefore the whole run are fixed by
    config.seed. When a validation batch is given, the returned parameters
    are the epoch snapshot with the best validation accuracy (earliest
    epoch on ties); otherwise the final parameters.
    """
    if len(train_batch) == 0:
        raise ConfigError("training batch is empty")
    if train_batch.n_features != config.n_features:
        raise DimensionError("training data feature count differs from config")
    params = build_params(config)
    state = init_adam(params)
    rng = np.random.default_rng([config.seed, 1])
    n = len(train_batch)
    history = []
    best_acc, best_params = -1.0, None
    use_val = val_batch is not None and len(val_batch) > 0

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = loss_and_grads(train_batch.windows[idx],
                                         train_batch.labels[idx],
                                         params, config)
            if not np.isfinite(loss):
                raise NumericDivergenceError(
                    f"loss became non-finite in epoch {epoch}")
            grads, _ = clip_global_norm(grads, GRAD_CLIP)
            params, state = adam_step(params, grads, state,
                                      lr=config.learning_rate)
            loss_sum += loss * idx.size
        val_acc = batch_accuracy(params, val_batch) if use_val else math.nan
        history.append({"epoch": epoch, "loss": loss_sum / n,
                        "val_accuracy": val_acc})
        if use_val and val_acc > best_acc:
            best_acc, best_params = val_acc, params.copy()

    final = best_params if (use_val and best_params is not None) else params
    return TrainedModel(config, final, history, scaler)


def tune(train_batch, val_batch, search_space, budget, seed, base=None,
         stage_epochs=2, scaler=None, return_trials=False):
    """Successive-halving hyperparameter search.

    Samples `budget` configs from the search space, trains each from
    scratch for a short stage, keeps the better half by validation
    accuracy (lower trial index on ties), doubles the stage length, and
    repeats until one survives. Returns that trial's config with the base
    epoch count restored.
    """
    if not search_space:
        raise ConfigError("search space is empty")
    if budget < 1:
        raise ConfigError("budget must be at least 1")
    if val_batch is None or len(val_batch) == 0:
        raise ConfigError("tuning needs a nonempty validation batch")
    if base is None:
        base = ModelConfig(encoder=(8,), decoder=(train_batch.n_features,),
                           n_features=train_batch.n_features,
                           n_classes=int(train_batch.labels.max()) + 1,
                           horizon=train_batch.horizon, seed=seed)

    rng = np.random.default_rng(seed)
    trials = []
    for j in range(budget):
        drawn = {key: search_space[key][rng.integers(len(search_space[key]))]
                 for key in sorted(search_space)}
        trials.append(replace(base, seed=base.seed + j, **drawn))

    alive = list(range(budget))
    stage = stage_epochs
    log = []
    while len(alive) > 1:
        scored = []
        for j in alive:
            cfg = replace(trials[j], epochs=stage)
            model = train(train_batch, val_batch, cfg, scaler=scaler)
            acc = model.accuracy(val_batch)
            scored.append((j, acc))
            log.append({"trial": j, "stage_epochs": stage, "val_accuracy": acc})
        scored.sort(key=lambda item: (-item[1], item[0]))
        alive = sorted(j for j, _ in scored[:math.ceil(len(scored) / 2)])
        stage *= 2
    best = replace(trials[alive[0]], epochs=base.epochs)
    if return_trials:
        return best, log
    return best


def save_model(model, directory):
    """Write params.bin, config.json, history.tsv (and scaler.json)."""
    directory.mkdir(parents=True, exist_ok=True)
    save_params(model.params, directory / "params.bin")
    cfg = asdict(model.config)
    cfg["encoder"] = list(model.config.encoder)
    cfg["decoder"] = list(model.config.decoder)
    with open(directory / "config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(directory / "history.tsv", "w") as fh:
        fh.write("epoch\tloss\tval_accuracy\n")
        for row in model.history:
            fh.write(f"{row['epoch']}\t{row['loss']:.17g}\t"
                     f"{row['val_accuracy']:.17g}\n")
    if model.scaler is not None:
        with open(directory / "scaler.json", "w") as fh:
            json.dump({"mean": list(model.scaler.mean),
                       "std": list(model.scaler.std)},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_model(directory):
    with open(directory / "config.json") as fh:
        cfg = json.load(fh)
    config = ModelConfig(**cfg)
    params = load_params(directory / "params.bin")
    history = []
    lines = (directory / "history.tsv").read_text().splitlines()[1:]
    for line in lines:
        epoch, loss, acc = line.split("\t")
        history.append({"epoch": int(epoch), "loss": float(loss),
                        "val_accuracy": float(acc)})
    scaler = None
    if (directory / "scaler.json").exists():
        with open(directory / "scaler.json") as fh:
            rec = json.load(fh)
        scaler = Scaler(np.array(rec["mean"]), np.array(rec["std"]))
    return TrainedModel(config, params, history, scaler)
