"""Feed-forward regressor mapping normalized shift features to accuracy.

The network is a three-hidden-layer MLP (256, 128, 64 units) with layer
normalization and ReLU after each affine map, dropout between hidden layers
during training, and a scalar affine head.  Training is plain mini-batch MSE
regression with decoupled-weight-decay Adam and a cosine learning-rate decay,
early-stopped on validation MAE.  Everything here is written against plain
numpy arrays with explicit, hand-derived gradients so the whole train/predict
pipeline is a pure function of (data, config, seed).

Trained models serialize to ``.fsmlp`` files: magic + a JSON header (shapes,
normalizer, training report, descriptor config) + the float32 parameter block
in declaration order.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .descriptors import SWDConfig, ShiftDescriptor
from .errors import (
    BadMagic,
    ConfigMismatch,
    InsufficientData,
    IoFailure,
    MissingFile,
    ShapeMismatch,
    TruncatedPayload,
)
from .seeding import rng_for, spawn_seed
from .workload import DEFAULT_VARIANCE_FLOOR, _atomic_write

HIDDEN_DIMS = (256, 128, 64)
LN_EPS = 1e-5
ADAM_EPS = 1e-8
STD_FLOOR = 1e-8

MODEL_MAGIC = b"FSMLP\x00\x00\x00"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<8sIQ")


@dataclass
class MLPParams:
    """All learnable tensors, kept as float64 lists in declaration order:
    per affine layer its weight then bias, with layer-norm gain/offset
    following the first three (hidden) layers."""

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    ln_gain: list[np.ndarray]
    ln_offset: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def tensors(self) -> list[np.ndarray]:
        out = []
        hidden = len(self.layer_dims) - 2
        for i in range(len(self.weights)):
            out.append(self.weights[i])
            out.append(self.biases[i])
            if i < hidden:
                out.append(self.ln_gain[i])
                out.append(self.ln_offset[i])
        return out

    def map(self, fn, *others: "MLPParams") -> "MLPParams":
        """Apply ``fn`` elementwise across this tree and any parallel trees."""
        mine = self.tensors()
        rest = [o.tensors() for o in others]
        new = [fn(*(t[i] for t in [mine, *rest])) for i in range(len(mine))]
        return _from_tensors(self.layer_dims, new)

    def copy(self) -> "MLPParams":
        return self.map(np.copy)

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors())


def _from_tensors(layer_dims: tuple[int, ...], tensors: list[np.ndarray]) -> MLPParams:
    weights, biases, gains, offsets = [], [], [], []
    hidden = len(layer_dims) - 2
    it = iter(tensors)
    for i in range(len(layer_dims) - 1):
        weights.append(next(it))
        biases.append(next(it))
        if i < hidden:
            gains.append(next(it))
            offsets.append(next(it))
    return MLPParams(layer_dims, weights, biases, gains, offsets)


def init_mlp(input_dim: int, seed: int) -> MLPParams:
    """Fan-in-scaled uniform weights, zero biases, identity layer norm."""
    if input_dim < 1:
        raise ValueError("input_dim must be positive")
    dims = (input_dim, *HIDDEN_DIMS, 1)
    rng = rng_for(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    gains = [np.ones(h) for h in HIDDEN_DIMS]
    offsets = [np.zeros(h) for h in HIDDEN_DIMS]
    return MLPParams(dims, weights, biases, gains, offsets)


def zeros_like(params: MLPParams) -> MLPParams:
    return params.map(np.zeros_like)


def dropout_masks(
    layer_dims: tuple[int, ...], batch: int, seed: int, rate: float
) -> list[np.ndarray]:
    """Per-hidden-layer keep masks, fixed by seed (drawn in layer order)."""
    rng = rng_for(seed)
    return [
        (rng.random((batch, h)) >= rate).astype(np.float64) for h in layer_dims[1:-1]
    ]


def _forward(params: MLPParams, x: np.ndarray, masks, rate: float, want_caches: bool):
    hidden = len(params.layer_dims) - 2
    keep = 1.0 - rate
    caches = []
    a = x
    for i in range(hidden):
        z = a @ params.weights[i] + params.biases[i]
        mu = z.mean(axis=1, keepdims=True)
        istd = 1.0 / np.sqrt(z.var(axis=1, keepdims=True) + LN_EPS)
        xhat = (z - mu) * istd
        y = xhat * params.ln_gain[i] + params.ln_offset[i]
        r = np.maximum(y, 0.0)
        out = r * masks[i] / keep if masks is not None else r
        if want_caches:
            caches.append((a, xhat, istd, y))
        a = out
    preds = (a @ params.weights[-1] + params.biases[-1]).ravel()
    return preds, a, caches


def forward(
    params: MLPParams,
    x: np.ndarray,
    train_mode: bool = False,
    dropout_seed: int = 0,
    dropout: float = 0.2,
) -> float:
    """Run one (already normalized) feature vector through the network.

    Inference mode is deterministic; train mode applies inverted dropout with
    the mask fixed by ``dropout_seed``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.input_dim:
        raise ShapeMismatch(f"expected a length-{params.input_dim} vector, got {x.shape}")
    masks = (
        dropout_masks(params.layer_dims, 1, dropout_seed, dropout)
        if train_mode and dropout > 0
        else None
    )
    preds, _, _ = _forward(params, x[None, :], masks, dropout, want_caches=False)
    return float(preds[0])


def _forward_batch(params: MLPParams, x: np.ndarray) -> np.ndarray:
    preds, _, _ = _forward(params, x, None, 0.0, want_caches=False)
    return preds


def loss_and_grad(
    params: MLPParams,
    x: np.ndarray,
    y: np.ndarray,
    train_mode: bool = False,
    seed: int = 0,
    dropout: float = 0.2,
) -> tuple[float, MLPParams]:
    """Batch MSE and its exact analytic gradient w.r.t. every parameter.

    Backprop goes through layer norm, ReLU, and (in train mode) the
    seed-fixed dropout masks.  Duplicating every batch element leaves both
    outputs unchanged in inference mode because the loss is a mean.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeMismatch(f"expected (B, {params.input_dim}) features, got {x.shape}")
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ShapeMismatch("batch features and targets must align and be non-empty")
    batch = x.shape[0]
    hidden = len(params.layer_dims) - 2
    keep = 1.0 - dropout
    masks = (
        dropout_masks(params.layer_dims, batch, seed, dropout)
        if train_mode and dropout > 0
        else None
    )
    preds, a_last, caches = _forward(params, x, masks, dropout, want_caches=True)

    err = preds - y
    mse = float(np.mean(err**2))
    dpreds = (2.0 / batch) * err

    g_weights = [None] * len(params.weights)
    g_biases = [None] * len(params.biases)
    g_gains = [None] * hidden
    g_offsets = [None] * hidden

    g_weights[-1] = a_last.T @ dpreds[:, None]
    g_biases[-1] = np.array([dpreds.sum()])
    da = np.outer(dpreds, params.weights[-1][:, 0])

    for i in range(hidden - 1, -1, -1):
        a_in, xhat, istd, pre_relu = caches[i]
        dr = da * masks[i] / keep if masks is not None else da
        dy = dr * (pre_relu > 0)
        g_gains[i] = (dy * xhat).sum(axis=0)
        g_offsets[i] = dy.sum(axis=0)
        dxhat = dy * params.ln_gain[i]
        dz = istd * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        )
        g_weights[i] = a_in.T @ dz
        g_biases[i] = dz.sum(axis=0)
        da = dz @ params.weights[i].T

    grads = MLPParams(params.layer_dims, g_weights, g_biases, g_gains, g_offsets)
    return mse, grads


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings; the defaults are the adopted ones."""

    batch_size: int = 64
    lr0: float = 1e-4
    eta_min: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-3
    max_epochs: int = 20
    dropout: float = 0.2
    patience: int = 3
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if self.lr0 <= 0 or self.eta_min < 0:
            raise ValueError("lr0 must be positive, eta_min non-negative")
        if not (0 < self.val_fraction < 0.5):
            raise ValueError("val_fraction must lie in (0, 0.5)")
        if not (0 <= self.dropout < 1):
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class AdamState:
    m: MLPParams
    v: MLPParams
    t: int = 0

    @classmethod
    def fresh(cls, params: MLPParams) -> "AdamState":
        return cls(m=zeros_like(params), v=zeros_like(params), t=0)


def adamw_step(
    state: AdamState,
    params: MLPParams,
    grads: MLPParams,
    lr: float,
    cfg: TrainConfig,
) -> tuple[MLPParams, AdamState]:
    """One decoupled-weight-decay Adam update (decay applied before the
    moment update, bias-corrected moments, epsilon 1e-8)."""
    t = state.t + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    new_m = state.m.map(lambda m, g: cfg.beta1 * m + (1 - cfg.beta1) * g, grads)
    new_v = state.v.map(lambda v, g: cfg.beta2 * v + (1 - cfg.beta2) * g * g, grads)

    def update(w, m, v):
        decayed = w * (1.0 - lr * cfg.weight_decay)
        return decayed - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)

    new_params = params.map(update, new_m, new_v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def cosine_lr(step: int, total_steps: int, lr0: float, eta_min: float = 0.0) -> float:
    """Cosine decay from lr0 at step 0 to eta_min at step == total_steps."""
    if not 0 <= step <= total_steps:
        raise ValueError("step must lie in [0, total_steps]")
    return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass(frozen=True)
class Normalizer:
    """Feature standardization statistics, fitted on the training split only
    and bound to the descriptor config the features were computed under."""

    feature_mean: np.ndarray
    feature_std: np.ndarray
    config_digest: str = ""

    def __post_init__(self):
        mean = np.asarray(self.feature_mean, dtype=np.float64)
        std = np.asarray(self.feature_std, dtype=np.float64)
        if mean.ndim != 1 or std.shape != mean.shape:
            raise ValueError("feature_mean/std must be equal-length vectors")
        if np.any(std < STD_FLOOR):
            raise ValueError(f"feature_std entries must be >= {STD_FLOOR}")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "feature_mean", mean)
        object.__setattr__(self, "feature_std", std)

    @classmethod
    def fit(cls, features: np.ndarray, config_digest: str = "") -> "Normalizer":
        features = np.asarray(features, dtype=np.float64)
        return cls(
            feature_mean=features.mean(axis=0),
            feature_std=np.maximum(features.std(axis=0), STD_FLOOR),
            config_digest=config_digest,
        )

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.feature_mean) / self.feature_std

    def to_dict(self) -> dict:
        return {
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "config_digest": self.config_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(
            feature_mean=np.array(d["feature_mean"]),
            feature_std=np.array(d["feature_std"]),
            config_digest=d.get("config_digest", ""),
        )


@dataclass
class TrainReport:
    epochs_run: int
    best_val_mae: float
    train_loss_curve: list[float]
    stopped_early: bool
    degenerate_targets: bool = False

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "best_val_mae": self.best_val_mae,
            "train_loss_curve": self.train_loss_curve,
            "stopped_early": self.stopped_early,
            "degenerate_targets": self.degenerate_targets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        return cls(
            epochs_run=int(d["epochs_run"]),
            best_val_mae=float(d["best_val_mae"]),
            train_loss_curve=[float(v) for v in d["train_loss_curve"]],
            stopped_early=bool(d["stopped_early"]),
            degenerate_targets=bool(d.get("degenerate_targets", False)),
        )


def meta_set_arrays(meta_set) -> tuple[np.ndarray, np.ndarray, str]:
    """Feature matrix, label vector and the (uniform) config digest of a
    sequence of supervision pairs."""
    if not meta_set:
        raise InsufficientData("empty meta set")
    feats = np.stack([inst.delta.features() for inst in meta_set])
    labels = np.array([inst.accuracy for inst in meta_set], dtype=np.float64)
    digests = {inst.delta.config_digest for inst in meta_set}
    if len(digests) != 1:
        raise ConfigMismatch("meta set mixes descriptors from different configs")
    return feats, labels, digests.pop()


def _batch_mae(params: MLPParams, x: np.ndarray, y: np.ndarray) -> float:
    preds = np.clip(_forward_batch(params, x), 0.0, 1.0)
    return float(np.mean(np.abs(preds - y)))


def train(meta_set, cfg: TrainConfig) -> tuple[MLPParams, Normalizer, TrainReport]:
    """Fit the evaluator on (shift descriptor, accuracy) supervision pairs.

    Deterministic given (meta_set, cfg): the seeded split, the normalizer
    fitted on the train portion, every shuffle, and every dropout mask all
    derive from ``cfg.seed``.  The best-validation-MAE parameters are
    restored at the end.
    """
    if len(meta_set) < 10:
        raise InsufficientData(f"need at least 10 instances, got {len(meta_set)}")
    feats, labels, digest = meta_set_arrays(meta_set)
    if np.any(labels < 0) or np.any(labels > 1):
        raise ValueError("accuracies must lie in [0, 1]")
    degenerate = bool(np.ptp(labels) == 0)

    n = len(meta_set)
    perm = rng_for(cfg.seed, 101).permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    norm = Normalizer.fit(feats[train_idx], digest)
    x_train, y_train = norm.apply(feats[train_idx]), labels[train_idx]
    x_val, y_val = norm.apply(feats[val_idx]), labels[val_idx]

    params = init_mlp(feats.shape[1], spawn_seed(cfg.seed, 102))
    opt = AdamState.fresh(params)
    n_train = len(train_idx)
    batch = min(cfg.batch_size, n_train)
    steps_per_epoch = math.ceil(n_train / batch)
    total_steps = cfg.max_epochs * steps_per_epoch

    shuffle_rng = rng_for(cfg.seed, 103)
    best_mae = math.inf
    best_params = params.copy()
    curve: list[float] = []
    bad_epochs = 0
    stopped_early = False
    step = 0
    epochs_run = 0

    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(n_train)
        losses = []
        for start in range(0, n_train, batch):
            sel = order[start : start + batch]
            lr = cosine_lr(step, total_steps, cfg.lr0, cfg.eta_min)
            mse, grads = loss_and_grad(
                params,
                x_train[sel],
                y_train[sel],
                train_mode=True,
                seed=spawn_seed(cfg.seed, 104, step),
                dropout=cfg.dropout,
            )
            params, opt = adamw_step(opt, params, grads, lr, cfg)
            losses.append(mse)
            step += 1
        curve.append(float(np.mean(losses)))
        epochs_run = epoch + 1
        val_mae = _batch_mae(params, x_val, y_val)
        if val_mae < best_mae:
            best_mae = val_mae
            best_params = params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                stopped_early = True
                break

    report = TrainReport(
        epochs_run=epochs_run,
        best_val_mae=best_mae,
        train_loss_curve=curve,
        stopped_early=stopped_early,
        degenerate_targets=degenerate,
    )
    return best_params, norm, report


def predict(params: MLPParams, norm: Normalizer, delta: ShiftDescriptor) -> float:
    """Estimate accuracy for one shift descriptor; output clipped to [0, 1].

    Refuses descriptors produced under a different configuration than the
    one the normalizer was fitted for.
    """
    if norm.config_digest != delta.config_digest:
        raise ConfigMismatch(
            "descriptor was computed under a different configuration than the model"
        )
    raw = forward(params, norm.apply(delta.features()), train_mode=False)
    return float(np.clip(raw, 0.0, 1.0))


# ---------------------------------------------------------------------------
# model files


@dataclass
class LoadedModel:
    params: MLPParams
    normalizer: Normalizer
    train_report: TrainReport | None
    meta_init: bool
    swd_config: SWDConfig | None
    variance_floor: float
    seed: int

    def predict(self, delta: ShiftDescriptor) -> float:
        return predict(self.params, self.normalizer, delta)


def save_model(
    path: str | os.PathLike,
    params: MLPParams,
    normalizer: Normalizer,
    train_report: TrainReport | None = None,
    swd_config: SWDConfig | None = None,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    meta_init: bool = False,
    seed: int = 0,
) -> None:
    """Serialize JSON header plus float32 parameter block, atomically."""
    path = os.fspath(path)
    header = {
        "layer_dims": list(params.layer_dims),
        "input_dim": params.input_dim,
        "config_digest": normalizer.config_digest,
        "normalizer": normalizer.to_dict(),
        "train_report": train_report.to_dict() if train_report else None,
        "swd_config": swd_config.to_dict() if swd_config else None,
        "variance_floor": variance_floor,
        "meta_init": meta_init,
        "seed": seed,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    block = b"".join(t.astype("<f4").tobytes(order="C") for t in params.tensors())
    blob = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(header_bytes)) + header_bytes + block
    try:
        _atomic_write(path, blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_model(path: str | os.PathLike) -> LoadedModel:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _MODEL_HEADER.size:
        raise BadMagic(f"{path}: file shorter than header")
    magic, version, header_len = _MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    try:
        header = json.loads(raw[_MODEL_HEADER.size : _MODEL_HEADER.size + header_len])
    except json.JSONDecodeError as exc:
        raise BadMagic(f"{path}: corrupt header") from exc

    layer_dims = tuple(header["layer_dims"])
    shapes = []
    hidden = len(layer_dims) - 2
    for i, (fan_in, fan_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        shapes.append((fan_in, fan_out))
        shapes.append((fan_out,))
        if i < hidden:
            shapes.append((fan_out,))
            shapes.append((fan_out,))
    expected = sum(int(np.prod(s)) for s in shapes) * 4
    block = raw[_MODEL_HEADER.size + header_len :]
    if len(block) != expected:
        raise TruncatedPayload(f"{path}: parameter block {len(block)} bytes, expected {expected}")
    flat = np.frombuffer(block, dtype="<f4").astype(np.float64)
    tensors = []
    offset = 0
    for s in shapes:
        size = int(np.prod(s))
        tensors.append(flat[offset : offset + size].reshape(s))
        offset += size
    params = _from_tensors(layer_dims, tensors)
    report = header.get("train_report")
    swd = header.get("swd_config")
    return LoadedModel(
        params=params,
        normalizer=Normalizer.from_dict(header["normalizer"]),
        train_report=TrainReport.from_dict(report) if report else None,
        meta_init=bool(header.get("meta_init", False)),
        swd_config=SWDConfig.from_dict(swd) if swd else None,
        variance_floor=float(header.get("variance_floor", DEFAULT_VARIANCE_FLOOR)),
        seed=int(header.get("seed", 0)),
    )
