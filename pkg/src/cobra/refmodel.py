"""Small from-scratch tanh MLP used as the reference classifier.

Stands in for the large task-specific models that would normally produce the
class-probability vectors: a single hidden layer is enough to separate the
synthetic classes at severity 0, trains in seconds, and is bit-deterministic
given a seed. Plain mini-batch gradient descent, no optimizer state.

The hidden activations double as the penultimate-layer features consumed by
the Fréchet-distance pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import LabeledVectors, ProbabilityRecord
from .errors import CheckpointError, DimensionMismatch, InputError, LabelOutOfRange
from .fid import FeatureSet

CHECKPOINT_FORMAT = "cobra-refmodel"
CHECKPOINT_VERSION = 1


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RefModel:
    """Two-layer perceptron: x -> tanh(W1 x + b1) -> softmax(W2 h + b2)."""

    w1: np.ndarray  # H × D_in
    b1: np.ndarray  # H
    w2: np.ndarray  # K × H
    b2: np.ndarray  # K

    def __post_init__(self) -> None:
        w1, b1 = _frozen(self.w1), _frozen(self.b1)
        w2, b2 = _frozen(self.w2), _frozen(self.b2)
        if w1.ndim != 2 or w2.ndim != 2 or b1.ndim != 1 or b2.ndim != 1:
            raise InputError("parameter arrays have wrong rank")
        h, d_in = w1.shape
        k = w2.shape[0]
        if b1.shape != (h,) or w2.shape != (k, h) or b2.shape != (k,):
            raise InputError(
                f"inconsistent layer sizes: W1 {w1.shape}, b1 {b1.shape}, "
                f"W2 {w2.shape}, b2 {b2.shape}"
            )
        if k < 2:
            raise InputError("output layer needs at least 2 classes")
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"non-finite values in {name}")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def d_in(self) -> int:
        return int(self.w1.shape[1])

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[0])

    @property
    def k(self) -> int:
        return int(self.w2.shape[0])

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.d_in, self.hidden, self.k)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    epochs: int = 400
    batch_size: int = 128
    seed: int = 0
    init_scale: float = 1.0
    hidden: int = 32

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive")
        if self.epochs < 1:
            raise InputError("epochs must be at least 1")
        if self.batch_size < 1:
            raise InputError("batch_size must be at least 1")
        if self.hidden < 1:
            raise InputError("hidden width must be at least 1")


def _softmax(z: np.ndarray) -> np.ndarray:
    # max subtraction keeps exp() in range for any finite logits
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: RefModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and hidden activations; accepts one vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != model.d_in:
        raise DimensionMismatch(
            f"input dimension {x2.shape[1]}, model expects {model.d_in}"
        )
    hidden = np.tanh(x2 @ model.w1.T + model.b1)
    probs = _softmax(hidden @ model.w2.T + model.b2)
    if single:
        return probs[0], hidden[0]
    return probs, hidden


def loss_and_grad(
    model: RefModel, x: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch plus analytic parameter gradients."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise InputError("batch labels must align with batch rows")
    if np.any(y < 0) or np.any(y >= model.k):
        raise LabelOutOfRange(f"labels must lie in [0, {model.k})")
    b = x.shape[0]
    a1 = np.tanh(x @ model.w1.T + model.b1)
    z2 = a1 @ model.w2.T + model.b2
    # loss via log-softmax so that near-certain predictions do not underflow
    z_shift = z2 - z2.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z_shift).sum(axis=1))
    loss = float(np.mean(log_norm - z_shift[np.arange(b), y]))
    probs = _softmax(z2)
    dz2 = probs.copy()
    dz2[np.arange(b), y] -= 1.0
    dz2 /= b
    gw2 = dz2.T @ a1
    gb2 = dz2.sum(axis=0)
    da1 = dz2 @ model.w2
    dz1 = da1 * (1.0 - a1 * a1)
    gw1 = dz1.T @ x
    gb1 = dz1.sum(axis=0)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def init_model(d_in: int, hidden: int, k: int, seed: int, init_scale: float = 1.0) -> RefModel:
    """Uniform init in [-s, s] with s = init_scale / sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    s1 = init_scale / np.sqrt(d_in)
    s2 = init_scale / np.sqrt(hidden)
    return RefModel(
        w1=rng.uniform(-s1, s1, size=(hidden, d_in)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-s2, s2, size=(k, hidden)),
        b2=np.zeros(k),
    )


def train(
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    k: int | None = None,
    loss_history: list[float] | None = None,
) -> RefModel:
    """Mini-batch gradient descent on mean cross-entropy.

    Deterministic given cfg.seed (init and shuffling share one generator).
    Every class in [0, K) must appear in the training labels. Per-step batch
    losses are appended to ``loss_history`` when a list is passed.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if y.shape[0] != x.shape[0]:
        raise InputError("labels must align with rows")
    if np.any(y < 0):
        raise LabelOutOfRange("negative label")
    if k is None:
        k = int(y.max()) + 1
    elif np.any(y >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    present = set(np.unique(y).tolist())
    absent = sorted(set(range(k)) - present)
    if absent:
        raise InputError(f"classes {absent} absent from training labels")
    if k < 2:
        raise InputError("need at least 2 classes")

    rng = np.random.default_rng(cfg.seed)
    s1 = cfg.init_scale / np.sqrt(x.shape[1])
    s2 = cfg.init_scale / np.sqrt(cfg.hidden)
    w1 = rng.uniform(-s1, s1, size=(cfg.hidden, x.shape[1]))
    b1 = np.zeros(cfg.hidden)
    w2 = rng.uniform(-s2, s2, size=(k, cfg.hidden))
    b2 = np.zeros(k)

    n = x.shape[0]
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            snapshot = RefModel(w1=w1, b1=b1, w2=w2, b2=b2)
            loss, grads = loss_and_grad(snapshot, x[idx], y[idx])
            if loss_history is not None:
                loss_history.append(loss)
            w1 = w1 - cfg.learning_rate * grads["w1"]
            b1 = b1 - cfg.learning_rate * grads["b1"]
            w2 = w2 - cfg.learning_rate * grads["w2"]
            b2 = b2 - cfg.learning_rate * grads["b2"]
    return RefModel(w1=w1, b1=b1, w2=w2, b2=b2)


def predict_dataset(
    model: RefModel, data: LabeledVectors
) -> tuple[list[ProbabilityRecord], list[FeatureSet]]:
    """One probability record per row plus per-subject hidden-feature sets.

    Point ids are ``<subject_id>-<row index within subject>``; true labels
    pass through when present so downstream performance metrics work.
    """
    records: list[ProbabilityRecord] = []
    feature_sets: list[FeatureSet] = []
    for sid, rows, labels in data.by_subject():
        probs, hidden = forward(model, rows)
        feature_sets.append(FeatureSet(sid, hidden))
        for i in range(rows.shape[0]):
            records.append(
                ProbabilityRecord(
                    subject_id=sid,
                    point_id=f"{sid}-{i}",
                    probs=probs[i],
                    true_label=labels[i],
                )
            )
    return records, feature_sets


def save_model(path: Path | str, model: RefModel) -> None:
    """Versioned JSON checkpoint with row-major parameter arrays."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "sizes": list(model.sizes),
        "w1": model.w1.ravel().tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.ravel().tolist(),
        "b2": model.b2.tolist(),
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
    tmp.replace(path)


def load_model(path: Path | str) -> RefModel:
    """Load and validate a checkpoint; size mismatches are hard errors."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {payload.get('version')!r}"
        )
    try:
        d_in, h, k = (int(v) for v in payload["sizes"])
        arrays = {
            "w1": np.asarray(payload["w1"], dtype=np.float64),
            "b1": np.asarray(payload["b1"], dtype=np.float64),
            "w2": np.asarray(payload["w2"], dtype=np.float64),
            "b2": np.asarray(payload["b2"], dtype=np.float64),
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint: {exc}") from None
    expected = {"w1": h * d_in, "b1": h, "w2": k * h, "b2": k}
    for name, arr in arrays.items():
        if arr.ndim != 1 or arr.shape[0] != expected[name]:
            raise CheckpointError(
                f"{path}: size mismatch: {name} has {arr.size} values, "
                f"sizes {d_in}x{h}x{k} require {expected[name]}"
            )
    try:
        return RefModel(
            w1=arrays["w1"].reshape(h, d_in),
            b1=arrays["b1"],
            w2=arrays["w2"].reshape(k, h),
            b2=arrays["b2"],
        )
    except InputError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
