"""Mini-batch training, evaluation metrics and the day-based split."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .lob.events import LobSeries
from .lob.labels import CLASS_NAMES
from .lob.windows import WindowSet
from .model import TransLOB
from .nn.checkpoint import save_checkpoint
from .nn.optim import AdamState, adam_step
from .nn.tensor import GradTape, backward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 150
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    eval_every: int = 1
    patience: Optional[int] = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


# metrics -------------------------------------------------------------------


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass
class Metrics:
    """Classification scores; every score is a percentage.

    ``confusion[i][j]`` counts samples of true class ``i`` predicted as ``j``.
    """

    confusion: list
    accuracy: float
    precision: list
    recall: list
    f1: list
    macro_precision: float
    macro_recall: float
    macro_f1: float
    n: int

    @classmethod
    def from_confusion(cls, cm) -> "Metrics":
        cm = np.asarray(cm, dtype=np.int64)
        total = int(cm.sum())
        tp = np.diag(cm)
        pred = cm.sum(axis=0)
        true = cm.sum(axis=1)
        precision = [_ratio(tp[c], pred[c]) for c in range(len(cm))]
        recall = [_ratio(tp[c], true[c]) for c in range(len(cm))]
        f1 = [_ratio(2 * p * r, p + r) for p, r in zip(precision, recall)]
        return cls(
            confusion=cm.tolist(),
            accuracy=100.0 * _ratio(int(tp.sum()), total),
            precision=[100.0 * v for v in precision],
            recall=[100.0 * v for v in recall],
            f1=[100.0 * v for v in f1],
            macro_precision=100.0 * float(np.mean(precision)),
            macro_recall=100.0 * float(np.mean(recall)),
            macro_f1=100.0 * float(np.mean(f1)),
            n=total,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = list(CLASS_NAMES[: len(self.confusion)])
        return d


def confusion_matrix(y_true, y_pred, n_classes: int = 3) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def compute_metrics(y_true, y_pred, n_classes: int = 3) -> Metrics:
    if len(y_true) == 0:
        raise ValueError("cannot compute metrics on an empty set")
    return Metrics.from_confusion(confusion_matrix(y_true, y_pred, n_classes))


def predict(model: TransLOB, windows: WindowSet, batch_size: int = 256) -> np.ndarray:
    """Argmax class per window; ``np.argmax`` breaks ties toward the lower index."""
    preds = []
    for start in range(0, len(windows), batch_size):
        idx = np.arange(start, min(start + batch_size, len(windows)))
        preds.append(np.argmax(model.predict_proba(windows.inputs(idx)), axis=-1))
    return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)


def evaluate(model: TransLOB, windows: WindowSet, batch_size: int = 256) -> Metrics:
    if len(windows) == 0:
        raise ValueError("cannot evaluate on an empty window set")
    return compute_metrics(windows.labels, predict(model, windows, batch_size), model.cfg.num_classes)


# split ---------------------------------------------------------------------


def split_train_test(data, n_train_days: int = 7, n_test_days: int = 3):
    """Split by whole days: the first ``n_train_days`` days train, the next ``n_test_days`` test.

    For a :class:`WindowSet` a window is kept only if its history and its
    label horizon both lie inside one side of the split.
    """
    days = [int(d) for d in np.unique(data.day_id)]
    if len(days) < n_train_days + n_test_days:
        raise ValueError(f"need {n_train_days + n_test_days} days, found {len(days)}")
    train_days = days[:n_train_days]
    test_days = days[n_train_days : n_train_days + n_test_days]
    if isinstance(data, LobSeries):
        return data.select_days(train_days), data.select_days(test_days)

    first = data.day_id[data.anchors - data.window + 1]
    last = data.day_id[np.minimum(data.anchors + data.horizon, len(data.day_id) - 1)]

    def inside(sel):
        return np.flatnonzero(np.isin(first, sel) & np.isin(last, sel))

    return data.subset(inside(train_days)), data.subset(inside(test_days))


# training ------------------------------------------------------------------


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    adam: Optional[AdamState] = None
    best_epoch: Optional[int] = None
    best_params: Optional[dict] = None
    steps: int = 0


def epoch_rngs(seed: int, epoch: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Shuffle and dropout generators for one epoch, so resumed runs replay exactly."""
    return np.random.default_rng([seed, epoch, 0]), np.random.default_rng([seed, epoch, 1])


def train(
    model: TransLOB,
    windows: WindowSet,
    cfg: TrainConfig,
    val_windows: Optional[WindowSet] = None,
    out_dir=None,
    adam: Optional[AdamState] = None,
    start_epoch: int = 0,
    checkpoint_meta: Optional[dict] = None,
) -> TrainResult:
    """Train ``model`` in place with Adam on mini-batches.

    The trailing partial batch of each epoch is trained on. The best epoch is
    chosen by validation accuracy when ``val_windows`` is given, otherwise by
    mean training loss. With ``out_dir``, ``best.json``, ``final.json`` and
    ``history.json`` are written there. Passing ``adam`` and ``start_epoch``
    from a checkpoint resumes the optimizer trajectory.
    """
    if len(windows) == 0:
        raise ValueError("cannot train on an empty window set")
    if adam is None:
        adam = AdamState(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    params = model.parameters()
    result = TrainResult(adam=adam)
    best_score = -math.inf
    stale = 0
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    meta = dict(checkpoint_meta or {})
    meta["model_config"] = model.cfg.to_dict()
    meta["train_config"] = asdict(cfg)

    n = len(windows)
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        shuffle_rng, dropout_rng = epoch_rngs(cfg.seed, epoch)
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = windows.inputs(idx)
            y = windows.labels[idx]
            model.zero_grad()
            with GradTape() as tape:
                loss, probs = model.loss(x, y, training=True, rng=dropout_rng)
            backward(tape, loss)
            adam_step(params, adam)
            result.steps += 1
            loss_sum += loss.item() * len(idx)
            correct += int((np.argmax(probs.data, axis=-1) == y).sum())
        record = {"epoch": epoch + 1, "loss": loss_sum / n, "train_accuracy": 100.0 * correct / n, "step": adam.t}
        if val_windows is not None and len(val_windows) and (epoch + 1 - start_epoch) % cfg.eval_every == 0:
            record["val_accuracy"] = evaluate(model, val_windows).accuracy
        result.history.append(record)
        logger.info("epoch %d %s", epoch + 1, json.dumps(record))

        score = record.get("val_accuracy", -record["loss"]) if val_windows is not None else -record["loss"]
        if "val_accuracy" in record or val_windows is None:
            if score > best_score:
                best_score = score
                stale = 0
                result.best_epoch = epoch + 1
                result.best_params = {p.id: p.data.copy() for p in params}
                if out_dir is not None:
                    save_checkpoint(out_dir / "best.json", params, adam, {**meta, "epoch": epoch + 1})
            else:
                stale += 1
        if cfg.patience is not None and stale >= cfg.patience:
            logger.info("early stop after epoch %d", epoch + 1)
            break

    if out_dir is not None:
        save_checkpoint(out_dir / "final.json", params, adam, {**meta, "epoch": result.history[-1]["epoch"]})
        (out_dir / "history.json").write_text(json.dumps(result.history, indent=2))
    return result
