"""
Servicio de entrenamiento de la cabeza de emociones.

Adagrad con weight decay como L2 sobre el gradiente, tasa fija, batches
barajados por época y early stopping sobre el UA de validación. Con la
misma configuración y los mismos datos el resultado es idéntico bit a bit.
"""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from emovar.core.exceptions import EmptyDatasetError, ShapeMismatchError
from emovar.core.metrics import confusion, ua, wa
from emovar.core.seeding import derive_seed
from emovar.core.ssl import SslConfig, utterance_ssl_loss
from emovar.models.deep_wccn import LayerMode
from emovar.models.emotion_head import (
    EmotionModel,
    HeadParameters,
    head_backward,
    head_forward,
    stat_pool,
    total_loss,
)
from emovar.schemas.corpus import UtteranceRecord
from emovar.schemas.training import EpochLog, HeadConfig, TrainingConfig, TrainingLog
from emovar.services.storage_service import atomic_write_text

logger = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-10
LOG_COLUMNS = ("epoch", "train_loss", "valid_UA", "valid_WA", "n_tot")


# ── Optimizador ──────────────────────────────────────

@dataclass
class OptimizerState:
    """Acumuladores de gradiente al cuadrado por parámetro y contador de pasos."""
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "OptimizerState":
        return cls({name: np.zeros_like(np.asarray(v, dtype=np.float64)) for name, v in params.items()})


def adagrad_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    opt_state: OptimizerState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """
    g' = g + wd·θ; acc += g'²; θ ← θ − lr·g'/(√acc + ε).

    No modifica las entradas: devuelve parámetros y estado nuevos.
    """
    if set(params) != set(grads):
        raise ShapeMismatchError(
            f"parámetros {sorted(params)} y gradientes {sorted(grads)} no coinciden"
        )
    new_params: dict[str, np.ndarray] = {}
    new_acc: dict[str, np.ndarray] = {}
    for name, theta in params.items():
        theta = np.asarray(theta, dtype=np.float64)
        grad = np.asarray(grads[name], dtype=np.float64)
        acc = opt_state.accumulators.get(name)
        if acc is None:
            acc = np.zeros_like(theta)
        if grad.shape != theta.shape or acc.shape != theta.shape:
            raise ShapeMismatchError(
                f"{name}: parámetro {theta.shape}, gradiente {grad.shape}, acumulador {acc.shape}"
            )
        effective = grad + weight_decay * theta
        acc = acc + effective * effective
        new_params[name] = theta - lr * effective / (np.sqrt(acc) + ADAGRAD_EPS)
        new_acc[name] = acc
    return new_params, OptimizerState(new_acc, opt_state.step + 1)


# ── Batches ──────────────────────────────────────────

def make_batches(items: Sequence, batch_size: int, seed: int, epoch: int) -> list[list]:
    """Barajado con semilla seed ⊕ epoch y cortes contiguos; el último batch parcial se conserva."""
    if not len(items):
        raise EmptyDatasetError("no hay ítems para armar batches")
    if batch_size < 1:
        raise ValueError(f"batch_size={batch_size} debe ser >= 1")
    rng = np.random.default_rng(int(seed) ^ int(epoch))
    order = rng.permutation(len(items))
    return [
        [items[i] for i in order[start : start + batch_size]]
        for start in range(0, len(order), batch_size)
    ]


# ── Preparación de datos ─────────────────────────────

@dataclass(frozen=True)
class PreparedSet:
    pooled: np.ndarray        # (N, 2·d_z)
    labels: np.ndarray        # (N,)
    ssl_values: np.ndarray    # (N,), 0 si el enunciado no trae tensores SSL

    def __len__(self) -> int:
        return self.labels.shape[0]


def prepare(
    records: Sequence[UtteranceRecord],
    ssl_config: SslConfig | None = None,
    seed: int = 0,
) -> PreparedSet:
    """
    Pooling estadístico y pérdida SSL por enunciado. Las repeticiones de un
    mismo enunciado reutilizan el cálculo.
    """
    if not records:
        raise EmptyDatasetError()
    pooled_by_id: dict[str, np.ndarray] = {}
    ssl_by_id: dict[str, float] = {}
    pooled, labels, ssl_values = [], [], []
    for record in records:
        if record.id not in pooled_by_id:
            pooled_by_id[record.id] = stat_pool(record.embedding)
            value = 0.0
            if ssl_config is not None and record.ssl is not None:
                value = utterance_ssl_loss(
                    record.ssl.context,
                    record.ssl.quantized,
                    record.ssl.masked,
                    record.ssl.probs,
                    ssl_config,
                    derive_seed(seed, "ssl", record.id),
                )
            ssl_by_id[record.id] = value
        pooled.append(pooled_by_id[record.id])
        labels.append(record.label_index)
        ssl_values.append(ssl_by_id[record.id])
    return PreparedSet(np.stack(pooled), np.array(labels, dtype=np.int64), np.array(ssl_values))


# ── Entrenamiento ────────────────────────────────────

def evaluate_prepared(model: EmotionModel, data: PreparedSet) -> np.ndarray:
    """Matriz de confusión del modelo sobre un conjunto preparado."""
    return confusion(data.labels, model.predict(data.pooled))


def train(
    model: EmotionModel,
    train_set: Sequence[UtteranceRecord],
    valid_set: Sequence[UtteranceRecord],
    training_config: TrainingConfig,
    head_config: HeadConfig,
    ssl_config: SslConfig | None = None,
) -> tuple[EmotionModel, TrainingLog]:
    """
    Entrena una copia de `model` y devuelve la mejor instantánea (mayor UA
    de validación; en empate gana la época anterior) junto al log.
    La instantánea devuelta está congelada.
    """
    if not train_set:
        raise EmptyDatasetError("conjunto de entrenamiento vacío")
    if not valid_set:
        raise EmptyDatasetError("conjunto de validación vacío")

    seed = training_config.seed
    train_data = prepare(train_set, ssl_config, seed)
    valid_data = prepare(valid_set, ssl_config, seed)
    n_train = len(train_data)

    work = model.copy()
    if work.wccn is not None:
        work.wccn.unfreeze()
    opt_state = OptimizerState.zeros_like(work.params.as_dict())

    log = TrainingLog()
    best: EmotionModel | None = None
    best_ua = -np.inf
    since_best = 0

    for epoch in range(1, training_config.max_epochs + 1):
        dropout_rng = np.random.default_rng([seed, epoch])
        loss_sum = 0.0
        for batch in make_batches(np.arange(n_train), training_config.batch_size, seed, epoch):
            idx = np.asarray(batch)
            labels = train_data.labels[idx]
            logits, cache = head_forward(
                work.params,
                head_config,
                work.wccn,
                train_data.pooled[idx],
                labels,
                LayerMode.TRAINING,
                dropout_rng,
            )
            ssl_value = float(train_data.ssl_values[idx].mean())
            loss_sum += total_loss(logits, labels, head_config.gamma, ssl_value) * idx.size
            grads = head_backward(cache, labels)
            new_params, opt_state = adagrad_step(
                work.params.as_dict(),
                grads.as_dict(),
                opt_state,
                training_config.learning_rate,
                training_config.weight_decay,
            )
            work.params = HeadParameters.from_dict(new_params)

        cm = evaluate_prepared(work, valid_data)
        entry = EpochLog(
            epoch=epoch,
            train_loss=loss_sum / n_train,
            valid_ua=ua(cm),
            valid_wa=wa(cm),
            n_tot=work.wccn.n_tot if work.wccn is not None else 0,
        )
        log.epochs.append(entry)
        logger.debug(
            f"Época {epoch}: loss={entry.train_loss:.4f} "
            f"UA={entry.valid_ua:.4f} WA={entry.valid_wa:.4f} n_tot={entry.n_tot}"
        )

        if entry.valid_ua > best_ua:
            best_ua = entry.valid_ua
            best = work.copy()
            log.best_epoch = epoch
            log.best_valid_ua = entry.valid_ua
            since_best = 0
        else:
            since_best += 1

        if since_best >= training_config.patience:
            log.stopped_early = epoch < training_config.max_epochs
            if log.stopped_early:
                logger.info(
                    f"Early stopping en la época {epoch}; mejor época {log.best_epoch} "
                    f"(UA valid {log.best_valid_ua:.4f})"
                )
            break

    best.freeze()
    return best, log


# ── Log de entrenamiento ─────────────────────────────

def training_log_csv(log: TrainingLog) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for e in log.epochs:
        writer.writerow(
            [e.epoch, f"{e.train_loss:.8f}", f"{e.valid_ua:.6f}", f"{e.valid_wa:.6f}", e.n_tot]
        )
    return buffer.getvalue()


def write_training_log(log: TrainingLog, path: str | Path) -> Path:
    return atomic_write_text(Path(path), training_log_csv(log))
