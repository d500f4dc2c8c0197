"""
Cabeza de clasificación de emociones sobre secuencias de embeddings.

Pipeline: pooling estadístico (media ‖ desvío) → densa → ReLU → dropout
invertido → Deep-WCCN → norma unitaria → clasificador lineal. Los
gradientes se calculan analíticamente; Deep-WCCN se trata como un mapa
lineal con A constante.

Formato del archivo de modelo (little-endian):
    magic "EMOHEAD1" | versión u8 | d_z u64 | d_h u64 | C u64 |
    W1 d_h×2d_z f64 | b1 d_h f64 | W2 C×d_h f64 | b2 C f64 |
    largo u64 del estado Deep-WCCN (0 = sin capa) | estado Deep-WCCN
"""

from __future__ import annotations

import copy
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from emovar.core.exceptions import (
    CorruptStateError,
    DimensionMismatchError,
    EmptySequenceError,
    StaleIntermediatesError,
)
from emovar.models.deep_wccn import DeepWccn, LayerMode
from emovar.schemas.corpus import N_CLASSES
from emovar.schemas.training import HeadConfig

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"EMOHEAD1"
MODEL_VERSION = 1
_HEADER = struct.Struct("<8sBQQQ")
_LENGTH = struct.Struct("<Q")

# Evita dividir por cero en la norma unitaria.
UNIT_NORM_EPS = 1e-12

PARAM_NAMES = ("dense_weights", "dense_bias", "classifier_weights", "classifier_bias")


# ── Pooling estadístico ──────────────────────────────

def stat_pool(seq) -> np.ndarray:
    """Media temporal concatenada con el desvío poblacional (÷T): 2·d_z."""
    frames = np.asarray(seq, dtype=np.float64)
    if frames.ndim != 2:
        raise DimensionMismatchError(f"se esperaba una secuencia (T, d_z), forma {frames.shape}")
    if frames.shape[0] == 0:
        raise EmptySequenceError()
    return np.concatenate([frames.mean(axis=0), frames.std(axis=0)])


def stat_pool_batch(sequences) -> np.ndarray:
    return np.stack([stat_pool(seq) for seq in sequences])


# ── Parámetros ───────────────────────────────────────

@dataclass
class HeadParameters:
    dense_weights: np.ndarray        # (d_h, 2·d_z)
    dense_bias: np.ndarray           # (d_h,)
    classifier_weights: np.ndarray   # (C, d_h)
    classifier_bias: np.ndarray      # (C,)

    @classmethod
    def init(cls, d_z: int, d_h: int, n_classes: int = N_CLASSES, seed: int = 0) -> "HeadParameters":
        """Pesos uniformes en ±1/√fan_in, sesgos en cero."""
        rng = np.random.default_rng(seed)
        fan_dense = 2 * d_z
        bound_dense = 1.0 / np.sqrt(fan_dense)
        bound_cls = 1.0 / np.sqrt(d_h)
        return cls(
            dense_weights=rng.uniform(-bound_dense, bound_dense, size=(d_h, fan_dense)),
            dense_bias=np.zeros(d_h),
            classifier_weights=rng.uniform(-bound_cls, bound_cls, size=(n_classes, d_h)),
            classifier_bias=np.zeros(n_classes),
        )

    @property
    def d_z(self) -> int:
        return self.dense_weights.shape[1] // 2

    @property
    def d_h(self) -> int:
        return self.dense_weights.shape[0]

    @property
    def n_classes(self) -> int:
        return self.classifier_weights.shape[0]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_dict(cls, values: dict[str, np.ndarray]) -> "HeadParameters":
        return cls(**{name: np.asarray(values[name], dtype=np.float64) for name in PARAM_NAMES})

    def copy(self) -> "HeadParameters":
        return HeadParameters.from_dict({k: v.copy() for k, v in self.as_dict().items()})


@dataclass
class HeadGradients:
    dense_weights: np.ndarray
    dense_bias: np.ndarray
    classifier_weights: np.ndarray
    classifier_bias: np.ndarray
    pooled: np.ndarray | None = None

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


@dataclass
class HeadCache:
    """Intermedios de un forward, consumibles una sola vez por backward."""
    params: HeadParameters
    mode: LayerMode
    pooled: np.ndarray
    pre_activation: np.ndarray
    dropout_mask: np.ndarray
    dropped: np.ndarray
    projected: np.ndarray
    factor: np.ndarray | None
    wccn: DeepWccn | None
    normalized: np.ndarray
    logits: np.ndarray
    consumed: bool = field(default=False)


# ── Forward ──────────────────────────────────────────

def _dropout_mask(shape, rate: float, rng: np.random.Generator | None) -> np.ndarray:
    if rate <= 0.0:
        return np.ones(shape)
    if rng is None:
        raise ValueError("dropout en entrenamiento requiere un generador aleatorio")
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def head_forward(
    params: HeadParameters,
    config: HeadConfig,
    wccn: DeepWccn | None,
    pooled,
    labels,
    mode: LayerMode | str = LayerMode.INFERENCE,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, HeadCache]:
    """
    Logits por ítem e intermedios para backward.

    En entrenamiento el dropout está activo y, si la capa Deep-WCCN no está
    congelada, sus estadísticas avanzan con este batch.
    """
    mode = LayerMode(mode)
    u = np.atleast_2d(np.asarray(pooled, dtype=np.float64))
    if u.shape[1] != params.dense_weights.shape[1]:
        raise DimensionMismatchError(
            f"entrada de dimensión {u.shape[1]}, la capa densa espera {params.dense_weights.shape[1]}"
        )

    pre = u @ params.dense_weights.T + params.dense_bias
    activated = np.maximum(pre, 0.0)
    if mode is LayerMode.TRAINING:
        mask = _dropout_mask(activated.shape, config.dropout_rate, rng)
    else:
        mask = np.ones_like(activated)
    dropped = activated * mask

    factor = None
    if wccn is None:
        projected = dropped
    elif mode is LayerMode.TRAINING and wccn.mode is LayerMode.TRAINING:
        projected = wccn.forward_train(dropped, labels)
        factor = wccn.factor
    else:
        projected = wccn.forward_infer(dropped)
        factor = wccn.factor

    norms = np.linalg.norm(projected, axis=1, keepdims=True)
    normalized = projected / (norms + UNIT_NORM_EPS)
    logits = normalized @ params.classifier_weights.T + params.classifier_bias

    cache = HeadCache(
        params=params,
        mode=mode,
        pooled=u,
        pre_activation=pre,
        dropout_mask=mask,
        dropped=dropped,
        projected=projected,
        factor=factor,
        wccn=wccn,
        normalized=normalized,
        logits=logits,
    )
    return logits, cache


# ── Pérdida ──────────────────────────────────────────

def cross_entropy(logits, labels) -> np.ndarray:
    """−log softmax del logit verdadero, por ítem."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    return logsumexp(z, axis=1) - z[np.arange(z.shape[0]), y]


def total_loss(logits, labels, gamma: float = 0.0, ssl_value: float = 0.0) -> float:
    """Entropía cruzada media del batch + γ·L_ssl."""
    return float(cross_entropy(logits, labels).mean() + gamma * ssl_value)


# ── Backward ─────────────────────────────────────────

def _unit_norm_backward(projected: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Jacobiano-transpuesto de w ↦ w/(‖w‖+ε)."""
    r = np.linalg.norm(projected, axis=1, keepdims=True)
    n = r + UNIT_NORM_EPS
    radial = np.sum(projected * upstream, axis=1, keepdims=True)
    safe_r = np.where(r > 0, r, 1.0)
    correction = np.where(r > 0, projected * radial / (n * n * safe_r), 0.0)
    return upstream / n - correction


def head_backward(cache: HeadCache, labels) -> HeadGradients:
    """Gradientes exactos de la pérdida media del batch (sin el término SSL)."""
    if cache.consumed:
        raise StaleIntermediatesError("los intermedios ya se usaron en un backward")
    if cache.mode is not LayerMode.TRAINING:
        raise StaleIntermediatesError("backward requiere un forward en modo entrenamiento")
    cache.consumed = True

    params = cache.params
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n_items = cache.logits.shape[0]
    if y.shape[0] != n_items:
        raise DimensionMismatchError(f"{n_items} logits y {y.shape[0]} etiquetas")

    d_logits = softmax(cache.logits, axis=1)
    d_logits[np.arange(n_items), y] -= 1.0
    d_logits /= n_items

    grad_cls_w = d_logits.T @ cache.normalized
    grad_cls_b = d_logits.sum(axis=0)
    d_normalized = d_logits @ params.classifier_weights

    d_projected = _unit_norm_backward(cache.projected, d_normalized)
    if cache.wccn is None:
        d_dropped = d_projected
    else:
        d_dropped = cache.wccn.backward(d_projected, factor=cache.factor)

    d_pre = d_dropped * cache.dropout_mask * (cache.pre_activation > 0)
    grad_dense_w = d_pre.T @ cache.pooled
    grad_dense_b = d_pre.sum(axis=0)
    d_pooled = d_pre @ params.dense_weights

    return HeadGradients(
        dense_weights=grad_dense_w,
        dense_bias=grad_dense_b,
        classifier_weights=grad_cls_w,
        classifier_bias=grad_cls_b,
        pooled=d_pooled,
    )


# ── Modelo completo ──────────────────────────────────

class EmotionModel:
    """Parámetros de la cabeza más la capa Deep-WCCN (o None en la ablación)."""

    def __init__(self, params: HeadParameters, wccn: DeepWccn | None):
        self.params = params
        self.wccn = wccn

    @classmethod
    def create(cls, d_z: int, config: HeadConfig, n_classes: int = N_CLASSES) -> "EmotionModel":
        d_h = config.resolve_hidden_dim(d_z)
        params = HeadParameters.init(d_z, d_h, n_classes, seed=config.rng_seed)
        wccn = None
        if config.use_wccn:
            wccn = DeepWccn.init(
                d_h,
                config.beta,
                update_rule=config.wccn_update,
                momentum=config.wccn_momentum,
            )
        return cls(params, wccn)

    @property
    def d_z(self) -> int:
        return self.params.d_z

    def copy(self) -> "EmotionModel":
        return copy.deepcopy(self)

    def freeze(self) -> None:
        if self.wccn is not None:
            self.wccn.freeze()

    def logits(self, pooled) -> np.ndarray:
        config = HeadConfig(use_wccn=self.wccn is not None)
        out, _ = head_forward(self.params, config, self.wccn, pooled, None, LayerMode.INFERENCE)
        return out

    def predict(self, pooled) -> np.ndarray:
        return np.argmax(self.logits(pooled), axis=1)

    # ── Serialización ────────────────────────────────

    def to_bytes(self) -> bytes:
        p = self.params
        parts = [_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, p.d_z, p.d_h, p.n_classes)]
        for name in PARAM_NAMES:
            parts.append(np.asarray(getattr(p, name)).astype("<f8").tobytes(order="C"))
        state = self.wccn.to_bytes() if self.wccn is not None else b""
        parts.append(_LENGTH.pack(len(state)))
        parts.append(state)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmotionModel":
        if len(data) < _HEADER.size:
            raise CorruptStateError("modelo truncado (cabecera incompleta)")
        magic, version, d_z, d_h, n_classes = _HEADER.unpack_from(data)
        if magic != MODEL_MAGIC:
            raise CorruptStateError(f"magic de modelo inválido: {magic!r}")
        if version != MODEL_VERSION:
            raise CorruptStateError(f"versión de modelo no soportada: {version}")
        shapes = {
            "dense_weights": (d_h, 2 * d_z),
            "dense_bias": (d_h,),
            "classifier_weights": (n_classes, d_h),
            "classifier_bias": (n_classes,),
        }
        offset = _HEADER.size
        values = {}
        for name in PARAM_NAMES:
            count = int(np.prod(shapes[name]))
            if len(data) < offset + count * 8:
                raise CorruptStateError(f"modelo truncado en {name}")
            block = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
            values[name] = block.reshape(shapes[name]).astype(np.float64)
            offset += count * 8
        if len(data) < offset + _LENGTH.size:
            raise CorruptStateError("modelo truncado antes del estado Deep-WCCN")
        (state_len,) = _LENGTH.unpack_from(data, offset)
        offset += _LENGTH.size
        if len(data) != offset + state_len:
            raise CorruptStateError(
                f"modelo de {len(data)} bytes, se esperaban {offset + state_len}"
            )
        wccn = DeepWccn.from_bytes(data[offset:]) if state_len else None
        if wccn is not None and wccn.dim != d_h:
            raise CorruptStateError(f"estado Deep-WCCN de dimensión {wccn.dim}, d_h={d_h}")
        return cls(HeadParameters.from_dict(values), wccn)

    def save(self, path: str | Path) -> None:
        from emovar.services.storage_service import atomic_write_bytes

        atomic_write_bytes(Path(path), self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "EmotionModel":
        return cls.from_bytes(Path(path).read_bytes())
