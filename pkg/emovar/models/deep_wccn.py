"""
Capa Deep-WCCN: WCCN por mini-batch como capa sin parámetros entrenables.

Durante el entrenamiento actualiza el promedio acumulado de la covarianza
intra-clase con una copia "desconectada" del batch, recalcula el factor A
después de cada batch y proyecta con el factor nuevo. En inferencia usa el
último factor guardado y no modifica nada.

Formato del archivo de estado (little-endian):
    magic "DWCCN01" | versión u8 | dim u64 | n_tot u64 | regla u8 | modo u8 |
    beta f64 | momentum f64 | mean_cov dim×dim f64 | factor dim×dim f64
"""

from __future__ import annotations

import copy
import logging
import struct
from enum import Enum
from pathlib import Path

import numpy as np

from emovar.core.covariance import (
    batch_within_class_cov,
    cumulative_update,
    project,
    smooth,
    wccn_factor,
)
from emovar.core.exceptions import (
    BetaOutOfRangeError,
    CorruptStateError,
    DimensionMismatchError,
    NoEstimableClassError,
)

logger = logging.getLogger(__name__)

STATE_MAGIC = b"DWCCN01"
STATE_VERSION = 1
_HEADER = struct.Struct("<7sBQQBBdd")


class LayerMode(str, Enum):
    TRAINING = "training"
    INFERENCE = "inference"


class UpdateRule(str, Enum):
    CUMULATIVE = "cumulative"
    MOVING_AVERAGE = "moving_average"


_RULE_CODES = {UpdateRule.CUMULATIVE: 0, UpdateRule.MOVING_AVERAGE: 1}
_MODE_CODES = {LayerMode.TRAINING: 0, LayerMode.INFERENCE: 1}


class DeepWccn:
    """
    Estado de la capa: S̄_w, N_tot, β y el factor A vigente.

    Un solo hilo puede entrenar una instancia; las proyecciones de una capa
    congelada pueden hacerse en paralelo.
    """

    def __init__(
        self,
        mean_cov: np.ndarray,
        n_tot: int,
        factor: np.ndarray,
        beta: float,
        *,
        update_rule: UpdateRule = UpdateRule.CUMULATIVE,
        momentum: float = 0.9,
        mode: LayerMode = LayerMode.TRAINING,
    ):
        self.mean_cov = np.asarray(mean_cov, dtype=np.float64)
        self.n_tot = int(n_tot)
        self.factor = np.asarray(factor, dtype=np.float64)
        self.beta = float(beta)
        self.update_rule = UpdateRule(update_rule)
        self.momentum = float(momentum)
        self.mode = LayerMode(mode)

    # ── Construcción ─────────────────────────────────

    @classmethod
    def init(
        cls,
        dim: int,
        beta: float,
        *,
        update_rule: UpdateRule | str = UpdateRule.CUMULATIVE,
        momentum: float = 0.9,
    ) -> "DeepWccn":
        """S̄_w = I y N_tot = 0, así que la capa sin entrenar es la identidad."""
        if dim < 1:
            raise DimensionMismatchError(f"dim={dim} debe ser >= 1")
        if not 0.0 <= beta <= 1.0:
            raise BetaOutOfRangeError(beta)
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum={momentum} fuera de [0, 1)")
        identity = np.eye(dim)
        return cls(
            mean_cov=identity,
            n_tot=0,
            factor=wccn_factor(smooth(identity, beta)),
            beta=beta,
            update_rule=UpdateRule(update_rule),
            momentum=momentum,
        )

    @property
    def dim(self) -> int:
        return self.mean_cov.shape[0]

    def copy(self) -> "DeepWccn":
        return copy.deepcopy(self)

    def freeze(self) -> None:
        self.mode = LayerMode.INFERENCE

    def unfreeze(self) -> None:
        self.mode = LayerMode.TRAINING

    def recompute_factor(self) -> np.ndarray:
        return wccn_factor(smooth(self.mean_cov, self.beta))

    # ── Forward / backward ───────────────────────────

    def forward_train(self, vectors, labels) -> np.ndarray:
        """
        Actualiza estadísticas con el batch y proyecta con el factor NUEVO.

        Si ninguna clase del batch tiene 2 muestras, las estadísticas quedan
        igual y se proyecta con el factor vigente.
        """
        if self.mode is not LayerMode.TRAINING:
            raise RuntimeError("forward_train sobre una capa congelada")
        w = np.asarray(vectors, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"batch de forma {w.shape}, la capa espera (N, {self.dim})"
            )
        detached = w.copy()
        try:
            stats = batch_within_class_cov(detached, labels)
        except NoEstimableClassError:
            logger.debug("Batch sin clases estimables; se omite la actualización")
            return project(self.factor, w)

        mean_cov, n_tot = cumulative_update(self.mean_cov, self.n_tot, stats.averaged)
        if self.update_rule is UpdateRule.CUMULATIVE:
            factor = wccn_factor(smooth(mean_cov, self.beta))
        else:
            batch_factor = wccn_factor(smooth(stats.averaged, self.beta))
            if self.n_tot == 0:
                factor = batch_factor
            else:
                factor = self.momentum * self.factor + (1.0 - self.momentum) * batch_factor

        self.mean_cov, self.n_tot, self.factor = mean_cov, n_tot, factor
        return project(factor, w)

    def forward_infer(self, vectors) -> np.ndarray:
        """Aᵀ·w con el factor guardado; no toca el estado."""
        w = np.asarray(vectors, dtype=np.float64)
        return project(self.factor, w)

    def backward(self, upstream, factor: np.ndarray | None = None) -> np.ndarray:
        """
        Gradiente respecto a la entrada: A·g por fila.

        A se trata como constante; no fluye gradiente hacia las estadísticas.
        `factor` permite usar el factor con el que se hizo el forward.
        """
        a = self.factor if factor is None else factor
        g = np.asarray(upstream, dtype=np.float64)
        if g.shape[-1] != a.shape[0]:
            raise DimensionMismatchError(
                f"gradiente de dimensión {g.shape[-1]} y factor {a.shape}"
            )
        if g.ndim == 1:
            return a @ g
        return g @ a.T

    # ── Serialización ────────────────────────────────

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(
            STATE_MAGIC,
            STATE_VERSION,
            self.dim,
            self.n_tot,
            _RULE_CODES[self.update_rule],
            _MODE_CODES[self.mode],
            self.beta,
            self.momentum,
        )
        return (
            header
            + self.mean_cov.astype("<f8").tobytes(order="C")
            + self.factor.astype("<f8").tobytes(order="C")
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "DeepWccn":
        if len(data) < _HEADER.size:
            raise CorruptStateError("estado truncado (cabecera incompleta)")
        magic, version, dim, n_tot, rule, mode, beta, momentum = _HEADER.unpack_from(data)
        if magic != STATE_MAGIC:
            raise CorruptStateError(f"magic inválido: {magic!r}")
        if version != STATE_VERSION:
            raise CorruptStateError(f"versión de estado no soportada: {version}")
        block = dim * dim * 8
        expected = _HEADER.size + 2 * block
        if len(data) != expected:
            raise CorruptStateError(
                f"estado de {len(data)} bytes, se esperaban {expected}"
            )
        try:
            update_rule = {v: k for k, v in _RULE_CODES.items()}[rule]
            layer_mode = {v: k for k, v in _MODE_CODES.items()}[mode]
        except KeyError as exc:
            raise CorruptStateError(f"código desconocido en cabecera: {exc}") from exc

        offset = _HEADER.size
        mean_cov = np.frombuffer(data, dtype="<f8", count=dim * dim, offset=offset)
        factor = np.frombuffer(data, dtype="<f8", count=dim * dim, offset=offset + block)
        return cls(
            mean_cov=mean_cov.reshape(dim, dim).astype(np.float64),
            n_tot=n_tot,
            factor=factor.reshape(dim, dim).astype(np.float64),
            beta=beta,
            update_rule=update_rule,
            momentum=momentum,
            mode=layer_mode,
        )


def save_state(layer: DeepWccn, path: str | Path | None = None) -> bytes:
    """Serializa la capa; si se da `path`, además escribe el archivo."""
    data = layer.to_bytes()
    if path is not None:
        Path(path).write_bytes(data)
    return data


def load_state(source: bytes | str | Path) -> DeepWccn:
    if isinstance(source, (str, Path)):
        source = Path(source).read_bytes()
    return DeepWccn.from_bytes(bytes(source))
