"""
Objetivos de pre-entrenamiento auto-supervisado sobre vectores provistos
por el llamador: pérdida contrastiva, pérdida de diversidad, su suma
ponderada y el muestreo de distractores.

Logaritmo natural en todo el módulo.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from emovar.core.exceptions import (
    InvalidDistributionError,
    NotEnoughCandidatesError,
    ZeroVectorError,
)

logger = logging.getLogger(__name__)

DISTRIBUTION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ContextQuantizedPair:
    """c_t, q_t y K distractores muestreados de otros pasos enmascarados."""

    context: np.ndarray
    true_quantized: np.ndarray
    distractors: np.ndarray  # (K, d)

    def __post_init__(self):
        distractors = np.atleast_2d(np.asarray(self.distractors, dtype=np.float64))
        if distractors.shape[0] < 1:
            raise NotEnoughCandidatesError("se necesita K >= 1")
        dim = np.asarray(self.context).shape[-1]
        if np.asarray(self.true_quantized).shape[-1] != dim or distractors.shape[1] != dim:
            raise ValueError("context, true_quantized y distractores deben compartir dimensión")
        object.__setattr__(self, "distractors", distractors)


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError()
    return float(np.clip(a @ b / (norm_a * norm_b), -1.0, 1.0))


def contrastive_loss(pair: ContextQuantizedPair, kappa: float) -> float:
    """
    −log softmax de la similitud del candidato verdadero entre K+1
    candidatos, con temperatura κ.
    """
    if kappa <= 0:
        raise ValueError(f"kappa={kappa} debe ser > 0")
    candidates = [pair.true_quantized, *pair.distractors]
    logits = np.array([cosine_sim(pair.context, q) for q in candidates]) / kappa
    return float(max(logsumexp(logits) - logits[0], 0.0))


def mean_contrastive_loss(pairs: Sequence[ContextQuantizedPair], kappa: float) -> float:
    """Media aritmética sobre los pasos enmascarados."""
    if not pairs:
        raise NotEnoughCandidatesError("no hay pasos enmascarados")
    return float(np.mean([contrastive_loss(p, kappa) for p in pairs]))


def diversity_loss(probs) -> float:
    """
    (1/(G·V))·Σ_g Σ_v p̄·log p̄, con 0·log 0 = 0.

    Es mínima (más negativa) cuando cada codebook se usa de forma uniforme.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if p.ndim != 2 or p.size == 0:
        raise InvalidDistributionError("se esperaba una matriz G × V")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidDistributionError("probabilidades negativas o no finitas")
    row_sums = p.sum(axis=1)
    bad = np.flatnonzero(np.abs(row_sums - 1.0) > DISTRIBUTION_TOLERANCE)
    if bad.size:
        raise InvalidDistributionError(
            f"filas que no suman 1: {bad.tolist()} (sumas {row_sums[bad].tolist()})"
        )
    groups, entries = p.shape
    return float(xlogy(p, p).sum() / (groups * entries))


def ssl_loss(mean_contrastive: float, diversity: float, alpha: float) -> float:
    """L_m + α·L_d."""
    return float(mean_contrastive + alpha * diversity)


def sample_distractors(
    masked_indices: Sequence[int],
    true_index: int,
    k: int,
    seed: int,
) -> list[int]:
    """K índices distintos, sin reemplazo, de los enmascarados sin el verdadero."""
    candidates = np.setdiff1d(
        np.asarray(masked_indices, dtype=np.int64), [int(true_index)]
    )
    if k < 1 or k > candidates.size:
        raise NotEnoughCandidatesError(
            f"K={k} con {candidates.size} candidatos disponibles"
        )
    rng = np.random.default_rng(seed)
    return rng.choice(candidates, size=k, replace=False).tolist()


# ── Agregado por enunciado ───────────────────────────

@dataclass(frozen=True)
class SslConfig:
    kappa: float = 0.1
    alpha: float = 0.1
    n_distractors: int = 10

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"kappa={self.kappa} debe ser > 0")
        if self.alpha < 0:
            raise ValueError(f"alpha={self.alpha} debe ser >= 0")


def utterance_ssl_loss(
    context: np.ndarray,
    quantized: np.ndarray,
    masked: Sequence[int],
    probs: np.ndarray,
    config: SslConfig,
    seed: int,
) -> float:
    """
    Pérdida SSL de un enunciado a partir de sus tensores: contrastiva media
    sobre los pasos enmascarados distintos más α·diversidad. Con menos de
    dos pasos distintos no hay distractores y la contrastiva vale 0.
    """
    masked = np.unique(np.asarray(masked, dtype=np.int64)).tolist()
    if len(masked) < 2:
        logger.debug(f"SSL: {len(masked)} paso(s) enmascarado(s), sin término contrastivo")
        return ssl_loss(0.0, diversity_loss(probs), config.alpha)
    k = min(config.n_distractors, len(masked) - 1)
    pairs = []
    for step, t in enumerate(masked):
        picks = sample_distractors(masked, t, k, seed + step)
        pairs.append(
            ContextQuantizedPair(
                context=context[t],
                true_quantized=quantized[t],
                distractors=quantized[picks],
            )
        )
    return ssl_loss(mean_contrastive_loss(pairs, config.kappa), diversity_loss(probs), config.alpha)
