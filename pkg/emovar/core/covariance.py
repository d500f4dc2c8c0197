"""
Rutinas numéricas de WCCN: covarianza intra-clase por batch, promedio
acumulado, suavizado espectral, factor de Cholesky y proyección.

Todas son funciones puras y acumulan en float64 sin importar la precisión
de los embeddings de entrada. `classic_wccn` es el WCCN convencional sobre
el conjunto completo y sirve de oráculo para la variante por mini-batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from emovar.core.exceptions import (
    BetaOutOfRangeError,
    DimensionMismatchError,
    EmptyBatchError,
    NoEstimableClassError,
    NotPositiveDefiniteError,
)

logger = logging.getLogger(__name__)

# Una clase necesita al menos 2 muestras en el batch para aportar covarianza.
MIN_CLASS_SAMPLES = 2


@dataclass(frozen=True)
class WithinClassCovariance:
    """Resultado de la covarianza intra-clase de un batch."""

    per_class: dict[int, np.ndarray]
    averaged: np.ndarray
    classes_used: frozenset[int]


# ── Helpers ──────────────────────────────────────────

def _as_vectors(vectors) -> np.ndarray:
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise DimensionMismatchError(f"se esperaban vectores (N, d), forma {arr.shape}")
    return arr


def _as_square(matrix, name: str = "matriz") -> np.ndarray:
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"{name} debe ser cuadrada, forma {arr.shape}")
    return arr


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """(M + Mᵀ) / 2."""
    return 0.5 * (matrix + matrix.T)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 <= beta <= 1.0:
        raise BetaOutOfRangeError(beta)
    return beta


# ── Covarianza intra-clase de un batch ───────────────

def batch_within_class_cov(
    vectors,
    labels,
    n_classes: int | None = None,
) -> WithinClassCovariance:
    """
    Covarianza intra-clase esperada de un batch.

    Cada clase usa la media de ESTE batch y normalización 1/N_c (forma
    poblacional). Las clases con menos de 2 muestras se excluyen y el
    promedio es no ponderado sobre las clases usadas.
    """
    w = _as_vectors(vectors)
    y = np.asarray(labels).reshape(-1)
    if w.shape[0] == 0:
        raise EmptyBatchError()
    if y.shape[0] != w.shape[0]:
        raise DimensionMismatchError(
            f"{w.shape[0]} vectores y {y.shape[0]} etiquetas"
        )
    if n_classes is not None and (y.min() < 0 or y.max() >= n_classes):
        raise DimensionMismatchError(f"etiquetas fuera de 0..{n_classes - 1}")

    per_class: dict[int, np.ndarray] = {}
    for cls in np.unique(y):
        members = w[y == cls]
        n_c = members.shape[0]
        if n_c < MIN_CLASS_SAMPLES:
            continue
        dev = members - members.mean(axis=0)
        per_class[int(cls)] = symmetrize(dev.T @ dev / n_c)

    if not per_class:
        raise NoEstimableClassError()

    averaged = symmetrize(sum(per_class.values()) / len(per_class))
    return WithinClassCovariance(
        per_class=per_class,
        averaged=averaged,
        classes_used=frozenset(per_class),
    )


# ── Promedio acumulado ───────────────────────────────

def cumulative_update(
    state_mean,
    n_tot: int,
    batch_cov,
) -> tuple[np.ndarray, int]:
    """S̄ ← N/(N+1)·S̄ + 1/(N+1)·Ŝ; devuelve también N+1."""
    if n_tot < 0:
        raise ValueError(f"n_tot={n_tot} debe ser >= 0")
    mean = _as_square(state_mean, "state_mean")
    batch = _as_square(batch_cov, "batch_cov")
    if mean.shape != batch.shape:
        raise DimensionMismatchError(
            f"state_mean {mean.shape} y batch_cov {batch.shape}"
        )
    updated = (n_tot / (n_tot + 1.0)) * mean + (1.0 / (n_tot + 1.0)) * batch
    return symmetrize(updated), n_tot + 1


# ── Suavizado espectral ──────────────────────────────

def smooth(mean_cov, beta: float) -> np.ndarray:
    """(1 − β)·S̄ + β·I."""
    beta = _check_beta(beta)
    mean = _as_square(mean_cov, "mean_cov")
    return (1.0 - beta) * mean + beta * np.eye(mean.shape[0])


# ── Factor de proyección ─────────────────────────────

def wccn_factor(smoothed) -> np.ndarray:
    """
    Factor A con A·Aᵀ = S'⁻¹.

    Se calcula como A = L⁻ᵀ a partir del factor de Cholesky inferior L de
    S', con una sustitución triangular y sin formar la inversa.
    """
    matrix = _as_square(smoothed, "smoothed")
    if not np.all(np.isfinite(matrix)):
        raise NotPositiveDefiniteError("la matriz contiene valores no finitos")
    sym = symmetrize(matrix)
    if not np.array_equal(sym, matrix):
        logger.debug("Simetrizando matriz antes de Cholesky")
    try:
        lower = cholesky(sym, lower=True)
    except LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    identity = np.eye(sym.shape[0])
    return solve_triangular(lower, identity, lower=True).T


def project(factor, w) -> np.ndarray:
    """
    Φ(w) = Aᵀ·w.

    Acepta un vector (d,) o una matriz de vectores por fila (N, d); en el
    segundo caso devuelve W·A, que es Aᵀ·w por fila.
    """
    a = _as_square(factor, "factor")
    arr = np.asarray(w, dtype=np.float64)
    if arr.shape[-1] != a.shape[0]:
        raise DimensionMismatchError(
            f"vector de dimensión {arr.shape[-1]} y factor {a.shape}"
        )
    if arr.ndim == 1:
        return a.T @ arr
    return arr @ a


def factor_residual(factor, smoothed) -> float:
    """‖A·Aᵀ·S' − I‖_F / ‖I‖_F."""
    a = _as_square(factor, "factor")
    s = _as_square(smoothed, "smoothed")
    identity = np.eye(a.shape[0])
    return float(
        np.linalg.norm(a @ a.T @ s - identity, "fro") / np.linalg.norm(identity, "fro")
    )


# ── WCCN convencional (oráculo) ──────────────────────

def classic_wccn(vectors, labels, beta: float) -> np.ndarray:
    """
    WCCN convencional: estadísticas de todo el conjunto en una pasada,
    suavizado y factor de Cholesky.
    """
    y = np.asarray(labels).reshape(-1)
    classes, counts = np.unique(y, return_counts=True)
    short = classes[counts < MIN_CLASS_SAMPLES]
    if short.size:
        raise NoEstimableClassError(
            f"clases con menos de {MIN_CLASS_SAMPLES} muestras: {short.tolist()}"
        )
    stats = batch_within_class_cov(vectors, y)
    return wccn_factor(smooth(stats.averaged, beta))
