"""
Métricas de clasificación: matriz de confusión, UA (recall medio por clase)
y WA (exactitud global).
"""

import numpy as np

from emovar.core.exceptions import EmptyMatrixError, LengthMismatchError
from emovar.schemas.corpus import N_CLASSES


def confusion(true_labels, predicted_labels, n_classes: int = N_CLASSES) -> np.ndarray:
    """Conteos C × C: filas = clase verdadera, columnas = clase predicha."""
    y_true = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise LengthMismatchError(
            f"{y_true.size} etiquetas verdaderas y {y_pred.size} predichas"
        )
    for name, labels in (("verdaderas", y_true), ("predichas", y_pred)):
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValueError(f"etiquetas {name} fuera de 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _checked(cm) -> np.ndarray:
    counts = np.asarray(cm, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ValueError(f"matriz de confusión no cuadrada: {counts.shape}")
    if counts.sum() == 0:
        raise EmptyMatrixError()
    return counts


def ua(cm) -> float:
    """Recall medio sobre las clases presentes en la prueba."""
    counts = _checked(cm)
    support = counts.sum(axis=1)
    present = support > 0
    recalls = np.diag(counts)[present] / support[present]
    return float(recalls.mean())


def wa(cm) -> float:
    counts = _checked(cm)
    return float(np.trace(counts) / counts.sum())
