"""
Excepciones de dominio del toolkit.

Todas heredan de EmovarError, que guarda un mensaje legible y, cuando
aplica, el archivo y el campo que originaron el fallo. La CLI convierte
cualquier EmovarError en un diagnóstico de una línea.
"""


class EmovarError(Exception):
    """Error base del toolkit."""

    def __init__(
        self,
        message: str = "Error en emovar",
        *,
        path: str | None = None,
        field: str | None = None,
    ):
        self.message = message
        self.path = path
        self.field = field
        super().__init__(message)

    def one_line(self) -> str:
        """Diagnóstico de una línea: archivo, campo y mensaje."""
        parts = []
        if self.path:
            parts.append(str(self.path))
        if self.field:
            parts.append(self.field)
        parts.append(self.message)
        return ": ".join(parts)


# ── Álgebra / covarianza ─────────────────────────────

class DimensionMismatchError(EmovarError, ValueError):
    """Dimensiones incompatibles entre matrices o vectores."""

    def __init__(self, message: str = "Dimensiones incompatibles", **kwargs):
        super().__init__(message, **kwargs)


class EmptyBatchError(EmovarError, ValueError):
    """Batch sin vectores."""

    def __init__(self, message: str = "El batch está vacío", **kwargs):
        super().__init__(message, **kwargs)


class NoEstimableClassError(EmovarError):
    """Ninguna clase del batch tiene al menos 2 muestras."""

    def __init__(
        self,
        message: str = "Ninguna clase tiene 2 o más muestras en el batch",
        **kwargs,
    ):
        super().__init__(message, **kwargs)


class BetaOutOfRangeError(EmovarError, ValueError):
    """β fuera de [0, 1]."""

    def __init__(self, beta: float, **kwargs):
        super().__init__(f"beta={beta} fuera de [0, 1]", **kwargs)


class NotPositiveDefiniteError(EmovarError):
    """La factorización de Cholesky falló."""

    def __init__(
        self,
        message: str = "La matriz no es definida positiva (Cholesky falló)",
        **kwargs,
    ):
        super().__init__(message, **kwargs)


class CorruptStateError(EmovarError):
    """Archivo de estado o de modelo corrupto, truncado o de otra versión."""

    def __init__(self, message: str = "Estado corrupto", **kwargs):
        super().__init__(message, **kwargs)


# ── Objetivos auto-supervisados ──────────────────────

class ZeroVectorError(EmovarError, ValueError):
    def __init__(self, message: str = "Similitud coseno con vector nulo", **kwargs):
        super().__init__(message, **kwargs)


class InvalidDistributionError(EmovarError, ValueError):
    def __init__(self, message: str = "Distribución de codebook inválida", **kwargs):
        super().__init__(message, **kwargs)


class NotEnoughCandidatesError(EmovarError, ValueError):
    def __init__(self, message: str = "No hay suficientes distractores", **kwargs):
        super().__init__(message, **kwargs)


# ── Cabeza de clasificación / entrenamiento ──────────

class EmptySequenceError(EmovarError, ValueError):
    def __init__(self, message: str = "Secuencia de embeddings vacía (T=0)", **kwargs):
        super().__init__(message, **kwargs)


class StaleIntermediatesError(EmovarError):
    """Intermedios de forward ya consumidos o no aptos para backward."""

    def __init__(self, message: str = "Intermedios de forward obsoletos", **kwargs):
        super().__init__(message, **kwargs)


class ShapeMismatchError(EmovarError, ValueError):
    def __init__(self, message: str = "Formas de parámetros y gradientes distintas", **kwargs):
        super().__init__(message, **kwargs)


class EmptyDatasetError(EmovarError, ValueError):
    def __init__(self, message: str = "Conjunto de datos vacío", **kwargs):
        super().__init__(message, **kwargs)


# ── Corpus ───────────────────────────────────────────

class MalformedManifestError(EmovarError):
    """Línea de manifiesto ilegible o con campos faltantes."""

    def __init__(self, message: str, *, line: int | None = None, **kwargs):
        self.line = line
        if line is not None:
            message = f"línea {line}: {message}"
        super().__init__(message, **kwargs)


class PayloadSizeMismatchError(EmovarError):
    def __init__(self, message: str = "Tamaño de payload inesperado", **kwargs):
        super().__init__(message, **kwargs)


class DuplicateIdError(EmovarError):
    def __init__(self, utterance_id: str, **kwargs):
        self.utterance_id = utterance_id
        super().__init__(f"id duplicado: {utterance_id}", **kwargs)


class InvalidLabelError(EmovarError, ValueError):
    def __init__(self, label: str, **kwargs):
        super().__init__(
            f"etiqueta '{label}' fuera del catálogo (angry, happy, neutral, sad)",
            **kwargs,
        )


class InvalidSpecError(EmovarError, ValueError):
    def __init__(self, message: str = "SynthSpec inválida", **kwargs):
        super().__init__(message, **kwargs)


class TooFewSpeakersError(EmovarError, ValueError):
    def __init__(self, corpus: str, n_speakers: int, n_folds: int, **kwargs):
        super().__init__(
            f"el corpus '{corpus}' tiene {n_speakers} hablantes; se necesitan al menos {n_folds}",
            **kwargs,
        )


class NotEnoughTargetDataError(EmovarError, ValueError):
    def __init__(self, requested: int, available: int, **kwargs):
        super().__init__(
            f"se pidieron {requested} enunciados del idioma objetivo y solo hay {available}",
            **kwargs,
        )


# ── Evaluación ───────────────────────────────────────

class LengthMismatchError(EmovarError, ValueError):
    def __init__(self, message: str = "Listas de etiquetas de distinto largo", **kwargs):
        super().__init__(message, **kwargs)


class EmptyMatrixError(EmovarError, ValueError):
    def __init__(self, message: str = "Matriz de confusión vacía", **kwargs):
        super().__init__(message, **kwargs)


class LanguageNotInTrainingPairError(EmovarError, ValueError):
    def __init__(self, language: str, pair: tuple[str, ...], **kwargs):
        super().__init__(
            f"el idioma de prueba {language} no está en el par de entrenamiento {'+'.join(pair)}",
            **kwargs,
        )


class LanguageOverlapError(EmovarError, ValueError):
    def __init__(self, language: str, pair: tuple[str, ...], **kwargs):
        super().__init__(
            f"el idioma excluido {language} aparece en el par de entrenamiento {'+'.join(pair)}",
            **kwargs,
        )


class ProtocolViolationError(EmovarError):
    """Un hablante de validación o prueba apareció en entrenamiento."""

    def __init__(self, message: str = "Solapamiento de hablantes entre particiones", **kwargs):
        super().__init__(message, **kwargs)


# ── Configuración ────────────────────────────────────

class ConfigError(EmovarError):
    def __init__(self, message: str = "Configuración inválida", **kwargs):
        super().__init__(message, **kwargs)
