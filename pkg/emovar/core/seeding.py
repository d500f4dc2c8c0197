"""
Derivación determinista de semillas a partir de una semilla base y claves
(id de enunciado, idioma, fold...). No depende del orden de generación.
"""

import hashlib


def derive_seed(seed: int, *keys) -> int:
    """Sub-semilla de 63 bits estable entre procesos y plataformas."""
    material = ":".join([str(int(seed)), *(str(k) for k in keys)])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
