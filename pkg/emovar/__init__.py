"""
emovar: toolkit de experimentos para reconocimiento de emociones en el habla
entre idiomas y corpus, con la capa Deep-WCCN y su protocolo de evaluación.
"""

__version__ = "0.1.0"
