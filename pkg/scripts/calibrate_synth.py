"""
Calibración de los presets sintéticos con el oráculo de media de clase
más cercana.

Uso:
    python scripts/calibrate_synth.py
    python scripts/calibrate_synth.py --preset high_nuisance --seed 3
    python scripts/calibrate_synth.py --spec specs/mi_spec.json --n-folds 5

Para cada fold y cada idioma de prueba imprime la exactitud del oráculo
within (entrenando con los hablantes de train del mismo idioma) y cross
(entrenando con los otros dos idiomas).
"""

import argparse
import sys
from pathlib import Path

import numpy as np

# Agregar el directorio raíz al path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from emovar.services.corpus_service import (  # noqa: E402
    nearest_mean_accuracy,
    resolve_synth_spec,
    split_by_language,
    synthesize_corpus,
)
from emovar.services.fold_service import fold_split, plan_folds  # noqa: E402


def calibrate(source: str, n_folds: int, seed: int | None) -> dict[str, dict[str, float]]:
    spec = resolve_synth_spec(source)
    if seed is not None:
        spec = spec.model_copy(update={"seed": seed})
    corpora = split_by_language(synthesize_corpus(spec))
    plan = plan_folds(corpora, n_folds)

    scores: dict[str, dict[str, list[float]]] = {
        lang: {"within": [], "cross": []} for lang in corpora
    }
    for fold in range(1, n_folds + 1):
        splits = {
            lang: fold_split(corpus.records, plan.fold(lang, fold))
            for lang, corpus in corpora.items()
        }
        for lang, (train, _, test) in splits.items():
            others = [r for other, s in splits.items() if other != lang for r in s[0]]
            scores[lang]["within"].append(nearest_mean_accuracy(train, test))
            if others:
                scores[lang]["cross"].append(nearest_mean_accuracy(others, test))
    return {
        lang: {kind: float(np.mean(v)) for kind, v in by_kind.items() if v}
        for lang, by_kind in scores.items()
    }


def main() -> None:
    parser = argparse.ArgumentParser(description="Calibra presets sintéticos con el oráculo de media más cercana")
    parser.add_argument("--preset", default="default", help="Nombre de preset sintético")
    parser.add_argument("--spec", type=Path, help="SynthSpec JSON (tiene prioridad sobre --preset)")
    parser.add_argument("--n-folds", type=int, default=5)
    parser.add_argument("--seed", type=int)
    args = parser.parse_args()

    source = str(args.spec) if args.spec else args.preset
    results = calibrate(source, args.n_folds, args.seed)
    print(f"Oráculo de media de clase más cercana ({source}, {args.n_folds} folds):")
    for lang, by_kind in sorted(results.items()):
        parts = "  ".join(f"{kind}={value:.4f}" for kind, value in by_kind.items())
        print(f"  {lang}: {parts}")


if __name__ == "__main__":
    main()
