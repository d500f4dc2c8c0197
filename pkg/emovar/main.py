"""
Punto de entrada de la línea de comandos.

Subcomandos: gen, split, train, eval, experiment, report. El progreso va a
stderr y los datos solo a archivos bajo el directorio de salida, que se
elige por EMOVAR_OUT, luego --out y por último `output_dir` de la
configuración.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from emovar import __version__
from emovar.config import get_settings
from emovar.core.exceptions import ConfigError, EmovarError
from emovar.core.metrics import ua, wa
from emovar.models.emotion_head import EmotionModel
from emovar.schemas.experiment import ExperimentConfig
from emovar.services import (
    corpus_service,
    evaluation_service,
    fold_service,
    report_service,
    storage_service,
    training_service,
)

logger = logging.getLogger("emovar")

_HANDLER_FLAG = "_emovar_cli"


# ── Logging ──────────────────────────────────────────

def configure_logging(verbose: bool = False) -> None:
    """Un handler a stderr para el logger `emovar`; se reemplaza en cada invocación."""
    package_logger = logging.getLogger("emovar")
    for handler in list(package_logger.handlers):
        if getattr(handler, _HANDLER_FLAG, False):
            package_logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    setattr(handler, _HANDLER_FLAG, True)
    package_logger.addHandler(handler)
    package_logger.setLevel(logging.DEBUG if verbose else get_settings().LOG_LEVEL)


# ── Configuración ────────────────────────────────────

def _validation_message(exc: ValidationError) -> tuple[str, str | None]:
    first = exc.errors()[0]
    field = ".".join(str(p) for p in first["loc"]) or None
    return first["msg"], field


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no existe el archivo de configuración: {path}")
    try:
        return ExperimentConfig.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        message, field = _validation_message(exc)
        raise ConfigError(message, path=str(path), field=field) from exc


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Flags globales sobre la configuración del archivo."""
    changes: dict = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.no_wccn:
        changes["use_wccn"] = False
    if args.inject and len(args.inject) == 1:
        changes["inject"] = args.inject[0]
    elif args.inject:
        changes["injection_levels"] = list(args.inject)
    if args.plan:
        changes["plan_path"] = str(Path(args.plan).resolve())
    if args.target_frames is not None:
        changes["target_frames"] = args.target_frames
    if args.wccn_update:
        changes["wccn_update"] = args.wccn_update
    if getattr(args, "fold", None) is not None:
        changes["fold"] = args.fold
    if not changes:
        return config
    try:
        return config.with_updates(**changes)
    except ValidationError as exc:
        message, field = _validation_message(exc)
        raise ConfigError(message, field=field) from exc


def _require_config(args: argparse.Namespace) -> tuple[ExperimentConfig, Path]:
    if not args.config:
        raise ConfigError("este comando requiere --config", field="--config")
    path = Path(args.config)
    config = apply_overrides(load_config(path), args)
    return config, path.resolve().parent


def output_dir(args: argparse.Namespace, config: ExperimentConfig | None = None) -> Path:
    override = get_settings().output_override
    if override is not None:
        return override
    if args.out:
        return Path(args.out)
    if config is not None:
        return Path(config.output_dir)
    return Path("runs")


# ── Comandos ─────────────────────────────────────────

def cmd_gen(args: argparse.Namespace) -> None:
    """Sintetiza un corpus y lo escribe en el directorio de salida."""
    spec = corpus_service.resolve_synth_spec(args.spec)
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    out = output_dir(args)
    corpus = corpus_service.synthesize_corpus(spec)
    corpus_service.write_corpus(corpus, out)
    storage_service.atomic_write_json(out / "synth-spec.json", spec.model_dump(mode="json"))
    storage_service.write_run_manifest(
        out,
        command="gen",
        fingerprint=storage_service.sha256_json(spec.model_dump(mode="json")),
        seed=spec.seed,
        extra={"records": len(corpus)},
    )


def cmd_split(args: argparse.Namespace) -> None:
    """Emite el plan de folds por hablante de un corpus."""
    if args.corpus:
        corpora = corpus_service.split_by_language(corpus_service.read_corpus(args.corpus))
        n_folds, grouping, seed = args.n_folds, args.grouping, args.seed
    else:
        config, base_dir = _require_config(args)
        corpora = corpus_service.load_corpora(config, base_dir)
        n_folds, grouping, seed = config.n_folds, config.grouping, config.seed
    plan = fold_service.plan_folds(corpora, n_folds, grouping, seed)
    target = Path(args.plan_out) if args.plan_out else output_dir(args) / "fold-plan.json"
    fold_service.write_plan(plan, target)
    logger.info(f"Plan de {n_folds} folds escrito en {target}")


def cmd_train(args: argparse.Namespace) -> None:
    """Entrena un fold y escribe el modelo, el log y las métricas."""
    config, base_dir = _require_config(args)
    out = output_dir(args, config)
    corpora = corpus_service.load_corpora(config, base_dir)
    plan = fold_service.plan_for_config(config, corpora, base_dir)
    result, model, log = evaluation_service.run_fold(config, corpora, plan, config.fold)

    model.save(out / f"model-fold{config.fold}.emohead")
    training_service.write_training_log(log, out / f"training-log-fold{config.fold}.csv")
    storage_service.atomic_write_json(out / f"fold{config.fold}.json", result.model_dump(mode="json"))
    storage_service.write_run_manifest(
        out, command="train", fingerprint=config.fingerprint(), seed=config.seed
    )


def cmd_eval(args: argparse.Namespace) -> None:
    """UA/WA de un modelo guardado sobre la partición de prueba de un fold."""
    model_path = Path(args.model)
    if not model_path.is_file():
        raise FileNotFoundError(f"no existe el modelo: {model_path}")
    model = EmotionModel.load(model_path)

    if args.corpus:
        corpora = corpus_service.split_by_language(corpus_service.read_corpus(args.corpus))
        plan = (
            fold_service.read_plan(args.plan)
            if args.plan
            else fold_service.plan_folds(corpora, args.n_folds, args.grouping, args.seed)
        )
    else:
        config, base_dir = _require_config(args)
        corpora = corpus_service.load_corpora(config, base_dir)
        plan = fold_service.plan_for_config(config, corpora, base_dir)

    if args.language not in corpora:
        raise ConfigError(f"el corpus no tiene el idioma {args.language}", field="--language")
    _, _, test = fold_service.fold_split(
        corpora[args.language].records, plan.fold(args.language, args.fold)
    )
    cm = evaluation_service.evaluate_model(model, test)
    payload = {
        "model": str(model_path),
        "language": args.language,
        "fold": args.fold,
        "UA": ua(cm),
        "WA": wa(cm),
        "confusion": cm.tolist(),
        "n_test": len(test),
    }
    out = output_dir(args)
    storage_service.atomic_write_json(out / f"eval-{args.language}-fold{args.fold}.json", payload)
    logger.info(f"{args.language} fold {args.fold}: UA={payload['UA']:.4f} WA={payload['WA']:.4f}")


def cmd_experiment(args: argparse.Namespace) -> None:
    """Protocolo completo por folds, con ablación e inyección opcionales."""
    config, base_dir = _require_config(args)
    out = output_dir(args, config)
    corpora = corpus_service.load_corpora(config, base_dir)
    plan = fold_service.plan_for_config(config, corpora, base_dir)
    fold_service.write_plan(plan, out / "fold-plan.json")

    jobs = args.jobs if args.jobs is not None else get_settings().EMOVAR_JOBS
    reports = evaluation_service.run_experiment(
        config, corpora, plan, jobs=jobs, base_dir=base_dir
    )
    report_service.write_reports(reports, out)
    report_service.merge_reports(out)
    storage_service.write_run_manifest(
        out,
        command="experiment",
        fingerprint=config.fingerprint(),
        seed=config.seed,
        extra={"reports": [r.stem for r in reports]},
    )


def cmd_report(args: argparse.Namespace) -> None:
    """Junta los CSV de un directorio de reportes en summary.md."""
    report_service.merge_reports(args.report_dir)


# ── Parser ───────────────────────────────────────────

def _global_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Configuración de experimento (JSON)")
    common.add_argument("--out", help="Directorio de salida (EMOVAR_OUT tiene prioridad)")
    common.add_argument("--seed", type=int, help="Reemplaza la semilla de la configuración")
    common.add_argument("--jobs", type=int, help="Folds en paralelo (requiere broker Celery)")
    common.add_argument("--no-wccn", action="store_true", help="Ablación: Deep-WCCN como identidad")
    common.add_argument(
        "--inject", type=int, action="append", metavar="N",
        help="Enunciados del idioma objetivo a inyectar (repetible para un barrido)",
    )
    common.add_argument("--plan", help="Plan de folds emitido por `split`")
    common.add_argument("--target-frames", type=int, help="Normaliza el largo de las secuencias")
    common.add_argument("--wccn-update", choices=["cumulative", "moving_average"])
    common.add_argument("-v", "--verbose", action="store_true", help="Logging DEBUG")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="emovar",
        description="Reconocimiento de emociones entre idiomas con Deep-WCCN",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="Sintetiza un corpus")
    gen.add_argument("spec", nargs="?", default="default", help="SynthSpec JSON o nombre de preset")
    gen.set_defaults(handler=cmd_gen)

    split = sub.add_parser("split", parents=[common], help="Emite un plan de folds")
    split.add_argument("corpus", nargs="?", help="Manifiesto o directorio del corpus")
    split.add_argument("plan_out", nargs="?", help="Archivo de salida del plan")
    split.add_argument("--n-folds", type=int, default=5)
    split.add_argument("--grouping", choices=["sorted", "seeded"], default="sorted")
    split.set_defaults(handler=cmd_split)

    train = sub.add_parser("train", parents=[common], help="Entrena un fold")
    train.add_argument("--fold", type=int)
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", parents=[common], help="Evalúa un modelo guardado")
    evaluate.add_argument("model", help="Archivo de modelo")
    evaluate.add_argument("corpus", nargs="?", help="Manifiesto o directorio del corpus")
    evaluate.add_argument("--fold", type=int, required=True)
    evaluate.add_argument("--language", required=True)
    evaluate.add_argument("--n-folds", type=int, default=5)
    evaluate.add_argument("--grouping", choices=["sorted", "seeded"], default="sorted")
    evaluate.set_defaults(handler=cmd_eval)

    experiment = sub.add_parser("experiment", parents=[common], help="Protocolo completo")
    experiment.set_defaults(handler=cmd_experiment)

    report = sub.add_parser("report", parents=[common], help="Resumen markdown de reportes")
    report.add_argument("report_dir", help="Directorio con CSV de reportes")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        args.handler(args)
    except EmovarError as exc:
        print(f"error: {exc.one_line()}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        message, field = _validation_message(exc)
        print(f"error: {field}: {message}" if field else f"error: {message}", file=sys.stderr)
        return 1
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
