"""
Servicio de reportes de evaluación.

Cada EvaluationReport se emite como CSV (para máquinas), markdown (para
personas, vía plantillas Jinja2 en `emovar/templates/`) y JSON. `merge_reports`
junta los CSV de un directorio en un único resumen markdown.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import defaultdict
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from jinja2 import Environment, FileSystemLoader, select_autoescape

from emovar.core.exceptions import EmovarError
from emovar.schemas.corpus import EMOTIONS
from emovar.schemas.report import EvaluationReport
from emovar.services.storage_service import atomic_write_json, atomic_write_text

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("protocol", "train_langs", "test_lang", "fold", "UA", "WA", "variant")
SUMMARY_NAME = "summary.md"

# ── Configuración Jinja2 ─────────────────────────────

_TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "templates"

_env = Environment(
    loader=FileSystemLoader(str(_TEMPLATES_DIR)),
    autoescape=select_autoescape(["html", "xml"]),
    keep_trailing_newline=True,
)


def _fmt(value: float) -> str:
    return f"{value:.6f}"


# ── Un reporte ───────────────────────────────────────

def report_csv(report: EvaluationReport) -> str:
    """Una fila por fold más las filas `mean` y `std`."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    langs = "+".join(report.train_languages)
    prefix = [report.protocol, langs, report.test_language]
    for f in report.folds:
        writer.writerow([*prefix, f.fold, _fmt(f.ua), _fmt(f.wa), report.variant])
    writer.writerow([*prefix, "mean", _fmt(report.ua_mean), _fmt(report.wa_mean), report.variant])
    writer.writerow([*prefix, "std", _fmt(report.ua_std), _fmt(report.wa_std), report.variant])
    return buffer.getvalue()


def report_markdown(report: EvaluationReport) -> str:
    pooled = np.sum([np.asarray(f.confusion, dtype=np.int64) for f in report.folds], axis=0)
    template = _env.get_template("report.md.j2")
    return template.render(
        report=report,
        labels=[e.value for e in EMOTIONS],
        pooled_confusion=pooled.tolist(),
    )


def write_report(report: EvaluationReport, out_dir: str | Path) -> dict[str, Path]:
    """Escribe <stem>.csv, <stem>.md y <stem>.json en `out_dir`."""
    out_dir = Path(out_dir)
    paths = {
        "csv": atomic_write_text(out_dir / f"{report.stem}.csv", report_csv(report)),
        "md": atomic_write_text(out_dir / f"{report.stem}.md", report_markdown(report)),
        "json": atomic_write_json(out_dir / f"{report.stem}.json", report.model_dump(mode="json")),
    }
    logger.info(f"Reporte {report.stem} escrito en {out_dir}")
    return paths


def write_reports(reports: Sequence[EvaluationReport], out_dir: str | Path) -> list[Path]:
    written = []
    for report in reports:
        written.extend(write_report(report, out_dir).values())
    return written


# ── Resumen ──────────────────────────────────────────

def _read_report_rows(path: Path) -> list[dict[str, str]] | None:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            return None
        return list(reader)


def summarize_rows(rows: Sequence[dict[str, str]]) -> list[dict]:
    """Una fila por (protocol, train_langs, test_lang, variant) con media y desvío."""
    groups: dict[tuple, dict] = defaultdict(lambda: {"n_folds": 0})
    for row in rows:
        key = (row["protocol"], row["train_langs"], row["test_lang"], row["variant"])
        entry = groups[key]
        if row["fold"] == "mean":
            entry["ua_mean"], entry["wa_mean"] = float(row["UA"]), float(row["WA"])
        elif row["fold"] == "std":
            entry["ua_std"], entry["wa_std"] = float(row["UA"]), float(row["WA"])
        else:
            entry["n_folds"] += 1
    summary = []
    for (protocol, langs, test_lang, variant), entry in sorted(groups.items()):
        if "ua_mean" not in entry:
            raise EmovarError(f"{protocol} {langs}→{test_lang} {variant}: falta la fila mean")
        summary.append(
            {
                "protocol": protocol,
                "train_langs": langs,
                "test_lang": test_lang,
                "variant": variant,
                "n_folds": entry["n_folds"],
                "ua_mean": entry["ua_mean"],
                "ua_std": entry.get("ua_std", 0.0),
                "wa_mean": entry["wa_mean"],
                "wa_std": entry.get("wa_std", 0.0),
            }
        )
    return summary


def within_cross_comparison(summary: Sequence[dict]) -> list[dict]:
    """
    Por idioma de prueba y variante: UA within promediado sobre los pares
    que lo contienen frente al UA cross.
    """
    within: dict[tuple[str, str], list[float]] = defaultdict(list)
    cross: dict[tuple[str, str], list[float]] = defaultdict(list)
    for row in summary:
        key = (row["test_lang"], row["variant"])
        (within if row["protocol"] == "within" else cross)[key].append(row["ua_mean"])
    return [
        {
            "test_lang": test_lang,
            "variant": variant,
            "within": float(np.mean(within[(test_lang, variant)])),
            "cross": float(np.mean(cross[(test_lang, variant)])),
        }
        for test_lang, variant in sorted(set(within) & set(cross))
    ]


def merge_reports(report_dir: str | Path) -> Path:
    """Junta los CSV de reporte de `report_dir` en summary.md."""
    report_dir = Path(report_dir)
    if not report_dir.is_dir():
        raise FileNotFoundError(f"no existe el directorio de reportes: {report_dir}")
    rows: list[dict[str, str]] = []
    for path in sorted(report_dir.glob("*.csv")):
        parsed = _read_report_rows(path)
        if parsed is None:
            logger.debug(f"Se omite {path.name}: no es un CSV de reporte")
            continue
        rows.extend(parsed)
    if not rows:
        raise EmovarError("no hay CSV de reporte", path=str(report_dir))

    summary = summarize_rows(rows)
    text = _env.get_template("summary.md.j2").render(
        rows=summary,
        comparison=within_cross_comparison(summary),
    )
    path = atomic_write_text(report_dir / SUMMARY_NAME, text)
    logger.info(f"Resumen de {len(summary)} reportes en {path}")
    return path
