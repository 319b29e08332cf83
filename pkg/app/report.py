"""Samengevoegde rapportage over eval-rapporten en run-samenvattingen."""
import json
import os

from errors import DataError, StorageError
from evalharness import DEFAULT_CATEGORIES, load_report, round_half_away
from logging_config import get_logger

logger = get_logger(__name__)

EVAL_FILE = "eval_report.json"
SUMMARY_FILE = "run_summary.json"

BLEU_COLUMNS = ("bleu_1", "bleu_2", "bleu_3", "bleu_4", "bleu_avg")
BEST = "best"
SECOND = "second"


def _percent(value):
    if value is None:
        return None
    return round_half_away(value * 100.0)


def report_values(report):
    """Kolomwaarden van één eval-rapport, zoals in de vergelijkingstabel."""
    if "categories" in report:
        values = {name: _percent(c["accuracy"]) for name, c in report["categories"].items()}
        values["Overall"] = _percent(report["scores"]["overall"])
        return values
    return {column: report["scores"][column] for column in BLEU_COLUMNS
            if column in report["scores"]}


def _load_source(path):
    """Een pad is een eval_report.json of een map met eval en/of run-samenvatting."""
    if os.path.isdir(path):
        name = os.path.basename(os.path.normpath(path))
        eval_path = os.path.join(path, EVAL_FILE)
        summary_path = os.path.join(path, SUMMARY_FILE)
        report = load_report(eval_path) if os.path.exists(eval_path) else None
        summary = load_report(summary_path) if os.path.exists(summary_path) else None
        if report is None and summary is None:
            raise StorageError("IO_FAILURE", "geen eval_report.json of run_summary.json",
                               path=path)
        return name, report, summary
    if not os.path.exists(path):
        raise StorageError("IO_FAILURE", "bestand niet gevonden", path=path)
    return os.path.splitext(os.path.basename(path))[0], load_report(path), None


def mark_best(rows, columns):
    """Markeer per kolom best en tweede-best; gelijke waarden delen de vlag.

    Returns: lijst flags-dicts, zelfde volgorde als rows
    """
    flags = [{} for _ in rows]
    if len(rows) < 2:
        return flags
    for column in columns:
        values = sorted({row["values"][column] for row in rows
                         if row["values"].get(column) is not None}, reverse=True)
        if not values:
            continue
        ranks = {values[0]: BEST}
        if len(values) > 1:
            ranks[values[1]] = SECOND
        for i, row in enumerate(rows):
            value = row["values"].get(column)
            if value in ranks:
                flags[i][column] = ranks[value]
    return flags


def build_report(paths, extra_reports=()):
    """Voeg rapporten samen.

    Args:
        paths: run-mappen of eval_report.json bestanden
        extra_reports: (naam, eval-rapport dict) paren, bv. uit de registry

    Returns: dict met protocol, kolommen, rijen en run-samenvattingen
    """
    rows = []
    runs = {}
    protocols = set()
    for path in paths:
        name, report, summary = _load_source(path)
        if summary is not None:
            runs[name] = {k: summary.get(k) for k in ("steps", "final_losses", "draws_per_task",
                                                      "checkpoints_written", "alerts",
                                                      "trace_digest")}
        if report is not None:
            protocols.add(report["protocol"])
            rows.append({"name": name, "protocol": report["protocol"],
                         "values": report_values(report)})
    for name, report in extra_reports:
        protocols.add(report["protocol"])
        rows.append({"name": name, "protocol": report["protocol"],
                     "values": report_values(report)})

    if len(protocols) > 1:
        raise DataError("SCHEMA_VIOLATION", "rapporten met verschillende protocollen",
                        protocols=sorted(protocols))

    columns = []
    for row in rows:
        for column in row["values"]:
            if column not in columns:
                columns.append(column)
    if any(c in DEFAULT_CATEGORIES or c == "Overall" for c in columns):
        # Categorieën in taxonomievolgorde, Overall als laatste
        columns = [c for c in DEFAULT_CATEGORIES if c in columns] + \
                  [c for c in columns if c not in DEFAULT_CATEGORIES and c != "Overall"] + \
                  ["Overall"]

    flags = mark_best(rows, columns)
    for row, row_flags in zip(rows, flags):
        row["flags"] = row_flags

    return {
        "protocol": protocols.pop() if protocols else None,
        "columns": columns,
        "rows": rows,
        "runs": runs,
    }


def render_table(consolidated):
    """Platte-tekst tabel; * = best, ^ = tweede-best."""
    columns = consolidated["columns"]
    header = ["Model"] + columns
    lines = []
    for row in consolidated["rows"]:
        cells = [row["name"]]
        for column in columns:
            value = row["values"].get(column)
            mark = {BEST: "*", SECOND: "^"}.get(row["flags"].get(column), "")
            cells.append("-" if value is None else f"{value:.1f}{mark}")
        lines.append(cells)

    widths = [max(len(str(r[i])) for r in [header] + lines) for i in range(len(header))]
    out = [" | ".join(h.ljust(w) for h, w in zip(header, widths)),
           "-+-".join("-" * w for w in widths)]
    for cells in lines:
        out.append(" | ".join(c.ljust(w) for c, w in zip(cells, widths)))
    for name, run in sorted(consolidated["runs"].items()):
        out.append(f"run {name}: steps={run['steps']} checkpoints="
                   f"{len(run['checkpoints_written'] or [])} alerts={len(run['alerts'] or [])}")
    return "\n".join(out) + "\n"


def write_report(consolidated, out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
            json.dump(consolidated, f, indent=2, sort_keys=True)
            f.write("\n")
        with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as f:
            f.write(render_table(consolidated))
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=out_dir)
    logger.info("Rapport geschreven", extra={"out": out_dir, "rows": len(consolidated["rows"])})
