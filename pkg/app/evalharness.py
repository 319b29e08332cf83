"""Benchmark-protocollen: multi-reference BLEU-1..4 en Top-1 per categorie.

Scores worden op één decimaal afgerond, half-away-from-zero.
"""
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from errors import DataError, StorageError, UsageError
from logging_config import get_logger
from schema import TaskType, index_letter

logger = get_logger(__name__)

BLEU_PROTOCOL = "robovqa-bleu"
TOP1_PROTOCOL = "egoplan-top1"
PROTOCOL_IDS = {
    BLEU_PROTOCOL: "robovqa-bleu/sentence-mean/multiref-clip/smooth-inv2h/v1",
    TOP1_PROTOCOL: "egoplan-top1/cascade-v1/sample-weighted",
}

DEFAULT_CATEGORIES = ("Daily life", "Work", "Recreation", "Hobbies")

UNPARSEABLE = "UNPARSEABLE"
MAX_ORDER = 4
LETTER_RULE_OPTIONS = 4

_TOKEN = re.compile(r"[^\W_]+|\S")
_WS = re.compile(r"\s+")
_LETTER = re.compile(r"\b([A-Za-z])\b")

def tokenize(text):
    """Lowercase; alfanumerieke reeksen zijn één token, elk ander teken apart."""
    return _TOKEN.findall(text.lower())


def round_half_away(value, places=1):
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value) if isinstance(value, float) else str(value))
                 .quantize(quantum, rounding=ROUND_HALF_UP))


# --- BLEU ---

@dataclass(frozen=True)
class BleuResult:
    score: float
    precisions: tuple
    brevity_penalty: float
    empty_hypothesis: bool = False


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def closest_ref_length(hyp_len, refs):
    """Referentielengte het dichtst bij de hypothese; bij gelijke afstand de kortste."""
    return min((len(r) for r in refs), key=lambda n: (abs(n - hyp_len), n))


def bleu_detail(hyp, refs, max_n=MAX_ORDER):
    """Sentence-level BLEU met multi-reference clipping en smoothing.

    Voor k >= 2 zonder matches geldt p_k = 1 / (2 * H_k); p_1 = 0 of H_k = 0
    geeft score 0.
    """
    if not refs:
        raise UsageError("INVALID_CONFIG", "minstens één referentie nodig")
    if not 1 <= max_n <= MAX_ORDER:
        raise UsageError("INVALID_CONFIG", f"max_n moet 1..{MAX_ORDER} zijn")
    c = len(hyp)
    if c == 0:
        return BleuResult(score=0.0, precisions=(), brevity_penalty=0.0, empty_hypothesis=True)

    precisions = []
    for k in range(1, max_n + 1):
        total = c - k + 1
        if total <= 0:
            return BleuResult(score=0.0, precisions=tuple(precisions), brevity_penalty=0.0)
        counts = _ngrams(hyp, k)
        max_ref = Counter()
        for ref in refs:
            for gram, n in _ngrams(ref, k).items():
                if n > max_ref[gram]:
                    max_ref[gram] = n
        matches = sum(min(n, max_ref[gram]) for gram, n in counts.items())
        if matches == 0:
            if k == 1:
                return BleuResult(score=0.0, precisions=(0.0,), brevity_penalty=0.0)
            precisions.append(1.0 / (2 * total))
        else:
            precisions.append(matches / total)

    r = closest_ref_length(c, refs)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    score = bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuResult(score=score, precisions=tuple(precisions), brevity_penalty=bp)


def bleu(hyp, refs, max_n=MAX_ORDER):
    return bleu_detail(hyp, refs, max_n).score


def corpus_mean(pairs, max_n):
    if not pairs:
        return 0.0
    return math.fsum(bleu(hyp, refs, max_n) for hyp, refs in pairs) / len(pairs)


def bleu_corpus(pairs, max_n):
    """Gemiddelde sentence-BLEU x 100, afgerond op één decimaal."""
    return round_half_away(corpus_mean(pairs, max_n) * 100.0)


def bleu_avg(b1, b2, b3, b4):
    """Gemiddelde van BLEU-1..4, exact in Decimal en dan afgerond."""
    total = sum(Decimal(repr(b) if isinstance(b, float) else str(b)) for b in (b1, b2, b3, b4))
    return round_half_away(total / 4)


# --- Normalisatie ---

@dataclass(frozen=True)
class Prediction:
    id: str
    raw_text: str
    normalized: str
    task: TaskType
    rule: str


def _norm_text(text):
    return _WS.sub(" ", text).strip().lower()


def normalize_output(raw, task, options=None):
    """Normaliseer modeluitvoer volgens het protocol van de taak.

    De letterregel herkent alleen A-D; bij meer opties vallen E en verder
    terug op exact of contains.

    Returns:
        (antwoord, regel) tuple; regel is letter, exact, contains, unparseable
        of freeform. Bij unparseable is het antwoord UNPARSEABLE.
    """
    if task is not TaskType.EGO_VIEW_MCQ:
        return (_WS.sub(" ", raw).strip(), "freeform")
    if not options:
        raise UsageError("INVALID_CONFIG", "MCQ normalisatie vereist opties")

    # letterregel alleen voor A-D, en niet voorbij het aantal opties
    valid = {index_letter(i) for i in range(min(len(options), LETTER_RULE_OPTIONS))}
    for match in _LETTER.finditer(raw):
        letter = match.group(1).upper()
        if letter in valid:
            return (letter, "letter")

    text = _norm_text(raw)
    normalized = [_norm_text(o) for o in options]
    for i, option in enumerate(normalized):
        if text == option:
            return (index_letter(i), "exact")

    contained = [i for i, option in enumerate(normalized) if option and option in text]
    if len(contained) == 1:
        return (index_letter(contained[0]), "contains")
    return (UNPARSEABLE, "unparseable")


# --- Rapporten ---

@dataclass
class EvalReport:
    protocol: str
    scores: dict
    counts: dict
    audit: dict
    categories: dict = field(default_factory=dict)

    def to_dict(self):
        data = {
            "protocol": self.protocol,
            "scores": self.scores,
            "counts": self.counts,
            "audit": self.audit,
        }
        if self.categories:
            data["categories"] = self.categories
        return data


@dataclass(frozen=True)
class GoldItem:
    id: str
    refs: tuple = ()
    letter: str = ""
    options: tuple = ()
    category: str = ""


def evaluate_bleu(predictions, gold):
    """Corpus-BLEU-1..4 en BLEU-avg over free-form antwoorden.

    Args:
        predictions: dict id -> ruwe tekst
        gold: lijst GoldItem met refs
    """
    gold_ids = {g.id for g in gold}
    unknown = sorted(set(predictions) - gold_ids)
    if unknown:
        raise DataError("UNKNOWN_PREDICTION_ID", f"voorspelling zonder gold: {unknown[0]}",
                        id=unknown[0])

    pairs = []
    missing = empty = 0
    for item in gold:
        raw = predictions.get(item.id)
        if raw is None:
            missing += 1
            raw = ""
        text, _ = normalize_output(raw, TaskType.PLANNING_QA)
        hyp = tokenize(text)
        if not hyp:
            empty += 1
        pairs.append((hyp, [tokenize(r) for r in item.refs]))

    raw_scores = {f"bleu_{n}": corpus_mean(pairs, n) * 100.0 for n in range(1, MAX_ORDER + 1)}
    raw_scores["bleu_avg"] = math.fsum(raw_scores[f"bleu_{n}"]
                                       for n in range(1, MAX_ORDER + 1)) / MAX_ORDER
    scores = {k: round_half_away(v) for k, v in raw_scores.items()}
    return EvalReport(
        protocol=PROTOCOL_IDS[BLEU_PROTOCOL],
        scores=scores,
        counts={"items": len(gold), "predictions": len(predictions)},
        audit={"missing_predictions": missing, "empty_hypotheses": empty,
               "unrounded": raw_scores},
    )


def top1(predictions, gold, taxonomy=DEFAULT_CATEGORIES):
    """Top-1 accuracy per categorie en overall (sample-gewogen).

    Args:
        predictions: dict id -> Prediction (genormaliseerd)
        gold: lijst GoldItem met letter en category
    """
    gold_ids = {g.id for g in gold}
    unknown = sorted(set(predictions) - gold_ids)
    if unknown:
        raise DataError("UNKNOWN_PREDICTION_ID", f"voorspelling zonder gold: {unknown[0]}",
                        id=unknown[0])

    categories = list(taxonomy) + sorted({g.category for g in gold} - set(taxonomy))
    tally = {c: [0, 0] for c in categories}  # correct, totaal
    rules = Counter()
    missing = 0
    for item in gold:
        prediction = predictions.get(item.id)
        if prediction is None:
            missing += 1
            correct = False
        else:
            rules[prediction.rule] += 1
            correct = prediction.normalized == item.letter
        tally[item.category][0] += int(correct)
        tally[item.category][1] += 1

    per_category = {
        c: {"accuracy": (tally[c][0] / tally[c][1]) if tally[c][1] else None,
            "correct": tally[c][0], "total": tally[c][1]}
        for c in categories
    }
    total = sum(t[1] for t in tally.values())
    correct = sum(t[0] for t in tally.values())
    accuracies = [v["accuracy"] for v in per_category.values() if v["accuracy"] is not None]
    return EvalReport(
        protocol=PROTOCOL_IDS[TOP1_PROTOCOL],
        scores={
            "overall": correct / total if total else None,
            "category_mean": math.fsum(accuracies) / len(accuracies) if accuracies else None,
        },
        counts={"items": total, "correct": correct, "predictions": len(predictions)},
        audit={"rules": {r: rules.get(r, 0) for r in ("letter", "exact", "contains",
                                                       "unparseable")},
               "missing_predictions": missing},
        categories=per_category,
    )


# --- Bestanden ---

def _read_jsonl(path):
    records = []
    try:
        with open(path, "rb") as f:
            for number, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line.decode("utf-8")))
                except (UnicodeDecodeError, json.JSONDecodeError):
                    raise DataError("MALFORMED_TEXT", "ongeldige JSONL-regel", path=str(path),
                                    line=number)
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=str(path))
    return records


def load_predictions(path):
    """Lees {id, raw_text} records; dict id -> ruwe tekst."""
    predictions = {}
    for record in _read_jsonl(path):
        pid, raw = record.get("id"), record.get("raw_text")
        if not isinstance(pid, str) or not isinstance(raw, str):
            raise DataError("SCHEMA_VIOLATION", "id en raw_text zijn verplicht", path="raw_text")
        if pid in predictions:
            raise DataError("SCHEMA_VIOLATION", f"dubbel id: {pid}", path="id")
        predictions[pid] = raw
    return predictions


def load_gold(path, protocol):
    items = []
    for record in _read_jsonl(path):
        try:
            if protocol == BLEU_PROTOCOL:
                refs = record["refs"]
                if not refs or not all(isinstance(r, str) for r in refs):
                    raise DataError("SCHEMA_VIOLATION", "refs moet een niet-lege lijst zijn",
                                    path="refs")
                items.append(GoldItem(id=record["id"], refs=tuple(refs)))
            else:
                items.append(GoldItem(id=record["id"], letter=record["letter"],
                                      options=tuple(record["options"]),
                                      category=record["category"]))
        except KeyError as e:
            raise DataError("SCHEMA_VIOLATION", f"gold mist veld {e}", path=str(e).strip("'"))
    if len({g.id for g in items}) != len(items):
        raise DataError("SCHEMA_VIOLATION", "dubbele gold ids", path="id")
    return items


def run_eval(protocol, pred_path, gold_path, out_path):
    """Scoor een predictions-bestand en schrijf eval_report.json.

    Returns: EvalReport
    """
    if protocol not in PROTOCOL_IDS:
        raise UsageError("INVALID_CONFIG", f"onbekend protocol: {protocol}")
    raw = load_predictions(pred_path)
    gold = load_gold(gold_path, protocol)

    if protocol == BLEU_PROTOCOL:
        report = evaluate_bleu(raw, gold)
    else:
        options = {g.id: g.options for g in gold}
        predictions = {}
        for pid, text in raw.items():
            if pid not in options:
                raise DataError("UNKNOWN_PREDICTION_ID", f"voorspelling zonder gold: {pid}",
                                id=pid)
            answer, rule = normalize_output(text, TaskType.EGO_VIEW_MCQ, options[pid])
            predictions[pid] = Prediction(id=pid, raw_text=text, normalized=answer,
                                          task=TaskType.EGO_VIEW_MCQ, rule=rule)
        report = top1(predictions, gold)

    try:
        with open(out_path, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=str(out_path))
    logger.info("Evaluatie geschreven", extra={"protocol": report.protocol, "out": str(out_path),
                                               "items": report.counts["items"]})
    return report


def load_report(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=str(path))
    except json.JSONDecodeError as e:
        raise DataError("MALFORMED_TEXT", f"rapport is geen geldige JSON: {e.msg}", path=str(path))
