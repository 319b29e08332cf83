import json
import math
import os

import pytest

from errors import DataError, UsageError
from evalharness import (
    BLEU_PROTOCOL, PROTOCOL_IDS, TOP1_PROTOCOL, UNPARSEABLE, GoldItem, Prediction, bleu,
    bleu_avg, bleu_detail, closest_ref_length, normalize_output, round_half_away, run_eval,
    tokenize, top1,
)
from rng import SplitMix64
from schema import TaskType

MCQ = TaskType.EGO_VIEW_MCQ
OPTIONS = ("open the fridge", "fold the fabric", "pour the milk", "close the door")


def oracle_bleu(hyp, refs, n):
    """Onafhankelijke sentence-BLEU met dezelfde smoothing en brevity penalty."""
    c = len(hyp)
    if c == 0:
        return 0.0
    log_sum = 0.0
    for k in range(1, n + 1):
        if c < k:
            return 0.0
        grams = [tuple(hyp[i:i + k]) for i in range(c - k + 1)]
        matches = 0
        for gram in set(grams):
            best = max(sum(1 for j in range(len(r) - k + 1) if tuple(r[j:j + k]) == gram)
                       for r in refs)
            matches += min(grams.count(gram), best)
        if matches == 0:
            if k == 1:
                return 0.0
            p = 1.0 / (2 * (c - k + 1))
        else:
            p = matches / (c - k + 1)
        log_sum += math.log(p)
    r = sorted(sorted(len(ref) for ref in refs), key=lambda length: abs(length - c))[0]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / n)


def random_tokens(rng, vocab, low, high):
    return [vocab[rng.below(len(vocab))] for _ in range(low + rng.below(high - low + 1))]


# --- Aggregatie en afronding ---

def test_bleu_avg_matches_published_rows():
    assert bleu_avg(72.7, 65.7, 59.5, 56.0) == 63.5
    assert bleu_avg(62.2, 54.6, 48.7, 45.0) == 52.6


def test_rounding_is_half_away_from_zero():
    assert round_half_away(0.25) == 0.3
    assert round_half_away(2.45) == 2.5
    assert round_half_away(-2.45) == -2.5
    assert round_half_away(44.04) == 44.0


# --- BLEU ---

def test_brevity_penalty_example():
    hyp, ref = tokenize("the cat sat"), tokenize("the cat sat down")
    expected = math.exp(1 - 4 / 3)
    assert math.isclose(bleu(hyp, [ref], 1), expected, rel_tol=1e-12)
    assert math.isclose(bleu(hyp, [ref], 2), expected, rel_tol=1e-12)


def test_exact_match_scores_one():
    tokens = tokenize("pick up the red block")
    for n in range(1, 5):
        assert bleu(tokens, [tokens], n) == 1.0


def test_empty_and_short_hypotheses_score_zero():
    detail = bleu_detail([], [["a"]])
    assert detail.score == 0.0 and detail.empty_hypothesis
    assert bleu(["a", "b"], [["a", "b"]], 3) == 0.0
    assert bleu(["x"], [["a"]], 1) == 0.0


def test_zero_match_orders_are_smoothed():
    detail = bleu_detail(tokenize("grab the blue block"), [tokenize("pick up the red block")], 4)
    assert detail.precisions == (0.5, 1 / 6, 0.25, 0.5)
    assert math.isclose(detail.brevity_penalty, math.exp(-0.25), rel_tol=1e-12)


def test_closest_reference_length_prefers_shorter_on_tie():
    assert closest_ref_length(5, [["a"] * 4, ["a"] * 6]) == 4
    assert closest_ref_length(5, [["a"] * 7, ["a"] * 5]) == 5


def test_bleu_matches_independent_oracle():
    rng = SplitMix64(2024)
    vocab = ["the", "cup", "arm", "pick", "up", "move", "left", "box", "."]
    for _ in range(200):
        hyp = random_tokens(rng, vocab, 0, 9)
        refs = [random_tokens(rng, vocab, 1, 9) for _ in range(1 + rng.below(3))]
        for n in range(1, 5):
            assert abs(bleu(hyp, refs, n) - oracle_bleu(hyp, refs, n)) <= 1e-9


def test_extra_reference_never_lowers_precisions():
    rng = SplitMix64(5)
    vocab = ["a", "b", "c", "d", "e"]
    for _ in range(100):
        hyp = random_tokens(rng, vocab, 4, 8)
        refs = [random_tokens(rng, vocab, 2, 8)]
        before = bleu_detail(hyp, refs, 4).precisions
        after = bleu_detail(hyp, refs + [random_tokens(rng, vocab, 2, 8)], 4).precisions
        if before and len(after) == len(before):
            assert all(a >= b for a, b in zip(after, before))


def test_higher_order_bleu_can_exceed_lower_order():
    # Geen monotonie in n: bigrammen matchen hier beter dan unigrammen
    hyp, refs = tokenize("a b a"), [tokenize("b a b")]
    assert bleu(hyp, refs, 2) > bleu(hyp, refs, 1)


def test_bleu_rejects_bad_arguments():
    with pytest.raises(UsageError):
        bleu(["a"], [], 1)
    with pytest.raises(UsageError):
        bleu(["a"], [["a"]], 5)


def test_tokenize_splits_punctuation():
    assert tokenize("Yes, lift it.") == ["yes", ",", "lift", "it", "."]


# --- Normalisatie ---

@pytest.mark.parametrize("raw, expected", [
    ("B", ("B", "letter")),
    ("The answer is (C).", ("C", "letter")),
    ("option d", ("D", "letter")),
    ("  Pour   the MILK ", ("C", "exact")),
    ("I think we should close the door now", ("D", "contains")),
    ("no idea", (UNPARSEABLE, "unparseable")),
    ("answer E", (UNPARSEABLE, "unparseable")),
    ("open the fridge and pour the milk", (UNPARSEABLE, "unparseable")),
])
def test_normalize_mcq(raw, expected):
    assert normalize_output(raw, MCQ, OPTIONS) == expected


def test_single_letter_article_counts_as_letter():
    assert normalize_output("a cup of tea", MCQ, OPTIONS) == ("A", "letter")


def test_letter_rule_stops_at_d():
    options = OPTIONS + ("wash the cup", "dry the cup")
    assert normalize_output("answer E", MCQ, options) == (UNPARSEABLE, "unparseable")
    assert normalize_output("E: wash the cup", MCQ, options) == ("E", "contains")
    assert normalize_output("answer D", MCQ, options) == ("D", "letter")
    assert normalize_output("answer C", MCQ, OPTIONS[:2]) == (UNPARSEABLE, "unparseable")


def test_normalize_free_form_only_collapses_whitespace():
    assert normalize_output("  Fold   the Box ", TaskType.PLANNING_QA) == ("Fold the Box", "freeform")


def test_normalize_mcq_requires_options():
    with pytest.raises(UsageError):
        normalize_output("A", MCQ)


# --- Top-1 ---

def prediction(pid, letter, rule="letter"):
    return Prediction(id=pid, raw_text=letter, normalized=letter, task=MCQ, rule=rule)


def test_top1_reports_empty_categories_as_null():
    gold = [GoldItem(id="g1", letter="A", options=OPTIONS, category="Daily life"),
            GoldItem(id="g2", letter="B", options=OPTIONS, category="Sports")]
    report = top1({"g1": prediction("g1", "A"), "g2": prediction("g2", "C")}, gold)
    assert report.categories["Work"] == {"accuracy": None, "correct": 0, "total": 0}
    assert report.categories["Sports"]["accuracy"] == 0.0
    assert list(report.categories)[-1] == "Sports"
    assert report.scores == {"overall": 0.5, "category_mean": 0.5}


def test_top1_rejects_unknown_prediction_ids():
    gold = [GoldItem(id="g1", letter="A", options=OPTIONS, category="Work")]
    with pytest.raises(DataError) as exc:
        top1({"zz": prediction("zz", "A")}, gold)
    assert exc.value.code == "UNKNOWN_PREDICTION_ID"


# --- Bestanden ---

def eval_paths(fixtures_dir, name):
    return (os.path.join(fixtures_dir, "eval", f"{name}_pred.jsonl"),
            os.path.join(fixtures_dir, "eval", f"{name}_gold.jsonl"))


def test_egoplan_fixture(fixtures_dir, tmp_path):
    pred, gold = eval_paths(fixtures_dir, "egoplan")
    report = run_eval(TOP1_PROTOCOL, pred, gold, str(tmp_path / "eval.json"))
    assert report.protocol == PROTOCOL_IDS[TOP1_PROTOCOL]
    assert report.scores["overall"] == 5 / 8
    accuracy = {name: c["accuracy"] for name, c in report.categories.items()}
    assert accuracy == {"Daily life": 1.0, "Work": 1 / 3, "Recreation": 0.0, "Hobbies": 1.0}
    assert report.audit == {"rules": {"letter": 4, "exact": 1, "contains": 1, "unparseable": 1},
                            "missing_predictions": 1}


def test_planning_fixture(fixtures_dir, tmp_path):
    pred, gold = eval_paths(fixtures_dir, "planning")
    report = run_eval(BLEU_PROTOCOL, pred, gold, str(tmp_path / "eval.json"))
    assert report.counts == {"items": 6, "predictions": 5}
    assert report.audit["missing_predictions"] == 1
    assert report.audit["empty_hypotheses"] == 1
    assert report.scores["bleu_1"] == 57.7
    assert report.scores["bleu_2"] == 54.3
    assert report.scores["bleu_4"] == 44.3
    assert report.scores["bleu_avg"] == 50.3


def test_rerun_is_byte_identical(fixtures_dir, tmp_path):
    for name, protocol in (("planning", BLEU_PROTOCOL), ("egoplan", TOP1_PROTOCOL)):
        pred, gold = eval_paths(fixtures_dir, name)
        run_eval(protocol, pred, gold, str(tmp_path / "a.json"))
        run_eval(protocol, pred, gold, str(tmp_path / "b.json"))
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_prediction_without_gold_is_rejected(fixtures_dir, tmp_path):
    _, gold = eval_paths(fixtures_dir, "egoplan")
    pred = tmp_path / "pred.jsonl"
    pred.write_text(json.dumps({"id": "ego-e99", "raw_text": "A"}) + "\n", encoding="utf-8")
    with pytest.raises(DataError) as exc:
        run_eval(TOP1_PROTOCOL, str(pred), gold, str(tmp_path / "eval.json"))
    assert exc.value.code == "UNKNOWN_PREDICTION_ID"


def test_duplicate_prediction_ids_are_rejected(fixtures_dir, tmp_path):
    _, gold = eval_paths(fixtures_dir, "planning")
    pred = tmp_path / "pred.jsonl"
    line = json.dumps({"id": "robovqa-0002", "raw_text": "yes"})
    pred.write_text(f"{line}\n{line}\n", encoding="utf-8")
    with pytest.raises(DataError) as exc:
        run_eval(BLEU_PROTOCOL, str(pred), gold, str(tmp_path / "eval.json"))
    assert exc.value.code == "SCHEMA_VIOLATION"


def test_unknown_protocol(tmp_path):
    with pytest.raises(UsageError):
        run_eval("vqa-accuracy", "p.jsonl", "g.jsonl", str(tmp_path / "eval.json"))
