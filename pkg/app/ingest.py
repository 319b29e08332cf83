# -*- coding: utf-8 -*-
"""Dataset-adapters: bronrecords naar uniforme Samples, filters en MCQ-opbouw."""
import json
import os
import re
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from digest import fnv1a64
from errors import DataError, StorageError
from logging_config import get_logger
from rng import SplitMix64, mix_seed
from schema import (
    GROUNDING_TASKS, MAX_POINTS, TASK_FAMILY, TASK_ORDER,
    BoxSet, FreeText, OptionLetter, PointSet, Sample, TaskType, VisualInput, VisualKind,
    attach_key_frame, index_letter,
)
from validators import validate_sample

logger = get_logger(__name__)

ADAPTER_IDS = (
    "lvis_box", "pixmo_point", "robopoint", "egoplan_clip",
    "robovqa_qa", "sharerobot_qa", "industroplan_cot",
)

SOURCE_DATASET = {
    "lvis_box": "lvis-520k",
    "pixmo_point": "pixmopoint-570k",
    "robopoint": "robopoint-667k",
    "egoplan_clip": "egoplan-it-100k",
    "robovqa_qa": "robovqa-800k",
    "sharerobot_qa": "sharerobot-1m",
    "industroplan_cot": "industroplan-200k",
    "synthetic": "synthetic",
}

MCQ_DISTRACTORS = 3

CORPUS_FILE = "corpus.jsonl"
REPORT_FILE = "ingest_report.json"


@dataclass(frozen=True)
class EgoClip:
    clip_id: str
    video: VisualInput
    history_summary: str
    labeled_action: str
    sequence_id: str
    task_goal: str = ""


@dataclass
class DatasetCounts:
    read: int = 0
    accepted: int = 0
    dropped_point_count: int = 0
    dropped_outdoor: int = 0
    dropped_schema: int = 0
    kept_unknown_scene: int = 0
    emitted: int = 0
    mcq_built: int = 0
    mcq_skipped: int = 0
    adversarial: int = 0

    def merge(self, other):
        return DatasetCounts(**{k: getattr(self, k) + getattr(other, k)
                                for k in self.__dataclass_fields__})

    def conserved(self):
        return self.read == (self.accepted + self.dropped_point_count
                             + self.dropped_outdoor + self.dropped_schema)


@dataclass
class IngestReport:
    datasets: dict = field(default_factory=dict)  # naam -> DatasetCounts
    expected_counts: dict = field(default_factory=dict)
    families: dict = field(default_factory=dict)  # familie -> geaccepteerde samples

    def counts(self, name):
        return self.datasets.setdefault(name, DatasetCounts())

    def merge(self, other):
        """Associatieve en commutatieve samenvoeging van deelrapporten."""
        merged = IngestReport()
        for source in (self, other):
            for name, counts in source.datasets.items():
                merged.datasets[name] = merged.counts(name).merge(counts)
            merged.expected_counts.update(source.expected_counts)
            for family, n in source.families.items():
                merged.families[family] = merged.families.get(family, 0) + n
        return merged

    def conserved(self):
        return all(c.conserved() for c in self.datasets.values())

    def to_dict(self):
        return {
            "datasets": {name: asdict(c) for name, c in sorted(self.datasets.items())},
            "expected_counts": dict(sorted(self.expected_counts.items())),
            "families": dict(sorted(self.families.items())),
            "conserved": self.conserved(),
        }


# --- Tekst helpers ---

_WS = re.compile(r"\s+")


def normalize_action(text):
    """Lowercase en whitespace samenvoegen (voor distractor-vergelijking)."""
    return _WS.sub(" ", text).strip().lower()


# --- Adapter helpers ---

_ADAPTER_FIELDS = {
    "lvis_box": ({"id", "image", "question", "boxes"}, {"width", "height", "scene", "answer"}),
    "pixmo_point": ({"id", "image", "label", "points"}, {"width", "height", "scene"}),
    "robopoint": ({"id", "image", "instruction", "points"}, {"width", "height", "scene"}),
    "egoplan_clip": ({"clip_id", "video", "frame_count", "history_summary",
                      "labeled_action", "sequence_id"}, {"task_goal"}),
    "robovqa_qa": ({"id", "question", "answers"}, {"image", "video", "frame_count", "embodiment"}),
    "sharerobot_qa": ({"id", "question", "answer"}, {"image", "video", "frame_count", "scene"}),
    "industroplan_cot": ({"id", "video", "frame_count", "task_goal", "cot", "plan"}, {"layout"}),
}


def _violation(path, message="verplicht veld ontbreekt of ongeldig"):
    return DataError("SCHEMA_VIOLATION", message, path=path)


def _check_payload(adapter, payload, lenient):
    if not isinstance(payload, dict):
        raise _violation("$", "object verwacht")
    required, optional = _ADAPTER_FIELDS[adapter]
    for key in sorted(required):
        if key not in payload or payload[key] is None:
            raise _violation(key)
    if not lenient:
        unknown = sorted(set(payload) - required - optional)
        if unknown:
            raise _violation(unknown[0], f"onbekend veld: {unknown[0]}")


def _text(payload, key, allow_empty=False):
    value = payload.get(key)
    if not isinstance(value, str) or (not allow_empty and not value.strip()):
        raise _violation(key)
    return value.strip()


def _visual(payload):
    """Image of video uit een payload; video krijgt altijd de key frame."""
    if "video" in payload and payload["video"] is not None:
        uri = payload["video"]
        frames = payload.get("frame_count")
        if not isinstance(uri, str) or not uri:
            raise _violation("video")
        if not isinstance(frames, int) or isinstance(frames, bool) or frames < 1:
            raise _violation("frame_count")
        return attach_key_frame(VisualInput(kind=VisualKind.VIDEO, uri=uri, frame_count=frames))
    uri = payload.get("image")
    if not isinstance(uri, str) or not uri:
        raise _violation("image")
    return VisualInput(kind=VisualKind.IMAGE, uri=uri)


def _scale(payload):
    """(width, height) als de coördinaten in pixels staan, anders (1, 1)."""
    width, height = payload.get("width"), payload.get("height")
    if width is None and height is None:
        return 1.0, 1.0
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0
               for v in (width, height)):
        raise _violation("width", "width en height moeten positief zijn")
    return float(width), float(height)


def _coords(payload, key, size):
    width, height = _scale(payload)
    raw = payload.get(key)
    if not isinstance(raw, list):
        raise _violation(key)
    result = []
    for i, item in enumerate(raw):
        if (not isinstance(item, list) or len(item) != size
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in item)):
            raise _violation(f"{key}[{i}]")
        result.append(tuple(round(float(v) / (width if j % 2 == 0 else height), 6)
                            for j, v in enumerate(item)))
    return tuple(result)


def _scene(payload):
    scene = payload.get("scene")
    if scene is None:
        return "unknown"
    if scene not in ("indoor", "outdoor", "unknown"):
        raise _violation("scene", f"onbekende scene: {scene!r}")
    return scene


# --- Adapters ---

def _adapt_lvis_box(payload):
    question = _text(payload, "question")
    return Sample(
        id=_text(payload, "id"),
        task=TaskType.VISUAL_GROUNDING_BOX,
        visual=_visual(payload),
        instruction=f"{question} Answer with a bounding box.",
        target=BoxSet(boxes=_coords(payload, "boxes", 4)),
        source_dataset=SOURCE_DATASET["lvis_box"],
        scene_tag=_scene(payload),
    )


def _adapt_pixmo_point(payload):
    label = _text(payload, "label")
    return Sample(
        id=_text(payload, "id"),
        task=TaskType.VISUAL_GROUNDING_POINT,
        visual=_visual(payload),
        instruction=f"Point to every {label} in the image.",
        target=PointSet(points=_coords(payload, "points", 2)),
        source_dataset=SOURCE_DATASET["pixmo_point"],
        scene_tag=_scene(payload),
    )


def _adapt_robopoint(payload):
    return Sample(
        id=_text(payload, "id"),
        task=TaskType.VISUAL_GROUNDING_POINT,
        visual=_visual(payload),
        instruction=_text(payload, "instruction"),
        target=PointSet(points=_coords(payload, "points", 2)),
        source_dataset=SOURCE_DATASET["robopoint"],
        scene_tag=_scene(payload),
    )


def _adapt_robovqa_qa(payload):
    answers = payload.get("answers")
    if (not isinstance(answers, list) or not answers
            or not all(isinstance(a, str) and a.strip() for a in answers)):
        raise _violation("answers")
    return Sample(
        id=_text(payload, "id"),
        task=TaskType.PLANNING_QA,
        visual=_visual(payload),
        instruction=_text(payload, "question"),
        target=FreeText(answer_set=tuple(a.strip() for a in answers)),
        source_dataset=SOURCE_DATASET["robovqa_qa"],
    )


def _adapt_sharerobot_qa(payload):
    return Sample(
        id=_text(payload, "id"),
        task=TaskType.PLANNING_QA,
        visual=_visual(payload),
        instruction=_text(payload, "question"),
        target=FreeText(answer_set=(_text(payload, "answer"),)),
        source_dataset=SOURCE_DATASET["sharerobot_qa"],
    )


def render_cot(steps, plan):
    """Chain-of-thought als genummerde stappen gevolgd door het plan."""
    lines = [f"Step {i}: {s.strip()}" for i, s in enumerate(steps, 1)]
    lines.append(f"Plan: {plan.strip()}")
    return "\n".join(lines)


def _adapt_industroplan_cot(payload):
    steps = payload.get("cot")
    if not isinstance(steps, list) or not steps or not all(isinstance(s, str) and s.strip()
                                                          for s in steps):
        raise _violation("cot")
    goal = _text(payload, "task_goal")
    return Sample(
        id=_text(payload, "id"),
        task=TaskType.INDUSTRIAL_COT,
        visual=_visual(payload),
        instruction=f"Goal: {goal} Think step by step and give the plan.",
        target=FreeText(answer_set=(render_cot(steps, _text(payload, "plan")),)),
        source_dataset=SOURCE_DATASET["industroplan_cot"],
    )


def ego_clip_from_payload(payload):
    """Bouw een EgoClip uit een egoplan_clip payload."""
    video = _visual({"video": payload.get("video"), "frame_count": payload.get("frame_count")})
    return EgoClip(
        clip_id=_text(payload, "clip_id"),
        video=video,
        history_summary=_text(payload, "history_summary", allow_empty=True),
        labeled_action=_text(payload, "labeled_action"),
        sequence_id=_text(payload, "sequence_id"),
        task_goal=_text(payload, "task_goal", allow_empty=True) if "task_goal" in payload else "",
    )


_ADAPTERS = {
    "lvis_box": _adapt_lvis_box,
    "pixmo_point": _adapt_pixmo_point,
    "robopoint": _adapt_robopoint,
    "egoplan_clip": lambda payload: build_open(ego_clip_from_payload(payload)),
    "robovqa_qa": _adapt_robovqa_qa,
    "sharerobot_qa": _adapt_sharerobot_qa,
    "industroplan_cot": _adapt_industroplan_cot,
}


def decode_payload(line):
    """Decodeer één bronregel naar een JSON-object.

    Raises: DataError(MALFORMED_TEXT) bij ongeldige UTF-8 of afgebroken JSON.
    """
    if isinstance(line, (bytes, bytearray)):
        try:
            line = bytes(line).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataError("MALFORMED_TEXT", f"geen geldige UTF-8: {e.reason}")
    try:
        return json.loads(line)
    except json.JSONDecodeError as e:
        raise DataError("MALFORMED_TEXT", f"onvolledige of ongeldige JSON: {e.msg}")


def parse_record(line, adapter, lenient=False):
    """Zet één bronregel om naar een Sample.

    Het puntenmaximum valt onder filter_grounding; alle andere invarianten
    worden hier afgedwongen.

    Raises: DataError(SCHEMA_VIOLATION | MALFORMED_TEXT)
    """
    if adapter not in _ADAPTERS:
        raise DataError("SCHEMA_VIOLATION", f"onbekende adapter: {adapter}", path="adapter_id")
    payload = decode_payload(line)
    _check_payload(adapter, payload, lenient)
    sample = _ADAPTERS[adapter](payload)

    _, violations = validate_sample(sample)
    if isinstance(sample.target, PointSet) and len(sample.target.points) > MAX_POINTS:
        violations = [v for v in violations if v != "POINT_COUNT"]
    if violations:
        raise DataError("SCHEMA_VIOLATION", ",".join(violations), path=violations[0])
    return sample


def filter_grounding(sample):
    """Pas het grounding-filter toe: >10 punten of outdoor scène eruit.

    Returns:
        (keep, reason) tuple; reason is POINT_COUNT of OUTDOOR bij drop.

    Raises: DataError(TASK_MISMATCH) voor niet-grounding samples.
    """
    if sample.task not in GROUNDING_TASKS:
        raise DataError("TASK_MISMATCH", "filter alleen voor grounding", task=sample.task.value)
    if isinstance(sample.target, PointSet) and len(sample.target.points) > MAX_POINTS:
        return (False, "POINT_COUNT")
    if sample.scene_tag == "outdoor":
        return (False, "OUTDOOR")
    return (True, None)


# --- Ego-view ---

def _ego_question(clip):
    goal = f" in order to {clip.task_goal}" if clip.task_goal else ""
    history = f" Progress so far: {clip.history_summary}." if clip.history_summary else ""
    return (f"Considering the progress shown in the video and my current observation "
            f"in the last frame, what action should I take next{goal}?{history}")


def build_open(clip):
    """Open-ended ego-view sample; het antwoord is de gelabelde actie.

    Raises: DataError(EMPTY_ACTION)
    """
    if not clip.labeled_action.strip():
        raise DataError("EMPTY_ACTION", "gelabelde actie is leeg", clip_id=clip.clip_id)
    return Sample(
        id=clip.clip_id,
        task=TaskType.EGO_VIEW_OPEN,
        visual=attach_key_frame(clip.video),
        instruction=_ego_question(clip),
        target=FreeText(answer_set=(clip.labeled_action,)),
        source_dataset=SOURCE_DATASET["egoplan_clip"],
    )


def build_mcq(clip, pool, seed):
    """Multiple-choice ego-view sample met drie distractors uit andere sequenties.

    Distractors worden vergeleken na lowercase en whitespace-normalisatie;
    kandidaten zijn gesorteerd zodat de volgorde van de pool niet uitmaakt.

    Raises: DataError(POOL_TOO_SMALL) bij minder dan drie geschikte acties.
    """
    if not clip.labeled_action.strip():
        raise DataError("EMPTY_ACTION", "gelabelde actie is leeg", clip_id=clip.clip_id)
    correct = normalize_action(clip.labeled_action)

    candidates = {}
    for other in pool:
        if other.sequence_id == clip.sequence_id:
            continue
        key = normalize_action(other.labeled_action)
        if not key or key == correct:
            continue
        current = candidates.get(key)
        if current is None or other.labeled_action.strip() < current:
            candidates[key] = other.labeled_action.strip()
    if len(candidates) < MCQ_DISTRACTORS:
        raise DataError("POOL_TOO_SMALL", f"{len(candidates)} geschikte distractors",
                        clip_id=clip.clip_id)

    rng = SplitMix64(seed)
    eligible = [candidates[k] for k in sorted(candidates)]
    for i in range(MCQ_DISTRACTORS):
        j = i + rng.below(len(eligible) - i)
        eligible[i], eligible[j] = eligible[j], eligible[i]

    options = [clip.labeled_action.strip()] + eligible[:MCQ_DISTRACTORS]
    rng.shuffle(options)
    letter = index_letter(options.index(clip.labeled_action.strip()))
    listing = "\n".join(f"{index_letter(i)}. {o}" for i, o in enumerate(options))

    return Sample(
        id=f"{clip.clip_id}#mcq",
        task=TaskType.EGO_VIEW_MCQ,
        visual=attach_key_frame(clip.video),
        instruction=f"{_ego_question(clip)}\n{listing}\nAnswer with the option letter.",
        target=OptionLetter(letter=letter, options=tuple(options)),
        source_dataset=SOURCE_DATASET["egoplan_clip"],
    )


def mcq_seed(seed, clip_id):
    return mix_seed(seed, fnv1a64(clip_id.encode("utf-8")))


# --- Synthetisch corpus ---

_OBJECTS = (
    ("bicycle", "handlebar", "steering"), ("kettle", "handle", "holding it"),
    ("drawer", "knob", "opening it"), ("scissors", "blades", "cutting"),
    ("mug", "handle", "gripping"), ("lamp", "switch", "turning it on"),
    ("screwdriver", "grip", "applying torque"), ("faucet", "lever", "regulating water"),
)
_VERBS = ("pick up", "place", "open", "close", "pour", "wipe", "push", "rotate", "lift", "stack")
_THINGS = ("the red block", "the cup", "the drawer", "the lid", "the sponge",
           "the bottle", "the towel", "the tray", "the bowl", "the box")
_PLACES = ("on the shelf", "into the bin", "next to the sink", "onto the pallet",
           "in the cabinet", "on the conveyor")


def _pick(rng, items):
    return items[rng.below(len(items))]


def _action(rng):
    return f"{_pick(rng, _VERBS)} {_pick(rng, _THINGS)} {_pick(rng, _PLACES)}"


def _unit(rng):
    return round(rng.random(), 4)


def _video(rng, name):
    frames = 8 + rng.below(25)
    return attach_key_frame(VisualInput(kind=VisualKind.VIDEO, uri=f"synthetic://{name}.mp4",
                                        frame_count=frames))


def _synthetic_sample(task, index, rng, adversarial):
    sid = f"syn-{task.value}-{index:06d}"
    image = VisualInput(kind=VisualKind.IMAGE, uri=f"synthetic://{sid}.jpg")
    scene = "unknown" if index % 5 == 4 else "indoor"

    if task is TaskType.VISUAL_GROUNDING_BOX:
        obj, part, function = _pick(rng, _OBJECTS)
        x0, y0 = round(rng.random() * 0.7, 4), round(rng.random() * 0.7, 4)
        x1 = round(x0 + 0.05 + rng.random() * 0.25, 4)
        y1 = round(y0 + 0.05 + rng.random() * 0.25, 4)
        return Sample(sid, task, image,
                      f"Which part of the {obj} is responsible for {function}? "
                      "Answer with a bounding box.",
                      BoxSet(boxes=((x0, y0, x1, y1),)), "synthetic",
                      "outdoor" if adversarial else scene)
    if task is TaskType.VISUAL_GROUNDING_POINT:
        obj, part, _ = _pick(rng, _OBJECTS)
        n = MAX_POINTS + 1 + rng.below(5) if adversarial else 1 + rng.below(MAX_POINTS)
        points = tuple((_unit(rng), _unit(rng)) for _ in range(n))
        return Sample(sid, task, image, f"Point to the {part} of the {obj}.",
                      PointSet(points=points), "synthetic", scene)
    if task is TaskType.EGO_VIEW_MCQ:
        options = []
        while len(options) < 4:
            action = _action(rng)
            if action not in options:
                options.append(action)
        letter = index_letter(rng.below(4))
        listing = "\n".join(f"{index_letter(i)}. {o}" for i, o in enumerate(options))
        return Sample(sid, task, _video(rng, sid),
                      f"What action should I take next?\n{listing}\n"
                      "Answer with the option letter.",
                      OptionLetter(letter=letter, options=tuple(options)), "synthetic")
    if task is TaskType.EGO_VIEW_OPEN:
        return Sample(sid, task, _video(rng, sid), "What action should I take next?",
                      FreeText(answer_set=(_action(rng),)), "synthetic")
    if task is TaskType.PLANNING_QA:
        visual = _video(rng, sid) if rng.below(2) else image
        goal = _action(rng)
        return Sample(sid, task, visual, f"What is the next step to {goal}?",
                      FreeText(answer_set=(_action(rng), _action(rng))), "synthetic")
    steps = [_action(rng) for _ in range(2 + rng.below(4))]
    return Sample(sid, task, _video(rng, sid),
                  f"Goal: transport {_pick(rng, _THINGS)} {_pick(rng, _PLACES)} "
                  "Think step by step and give the plan.",
                  FreeText(answer_set=(render_cot(steps, "; ".join(steps)),)), "synthetic")


def _adversarial_indices(task, count, fraction, seed):
    if task not in GROUNDING_TASKS or fraction <= 0 or count == 0:
        return frozenset()
    # decimale fractie exact: 0.29 * 100 is 29, niet 28
    k = int(Fraction(str(fraction)) * count)
    order = SplitMix64(mix_seed(seed, TASK_ORDER.index(task), 0xAD)).shuffle(list(range(count)))
    return frozenset(order[:k])


def generate_synthetic_corpus(counts, seed, adversarial_fraction=0.0):
    """Genereer een deterministisch synthetisch corpus.

    Args:
        counts: dict TaskType -> aantal
        seed: 64-bit seed
        adversarial_fraction: fractie grounding samples die bewust het filter
            raakt (PointSet > 10 punten, BoxSet outdoor)

    Returns:
        (samples iterator, IngestReport); het rapport beschrijft wat het
        grounding-filter met deze stroom zal doen.
    """
    if any(n < 0 for n in counts.values()):
        raise DataError("INVALID_CONFIG", "aantallen moeten >= 0 zijn")
    if not 0.0 <= adversarial_fraction <= 1.0:
        raise DataError("INVALID_CONFIG", "adversarial fractie buiten [0, 1]")

    report = IngestReport()
    plan = []
    for task in TASK_ORDER:
        n = counts.get(task, 0)
        if n == 0:
            continue
        bad = _adversarial_indices(task, n, adversarial_fraction, seed)
        plan.append((task, n, bad))

        c = report.counts("synthetic")
        c.read += n
        c.emitted += n - len(bad)
        c.adversarial += len(bad)
        if task is TaskType.VISUAL_GROUNDING_POINT:
            c.dropped_point_count += len(bad)
        elif task is TaskType.VISUAL_GROUNDING_BOX:
            c.dropped_outdoor += len(bad)
        c.accepted += n - len(bad)
        if task in GROUNDING_TASKS:
            c.kept_unknown_scene += sum(1 for i in range(n) if i % 5 == 4 and i not in bad)
        family = TASK_FAMILY[task]
        report.families[family] = report.families.get(family, 0) + n - len(bad)

    def _stream():
        for task, n, bad in plan:
            rng = SplitMix64(mix_seed(seed, TASK_ORDER.index(task)))
            for i in range(n):
                yield _synthetic_sample(task, i, rng, i in bad)

    return _stream(), report


# --- Pipeline ---

def _accept(sample, counts, report, out):
    """Filter, valideer en schrijf één sample."""
    if sample.task in GROUNDING_TASKS:
        keep, reason = filter_grounding(sample)
        if not keep:
            if reason == "POINT_COUNT":
                counts.dropped_point_count += 1
            else:
                counts.dropped_outdoor += 1
            return False
        if sample.scene_tag == "unknown":
            counts.kept_unknown_scene += 1
    is_valid, violations = validate_sample(sample)
    if not is_valid:
        counts.dropped_schema += 1
        logger.warning("Sample afgekeurd", extra={"id": sample.id, "violations": violations})
        return False
    out.write(sample.to_json() + "\n")
    counts.emitted += 1
    family = TASK_FAMILY[sample.task]
    report.families[family] = report.families.get(family, 0) + 1
    return True


def _read_lines(path):
    try:
        with open(path, "rb") as f:
            for number, line in enumerate(f, 1):
                line = line.rstrip(b"\r\n")
                if line.strip():
                    yield number, line
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=str(path))


def ingest_dataset(adapter, path, out_path, lenient=False, seed=0):
    """Verwerk één bronbestand naar een JSONL-deelbestand.

    Returns: IngestReport voor deze dataset.
    """
    report = IngestReport()
    counts = report.counts(adapter)
    seen = set()

    with open(out_path, "w", encoding="utf-8", newline="\n") as out:
        if adapter == "egoplan_clip":
            clips = []
            for number, line in _read_lines(path):
                counts.read += 1
                try:
                    payload = decode_payload(line)
                    _check_payload(adapter, payload, lenient)
                    clip = ego_clip_from_payload(payload)
                    if clip.clip_id in seen:
                        raise _violation("clip_id", "dubbel id")
                    seen.add(clip.clip_id)
                    clips.append(clip)
                except DataError as e:
                    counts.dropped_schema += 1
                    logger.warning("Record afgekeurd",
                                   extra={"adapter": adapter, "line": number, "error": e.code,
                                          "path": e.details.get("path")})
            for clip in clips:
                if not _accept(build_open(clip), counts, report, out):
                    continue
                counts.accepted += 1
                try:
                    mcq = build_mcq(clip, clips, mcq_seed(seed, clip.clip_id))
                except DataError as e:
                    counts.mcq_skipped += 1
                    logger.info("MCQ overgeslagen",
                                extra={"clip_id": clip.clip_id, "reason": e.code})
                    continue
                out.write(mcq.to_json() + "\n")
                counts.emitted += 1
                counts.mcq_built += 1
                family = TASK_FAMILY[mcq.task]
                report.families[family] = report.families.get(family, 0) + 1
        else:
            for number, line in _read_lines(path):
                counts.read += 1
                try:
                    sample = parse_record(line, adapter, lenient=lenient)
                    if sample.id in seen:
                        raise _violation("id", "dubbel id")
                    seen.add(sample.id)
                except DataError as e:
                    counts.dropped_schema += 1
                    logger.warning("Record afgekeurd",
                                   extra={"adapter": adapter, "line": number, "error": e.code,
                                          "path": e.details.get("path")})
                    continue
                if _accept(sample, counts, report, out):
                    counts.accepted += 1

    logger.info("Dataset verwerkt", extra={"adapter": adapter, **asdict(counts)})
    return report


def _ingest_synthetic(block, out_path, adversarial_override, default_seed):
    counts = {TaskType.parse(k): int(v) for k, v in block.get("counts", {}).items()}
    fraction = (adversarial_override if adversarial_override is not None
                else float(block.get("adversarial_fraction", 0.0)))
    samples, expected = generate_synthetic_corpus(counts, block.get("seed", default_seed),
                                                  fraction)
    report = IngestReport()
    c = report.counts("synthetic")
    with open(out_path, "w", encoding="utf-8", newline="\n") as out:
        for sample in samples:
            c.read += 1
            if _accept(sample, c, report, out):
                c.accepted += 1
    c.adversarial = expected.counts("synthetic").adversarial
    return report


def load_corpus_manifest(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=str(path))
    except json.JSONDecodeError as e:
        raise DataError("SCHEMA_VIOLATION", f"manifest is geen geldige JSON: {e.msg}",
                        path=str(path))
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for i, entry in enumerate(manifest.get("datasets", [])):
        adapter = entry.get("adapter_id")
        if adapter not in ADAPTER_IDS:
            raise DataError("SCHEMA_VIOLATION", f"onbekende adapter: {adapter}",
                            path=f"datasets[{i}].adapter_id")
        if not isinstance(entry.get("path"), str):
            raise DataError("SCHEMA_VIOLATION", "pad ontbreekt", path=f"datasets[{i}].path")
        entries.append({
            "adapter_id": adapter,
            "path": os.path.join(base, entry["path"]),
            "expected_count": entry.get("expected_count"),
        })
    return entries, manifest.get("synthetic"), manifest.get("seed", 0)


def ingest_corpus(manifest_path, out_dir, lenient=False, adversarial=None, threads=1,
                  seed=None):
    """Voer alle adapters uit de corpus-manifest uit.

    Datasets worden (optioneel parallel) naar deelbestanden geschreven en
    daarna in manifest-volgorde samengevoegd tot corpus.jsonl.

    Returns: IngestReport
    """
    entries, synthetic, manifest_seed = load_corpus_manifest(manifest_path)
    seed = manifest_seed if seed is None else seed
    parts_dir = os.path.join(out_dir, "parts")
    os.makedirs(parts_dir, exist_ok=True)

    jobs = []
    for i, entry in enumerate(entries):
        part = os.path.join(parts_dir, f"part-{i:05d}.jsonl")
        jobs.append((part, ingest_dataset, (entry["adapter_id"], entry["path"], part,
                                            lenient, seed)))
    if synthetic:
        part = os.path.join(parts_dir, f"part-{len(entries):05d}.jsonl")
        jobs.append((part, _ingest_synthetic, (synthetic, part, adversarial, seed)))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(fn, *args) for _, fn, args in jobs]
        partials = [f.result() for f in futures]

    report = IngestReport()
    for partial in partials:
        report = report.merge(partial)
    for entry in entries:
        if entry["expected_count"] is not None:
            name = entry["adapter_id"]
            report.expected_counts[name] = (report.expected_counts.get(name, 0)
                                            + entry["expected_count"])
    for name, expected in report.expected_counts.items():
        read = report.counts(name).read
        if read != expected:
            logger.warning("Aantal records wijkt af van manifest",
                           extra={"adapter": name, "expected": expected, "read": read})

    corpus_path = os.path.join(out_dir, CORPUS_FILE)
    try:
        with open(corpus_path, "wb") as out:
            for part, _, _ in jobs:
                with open(part, "rb") as f:
                    shutil.copyfileobj(f, out)
        shutil.rmtree(parts_dir)
        with open(os.path.join(out_dir, REPORT_FILE), "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=out_dir)

    logger.info("Ingest voltooid", extra={"datasets": len(jobs), "out": out_dir})
    return report


def read_corpus(path, lenient=False):
    """Lees een uniform-sample JSONL bestand als stroom."""
    from schema import sample_from_json

    for number, line in _read_lines(path):
        try:
            yield sample_from_json(line, lenient=lenient)
        except DataError as e:
            e.details.setdefault("line", number)
            raise
