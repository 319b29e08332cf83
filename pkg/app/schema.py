"""Uniform sample-schema: één taakbewuste structuur voor alle bronnen.

Canonieke codering: één JSON-object per regel (UTF-8, LF), veldnamen zoals
hieronder, enum-waarden in lowercase. Optionele velden worden weggelaten als
ze niet gezet zijn.
"""
import json
from dataclasses import dataclass, replace
from enum import Enum

from errors import DataError


class TaskType(Enum):
    # Volgorde is canoniek (sampler inverse-CDF)
    VISUAL_GROUNDING_BOX = "visual-grounding-box"
    VISUAL_GROUNDING_POINT = "visual-grounding-point"
    EGO_VIEW_MCQ = "ego-view-mcq"
    EGO_VIEW_OPEN = "ego-view-open"
    PLANNING_QA = "planning-qa"
    INDUSTRIAL_COT = "industrial-cot"

    @classmethod
    def parse(cls, text):
        try:
            return cls(text)
        except ValueError:
            raise DataError("SCHEMA_VIOLATION", f"onbekende task: {text!r}", path="task")

    def format(self):
        return self.value


TASK_ORDER = tuple(TaskType)

GROUNDING_TASKS = frozenset({TaskType.VISUAL_GROUNDING_BOX, TaskType.VISUAL_GROUNDING_POINT})
VIDEO_TASKS = frozenset({TaskType.EGO_VIEW_MCQ, TaskType.EGO_VIEW_OPEN})

# De vier datasetfamilies en hun bronnen
TASK_FAMILY = {
    TaskType.VISUAL_GROUNDING_BOX: "visual-grounding",
    TaskType.VISUAL_GROUNDING_POINT: "visual-grounding",
    TaskType.EGO_VIEW_MCQ: "ego-view-reasoning",
    TaskType.EGO_VIEW_OPEN: "ego-view-reasoning",
    TaskType.PLANNING_QA: "robotic-manipulation-planning",
    TaskType.INDUSTRIAL_COT: "industrial-task-planning",
}

MAX_POINTS = 10
SCENE_TAGS = ("indoor", "outdoor", "unknown")


class VisualKind(Enum):
    IMAGE = "image"
    VIDEO = "video"


@dataclass(frozen=True)
class VisualInput:
    kind: VisualKind
    uri: str
    frame_count: int = 0
    key_frame_index: int | None = None

    def to_dict(self):
        data = {"kind": self.kind.value, "uri": self.uri, "frame_count": self.frame_count}
        if self.key_frame_index is not None:
            data["key_frame_index"] = self.key_frame_index
        return data


@dataclass(frozen=True)
class FreeText:
    answer_set: tuple

    variant = "free_text"

    def to_dict(self):
        return {"variant": self.variant, "answer_set": list(self.answer_set)}


@dataclass(frozen=True)
class OptionLetter:
    letter: str
    options: tuple

    variant = "option_letter"

    def to_dict(self):
        return {"variant": self.variant, "letter": self.letter, "options": list(self.options)}


@dataclass(frozen=True)
class BoxSet:
    boxes: tuple  # ((x0, y0, x1, y1), ...)

    variant = "box_set"

    def to_dict(self):
        return {"variant": self.variant, "boxes": [list(b) for b in self.boxes]}


@dataclass(frozen=True)
class PointSet:
    points: tuple  # ((x, y), ...)

    variant = "point_set"

    def to_dict(self):
        return {"variant": self.variant, "points": [list(p) for p in self.points]}


TARGET_FOR_TASK = {
    TaskType.VISUAL_GROUNDING_BOX: BoxSet,
    TaskType.VISUAL_GROUNDING_POINT: PointSet,
    TaskType.EGO_VIEW_MCQ: OptionLetter,
    TaskType.EGO_VIEW_OPEN: FreeText,
    TaskType.PLANNING_QA: FreeText,
    TaskType.INDUSTRIAL_COT: FreeText,
}


@dataclass(frozen=True)
class Sample:
    id: str
    task: TaskType
    visual: VisualInput
    instruction: str
    target: object
    source_dataset: str
    scene_tag: str | None = None

    def to_dict(self):
        data = {
            "id": self.id,
            "task": self.task.value,
            "visual": self.visual.to_dict(),
            "instruction": self.instruction,
            "target": self.target.to_dict(),
            "source_dataset": self.source_dataset,
        }
        if self.scene_tag is not None:
            data["scene_tag"] = self.scene_tag
        return data

    def to_json(self):
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))


def letter_index(letter):
    """A -> 0, B -> 1, ..."""
    return ord(letter) - ord("A")


def index_letter(index):
    return chr(ord("A") + index)


def attach_key_frame(visual):
    """Zet de key frame op het laatste frame van een video; idempotent.

    Raises: DataError(KIND_MISMATCH) voor afbeeldingen.
    """
    if visual.kind is not VisualKind.VIDEO:
        raise DataError("KIND_MISMATCH", "key frame alleen voor video", uri=visual.uri)
    if visual.frame_count < 1:
        raise DataError("SCHEMA_VIOLATION", "video zonder frames", path="visual.frame_count")
    return replace(visual, key_frame_index=visual.frame_count - 1)


# --- Parsing ---

_SAMPLE_FIELDS = {"id", "task", "visual", "instruction", "target", "source_dataset", "scene_tag"}
_VISUAL_FIELDS = {"kind", "uri", "frame_count", "key_frame_index"}
_TARGET_FIELDS = {
    "free_text": {"variant", "answer_set"},
    "option_letter": {"variant", "letter", "options"},
    "box_set": {"variant", "boxes"},
    "point_set": {"variant", "points"},
}


def _violation(path, message):
    return DataError("SCHEMA_VIOLATION", message, path=path)


def _check_fields(obj, allowed, path, lenient):
    if not isinstance(obj, dict):
        raise _violation(path or "$", "object verwacht")
    if lenient:
        return
    unknown = sorted(set(obj) - allowed)
    if unknown:
        prefix = f"{path}." if path else ""
        raise _violation(prefix + unknown[0], f"onbekend veld: {unknown[0]}")


def _require(obj, key, kind, path):
    if key not in obj or obj[key] is None:
        raise _violation(path, "verplicht veld ontbreekt")
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise _violation(path, "geheel getal verwacht")
    if not isinstance(value, kind):
        raise _violation(path, f"{kind.__name__} verwacht")
    return value


def _coords(values, size, path):
    if not isinstance(values, list):
        raise _violation(path, "lijst verwacht")
    result = []
    for i, item in enumerate(values):
        if (not isinstance(item, list) or len(item) != size
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in item)):
            raise _violation(f"{path}[{i}]", f"lijst van {size} getallen verwacht")
        result.append(tuple(float(v) for v in item))
    return tuple(result)


def visual_from_dict(data, lenient=False):
    _check_fields(data, _VISUAL_FIELDS, "visual", lenient)
    kind_text = _require(data, "kind", str, "visual.kind")
    try:
        kind = VisualKind(kind_text)
    except ValueError:
        raise _violation("visual.kind", f"onbekend kind: {kind_text!r}")
    uri = _require(data, "uri", str, "visual.uri")
    frame_count = data.get("frame_count", 0)
    if not isinstance(frame_count, int) or isinstance(frame_count, bool) or frame_count < 0:
        raise _violation("visual.frame_count", "niet-negatief geheel getal verwacht")
    key_frame = data.get("key_frame_index")
    if key_frame is not None and (not isinstance(key_frame, int) or isinstance(key_frame, bool)
                                  or key_frame < 0):
        raise _violation("visual.key_frame_index", "niet-negatief geheel getal verwacht")
    return VisualInput(kind=kind, uri=uri, frame_count=frame_count, key_frame_index=key_frame)


def target_from_dict(data, lenient=False):
    if not isinstance(data, dict):
        raise _violation("target", "object verwacht")
    variant = data.get("variant")
    if variant not in _TARGET_FIELDS:
        raise _violation("target.variant", f"onbekende variant: {variant!r}")
    _check_fields(data, _TARGET_FIELDS[variant], "target", lenient)
    if variant == "free_text":
        answers = _require(data, "answer_set", list, "target.answer_set")
        if not all(isinstance(a, str) for a in answers):
            raise _violation("target.answer_set", "lijst van strings verwacht")
        return FreeText(answer_set=tuple(answers))
    if variant == "option_letter":
        letter = _require(data, "letter", str, "target.letter")
        options = _require(data, "options", list, "target.options")
        if not all(isinstance(o, str) for o in options):
            raise _violation("target.options", "lijst van strings verwacht")
        return OptionLetter(letter=letter, options=tuple(options))
    if variant == "box_set":
        return BoxSet(boxes=_coords(_require(data, "boxes", list, "target.boxes"), 4, "target.boxes"))
    return PointSet(points=_coords(_require(data, "points", list, "target.points"), 2, "target.points"))


def sample_from_dict(data, lenient=False):
    """Bouw een Sample uit een dict. Raises: DataError(SCHEMA_VIOLATION)."""
    _check_fields(data, _SAMPLE_FIELDS, "", lenient)
    scene_tag = data.get("scene_tag")
    if scene_tag is not None and not isinstance(scene_tag, str):
        raise _violation("scene_tag", "string verwacht")
    return Sample(
        id=_require(data, "id", str, "id"),
        task=TaskType.parse(_require(data, "task", str, "task")),
        visual=visual_from_dict(_require(data, "visual", dict, "visual"), lenient),
        instruction=_require(data, "instruction", str, "instruction"),
        target=target_from_dict(_require(data, "target", dict, "target"), lenient),
        source_dataset=_require(data, "source_dataset", str, "source_dataset"),
        scene_tag=scene_tag,
    )


def sample_from_json(text, lenient=False):
    """Parse één JSONL-regel (str of bytes).

    Raises: DataError(MALFORMED_TEXT) bij ongeldige UTF-8 of afgebroken JSON,
            DataError(SCHEMA_VIOLATION) bij schemafouten.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataError("MALFORMED_TEXT", f"geen geldige UTF-8: {e.reason}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError("MALFORMED_TEXT", f"onvolledige of ongeldige JSON: {e.msg}")
    return sample_from_dict(data, lenient=lenient)
