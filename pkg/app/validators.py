"""Validators voor planforge.

Validatie van samples en run-configuratie. Alle validators geven een
(is_valid, errors) tuple terug en raisen niet.
"""
import math
import re

from schema import (
    MAX_POINTS, SCENE_TAGS, TARGET_FOR_TASK, VIDEO_TASKS,
    BoxSet, FreeText, OptionLetter, PointSet, TaskType, VisualKind, letter_index,
)

_LETTER = re.compile(r"^[A-Z]$")


def _in_unit(value):
    return isinstance(value, float) and math.isfinite(value) and 0.0 <= value <= 1.0


def validate_visual(visual):
    """Controleer de VisualInput-invarianten; geeft een lijst violation codes."""
    violations = []
    if visual.kind is VisualKind.VIDEO:
        if visual.frame_count < 1:
            violations.append("FRAME_COUNT")
        if visual.key_frame_index is None:
            violations.append("KEYFRAME_MISSING")
        elif visual.key_frame_index != visual.frame_count - 1:
            violations.append("KEYFRAME_NOT_LAST")
    else:
        if visual.frame_count != 0:
            violations.append("FRAME_COUNT")
        if visual.key_frame_index is not None:
            violations.append("KEYFRAME_ON_IMAGE")
    return violations


def validate_target(target):
    violations = []
    if isinstance(target, FreeText):
        if not target.answer_set:
            violations.append("ANSWER_SET_EMPTY")
    elif isinstance(target, OptionLetter):
        if not _LETTER.match(target.letter or ""):
            violations.append("LETTER_FORMAT")
        elif letter_index(target.letter) >= len(target.options):
            violations.append("LETTER_RANGE")
    elif isinstance(target, BoxSet):
        for x0, y0, x1, y1 in target.boxes:
            if not all(_in_unit(float(v)) for v in (x0, y0, x1, y1)):
                violations.append("COORD_RANGE")
                break
        for x0, y0, x1, y1 in target.boxes:
            if not (x0 < x1 and y0 < y1):
                violations.append("BOX_ORDER")
                break
    elif isinstance(target, PointSet):
        if not 1 <= len(target.points) <= MAX_POINTS:
            violations.append("POINT_COUNT")
        if not all(_in_unit(float(v)) for p in target.points for v in p):
            violations.append("COORD_RANGE")
    return violations


def validate_sample(sample):
    """Valideer een Sample tegen alle schema-invarianten.

    Returns:
        (is_valid, violations) tuple; violations zijn stabiele codes.
    """
    violations = []

    if not sample.id:
        violations.append("ID_EMPTY")
    if not sample.instruction.strip():
        violations.append("INSTRUCTION_EMPTY")

    violations.extend(validate_visual(sample.visual))

    expected = TARGET_FOR_TASK[sample.task]
    if not isinstance(sample.target, expected):
        violations.append("TARGET_MISMATCH")
    else:
        violations.extend(validate_target(sample.target))

    if sample.task in VIDEO_TASKS and sample.visual.kind is not VisualKind.VIDEO:
        violations.append("VIDEO_REQUIRED")

    if sample.scene_tag is not None and sample.scene_tag not in SCENE_TAGS:
        violations.append("SCENE_TAG_INVALID")

    return (len(violations) == 0, violations)


def _positive_int(data, key, errors, required=True):
    if key not in data:
        if required:
            errors.append(f"{key} is verplicht")
        return
    value = data[key]
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        errors.append(f"{key} moet een positief geheel getal zijn")


def validate_run_config(data):
    """Valideer een run.json dict.

    Returns:
        (is_valid, errors) tuple
    """
    errors = []
    if not isinstance(data, dict):
        return (False, ["run config moet een JSON-object zijn"])

    for key in ("total_steps", "batch_size", "checkpoint_interval"):
        _positive_int(data, key, errors)
    _positive_int(data, "validation_interval", errors, required=False)

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append("seed moet 0 of een positief geheel getal zijn")

    if data.get("stage", 1) not in (1, 2):
        errors.append(f"Ongeldige stage: {data.get('stage')}")

    tasks = data.get("tasks", [])
    if not isinstance(tasks, list):
        errors.append("tasks moet een lijst zijn")
    else:
        known = {t.value for t in TaskType}
        for task in tasks:
            if task not in known:
                errors.append(f"Ongeldige task: {task}")

    sampler = data.get("sampler", {})
    w_min = sampler.get("w_min", 0.0)
    w_max = sampler.get("w_max", 1.0)
    if not (isinstance(w_min, (int, float)) and isinstance(w_max, (int, float))):
        errors.append("sampler w_min/w_max moeten getallen zijn")
    elif not 0.0 <= w_min <= w_max <= 1.0:
        errors.append("sampler bounds: 0 <= w_min <= w_max <= 1 vereist")
    smoothing = sampler.get("smoothing", 0.0)
    if not isinstance(smoothing, (int, float)) or not 0.0 <= smoothing < 1.0:
        errors.append("sampler smoothing moet in [0, 1) liggen")

    retention = data.get("retention", {})
    keep_last = retention.get("keep_last", 1)
    if not isinstance(keep_last, int) or keep_last < 1:
        errors.append("retention keep_last moet minimaal 1 zijn")
    keep_every = retention.get("keep_every", 0)
    if not isinstance(keep_every, int) or keep_every < 0:
        errors.append("retention keep_every moet 0 of positief zijn")

    trainer = data.get("trainer", {})
    if trainer.get("kind", "simulated") != "simulated":
        errors.append(f"Onbekend trainer kind: {trainer.get('kind')}")
    for task, curve in trainer.get("curves", {}).items():
        for key in ("base_loss", "decay", "noise"):
            value = curve.get(key, 0.0)
            if not isinstance(value, (int, float)) or value < 0:
                errors.append(f"trainer curve {task}.{key} moet >= 0 zijn")
    for dip in trainer.get("utilization_dips", []):
        if (not isinstance(dip, list) or len(dip) != 3
                or not 0.0 <= dip[2] <= 1.0 or dip[0] > dip[1]):
            errors.append(f"Ongeldige utilization dip: {dip}")
    fail_at = trainer.get("fail_at_step", 0)
    if not isinstance(fail_at, int) or isinstance(fail_at, bool) or fail_at < 0:
        errors.append("trainer fail_at_step moet 0 of positief zijn")

    monitor = data.get("monitor", {})
    for key in ("util_window", "util_consecutive"):
        value = monitor.get(key, 1)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            errors.append(f"monitor {key} moet minimaal 1 zijn")
    for key in ("drift_short_half_life", "drift_long_half_life", "drift_ratio", "util_delta"):
        value = monitor.get(key, 1.0)
        if not isinstance(value, (int, float)) or not value > 0:
            errors.append(f"monitor {key} moet positief zijn")

    return (len(errors) == 0, errors)
