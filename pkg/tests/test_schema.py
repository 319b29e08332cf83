import json

import pytest

from conftest import image, make_sample, video
from errors import DataError
from schema import (
    TASK_FAMILY, BoxSet, OptionLetter, PointSet, TaskType, VisualInput, VisualKind,
    attach_key_frame, sample_from_json,
)
from validators import validate_sample


def test_attach_key_frame_points_at_last_frame():
    v = attach_key_frame(VisualInput(kind=VisualKind.VIDEO, uri="v.mp4", frame_count=16))
    assert v.key_frame_index == 15
    assert attach_key_frame(v) == v


def test_attach_key_frame_rejects_images():
    with pytest.raises(DataError) as exc:
        attach_key_frame(image())
    assert exc.value.code == "KIND_MISMATCH"


@pytest.mark.parametrize("task", list(TaskType))
def test_default_samples_are_valid(task):
    is_valid, violations = validate_sample(make_sample(task))
    assert is_valid, violations


def test_video_tasks_require_video():
    _, violations = validate_sample(make_sample(TaskType.EGO_VIEW_OPEN, visual=image()))
    assert "VIDEO_REQUIRED" in violations


def test_key_frame_must_be_last():
    bad = VisualInput(kind=VisualKind.VIDEO, uri="v.mp4", frame_count=8, key_frame_index=3)
    _, violations = validate_sample(make_sample(TaskType.EGO_VIEW_OPEN, visual=bad))
    assert violations == ["KEYFRAME_NOT_LAST"]


def test_key_frame_on_image_is_rejected():
    bad = VisualInput(kind=VisualKind.IMAGE, uri="i.jpg", key_frame_index=0)
    _, violations = validate_sample(make_sample(TaskType.PLANNING_QA, visual=bad))
    assert "KEYFRAME_ON_IMAGE" in violations


def test_point_count_boundaries():
    ten = PointSet(tuple((0.1 * i, 0.5) for i in range(10)))
    eleven = PointSet(tuple((0.05 * i, 0.5) for i in range(11)))
    assert validate_sample(make_sample(TaskType.VISUAL_GROUNDING_POINT, target=ten))[0]
    _, violations = validate_sample(make_sample(TaskType.VISUAL_GROUNDING_POINT, target=eleven))
    assert violations == ["POINT_COUNT"]


def test_box_order_and_range():
    _, violations = validate_sample(make_sample(TaskType.VISUAL_GROUNDING_BOX,
                                                target=BoxSet(((0.5, 0.1, 0.2, 0.4),))))
    assert violations == ["BOX_ORDER"]
    _, violations = validate_sample(make_sample(TaskType.VISUAL_GROUNDING_BOX,
                                                target=BoxSet(((0.1, 0.1, 1.2, 0.4),))))
    assert "COORD_RANGE" in violations


def test_letter_must_index_an_option():
    target = OptionLetter("E", ("a", "b", "c", "d"))
    _, violations = validate_sample(make_sample(TaskType.EGO_VIEW_MCQ, target=target))
    assert violations == ["LETTER_RANGE"]
    target = OptionLetter("b", ("a", "b", "c", "d"))
    _, violations = validate_sample(make_sample(TaskType.EGO_VIEW_MCQ, target=target))
    assert violations == ["LETTER_FORMAT"]


def test_target_must_match_task():
    _, violations = validate_sample(make_sample(TaskType.PLANNING_QA,
                                                target=PointSet(((0.1, 0.1),))))
    assert violations == ["TARGET_MISMATCH"]


def test_empty_fields_and_scene_tag():
    _, violations = validate_sample(make_sample(sid="", instruction="  "))
    assert violations == ["ID_EMPTY", "INSTRUCTION_EMPTY"]
    _, violations = validate_sample(make_sample(TaskType.VISUAL_GROUNDING_BOX,
                                                scene_tag="underwater"))
    assert violations == ["SCENE_TAG_INVALID"]


def test_json_encoding_is_compact_and_omits_absent_scene():
    sample = make_sample(TaskType.EGO_VIEW_OPEN)
    text = sample.to_json()
    assert ", " not in text and "scene_tag" not in text
    assert list(json.loads(text)) == ["id", "task", "visual", "instruction", "target",
                                      "source_dataset"]
    assert sample_from_json(text) == sample


def test_strict_mode_rejects_unknown_fields():
    data = make_sample().to_dict()
    data["extra"] = 1
    with pytest.raises(DataError) as exc:
        sample_from_json(json.dumps(data))
    assert exc.value.code == "SCHEMA_VIOLATION"
    assert exc.value.details["path"] == "extra"
    assert sample_from_json(json.dumps(data), lenient=True) == make_sample()


def test_null_scene_tag_is_accepted():
    data = make_sample().to_dict()
    data["scene_tag"] = None
    assert sample_from_json(json.dumps(data)).scene_tag is None


def test_missing_field_reports_path():
    data = make_sample().to_dict()
    del data["target"]["answer_set"]
    with pytest.raises(DataError) as exc:
        sample_from_json(json.dumps(data))
    assert exc.value.details["path"] == "target.answer_set"


def test_malformed_text():
    with pytest.raises(DataError) as exc:
        sample_from_json('{"id": "x", "task"')
    assert exc.value.code == "MALFORMED_TEXT"
    with pytest.raises(DataError) as exc:
        sample_from_json(b"\xff\xfe{}")
    assert exc.value.code == "MALFORMED_TEXT"


def test_unknown_task_is_a_schema_violation():
    data = make_sample().to_dict()
    data["task"] = "Planning-QA"
    with pytest.raises(DataError) as exc:
        sample_from_json(json.dumps(data))
    assert exc.value.code == "SCHEMA_VIOLATION"


def test_task_families_cover_every_task():
    assert set(TASK_FAMILY) == set(TaskType)
    assert TASK_FAMILY[TaskType.INDUSTRIAL_COT] == "industrial-task-planning"


def test_video_helper_builds_valid_video():
    assert video(4).key_frame_index == 3
