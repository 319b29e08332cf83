"""Gedeelde fixtures; app/ staat op sys.path zoals in de container."""
import os
import sys

# Vóór de imports: config leest deze bij het laden
os.environ["PLANFORGE_FSYNC"] = "0"
os.environ["DATABASE_URL"] = ""
os.environ.setdefault("PLANFORGE_MEMORY_SAMPLE_SECONDS", "0")

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
APP_DIR = os.path.join(ROOT, "app")
FIXTURES_DIR = os.path.join(ROOT, "fixtures")
if APP_DIR not in sys.path:
    sys.path.insert(0, APP_DIR)

import pytest  # noqa: E402

from config import run_config_from_dict  # noqa: E402
from ingest import generate_synthetic_corpus  # noqa: E402
from schema import (  # noqa: E402
    BoxSet, FreeText, OptionLetter, PointSet, Sample, TaskType, VisualInput, VisualKind,
    attach_key_frame,
)
from shardstore import write_task_shards  # noqa: E402


@pytest.fixture
def fixtures_dir():
    return FIXTURES_DIR


def image(uri="img://1.jpg"):
    return VisualInput(kind=VisualKind.IMAGE, uri=uri)


def video(frames=8, uri="vid://1.mp4"):
    return attach_key_frame(VisualInput(kind=VisualKind.VIDEO, uri=uri, frame_count=frames))


def make_sample(task=TaskType.PLANNING_QA, sid="s-1", **overrides):
    """Geldig sample per taak, met optionele overrides."""
    defaults = {
        TaskType.VISUAL_GROUNDING_BOX: dict(visual=image(), target=BoxSet(((0.1, 0.1, 0.5, 0.5),)),
                                            scene_tag="indoor"),
        TaskType.VISUAL_GROUNDING_POINT: dict(visual=image(), target=PointSet(((0.2, 0.3),)),
                                              scene_tag="indoor"),
        TaskType.EGO_VIEW_MCQ: dict(visual=video(), target=OptionLetter(
            "B", ("open the fridge", "pour the milk", "close the door", "sit down"))),
        TaskType.EGO_VIEW_OPEN: dict(visual=video(), target=FreeText(("pour the milk",))),
        TaskType.PLANNING_QA: dict(visual=image(), target=FreeText(("pick up the cup",))),
        TaskType.INDUSTRIAL_COT: dict(visual=video(), target=FreeText(("Step 1: a\nPlan: a",))),
    }[task]
    fields = dict(id=sid, task=task, instruction="What next?", source_dataset="unit-test")
    fields.update(defaults)
    fields.update(overrides)
    return Sample(**fields)


SMALL_COUNTS = {
    TaskType.VISUAL_GROUNDING_BOX: 30,
    TaskType.VISUAL_GROUNDING_POINT: 30,
    TaskType.EGO_VIEW_MCQ: 20,
    TaskType.EGO_VIEW_OPEN: 20,
    TaskType.PLANNING_QA: 25,
    TaskType.INDUSTRIAL_COT: 15,
}


def build_dataset(out_dir, counts=None, seed=3, shard_size=7):
    """Synthetisch corpus als per-taak shards; geeft de map terug."""
    samples, _ = generate_synthetic_corpus(counts or SMALL_COUNTS, seed)
    write_task_shards(samples, shard_size, str(out_dir), seed=seed)
    return str(out_dir)


def make_run_config(**overrides):
    data = {
        "total_steps": 300,
        "batch_size": 4,
        "checkpoint_interval": 100,
        "validation_interval": 50,
        "seed": 5,
        "sampler": {"w_min": 0.05, "w_max": 0.6},
        "retention": {"keep_last": 3},
        "trainer": {"kind": "simulated"},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return run_config_from_dict(data)


@pytest.fixture
def dataset_dir(tmp_path):
    return build_dataset(tmp_path / "data")
