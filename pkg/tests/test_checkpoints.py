import os

import pytest

from checkpoints import (
    BOUNDARIES, CHECKPOINT_FILES, COMPLETE, EMERGENCY, apply_retention, checkpoint_name,
    list_checkpoints, load_checkpoint, select_latest, verify_checkpoint, write_checkpoint,
)
from errors import DataError, SimulatedCrash


def payloads(step):
    return {name: f"{name}@{step}:".encode("utf-8") * 40 for name in CHECKPOINT_FILES}


def write(run_dir, step, kind="periodic", fault_hook=None):
    return write_checkpoint(str(run_dir), step, payloads(step), {"config_hash": "abc"},
                            kind=kind, fault_hook=fault_hook)


def crash_at(boundary):
    def hook(name):
        if name == boundary:
            raise SimulatedCrash(name)
    return hook


def test_write_verify_and_load(tmp_path):
    path = write(tmp_path, 100)
    assert os.path.basename(path) == checkpoint_name(100) == "ckpt-000000100"
    assert verify_checkpoint(path) == (True, [])
    ckpt = load_checkpoint(path)
    assert ckpt.step == 100 and ckpt.kind == "periodic"
    assert ckpt.blobs == payloads(100)
    assert ckpt.manifest["config_hash"] == "abc"
    assert not any(n.startswith(".tmp-") for n in os.listdir(tmp_path))


def test_tampered_file_is_detected(tmp_path):
    write(tmp_path, 100)
    path = write(tmp_path, 200)
    with open(os.path.join(path, "sampler.json"), "ab") as f:
        f.write(b"x")
    is_consistent, problems = verify_checkpoint(path)
    assert not is_consistent
    assert problems == ["sampler.json hash klopt niet"]
    assert select_latest(str(tmp_path)).endswith(checkpoint_name(100))
    with pytest.raises(DataError) as exc:
        load_checkpoint(path)
    assert exc.value.code == "NO_CONSISTENT_CHECKPOINT"


@pytest.mark.parametrize("boundary", BOUNDARIES)
def test_crash_at_every_boundary_leaves_a_consistent_checkpoint(tmp_path, boundary):
    write(tmp_path, 100)
    with pytest.raises(SimulatedCrash):
        write(tmp_path, 200, fault_hook=crash_at(boundary))

    for _, _, path in list_checkpoints(str(tmp_path)):
        if os.path.exists(os.path.join(path, COMPLETE)):
            assert verify_checkpoint(path)[0]

    expected = 200 if boundary == f"after:{COMPLETE}" else 100
    assert select_latest(str(tmp_path)).endswith(checkpoint_name(expected))


def test_rewrite_after_crash_replaces_partial_checkpoint(tmp_path):
    with pytest.raises(SimulatedCrash):
        write(tmp_path, 100, fault_hook=crash_at(f"before:{COMPLETE}"))
    assert select_latest(str(tmp_path)) is None
    path = write(tmp_path, 100)
    assert verify_checkpoint(path)[0]


def test_periodic_wins_tie_with_emergency(tmp_path):
    write(tmp_path, 200, kind=EMERGENCY)
    write(tmp_path, 200)
    assert select_latest(str(tmp_path)).endswith(checkpoint_name(200))
    write(tmp_path, 250, kind=EMERGENCY)
    assert select_latest(str(tmp_path)).endswith("ckpt-000000250.emergency")


def test_no_checkpoint(tmp_path):
    assert select_latest(str(tmp_path)) is None
    assert select_latest(str(tmp_path / "missing")) is None


def test_retention_keeps_last_and_milestones(tmp_path):
    for step in range(100, 700, 100):
        write(tmp_path, step)
    write(tmp_path, 250, kind=EMERGENCY)
    os.makedirs(tmp_path / ".tmp-ckpt-000000700")

    removed = apply_retention(str(tmp_path), keep_last=2, keep_every=300)
    assert len(removed) == 5
    left = [(step, kind) for step, kind, _ in list_checkpoints(str(tmp_path))]
    assert left == [(300, "periodic"), (500, "periodic"), (600, "periodic")]
    assert not os.path.exists(tmp_path / ".tmp-ckpt-000000700")


def test_retention_never_removes_the_newest_consistent(tmp_path):
    write(tmp_path, 100)
    path = write(tmp_path, 200)
    os.remove(os.path.join(path, COMPLETE))
    apply_retention(str(tmp_path), keep_last=1)
    assert select_latest(str(tmp_path)).endswith(checkpoint_name(100))
