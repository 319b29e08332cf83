import json
import os

import pytest

from checkpoints import BOUNDARIES, checkpoint_name, list_checkpoints, load_checkpoint, select_latest
from conftest import make_run_config
from errors import DataError, SimulatedCrash
from orchestrator import (
    ALERTS_LOG, RUN_METADATA, SUMMARY_FILE, TRACE_LOG, Orchestrator, kill_test, resume, run,
)
from trainer import build_trainer


def run_once(config, data_dir, out_dir, resume=False, **options):
    return run(config, build_trainer(config), data_dir, str(out_dir), resume=resume, **options)


def trace(out_dir):
    return (out_dir / TRACE_LOG).read_bytes()


def test_runs_are_reproducible(dataset_dir, tmp_path):
    config = make_run_config()
    a = run_once(config, dataset_dir, tmp_path / "a")
    b = run_once(config, dataset_dir, tmp_path / "b")
    assert a.to_dict() == b.to_dict()
    assert trace(tmp_path / "a") == trace(tmp_path / "b")
    assert a.steps == 300
    assert sum(a.draws_per_task.values()) == 300
    assert a.samples_consumed == 1200
    assert a.sampler_updates == 6
    assert a.checkpoints_written == [100, 200, 300]


def test_run_writes_metadata_and_summary(dataset_dir, tmp_path):
    config = make_run_config()
    summary = run_once(config, dataset_dir, tmp_path)
    with open(tmp_path / RUN_METADATA, encoding="utf-8") as f:
        metadata = json.load(f)
    assert metadata["config_hash"] == config.config_hash()
    assert metadata["design_defaults"]["resume_tie_break"] == "periodic-over-emergency"
    with open(tmp_path / SUMMARY_FILE, encoding="utf-8") as f:
        assert json.load(f) == summary.to_dict()
    assert len(trace(tmp_path).splitlines()) == 300


def test_different_seed_gives_different_trace(dataset_dir, tmp_path):
    run_once(make_run_config(seed=5), dataset_dir, tmp_path / "a")
    run_once(make_run_config(seed=6), dataset_dir, tmp_path / "b")
    assert trace(tmp_path / "a") != trace(tmp_path / "b")


def test_crash_and_resume_matches_uninterrupted_run(dataset_dir, tmp_path):
    config = make_run_config()
    reference = run_once(config, dataset_dir, tmp_path / "ref")

    with pytest.raises(SimulatedCrash):
        run_once(config, dataset_dir, tmp_path / "run", crash_at_step=157)
    state = resume(str(tmp_path / "run"), config, build_trainer(config), dataset_dir)
    assert state.step == 100

    resumed = run_once(config, dataset_dir, tmp_path / "run", resume=True)
    assert resumed.to_dict() == reference.to_dict()
    assert trace(tmp_path / "run") == trace(tmp_path / "ref")


def test_kill_test_with_many_kills(dataset_dir, tmp_path):
    config = make_run_config(total_steps=10_000, checkpoint_interval=100, validation_interval=250)
    kills = [1000] + [k * 487 + 13 for k in range(1, 21)]
    result = kill_test(config, dataset_dir, str(tmp_path), kills)
    assert len(result["kills"]) == 21
    assert result["traces_equal"] and result["losses_equal"] and result["summaries_equal"]
    assert result["reprocessed_bound"] == 400
    assert result["max_reprocessed_samples"] == 400
    assert result["passed"]
    by_step = {k["step"]: k for k in result["kills"]}
    assert by_step[1000]["restored_step"] == 900
    assert by_step[500]["restored_step"] == 400


class CrashOnSecondCheckpoint:
    def __init__(self, boundary):
        self.boundary = boundary
        self.checkpoints = 0

    def __call__(self, name):
        if name == "begin":
            self.checkpoints += 1
        if self.checkpoints == 2 and name == self.boundary:
            raise SimulatedCrash(name)


@pytest.mark.parametrize("boundary", BOUNDARIES)
def test_crash_inside_checkpoint_write_resumes_cleanly(dataset_dir, tmp_path, boundary):
    config = make_run_config()
    reference = run_once(config, dataset_dir, tmp_path / "ref")
    with pytest.raises(SimulatedCrash):
        run_once(config, dataset_dir, tmp_path / "run", fault_hook=CrashOnSecondCheckpoint(boundary))

    latest = load_checkpoint(select_latest(str(tmp_path / "run")))
    assert latest.step == (200 if boundary == "after:COMPLETE" else 100)

    resumed = run_once(config, dataset_dir, tmp_path / "run", resume=True)
    assert resumed.to_dict() == reference.to_dict()
    assert trace(tmp_path / "run") == trace(tmp_path / "ref")


def test_trainer_failure_writes_emergency_checkpoint(dataset_dir, tmp_path):
    config = make_run_config(trainer={"fail_at_step": 150})
    with pytest.raises(DataError) as exc:
        run_once(config, dataset_dir, tmp_path)
    assert exc.value.code == "TRAINER_FAILURE"
    assert exc.value.details["step"] == 150
    emergency = tmp_path / checkpoint_name(149, "emergency")
    assert exc.value.details["emergency"] == str(emergency)
    assert load_checkpoint(str(emergency)).step == 149
    assert select_latest(str(tmp_path)) == str(emergency)


def test_config_change_in_existing_run_dir_is_refused(dataset_dir, tmp_path):
    run_once(make_run_config(total_steps=100), dataset_dir, tmp_path)
    with pytest.raises(DataError) as exc:
        run_once(make_run_config(total_steps=100, seed=9), dataset_dir, tmp_path, resume=True)
    assert exc.value.code == "RUN_DIR_MISMATCH"


def test_resume_without_checkpoint(dataset_dir, tmp_path):
    with pytest.raises(DataError) as exc:
        run_once(make_run_config(), dataset_dir, tmp_path, resume=True)
    assert exc.value.code == "NO_CONSISTENT_CHECKPOINT"


def test_fresh_run_replaces_stale_checkpoints(dataset_dir, tmp_path):
    config = make_run_config(total_steps=200)
    run_once(config, dataset_dir, tmp_path)
    with pytest.raises(SimulatedCrash):
        run_once(config, dataset_dir, tmp_path, crash_at_step=50)
    assert list_checkpoints(str(tmp_path)) == []


def test_final_checkpoint_at_total_steps(dataset_dir, tmp_path):
    summary = run_once(make_run_config(total_steps=250), dataset_dir, tmp_path)
    assert summary.checkpoints_written == [100, 200, 250]
    assert [c[0] for c in list_checkpoints(str(tmp_path))] == [100, 200, 250]


def test_retention_during_run(dataset_dir, tmp_path):
    config = make_run_config(total_steps=600, retention={"keep_last": 2, "keep_every": 300})
    summary = run_once(config, dataset_dir, tmp_path)
    assert summary.checkpoints_written == [100, 200, 300, 400, 500, 600]
    assert [c[0] for c in list_checkpoints(str(tmp_path))] == [300, 500, 600]


def test_stage_two_warm_starts_from_stage_one(dataset_dir, tmp_path):
    stage_one = run_once(make_run_config(total_steps=200), dataset_dir, tmp_path / "s1")
    source = select_latest(str(tmp_path / "s1"))
    config = make_run_config(total_steps=100, stage=2, tasks=["industrial-cot"], init_from=source,
                             sampler={"w_max": 1.0})
    summary = run_once(config, dataset_dir, tmp_path / "s2")

    assert summary.stage == 2
    assert summary.draws_per_task == {"industrial-cot": 100}
    assert summary.weights == {"industrial-cot": 1.0}
    model = load_checkpoint(select_latest(str(tmp_path / "s2"))).json_blob("model.bin")
    assert model["warm_start"]
    assert model["seen"]["industrial-cot"] == (
        stage_one.draws_per_task["industrial-cot"] * 4 + 400)


def test_utilization_dip_raises_alert(dataset_dir, tmp_path):
    config = make_run_config(trainer={"utilization_dips": [[120, 130, 0.1]]})
    summary = run_once(config, dataset_dir, tmp_path)
    drops = [a for a in summary.alerts if a["kind"] == "UTILIZATION_DROP"]
    assert [(a["start_step"], a["end_step"]) for a in drops] == [(120, 130)]
    lines = (tmp_path / ALERTS_LOG).read_text(encoding="utf-8").splitlines()
    assert any(json.loads(line)["kind"] == "UTILIZATION_DROP" for line in lines)


def test_orchestrator_exposes_state_after_run(dataset_dir, tmp_path):
    config = make_run_config(total_steps=60)
    orchestrator = Orchestrator(config, build_trainer(config), dataset_dir, str(tmp_path))
    summary = orchestrator.run()
    assert orchestrator.state.step == 60
    assert summary.trace_digest == orchestrator.summary().trace_digest
    assert os.path.isdir(tmp_path / checkpoint_name(60))


def test_checkpoint_every_ten_steps(dataset_dir, tmp_path):
    config = make_run_config(total_steps=100, checkpoint_interval=10, validation_interval=10,
                             retention={"keep_last": 10})
    summary = run_once(config, dataset_dir, tmp_path)
    assert summary.checkpoints_written == list(range(10, 101, 10))
    assert len(list_checkpoints(str(tmp_path))) == 10


def test_noise_free_losses_decay(dataset_dir, tmp_path):
    curves = {task: {"base_loss": 2.0, "decay": 0.01, "noise": 0.0}
              for task in ("visual-grounding-box", "visual-grounding-point", "ego-view-mcq",
                           "ego-view-open", "planning-qa", "industrial-cot")}
    summary = run_once(make_run_config(trainer={"curves": curves}), dataset_dir, tmp_path)
    assert summary.final_losses
    assert all(loss < 2.0 for loss in summary.final_losses.values())


def test_final_checkpoints_are_byte_identical(dataset_dir, tmp_path):
    config = make_run_config(total_steps=200)
    run_once(config, dataset_dir, tmp_path / "a")
    run_once(config, dataset_dir, tmp_path / "b")
    name = checkpoint_name(200)
    for file in ("manifest.json", "model.bin", "optimizer.bin", "sampler.json", "cursor.json",
                 "monitor.json"):
        assert (tmp_path / "a" / name / file).read_bytes() == \
            (tmp_path / "b" / name / file).read_bytes()


def test_resume_skips_corrupted_checkpoint(dataset_dir, tmp_path):
    config = make_run_config(total_steps=50, checkpoint_interval=10, validation_interval=10,
                             retention={"keep_last": 5})
    run_once(config, dataset_dir, tmp_path)
    with open(tmp_path / checkpoint_name(50) / "model.bin", "r+b") as f:
        f.write(b"#")
    state = resume(str(tmp_path), config, build_trainer(config), dataset_dir)
    assert state.step == 40


def test_long_run_draws_follow_weights(dataset_dir, tmp_path):
    # Zonder validatie-updates blijven de gewichten uniform
    config = make_run_config(total_steps=3000, validation_interval=5000, checkpoint_interval=1000)
    summary = run_once(config, dataset_dir, tmp_path)
    n = summary.steps
    for task, draws in summary.draws_per_task.items():
        w = summary.weights[task]
        assert abs(draws / n - w) <= 4 * (w * (1 - w) / n) ** 0.5
