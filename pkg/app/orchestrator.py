"""Training-loop orchestrator met periodieke checkpoints en hervatten.

Elke stap: taak trekken uit de sampler, een batch van die taak uit de eigen
cursor lezen, trainer.step aanroepen en de losses naar de monitor sturen.
Elke validation_interval stappen worden de samplergewichten bijgewerkt,
elke checkpoint_interval stappen wordt een checkpoint geschreven.
"""
import json
import os
import shutil
import time
from dataclasses import dataclass, field, replace

import registry
from checkpoints import (
    EMERGENCY, PERIODIC, apply_retention, list_checkpoints, load_checkpoint, select_latest,
    write_checkpoint,
)
from config import MEMORY_SAMPLE_SECONDS, SCHEMA_VERSION, TOOL_VERSION, design_defaults
from digest import FNV_OFFSET, canonical_json, fnv1a64, hex64
from errors import DataError, PlanforgeError, SimulatedCrash, UsageError
from logging_config import get_logger, log_context, update_log_context
from monitor import MetricEvent, Monitor
from rng import mix_seed
from sampler import draw, init, state_from_dict, update_weights
from scheduler import MemorySampler
from schema import TASK_ORDER, TaskType
from shardstore import Cursor, ShardReader, load_dataset, restore_cursor, serialize_cursor
from trainer import build_trainer

logger = get_logger(__name__)

RUN_METADATA = "run_metadata.json"
TRACE_LOG = "trace.jsonl"
METRICS_LOG = "metrics.jsonl"
ALERTS_LOG = "alerts.jsonl"
SUMMARY_FILE = "run_summary.json"

_SAMPLER_DOMAIN = 0x5A


@dataclass
class RunState:
    step: int
    sampler: object  # SamplerState
    cursors: dict  # TaskType -> Cursor
    draws_consumed: int = 0
    trace_digest: int = FNV_OFFSET
    last_losses: dict = field(default_factory=dict)
    validation_losses: dict = field(default_factory=dict)
    checkpoints_written: list = field(default_factory=list)

    def cursor_payload(self, manifests):
        return {
            "draws_consumed": self.draws_consumed,
            "trace_digest": hex64(self.trace_digest),
            "last_losses": dict(sorted(self.last_losses.items())),
            "validation_losses": dict(sorted(self.validation_losses.items())),
            "cursors": {t.value: serialize_cursor(c, manifests[t]).decode("utf-8")
                        for t, c in sorted(self.cursors.items(), key=lambda kv: kv[0].value)},
        }


@dataclass(frozen=True)
class RunSummary:
    stage: int
    steps: int
    final_losses: dict
    validation_losses: dict
    draws_per_task: dict
    samples_consumed: int
    checkpoints_written: list
    alerts: list
    weights: dict
    sampler_updates: int
    trace_digest: str
    config_hash: str
    manifest_hash: str

    def to_dict(self):
        return {
            "stage": self.stage,
            "steps": self.steps,
            "final_losses": self.final_losses,
            "validation_losses": self.validation_losses,
            "draws_per_task": self.draws_per_task,
            "samples_consumed": self.samples_consumed,
            "checkpoints_written": self.checkpoints_written,
            "alerts": self.alerts,
            "weights": self.weights,
            "sampler_updates": self.sampler_updates,
            "trace_digest": self.trace_digest,
            "config_hash": self.config_hash,
            "manifest_hash": self.manifest_hash,
        }


def build_run_metadata(config, dataset_hash, tasks):
    return {
        "config_hash": config.config_hash(),
        "manifest_hash": dataset_hash,
        "tool_version": TOOL_VERSION,
        "schema_version": SCHEMA_VERSION,
        "stage": config.stage,
        "tasks": [t.value for t in tasks],
        "init_from": config.init_from,
        "seeds": {"run": config.seed, "sampler": mix_seed(config.seed, _SAMPLER_DOMAIN)},
        "design_defaults": design_defaults(config),
        "config": config.to_dict(),
    }


def truncate_jsonl(path, max_step):
    """Houd alleen regels met step <= max_step (log terug naar een checkpoint)."""
    if not os.path.exists(path):
        return
    kept = []
    with open(path, "rb") as f:
        for line in f:
            try:
                record = json.loads(line)
            except ValueError:
                # Afgebroken laatste regel na een crash
                continue
            if record.get("step", 0) <= max_step:
                kept.append(line if line.endswith(b"\n") else line + b"\n")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.writelines(kept)
    os.replace(tmp, path)


class Orchestrator:
    """Eén run in één run-map.

    Args:
        config: RunConfig
        trainer: Trainer
        data_dir: map met dataset.json en per-taak shards
        out_dir: run-map
        fault_hook: callable(boundary) voor fault-injection in checkpoints
        crash_at_step: gooi SimulatedCrash na trainer.step op deze stap
    """

    def __init__(self, config, trainer, data_dir, out_dir, fault_hook=None, crash_at_step=None,
                 memory_interval=MEMORY_SAMPLE_SECONDS):
        self.config = config
        self.trainer = trainer
        self.out_dir = out_dir
        self.fault_hook = fault_hook
        self.crash_at_step = crash_at_step
        self.memory_interval = memory_interval

        datasets, self.dataset_hash = load_dataset(data_dir)
        if config.tasks:
            tasks = [TaskType.parse(t) for t in config.tasks]
        else:
            tasks = [t for t in TASK_ORDER if t in datasets]
        for task in tasks:
            if task not in datasets or datasets[task][1].total_records == 0:
                raise UsageError("INVALID_CONFIG", f"geen data voor taak {task.value}",
                                 task=task.value)
        self.tasks = tuple(t for t in TASK_ORDER if t in tasks)
        self.manifests = {t: datasets[t][1] for t in self.tasks}
        self.readers = {t: ShardReader(datasets[t][0], datasets[t][1]) for t in self.tasks}

        self.metadata = build_run_metadata(config, self.dataset_hash, self.tasks)
        self.monitor = Monitor(config.monitor, sink=self._write_metric)
        self.state = None
        self.run_id = None
        self._metrics_file = None
        self._trace_file = None
        self._started = time.monotonic()

    # --- run-map ---

    def _path(self, name):
        return os.path.join(self.out_dir, name)

    def _check_run_dir(self):
        path = self._path(RUN_METADATA)
        if not os.path.exists(path):
            return
        with open(path, "r", encoding="utf-8") as f:
            existing = json.load(f)
        for key in ("config_hash", "manifest_hash"):
            if existing.get(key) != self.metadata[key]:
                raise DataError("RUN_DIR_MISMATCH", f"{key} wijkt af van de bestaande run",
                                path=self.out_dir, expected=existing.get(key),
                                actual=self.metadata[key])

    def _write_metadata(self):
        with open(self._path(RUN_METADATA), "w", encoding="utf-8") as f:
            json.dump(self.metadata, f, indent=2, sort_keys=True)
            f.write("\n")

    def _write_metric(self, event):
        if self._metrics_file:
            self._metrics_file.write(canonical_json(event.to_dict()) + "\n")

    def _write_alerts(self):
        with open(self._path(ALERTS_LOG), "w", encoding="utf-8") as f:
            for alert in self.monitor.alerts:
                f.write(canonical_json(alert.to_dict()) + "\n")

    # --- staat ---

    def fresh_state(self):
        sampler = init(self.tasks, self.config.w_min, self.config.w_max,
                       seed=mix_seed(self.config.seed, _SAMPLER_DOMAIN),
                       smoothing=self.config.smoothing)
        if self.config.init_from:
            source = load_checkpoint(self.config.init_from)
            self.trainer.warm_start(source.blobs["model.bin"])
            logger.info("Warm start vanuit checkpoint",
                        extra={"init_from": self.config.init_from, "source_step": source.step})
        return RunState(step=0, sampler=sampler, cursors={t: Cursor() for t in self.tasks})

    def resume(self):
        """Herstel de staat uit de hoogste consistente checkpoint.

        Raises: DataError(NO_CONSISTENT_CHECKPOINT | RUN_DIR_MISMATCH)
        """
        path = select_latest(self.out_dir)
        if path is None:
            raise DataError("NO_CONSISTENT_CHECKPOINT", "geen consistente checkpoint gevonden",
                            path=self.out_dir)
        ckpt = load_checkpoint(path)
        for key in ("config_hash", "manifest_hash"):
            if ckpt.manifest.get(key) != self.metadata[key]:
                raise DataError("RUN_DIR_MISMATCH", f"checkpoint {key} wijkt af", path=path)

        self.trainer.restore(ckpt.blobs["model.bin"], ckpt.blobs["optimizer.bin"])
        cursor_data = ckpt.json_blob("cursor.json")
        cursors = {}
        for task in self.tasks:
            raw = cursor_data["cursors"].get(task.value)
            if raw is None:
                raise DataError("CURSOR_MANIFEST_MISMATCH", f"geen cursor voor {task.value}")
            cursors[task] = restore_cursor(raw.encode("utf-8"), self.manifests[task])
        self.monitor.restore(ckpt.json_blob("monitor.json"))

        state = RunState(
            step=ckpt.step,
            sampler=state_from_dict(ckpt.json_blob("sampler.json")),
            cursors=cursors,
            draws_consumed=int(cursor_data["draws_consumed"]),
            trace_digest=int(cursor_data["trace_digest"], 16),
            last_losses={k: float(v) for k, v in cursor_data["last_losses"].items()},
            validation_losses={k: float(v) for k, v in cursor_data["validation_losses"].items()},
            checkpoints_written=list(ckpt.manifest.get("checkpoints_written", [])),
        )
        for name in (TRACE_LOG, METRICS_LOG):
            truncate_jsonl(self._path(name), ckpt.step)
        logger.info("Run hervat", extra={"step": ckpt.step, "kind": ckpt.kind, "path": path})
        return state

    def checkpoint(self, state, kind=PERIODIC):
        """Schrijf de volledige runstaat als checkpoint."""
        model_blob, optimizer_blob = self.trainer.snapshot()
        written = list(state.checkpoints_written)
        if kind == PERIODIC:
            written.append(state.step)
        payloads = {
            "model.bin": model_blob,
            "optimizer.bin": optimizer_blob,
            "sampler.json": canonical_json(state.sampler.to_dict()).encode("utf-8"),
            "cursor.json": canonical_json(state.cursor_payload(self.manifests)).encode("utf-8"),
            "monitor.json": canonical_json(self.monitor.snapshot()).encode("utf-8"),
        }
        meta = {
            "config_hash": self.metadata["config_hash"],
            "manifest_hash": self.metadata["manifest_hash"],
            "tool_version": TOOL_VERSION,
            "checkpoints_written": written,
        }
        path = write_checkpoint(self.out_dir, state.step, payloads, meta, kind=kind,
                                fault_hook=self.fault_hook)
        if kind == PERIODIC:
            state.checkpoints_written = written
        registry.record_checkpoint(self.run_id, state.step, kind, path)
        return path

    # --- loop ---

    def _fill_batch(self, task, cursor):
        reader = self.readers[task]
        batch = []
        while len(batch) < self.config.batch_size:
            sample, cursor = reader.next(cursor)
            if sample is not None:
                batch.append(sample)
        return batch, cursor

    def _step(self, state, n):
        task, sampler = draw(state.sampler)
        batch, cursor = self._fill_batch(task, state.cursors[task])

        try:
            result = self.trainer.step(batch, n)
        except SimulatedCrash:
            raise
        except Exception as e:
            self._emergency(state, n, e)

        if self.crash_at_step == n:
            raise SimulatedCrash(f"step:{n}")

        state.sampler = sampler
        state.cursors[task] = replace(cursor, draws_consumed=cursor.draws_consumed + 1)
        state.draws_consumed += 1
        state.step = n

        line = canonical_json({"step": n, "task": task.value, "ids": [s.id for s in batch]})
        state.trace_digest = fnv1a64(line.encode("utf-8") + b"\n", state.trace_digest)
        self._trace_file.write(line + "\n")

        wall = (time.monotonic() - self._started) * 1000.0
        for loss_task, loss in result.losses.items():
            state.last_losses[loss_task.value] = loss
            self.monitor.record(MetricEvent(step=n, kind="task_loss", value=loss,
                                            task=loss_task.value, wall_time=wall))
        self.monitor.record(MetricEvent(step=n, kind="utilization", value=result.utilization,
                                        wall_time=wall))

        if n % self.config.validation_interval == 0:
            losses = self.trainer.validation_losses(self.tasks, n)
            for loss_task, loss in losses.items():
                state.validation_losses[loss_task.value] = loss
                self.monitor.record(MetricEvent(step=n, kind="validation_loss", value=loss,
                                                task=loss_task.value, wall_time=wall))
            state.sampler = update_weights(state.sampler, losses)

        if n % self.config.checkpoint_interval == 0 or n == self.config.total_steps:
            self.checkpoint(state)
            self._write_alerts()
            apply_retention(self.out_dir, self.config.keep_last, self.config.keep_every)

    def _emergency(self, state, n, error):
        """Best-effort noodcheckpoint van de staat vóór de mislukte stap."""
        path = None
        try:
            path = self.checkpoint(state, kind=EMERGENCY)
        except (PlanforgeError, OSError) as e:
            logger.error("Noodcheckpoint mislukt", extra={"step": state.step, "error": str(e)})
        logger.error("Trainer mislukt", extra={"step": n, "error": str(error),
                                               "emergency": path})
        raise DataError("TRAINER_FAILURE", str(error), step=n, emergency=path)

    def _prepare(self, resume):
        os.makedirs(self.out_dir, exist_ok=True)
        self._check_run_dir()
        if resume:
            return self.resume()
        stale = list_checkpoints(self.out_dir)
        if stale:
            logger.warning("Bestaande checkpoints worden vervangen door een nieuwe run",
                           extra={"count": len(stale)})
            for _, _, path in stale:
                shutil.rmtree(path, ignore_errors=True)
        for name in (TRACE_LOG, METRICS_LOG, ALERTS_LOG, SUMMARY_FILE):
            if os.path.exists(self._path(name)):
                os.remove(self._path(name))
        return self.fresh_state()

    def run(self, resume=False):
        """Voer de run uit tot total_steps.

        Returns: RunSummary
        """
        with log_context(run_dir=self.out_dir):
            return self._run(resume)

    def _run(self, resume):
        self.state = self._prepare(resume)
        self._write_metadata()
        self.run_id = registry.record_run_started(self.metadata, self.out_dir, resume=resume)
        logger.info("Run gestart", extra={"from_step": self.state.step,
                                          "total_steps": self.config.total_steps,
                                          "tasks": [t.value for t in self.tasks]})

        self._trace_file = open(self._path(TRACE_LOG), "a", encoding="utf-8", buffering=1)
        self._metrics_file = open(self._path(METRICS_LOG), "a", encoding="utf-8", buffering=1)
        sampler_job = MemorySampler(self.monitor, lambda: self.state.step, self.memory_interval)
        try:
            sampler_job.start()
            last_tick = time.monotonic()
            for n in range(self.state.step + 1, self.config.total_steps + 1):
                update_log_context(step=n)
                self._step(self.state, n)
                now = time.monotonic()
                if now > last_tick:
                    self.monitor.record(MetricEvent(
                        step=n, kind="throughput",
                        value=self.config.batch_size / (now - last_tick),
                        wall_time=(now - self._started) * 1000.0))
                last_tick = now
        except SimulatedCrash:
            logger.warning("Gesimuleerde crash", extra={"step": self.state.step + 1})
            raise
        except PlanforgeError as e:
            registry.record_run_finished(self.run_id, "mislukt", error=e.code)
            raise
        finally:
            sampler_job.shutdown()
            for handle in (self._trace_file, self._metrics_file):
                if handle:
                    handle.close()
            self._trace_file = self._metrics_file = None
            for reader in self.readers.values():
                reader.close()

        self._write_alerts()
        summary = self.summary()
        with open(self._path(SUMMARY_FILE), "w", encoding="utf-8") as f:
            json.dump(summary.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        registry.record_alerts(self.run_id, self.monitor.alerts)
        registry.record_run_finished(self.run_id, "voltooid", summary=summary.to_dict())
        logger.info("Run voltooid", extra={"steps": summary.steps,
                                           "checkpoints": len(summary.checkpoints_written),
                                           "alerts": len(summary.alerts)})
        return summary

    def summary(self):
        state = self.state
        return RunSummary(
            stage=self.config.stage,
            steps=state.step,
            final_losses=dict(sorted(state.last_losses.items())),
            validation_losses=dict(sorted(state.validation_losses.items())),
            draws_per_task={t.value: state.cursors[t].draws_consumed for t in self.tasks},
            samples_consumed=state.draws_consumed * self.config.batch_size,
            checkpoints_written=list(state.checkpoints_written),
            alerts=[a.to_dict() for a in self.monitor.alerts],
            weights={t.value: w for t, w in zip(state.sampler.tasks, state.sampler.weights)},
            sampler_updates=state.sampler.update_count,
            trace_digest=hex64(state.trace_digest),
            config_hash=self.metadata["config_hash"],
            manifest_hash=self.metadata["manifest_hash"],
        )


def run(config, trainer, data_dir, out_dir, resume=False, **options):
    """Voer een run uit; zie Orchestrator."""
    return Orchestrator(config, trainer, data_dir, out_dir, **options).run(resume=resume)


def resume(out_dir, config, trainer, data_dir):
    """Herstel de runstaat uit de hoogste consistente checkpoint."""
    orchestrator = Orchestrator(config, trainer, data_dir, out_dir)
    orchestrator._check_run_dir()
    return orchestrator.resume()


def _read(path):
    with open(path, "rb") as f:
        return f.read()


def kill_test(config, data_dir, out_dir, kill_steps, trainer_factory=build_trainer):
    """Crash op elke gegeven stap, hervat, en vergelijk met een ononderbroken run.

    Returns:
        dict met per crash de verloren samples en de vergelijkingsresultaten
    """
    steps = sorted(set(kill_steps))
    if not steps or steps[0] < 1 or steps[-1] > config.total_steps:
        raise UsageError("INVALID_CONFIG", "kill-stappen moeten in [1, total_steps] liggen")

    reference_dir = os.path.join(out_dir, "reference")
    crashed_dir = os.path.join(out_dir, "crashed")
    for path in (reference_dir, crashed_dir):
        shutil.rmtree(path, ignore_errors=True)
    reference = run(config, trainer_factory(config), data_dir, reference_dir)

    kills = []
    for k in steps:
        resumable = select_latest(crashed_dir) is not None
        try:
            run(config, trainer_factory(config), data_dir, crashed_dir, resume=resumable,
                crash_at_step=k)
            raise DataError("TRAINER_FAILURE", f"crash op stap {k} trad niet op")
        except SimulatedCrash:
            pass
        latest = select_latest(crashed_dir)
        restored = load_checkpoint(latest).step if latest else 0
        kills.append({"step": k, "restored_step": restored,
                      "reprocessed_samples": (k - restored) * config.batch_size})

    final = run(config, trainer_factory(config), data_dir, crashed_dir,
                resume=select_latest(crashed_dir) is not None)

    bound = config.batch_size * config.checkpoint_interval
    traces_equal = _read(os.path.join(reference_dir, TRACE_LOG)) == \
        _read(os.path.join(crashed_dir, TRACE_LOG))
    losses_equal = final.final_losses == reference.final_losses
    summaries_equal = final.to_dict() == reference.to_dict()
    worst = max(k["reprocessed_samples"] for k in kills)
    result = {
        "kills": kills,
        "reprocessed_bound": bound,
        "max_reprocessed_samples": worst,
        "traces_equal": traces_equal,
        "losses_equal": losses_equal,
        "summaries_equal": summaries_equal,
        "passed": traces_equal and losses_equal and summaries_equal and worst <= bound,
    }
    logger.info("Kill-test klaar", extra={"kills": len(kills), "passed": result["passed"]})
    return result
