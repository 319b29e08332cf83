import json
import os
from dataclasses import asdict, dataclass, field

from dotenv import load_dotenv

from digest import hash_json
from errors import StorageError, UsageError

load_dotenv()

TOOL_VERSION = "1.0.0"
SCHEMA_VERSION = 1

# Registry (optioneel)
DATABASE_URL = os.getenv("DATABASE_URL", "")

# Logging
LOG_LEVEL = os.getenv("PLANFORGE_LOG_LEVEL", "INFO")

# Opslag
FSYNC = os.getenv("PLANFORGE_FSYNC", "1") not in ("0", "false", "no")
DEFAULT_SHARD_SIZE = int(os.getenv("PLANFORGE_SHARD_SIZE", "10000"))
KEEP_LAST = int(os.getenv("PLANFORGE_KEEP_LAST", "3"))
KEEP_EVERY = int(os.getenv("PLANFORGE_KEEP_EVERY", "0"))

# Monitor-drempels, vastgelegd in run_metadata.json
MEMORY_SAMPLE_SECONDS = float(os.getenv("PLANFORGE_MEMORY_SAMPLE_SECONDS", "0"))
UTIL_DELTA = float(os.getenv("PLANFORGE_UTIL_DELTA", "0.5"))
UTIL_WINDOW = int(os.getenv("PLANFORGE_UTIL_WINDOW", "50"))
UTIL_CONSECUTIVE = int(os.getenv("PLANFORGE_UTIL_CONSECUTIVE", "3"))
DRIFT_SHORT_HALF_LIFE = float(os.getenv("PLANFORGE_DRIFT_SHORT_HALF_LIFE", "10"))
DRIFT_LONG_HALF_LIFE = float(os.getenv("PLANFORGE_DRIFT_LONG_HALF_LIFE", "100"))
DRIFT_RATIO = float(os.getenv("PLANFORGE_DRIFT_RATIO", "1.2"))

# Sampler defaults
SAMPLER_W_MIN = 0.0
SAMPLER_W_MAX = 1.0
SAMPLER_SMOOTHING = 0.0

# Simulated trainer defaults per taak
DEFAULT_BASE_LOSS = 2.5
DEFAULT_DECAY = 2e-4
DEFAULT_NOISE = 0.02

# Resume kiest bij gelijke stap een periodiek boven een noodcheckpoint
RESUME_TIE_BREAK = "periodic-over-emergency"


@dataclass(frozen=True)
class MonitorConfig:
    util_delta: float = UTIL_DELTA
    util_window: int = UTIL_WINDOW
    util_consecutive: int = UTIL_CONSECUTIVE
    drift_short_half_life: float = DRIFT_SHORT_HALF_LIFE
    drift_long_half_life: float = DRIFT_LONG_HALF_LIFE
    drift_ratio: float = DRIFT_RATIO


@dataclass(frozen=True)
class TaskCurve:
    base_loss: float = DEFAULT_BASE_LOSS
    decay: float = DEFAULT_DECAY
    noise: float = DEFAULT_NOISE


@dataclass(frozen=True)
class TrainerConfig:
    kind: str = "simulated"
    curves: dict = field(default_factory=dict)  # task -> TaskCurve
    frozen_groups: tuple = ()
    utilization_dips: tuple = ()  # (start_step, end_step, value)
    fail_at_step: int = 0  # 0 = nooit

    def curve(self, task):
        return self.curves.get(task, TaskCurve())


@dataclass(frozen=True)
class RunConfig:
    total_steps: int
    batch_size: int
    checkpoint_interval: int
    validation_interval: int
    seed: int = 0
    stage: int = 1
    tasks: tuple = ()
    init_from: str = ""
    w_min: float = SAMPLER_W_MIN
    w_max: float = SAMPLER_W_MAX
    smoothing: float = SAMPLER_SMOOTHING
    keep_last: int = KEEP_LAST
    keep_every: int = KEEP_EVERY
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)

    def to_dict(self):
        data = asdict(self)
        data["tasks"] = list(self.tasks)
        data["trainer"]["frozen_groups"] = list(self.trainer.frozen_groups)
        data["trainer"]["utilization_dips"] = [list(d) for d in self.trainer.utilization_dips]
        return data

    def config_hash(self):
        """Hash over de canonieke config; retentie telt niet mee."""
        data = self.to_dict()
        data.pop("keep_last")
        data.pop("keep_every")
        return hash_json(data)


def run_config_from_dict(data, seed_override=None):
    """Bouw een RunConfig uit een dict (run.json) en valideer.

    Raises: UsageError met alle validatiefouten.
    """
    from validators import validate_run_config

    is_valid, errors = validate_run_config(data)
    if not is_valid:
        raise UsageError("INVALID_CONFIG", "; ".join(errors), errors=errors)

    trainer_data = data.get("trainer", {})
    curves = {
        task: TaskCurve(
            base_loss=float(c.get("base_loss", DEFAULT_BASE_LOSS)),
            decay=float(c.get("decay", DEFAULT_DECAY)),
            noise=float(c.get("noise", DEFAULT_NOISE)),
        )
        for task, c in sorted(trainer_data.get("curves", {}).items())
    }
    trainer = TrainerConfig(
        kind=trainer_data.get("kind", "simulated"),
        curves=curves,
        frozen_groups=tuple(trainer_data.get("frozen_groups", [])),
        utilization_dips=tuple(tuple(d) for d in trainer_data.get("utilization_dips", [])),
        fail_at_step=int(trainer_data.get("fail_at_step", 0)),
    )
    monitor_data = data.get("monitor", {})
    monitor = MonitorConfig(**{k: monitor_data[k] for k in MonitorConfig.__dataclass_fields__
                               if k in monitor_data})
    sampler = data.get("sampler", {})
    retention = data.get("retention", {})
    seed = data.get("seed", 0) if seed_override is None else seed_override

    return RunConfig(
        total_steps=data["total_steps"],
        batch_size=data["batch_size"],
        checkpoint_interval=data["checkpoint_interval"],
        validation_interval=data.get("validation_interval", data["checkpoint_interval"]),
        seed=int(seed),
        stage=data.get("stage", 1),
        tasks=tuple(data.get("tasks", [])),
        init_from=data.get("init_from", ""),
        w_min=float(sampler.get("w_min", SAMPLER_W_MIN)),
        w_max=float(sampler.get("w_max", SAMPLER_W_MAX)),
        smoothing=float(sampler.get("smoothing", SAMPLER_SMOOTHING)),
        keep_last=retention.get("keep_last", KEEP_LAST),
        keep_every=retention.get("keep_every", KEEP_EVERY),
        trainer=trainer,
        monitor=monitor,
    )


def load_run_config(path, seed_override=None):
    """Laad run.json van schijf."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise StorageError("IO_FAILURE", str(e), path=str(path))
    except json.JSONDecodeError as e:
        raise UsageError("INVALID_CONFIG", f"run config is geen geldige JSON: {e}")
    return run_config_from_dict(data, seed_override=seed_override)


def design_defaults(config):
    """Alle drempels en ontwerpkeuzes die in deze run gelden."""
    return {
        "monitor": asdict(config.monitor),
        "sampler": {"w_min": config.w_min, "w_max": config.w_max,
                    "smoothing": config.smoothing},
        "validation_interval": config.validation_interval,
        "retention": {"keep_last": config.keep_last, "keep_every": config.keep_every},
        "resume_tie_break": RESUME_TIE_BREAK,
        "mcq_options": 4,
        "bleu_smoothing": "zero-match order k>=2: 1/(2*H_k)",
        "rounding": "half-away-from-zero, 1 decimal",
    }
