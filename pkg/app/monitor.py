"""Run-monitor: per-taak loss, throughput, geheugen en utilization.

Alerts:
    UTILIZATION_DROP  utilization < delta * mediaan(laatste M waarden) voor C
                      opeenvolgende samples; één alert per aaneengesloten reeks
    LOSS_DRIFT        per taak EMA_kort / EMA_lang > rho; één alert per reeks
"""
import math
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from config import MonitorConfig
from logging_config import get_logger

logger = get_logger(__name__)

EVENT_KINDS = ("task_loss", "validation_loss", "throughput", "memory", "utilization")
# Niet-deterministische signalen: wel gelogd, niet in de snapshot
RUNTIME_KINDS = frozenset({"throughput", "memory"})

UTILIZATION_DROP = "UTILIZATION_DROP"
LOSS_DRIFT = "LOSS_DRIFT"


@dataclass(frozen=True)
class MetricEvent:
    step: int
    kind: str
    value: float
    task: str | None = None
    wall_time: float = 0.0  # ms sinds de start van de run

    def stream(self):
        return (self.kind, self.task)

    def to_dict(self):
        data = {"step": self.step, "kind": self.kind, "value": self.value,
                "wall_time_ms": round(self.wall_time, 3)}
        if self.task is not None:
            data["task"] = self.task
        return data


@dataclass
class Alert:
    kind: str
    start_step: int
    end_step: int
    task: str | None = None
    evidence: dict = field(default_factory=dict)

    def to_dict(self):
        data = {"kind": self.kind, "start_step": self.start_step, "end_step": self.end_step,
                "evidence": self.evidence}
        if self.task is not None:
            data["task"] = self.task
        return data


def alert_from_dict(data):
    return Alert(kind=data["kind"], start_step=data["start_step"], end_step=data["end_step"],
                 task=data.get("task"), evidence=dict(data.get("evidence", {})))


def check_event(event):
    """Geeft None voor een geldige event, anders INVALID_VALUE."""
    if event.kind not in EVENT_KINDS:
        return "INVALID_VALUE"
    if not isinstance(event.value, (int, float)) or not math.isfinite(event.value):
        return "INVALID_VALUE"
    if event.kind == "utilization" and not 0.0 <= event.value <= 1.0:
        return "INVALID_VALUE"
    if event.kind in ("task_loss", "validation_loss", "throughput", "memory") and event.value < 0:
        return "INVALID_VALUE"
    if event.kind in ("task_loss", "validation_loss") and not event.task:
        return "INVALID_VALUE"
    return None


def ema_alpha(half_life):
    return 1.0 - 0.5 ** (1.0 / half_life)


class AlertDetector:
    """Incrementele detector; dezelfde code draait online en in detect()."""

    def __init__(self, config=None):
        self.config = config or MonitorConfig()
        self._window = deque(maxlen=self.config.util_window)
        self._low_run = []  # (step, value, median) van de huidige lage reeks
        self._util_alert = None  # index van de open utilization alert
        self._ema = {}  # task -> [kort, lang]
        self._drift_alert = {}  # task -> index van open drift alert
        self.alerts = []

    def observe(self, event):
        if event.kind == "utilization":
            self._observe_utilization(event)
        elif event.kind == "task_loss":
            self._observe_loss(event)

    def _observe_utilization(self, event):
        cfg = self.config
        low = False
        median = None
        if len(self._window) >= cfg.util_consecutive:
            median = float(np.median(np.fromiter(self._window, dtype=np.float64)))
            low = event.value < cfg.util_delta * median
        self._window.append(float(event.value))

        if not low:
            self._low_run = []
            self._util_alert = None
            return

        self._low_run.append((event.step, float(event.value), median))
        if self._util_alert is not None:
            self.alerts[self._util_alert].end_step = event.step
        elif len(self._low_run) >= cfg.util_consecutive:
            first_step, first_value, first_median = self._low_run[0]
            self.alerts.append(Alert(
                kind=UTILIZATION_DROP,
                start_step=first_step,
                end_step=event.step,
                evidence={"median": first_median, "value": first_value,
                          "threshold": cfg.util_delta * first_median,
                          "consecutive": cfg.util_consecutive},
            ))
            self._util_alert = len(self.alerts) - 1
            logger.warning("Utilization drop gedetecteerd",
                           extra={"start_step": first_step, "step": event.step,
                                  "median": first_median})

    def _observe_loss(self, event):
        cfg = self.config
        value = float(event.value)
        ema = self._ema.get(event.task)
        if ema is None:
            self._ema[event.task] = [value, value]
            return
        a_short = ema_alpha(cfg.drift_short_half_life)
        a_long = ema_alpha(cfg.drift_long_half_life)
        ema[0] = a_short * value + (1.0 - a_short) * ema[0]
        ema[1] = a_long * value + (1.0 - a_long) * ema[1]

        drifting = ema[1] > 0 and ema[0] / ema[1] > cfg.drift_ratio
        open_index = self._drift_alert.get(event.task)
        if not drifting:
            self._drift_alert.pop(event.task, None)
            return
        if open_index is not None:
            self.alerts[open_index].end_step = event.step
            return
        self.alerts.append(Alert(
            kind=LOSS_DRIFT,
            start_step=event.step,
            end_step=event.step,
            task=event.task,
            evidence={"ema_short": ema[0], "ema_long": ema[1], "ratio": ema[0] / ema[1],
                      "threshold": cfg.drift_ratio},
        ))
        self._drift_alert[event.task] = len(self.alerts) - 1
        logger.warning("Loss drift gedetecteerd",
                       extra={"task": event.task, "step": event.step, "ratio": ema[0] / ema[1]})

    def snapshot(self):
        return {
            "window": list(self._window),
            "low_run": [list(r) for r in self._low_run],
            "util_alert": self._util_alert,
            "ema": {k: list(v) for k, v in sorted(self._ema.items())},
            "drift_alert": dict(sorted(self._drift_alert.items())),
            "alerts": [a.to_dict() for a in self.alerts],
        }

    def restore(self, data):
        self._window = deque((float(v) for v in data["window"]), maxlen=self.config.util_window)
        self._low_run = [tuple(r) for r in data["low_run"]]
        self._util_alert = data["util_alert"]
        self._ema = {k: [float(v[0]), float(v[1])] for k, v in data["ema"].items()}
        self._drift_alert = {k: int(v) for k, v in data["drift_alert"].items()}
        self.alerts = [alert_from_dict(a) for a in data["alerts"]]


def detect(events, config=None):
    """Pure detectie over een venster events; idempotent.

    Ongeldige en out-of-order events worden overgeslagen, net als online.
    """
    detector = AlertDetector(config)
    last = {}
    for event in events:
        if check_event(event) is not None:
            continue
        if event.step < last.get(event.stream(), event.step):
            continue
        last[event.stream()] = event.step
        detector.observe(event)
    return [alert_from_dict(a.to_dict()) for a in detector.alerts]


class Monitor:
    """Online monitor; record() is veilig vanuit meerdere threads.

    Args:
        config: MonitorConfig
        sink: optionele callable(event) die geaccepteerde events wegschrijft
    """

    def __init__(self, config=None, sink=None):
        self.detector = AlertDetector(config)
        self.sink = sink
        self.rejected = {"OUT_OF_ORDER": 0, "INVALID_VALUE": 0}
        self._last_step = {}
        self._lock = threading.Lock()

    @property
    def alerts(self):
        with self._lock:
            return list(self.detector.alerts)

    def record(self, event):
        """Neem een event op.

        Returns:
            None als geaccepteerd, anders "OUT_OF_ORDER" of "INVALID_VALUE".
        """
        with self._lock:
            verdict = check_event(event)
            if verdict is None and event.step < self._last_step.get(event.stream(), event.step):
                verdict = "OUT_OF_ORDER"
            if verdict is not None:
                self.rejected[verdict] += 1
                logger.debug("Metric geweigerd", extra={"verdict": verdict,
                                                        "kind": event.kind, "step": event.step})
                return verdict
            self._last_step[event.stream()] = event.step
            self.detector.observe(event)
            if self.sink:
                self.sink(event)
            return None

    def snapshot(self):
        """Deterministische staat voor checkpoints (zonder geheugen/throughput)."""
        with self._lock:
            return {
                "detector": self.detector.snapshot(),
                "last_step": [[kind, task, step] for (kind, task), step
                              in sorted(self._last_step.items(), key=lambda kv: str(kv[0]))
                              if kind not in RUNTIME_KINDS],
            }

    def restore(self, data):
        with self._lock:
            self.detector.restore(data["detector"])
            self._last_step = {(kind, task): step for kind, task, step in data["last_step"]}
