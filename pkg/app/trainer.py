"""Trainer-interface en de deterministische simulated trainer.

De orchestrator praat alleen via step/snapshot/restore met een trainer; de
modelstaat is een opaque blob.
"""
import json
import math
from dataclasses import dataclass

from digest import FNV_OFFSET, canonical_json, fnv1a64, hex64
from errors import DataError
from rng import SplitMix64, mix_seed
from schema import TASK_ORDER

# Seed-domeinen: training-ruis, validatie, utilization
_TRAIN_DOMAIN = 0x7A
_VALIDATION_DOMAIN = 0x5E
_UTILIZATION_DOMAIN = 0x07

BASE_UTILIZATION = 0.92
UTILIZATION_JITTER = 0.04


@dataclass(frozen=True)
class StepResult:
    losses: dict  # TaskType -> float
    utilization: float


class Trainer:
    """Contract voor pluggable trainers."""

    def step(self, batch, step_index):
        """Verwerk één batch; geeft een StepResult."""
        raise NotImplementedError

    def validation_losses(self, tasks, step_index):
        raise NotImplementedError

    def snapshot(self):
        """Geeft (model_blob, optimizer_blob) als bytes."""
        raise NotImplementedError

    def restore(self, model_blob, optimizer_blob):
        raise NotImplementedError

    def warm_start(self, model_blob):
        """Neem alleen de modelstaat over (stage 2); optimizer begint opnieuw."""
        raise NotImplementedError


class SimulatedTrainer(Trainer):
    """Analytische loss-curves met geseede ruis.

    Loss voor taak t op globale stap n:
        L0_t * exp(-k_t * n) + normal(seed, t, n) * sigma_t

    Een pure functie van (config, seed, n); de blob bevat de stapteller, het
    aantal geziene samples per taak en een digest van de geziene ids.
    """

    def __init__(self, config, seed):
        self.config = config
        self.seed = seed
        self._step = 0
        self._seen = {}
        self._digest = FNV_OFFSET
        self._last_loss = {}
        self._warm_start = ""

    def _noise(self, domain, task, n):
        return SplitMix64(mix_seed(self.seed, domain, TASK_ORDER.index(task), n)).normal()

    def analytic_loss(self, task, n, domain=_TRAIN_DOMAIN):
        curve = self.config.curve(task.value)
        loss = curve.base_loss * math.exp(-curve.decay * n)
        if curve.noise:
            loss += self._noise(domain, task, n) * curve.noise
        return max(loss, 0.0)

    def utilization(self, n):
        for start, end, value in self.config.utilization_dips:
            if start <= n <= end:
                return float(value)
        jitter = SplitMix64(mix_seed(self.seed, _UTILIZATION_DOMAIN, n)).random() - 0.5
        return BASE_UTILIZATION + jitter * UTILIZATION_JITTER

    def step(self, batch, step_index):
        if self.config.fail_at_step and step_index == self.config.fail_at_step:
            raise RuntimeError(f"simulated trainer failure at step {step_index}")
        if not batch:
            raise DataError("TRAINER_FAILURE", "lege batch", step=step_index)
        task = batch[0].task
        if any(s.task is not task for s in batch):
            raise DataError("TRAINER_FAILURE", "batch met gemengde taken", step=step_index)

        for sample in batch:
            self._digest = fnv1a64(sample.id.encode("utf-8") + b"\n", self._digest)
        self._seen[task.value] = self._seen.get(task.value, 0) + len(batch)
        self._step = step_index

        loss = self.analytic_loss(task, step_index)
        self._last_loss[task.value] = loss
        return StepResult(losses={task: loss}, utilization=self.utilization(step_index))

    def validation_losses(self, tasks, step_index):
        """Analytische loss op een losstaand seed-domein (held-out)."""
        return {t: self.analytic_loss(t, step_index, _VALIDATION_DOMAIN) for t in tasks}

    def snapshot(self):
        model = {
            "step": self._step,
            "seen": dict(sorted(self._seen.items())),
            "digest": hex64(self._digest),
            "last_loss": dict(sorted(self._last_loss.items())),
            "warm_start": self._warm_start,
        }
        optimizer = {
            "step": self._step,
            "frozen_groups": list(self.config.frozen_groups),
        }
        return canonical_json(model).encode("utf-8"), canonical_json(optimizer).encode("utf-8")

    def restore(self, model_blob, optimizer_blob):
        try:
            model = json.loads(model_blob)
            optimizer = json.loads(optimizer_blob)
            self._step = int(model["step"])
            self._seen = {k: int(v) for k, v in model["seen"].items()}
            self._digest = int(model["digest"], 16)
            self._last_loss = {k: float(v) for k, v in model["last_loss"].items()}
            self._warm_start = model.get("warm_start", "")
        except (ValueError, KeyError, TypeError) as e:
            raise DataError("TRAINER_FAILURE", f"blob niet te herstellen: {e}")
        if int(optimizer.get("step", -1)) != self._step:
            raise DataError("TRAINER_FAILURE", "model- en optimizer-stap verschillen")

    def warm_start(self, model_blob):
        """Stage 2: geziene samples overnemen, stapteller en optimizer opnieuw."""
        try:
            model = json.loads(model_blob)
            self._seen = {k: int(v) for k, v in model["seen"].items()}
        except (ValueError, KeyError, TypeError) as e:
            raise DataError("TRAINER_FAILURE", f"warm-start blob ongeldig: {e}")
        self._step = 0
        self._last_loss = {}
        self._warm_start = hex64(fnv1a64(bytes(model_blob)))


def build_trainer(config):
    """Maak de trainer die in de run-config staat."""
    if config.trainer.kind != "simulated":
        raise DataError("TRAINER_FAILURE", f"onbekend trainer kind: {config.trainer.kind}")
    return SimulatedTrainer(config.trainer, config.seed)
