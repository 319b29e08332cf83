"""Dynamische task sampler.

Gewichten per taak, bijgewerkt op basis van validatieloss (hogere loss,
vaker samplen) en geprojecteerd op de simplex met grenzen [w_min, w_max].
Trekkingen gaan via inverse-CDF in de canonieke TaskType-volgorde.
"""
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from errors import DataError, UsageError
from logging_config import get_logger
from rng import advance, to_unit
from schema import TASK_ORDER, TaskType

logger = get_logger(__name__)

_EPS = Fraction(1, 10**12)


@dataclass(frozen=True)
class SamplerState:
    tasks: tuple  # canonieke volgorde
    weights: tuple  # floats, zelfde volgorde als tasks
    w_min: float
    w_max: float
    rng_state: int
    update_count: int = 0
    smoothing: float = 0.0
    last_warning: str | None = None

    def weight(self, task):
        return self.weights[self.tasks.index(task)]

    def weight_map(self):
        return dict(zip(self.tasks, self.weights))

    def to_dict(self):
        return {
            "weights": {t.value: w for t, w in zip(self.tasks, self.weights)},
            "w_min": self.w_min,
            "w_max": self.w_max,
            "rng_state": str(self.rng_state),
            "update_count": self.update_count,
            "smoothing": self.smoothing,
            "last_warning": self.last_warning,
        }


def state_from_dict(data):
    weights = {TaskType.parse(k): float(v) for k, v in data["weights"].items()}
    tasks = tuple(t for t in TASK_ORDER if t in weights)
    return SamplerState(
        tasks=tasks,
        weights=tuple(weights[t] for t in tasks),
        w_min=float(data["w_min"]),
        w_max=float(data["w_max"]),
        rng_state=int(data["rng_state"]),
        update_count=int(data["update_count"]),
        smoothing=float(data.get("smoothing", 0.0)),
        last_warning=data.get("last_warning"),
    )


def _check_bounds(n, w_min, w_max):
    if n == 0:
        raise UsageError("INFEASIBLE_BOUNDS", "geen taken opgegeven")
    lo, hi = Fraction(w_min), Fraction(w_max)
    if not (0 <= lo <= hi <= 1) or n * lo > 1 + _EPS or n * hi < 1 - _EPS:
        raise UsageError("INFEASIBLE_BOUNDS",
                         f"{n} taken met w_min={w_min}, w_max={w_max} is onhaalbaar",
                         tasks=n, w_min=w_min, w_max=w_max)


def init(tasks, w_min=0.0, w_max=1.0, seed=0, smoothing=0.0):
    """Uniforme beginverdeling over de gegeven taken.

    Raises: UsageError(INFEASIBLE_BOUNDS)
    """
    ordered = tuple(t for t in TASK_ORDER if t in set(tasks))
    _check_bounds(len(ordered), w_min, w_max)
    if not 0.0 <= smoothing < 1.0:
        raise UsageError("INVALID_CONFIG", "smoothing moet in [0, 1) liggen")
    uniform = 1.0 / len(ordered)
    return SamplerState(
        tasks=ordered,
        weights=tuple(uniform for _ in ordered),
        w_min=float(w_min),
        w_max=float(w_max),
        rng_state=int(seed) & ((1 << 64) - 1),
        smoothing=float(smoothing),
    )


def _clipped_sum(raw, lam, lo, hi):
    return sum(min(max(lam * r, lo), hi) for r in raw)


def project(raw, w_min, w_max):
    """Projecteer een verhoudingsvector op de begrensde simplex.

    Elke taak krijgt clip(lambda * r_i, w_min, w_max), met lambda zo gekozen
    dat de som 1 is. Taken op hun grens blijven daar; de vrije taken delen de
    rest naar verhouding. Exact in Fractions; een al haalbare vector komt
    ongewijzigd terug.
    """
    raw = [Fraction(r) for r in raw]
    lo, hi = Fraction(w_min), Fraction(w_max)
    _check_bounds(len(raw), w_min, w_max)
    if any(r < 0 for r in raw):
        raise DataError("INVALID_LOSS", "negatieve verhouding")

    # Breekpunten van de stuksgewijs lineaire som als functie van lambda
    points = sorted({Fraction(0)} | {b / r for r in raw if r > 0 for b in (lo, hi)})
    lam = Fraction(0) if _clipped_sum(raw, 0, lo, hi) >= 1 else None
    for left, right in zip(points, points[1:]):
        if lam is not None:
            break
        s_left, s_right = _clipped_sum(raw, left, lo, hi), _clipped_sum(raw, right, lo, hi)
        if s_left <= 1 <= s_right:
            if s_right == s_left:
                lam = left
            else:
                lam = left + (1 - s_left) * (right - left) / (s_right - s_left)
            break
    if lam is None:
        # Som blijft onder 1: alleen mogelijk als alle positieve taken op w_max staan
        lam = points[-1]

    weights = [min(max(lam * r, lo), hi) for r in raw]
    total = sum(weights)
    if total != 1:
        # Alleen nul-verhoudingen zijn vrij: verdeel de rest gelijk over de vrije taken
        free = [i for i, w in enumerate(weights) if lo < w < hi or raw[i] == 0]
        if free:
            share = (1 - total) / len(free)
            for i in free:
                weights[i] += share
    return weights


def update_weights(state, validation_losses):
    """Nieuwe gewichten evenredig met de validatieloss, daarna geprojecteerd.

    Args:
        state: SamplerState
        validation_losses: dict TaskType -> loss >= 0

    Returns:
        nieuwe SamplerState; bij alleen nul-losses de oude state met
        last_warning=ALL_ZERO_LOSSES.

    Raises: DataError(MISSING_TASK | INVALID_LOSS)
    """
    losses = []
    for task in state.tasks:
        if task not in validation_losses:
            raise DataError("MISSING_TASK", f"geen validatieloss voor {task.value}",
                            task=task.value)
        value = validation_losses[task]
        if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
            raise DataError("INVALID_LOSS", f"ongeldige loss {value!r}", task=task.value)
        losses.append(Fraction(value))

    total = sum(losses)
    if total == 0:
        logger.warning("Alle validatielosses zijn nul, gewichten ongewijzigd",
                       extra={"update_count": state.update_count})
        return replace(state, last_warning="ALL_ZERO_LOSSES")

    projected = project([loss / total for loss in losses], state.w_min, state.w_max)
    beta = Fraction(state.smoothing)
    if beta:
        projected = [beta * Fraction(old) + (1 - beta) * new
                     for old, new in zip(state.weights, projected)]

    weights = tuple(float(w) for w in projected)
    logger.debug("Sampler gewichten bijgewerkt",
                 extra={"weights": {t.value: w for t, w in zip(state.tasks, weights)}})
    return replace(state, weights=weights, update_count=state.update_count + 1,
                   last_warning=None)


def weights_array(state):
    """Gewichten als numpy vector in canonieke volgorde."""
    return np.asarray(state.weights, dtype=np.float64)


def draw(state):
    """Trek één taak; geeft (TaskType, nieuwe state)."""
    rng_state, out = advance(state.rng_state)
    cdf = np.cumsum(weights_array(state))
    u = to_unit(out) * cdf[-1]
    index = min(int(np.searchsorted(cdf, u, side="right")), len(state.tasks) - 1)
    return state.tasks[index], replace(state, rng_state=rng_state)
