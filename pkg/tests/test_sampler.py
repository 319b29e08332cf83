import math
from collections import Counter
from dataclasses import replace

import pytest

from errors import DataError, UsageError
from rng import SplitMix64
from sampler import draw, init, project, state_from_dict, update_weights, weights_array
from schema import TaskType

BOX = TaskType.VISUAL_GROUNDING_BOX
MCQ = TaskType.EGO_VIEW_MCQ
QA = TaskType.PLANNING_QA
COT = TaskType.INDUSTRIAL_COT


def test_init_is_uniform_in_canonical_order():
    state = init([COT, BOX, QA], seed=1)
    assert state.tasks == (BOX, QA, COT)
    assert state.weights == (1 / 3, 1 / 3, 1 / 3)


def test_weights_proportional_to_loss():
    state = update_weights(init([BOX, QA]), {BOX: 2.0, QA: 1.0})
    assert state.weights == (2 / 3, 1 / 3)
    assert state.update_count == 1


def test_upper_bound_is_projected():
    state = update_weights(init([BOX, QA], w_max=0.6), {BOX: 3.0, QA: 1.0})
    assert state.weights == (0.6, 0.4)


def test_upper_bound_clamps_two_to_one_losses():
    state = update_weights(init([BOX, QA], w_max=0.6), {BOX: 2.0, QA: 1.0})
    assert state.weights == (0.6, 0.4)


def test_higher_loss_never_lowers_weight():
    rng = SplitMix64(2024)
    tasks = [BOX, MCQ, QA, COT]
    for _ in range(300):
        losses = {t: rng.random() * 4 for t in tasks}
        bumped_task = tasks[rng.below(len(tasks))]
        bumped = dict(losses)
        bumped[bumped_task] = losses[bumped_task] + rng.random() * 3
        before = update_weights(init(tasks), losses)
        after = update_weights(init(tasks), bumped)
        i = before.tasks.index(bumped_task)
        assert after.weights[i] >= before.weights[i]


def test_lower_bound_is_projected():
    state = update_weights(init([BOX, MCQ, QA], w_min=0.1), {BOX: 10.0, MCQ: 0.0, QA: 10.0})
    assert state.weights == (0.45, 0.1, 0.45)


def test_projection_keeps_feasible_vectors():
    assert project([0.5, 0.3, 0.2], 0.1, 0.6) == [0.5, 0.3, 0.2]


def test_loss_scale_invariance_is_exact():
    tasks = [BOX, MCQ, QA, COT]
    losses = {BOX: 0.3, MCQ: 1.7, QA: 0.9, COT: 2.25}
    for w_min, w_max in ((0.0, 1.0), (0.1, 0.35)):
        base = update_weights(init(tasks, w_min, w_max), losses)
        for factor in (2.0, 0.25, 1024.0):
            scaled = update_weights(init(tasks, w_min, w_max),
                                    {t: v * factor for t, v in losses.items()})
            assert scaled.weights == base.weights


def test_random_updates_stay_within_bounds():
    rng = SplitMix64(77)
    tasks = [BOX, MCQ, QA, COT]
    state = init(tasks, w_min=0.05, w_max=0.4)
    for _ in range(200):
        losses = {t: rng.random() * 5 for t in tasks}
        state = update_weights(state, losses)
        assert math.isclose(sum(state.weights), 1.0, abs_tol=1e-12)
        assert all(0.05 - 1e-12 <= w <= 0.4 + 1e-12 for w in state.weights)


def test_infeasible_bounds():
    with pytest.raises(UsageError) as exc:
        init([BOX, MCQ, QA], w_max=0.3)
    assert exc.value.code == "INFEASIBLE_BOUNDS"
    with pytest.raises(UsageError):
        init([BOX, MCQ, QA], w_min=0.4)
    with pytest.raises(UsageError):
        init([], w_min=0.0)


def test_missing_and_invalid_losses():
    state = init([BOX, QA])
    with pytest.raises(DataError) as exc:
        update_weights(state, {BOX: 1.0})
    assert exc.value.code == "MISSING_TASK"
    for bad in (-1.0, float("nan"), float("inf")):
        with pytest.raises(DataError) as exc:
            update_weights(state, {BOX: 1.0, QA: bad})
        assert exc.value.code == "INVALID_LOSS"


def test_all_zero_losses_keep_weights():
    state = update_weights(init([BOX, QA]), {BOX: 2.0, QA: 1.0})
    after = update_weights(state, {BOX: 0.0, QA: 0.0})
    assert after.weights == state.weights
    assert after.update_count == state.update_count
    assert after.last_warning == "ALL_ZERO_LOSSES"


def test_smoothing_blends_old_and_new():
    state = init([BOX, QA], smoothing=0.5)
    state = update_weights(state, {BOX: 3.0, QA: 1.0})
    assert state.weights == (0.625, 0.375)


def test_zero_weight_task_is_never_drawn():
    state = update_weights(init([BOX, MCQ, QA], seed=4), {BOX: 1.0, MCQ: 0.0, QA: 1.0})
    assert state.weight(MCQ) == 0.0
    for _ in range(2000):
        task, state = draw(state)
        assert task is not MCQ


def test_draw_frequencies_match_weights():
    state = replace(init([BOX, MCQ, QA], seed=12), weights=(0.5, 0.3, 0.2))
    n = 100_000
    counts = Counter()
    for _ in range(n):
        task, state = draw(state)
        counts[task] += 1
    for task, w in zip(state.tasks, state.weights):
        assert abs(counts[task] / n - w) <= 4 * math.sqrt(w * (1 - w) / n)


def test_draw_is_reproducible_after_serialization():
    state = update_weights(init([BOX, MCQ, QA, COT], seed=99), {BOX: 1, MCQ: 2, QA: 3, COT: 4})
    for _ in range(10):
        _, state = draw(state)
    restored = state_from_dict(state.to_dict())
    assert restored == state
    a, b = [], []
    for _ in range(50):
        task, state = draw(state)
        a.append(task)
        task, restored = draw(restored)
        b.append(task)
    assert a == b


def test_weights_array_is_canonical():
    state = replace(init([QA, BOX]), weights=(0.7, 0.3))
    assert weights_array(state).tolist() == [0.7, 0.3]
