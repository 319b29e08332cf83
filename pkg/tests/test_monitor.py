import math
import threading

from config import MonitorConfig
from monitor import LOSS_DRIFT, UTILIZATION_DROP, MetricEvent, Monitor, detect


def util_events(values, start=1):
    return [MetricEvent(step=start + i, kind="utilization", value=v) for i, v in enumerate(values)]


def loss_events(values, task="planning-qa"):
    return [MetricEvent(step=i + 1, kind="task_loss", value=v, task=task)
            for i, v in enumerate(values)]


def flagged_steps(alerts):
    return {s for a in alerts for s in range(a.start_step, a.end_step + 1)}


def test_constant_stream_has_no_alerts():
    events = util_events([0.9] * 200) + loss_events([1.0] * 200)
    assert detect(events) == []


def test_utilization_drop_raises_one_alert():
    alerts = detect(util_events([0.9] * 60 + [0.2] * 10))
    assert len(alerts) == 1
    alert = alerts[0]
    assert alert.kind == UTILIZATION_DROP
    assert (alert.start_step, alert.end_step) == (61, 70)
    assert alert.evidence["median"] == 0.9


def test_short_dip_below_consecutive_count_is_ignored():
    assert detect(util_events([0.9] * 60 + [0.2, 0.2] + [0.9] * 10)) == []


def test_two_separate_drops_give_two_alerts():
    values = [0.9] * 60 + [0.2] * 5 + [0.9] * 20 + [0.1] * 4
    alerts = detect(util_events(values))
    assert [a.start_step for a in alerts] == [61, 86]


def test_decaying_loss_has_no_drift():
    values = [2.5 * math.exp(-0.01 * n) for n in range(500)]
    assert detect(loss_events(values)) == []


def test_rising_loss_drifts_per_task():
    values = [1.0] * 300 + [1.0 + 0.05 * n for n in range(1, 100)]
    alerts = detect(loss_events(values) + loss_events([1.0] * 400, task="ego-view-mcq"))
    assert len(alerts) == 1
    assert alerts[0].kind == LOSS_DRIFT
    assert alerts[0].task == "planning-qa"
    assert alerts[0].start_step > 300
    assert alerts[0].evidence["ratio"] > 1.2


def test_detection_is_idempotent_and_matches_online():
    events = util_events([0.9] * 60 + [0.2] * 10 + [0.9] * 30)
    events += loss_events([1.0] * 300 + [3.0] * 50)
    monitor = Monitor()
    for event in events:
        monitor.record(event)
    assert detect(events) == detect(events) == monitor.alerts


def test_lower_sensitivity_flags_a_subset_of_steps():
    values = [0.9] * 60 + [0.5, 0.3, 0.2, 0.1, 0.25, 0.4, 0.2] + [0.9] * 10
    loose = flagged_steps(detect(util_events(values), MonitorConfig(util_delta=0.5)))
    strict = flagged_steps(detect(util_events(values), MonitorConfig(util_delta=0.3)))
    assert strict and strict <= loose


def test_higher_drift_ratio_flags_a_subset_of_steps():
    events = loss_events([1.0] * 300 + [1.0 + 0.05 * n for n in range(1, 100)])
    loose = flagged_steps(detect(events, MonitorConfig(drift_ratio=1.2)))
    strict = flagged_steps(detect(events, MonitorConfig(drift_ratio=1.5)))
    assert strict and strict < loose
    assert min(strict) > min(loose)


def test_out_of_order_and_invalid_events_are_rejected():
    monitor = Monitor()
    assert monitor.record(MetricEvent(step=5, kind="utilization", value=0.9)) is None
    assert monitor.record(MetricEvent(step=4, kind="utilization", value=0.9)) == "OUT_OF_ORDER"
    assert monitor.record(MetricEvent(step=6, kind="utilization", value=float("nan"))) \
        == "INVALID_VALUE"
    assert monitor.record(MetricEvent(step=6, kind="task_loss", value=-1.0, task="x")) \
        == "INVALID_VALUE"
    assert monitor.record(MetricEvent(step=6, kind="task_loss", value=1.0)) == "INVALID_VALUE"
    assert monitor.record(MetricEvent(step=6, kind="gpu_temp", value=1.0)) == "INVALID_VALUE"
    # Andere stroom: eigen volgorde
    assert monitor.record(MetricEvent(step=1, kind="task_loss", value=1.0, task="x")) is None
    assert monitor.rejected == {"OUT_OF_ORDER": 1, "INVALID_VALUE": 4}


def test_snapshot_restore_continues_identically():
    events = util_events([0.9] * 60 + [0.2] * 10 + [0.9] * 30)
    events += loss_events([1.0] * 200 + [2.5] * 40)
    events.sort(key=lambda e: e.step)

    full = Monitor()
    for event in events:
        full.record(event)

    first = Monitor()
    for event in events[:150]:
        first.record(event)
    second = Monitor()
    second.restore(first.snapshot())
    for event in events[150:]:
        second.record(event)
    assert second.alerts == full.alerts
    assert second.snapshot() == full.snapshot()


def test_snapshot_excludes_runtime_streams():
    monitor = Monitor()
    monitor.record(MetricEvent(step=3, kind="memory", value=1e6))
    monitor.record(MetricEvent(step=3, kind="throughput", value=100.0))
    assert monitor.snapshot()["last_step"] == []


def test_concurrent_records_are_all_counted():
    seen = []
    monitor = Monitor(sink=seen.append)

    def feed(task):
        for step in range(1, 501):
            monitor.record(MetricEvent(step=step, kind="task_loss", value=1.0, task=task))

    threads = [threading.Thread(target=feed, args=(f"t{i}",)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(seen) == 2000
    assert monitor.rejected["OUT_OF_ORDER"] == 0
