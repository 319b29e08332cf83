"""APScheduler job die tijdens een run het geheugengebruik bemonstert."""
import resource
import sys
import time

from apscheduler.schedulers.background import BackgroundScheduler
from apscheduler.triggers.interval import IntervalTrigger

from logging_config import get_logger
from monitor import MetricEvent

logger = get_logger(__name__)

JOB_ID = "memory_sample"


def peak_rss_bytes():
    """Piek-RSS van dit proces (ru_maxrss is KiB op Linux, bytes op macOS)."""
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return rss if sys.platform == "darwin" else rss * 1024


class MemorySampler:
    """Periodieke memory-events naar de monitor.

    Args:
        monitor: Monitor die de events ontvangt
        step_provider: callable die de huidige stap teruggeeft
        interval: seconden tussen samples; 0 = uit
    """

    def __init__(self, monitor, step_provider, interval):
        self.monitor = monitor
        self.step_provider = step_provider
        self.interval = interval
        self._started = time.monotonic()
        self.scheduler = BackgroundScheduler(
            job_defaults={
                "coalesce": True,
                "max_instances": 1,
                "misfire_grace_time": 30,
            }
        )

    def start(self):
        if self.interval <= 0 or self.scheduler.running:
            return False
        self.scheduler.add_job(
            func=self.sample,
            trigger=IntervalTrigger(seconds=self.interval),
            id=JOB_ID,
            name="Geheugen bemonsteren",
            replace_existing=True,
        )
        self.scheduler.start()
        logger.info("Memory sampler gestart", extra={"interval": self.interval})
        return True

    def sample(self):
        event = MetricEvent(
            step=self.step_provider(),
            kind="memory",
            value=float(peak_rss_bytes()),
            wall_time=(time.monotonic() - self._started) * 1000.0,
        )
        self.monitor.record(event)
        return event

    def shutdown(self):
        if self.scheduler.running:
            self.scheduler.shutdown(wait=False)
            logger.info("Memory sampler gestopt")

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.shutdown()
