"""Structured logging configuratie voor planforge."""
import logging
import sys
from contextlib import contextmanager
from contextvars import ContextVar

from pythonjsonlogger import jsonlogger

_context = ContextVar("planforge_log_context", default={})


class RunContextFilter(logging.Filter):
    """Zet de velden van de lopende run (run_dir, step) op elke record.

    Een expliciete extra={"step": ...} gaat voor.
    """

    def filter(self, record):
        for key, value in _context.get().items():
            if not hasattr(record, key):
                setattr(record, key, value)
        return True


@contextmanager
def log_context(**fields):
    """Bind velden aan alle logregels binnen het blok."""
    token = _context.set({**_context.get(), **fields})
    try:
        yield
    finally:
        _context.reset(token)


def update_log_context(**fields):
    # Binnen een log_context-blok; de reset bij het verlaten ruimt dit op
    _context.set({**_context.get(), **fields})


def setup_logging(level=logging.INFO, stream=None):
    """Configureer structured JSON logging.

    Logs gaan naar stderr; stdout is gereserveerd voor de JSON-samenvatting
    van elk CLI-commando. Binnen een run krijgt elke regel run_dir en step mee.
    """
    formatter = jsonlogger.JsonFormatter(
        fmt="%(asctime)s %(name)s %(levelname)s %(message)s",
        datefmt="%Y-%m-%dT%H:%M:%S",
    )

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(formatter)
    handler.addFilter(RunContextFilter())

    root = logging.getLogger()
    root.setLevel(level)
    root.handlers.clear()
    root.addHandler(handler)

    for name in ("apscheduler", "sqlalchemy", "alembic"):
        logging.getLogger(name).setLevel(logging.WARNING)

    return root


def get_logger(name):
    """Maak een logger voor een module.

    Gebruik:
        logger = get_logger(__name__)
        logger.info("Checkpoint geschreven", extra={"step": 100})
    """
    return logging.getLogger(name)
