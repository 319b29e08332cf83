"""Optionele run-registry in een SQL database.

De run-map blijft de bron van waarheid; de registry is een audit trail van
runs, checkpoints, alerts en eval-rapporten. Zonder DATABASE_URL zijn alle
functies no-ops. Databasefouten worden gelogd en breken een run nooit af.
"""
import datetime
import os

import config
from logging_config import get_logger

logger = get_logger(__name__)

_APP_DIR = os.path.dirname(os.path.abspath(__file__))


def _run_alembic_migrations(database_url):
    """Draai Alembic migraties (upgrade to head)."""
    from alembic import command
    from alembic.config import Config

    alembic_cfg = Config(os.path.join(_APP_DIR, "alembic.ini"))
    alembic_cfg.set_main_option("script_location", os.path.join(_APP_DIR, "alembic"))
    alembic_cfg.attributes["database_url"] = database_url
    alembic_cfg.attributes["keep_logging"] = True
    command.upgrade(alembic_cfg, "head")
    logger.info("Alembic migraties uitgevoerd")


def init_registry(database_url=None):
    """Initialiseer de registry als er een database is geconfigureerd.

    Returns: True als de registry actief is
    """
    from db.models import Base
    from db.session import init_db
    import db.session

    url = config.DATABASE_URL if database_url is None else database_url
    if not url:
        logger.debug("Registry uit, geen DATABASE_URL")
        return False
    try:
        init_db(url, create_tables=False)
    except Exception as e:
        logger.warning("Registry niet beschikbaar", extra={"error": str(e)})
        return False

    try:
        _run_alembic_migrations(url)
    except Exception as e:
        logger.warning("Alembic migraties overgeslagen, create_all fallback",
                       extra={"error": str(e)})
        Base.metadata.create_all(bind=db.session.engine)
    return True


def registry_enabled():
    from db.session import db_available
    return db_available()


def _guarded(action, default=None):
    """Voer een registry-actie uit; fouten worden gelogd, niet doorgegeven."""
    if not registry_enabled():
        return default
    from db.session import get_session
    try:
        with get_session() as session:
            return action(session)
    except Exception as e:
        logger.warning("Registry schrijven mislukt", extra={"error": str(e)})
        return default


def record_run_started(metadata, out_dir, resume=False):
    """Registreer een (hervatte) run.

    Returns: run id, of None als de registry uit staat
    """
    from db.models import TrainingRun

    def action(session):
        run = TrainingRun(
            run_dir=os.path.abspath(out_dir),
            config_hash=metadata["config_hash"],
            manifest_hash=metadata["manifest_hash"],
            tool_version=metadata.get("tool_version", ""),
            stage=metadata.get("stage", 1),
            resumed=1 if resume else 0,
            status="gestart",
        )
        session.add(run)
        session.flush()
        return run.id

    run_id = _guarded(action)
    if run_id is not None:
        logger.info("Run geregistreerd", extra={"run_id": run_id, "resume": resume})
    return run_id


def record_checkpoint(run_id, step, kind, path):
    if run_id is None:
        return
    from db.models import CheckpointRecord

    def action(session):
        session.add(CheckpointRecord(run_id=run_id, step=step, kind=kind, path=str(path)))

    _guarded(action)


def record_alerts(run_id, alerts):
    if run_id is None or not alerts:
        return
    from db.models import AlertRecord

    def action(session):
        for alert in alerts:
            session.add(AlertRecord(
                run_id=run_id,
                kind=alert.kind,
                task=alert.task,
                start_step=alert.start_step,
                end_step=alert.end_step,
                evidence=alert.evidence,
            ))

    _guarded(action)


def record_run_finished(run_id, status, summary=None, error=None):
    """Zet de eindstatus (voltooid of mislukt) van een run."""
    if run_id is None:
        return
    from db.models import TrainingRun

    def action(session):
        run = session.get(TrainingRun, run_id)
        if run is None:
            return
        run.status = status
        run.completed_at = datetime.datetime.utcnow()
        if summary is not None:
            run.summary = summary
            run.steps = summary.get("steps", 0)
        if error:
            run.error_message = error

    _guarded(action)


def record_eval(report, name):
    """Bewaar een eval-rapport. Returns: record id of None."""
    from db.models import EvalRecord

    def action(session):
        record = EvalRecord(name=name, protocol=report["protocol"], report=report)
        session.add(record)
        session.flush()
        return record.id

    return _guarded(action)


def list_eval_reports(protocol=None):
    """Geregistreerde eval-rapporten als (naam, rapport) paren, oudste eerst."""
    from db.models import EvalRecord

    def action(session):
        query = session.query(EvalRecord)
        if protocol:
            query = query.filter(EvalRecord.protocol == protocol)
        return [(r.name, r.report) for r in query.order_by(EvalRecord.id).all()]

    return _guarded(action, default=[])


def list_runs(run_dir=None):
    from db.models import TrainingRun

    def action(session):
        query = session.query(TrainingRun)
        if run_dir:
            query = query.filter(TrainingRun.run_dir == os.path.abspath(run_dir))
        return [r.to_dict() for r in query.order_by(TrainingRun.id).all()]

    return _guarded(action, default=[])
