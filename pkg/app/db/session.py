"""Database sessie management voor de planforge registry."""
from contextlib import contextmanager

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from db.models import Base

engine = None
SessionLocal = None


def init_db(database_url, create_tables=True):
    """Initialiseer de database engine en optioneel de tabellen.

    Returns: True als de registry actief is
    """
    global engine, SessionLocal

    if not database_url:
        return False

    if database_url.startswith("sqlite"):
        engine = create_engine(database_url)
    else:
        engine = create_engine(
            database_url,
            pool_size=5,
            max_overflow=10,
            pool_pre_ping=True,
        )
    SessionLocal = sessionmaker(bind=engine, autoflush=False, expire_on_commit=False)

    if create_tables:
        Base.metadata.create_all(bind=engine)
    return True


def close_db():
    global engine, SessionLocal
    if engine is not None:
        engine.dispose()
    engine = None
    SessionLocal = None


def db_available():
    """Check of de database beschikbaar is."""
    return engine is not None and SessionLocal is not None


@contextmanager
def get_session():
    """Context manager voor database sessies.

    Gebruik:
        with get_session() as session:
            session.query(...)
    """
    if not db_available():
        raise RuntimeError("Database niet beschikbaar")

    session = SessionLocal()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()
