from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

from sqlalchemy.engine import Engine
from sqlmodel import SQLModel, create_engine

from . import storage_models  # noqa: F401  (registers tables on SQLModel.metadata)

DB_FILENAME = "bsvm_runs.db"

# No ledger until configure() is called with a data directory.
engine: Optional[Engine] = None


def db_url(data_dir: Union[str, Path]) -> str:
    path = Path(data_dir)
    path.mkdir(parents=True, exist_ok=True)
    return f"sqlite:///{path / DB_FILENAME}"


def init_db(target: Engine) -> None:
    SQLModel.metadata.create_all(target)


def configure(data_dir: Union[str, Path]) -> Engine:
    global engine
    engine = create_engine(db_url(data_dir), connect_args={"check_same_thread": False, "timeout": 3.0})
    init_db(engine)
    return engine
