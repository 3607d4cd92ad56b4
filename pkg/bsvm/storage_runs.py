from __future__ import annotations

import json
import logging
from typing import Any, Dict, List, Optional

from sqlalchemy.exc import SQLAlchemyError
from sqlmodel import Session, desc, select

from . import storage_db
from .models import RunManifest
from .storage_models import RunRow

logger = logging.getLogger("bsvm.storage")

engine = storage_db.engine


def set_engine(value) -> None:
    global engine
    engine = value


def _dumps(value: Any) -> str:
    return json.dumps(value, separators=(",", ":"), sort_keys=True, default=str)


def record_run(manifest: RunManifest) -> Optional[RunRow]:
    """Append a run to the ledger. Failures are logged, never raised."""
    if engine is None:
        return None
    row = RunRow(
        command=manifest.command,
        version=manifest.version,
        seed=manifest.seed,
        config_json=_dumps(manifest.config),
        outputs_json=_dumps(manifest.outputs),
        timings_json=_dumps(manifest.timings),
        exit_code=manifest.exit_code,
        started_at=manifest.started_at,
        finished_at=manifest.finished_at,
    )
    try:
        with Session(engine) as s:
            s.add(row)
            s.commit()
            s.refresh(row)
            return row
    except SQLAlchemyError as exc:
        logger.warning("could not record run in ledger: %s", exc)
        return None


def list_runs(*, limit: int = 20, command: str = "") -> List[Dict[str, Any]]:
    if engine is None:
        return []
    safe_limit = max(1, min(int(limit or 20), 500))
    with Session(engine) as s:
        stmt = select(RunRow)
        command = str(command or "").strip()
        if command:
            stmt = stmt.where(RunRow.command == command)
        rows = s.exec(stmt.order_by(desc(RunRow.run_id)).limit(safe_limit)).all()
    return [
        {
            "run_id": r.run_id,
            "command": r.command,
            "version": r.version,
            "seed": r.seed,
            "exit_code": r.exit_code,
            "started_at": r.started_at,
            "finished_at": r.finished_at,
            "config": json.loads(r.config_json),
            "outputs": json.loads(r.outputs_json),
            "timings": json.loads(r.timings_json),
        }
        for r in rows
    ]
