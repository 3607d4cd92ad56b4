from __future__ import annotations

from typing import Optional

from sqlmodel import Field, SQLModel


class RunRow(SQLModel, table=True):
    run_id: Optional[int] = Field(default=None, primary_key=True)
    command: str = Field(index=True)
    version: str
    seed: Optional[int] = None
    config_json: str
    outputs_json: str
    timings_json: str
    exit_code: int = 0
    started_at: str = Field(index=True)
    finished_at: str
