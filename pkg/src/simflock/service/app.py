"""FastAPI service: submit studies, poll status, fetch reports and info.

Studies run on background threads; the registry is in-memory, so reports
live as long as the process (and on disk under each study's out_dir).
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..cli import INFO_TOPICS, _INFO
from ..errors import InvalidSpecError, SimflockError
from ..studyfile import lower_study
from ..workflows import StudyReport, run_study
from .models import (
    HealthResponse,
    InfoResponse,
    StudyFileModel,
    StudyList,
    StudyStatus,
    StudySubmitted,
)


@dataclass
class _StudyEntry:
    study_id: str
    workflow: str
    status: str = "running"  # running | completed | failed
    error: str | None = None
    report: StudyReport | None = None


class _Registry:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._studies: dict[str, _StudyEntry] = {}

    def add(self, entry: _StudyEntry) -> None:
        with self._lock:
            self._studies[entry.study_id] = entry

    def get(self, study_id: str) -> _StudyEntry | None:
        with self._lock:
            return self._studies.get(study_id)

    def all(self) -> list[_StudyEntry]:
        with self._lock:
            return list(self._studies.values())


def _status_of(entry: _StudyEntry) -> StudyStatus:
    summary = None
    if entry.report is not None:
        summary = entry.report.to_json_dict()["summary"]
    return StudyStatus(
        study_id=entry.study_id,
        workflow=entry.workflow,
        status=entry.status,
        error=entry.error,
        summary=summary,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="simflock", version=__version__)
    registry = _Registry()
    app.state.registry = registry

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/info/{topic}", response_model=InfoResponse)
    def info(topic: str) -> InfoResponse:
        if topic not in INFO_TOPICS:
            raise HTTPException(404, f"unknown topic {topic!r}; choose from {INFO_TOPICS}")
        return InfoResponse(topic=topic, text=_INFO[topic])

    @app.post("/studies", response_model=StudySubmitted, status_code=202)
    def submit(study: StudyFileModel) -> StudySubmitted:
        if not study.auto_run:
            raise HTTPException(400, "the service only runs auto_run studies")
        try:
            loaded = lower_study(study)
            from ..workflows import validate_spec

            reasons = validate_spec(loaded.spec)
            if reasons:
                raise InvalidSpecError(reasons)
        except InvalidSpecError as exc:
            raise HTTPException(400, detail={"reasons": exc.reasons}) from None

        entry = _StudyEntry(study_id=uuid.uuid4().hex[:12], workflow=study.workflow)
        registry.add(entry)

        def work() -> None:
            try:
                entry.report = run_study(loaded.spec, loaded.pool, out_dir=loaded.out_dir)
                entry.status = "completed"
            except SimflockError as exc:
                entry.status = "failed"
                entry.error = str(exc)
            except Exception as exc:  # keep the service alive on surprises
                entry.status = "failed"
                entry.error = f"{type(exc).__name__}: {exc}"

        threading.Thread(target=work, daemon=True, name=f"study-{entry.study_id}").start()
        return StudySubmitted(study_id=entry.study_id, status=entry.status)

    @app.get("/studies", response_model=StudyList)
    def list_studies() -> StudyList:
        return StudyList(studies=[_status_of(e) for e in registry.all()])

    @app.get("/studies/{study_id}", response_model=StudyStatus)
    def study_status(study_id: str) -> StudyStatus:
        entry = registry.get(study_id)
        if entry is None:
            raise HTTPException(404, f"no study {study_id!r}")
        return _status_of(entry)

    @app.get("/studies/{study_id}/report")
    def study_report(study_id: str) -> dict:
        entry = registry.get(study_id)
        if entry is None:
            raise HTTPException(404, f"no study {study_id!r}")
        if entry.status == "running":
            raise HTTPException(409, "study is still running")
        if entry.report is None:
            raise HTTPException(404, f"study failed: {entry.error}")
        return entry.report.to_json_dict()

    return app


app = create_app()
