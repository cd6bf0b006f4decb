"""Local HTTP API and static host for the review web UI.

One background iteration may run per session at a time; concurrent iterate
requests get 409.  Label posts are applied to the latest annotation file
under the same per-session lock, so a label never races an iteration's
read-modify-write.
"""

from __future__ import annotations

import threading
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
from fastapi import FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import service
from .cli import _ensemble_config
from .ensemble import EnsembleConfig
from .performance import estimate_performance
from .reporting import summarise_iterations
from .screening import ScreeningError, run_cr_iteration
from .store import Workspace, latest_annotation

API_PREFIX = "/api/v1"

_RECORD_FIELDS = ["ID", "Title", "Abstract", "Authors", "Journal", "Year",
                  "DOI", "Order", "Pred_Low", "Pred_Med", "Pred_Up"]


class LabelRequest(BaseModel):
    record_id: str
    label: str


class IterateRequest(BaseModel):
    stop_on_unreviewed: bool = True
    overrides: dict = Field(default_factory=dict)


class SelectionRequest(BaseModel):
    selected: list[str] = Field(default_factory=list)
    edited: dict[str, str] = Field(default_factory=dict)


class _SessionRunner:
    """Tracks the background iteration thread for one session."""

    def __init__(self):
        self.lock = threading.Lock()
        self.thread: threading.Thread | None = None
        self.outcome: dict | None = None

    @property
    def running(self) -> bool:
        return self.thread is not None and self.thread.is_alive()


def _row_payload(row: pd.Series) -> dict:
    out = {}
    for field in _RECORD_FIELDS:
        value = row.get(field, "")
        if isinstance(value, float) and np.isnan(value):
            value = None
        out[field.lower()] = value
    return out


def create_app(ws: Workspace, config: EnsembleConfig | None = None) -> FastAPI:
    app = FastAPI(title="bayscreen", docs_url=None, redoc_url=None)
    base_config = config or _ensemble_config({})
    runners: dict[str, _SessionRunner] = {}
    runners_lock = threading.Lock()

    def runner_for(session: str) -> _SessionRunner:
        with runners_lock:
            return runners.setdefault(session, _SessionRunner())

    def require_session(session: str) -> None:
        if session not in ws.session_names():
            raise HTTPException(404, f"unknown session: {session}")

    @app.get(API_PREFIX + "/health")
    def health():
        return {"status": "ok"}

    @app.get(API_PREFIX + "/sessions")
    def sessions():
        return {"sessions": [service.session_status(ws, name)
                             for name in ws.session_names()]}

    @app.get(API_PREFIX + "/sessions/{session}/status")
    def status(session: str):
        require_session(session)
        runner = runner_for(session)
        payload = service.session_status(ws, session)
        payload["iterating"] = runner.running
        payload["last_outcome"] = runner.outcome
        return payload

    @app.get(API_PREFIX + "/sessions/{session}/records")
    def records(session: str, status: str = "needs_review",
                offset: int = Query(0, ge=0),
                limit: int = Query(50, ge=1, le=500)):
        require_session(session)
        if status != "needs_review":
            raise HTTPException(422, f"unsupported status filter: {status}")
        try:
            table = service.needs_review_table(ws, session)
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        page = table.iloc[offset:offset + limit]
        return {
            "total": len(table),
            "offset": offset,
            "records": [_row_payload(row) for _, row in page.iterrows()],
        }

    @app.post(API_PREFIX + "/sessions/{session}/labels")
    def post_label(session: str, body: LabelRequest):
        require_session(session)
        runner = runner_for(session)
        with runner.lock:
            if runner.running:
                raise HTTPException(409, "an iteration is running; retry when "
                                         "it finishes")
            try:
                return service.apply_label(ws, session, body.record_id,
                                           body.label)
            except ValueError as exc:
                raise HTTPException(422, str(exc))
            except KeyError as exc:
                raise HTTPException(404, str(exc.args[0]))
            except FileNotFoundError as exc:
                raise HTTPException(404, str(exc))

    @app.post(API_PREFIX + "/sessions/{session}/iterate", status_code=202)
    def iterate(session: str, body: IterateRequest):
        require_session(session)
        if latest_annotation(ws, session) is None:
            raise HTTPException(404, f"session {session!r} has no annotation file")
        runner = runner_for(session)
        with runner.lock:
            if runner.running:
                raise HTTPException(409, "iteration already running")
            try:
                run_config = _ensemble_config({}, **body.overrides) \
                    if body.overrides else base_config
            except (TypeError, ValueError) as exc:
                raise HTTPException(422, f"bad overrides: {exc}")

            def work():
                try:
                    result = run_cr_iteration(
                        ws, session, run_config,
                        stop_on_unreviewed=body.stop_on_unreviewed)
                    runner.outcome = {
                        "status": "done",
                        "n_to_review": result.n_to_review,
                        "n_new_positives": result.n_new_positives,
                        "replications": result.replications,
                    }
                except ScreeningError as exc:
                    runner.outcome = {"status": exc.status, "detail": str(exc)}
                except Exception as exc:
                    runner.outcome = {"status": "error", "detail": str(exc)}

            runner.outcome = None
            runner.thread = threading.Thread(target=work, daemon=True)
            runner.thread.start()
        return {"status": "started"}

    @app.get(API_PREFIX + "/sessions/{session}/densities")
    def densities(session: str):
        require_session(session)
        try:
            table = service.compute_densities(ws, session)
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        groups = {}
        for label, part in table.groupby("label", sort=False):
            groups[label] = {"x": part["x"].tolist(),
                             "density": part["density"].tolist()}
        return {"densities": groups}

    @app.get(API_PREFIX + "/sessions/{session}/performance")
    def performance(session: str):
        require_session(session)
        try:
            summary = estimate_performance(ws, session)
        except (FileNotFoundError, ValueError) as exc:
            raise HTTPException(404, str(exc))
        frame = summary.to_frame()
        payload = {
            "rows": frame.to_dict(orient="records"),
            "converged": summary.converged,
        }
        if summary.curve is not None:
            payload["curve"] = summary.curve.to_dict(orient="list")
        return payload

    @app.get(API_PREFIX + "/sessions/{session}/trends")
    def trends(session: str):
        require_session(session)
        table = summarise_iterations(ws, session)
        return {"iterations": table.to_dict(orient="records")}

    @app.get(API_PREFIX + "/sessions/{session}/rules")
    def rules(session: str):
        require_session(session)
        path = service.selection_sheet_path(ws, session)
        if not path.is_file():
            return {"rules": []}
        sheet = pd.read_csv(path).fillna("")
        return {"rules": sheet.to_dict(orient="records")}

    @app.post(API_PREFIX + "/sessions/{session}/rules")
    def generate_rules(session: str):
        require_session(session)
        try:
            sheet = service.generate_selection_sheet(ws, session)
        except (FileNotFoundError, ValueError) as exc:
            raise HTTPException(409, str(exc))
        return {"rules": sheet.fillna("").to_dict(orient="records")}

    @app.post(API_PREFIX + "/sessions/{session}/rules/selection")
    def select_rules(session: str, body: SelectionRequest):
        require_session(session)
        path = service.selection_sheet_path(ws, session)
        if not path.is_file():
            raise HTTPException(404, "no selection sheet; generate rules first")
        sheet = pd.read_csv(path).fillna("")
        sheet["selected_rule"] = sheet["rule"].isin(body.selected) \
            .map({True: "TRUE", False: ""})
        sheet["edited_rule"] = sheet["rule"].map(body.edited).fillna("")
        sheet.to_csv(path, index=False)
        try:
            return service.finalize_rules(ws, session)
        except ValueError as exc:
            raise HTTPException(422, str(exc))

    webui = resources.files("bayscreen") / "webui"
    if Path(str(webui)).is_dir():
        app.mount("/", StaticFiles(directory=str(webui), html=True),
                  name="webui")

    return app
