"""HTTP/JSON surface over a Platform instance.

Every handler translates between wire JSON and the in-process types;
no business logic lives here. Authentication is a single static token
checked on every route when configured.
"""

from __future__ import annotations

from dataclasses import asdict
from typing import Any

from fastapi import Depends, FastAPI, Header, HTTPException, Request, Response

from .errors import (
    IllegalTransition,
    NudgeforgeError,
    ParseError,
    UnknownExperiment,
    UnknownTrait,
    ValidationError,
)
from .experiments import experiment_from_json
from .platform import Platform
from .traits import CohortDefinition, node_from_json

TOKEN_HEADER = "x-api-token"


def create_app(platform: Platform, api_token: str | None = None) -> FastAPI:
    app = FastAPI(title="nudgeforge", docs_url=None, redoc_url=None)

    def require_token(
        x_api_token: str | None = Header(default=None, alias=TOKEN_HEADER),
    ) -> None:
        if api_token is not None and x_api_token != api_token:
            raise HTTPException(status_code=401, detail="invalid or missing API token")

    guarded = [Depends(require_token)]

    def lookup(experiment_id: str):
        try:
            return platform.runtime(experiment_id)
        except UnknownExperiment:
            raise HTTPException(
                status_code=404, detail=f"no experiment {experiment_id!r}"
            ) from None

    @app.post("/v1/ingest", dependencies=guarded)
    async def ingest(request: Request) -> Response:
        body = (await request.body()).decode("utf-8", errors="replace")
        try:
            ack = platform.ingest_wire(body)
        except NudgeforgeError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return Response(content=ack.to_wire(), media_type="text/plain")

    @app.get("/v1/subjects/{subject_id}/traits", dependencies=guarded)
    def subject_traits(subject_id: str, as_of: int) -> dict[str, Any]:
        values = platform.traits_of(subject_id, as_of)
        return {
            "subject_id": subject_id,
            "as_of_ms": as_of,
            "traits": {
                name: {"value": tv.value, "as_of_ms": tv.as_of_ms}
                for name, tv in values.items()
            },
        }

    @app.post("/v1/cohorts/evaluate", dependencies=guarded)
    def evaluate(body: dict[str, Any]) -> dict[str, Any]:
        try:
            cohort = CohortDefinition(node_from_json(body["cohort"]["predicate"]))
            as_of = int(body["as_of_ms"])
        except (KeyError, TypeError, ValueError, ParseError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        try:
            subjects = platform.cohort_members(cohort, as_of)
        except UnknownTrait as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {"as_of_ms": as_of, "subjects": subjects}

    @app.get("/v1/experiments", dependencies=guarded)
    def list_experiments() -> dict[str, Any]:
        return {"experiments": platform.list_experiments()}

    @app.post("/v1/experiments", dependencies=guarded, status_code=201)
    def create_experiment(body: dict[str, Any]) -> dict[str, Any]:
        try:
            experiment = experiment_from_json(body)
            platform.create_experiment(experiment)
        except (ParseError, ValidationError, UnknownTrait, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return platform.experiment_json(experiment.experiment_id)

    @app.get("/v1/experiments/{experiment_id}", dependencies=guarded)
    def get_experiment(experiment_id: str) -> dict[str, Any]:
        lookup(experiment_id)
        return platform.experiment_json(experiment_id)

    @app.post("/v1/experiments/{experiment_id}/{action}", dependencies=guarded)
    def control(experiment_id: str, action: str) -> dict[str, Any]:
        if action not in ("pause", "resume", "stop"):
            raise HTTPException(status_code=404, detail=f"no action {action!r}")
        lookup(experiment_id)
        try:
            status = platform.control_experiment(experiment_id, action)
        except IllegalTransition as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return {"experiment_id": experiment_id, "status": status}

    @app.get("/v1/experiments/{experiment_id}/monitor", dependencies=guarded)
    def monitor(experiment_id: str, from_day: int, to_day: int) -> dict[str, Any]:
        lookup(experiment_id)
        if from_day > to_day:
            raise HTTPException(status_code=400, detail="from_day > to_day")
        estimates = platform.monitor(experiment_id, from_day, to_day)
        return {
            "experiment_id": experiment_id,
            "from_day": from_day,
            "to_day": to_day,
            "estimates": [est.to_json() for est in estimates],
        }

    @app.get("/v1/experiments/{experiment_id}/ticks", dependencies=guarded)
    def ticks(experiment_id: str) -> dict[str, Any]:
        lookup(experiment_id)
        return {
            "experiment_id": experiment_id,
            "reports": platform.tick_reports(experiment_id),
        }

    @app.get("/v1/devices/{device_id}/nudges", dependencies=guarded)
    def poll_nudges(device_id: str) -> dict[str, Any]:
        records = platform.poll_nudges(device_id)
        return {"device_id": device_id, "nudges": [asdict(r) for r in records]}

    return app
