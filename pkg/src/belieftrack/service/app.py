"""FastAPI application wiring the service operations and tracking sessions."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import BeliefTrackError
from . import ops
from .schemas import (
    CompareRequest,
    CompareResponse,
    EvalRequest,
    EvalResponse,
    GradcheckRequest,
    GradcheckResponse,
    HealthResponse,
    SessionCreated,
    SessionCreateRequest,
    SynthRequest,
    SynthResponse,
    TrackStateView,
    TrainRequest,
    TrainResponse,
    TurnRequest,
)
from .sessions import SessionError, SessionStore

SERVICE_VERSION = "0.1.0"


def create_app() -> FastAPI:
    app = FastAPI(title="belieftrack", version=SERVICE_VERSION)
    sessions = SessionStore()
    app.state.sessions = sessions

    @app.exception_handler(ops.ServiceError)
    async def service_error_handler(request: Request, exc: ops.ServiceError):
        return JSONResponse(
            status_code=exc.status_code, content={"detail": str(exc)}
        )

    @app.exception_handler(SessionError)
    async def session_error_handler(request: Request, exc: SessionError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(BeliefTrackError)
    async def engine_error_handler(request: Request, exc: BeliefTrackError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok", service="belieftrack", version=SERVICE_VERSION
        )

    @app.post("/train", response_model=TrainResponse)
    def train_endpoint(req: TrainRequest) -> TrainResponse:
        return ops.train_op(req)

    @app.post("/evaluate", response_model=EvalResponse)
    def evaluate_endpoint(req: EvalRequest) -> EvalResponse:
        return ops.eval_op(req)

    @app.post("/synthesize", response_model=SynthResponse)
    def synthesize_endpoint(req: SynthRequest) -> SynthResponse:
        return ops.synth_op(req)

    @app.post("/gradcheck", response_model=GradcheckResponse)
    def gradcheck_endpoint(req: GradcheckRequest) -> GradcheckResponse:
        return ops.gradcheck_op(req)

    @app.post("/compare", response_model=CompareResponse)
    def compare_endpoint(req: CompareRequest) -> CompareResponse:
        return ops.compare_op(req)

    @app.post("/sessions", response_model=SessionCreated)
    def create_session(req: SessionCreateRequest) -> SessionCreated:
        try:
            session = sessions.create(req.model_path, req.vectors_path)
        except BeliefTrackError as exc:
            raise ops.ServiceError(str(exc)) from exc
        ontology = session.tracker.ontology
        return SessionCreated(
            session_id=session.session_id,
            mechanism=session.tracker.model.mechanism.kind,
            informable_slots={
                s.name: list(s.values) for s in ontology.informable_slots
            },
            requestable_slots=list(ontology.requestable_slots),
            state=sessions.view(session.session_id),
        )

    @app.get("/sessions/{session_id}", response_model=TrackStateView)
    def get_session(session_id: str) -> TrackStateView:
        return sessions.view(session_id)

    @app.post("/sessions/{session_id}/turn", response_model=TrackStateView)
    def session_turn(session_id: str, req: TurnRequest) -> TrackStateView:
        return sessions.step(session_id, req.utterance, req.system_acts)

    @app.post("/sessions/{session_id}/reset", response_model=TrackStateView)
    def session_reset(session_id: str) -> TrackStateView:
        return sessions.reset(session_id)

    @app.delete("/sessions/{session_id}")
    def session_delete(session_id: str) -> dict:
        sessions.delete(session_id)
        return {"deleted": session_id}

    return app
