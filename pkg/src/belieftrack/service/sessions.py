"""In-memory tracking sessions: one live belief state per dialogue client."""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass

from ..corpus import CONFIRM, REQUEST, SystemAct, Turn, tokenize
from ..errors import BeliefTrackError
from ..evaluation import (
    TrackState,
    Tracker,
    initial_track_state,
    step_track_state,
)
from ..model import load_model, store_for_model
from ..ontology import DONTCARE
from .schemas import SystemActModel, TrackStateView


class SessionError(BeliefTrackError):
    """Unknown session."""


class SessionInputError(BeliefTrackError):
    """Malformed turn input: acts referencing things outside the ontology."""


@dataclass
class Session:
    session_id: str
    tracker: Tracker
    state: TrackState
    lock: threading.Lock


def _state_view(
    session_id: str,
    tracker: Tracker,
    state: TrackState,
    requests: frozenset[str] = frozenset(),
    request_scores: dict[str, float] | None = None,
) -> TrackStateView:
    belief = {}
    for slot in tracker.ontology.informable_slots:
        vec = state.belief[slot.name]
        belief[slot.name] = {
            slot.label_at(i): float(vec[i]) for i in range(slot.dimension)
        }
    return TrackStateView(
        session_id=session_id,
        turn_index=state.turn_index,
        belief=belief,
        goals=dict(state.goals),
        requests=sorted(requests),
        request_scores=request_scores or {},
    )


def build_turn(tracker: Tracker, utterance: str, acts: list[SystemActModel]) -> Turn:
    """A live turn: user tokens plus validated system acts, no gold fields."""
    system_acts = []
    for act in acts:
        slot = act.slot.strip().lower()
        if not tracker.ontology.has_slot(slot):
            raise SessionInputError(f"system act references unknown slot {slot!r}")
        if act.kind == REQUEST:
            system_acts.append(SystemAct(kind=REQUEST, slot=slot))
        else:
            if act.value is None:
                raise SessionInputError("confirm act needs a value")
            value = act.value.strip().lower()
            slot_obj = tracker.ontology.slot(slot)
            if value != DONTCARE and value not in slot_obj.values:
                raise SessionInputError(
                    f"confirm act references unknown value {slot!r}={value!r}"
                )
            system_acts.append(SystemAct(kind=CONFIRM, slot=slot, value=value))
    return Turn(
        user_tokens=tokenize(utterance),
        system_acts=tuple(system_acts),
        turn_goal_labels={},
        gold_goal_state={},
        gold_requests=frozenset(),
    )


class SessionStore:
    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, model_path: str, vectors_path: str | None = None) -> Session:
        model = load_model(model_path)
        store = store_for_model(model, vectors_path)
        tracker = Tracker(model=model, store=store)
        session = Session(
            session_id=uuid.uuid4().hex,
            tracker=tracker,
            state=initial_track_state(tracker.ontology),
            lock=threading.Lock(),
        )
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionError(f"no session {session_id!r}")
        return session

    def delete(self, session_id: str):
        with self._lock:
            if self._sessions.pop(session_id, None) is None:
                raise SessionError(f"no session {session_id!r}")

    def view(self, session_id: str) -> TrackStateView:
        session = self.get(session_id)
        with session.lock:
            return _state_view(session.session_id, session.tracker, session.state)

    def reset(self, session_id: str) -> TrackStateView:
        session = self.get(session_id)
        with session.lock:
            session.state = initial_track_state(session.tracker.ontology)
            return _state_view(session.session_id, session.tracker, session.state)

    def step(
        self, session_id: str, utterance: str, acts: list[SystemActModel]
    ) -> TrackStateView:
        session = self.get(session_id)
        with session.lock:
            turn = build_turn(session.tracker, utterance, acts)
            session.state, view = step_track_state(
                session.tracker, session.state, turn
            )
            return _state_view(
                session.session_id,
                session.tracker,
                session.state,
                view.requests,
                view.request_scores,
            )
