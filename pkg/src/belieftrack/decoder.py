"""Turn-level semantic decoder.

Produces one detection score per candidate slot-value pair (declared values
plus dontcare) from the user utterance, the candidate representation and the
preceding system acts, plus a constant-bias score for the none sentinel.

The interaction is a single gated bilinear form: the utterance vector ``r``
(sum of token embeddings) is combined componentwise with a linear map of the
candidate vector ``c``, then read out through a learned vector. System
requests and confirmations enter as scalar logit gates rather than vector
interactions, which is the smallest mechanism that lets them shift decisions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import CONFIRM, REQUEST, Turn, tokenize
from .embeddings import VectorStore
from .errors import DimensionMismatchError, UnknownValueError
from .ontology import DONTCARE, NONE, Ontology, Slot
from .update import sigmoid

REQUEST_MARKER_TOKEN = "request"


@dataclass
class DecoderParams:
    w_sem: np.ndarray  # (d, d) map applied to candidate vectors
    w_out: np.ndarray  # (d,) readout
    bias_out: float
    w_req_gate: float
    w_conf_gate: float
    none_bias: float

    @property
    def dimension(self) -> int:
        return self.w_out.shape[0]

    def validate(self):
        d = self.dimension
        if self.w_sem.shape != (d, d):
            raise DimensionMismatchError(
                f"w_sem must be {d}x{d}, got {self.w_sem.shape}"
            )
        for name in ("w_sem", "w_out"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DimensionMismatchError(f"{name} contains non-finite entries")
        for name in ("bias_out", "w_req_gate", "w_conf_gate", "none_bias"):
            if not np.isfinite(getattr(self, name)):
                raise DimensionMismatchError(f"{name} is non-finite")


def init_decoder_params(dimension: int, rng: np.random.Generator) -> DecoderParams:
    # Identity-leaning semantic map with a small random readout so gradients
    # reach both from the first step.
    w_sem = np.eye(dimension) + rng.uniform(-0.01, 0.01, (dimension, dimension))
    w_out = rng.uniform(-0.05, 0.05, dimension)
    return DecoderParams(
        w_sem=w_sem,
        w_out=w_out,
        bias_out=0.0,
        w_req_gate=0.0,
        w_conf_gate=0.0,
        none_bias=0.0,
    )


def utterance_repr(store: VectorStore, user_tokens) -> np.ndarray:
    """Sum of token embeddings; the zero vector for an empty utterance."""
    r = np.zeros(store.dimension)
    for token in user_tokens:
        r += store.embed_token(token)
    return r


def candidate_repr(store: VectorStore, slot: Slot, value_label: str) -> np.ndarray:
    """Slot-name phrase embedding plus value phrase embedding.

    Multi-word names embed as the mean of their word vectors; dontcare embeds
    through the literal token. The none sentinel has no candidate vector.
    """
    label = value_label.lower()
    if label == NONE:
        raise UnknownValueError("the none sentinel is not a decodable candidate")
    if label != DONTCARE and label not in slot.values:
        raise UnknownValueError(f"slot {slot.name!r} has no value {value_label!r}")
    slot_part = store.embed_phrase(tokenize(slot.name))
    value_tokens = (DONTCARE,) if label == DONTCARE else tokenize(label)
    return slot_part + store.embed_phrase(value_tokens)


def request_candidate_repr(store: VectorStore, slot_name: str) -> np.ndarray:
    return store.embed_phrase(tokenize(slot_name)) + store.embed_token(
        REQUEST_MARKER_TOKEN
    )


@dataclass
class CandidateSet:
    """Precomputed candidate vectors for one ontology under one store."""

    per_slot: dict[str, np.ndarray]  # slot name -> (|V|+1, d) rows
    request: dict[str, np.ndarray]  # requestable name -> (d,)

    @classmethod
    def build(cls, ontology: Ontology, store: VectorStore) -> "CandidateSet":
        per_slot = {}
        for slot in ontology.informable_slots:
            rows = [candidate_repr(store, slot, label) for label in slot.candidate_labels]
            per_slot[slot.name] = np.stack(rows)
        request = {
            name: request_candidate_repr(store, name)
            for name in ontology.requestable_slots
        }
        return cls(per_slot=per_slot, request=request)


def _slot_candidates(
    store: VectorStore, slot: Slot, candidates: CandidateSet | None
) -> np.ndarray:
    if candidates is not None:
        return candidates.per_slot[slot.name]
    rows = [candidate_repr(store, slot, label) for label in slot.candidate_labels]
    return np.stack(rows)


def act_gates(params: DecoderParams, turn: Turn, slot: Slot) -> np.ndarray:
    """Per-candidate additive logit gates from the preceding system acts.

    Presence-based: a request for the slot adds the request gate to every
    candidate once; a confirmation adds the confirm gate to the confirmed
    candidate once.
    """
    gates = np.zeros(len(slot.candidate_labels))
    requested = any(
        act.kind == REQUEST and act.slot == slot.name for act in turn.system_acts
    )
    if requested:
        gates += params.w_req_gate
    confirmed = {
        slot.value_index(act.value)
        for act in turn.system_acts
        if act.kind == CONFIRM and act.slot == slot.name
    }
    for index in confirmed:
        gates[index] += params.w_conf_gate
    return gates


def candidate_logits(
    params: DecoderParams,
    r: np.ndarray,
    candidate_rows: np.ndarray,
    gates: np.ndarray | None = None,
) -> np.ndarray:
    """``w_out . (r * (w_sem c)) + bias (+ gates)`` for each candidate row."""
    if r.shape[0] != params.dimension:
        raise DimensionMismatchError(
            f"utterance vector has dimension {r.shape[0]}, decoder expects {params.dimension}"
        )
    projected = candidate_rows @ params.w_sem.T  # (n_cand, d)
    logits = (projected * r) @ params.w_out + params.bias_out
    if gates is not None:
        logits = logits + gates
    return logits


def decode_turn_logits(
    params: DecoderParams,
    store: VectorStore,
    turn: Turn,
    slot: Slot,
    candidates: CandidateSet | None = None,
) -> tuple[np.ndarray, float]:
    """Candidate logits (values + dontcare) and the none logit."""
    r = utterance_repr(store, turn.user_tokens)
    rows = _slot_candidates(store, slot, candidates)
    logits = candidate_logits(params, r, rows, act_gates(params, turn, slot))
    return logits, params.none_bias


def decode_turn(
    params: DecoderParams,
    store: VectorStore,
    turn: Turn,
    slot: Slot,
    candidates: CandidateSet | None = None,
) -> np.ndarray:
    """Turn-level estimate: independent detection scores, length |V|+2.

    Components follow the slot's index layout; each lies strictly in (0, 1)
    and the vector is deliberately not normalized.
    """
    logits, none_logit = decode_turn_logits(params, store, turn, slot, candidates)
    y = np.empty(slot.dimension)
    y[:-1] = sigmoid(logits)
    y[-1] = sigmoid(none_logit)
    return y


def decode_request(
    params: DecoderParams,
    store: VectorStore,
    turn: Turn,
    slot_name: str,
    ontology: Ontology | None = None,
    candidates: CandidateSet | None = None,
) -> float:
    """Detection probability that the user requested the named slot."""
    name = slot_name.lower()
    if ontology is not None and name not in ontology.requestable_slots:
        raise UnknownValueError(f"{slot_name!r} is not a requestable slot")
    if candidates is not None:
        c = candidates.request[name]
    else:
        c = request_candidate_repr(store, name)
    r = utterance_repr(store, turn.user_tokens)
    logit = candidate_logits(params, r, c[None, :])[0]
    return float(sigmoid(logit))
