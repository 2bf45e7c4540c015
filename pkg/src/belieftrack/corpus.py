"""Dialogue corpus ingestion and the turn-level training representation.

Reads the WOZ-shaped JSON corpus format (also produced by the synthetic
generator): an array of ``{"dialogue_idx", "dialogue": [turn, ...]}`` where
each turn carries ``transcript``, ``system_acts`` and ``turn_label``.
Cumulative gold goal states are recomputed from the per-turn labels with the
override rule, so any ``belief_state`` field present in the source is ignored.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass

import numpy as np

from .errors import CorpusError
from .ontology import DONTCARE, NONE, Ontology, Slot

REQUEST = "request"
CONFIRM = "confirm"

_PUNCT_TO_SPACE = str.maketrans({c: " " for c in string.punctuation})


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase, map ASCII punctuation to spaces, split on whitespace."""
    return tuple(text.lower().translate(_PUNCT_TO_SPACE).split())


@dataclass(frozen=True)
class SystemAct:
    kind: str  # REQUEST or CONFIRM
    slot: str
    value: str | None = None


@dataclass(frozen=True)
class Turn:
    user_tokens: tuple[str, ...]
    system_acts: tuple[SystemAct, ...]
    turn_goal_labels: dict[str, str]  # slot -> label asserted this turn
    gold_goal_state: dict[str, str]  # slot -> cumulative label, total over slots
    gold_requests: frozenset[str]


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Turn, ...]


def _parse_system_acts(raw, ontology: Ontology, where: str) -> tuple[SystemAct, ...]:
    acts = []
    for entry in raw:
        if isinstance(entry, str):
            slot = entry.strip().lower()
            if not ontology.has_slot(slot):
                raise CorpusError(f"{where}: system request for unknown slot {slot!r}")
            acts.append(SystemAct(kind=REQUEST, slot=slot))
        elif isinstance(entry, (list, tuple)) and len(entry) == 2:
            slot = str(entry[0]).strip().lower()
            value = str(entry[1]).strip().lower()
            if not ontology.has_slot(slot):
                raise CorpusError(f"{where}: system confirm for unknown slot {slot!r}")
            slot_obj = ontology.slot(slot)
            if value != DONTCARE and value not in slot_obj.values:
                raise CorpusError(
                    f"{where}: system confirm for unknown value {slot!r}={value!r}"
                )
            acts.append(SystemAct(kind=CONFIRM, slot=slot, value=value))
        else:
            raise CorpusError(f"{where}: malformed system act {entry!r}")
    return tuple(acts)


def _parse_turn_label(raw, ontology: Ontology, where: str):
    goal_labels: dict[str, str] = {}
    requests: set[str] = set()
    for entry in raw:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise CorpusError(f"{where}: malformed turn label {entry!r}")
        slot = str(entry[0]).strip().lower()
        value = str(entry[1]).strip().lower()
        if slot == REQUEST:
            if value not in ontology.requestable_slots:
                raise CorpusError(f"{where}: request for unknown slot {value!r}")
            requests.add(value)
            continue
        if not ontology.has_slot(slot):
            raise CorpusError(f"{where}: turn label for unknown slot {slot!r}")
        slot_obj = ontology.slot(slot)
        if value not in (DONTCARE, NONE) and value not in slot_obj.values:
            raise CorpusError(f"{where}: label {slot!r}={value!r} not in ontology")
        goal_labels[slot] = value
    return goal_labels, requests


def load_woz(source, ontology: Ontology) -> list[Dialogue]:
    """Load dialogues, computing cumulative gold states by the override rule."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise CorpusError(
            f"corpus is not valid JSON (line {exc.lineno}): {exc.msg}"
        ) from exc
    if not isinstance(doc, list):
        raise CorpusError("corpus root must be a JSON array of dialogues")

    dialogues = []
    for d_pos, raw_dialogue in enumerate(doc):
        if not isinstance(raw_dialogue, dict):
            raise CorpusError(f"dialogue #{d_pos} is not an object")
        dialogue_id = str(raw_dialogue.get("dialogue_idx", d_pos))
        raw_turns = raw_dialogue.get("dialogue")
        if not isinstance(raw_turns, list) or not raw_turns:
            raise CorpusError(f"dialogue {dialogue_id}: no turns")

        state = {slot.name: NONE for slot in ontology.informable_slots}
        turns = []
        for t_pos, raw_turn in enumerate(raw_turns):
            where = f"dialogue {dialogue_id}, turn {t_pos}"
            if not isinstance(raw_turn, dict):
                raise CorpusError(f"{where}: turn is not an object")
            transcript = raw_turn.get("transcript", "")
            acts = _parse_system_acts(raw_turn.get("system_acts", []), ontology, where)
            goal_labels, requests = _parse_turn_label(
                raw_turn.get("turn_label", []), ontology, where
            )
            state = dict(state)
            state.update(goal_labels)
            turns.append(
                Turn(
                    user_tokens=tokenize(transcript),
                    system_acts=acts,
                    turn_goal_labels=goal_labels,
                    gold_goal_state=state,
                    gold_requests=frozenset(requests),
                )
            )
        dialogues.append(Dialogue(id=dialogue_id, turns=tuple(turns)))
    return dialogues


def gold_state_vector(turn: Turn, slot: Slot) -> np.ndarray:
    """One-hot distribution at the turn's cumulative gold label for the slot."""
    vec = np.zeros(slot.dimension)
    vec[slot.value_index(turn.gold_goal_state[slot.name])] = 1.0
    return vec


def initial_state_vector(slot: Slot) -> np.ndarray:
    """Belief state before the first turn: one-hot on the none sentinel."""
    vec = np.zeros(slot.dimension)
    vec[slot.none_index] = 1.0
    return vec


def dialogues_to_woz(dialogues: list[Dialogue]) -> list[dict]:
    """Serialize back to the corpus file shape; round-trips with load_woz."""
    out = []
    for dialogue in dialogues:
        raw_turns = []
        for turn in dialogue.turns:
            acts = []
            for act in turn.system_acts:
                if act.kind == REQUEST:
                    acts.append(act.slot)
                else:
                    acts.append([act.slot, act.value])
            labels = [[s, v] for s, v in turn.turn_goal_labels.items()]
            labels.extend([REQUEST, name] for name in sorted(turn.gold_requests))
            belief = [
                {"slots": [[s, v]], "act": "inform"}
                for s, v in turn.gold_goal_state.items()
                if v != NONE
            ]
            belief.extend(
                {"slots": [["slot", name]], "act": "request"}
                for name in sorted(turn.gold_requests)
            )
            raw_turns.append(
                {
                    "transcript": " ".join(turn.user_tokens),
                    "system_acts": acts,
                    "turn_label": labels,
                    "belief_state": belief,
                }
            )
        out.append({"dialogue_idx": dialogue.id, "dialogue": raw_turns})
    return out
