"""Self-fed tracking over dialogues and the evaluation metrics.

Unlike training (which teacher-forces the gold previous state), evaluation
feeds each turn the predicted previous state. Goal decisions depend on the
mechanism family: the rule-based and learned-interpolation updates go through
the threshold-and-carry rule, while the softmax updates produce proper
distributions and decide by argmax (ties broken by lowest index).

Two tracking implementations live here: a readable per-turn reference path
(`step_track_state`, used by the interactive sessions and the public metrics)
and a vectorized path over pre-decoded score tensors used inside training
validation and mechanism comparison, where it runs once per epoch. A test
pins the two paths to identical decisions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import CONFIRM, REQUEST, Dialogue, Turn, initial_state_vector
from .decoder import CandidateSet, decode_request, decode_turn, utterance_repr
from .embeddings import VectorStore
from .model import TrackerModel
from .ontology import NONE, Ontology, Slot
from .update import (
    LearnedInterpolation,
    RuleBased,
    apply_update,
    decide_goal,
    sigmoid,
)

REQUEST_THRESHOLD = 0.5

RULE_LAMBDA_GRID = tuple(round(0.05 * i, 2) for i in range(21))


@dataclass
class Tracker:
    """A model bound to its vector store, with candidate vectors precomputed."""

    model: TrackerModel
    store: VectorStore
    candidates: CandidateSet = field(init=False)

    def __post_init__(self):
        if self.store.dimension != self.model.dimension:
            raise ValueError(
                f"store dimension {self.store.dimension} does not match "
                f"model dimension {self.model.dimension}"
            )
        self.candidates = CandidateSet.build(self.model.ontology, self.store)

    @property
    def ontology(self) -> Ontology:
        return self.model.ontology


@dataclass
class TrackState:
    belief: dict[str, np.ndarray]
    goals: dict[str, str]
    turn_index: int = 0


@dataclass
class TurnView:
    turn_index: int
    belief: dict[str, np.ndarray]
    goals: dict[str, str]
    requests: frozenset[str]
    request_scores: dict[str, float]


def initial_track_state(ontology: Ontology) -> TrackState:
    return TrackState(
        belief={s.name: initial_state_vector(s) for s in ontology.informable_slots},
        goals={s.name: NONE for s in ontology.informable_slots},
        turn_index=0,
    )


def _decided_goal(mechanism, b: np.ndarray, prev_goal: str, slot: Slot) -> str:
    if isinstance(mechanism, (RuleBased, LearnedInterpolation)):
        return decide_goal(b, prev_goal, slot)
    return slot.label_at(int(np.argmax(b)))


def step_track_state(
    tracker: Tracker, state: TrackState, turn: Turn
) -> tuple[TrackState, TurnView]:
    """Advance the belief state by one turn (reference implementation)."""
    model = tracker.model
    belief: dict[str, np.ndarray] = {}
    goals: dict[str, str] = {}
    for slot in model.ontology.informable_slots:
        y = decode_turn(model.decoder, tracker.store, turn, slot, tracker.candidates)
        b = apply_update(model.mechanism, y, state.belief[slot.name], slot.name)
        belief[slot.name] = b
        goals[slot.name] = _decided_goal(model.mechanism, b, state.goals[slot.name], slot)
    request_scores = {
        name: decode_request(
            model.decoder, tracker.store, turn, name, model.ontology, tracker.candidates
        )
        for name in model.ontology.requestable_slots
    }
    requests = frozenset(
        name for name, p in request_scores.items() if p >= REQUEST_THRESHOLD
    )
    new_state = TrackState(belief=belief, goals=goals, turn_index=state.turn_index + 1)
    view = TurnView(
        turn_index=new_state.turn_index,
        belief=belief,
        goals=goals,
        requests=requests,
        request_scores=request_scores,
    )
    return new_state, view


def track_dialogue(tracker: Tracker, dialogue: Dialogue) -> list[TurnView]:
    state = initial_track_state(tracker.ontology)
    views = []
    for turn in dialogue.turns:
        state, view = step_track_state(tracker, state, turn)
        views.append(view)
    return views


# ---------------------------------------------------------------------------
# Metrics (reference path)
# ---------------------------------------------------------------------------


def joint_goal_accuracy(tracker: Tracker, dialogues: list[Dialogue]) -> float:
    """Fraction of turns where every informable slot's goal matches gold."""
    if not dialogues:
        raise ValueError("cannot evaluate an empty corpus")
    correct = total = 0
    for dialogue in dialogues:
        for turn, view in zip(dialogue.turns, track_dialogue(tracker, dialogue)):
            total += 1
            if all(
                view.goals[s.name] == turn.gold_goal_state[s.name]
                for s in tracker.ontology.informable_slots
            ):
                correct += 1
    return correct / total


def request_accuracy(tracker: Tracker, dialogues: list[Dialogue]) -> float:
    """Fraction of turns whose predicted request set equals gold exactly."""
    if not dialogues:
        raise ValueError("cannot evaluate an empty corpus")
    correct = total = 0
    for dialogue in dialogues:
        for turn, view in zip(dialogue.turns, track_dialogue(tracker, dialogue)):
            total += 1
            if view.requests == turn.gold_requests:
                correct += 1
    return correct / total


def evaluate(tracker: Tracker, dialogues: list[Dialogue], workers: int = 1) -> dict:
    """Full evaluation report with per-slot accuracy and error listings.

    ``workers`` > 1 tracks dialogues in a thread pool; the model is read-only
    during evaluation and counts are aggregated in corpus order, so the report
    is identical to the single-threaded one.
    """
    if not dialogues:
        raise ValueError("cannot evaluate an empty corpus")
    slots = tracker.ontology.informable_slots
    joint_correct = 0
    req_correct = 0
    total = 0
    slot_correct = {s.name: 0 for s in slots}
    errors = []
    request_errors = []
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            tracked = list(pool.map(lambda d: track_dialogue(tracker, d), dialogues))
    else:
        tracked = [track_dialogue(tracker, d) for d in dialogues]
    for dialogue, views in zip(dialogues, tracked):
        for t_idx, (turn, view) in enumerate(zip(dialogue.turns, views)):
            total += 1
            all_ok = True
            for slot in slots:
                predicted = view.goals[slot.name]
                gold = turn.gold_goal_state[slot.name]
                if predicted == gold:
                    slot_correct[slot.name] += 1
                else:
                    all_ok = False
                    errors.append(
                        {
                            "dialogue_id": dialogue.id,
                            "turn_index": t_idx,
                            "slot": slot.name,
                            "predicted": predicted,
                            "gold": gold,
                        }
                    )
            joint_correct += all_ok
            if view.requests == turn.gold_requests:
                req_correct += 1
            else:
                request_errors.append(
                    {
                        "dialogue_id": dialogue.id,
                        "turn_index": t_idx,
                        "predicted": sorted(view.requests),
                        "gold": sorted(turn.gold_requests),
                    }
                )
    report = {
        "mechanism": tracker.model.mechanism.kind,
        "n_dialogues": len(dialogues),
        "n_turns": total,
        "joint_goal_accuracy": joint_correct / total,
        "per_slot_accuracy": {name: c / total for name, c in slot_correct.items()},
        "request_accuracy": req_correct / total,
        "errors": errors,
        "request_errors": request_errors,
    }
    if isinstance(tracker.model.mechanism, RuleBased):
        report["chosen_lambda"] = tracker.model.mechanism.lam
    return report


# ---------------------------------------------------------------------------
# Vectorized path over pre-decoded scores
# ---------------------------------------------------------------------------


@dataclass
class PreparedDialogue:
    utterances: np.ndarray  # (T, d) utterance representations
    req_flags: dict[str, np.ndarray]  # slot -> (T,) request-gate flags
    conf_masks: dict[str, np.ndarray]  # slot -> (T, |V|+1) confirm-gate masks
    gold_goal_idx: np.ndarray  # (T, n_slots) cumulative gold value indices
    gold_requests: list[frozenset[str]]


@dataclass
class PreparedCorpus:
    ontology: Ontology
    candidates: CandidateSet
    dialogues: list[PreparedDialogue]
    n_turns: int


def prepare_corpus(
    dialogues: list[Dialogue], ontology: Ontology, store: VectorStore
) -> PreparedCorpus:
    """Precompute everything about a corpus that does not depend on model
    parameters: utterance vectors, gate flags, gold indices."""
    candidates = CandidateSet.build(ontology, store)
    out = []
    n_turns = 0
    slots = ontology.informable_slots
    for dialogue in dialogues:
        T = len(dialogue.turns)
        n_turns += T
        utt = np.stack(
            [utterance_repr(store, t.user_tokens) for t in dialogue.turns]
        )
        req_flags = {s.name: np.zeros(T) for s in slots}
        conf_masks = {
            s.name: np.zeros((T, len(s.candidate_labels))) for s in slots
        }
        gold = np.zeros((T, len(slots)), dtype=int)
        for t_idx, turn in enumerate(dialogue.turns):
            for s_idx, slot in enumerate(slots):
                gold[t_idx, s_idx] = slot.value_index(turn.gold_goal_state[slot.name])
                if any(
                    a.kind == REQUEST and a.slot == slot.name
                    for a in turn.system_acts
                ):
                    req_flags[slot.name][t_idx] = 1.0
                for act in turn.system_acts:
                    if act.kind == CONFIRM and act.slot == slot.name:
                        conf_masks[slot.name][t_idx, slot.value_index(act.value)] = 1.0
        out.append(
            PreparedDialogue(
                utterances=utt,
                req_flags=req_flags,
                conf_masks=conf_masks,
                gold_goal_idx=gold,
                gold_requests=[t.gold_requests for t in dialogue.turns],
            )
        )
    return PreparedCorpus(
        ontology=ontology, candidates=candidates, dialogues=out, n_turns=n_turns
    )


def _dialogue_scores(prep: PreparedCorpus, decoder, pd: PreparedDialogue):
    """Turn-level score matrices for one dialogue: slot -> (T, |V|+2)."""
    slots = prep.ontology.informable_slots
    weighted = pd.utterances * decoder.w_out  # (T, d)
    scores = {}
    for slot in slots:
        c = prep.candidates.per_slot[slot.name]
        q = c @ decoder.w_sem.T  # (n_cand, d)
        logits = weighted @ q.T + decoder.bias_out
        logits += decoder.w_req_gate * pd.req_flags[slot.name][:, None]
        logits += decoder.w_conf_gate * pd.conf_masks[slot.name]
        y = np.empty((logits.shape[0], slot.dimension))
        y[:, :-1] = sigmoid(logits)
        y[:, -1] = sigmoid(decoder.none_bias)
        scores[slot.name] = y
    return scores


def _request_hits(prep: PreparedCorpus, decoder, pd: PreparedDialogue):
    """Per-turn predicted request sets for one dialogue."""
    names = prep.ontology.requestable_slots
    if not names:
        return [frozenset()] * pd.utterances.shape[0]
    c = np.stack([prep.candidates.request[name] for name in names])
    q = c @ decoder.w_sem.T
    logits = (pd.utterances * decoder.w_out) @ q.T + decoder.bias_out  # (T, n_req)
    probs = sigmoid(logits)
    return [
        frozenset(n for j, n in enumerate(names) if probs[t, j] >= REQUEST_THRESHOLD)
        for t in range(probs.shape[0])
    ]


def fast_evaluate(prep: PreparedCorpus, decoder, mechanism) -> tuple[float, float]:
    """(joint goal accuracy, request accuracy) with self-fed tracking."""
    slots = prep.ontology.informable_slots
    joint_correct = req_correct = 0
    for pd in prep.dialogues:
        scores = _dialogue_scores(prep, decoder, pd)
        hits = _request_hits(prep, decoder, pd)
        b_prev = {s.name: initial_state_vector(s) for s in slots}
        goal_idx = {s.name: s.none_index for s in slots}
        for t in range(pd.utterances.shape[0]):
            ok = True
            for s_idx, slot in enumerate(slots):
                y = scores[slot.name][t]
                b = apply_update(mechanism, y, b_prev[slot.name], slot.name)
                if isinstance(mechanism, (RuleBased, LearnedInterpolation)):
                    label = decide_goal(b, slot.label_at(goal_idx[slot.name]), slot)
                    goal_idx[slot.name] = slot.value_index(label)
                else:
                    goal_idx[slot.name] = int(np.argmax(b))
                b_prev[slot.name] = b
                ok = ok and goal_idx[slot.name] == pd.gold_goal_idx[t, s_idx]
            joint_correct += ok
            req_correct += hits[t] == pd.gold_requests[t]
    return joint_correct / prep.n_turns, req_correct / prep.n_turns


def rule_lambda_grid(
    prep: PreparedCorpus, decoder, lambdas=RULE_LAMBDA_GRID
) -> tuple[np.ndarray, float]:
    """Joint goal accuracy for every mixing coefficient at once, plus the
    (coefficient-independent) request accuracy."""
    lams = np.asarray(lambdas, dtype=float)
    L = lams.shape[0]
    slots = prep.ontology.informable_slots
    joint_correct = np.zeros(L)
    req_correct = 0
    for pd in prep.dialogues:
        scores = _dialogue_scores(prep, decoder, pd)
        hits = _request_hits(prep, decoder, pd)
        b_prev = {
            s.name: np.tile(initial_state_vector(s), (L, 1)) for s in slots
        }
        goal_idx = {s.name: np.full(L, s.none_index) for s in slots}
        for t in range(pd.utterances.shape[0]):
            ok = np.ones(L, dtype=bool)
            for s_idx, slot in enumerate(slots):
                y = scores[slot.name][t]
                mixed = lams[:, None] * y + (1.0 - lams[:, None]) * b_prev[slot.name]
                detected = mixed >= 0.5
                detected[:, slot.none_index] = False
                any_det = detected.any(axis=1)
                best = np.argmax(np.where(detected, mixed, -np.inf), axis=1)
                goal_idx[slot.name] = np.where(any_det, best, goal_idx[slot.name])
                b_prev[slot.name] = mixed
                ok &= goal_idx[slot.name] == pd.gold_goal_idx[t, s_idx]
            joint_correct += ok
            req_correct += hits[t] == pd.gold_requests[t]
    return joint_correct / prep.n_turns, req_correct / prep.n_turns


def best_rule_lambda(
    prep: PreparedCorpus, decoder, lambdas=RULE_LAMBDA_GRID
) -> tuple[float, float, float]:
    """(best lambda, its joint goal accuracy, request accuracy); ties take the
    smallest coefficient."""
    accs, req_acc = rule_lambda_grid(prep, decoder, lambdas)
    best = int(np.argmax(accs))
    return float(lambdas[best]), float(accs[best]), float(req_acc)


# ---------------------------------------------------------------------------
# Mechanism comparison
# ---------------------------------------------------------------------------


def compare_mechanisms(
    train_dialogues: list[Dialogue],
    test_dialogues: list[Dialogue],
    ontology: Ontology,
    store: VectorStore,
    mechanisms: list[str],
    seeds: list[int],
    config,
) -> list[dict]:
    """Train and evaluate each mechanism under identical splits and seeds.

    Returns one row per mechanism with the mean and standard deviation of
    test joint goal accuracy over seeds.
    """
    from .training import split_dialogues, train  # circular at module level

    if not seeds:
        raise ValueError("need at least one seed")
    prep_test = prepare_corpus(test_dialogues, ontology, store)
    rows = []
    for kind in mechanisms:
        per_seed = []
        lambdas = []
        for seed in seeds:
            cfg = replace(config, mechanism=kind, seed=seed)
            tr, val = split_dialogues(train_dialogues, cfg.validation_fraction, seed)
            result = train(tr, val, ontology, store, cfg)
            jga, req_acc = fast_evaluate(
                prep_test, result.model.decoder, result.model.mechanism
            )
            per_seed.append(jga)
            if kind == "rule":
                lambdas.append(result.chosen_lambda)
        row = {
            "mechanism": kind,
            "mean_joint_goal_accuracy": float(np.mean(per_seed)),
            "std_joint_goal_accuracy": float(np.std(per_seed)),
            "per_seed": [float(x) for x in per_seed],
        }
        if lambdas:
            row["chosen_lambda"] = lambdas
        rows.append(row)
    return rows
