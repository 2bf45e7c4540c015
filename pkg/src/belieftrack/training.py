"""Joint training of decoder and update parameters.

Training teacher-forces the previous belief state: the turn-t example is
conditioned on the gold one-hot state of turn t-1 (the initial state at the
first turn), which keeps examples independent and allows shuffled batching
over all (turn, slot) pairs. Validation after each epoch tracks self-fed, the
same way evaluation does, and the best-validation epoch's parameters are
returned.

The softmax and interpolation mechanisms train against the cumulative gold
state with categorical cross-entropy. Under the rule-based mechanism the
update itself has no trainable parameters, so the decoder is trained on
turn-level detection targets with per-candidate binary cross-entropy and the
mixing coefficient is grid-searched on validation joint goal accuracy.
Requestable-slot heads always train with independent binary cross-entropy;
they need no cross-turn state.

All gradients are exact and hand-derived; `grad_check` verifies every
trainable scalar against central finite differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .corpus import CONFIRM, REQUEST, Dialogue, initial_state_vector
from .decoder import utterance_repr
from .embeddings import VectorStore
from .errors import CorpusError, TrainingDivergedError
from .evaluation import best_rule_lambda, fast_evaluate, prepare_corpus
from .model import (
    EmbeddingInfo,
    TrackerModel,
    clone_model,
    init_model,
)
from .ontology import Ontology
from .update import (
    Constrained,
    LearnedInterpolation,
    OneStep,
    RuleBased,
    sigmoid,
    update_gradients,
)

LOG_CLAMP = 1e-12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 400
    dropout_rate: float = 0.5
    clip_norm: float = 5.0
    seed: int = 0
    mechanism: str = "constrained"
    validation_metric: str = "joint_goal_accuracy"
    validation_fraction: float = 0.2
    oov_seed: int = 0
    embedding_dim: int = 32

    def validate(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.mechanism not in ("rule", "interp", "one_step", "constrained"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.validation_metric != "joint_goal_accuracy":
            raise ValueError("validation_metric must be joint_goal_accuracy")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**doc)
        config.validate()
        return config


# ---------------------------------------------------------------------------
# Parameter handles, Adam, clipping
# ---------------------------------------------------------------------------


@dataclass
class ParamHandle:
    name: str
    get: Callable[[], np.ndarray]
    set: Callable[[np.ndarray], None]


def _array_handle(name: str, obj, attr: str) -> ParamHandle:
    return ParamHandle(
        name=name,
        get=lambda: getattr(obj, attr),
        set=lambda v: setattr(obj, attr, np.asarray(v, dtype=float)),
    )


def _scalar_handle(name: str, obj, attr: str) -> ParamHandle:
    return ParamHandle(
        name=name,
        get=lambda: np.asarray(getattr(obj, attr), dtype=float),
        set=lambda v: setattr(obj, attr, float(v)),
    )


def _dict_handle(name: str, table: dict, key: str) -> ParamHandle:
    return ParamHandle(
        name=name,
        get=lambda: table[key],
        set=lambda v: table.__setitem__(key, np.asarray(v, dtype=float)),
    )


def param_handles(model: TrackerModel) -> list[ParamHandle]:
    """Every trainable scalar container, in a fixed deterministic order."""
    dec = model.decoder
    handles = [
        _array_handle("decoder.w_sem", dec, "w_sem"),
        _array_handle("decoder.w_out", dec, "w_out"),
        _scalar_handle("decoder.bias_out", dec, "bias_out"),
        _scalar_handle("decoder.w_req_gate", dec, "w_req_gate"),
        _scalar_handle("decoder.w_conf_gate", dec, "w_conf_gate"),
        _scalar_handle("decoder.none_bias", dec, "none_bias"),
    ]
    mech = model.mechanism
    if isinstance(mech, LearnedInterpolation):
        handles.append(_scalar_handle("update.lambda_logit", mech, "lambda_logit"))
    elif isinstance(mech, Constrained):
        for attr in ("a_curr", "b_curr", "a_past", "b_past"):
            handles.append(_scalar_handle(f"update.{attr}", mech, attr))
    elif isinstance(mech, OneStep):
        for slot in model.ontology.informable_slots:
            handles.append(
                _dict_handle(f"update.w_curr[{slot.name}]", mech.w_curr, slot.name)
            )
            handles.append(
                _dict_handle(f"update.w_past[{slot.name}]", mech.w_past, slot.name)
            )
    # RuleBased: the coefficient is tuned by grid search, not trained.
    return handles


def zero_grads(handles: list[ParamHandle]) -> dict[str, np.ndarray]:
    return {h.name: np.zeros_like(h.get()) for h in handles}


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g)))
    return float(np.sqrt(total))


def clip_gradients(
    grads: dict[str, np.ndarray], clip_norm: float
) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients so the global norm is at most ``clip_norm``."""
    norm = global_grad_norm(grads)
    if norm > clip_norm:
        factor = clip_norm / norm
        grads = {k: g * factor for k, g in grads.items()}
    return grads, norm


class Adam:
    """Adam with bias correction; accumulator shapes mirror the parameters."""

    def __init__(self, handles: list[ParamHandle], learning_rate: float):
        self.handles = handles
        self.learning_rate = learning_rate
        self.step_count = 0
        self.first_moment = {h.name: np.zeros_like(h.get()) for h in handles}
        self.second_moment = {h.name: np.zeros_like(h.get()) for h in handles}

    def step(self, grads: dict[str, np.ndarray]):
        self.step_count += 1
        t = self.step_count
        for handle in self.handles:
            g = grads[handle.name]
            m = self.first_moment[handle.name]
            v = self.second_moment[handle.name]
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * np.square(g)
            self.first_moment[handle.name] = m
            self.second_moment[handle.name] = v
            m_hat = m / (1.0 - ADAM_BETA1**t)
            v_hat = v / (1.0 - ADAM_BETA2**t)
            handle.set(
                handle.get() - self.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPSILON)
            )


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def turn_loss(b_pred: np.ndarray, gold: np.ndarray) -> float:
    """Categorical cross-entropy against a one-hot gold state."""
    index = int(np.argmax(gold))
    return -float(np.log(max(float(b_pred[index]), LOG_CLAMP)))


# ---------------------------------------------------------------------------
# Single-example reference forward/backward
# ---------------------------------------------------------------------------


@dataclass
class TurnCache:
    slot_name: str
    r: np.ndarray
    y: np.ndarray
    b_prev: np.ndarray
    b_pred: np.ndarray
    logits: np.ndarray
    req_flag: float
    conf_mask: np.ndarray
    candidate_rows: np.ndarray


def forward_turn(tracker, turn, slot, b_prev) -> tuple[np.ndarray, TurnCache]:
    """Decode one (turn, slot) pair and apply the configured update.

    Returns the predicted state together with the intermediates needed for an
    exact backward pass. Deterministic: no dropout on this path.
    """
    from .decoder import act_gates, candidate_logits
    from .update import apply_update

    model = tracker.model
    r = utterance_repr(tracker.store, turn.user_tokens)
    rows = tracker.candidates.per_slot[slot.name]
    gates = act_gates(model.decoder, turn, slot)
    logits = candidate_logits(model.decoder, r, rows, gates)
    y = np.empty(slot.dimension)
    y[:-1] = sigmoid(logits)
    y[-1] = sigmoid(model.decoder.none_bias)
    b_pred = apply_update(model.mechanism, y, b_prev, slot.name)
    req_flag = float(
        any(a.kind == REQUEST and a.slot == slot.name for a in turn.system_acts)
    )
    conf_mask = np.zeros(len(slot.candidate_labels))
    for act in turn.system_acts:
        if act.kind == CONFIRM and act.slot == slot.name:
            conf_mask[slot.value_index(act.value)] = 1.0
    return b_pred, TurnCache(
        slot_name=slot.name,
        r=r,
        y=y,
        b_prev=np.asarray(b_prev, dtype=float),
        b_pred=b_pred,
        logits=logits,
        req_flag=req_flag,
        conf_mask=conf_mask,
        candidate_rows=rows,
    )


def backward_turn(tracker, cache: TurnCache, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of ``upstream . b_pred`` w.r.t. every trainable parameter."""
    model = tracker.model
    dec = model.decoder
    grads = zero_grads(param_handles(model))
    ug = update_gradients(
        model.mechanism, cache.y, cache.b_prev, upstream, cache.slot_name
    )
    for key, value in ug.params.items():
        if isinstance(model.mechanism, OneStep):
            grads[f"update.{key}[{cache.slot_name}]"] += value
        else:
            grads[f"update.{key}"] += value
    _accumulate_decoder_grads(grads, dec, cache, ug.y)
    return grads


def _accumulate_decoder_grads(grads, dec, cache: TurnCache, d_y: np.ndarray):
    y_cand = cache.y[:-1]
    dlogits = d_y[:-1] * y_cand * (1.0 - y_cand)
    grads["decoder.none_bias"] += d_y[-1] * cache.y[-1] * (1.0 - cache.y[-1])
    q = cache.candidate_rows @ dec.w_sem.T
    grads["decoder.w_out"] += (q * cache.r).T @ dlogits
    grads["decoder.w_sem"] += dec.w_out[:, None] * np.outer(
        cache.r, dlogits @ cache.candidate_rows
    )
    grads["decoder.bias_out"] += dlogits.sum()
    grads["decoder.w_req_gate"] += cache.req_flag * dlogits.sum()
    grads["decoder.w_conf_gate"] += float(np.dot(dlogits, cache.conf_mask))
    return grads


# ---------------------------------------------------------------------------
# Compiled corpus and the batched pass
# ---------------------------------------------------------------------------


@dataclass
class _SlotGroup:
    slot: object
    turn_row: np.ndarray  # (M,) rows into the utterance matrix
    b_prev: np.ndarray  # (M, n) teacher-forced previous states
    gold_idx: np.ndarray  # (M,) cumulative gold indices
    targets: np.ndarray  # (M, n) turn-level detection targets (rule objective)
    req_flags: np.ndarray  # (M,)
    conf_mask: np.ndarray  # (M, n_cand)


@dataclass
class _RequestGroup:
    name: str
    turn_row: np.ndarray
    targets: np.ndarray  # (M,) binary


@dataclass
class TrainContext:
    model: TrackerModel
    store: VectorStore
    config: TrainConfig
    utterances: np.ndarray  # (n_turns, d)
    slot_groups: list[_SlotGroup]
    request_groups: list[_RequestGroup]
    index: np.ndarray  # (N, 3): kind (0 goal / 1 request), group, row
    candidates: dict[str, np.ndarray]
    request_candidates: dict[str, np.ndarray]
    handles: list[ParamHandle]

    @property
    def n_examples(self) -> int:
        return self.index.shape[0]


def build_train_context(
    dialogues: list[Dialogue],
    ontology: Ontology,
    store: VectorStore,
    config: TrainConfig,
    model: TrackerModel,
) -> TrainContext:
    if not dialogues:
        raise CorpusError("training corpus is empty")
    from .decoder import CandidateSet

    candidate_set = CandidateSet.build(ontology, store)
    slots = ontology.informable_slots

    turns = []
    rows_per_slot: dict[str, dict[str, list]] = {
        s.name: {
            "turn_row": [],
            "b_prev": [],
            "gold_idx": [],
            "targets": [],
            "req_flags": [],
            "conf_mask": [],
        }
        for s in slots
    }
    request_rows: dict[str, dict[str, list]] = {
        name: {"turn_row": [], "targets": []} for name in ontology.requestable_slots
    }

    for dialogue in dialogues:
        for t_idx, turn in enumerate(dialogue.turns):
            row = len(turns)
            turns.append(turn)
            for slot in slots:
                acc = rows_per_slot[slot.name]
                if t_idx == 0:
                    b_prev = initial_state_vector(slot)
                else:
                    prev_label = dialogue.turns[t_idx - 1].gold_goal_state[slot.name]
                    b_prev = np.zeros(slot.dimension)
                    b_prev[slot.value_index(prev_label)] = 1.0
                # Detection targets for the BCE objective: the cumulative gold
                # state, one independent binary per channel. Change-only labels
                # would turn every re-mention into a negative example.
                target = np.zeros(slot.dimension)
                target[slot.value_index(turn.gold_goal_state[slot.name])] = 1.0
                conf = np.zeros(len(slot.candidate_labels))
                for act in turn.system_acts:
                    if act.kind == CONFIRM and act.slot == slot.name:
                        conf[slot.value_index(act.value)] = 1.0
                acc["turn_row"].append(row)
                acc["b_prev"].append(b_prev)
                acc["gold_idx"].append(slot.value_index(turn.gold_goal_state[slot.name]))
                acc["targets"].append(target)
                acc["req_flags"].append(
                    float(
                        any(
                            a.kind == REQUEST and a.slot == slot.name
                            for a in turn.system_acts
                        )
                    )
                )
                acc["conf_mask"].append(conf)
            for name in ontology.requestable_slots:
                request_rows[name]["turn_row"].append(row)
                request_rows[name]["targets"].append(float(name in turn.gold_requests))

    utterances = np.stack([utterance_repr(store, t.user_tokens) for t in turns])

    slot_groups = []
    index_entries = []
    for g_idx, slot in enumerate(slots):
        acc = rows_per_slot[slot.name]
        group = _SlotGroup(
            slot=slot,
            turn_row=np.array(acc["turn_row"], dtype=int),
            b_prev=np.stack(acc["b_prev"]),
            gold_idx=np.array(acc["gold_idx"], dtype=int),
            targets=np.stack(acc["targets"]),
            req_flags=np.array(acc["req_flags"]),
            conf_mask=np.stack(acc["conf_mask"]),
        )
        slot_groups.append(group)
        for row in range(group.turn_row.shape[0]):
            index_entries.append((0, g_idx, row))
    request_groups = []
    for g_idx, name in enumerate(ontology.requestable_slots):
        acc = request_rows[name]
        group = _RequestGroup(
            name=name,
            turn_row=np.array(acc["turn_row"], dtype=int),
            targets=np.array(acc["targets"]),
        )
        request_groups.append(group)
        for row in range(group.turn_row.shape[0]):
            index_entries.append((1, g_idx, row))

    return TrainContext(
        model=model,
        store=store,
        config=config,
        utterances=utterances,
        slot_groups=slot_groups,
        request_groups=request_groups,
        index=np.array(index_entries, dtype=int),
        candidates=candidate_set.per_slot,
        request_candidates=candidate_set.request,
        handles=param_handles(model),
    )


def _mechanism_forward_backward(ctx: TrainContext, group: _SlotGroup, y_full, rows, inv_total):
    """Loss and dY for one slot sub-batch under the configured mechanism.

    Returns (loss_sum, d_logits_full) where d_logits_full has the sigmoid
    (or direct BCE) factor already applied: columns 0..n-2 are candidate
    logit gradients, column n-1 is the none-bias logit gradient.
    """
    mech = ctx.model.mechanism
    b_prev = group.b_prev[rows]
    B = y_full.shape[0]

    if isinstance(mech, RuleBased):
        # Turn-level detection objective: per-candidate binary cross-entropy.
        targets = group.targets[rows]
        p = np.clip(y_full, LOG_CLAMP, 1.0 - LOG_CLAMP)
        loss = -np.sum(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p))
        d_logits_full = (y_full - targets) * inv_total
        return float(loss), d_logits_full, {}

    gold = group.gold_idx[rows]
    arange = np.arange(B)

    if isinstance(mech, LearnedInterpolation):
        lam = sigmoid(mech.lambda_logit)
        mixed = lam * y_full + (1.0 - lam) * b_prev
        total = mixed.sum(axis=1, keepdims=True)
        p = mixed / total
        p_gold = np.maximum(p[arange, gold], LOG_CLAMP)
        loss = -np.sum(np.log(p_gold))
        dp = np.zeros_like(p)
        dp[arange, gold] = -inv_total / p_gold
        d_mixed = (dp - np.sum(dp * p, axis=1, keepdims=True)) / total
        d_lam = float(np.sum(d_mixed * (y_full - b_prev)))
        mech_grads = {"update.lambda_logit": d_lam * lam * (1.0 - lam)}
        d_y = lam * d_mixed
    else:
        if isinstance(mech, Constrained):
            sum_y = y_full.sum(axis=1, keepdims=True)
            sum_b = b_prev.sum(axis=1, keepdims=True)
            z = (
                (mech.a_curr - mech.b_curr) * y_full
                + mech.b_curr * sum_y
                + (mech.a_past - mech.b_past) * b_prev
                + mech.b_past * sum_b
            )
        else:  # OneStep
            w_curr = mech.w_curr[group.slot.name]
            w_past = mech.w_past[group.slot.name]
            z = y_full @ w_curr.T + b_prev @ w_past.T
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        p_gold = np.maximum(p[arange, gold], LOG_CLAMP)
        loss = -np.sum(np.log(p_gold))
        dz = p.copy()
        dz[arange, gold] -= 1.0
        dz *= inv_total
        if isinstance(mech, Constrained):
            dz_rows = dz.sum(axis=1)
            dzy = float(np.sum(dz * y_full))
            dzb = float(np.sum(dz * b_prev))
            mech_grads = {
                "update.a_curr": dzy,
                "update.b_curr": float(np.dot(dz_rows, sum_y[:, 0])) - dzy,
                "update.a_past": dzb,
                "update.b_past": float(np.dot(dz_rows, sum_b[:, 0])) - dzb,
            }
            d_y = (mech.a_curr - mech.b_curr) * dz + mech.b_curr * dz_rows[:, None]
        else:
            mech_grads = {
                f"update.w_curr[{group.slot.name}]": dz.T @ y_full,
                f"update.w_past[{group.slot.name}]": dz.T @ b_prev,
            }
            d_y = dz @ mech.w_curr[group.slot.name]

    # Through the per-candidate sigmoids (none channel included).
    d_logits_full = d_y * y_full * (1.0 - y_full)
    return float(loss), d_logits_full, mech_grads


def batch_loss_and_grads(
    ctx: TrainContext,
    example_ids: np.ndarray,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over the batch and exact gradients for every handle."""
    dec = ctx.model.decoder
    grads = zero_grads(ctx.handles)
    total = example_ids.shape[0]
    inv_total = 1.0 / total
    loss_sum = 0.0
    entries = ctx.index[example_ids]
    p_drop = ctx.config.dropout_rate if dropout_rng is not None else 0.0

    for g_idx, group in enumerate(ctx.slot_groups):
        mask = (entries[:, 0] == 0) & (entries[:, 1] == g_idx)
        rows = entries[mask, 2]
        if rows.shape[0] == 0:
            continue
        slot = group.slot
        r = ctx.utterances[group.turn_row[rows]]
        if p_drop > 0.0:
            keep = (dropout_rng.random(r.shape) >= p_drop) / (1.0 - p_drop)
            r = r * keep
        c = ctx.candidates[slot.name]
        q = c @ dec.w_sem.T  # (n_cand, d)
        logits = (r * dec.w_out) @ q.T + dec.bias_out
        logits += dec.w_req_gate * group.req_flags[rows][:, None]
        logits += dec.w_conf_gate * group.conf_mask[rows]
        y_full = np.empty((rows.shape[0], slot.dimension))
        y_full[:, :-1] = sigmoid(logits)
        y_full[:, -1] = sigmoid(dec.none_bias)

        loss, d_logits_full, mech_grads = _mechanism_forward_backward(
            ctx, group, y_full, rows, inv_total
        )
        loss_sum += loss
        for key, value in mech_grads.items():
            grads[key] += value

        dl = d_logits_full[:, :-1]
        grads["decoder.none_bias"] += float(d_logits_full[:, -1].sum())
        grads["decoder.w_out"] += ((dl @ q) * r).sum(axis=0)
        grads["decoder.w_sem"] += dec.w_out[:, None] * (r.T @ (dl @ c))
        grads["decoder.bias_out"] += float(dl.sum())
        grads["decoder.w_req_gate"] += float(np.dot(dl.sum(axis=1), group.req_flags[rows]))
        grads["decoder.w_conf_gate"] += float(np.sum(dl * group.conf_mask[rows]))

    for g_idx, group in enumerate(ctx.request_groups):
        mask = (entries[:, 0] == 1) & (entries[:, 1] == g_idx)
        rows = entries[mask, 2]
        if rows.shape[0] == 0:
            continue
        r = ctx.utterances[group.turn_row[rows]]
        if p_drop > 0.0:
            keep = (dropout_rng.random(r.shape) >= p_drop) / (1.0 - p_drop)
            r = r * keep
        c = ctx.request_candidates[group.name]
        q = dec.w_sem @ c  # (d,)
        logits = (r * dec.w_out) @ q + dec.bias_out
        p = sigmoid(logits)
        targets = group.targets[rows]
        p_clip = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
        loss_sum += float(
            -np.sum(targets * np.log(p_clip) + (1.0 - targets) * np.log(1.0 - p_clip))
        )
        dlogit = (p - targets) * inv_total  # (B,)
        grads["decoder.w_out"] += (r * q).T @ dlogit
        grads["decoder.w_sem"] += dec.w_out[:, None] * np.outer(r.T @ dlogit, c)
        grads["decoder.bias_out"] += float(dlogit.sum())

    return loss_sum * inv_total, grads


# ---------------------------------------------------------------------------
# The training loop
# ---------------------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_joint_goal_accuracy: float
    val_request_accuracy: float
    seconds: float


@dataclass
class TrainResult:
    model: TrackerModel
    history: list[EpochStats]
    best_epoch: int
    best_val_joint_goal_accuracy: float
    chosen_lambda: float | None = None


def split_dialogues(
    dialogues: list[Dialogue], fraction: float, seed: int
) -> tuple[list[Dialogue], list[Dialogue]]:
    """Deterministic validation split; same seed gives the same split."""
    if fraction <= 0.0 or len(dialogues) < 2:
        return list(dialogues), []
    rng = np.random.default_rng([seed, 3])
    order = rng.permutation(len(dialogues))
    n_val = max(1, int(round(fraction * len(dialogues))))
    n_val = min(n_val, len(dialogues) - 1)
    val_ids = set(order[:n_val].tolist())
    train_split = [d for i, d in enumerate(dialogues) if i not in val_ids]
    val_split = [d for i, d in enumerate(dialogues) if i in val_ids]
    return train_split, val_split


def train(
    train_dialogues: list[Dialogue],
    val_dialogues: list[Dialogue],
    ontology: Ontology,
    store: VectorStore,
    config: TrainConfig,
    embedding_info: EmbeddingInfo | None = None,
) -> TrainResult:
    """Run the full optimization and return the best-validation parameters."""
    config.validate()
    if not train_dialogues:
        raise CorpusError("training corpus is empty")
    if config.epochs > 0 and not val_dialogues:
        raise CorpusError("validation split is empty; cannot select a model")

    if embedding_info is None:
        embedding_info = EmbeddingInfo(
            dimension=store.dimension, oov_seed=store.oov_seed
        )
    model = init_model(ontology, embedding_info, config.mechanism, config.seed)
    ctx = build_train_context(train_dialogues, ontology, store, config, model)
    adam = Adam(ctx.handles, config.learning_rate)
    shuffle_rng = np.random.default_rng([config.seed, 0])
    dropout_rng = np.random.default_rng([config.seed, 1])

    prep_val = (
        prepare_corpus(val_dialogues, ontology, store) if val_dialogues else None
    )

    history: list[EpochStats] = []
    best = clone_model(model)
    best_epoch = 0
    best_val = -1.0
    best_lambda = None

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = shuffle_rng.permutation(ctx.n_examples)
        loss_weighted = 0.0
        for start in range(0, ctx.n_examples, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = batch_loss_and_grads(
                ctx, batch, dropout_rng if config.dropout_rate > 0 else None
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}; aborting"
                )
            grads, _ = clip_gradients(grads, config.clip_norm)
            adam.step(grads)
            loss_weighted += loss * batch.shape[0]
        mean_loss = loss_weighted / ctx.n_examples

        if config.mechanism == "rule":
            lam, val_jga, val_req = best_rule_lambda(prep_val, model.decoder)
        else:
            lam = None
            val_jga, val_req = fast_evaluate(prep_val, model.decoder, model.mechanism)

        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=mean_loss,
                val_joint_goal_accuracy=val_jga,
                val_request_accuracy=val_req,
                seconds=time.perf_counter() - started,
            )
        )
        if val_jga > best_val:
            best_val = val_jga
            best_epoch = epoch
            best = clone_model(model)
            best_lambda = lam

    if config.mechanism == "rule" and best_lambda is not None:
        best.mechanism = RuleBased(lam=best_lambda)

    return TrainResult(
        model=best,
        history=history,
        best_epoch=best_epoch,
        best_val_joint_goal_accuracy=best_val if best_epoch else float("nan"),
        chosen_lambda=best_lambda,
    )


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_parameter: str
    n_scalars: int
    per_parameter: dict[str, float]

    def passed(self, threshold: float = 1e-4) -> bool:
        return self.max_relative_error < threshold


def grad_check(
    model: TrackerModel,
    store: VectorStore,
    dialogues: list[Dialogue],
    ontology: Ontology,
    eps: float = 1e-5,
    max_examples: int = 10,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    Every trainable scalar is perturbed individually. Relative error uses
    ``|a - f| / max(|a|, |f|, 1)`` so near-zero gradients do not blow up the
    ratio. Dropout is disabled: the checked function must be deterministic.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    config = TrainConfig(dropout_rate=0.0, mechanism=model.mechanism.kind)
    ctx = build_train_context(dialogues, ontology, store, config, model)
    rng = np.random.default_rng(seed)
    n = min(max_examples, ctx.n_examples)
    sample = rng.choice(ctx.n_examples, size=n, replace=False)

    _, analytic = batch_loss_and_grads(ctx, sample)

    def loss_only() -> float:
        loss, _ = batch_loss_and_grads(ctx, sample)
        return loss

    per_parameter: dict[str, float] = {}
    worst = 0.0
    worst_name = "<none>"
    n_scalars = 0
    for handle in ctx.handles:
        base = handle.get().copy()
        grad = np.asarray(analytic[handle.name], dtype=float)
        flat_err = 0.0
        for idx in (np.ndindex(base.shape) if base.ndim else [()]):
            n_scalars += 1
            perturbed = base.copy()
            perturbed[idx] += eps
            handle.set(perturbed)
            up = loss_only()
            perturbed = base.copy()
            perturbed[idx] -= eps
            handle.set(perturbed)
            down = loss_only()
            handle.set(base)
            fd = (up - down) / (2.0 * eps)
            a = float(grad[idx]) if base.ndim else float(grad)
            rel = abs(a - fd) / max(abs(a), abs(fd), 1.0)
            flat_err = max(flat_err, rel)
            if rel > worst:
                worst = rel
                worst_name = handle.name if not base.ndim else f"{handle.name}{list(idx)}"
        per_parameter[handle.name] = flat_err
    return GradCheckReport(
        max_relative_error=worst,
        worst_parameter=worst_name,
        n_scalars=n_scalars,
        per_parameter=per_parameter,
    )
