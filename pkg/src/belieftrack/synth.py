"""Synthetic dialogue generation and desk-scale verification oracles.

The generator produces corpora with known latent dynamics: per slot, the
user's goal evolves as a Markov chain (switching to a uniformly random other
value with a configurable probability) and each turn verbalizes the current
goal through a trivial template with a configurable probability, otherwise
emitting filler tokens only. Gold labels track the latent goal exactly, so
changes the user never verbalized are still annotated; that irreducible
noise affects every mechanism equally.

Templates are deliberately simple so that the decoder can saturate and the
behaviour under study is the state update, not language understanding.

Also here: an exact forward-filtering step for finite hidden-state chains
(the probabilistic ideal the learned updates approximate) and a parameter
recovery harness for the constrained update. Since adding a constant to all
logits cancels in the softmax, only the diagonal-minus-off-diagonal
differences are identifiable, and the recovery error is reported on those.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import CONFIRM, REQUEST, Dialogue, SystemAct, Turn, tokenize
from .decoder import REQUEST_MARKER_TOKEN, DecoderParams
from .embeddings import VectorStore
from .errors import TemplateCoverageError
from .evaluation import Tracker
from .model import EmbeddingInfo, TrackerModel
from .ontology import DONTCARE, NONE, Ontology, Slot
from .update import Constrained, constrained_update, softmax

DEFAULT_TEMPLATES = (
    "i want {value} please",
    "looking for {value}",
    "{value} would be great",
    "how about {value}",
)

DEFAULT_REQUEST_TEMPLATES = (
    "what is the {slot}",
    "can i get the {slot}",
)

DEFAULT_NOISE_VOCAB = (
    "uh",
    "um",
    "well",
    "hello",
    "thanks",
    "okay",
    "maybe",
    "really",
    "just",
    "hmm",
)


@dataclass
class SynthDynamics:
    goal_change_prob: float = 0.2
    mention_prob: float = 0.8
    noise_vocab: tuple[str, ...] = DEFAULT_NOISE_VOCAB
    templates: tuple[str, ...] = DEFAULT_TEMPLATES
    seed: int = 0
    request_templates: tuple[str, ...] = DEFAULT_REQUEST_TEMPLATES
    request_prob: float = 0.2
    system_request_prob: float = 0.15
    system_confirm_prob: float = 0.1
    requested_mention_prob: float = 0.95
    include_dontcare: bool = False
    max_fillers: int = 3

    def validate(self):
        for name in (
            "goal_change_prob",
            "mention_prob",
            "request_prob",
            "system_request_prob",
            "system_confirm_prob",
            "requested_mention_prob",
        ):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if not self.templates:
            raise ValueError("need at least one utterance template")
        if not self.noise_vocab:
            raise ValueError("need a non-empty filler vocabulary")


def make_synthetic_ontology(
    n_slots: int, values_per_slot: int, requestables: tuple[str, ...] = ("phone", "address")
) -> Ontology:
    """Schema with distinct single-token values: slot ``slotK`` has values
    ``sKv0 .. sKv{n-1}``."""
    slots = tuple(
        Slot(
            name=f"slot{k}",
            values=tuple(f"s{k}v{j}" for j in range(values_per_slot)),
        )
        for k in range(n_slots)
    )
    return Ontology(informable_slots=slots, requestable_slots=tuple(requestables))


def _check_template_coverage(ontology: Ontology, dynamics: SynthDynamics):
    for template in dynamics.templates:
        if "{value}" not in template:
            raise TemplateCoverageError(
                f"template {template!r} has no {{value}} placeholder"
            )
    for template in dynamics.request_templates:
        if "{slot}" not in template:
            raise TemplateCoverageError(
                f"request template {template!r} has no {{slot}} placeholder"
            )
    for slot in ontology.informable_slots:
        labels = slot.values + ((DONTCARE,) if dynamics.include_dontcare else ())
        for label in labels:
            needed = tokenize(label)
            for template in dynamics.templates:
                got = tokenize(template.format(value=label))
                if any(tok not in got for tok in needed):
                    raise TemplateCoverageError(
                        f"template {template!r} cannot realize {slot.name!r}={label!r}"
                    )


def generate_dialogues(
    ontology: Ontology,
    dynamics: SynthDynamics,
    n_dialogues: int,
    turns_per_dialogue: int,
) -> list[Dialogue]:
    """Deterministic per seed; each dialogue derives its own RNG stream."""
    if n_dialogues < 1 or turns_per_dialogue < 1:
        raise ValueError("need at least one dialogue and one turn")
    dynamics.validate()
    _check_template_coverage(ontology, dynamics)
    slots = ontology.informable_slots
    dialogues = []
    for d_idx in range(n_dialogues):
        rng = np.random.default_rng([dynamics.seed, 4, d_idx])
        goals: dict[str, str] = {}
        state = {s.name: NONE for s in slots}
        turns = []
        for t_idx in range(turns_per_dialogue):
            changes: dict[str, str] = {}
            for slot in slots:
                pool = list(slot.values)
                if dynamics.include_dontcare:
                    pool.append(DONTCARE)
                if t_idx == 0:
                    goals[slot.name] = pool[rng.integers(len(pool))]
                    changes[slot.name] = goals[slot.name]
                elif rng.random() < dynamics.goal_change_prob:
                    others = [v for v in pool if v != goals[slot.name]]
                    goals[slot.name] = others[rng.integers(len(others))]
                    changes[slot.name] = goals[slot.name]

            acts: list[SystemAct] = []
            requested_slot = None
            if rng.random() < dynamics.system_request_prob:
                requested_slot = slots[rng.integers(len(slots))].name
                acts.append(SystemAct(kind=REQUEST, slot=requested_slot))
            if rng.random() < dynamics.system_confirm_prob:
                slot = slots[rng.integers(len(slots))]
                acts.append(
                    SystemAct(kind=CONFIRM, slot=slot.name, value=goals[slot.name])
                )

            fragments = []
            for slot in slots:
                p_mention = dynamics.mention_prob
                if slot.name == requested_slot:
                    p_mention = max(p_mention, dynamics.requested_mention_prob)
                if rng.random() < p_mention:
                    template = dynamics.templates[rng.integers(len(dynamics.templates))]
                    fragments.append(template.format(value=goals[slot.name]))

            gold_requests: set[str] = set()
            if ontology.requestable_slots and rng.random() < dynamics.request_prob:
                name = ontology.requestable_slots[
                    rng.integers(len(ontology.requestable_slots))
                ]
                gold_requests.add(name)
                template = dynamics.request_templates[
                    rng.integers(len(dynamics.request_templates))
                ]
                fragments.append(template.format(slot=name))

            n_fillers = int(rng.integers(1, dynamics.max_fillers + 1))
            fragments.extend(
                dynamics.noise_vocab[rng.integers(len(dynamics.noise_vocab))]
                for _ in range(n_fillers)
            )
            order = rng.permutation(len(fragments))
            transcript = " ".join(fragments[i] for i in order)

            state = dict(state)
            state.update(changes)
            turns.append(
                Turn(
                    user_tokens=tokenize(transcript),
                    system_acts=tuple(acts),
                    turn_goal_labels=changes,
                    gold_goal_state=state,
                    gold_requests=frozenset(gold_requests),
                )
            )
        dialogues.append(Dialogue(id=f"synth-{d_idx:04d}", turns=tuple(turns)))
    return dialogues


# ---------------------------------------------------------------------------
# Exact forward-filter oracle
# ---------------------------------------------------------------------------


def hmm_forward_filter(
    prior: np.ndarray, transition: np.ndarray, obs_likelihood: np.ndarray
) -> np.ndarray:
    """One exact filtering step: propagate through the transition kernel,
    weight by the observation likelihood, renormalize.

    ``posterior_i`` is proportional to ``obs_likelihood[i] * sum_j
    transition[j, i] * prior[j]``.
    """
    prior = np.asarray(prior, dtype=float)
    transition = np.asarray(transition, dtype=float)
    obs_likelihood = np.asarray(obs_likelihood, dtype=float)
    n = prior.shape[0]
    if transition.shape != (n, n) or obs_likelihood.shape != (n,):
        raise ValueError("filter inputs have inconsistent shapes")
    if abs(prior.sum() - 1.0) > 1e-9:
        raise ValueError("prior must sum to 1")
    if np.any(np.abs(transition.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("transition rows must sum to 1")
    if np.any(obs_likelihood < 0):
        raise ValueError("likelihoods must be non-negative")
    unnormalized = obs_likelihood * (transition.T @ prior)
    total = unnormalized.sum()
    if total <= 0.0:
        raise ValueError("all-zero likelihood under the propagated prior")
    return unnormalized / total


# ---------------------------------------------------------------------------
# Constrained-update parameter recovery
# ---------------------------------------------------------------------------


@dataclass
class RecoveryResult:
    fitted: Constrained
    err_curr_diff: float
    err_past_diff: float
    final_loss: float
    grad_norm: float
    converged: bool


def recover_constrained_params(
    teacher: Constrained,
    n_samples: int,
    seed: int,
    dimension: int = 5,
    steps: int = 400,
    learning_rate: float = 0.1,
) -> RecoveryResult:
    """Fit a fresh constrained update to teacher outputs on random inputs.

    Cross-entropy against the teacher's soft outputs is convex in the logit
    parameters, so full-batch Adam recovers the identifiable differences.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    rng = np.random.default_rng(seed)
    y = rng.uniform(0.01, 0.99, (n_samples, dimension))
    b_prev = rng.dirichlet(np.ones(dimension), size=n_samples)
    targets = np.stack(
        [constrained_update(y[i], b_prev[i], teacher) for i in range(n_samples)]
    )

    params = np.array([1.0, 0.0, 1.0, 0.0])  # a_curr, b_curr, a_past, b_past
    m = np.zeros(4)
    v = np.zeros(4)
    sum_y = y.sum(axis=1, keepdims=True)
    sum_b = b_prev.sum(axis=1, keepdims=True)
    loss = float("nan")
    grad = np.zeros(4)
    for t in range(1, steps + 1):
        a_c, b_c, a_p, b_p = params
        z = (a_c - b_c) * y + b_c * sum_y + (a_p - b_p) * b_prev + b_p * sum_b
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        loss = float(-np.sum(targets * np.log(np.maximum(p, 1e-12))) / n_samples)
        dz = (p - targets) / n_samples
        dz_rows = dz.sum(axis=1)
        dzy = float(np.sum(dz * y))
        dzb = float(np.sum(dz * b_prev))
        grad = np.array(
            [
                dzy,
                float(np.dot(dz_rows, sum_y[:, 0])) - dzy,
                dzb,
                float(np.dot(dz_rows, sum_b[:, 0])) - dzb,
            ]
        )
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad**2
        m_hat = m / (1.0 - 0.9**t)
        v_hat = v / (1.0 - 0.999**t)
        params = params - learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)

    fitted = Constrained(
        a_curr=float(params[0]),
        b_curr=float(params[1]),
        a_past=float(params[2]),
        b_past=float(params[3]),
    )
    err_curr = abs((fitted.a_curr - fitted.b_curr) - (teacher.a_curr - teacher.b_curr))
    err_past = abs((fitted.a_past - fitted.b_past) - (teacher.a_past - teacher.b_past))
    grad_norm = float(np.linalg.norm(grad))
    return RecoveryResult(
        fitted=fitted,
        err_curr_diff=err_curr,
        err_past_diff=err_past,
        final_loss=loss,
        grad_norm=grad_norm,
        converged=grad_norm < 1e-4,
    )


# ---------------------------------------------------------------------------
# Hand-set saturating model
# ---------------------------------------------------------------------------


def saturating_tracker(
    ontology: Ontology,
    dynamics: SynthDynamics | None = None,
    detect_gain: float = 8.0,
    keep_gain: float = 4.0,
) -> Tracker:
    """A tracker with hand-set parameters that solves noiseless synthetic data.

    Every candidate value token gets its own basis vector, every other known
    token (templates, fillers, slot names) a zero vector, so the utterance
    vector literally indicates which values were mentioned. The decoder then
    reads that indicator through an identity map, and a sharp constrained
    update (large current-diagonal advantage, moderate past-diagonal
    advantage) switches on detections and persists otherwise.

    Requires single-token values, as produced by `make_synthetic_ontology`.
    """
    dynamics = dynamics or SynthDynamics()
    basis_tokens: list[str] = []
    for slot in ontology.informable_slots:
        for value in slot.values:
            if len(tokenize(value)) != 1:
                raise ValueError("saturating tracker needs single-token values")
            basis_tokens.append(value)
    basis_tokens.append(DONTCARE)
    basis_tokens.extend(ontology.requestable_slots)

    dimension = len(basis_tokens)
    table: dict[str, np.ndarray] = {}
    for i, token in enumerate(basis_tokens):
        vec = np.zeros(dimension)
        vec[i] = 1.0
        vec.flags.writeable = False
        table[token] = vec

    zero_tokens: set[str] = set()
    for slot in ontology.informable_slots:
        zero_tokens.update(tokenize(slot.name))
    for template in dynamics.templates:
        zero_tokens.update(tokenize(template.replace("{value}", "")))
    for template in dynamics.request_templates:
        zero_tokens.update(tokenize(template.replace("{slot}", "")))
    zero_tokens.update(dynamics.noise_vocab)
    zero_tokens.add(REQUEST_MARKER_TOKEN)
    zero = np.zeros(dimension)
    zero.flags.writeable = False
    for token in zero_tokens:
        table.setdefault(token, zero)

    store = VectorStore(dimension=dimension, table=table, oov_seed=0)
    decoder = DecoderParams(
        w_sem=np.eye(dimension),
        w_out=np.full(dimension, detect_gain),
        bias_out=-detect_gain / 2.0,
        w_req_gate=0.0,
        w_conf_gate=0.0,
        none_bias=-detect_gain / 2.0,
    )
    mechanism = Constrained(
        a_curr=3.0 * keep_gain, b_curr=0.0, a_past=keep_gain, b_past=0.0
    )
    model = TrackerModel(
        ontology=ontology,
        decoder=decoder,
        mechanism=mechanism,
        embedding=EmbeddingInfo(dimension=dimension, oov_seed=0),
    )
    return Tracker(model=model, store=store)
