"""belieftrack: dialogue belief-state tracking with learned update mechanisms."""

from .corpus import (
    Dialogue,
    SystemAct,
    Turn,
    gold_state_vector,
    initial_state_vector,
    load_woz,
    tokenize,
)
from .decoder import DecoderParams, decode_request, decode_turn
from .embeddings import VectorStore, load_vectors
from .evaluation import (
    Tracker,
    compare_mechanisms,
    evaluate,
    joint_goal_accuracy,
    request_accuracy,
    track_dialogue,
)
from .model import TrackerModel, load_model, save_model
from .ontology import DONTCARE, NONE, Ontology, Slot, load_ontology, value_index
from .synth import (
    SynthDynamics,
    generate_dialogues,
    hmm_forward_filter,
    recover_constrained_params,
)
from .training import TrainConfig, grad_check, train, turn_loss
from .update import (
    Constrained,
    LearnedInterpolation,
    OneStep,
    RuleBased,
    build_constrained_matrix,
    constrained_update,
    decide_goal,
    learned_interpolation_update,
    one_step_update,
    rule_based_update,
    update_gradients,
)

__version__ = "0.1.0"

__all__ = [
    "Constrained",
    "DONTCARE",
    "DecoderParams",
    "Dialogue",
    "LearnedInterpolation",
    "NONE",
    "OneStep",
    "Ontology",
    "RuleBased",
    "Slot",
    "SynthDynamics",
    "SystemAct",
    "Tracker",
    "TrackerModel",
    "TrainConfig",
    "Turn",
    "VectorStore",
    "build_constrained_matrix",
    "compare_mechanisms",
    "constrained_update",
    "decide_goal",
    "decode_request",
    "decode_turn",
    "evaluate",
    "generate_dialogues",
    "gold_state_vector",
    "grad_check",
    "hmm_forward_filter",
    "initial_state_vector",
    "joint_goal_accuracy",
    "learned_interpolation_update",
    "load_model",
    "load_ontology",
    "load_vectors",
    "load_woz",
    "one_step_update",
    "recover_constrained_params",
    "request_accuracy",
    "rule_based_update",
    "save_model",
    "tokenize",
    "track_dialogue",
    "train",
    "turn_loss",
    "update_gradients",
    "value_index",
]
