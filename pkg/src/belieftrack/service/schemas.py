"""Pydantic request/response models for the HTTP service and the CLI client."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class TrainSettings(BaseModel):
    learning_rate: float = 1e-3
    batch_size: int = Field(default=256, ge=1)
    epochs: int = Field(default=400, ge=0)
    dropout_rate: float = Field(default=0.5, ge=0.0, lt=1.0)
    clip_norm: float = Field(default=5.0, gt=0.0)
    seed: int = 0
    mechanism: Literal["rule", "interp", "one_step", "constrained"] = "constrained"
    validation_metric: Literal["joint_goal_accuracy"] = "joint_goal_accuracy"
    validation_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    oov_seed: int = 0
    embedding_dim: int = Field(default=32, ge=1)


class TrainRequest(BaseModel):
    corpus_path: str
    ontology_path: str
    model_out: str
    vectors_path: Optional[str] = None
    val_corpus_path: Optional[str] = None
    log_out: Optional[str] = None
    config: TrainSettings = TrainSettings()


class TrainResponse(BaseModel):
    model_path: str
    log_path: str
    epochs_run: int
    best_epoch: int
    best_validation_joint_goal_accuracy: Optional[float] = None
    chosen_lambda: Optional[float] = None
    n_train_dialogues: int
    n_val_dialogues: int
    train_seconds: float


class EvalRequest(BaseModel):
    model_path: str
    corpus_path: str
    vectors_path: Optional[str] = None
    ontology_path: Optional[str] = None
    workers: int = Field(default=1, ge=1)


class GoalError(BaseModel):
    dialogue_id: str
    turn_index: int
    slot: str
    predicted: str
    gold: str


class RequestError(BaseModel):
    dialogue_id: str
    turn_index: int
    predicted: list[str]
    gold: list[str]


class EvalResponse(BaseModel):
    mechanism: str
    n_dialogues: int
    n_turns: int
    joint_goal_accuracy: float
    per_slot_accuracy: dict[str, float]
    request_accuracy: float
    chosen_lambda: Optional[float] = None
    errors: list[GoalError]
    request_errors: list[RequestError]


class SynthRequest(BaseModel):
    out_path: str
    n_dialogues: int = Field(default=100, ge=1)
    turns_per_dialogue: int = Field(default=6, ge=1)
    ontology_path: Optional[str] = None
    ontology_out: Optional[str] = None
    n_slots: int = Field(default=2, ge=1)
    values_per_slot: int = Field(default=5, ge=1)
    requestables: list[str] = ["phone", "address"]
    goal_change_prob: float = Field(default=0.2, ge=0.0, le=1.0)
    mention_prob: float = Field(default=0.8, ge=0.0, le=1.0)
    request_prob: float = Field(default=0.2, ge=0.0, le=1.0)
    system_request_prob: float = Field(default=0.15, ge=0.0, le=1.0)
    system_confirm_prob: float = Field(default=0.1, ge=0.0, le=1.0)
    include_dontcare: bool = False
    seed: int = 0


class SynthResponse(BaseModel):
    corpus_path: str
    sidecar_path: str
    ontology_path: str
    n_dialogues: int
    n_turns: int


class GradcheckRequest(BaseModel):
    mechanism: Literal["rule", "interp", "one_step", "constrained"] = "constrained"
    dimension: int = Field(default=8, ge=1)
    n_slots: int = Field(default=2, ge=1)
    values_per_slot: int = Field(default=3, ge=1)
    n_dialogues: int = Field(default=6, ge=1)
    turns_per_dialogue: int = Field(default=4, ge=1)
    n_examples: int = Field(default=10, ge=1)
    eps: float = Field(default=1e-5, gt=0.0)
    threshold: float = Field(default=1e-4, gt=0.0)
    seed: int = 0


class GradcheckResponse(BaseModel):
    mechanism: str
    max_relative_error: float
    worst_parameter: str
    n_scalars: int
    threshold: float
    passed: bool
    per_parameter: dict[str, float]


class CompareRequest(BaseModel):
    train_corpus_path: str
    test_corpus_path: str
    ontology_path: str
    vectors_path: Optional[str] = None
    mechanisms: list[Literal["rule", "interp", "one_step", "constrained"]] = [
        "rule",
        "constrained",
    ]
    seeds: list[int] = [0]
    config: TrainSettings = TrainSettings()


class CompareRow(BaseModel):
    mechanism: str
    mean_joint_goal_accuracy: float
    std_joint_goal_accuracy: float
    per_seed: list[float]
    chosen_lambda: Optional[list[float]] = None


class CompareResponse(BaseModel):
    rows: list[CompareRow]


class SystemActModel(BaseModel):
    kind: Literal["request", "confirm"]
    slot: str
    value: Optional[str] = None


class SessionCreateRequest(BaseModel):
    model_path: str
    vectors_path: Optional[str] = None


class TurnRequest(BaseModel):
    utterance: str = ""
    system_acts: list[SystemActModel] = []


class TrackStateView(BaseModel):
    session_id: str
    turn_index: int
    belief: dict[str, dict[str, float]]
    goals: dict[str, str]
    requests: list[str]
    request_scores: dict[str, float]


class SessionCreated(BaseModel):
    session_id: str
    mechanism: str
    informable_slots: dict[str, list[str]]
    requestable_slots: list[str]
    state: TrackStateView


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str
