"""Service operations: the functional core behind the HTTP routes.

The CLI calls these directly (in process); the FastAPI app wires them to
endpoints. File paths refer to the filesystem the service runs on, which for
the bundled CLI is the local machine.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict

from ..corpus import dialogues_to_woz, load_woz
from ..embeddings import VectorStore, empty_store, load_vectors
from ..errors import BeliefTrackError
from ..evaluation import Tracker, compare_mechanisms, evaluate
from ..model import (
    EmbeddingInfo,
    init_model,
    load_model,
    save_model,
    sha256_file,
    store_for_model,
)
from ..ontology import Ontology, load_ontology
from ..synth import SynthDynamics, generate_dialogues, make_synthetic_ontology
from ..training import TrainConfig, grad_check, split_dialogues, train
from .schemas import (
    CompareRequest,
    CompareResponse,
    CompareRow,
    EvalRequest,
    EvalResponse,
    GradcheckRequest,
    GradcheckResponse,
    SynthRequest,
    SynthResponse,
    TrainRequest,
    TrainResponse,
    TrainSettings,
)


class ServiceError(Exception):
    """An operation failed in a way the caller can act on."""

    def __init__(self, message: str, status_code: int = 400):
        super().__init__(message)
        self.status_code = status_code


def _read_file(path: str, what: str) -> bytes:
    if not os.path.exists(path):
        raise ServiceError(f"{what} file not found: {path}")
    try:
        with open(path, "rb") as handle:
            return handle.read()
    except OSError as exc:
        raise ServiceError(f"cannot read {what} file {path}: {exc}") from exc


def _load_ontology(path: str) -> Ontology:
    try:
        return load_ontology(_read_file(path, "ontology"))
    except BeliefTrackError as exc:
        raise ServiceError(f"ontology {path}: {exc}") from exc


def _load_corpus(path: str, ontology: Ontology):
    try:
        return load_woz(_read_file(path, "corpus"), ontology)
    except BeliefTrackError as exc:
        raise ServiceError(f"corpus {path}: {exc}") from exc


def _build_store(
    vectors_path: str | None, config: TrainSettings
) -> tuple[VectorStore, EmbeddingInfo]:
    if vectors_path is None:
        store = empty_store(config.embedding_dim, config.oov_seed)
        info = EmbeddingInfo(
            dimension=store.dimension, oov_seed=config.oov_seed, path=None, sha256=None
        )
        return store, info
    data = _read_file(vectors_path, "vectors")
    try:
        store = load_vectors(data, oov_seed=config.oov_seed)
    except BeliefTrackError as exc:
        raise ServiceError(f"vectors {vectors_path}: {exc}") from exc
    info = EmbeddingInfo(
        dimension=store.dimension,
        oov_seed=config.oov_seed,
        path=os.path.abspath(vectors_path),
        sha256=sha256_file(vectors_path),
    )
    return store, info


def _train_config(settings: TrainSettings) -> TrainConfig:
    try:
        return TrainConfig.from_dict(settings.model_dump())
    except ValueError as exc:
        raise ServiceError(f"bad training config: {exc}") from exc


def train_op(req: TrainRequest) -> TrainResponse:
    started = time.perf_counter()
    config = _train_config(req.config)
    ontology = _load_ontology(req.ontology_path)
    store, embedding_info = _build_store(req.vectors_path, req.config)
    dialogues = _load_corpus(req.corpus_path, ontology)
    if req.val_corpus_path is not None:
        train_split = dialogues
        val_split = _load_corpus(req.val_corpus_path, ontology)
    else:
        train_split, val_split = split_dialogues(
            dialogues, config.validation_fraction, config.seed
        )
    try:
        result = train(train_split, val_split, ontology, store, config, embedding_info)
    except BeliefTrackError as exc:
        raise ServiceError(f"training failed: {exc}") from exc

    save_model(result.model, req.model_out)
    log_path = req.log_out or req.model_out + ".log.tsv"
    with open(log_path, "w", encoding="utf-8") as handle:
        for row in result.history:
            handle.write(
                f"{row.epoch}\t{row.train_loss:.6f}\t"
                f"{row.val_joint_goal_accuracy:.6f}\t"
                f"{row.val_request_accuracy:.6f}\t{row.seconds:.3f}\n"
            )
    best_val = (
        None
        if result.best_epoch == 0
        else float(result.best_val_joint_goal_accuracy)
    )
    return TrainResponse(
        model_path=req.model_out,
        log_path=log_path,
        epochs_run=len(result.history),
        best_epoch=result.best_epoch,
        best_validation_joint_goal_accuracy=best_val,
        chosen_lambda=result.chosen_lambda,
        n_train_dialogues=len(train_split),
        n_val_dialogues=len(val_split),
        train_seconds=time.perf_counter() - started,
    )


def eval_op(req: EvalRequest) -> EvalResponse:
    try:
        model = load_model(req.model_path)
    except BeliefTrackError as exc:
        raise ServiceError(f"model {req.model_path}: {exc}") from exc
    if req.ontology_path is not None:
        ontology = _load_ontology(req.ontology_path)
        if ontology.sha256() != model.ontology.sha256():
            raise ServiceError(
                f"ontology mismatch: {req.ontology_path} does not match the "
                f"ontology stored in {req.model_path}"
            )
    try:
        store = store_for_model(model, req.vectors_path)
    except BeliefTrackError as exc:
        raise ServiceError(str(exc)) from exc
    try:
        dialogues = load_woz(_read_file(req.corpus_path, "corpus"), model.ontology)
    except BeliefTrackError as exc:
        raise ServiceError(
            f"ontology mismatch between model and corpus: {exc}"
        ) from exc
    report = evaluate(Tracker(model=model, store=store), dialogues, workers=req.workers)
    return EvalResponse(**report)


def synth_op(req: SynthRequest) -> SynthResponse:
    if req.ontology_path is not None:
        ontology = _load_ontology(req.ontology_path)
        ontology_path = req.ontology_path
    else:
        ontology = make_synthetic_ontology(
            req.n_slots, req.values_per_slot, tuple(req.requestables)
        )
        if req.ontology_out is None:
            raise ServiceError(
                "generating an ontology requires ontology_out to save it to"
            )
        with open(req.ontology_out, "w", encoding="utf-8") as handle:
            json.dump(ontology.to_dict(), handle, indent=2)
            handle.write("\n")
        ontology_path = req.ontology_out

    dynamics = SynthDynamics(
        goal_change_prob=req.goal_change_prob,
        mention_prob=req.mention_prob,
        request_prob=req.request_prob,
        system_request_prob=req.system_request_prob,
        system_confirm_prob=req.system_confirm_prob,
        include_dontcare=req.include_dontcare,
        seed=req.seed,
    )
    try:
        dialogues = generate_dialogues(
            ontology, dynamics, req.n_dialogues, req.turns_per_dialogue
        )
    except BeliefTrackError as exc:
        raise ServiceError(f"generation failed: {exc}") from exc

    with open(req.out_path, "w", encoding="utf-8") as handle:
        json.dump(dialogues_to_woz(dialogues), handle, indent=2)
        handle.write("\n")
    sidecar_path = req.out_path + ".dynamics.json"
    sidecar = dict(asdict(dynamics))
    sidecar.update(
        {
            "n_dialogues": req.n_dialogues,
            "turns_per_dialogue": req.turns_per_dialogue,
            "ontology_path": ontology_path,
        }
    )
    with open(sidecar_path, "w", encoding="utf-8") as handle:
        json.dump(sidecar, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return SynthResponse(
        corpus_path=req.out_path,
        sidecar_path=sidecar_path,
        ontology_path=ontology_path,
        n_dialogues=len(dialogues),
        n_turns=sum(len(d.turns) for d in dialogues),
    )


def gradcheck_op(req: GradcheckRequest) -> GradcheckResponse:
    ontology = make_synthetic_ontology(req.n_slots, req.values_per_slot)
    store = empty_store(req.dimension, oov_seed=req.seed)
    dynamics = SynthDynamics(seed=req.seed)
    dialogues = generate_dialogues(
        ontology, dynamics, req.n_dialogues, req.turns_per_dialogue
    )
    embedding = EmbeddingInfo(dimension=req.dimension, oov_seed=req.seed)
    model = init_model(ontology, embedding, req.mechanism, req.seed)
    report = grad_check(
        model,
        store,
        dialogues,
        ontology,
        eps=req.eps,
        max_examples=req.n_examples,
        seed=req.seed,
    )
    return GradcheckResponse(
        mechanism=req.mechanism,
        max_relative_error=report.max_relative_error,
        worst_parameter=report.worst_parameter,
        n_scalars=report.n_scalars,
        threshold=req.threshold,
        passed=report.passed(req.threshold),
        per_parameter=report.per_parameter,
    )


def compare_op(req: CompareRequest) -> CompareResponse:
    config = _train_config(req.config)
    ontology = _load_ontology(req.ontology_path)
    store, _ = _build_store(req.vectors_path, req.config)
    train_dialogues = _load_corpus(req.train_corpus_path, ontology)
    test_dialogues = _load_corpus(req.test_corpus_path, ontology)
    if not req.seeds:
        raise ServiceError("need at least one seed")
    try:
        rows = compare_mechanisms(
            train_dialogues,
            test_dialogues,
            ontology,
            store,
            list(req.mechanisms),
            list(req.seeds),
            config,
        )
    except BeliefTrackError as exc:
        raise ServiceError(f"comparison failed: {exc}") from exc
    return CompareResponse(rows=[CompareRow(**row) for row in rows])
