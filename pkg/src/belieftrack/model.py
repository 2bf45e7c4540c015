"""Model container: decoder and update parameters plus data provenance.

A model file is a single JSON document carrying the full ontology, the
embedding file's identity (path, content hash, dimension, OOV seed), the
decoder parameters (matrices in row-major nested lists) and the update
mechanism's parameters. Serialization is canonical (sorted keys, fixed
indentation), so identical parameters produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .decoder import DecoderParams, init_decoder_params
from .embeddings import VectorStore, empty_store, load_vectors
from .errors import ModelFormatError
from .ontology import Ontology, load_ontology
from .update import (
    Constrained,
    LearnedInterpolation,
    OneStep,
    RuleBased,
    UpdateMechanism,
)

MODEL_FORMAT = "belieftrack-model"
MODEL_VERSION = 1


@dataclass
class EmbeddingInfo:
    dimension: int
    oov_seed: int = 0
    path: str | None = None
    sha256: str | None = None


@dataclass
class TrackerModel:
    ontology: Ontology
    decoder: DecoderParams
    mechanism: UpdateMechanism
    embedding: EmbeddingInfo

    @property
    def dimension(self) -> int:
        return self.embedding.dimension


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def init_mechanism(
    kind: str, ontology: Ontology, rng: np.random.Generator
) -> UpdateMechanism:
    """Fresh mechanism parameters: identity-leaning, symmetry broken."""
    if kind == "rule":
        return RuleBased(lam=0.5)
    if kind == "interp":
        return LearnedInterpolation(lambda_logit=0.0)
    if kind == "constrained":
        return Constrained(a_curr=1.0, b_curr=0.0, a_past=1.0, b_past=0.0)
    if kind == "one_step":
        w_curr, w_past = {}, {}
        for slot in ontology.informable_slots:
            n = slot.dimension
            w_curr[slot.name] = 0.1 * np.eye(n) + rng.uniform(-0.01, 0.01, (n, n))
            w_past[slot.name] = 0.1 * np.eye(n) + rng.uniform(-0.01, 0.01, (n, n))
        return OneStep(w_curr=w_curr, w_past=w_past)
    raise ModelFormatError(f"unknown mechanism kind {kind!r}")


def init_model(
    ontology: Ontology,
    embedding: EmbeddingInfo,
    mechanism_kind: str,
    seed: int,
) -> TrackerModel:
    rng = np.random.default_rng([seed, 2])
    decoder = init_decoder_params(embedding.dimension, rng)
    mechanism = init_mechanism(mechanism_kind, ontology, rng)
    return TrackerModel(
        ontology=ontology, decoder=decoder, mechanism=mechanism, embedding=embedding
    )


def clone_model(model: TrackerModel) -> TrackerModel:
    decoder = replace(
        model.decoder, w_sem=model.decoder.w_sem.copy(), w_out=model.decoder.w_out.copy()
    )
    mech = model.mechanism
    if isinstance(mech, OneStep):
        mech = OneStep(
            w_curr={k: v.copy() for k, v in mech.w_curr.items()},
            w_past={k: v.copy() for k, v in mech.w_past.items()},
        )
    else:
        mech = replace(mech)
    return TrackerModel(
        ontology=model.ontology,
        decoder=decoder,
        mechanism=mech,
        embedding=replace(model.embedding),
    )


def _mechanism_to_dict(mech: UpdateMechanism) -> dict:
    if isinstance(mech, RuleBased):
        return {"kind": "rule", "lambda": mech.lam}
    if isinstance(mech, LearnedInterpolation):
        return {"kind": "interp", "lambda_logit": mech.lambda_logit}
    if isinstance(mech, Constrained):
        return {
            "kind": "constrained",
            "a_curr": mech.a_curr,
            "b_curr": mech.b_curr,
            "a_past": mech.a_past,
            "b_past": mech.b_past,
        }
    if isinstance(mech, OneStep):
        return {
            "kind": "one_step",
            "slots": {
                name: {
                    "w_curr": mech.w_curr[name].tolist(),
                    "w_past": mech.w_past[name].tolist(),
                }
                for name in mech.w_curr
            },
        }
    raise ModelFormatError(f"unknown mechanism {mech!r}")


def _mechanism_from_dict(doc: dict) -> UpdateMechanism:
    kind = doc.get("kind")
    if kind == "rule":
        return RuleBased(lam=float(doc["lambda"]))
    if kind == "interp":
        return LearnedInterpolation(lambda_logit=float(doc["lambda_logit"]))
    if kind == "constrained":
        return Constrained(
            a_curr=float(doc["a_curr"]),
            b_curr=float(doc["b_curr"]),
            a_past=float(doc["a_past"]),
            b_past=float(doc["b_past"]),
        )
    if kind == "one_step":
        slots = doc["slots"]
        return OneStep(
            w_curr={name: np.array(entry["w_curr"], dtype=float) for name, entry in slots.items()},
            w_past={name: np.array(entry["w_past"], dtype=float) for name, entry in slots.items()},
        )
    raise ModelFormatError(f"model file has unknown mechanism kind {kind!r}")


def model_to_dict(model: TrackerModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dimension": model.dimension,
        "ontology": model.ontology.to_dict(),
        "ontology_sha256": model.ontology.sha256(),
        "embeddings": {
            "path": model.embedding.path,
            "sha256": model.embedding.sha256,
            "dimension": model.embedding.dimension,
            "oov_seed": model.embedding.oov_seed,
        },
        "decoder": {
            "w_sem": model.decoder.w_sem.tolist(),
            "w_out": model.decoder.w_out.tolist(),
            "bias_out": model.decoder.bias_out,
            "w_req_gate": model.decoder.w_req_gate,
            "w_conf_gate": model.decoder.w_conf_gate,
            "none_bias": model.decoder.none_bias,
        },
        "mechanism": _mechanism_to_dict(model.mechanism),
    }


def save_model(model: TrackerModel, path: str):
    payload = json.dumps(model_to_dict(model), indent=2, sort_keys=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(payload)
        handle.write("\n")


def model_from_dict(doc: dict) -> TrackerModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a tracker model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        ontology = load_ontology(json.dumps(doc["ontology"]))
        emb = doc["embeddings"]
        embedding = EmbeddingInfo(
            dimension=int(emb["dimension"]),
            oov_seed=int(emb["oov_seed"]),
            path=emb.get("path"),
            sha256=emb.get("sha256"),
        )
        dec = doc["decoder"]
        decoder = DecoderParams(
            w_sem=np.array(dec["w_sem"], dtype=float),
            w_out=np.array(dec["w_out"], dtype=float),
            bias_out=float(dec["bias_out"]),
            w_req_gate=float(dec["w_req_gate"]),
            w_conf_gate=float(dec["w_conf_gate"]),
            none_bias=float(dec["none_bias"]),
        )
        mechanism = _mechanism_from_dict(doc["mechanism"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    decoder.validate()
    model = TrackerModel(
        ontology=ontology, decoder=decoder, mechanism=mechanism, embedding=embedding
    )
    if model.decoder.dimension != embedding.dimension:
        raise ModelFormatError("decoder dimension disagrees with embedding header")
    recorded = doc.get("ontology_sha256")
    if recorded is not None and recorded != ontology.sha256():
        raise ModelFormatError("ontology hash in model file does not match its content")
    return model


def load_model(path: str) -> TrackerModel:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file {path!r} is not valid JSON: {exc.msg}") from exc
    return model_from_dict(doc)


def store_for_model(model: TrackerModel, vectors_path: str | None = None) -> VectorStore:
    """Reconstruct the vector store a model was trained with.

    Uses the recorded path unless an override is given; verifies the content
    hash when one was recorded. Models trained without a vector file get a
    pure-OOV store of the recorded dimension and seed.
    """
    info = model.embedding
    path = vectors_path or info.path
    if path is None:
        return empty_store(info.dimension, info.oov_seed)
    if not os.path.exists(path):
        raise ModelFormatError(f"embedding file {path!r} not found")
    if info.sha256 is not None:
        actual = sha256_file(path)
        if actual != info.sha256:
            raise ModelFormatError(
                f"embedding file {path!r} hash {actual[:12]}... does not match "
                f"the hash recorded in the model"
            )
    with open(path, "rb") as handle:
        return load_vectors(handle, expected_dim=info.dimension, oov_seed=info.oov_seed)
