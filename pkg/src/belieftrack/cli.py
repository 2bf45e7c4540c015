"""Command-line client for the tracking service.

Every subcommand builds the same request models the HTTP endpoints accept and
calls the service operations in process; `serve` exposes those operations
over HTTP for long-running, multi-client use. Machine-readable output is JSON
on stdout; diagnostics go to stderr. Exit codes: 0 success, 1 usage or I/O
error, 2 gradient-check failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import pydantic

from .service import ops
from .service.schemas import (
    CompareRequest,
    EvalRequest,
    GradcheckRequest,
    SynthRequest,
    TrainRequest,
    TrainSettings,
)
from .service.sessions import SessionInputError, SessionStore
from .service.schemas import SystemActModel

CONFIG_FLAGS = (
    ("--learning-rate", "learning_rate", float),
    ("--batch-size", "batch_size", int),
    ("--epochs", "epochs", int),
    ("--dropout-rate", "dropout_rate", float),
    ("--clip-norm", "clip_norm", float),
    ("--seed", "seed", int),
    ("--mechanism", "mechanism", str),
    ("--validation-fraction", "validation_fraction", float),
    ("--oov-seed", "oov_seed", int),
    ("--embedding-dim", "embedding_dim", int),
)


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--config", help="flat JSON config file; explicit flags override it"
    )
    for flag, dest, kind in CONFIG_FLAGS:
        if dest == "mechanism":
            parser.add_argument(
                flag,
                dest=dest,
                choices=["rule", "interp", "one_step", "constrained"],
                default=None,
            )
        else:
            parser.add_argument(flag, dest=dest, type=kind, default=None)


def _settings_from_args(args) -> TrainSettings:
    doc = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as handle:
                doc = json.load(handle)
        except OSError as exc:
            raise ops.ServiceError(f"cannot read config file {args.config}: {exc}")
        except json.JSONDecodeError as exc:
            raise ops.ServiceError(f"config file {args.config} is not valid JSON: {exc.msg}")
        if not isinstance(doc, dict):
            raise ops.ServiceError("config file must hold a flat JSON object")
    for _, dest, _ in CONFIG_FLAGS:
        value = getattr(args, dest)
        if value is not None:
            doc[dest] = value
    try:
        return TrainSettings(**doc)
    except pydantic.ValidationError as exc:
        raise ops.ServiceError(f"bad training config: {exc}")


def _print_json(model):
    print(json.dumps(model.model_dump(), indent=2))


def _cmd_train(args) -> int:
    req = TrainRequest(
        corpus_path=args.corpus,
        ontology_path=args.ontology,
        model_out=args.out,
        vectors_path=args.vectors,
        val_corpus_path=args.val_corpus,
        log_out=args.log,
        config=_settings_from_args(args),
    )
    _print_json(ops.train_op(req))
    return 0


def _cmd_eval(args) -> int:
    req = EvalRequest(
        model_path=args.model,
        corpus_path=args.corpus,
        vectors_path=args.vectors,
        ontology_path=args.ontology,
        workers=args.workers,
    )
    _print_json(ops.eval_op(req))
    return 0


def _cmd_synth(args) -> int:
    req = SynthRequest(
        out_path=args.out,
        n_dialogues=args.dialogues,
        turns_per_dialogue=args.turns,
        ontology_path=args.ontology,
        ontology_out=args.ontology_out,
        n_slots=args.slots,
        values_per_slot=args.values,
        requestables=args.requestables.split(",") if args.requestables else [],
        goal_change_prob=args.goal_change_prob,
        mention_prob=args.mention_prob,
        request_prob=args.request_prob,
        system_request_prob=args.system_request_prob,
        system_confirm_prob=args.system_confirm_prob,
        include_dontcare=args.include_dontcare,
        seed=args.seed,
    )
    _print_json(ops.synth_op(req))
    return 0


def _cmd_gradcheck(args) -> int:
    req = GradcheckRequest(
        mechanism=args.mechanism,
        dimension=args.dimension,
        n_slots=args.slots,
        values_per_slot=args.values,
        n_dialogues=args.dialogues,
        turns_per_dialogue=args.turns,
        n_examples=args.examples,
        eps=args.eps,
        threshold=args.threshold,
        seed=args.seed,
    )
    resp = ops.gradcheck_op(req)
    _print_json(resp)
    if not resp.passed:
        print(
            f"gradient check FAILED: max relative error "
            f"{resp.max_relative_error:.3e} at {resp.worst_parameter}",
            file=sys.stderr,
        )
        return 2
    return 0


def _cmd_compare(args) -> int:
    req = CompareRequest(
        train_corpus_path=args.train_corpus,
        test_corpus_path=args.test_corpus,
        ontology_path=args.ontology,
        vectors_path=args.vectors,
        mechanisms=args.mechanisms.split(","),
        seeds=[int(s) for s in args.seeds.split(",")],
        config=_settings_from_args(args),
    )
    _print_json(ops.compare_op(req))
    return 0


def _parse_sys_line(body: str, tracker) -> SystemActModel | None:
    parts = body.strip().split(None, 1)
    if len(parts) != 2:
        return None
    kind, rest = parts[0].lower(), parts[1].strip()
    if kind == "request":
        return SystemActModel(kind="request", slot=rest)
    if kind == "confirm" and "=" in rest:
        slot, value = rest.split("=", 1)
        return SystemActModel(kind="confirm", slot=slot.strip(), value=value.strip())
    return None


def _cmd_track(args) -> int:
    store = SessionStore()
    try:
        session = store.create(args.model, args.vectors)
    except Exception as exc:  # model/store loading problems are usage errors
        raise ops.ServiceError(str(exc))
    sid = session.session_id
    pending: list[SystemActModel] = []
    for raw in sys.stdin:
        line = raw.rstrip("\n")
        stripped = line.strip()
        if stripped == "reset":
            view = store.reset(sid)
            pending = []
            print(json.dumps(view.model_dump()), flush=True)
            continue
        if stripped.startswith("sys:"):
            act = _parse_sys_line(stripped[4:], session.tracker)
            if act is None:
                print(f"warning: malformed system act line: {line!r}", file=sys.stderr)
                continue
            try:
                from .service.sessions import build_turn

                build_turn(session.tracker, "", [act])  # validate against ontology
            except SessionInputError as exc:
                print(f"warning: {exc}; line skipped", file=sys.stderr)
                continue
            pending.append(act)
            continue
        view = store.step(sid, line, pending)
        pending = []
        print(json.dumps(view.model_dump()), flush=True)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="belieftrack",
        description="Belief-state tracking: train, evaluate, synthesize, "
        "verify gradients, compare update mechanisms, track interactively.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a tracker and write a model file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--vectors", help="word vector file (omit for a pure-OOV store)")
    p.add_argument("--val-corpus", help="explicit validation corpus")
    p.add_argument("--log", help="epoch log path (default: <out>.log.tsv)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", help="override the embedding path stored in the model")
    p.add_argument("--ontology", help="cross-check against an ontology file")
    p.add_argument(
        "--workers", type=int, default=1,
        help="parallel dialogue tracking; results identical to --workers 1",
    )
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--dialogues", type=int, default=100)
    p.add_argument("--turns", type=int, default=6)
    p.add_argument("--ontology", help="existing ontology file")
    p.add_argument("--ontology-out", help="where to save a generated ontology")
    p.add_argument("--slots", type=int, default=2)
    p.add_argument("--values", type=int, default=5)
    p.add_argument("--requestables", default="phone,address")
    p.add_argument("--goal-change-prob", type=float, default=0.2)
    p.add_argument("--mention-prob", type=float, default=0.8)
    p.add_argument("--request-prob", type=float, default=0.2)
    p.add_argument("--system-request-prob", type=float, default=0.15)
    p.add_argument("--system-confirm-prob", type=float, default=0.1)
    p.add_argument("--include-dontcare", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("gradcheck", help="verify analytic gradients")
    p.add_argument(
        "--mechanism",
        choices=["rule", "interp", "one_step", "constrained"],
        default="constrained",
    )
    p.add_argument("--dimension", type=int, default=8)
    p.add_argument("--slots", type=int, default=2)
    p.add_argument("--values", type=int, default=3)
    p.add_argument("--dialogues", type=int, default=6)
    p.add_argument("--turns", type=int, default=4)
    p.add_argument("--examples", type=int, default=10)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("compare", help="train and compare update mechanisms")
    p.add_argument("--train-corpus", required=True)
    p.add_argument("--test-corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--vectors")
    p.add_argument("--mechanisms", default="rule,constrained")
    p.add_argument("--seeds", default="0")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("track", help="interactive tracking console on stdin")
    p.add_argument("--model", required=True)
    p.add_argument("--vectors")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ops.ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except pydantic.ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
