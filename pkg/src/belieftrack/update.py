"""Belief-state update mechanisms and goal decision logic.

Four ways of folding the turn-level estimate ``y`` into the running belief
state ``b``:

* rule-based mixing with a tuned coefficient (not trainable by gradients),
* the same mixing with the coefficient learned through a logit,
* a one-step recurrence ``softmax(W_curr y + W_past b_prev)`` with full,
  slot-specific matrices,
* the constrained form of that recurrence where each matrix is tied to one
  diagonal and one off-diagonal scalar, four global parameters in total.

The constrained form is permutation-equivariant over value indices, which is
what lets it handle values never seen in training; the full one-step form is
not. Only the difference pairs (a_curr - b_curr) and (a_past - b_past) are
identifiable: adding a constant to every logit leaves the softmax unchanged,
so tests and the recovery harness compare differences, never raw scalars.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .ontology import Slot


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_vjp(p: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax at output ``p``."""
    return p * (upstream - float(np.dot(upstream, p)))


def _check_same_length(y: np.ndarray, b_prev: np.ndarray) -> int:
    if y.shape != b_prev.shape or y.ndim != 1:
        raise DimensionMismatchError(
            f"y has shape {y.shape}, previous state has shape {b_prev.shape}"
        )
    return y.shape[0]


# ---------------------------------------------------------------------------
# Mechanism parameter containers
# ---------------------------------------------------------------------------


@dataclass
class RuleBased:
    """Fixed mixing coefficient, tuned by validation grid search."""

    lam: float = 0.5

    kind = "rule"


@dataclass
class LearnedInterpolation:
    """Mixing coefficient sigmoid(lambda_logit), trained with the decoder."""

    lambda_logit: float = 0.0

    kind = "interp"


@dataclass
class OneStep:
    """Slot-specific recurrence matrices, keyed by slot name."""

    w_curr: dict[str, np.ndarray] = field(default_factory=dict)
    w_past: dict[str, np.ndarray] = field(default_factory=dict)

    kind = "one_step"


@dataclass
class Constrained:
    """Tied recurrence: one diagonal and one off-diagonal scalar per matrix."""

    a_curr: float = 1.0
    b_curr: float = 0.0
    a_past: float = 1.0
    b_past: float = 0.0

    kind = "constrained"


UpdateMechanism = RuleBased | LearnedInterpolation | OneStep | Constrained

MECHANISM_KINDS = ("rule", "interp", "one_step", "constrained")


# ---------------------------------------------------------------------------
# Forward operations
# ---------------------------------------------------------------------------


def rule_based_update(y: np.ndarray, b_prev: np.ndarray, lam: float) -> np.ndarray:
    """Componentwise ``lam * y + (1 - lam) * b_prev``.

    The result is deliberately not renormalized; downstream goal decisions go
    through :func:`decide_goal` instead of treating this as a distribution.
    """
    y = np.asarray(y, dtype=float)
    b_prev = np.asarray(b_prev, dtype=float)
    _check_same_length(y, b_prev)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixing coefficient must be in [0, 1], got {lam}")
    return lam * y + (1.0 - lam) * b_prev


def learned_interpolation_update(
    y: np.ndarray, b_prev: np.ndarray, lambda_logit: float
) -> np.ndarray:
    """Sigmoid-weighted mixing, renormalized to sum to one."""
    y = np.asarray(y, dtype=float)
    b_prev = np.asarray(b_prev, dtype=float)
    _check_same_length(y, b_prev)
    lam = sigmoid(lambda_logit)
    mixed = lam * y + (1.0 - lam) * b_prev
    return mixed / mixed.sum()


def one_step_update(
    y: np.ndarray, b_prev: np.ndarray, w_curr: np.ndarray, w_past: np.ndarray
) -> np.ndarray:
    """``softmax(w_curr @ y + w_past @ b_prev)``."""
    y = np.asarray(y, dtype=float)
    b_prev = np.asarray(b_prev, dtype=float)
    n = _check_same_length(y, b_prev)
    w_curr = np.asarray(w_curr, dtype=float)
    w_past = np.asarray(w_past, dtype=float)
    if w_curr.shape != (n, n) or w_past.shape != (n, n):
        raise DimensionMismatchError(
            f"update matrices must be {n}x{n}, got {w_curr.shape} and {w_past.shape}"
        )
    return softmax(w_curr @ y + w_past @ b_prev)


def build_constrained_matrix(a: float, b: float, n: int) -> np.ndarray:
    """n x n matrix with ``a`` on the diagonal and ``b`` everywhere else."""
    return np.full((n, n), float(b)) + (float(a) - float(b)) * np.eye(n)


def constrained_logits(y: np.ndarray, b_prev: np.ndarray, params: Constrained) -> np.ndarray:
    # Closed form of the tied matrices: each logit sees its own component
    # through the diagonal and the full sums through the off-diagonal tie.
    return (
        (params.a_curr - params.b_curr) * y
        + params.b_curr * y.sum()
        + (params.a_past - params.b_past) * b_prev
        + params.b_past * b_prev.sum()
    )


def constrained_update(
    y: np.ndarray, b_prev: np.ndarray, params: Constrained
) -> np.ndarray:
    """The one-step update with both matrices tied to two scalars each."""
    y = np.asarray(y, dtype=float)
    b_prev = np.asarray(b_prev, dtype=float)
    _check_same_length(y, b_prev)
    return softmax(constrained_logits(y, b_prev, params))


def decide_goal(b: np.ndarray, prev_goal: str, slot: Slot) -> str:
    """Threshold-and-carry goal decision over a (possibly unnormalized) state.

    Detected values are the non-none components with mass >= 0.5. The
    highest-probability member wins (ties broken by lowest index); an empty
    detected set keeps the previous goal.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (slot.dimension,):
        raise DimensionMismatchError(
            f"state for slot {slot.name!r} must have length {slot.dimension}"
        )
    detected = [i for i in range(slot.dimension) if i != slot.none_index and b[i] >= 0.5]
    if not detected:
        return prev_goal
    best = max(detected, key=lambda i: (b[i], -i))
    return slot.label_at(best)


def apply_update(
    mechanism: UpdateMechanism,
    y: np.ndarray,
    b_prev: np.ndarray,
    slot_name: str | None = None,
) -> np.ndarray:
    """Dispatch the configured update for one slot."""
    if isinstance(mechanism, RuleBased):
        return rule_based_update(y, b_prev, mechanism.lam)
    if isinstance(mechanism, LearnedInterpolation):
        return learned_interpolation_update(y, b_prev, mechanism.lambda_logit)
    if isinstance(mechanism, Constrained):
        return constrained_update(y, b_prev, mechanism)
    if isinstance(mechanism, OneStep):
        if slot_name is None:
            raise ValueError("one-step update needs the slot name")
        return one_step_update(
            y, b_prev, mechanism.w_curr[slot_name], mechanism.w_past[slot_name]
        )
    raise TypeError(f"unknown update mechanism {mechanism!r}")


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


@dataclass
class UpdateGrads:
    params: dict[str, float | np.ndarray]
    y: np.ndarray
    b_prev: np.ndarray


def update_gradients(
    mechanism: UpdateMechanism,
    y: np.ndarray,
    b_prev: np.ndarray,
    upstream: np.ndarray,
    slot_name: str | None = None,
) -> UpdateGrads:
    """Exact analytic gradients of the forward update, contracted with
    ``upstream`` (the loss gradient w.r.t. the update's output)."""
    y = np.asarray(y, dtype=float)
    b_prev = np.asarray(b_prev, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    _check_same_length(y, b_prev)
    _check_same_length(y, upstream)

    if isinstance(mechanism, RuleBased):
        # lam is tuned, not trained: no parameter partials.
        return UpdateGrads(
            params={},
            y=mechanism.lam * upstream,
            b_prev=(1.0 - mechanism.lam) * upstream,
        )

    if isinstance(mechanism, LearnedInterpolation):
        lam = sigmoid(mechanism.lambda_logit)
        mixed = lam * y + (1.0 - lam) * b_prev
        total = mixed.sum()
        out = mixed / total
        # VJP of x -> x / sum(x)
        d_mixed = (upstream - float(np.dot(upstream, out))) / total
        d_lam = float(np.dot(d_mixed, y - b_prev))
        d_logit = d_lam * lam * (1.0 - lam)
        return UpdateGrads(
            params={"lambda_logit": d_logit},
            y=lam * d_mixed,
            b_prev=(1.0 - lam) * d_mixed,
        )

    if isinstance(mechanism, Constrained):
        p = constrained_update(y, b_prev, mechanism)
        dz = softmax_vjp(p, upstream)
        dz_sum = float(dz.sum())
        return UpdateGrads(
            params={
                "a_curr": float(np.dot(dz, y)),
                "b_curr": dz_sum * float(y.sum()) - float(np.dot(dz, y)),
                "a_past": float(np.dot(dz, b_prev)),
                "b_past": dz_sum * float(b_prev.sum()) - float(np.dot(dz, b_prev)),
            },
            y=(mechanism.a_curr - mechanism.b_curr) * dz + mechanism.b_curr * dz_sum,
            b_prev=(mechanism.a_past - mechanism.b_past) * dz
            + mechanism.b_past * dz_sum,
        )

    if isinstance(mechanism, OneStep):
        if slot_name is None:
            raise ValueError("one-step gradients need the slot name")
        w_curr = mechanism.w_curr[slot_name]
        w_past = mechanism.w_past[slot_name]
        p = one_step_update(y, b_prev, w_curr, w_past)
        dz = softmax_vjp(p, upstream)
        return UpdateGrads(
            params={"w_curr": np.outer(dz, y), "w_past": np.outer(dz, b_prev)},
            y=w_curr.T @ dz,
            b_prev=w_past.T @ dz,
        )

    raise TypeError(f"unknown update mechanism {mechanism!r}")
