"""AUC-surrogate machinery for training on imbalanced data.

The pairwise squared-margin AUC loss is recast as a saddle-point objective
over the model parameters, two auxiliary primal scalars a, b and one dual
scalar alpha, weighted by the positive-class prior p. ``psi`` is the
per-sample saddle objective; it decomposes pointwise as
psi = g1 + alpha * g2 - g3.  ``q_map`` is the compositional inner map: one
gradient step on the averaged exponential-loss objective applied to the
tree-parameter block, auxiliary scalars passed through.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .ensemble import (
    DBDTModel,
    ensemble_backward,
    ensemble_scores,
    grad_vector,
    param_vector,
    score_backward,
    set_param_vector,
)


@dataclass
class AUCHead:
    """Auxiliary scalars of the saddle objective: primal a, b, dual alpha,
    and the positive-class prior p of the training split."""

    a: float
    b: float
    alpha: float
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"positive prior p must be in (0, 1), got {self.p}")


def score_for_auc(model: DBDTModel, X: np.ndarray) -> np.ndarray:
    """Bounded scores for the AUC objective: the logistic of the raw ensemble
    score when squashing is on (default), the raw score otherwise."""
    raw = ensemble_scores(model, np.atleast_2d(np.asarray(X, dtype=float)))
    return expit(raw) if model.score_squash else raw


def auc_surrogate(pos_scores, neg_scores, margin: float = 1.0) -> float:
    """Empirical squared-margin AUC loss: mean over all positive-negative
    pairs of (margin - s_pos + s_neg)^2.  Diagnostic only; training goes
    through the saddle objective."""
    pos = np.asarray(pos_scores, dtype=float)
    neg = np.asarray(neg_scores, dtype=float)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both score sets must be nonempty")
    diffs = margin - pos[:, None] + neg[None, :]
    return float((diffs ** 2).mean())


def _masks(labels: np.ndarray):
    labels = np.asarray(labels, dtype=float)
    return (labels == 1.0).astype(float), (labels == -1.0).astype(float)


def g1(head: AUCHead, scores, labels, margin: float = 1.0) -> np.ndarray:
    """Quadratic-plus-linear primal component (the margin scales the linear
    part, which at margin 1 is exactly g2)."""
    s = np.asarray(scores, dtype=float)
    ipos, ineg = _masks(labels)
    p = head.p
    quad = (1.0 - p) * (s - head.a) ** 2 * ipos + p * (s - head.b) ** 2 * ineg
    return quad + margin * g2(head, s, labels)


def g2(head: AUCHead, scores, labels) -> np.ndarray:
    """Linear component multiplying the dual variable."""
    s = np.asarray(scores, dtype=float)
    ipos, ineg = _masks(labels)
    return 2.0 * head.p * s * ineg - 2.0 * (1.0 - head.p) * s * ipos


def g3(alpha: float, p: float) -> float:
    """Concave-in-alpha component p(1-p) alpha^2."""
    return p * (1.0 - p) * alpha ** 2


def psi(head: AUCHead, scores, labels, margin: float = 1.0) -> np.ndarray:
    """Per-sample saddle objective; identically g1 + alpha*g2 - g3."""
    s = np.asarray(scores, dtype=float)
    ipos, ineg = _masks(labels)
    p = head.p
    return (
        (1.0 - p) * (s - head.a) ** 2 * ipos
        + p * (s - head.b) ** 2 * ineg
        + 2.0 * (margin + head.alpha) * (p * s * ineg - (1.0 - p) * s * ipos)
        - p * (1.0 - p) * head.alpha ** 2
    )


def psi_partials(head: AUCHead, scores, labels, margin: float = 1.0):
    """Exact per-sample partial derivatives of psi with respect to
    (score, a, b, alpha)."""
    s = np.asarray(scores, dtype=float)
    ipos, ineg = _masks(labels)
    p = head.p
    d_score = (
        2.0 * (1.0 - p) * (s - head.a) * ipos
        + 2.0 * p * (s - head.b) * ineg
        + 2.0 * (margin + head.alpha) * (p * ineg - (1.0 - p) * ipos)
    )
    d_a = -2.0 * (1.0 - p) * (s - head.a) * ipos
    d_b = -2.0 * p * (s - head.b) * ineg
    d_alpha = 2.0 * (p * s * ineg - (1.0 - p) * s * ipos) - 2.0 * p * (1.0 - p) * head.alpha
    return d_score, d_a, d_b, d_alpha


def n_extended(model: DBDTModel) -> int:
    """Dimension of the extended parameter vector (all tree parameters plus
    a and b)."""
    return model.n_params() + 2


def flatten_extended(model: DBDTModel, head: AUCHead) -> np.ndarray:
    return np.concatenate([param_vector(model), [head.a, head.b]])


def write_extended(model: DBDTModel, head: AUCHead, vec: np.ndarray) -> None:
    set_param_vector(model, vec[:-2])
    head.a = float(vec[-2])
    head.b = float(vec[-1])


def avg_loss_grad(model: DBDTModel, X, y, lam1: float, lam2: float) -> tuple[np.ndarray, float]:
    """Gradient (flat, tree block only) and value of the averaged training
    objective over a batch: the batch objective divided by the batch size."""
    bp = ensemble_backward(model, X, y, lam1, lam2)
    n = np.asarray(y).shape[0]
    return grad_vector(model, bp.grads) / n, bp.loss / n


def q_map(model: DBDTModel, head: AUCHead, X, y, beta: float,
          lam1: float, lam2: float) -> np.ndarray:
    """Compositional inner map: extended vector with the tree block moved one
    gradient step of size beta down the averaged training objective, a and b
    unchanged."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    vec = flatten_extended(model, head)
    if beta > 0.0:
        grad, _ = avg_loss_grad(model, X, y, lam1, lam2)
        vec[:-2] -= beta * grad
    return vec


def _hvp_apply(grad_fn, theta: np.ndarray, beta: float, v: np.ndarray, step: float) -> np.ndarray:
    """v - beta * (Hessian @ v) with the Hessian-vector product taken by
    central finite differences of an analytic gradient function."""
    norm = np.linalg.norm(v)
    if beta == 0.0 or norm == 0.0:
        return v.copy()
    unit = v / norm
    g_plus = grad_fn(theta + step * unit)
    g_minus = grad_fn(theta - step * unit)
    hvp = norm * (g_plus - g_minus) / (2.0 * step)
    return v - beta * hvp


def q_jacobian_apply(
    model: DBDTModel,
    head: AUCHead,
    X,
    y,
    beta: float,
    v: np.ndarray,
    lam1: float,
    lam2: float,
    mode: str = "first_order",
) -> np.ndarray:
    """Apply the Jacobian of the inner map to a vector over the extended
    parameters.  First-order mode (default) treats the Jacobian as the
    identity; exact mode forms the Hessian-vector product of the averaged
    objective by central finite differences of the analytic gradient.  The
    a, b components always pass through."""
    v = np.asarray(v, dtype=float)
    if v.size != n_extended(model):
        raise ValueError("vector dimension does not match extended parameters")
    if mode == "first_order":
        return v.copy()
    if mode != "exact":
        raise ValueError(f"unknown jacobian mode {mode!r}")
    theta0 = param_vector(model)
    scratch = copy.deepcopy(model)

    def grad_fn(theta):
        set_param_vector(scratch, theta)
        g, _ = avg_loss_grad(scratch, X, y, lam1, lam2)
        return g

    step = 1e-4 * (1.0 + np.abs(theta0).max())
    out = v.copy()
    out[:-2] = _hvp_apply(grad_fn, theta0, beta, v[:-2], step)
    return out


def mean_psi_primal_grad(
    model: DBDTModel, head: AUCHead, X, y, margin: float = 1.0
) -> np.ndarray:
    """Gradient of the batch mean of (g1 + alpha*g2) with respect to the
    extended parameters, evaluated at the model's current parameters.  The
    tree block is chained through the score squash when it is on."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    raw = ensemble_scores(model, X)
    s = expit(raw) if model.score_squash else raw
    d_score, d_a, d_b, _ = psi_partials(head, s, y, margin)
    upstream = d_score / n
    if model.score_squash:
        upstream = upstream * s * (1.0 - s)
    grads = score_backward(model, X, upstream)
    flat = grad_vector(model, grads)
    return np.concatenate([flat, [d_a.mean(), d_b.mean()]])


def mean_g2(model: DBDTModel, head: AUCHead, X, y) -> float:
    """Batch mean of g2 at the model's current parameters."""
    s = score_for_auc(model, np.asarray(X, dtype=float))
    return float(g2(head, s, y).mean())
