"""Additive ensemble of soft decision trees.

The ensemble score is the plain sum of the tree scores.  Training treats the
trees boosting-style: tree t regresses onto exponential-loss residuals of the
partial ensemble formed by trees 1..t-1, and the global objective is the sum
over trees of the squared-error fit plus both tree regularizers.  Residual
targets are held constant when differentiating (stop-gradient, the default),
mirroring classic boosting where earlier stages are frozen; the joint
gradient without the convention is available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .sdt import (
    NodeNet,
    SDTParams,
    TreeForward,
    TreeGrad,
    apply_step,
    backward_from_forward,
    reg_l2,
    tree_grad_vector,
    tree_param_vector,
    set_tree_param_vector,
    _balance_terms,
    _decay_coefficients,
)

# Exponent clamp for the residuals: prevents overflow on extreme scores
# early in training.
EXP_CLAMP = 30.0


@dataclass
class DBDTModel:
    """Ordered collection of soft decision trees plus scoring configuration."""

    trees: list[SDTParams]
    feature_names: list[str]
    score_squash: bool = True
    trained_config: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def depth(self) -> int:
        return self.trees[0].depth

    def n_params(self) -> int:
        return sum(t.n_params() for t in self.trees)


class EnsembleBackprop(NamedTuple):
    grads: list[TreeGrad]
    loss: float
    per_tree: list[tuple[float, float, float]]


def init_model(
    T: int,
    d: int,
    c: int,
    P: int,
    seed: int,
    hidden: int | None = None,
    feature_names: list[str] | None = None,
    score_squash: bool = True,
) -> DBDTModel:
    """Build T trees of depth d whose routing nets have c layers; weights are
    Xavier-uniform, biases and leaf scores start at zero."""
    if T < 1 or d < 2 or c < 1:
        raise ValueError("need T >= 1, d >= 2, c >= 1")
    if hidden is None:
        hidden = P
    rng = np.random.default_rng(seed)
    if c == 1:
        dims = [(1, P)]
    else:
        dims = [(hidden, P)] + [(hidden, hidden)] * (c - 2) + [(1, hidden)]
    trees = []
    n_inner = 2 ** (d - 1) - 1
    for _ in range(T):
        inner = []
        for _ in range(n_inner):
            layers = []
            for out_dim, in_dim in dims:
                bound = np.sqrt(6.0 / (in_dim + out_dim))
                w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
                layers.append((w, np.zeros(out_dim)))
            inner.append(NodeNet(layers=layers))
        trees.append(SDTParams(depth=d, inner=inner, leaves=np.zeros(2 ** (d - 1))))
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(P)]
    if len(feature_names) != P:
        raise ValueError("feature_names length must equal P")
    return DBDTModel(trees=trees, feature_names=list(feature_names),
                     score_squash=score_squash)


def tree_scores(model: DBDTModel, X: np.ndarray) -> np.ndarray:
    """Per-tree scores, shape (T, N)."""
    X = np.asarray(X, dtype=float)
    out = np.empty((model.n_trees, X.shape[0]))
    for t, tree in enumerate(model.trees):
        out[t] = TreeForward(tree, X).score
    return out


def ensemble_scores(model: DBDTModel, X: np.ndarray) -> np.ndarray:
    """Raw ensemble scores H(x) for a batch."""
    return tree_scores(model, X).sum(axis=0)


def partial_score(model: DBDTModel, x: np.ndarray, upto: int) -> float:
    """Sum of the first ``upto`` tree scores for one input."""
    if not 0 <= upto <= model.n_trees:
        raise ValueError(f"upto must be in [0, {model.n_trees}]")
    x = np.asarray(x, dtype=float)
    if upto == 0:
        return 0.0
    return float(sum(TreeForward(t, x[None, :]).score[0] for t in model.trees[:upto]))


def ensemble_score(model: DBDTModel, x: np.ndarray) -> float:
    return partial_score(model, x, model.n_trees)


def residuals(labels: np.ndarray, partial_scores: np.ndarray) -> np.ndarray:
    """Exponential-loss residuals y * exp(-y * H), the negative loss gradient
    at the current partial score; the exponent is clamped to +-EXP_CLAMP."""
    labels = np.asarray(labels, dtype=float)
    partial_scores = np.asarray(partial_scores, dtype=float)
    if labels.shape != partial_scores.shape:
        raise ValueError("labels and scores must have equal length")
    expo = np.clip(-labels * partial_scores, -EXP_CLAMP, EXP_CLAMP)
    return labels * np.exp(expo)


def local_loss(tree_score: np.ndarray, residual_targets: np.ndarray) -> float:
    """Squared-error fit of one tree to its (constant) residual targets."""
    tree_score = np.asarray(tree_score, dtype=float)
    residual_targets = np.asarray(residual_targets, dtype=float)
    if tree_score.shape != residual_targets.shape:
        raise ValueError("scores and targets must have equal length")
    return float(((tree_score - residual_targets) ** 2).sum())


def global_objective(
    model: DBDTModel,
    X: np.ndarray,
    y: np.ndarray,
    lam1: float,
    lam2: float,
    per_node_decay: bool = False,
):
    """Total training objective and its per-tree (fit, balance, weight-norm)
    breakdown, with tree t's residuals taken from the partial sum of trees
    1..t-1."""
    bp = _objective_pass(model, X, y, lam1, lam2, per_node_decay, want_grads=False)
    return bp.loss, bp.per_tree


def ensemble_backward(
    model: DBDTModel,
    X: np.ndarray,
    y: np.ndarray,
    lam1: float,
    lam2: float,
    stop_gradient: bool = True,
    per_node_decay: bool = False,
) -> EnsembleBackprop:
    """Gradients of the global objective over all tree parameters, together
    with the loss value and per-tree breakdown."""
    return _objective_pass(
        model, X, y, lam1, lam2, per_node_decay,
        want_grads=True, stop_gradient=stop_gradient,
    )


def _objective_pass(
    model: DBDTModel,
    X: np.ndarray,
    y: np.ndarray,
    lam1: float,
    lam2: float,
    per_node_decay: bool,
    want_grads: bool,
    stop_gradient: bool = True,
) -> EnsembleBackprop:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ValueError("batch and labels must be nonempty and equal length")

    T = model.n_trees
    forwards = [TreeForward(t, X, keep=want_grads) for t in model.trees]
    scores = np.stack([f.score for f in forwards])

    H = np.zeros(X.shape[0])
    total = 0.0
    per_tree = []
    own_upstream = []
    resid_chain = []  # d r^{t-1} / d H_{t-1}, for the joint-gradient mode
    for t in range(T):
        r = residuals(y, H)
        h_t = scores[t]
        fit = float(((h_t - r) ** 2).sum())
        c_t = _balance_value(model.trees[t], forwards[t], lam1, per_node_decay)
        omega_t = reg_l2(model.trees[t], lam2)
        total = total + (fit + c_t + omega_t)
        per_tree.append((fit, c_t, omega_t))
        if want_grads:
            own_upstream.append(2.0 * (h_t - r))
            if not stop_gradient:
                expo = -y * H
                live = np.abs(expo) < EXP_CLAMP
                # d r / d H = -exp(-yH); zero where the exponent clamp is active
                resid_chain.append(np.where(live, -np.abs(r), 0.0))
        H = H + h_t

    if not want_grads:
        return EnsembleBackprop(grads=[], loss=total, per_tree=per_tree)

    upstreams = own_upstream
    if not stop_gradient:
        # L_t also reaches every earlier tree s < t through r^{t-1}(H_{t-1}).
        tail = np.zeros(X.shape[0])
        extras = [None] * T
        for t in range(T - 1, -1, -1):
            extras[t] = tail.copy()
            tail += own_upstream[t] * (-resid_chain[t])
        upstreams = [own_upstream[t] + extras[t] for t in range(T)]

    grads = [
        backward_from_forward(model.trees[t], forwards[t], upstreams[t],
                              lam1, lam2, per_node_decay)
        for t in range(T)
    ]
    return EnsembleBackprop(grads=grads, loss=total, per_tree=per_tree)


def _balance_value(tree, fwd: TreeForward, lam1: float, per_node_decay: bool) -> float:
    if lam1 == 0.0:
        return 0.0
    m = tree.n_inner
    _, clamped, _, _ = _balance_terms(fwd, m)
    kappa = _decay_coefficients(tree, lam1, per_node_decay)
    return float(-(kappa * (0.5 * np.log(clamped) + 0.5 * np.log1p(-clamped))).sum())


def score_backward(model: DBDTModel, X: np.ndarray, upstream: np.ndarray) -> list[TreeGrad]:
    """Gradients of sum_z upstream_z * H(x_z) over all tree parameters (no
    regularizers); since H is a plain sum, every tree sees the same upstream."""
    X = np.asarray(X, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    grads = []
    for tree in model.trees:
        fwd = TreeForward(tree, X, keep=True)
        grads.append(backward_from_forward(tree, fwd, upstream, 0.0, 0.0))
    return grads


def predict_label(model: DBDTModel, x: np.ndarray, threshold: float = 0.0) -> int:
    """Sign of (score - threshold), ties mapping to +1."""
    return 1 if ensemble_score(model, x) >= threshold else -1


def predict_labels_from_scores(scores: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    return np.where(scores >= threshold, 1.0, -1.0)


def param_vector(model: DBDTModel) -> np.ndarray:
    """Flatten all tree parameters in tree order."""
    return np.concatenate([tree_param_vector(t) for t in model.trees])


def set_param_vector(model: DBDTModel, vec: np.ndarray) -> None:
    pos = 0
    for tree in model.trees:
        k = tree.n_params()
        set_tree_param_vector(tree, vec[pos: pos + k])
        pos += k
    if pos != vec.size:
        raise ValueError("parameter vector length mismatch")


def grad_vector(model: DBDTModel, grads: list[TreeGrad]) -> np.ndarray:
    return np.concatenate([
        tree_grad_vector(t, g) for t, g in zip(model.trees, grads)
    ])


def apply_grads(model: DBDTModel, grads: list[TreeGrad], lr: float) -> None:
    for tree, grad in zip(model.trees, grads):
        apply_step(tree, grad, lr)
