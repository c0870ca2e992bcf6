"""The two training loops.

``train_sgd`` minimizes the boosting objective by plain mini-batch gradient
descent.  ``train_pdsca`` runs the primal-dual stochastic compositional
adaptive loop: a moving-average estimate of the inner map purifies features,
the outer saddle objective is descended with momentum and a coordinate-wise
adaptive step, and the dual variable ascends with projection.  Both loops
are bitwise reproducible under (seed, config, data).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from .auc_head import (
    AUCHead,
    flatten_extended,
    mean_g2,
    mean_psi_primal_grad,
    n_extended,
    psi,
    q_jacobian_apply,
    q_map,
    score_for_auc,
    write_extended,
)
from .data import Dataset, batch_iter
from .ensemble import DBDTModel, apply_grads, ensemble_backward, ensemble_scores
from .metrics import auc


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss or gradient goes non-finite."""


@dataclass
class SGDConfig:
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 0.01
    lam1: float = 0.1
    lam2: float = 0.005
    seed: int = 0
    stop_gradient: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class PDSCAConfig:
    epochs: int = 200
    batch_size: int = 128
    beta: float = 0.001       # inner gradient step
    beta0: float = 0.9        # moving-average rate of the inner estimate
    beta1: float = 0.9        # momentum rate
    beta2: float = 0.999      # second-moment rate
    g0: float = 1e-8          # adaptivity floor
    eta1: float = 0.1         # primal step
    eta2: float = 0.1         # dual step
    margin: float = 1.0
    lam1: float = 0.1
    lam2: float = 0.005
    weight_decay: float = 1e-4
    seed: int = 0
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 0.1
    dual_projection: str = "nonnegative"   # none | nonnegative | interval
    alpha_max: float = 100.0
    jacobian_mode: str = "first_order"     # first_order | exact

    def __post_init__(self):
        for name, v in (("beta0", self.beta0), ("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        if self.eta1 <= 0 or self.eta2 <= 0 or self.g0 <= 0:
            raise ValueError("eta1, eta2, G0 must be > 0")
        if self.dual_projection not in ("none", "nonnegative", "interval"):
            raise ValueError(f"unknown dual projection {self.dual_projection!r}")


@dataclass
class PDSCAState:
    """Mutable optimizer state: moving-average inner estimate u, momentum z,
    second moment z2 (all over the extended parameters), the dual scalar, and
    the step counter.  u starts unset and is warm-started from the first
    batch."""

    z: np.ndarray
    z2: np.ndarray
    alpha: float = 0.0
    step: int = 0
    u: np.ndarray | None = None


def init_pdsca_state(model: DBDTModel) -> PDSCAState:
    dim = n_extended(model)
    return PDSCAState(z=np.zeros(dim), z2=np.zeros(dim))


def _project_dual(alpha: float, config: PDSCAConfig) -> float:
    if config.dual_projection == "nonnegative":
        return max(alpha, 0.0)
    if config.dual_projection == "interval":
        return min(max(alpha, 0.0), config.alpha_max)
    return alpha


def train_sgd(model: DBDTModel, train: Dataset, config: SGDConfig,
              val: Dataset | None = None):
    """Mini-batch gradient descent on the boosting objective.  Mutates the
    model in place; returns (model, trace) where the trace holds one record
    per step plus one summary record per epoch."""
    X, y = train.features, train.labels
    trace: list[dict] = []
    for epoch in range(config.epochs):
        losses = []
        for step, idx in enumerate(batch_iter(len(y), config.batch_size,
                                              config.seed, epoch)):
            bp = ensemble_backward(model, X[idx], y[idx], config.lam1, config.lam2,
                                   stop_gradient=config.stop_gradient)
            if not np.isfinite(bp.loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch} step {step}"
                )
            apply_grads(model, bp.grads, config.learning_rate)
            trace.append({"epoch": epoch, "step": step, "loss": bp.loss})
            losses.append(bp.loss)
        record = {"epoch": epoch, "mean_loss": float(np.mean(losses))}
        if val is not None:
            record["val_auc"] = auc(ensemble_scores(model, val.features), val.labels)
        trace.append(record)
    return model, trace


def pdsca_step(model: DBDTModel, head: AUCHead, state: PDSCAState,
               S1: tuple[np.ndarray, np.ndarray], S2: tuple[np.ndarray, np.ndarray],
               config: PDSCAConfig) -> dict:
    """One primal-dual compositional step.  Mutates model, head and state in
    place and returns step statistics (mean saddle objective at the inner
    estimate)."""
    X1, y1 = S1
    X2, y2 = S2
    if X1.shape[0] == 0 or X2.shape[0] == 0:
        raise ValueError("both sample sets must be nonempty")

    qv = q_map(model, head, X1, y1, config.beta, config.lam1, config.lam2)
    if state.u is None:
        state.u = qv
    else:
        state.u = (1.0 - config.beta0) * state.u + config.beta0 * qv

    # gradient of the outer objective, taken at the inner estimate u
    at_u = copy.deepcopy(model)
    head_u = AUCHead(a=head.a, b=head.b, alpha=head.alpha, p=head.p)
    write_extended(at_u, head_u, state.u)
    v = mean_psi_primal_grad(at_u, head_u, X2, y2, config.margin)

    theta = flatten_extended(model, head)
    grad_est = q_jacobian_apply(model, head, X1, y1, config.beta, v,
                                config.lam1, config.lam2, mode=config.jacobian_mode)
    if config.weight_decay:
        grad_est = grad_est + config.weight_decay * theta
    if not np.all(np.isfinite(grad_est)):
        raise TrainingDivergedError(f"non-finite gradient at step {state.step}")

    state.z = (1.0 - config.beta1) * state.z + config.beta1 * grad_est
    state.z2 = (1.0 - config.beta2) * state.z2 + config.beta2 * grad_est ** 2
    theta = theta - config.eta1 * state.z / (np.sqrt(state.z2) + config.g0)
    write_extended(model, head, theta)

    # dual ascent with the coupling term evaluated on the union batch at u
    X12 = np.concatenate([X1, X2])
    y12 = np.concatenate([y1, y2])
    g2_val = mean_g2(at_u, head_u, X12, y12)
    d_g3 = 2.0 * head.p * (1.0 - head.p) * head.alpha
    new_alpha = _project_dual(head.alpha + config.eta2 * (g2_val - d_g3), config)
    head.alpha = new_alpha
    state.alpha = new_alpha
    state.step += 1

    s12 = score_for_auc(at_u, X12)
    return {"mean_psi": float(psi(head_u, s12, y12, config.margin).mean())}


def train_pdsca(model: DBDTModel, train: Dataset, config: PDSCAConfig,
                val: Dataset | None = None):
    """Compositional saddle-point training.  Per epoch, consecutive disjoint
    batch pairs of the seeded permutation feed pdsca_step; an unpaired
    trailing batch is dropped.  The stage schedule multiplies both step sizes
    by the decay factor at the listed epochs.  Returns (model, head, trace)."""
    X, y = train.features, train.labels
    head = AUCHead(a=0.0, b=0.0, alpha=0.0, p=train.pos_ratio)
    state = init_pdsca_state(model)
    stage = config
    trace: list[dict] = []
    for epoch in range(config.epochs):
        if epoch in config.decay_epochs:
            stage = replace(stage, eta1=stage.eta1 * config.decay_factor,
                            eta2=stage.eta2 * config.decay_factor)
        chunks = list(batch_iter(len(y), config.batch_size, config.seed, epoch))
        vals = []
        for k in range(len(chunks) // 2):
            i1, i2 = chunks[2 * k], chunks[2 * k + 1]
            stats = pdsca_step(model, head, state,
                               (X[i1], y[i1]), (X[i2], y[i2]), stage)
            trace.append({"epoch": epoch, "step": k, "mean_psi": stats["mean_psi"]})
            vals.append(stats["mean_psi"])
        record = {"epoch": epoch,
                  "mean_psi": float(np.mean(vals)) if vals else float("nan")}
        if val is not None:
            record["val_auc"] = auc(ensemble_scores(model, val.features), val.labels)
        trace.append(record)
    return model, head, trace
