"""Soft decision tree: a complete binary tree whose inner nodes are small
neural routing networks and whose leaves hold scalar scores.

Inner node i (heap order, children 2i+1 / 2i+2) emits a right-branch
probability through a logistic output unit; an input therefore reaches every
leaf with a path probability, and the tree score is the path-probability
weighted sum of the leaf scalars.  The backward pass is written by hand and
is exact: it differentiates the score term, the routing-balance penalty and
the weight-norm penalty jointly, including the dependence of the per-node
balance statistic on the arrival probabilities of ancestor nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

# Balance statistics are clamped away from {0, 1} before the logs so a
# saturated node yields a large-but-finite penalty.
ALPHA_CLAMP = 1e-6
# Below this total arrival mass a node is treated as unreachable for the
# batch: its balance statistic is pinned to 0.5 and carries no gradient.
UNREACHABLE_MASS = 1e-30


@dataclass
class NodeNet:
    """Routing network of one inner node: ``layers`` is a list of (W, b)
    pairs with W of shape (out, in).  Hidden activations are tanh, the final
    single output unit goes through the logistic function."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    @property
    def n_inputs(self) -> int:
        return self.layers[0][0].shape[1]

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)


@dataclass
class SDTParams:
    """One soft decision tree of depth ``depth`` (>= 2): ``inner`` holds the
    2^(depth-1) - 1 routing networks in heap order, ``leaves`` the
    2^(depth-1) scalar leaf scores."""

    depth: int
    inner: list[NodeNet]
    leaves: np.ndarray

    def __post_init__(self):
        m = 2 ** (self.depth - 1) - 1
        if len(self.inner) != m:
            raise ValueError(
                f"depth {self.depth} requires {m} inner nodes, got {len(self.inner)}"
            )
        if self.leaves.shape != (m + 1,):
            raise ValueError(
                f"depth {self.depth} requires {m + 1} leaves, got {self.leaves.shape}"
            )

    @property
    def n_inner(self) -> int:
        return len(self.inner)

    @property
    def n_leaves(self) -> int:
        return self.leaves.size

    @property
    def n_features(self) -> int:
        return self.inner[0].n_inputs

    def n_params(self) -> int:
        return sum(node.n_params() for node in self.inner) + self.leaves.size


@dataclass
class TreeGrad:
    """Gradient container mirroring SDTParams: per inner node a list of
    (dW, db) pairs, plus the leaf-score gradient vector."""

    inner: list[list[tuple[np.ndarray, np.ndarray]]]
    leaves: np.ndarray


@dataclass
class ForwardTrace:
    """Forward quantities for a single input: routing probabilities d_i per
    inner node, arrival probabilities per inner node, path probabilities per
    leaf, and the tree score."""

    routing: np.ndarray
    node_probs: np.ndarray
    leaf_probs: np.ndarray
    score: float


def _check_input(params: SDTParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != params.n_features:
        raise ValueError(
            f"input dimension {x.shape} does not match tree feature dimension "
            f"{params.n_features}"
        )
    return x


def _node_forward(node: NodeNet, X: np.ndarray, keep: bool = False):
    """Forward a batch (N, in) through one routing net.  Returns the
    right-branch probabilities (N,) and, when ``keep``, the per-layer input
    cache needed for backprop."""
    cache = [X] if keep else None
    a = X
    for w, b in node.layers[:-1]:
        a = np.tanh(a @ w.T + b)
        if keep:
            cache.append(a)
    w, b = node.layers[-1]
    logits = (a @ w.T + b).ravel()
    return expit(logits), cache


def _node_backward(node: NodeNet, cache, prob: np.ndarray, dprob: np.ndarray):
    """Backprop dprob (N,) through one routing net, returning [(dW, db)]."""
    ds = (dprob * prob * (1.0 - prob))[:, None]
    grads = [None] * len(node.layers)
    for l in range(len(node.layers) - 1, -1, -1):
        w, _ = node.layers[l]
        a_in = cache[l]
        grads[l] = (ds.T @ a_in, ds.sum(axis=0))
        if l > 0:
            da = ds @ w
            ds = da * (1.0 - cache[l] ** 2)
    return grads


class TreeForward:
    """Batched forward context reused by the backward pass."""

    __slots__ = ("routing", "arrival", "score", "caches", "n")

    def __init__(self, params: SDTParams, X: np.ndarray, keep: bool = False):
        m = params.n_inner
        self.n = X.shape[0]
        self.routing = np.empty((m, self.n))
        self.caches = [] if keep else None
        for i, node in enumerate(params.inner):
            p, cache = _node_forward(node, X, keep=keep)
            self.routing[i] = p
            if keep:
                self.caches.append(cache)
        self.arrival = np.empty((2 * m + 1, self.n))
        self.arrival[0] = 1.0
        for i in range(m):
            self.arrival[2 * i + 1] = self.arrival[i] * (1.0 - self.routing[i])
            self.arrival[2 * i + 2] = self.arrival[i] * self.routing[i]
        self.score = params.leaves @ self.arrival[m:]

    def leaf_probs(self, params: SDTParams) -> np.ndarray:
        return self.arrival[params.n_inner:]


def forward_batch(params: SDTParams, X: np.ndarray) -> TreeForward:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.n_features:
        raise ValueError(
            f"batch shape {X.shape} does not match tree feature dimension "
            f"{params.n_features}"
        )
    return TreeForward(params, X)


def routing_prob(node: NodeNet, x: np.ndarray) -> float:
    """Right-branch probability of one inner node for a single input."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != node.n_inputs:
        raise ValueError(
            f"input dimension {x.shape} does not match node input width "
            f"{node.n_inputs}"
        )
    p, _ = _node_forward(node, x[None, :])
    return float(p[0])


def path_probabilities(params: SDTParams, x: np.ndarray) -> ForwardTrace:
    """Full forward trace for one input; leaf probabilities sum to 1."""
    x = _check_input(params, x)
    fwd = TreeForward(params, x[None, :])
    m = params.n_inner
    return ForwardTrace(
        routing=fwd.routing[:, 0].copy(),
        node_probs=fwd.arrival[:m, 0].copy(),
        leaf_probs=fwd.arrival[m:, 0].copy(),
        score=float(fwd.score[0]),
    )


def predict_score(params: SDTParams, x: np.ndarray) -> float:
    """Tree score: sum over leaves of leaf scalar times path probability."""
    x = _check_input(params, x)
    fwd = TreeForward(params, x[None, :])
    return float(fwd.score[0])


def leaf_class_distribution(phi: np.ndarray) -> np.ndarray:
    """Softmax over a leaf's per-class outputs (standalone classification
    variant; the boosting path uses scalar leaves)."""
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("leaf outputs must be finite")
    z = phi - phi.max()
    e = np.exp(z)
    return e / e.sum()


def hard_route(params: SDTParams, x: np.ndarray):
    """Greedy root-to-leaf walk: branch right when the routing probability is
    >= 0.5.  Returns (leaf index, [(node index, 'right'|'left'), ...]) --
    the interpretable decision path."""
    x = _check_input(params, x)
    m = params.n_inner
    path = []
    i = 0
    while i < m:
        p = routing_prob(params.inner[i], x)
        go_right = p >= 0.5
        path.append((i, "right" if go_right else "left"))
        i = 2 * i + 2 if go_right else 2 * i + 1
    return i - m, path


def balance_alpha(params: SDTParams, X: np.ndarray, i: int) -> float:
    """Arrival-weighted mean routing probability of inner node i over the
    batch; 0.5 when the node is unreachable for the whole batch."""
    fwd = forward_batch(params, X)
    denom = fwd.arrival[i].sum()
    if denom < UNREACHABLE_MASS:
        return 0.5
    return float((fwd.arrival[i] * fwd.routing[i]).sum() / denom)


def _decay_coefficients(params: SDTParams, lam1: float, per_node_decay: bool) -> np.ndarray:
    m = params.n_inner
    if per_node_decay:
        levels = np.floor(np.log2(np.arange(1, m + 1))).astype(int) + 1
        return lam1 * 2.0 ** (-levels.astype(float))
    return np.full(m, lam1 * 2.0 ** (-params.depth))


def _balance_terms(fwd: TreeForward, m: int):
    """Per-node balance statistics over a batch: raw ratio, clamped value,
    arrival mass, and the mask of nodes whose ratio is differentiable."""
    mass = fwd.arrival[:m].sum(axis=1)
    wsum = (fwd.arrival[:m] * fwd.routing).sum(axis=1)
    reachable = mass >= UNREACHABLE_MASS
    raw = np.where(reachable, wsum / np.where(reachable, mass, 1.0), 0.5)
    clamped = np.clip(raw, ALPHA_CLAMP, 1.0 - ALPHA_CLAMP)
    inside = reachable & (raw > ALPHA_CLAMP) & (raw < 1.0 - ALPHA_CLAMP)
    return raw, clamped, mass, inside


def reg_balance(
    params: SDTParams, X: np.ndarray, lam1: float, per_node_decay: bool = False
) -> float:
    """Routing-balance penalty: decayed cross-entropy between the observed
    per-node branch distribution and the uniform {0.5, 0.5} target."""
    if lam1 == 0.0:
        return 0.0
    fwd = forward_batch(params, X)
    m = params.n_inner
    _, clamped, _, _ = _balance_terms(fwd, m)
    kappa = _decay_coefficients(params, lam1, per_node_decay)
    return float(-(kappa * (0.5 * np.log(clamped) + 0.5 * np.log1p(-clamped))).sum())


def reg_l2(params: SDTParams, lam2: float) -> float:
    """Weight-norm penalty: lam2 times the sum over inner nodes of the
    Euclidean norm of each node's full parameter vector (leaves excluded)."""
    if lam2 == 0.0:
        return 0.0
    total = 0.0
    for node in params.inner:
        sq = sum(float((w ** 2).sum() + (b ** 2).sum()) for w, b in node.layers)
        total += np.sqrt(sq)
    return lam2 * total


def zeros_grad(params: SDTParams) -> TreeGrad:
    return TreeGrad(
        inner=[[(np.zeros_like(w), np.zeros_like(b)) for w, b in node.layers]
               for node in params.inner],
        leaves=np.zeros_like(params.leaves),
    )


def backward(
    params: SDTParams,
    X: np.ndarray,
    upstream: np.ndarray,
    lam1: float = 0.0,
    lam2: float = 0.0,
    per_node_decay: bool = False,
) -> TreeGrad:
    """Exact gradient of sum_z upstream_z * h(x_z) + balance penalty +
    weight-norm penalty with respect to every tree parameter."""
    X = np.asarray(X, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (X.shape[0],):
        raise ValueError("upstream length must equal batch size")
    fwd = TreeForward(params, X, keep=True)
    return backward_from_forward(params, fwd, upstream, lam1, lam2, per_node_decay)


def backward_from_forward(
    params: SDTParams,
    fwd: TreeForward,
    upstream: np.ndarray,
    lam1: float = 0.0,
    lam2: float = 0.0,
    per_node_decay: bool = False,
) -> TreeGrad:
    """Backward pass reusing a kept forward context (``keep=True``)."""
    if fwd.caches is None:
        raise ValueError("forward context was built without caches")
    m = params.n_inner
    n = fwd.n
    routing, arrival = fwd.routing, fwd.arrival

    # Adjoints of the arrival probabilities; leaves seed the score term.
    g_pi = np.zeros((2 * m + 1, n))
    g_pi[m:] = params.leaves[:, None] * upstream[None, :]
    g_d = np.zeros((m, n))

    if lam1 != 0.0:
        raw, clamped, mass, inside = _balance_terms(fwd, m)
        kappa = _decay_coefficients(params, lam1, per_node_decay)
        # dC/d alpha_i, zeroed where the clamp or the unreachable fallback
        # makes the penalty locally constant.
        c_alpha = np.where(
            inside, -kappa * (0.5 / clamped - 0.5 / (1.0 - clamped)), 0.0
        )
    else:
        c_alpha = None

    for i in range(m - 1, -1, -1):
        if c_alpha is not None and c_alpha[i] != 0.0:
            g_pi[i] += c_alpha[i] * (routing[i] - raw[i]) / mass[i]
            g_d[i] += c_alpha[i] * arrival[i] / mass[i]
        g_pi[i] += g_pi[2 * i + 1] * (1.0 - routing[i]) + g_pi[2 * i + 2] * routing[i]
        g_d[i] += arrival[i] * (g_pi[2 * i + 2] - g_pi[2 * i + 1])

    grad = TreeGrad(inner=[], leaves=arrival[m:] @ upstream)
    for i, node in enumerate(params.inner):
        node_grads = _node_backward(node, fwd.caches[i], routing[i], g_d[i])
        if lam2 != 0.0:
            sq = sum(float((w ** 2).sum() + (b ** 2).sum()) for w, b in node.layers)
            norm = np.sqrt(sq)
            if norm > 0.0:
                scale = lam2 / norm
                node_grads = [
                    (dw + scale * w, db + scale * b)
                    for (dw, db), (w, b) in zip(node_grads, node.layers)
                ]
        grad.inner.append(node_grads)
    return grad


def tree_param_vector(params: SDTParams) -> np.ndarray:
    """Flatten all tree parameters (node weights/biases in heap order, then
    leaves) into one vector."""
    parts = []
    for node in params.inner:
        for w, b in node.layers:
            parts.append(w.ravel())
            parts.append(b.ravel())
    parts.append(params.leaves)
    return np.concatenate(parts)


def set_tree_param_vector(params: SDTParams, vec: np.ndarray) -> None:
    """Write a flat vector (same layout as tree_param_vector) back in place."""
    pos = 0
    for node in params.inner:
        for k, (w, b) in enumerate(node.layers):
            w[...] = vec[pos: pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = vec[pos: pos + b.size]
            pos += b.size
    params.leaves[...] = vec[pos: pos + params.leaves.size]
    pos += params.leaves.size
    if pos != vec.size:
        raise ValueError("parameter vector length mismatch")


def tree_grad_vector(params: SDTParams, grad: TreeGrad) -> np.ndarray:
    parts = []
    for node_grads in grad.inner:
        for dw, db in node_grads:
            parts.append(dw.ravel())
            parts.append(db.ravel())
    parts.append(grad.leaves)
    return np.concatenate(parts)


def apply_step(params: SDTParams, grad: TreeGrad, lr: float) -> None:
    """In-place gradient-descent step of size lr."""
    for node, node_grads in zip(params.inner, grad.inner):
        for (w, b), (dw, db) in zip(node.layers, node_grads):
            w -= lr * dw
            b -= lr * db
    params.leaves -= lr * grad.leaves
