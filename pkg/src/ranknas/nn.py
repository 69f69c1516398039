"""Feed-forward numeric core: cell ops, forward/backward over a cell DAG, SGD.

Everything is float64 and hand-differentiated. A :class:`CellNet` holds a flat
parameter store keyed by name; edge operations live under
``"e{edge}.o{op}.W"`` / ``".b"`` so a super-net and a stand-alone net share one
layout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import InvalidArgumentError, NumericOverflowError

if TYPE_CHECKING:
    from .space import Architecture, SearchSpace

CHECKPOINT_MAGIC = "RANKNAS-CKPT 1"


class OpKind(enum.Enum):
    ZERO = "zero"
    IDENTITY = "identity"
    LINEAR = "linear"
    RELU_LINEAR = "relu_linear"
    AVG_MIX = "avg_mix"

    @property
    def has_params(self) -> bool:
        return self in (OpKind.LINEAR, OpKind.RELU_LINEAR)


@dataclass
class ParamTensor:
    values: np.ndarray
    grad: np.ndarray = None
    velocity: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        if self.velocity is None:
            self.velocity = np.zeros_like(self.values)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


@dataclass
class CellNet:
    width: int
    n_features: int
    n_classes: int
    n_nodes: int
    ops: tuple[OpKind, ...]
    params: dict[str, ParamTensor] = field(default_factory=dict)
    # keys with gradients accumulated since the last sgd_step
    pending: set[str] = field(default_factory=set)

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple((i, j) for j in range(1, self.n_nodes) for i in range(j))

    def edge_key(self, edge: int, op: int) -> str:
        return f"e{edge}.o{op}"

    def param_keys(self, arch) -> list[str]:
        keys = ["stem.W", "stem.b"]
        for e, o in enumerate(arch):
            if self.ops[o].has_params:
                keys += [f"e{e}.o{o}.W", f"e{e}.o{o}.b"]
        return keys + ["cls.W", "cls.b"]

    def check(self, arch) -> None:
        n_edges = self.n_nodes * (self.n_nodes - 1) // 2
        if len(arch) != n_edges or any(c < 0 or c >= len(self.ops) for c in arch):
            raise InvalidArgumentError(f"architecture {arch} does not fit this network's space")
        for e, o in enumerate(arch):
            if self.ops[o].has_params and f"e{e}.o{o}.W" not in self.params:
                raise InvalidArgumentError(f"network has no parameters for edge {e}, op {o}")

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad.fill(0.0)
        self.pending.clear()

    def copy(self) -> CellNet:
        params = {k: ParamTensor(p.values.copy(), p.grad.copy(), p.velocity.copy())
                  for k, p in self.params.items()}
        return CellNet(self.width, self.n_features, self.n_classes, self.n_nodes,
                       self.ops, params, set(self.pending))


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(space: SearchSpace, width: int, d: int, c: int,
                rng: np.random.Generator, arch: Architecture | None = None) -> CellNet:
    """Fresh network for ``space``; restricted to ``arch``'s ops when given.

    Weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
    """
    if width < 1:
        raise InvalidArgumentError("width must be >= 1")
    net = CellNet(width, d, c, space.n_nodes, tuple(space.ops))
    net.params["stem.W"] = ParamTensor(_uniform(rng, d, (d, width)))
    net.params["stem.b"] = ParamTensor(np.zeros(width))
    for e in range(space.n_edges):
        for o, kind in enumerate(space.ops):
            if not kind.has_params or (arch is not None and arch[e] != o):
                continue
            net.params[f"e{e}.o{o}.W"] = ParamTensor(_uniform(rng, width, (width, width)))
            net.params[f"e{e}.o{o}.b"] = ParamTensor(np.zeros(width))
    net.params["cls.W"] = ParamTensor(_uniform(rng, width, (width, c)))
    net.params["cls.b"] = ParamTensor(np.zeros(c))
    return net


def _avg_mix(h):
    return (np.roll(h, 1, axis=1) + h + np.roll(h, -1, axis=1)) / 3.0


def _forward(net: CellNet, arch, X):
    net.check(arch)
    P = net.params
    X = np.asarray(X, dtype=np.float64)
    nodes = [X @ P["stem.W"].values + P["stem.b"].values]
    zero = np.zeros_like(nodes[0])
    pre = {}
    edges = net.edges
    for j in range(1, net.n_nodes):
        acc = zero
        for e, (i, jj) in enumerate(edges):
            if jj != j:
                continue
            kind = net.ops[arch[e]]
            h = nodes[i]
            if kind is OpKind.ZERO:
                continue
            if kind is OpKind.IDENTITY:
                out = h
            elif kind is OpKind.AVG_MIX:
                out = _avg_mix(h)
            else:
                key = f"e{e}.o{arch[e]}"
                z = h @ P[key + ".W"].values + P[key + ".b"].values
                if kind is OpKind.RELU_LINEAR:
                    pre[e] = z
                    out = np.maximum(z, 0.0)
                else:
                    out = z
            acc = acc + out
        nodes.append(acc)
    logits = nodes[-1] @ P["cls.W"].values + P["cls.b"].values
    return logits, (X, nodes, pre)


def _backward(net: CellNet, arch, cache, dlogits, scale: float = 1.0) -> None:
    X, nodes, pre = cache
    P = net.params
    g = dlogits * scale
    P["cls.W"].grad += nodes[-1].T @ g
    P["cls.b"].grad += g.sum(axis=0)
    dnodes: list = [None] * net.n_nodes
    dnodes[-1] = g @ P["cls.W"].values.T
    edges = net.edges
    for e in reversed(range(len(edges))):
        i, j = edges[e]
        gout = dnodes[j]
        kind = net.ops[arch[e]]
        if kind is OpKind.ZERO:
            continue
        key = f"e{e}.o{arch[e]}"
        if gout is None:
            continue
        if kind is OpKind.IDENTITY:
            gin = gout
        elif kind is OpKind.AVG_MIX:
            gin = _avg_mix(gout)
        else:
            gz = gout * (pre[e] > 0) if kind is OpKind.RELU_LINEAR else gout
            P[key + ".W"].grad += nodes[i].T @ gz
            P[key + ".b"].grad += gz.sum(axis=0)
            gin = gz @ P[key + ".W"].values.T
        dnodes[i] = gin if dnodes[i] is None else dnodes[i] + gin
    if dnodes[0] is not None:
        P["stem.W"].grad += X.T @ dnodes[0]
        P["stem.b"].grad += dnodes[0].sum(axis=0)
    net.pending.update(net.param_keys(arch))


def forward(net: CellNet, arch, X) -> np.ndarray:
    return _forward(net, arch, X)[0]


def _cross_entropy(logits, y):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = np.asarray(y)
    loss = -logp[np.arange(y.size), y].mean()
    return loss, logp


def loss_grad(net: CellNet, arch, X, y, scale: float = 1.0) -> float:
    """Mean cross-entropy; adds ``scale`` times its gradient into the grad buffers."""
    loss, _ = loss_and_backward(net, arch, X, y, scale)
    return loss


def loss_and_backward(net: CellNet, arch, X, y, scale: float = 1.0):
    logits, cache = _forward(net, arch, X)
    loss, logp = _cross_entropy(logits, y)
    if not np.isfinite(loss):
        raise NumericOverflowError(f"non-finite loss {loss}")
    if scale != 0.0:
        dlogits = np.exp(logp)
        dlogits[np.arange(len(y)), y] -= 1.0
        _backward(net, arch, cache, dlogits / len(y), scale)
    return float(loss), logits


def forward_loss(net: CellNet, arch, X, y):
    """Loss plus the cache needed to backpropagate it later with :func:`backward_loss`."""
    logits, cache = _forward(net, arch, X)
    loss, logp = _cross_entropy(logits, y)
    if not np.isfinite(loss):
        raise NumericOverflowError(f"non-finite loss {loss}")
    return float(loss), (cache, logp, np.asarray(y))


def backward_loss(net: CellNet, arch, saved, scale: float) -> None:
    cache, logp, y = saved
    dlogits = np.exp(logp)
    dlogits[np.arange(y.size), y] -= 1.0
    _backward(net, arch, cache, dlogits / y.size, scale)


def sgd_step(net: CellNet, arch=None, lr: float = 0.01, momentum: float = 0.0,
             weight_decay: float = 0.0, clip_norm: float | None = None) -> None:
    """Momentum SGD with L2 decay on ``arch``'s parameters, or on every
    parameter that received gradient since the last step when ``arch`` is None.

    ``clip_norm`` rescales the gradients of the updated parameters so their
    global L2 norm does not exceed it. Gradients of updated parameters are
    reset to zero.
    """
    keys = net.param_keys(arch) if arch is not None else sorted(net.pending)
    factor = 1.0
    if clip_norm is not None:
        norm = np.sqrt(sum(float(np.sum(net.params[k].grad ** 2)) for k in keys))
        if norm > clip_norm:
            factor = clip_norm / norm
    for key in keys:
        p = net.params[key]
        grad = p.grad * factor if factor != 1.0 else p.grad
        step = grad + weight_decay * p.values if weight_decay else grad
        if momentum:
            p.velocity *= momentum
            p.velocity += step
            step = p.velocity
        p.values -= lr * step
        p.grad.fill(0.0)
    net.pending.difference_update(keys)


def evaluate(net: CellNet, arch, X, y) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) without touching gradients."""
    y = np.asarray(y)
    if y.size == 0:
        raise InvalidArgumentError("empty evaluation batch")
    logits = forward(net, arch, X)
    loss, _ = _cross_entropy(logits, y)
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    return float(loss), acc


def save_checkpoint(net: CellNet, path) -> None:
    """Text dump: magic line, one header line, then one ``key<TAB>shape<TAB>values`` record each."""
    ops = ",".join(op.value for op in net.ops)
    lines = [CHECKPOINT_MAGIC,
             f"width={net.width} n_features={net.n_features} n_classes={net.n_classes} "
             f"n_nodes={net.n_nodes} ops={ops}"]
    for key in sorted(net.params):
        v = net.params[key].values
        shape = "x".join(str(s) for s in v.shape)
        lines.append(f"{key}\t{shape}\t" + " ".join(repr(float(x)) for x in v.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> CellNet:
    magic, header, *records = Path(path).read_text().splitlines()
    if magic != CHECKPOINT_MAGIC:
        raise InvalidArgumentError(f"{path}: not a checkpoint (magic {magic!r})")
    meta = dict(tok.split("=", 1) for tok in header.split())
    net = CellNet(int(meta["width"]), int(meta["n_features"]), int(meta["n_classes"]),
                  int(meta["n_nodes"]), tuple(OpKind(v) for v in meta["ops"].split(",")))
    for rec in records:
        key, shape, values = rec.split("\t")
        dims = tuple(int(s) for s in shape.split("x"))
        net.params[key] = ParamTensor(np.array([float(x) for x in values.split()]).reshape(dims))
    return net
