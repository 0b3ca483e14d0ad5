"""Reverse-mode autodiff on a flat tape, sized for small dense networks.

The tape is an append-only list of primitive ops (matmul, bias add,
activations, elementwise arithmetic, reductions and their broadcast
inverses) over float64 numpy arrays.  Values are computed eagerly at
emission, parents always precede children, and ``Tape.replay`` recomputes
every node bit-exactly from the leaves.

``backward`` does not produce raw gradient arrays: it extends the tape
with the backward pass itself, expressed in the same primitives.  A
second ``backward`` over the extended tape therefore yields exact second
derivatives, which is how the gradient-penalty term differentiates the
norm of a discriminator input gradient with respect to the
discriminator's own parameters.  Activation masks (relu, leaky relu)
enter the backward pass as constants, so the relu derivative at 0 is 0
and piecewise-linear regions contribute no curvature.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rng import derive_seed, normals

HIDDEN_ACTIVATIONS = ("relu", "leaky_relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh")


class DimensionError(ValueError):
    """Operand shapes do not satisfy an op's contract."""


class ContractError(ValueError):
    """An op precondition (scalar loss, scalar output, ...) is violated."""


def ensure_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values in {what}")
    return arr


# ---------------------------------------------------------------------------
# Tape


class Tape:
    """Append-only op tape; node ids are indices, parents precede children."""

    __slots__ = ("_ops", "_parents", "_values", "_aux")

    def __init__(self) -> None:
        self._ops: list[str] = []
        self._parents: list[tuple[int, ...]] = []
        self._values: list[np.ndarray] = []
        self._aux: list = []

    def __len__(self) -> int:
        return len(self._ops)

    def value(self, i: int) -> np.ndarray:
        return self._values[i]

    def op(self, i: int) -> str:
        return self._ops[i]

    def _push(self, op: str, parents: tuple[int, ...], value, aux=None) -> int:
        self._ops.append(op)
        self._parents.append(parents)
        self._values.append(value)
        self._aux.append(aux)
        return len(self._ops) - 1

    # -- leaves

    def leaf(self, value: np.ndarray) -> int:
        return self._push("leaf", (), np.asarray(value, dtype=np.float64))

    # -- primitives (values computed eagerly)

    def matmul(self, a: int, b: int, ta: bool = False, tb: bool = False) -> int:
        va, vb = self._values[a], self._values[b]
        if ta:
            va = va.T
        if tb:
            vb = vb.T
        if va.shape[1] != vb.shape[0]:
            raise DimensionError(f"matmul {va.shape} x {vb.shape}")
        return self._push("matmul", (a, b), np.matmul(va, vb), (ta, tb))

    def add(self, a: int, b: int) -> int:
        return self._push("add", (a, b), self._values[a] + self._values[b])

    def sub(self, a: int, b: int) -> int:
        return self._push("sub", (a, b), self._values[a] - self._values[b])

    def mul(self, a: int, b: int) -> int:
        return self._push("mul", (a, b), self._values[a] * self._values[b])

    def affine(self, a: int, alpha: float, beta: float) -> int:
        return self._push(
            "affine", (a,), alpha * self._values[a] + beta, (alpha, beta)
        )

    def add_bias(self, a: int, b: int) -> int:
        va, vb = self._values[a], self._values[b]
        if va.ndim != 2 or vb.shape != (va.shape[1],):
            raise DimensionError(f"add_bias {va.shape} + {vb.shape}")
        return self._push("add_bias", (a, b), va + vb)

    def relu(self, a: int) -> int:
        return self._push("relu", (a,), np.maximum(self._values[a], 0.0))

    def leaky_relu(self, a: int, slope: float) -> int:
        v = self._values[a]
        return self._push("leaky_relu", (a,), np.where(v > 0.0, v, slope * v), slope)

    def tanh(self, a: int) -> int:
        return self._push("tanh", (a,), np.tanh(self._values[a]))

    def reciprocal(self, a: int) -> int:
        return self._push("reciprocal", (a,), 1.0 / self._values[a])

    def sqrt(self, a: int) -> int:
        return self._push("sqrt", (a,), np.sqrt(self._values[a]))

    def reduce_sum(self, a: int, axis: int | None = None) -> int:
        v = self._values[a]
        if axis not in (None, 0, 1):
            raise DimensionError("reduce_sum axis must be None, 0 or 1")
        return self._push("reduce_sum", (a,), v.sum(axis=axis), (axis, v.shape))

    def broadcast(self, a: int, axis: int | None, shape: tuple[int, ...]) -> int:
        v = self._values[a]
        if axis == 1:
            out = np.broadcast_to(v[:, None], shape)
        else:
            out = np.broadcast_to(v, shape)
        return self._push("broadcast", (a,), out, (axis, shape))

    # -- composite: row-wise Euclidean norm of a 2-D node

    def l2_norm_rows(self, a: int) -> int:
        return self.sqrt(self.reduce_sum(self.mul(a, a), axis=1))

    def replay(self) -> list[np.ndarray]:
        """Recompute all node values in insertion order from the leaves."""
        vals: list[np.ndarray] = []
        for op, parents, aux, recorded in zip(
            self._ops, self._parents, self._aux, self._values
        ):
            if op == "leaf":
                vals.append(recorded)
            elif op == "matmul":
                va, vb = vals[parents[0]], vals[parents[1]]
                ta, tb = aux
                vals.append(np.matmul(va.T if ta else va, vb.T if tb else vb))
            elif op == "add" or op == "add_bias":
                vals.append(vals[parents[0]] + vals[parents[1]])
            elif op == "sub":
                vals.append(vals[parents[0]] - vals[parents[1]])
            elif op == "mul":
                vals.append(vals[parents[0]] * vals[parents[1]])
            elif op == "affine":
                alpha, beta = aux
                vals.append(alpha * vals[parents[0]] + beta)
            elif op == "relu":
                vals.append(np.maximum(vals[parents[0]], 0.0))
            elif op == "leaky_relu":
                v = vals[parents[0]]
                vals.append(np.where(v > 0.0, v, aux * v))
            elif op == "tanh":
                vals.append(np.tanh(vals[parents[0]]))
            elif op == "reciprocal":
                vals.append(1.0 / vals[parents[0]])
            elif op == "sqrt":
                vals.append(np.sqrt(vals[parents[0]]))
            elif op == "reduce_sum":
                vals.append(vals[parents[0]].sum(axis=aux[0]))
            elif op == "broadcast":
                axis, shape = aux
                v = vals[parents[0]]
                vals.append(
                    np.broadcast_to(v[:, None] if axis == 1 else v, shape)
                )
            else:  # pragma: no cover
                raise RuntimeError(f"unknown op {op}")
        return vals


def backward(tape: Tape, out: int, wrt: Sequence[int]) -> dict[int, int]:
    """Extend the tape with the backward pass of scalar node ``out``.

    Returns a map from each reachable node in ``wrt`` to the node id of its
    adjoint.  Nodes that do not influence ``out`` are absent.  The emitted
    ops are ordinary tape primitives, so the result of one backward pass
    can itself be differentiated by a second call.
    """
    if np.shape(tape.value(out)) != ():
        raise ContractError("backward requires a scalar output node")
    adj: dict[int, int] = {out: tape.leaf(np.float64(1.0))}

    def acc(node: int, grad: int) -> None:
        prev = adj.get(node)
        adj[node] = grad if prev is None else tape.add(prev, grad)

    ops, parents, values, aux = tape._ops, tape._parents, tape._values, tape._aux
    for i in range(out, -1, -1):
        g = adj.get(i)
        if g is None:
            continue
        op = ops[i]
        if op == "leaf":
            continue
        par = parents[i]
        if op == "matmul":
            a, b = par
            ta, tb = aux[i]
            if ta:
                acc(a, tape.matmul(b, g, tb, True))
            else:
                acc(a, tape.matmul(g, b, False, not tb))
            if tb:
                acc(b, tape.matmul(g, a, True, ta))
            else:
                acc(b, tape.matmul(a, g, not ta, False))
        elif op == "add":
            acc(par[0], g)
            acc(par[1], g)
        elif op == "sub":
            acc(par[0], g)
            acc(par[1], tape.affine(g, -1.0, 0.0))
        elif op == "mul":
            a, b = par
            acc(a, tape.mul(g, b))
            acc(b, tape.mul(g, a))
        elif op == "affine":
            acc(par[0], tape.affine(g, aux[i][0], 0.0))
        elif op == "add_bias":
            acc(par[0], g)
            acc(par[1], tape.reduce_sum(g, axis=0))
        elif op == "relu":
            mask = tape.leaf((values[par[0]] > 0.0).astype(np.float64))
            acc(par[0], tape.mul(g, mask))
        elif op == "leaky_relu":
            v = values[par[0]]
            mask = tape.leaf(np.where(v > 0.0, 1.0, aux[i]))
            acc(par[0], tape.mul(g, mask))
        elif op == "tanh":
            deriv = tape.affine(tape.mul(i, i), -1.0, 1.0)
            acc(par[0], tape.mul(g, deriv))
        elif op == "reciprocal":
            acc(par[0], tape.affine(tape.mul(g, tape.mul(i, i)), -1.0, 0.0))
        elif op == "sqrt":
            half_inv = tape.affine(tape.reciprocal(i), 0.5, 0.0)
            acc(par[0], tape.mul(g, half_inv))
        elif op == "reduce_sum":
            axis, shape = aux[i]
            acc(par[0], tape.broadcast(g, axis, shape))
        elif op == "broadcast":
            acc(par[0], tape.reduce_sum(g, axis=aux[i][0]))
        else:  # pragma: no cover
            raise RuntimeError(f"unknown op {op}")
    return {w: adj[w] for w in wrt if w in adj}


# ---------------------------------------------------------------------------
# Dense feed-forward networks


@dataclass
class Mlp:
    """Dense feed-forward net; weight i maps layer_dims[i] -> layer_dims[i+1]."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    leaky_slope: float = 0.2
    output_activation: str = "identity"

    def __post_init__(self) -> None:
        dims = self.layer_dims
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError("layer_dims needs at least an input and output dim")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("one weight matrix and bias vector per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise DimensionError(
                    f"layer {i}: weight {w.shape}, bias {b.shape}, "
                    f"expected {(dims[i + 1], dims[i])} and {(dims[i + 1],)}"
                )
            ensure_finite(w, f"weight {i}")
            ensure_finite(b, f"bias {i}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.leaky_slope,
            self.output_activation,
        )


def init_mlp(
    layer_dims: Sequence[int],
    seed: int,
    hidden_activation: str = "relu",
    leaky_slope: float = 0.2,
    output_activation: str = "identity",
) -> Mlp:
    """He-style init: W ~ N(0, 2/fan_in), b = 0, from the seeded stream."""
    dims = list(layer_dims)
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = normals(derive_seed(seed, "init-w", i), fan_out * fan_in)
        weights.append(np.sqrt(2.0 / fan_in) * w.reshape(fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    return Mlp(dims, weights, biases, hidden_activation, leaky_slope, output_activation)


def _apply_hidden(net: Mlp, z: np.ndarray) -> np.ndarray:
    if net.hidden_activation == "relu":
        return np.maximum(z, 0.0)
    return np.where(z > 0.0, z, net.leaky_slope * z)


def forward(net: Mlp, batch: np.ndarray) -> np.ndarray:
    """Row-batch forward pass; bit-identical to the tape-traced forward."""
    h = np.asarray(batch, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != net.layer_dims[0]:
        raise DimensionError(
            f"batch shape {h.shape} does not match input dim {net.layer_dims[0]}"
        )
    ensure_finite(h, "input batch")
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = np.matmul(h, w.T) + b
        if i < last:
            h = _apply_hidden(net, h)
        elif net.output_activation == "tanh":
            h = np.tanh(h)
    return h


@dataclass
class MlpGraph:
    """A traced forward pass: tape plus the node ids that matter."""

    tape: Tape
    input_id: int
    output_id: int
    param_ids: list[tuple[int, int]] = field(default_factory=list)


def trace_forward(
    net: Mlp,
    batch: np.ndarray | int,
    tape: Tape | None = None,
    param_ids: list[tuple[int, int]] | None = None,
) -> MlpGraph:
    """Record a forward pass on a tape.

    ``batch`` may be an array (a new input leaf is created) or an existing
    node id on ``tape``.  ``param_ids`` reuses parameter leaves from an
    earlier trace of the same net on the same tape.
    """
    if tape is None:
        tape = Tape()
    if isinstance(batch, (int, np.integer)):
        x = int(batch)
    else:
        arr = np.asarray(batch, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != net.layer_dims[0]:
            raise DimensionError(
                f"batch shape {arr.shape} does not match input dim {net.layer_dims[0]}"
            )
        x = tape.leaf(arr)
    if param_ids is None:
        param_ids = [
            (tape.leaf(w), tape.leaf(b)) for w, b in zip(net.weights, net.biases)
        ]
    h = x
    last = net.n_layers - 1
    for i, (w_id, b_id) in enumerate(param_ids):
        h = tape.add_bias(tape.matmul(h, w_id, False, True), b_id)
        if i < last:
            if net.hidden_activation == "relu":
                h = tape.relu(h)
            else:
                h = tape.leaky_relu(h, net.leaky_slope)
        elif net.output_activation == "tanh":
            h = tape.tanh(h)
    return MlpGraph(tape, x, h, param_ids)


def _collect_param_grads(
    graph: MlpGraph, adj: dict[int, int]
) -> list[tuple[np.ndarray, np.ndarray]]:
    tape = graph.tape
    grads = []
    for w_id, b_id in graph.param_ids:
        gw = adj.get(w_id)
        gb = adj.get(b_id)
        grads.append(
            (
                np.asarray(tape.value(gw)) if gw is not None
                else np.zeros_like(tape.value(w_id)),
                np.asarray(tape.value(gb)) if gb is not None
                else np.zeros_like(tape.value(b_id)),
            )
        )
    return grads


def param_grads(
    graph: MlpGraph, loss: int | None = None
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradient of a scalar loss node w.r.t. every traced parameter."""
    loss_id = graph.output_id if loss is None else loss
    if np.shape(graph.tape.value(loss_id)) != ():
        raise ContractError("loss node must be scalar")
    wrt = [i for pair in graph.param_ids for i in pair]
    adj = backward(graph.tape, loss_id, wrt)
    return _collect_param_grads(graph, adj)


def input_grad(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Gradient of a scalar-output net w.r.t. its input point(s)."""
    if net.layer_dims[-1] != 1:
        raise ContractError("input_grad requires a scalar-output net")
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    graph = trace_forward(net, arr)
    s = graph.tape.reduce_sum(graph.output_id, None)
    adj = backward(graph.tape, s, [graph.input_id])
    gid = adj.get(graph.input_id)
    g = (
        np.asarray(graph.tape.value(gid))
        if gid is not None
        else np.zeros_like(arr)
    )
    return g[0] if squeeze else g


def emit_gradient_penalty(
    tape: Tape, net: Mlp, x_id: int, param_ids: list[tuple[int, int]]
) -> int:
    """Emit mean((||grad_x D(x)|| - 1)^2) over the rows of node ``x_id``.

    Rows whose input gradient is exactly zero contribute the constant
    penalty 1 with zero parameter gradient (the documented convention for
    the non-differentiable norm at 0).
    """
    if net.layer_dims[-1] != 1:
        raise ContractError("gradient penalty requires a scalar-output net")
    graph = trace_forward(net, x_id, tape, param_ids)
    s = tape.reduce_sum(graph.output_id, None)
    adj = backward(tape, s, [x_id])
    n = tape.value(x_id).shape[0]
    gid = adj.get(x_id)
    if gid is None:
        return tape.affine(tape.leaf(np.float64(0.0)), 0.0, 1.0)
    sq = tape.mul(gid, gid)
    row = tape.reduce_sum(sq, axis=1)
    rv = tape.value(row)
    zero = rv == 0.0
    n_zero = int(zero.sum())
    if n_zero:
        keep = tape.leaf(np.where(zero, 0.0, 1.0))
        shift = tape.leaf(np.where(zero, 1.0, 0.0))
        row = tape.add(tape.mul(row, keep), shift)
    norm = tape.sqrt(row)
    dev = tape.affine(norm, 1.0, -1.0)
    tot = tape.reduce_sum(tape.mul(dev, dev), None)
    return tape.affine(tot, 1.0 / n, n_zero / n)


def grad_penalty_grads(
    disc: Mlp, x_hat: np.ndarray
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Gradient penalty at interpolates and its exact parameter gradients."""
    arr = np.asarray(x_hat, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    tape = Tape()
    x_id = tape.leaf(arr)
    param_ids = [(tape.leaf(w), tape.leaf(b)) for w, b in zip(disc.weights, disc.biases)]
    pen = emit_gradient_penalty(tape, disc, x_id, param_ids)
    graph = MlpGraph(tape, x_id, pen, param_ids)
    grads = param_grads(graph, pen)
    return float(tape.value(pen)), grads


# ---------------------------------------------------------------------------
# Checkpoints


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(
    net: Mlp, path: str, seed: int | None = None, meta: dict | None = None
) -> None:
    """JSON checkpoint; float round-trip is bit-exact (shortest repr)."""
    obj = {
        "layer_dims": list(net.layer_dims),
        "activations": {
            "hidden": net.hidden_activation,
            "leaky_slope": net.leaky_slope,
            "output": net.output_activation,
        },
        "weights": [w.reshape(-1).tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "seed": seed,
        "meta": meta or {},
    }
    _atomic_write(path, json.dumps(obj, indent=1))


def load_checkpoint(path: str) -> tuple[Mlp, dict]:
    with open(path) as fh:
        obj = json.load(fh)
    dims = [int(d) for d in obj["layer_dims"]]
    acts = obj["activations"]
    weights = [
        np.asarray(flat, dtype=np.float64).reshape(dims[i + 1], dims[i])
        for i, flat in enumerate(obj["weights"])
    ]
    biases = [np.asarray(b, dtype=np.float64) for b in obj["biases"]]
    net = Mlp(
        dims,
        weights,
        biases,
        acts["hidden"],
        float(acts["leaky_slope"]),
        acts["output"],
    )
    return net, obj
