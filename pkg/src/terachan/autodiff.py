"""Reverse-mode automatic differentiation on float64 numpy arrays.

The engine is a tape: every differentiable operation appends a node to the
active :class:`Graph`. Backward passes walk the tape in reverse. The trick
that makes the gradient-penalty term trainable is that every vjp is itself
expressed through the same primitive operations, so a backward pass executed
with ``create_graph=True`` extends the tape and can be differentiated again
(double backprop along the input-gradient path).

Only the second-order path needed by the penalty is supported; this is not a
general n-th-order engine.
"""

from __future__ import annotations

import numpy as np

LEAKY_SLOPE = 0.2        # conventional GAN slope, used when none is given
LAYER_NORM_EPS = 1e-5    # added to the row variance
NORM_EPS = 1e-24         # added under the sqrt of norm_l2; keeps d/dx finite at 0


class ShapeError(ValueError):
    """Operands do not conform to an op's arity/shape rules."""


class GradError(RuntimeError):
    """Backward called in a way that violates its contract."""


_STACK: list["Graph | None"] = []


def _active() -> "Graph | None":
    return _STACK[-1] if _STACK else None


class _recording:
    """Temporarily set (or suspend, with None) the active tape."""

    def __init__(self, graph):
        self.graph = graph

    def __enter__(self):
        _STACK.append(self.graph)
        return self.graph

    def __exit__(self, *exc):
        _STACK.pop()
        return False


def no_grad():
    """Context manager that suspends recording entirely."""
    return _recording(None)


class Tensor:
    """A float64 n-d array, optionally tracked on the active graph.

    ``grad`` is populated by :meth:`Graph.backward` as a plain ndarray and
    accumulates across backward calls until :meth:`zero_grad`.
    """

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: "Node | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # operator sugar -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_const(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_const(self, -float(other))

    def __rsub__(self, other):
        return add_const(neg(self), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return div(self, other)
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Node:
    __slots__ = ("op", "inputs", "out", "vjp", "index", "graph")

    def __init__(self, op, inputs, out, vjp, index, graph):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.vjp = vjp
        self.index = index
        self.graph = graph


class Graph:
    """Topologically ordered tape of recorded operations.

    Creation order is a topological order by construction, so the reverse
    sweep visits each node exactly once and never revisits.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _STACK.append(self)
        return self

    def __exit__(self, *exc):
        _STACK.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def _append(self, op, inputs, out, vjp) -> None:
        node = Node(op, inputs, out, vjp, len(self.nodes), self)
        out.node = node
        self.nodes.append(node)

    # backward machinery ---------------------------------------------------

    def backward(self, output: Tensor, wrt=None, create_graph: bool = False):
        """Propagate d(output)/d(...) through the tape.

        With ``wrt=None`` the cotangents of every requires_grad leaf are
        accumulated into ``leaf.grad`` (plain ndarrays). With ``wrt`` a list
        of tensors, returns their cotangents as live Tensors instead; combined
        with ``create_graph=True`` those cotangents stay differentiable.
        """
        if output.data.size != 1:
            raise GradError(f"backward target must be scalar, got shape {output.shape}")
        if output.node is not None and output.node.graph is not self:
            raise GradError("backward target was recorded on a different graph")

        needed = None
        if wrt is not None:
            needed = {id(t) for t in wrt}
            for node in self.nodes:
                if any(id(t) in needed for t in node.inputs):
                    needed.add(id(node.out))

        cots: dict[int, Tensor] = {id(output): Tensor(np.ones_like(output.data))}

        if output.node is not None:
            start = output.node.index
            with _recording(self if create_graph else None):
                for i in range(start, -1, -1):
                    node = self.nodes[i]
                    cot = cots.pop(id(node.out), None)
                    if cot is None:
                        continue
                    mask = tuple(
                        (t.requires_grad or t.node is not None)
                        and (needed is None or id(t) in needed)
                        for t in node.inputs
                    )
                    if not any(mask):
                        continue
                    grads = node.vjp(cot, mask)
                    for t, use, g in zip(node.inputs, mask, grads):
                        if not use or g is None:
                            continue
                        prev = cots.get(id(t))
                        cots[id(t)] = g if prev is None else add(prev, g)

        if wrt is not None:
            return [cots.get(id(t)) or Tensor(np.zeros_like(t.data)) for t in wrt]

        leaves: dict[int, Tensor] = {id(output): output}
        for node in self.nodes[: (output.node.index + 1) if output.node else 0]:
            for t in node.inputs:
                leaves.setdefault(id(t), t)
        for t in leaves.values():
            self._write_grad(t, cots)
        return None

    @staticmethod
    def _write_grad(t: Tensor, cots) -> None:
        if not (t.requires_grad and t.node is None):
            return
        cot = cots.get(id(t))
        if cot is None:
            return
        t.grad = cot.data.copy() if t.grad is None else t.grad + cot.data

    def input_gradient(self, output: Tensor, x: Tensor) -> Tensor:
        """Gradient of a scalar output w.r.t. ``x`` as a live graph tensor.

        The returned tensor participates in further recorded computation, so
        terms built from it (the Lipschitz penalty) expose parameter
        gradients through a second backward call.
        """
        (gx,) = self.backward(output, wrt=[x], create_graph=True)
        return gx

    def release(self) -> None:
        """Break tensor<->node reference cycles so buffers free immediately.

        Call once the graph is no longer needed; the cyclic structure
        otherwise waits for the generational collector, which both delays
        large frees and makes collections expensive.
        """
        for node in self.nodes:
            node.out.node = None
            node.inputs = ()
            node.vjp = None
            node.out = None
        self.nodes.clear()


def _result(op: str, value: np.ndarray, inputs: tuple, vjp) -> Tensor:
    graph = _active()
    track = graph is not None and any(t.requires_grad or t.node is not None for t in inputs)
    out = Tensor(value, requires_grad=track)
    if track:
        graph._append(op, inputs, out, vjp)
    return out


def _sum_to(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reverse numpy broadcasting: reduce ``t`` down to ``shape`` by summing."""
    if t.shape == shape:
        return t
    extra = t.ndim - len(shape)
    if extra:
        t = tsum(t, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and t.shape[i] != 1)
    if axes:
        t = tsum(t, axis=axes, keepdims=True)
    if t.shape != shape:
        raise ShapeError(f"cannot reduce shape {t.shape} to {shape}")
    return t


# primitive ops -----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        value = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def vjp(cot, mask):
        return (
            _sum_to(cot, a.shape) if mask[0] else None,
            _sum_to(cot, b.shape) if mask[1] else None,
        )

    return _result("add", value, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        value = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None

    def vjp(cot, mask):
        return (
            _sum_to(cot, a.shape) if mask[0] else None,
            _sum_to(neg(cot), b.shape) if mask[1] else None,
        )

    return _result("sub", value, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        value = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def vjp(cot, mask):
        return (
            _sum_to(mul(cot, b), a.shape) if mask[0] else None,
            _sum_to(mul(cot, a), b.shape) if mask[1] else None,
        )

    return _result("mul", value, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    try:
        value = a.data / b.data
    except ValueError:
        raise ShapeError(f"div: shapes {a.shape} and {b.shape} do not broadcast") from None

    def vjp(cot, mask):
        ga = _sum_to(div(cot, b), a.shape) if mask[0] else None
        gb = _sum_to(neg(div(mul(cot, a), mul(b, b))), b.shape) if mask[1] else None
        return ga, gb

    return _result("div", value, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    def vjp(cot, mask):
        return (neg(cot),)

    return _result("neg", -a.data, (a,), vjp)


def add_const(a: Tensor, c: float) -> Tensor:
    def vjp(cot, mask):
        return (cot,)

    return _result("add_const", a.data + c, (a,), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    def vjp(cot, mask):
        return (scale(cot, c),)

    return _result("scale", a.data * c, (a,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ashape, bshape = a.shape, b.shape
    if a.ndim < 2 or b.ndim < 2 or ashape[-1] != bshape[-2]:
        raise ShapeError(f"matmul: shapes {ashape} and {bshape} do not conform")

    if a.ndim == 2 and b.ndim == 2:
        value = a.data @ b.data

        def vjp(cot, mask):
            ga = matmul(cot, transpose(b)) if mask[0] else None
            gb = matmul(transpose(a), cot) if mask[1] else None
            return ga, gb

    elif a.ndim == 3 and b.ndim == 2:
        n, r, k = ashape
        value = (a.data.reshape(n * r, k) @ b.data).reshape(n, r, bshape[1])

        def vjp(cot, mask):
            ga = matmul(cot, transpose(b)) if mask[0] else None
            gb = (
                matmul(transpose(reshape(a, (n * r, k))), reshape(cot, (n * r, bshape[1])))
                if mask[1]
                else None
            )
            return ga, gb

    elif a.ndim == 3 and b.ndim == 3:
        if ashape[0] != bshape[0]:
            raise ShapeError(f"matmul: batch extents differ, {ashape} vs {bshape}")
        value = np.matmul(a.data, b.data)

        def vjp(cot, mask):
            ga = matmul(cot, transpose(b)) if mask[0] else None
            gb = matmul(transpose(a), cot) if mask[1] else None
            return ga, gb

    else:
        raise ShapeError(f"matmul: unsupported ranks {ashape} @ {bshape}")

    return _result("matmul", value, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise ShapeError(f"transpose: needs rank >= 2, got {a.shape}")

    def vjp(cot, mask):
        return (transpose(cot),)

    return _result("transpose", np.swapaxes(a.data, -1, -2), (a,), vjp)


def permute(a: Tensor, axes) -> Tensor:
    """General axis permutation (view)."""
    axes = tuple(int(ax) for ax in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"permute: axes {axes} invalid for shape {a.shape}")
    inverse = tuple(int(ax) for ax in np.argsort(axes))

    def vjp(cot, mask):
        return (permute(cot, inverse),)

    return _result("permute", np.transpose(a.data, axes), (a,), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)

    def vjp(cot, mask):
        return (reshape(cot, a.shape),)

    try:
        value = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: {a.shape} to {shape}") from None
    return _result("reshape", value, (a,), vjp)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    try:
        value = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: shapes {[t.shape for t in tensors]} do not align on axis {axis}"
        ) from None
    extents = [t.shape[axis] for t in tensors]

    def vjp(cot, mask):
        grads = []
        start = 0
        for t, n, use in zip(tensors, extents, mask):
            grads.append(narrow(cot, axis, start, n) if use else None)
            start += n
        return tuple(grads)

    return _result("concat", value, tensors, vjp)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(cot, mask):
        return (pad_slice(cot, axis, start, a.shape[axis]),)

    return _result("narrow", a.data[idx], (a,), vjp)


def pad_slice(a: Tensor, axis: int, start: int, extent: int) -> Tensor:
    """Embed ``a`` into a zero tensor whose ``axis`` has ``extent`` entries."""
    shape = list(a.shape)
    length = shape[axis]
    shape[axis] = extent
    value = np.zeros(shape)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    value[tuple(idx)] = a.data

    def vjp(cot, mask):
        return (narrow(cot, axis, start, length),)

    return _result("pad_slice", value, (a,), vjp)


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)

    def vjp(cot, mask):
        return (_sum_to(cot, a.shape),)

    try:
        # read-only view; every op treats inputs as immutable
        value = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast_to: {a.shape} to {shape}") from None
    return _result("broadcast_to", value, (a,), vjp)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    value = a.data.sum(axis=axis, keepdims=keepdims)
    axes = tuple(range(a.ndim)) if axis is None else (
        (axis,) if isinstance(axis, int) else tuple(axis)
    )
    axes = tuple(ax % a.ndim for ax in axes)

    def vjp(cot, mask):
        g = cot
        if not keepdims:
            kept = list(g.shape)
            for ax in sorted(axes):
                kept.insert(ax, 1)
            g = reshape(g, kept)
        return (broadcast_to(g, a.shape),)

    return _result("sum", value, (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    total = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in ((axis,) if isinstance(axis, int) else axis)]
    )
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(total))


def exp(a: Tensor) -> Tensor:
    value = np.exp(a.data)

    def vjp(cot, mask):
        return (mul(cot, out),)

    out = _result("exp", value, (a,), vjp)
    return out


def sqrt(a: Tensor) -> Tensor:
    value = np.sqrt(a.data)

    def vjp(cot, mask):
        return (scale(div(cot, out), 0.5),)

    out = _result("sqrt", value, (a,), vjp)
    return out


def square(a: Tensor) -> Tensor:
    def vjp(cot, mask):
        return (mul(cot, scale(a, 2.0)),)

    return _result("square", a.data * a.data, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    gate = Tensor((a.data > 0.0).astype(np.float64))

    def vjp(cot, mask):
        return (mul(cot, gate),)

    return _result("relu", np.maximum(a.data, 0.0), (a,), vjp)


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    gate = Tensor(np.where(a.data > 0.0, 1.0, slope))

    def vjp(cot, mask):
        return (mul(cot, gate),)

    return _result("leaky_relu", np.where(a.data > 0.0, a.data, slope * a.data), (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    value = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(cot, mask):
        return (mul(cot, mul(out, add_const(neg(out), 1.0))),)

    out = _result("sigmoid", value, (a,), vjp)
    return out


# composites ---------------------------------------------------------------


def softmax_rows(a: Tensor) -> Tensor:
    """Row softmax along the last axis; each output row sums to one.

    The row max is subtracted as a constant shift (softmax is shift
    invariant, so the gradient is unaffected).
    """
    shift = Tensor(a.data.max(axis=-1, keepdims=True))
    z = exp(sub(a, shift))
    return div(z, tsum(z, axis=-1, keepdims=True))


def layer_norm_rows(a: Tensor, gain: Tensor | None = None, bias: Tensor | None = None,
                    eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each row (last axis) to zero mean / unit variance, then affine."""
    mu = mean(a, axis=-1, keepdims=True)
    centered = sub(a, mu)
    var = mean(square(centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add_const(var, eps)))
    if gain is not None:
        normed = mul(normed, gain)
    if bias is not None:
        normed = add(normed, bias)
    return normed


def norm_l2(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Euclidean norm; a tiny epsilon under the sqrt keeps it differentiable at 0."""
    return sqrt(add_const(tsum(square(a), axis=axis, keepdims=keepdims), NORM_EPS))


# op registry: uniform dispatch for conformance/gradient sweeps -------------

OPS = {
    "matmul": matmul,
    "add": add,
    "concat": lambda *ts, axis=-1: concat(ts, axis=axis),
    "reshape": reshape,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "sigmoid": sigmoid,
    "softmax_rows": softmax_rows,
    "layer_norm_rows": layer_norm_rows,
    "scale": scale,
    "transpose": transpose,
    "sum": tsum,
    "mean": mean,
    "square": square,
    "sqrt": sqrt,
    "norm_l2": norm_l2,
}


def apply_op(kind: str, *inputs, **kwargs) -> Tensor:
    if kind not in OPS:
        raise KeyError(f"unknown op kind {kind!r}")
    return OPS[kind](*inputs, **kwargs)
