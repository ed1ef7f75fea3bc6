"""Dense float64 tensors with a reverse-mode gradient tape.

Design notes:
  * define-by-run: ops record onto the innermost active ``Tape`` (a plain
    ``with`` context), so unrolling a simulation for T steps under one tape
    is all it takes to get backpropagation through time;
  * no broadcasting beyond scalar-with-tensor, so shape bugs fail loudly;
  * gradients accumulate additively into ``Tensor.grad``; callers zero them
    between optimizer steps;
  * everything is float64 and single-threaded per tape. Independent tapes
    on separate threads never share state (the active-tape stack is
    thread-local).
"""

from __future__ import annotations

import threading

import numpy as np

from . import kernels

__all__ = [
    "DimensionError",
    "Tensor",
    "Tape",
    "tensor",
    "param",
    "matmul",
    "conv2d",
    "add",
    "sub",
    "mul",
    "scale",
    "sum_all",
    "mean_over_axis",
    "reshape",
    "mse_loss",
    "cross_entropy_loss",
    "backward",
]


class DimensionError(ValueError):
    """Raised when operand shapes cannot be composed."""


_ACTIVE = threading.local()


def _tape_stack():
    stack = getattr(_ACTIVE, "stack", None)
    if stack is None:
        stack = []
        _ACTIVE.stack = stack
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense float64 array, optionally participating in a gradient tape.

    ``grad`` is lazily allocated on the first backward pass that reaches
    this tensor. ``node_id``/``tape`` identify the producing tape node for
    intermediates; leaves keep ``node_id is None``.
    """

    __slots__ = ("values", "grad", "requires_grad", "node_id", "tape")

    def __init__(self, values, requires_grad=False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node_id = None
        self.tape = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    @property
    def data(self):
        """Flat view of the underlying float64 storage."""
        return self.values.reshape(-1)

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def detach(self):
        """Same values, no tape participation (used to block gradients)."""
        return Tensor(self.values)

    def item(self):
        if self.values.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}{flag})"


def tensor(values):
    return Tensor(values)


def param(values):
    """Leaf tensor that collects gradients (a trainable parameter)."""
    return Tensor(values, requires_grad=True)


class _Node:
    __slots__ = ("out_id", "inputs", "backward_fn")

    def __init__(self, out_id, inputs, backward_fn):
        self.out_id = out_id
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations; inputs always precede their consumers."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self, "tape contexts must nest"
        return False

    def _record(self, out, inputs, backward_fn):
        out.node_id = len(self.nodes)
        out.tape = self
        self.nodes.append(_Node(out.node_id, inputs, backward_fn))


def _connected(t, tape):
    return t.requires_grad or (t.tape is tape and t.node_id is not None)


def record_op(out_values, inputs, backward_fn):
    """Wrap a forward result, recording the backward rule if a tape is live.

    ``backward_fn(g)`` must return one gradient array (or None) per input.
    This is the extension point custom ops (the neuron dynamics) build on.
    """
    out = Tensor(out_values)
    tape = active_tape()
    if tape is not None and any(_connected(t, tape) for t in inputs):
        tape._record(out, tuple(inputs), backward_fn)
    return out


def backward(tape, loss):
    """Reverse sweep: accumulate d(loss)/d(leaf) into each leaf's ``grad``.

    Visits each tape node exactly once, in reverse recording order.
    """
    if not isinstance(loss, Tensor) or loss.tape is not tape or loss.node_id is None:
        raise ValueError("backward: loss must be a tensor produced on this tape")
    if loss.values.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {tuple(loss.shape)}")
    grads = {loss.node_id: np.ones_like(loss.values)}
    for node in reversed(tape.nodes):
        g = grads.pop(node.out_id, None)
        if g is None:
            continue
        gins = node.backward_fn(g)
        for t, gin in zip(node.inputs, gins):
            if gin is None:
                continue
            if t.tape is tape and t.node_id is not None:
                prev = grads.get(t.node_id)
                grads[t.node_id] = gin if prev is None else prev + gin
            elif t.requires_grad:
                if t.grad is None:
                    t.grad = np.zeros_like(t.values)
                t.grad += gin


# ---------------------------------------------------------------------------
# ops


def matmul(a, b):
    """2-D matrix product; backward accumulates g@b^T and a^T@g."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions do not match: {tuple(a.shape)} x {tuple(b.shape)}"
        )
    av, bv = a.values, b.values

    def grad(g):
        return g @ bv.T, av.T @ g

    return record_op(av @ bv, (a, b), grad)


def conv2d(x, k, stride=1, padding=0):
    """2-D cross-correlation over NCHW (or single-sample CHW) input.

    Output spatial size is floor((h + 2*padding - kh)/stride) + 1.
    """
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: stride must be >=1 and padding >=0, got {stride}, {padding}")
    if k.ndim != 4:
        raise DimensionError(f"conv2d: kernels must be 4-D, got {tuple(k.shape)}")
    single = x.ndim == 3
    xv = x.values[None] if single else x.values
    if xv.ndim != 4 or xv.shape[1] != k.shape[1]:
        raise DimensionError(
            f"conv2d: input {tuple(x.shape)} does not compose with kernels {tuple(k.shape)}"
        )
    b, ci, h, w = xv.shape
    co, _, kh, kw = k.shape
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} larger than padded input "
            f"{h + 2 * padding}x{w + 2 * padding}"
        )
    xv = np.ascontiguousarray(xv)
    kv = np.ascontiguousarray(k.values)
    out = kernels.conv2d_forward(xv, kv, stride, padding)

    def grad(g):
        g = np.ascontiguousarray(g[None] if single else g)
        gx = kernels.conv2d_backward_input(g, kv, stride, padding, h, w)
        gk = kernels.conv2d_backward_kernels(g, xv, stride, padding, kh, kw)
        return (gx[0] if single else gx), gk

    return record_op(out[0] if single else out, (x, k), grad)


def _binary(a, b, fwd, grad_a, grad_b):
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise DimensionError(
                f"elementwise: shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}"
            )
        bv = b.values
        inputs = (a, b)

        def grad(g):
            return grad_a(g, a.values, bv), grad_b(g, a.values, bv)

    else:
        bv = float(b)
        inputs = (a,)

        def grad(g):
            return (grad_a(g, a.values, bv),)

    return record_op(fwd(a.values, bv), inputs, grad)


def add(a, b):
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def scale(a, c):
    """Multiply by a python constant (no gradient for the constant)."""
    c = float(c)
    return record_op(a.values * c, (a,), lambda g: (g * c,))


def sum_all(a):
    av = a.values
    return record_op(np.asarray(av.sum()), (a,), lambda g: (np.full_like(av, float(g)),))


def mean_over_axis(a, axis):
    if not 0 <= axis < a.ndim:
        raise DimensionError(f"mean_over_axis: axis {axis} out of range for shape {tuple(a.shape)}")
    n = a.shape[axis]

    def grad(g):
        return (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)

    return record_op(a.values.mean(axis=axis), (a,), grad)


def reshape(a, shape):
    old_shape = a.values.shape
    try:
        out = a.values.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: {exc}") from None
    return record_op(out, (a,), lambda g: (g.reshape(old_shape),))


def mse_loss(pred, target):
    """Mean of squared differences over all elements."""
    if pred.shape != target.shape:
        raise DimensionError(
            f"mse_loss: shapes differ: {tuple(pred.shape)} vs {tuple(target.shape)}"
        )
    diff = pred.values - target.values
    n = diff.size

    def grad(g):
        d = (2.0 * float(g) / n) * diff
        return d, -d

    return record_op(np.asarray(np.mean(diff * diff)), (pred, target), grad)


def cross_entropy_loss(logits, labels):
    """Mean over the batch of -log softmax(logits)[label], max-stabilized."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy_loss: logits must be 2-D, got {tuple(logits.shape)}")
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise DimensionError(f"cross_entropy_loss: expected {b} labels, got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"cross_entropy_loss: label out of range [0, {c})")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1, keepdims=True)
    log_probs = z - np.log(sez)
    loss = -log_probs[np.arange(b), labels].mean()

    def grad(g):
        p = ez / sez
        p[np.arange(b), labels] -= 1.0
        return ((float(g) / b) * p,)

    return record_op(np.asarray(loss), (logits,), grad)
