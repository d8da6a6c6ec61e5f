"""Reverse-mode autodiff over an append-only tape of vectorized primitives.

Nodes hold numpy arrays; the node list is a Wengert list (every parent index
precedes its consumer), so the backward pass is a single reverse sweep that
visits each node exactly once.  This is deliberately small: matmul, elementwise
arithmetic, tanh/exp/log, reductions and custom primitives are enough to train
two-layer drift networks, diagonal affine flows and diagonal Gaussians.
"""

from __future__ import annotations

import numpy as np

from ..errors import UsageError


def _unbroadcast(grad, shape):
    """Sum `grad` back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class _Node:
    __slots__ = ("op", "parents", "vjp", "value")

    def __init__(self, op, parents, vjp, value):
        self.op = op
        self.parents = parents
        self.vjp = vjp
        self.value = value


class Var:
    """Handle to one tape node; supports the arithmetic the samplers need."""

    __slots__ = ("tape", "index")
    __array_ufunc__ = None  # make ndarray <op> Var defer to our reflected ops

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape.nodes[self.index].value

    @property
    def shape(self):
        return np.shape(self.value)

    # -- elementwise arithmetic -------------------------------------------
    def __add__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return self.tape._record(
                a + b,
                (self.index, other.index),
                lambda g: (_unbroadcast(g, np.shape(a)), _unbroadcast(g, np.shape(b))),
                "add",
            )
        c = np.asarray(other, dtype=float)
        a = self.value
        return self.tape._record(
            a + c, (self.index,), lambda g: (_unbroadcast(g, np.shape(a)),), "add_const"
        )

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, Var) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return self.tape._record(
                a * b,
                (self.index, other.index),
                lambda g: (_unbroadcast(g * b, np.shape(a)), _unbroadcast(g * a, np.shape(b))),
                "mul",
            )
        c = np.asarray(other, dtype=float)
        a = self.value
        return self.tape._record(
            a * c, (self.index,), lambda g: (_unbroadcast(g * c, np.shape(a)),), "mul_const"
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self * other ** -1.0
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self ** -1.0 * other

    def __pow__(self, exponent):
        a = self.value
        p = float(exponent)
        return self.tape._record(
            a**p, (self.index,), lambda g: (g * p * a ** (p - 1),), "pow"
        )

    # -- linear algebra ----------------------------------------------------
    def __matmul__(self, other):
        if not isinstance(other, Var):
            c = np.asarray(other, dtype=float)
            a = self.value
            return self.tape._record(a @ c, (self.index,), lambda g: (g @ c.T,), "matmul_const")
        a, b = self.value, other.value
        return self.tape._record(
            a @ b, (self.index, other.index), lambda g: (g @ b.T, a.T @ g), "matmul"
        )

    def __rmatmul__(self, other):
        c = np.asarray(other, dtype=float)
        b = self.value
        return self.tape._record(c @ b, (self.index,), lambda g: (c.T @ g,), "rmatmul_const")

    # -- nonlinearities ------------------------------------------------------
    def tanh(self):
        out = np.tanh(self.value)
        return self.tape._record(out, (self.index,), lambda g: (g * (1 - out**2),), "tanh")

    def exp(self):
        out = np.exp(self.value)
        return self.tape._record(out, (self.index,), lambda g: (g * out,), "exp")

    def log(self):
        a = self.value
        return self.tape._record(np.log(a), (self.index,), lambda g: (g / a,), "log")

    def sqrt(self):
        out = np.sqrt(self.value)
        return self.tape._record(out, (self.index,), lambda g: (g / (2 * out),), "sqrt")

    # -- reductions and shaping ---------------------------------------------
    def sum(self, axis=None):
        a = self.value
        out = np.sum(a, axis=axis)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, np.shape(a)).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), np.shape(a)).copy(),)

        return self.tape._record(out, (self.index,), vjp, "sum")

    def mean(self, axis=None):
        a = self.value
        n = a.size if axis is None else a.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def logsumexp(self, axis=None):
        a = self.value
        m = np.max(a, axis=axis, keepdims=True)
        shifted = np.exp(a - m)
        s = np.sum(shifted, axis=axis, keepdims=True)
        softmax = shifted / s
        out_keep = np.log(s) + m
        if axis is None:
            out = out_keep.reshape(())
            vjp = lambda g: (g * softmax,)
        else:
            out = np.squeeze(out_keep, axis=axis)
            vjp = lambda g: (np.expand_dims(g, axis) * softmax,)
        return self.tape._record(out, (self.index,), vjp, "logsumexp")

    def cumsum(self):
        a = self.value
        return self.tape._record(
            np.cumsum(a), (self.index,), lambda g: (np.cumsum(g[::-1])[::-1],), "cumsum"
        )

    def __getitem__(self, key):
        a = self.value

        def vjp(g):
            out = np.zeros_like(a)
            out[key] = g
            return (out,)

        return self.tape._record(a[key], (self.index,), vjp, "getitem")


def concat(vars_, axis=0):
    """Concatenate tape variables along an axis."""
    tape = vars_[0].tape
    values = [v.value for v in vars_]
    sizes = [np.shape(v)[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return tape._record(
        np.concatenate(values, axis=axis), tuple(v.index for v in vars_), vjp, "concat"
    )


class Tape:
    """Append-only record of one computation; build, then backward once."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def _record(self, value, parents, vjp, op) -> Var:
        idx = len(self.nodes)
        if any(p >= idx for p in parents):
            raise AssertionError("tape nodes must reference earlier indices only")
        self.nodes.append(_Node(op, parents, vjp, np.asarray(value, dtype=float)))
        return Var(self, idx)

    def leaf(self, value) -> Var:
        return self._record(value, (), None, "leaf")

    def custom(self, value, parents, vjp, op="custom") -> Var:
        """Register a primitive with a caller-supplied vector-Jacobian product."""
        return self._record(value, tuple(p.index for p in parents), vjp, op)

    def backward(self, output: Var):
        """Adjoints of a scalar output w.r.t. every node; one visit per node."""
        out_node = self.nodes[output.index]
        if np.ndim(out_node.value) != 0:
            raise UsageError("backward output must be scalar")
        adjoints = [None] * len(self.nodes)
        adjoints[output.index] = np.ones(())
        for i in range(output.index, -1, -1):
            g = adjoints[i]
            if g is None:
                continue
            node = self.nodes[i]
            if not node.parents:
                continue
            parent_grads = node.vjp(g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None:
                    continue
                if adjoints[p] is None:
                    adjoints[p] = np.array(pg, dtype=float)
                else:
                    adjoints[p] = adjoints[p] + pg
        return adjoints

    def grad(self, output: Var, leaves) -> list[np.ndarray]:
        adjoints = self.backward(output)
        return [
            adjoints[v.index]
            if adjoints[v.index] is not None
            else np.zeros_like(np.asarray(v.value, dtype=float))
            for v in leaves
        ]


def tape_backward(tape: Tape, output: Var, leaves) -> list[np.ndarray]:
    """Gradient of a recorded scalar w.r.t. the given leaf parameters."""
    return tape.grad(output, leaves)
