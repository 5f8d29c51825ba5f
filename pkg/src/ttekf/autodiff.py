"""A small reverse-mode differentiation tape over numpy arrays.

Every operation on a :class:`Var` evaluates eagerly and appends a node to
its :class:`Tape`. :meth:`Tape.gradient` walks the nodes in reverse creation
order, so gradients accumulate in a fixed order and repeat bit for bit.

Operands may mix ``Var`` and plain arrays; plain arrays are constants.
Broadcasting follows numpy, and gradients are summed back to each operand's
shape. Only the primitives below are differentiable::

    add sub mul div neg pow   matmul matvec outer   sum   getitem concat stack
    sqrt exp log softplus relu   where   cholesky solve   assemble swap
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class Tape:
    def __init__(self):
        self._nodes: list[Var] = []

    def __len__(self):
        return len(self._nodes)

    def var(self, value) -> "Var":
        """Register a differentiable input."""
        return Var(self, np.array(value, dtype=float), ())

    def gradient(self, output: "Var", wrt: Sequence["Var"]) -> list[Array]:
        if output.value.size != 1:
            raise ValueError("gradient needs a scalar output")
        wanted = {v._index for v in wrt}
        grads: dict[int, Array] = {output._index: np.ones_like(output.value)}
        found: dict[int, Array] = {}
        for node in reversed(self._nodes[: output._index + 1]):
            g = grads.pop(node._index, None)
            if g is None:
                continue
            if node._index in wanted:
                found[node._index] = g
            for parent, vjp in node._parents:
                contrib = vjp(g)
                i = parent._index
                if i in grads:
                    grads[i] = grads[i] + contrib
                else:
                    grads[i] = contrib
        return [
            np.array(found[v._index], dtype=float).reshape(v.value.shape)
            if v._index in found else np.zeros_like(v.value)
            for v in wrt
        ]


class Var:
    __slots__ = ("value", "_tape", "_index", "_parents")
    # make ndarray <op> Var defer to Var's reflected operators
    __array_ufunc__ = None

    def __init__(self, tape: Tape, value: Array, parents):
        self.value = value
        self._tape = tape
        self._parents = parents
        self._index = len(tape._nodes)
        tape._nodes.append(self)

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self._index})"

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)
    def __pow__(self, p): return power(self, p)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __getitem__(self, key): return getitem(self, key)

    @property
    def mT(self):
        return swap(self)


def value(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x._tape
    return None


def _node(result, inputs, vjps: Sequence[Callable]):
    """Wrap ``result`` in a Var whose parents are the Var entries of inputs."""
    tape = _tape_of(*inputs)
    if tape is None:
        return result
    parents = tuple((x, f) for x, f in zip(inputs, vjps) if isinstance(x, Var))
    return Var(tape, np.asarray(result, dtype=float), parents)


def unbroadcast(g: Array, shape: tuple) -> Array:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _shape(x):
    return np.shape(value(x))


# elementwise arithmetic ----------------------------------------------------

def add(a, b):
    sa, sb = _shape(a), _shape(b)
    return _node(value(a) + value(b), (a, b),
                 (lambda g: unbroadcast(g, sa), lambda g: unbroadcast(g, sb)))


def sub(a, b):
    sa, sb = _shape(a), _shape(b)
    return _node(value(a) - value(b), (a, b),
                 (lambda g: unbroadcast(g, sa), lambda g: unbroadcast(-g, sb)))


def mul(a, b):
    va, vb = value(a), value(b)
    sa, sb = np.shape(va), np.shape(vb)
    return _node(va * vb, (a, b),
                 (lambda g: unbroadcast(g * vb, sa), lambda g: unbroadcast(g * va, sb)))


def div(a, b):
    va, vb = value(a), value(b)
    sa, sb = np.shape(va), np.shape(vb)
    out = va / vb
    return _node(out, (a, b),
                 (lambda g: unbroadcast(g / vb, sa),
                  lambda g: unbroadcast(-g * out / vb, sb)))


def neg(a):
    return _node(-value(a), (a,), (lambda g: -g,))


def power(a, p: float):
    va = value(a)
    return _node(va ** p, (a,), (lambda g: g * p * va ** (p - 1),))


def sqrt(a):
    out = np.sqrt(value(a))
    return _node(out, (a,), (lambda g: g * 0.5 / out,))


def exp(a):
    out = np.exp(value(a))
    return _node(out, (a,), (lambda g: g * out,))


def log(a):
    va = value(a)
    return _node(np.log(va), (a,), (lambda g: g / va,))


def softplus(a):
    """``log(1 + exp(a))``."""
    va = value(a)
    # sigmoid without overflow
    sig = np.exp(-np.logaddexp(0.0, -va))
    return _node(np.logaddexp(0.0, va), (a,), (lambda g: g * sig,))


def relu(a):
    va = value(a)
    mask = va > 0.0
    return _node(np.where(mask, va, 0.0), (a,), (lambda g: g * mask,))


def where(cond, a, b):
    """Select elementwise; ``cond`` is a constant boolean array."""
    cond = np.asarray(cond, dtype=bool)
    sa, sb = _shape(a), _shape(b)
    return _node(np.where(cond, value(a), value(b)), (a, b),
                 (lambda g: unbroadcast(np.where(cond, g, 0.0), sa),
                  lambda g: unbroadcast(np.where(cond, 0.0, g), sb)))


# reductions and reshaping --------------------------------------------------

def sum(a, axis=None, keepdims=False):
    va = value(a)
    shape = va.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape)

    return _node(np.sum(va, axis=axis, keepdims=keepdims), (a,), (vjp,))


def reshape(a, shape):
    va = value(a)
    old = va.shape
    return _node(va.reshape(shape), (a,), (lambda g: np.reshape(g, old),))


def _has_advanced(key):
    key = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in key)


def getitem(a, key):
    va = value(a)
    advanced = _has_advanced(key)

    def vjp(g):
        out = np.zeros_like(va)
        if advanced:
            np.add.at(out, key, g)
        else:
            out[key] += g
        return out

    return _node(va[key], (a,), (vjp,))


def swap(a):
    """Swap the two trailing axes."""
    return _node(np.swapaxes(value(a), -1, -2), (a,), (lambda g: np.swapaxes(g, -1, -2),))


def concat(xs, axis=-1):
    vals = [np.asarray(value(x), dtype=float) for x in xs]
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    vjps = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        def vjp(g, lo=lo, hi=hi):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]
        vjps.append(vjp)
    return _node(np.concatenate(vals, axis=axis), tuple(xs), vjps)


def stack(xs, axis=-1):
    vals = [np.asarray(value(x), dtype=float) for x in xs]
    vjps = [lambda g, i=i: np.take(g, i, axis=axis) for i in range(len(xs))]
    return _node(np.stack(vals, axis=axis), tuple(xs), vjps)


def assemble(base: Array, items):
    """Write blocks into a copy of the constant ``base``.

    ``items`` is a sequence of ``(key, x)``; keys must address disjoint
    regions, and each block's gradient is the matching slice of the output
    gradient.
    """
    out = np.array(base, dtype=float, copy=True)
    inputs, vjps = [], []
    for key, x in items:
        out[key] = value(x)
        shape = _shape(x)
        inputs.append(x)
        vjps.append(lambda g, key=key, shape=shape: unbroadcast(g[key], shape))
    return _node(out, tuple(inputs), vjps)


# linear algebra -------------------------------------------------------------

def matmul(a, b):
    va, vb = value(a), value(b)
    sa, sb = va.shape, vb.shape
    return _node(va @ vb, (a, b),
                 (lambda g: unbroadcast(g @ np.swapaxes(vb, -1, -2), sa),
                  lambda g: unbroadcast(np.swapaxes(va, -1, -2) @ g, sb)))


def matvec(A, x):
    """Batched ``A @ x`` for matrices ``(..., n, m)`` and vectors ``(..., m)``."""
    vA, vx = value(A), value(x)
    sA, sx = vA.shape, vx.shape
    out = (vA @ vx[..., None])[..., 0]
    return _node(out, (A, x),
                 (lambda g: unbroadcast(g[..., :, None] * vx[..., None, :], sA),
                  lambda g: unbroadcast((np.swapaxes(vA, -1, -2) @ g[..., None])[..., 0], sx)))


def outer(a, b):
    """Batched outer product ``a[..., :, None] * b[..., None, :]``."""
    va, vb = value(a), value(b)
    sa, sb = va.shape, vb.shape
    return _node(va[..., :, None] * vb[..., None, :], (a, b),
                 (lambda g: unbroadcast((g @ vb[..., None])[..., 0], sa),
                  lambda g: unbroadcast((np.swapaxes(g, -1, -2) @ va[..., None])[..., 0], sb)))


def _phi(x):
    """Lower triangle with the diagonal halved."""
    out = np.tril(x)
    i = np.arange(x.shape[-1])
    out[..., i, i] *= 0.5
    return out


def cholesky(A):
    """Lower Cholesky factor of symmetric positive definite matrices.

    The gradient is returned symmetrized, i.e. it is exact for perturbations
    that keep ``A`` symmetric.
    """
    L = np.linalg.cholesky(value(A))

    def vjp(g):
        g = np.tril(g)
        P = _phi(np.swapaxes(L, -1, -2) @ g)
        # L^-T P L^-1
        X = np.linalg.solve(np.swapaxes(L, -1, -2), P)
        X = np.swapaxes(np.linalg.solve(np.swapaxes(L, -1, -2), np.swapaxes(X, -1, -2)), -1, -2)
        return 0.5 * (X + np.swapaxes(X, -1, -2))

    return _node(L, (A,), (vjp,))


def solve(A, B):
    """``A^-1 B`` for square ``A (..., n, n)`` and ``B (..., n, k)``."""
    vA, vB = value(A), value(B)
    X = np.linalg.solve(vA, vB)
    sA, sB = vA.shape, vB.shape

    def grad_B(g):
        return unbroadcast(np.linalg.solve(np.swapaxes(vA, -1, -2), g), sB)

    def grad_A(g):
        gB = np.linalg.solve(np.swapaxes(vA, -1, -2), g)
        return unbroadcast(-gB @ np.swapaxes(X, -1, -2), sA)

    return _node(X, (A, B), (grad_A, grad_B))
