"""Minimal reverse-mode automatic differentiation.

Every node on a :class:`Tape` holds a float64 array whose elements are
independent real scalars; elementwise ops record their local partials and
structural ops (matmul, gather, moving sums, ...) record a vector-Jacobian
closure.  Complex numbers are carried as ``(re, im)`` pairs of real nodes,
see :class:`CPair`.

Domain violations (log of a non-positive number, division by zero, ...)
raise :class:`GraphError` at construction time instead of silently
producing NaNs.
"""
from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

#: Lower clamp for squared magnitudes used as gradient denominators.
ABS2_FLOOR = 1e-24


class GraphError(ValueError):
    """Raised when an operation is applied outside its domain."""


class _Node:
    __slots__ = ("value", "parents", "vjps")

    def __init__(self, value, parents, vjps):
        self.value = value
        self.parents = parents
        self.vjps = vjps


class Tape:
    """Append-only list of nodes; parents always precede their children."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.visits: list[int] = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, value, parents=(), vjps=()) -> "Var":
        value = np.asarray(value, dtype=np.float64)
        self.nodes.append(_Node(value, tuple(parents), tuple(vjps)))
        self.visits.append(0)
        return Var(self, len(self.nodes) - 1)

    def var(self, value) -> "Var":
        """Create a leaf node."""
        return self._push(np.array(value, dtype=np.float64, copy=True))

    def const(self, value) -> "Var":
        return self.var(value)

    def backward(self, root: "Var") -> list:
        return backward(self, root)


class Var:
    __slots__ = ("tape", "node_id")
    __array_ufunc__ = None

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.node_id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.node_id].value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(id={self.node_id}, value={self.value!r})"

    def __len__(self):
        return len(self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return pow_int(self, n)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


# --------------------------------------------------------------------------
# plumbing

def _tape_of(*args) -> Tape:
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise GraphError("operands live on different tapes")
    if tape is None:
        raise GraphError("at least one operand must be a Var")
    return tape


def _val(a):
    return a.value if isinstance(a, Var) else np.asarray(a, dtype=np.float64)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _elementwise(out, args, partials):
    """Record ``out`` with local partial arrays, one per argument."""
    tape = _tape_of(*args)
    parents, vjps = [], []
    for a, p in zip(args, partials):
        if isinstance(a, Var):
            shape = a.value.shape
            parents.append(a.node_id)
            vjps.append(lambda g, p=p, shape=shape: _unbroadcast(g * p, shape))
    return tape._push(out, parents, vjps)


def _structural(out, args, vjps):
    tape = _tape_of(*args)
    parents, fns = [], []
    for a, fn in zip(args, vjps):
        if isinstance(a, Var):
            parents.append(a.node_id)
            fns.append(fn)
    return tape._push(out, parents, fns)


# --------------------------------------------------------------------------
# elementwise primitives

def add(a, b):
    av, bv = _val(a), _val(b)
    one = np.ones(np.broadcast_shapes(av.shape, bv.shape))
    return _elementwise(av + bv, (a, b), (one, one))


def sub(a, b):
    av, bv = _val(a), _val(b)
    one = np.ones(np.broadcast_shapes(av.shape, bv.shape))
    return _elementwise(av - bv, (a, b), (one, -one))


def mul(a, b):
    av, bv = _val(a), _val(b)
    shape = np.broadcast_shapes(av.shape, bv.shape)
    return _elementwise(av * bv, (a, b),
                        (np.broadcast_to(bv, shape), np.broadcast_to(av, shape)))


def div(a, b):
    av, bv = _val(a), _val(b)
    if np.any(bv == 0):
        raise GraphError("division by zero")
    shape = np.broadcast_shapes(av.shape, bv.shape)
    inv = 1.0 / bv
    return _elementwise(av * inv, (a, b),
                        (np.broadcast_to(inv, shape),
                         np.broadcast_to(-av * inv * inv, shape)))


def neg(a):
    return _elementwise(-a.value, (a,), (-np.ones_like(a.value),))


def pow_int(a, n: int):
    if int(n) != n:
        raise GraphError("pow_int needs an integer exponent")
    n = int(n)
    av = a.value
    if n < 0 and np.any(av == 0):
        raise GraphError("negative power of zero")
    if n == 0:
        return _elementwise(np.ones_like(av), (a,), (np.zeros_like(av),))
    return _elementwise(av ** n, (a,), (n * av ** (n - 1),))


def sqrt(a):
    av = a.value
    if np.any(av <= 0):
        raise GraphError("sqrt argument must be positive")
    out = np.sqrt(av)
    return _elementwise(out, (a,), (0.5 / out,))


def exp(a):
    out = np.exp(a.value)
    return _elementwise(out, (a,), (out,))


def log(a):
    av = a.value
    if np.any(av <= 0):
        raise GraphError("log argument must be positive")
    return _elementwise(np.log(av), (a,), (1.0 / av,))


def sin(a):
    return _elementwise(np.sin(a.value), (a,), (np.cos(a.value),))


def cos(a):
    return _elementwise(np.cos(a.value), (a,), (-np.sin(a.value),))


def tanh(a):
    out = np.tanh(a.value)
    return _elementwise(out, (a,), (1.0 - out * out,))


def sigmoid(a):
    out = expit(a.value)
    return _elementwise(out, (a,), (out * (1.0 - out),))


def softplus(a):
    av = a.value
    return _elementwise(np.logaddexp(0.0, av), (a,), (expit(av),))


def relu(a):
    av = a.value
    return _elementwise(np.maximum(av, 0.0), (a,), ((av > 0).astype(np.float64),))


def maximum(a, b):
    """Elementwise max; ties route the gradient to ``a``."""
    av, bv = _val(a), _val(b)
    shape = np.broadcast_shapes(av.shape, bv.shape)
    pick_a = np.broadcast_to(av >= bv, shape).astype(np.float64)
    return _elementwise(np.maximum(av, bv), (a, b), (pick_a, 1.0 - pick_a))


def abs2(re, im):
    """``re**2 + im**2``."""
    rv, iv = _val(re), _val(im)
    shape = np.broadcast_shapes(rv.shape, iv.shape)
    return _elementwise(rv * rv + iv * iv, (re, im),
                        (np.broadcast_to(2 * rv, shape), np.broadcast_to(2 * iv, shape)))


def _atan2_partials(y, x):
    r2 = np.maximum(x * x + y * y, ABS2_FLOOR)
    return x / r2, -y / r2


def atan2(y, x):
    yv, xv = _val(y), _val(x)
    if np.any((yv == 0) & (xv == 0)):
        raise GraphError("atan2 undefined at the origin")
    shape = np.broadcast_shapes(yv.shape, xv.shape)
    dy, dx = _atan2_partials(np.broadcast_to(yv, shape), np.broadcast_to(xv, shape))
    return _elementwise(np.arctan2(yv, xv), (y, x), (dy, dx))


# --------------------------------------------------------------------------
# structural primitives

def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise GraphError("matmul expects 2-D operands")
    return _structural(av @ bv, (a, b), (lambda g: g @ bv.T, lambda g: av.T @ g))


def sum(a, axis=None):
    av = a.value
    if axis is None:
        return _structural(av.sum(), (a,), (lambda g: np.broadcast_to(g, av.shape).copy(),))
    out = av.sum(axis=axis)
    return _structural(out, (a,),
                       (lambda g: np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),))


def mean(a, axis=None):
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def reshape(a, shape):
    old = a.value.shape
    return _structural(a.value.reshape(shape), (a,), (lambda g: g.reshape(old),))


def getitem(a, idx):
    av = a.value

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return out
    return _structural(av[idx], (a,), (vjp,))


def take(a, indices):
    """Gather ``a[indices]`` along the first axis of a 1-D node."""
    av = a.value
    indices = np.asarray(indices)
    if av.ndim != 1:
        raise GraphError("take expects a 1-D operand")
    n = av.shape[0]
    return _structural(av[indices], (a,),
                       (lambda g: np.bincount(indices.ravel(), weights=g.ravel(), minlength=n),))


def stack(items: Sequence, axis=0):
    vals = [_val(x) for x in items]
    out = np.stack(vals, axis=axis)
    vjps = [lambda g, i=i: np.take(g, i, axis=axis) for i in range(len(items))]
    return _structural(out, tuple(items), vjps)


def concatenate(items: Sequence, axis=0):
    vals = [_val(x) for x in items]
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    vjps = [lambda g, lo=lo, hi=hi: np.take(g, np.arange(lo, hi), axis=axis)
            for lo, hi in zip(bounds[:-1], bounds[1:])]
    return _structural(np.concatenate(vals, axis=axis), tuple(items), vjps)


def _moving_sum(v, half_window):
    kernel = np.ones(2 * half_window + 1)
    return np.convolve(v, kernel, mode="same") if len(v) >= len(kernel) else \
        np.array([v[max(0, k - half_window):k + half_window + 1].sum() for k in range(len(v))])


def moving_sum(a, half_window: int):
    """Sum over ``[k-K, k+K]`` clipped to the sequence, for every ``k``.

    The window relation is symmetric, so the adjoint is the same operator.
    """
    if half_window < 0:
        raise GraphError("half_window must be non-negative")
    av = a.value
    if av.ndim != 1:
        raise GraphError("moving_sum expects a 1-D operand")
    return _structural(_moving_sum(av, half_window), (a,),
                       (lambda g: _moving_sum(g, half_window),))


def where(mask, a, b):
    mask = np.asarray(mask, dtype=bool)
    av, bv = _val(a), _val(b)
    shape = np.broadcast_shapes(mask.shape, av.shape, bv.shape)
    m = np.broadcast_to(mask, shape).astype(np.float64)
    return _elementwise(np.where(mask, av, bv), (a, b), (m, 1.0 - m))


def stop_gradient(a):
    return a.tape._push(a.value.copy())


# --------------------------------------------------------------------------
# backward pass

def backward(tape: Tape, root: Var) -> list:
    """Return adjoints ``d root / d node`` for every node of ``tape``.

    Nodes not reachable from ``root`` get a zero adjoint of their shape.
    """
    if not isinstance(root, Var) or root.tape is not tape:
        raise GraphError("root is not on this tape")
    if root.value.size != 1:
        raise GraphError("backward needs a scalar root")
    n = root.node_id + 1
    adj: list = [None] * len(tape.nodes)
    adj[root.node_id] = np.ones_like(root.value)
    for i in range(n - 1, -1, -1):
        g = adj[i]
        if g is None:
            continue
        node = tape.nodes[i]
        tape.visits[i] += 1
        for p, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            adj[p] = contrib if adj[p] is None else adj[p] + contrib
    for i, node in enumerate(tape.nodes):
        if adj[i] is None:
            adj[i] = np.zeros_like(node.value)
        else:
            adj[i] = np.asarray(adj[i], dtype=np.float64).reshape(node.value.shape)
    return adj


def grad(tape: Tape, root: Var, wrt: Sequence[Var]) -> list:
    adj = backward(tape, root)
    return [adj[v.node_id] for v in wrt]


# --------------------------------------------------------------------------
# complex values as (re, im) pairs

class CPair(NamedTuple):
    re: object
    im: object


def cadd(a: CPair, b: CPair) -> CPair:
    return CPair(add(a.re, b.re), add(a.im, b.im))


def csub(a: CPair, b: CPair) -> CPair:
    return CPair(sub(a.re, b.re), sub(a.im, b.im))


def cmul(a: CPair, b: CPair) -> CPair:
    return CPair(sub(mul(a.re, b.re), mul(a.im, b.im)),
                 add(mul(a.re, b.im), mul(a.im, b.re)))


def cscale(a: CPair, s) -> CPair:
    return CPair(mul(a.re, s), mul(a.im, s))


def cconj(a: CPair) -> CPair:
    return CPair(a.re, neg(a.im) if isinstance(a.im, Var) else -np.asarray(a.im))


def cpow_int(a: CPair, n: int) -> CPair:
    if n < 1:
        raise GraphError("cpow_int needs n >= 1")
    result = None
    base = a
    while True:
        if n & 1:
            result = base if result is None else cmul(result, base)
        n >>= 1
        if not n:
            return result
        base = cmul(base, base)


def _cabs_partials(re, im):
    r = np.sqrt(np.maximum(re * re + im * im, ABS2_FLOOR))
    return re / r, im / r


def cabs(a: CPair):
    rv, iv = _val(a.re), _val(a.im)
    shape = np.broadcast_shapes(rv.shape, iv.shape)
    rv, iv = np.broadcast_to(rv, shape), np.broadcast_to(iv, shape)
    if np.any((rv == 0) & (iv == 0)):
        raise GraphError("cabs gradient undefined at the origin")
    dre, dim = _cabs_partials(rv, iv)
    return _elementwise(np.hypot(rv, iv), (a.re, a.im), (dre, dim))


def _carg_partials(re, im):
    dy, dx = _atan2_partials(im, re)
    return dx, dy


def carg(a: CPair):
    """Principal argument in (-pi, pi]."""
    rv, iv = _val(a.re), _val(a.im)
    shape = np.broadcast_shapes(rv.shape, iv.shape)
    rv, iv = np.broadcast_to(rv, shape), np.broadcast_to(iv, shape)
    if np.any((rv == 0) & (iv == 0)):
        raise GraphError("carg undefined at the origin")
    dre, dim = _carg_partials(rv, iv)
    return _elementwise(np.arctan2(iv, rv), (a.re, a.im), (dre, dim))


def cexp_j(theta) -> CPair:
    """``exp(j*theta)`` as a pair."""
    if isinstance(theta, Var):
        return CPair(cos(theta), sin(theta))
    theta = np.asarray(theta, dtype=np.float64)
    return CPair(np.cos(theta), np.sin(theta))


def cphasor(a: CPair) -> CPair:
    """``a / |a|``."""
    r = cabs(a)
    return CPair(div(a.re, r), div(a.im, r))


def cpair(tape: Tape, z) -> CPair:
    """Lift a complex array onto ``tape`` as two leaf nodes."""
    z = np.asarray(z)
    return CPair(tape.var(z.real), tape.var(z.imag))


def to_complex(a: CPair) -> np.ndarray:
    return _val(a.re) + 1j * _val(a.im)


def finite_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5):
    """Central-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g
