"""Dense 2-D reverse-mode automatic differentiation.

All values are float64 matrices; scalars are 1x1. A ``Tape`` records every
tracked operation in execution order, so the reverse sweep is a single
backward pass over the recorded list. Tensors with ``tape=None`` are
constants and never receive gradients.
"""

from __future__ import annotations

import numpy as np

# When True, every forward op asserts all entries are finite and fails fast
# on NaN/Inf instead of letting them propagate.
DEBUG_FINITE = True


def set_debug_finite(flag: bool) -> None:
    global DEBUG_FINITE
    DEBUG_FINITE = bool(flag)


class Tape:
    """Ordered record of tracked operations; one backward pass per tape."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def watch(self, t: "Tensor") -> "Tensor":
        """Mark an existing tensor as a tracked leaf of this tape."""
        t.tape = self
        t.grad = None
        t._parents = ()
        t._backward = None
        self._nodes.append(t)
        return t

    def leaf(self, values) -> "Tensor":
        return self.watch(Tensor(values))

    def _record(self, t: "Tensor") -> None:
        self._nodes.append(t)

    def backward(self, loss: "Tensor") -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked tensor."""
        if loss.tape is not self:
            raise ValueError("backward() called on a tensor not tracked by this tape")
        if loss.values.shape != (1, 1):
            raise ValueError(f"loss must be 1x1, got {loss.values.shape}")
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward pass")
        self._consumed = True
        loss.grad = np.ones((1, 1))
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


class Tensor:
    """2-D float64 array, optionally recorded on a tape."""

    __slots__ = ("values", "tape", "grad", "_parents", "_backward")

    def __init__(self, values, tape=None, parents=(), backward=None):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"only 2-D tensors are supported, got ndim={arr.ndim}")
        self.values = arr
        self.tape = tape
        self.grad = None
        self._parents = parents
        self._backward = backward
        if tape is not None:
            tape._record(self)
        if DEBUG_FINITE and not np.isfinite(arr).all():
            raise FloatingPointError("non-finite values in tensor")

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.values[0, 0])

    def _accum(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        tag = "tracked" if self.tape is not None else "const"
        return f"Tensor(shape={self.shape}, {tag})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return smul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*tensors):
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise ValueError("operands tracked on different tapes")
            tape = t.tape
    return tape


def _unary(x, out_values, dfn):
    tape = _tape_of(x)
    if tape is None:
        return Tensor(out_values)

    def backward(g):
        x._accum(dfn(g))

    return Tensor(out_values, tape, (x,), backward)


def _binary(a, b, out_values, da_fn, db_fn):
    tape = _tape_of(a, b)
    if tape is None:
        return Tensor(out_values)

    def backward(g):
        if a.tape is not None:
            a._accum(da_fn(g))
        if b.tape is not None:
            b._accum(db_fn(g))

    return Tensor(out_values, tape, (a, b), backward)


def _check_same_shape(a, b, op):
    if a.values.shape != b.values.shape:
        raise ValueError(f"{op}: shape mismatch {a.values.shape} vs {b.values.shape}")


# ---------------------------------------------------------------------------
# operation catalogue
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.shape[1] != b.values.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.values.shape} @ {b.values.shape}")
    return _binary(a, b, a.values @ b.values,
                   lambda g: g @ b.values.T,
                   lambda g: a.values.T @ g)


def transpose(a: Tensor) -> Tensor:
    return _unary(a, a.values.T.copy(), lambda g: g.T)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _binary(a, b, a.values + b.values, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _binary(a, b, a.values - b.values, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    return _binary(a, b, a.values * b.values,
                   lambda g: g * b.values,
                   lambda g: g * a.values)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "div")
    if np.any(b.values == 0.0):
        raise ZeroDivisionError("div: zero entries in denominator")
    return _binary(a, b, a.values / b.values,
                   lambda g: g / b.values,
                   lambda g: -g * a.values / (b.values * b.values))


def smul(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _unary(a, a.values * s, lambda g: g * s)


def sadd(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _unary(a, a.values + s, lambda g: g)


def neg(a: Tensor) -> Tensor:
    return _unary(a, -a.values, lambda g: -g)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)
    return _unary(a, out, lambda g: g * out)


def log(a: Tensor) -> Tensor:
    if np.any(a.values <= 0.0):
        raise ValueError("log: domain violation (entries <= 0)")
    return _unary(a, np.log(a.values), lambda g: g / a.values)


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.values < 0.0):
        raise ValueError("sqrt: domain violation (entries < 0)")
    out = np.sqrt(a.values)

    def dfn(g):
        if np.any(out == 0.0):
            raise ZeroDivisionError("sqrt: gradient undefined at 0")
        return g / (2.0 * out)

    return _unary(a, out, dfn)


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0
    return _unary(a, np.where(mask, a.values, 0.0), lambda g: g * mask)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.values > 0, 1.0, slope)
    return _unary(a, a.values * factor, lambda g: g * factor)


def absval(a: Tensor) -> Tensor:
    sign = np.sign(a.values)
    return _unary(a, np.abs(a.values), lambda g: g * sign)


def softmax_rows(a: Tensor) -> Tensor:
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def dfn(g):
        return (g - (g * out).sum(axis=1, keepdims=True)) * out

    return _unary(a, out, dfn)


def sum_all(a: Tensor) -> Tensor:
    return _unary(a, np.array([[a.values.sum()]]),
                  lambda g: np.full_like(a.values, g[0, 0]))


def sum_rows(a: Tensor) -> Tensor:
    """Row sums: (n, c) -> (n, 1)."""
    return _unary(a, a.values.sum(axis=1, keepdims=True),
                  lambda g: np.broadcast_to(g, a.values.shape).copy())


def sum_cols(a: Tensor) -> Tensor:
    """Column sums: (n, c) -> (1, c)."""
    return _unary(a, a.values.sum(axis=0, keepdims=True),
                  lambda g: np.broadcast_to(g, a.values.shape).copy())


def mean_all(a: Tensor) -> Tensor:
    n = a.values.size
    return _unary(a, np.array([[a.values.mean()]]),
                  lambda g: np.full_like(a.values, g[0, 0] / n))


def concat_cols(tensors) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat_cols: empty input")
    rows = tensors[0].values.shape[0]
    for t in tensors:
        if t.values.shape[0] != rows:
            raise ValueError("concat_cols: row count mismatch")
    out = np.concatenate([t.values for t in tensors], axis=1)
    tape = _tape_of(*tensors)
    if tape is None:
        return Tensor(out)

    offsets = np.cumsum([0] + [t.values.shape[1] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.tape is not None:
                t._accum(g[:, lo:hi])

    return Tensor(out, tape, tuple(tensors), backward)


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("gather_rows: index list must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.values.shape[0]):
        raise IndexError("gather_rows: row index out of range")
    out = a.values[idx]

    def dfn(g):
        acc = np.zeros_like(a.values)
        np.add.at(acc, idx, g)
        return acc

    return _unary(a, out, dfn)


def scatter_add_rows(a: Tensor, idx, n_rows: int) -> Tensor:
    """Rows of ``a`` added into a zero (n_rows, c) matrix at positions ``idx``."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.shape != (a.values.shape[0],):
        raise ValueError("scatter_add_rows: need one target row per input row")
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise IndexError("scatter_add_rows: row index out of range")
    out = np.zeros((n_rows, a.values.shape[1]))
    np.add.at(out, idx, a.values)
    return _unary(a, out, lambda g: g[idx])


def broadcast_row(a: Tensor, n: int) -> Tensor:
    """Tile a (1, c) row vector to (n, c)."""
    if a.values.shape[0] != 1:
        raise ValueError(f"broadcast_row: expected (1, c), got {a.values.shape}")
    return _unary(a, np.repeat(a.values, n, axis=0),
                  lambda g: g.sum(axis=0, keepdims=True))


def broadcast_col(a: Tensor, c: int) -> Tensor:
    """Tile an (n, 1) column vector to (n, c)."""
    if a.values.shape[1] != 1:
        raise ValueError(f"broadcast_col: expected (n, 1), got {a.values.shape}")
    return _unary(a, np.repeat(a.values, c, axis=1),
                  lambda g: g.sum(axis=1, keepdims=True))


def reshape(a: Tensor, shape) -> Tensor:
    rows, cols = shape
    if rows * cols != a.values.size:
        raise ValueError(f"reshape: cannot view {a.values.shape} as {shape}")
    orig = a.values.shape
    return _unary(a, a.values.reshape(rows, cols).copy(),
                  lambda g: g.reshape(orig))


def stop_gradient(a: Tensor) -> Tensor:
    """Pass values forward, block gradient flow."""
    return Tensor(a.values.copy())


def custom_op(inputs, out_values, grad_fns) -> Tensor:
    """Record an externally computed op with explicit vector-Jacobian products.

    ``grad_fns[i]`` maps the output cotangent to the cotangent of
    ``inputs[i]`` (or is None for non-differentiable inputs).
    """
    inputs = tuple(inputs)
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor(out_values)

    def backward(g):
        for t, fn in zip(inputs, grad_fns):
            if fn is not None and t.tape is not None:
                t._accum(fn(g))

    return Tensor(out_values, tape, inputs, backward)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_diff_check(f, x_values, h: float = 1e-5) -> float:
    """Max relative error between backward() and central differences.

    ``f`` maps a tracked Tensor to a scalar Tensor; it is re-evaluated on a
    fresh tape for the analytic gradient and twice per entry for the
    numeric one. Relative error is ``|a - b| / max(1, |a|, |b|)``.
    """
    x_values = np.asarray(x_values, dtype=np.float64)
    tape = Tape()
    x = tape.leaf(x_values.copy())
    out = f(x)
    if out.values.shape != (1, 1):
        raise ValueError("finite_diff_check: f must return a scalar tensor")
    tape.backward(out)
    analytic = x.grad if x.grad is not None else np.zeros_like(x_values)

    numeric = np.zeros_like(x_values)
    flat = x_values.copy()
    for i in range(flat.shape[0]):
        for j in range(flat.shape[1]):
            orig = flat[i, j]
            flat[i, j] = orig + h
            fp = f(Tensor(flat.copy())).item()
            flat[i, j] = orig - h
            fm = f(Tensor(flat.copy())).item()
            flat[i, j] = orig
            numeric[i, j] = (fp - fm) / (2.0 * h)

    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))
