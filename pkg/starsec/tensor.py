# Copyright (C) 2026 Starsec Developers
#
# This program is free software; you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; either version 2 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program; if not, write to the Free Software
# Foundation, Inc., 51 Franklin Street, Fifth Floor, Boston, MA 02110-1301 USA

"""Dense real tensors with reverse-mode automatic differentiation.

Operations executed while a :class:`Tape` is active are appended to it;
:func:`backward` then walks the tape in reverse and fills the ``grad``
buffer of every leaf created with ``requires_grad=True``.  Outside a tape
the same functions are plain numpy arithmetic.

Complex quantities are carried as :class:`ComplexMatrix`, a pair of real
tensors, so that all differentiation stays real-valued.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from starsec import NumericError, ShapeError, UsageError


logger = logging.getLogger('starsec.tensor')


_local = threading.local()


class TapeNode(object):
    """One recorded operation.

    :param op: op-kind tag, e.g. ``'matmul'``
    :param output: the tensor produced
    :param inputs: tensors consumed, in argument order
    :param backward_fn: maps the output gradient to one gradient per input
        (None for inputs that do not need one)
    :param pattern: kink state of piecewise operations (ReLU masks, argmax
        indices), used to detect non-differentiable points
    """

    __slots__ = ('op', 'output', 'inputs', 'backward_fn', 'pattern', 'tape')

    def __init__(self, op, output, inputs, backward_fn, pattern, tape):
        self.op = op
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.pattern = pattern
        self.tape = tape

    def __repr__(self):
        return '<TapeNode %s %r>' % (self.op, self.output.shape)


class Tape(object):
    """Append-only record of taped operations.

    Use as a context manager; the active tape is per thread.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self._previous = None
        self._consumed = False

    def __enter__(self):
        self._previous = current_tape()
        _local.tape = self
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _local.tape = self._previous
        self._previous = None
        return False

    def record(self, op, output, inputs, backward_fn, pattern=None):
        node = TapeNode(op, output, inputs, backward_fn, pattern, self)
        self.nodes.append(node)
        return node

    def pattern(self) -> bytes:
        """Return the concatenated kink state of all piecewise nodes."""
        return b''.join(
            node.op.encode('ascii') + node.pattern
            for node in self.nodes if node.pattern is not None)

    def backward(self, loss: "Tensor") -> None:
        if loss._node is None or loss._node.tape is not self:
            raise UsageError('loss was not produced on this tape')
        if loss.data.size != 1:
            raise ShapeError(
                'backward needs a scalar loss, got shape %r' % (loss.shape,))
        if self._consumed:
            raise UsageError('tape has already been traversed')
        self._consumed = True
        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            input_grads = node.backward_fn(g)
            for inp, ig in zip(node.inputs, input_grads):
                if ig is None or not inp.requires_grad:
                    continue
                ig = _unbroadcast(ig, inp.data.shape)
                if inp._node is None:
                    leaves[id(inp)] = inp
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig
        for key, leaf in leaves.items():
            g = grads[key]
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        logger.debug('backward through %d nodes, %d leaves',
                     len(self.nodes), len(leaves))


def current_tape() -> Optional[Tape]:
    return getattr(_local, 'tape', None)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor(object):
    """Real-valued dense array, 64-bit by default."""

    __slots__ = ('data', 'grad', 'requires_grad', '_node')

    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._node: Optional[TapeNode] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return 'Tensor(shape=%r, requires_grad=%r)' % (
            self.shape, self.requires_grad)

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self):
        return transpose(self)


def parameter(data) -> Tensor:
    """Create a leaf tensor whose gradient is wanted."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def _emit(op: str, data: np.ndarray, inputs: Sequence[Tensor],
          backward_fn: Callable, pattern: Optional[bytes] = None) -> Tensor:
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = tape.record(op, out, tuple(inputs), backward_fn, pattern)
    return out


def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    return _emit('add', a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    return _emit('sub', a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    return _emit('mul', a.data * b.data, (a, b),
                 lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out = a.data / b.data
    return _emit('div', out, (a, b),
                 lambda g: (g / b.data, -g * out / b.data))


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, batched over leading ones."""
    a, b = constant(a), constant(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError('matmul needs matrices, got %r and %r'
                         % (a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul inner dimensions differ: %r @ %r'
                         % (a.shape, b.shape))
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeError(str(e))

    def backward_fn(g):
        return (np.matmul(g, np.swapaxes(b.data, -1, -2)),
                np.matmul(np.swapaxes(a.data, -1, -2), g))
    return _emit('matmul', out, (a, b), backward_fn)


def transpose(a) -> Tensor:
    a = constant(a)
    return _emit('transpose', np.swapaxes(a.data, -1, -2), (a,),
                 lambda g: (np.swapaxes(g, -1, -2),))


def relu(a) -> Tensor:
    a = constant(a)
    mask = a.data > 0
    # Subgradient 0 at exactly 0.
    return _emit('relu', np.where(mask, a.data, 0.0), (a,),
                 lambda g: (g * mask,), pattern=np.packbits(mask).tobytes())


def sigmoid(a) -> Tensor:
    a = constant(a)
    out = expit(a.data)
    return _emit('sigmoid', out, (a,), lambda g: (g * out * (1.0 - out),))


def sqrt(a) -> Tensor:
    a = constant(a)
    out = np.sqrt(a.data)
    if np.any(a.data < 0):
        raise NumericError('sqrt of a negative value')

    def backward_fn(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)
    return _emit('sqrt', out, (a,), backward_fn)


def square(a) -> Tensor:
    a = constant(a)
    return _emit('square', a.data * a.data, (a,),
                 lambda g: (2.0 * g * a.data,))


def log2(a) -> Tensor:
    a = constant(a)
    if np.any(a.data <= 0):
        raise NumericError('log2 of a non-positive value')
    return _emit('log2', np.log2(a.data), (a,),
                 lambda g: (g / (a.data * np.log(2.0)),))


def _expand(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = constant(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    return _emit('sum', out, (a,),
                 lambda g: (_expand(g, a.shape, axis, keepdims).copy(),))


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = constant(a)
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.data.size // max(out.size, 1)
    return _emit('mean', out, (a,),
                 lambda g: (_expand(g, a.shape, axis, keepdims) / count,))


def tmax(a, axis: int = -1) -> Tensor:
    """Maximum along ``axis``; ties take the first index."""
    a = constant(a)
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(
        a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward_fn(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis),
                          np.expand_dims(g, axis), axis=axis)
        return (full,)
    return _emit('max', out, (a,), backward_fn,
                 pattern=idx.astype(np.int64).tobytes())


def index(a, key) -> Tensor:
    """Basic slicing, e.g. a row slice ``x[:, 0, :]``."""
    a = constant(a)
    out = a.data[key]

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[key] += g
        return (full,)
    return _emit('index', out, (a,), backward_fn)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [constant(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(str(e))
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))
    return _emit('concat', out, tensors, backward_fn)


def reshape(a, shape) -> Tensor:
    a = constant(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(str(e))
    return _emit('reshape', out, (a,), lambda g: (g.reshape(a.shape),))


def l2_norm(a, axis: int = -1, keepdims: bool = True) -> Tensor:
    a = constant(a)
    out = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=keepdims))

    def backward_fn(g):
        o = out if keepdims else np.expand_dims(out, axis)
        gg = g if keepdims else np.expand_dims(g, axis)
        safe = np.where(o > 0, o, 1.0)
        return (np.where(o > 0, gg * a.data / safe, 0.0),)
    return _emit('l2_norm', out, (a,), backward_fn)


def layer_norm(a, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean and unit variance along ``axis``."""
    a = constant(a)
    mu = a.data.mean(axis=axis, keepdims=True)
    centered = a.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=axis, keepdims=True) + eps)
    out = centered * inv_std

    def backward_fn(g):
        g_mean = g.mean(axis=axis, keepdims=True)
        gy_mean = (g * out).mean(axis=axis, keepdims=True)
        return (inv_std * (g - g_mean - out * gy_mean),)
    return _emit('layer_norm', out, (a,), backward_fn)


def backward(loss: Tensor) -> None:
    """Fill the grad buffers of every leaf that ``loss`` depends on."""
    if not isinstance(loss, Tensor) or loss._node is None:
        raise UsageError('backward called on a tensor that was not taped')
    loss._node.tape.backward(loss)


class ComplexMatrix(object):
    """Complex array held as a pair of real tensors of equal shape."""

    __slots__ = ('re', 'im')

    def __init__(self, re, im):
        re, im = constant(re), constant(im)
        if re.shape != im.shape:
            raise ShapeError('real part %r and imaginary part %r differ'
                             % (re.shape, im.shape))
        self.re = re
        self.im = im

    @classmethod
    def from_numpy(cls, z, requires_grad: bool = False) -> "ComplexMatrix":
        z = np.asarray(z, dtype=np.complex128)
        return cls(Tensor(z.real.copy(), requires_grad),
                   Tensor(z.imag.copy(), requires_grad))

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.re.shape

    def __repr__(self):
        return 'ComplexMatrix(shape=%r)' % (self.shape,)

    def __add__(self, other: "ComplexMatrix") -> "ComplexMatrix":
        return ComplexMatrix(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "ComplexMatrix") -> "ComplexMatrix":
        return ComplexMatrix(self.re - other.re, self.im - other.im)

    def __mul__(self, other) -> "ComplexMatrix":
        if isinstance(other, ComplexMatrix):
            return ComplexMatrix(
                self.re * other.re - self.im * other.im,
                self.re * other.im + self.im * other.re)
        return ComplexMatrix(self.re * other, self.im * other)

    __rmul__ = __mul__

    def __getitem__(self, key) -> "ComplexMatrix":
        return ComplexMatrix(self.re[key], self.im[key])

    def conj(self) -> "ComplexMatrix":
        return ComplexMatrix(self.re, -self.im)

    def abs2(self) -> Tensor:
        return square(self.re) + square(self.im)

    def sum(self, axis=None, keepdims=False) -> "ComplexMatrix":
        return ComplexMatrix(tsum(self.re, axis, keepdims),
                             tsum(self.im, axis, keepdims))

    def reshape(self, shape) -> "ComplexMatrix":
        return ComplexMatrix(reshape(self.re, shape), reshape(self.im, shape))


def complex_matvec(m: ComplexMatrix, v: ComplexMatrix) -> ComplexMatrix:
    """Complex matrix-vector product ``(Mr + jMi)(vr + jvi)``.

    Both operands may carry leading batch axes.
    """
    if len(m.shape) < 2 or len(v.shape) < 2 or v.shape[-1] != 1:
        raise ShapeError('complex_matvec needs M[..., m, n] and v[..., n, 1], '
                         'got %r and %r' % (m.shape, v.shape))
    if m.shape[-1] != v.shape[-2]:
        raise ShapeError('complex_matvec: %r does not conform with %r'
                         % (m.shape, v.shape))
    return ComplexMatrix(
        matmul(m.re, v.re) - matmul(m.im, v.im),
        matmul(m.re, v.im) + matmul(m.im, v.re))


@dataclass
class GradCheck:
    """Outcome of :func:`finite_diff_check`."""

    max_error: float
    checked: int
    excluded: List[Tuple[int, int]] = field(default_factory=list)


def _evaluate(f) -> Tuple[float, bytes]:
    with Tape() as tape:
        value = f()
    value = float(np.asarray(constant(value).data).reshape(-1)[0])
    if not np.isfinite(value):
        raise NumericError('objective evaluated to %r' % value)
    return value, tape.pattern()


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                      step: float = 1e-5, floor: float = 1e-8) -> GradCheck:
    """Compare autodiff gradients with central finite differences.

    :param f: zero-argument callable computing a scalar from ``params``
    :param params: leaf tensors created with ``requires_grad=True``
    :param step: finite-difference step
    :param floor: lower bound on the denominator of the relative error
    :return: GradCheck with the maximum of
        ``|autodiff - central| / max(|central|, floor)`` over all checked
        elements.  Elements whose perturbation crosses a ReLU or max kink are
        listed in ``excluded`` as (parameter index, flat element index).
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    base_pattern = tape.pattern()
    if not np.isfinite(loss.data).all():
        raise NumericError('objective evaluated to %r' % loss.data)
    backward(loss)

    result = GradCheck(max_error=0.0, checked=0)
    for i, p in enumerate(params):
        auto = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            plus, plus_pattern = _evaluate(f)
            flat[j] = orig - step
            minus, minus_pattern = _evaluate(f)
            flat[j] = orig
            if plus_pattern != base_pattern or minus_pattern != base_pattern:
                result.excluded.append((i, j))
                continue
            central = (plus - minus) / (2.0 * step)
            err = abs(auto.reshape(-1)[j] - central) / max(abs(central), floor)
            result.max_error = max(result.max_error, err)
            result.checked += 1
    if result.excluded:
        logger.debug('excluded %d elements sitting on kinks',
                     len(result.excluded))
    return result
