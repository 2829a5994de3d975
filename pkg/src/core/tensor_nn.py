"""
Dense tensors with reverse-mode autodiff, MLPs and the Adam optimizer

A ``Tensor`` wraps a float64 numpy array plus the closure that maps its
output gradient back onto its parents. Leaves created from a ``Parameter``
remember the parameter version they saw, so a trace recorded before an
optimizer step can no longer be back-propagated.

Every op checks its result for NaN/Inf and raises ``NonFiniteError``.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.errors import HybridRLError, NonFiniteError, ShapeError, StaleTraceError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'hybrid-td3-mlp'
CHECKPOINT_VERSION = 1

HIDDEN_ACTIVATIONS = ('relu', 'tanh')
OUTPUT_ACTIVATIONS = ('identity', 'tanh', 'softmax')

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]


class Parameter:
    """Trainable array with a version counter bumped on every in-place update"""

    def __init__(self, value: ArrayLike, name: str = ''):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.version = 0
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def track(self) -> 'Tensor':
        """Leaf tensor whose gradient accumulates into this parameter"""
        leaf = Tensor(self.value, op='param')
        leaf.source = self
        leaf.version = self.version
        return leaf

    def assign(self, value: ArrayLike) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.value.shape:
            raise ShapeError(f'cannot assign shape {value.shape} to parameter {self.name} of shape {self.shape}')
        self.value[...] = value
        self.version += 1

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self):
        return f'Parameter({self.name}, shape={self.shape}, version={self.version})'


class Tensor:
    """Node of a computation trace"""

    __slots__ = ('data', 'parents', 'backward_fn', 'op', 'source', 'version', 'consumed')

    # numpy defers mixed arithmetic to the Tensor operators
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, parents: Tuple['Tensor', ...] = (),
                 backward_fn: Optional[Callable] = None, op: str = 'const'):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.source: Optional[Parameter] = None
        self.version = 0
        self.consumed = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def requires_grad(self) -> bool:
        return self.source is not None or bool(self.parents)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f'Tensor(op={self.op}, shape={self.shape})'


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f'non-finite value produced by {op}')


def _make(data: np.ndarray, parents: Tuple[Tensor, ...], backward_fn: Callable, op: str) -> Tensor:
    _check_finite(data, op)
    if not any(p.requires_grad for p in parents):
        return Tensor(data, op=op)
    return Tensor(data, parents, backward_fn, op)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and reduction ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), 'add')


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), 'sub')


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), 'mul')


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = a.data / b.data

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out, (a, b), backward, 'div')


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), 'neg')


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f'matmul shapes {a.shape} and {b.shape} do not align')
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), 'matmul')


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over='ignore'):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), 'exp')


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.log(a.data)
    return _make(out, (a,), lambda g: (g / a.data,), 'log')


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), 'tanh')


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), 'relu')


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), 'square')


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,), 'clip')


def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum_(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    return _make(out, (a,), lambda g: (_expand_reduced(g, a.shape, axis, keepdims).copy(),), 'sum')


def mean(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return sum_(a, axis, keepdims) * (1.0 / count)


def max_(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    winners = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, winners, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, winners, g if keepdims else np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return _make(out, (a,), backward, 'max')


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    first = a.data <= b.data
    return _make(np.where(first, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * first, a.shape), _unbroadcast(g * ~first, b.shape)), 'minimum')


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    first = a.data >= b.data
    return _make(np.where(first, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * first, a.shape), _unbroadcast(g * ~first, b.shape)), 'maximum')


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = np.exp(a.data - a.data.max(axis=axis, keepdims=True))
    out = shifted / shifted.sum(axis=axis, keepdims=True)
    return _make(out, (a,), lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),), 'softmax')


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)
    return _make(out, (a,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),), 'log_softmax')


# ---------------------------------------------------------------------------
# Structural ops
# ---------------------------------------------------------------------------

def slice_cols(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if not 0 <= start < stop <= a.shape[-1]:
        raise ShapeError(f'column slice [{start}:{stop}] out of range for width {a.shape[-1]}')

    def backward(g):
        grad = np.zeros_like(a.data)
        grad[..., start:stop] = g
        return (grad,)

    return _make(a.data[..., start:stop].copy(), (a,), backward, 'slice')


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    sizes = [p.shape[axis] for p in parts]
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f'cannot concatenate shapes {[p.shape for p in parts]}') from exc
    bounds = np.cumsum(sizes)[:-1]
    return _make(out, parts, lambda g: tuple(np.split(g, bounds, axis=axis)), 'concat')


def gather_block(a, index: np.ndarray, width: int) -> Tensor:
    """Per-row block ``a[b, index[b]*width:(index[b]+1)*width]``"""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64).reshape(-1)
    if a.data.ndim != 2 or index.shape[0] != a.shape[0]:
        raise ShapeError(f'gather_block needs a 2-D input and one index per row, got {a.shape}, {index.shape}')
    if np.any(index < 0) or np.any((index + 1) * width > a.shape[1]):
        raise ShapeError(f'block index out of range for width {width} and {a.shape[1]} columns')
    cols = index[:, None] * width + np.arange(width)[None, :]

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, cols, g, axis=1)
        return (grad,)

    return _make(np.take_along_axis(a.data, cols, axis=1), (a,), backward, 'gather_block')


def detach(a) -> Tensor:
    return Tensor(as_tensor(a).data.copy(), op='detach')


def quantile_huber_loss(pred, target: np.ndarray, taus: np.ndarray, kappa: float = 1.0) -> Tensor:
    """Quantile-Huber loss of atoms ``pred`` (B, A) against constant atoms ``target`` (B, T)

    Averaged over the batch, the predicted atoms and the target atoms.
    """
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    taus = np.asarray(taus, dtype=np.float64).reshape(1, -1, 1)
    if pred.data.ndim != 2 or target.ndim != 2 or target.shape[0] != pred.shape[0] \
            or taus.shape[1] != pred.shape[1]:
        raise ShapeError(f'quantile loss shapes pred={pred.shape}, target={target.shape}, taus={taus.shape}')
    u = target[:, None, :] - pred.data[:, :, None]
    small = np.abs(u) <= kappa
    huber = np.where(small, 0.5 * u * u, kappa * (np.abs(u) - 0.5 * kappa))
    weight = np.abs(taus - (u < 0))
    count = u.size
    out = np.asarray(np.sum(weight * huber) / (kappa * count))

    def backward(g):
        dhuber = np.where(small, u, kappa * np.sign(u))
        return (-(g / (kappa * count)) * np.sum(weight * dhuber, axis=2),)

    return _make(out, (pred,), backward, 'quantile_huber')


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _topological_order(root: Tensor) -> List[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(trace: Tensor, output_grad: Optional[ArrayLike] = None) -> Dict[Parameter, np.ndarray]:
    """Propagate ``output_grad`` through ``trace`` into the parameters it used

    Gradients are added to ``Parameter.grad`` and also returned per
    parameter. A trace can be consumed once; parameters updated since the
    forward pass make it stale.
    """
    if trace.consumed:
        raise StaleTraceError('trace was already consumed by a previous backward pass')
    if output_grad is None:
        if trace.data.size != 1:
            raise ShapeError(f'output_grad is required for non-scalar output of shape {trace.shape}')
        output_grad = np.ones_like(trace.data)
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != trace.shape:
        raise ShapeError(f'output_grad shape {output_grad.shape} does not match output {trace.shape}')

    order = _topological_order(trace)
    for node in order:
        if node.source is not None and node.source.version != node.version:
            raise StaleTraceError(f'parameter {node.source.name} changed since the forward pass')

    grads = {id(trace): output_grad}
    collected: Dict[Parameter, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.source is not None:
            param = node.source
            collected[param] = collected.get(param, 0.0) + g
            continue
        if node.backward_fn is None:
            continue
        for parent, parent_grad in zip(node.parents, node.backward_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + parent_grad if key in grads else parent_grad
    for node in order:
        node.consumed = True
    for param, g in collected.items():
        _check_finite(g, f'gradient of {param.name}')
        param.grad += g
    return collected


# ---------------------------------------------------------------------------
# Multilayer perceptron
# ---------------------------------------------------------------------------

class Mlp:
    """Fully connected network with a uniform fan-in initialisation"""

    def __init__(self, widths: Sequence[int], hidden: str = 'relu', output: str = 'identity',
                 rng: Optional[np.random.Generator] = None, final_scale: float = 1.0, name: str = 'mlp'):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ShapeError(f'an Mlp needs at least two positive widths, got {widths}')
        if hidden not in HIDDEN_ACTIVATIONS or output not in OUTPUT_ACTIVATIONS:
            raise ShapeError(f'unsupported activations hidden={hidden}, output={output}')
        self.widths = widths
        self.hidden = hidden
        self.output = output
        self.name = name
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: List[Parameter] = []
        self.biases: List[Parameter] = []
        last = len(widths) - 2
        for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / math.sqrt(fan_in)
            scale = final_scale if layer == last else 1.0
            self.weights.append(Parameter(rng.uniform(-bound, bound, (fan_in, fan_out)) * scale, f'{name}.W{layer}'))
            self.biases.append(Parameter(rng.uniform(-bound, bound, fan_out) * scale, f'{name}.b{layer}'))

    def parameters(self) -> List[Parameter]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    @property
    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ShapeError(f'{self.name} expects input (batch, {self.widths[0]}), got {x.shape}')

    def forward(self, x, track: bool = True) -> Tensor:
        """Traced forward pass; ``track=False`` treats the parameters as constants"""
        h = as_tensor(x)
        self._check_input(h.data)
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            w_t = w.track() if track else Tensor(w.value)
            b_t = b.track() if track else Tensor(b.value)
            h = matmul(h, w_t) + b_t
            if layer < last:
                h = relu(h) if self.hidden == 'relu' else tanh(h)
        if self.output == 'tanh':
            return tanh(h)
        if self.output == 'softmax':
            return softmax(h)
        return h

    def predict(self, x) -> np.ndarray:
        """Untraced forward pass"""
        h = np.asarray(x, dtype=np.float64)
        self._check_input(h)
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.value + b.value
            if layer < last:
                h = np.maximum(h, 0.0) if self.hidden == 'relu' else np.tanh(h)
        if self.output == 'tanh':
            h = np.tanh(h)
        elif self.output == 'softmax':
            h = np.exp(h - h.max(axis=-1, keepdims=True))
            h = h / h.sum(axis=-1, keepdims=True)
        _check_finite(h, f'{self.name}.predict')
        return h

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def copy(self, name: Optional[str] = None) -> 'Mlp':
        clone = Mlp.__new__(Mlp)
        clone.widths = list(self.widths)
        clone.hidden = self.hidden
        clone.output = self.output
        clone.name = name or self.name
        clone.weights = [Parameter(w.value, w.name) for w in self.weights]
        clone.biases = [Parameter(b.value, b.name) for b in self.biases]
        return clone

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'widths': self.widths,
            'hidden': self.hidden,
            'output': self.output,
            'params': [p.value.reshape(-1).tolist() for p in self.parameters()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Mlp':
        net = cls(data['widths'], data['hidden'], data['output'], name=data.get('name', 'mlp'))
        params = net.parameters()
        if len(params) != len(data['params']):
            raise ShapeError(f'checkpoint holds {len(data["params"])} arrays, network needs {len(params)}')
        for param, flat in zip(params, data['params']):
            flat = np.asarray(flat, dtype=np.float64)
            if flat.size != param.value.size:
                raise ShapeError(f'checkpoint array for {param.name} has {flat.size} values, '
                                 f'expected {param.value.size}')
            param.value[...] = flat.reshape(param.shape)
        return net


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Parameter], lr: float = 3e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> 'AdamState':
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                   m=[np.zeros_like(p.value) for p in params],
                   v=[np.zeros_like(p.value) for p in params])

    def to_dict(self) -> dict:
        return {
            'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2, 'eps': self.eps, 'step': self.step,
            'm': [a.reshape(-1).tolist() for a in self.m],
            'v': [a.reshape(-1).tolist() for a in self.v],
        }

    @classmethod
    def from_dict(cls, data: dict, params: Sequence[Parameter]) -> 'AdamState':
        state = cls.for_params(params, data['lr'], data['beta1'], data['beta2'], data['eps'])
        state.step = int(data['step'])
        for target, flat in zip(state.m + state.v, data['m'] + data['v']):
            target[...] = np.asarray(flat, dtype=np.float64).reshape(target.shape)
        return state


def adam_step(state: AdamState, params: Sequence[Parameter],
              grads: Optional[Sequence[np.ndarray]] = None) -> None:
    """Bias-corrected Adam update applied in place; ``grads`` defaults to ``p.grad``"""
    if len(params) != len(state.m):
        raise ShapeError(f'optimizer tracks {len(state.m)} parameters, got {len(params)}')
    grads = [p.grad for p in params] if grads is None else grads
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for param, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != param.shape or m.shape != param.shape:
            raise ShapeError(f'gradient shape {g.shape} does not match parameter {param.name} {param.shape}')
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        param.value -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.version += 1
    _check_finite(np.concatenate([p.value.reshape(-1) for p in params]) if params else np.zeros(0), 'adam_step')


def polyak_update(target_params: Sequence[Parameter], online_params: Sequence[Parameter], tau: float) -> None:
    """target <- (1 - tau) * target + tau * online"""
    if not 0.0 < tau <= 1.0:
        raise HybridRLError(f'tau must lie in (0, 1], got {tau}', code='NN-400')
    if len(target_params) != len(online_params):
        raise ShapeError(f'{len(target_params)} target parameters vs {len(online_params)} online parameters')
    for target, online in zip(target_params, online_params):
        if target.shape != online.shape:
            raise ShapeError(f'polyak shapes {target.shape} and {online.shape} differ')
        if tau == 1.0:
            target.value[...] = online.value
        else:
            target.value *= 1.0 - tau
            target.value += tau * online.value
        target.version += 1


def gradient_check(net: Mlp, x: np.ndarray, loss: Callable[[Tensor], Tensor], n_params: int,
                   rng: np.random.Generator, h: float = 1e-5) -> float:
    """Largest relative error between autodiff and central differences

    ``loss`` maps the traced network output to a scalar tensor; ``n_params``
    scalar parameters are drawn at random.
    """
    net.zero_grad()
    backward(loss(net.forward(x)))
    params = net.parameters()
    sizes = np.array([p.value.size for p in params])
    worst = 0.0
    for _ in range(n_params):
        which = int(rng.choice(len(params), p=sizes / sizes.sum()))
        param = params[which]
        flat = int(rng.integers(param.value.size))
        idx = np.unravel_index(flat, param.shape)
        analytic = float(param.grad[idx])
        original = param.value[idx]
        param.value[idx] = original + h
        up = loss(net.forward(x, track=False)).item()
        param.value[idx] = original - h
        down = loss(net.forward(x, track=False)).item()
        param.value[idx] = original
        numeric = (up - down) / (2.0 * h)
        worst = max(worst, abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric)))
    return worst


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: Union[str, Path], networks: Dict[str, Mlp],
                    optimizers: Optional[Dict[str, AdamState]] = None, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'networks': {key: net.to_dict() for key, net in networks.items()},
        'optimizers': {key: opt.to_dict() for key, opt in (optimizers or {}).items()},
        'extra': extra or {},
    }
    path.write_text(json.dumps(payload), encoding='utf-8')
    logger.debug('wrote checkpoint %s (%d networks)', path, len(networks))
    return path


def load_checkpoint(path: Union[str, Path]) -> dict:
    """Read a checkpoint written by ``save_checkpoint``; networks come back as Mlp objects"""
    payload = json.loads(Path(path).read_text(encoding='utf-8'))
    if payload.get('format') != CHECKPOINT_FORMAT or payload.get('version') != CHECKPOINT_VERSION:
        raise HybridRLError(f'unsupported checkpoint {payload.get("format")} v{payload.get("version")}',
                            code='NN-415')
    payload['networks'] = {key: Mlp.from_dict(data) for key, data in payload['networks'].items()}
    return payload
