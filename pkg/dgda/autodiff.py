"""
Dense float64 tensors with a reverse-mode tape.

Every differentiable block of the lab is written against the primitives in
this module. An operation that touches a tensor with ``requires_grad`` is
recorded on the active tape together with its vector-Jacobian rule;
``grad``/``backward`` replay the tape from the loss towards the leaves and
then reset it, so each training step starts from an empty tape.
"""
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolation, NumericDomainError

logger = logging.getLogger(__name__)

DEFAULT_LEAKY_SLOPE = 0.01


class Tape:
    def __init__(self):
        self.nodes = []
        self.generation = 0
        self.enabled = True

    def record(self, node):
        node.tape_id = (self.generation, len(self.nodes))
        self.nodes.append(node)

    def reset(self):
        self.nodes = []
        self.generation += 1


_tape = Tape()


def active_tape() -> Tape:
    return _tape


@contextmanager
def no_grad():
    """Evaluate without recording: results never require gradients."""
    previous = _tape.enabled
    _tape.enabled = False
    try:
        yield
    finally:
        _tape.enabled = previous


def _frozen(array) -> np.ndarray:
    array = np.asarray(array, dtype=np.float64)
    array.flags.writeable = False
    return array


class Tensor:
    def __init__(self, data, requires_grad: bool = False):
        self.data = _frozen(np.array(data, dtype=np.float64))
        self.requires_grad = requires_grad
        self.tape_id = None
        self.op = "leaf"
        self._parents = ()
        self._vjp = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return hadamard(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """A named learnable leaf. The optimizer swaps its buffer, never mutates it."""

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def assign(self, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.data.shape:
            raise ContractViolation(
                f"assign: parameter {self.name} has shape {self.data.shape}, got {values.shape}"
            )
        self.data = _frozen(values.copy())

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.shape})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data, parents, vjp, op) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = _frozen(data)
    out.op = op
    out.tape_id = None
    out.requires_grad = _tape.enabled and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._vjp = vjp
        _tape.record(out)
    else:
        out._parents = ()
        out._vjp = None
    return out


def _require(condition: bool, op: str, message: str) -> None:
    if not condition:
        raise ContractViolation(f"{op}: {message}")


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require(a.ndim == 2 and b.ndim in (1, 2), "matmul", f"unsupported ranks {a.shape} @ {b.shape}")
    _require(a.shape[1] == b.shape[0], "matmul", f"shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.data, b.data

    def vjp(g):
        ga = g @ bv.T if bv.ndim == 2 else np.outer(g, bv)
        return ga, av.T @ g

    return _result(av @ bv, (a, b), vjp, "matmul")


def transpose(a: Tensor) -> Tensor:
    _require(a.ndim == 2, "transpose", f"expected a matrix, got shape {a.shape}")
    return _result(a.data.T, (a,), lambda g: (g.T,), "transpose")


def inner_product(a: Tensor, b: Tensor) -> Tensor:
    _require(a.ndim == 1 and a.shape == b.shape, "inner_product", f"shape mismatch {a.shape}, {b.shape}")
    av, bv = a.data, b.data
    return _result(np.dot(av, bv), (a, b), lambda g: (g * bv, g * av), "inner_product")


def rowwise_inner(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of matching rows: (n, k), (n, k) -> (n,)."""
    _require(a.ndim == 2 and a.shape == b.shape, "rowwise_inner", f"shape mismatch {a.shape}, {b.shape}")
    av, bv = a.data, b.data
    return _result(
        np.einsum("ij,ij->i", av, bv), (a, b),
        lambda g: (g[:, None] * bv, g[:, None] * av), "rowwise_inner",
    )


# -- elementwise --------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")
    # row-bias broadcast: (n, k) + (k,)
    _require(
        a.ndim == 2 and b.ndim == 1 and b.shape[0] == a.shape[1],
        "add", f"shape mismatch {a.shape} + {b.shape}",
    )
    return _result(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, "sub", f"shape mismatch {a.shape} - {b.shape}")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, "hadamard", f"shape mismatch {a.shape} * {b.shape}")
    av, bv = a.data, b.data
    return _result(av * bv, (a, b), lambda g: (g * bv, g * av), "hadamard")


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,), "scalar_mul")


def scale_rows(a: Tensor, v: Tensor) -> Tensor:
    """Multiply row i of ``a`` by ``v[i]``."""
    _require(v.ndim == 1 and a.ndim in (1, 2) and a.shape[0] == v.shape[0],
             "scale_rows", f"shape mismatch {a.shape} by {v.shape}")
    av, vv = a.data, v.data
    if a.ndim == 1:
        return _result(av * vv, (a, v), lambda g: (g * vv, g * av), "scale_rows")
    return _result(
        av * vv[:, None], (a, v),
        lambda g: (g * vv[:, None], np.einsum("ij,ij->i", g, av)), "scale_rows",
    )


def reciprocal(a: Tensor) -> Tensor:
    if np.any(a.data == 0):
        raise NumericDomainError(f"reciprocal: zero entry in tensor of shape {a.shape}")
    out = 1.0 / a.data
    return _result(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def log(a: Tensor) -> Tensor:
    if np.any(~(a.data > 0)):
        raise NumericDomainError(f"log: non-positive or NaN entry in tensor of shape {a.shape}")
    av = a.data
    return _result(np.log(av), (a,), lambda g: (g / av,), "log")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def leaky_relu(a: Tensor, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    positive = a.data > 0
    return _result(
        np.where(positive, a.data, slope * a.data), (a,),
        lambda g: (np.where(positive, g, slope * g),), "leaky_relu",
    )


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp into [low, high]; the gradient is zero where the clamp is active."""
    inside = (a.data >= low) & (a.data <= high)
    return _result(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), "clip")


# -- reductions ---------------------------------------------------------------


def row_sum(a: Tensor) -> Tensor:
    """Sum over the last axis."""
    _require(a.ndim >= 1, "row_sum", "scalar input")
    return _result(a.data.sum(axis=-1), (a,),
                   lambda g: (np.broadcast_to(g[..., None], a.shape).copy(),), "row_sum")


def sum_all(a: Tensor) -> Tensor:
    return _result(a.data.sum(), (a,), lambda g: (np.full(a.shape, float(g)),), "sum_all")


def mean(a: Tensor) -> Tensor:
    _require(a.data.size > 0, "mean", "empty tensor")
    n = a.data.size
    return _result(a.data.mean(), (a,), lambda g: (np.full(a.shape, float(g) / n),), "mean")


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    x = logits.data
    if np.any(np.isnan(x)):
        raise NumericDomainError(f"softmax: NaN logit in tensor of shape {logits.shape}")
    shifted = np.exp(x - x.max(axis=axis, keepdims=True))
    out = shifted / shifted.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (logits,), vjp, "softmax")


# -- structure ----------------------------------------------------------------


def concat_lastdim(tensors) -> Tensor:
    tensors = list(tensors)
    _require(len(tensors) > 0, "concat_lastdim", "no inputs")
    lead = tensors[0].shape[:-1]
    _require(all(t.shape[:-1] == lead for t in tensors), "concat_lastdim",
             f"leading shapes differ: {[t.shape for t in tensors]}")
    bounds = np.cumsum([t.shape[-1] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=-1))

    return _result(np.concatenate([t.data for t in tensors], axis=-1), tensors, vjp, "concat_lastdim")


def concat_rows(tensors) -> Tensor:
    tensors = list(tensors)
    _require(len(tensors) > 0, "concat_rows", "no inputs")
    tail = tensors[0].shape[1:]
    _require(all(t.shape[1:] == tail for t in tensors), "concat_rows",
             f"trailing shapes differ: {[t.shape for t in tensors]}")
    bounds = np.cumsum([t.shape[0] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=0))

    return _result(np.concatenate([t.data for t in tensors], axis=0), tensors, vjp, "concat_rows")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    _require(int(np.prod(shape)) == a.data.size, "reshape", f"cannot reshape {a.shape} to {shape}")
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    _require(0 <= start <= stop <= a.shape[0], "slice_rows",
             f"rows [{start}:{stop}] out of range for shape {a.shape}")

    def vjp(g):
        full = np.zeros(a.shape)
        full[start:stop] = g
        return (full,)

    return _result(a.data[start:stop], (a,), vjp, "slice_rows")


def take_rows(a: Tensor, index) -> Tensor:
    """Gather rows by integer index (repeats allowed)."""
    index = np.asarray(index, dtype=np.int64)
    _require(index.ndim == 1, "take_rows", f"index must be 1-D, got shape {index.shape}")
    _require(index.size == 0 or (index.min() >= 0 and index.max() < a.shape[0]),
             "take_rows", f"index out of range for {a.shape[0]} rows")

    def vjp(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return _result(a.data[index], (a,), vjp, "take_rows")


def scatter_rows(a: Tensor, index, num_rows: int) -> Tensor:
    """Sum rows of ``a`` into ``num_rows`` buckets: out[index[i]] += a[i]."""
    index = np.asarray(index, dtype=np.int64)
    _require(index.shape == (a.shape[0],), "scatter_rows",
             f"index shape {index.shape} does not match {a.shape[0]} rows")
    _require(index.size == 0 or (index.min() >= 0 and index.max() < num_rows),
             "scatter_rows", f"index out of range for {num_rows} buckets")
    out = np.zeros((num_rows,) + a.shape[1:])
    np.add.at(out, index, a.data)
    return _result(out, (a,), lambda g: (g[index],), "scatter_rows")


def pick(a: Tensor, columns) -> Tensor:
    """Select ``a[i, columns[i]]`` for every row i."""
    columns = np.asarray(columns, dtype=np.int64)
    _require(a.ndim == 2 and columns.shape == (a.shape[0],), "pick",
             f"column index shape {columns.shape} does not match {a.shape}")
    _require(columns.size == 0 or (columns.min() >= 0 and columns.max() < a.shape[1]),
             "pick", f"column index out of range for {a.shape[1]} columns")
    rows = np.arange(a.shape[0])

    def vjp(g):
        full = np.zeros(a.shape)
        full[rows, columns] = g
        return (full,)

    return _result(a.data[rows, columns], (a,), vjp, "pick")


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "hadamard": hadamard,
    "scalar_mul": scalar_mul,
    "concat_lastdim": concat_lastdim,
    "row_sum": row_sum,
    "mean": mean,
    "log": log,
    "exp": exp,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "leaky_relu": leaky_relu,
    "inner_product": inner_product,
    "transpose": transpose,
    "slice_rows": slice_rows,
}


def primitive_forward(op_kind: str, inputs, **options) -> Tensor:
    """Dispatch a primitive by name; ``options`` carries e.g. ``slope`` or row bounds."""
    try:
        fn = PRIMITIVES[op_kind]
    except KeyError:
        raise ContractViolation(f"unknown primitive {op_kind!r}") from None
    if op_kind == "concat_lastdim":
        return fn(inputs, **options)
    return fn(*inputs, **options)


# -- reverse pass -------------------------------------------------------------


def _propagate(loss: Tensor):
    if loss.data.size != 1:
        raise ContractViolation(f"backward: loss must be a scalar, got shape {loss.shape}")
    leaves = {}
    if not loss.requires_grad:
        return {}, leaves
    generation, position = loss.tape_id
    if generation != _tape.generation:
        raise ContractViolation("backward: loss belongs to a tape that was already consumed")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_tape.nodes[: position + 1]):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if parent.tape_id is None:
                leaves[key] = parent
            grads[key] = grads[key] + pg if key in grads else pg
    return grads, leaves


def grad(loss: Tensor, wrt) -> list:
    """Gradients of a scalar ``loss`` with respect to each tensor in ``wrt``."""
    wrt = list(wrt)
    try:
        grads, _ = _propagate(loss)
        return [np.array(grads.get(id(t), np.zeros(t.shape)), dtype=np.float64).reshape(t.shape)
                for t in wrt]
    finally:
        _tape.reset()


def backward(loss: Tensor, params=None) -> dict:
    """Map parameter name -> gradient. Without ``params``, every Parameter reached by the loss."""
    if params is not None:
        params = list(params)
        return {p.name: g for p, g in zip(params, grad(loss, params))}
    try:
        grads, leaves = _propagate(loss)
        return {
            leaf.name: np.array(grads[key]).reshape(leaf.shape)
            for key, leaf in leaves.items()
            if isinstance(leaf, Parameter)
        }
    finally:
        _tape.reset()


# -- optimisation -------------------------------------------------------------


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update. Parameters are reassigned; a new state is returned."""
    t = state.step + 1
    m_new, v_new = dict(state.m), dict(state.v)
    for p in params:
        g = grads.get(p.name)
        if g is None:
            g = np.zeros(p.shape)
        if g.shape != p.shape:
            raise ContractViolation(f"adam_step: gradient shape {g.shape} != parameter {p.name} {p.shape}")
        m = state.m.get(p.name, np.zeros(p.shape))
        v = state.v.get(p.name, np.zeros(p.shape))
        if m.shape != p.shape or v.shape != p.shape:
            raise ContractViolation(f"adam_step: state shape mismatch for {p.name}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.assign(p.data - lr * m_hat / (np.sqrt(v_hat) + eps))
        m_new[p.name], v_new[p.name] = m, v
    return AdamState(m=m_new, v=v_new, step=t)


class Adam:
    """Adam over a fixed parameter group; parameters outside the group are never touched."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self, loss: Tensor) -> dict:
        grads = backward(loss, self.params)
        self.state = adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
        return grads
