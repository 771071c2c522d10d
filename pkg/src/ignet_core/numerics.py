"""
Dense float64 arrays with tape-based reverse-mode differentiation.

Operations accept ``Var`` nodes, numpy arrays or Python scalars. A result is
recorded on the active tape only when a tape is active and at least one
operand is tracked by it; everything else is plain numpy evaluation.
"""

import threading
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NotScalarError, ShapeError

ArrayLike = Union["Var", np.ndarray, float, int]
VJP = Callable[[np.ndarray], np.ndarray]

# magnitude past which a training loss counts as diverged
LOSS_LIMIT = 1e6

_state = threading.local()


def _stack() -> List[Optional["Tape"]]:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape() -> Optional["Tape"]:
    """Tape currently recording on this thread, if any"""
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of primitive operations.

    Nodes are appended in evaluation order, so the list is already a
    topological order for the backward sweep.
    """

    def __init__(self):
        self.nodes: List["Var"] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack().pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def watch(self, value: ArrayLike, name: Optional[str] = None) -> "Var":
        """Create a leaf node tracked by this tape"""
        data = _as_array(value).copy()
        node = Var(data, tape=self, name=name)
        self.nodes.append(node)
        return node


@contextmanager
def no_tape() -> Iterator[None]:
    """Evaluate without recording, even inside an outer tape"""
    _stack().append(None)
    try:
        yield
    finally:
        _stack().pop()


class Var:
    """Array value plus the closures needed to push gradients to its parents"""

    __slots__ = ("data", "tape", "parents", "name")
    __array_priority__ = 100.0

    def __init__(
        self,
        data: np.ndarray,
        tape: Optional[Tape] = None,
        parents: Tuple[Tuple["Var", VJP], ...] = (),
        name: Optional[str] = None,
    ):
        self.data = data
        self.tape = tape
        self.parents = parents
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.shape}, tracked={self.tracked})"

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
        if isinstance(other, Var):
            raise TypeError("division by a node is not supported")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def _as_array(value: ArrayLike) -> np.ndarray:
    if isinstance(value, Var):
        return value.data
    return np.asarray(value, dtype=np.float64)


def value_of(value: ArrayLike) -> np.ndarray:
    """Plain numpy value of a node, array or scalar"""
    return _as_array(value)


def _node(value: ArrayLike) -> Var:
    if isinstance(value, Var):
        return value
    return Var(np.asarray(value, dtype=np.float64))


def _result(data: np.ndarray, parents: Sequence[Tuple[Var, VJP]]) -> Var:
    tape = active_tape()
    live = tuple((p, fn) for p, fn in parents if tape is not None and p.tape is tape)
    if not live:
        return Var(data)
    out = Var(data, tape=tape, parents=live)
    tape.nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -----------------------------------------------------------------------------
# Primitives
# -----------------------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = _node(a), _node(b)
    return _result(
        a.data + b.data,
        [
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(g, b.shape)),
        ],
    )


def sub(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = _node(a), _node(b)
    return _result(
        a.data - b.data,
        [
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: -_unbroadcast(g, b.shape)),
        ],
    )


def mul(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = _node(a), _node(b)
    return _result(
        a.data * b.data,
        [
            (a, lambda g: _unbroadcast(g * b.data, a.shape)),
            (b, lambda g: _unbroadcast(g * a.data, b.shape)),
        ],
    )


def matmul(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = _node(a), _node(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _result(
        a.data @ b.data,
        [(a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g)],
    )


def tanh(x: ArrayLike) -> Var:
    x = _node(x)
    y = np.tanh(x.data)
    return _result(y, [(x, lambda g: g * (1.0 - y * y))])


def exp(x: ArrayLike) -> Var:
    x = _node(x)
    y = np.exp(x.data)
    return _result(y, [(x, lambda g: g * y)])


def log(x: ArrayLike) -> Var:
    x = _node(x)
    return _result(np.log(x.data), [(x, lambda g: g / x.data)])


def reduce_sum(x: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Var:
    x = _node(x)
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, x.shape).copy()

    return _result(np.asarray(y), [(x, vjp)])


def mean(x: ArrayLike, axis: Optional[int] = None) -> Var:
    x = _node(x)
    count = x.data.size if axis is None else x.shape[axis]
    return mul(reduce_sum(x, axis=axis), 1.0 / max(count, 1))


def dot(a: ArrayLike, b: ArrayLike) -> Var:
    return reduce_sum(mul(a, b))


def reshape(x: ArrayLike, shape: Tuple[int, ...]) -> Var:
    x = _node(x)
    return _result(x.data.reshape(shape), [(x, lambda g: g.reshape(x.shape))])


def take(x: ArrayLike, indices: Sequence[int], axis: int = 0) -> Var:
    """Gather slices along ``axis``; repeated indices accumulate gradient"""
    x = _node(x)
    idx = np.asarray(indices, dtype=np.int64)

    def vjp(g):
        out = np.zeros_like(x.data)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return out

    return _result(np.take(x.data, idx, axis=axis), [(x, vjp)])


def pick(x: ArrayLike, columns: Sequence[int]) -> Var:
    """Row-wise selection ``x[i, columns[i]]`` of a 2-D node"""
    x = _node(x)
    cols = np.asarray(columns, dtype=np.int64)
    rows = np.arange(x.shape[0])

    def vjp(g):
        out = np.zeros_like(x.data)
        out[rows, cols] = g
        return out

    return _result(x.data[rows, cols], [(x, vjp)])


def logsumexp(x: ArrayLike, axis: int = -1) -> Var:
    """Overflow-safe log-sum-exp along ``axis`` (axis removed)"""
    x = _node(x)
    m = x.data.max(axis=axis, keepdims=True)
    shifted = np.exp(x.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    y = (np.log(total) + m).squeeze(axis)
    weights = shifted / total
    return _result(y, [(x, lambda g: np.expand_dims(g, axis) * weights)])


def softmax(x: ArrayLike, axis: int = -1) -> Var:
    x = _node(x)
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return s * (g - (g * s).sum(axis=axis, keepdims=True))

    return _result(s, [(x, vjp)])


def log_softmax(x: ArrayLike, axis: int = -1) -> Var:
    x = _node(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    s = np.exp(y)

    def vjp(g):
        return g - s * g.sum(axis=axis, keepdims=True)

    return _result(y, [(x, vjp)])


def l2_normalize(x: ArrayLike, axis: int = -1, eps: float = 1e-12) -> Var:
    x = _node(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    norm = np.maximum(norm, eps)
    y = x.data / norm

    def vjp(g):
        return (g - y * (g * y).sum(axis=axis, keepdims=True)) / norm

    return _result(y, [(x, vjp)])


def kl_rows(log_p: ArrayLike, log_q: ArrayLike) -> Var:
    """Row-wise KL(p || q) from log-probabilities, summed over the last axis"""
    p = exp(log_p)
    return reduce_sum(mul(p, sub(log_p, log_q)), axis=-1)


# -----------------------------------------------------------------------------
# Parameters and gradients
# -----------------------------------------------------------------------------


class ParamVector(Mapping[str, Any]):
    """Named map from layer identifier to array (or tracked leaf node)"""

    def __init__(self, items: Optional[Mapping[str, Any]] = None):
        self._items: Dict[str, Any] = dict(items or {})

    def __getitem__(self, name: str):
        return self._items[name]

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __repr__(self) -> str:
        shapes = ", ".join(f"{k}{tuple(np.shape(value_of(v)))}" for k, v in self._items.items())
        return f"ParamVector({shapes})"

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {k: tuple(np.shape(value_of(v))) for k, v in self._items.items()}

    def compatible(self, other: "ParamVector") -> bool:
        return self.shapes() == other.shapes()

    def check_compatible(self, other: "ParamVector"):
        mine, theirs = self.shapes(), other.shapes()
        for name in sorted(set(mine) | set(theirs)):
            if mine.get(name) != theirs.get(name):
                raise ShapeError(
                    f"shape {mine.get(name)} does not match {theirs.get(name)}",
                    layer=name,
                )

    def arrays(self) -> "ParamVector":
        """Detached float64 copies of every entry"""
        return ParamVector(
            {k: np.array(value_of(v), dtype=np.float64) for k, v in self._items.items()}
        )

    def frozen(self) -> "ParamVector":
        out = self.arrays()
        for value in out.values():
            value.flags.writeable = False
        return out

    def track(self, tape: Optional[Tape] = None) -> "ParamVector":
        """Leaf nodes for every entry on ``tape`` (default: the active tape)"""
        tape = tape or active_tape()
        if tape is None:
            raise RuntimeError("no active tape to track parameters on")
        return ParamVector({k: tape.watch(v, name=k) for k, v in self._items.items()})

    def axpy(self, scale: float, other: "ParamVector") -> "ParamVector":
        """``self + scale * other`` entrywise"""
        self.check_compatible(other)
        return ParamVector(
            {k: value_of(v) + scale * value_of(other[k]) for k, v in self._items.items()}
        )

    def prefixed(self, prefix: str) -> "ParamVector":
        return ParamVector({f"{prefix}{k}": v for k, v in self._items.items()})

    def select(self, prefix: str) -> "ParamVector":
        """Entries starting with ``prefix``, with the prefix stripped"""
        return ParamVector(
            {k[len(prefix):]: v for k, v in self._items.items() if k.startswith(prefix)}
        )

    def merged(self, other: "ParamVector") -> "ParamVector":
        overlap = set(self._items) & set(other)
        if overlap:
            raise ShapeError(f"duplicate parameter names {sorted(overlap)}")
        return ParamVector({**self._items, **dict(other.items())})

    def count(self) -> int:
        return int(sum(np.size(value_of(v)) for v in self._items.values()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(value_of(v))) for v in self._items.values())

    @classmethod
    def init_mlp(
        cls, rng: np.random.Generator, layer_sizes: Sequence[int], prefix: str = ""
    ) -> "ParamVector":
        """Glorot-uniform weights and zero biases for an MLP"""
        items = {}
        for i, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            limit = np.sqrt(6.0 / (n_in + n_out))
            items[f"{prefix}l{i}.w"] = rng.uniform(-limit, limit, size=(n_in, n_out))
            items[f"{prefix}l{i}.b"] = np.zeros(n_out)
        return cls(items)


def mlp_forward(
    params: Mapping[str, Any],
    input: ArrayLike,
    spec: Sequence[int],
    prefix: str = "",
) -> Var:
    """Tanh MLP with a linear final layer.

    Layer ``i`` reads ``{prefix}l{i}.w`` of shape (in, out) and
    ``{prefix}l{i}.b`` of shape (out,).
    """
    h = _node(input)
    if h.shape[-1] != spec[0]:
        raise ShapeError(
            f"input last axis {h.shape[-1]} does not match layer size {spec[0]}",
            layer=f"{prefix}l0",
        )
    n_layers = len(spec) - 1
    for i in range(n_layers):
        layer = f"{prefix}l{i}"
        try:
            w, b = params[f"{layer}.w"], params[f"{layer}.b"]
        except KeyError:
            raise ShapeError("missing weights or bias", layer=layer) from None
        if np.shape(value_of(w)) != (spec[i], spec[i + 1]):
            raise ShapeError(
                f"weight shape {np.shape(value_of(w))} != {(spec[i], spec[i + 1])}",
                layer=layer,
            )
        if np.shape(value_of(b)) != (spec[i + 1],):
            raise ShapeError(f"bias shape {np.shape(value_of(b))}", layer=layer)
        h = add(matmul(h, w), b)
        if i < n_layers - 1:
            h = tanh(h)
    return h


def grad(root: Var, leaves: Mapping[str, Var]) -> ParamVector:
    """Gradient of the scalar ``root`` with respect to every leaf.

    Leaves that do not influence ``root`` get zero gradients.
    """
    if np.size(root.data) != 1:
        raise NotScalarError(f"gradient root must be scalar, got shape {root.shape}")
    adjoint: Dict[int, np.ndarray] = {}
    if root.tape is not None:
        adjoint[id(root)] = np.ones_like(root.data)
        nodes = root.tape.nodes
        stop = len(nodes)
        for i, node in enumerate(nodes):
            if node is root:
                stop = i + 1
                break
        for node in reversed(nodes[:stop]):
            g = adjoint.get(id(node))
            if g is None or not node.parents:
                continue
            for parent, vjp in node.parents:
                contribution = vjp(g)
                if id(parent) in adjoint:
                    adjoint[id(parent)] = adjoint[id(parent)] + contribution
                else:
                    adjoint[id(parent)] = contribution
    return ParamVector(
        {
            name: np.array(adjoint.get(id(leaf), np.zeros_like(value_of(leaf))), dtype=np.float64)
            for name, leaf in leaves.items()
        }
    )


def runaway(value: float, limit: float = LOSS_LIMIT) -> bool:
    """True for a loss that is non-finite or larger than ``limit`` in magnitude"""
    return not np.isfinite(value) or abs(value) > limit
