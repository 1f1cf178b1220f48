"""
Dense float64 tensors with define-by-run reverse-mode differentiation.

Every differentiable operation creates its result through ``Tensor._from_op``,
which records the inputs and a local backward rule. ``backward(loss)`` builds
a ``ComputationTape`` of everything reachable from the loss, ordered by
creation, and replays the rules in reverse.
"""

import contextlib
import itertools
import threading
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import ContractError, DimensionError, NumericError

_state = threading.local()
_sequence = itertools.count()

BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disables recording on the current thread (inference)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def check_finite(values: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"non-finite value produced by {where}")


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sums a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(value: ArrayLike) -> "Tensor":
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """N-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_rule", "_seq")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, op: str = "leaf"):
        if isinstance(data, Tensor):
            data = data.data
        values = np.array(data, dtype=np.float64)
        check_finite(values, op)
        self.data = values
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(values) if self.requires_grad else None
        self.op = op
        self._parents: Tuple["Tensor", ...] = ()
        self._rule: Optional[BackwardRule] = None
        self._seq = next(_sequence)

    @classmethod
    def _from_op(
        cls, values: np.ndarray, parents: Sequence["Tensor"], rule: BackwardRule, op: str
    ) -> "Tensor":
        out = cls.__new__(cls)
        values = np.asarray(values, dtype=np.float64)
        check_finite(values, op)
        out.data = values
        out.op = op
        out.grad = None
        out._seq = next(_sequence)
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._rule = rule if track else None
        return out

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._rule is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op})"

    def backward(self) -> None:
        backward(self)

    # -- elementwise arithmetic (broadcasting) -------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape

        def rule(g):
            return unbroadcast(g, a_shape), unbroadcast(g, b_shape)

        return Tensor._from_op(self.data + other.data, (self, other), rule, "add")

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data

        def rule(g):
            return unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)

        return Tensor._from_op(a * b, (self, other), rule, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other: Union[float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            raise DimensionError("tensor / tensor is not supported; divide by a scalar")
        return self * (1.0 / float(other))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from numerics.functional import matmul

        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        shape = self.shape

        def rule(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._from_op(self.data[index], (self,), rule, "index")

    # -- shape manipulation -------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            values = self.data.reshape(shape)
        except ValueError as e:
            raise DimensionError(f"cannot reshape {original} to {shape}: {e}")
        return Tensor._from_op(values, (self,), lambda g: (g.reshape(original),), "reshape")

    def transpose(self, *axes: int) -> "Tensor":
        axes = tuple(axes) if axes else tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor._from_op(
            np.transpose(self.data, axes), (self,), lambda g: (np.transpose(g, inverse),), "transpose"
        )

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    # -- reductions -----------------------------------------------------

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def rule(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), rule, "sum")

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / count


class ComputationTape:
    """
    The operations reachable from a root tensor, in recorded (creation) order.

    Parents are always created before their consumers, so replaying the
    entries in reverse visits every consumer of a node before the node itself.
    """

    def __init__(self, root: Tensor):
        self.root = root
        seen = {}
        stack = [root]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen[id(node)] = node
            stack.extend(node._parents)
        self.entries: List[Tensor] = sorted(seen.values(), key=lambda t: t._seq)

    def __len__(self) -> int:
        return len(self.entries)

    def replay(self, seed: np.ndarray) -> None:
        pending = {id(self.root): seed}
        for node in reversed(self.entries):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = node.grad + g if node.grad is not None else g.copy()
                continue
            parent_grads = node._rule(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=np.float64)
                if pg.shape != parent.shape:
                    raise DimensionError(
                        f"backward rule of {node.op} produced gradient {pg.shape} for input {parent.shape}"
                    )
                check_finite(pg, f"backward of {node.op}")
                key = id(parent)
                pending[key] = pending[key] + pg if key in pending else pg


def backward(loss: Tensor) -> None:
    """Populates ``.grad`` on every requires_grad leaf reachable from ``loss``."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    ComputationTape(loss).replay(np.ones_like(loss.data))


