"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is built eagerly: each operation returns a new :class:`Tensor` that
remembers its parent tensors and a closure mapping the output gradient to
per-parent gradients. :meth:`Tensor.backward` walks the graph once in reverse
topological order and accumulates gradients on the ``requires_grad`` leaves;
repeated calls without a gradient reset accumulate additively.

Values are kept in 64-bit floats throughout so finite-difference checks are
meaningful; persistence narrows to 32 bits elsewhere.
"""

from __future__ import annotations

import numpy as np

from deltascope.errors import DimensionError, UsageError


class Tensor:
    """An n-dimensional float64 array participating in a computation graph.

    Leaves are created directly (``Tensor(data, requires_grad=True)`` for
    parameters); interior nodes are created by the operations in this
    package. Tensors are immutable after creation except for gradient
    accumulation in :attr:`grad` and in-place parameter updates between
    steps.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, *, op="leaf", parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self.grad = None
        self.op = op
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # reverse-mode sweep
    # ------------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every requires_grad leaf."""
        if self.data.size != 1:
            raise UsageError(f"backward requires a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        flow = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            gout = flow.pop(id(node), None)
            if gout is None:
                continue
            if node.requires_grad and not node._parents:
                node.grad = gout.copy() if node.grad is None else node.grad + gout
            if node._backward is None:
                continue
            for parent, grad in zip(node._parents, node._backward(gout)):
                if grad is None or not parent.requires_grad:
                    continue
                have = flow.get(id(parent))
                flow[id(parent)] = grad if have is None else have + grad

    # ------------------------------------------------------------------
    # elementwise arithmetic and reductions
    # ------------------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            if other.shape != self.shape:
                raise DimensionError(f"add: shapes {self.shape} and {other.shape} differ")
            return Tensor(self.data + other.data, op="add", parents=(self, other),
                          backward=lambda g: (g, g))
        return Tensor(self.data + float(other), op="add", parents=(self,),
                      backward=lambda g: (g,))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            if other.shape != self.shape:
                raise DimensionError(f"mul: shapes {self.shape} and {other.shape} differ")
            a, b = self.data, other.data
            return Tensor(a * b, op="mul", parents=(self, other),
                          backward=lambda g: (g * b, g * a))
        c = float(other)
        return Tensor(self.data * c, op="mul", parents=(self,),
                      backward=lambda g: (g * c,))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else -float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __pow__(self, exponent):
        k = float(exponent)
        x = self.data
        return Tensor(x ** k, op="pow", parents=(self,),
                      backward=lambda g: (g * k * x ** (k - 1.0),))

    def sum(self):
        shape = self.data.shape
        return Tensor(self.data.sum(), op="sum", parents=(self,),
                      backward=lambda g: (np.full(shape, float(g)),))

    def mean(self):
        return self.sum() * (1.0 / self.data.size)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return Tensor(self.data.reshape(shape), op="reshape", parents=(self,),
                      backward=lambda g: (g.reshape(old),))


def _topological_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order over the parent DAG (parents before consumers)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node._parents)
    return order
