"""Scalar reverse-mode differentiation with a stop-gradient primitive.

Every operation records the local derivative with respect to each of its
arguments at construction time, so ``backward`` is a single sweep over the
graph in reverse topological order.

    >>> x, y = leaf(2.0), leaf(3.0)
    >>> backward(x * y, [x, y])
    [3.0, 2.0]
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence, Union

__all__ = [
    "Node",
    "TapeError",
    "DomainError",
    "leaf",
    "const",
    "apply",
    "detach",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "power",
    "exp",
    "log",
    "sqrt",
    "sin",
    "arcsin",
    "arctan",
    "absolute",
    "minimum",
    "maximum",
    "square",
    "OPS",
]


class TapeError(ValueError):
    """Misuse of the tape (bad arity, unknown op, node not on tape)."""


class DomainError(TapeError):
    """An argument falls outside the domain of the requested operation."""


class Node:
    """One scalar value on a differentiation tape.

    ``parents`` holds ``(node, local_derivative)`` pairs. A node with
    ``detached`` set keeps its parents (so the graph stays connected for
    reachability checks) but never forwards adjoint to them.
    """

    __slots__ = ("value", "adjoint", "parents", "detached", "op")

    def __init__(
        self,
        value: float,
        parents: Sequence[tuple["Node", float]] = (),
        op: str = "leaf",
        detached: bool = False,
    ) -> None:
        self.value = float(value)
        self.adjoint = 0.0
        self.parents = tuple(parents)
        self.detached = detached
        self.op = op

    def __repr__(self) -> str:
        flag = ", detached" if self.detached else ""
        return f"Node({self.op}, value={self.value!r}, adjoint={self.adjoint!r}{flag})"

    # arithmetic sugar; every path goes through ``apply``
    def __add__(self, other: Operand) -> "Node":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Node":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Node":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Node":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Node":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Node":
        return mul(other, self)

    def __truediv__(self, other: Operand) -> "Node":
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> "Node":
        return div(other, self)

    def __neg__(self) -> "Node":
        return mul(self, -1.0)

    def __pow__(self, exponent: float) -> "Node":
        if isinstance(exponent, Node):
            raise TapeError("pow takes a constant exponent; compose exp(b * log(a)) instead")
        return power(self, exponent)


Operand = Union[Node, float, int]


def leaf(value: float) -> Node:
    """Create a parentless input node."""
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"leaf value must be finite, got {value!r}")
    return Node(value)


def const(value: float) -> Node:
    node = leaf(value)
    node.op = "const"
    return node


def _as_node(x: Operand) -> Node:
    return x if isinstance(x, Node) else const(x)


def _tie_split(a: float, b: float, first_wins_when: bool) -> tuple[float, float]:
    # exact ties share the derivative evenly: the mean of the one-sided slopes
    if a == b:
        return 0.5, 0.5
    return (1.0, 0.0) if first_wins_when else (0.0, 1.0)


def _add(a: float, b: float):
    return a + b, (1.0, 1.0)


def _sub(a: float, b: float):
    return a - b, (1.0, -1.0)


def _mul(a: float, b: float):
    return a * b, (b, a)


def _div(a: float, b: float):
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b, (1.0 / b, -a / (b * b))


def _exp(a: float):
    try:
        v = math.exp(a)
    except OverflowError:
        raise DomainError(f"exp overflow at {a!r}") from None
    return v, (v,)


def _log(a: float):
    if a <= 0.0:
        raise DomainError(f"log requires a positive argument, got {a!r}")
    return math.log(a), (1.0 / a,)


def _sqrt(a: float):
    if a < 0.0:
        raise DomainError(f"sqrt requires a non-negative argument, got {a!r}")
    if a == 0.0:
        # subgradient convention, same as abs at 0
        return 0.0, (0.0,)
    v = math.sqrt(a)
    return v, (0.5 / v,)


def _sin(a: float):
    return math.sin(a), (math.cos(a),)


def _arcsin(a: float):
    if not -1.0 <= a <= 1.0:
        raise DomainError(f"arcsin requires an argument in [-1, 1], got {a!r}")
    if abs(a) == 1.0:
        raise DomainError("arcsin is not differentiable at +-1")
    return math.asin(a), (1.0 / math.sqrt(1.0 - a * a),)


def _arctan(a: float):
    return math.atan(a), (1.0 / (1.0 + a * a),)


def _abs(a: float):
    if a > 0.0:
        return a, (1.0,)
    if a < 0.0:
        return -a, (-1.0,)
    return 0.0, (0.0,)


def _min(a: float, b: float):
    return (a if a <= b else b), _tie_split(a, b, a < b)


def _max(a: float, b: float):
    return (a if a >= b else b), _tie_split(a, b, a > b)


def _square(a: float):
    return a * a, (2.0 * a,)


OPS: dict[str, tuple[int, Callable]] = {
    "add": (2, _add),
    "sub": (2, _sub),
    "mul": (2, _mul),
    "div": (2, _div),
    "exp": (1, _exp),
    "ln": (1, _log),
    "sqrt": (1, _sqrt),
    "sin": (1, _sin),
    "arcsin": (1, _arcsin),
    "arctan": (1, _arctan),
    "abs": (1, _abs),
    "min": (2, _min),
    "max": (2, _max),
    "square": (1, _square),
}


def apply(op: str, *args: Operand, exponent: float | None = None) -> Node:
    """Apply a named operation to nodes (plain numbers become constants).

    ``pow`` is constant-exponent only and takes ``exponent=``.
    """
    nodes = [_as_node(a) for a in args]
    if op == "pow":
        if len(nodes) != 1 or exponent is None:
            raise TapeError("pow takes one node argument and a constant exponent=")
        return _pow(nodes[0], float(exponent))
    try:
        arity, fn = OPS[op]
    except KeyError:
        raise TapeError(f"unknown op {op!r}") from None
    if len(nodes) != arity:
        raise TapeError(f"{op} takes {arity} argument(s), got {len(nodes)}")
    value, local = fn(*(n.value for n in nodes))
    if not math.isfinite(value):
        raise DomainError(f"{op} produced a non-finite value from {[n.value for n in nodes]}")
    return Node(value, tuple(zip(nodes, local)), op)


def _pow(base: Node, p: float) -> Node:
    a = base.value
    if p == 0.0:
        return Node(1.0, ((base, 0.0),), "pow")
    if a < 0.0 and not p.is_integer():
        raise DomainError(f"pow with fractional exponent needs a non-negative base, got {a!r}")
    if a == 0.0 and p < 1.0:
        if p < 0.0:
            raise DomainError("pow of zero with a negative exponent")
        # derivative of a**p at 0 for 0 < p < 1 is unbounded
        raise DomainError(f"pow({a!r}, {p!r}) is not differentiable at 0")
    value = a**p
    return Node(value, ((base, p * a ** (p - 1.0)),), "pow")


def detach(n: Node) -> Node:
    """Same value as ``n``; the gradient stops here."""
    return Node(n.value, ((n, 1.0),), "detach", detached=True)


def add(a: Operand, b: Operand) -> Node:
    return apply("add", a, b)


def sub(a: Operand, b: Operand) -> Node:
    return apply("sub", a, b)


def mul(a: Operand, b: Operand) -> Node:
    return apply("mul", a, b)


def div(a: Operand, b: Operand) -> Node:
    return apply("div", a, b)


def power(a: Operand, exponent: float) -> Node:
    return apply("pow", a, exponent=exponent)


def exp(a: Operand) -> Node:
    return apply("exp", a)


def log(a: Operand) -> Node:
    return apply("ln", a)


def sqrt(a: Operand) -> Node:
    return apply("sqrt", a)


def sin(a: Operand) -> Node:
    return apply("sin", a)


def arcsin(a: Operand) -> Node:
    return apply("arcsin", a)


def arctan(a: Operand) -> Node:
    return apply("arctan", a)


def absolute(a: Operand) -> Node:
    return apply("abs", a)


def minimum(a: Operand, b: Operand) -> Node:
    return apply("min", a, b)


def maximum(a: Operand, b: Operand) -> Node:
    return apply("max", a, b)


def square(a: Operand) -> Node:
    return apply("square", a)


def _topological(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(
    root: Node, wrt: Iterable[Node] | None = None, *, strict: bool = True
) -> list[float] | None:
    """Fill adjoints of every node feeding ``root`` and return those of ``wrt``.

    ``wrt`` may name intermediate nodes as well as leaves. A requested node
    that feeds ``root`` only through a detached node gets 0. One that does not
    feed ``root`` at all raises ``TapeError``, or gets 0 when ``strict`` is off.
    """
    order = _topological(root)
    for node in order:
        node.adjoint = 0.0
    root.adjoint = 1.0
    for node in reversed(order):
        if node.detached or node.adjoint == 0.0:
            continue
        g = node.adjoint
        for parent, local in node.parents:
            parent.adjoint += g * local
    if wrt is None:
        return None
    on_tape = {id(n) for n in order}
    out = []
    for n in wrt:
        if id(n) not in on_tape:
            if strict:
                raise TapeError(f"{n!r} is not on the tape of this root")
            out.append(0.0)
            continue
        out.append(n.adjoint)
    return out
