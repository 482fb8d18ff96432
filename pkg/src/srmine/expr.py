"""Expression trees for symbolic regression: representation, evaluation,
and structural queries (size, depth, variable reference counts).

Trees are immutable after construction.  Variation operators never edit a
tree in place; they rebuild the path from the root to the changed node and
share all untouched subtrees, which makes trees safe to share across
concurrent evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Operator name -> arity.  Arithmetic is deliberately unprotected: division
# by zero, log of non-positives and exp overflow propagate non-finite values
# that the fitness function later maps to 0.
FUNCTIONS: dict[str, int] = {
    "add": 2,
    "sub": 2,
    "mul": 2,
    "div": 2,
    "avg": 2,
    "log": 1,
    "exp": 1,
}

DEFAULT_FUNCTION_SET: tuple[str, ...] = ("add", "sub", "mul", "div", "avg", "log", "exp")


@dataclass(frozen=True)
class Const:
    """Terminal holding a numeric constant."""

    value: float


@dataclass(frozen=True)
class Var:
    """Terminal referencing a dataset column by name."""

    name: str


Symbol = object  # str (operator name) | Const | Var


def arity(symbol) -> int:
    if isinstance(symbol, str):
        return FUNCTIONS[symbol]
    return 0


class Node:
    """One tree node: a symbol plus exactly arity-many children."""

    __slots__ = ("symbol", "children")

    def __init__(self, symbol, children=()):
        self.symbol = symbol
        self.children = list(children)

    def __repr__(self):
        return f"Node({self.symbol!r}, {len(self.children)} children)"


class ExpressionTree:
    """Rooted operator tree with cached size and depth.

    size is the total node count; depth is the longest root-to-leaf path
    counted in nodes (a single leaf has depth 1).
    """

    __slots__ = ("root", "size", "depth", "_var_counts")

    def __init__(self, root: Node):
        self.root = root
        n = 0
        max_depth = 0
        stack = [(root, 1)]
        while stack:
            node, d = stack.pop()
            n += 1
            if d > max_depth:
                max_depth = d
            for child in node.children:
                stack.append((child, d + 1))
        self.size = n
        self.depth = max_depth
        self._var_counts = None

    def nodes(self):
        """All nodes in preorder (node before its children, left to right)."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def nodes_with_depth(self):
        """Preorder (node, depth) pairs; the root has depth 1."""
        stack = [(self.root, 1)]
        while stack:
            node, d = stack.pop()
            yield node, d
            stack.extend((c, d + 1) for c in reversed(node.children))

    def node_at(self, index: int) -> Node:
        for i, node in enumerate(self.nodes()):
            if i == index:
                return node
        raise IndexError(index)

    def depth_at(self, index: int) -> int:
        for i, (_, d) in enumerate(self.nodes_with_depth()):
            if i == index:
                return d
        raise IndexError(index)

    def variable_counts(self) -> dict[str, int]:
        """Reference count per variable name; cached (trees are immutable)."""
        if self._var_counts is None:
            counts: dict[str, int] = {}
            for node in self.nodes():
                sym = node.symbol
                if type(sym) is Var:
                    counts[sym.name] = counts.get(sym.name, 0) + 1
            self._var_counts = counts
        return self._var_counts

    def variables(self) -> set[str]:
        return set(self.variable_counts())

    def __repr__(self):
        return f"ExpressionTree({render_infix(self)})"


def subtree_size(node: Node) -> int:
    n = 0
    stack = [node]
    while stack:
        cur = stack.pop()
        n += 1
        stack.extend(cur.children)
    return n


def replace_at(tree: ExpressionTree, index: int, replacement: Node) -> ExpressionTree:
    """New tree with the preorder-`index` subtree swapped for `replacement`.

    Only the path from the root to the replaced node is rebuilt; every other
    subtree is shared with the input tree.
    """
    if not 0 <= index < tree.size:
        raise IndexError(index)

    def rebuild(node: Node, target: int) -> Node:
        if target == 0:
            return replacement
        offset = 1
        children = list(node.children)
        for ci, child in enumerate(children):
            csize = subtree_size(child)
            if target < offset + csize:
                children[ci] = rebuild(child, target - offset)
                return Node(node.symbol, children)
            offset += csize
        raise IndexError(target)

    return ExpressionTree(rebuild(tree.root, index))


def count_refs(var: str, tree: ExpressionTree) -> int:
    """Number of nodes referencing the variable `var`."""
    n = 0
    for node in tree.nodes():
        sym = node.symbol
        if type(sym) is Var and sym.name == var:
            n += 1
    return n


@dataclass
class EvaluationResult:
    """Per-row outputs plus a flag telling whether all of them are finite."""

    values: np.ndarray
    all_finite: bool


def evaluate(tree: ExpressionTree, dataset, rows: tuple[int, int]) -> EvaluationResult:
    """Evaluate `tree` on the half-open row range `rows` of `dataset`.

    Arithmetic is unprotected: invalid operations yield inf/nan in the
    output and clear the finite flag instead of raising.
    """
    start, stop = rows
    if not (0 <= start < stop <= dataset.n_rows):
        raise ValueError(f"row range [{start}, {stop}) outside dataset bounds or empty")
    env = {}
    for name in tree.variables():
        if name not in dataset.names:
            raise ValueError(f"tree references unknown column {name!r}")
        env[name] = dataset.column(name)[start:stop]
    return evaluate_with_env(tree, env, stop - start)


def evaluate_with_env(tree: ExpressionTree, env: dict[str, np.ndarray], n_rows: int) -> EvaluationResult:
    """Evaluation against pre-sliced column arrays (hot path for the engine)."""
    with np.errstate(all="ignore"):
        out = _eval_node(tree.root, env)
    if np.ndim(out) == 0:
        values = np.full(n_rows, float(out))
    elif out.base is not None or out is env.get(_root_var_name(tree)):
        values = np.array(out)  # never hand back a view of a dataset column
    else:
        values = out
    return EvaluationResult(values, bool(np.isfinite(values).all()))


def _root_var_name(tree):
    sym = tree.root.symbol
    return sym.name if type(sym) is Var else None


def _eval_node(node: Node, env: dict[str, np.ndarray]):
    sym = node.symbol
    tsym = type(sym)
    if tsym is Var:
        return env[sym.name]
    if tsym is Const:
        return np.float64(sym.value)
    ch = node.children
    if sym == "add":
        return _eval_node(ch[0], env) + _eval_node(ch[1], env)
    if sym == "sub":
        return _eval_node(ch[0], env) - _eval_node(ch[1], env)
    if sym == "mul":
        return _eval_node(ch[0], env) * _eval_node(ch[1], env)
    if sym == "div":
        return _eval_node(ch[0], env) / _eval_node(ch[1], env)
    if sym == "avg":
        return (_eval_node(ch[0], env) + _eval_node(ch[1], env)) * 0.5
    if sym == "log":
        return np.log(_eval_node(ch[0], env))
    if sym == "exp":
        return np.exp(_eval_node(ch[0], env))
    raise ValueError(f"unknown symbol {sym!r}")


_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def render_infix(tree: ExpressionTree) -> str:
    """Infix text form of the tree, constants printed at full precision."""
    return _render(tree.root)


def _render(node: Node) -> str:
    sym = node.symbol
    tsym = type(sym)
    if tsym is Var:
        return sym.name
    if tsym is Const:
        return repr(sym.value)
    if sym in _INFIX:
        return f"({_render(node.children[0])} {_INFIX[sym]} {_render(node.children[1])})"
    args = ", ".join(_render(c) for c in node.children)
    return f"{sym}({args})"
