"""Syntax tree for the heuristic language.

Trees are immutable after construction. Each node carries a kind, an optional
lexeme (identifier name, literal text, operator symbol, or builtin name) and an
ordered list of children. Canonical serializations and subtree multisets are
computed lazily and cached, since they are reused heavily by the similarity
machinery.

Node layouts:
  Program      lexeme=function name, children=[Param..., stmt...]
  Param        lexeme=parameter name
  Let/Assign   lexeme=target name, children=[value]
  IndexAssign  lexeme=target name, children=[index..., value]
  For          lexeme=loop variable, children=[lo, hi, body stmt...]
  If           children=[cond, then stmt...] and lexeme=None when there is no
               else branch; with an else branch, lexeme=str(len(then stmts))
               and children=[cond, then stmt..., else stmt...]
  Return       children=[value]
  Binary/Unary lexeme=operator symbol
  Call/Index   lexeme=function/target name, children=arguments/indices
  Ident/NumLit lexeme=name/literal text, no children
"""

from __future__ import annotations

from collections import Counter
from enum import Enum


class NodeKind(Enum):
    PROGRAM = "Program"
    PARAM = "Param"
    LET = "Stmt.Let"
    ASSIGN = "Stmt.Assign"
    INDEX_ASSIGN = "Stmt.IndexAssign"
    FOR = "Stmt.For"
    IF = "Stmt.If"
    RETURN = "Stmt.Return"
    BINARY = "Expr.Binary"
    UNARY = "Expr.Unary"
    CALL = "Expr.Call"
    INDEX = "Expr.Index"
    IDENT = "Expr.Ident"
    NUM_LIT = "Expr.NumLit"


STMT_KINDS = frozenset({
    NodeKind.LET, NodeKind.ASSIGN, NodeKind.INDEX_ASSIGN,
    NodeKind.FOR, NodeKind.IF, NodeKind.RETURN,
})


class SyntaxTree:
    __slots__ = ("kind", "lexeme", "children", "_node_count", "_canonical", "_subtree_counts")

    def __init__(self, kind: NodeKind, lexeme: str | None = None,
                 children: tuple["SyntaxTree", ...] = ()):
        self.kind = kind
        self.lexeme = lexeme
        self.children = tuple(children)
        self._node_count: int | None = None
        self._canonical: str | None = None
        self._subtree_counts: Counter[str] | None = None
        if self.kind in (NodeKind.IDENT, NodeKind.NUM_LIT) and self.children:
            raise ValueError(f"{kind.value} nodes are leaves")

    def __repr__(self) -> str:
        return f"SyntaxTree({self.canonical_key()})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SyntaxTree):
            return NotImplemented
        return (self.kind is other.kind and self.lexeme == other.lexeme
                and self.children == other.children)

    def __hash__(self) -> int:
        return hash((self.kind, self.lexeme, self.children))

    def node_count(self) -> int:
        if self._node_count is None:
            self._node_count = 1 + sum(c.node_count() for c in self.children)
        return self._node_count

    def canonical_key(self) -> str:
        """Unambiguous serialization of the whole subtree rooted here.

        Lexemes never contain '(', ')', '[', ']' or ',', so the encoding is
        injective over trees.
        """
        if self._canonical is None:
            head = self.kind.value
            if self.lexeme is not None:
                head += f"({self.lexeme})"
            if self.children:
                head += "[" + ",".join(c.canonical_key() for c in self.children) + "]"
            self._canonical = head
        return self._canonical

    def subtree_counts(self) -> Counter[str]:
        """Multiset with one entry per node: each node contributes the canonical
        key of the complete subtree rooted at it. Total multiplicity equals the
        node count."""
        if self._subtree_counts is None:
            counts: Counter[str] = Counter()
            stack = [self]
            while stack:
                node = stack.pop()
                counts[node.canonical_key()] += 1
                stack.extend(node.children)
            self._subtree_counts = counts
        return self._subtree_counts

    def walk(self):
        """Yield every node in depth-first pre-order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


def count_subtrees(tree: SyntaxTree) -> Counter[str]:
    return tree.subtree_counts()


def if_branches(node: SyntaxTree) -> tuple[SyntaxTree, list[SyntaxTree], list[SyntaxTree] | None]:
    """Decompose an If node into (condition, then statements, else statements)."""
    if node.kind is not NodeKind.IF:
        raise ValueError("expected an If node")
    cond = node.children[0]
    rest = list(node.children[1:])
    if node.lexeme is None:
        return cond, rest, None
    n_then = int(node.lexeme)
    return cond, rest[:n_then], rest[n_then:]


# Precedence levels, loosest to tightest. Unary operators bind tighter than ^.
PRECEDENCE = {
    "||": 1,
    "&&": 2,
    "<": 3, "<=": 3, ">": 3, ">=": 3, "==": 3, "!=": 3,
    "+": 4, "-": 4,
    "*": 5, "/": 5, "%": 5,
    "^": 6,
}
UNARY_PRECEDENCE = 7
RIGHT_ASSOCIATIVE = frozenset({"^"})


def pretty_print(tree: SyntaxTree) -> str:
    """Render a program back to source. The output reparses to an identical tree
    and serves as the canonical source text for duplicate detection."""
    if tree.kind is not NodeKind.PROGRAM:
        raise ValueError("pretty_print expects a Program root")
    params = [c.lexeme or "" for c in tree.children if c.kind is NodeKind.PARAM]
    body = [c for c in tree.children if c.kind is not NodeKind.PARAM]
    lines = [f"fn {tree.lexeme}({', '.join(params)}) {{"]
    for stmt in body:
        lines.extend(_stmt_lines(stmt, indent=1))
    lines.append("}")
    return "\n".join(lines)


def _stmt_lines(node: SyntaxTree, indent: int) -> list[str]:
    pad = "    " * indent
    if node.kind is NodeKind.LET:
        return [f"{pad}let {node.lexeme} = {_expr(node.children[0])};"]
    if node.kind is NodeKind.ASSIGN:
        return [f"{pad}{node.lexeme} = {_expr(node.children[0])};"]
    if node.kind is NodeKind.INDEX_ASSIGN:
        idx = ", ".join(_expr(c) for c in node.children[:-1])
        return [f"{pad}{node.lexeme}[{idx}] = {_expr(node.children[-1])};"]
    if node.kind is NodeKind.RETURN:
        return [f"{pad}return {_expr(node.children[0])};"]
    if node.kind is NodeKind.FOR:
        lo, hi = node.children[0], node.children[1]
        lines = [f"{pad}for {node.lexeme} in {_expr(lo)}..{_expr(hi)} {{"]
        for stmt in node.children[2:]:
            lines.extend(_stmt_lines(stmt, indent + 1))
        lines.append(f"{pad}}}")
        return lines
    if node.kind is NodeKind.IF:
        cond, then_stmts, else_stmts = if_branches(node)
        lines = [f"{pad}if {_expr(cond)} {{"]
        for stmt in then_stmts:
            lines.extend(_stmt_lines(stmt, indent + 1))
        if else_stmts is not None:
            lines.append(f"{pad}}} else {{")
            for stmt in else_stmts:
                lines.extend(_stmt_lines(stmt, indent + 1))
        lines.append(f"{pad}}}")
        return lines
    raise ValueError(f"not a statement node: {node.kind}")


def _expr(node: SyntaxTree, parent_level: int = 0, parens_if_equal: bool = False) -> str:
    if node.kind in (NodeKind.IDENT, NodeKind.NUM_LIT):
        return node.lexeme or ""
    if node.kind is NodeKind.CALL:
        args = ", ".join(_expr(c) for c in node.children)
        return f"{node.lexeme}({args})"
    if node.kind is NodeKind.INDEX:
        idx = ", ".join(_expr(c) for c in node.children)
        return f"{node.lexeme}[{idx}]"
    if node.kind is NodeKind.UNARY:
        inner = _expr(node.children[0], UNARY_PRECEDENCE)
        text = f"{node.lexeme}{inner}"
        return f"({text})" if parent_level > UNARY_PRECEDENCE else text
    if node.kind is NodeKind.BINARY:
        op = node.lexeme or ""
        level = PRECEDENCE[op]
        if op in RIGHT_ASSOCIATIVE:
            left = _expr(node.children[0], level, parens_if_equal=True)
            right = _expr(node.children[1], level)
        else:
            left = _expr(node.children[0], level)
            right = _expr(node.children[1], level, parens_if_equal=True)
        text = f"{left} {op} {right}"
        needs_parens = level < parent_level or (level == parent_level and parens_if_equal)
        return f"({text})" if needs_parens else text
    raise ValueError(f"not an expression node: {node.kind}")
