"""Tokenizer and recursive-descent parser for the heuristic language.

Grammar:
    program := "fn" IDENT "(" params ")" block
    params  := IDENT {"," IDENT}
    block   := "{" {stmt} "}"
    stmt    := "let" IDENT "=" expr ";"
             | IDENT "=" expr ";"
             | IDENT "[" expr {"," expr} "]" "=" expr ";"
             | "for" IDENT "in" expr ".." expr block
             | "if" expr block ["else" block]
             | "return" expr ";"
    expr    := precedence (tightest first): unary - and ! ; ^ (right assoc);
               * / % ; + - ; < <= > >= == != ; && ; || (all left assoc)
    atom    := NUMBER | IDENT | IDENT "(" [expr {"," expr}] ")"
             | IDENT "[" expr {"," expr} "]" | "(" expr ")"

Comments run from "#" to end of line. Whitespace is insignificant. Parsing is
deterministic; any out-of-grammar input raises ParseError with position and the
expected-token set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError
from .nodes import NodeKind, SyntaxTree

KEYWORDS = frozenset({"fn", "let", "for", "in", "if", "else", "return"})

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\r\n]+)
    | (?P<comment>\#[^\n]*)
    | (?P<number>\d+(\.\d+)?([eE][+-]?\d+)?)
    | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<op>\.\.|&&|\|\||<=|>=|==|!=|[+\-*/%^<>!=;,(){}\[\]])
    """,
    re.VERBOSE,
)

MAX_NESTING_DEPTH = 200


@dataclass(frozen=True)
class Token:
    kind: str  # "number", "ident", keyword text, or the operator symbol itself
    text: str
    line: int
    column: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, col)
        text = m.group(0)
        if m.lastgroup == "number":
            tokens.append(Token("number", text, line, col))
        elif m.lastgroup == "ident":
            kind = text if text in KEYWORDS else "ident"
            tokens.append(Token(kind, text, line, col))
        elif m.lastgroup == "op":
            tokens.append(Token(text, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.depth = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"unexpected token {tok.text!r}", tok.line, tok.column,
                             expected=(kind,))
        return self.advance()

    def fail(self, expected: tuple[str, ...]) -> ParseError:
        tok = self.peek()
        return ParseError(f"unexpected token {tok.text!r}", tok.line, tok.column,
                          expected=expected)

    def _enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_NESTING_DEPTH:
            tok = self.peek()
            raise ParseError("expression nested too deeply", tok.line, tok.column)

    def _leave(self) -> None:
        self.depth -= 1

    # --- grammar productions -------------------------------------------------

    def program(self) -> SyntaxTree:
        self.expect("fn")
        name = self.expect("ident").text
        self.expect("(")
        params = [SyntaxTree(NodeKind.PARAM, self.expect("ident").text)]
        while self.peek().kind == ",":
            self.advance()
            params.append(SyntaxTree(NodeKind.PARAM, self.expect("ident").text))
        self.expect(")")
        body = self.block()
        if not body:
            tok = self.peek()
            raise ParseError("function body has no statements", tok.line, tok.column)
        self.expect("eof")
        return SyntaxTree(NodeKind.PROGRAM, name, tuple(params) + tuple(body))

    def block(self) -> list[SyntaxTree]:
        self.expect("{")
        stmts: list[SyntaxTree] = []
        while self.peek().kind != "}":
            stmts.append(self.stmt())
        self.expect("}")
        return stmts

    def stmt(self) -> SyntaxTree:
        tok = self.peek()
        if tok.kind == "let":
            self.advance()
            name = self.expect("ident").text
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return SyntaxTree(NodeKind.LET, name, (value,))
        if tok.kind == "return":
            self.advance()
            value = self.expr()
            self.expect(";")
            return SyntaxTree(NodeKind.RETURN, None, (value,))
        if tok.kind == "for":
            self.advance()
            var = self.expect("ident").text
            self.expect("in")
            lo = self.expr()
            self.expect("..")
            hi = self.expr()
            body = self.block()
            return SyntaxTree(NodeKind.FOR, var, (lo, hi) + tuple(body))
        if tok.kind == "if":
            self.advance()
            cond = self.expr()
            then_stmts = self.block()
            if self.peek().kind == "else":
                self.advance()
                else_stmts = self.block()
                return SyntaxTree(NodeKind.IF, str(len(then_stmts)),
                                  (cond,) + tuple(then_stmts) + tuple(else_stmts))
            return SyntaxTree(NodeKind.IF, None, (cond,) + tuple(then_stmts))
        if tok.kind == "ident":
            name = self.advance().text
            nxt = self.peek()
            if nxt.kind == "=":
                self.advance()
                value = self.expr()
                self.expect(";")
                return SyntaxTree(NodeKind.ASSIGN, name, (value,))
            if nxt.kind == "[":
                self.advance()
                indices = [self.expr()]
                while self.peek().kind == ",":
                    self.advance()
                    indices.append(self.expr())
                self.expect("]")
                self.expect("=")
                value = self.expr()
                self.expect(";")
                return SyntaxTree(NodeKind.INDEX_ASSIGN, name, tuple(indices) + (value,))
            raise self.fail(("=", "["))
        raise self.fail(("let", "return", "for", "if", "ident", "}"))

    def expr(self) -> SyntaxTree:
        self._enter()
        try:
            return self.or_expr()
        finally:
            self._leave()

    def or_expr(self) -> SyntaxTree:
        node = self.and_expr()
        while self.peek().kind == "||":
            self.advance()
            node = SyntaxTree(NodeKind.BINARY, "||", (node, self.and_expr()))
        return node

    def and_expr(self) -> SyntaxTree:
        node = self.cmp_expr()
        while self.peek().kind == "&&":
            self.advance()
            node = SyntaxTree(NodeKind.BINARY, "&&", (node, self.cmp_expr()))
        return node

    def cmp_expr(self) -> SyntaxTree:
        node = self.add_expr()
        while self.peek().kind in ("<", "<=", ">", ">=", "==", "!="):
            op = self.advance().text
            node = SyntaxTree(NodeKind.BINARY, op, (node, self.add_expr()))
        return node

    def add_expr(self) -> SyntaxTree:
        node = self.mul_expr()
        while self.peek().kind in ("+", "-"):
            op = self.advance().text
            node = SyntaxTree(NodeKind.BINARY, op, (node, self.mul_expr()))
        return node

    def mul_expr(self) -> SyntaxTree:
        node = self.pow_expr()
        while self.peek().kind in ("*", "/", "%"):
            op = self.advance().text
            node = SyntaxTree(NodeKind.BINARY, op, (node, self.pow_expr()))
        return node

    def pow_expr(self) -> SyntaxTree:
        node = self.unary_expr()
        if self.peek().kind == "^":
            self.advance()
            return SyntaxTree(NodeKind.BINARY, "^", (node, self.pow_expr()))
        return node

    def unary_expr(self) -> SyntaxTree:
        self._enter()
        try:
            tok = self.peek()
            if tok.kind in ("-", "!"):
                self.advance()
                return SyntaxTree(NodeKind.UNARY, tok.text, (self.unary_expr(),))
            return self.atom()
        finally:
            self._leave()

    def atom(self) -> SyntaxTree:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return SyntaxTree(NodeKind.NUM_LIT, tok.text)
        if tok.kind == "ident":
            name = self.advance().text
            nxt = self.peek()
            if nxt.kind == "(":
                self.advance()
                args: list[SyntaxTree] = []
                if self.peek().kind != ")":
                    args.append(self.expr())
                    while self.peek().kind == ",":
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                return SyntaxTree(NodeKind.CALL, name, tuple(args))
            if nxt.kind == "[":
                self.advance()
                indices = [self.expr()]
                while self.peek().kind == ",":
                    self.advance()
                    indices.append(self.expr())
                self.expect("]")
                return SyntaxTree(NodeKind.INDEX, name, tuple(indices))
            return SyntaxTree(NodeKind.IDENT, name)
        if tok.kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise self.fail(("number", "ident", "("))


def parse(source: str) -> SyntaxTree:
    """Parse DSL source into its unique syntax tree."""
    if not source or not source.strip():
        raise ParseError("empty source", 1, 1, expected=("fn",))
    return _Parser(tokenize(source)).program()
