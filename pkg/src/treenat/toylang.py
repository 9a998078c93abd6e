"""Parser for the built-in toy language.

The language is a small C-like notation used to generate self-contained
tree corpora. Its fixed grammar:

    program   := function+
    function  := "fn" IDENT "(" [params] ")" block
    params    := IDENT ("," IDENT)*
    block     := "{" statement* "}"
    statement := "let" IDENT "=" expr ";"
               | IDENT "=" expr ";"
               | "return" [expr] ";"
               | "if" "(" expr ")" block ["else" block]
               | "while" "(" expr ")" block
               | expr ";"
    expr      := or
    or        := and ("||" and)*
    and       := cmp ("&&" cmp)*
    cmp       := sum [("==" | "!=" | "<" | ">" | "<=" | ">=") sum]
    sum       := product (("+" | "-") product)*
    product   := unary (("*" | "/" | "%") unary)*
    unary     := ("-" | "!") unary | primary
    primary   := NUMBER | "true" | "false" | IDENT
               | IDENT "(" [args] ")" | "(" expr ")"
    args      := expr ("," expr)*

Trees are concrete-syntax shaped: every source token (keywords and
punctuation included) becomes a leaf, in source order, so the leaf
sequence of a parse is exactly the token sequence. Inner labels name the
grammar construct: Program, Function, Params, Block, Let, Assign, Return,
If, While, ExprStmt, Or, And, Compare, Sum, Product, Unary, Paren, Call,
Args. Single-alternative chains are collapsed (a bare identifier used as
an expression stays a leaf), so no unary wrapper nodes appear below a
statement.
"""

from .errors import ParseError
from .trees import AstNode, AstTree

KEYWORDS = frozenset({"fn", "let", "return", "if", "else", "while", "true", "false"})

_TWO_CHAR = ("==", "!=", "<=", ">=", "&&", "||")
_ONE_CHAR = frozenset("(){};,=<>+-*/%!")


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind  # "ident" | "number" | "kw" | "op" | "eof"
        self.text = text
        self.line = line
        self.col = col


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        start_col = col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            kind = "kw" if text in KEYWORDS else "ident"
            tokens.append(_Token(kind, text, line, start_col))
            col += j - i
            i = j
        elif ch.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == "." and j + 1 < n and source[j + 1].isdigit():
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            tokens.append(_Token("number", source[i:j], line, start_col))
            col += j - i
            i = j
        elif source[i:i + 2] in _TWO_CHAR:
            tokens.append(_Token("op", source[i:i + 2], line, start_col))
            i += 2
            col += 2
        elif ch in _ONE_CHAR:
            tokens.append(_Token("op", ch, line, start_col))
            i += 1
            col += 1
        else:
            raise ParseError(f"unexpected character {ch!r}", line, start_col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.nodes: list[AstNode] = []

    # -- token helpers -----------------------------------------------------

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "eof":
            raise ParseError(
                f"expected {text!r}, got {tok.text!r or 'end of input'}",
                tok.line, tok.col,
            )
        return self.advance()

    def fail(self, message: str):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.col)

    # -- node builders -----------------------------------------------------

    def leaf(self, tok: _Token) -> int:
        self.nodes.append(AstNode(label=tok.text, parent=None))
        return len(self.nodes) - 1

    def leaf_expect(self, text: str) -> int:
        return self.leaf(self.expect(text))

    def inner(self, label: str, children: list[int]) -> int:
        idx = len(self.nodes)
        self.nodes.append(AstNode(label=label, parent=None, children=children))
        for c in children:
            self.nodes[c].parent = idx
        return idx

    # -- grammar -----------------------------------------------------------

    def program(self) -> int:
        funcs = []
        if self.peek().kind == "eof":
            self.fail("empty input: expected a function definition")
        while self.peek().kind != "eof":
            funcs.append(self.function())
        return self.inner("Program", funcs)

    def function(self) -> int:
        kids = [self.leaf_expect("fn")]
        name = self.peek()
        if name.kind != "ident":
            self.fail(f"expected function name, got {name.text!r}")
        kids.append(self.leaf(self.advance()))
        kids.append(self.leaf_expect("("))
        if self.peek().text != ")":
            kids.append(self.params())
        kids.append(self.leaf_expect(")"))
        kids.append(self.block())
        return self.inner("Function", kids)

    def params(self) -> int:
        kids = []
        while True:
            tok = self.peek()
            if tok.kind != "ident":
                self.fail(f"expected parameter name, got {tok.text!r}")
            kids.append(self.leaf(self.advance()))
            if self.peek().text == ",":
                kids.append(self.leaf(self.advance()))
            else:
                break
        return self.inner("Params", kids)

    def block(self) -> int:
        kids = [self.leaf_expect("{")]
        while self.peek().text != "}" and self.peek().kind != "eof":
            kids.append(self.statement())
        kids.append(self.leaf_expect("}"))
        return self.inner("Block", kids)

    def statement(self) -> int:
        tok = self.peek()
        if tok.text == "let":
            kids = [self.leaf(self.advance())]
            name = self.peek()
            if name.kind != "ident":
                self.fail(f"expected name after 'let', got {name.text!r}")
            kids.append(self.leaf(self.advance()))
            kids.append(self.leaf_expect("="))
            kids.append(self.expr())
            kids.append(self.leaf_expect(";"))
            return self.inner("Let", kids)
        if tok.text == "return":
            kids = [self.leaf(self.advance())]
            if self.peek().text != ";":
                kids.append(self.expr())
            kids.append(self.leaf_expect(";"))
            return self.inner("Return", kids)
        if tok.text == "if":
            kids = [self.leaf(self.advance()), self.leaf_expect("(")]
            kids.append(self.expr())
            kids.append(self.leaf_expect(")"))
            kids.append(self.block())
            if self.peek().text == "else":
                kids.append(self.leaf(self.advance()))
                kids.append(self.block())
            return self.inner("If", kids)
        if tok.text == "while":
            kids = [self.leaf(self.advance()), self.leaf_expect("(")]
            kids.append(self.expr())
            kids.append(self.leaf_expect(")"))
            kids.append(self.block())
            return self.inner("While", kids)
        if tok.kind == "ident" and self.peek(1).text == "=" and self.peek(1).kind == "op":
            kids = [self.leaf(self.advance()), self.leaf(self.advance())]
            kids.append(self.expr())
            kids.append(self.leaf_expect(";"))
            return self.inner("Assign", kids)
        kids = [self.expr(), self.leaf_expect(";")]
        return self.inner("ExprStmt", kids)

    def expr(self) -> int:
        return self._binary(0)

    _LEVELS = (
        ("Or", ("||",)),
        ("And", ("&&",)),
        ("Compare", ("==", "!=", "<", ">", "<=", ">=")),
        ("Sum", ("+", "-")),
        ("Product", ("*", "/", "%")),
    )

    def _binary(self, level: int) -> int:
        if level >= len(self._LEVELS):
            return self.unary()
        label, ops = self._LEVELS[level]
        node = self._binary(level + 1)
        while self.peek().kind == "op" and self.peek().text in ops:
            op_leaf = self.leaf(self.advance())
            rhs = self._binary(level + 1)
            node = self.inner(label, [node, op_leaf, rhs])
            if label == "Compare":
                break  # comparisons do not chain
        return node

    def unary(self) -> int:
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("-", "!"):
            op_leaf = self.leaf(self.advance())
            operand = self.unary()
            return self.inner("Unary", [op_leaf, operand])
        return self.primary()

    def primary(self) -> int:
        tok = self.peek()
        if tok.kind == "number" or tok.text in ("true", "false"):
            return self.leaf(self.advance())
        if tok.kind == "ident":
            if self.peek(1).text == "(":
                kids = [self.leaf(self.advance()), self.leaf(self.advance())]
                if self.peek().text != ")":
                    kids.append(self.args())
                kids.append(self.leaf_expect(")"))
                return self.inner("Call", kids)
            return self.leaf(self.advance())
        if tok.text == "(":
            kids = [self.leaf(self.advance()), self.expr(), self.leaf_expect(")")]
            return self.inner("Paren", kids)
        self.fail(f"expected an expression, got {tok.text!r or 'end of input'}")


def parse_toy(source: str, source_id: str = "") -> AstTree:
    """Parse toy-language source into a concrete-syntax-shaped tree.

    Raises ParseError (with line and column) on malformed input, including
    empty input. Deterministic: identical source yields an identical tree.
    """
    parser = _Parser(_tokenize(source))
    root = parser.program()
    tree = AstTree(nodes=parser.nodes, root=root, source_id=source_id)
    tree.validate()
    return tree
