"""Delayed modal mu-calculus formulas: AST, parser, printer and syntactic analyses.

The fragment is propositional modal mu-calculus in positive normal form,
extended with a delay operator ``@`` that reads its subformula through a
one-stage register.  ``<>``/``[]`` are the Kripke modalities; ``@`` is the
pipeline delay.  Negation is restricted to atoms so every connective is
monotone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache


class FormulaError(ValueError):
    """Base class for formula-level errors."""


class ParseError(FormulaError):
    def __init__(self, message, line, column):
        super().__init__(f"line {line} col {column}: {message}")
        self.line = line
        self.column = column


class FreeVariableError(FormulaError):
    pass


class NegationError(FormulaError):
    pass


# ---------------------------------------------------------------------------
# AST nodes.  Frozen dataclasses give structural equality/hashing, which the
# subformula closure relies on for deduplication.

@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    child: Atom


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Diamond:
    child: object


@dataclass(frozen=True)
class Box:
    child: object


@dataclass(frozen=True)
class Delay:
    child: object


@dataclass(frozen=True)
class Mu:
    var: str
    body: object


@dataclass(frozen=True)
class Nu:
    var: str
    body: object


_BINARY = (And, Or)
_UNARY = (Diamond, Box, Delay)
_BINDERS = (Mu, Nu)


def children(node):
    if isinstance(node, _BINARY):
        return (node.left, node.right)
    if isinstance(node, _UNARY):
        return (node.child,)
    if isinstance(node, _BINDERS):
        return (node.body,)
    if isinstance(node, Not):
        return (node.child,)
    return ()


def node_size(node):
    """Syntactic size: node count with multiplicity."""
    return 1 + sum(node_size(c) for c in children(node))


@dataclass(frozen=True)
class Formula:
    """A canonicalized closed formula (unique bound names X0, X1, ...)."""

    root: object

    @property
    def size(self):
        return node_size(self.root)

    def __str__(self):
        return format_formula(self.root)


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"""(?P<WS>[ \t\r\n]+)
      | (?P<AND>/\\)
      | (?P<OR>\\/)
      | (?P<DIAMOND><>)
      | (?P<BOX>\[\])
      | (?P<DELAY>@)
      | (?P<NOT>~)
      | (?P<LP>\()
      | (?P<RP>\))
      | (?P<DOT>\.)
      | (?P<VAR>[A-Z][A-Za-z0-9_]*)
      | (?P<ATOM>[a-z][a-z0-9_]*)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"mu": "MU", "nu": "NU"}


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "ATOM" and lexeme in _KEYWORDS:
            kind = _KEYWORDS[lexeme]
        if kind != "WS":
            tokens.append(_Token(kind, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(_Token("EOF", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, what):
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {what}, found {tok.text or 'end of input'!r}",
                             tok.line, tok.col)
        return self.advance()

    # Binders sit at the lowest precedence level and their scope extends
    # maximally to the right.
    def formula(self, scope):
        tok = self.peek()
        if tok.kind in ("MU", "NU"):
            return self.binder(scope)
        return self.disjunction(scope)

    def binder(self, scope):
        tok = self.advance()
        name = self.expect("VAR", "a bound variable name").text
        self.expect("DOT", "'.' after the bound variable")
        body = self.formula(scope + (name,))
        return Mu(name, body) if tok.kind == "MU" else Nu(name, body)

    def disjunction(self, scope):
        node = self.conjunction(scope)
        while self.peek().kind == "OR":
            self.advance()
            node = Or(node, self.conjunction(scope))
        return node

    def conjunction(self, scope):
        node = self.unary(scope)
        while self.peek().kind == "AND":
            self.advance()
            node = And(node, self.unary(scope))
        return node

    def unary(self, scope):
        tok = self.peek()
        if tok.kind == "DIAMOND":
            self.advance()
            return Diamond(self.unary(scope))
        if tok.kind == "BOX":
            self.advance()
            return Box(self.unary(scope))
        if tok.kind == "DELAY":
            self.advance()
            return Delay(self.unary(scope))
        if tok.kind == "NOT":
            self.advance()
            child = self.unary(scope)
            if not isinstance(child, Atom):
                raise NegationError(
                    f"line {tok.line} col {tok.col}: negation applies to atoms only")
            return Not(child)
        if tok.kind in ("MU", "NU"):
            return self.binder(scope)
        return self.primary(scope)

    def primary(self, scope):
        tok = self.peek()
        if tok.kind == "ATOM":
            self.advance()
            return Atom(tok.text)
        if tok.kind == "VAR":
            self.advance()
            if tok.text not in scope:
                raise FreeVariableError(
                    f"line {tok.line} col {tok.col}: unbound variable {tok.text}")
            return Var(tok.text)
        if tok.kind == "LP":
            self.advance()
            node = self.formula(scope)
            self.expect("RP", "')'")
            return node
        raise ParseError(f"expected a formula, found {tok.text or 'end of input'!r}",
                         tok.line, tok.col)


def _canonicalize(root):
    """Rename bound variables to X0, X1, ... in top-down traversal order."""
    counter = 0

    def walk(node, renaming):
        nonlocal counter
        if isinstance(node, _BINDERS):
            fresh = f"X{counter}"
            counter += 1
            body = walk(node.body, {**renaming, node.var: fresh})
            return type(node)(fresh, body)
        if isinstance(node, Var):
            return Var(renaming[node.name])
        if isinstance(node, _BINARY):
            return type(node)(walk(node.left, renaming), walk(node.right, renaming))
        if isinstance(node, _UNARY):
            return type(node)(walk(node.child, renaming))
        return node

    return walk(root, {})


def parse(text):
    """Parse and canonicalize a formula.

    Raises ParseError with line/column on bad syntax, FreeVariableError on
    unbound variables and NegationError when ~ is applied to a non-atom.
    """
    parser = _Parser(_tokenize(text))
    root = parser.formula(())
    tok = parser.peek()
    if tok.kind != "EOF":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return Formula(_canonicalize(root))


# ---------------------------------------------------------------------------
# Printer

# precedence levels: binder 0 < or 1 < and 2 < unary 3 < atomic 4
def format_formula(node, ctx=0):
    if isinstance(node, _BINDERS):
        kw = "mu" if isinstance(node, Mu) else "nu"
        s = f"{kw} {node.var}. {format_formula(node.body, 0)}"
        return f"({s})" if ctx > 0 else s
    if isinstance(node, Or):
        s = f"{format_formula(node.left, 1)} \\/ {format_formula(node.right, 2)}"
        return f"({s})" if ctx > 1 else s
    if isinstance(node, And):
        s = f"{format_formula(node.left, 2)} /\\ {format_formula(node.right, 3)}"
        return f"({s})" if ctx > 2 else s
    if isinstance(node, Diamond):
        return f"<>{format_formula(node.child, 3)}"
    if isinstance(node, Box):
        return f"[]{format_formula(node.child, 3)}"
    if isinstance(node, Delay):
        return f"@{format_formula(node.child, 3)}"
    if isinstance(node, Not):
        return f"~{node.child.name}"
    if isinstance(node, Atom):
        return node.name
    if isinstance(node, Var):
        return node.name
    raise TypeError(f"not a formula node: {node!r}")


# ---------------------------------------------------------------------------
# Subformula closure

KIND_MU = "mu-latch"
KIND_NU = "nu-latch"
KIND_PIPELINE = "pipeline"
KIND_COMB = "comb"


@dataclass(frozen=True)
class SubformulaClosure:
    """Distinct subformulas in fixed top-down, left-to-right first-occurrence order.

    items[0] is the whole formula.  eval_order lists indices with children
    before parents (ascending syntactic size), so one pass computes a settled
    combinational stage.
    """

    items: tuple
    index: dict
    m: int
    kinds: tuple
    child_index: tuple      # per item, tuple of closure indices of its children
    binder_of_var: dict     # var name -> closure index of its binder
    eval_order: tuple
    sizes: tuple

    def kind(self, i):
        return self.kinds[i]

    @property
    def register_indices(self):
        return tuple(i for i, k in enumerate(self.kinds)
                     if k in (KIND_MU, KIND_NU, KIND_PIPELINE))


def _collect(root):
    items = []
    index = {}

    def walk(node):
        if node not in index:
            index[node] = len(items)
            items.append(node)
        for c in children(node):
            walk(c)

    walk(root)
    return items, index


def closure(f):
    """Build the subformula closure of a canonicalized formula."""
    root = f.root if isinstance(f, Formula) else f
    return _closure_cached(root)


@lru_cache(maxsize=256)
def _closure_cached(root):
    items, index = _collect(root)
    m = len(items)

    binder_of_var = {}

    def scan(node):
        if isinstance(node, _BINDERS):
            binder_of_var[node.var] = index[node]
        for c in children(node):
            scan(c)

    scan(root)

    kinds = []
    child_index = []
    for node in items:
        if isinstance(node, Mu):
            kinds.append(KIND_MU)
        elif isinstance(node, Nu):
            kinds.append(KIND_NU)
        elif isinstance(node, Delay):
            kinds.append(KIND_PIPELINE)
        else:
            kinds.append(KIND_COMB)
        kids = children(node)
        if isinstance(node, Var):
            if node.name not in binder_of_var:
                raise FreeVariableError(f"unbound variable {node.name}")
            child_index.append(())
        else:
            child_index.append(tuple(index[c] for c in kids))

    sizes = tuple(node_size(n) for n in items)
    eval_order = tuple(sorted(range(m), key=lambda i: (sizes[i], i)))
    return SubformulaClosure(tuple(items), index, m, tuple(kinds),
                             tuple(child_index), binder_of_var, eval_order, sizes)


# ---------------------------------------------------------------------------
# Alternation depth (dependent alternation: inner binder of opposite kind
# whose subtree uses the outer binder's variable)

def _binders_in(node):
    if isinstance(node, _BINDERS):
        yield node
    for c in children(node):
        yield from _binders_in(c)


def _uses_var(node, name):
    if isinstance(node, Var) and node.name == name:
        return True
    return any(_uses_var(c, name) for c in children(node))


def alternation_depth(f):
    """Number of dependent least/greatest alternations; 0 without binders."""
    root = f.root if isinstance(f, Formula) else f
    memo = {}

    def chain(binder):
        if binder in memo:
            return memo[binder]
        best = 0
        for inner in _binders_in(binder.body):
            if type(inner) is not type(binder) and _uses_var(inner, binder.var):
                best = max(best, chain(inner))
        memo[binder] = 1 + best
        return memo[binder]

    return max((chain(b) for b in _binders_in(root)), default=0)
