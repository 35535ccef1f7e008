"""Lexer, parser, and validator for ``.ort`` organism descriptions.

An ``.ort`` file declares elements (neurons and muscles) first, then the
relationships that wire them together.  ``#`` starts a comment that runs to
the end of the line; whitespace and newlines are otherwise interchangeable.

::

    element <name> { type: <sensory|interneuron|motor|muscle|emotion>
                     [affect: <positive|negative|neutral>]
                     [threshold: <decimal>] }

    relationship { [+|-]<name> causes [+|-]<name>
                   [weight: <d>] [mutability: <d>]
                   [polarity: <excitatory|inhibitory>] }
    relationship { <name> correlated <name> [weight: <d>] }
    relationship { <name> opposes <name>    [weight: <d>] }
    relationship { <name> dominates <name>  [weight: <d>] }

On a ``causes`` line the signs describe the coupling: ``+A causes +B`` means
a rise in A drives B up, ``+A causes -B`` means a rise in A drives B down,
and a leading ``-A`` keys the drive to A falling below equilibrium instead
of rising above it.  Omitted signs default to ``+``.  A ``polarity``
attribute, when present, overrides the sign-derived reversal of the synapse.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import OrtusError

KEYWORDS = frozenset(
    {"element", "relationship", "causes", "correlated", "opposes", "dominates"}
)

DEFAULT_THRESHOLD = 0.05
DEFAULT_WEIGHT = 0.5
DEFAULT_MUTABILITY = 0.5
DEFAULT_SCI_CAP = 1024


class LexError(OrtusError):
    """A character or malformed literal the tokenizer cannot accept."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class ParseError(OrtusError):
    """A token sequence that does not match the grammar."""

    def __init__(self, message: str, line: int, col: int, expected: tuple[str, ...] = ()):
        detail = f"{line}:{col}: {message}"
        if expected:
            detail += " (expected " + " or ".join(sorted(expected)) + ")"
        super().__init__(detail)
        self.line = line
        self.col = col
        self.expected = frozenset(expected)


class OrderError(ParseError):
    """An element block that appears after the first relationship block."""


# ---------------------------------------------------------------------------
# tokens
# ---------------------------------------------------------------------------


class TokenKind(enum.Enum):
    KEYWORD = "keyword"
    IDENT = "ident"
    NUMBER = "number"
    LBRACE = "lbrace"
    RBRACE = "rbrace"
    COLON = "colon"
    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    col: int
    value: float | None = None


_PUNCT = {
    "{": TokenKind.LBRACE,
    "}": TokenKind.RBRACE,
    ":": TokenKind.COLON,
    "+": TokenKind.PLUS,
    "-": TokenKind.MINUS,
}


def tokenize(source: str) -> list[Token]:
    """Split source text into tokens, tracking 1-based line/column positions."""
    tokens: list[Token] = []
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
            col += 1
            i += 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, line, col))
            col += 1
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            start = i
            start_col = col
            dots = 0
            while i < n and (source[i].isdigit() or source[i] == "."):
                if source[i] == ".":
                    dots += 1
                i += 1
                col += 1
            # optional exponent, so printed floats (e.g. 6.1e-05) read back
            if i < n and source[i] in "eE" and i > start:
                j = i + 1
                if j < n and source[j] in "+-":
                    j += 1
                if j < n and source[j].isdigit():
                    while j < n and source[j].isdigit():
                        j += 1
                    col += j - i
                    i = j
            text = source[start:i]
            if dots > 1 or text == ".":
                raise LexError(f"malformed number {text!r}", line, start_col)
            tokens.append(Token(TokenKind.NUMBER, text, line, start_col, value=float(text)))
            continue
        if ch.isalpha() or ch == "_":
            start = i
            start_col = col
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
                col += 1
            text = source[start:i]
            kind = TokenKind.KEYWORD if text in KEYWORDS else TokenKind.IDENT
            tokens.append(Token(kind, text, line, start_col))
            continue
        raise LexError(f"unexpected character {ch!r}", line, col)
    return tokens


# ---------------------------------------------------------------------------
# syntax tree
# ---------------------------------------------------------------------------


class ElementKind(enum.Enum):
    SENSORY = "sensory"
    INTERNEURON = "interneuron"
    MOTOR = "motor"
    MUSCLE = "muscle"
    EMOTION = "emotion"


class Affect(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"


class RelationKind(enum.Enum):
    CAUSES = "causes"
    CORRELATED = "correlated"
    OPPOSES = "opposes"
    DOMINATES = "dominates"


class Sign(enum.Enum):
    PLUS = "+"
    MINUS = "-"


class Polarity(enum.Enum):
    EXCITATORY = "excitatory"
    INHIBITORY = "inhibitory"


@dataclass
class ElementDecl:
    name: str
    kind: ElementKind
    affect: Affect = Affect.NEUTRAL
    threshold: float = DEFAULT_THRESHOLD
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass
class RelationshipDecl:
    kind: RelationKind
    a: str
    b: str
    a_sign: Sign | None = None
    b_sign: Sign | None = None
    weight: float = DEFAULT_WEIGHT
    mutability: float | None = None
    polarity: Polarity | None = None
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass
class NetworkSpec:
    elements: list[ElementDecl]
    relationships: list[RelationshipDecl]

    def element(self, name: str) -> ElementDecl | None:
        for el in self.elements:
            if el.name == name:
                return el
        return None


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_KIND_WORDS = {k.value for k in ElementKind}
_AFFECT_WORDS = {a.value for a in Affect}
_POLARITY_WORDS = {p.value for p in Polarity}
_RELATION_WORDS = {r.value for r in RelationKind}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def _eof_pos(self) -> tuple[int, int]:
        if self.tokens:
            last = self.tokens[-1]
            return last.line, last.col + len(last.text)
        return 1, 1

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self, context: str, expected: tuple[str, ...] = ()) -> Token:
        tok = self.peek()
        if tok is None:
            line, col = self._eof_pos()
            raise ParseError(f"unexpected end of input while parsing {context}", line, col, expected)
        self.pos += 1
        return tok

    def expect(self, kind: TokenKind, context: str, expected: tuple[str, ...]) -> Token:
        tok = self.next(context, expected)
        if tok.kind is not kind:
            raise ParseError(
                f"unexpected {tok.text!r} while parsing {context}", tok.line, tok.col, expected
            )
        return tok

    def parse(self) -> NetworkSpec:
        elements: list[ElementDecl] = []
        relationships: list[RelationshipDecl] = []
        while (tok := self.peek()) is not None:
            if tok.kind is TokenKind.KEYWORD and tok.text == "element":
                if relationships:
                    raise OrderError(
                        "element declared after a relationship; all elements must come first",
                        tok.line,
                        tok.col,
                    )
                self.pos += 1
                elements.append(self._element(tok))
            elif tok.kind is TokenKind.KEYWORD and tok.text == "relationship":
                self.pos += 1
                relationships.append(self._relationship(tok))
            else:
                raise ParseError(
                    f"unexpected {tok.text!r} at top level",
                    tok.line,
                    tok.col,
                    ("element", "relationship"),
                )
        return NetworkSpec(elements, relationships)

    def _ident(self, context: str) -> Token:
        tok = self.next(context, ("identifier",))
        if tok.kind is TokenKind.KEYWORD:
            raise ParseError(f"{tok.text!r} is a reserved word", tok.line, tok.col, ("identifier",))
        if tok.kind is not TokenKind.IDENT:
            raise ParseError(
                f"unexpected {tok.text!r} while parsing {context}",
                tok.line,
                tok.col,
                ("identifier",),
            )
        return tok

    def _element(self, kw: Token) -> ElementDecl:
        name = self._ident("element name")
        self.expect(TokenKind.LBRACE, "element block", ("{",))
        kind: ElementKind | None = None
        affect = Affect.NEUTRAL
        threshold = DEFAULT_THRESHOLD
        seen: set[str] = set()
        while True:
            tok = self.next("element block", ("type", "affect", "threshold", "}"))
            if tok.kind is TokenKind.RBRACE:
                break
            if tok.kind is not TokenKind.IDENT:
                raise ParseError(
                    f"unexpected {tok.text!r} in element block",
                    tok.line,
                    tok.col,
                    ("type", "affect", "threshold", "}"),
                )
            key = tok.text
            if key not in ("type", "affect", "threshold"):
                raise ParseError(
                    f"unknown element attribute {key!r}",
                    tok.line,
                    tok.col,
                    ("type", "affect", "threshold"),
                )
            if key in seen:
                raise ParseError(f"duplicate attribute {key!r}", tok.line, tok.col)
            seen.add(key)
            self.expect(TokenKind.COLON, f"{key} attribute", (":",))
            if key == "type":
                val = self.next("element type", tuple(sorted(_KIND_WORDS)))
                if val.kind is not TokenKind.IDENT or val.text not in _KIND_WORDS:
                    raise ParseError(
                        f"unknown element type {val.text!r}",
                        val.line,
                        val.col,
                        tuple(sorted(_KIND_WORDS)),
                    )
                kind = ElementKind(val.text)
            elif key == "affect":
                val = self.next("affect value", tuple(sorted(_AFFECT_WORDS)))
                if val.kind is not TokenKind.IDENT or val.text not in _AFFECT_WORDS:
                    raise ParseError(
                        f"unknown affect {val.text!r}",
                        val.line,
                        val.col,
                        tuple(sorted(_AFFECT_WORDS)),
                    )
                affect = Affect(val.text)
            else:
                val = self.expect(TokenKind.NUMBER, "threshold value", ("number",))
                threshold = float(val.value)  # type: ignore[arg-type]
        if kind is None:
            raise ParseError(
                f"element {name.text!r} is missing a type attribute", name.line, name.col
            )
        return ElementDecl(name.text, kind, affect, threshold, line=kw.line, col=kw.col)

    def _sign(self) -> Sign | None:
        tok = self.peek()
        if tok is not None and tok.kind in (TokenKind.PLUS, TokenKind.MINUS):
            self.pos += 1
            return Sign.PLUS if tok.kind is TokenKind.PLUS else Sign.MINUS
        return None

    def _relationship(self, kw: Token) -> RelationshipDecl:
        self.expect(TokenKind.LBRACE, "relationship block", ("{",))
        a_sign = self._sign()
        a = self._ident("relationship source")
        rel_tok = self.next("relationship kind", tuple(sorted(_RELATION_WORDS)))
        if rel_tok.kind is not TokenKind.KEYWORD or rel_tok.text not in _RELATION_WORDS:
            raise ParseError(
                f"unknown relationship kind {rel_tok.text!r}",
                rel_tok.line,
                rel_tok.col,
                tuple(sorted(_RELATION_WORDS)),
            )
        kind = RelationKind(rel_tok.text)
        b_sign = self._sign()
        b = self._ident("relationship target")
        if kind is not RelationKind.CAUSES:
            if a_sign is not None or b_sign is not None:
                raise ParseError(
                    f"signs are only valid on causes relationships, not {kind.value}",
                    rel_tok.line,
                    rel_tok.col,
                )
        else:
            a_sign = a_sign or Sign.PLUS
            b_sign = b_sign or Sign.PLUS

        weight = DEFAULT_WEIGHT
        mutability: float | None = DEFAULT_MUTABILITY if kind is RelationKind.CAUSES else None
        polarity: Polarity | None = None
        seen: set[str] = set()
        while True:
            tok = self.next("relationship block", ("weight", "mutability", "polarity", "}"))
            if tok.kind is TokenKind.RBRACE:
                break
            if tok.kind is not TokenKind.IDENT or tok.text not in (
                "weight",
                "mutability",
                "polarity",
            ):
                raise ParseError(
                    f"unknown relationship attribute {tok.text!r}",
                    tok.line,
                    tok.col,
                    ("weight", "mutability", "polarity", "}"),
                )
            key = tok.text
            if key in seen:
                raise ParseError(f"duplicate attribute {key!r}", tok.line, tok.col)
            seen.add(key)
            if key in ("mutability", "polarity") and kind is not RelationKind.CAUSES:
                raise ParseError(
                    f"{key} is only valid on causes relationships", tok.line, tok.col
                )
            self.expect(TokenKind.COLON, f"{key} attribute", (":",))
            if key == "polarity":
                val = self.next("polarity value", tuple(sorted(_POLARITY_WORDS)))
                if val.kind is not TokenKind.IDENT or val.text not in _POLARITY_WORDS:
                    raise ParseError(
                        f"unknown polarity {val.text!r}",
                        val.line,
                        val.col,
                        tuple(sorted(_POLARITY_WORDS)),
                    )
                polarity = Polarity(val.text)
            else:
                val = self.expect(TokenKind.NUMBER, f"{key} value", ("number",))
                if key == "weight":
                    weight = float(val.value)  # type: ignore[arg-type]
                else:
                    mutability = float(val.value)  # type: ignore[arg-type]
        return RelationshipDecl(
            kind,
            a.text,
            b.text,
            a_sign,
            b_sign,
            weight,
            mutability,
            polarity,
            line=kw.line,
            col=kw.col,
        )


def parse(tokens: list[Token]) -> NetworkSpec:
    """Parse a token stream into a NetworkSpec, defaulting omitted attributes."""
    return _Parser(tokens).parse()


def parse_source(source: str) -> NetworkSpec:
    return parse(tokenize(source))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        return f"{self.severity.value}:{self.line}:{self.col}: {self.message}"


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diagnostics)


def validate_spec(spec: NetworkSpec, *, sci_cap: int = DEFAULT_SCI_CAP) -> list[Diagnostic]:
    """Check a parsed spec for problems that would make it unbuildable.

    Returns a list of diagnostics; an empty list means the spec compiles
    cleanly.  Warnings (consolidation-layer explosion, elements that no
    relationship touches) do not block building.
    """
    diags: list[Diagnostic] = []

    def err(code: str, message: str, line: int = 0, col: int = 0) -> None:
        diags.append(Diagnostic(Severity.ERROR, code, message, line, col))

    def warn(code: str, message: str, line: int = 0, col: int = 0) -> None:
        diags.append(Diagnostic(Severity.WARNING, code, message, line, col))

    seen: dict[str, ElementDecl] = {}
    for el in spec.elements:
        if el.name in seen:
            err("duplicate-name", f"element {el.name!r} declared twice", el.line, el.col)
        else:
            seen[el.name] = el
        if not (0.0 <= el.threshold < 1.0):
            err(
                "bad-threshold",
                f"threshold of {el.name!r} must lie in [0, 1), got {el.threshold!r}",
                el.line,
                el.col,
            )
        if el.kind is ElementKind.EMOTION and el.affect is Affect.NEUTRAL:
            err(
                "neutral-emotion",
                f"emotion {el.name!r} must declare a positive or negative affect",
                el.line,
                el.col,
            )

    sensors = [el for el in spec.elements if el.kind is ElementKind.SENSORY]
    emotions = [el for el in spec.elements if el.kind is ElementKind.EMOTION]
    if not sensors:
        err("no-sensor", "an organism needs at least one sensory element")
    if not emotions:
        err("no-emotion", "an organism needs at least one emotion element")

    referenced: set[str] = set()
    for rel in spec.relationships:
        referenced.add(rel.a)
        referenced.add(rel.b)
        for name in (rel.a, rel.b):
            if name not in seen:
                err("undeclared", f"relationship references undeclared element {name!r}", rel.line, rel.col)
        if rel.a == rel.b:
            err("self-loop", f"element {rel.a!r} cannot relate to itself", rel.line, rel.col)
        if not (0.0 <= rel.weight <= 1.0):
            err("bad-weight", f"weight must lie in [0, 1], got {rel.weight!r}", rel.line, rel.col)
        if rel.mutability is not None and not (0.0 <= rel.mutability <= 1.0):
            err(
                "bad-mutability",
                f"mutability must lie in [0, 1], got {rel.mutability!r}",
                rel.line,
                rel.col,
            )
        # Sensors are inputs: nothing may synapse onto them.
        targets_sensor = []
        if rel.kind in (RelationKind.CAUSES, RelationKind.DOMINATES, RelationKind.OPPOSES):
            targets_sensor.append(rel.b)
        if rel.kind is RelationKind.OPPOSES:
            targets_sensor.append(rel.a)
        for name in targets_sensor:
            el = seen.get(name)
            if el is not None and el.kind is ElementKind.SENSORY:
                err(
                    "into-sensor",
                    f"{rel.kind.value} relationship would drive sensory element {name!r};"
                    " sensors are inputs only",
                    rel.line,
                    rel.col,
                )

    cycle = _dominance_cycle(spec, {el.name for el in emotions})
    if cycle:
        err("dominance-cycle", "dominance cycle among emotions: " + " -> ".join(cycle))

    n = len(sensors)
    if n and 2**n - 1 > sci_cap:
        warn(
            "sci-explosion",
            f"{n} sensory elements expand to 2^{n}-1 = {2**n - 1} sensory consolidation"
            f" interneurons, exceeding the cap of {sci_cap}",
        )

    for el in spec.elements:
        if el.kind in (ElementKind.INTERNEURON, ElementKind.MOTOR, ElementKind.MUSCLE):
            if el.name not in referenced:
                warn(
                    "unreferenced",
                    f"{el.kind.value} element {el.name!r} is not referenced by any relationship",
                    el.line,
                    el.col,
                )

    return diags


def _dominance_cycle(spec: NetworkSpec, emotions: set[str]) -> list[str] | None:
    adj: dict[str, list[str]] = {}
    for rel in spec.relationships:
        if rel.kind is RelationKind.DOMINATES and rel.a in emotions and rel.b in emotions:
            adj.setdefault(rel.a, []).append(rel.b)
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        state[node] = 1
        stack.append(node)
        for nxt in adj.get(node, ()):
            if state.get(nxt, 0) == 1:
                return stack[stack.index(nxt):] + [nxt]
            if state.get(nxt, 0) == 0:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        state[node] = 2
        return None

    for start in sorted(adj):
        if state.get(start, 0) == 0:
            found = visit(start)
            if found:
                return found
    return None


# ---------------------------------------------------------------------------
# pretty printer
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def format_spec(spec: NetworkSpec) -> str:
    """Render a spec back to canonical .ort text.

    The output makes every defaulted attribute explicit and parses back to a
    structurally equal spec.
    """
    lines: list[str] = []
    for el in spec.elements:
        lines.append(
            f"element {el.name} {{ type: {el.kind.value} affect: {el.affect.value}"
            f" threshold: {_fmt(el.threshold)} }}"
        )
    for rel in spec.relationships:
        if rel.kind is RelationKind.CAUSES:
            clause = f"{rel.a_sign.value}{rel.a} causes {rel.b_sign.value}{rel.b}"  # type: ignore[union-attr]
        else:
            clause = f"{rel.a} {rel.kind.value} {rel.b}"
        attrs = f" weight: {_fmt(rel.weight)}"
        if rel.mutability is not None:
            attrs += f" mutability: {_fmt(rel.mutability)}"
        if rel.polarity is not None:
            attrs += f" polarity: {rel.polarity.value}"
        lines.append(f"relationship {{ {clause}{attrs} }}")
    return "\n".join(lines) + "\n"
