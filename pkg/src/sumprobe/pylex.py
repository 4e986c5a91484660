"""Lexer for Python source text with exact byte spans.

Every byte of the input belongs to exactly one token, so concatenating the
lexemes reproduces the source byte-for-byte. The lexer checks lexical
well-formedness only (strings terminated, brackets closed); it happily
tokenizes code no parser would accept, which is what the downstream code
transformations need -- their outputs are often not valid Python.

Besides raw tokens, the module classifies identifier roles (function name,
parameter, attribute, ...) and locates the span of the first function
signature.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

from .errors import HarnessError


class Category(str, Enum):
    KEYWORD = "keyword"
    IDENTIFIER = "identifier"
    OPERATOR = "operator"
    DELIMITER = "delimiter"
    NUMBER = "number"
    STRING = "string"
    COMMENT = "comment"
    NEWLINE = "newline"
    WHITESPACE = "whitespace"


class Role(str, Enum):
    FUNCTION_NAME = "function_name"
    PARAMETER = "parameter"
    CALLEE_OF_DEFINED_NAME = "callee_of_defined_name"
    PLAIN_IDENTIFIER = "plain_identifier"
    ATTRIBUTE_NAME = "attribute_name"
    NONE = "none"


@dataclass(frozen=True)
class LexToken:
    lexeme: str
    category: Category
    start: int  # byte offset into the UTF-8 encoding of the source
    end: int


@dataclass(frozen=True)
class RoleToken:
    base: LexToken
    role: Role


@dataclass(frozen=True)
class SignatureSpan:
    """First `def` keyword through the colon closing its parameter list."""

    start: int  # byte offsets, like LexToken spans
    end: int
    first_token: int  # index of the `def` token in the stream
    last_token: int  # index of the closing `:` token, inclusive


class UnlexableError(HarnessError):
    """Source failed lexical analysis; `offset` is a byte position."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnterminatedStringError(UnlexableError):
    pass


class UnterminatedBracketError(UnlexableError):
    pass


class NoFunctionError(HarnessError):
    """The token stream contains no (complete) `def` signature."""


# Python 3.10 reserved words. The word operators not/and/or/in/is are
# classified as keywords; the structure-removal transform drops keywords and
# operators alike, so nothing downstream depends on that split.
KEYWORDS = frozenset(
    """
    False None True and as assert async await break class continue def del
    elif else except finally for from global if import in is lambda nonlocal
    not or pass raise return try while with yield
    """.split()
)

_OPERATORS = {
    "+", "-", "*", "**", "/", "//", "%", "@", "<<", ">>", "&", "|", "^",
    "~", "<", ">", "<=", ">=", "==", "!=", ":=",
}
_DELIMITERS = {
    "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=", "->",
    "+=", "-=", "*=", "/=", "//=", "%=", "@=", "&=", "|=", "^=",
    ">>=", "<<=", "**=",
}
_PUNCT = sorted(_OPERATORS | _DELIMITERS, key=len, reverse=True)

_OPENERS = frozenset("([{")
_CLOSERS = frozenset(")]}")

# Alternation order matters: strings before identifiers (so the rb in rb'..'
# is a prefix, not a name), numbers before punctuation (so .5 is a number).
_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\f\v]+)
    | (?P<nl>\r\n|\n|\r)
    | (?P<comment>\#[^\n\r]*)
    | (?P<contline>\\(?:\r\n|\n|\r))
    | (?P<strstart>[rRbBuUfF]{1,2}(?=['"])|(?=['"]))
    | (?P<number>
          0[xX](?:_?[0-9a-fA-F])+
        | 0[oO](?:_?[0-7])+
        | 0[bB](?:_?[01])+
        | (?:[0-9](?:_?[0-9])*)?\.[0-9](?:_?[0-9])*(?:[eE][+-]?[0-9](?:_?[0-9])*)?[jJ]?
        | [0-9](?:_?[0-9])*\.(?:[0-9](?:_?[0-9])*)?(?:[eE][+-]?[0-9](?:_?[0-9])*)?[jJ]?
        | [0-9](?:_?[0-9])*(?:[eE][+-]?[0-9](?:_?[0-9])*)?[jJ]?
      )
    | (?P<ident>[^\W\d]\w*)
    | (?P<punct>"""
    + "|".join(re.escape(p) for p in _PUNCT)
    + r""")
    | (?P<other>.)
    """,
    re.VERBOSE | re.DOTALL,
)


class TokenStream(Sequence[LexToken]):
    """Immutable token sequence whose lexemes tile the source text."""

    __slots__ = ("_tokens",)

    def __init__(self, tokens: Iterable[LexToken]) -> None:
        self._tokens = tuple(tokens)

    def __len__(self) -> int:
        return len(self._tokens)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return self._tokens[index]
        return self._tokens[index]

    def __iter__(self) -> Iterator[LexToken]:
        return iter(self._tokens)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, TokenStream):
            return self._tokens == other._tokens
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._tokens)

    def __repr__(self) -> str:
        return f"TokenStream({len(self._tokens)} tokens)"

    @property
    def text(self) -> str:
        return "".join(t.lexeme for t in self._tokens)


def make_stream(parts: Iterable[tuple[str, Category]]) -> TokenStream:
    """Build a stream from (lexeme, category) pairs, recomputing byte spans."""
    tokens = []
    offset = 0
    for lexeme, category in parts:
        if not lexeme:
            continue
        nbytes = len(lexeme) if lexeme.isascii() else len(lexeme.encode("utf-8"))
        tokens.append(LexToken(lexeme, category, offset, offset + nbytes))
        offset += nbytes
    return TokenStream(tokens)


def _byte_offset(source: str, cp_offset: int) -> int:
    head = source[:cp_offset]
    return len(head) if head.isascii() else len(head.encode("utf-8"))


def _scan_string(source: str, start: int, after_prefix: int) -> int:
    """Return the code-point offset just past a string literal.

    `start` points at the prefix (if any), `after_prefix` at the opening
    quote. Backslash escapes are honoured in raw strings too: that matches
    Python's own rule for finding the end of a raw literal.
    """
    n = len(source)
    quote = source[after_prefix]
    triple = source[after_prefix : after_prefix + 3] in ("'''", '"""')
    pos = after_prefix + (3 if triple else 1)
    closing = quote * 3 if triple else quote
    while pos < n:
        ch = source[pos]
        if ch == "\\":
            pos += 2
            continue
        if not triple and ch in "\n\r":
            break
        if source.startswith(closing, pos):
            return pos + len(closing)
        pos += 1
    raise UnterminatedStringError(
        "unterminated string literal", _byte_offset(source, start)
    )


def lex(source: str) -> TokenStream:
    """Tokenize `source`; concat of the lexemes reproduces it exactly."""
    parts: list[tuple[str, Category]] = []
    open_brackets: list[int] = []  # code-point offsets of unclosed openers
    pos = 0
    n = len(source)
    while pos < n:
        match = _TOKEN_RE.match(source, pos)
        kind = match.lastgroup
        if kind == "strstart":
            end = _scan_string(source, pos, match.end())
            parts.append((source[pos:end], Category.STRING))
            pos = end
            continue
        text = match.group()
        if kind == "ws" or kind == "contline":
            parts.append((text, Category.WHITESPACE))
        elif kind == "nl":
            parts.append((text, Category.NEWLINE))
        elif kind == "comment":
            parts.append((text, Category.COMMENT))
        elif kind == "number":
            parts.append((text, Category.NUMBER))
        elif kind == "ident":
            category = Category.KEYWORD if text in KEYWORDS else Category.IDENTIFIER
            parts.append((text, category))
        elif kind == "punct":
            if text in _OPENERS:
                open_brackets.append(pos)
            elif text in _CLOSERS and open_brackets:
                open_brackets.pop()
            category = Category.OPERATOR if text in _OPERATORS else Category.DELIMITER
            parts.append((text, category))
        else:
            # Not part of Python's lexical grammar (stray $, ?, lone \, ...).
            # Kept permissively as an operator so arbitrary bytes round-trip.
            parts.append((text, Category.OPERATOR))
        pos = match.end()
    if open_brackets:
        raise UnterminatedBracketError(
            "unclosed bracket", _byte_offset(source, open_brackets[0])
        )
    return make_stream(parts)


def _next_index(tokens: Sequence[LexToken], start: int, skip: frozenset) -> int:
    i = start
    while i < len(tokens) and tokens[i].category in skip:
        i += 1
    return i


_SKIP_WS = frozenset({Category.WHITESPACE})
_SKIP_LAYOUT = frozenset({Category.WHITESPACE, Category.NEWLINE, Category.COMMENT})


def _def_name_indices(tokens: Sequence[LexToken]) -> list[tuple[int, int]]:
    """(def keyword index, name index) pairs, in stream order."""
    pairs = []
    for i, tok in enumerate(tokens):
        if tok.category is Category.KEYWORD and tok.lexeme == "def":
            j = _next_index(tokens, i + 1, _SKIP_WS)
            if j < len(tokens) and tokens[j].category is Category.IDENTIFIER:
                pairs.append((i, j))
    return pairs


def _parameter_indices(tokens: Sequence[LexToken], name_idx: int) -> set[int]:
    """Indices of parameter-name identifiers in one def's parenthesis list."""
    open_idx = _next_index(tokens, name_idx + 1, _SKIP_LAYOUT)
    if open_idx >= len(tokens) or tokens[open_idx].lexeme != "(":
        return set()
    params: set[int] = set()
    depth = 1
    prev_significant = "("
    i = open_idx + 1
    while i < len(tokens) and depth > 0:
        tok = tokens[i]
        if tok.category in _SKIP_LAYOUT:
            i += 1
            continue
        if tok.lexeme in _OPENERS:
            depth += 1
        elif tok.lexeme in _CLOSERS:
            depth -= 1
        elif (
            depth == 1
            and tok.category is Category.IDENTIFIER
            and prev_significant in ("(", ",", "*", "**")
        ):
            params.add(i)
        prev_significant = tok.lexeme
        i += 1
    return params


def classify_roles(tokens: Sequence[LexToken]) -> list[RoleToken]:
    """Assign a role to every token (non-identifiers get Role.NONE).

    The first def's name is the snippet's function name; every later
    identifier with that lexeme is treated as the same name, call sites and
    attribute positions included, so renaming transforms touch all of them.
    """
    defs = _def_name_indices(tokens)
    outer_name = tokens[defs[0][1]].lexeme if defs else None
    outer_name_idx = defs[0][1] if defs else -1
    inner_name_indices = {name_i for _, name_i in defs[1:]}
    inner_names = {tokens[i].lexeme for i in inner_name_indices}

    param_indices: set[int] = set()
    for _, name_i in defs:
        param_indices |= _parameter_indices(tokens, name_i)

    roles = []
    prev_significant = ""
    for i, tok in enumerate(tokens):
        if tok.category is not Category.IDENTIFIER:
            roles.append(RoleToken(tok, Role.NONE))
        elif outer_name is not None and tok.lexeme == outer_name and i >= outer_name_idx:
            roles.append(RoleToken(tok, Role.FUNCTION_NAME))
        elif prev_significant == ".":
            roles.append(RoleToken(tok, Role.ATTRIBUTE_NAME))
        elif i in param_indices:
            roles.append(RoleToken(tok, Role.PARAMETER))
        elif i in inner_name_indices:
            roles.append(RoleToken(tok, Role.PLAIN_IDENTIFIER))
        elif tok.lexeme in inner_names and _is_call_site(tokens, i):
            roles.append(RoleToken(tok, Role.CALLEE_OF_DEFINED_NAME))
        else:
            roles.append(RoleToken(tok, Role.PLAIN_IDENTIFIER))
        if tok.category not in _SKIP_LAYOUT:
            prev_significant = tok.lexeme
    return roles


def _is_call_site(tokens: Sequence[LexToken], idx: int) -> bool:
    nxt = _next_index(tokens, idx + 1, _SKIP_LAYOUT)
    return nxt < len(tokens) and tokens[nxt].lexeme == "("


def signature_span(tokens: Sequence[LexToken]) -> SignatureSpan:
    """Span of the first def through the colon after its parameter list.

    Decorators are excluded; multi-line parameter lists are handled by
    bracket depth.
    """
    def_idx = None
    for i, tok in enumerate(tokens):
        if tok.category is Category.KEYWORD and tok.lexeme == "def":
            def_idx = i
            break
    if def_idx is None:
        raise NoFunctionError("no def in token stream")
    depth = 0
    for i in range(def_idx + 1, len(tokens)):
        lexeme = tokens[i].lexeme
        if lexeme in _OPENERS:
            depth += 1
        elif lexeme in _CLOSERS:
            depth -= 1
        elif lexeme == ":" and depth == 0:
            return SignatureSpan(
                start=tokens[def_idx].start,
                end=tokens[i].end,
                first_token=def_idx,
                last_token=i,
            )
    raise NoFunctionError("def without a closing colon")
