"""Small arithmetic expression language for problem files.

Grammar (binary operators left-associative except ``^``):

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ['^' factor]          # right-associative, binds above unary minus on its right
    atom    := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Names are variables (``t``, ``tau``, ``x1``..``xn``, ``xd1``..``xdn``,
``u1``..``un``) or the built-in functions ``sin cos exp log abs min max``.
The special form ``pw(c1, v1, ..., ck, vk, velse)`` selects the first value
whose condition holds; conditions are single comparisons (``< <= > >= ==
!=``) and are legal only directly inside ``pw``.

Evaluation is total on finite inputs: division by zero, ``log`` of a
non-positive number, and domain errors in ``^`` yield nan/inf rather than
raising, so the solver can surface them uniformly as non-finite values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Union

__all__ = [
    "ParseError",
    "Num",
    "Var",
    "Neg",
    "Bin",
    "Call",
    "Cmp",
    "Pw",
    "Expr",
    "parse_expression",
    "to_source",
    "free_variables",
]


class ParseError(Exception):
    """Syntax error with 1-based position and the token set that was legal."""

    def __init__(self, message: str, line: int, col: int, expected: tuple[str, ...] = ()):
        self.line = line
        self.col = col
        self.expected = expected
        hint = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at line {line}, column {col}{hint}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Cmp:
    op: str  # < <= > >= == !=
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pw:
    """First-match piecewise selector: ((cond, value), ...) plus fallback."""

    branches: tuple[tuple[Cmp, "Expr"], ...]
    otherwise: "Expr"


Expr = Union[Num, Var, Neg, Bin, Call, Cmp, Pw]

_FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "abs": 1, "min": 2, "max": 2}
_CMP_OPS = ("<=", ">=", "==", "!=", "<", ">")


@dataclass(frozen=True)
class _Token:
    kind: str  # num name op lparen rparen comma end
    text: str
    line: int
    col: int


def _tokenize(src: str) -> Iterator[_Token]:
    line, col = 1, 1
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
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
        if ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            seen_dot = seen_exp = False
            while j < n:
                c = src[j]
                if c.isdigit():
                    j += 1
                elif c == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    j += 1
                elif c in "eE" and not seen_exp and j > i:
                    # exponent must be followed by digits (optionally signed)
                    k = j + 1
                    if k < n and src[k] in "+-":
                        k += 1
                    if k < n and src[k].isdigit():
                        seen_exp = True
                        j = k + 1
                        while j < n and src[j].isdigit():
                            j += 1
                    else:
                        break
                else:
                    break
            text = src[i:j]
            col += j - i
            i = j
            yield _Token("num", text, line, start_col)
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            col += j - i
            i = j
            yield _Token("name", text, line, start_col)
            continue
        two = src[i : i + 2]
        if two in ("<=", ">=", "==", "!="):
            i += 2
            col += 2
            yield _Token("op", two, line, start_col)
            continue
        if ch in "+-*/^<>":
            i += 1
            col += 1
            yield _Token("op", ch, line, start_col)
            continue
        if ch == "(":
            i += 1
            col += 1
            yield _Token("lparen", ch, line, start_col)
            continue
        if ch == ")":
            i += 1
            col += 1
            yield _Token("rparen", ch, line, start_col)
            continue
        if ch == ",":
            i += 1
            col += 1
            yield _Token("comma", ch, line, start_col)
            continue
        raise ParseError(f"unexpected character {ch!r}", line, start_col)
    yield _Token("end", "", line, col)


class _Parser:
    def __init__(self, src: str, line_offset: int = 0):
        self._line_offset = line_offset
        try:
            self.tokens = list(_tokenize(src))
        except ParseError as err:
            raise ParseError(str(err).split(" at line")[0], err.line + line_offset, err.col) from None
        self.pos = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def _fail(self, message: str, expected: tuple[str, ...] = ()):
        tok = self.current
        raise ParseError(message, tok.line + self._line_offset, tok.col, expected)

    def advance(self) -> _Token:
        tok = self.current
        self.pos += 1
        return tok

    def expect(self, kind: str, text: Optional[str] = None) -> _Token:
        tok = self.current
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            got = tok.text if tok.text else "end of input"
            self._fail(f"unexpected {got!r}", expected=(want,))
        return self.advance()

    def parse(self, allow_comparison: bool = False) -> Expr:
        node = self.comparison() if allow_comparison else self.sum()
        if self.current.kind != "end":
            self._fail(f"unexpected trailing {self.current.text!r}", expected=("end of input",))
        return node

    def comparison(self) -> Expr:
        left = self.sum()
        tok = self.current
        if tok.kind == "op" and tok.text in _CMP_OPS:
            self.advance()
            right = self.sum()
            return Cmp(tok.text, left, right)
        return left

    def sum(self) -> Expr:
        node = self.term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self.advance().text
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self.advance().text
            node = Bin(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self.current.kind == "op" and self.current.text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.current.kind == "op" and self.current.text == "^":
            self.advance()
            return Bin("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.current
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if self.current.kind == "lparen":
                return self._call(tok)
            return Var(tok.text)
        if tok.kind == "lparen":
            self.advance()
            node = self.sum()
            self.expect("rparen")
            return node
        self._fail(
            f"unexpected {tok.text!r}" if tok.text else "unexpected end of input",
            expected=("number", "name", "'('", "'-'"),
        )

    def _call(self, name_tok: _Token) -> Expr:
        name = name_tok.text
        self.expect("lparen")
        allow_cmp = name == "pw"
        args: list[Expr] = [self.comparison() if allow_cmp else self.sum()]
        while self.current.kind == "comma":
            self.advance()
            args.append(self.comparison() if allow_cmp else self.sum())
        self.expect("rparen")
        if name == "pw":
            return self._build_pw(args, name_tok)
        if name not in _FUNCTIONS:
            raise ParseError(
                f"unknown function {name!r}",
                name_tok.line + self._line_offset,
                name_tok.col,
                expected=tuple(sorted(_FUNCTIONS)) + ("pw",),
            )
        arity = _FUNCTIONS[name]
        if name in ("min", "max"):
            if len(args) < 2:
                raise ParseError(
                    f"{name} needs at least 2 arguments, got {len(args)}",
                    name_tok.line + self._line_offset, name_tok.col,
                )
        elif len(args) != arity:
            raise ParseError(
                f"{name} takes {arity} argument(s), got {len(args)}",
                name_tok.line + self._line_offset, name_tok.col,
            )
        for a in args:
            if isinstance(a, Cmp):
                raise ParseError(
                    "comparisons are only allowed inside pw()",
                    name_tok.line + self._line_offset, name_tok.col,
                )
        return Call(name, tuple(args))

    def _build_pw(self, args: list[Expr], tok: _Token) -> Expr:
        if len(args) < 3 or len(args) % 2 == 0:
            raise ParseError(
                f"pw needs an odd number of arguments >= 3 (cond, value, ..., else), got {len(args)}",
                tok.line + self._line_offset, tok.col,
            )
        branches = []
        for i in range(0, len(args) - 1, 2):
            cond, value = args[i], args[i + 1]
            if not isinstance(cond, Cmp):
                raise ParseError(
                    f"pw argument {i + 1} must be a comparison",
                    tok.line + self._line_offset, tok.col,
                )
            if isinstance(value, Cmp):
                raise ParseError(
                    f"pw argument {i + 2} must be a value, not a comparison",
                    tok.line + self._line_offset, tok.col,
                )
            branches.append((cond, value))
        if isinstance(args[-1], Cmp):
            raise ParseError(
                "the final pw argument (else value) must not be a comparison",
                tok.line + self._line_offset, tok.col,
            )
        return Pw(tuple(branches), args[-1])


def parse_expression(src: str, line_offset: int = 0) -> Expr:
    """Parse one expression; ``line_offset`` shifts reported line numbers."""
    return _Parser(src, line_offset).parse()


def _safe_div(a: float, b: float) -> float:
    try:
        return a / b
    except ZeroDivisionError:
        if a == 0.0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


def _safe_pow(a: float, b: float) -> float:
    try:
        return math.pow(a, b)
    except (ValueError, OverflowError):
        return math.nan


def _safe_log(a: float) -> float:
    if a > 0.0:
        return math.log(a)
    return -math.inf if a == 0.0 else math.nan


def evaluate(expr: Expr, env: dict[str, float]) -> float:
    """Evaluate with variable bindings ``env``; unknown names raise KeyError."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        return env[expr.name]
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, env)
    if isinstance(expr, Bin):
        a = evaluate(expr.left, env)
        b = evaluate(expr.right, env)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if expr.op == "/":
            return _safe_div(a, b)
        return _safe_pow(a, b)
    if isinstance(expr, Call):
        vals = [evaluate(a, env) for a in expr.args]
        if expr.func == "sin":
            return math.sin(vals[0])
        if expr.func == "cos":
            return math.cos(vals[0])
        if expr.func == "exp":
            try:
                return math.exp(vals[0])
            except OverflowError:
                return math.inf
        if expr.func == "log":
            return _safe_log(vals[0])
        if expr.func == "abs":
            return abs(vals[0])
        if expr.func == "min":
            return min(vals)
        return max(vals)
    if isinstance(expr, Cmp):
        a = evaluate(expr.left, env)
        b = evaluate(expr.right, env)
        return float(
            a < b if expr.op == "<" else a <= b if expr.op == "<="
            else a > b if expr.op == ">" else a >= b if expr.op == ">="
            else a == b if expr.op == "==" else a != b
        )
    if isinstance(expr, Pw):
        for cond, value in expr.branches:
            if evaluate(cond, env) != 0.0:
                return evaluate(value, env)
        return evaluate(expr.otherwise, env)
    raise TypeError(f"not an expression node: {expr!r}")


def free_variables(expr: Expr) -> frozenset[str]:
    """All variable names the expression reads."""
    if isinstance(expr, Num):
        return frozenset()
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Neg):
        return free_variables(expr.operand)
    if isinstance(expr, (Bin, Cmp)):
        return free_variables(expr.left) | free_variables(expr.right)
    if isinstance(expr, Call):
        out: frozenset[str] = frozenset()
        for a in expr.args:
            out |= free_variables(a)
        return out
    if isinstance(expr, Pw):
        out = free_variables(expr.otherwise)
        for cond, value in expr.branches:
            out |= free_variables(cond) | free_variables(value)
        return out
    raise TypeError(f"not an expression node: {expr!r}")


# Precedence levels for printing with minimal parentheses.
_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _print(expr: Expr) -> tuple[str, int]:
    if isinstance(expr, Num):
        text = repr(expr.value)
        return text, _LEVEL["atom"] if expr.value >= 0 else _LEVEL["neg"]
    if isinstance(expr, Var):
        return expr.name, _LEVEL["atom"]
    if isinstance(expr, Neg):
        inner, lvl = _print(expr.operand)
        if lvl < _LEVEL["neg"]:
            inner = f"({inner})"
        return f"-{inner}", _LEVEL["neg"]
    if isinstance(expr, Bin):
        lt, ll = _print(expr.left)
        rt, rl = _print(expr.right)
        mine = _LEVEL[expr.op]
        if expr.op == "^":
            # right-associative; left operand must be atomic
            if ll < _LEVEL["atom"]:
                lt = f"({lt})"
            if rl < mine:
                rt = f"({rt})"
        else:
            if ll < mine:
                lt = f"({lt})"
            # left-associative: an equal-level right operand would regroup
            # on reparse (a + (b + c) reads back as (a + b) + c), so it is
            # parenthesized for every operator at this level
            if rl <= mine:
                rt = f"({rt})"
        return f"{lt} {expr.op} {rt}" if expr.op in "+-" else f"{lt}{expr.op}{rt}", mine
    if isinstance(expr, Call):
        args = ", ".join(_print(a)[0] for a in expr.args)
        return f"{expr.func}({args})", _LEVEL["atom"]
    if isinstance(expr, Cmp):
        lt, _ = _print(expr.left)
        rt, _ = _print(expr.right)
        return f"{lt} {expr.op} {rt}", 0
    if isinstance(expr, Pw):
        parts = []
        for cond, value in expr.branches:
            parts.append(_print(cond)[0])
            parts.append(_print(value)[0])
        parts.append(_print(expr.otherwise)[0])
        return f"pw({', '.join(parts)})", _LEVEL["atom"]
    raise TypeError(f"not an expression node: {expr!r}")


def to_source(expr: Expr) -> str:
    """Render to text that parses back to a structurally equal tree."""
    return _print(expr)[0]
