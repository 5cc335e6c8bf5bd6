"""Problem-file format and the built-in demonstration problems.

A problem file is UTF-8 text, line oriented, ``#`` starts a comment.
Scalar keys come first, then bracketed sections::

    dim = 1
    lambda = 2
    horizon = 5

    [f]                      # one line per state component, vars t, x*, xd*
    x1 = -1/5 * xd1

    [g]                      # delay law, vars t, x*, tau
    tau = 1 + 1/4*x1 - 1/2*tau

    [history]                # vars t; segments listed with strictly
    tail = 1                 # decreasing breakpoints; tail covers the rest

    [impulses]               # post-jump state in terms of the pre-jump
    jump 3/4 = u1 + 2        # state u1..un; n comma-separated components
    jump 3/2 = u1 - 3/4

    [hints]                  # optional declared constants, see LipschitzHints
    L1 = 1/5

``lambda``, ``horizon``, breakpoints, jump times, and hint values may be
any constant expression (no variables).  ``parse_problem`` returns a
ProblemSpec whose evaluators interpret the stored syntax trees; the parsed
definition rides along so ``serialize_problem`` can round-trip it.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .expressions import (
    Expr,
    ParseError,
    evaluate,
    free_variables,
    parse_expression,
    to_source,
)
from .model import (
    Array,
    HistoryFunction,
    ImpulseEvent,
    LipschitzHints,
    ProblemSpec,
    UnknownProblem,
    ValidationError,
)

__all__ = [
    "ProblemDefinition",
    "parse_problem",
    "serialize_problem",
    "load_problem_file",
    "builtin",
    "BUILTIN_NAMES",
]

_HINT_KEYS = ("L1", "L2", "L3", "L4", "sup_f0", "sup_g0", "n_phi")


@dataclass(frozen=True)
class ProblemDefinition:
    """Syntactic form of a problem file (expressions kept as trees)."""

    dim: int
    lam: float
    horizon: float
    f_exprs: tuple[Expr, ...]
    g_expr: Expr
    hist_breakpoints: tuple[float, ...]
    hist_segments: tuple[tuple[Expr, ...], ...]
    hist_tail: tuple[Expr, ...]
    impulse_times: tuple[float, ...]
    impulse_jumps: tuple[tuple[Expr, ...], ...]
    hints: tuple[tuple[str, float], ...] = ()

    def to_spec(self) -> ProblemSpec:
        dim = self.dim
        f_exprs = self.f_exprs
        g_expr = self.g_expr

        def f(t: float, x: Array, xd: Array) -> Array:
            env = {"t": t}
            for i in range(dim):
                env[f"x{i + 1}"] = x[i]
                env[f"xd{i + 1}"] = xd[i]
            return np.array([evaluate(e, env) for e in f_exprs])

        def g(t: float, x: Array, tau: float) -> float:
            env = {"t": t, "tau": tau}
            for i in range(dim):
                env[f"x{i + 1}"] = x[i]
            return evaluate(g_expr, env)

        def _vector_fn(exprs: tuple[Expr, ...]) -> Callable[[float], Array]:
            def fn(t: float) -> Array:
                return np.array([evaluate(e, {"t": t}) for e in exprs])

            return fn

        hints = dict(self.hints)
        history = HistoryFunction(
            dim=dim,
            breakpoints=self.hist_breakpoints,
            segments=tuple(_vector_fn(seg) for seg in self.hist_segments),
            tail=_vector_fn(self.hist_tail),
            bound_hint=hints.get("n_phi"),
        )

        def _jump_fn(exprs: tuple[Expr, ...]) -> Callable[[Array], Array]:
            # Impulse lines give the post-jump state in u1..un; the model
            # works with increments, so subtract the input state.
            def jump(u: Array) -> Array:
                env = {f"u{i + 1}": u[i] for i in range(dim)}
                return np.array([evaluate(e, env) for e in exprs]) - u

            return jump

        impulses = tuple(
            ImpulseEvent(time=tk, jump_map=_jump_fn(exprs))
            for tk, exprs in zip(self.impulse_times, self.impulse_jumps)
        )
        lip = None
        if any(k in hints for k in ("L1", "L2", "L3", "L4", "sup_f0", "sup_g0")):
            lip = LipschitzHints(
                L1=hints.get("L1"), L2=hints.get("L2"),
                L3=hints.get("L3"), L4=hints.get("L4"),
                sup_f0=hints.get("sup_f0"), sup_g0=hints.get("sup_g0"),
            )
        return ProblemSpec(
            dim=dim, f=f, g=g, impulses=impulses, history=history,
            lam=self.lam, horizon=self.horizon, lipschitz_hints=lip,
            definition=self,
        )


_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)(?:\s+([^=]+?))?\s*=\s*(.*)$")
_SECTION_RE = re.compile(r"^\[([A-Za-z_]+)\]$")


def _const(text: str, lineno: int, what: str) -> float:
    expr = parse_expression(text, line_offset=lineno - 1)
    extra = free_variables(expr)
    if extra:
        raise ValidationError(f"{what} on line {lineno} must be constant; found variables {sorted(extra)}")
    value = evaluate(expr, {})
    if not math.isfinite(value):
        raise ValidationError(f"{what} on line {lineno} evaluates to a non-finite value")
    return value


def _expr_list(text: str, lineno: int, expected: int, what: str, allowed: frozenset[str]) -> tuple[Expr, ...]:
    """Parse ``expected`` comma-separated expressions (top-level commas only)."""
    parts: list[str] = []
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    if len(parts) != expected:
        raise ValidationError(
            f"{what} on line {lineno} needs {expected} comma-separated component(s), got {len(parts)}"
        )
    out = []
    for part in parts:
        expr = parse_expression(part, line_offset=lineno - 1)
        extra = free_variables(expr) - allowed
        if extra:
            raise ValidationError(
                f"{what} on line {lineno} uses undefined variable(s) {sorted(extra)}; allowed: {sorted(allowed)}"
            )
        out.append(expr)
    return tuple(out)


def parse_problem(src: str) -> ProblemSpec:
    """Parse problem-file text into a ProblemSpec.

    Raises ParseError for expression syntax errors (with file line
    numbers) and ValidationError for structural violations.
    """
    dim: Optional[int] = None
    scalars: dict[str, float] = {}
    section: Optional[str] = None
    f_parts: dict[int, Expr] = {}
    g_expr: Optional[Expr] = None
    segments: list[tuple[float, tuple[Expr, ...], int]] = []
    tail: Optional[tuple[Expr, ...]] = None
    jumps: list[tuple[float, tuple[Expr, ...], int]] = []
    hints: dict[str, float] = {}

    def need_dim(lineno: int) -> int:
        if dim is None:
            raise ValidationError(f"line {lineno}: dim must be declared before any section")
        return dim

    for lineno, raw in enumerate(src.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            if section not in ("f", "g", "history", "impulses", "hints"):
                raise ValidationError(f"line {lineno}: unknown section [{section}]")
            continue
        m = _KEY_RE.match(line)
        if not m:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, arg, value = m.group(1), m.group(2), m.group(3)
        if section is None:
            if arg is not None:
                raise ValidationError(f"line {lineno}: unexpected argument after {key!r}")
            if key == "dim":
                v = _const(value, lineno, "dim")
                if v != int(v) or int(v) < 1:
                    raise ValidationError(f"line {lineno}: dim must be a positive integer")
                dim = int(v)
            elif key in ("lambda", "horizon"):
                if key in scalars:
                    raise ValidationError(f"line {lineno}: duplicate {key}")
                scalars[key] = _const(value, lineno, key)
            else:
                raise ValidationError(f"line {lineno}: unknown top-level key {key!r}")
            continue
        n = need_dim(lineno)
        state_vars = frozenset(f"x{i + 1}" for i in range(n))
        if section == "f":
            mm = re.fullmatch(r"x([0-9]+)", key)
            if not mm or arg is not None:
                raise ValidationError(f"line {lineno}: [f] lines must be 'x<i> = expression'")
            idx = int(mm.group(1))
            if not (1 <= idx <= n):
                raise ValidationError(f"line {lineno}: component x{idx} out of range 1..{n}")
            if idx in f_parts:
                raise ValidationError(f"line {lineno}: duplicate component x{idx}")
            allowed = frozenset({"t"}) | state_vars | frozenset(f"xd{i + 1}" for i in range(n))
            f_parts[idx] = _expr_list(value, lineno, 1, f"x{idx}", allowed)[0]
        elif section == "g":
            if key != "tau" or arg is not None:
                raise ValidationError(f"line {lineno}: [g] must contain a single 'tau = expression' line")
            if g_expr is not None:
                raise ValidationError(f"line {lineno}: duplicate tau equation")
            g_expr = _expr_list(value, lineno, 1, "tau", frozenset({"t", "tau"}) | state_vars)[0]
        elif section == "history":
            if key == "segment":
                if arg is None:
                    raise ValidationError(f"line {lineno}: segment needs a breakpoint: 'segment <time> = ...'")
                bp = _const(arg, lineno, "segment breakpoint")
                segments.append((bp, _expr_list(value, lineno, n, "segment", frozenset({"t"})), lineno))
            elif key == "tail":
                if tail is not None:
                    raise ValidationError(f"line {lineno}: duplicate tail")
                tail = _expr_list(value, lineno, n, "tail", frozenset({"t"}))
            else:
                raise ValidationError(f"line {lineno}: [history] keys are 'segment <time>' and 'tail'")
        elif section == "impulses":
            if key != "jump" or arg is None:
                raise ValidationError(f"line {lineno}: [impulses] lines must be 'jump <time> = expr[, ...]'")
            tk = _const(arg, lineno, "jump time")
            allowed = frozenset(f"u{i + 1}" for i in range(n))
            jumps.append((tk, _expr_list(value, lineno, n, "jump", allowed), lineno))
        elif section == "hints":
            if key not in _HINT_KEYS or arg is not None:
                raise ValidationError(f"line {lineno}: [hints] keys are {', '.join(_HINT_KEYS)}")
            if key in hints:
                raise ValidationError(f"line {lineno}: duplicate hint {key}")
            hints[key] = _const(value, lineno, key)

    if dim is None:
        raise ValidationError("missing dim")
    for key in ("lambda", "horizon"):
        if key not in scalars:
            raise ValidationError(f"missing {key}")
    missing = [f"x{i + 1}" for i in range(dim) if i + 1 not in f_parts]
    if missing:
        raise ValidationError(f"[f] is missing component(s) {', '.join(missing)}")
    if g_expr is None:
        raise ValidationError("[g] is missing the tau equation")
    if tail is None:
        raise ValidationError("[history] is missing the tail line")
    for (bp, _, ln), (bp2, _, ln2) in zip(segments, segments[1:]):
        if not (bp2 < bp):
            raise ValidationError(f"line {ln2}: history breakpoints must be strictly decreasing")

    definition = ProblemDefinition(
        dim=dim,
        lam=scalars["lambda"],
        horizon=scalars["horizon"],
        f_exprs=tuple(f_parts[i + 1] for i in range(dim)),
        g_expr=g_expr,
        hist_breakpoints=tuple(bp for bp, _, _ in segments),
        hist_segments=tuple(exprs for _, exprs, _ in segments),
        hist_tail=tail,
        impulse_times=tuple(tk for tk, _, _ in jumps),
        impulse_jumps=tuple(exprs for _, exprs, _ in jumps),
        hints=tuple(sorted(hints.items())),
    )
    return definition.to_spec()


def serialize_problem(spec: ProblemSpec) -> str:
    """Render a DSL-born ProblemSpec back to problem-file text.

    Only specs produced by ``parse_problem`` (or carrying a
    ProblemDefinition) can be serialized; hand-built specs hold opaque
    callables and raise ValidationError.
    """
    d = spec.definition
    if not isinstance(d, ProblemDefinition):
        raise ValidationError("spec carries no parsed definition; only DSL-born specs serialize")
    lines = [f"dim = {d.dim}", f"lambda = {d.lam!r}", f"horizon = {d.horizon!r}", ""]
    lines.append("[f]")
    for i, e in enumerate(d.f_exprs):
        lines.append(f"x{i + 1} = {to_source(e)}")
    lines += ["", "[g]", f"tau = {to_source(d.g_expr)}", "", "[history]"]
    for bp, exprs in zip(d.hist_breakpoints, d.hist_segments):
        lines.append(f"segment {bp!r} = {', '.join(to_source(e) for e in exprs)}")
    lines.append(f"tail = {', '.join(to_source(e) for e in d.hist_tail)}")
    lines += ["", "[impulses]"]
    for tk, exprs in zip(d.impulse_times, d.impulse_jumps):
        lines.append(f"jump {tk!r} = {', '.join(to_source(e) for e in exprs)}")
    if d.hints:
        lines += ["", "[hints]"]
        for key, value in d.hints:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


def load_problem_file(path: str) -> ProblemSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_problem(fh.read())


def _bundled(name: str) -> str:
    return resources.files("epcadde.data").joinpath(name).read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# Built-in problems with their closed-form solutions.

# Clamped-delay benchmark: scalar state pushed toward 1 by its delayed
# value, delay law driven by (x-1)cos(5t) with the state factor clamped to
# [0, 2.3] so the delay growth rate stays globally Lipschitz.
_X_BREAKS_2 = (0.75, 1.5, 2.702320978, 3.488254843, 4.218920247)
_RATE_FAST = -0.4791287848
_RATE_SLOW = -0.02087121525


def _exact_x1(t: float) -> float:
    if t <= -3.0:
        return math.exp(3.0) + 1.0
    return math.exp(-t) + 1.0


def _exact_tau1(t: float) -> float:
    if t <= 0.0:
        return 2.0
    return 0.3 * math.exp(-t) * math.sin(5.0 * t) + 2.0


def _exact_x2(t: float) -> float:
    if t < 0.75:
        # covers t <= 0 as well: constant history 1 continues into -t/5 + 1
        return -t / 5.0 + 1.0 if t > 0.0 else 1.0
    if t < 1.5:
        return -t / 5.0 + 3.0
    if t < _X_BREAKS_2[2]:
        return -t / 5.0 + 2.25
    ef = math.exp(_RATE_FAST * t)
    es = math.exp(_RATE_SLOW * t)
    if t < _X_BREAKS_2[3]:
        return -110.0 - 0.1490476191 * ef + 112.5160738 * es + 2.000000001 * t
    if t < _X_BREAKS_2[4]:
        return -130.0 - 0.3512993334 * ef + 134.0673650 * es + 2.000000001 * t
    return -122.5 - 0.2436621429 * ef + 125.8614408 * es + 2.000000001 * t


def _exact_tau2(t: float) -> float:
    if t <= 0.0:
        return 2.0
    if t < 0.75:
        return 2.7 - t / 10.0 - 0.7 * math.exp(-t / 2.0)
    if t < 1.5:
        return 3.7 - t / 10.0 - 0.1 * math.exp(-t / 2.0) * (10.0 * math.exp(0.375) + 7.0)
    if t < _X_BREAKS_2[2]:
        return 3.325 - t / 10.0 - 0.025 * math.exp(-t / 2.0) * (
            -15.0 * math.exp(0.75) + 40.0 * math.exp(0.375) + 28.0
        )
    ef = math.exp(_RATE_FAST * t)
    es = math.exp(_RATE_SLOW * t)
    if t < _X_BREAKS_2[3]:
        return -55.00000002 + 58.70867993 * es - 1.785325143 * ef + 1.000000001 * t
    if t < _X_BREAKS_2[4]:
        return -65.00000002 + 69.95372081 * es - 4.207940644 * ef + 1.000000001 * t
    return -61.25000002 + 65.67203060 * es - 2.918638192 * ef + 1.000000001 * t


_BUILTIN_FILES = {
    "example1": "example1.prob",
    "example1-raw": "example1-raw.prob",
    "example2": "example2.prob",
}
_BUILTIN_EXACT = {
    "example1": (_exact_x1, _exact_tau1),
    "example1-raw": (_exact_x1, _exact_tau1),
    "example2": (_exact_x2, _exact_tau2),
}

BUILTIN_NAMES = tuple(sorted(_BUILTIN_FILES))


def builtin(name: str):
    """Return (ProblemSpec, exact_x, exact_tau) for a built-in problem.

    ``example1``: smooth clamped-delay benchmark on [0, 4] with closed form
    x = exp(-t) + 1, tau = 0.3 exp(-t) sin(5t) + 2.  ``example1-raw`` is the
    same with the delay law's state factor left unclamped (the closed form
    holds because the solution stays inside the clamp window).
    ``example2``: piecewise-linear impulsive benchmark on [0, 5] with jumps
    +2 at t=3/4 and -3/4 at t=3/2.  Exact callables accept any t <= horizon
    (history values for t <= 0).
    """
    if name not in _BUILTIN_FILES:
        raise UnknownProblem(f"unknown built-in {name!r}; available: {', '.join(BUILTIN_NAMES)}")
    spec = parse_problem(_bundled(_BUILTIN_FILES[name]))
    exact_x, exact_tau = _BUILTIN_EXACT[name]
    return spec, exact_x, exact_tau
