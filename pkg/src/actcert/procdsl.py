"""A small textual language for guarded probabilistic/demonic transition systems.

Example::

    system symmetric_walk
    var s : int
    target : s == 0
    rule when true :
      choice :
        1/2 -> s := s + 1
        1/2 -> s := s - 1
    variant : abs(s)
    pd : p = piecewise { else : 1/2 }, d = piecewise { else : 1 }
    init : 1

A ``rule`` holds one or more ``choice`` blocks.  Each choice is one demonic
option and lists its probabilistic branches.  The first rule whose guard holds
determines the options at a state.  Expressions end at a line break unless
they are inside brackets.  All arithmetic is exact over the rationals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from actcert.model import (
    Distribution,
    MonotoneStepFn,
    ModelError,
    NablaWitness,
    PdWitness,
    TransitionSystem,
    UncoveredStateError,
    Variant,
)


class DslError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        where = f"line {line}, col {col}: " if line else ""
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# Lexer

KEYWORDS = {
    "system", "var", "int", "target", "rule", "when", "choice", "variant",
    "pd", "nabla", "piecewise", "else", "init", "and", "or", "not", "true", "false",
}
FUNCTIONS = {"abs": (1, 1), "min": (1, None), "max": (1, None), "pow": (2, 2)}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<rational>\d+/\d+)
  | (?P<decimal>\d+\.\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|->|==|!=|<=|>=|[-+*/<>(){}:;,=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "ident", "kw", "op", "nl", "eof"
    text: str
    line: int
    col: int
    value: Optional[Fraction] = None


def tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    line, line_start, depth = 1, 0, 0
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise DslError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        pos = m.end()
        if kind in ("ws", "comment"):
            continue
        if kind == "newline":
            if depth == 0 and tokens and tokens[-1].kind != "nl":
                tokens.append(Token("nl", "\\n", line, col))
            line += 1
            line_start = pos
            continue
        if kind == "rational":
            num, den = text.split("/")
            if int(den) == 0:
                raise DslError("division by zero in literal", line, col)
            tokens.append(Token("num", text, line, col, Fraction(int(num), int(den))))
        elif kind in ("decimal", "int"):
            tokens.append(Token("num", text, line, col, Fraction(text)))
        elif kind == "ident":
            tokens.append(Token("kw" if text in KEYWORDS else "ident", text, line, col))
        else:
            if text in "({":
                depth += 1
            elif text in ")}":
                depth = max(0, depth - 1)
            tokens.append(Token("op", text, line, col))
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: Fraction
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class BoolLit:
    value: bool
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "not"
    operand: "Expr"
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Expr", ...]
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


Expr = Union[Num, BoolLit, Var, Unary, Binary, Call]


@dataclass(frozen=True)
class Piecewise:
    pieces: Tuple[Tuple[Fraction, Expr], ...]
    default: Expr
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Branch:
    prob: Expr
    updates: Tuple[Tuple[str, Expr], ...]
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Choice:
    branches: Tuple[Branch, ...]
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Rule:
    guard: Expr
    choices: Tuple[Choice, ...]
    pos: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class SystemSpec:
    name: str
    variables: Tuple[str, ...]
    target: Expr
    rules: Tuple[Rule, ...]
    variant: Optional[Expr]
    pd: Optional[Tuple[Piecewise, Piecewise]]
    nabla: Optional[Piecewise]
    inits: Tuple[Tuple[Expr, ...], ...]


# ---------------------------------------------------------------------------
# Parser

_COMPARISONS = ("==", "!=", "<=", ">=", "<", ">")


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.toks = tokens
        self.i = 0
        self.variables: List[str] = []
        self._allow_vars = True

    # token helpers
    def peek(self) -> Token:
        return self.toks[self.i]

    def skip_nl(self):
        while self.toks[self.i].kind == "nl":
            self.i += 1

    def at(self, text: str, skip: bool = True) -> bool:
        if skip:
            self.skip_nl()
        t = self.peek()
        return t.kind in ("kw", "op") and t.text == text

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise DslError(msg, tok.line, tok.col)

    def expect_ident(self) -> Token:
        self.skip_nl()
        t = self.peek()
        if t.kind != "ident":
            self.error(f"expected identifier, found {t.text!r}")
        return self.advance()

    # grammar
    def parse_system(self) -> SystemSpec:
        self.expect("system")
        name = self.expect_ident().text
        while self.at("var"):
            self.advance()
            tok = self.expect_ident()
            if tok.text in self.variables:
                self.error(f"duplicate variable {tok.text!r}", tok)
            if tok.text == "v":
                self.error("'v' is reserved for witness arguments", tok)
            self.expect(":")
            self.expect("int")
            self.variables.append(tok.text)
        if not self.variables:
            self.error("at least one 'var' declaration is required")
        self.expect("target")
        self.expect(":")
        target = self.parse_expr()
        rules = []
        while self.at("rule"):
            rules.append(self.parse_rule())
        if not rules:
            self.error("at least one 'rule' is required")
        variant = None
        if self.at("variant"):
            self.advance()
            self.expect(":")
            variant = self.parse_expr()
        pd = nabla = None
        while self.at("pd") or self.at("nabla"):
            tok = self.advance()
            self.expect(":")
            if tok.text == "pd":
                if pd is not None:
                    self.error("duplicate 'pd' witness", tok)
                self.expect("p")
                self.expect("=")
                p = self.parse_piecewise()
                self.expect(",")
                self.expect("d")
                self.expect("=")
                d = self.parse_piecewise()
                pd = (p, d)
            else:
                if nabla is not None:
                    self.error("duplicate 'nabla' witness", tok)
                nabla = self.parse_piecewise()
        inits = []
        while self.at("init"):
            self.advance()
            self.expect(":")
            coords = [self.parse_expr()]
            while self.at(",", skip=False):
                self.advance()
                coords.append(self.parse_expr())
            if len(coords) != len(self.variables):
                self.error(f"init has {len(coords)} coordinates, system has {len(self.variables)} variables")
            inits.append(tuple(coords))
        if not inits:
            self.error("at least one 'init' line is required")
        self.skip_nl()
        if self.peek().kind != "eof":
            self.error(f"unexpected {self.peek().text!r}")
        return SystemSpec(name, tuple(self.variables), target, tuple(rules), variant, pd, nabla, tuple(inits))

    def expect(self, text: str) -> Token:
        """Consume ``text``; identifiers count too so that ``p``/``d``/``v`` can be matched."""
        self.skip_nl()
        t = self.peek()
        if t.kind in ("kw", "op", "ident") and t.text == text:
            return self.advance()
        found = "end of input" if t.kind == "eof" else repr(t.text)
        self.error(f"expected {text!r}, found {found}")

    def parse_rule(self) -> Rule:
        tok = self.expect("rule")
        self.expect("when")
        guard = self.parse_expr()
        self.expect(":")
        choices = []
        while self.at("choice"):
            choices.append(self.parse_choice())
        if not choices:
            self.error("a rule needs at least one 'choice'")
        return Rule(guard, tuple(choices), (tok.line, tok.col))

    def parse_choice(self) -> Choice:
        tok = self.expect("choice")
        self.expect(":")
        branches = []
        while True:
            self.skip_nl()
            t = self.peek()
            if t.kind == "eof" or (t.kind == "kw" and t.text not in ("not", "true", "false")):
                break
            branches.append(self.parse_branch())
        if not branches:
            self.error("a choice needs at least one branch")
        probs = [b.prob for b in branches]
        if all(_is_constant(p) for p in probs):
            total = sum((_const_value(p) for p in probs), Fraction(0))
            if total != 1:
                raise DslError(f"branch probabilities sum to {_fmt(total)} ≠ 1", tok.line, tok.col)
        return Choice(tuple(branches), (tok.line, tok.col))

    def parse_branch(self) -> Branch:
        self.skip_nl()
        start = self.peek()
        prob = self.parse_expr()
        self.expect("->")
        updates = []
        seen = set()
        while True:
            tok = self.expect_ident()
            if tok.text not in self.variables:
                self.error(f"unknown identifier {tok.text!r}", tok)
            if tok.text in seen:
                self.error(f"variable {tok.text!r} assigned twice in one branch", tok)
            seen.add(tok.text)
            self.expect(":=")
            updates.append((tok.text, self.parse_expr()))
            if self.at(",", skip=False):
                self.advance()
                continue
            break
        return Branch(prob, tuple(updates), (start.line, start.col))

    def parse_piecewise(self) -> Piecewise:
        tok = self.expect("piecewise")
        self.expect("{")
        pieces = []
        while not self.at("else"):
            self.expect("v")
            self.expect("<=")
            t = self.peek()
            if t.kind != "num":
                self.error("expected a numeric breakpoint")
            self.advance()
            self.expect(":")
            val = self.parse_expr(allow_vars=False)
            self.expect(";")
            pieces.append((t.value, val))
        self.expect("else")
        self.expect(":")
        default = self.parse_expr(allow_vars=False)
        if self.at(";"):
            self.advance()
        self.expect("}")
        return Piecewise(tuple(pieces), default, (tok.line, tok.col))

    # expressions
    def parse_expr(self, allow_vars: bool = True) -> Expr:
        saved = self._allow_vars
        self._allow_vars = allow_vars
        try:
            return self.parse_or()
        finally:
            self._allow_vars = saved

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at("or", skip=False):
            t = self.advance()
            left = Binary("or", left, self.parse_and(), (t.line, t.col))
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.at("and", skip=False):
            t = self.advance()
            left = Binary("and", left, self.parse_not(), (t.line, t.col))
        return left

    def parse_not(self) -> Expr:
        if self.at("not"):
            t = self.advance()
            return Unary("not", self.parse_not(), (t.line, t.col))
        return self.parse_cmp()

    def parse_cmp(self) -> Expr:
        left = self.parse_add()
        t = self.peek()
        if t.kind == "op" and t.text in _COMPARISONS:
            self.advance()
            right = self.parse_add()
            left = Binary(t.text, left, right, (t.line, t.col))
            t2 = self.peek()
            if t2.kind == "op" and t2.text in _COMPARISONS:
                self.error("comparisons do not chain; use 'and'", t2)
        return left

    def parse_add(self) -> Expr:
        left = self.parse_mul()
        while self.peek().kind == "op" and self.peek().text in "+-":
            t = self.advance()
            left = Binary(t.text, left, self.parse_mul(), (t.line, t.col))
        return left

    def parse_mul(self) -> Expr:
        left = self.parse_unary()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            t = self.advance()
            left = Binary(t.text, left, self.parse_unary(), (t.line, t.col))
        return left

    def parse_unary(self) -> Expr:
        if self.at("-"):
            t = self.advance()
            return Unary("-", self.parse_unary(), (t.line, t.col))
        return self.parse_primary()

    def parse_primary(self) -> Expr:
        self.skip_nl()
        t = self.peek()
        if t.kind == "num":
            self.advance()
            return Num(t.value, (t.line, t.col))
        if t.kind == "kw" and t.text in ("true", "false"):
            self.advance()
            return BoolLit(t.text == "true", (t.line, t.col))
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.parse_or()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.advance()
            if self.at("(", skip=False):
                if t.text not in FUNCTIONS:
                    self.error(f"unknown function {t.text!r}", t)
                self.advance()
                args = [self.parse_or()]
                while self.at(","):
                    self.advance()
                    args.append(self.parse_or())
                self.expect(")")
                lo, hi = FUNCTIONS[t.text]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    self.error(f"wrong number of arguments to {t.text}", t)
                return Call(t.text, tuple(args), (t.line, t.col))
            if not self._allow_vars or t.text not in self.variables:
                self.error(f"unknown identifier {t.text!r}", t)
            return Var(t.text, (t.line, t.col))
        found = "end of input" if t.kind == "eof" else repr(t.text)
        self.error(f"expected an expression, found {found}")


def parse(source: str) -> SystemSpec:
    """Parse DSL source into a ``SystemSpec``; raises ``DslError`` with a position."""
    return _Parser(tokenize(source)).parse_system()


# ---------------------------------------------------------------------------
# Pretty printing


def _fmt(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def pretty_expr(e: Expr) -> str:
    if isinstance(e, Num):
        return _fmt(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        return f"(not {pretty_expr(e.operand)})" if e.op == "not" else f"(-{pretty_expr(e.operand)})"
    if isinstance(e, Binary):
        return f"({pretty_expr(e.left)} {e.op} {pretty_expr(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(pretty_expr(a) for a in e.args)})"
    raise TypeError(e)


def pretty_piecewise(pw: Piecewise) -> str:
    parts = [f"v <= {_fmt(b)} : {pretty_expr(val)};" for b, val in pw.pieces]
    parts.append(f"else : {pretty_expr(pw.default)}")
    return "piecewise { " + " ".join(parts) + " }"


def pretty(spec: SystemSpec) -> str:
    lines = [f"system {spec.name}"]
    lines += [f"var {v} : int" for v in spec.variables]
    lines.append(f"target : {pretty_expr(spec.target)}")
    for r in spec.rules:
        lines.append(f"rule when {pretty_expr(r.guard)} :")
        for c in r.choices:
            lines.append("  choice :")
            for b in c.branches:
                ups = ", ".join(f"{n} := {pretty_expr(e)}" for n, e in b.updates)
                lines.append(f"    {pretty_expr(b.prob)} -> {ups}")
    if spec.variant is not None:
        lines.append(f"variant : {pretty_expr(spec.variant)}")
    if spec.pd is not None:
        lines.append(f"pd : p = {pretty_piecewise(spec.pd[0])}, d = {pretty_piecewise(spec.pd[1])}")
    if spec.nabla is not None:
        lines.append(f"nabla : {pretty_piecewise(spec.nabla)}")
    for init in spec.inits:
        lines.append("init : " + ", ".join(pretty_expr(e) for e in init))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Evaluation


def _is_constant(e: Expr) -> bool:
    if isinstance(e, Var):
        return False
    if isinstance(e, (Num, BoolLit)):
        return True
    if isinstance(e, Unary):
        return _is_constant(e.operand)
    if isinstance(e, Binary):
        return _is_constant(e.left) and _is_constant(e.right)
    if isinstance(e, Call):
        return all(_is_constant(a) for a in e.args)
    return False


def _const_value(e: Expr):
    return compile_expr(e, {})(())


def _norm(x):
    if isinstance(x, Fraction) and x.denominator == 1:
        return int(x.numerator)
    return x


def _pow(base, exp):
    if isinstance(exp, Fraction):
        if exp.denominator != 1:
            raise DslError("pow needs an integer exponent")
        exp = exp.numerator
    if isinstance(exp, bool) or not isinstance(exp, int):
        raise DslError("pow needs an integer exponent")
    if exp < 0:
        if base == 0:
            raise DslError("pow: zero to a negative power")
        return Fraction(1) / (Fraction(base) ** -exp)
    return base ** exp


def _div(a, b):
    if b == 0:
        raise DslError("division by zero")
    return _norm(Fraction(a) / b)


_ARITH = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def compile_expr(e: Expr, index: Dict[str, int]) -> Callable[[Tuple[int, ...]], object]:
    """Compile an expression into a closure over a state tuple (exact arithmetic)."""
    if isinstance(e, Num):
        val = _norm(e.value)
        return lambda s: val
    if isinstance(e, BoolLit):
        val = e.value
        return lambda s: val
    if isinstance(e, Var):
        if e.name not in index:
            raise DslError(f"unknown identifier {e.name!r}", *e.pos)
        k = index[e.name]
        return lambda s: s[k]
    if isinstance(e, Unary):
        f = compile_expr(e.operand, index)
        if e.op == "not":
            return lambda s: not f(s)
        return lambda s: -f(s)
    if isinstance(e, Binary):
        f, g = compile_expr(e.left, index), compile_expr(e.right, index)
        if e.op == "and":
            return lambda s: bool(f(s)) and bool(g(s))
        if e.op == "or":
            return lambda s: bool(f(s)) or bool(g(s))
        op = _ARITH[e.op]
        return lambda s: op(f(s), g(s))
    if isinstance(e, Call):
        fs = [compile_expr(a, index) for a in e.args]
        if e.func == "abs":
            return lambda s: abs(fs[0](s))
        if e.func == "min":
            return lambda s: min(f(s) for f in fs)
        if e.func == "max":
            return lambda s: max(f(s) for f in fs)
        if e.func == "pow":
            return lambda s: _norm(_pow(fs[0](s), fs[1](s)))
    raise DslError(f"cannot evaluate {e!r}")


def _as_int(x, what: str) -> int:
    if isinstance(x, bool):
        raise DslError(f"{what} evaluated to a boolean")
    if isinstance(x, int):
        return x
    if isinstance(x, Fraction) and x.denominator == 1:
        return int(x.numerator)
    raise DslError(f"{what} evaluated to non-integer {x}")


def piecewise_to_step(pw: Piecewise) -> MonotoneStepFn:
    """Translate a piecewise witness to a ``MonotoneStepFn``, validating monotonicity."""
    bps = [b for b, _ in pw.pieces]
    vals = [_const_value(v) for _, v in pw.pieces] + [_const_value(pw.default)]
    vals = [Fraction(v) if not isinstance(v, Fraction) else v for v in vals]
    try:
        return MonotoneStepFn(tuple(bps), tuple(vals))
    except ModelError as exc:
        raise DslError(f"invalid piecewise witness: {exc}", *pw.pos) from None


def step_to_piecewise_text(fn: MonotoneStepFn) -> str:
    """Render a step function in the DSL's piecewise syntax (values as exact literals)."""

    def lit(x):
        if isinstance(x, float):
            x = Fraction(x).limit_denominator(10**12)
        return _fmt(Fraction(x))

    parts = [f"v <= {lit(b)} : {lit(val)};" for b, val in zip(fn.breakpoints, fn.values)]
    parts.append(f"else : {lit(fn.values[-1])}")
    return "piecewise { " + " ".join(parts) + " }"


@dataclass(frozen=True)
class Elaborated:
    system: TransitionSystem
    variant: Optional[Variant]
    pd: Optional[PdWitness]
    nabla: Optional[NablaWitness]
    spec: SystemSpec


def elaborate(spec: SystemSpec) -> Elaborated:
    """Compile a parsed system into model objects with exact rational closures."""
    index = {name: i for i, name in enumerate(spec.variables)}
    arity = len(spec.variables)
    target_fn = compile_expr(spec.target, index)

    compiled_rules = []
    for rule in spec.rules:
        guard = compile_expr(rule.guard, index)
        choices = []
        for choice in rule.choices:
            branches = []
            for br in choice.branches:
                prob = compile_expr(br.prob, index)
                ups = tuple((index[n], compile_expr(e, index)) for n, e in br.updates)
                branches.append((prob, ups, br.pos))
            choices.append((branches, choice.pos))
        compiled_rules.append((guard, choices))

    def is_target(s):
        return bool(target_fn(s))

    def transitions(s):
        for guard, choices in compiled_rules:
            if not guard(s):
                continue
            out = []
            for branches, cpos in choices:
                pairs = []
                for prob, ups, bpos in branches:
                    p = prob(s)
                    if isinstance(p, bool) or not isinstance(p, (int, Fraction)):
                        raise DslError(f"non-rational probability at state {s}", *bpos)
                    if p < 0:
                        raise DslError(f"negative probability {_fmt(Fraction(p))} at state {s}", *bpos)
                    new = list(s)
                    for k, f in ups:
                        new[k] = _as_int(f(s), "update")
                    pairs.append((tuple(new), Fraction(p)))
                try:
                    out.append(Distribution.from_pairs(pairs))
                except ModelError as exc:
                    raise DslError(f"at state {s}: {exc}", *cpos) from None
            return out
        raise UncoveredStateError(s)

    inits = tuple(tuple(_as_int(compile_expr(e, index)(()), "init") for e in init) for init in spec.inits)
    system = TransitionSystem(arity, is_target, transitions, inits, spec.name, True)

    variant = None
    if spec.variant is not None:
        vf = compile_expr(spec.variant, index)

        def veval(s, vf=vf):
            x = vf(s)
            if isinstance(x, bool):
                raise DslError("variant evaluated to a boolean")
            return x

        variant = Variant(veval, None, arity, spec.name)
    pd = None
    if spec.pd is not None:
        p, d = piecewise_to_step(spec.pd[0]), piecewise_to_step(spec.pd[1])
        try:
            pd = PdWitness(p, d)
        except ModelError as exc:
            raise DslError(str(exc), *spec.pd[0].pos) from None
    nabla = NablaWitness(piecewise_to_step(spec.nabla)) if spec.nabla is not None else None
    return Elaborated(system, variant, pd, nabla, spec)


def load(source: str) -> Elaborated:
    return elaborate(parse(source))

def compile_function(source: str, variables: Sequence[str] = ()) -> Callable[..., object]:
    """Compile a standalone expression over the named variables.

    The returned function takes the variable values positionally, e.g.
    ``compile_function("1/(n + 1)", ["n"])(3) == Fraction(1, 4)``.
    """
    parser = _Parser(tokenize(source))
    parser.variables = list(variables)
    expr = parser.parse_expr()
    parser.skip_nl()
    if parser.peek().kind != "eof":
        parser.error(f"unexpected {parser.peek().text!r} after expression")
    f = compile_expr(expr, {name: i for i, name in enumerate(variables)})
    return lambda *args: f(tuple(args))


def eval_constant(source: str):
    """Evaluate a variable-free expression exactly."""
    return compile_function(source)()
