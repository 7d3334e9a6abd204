"""Polynomial vector fields in n real variables.

Provides the canonical representation (monomials with sorted exponent
tuples, like terms merged, zero terms dropped), a parser for the
system-config text format, exact evaluation, symbolic differentiation,
and a sound-but-incomplete syntactic lower-bound certifier.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "Monomial",
    "Polynomial",
    "PolyField",
    "SystemConfigError",
    "parse_system",
    "evaluate",
    "jacobian",
    "certify_lower_bound",
]


class SystemConfigError(ValueError):
    """Malformed system-config text; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Monomial:
    """A single term: coefficient times a product of variable powers."""

    coefficient: float
    exponents: tuple[int, ...]

    def __post_init__(self):
        if not np.isfinite(self.coefficient):
            raise ValueError("monomial coefficient must be finite")
        if any(e < 0 or int(e) != e for e in self.exponents):
            raise ValueError("exponents must be non-negative integers")
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    def evaluate(self, state: Sequence[float]) -> float:
        v = self.coefficient
        for x, e in zip(state, self.exponents):
            if e:
                v *= x ** e
        return v


@dataclass(frozen=True)
class Polynomial:
    """Canonical polynomial: terms sorted by exponent tuple, merged, nonzero."""

    terms: tuple[Monomial, ...]

    def __post_init__(self):
        keys = [m.exponents for m in self.terms]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate exponent tuples; use Polynomial.from_terms")
        if keys != sorted(keys):
            raise ValueError("terms not sorted; use Polynomial.from_terms")
        if any(m.coefficient == 0.0 for m in self.terms):
            raise ValueError("zero-coefficient term; use Polynomial.from_terms")

    @classmethod
    def from_terms(cls, terms: Iterable[Monomial]) -> "Polynomial":
        merged: dict[tuple[int, ...], float] = {}
        for m in terms:
            merged[m.exponents] = merged.get(m.exponents, 0.0) + m.coefficient
        kept = [Monomial(c, e) for e, c in sorted(merged.items()) if c != 0.0]
        return cls(tuple(kept))

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls(())

    @classmethod
    def constant(cls, value: float, n: int) -> "Polynomial":
        return cls.from_terms([Monomial(value, (0,) * n)])

    @classmethod
    def variable(cls, index: int, n: int) -> "Polynomial":
        exps = [0] * n
        exps[index] = 1
        return cls((Monomial(1.0, tuple(exps)),))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((m.degree for m in self.terms), default=0)

    def evaluate(self, state: Sequence[float]) -> float:
        return sum(m.evaluate(state) for m in self.terms)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial.from_terms(self.terms + other.terms)

    def __neg__(self) -> "Polynomial":
        return Polynomial(tuple(Monomial(-m.coefficient, m.exponents) for m in self.terms))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        prods = [
            Monomial(a.coefficient * b.coefficient,
                     tuple(ea + eb for ea, eb in zip(a.exponents, b.exponents)))
            for a in self.terms for b in other.terms
        ]
        return Polynomial.from_terms(prods)

    def __pow__(self, exponent: int) -> "Polynomial":
        if exponent < 0 or int(exponent) != exponent:
            raise ValueError("polynomial exponent must be a non-negative integer")
        n = len(self.terms[0].exponents) if self.terms else 0
        result = Polynomial.constant(1.0, n)
        for _ in range(int(exponent)):
            result = result * self
        return result

    def differentiate(self, index: int) -> "Polynomial":
        """Exact partial derivative with respect to variable `index`."""
        out = []
        for m in self.terms:
            e = m.exponents[index]
            if e:
                exps = list(m.exponents)
                exps[index] = e - 1
                out.append(Monomial(m.coefficient * e, tuple(exps)))
        return Polynomial.from_terms(out)

    def format(self, names: Sequence[str]) -> str:
        if not self.terms:
            return "0"
        pieces = []
        for i, m in enumerate(self.terms):
            factors = []
            for name, e in zip(names, m.exponents):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            c = abs(m.coefficient)
            if not factors or c != 1.0:
                factors.insert(0, repr(c))
            body = "*".join(factors)
            if i == 0:
                pieces.append(f"-{body}" if m.coefficient < 0 else body)
            else:
                pieces.append(f"- {body}" if m.coefficient < 0 else f"+ {body}")
        return " ".join(pieces)


class PolyField:
    """An n-component polynomial vector field f: R^n -> R^n.

    Immutable after construction; evaluation and Jacobian callables are
    compiled lazily and cached, so sharing one instance across threads
    or repeated integrations is cheap.
    """

    def __init__(
        self,
        components: Sequence[Polynomial],
        variable_names: Optional[Sequence[str]] = None,
        parameters: Optional[Mapping[str, float]] = None,
    ):
        self.components = tuple(components)
        self.dimension = len(self.components)
        if self.dimension < 1:
            raise ValueError("field needs at least one component")
        if variable_names is None:
            if self.dimension <= 3:
                variable_names = ("x", "y", "z")[: self.dimension]
            else:
                variable_names = tuple(f"x{i+1}" for i in range(self.dimension))
        self.variable_names = tuple(variable_names)
        if len(self.variable_names) != self.dimension:
            raise ValueError("variable_names length must equal dimension")
        self.parameters = MappingProxyType(dict(parameters or {}))
        for p in self.components:
            for m in p.terms:
                if len(m.exponents) != self.dimension:
                    raise ValueError("monomial exponent tuple has wrong length")
        self._rhs: Optional[Callable] = None
        self._jac: Optional[Callable] = None
        self._jac_polys: Optional[tuple] = None
        self._tangent_rhs: Optional[Callable] = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyField):
            return NotImplemented
        return (self.dimension == other.dimension
                and self.variable_names == other.variable_names
                and self.components == other.components)

    def __repr__(self) -> str:
        return f"PolyField(n={self.dimension}, vars={self.variable_names})"

    def __str__(self) -> str:
        return "\n".join(
            f"d{name}/dt = {p.format(self.variable_names)}"
            for name, p in zip(self.variable_names, self.components)
        )

    def _check_state(self, state) -> np.ndarray:
        arr = np.asarray(state, dtype=float)
        if arr.shape != (self.dimension,):
            raise ValueError(
                f"state has shape {arr.shape}, expected ({self.dimension},)")
        return arr

    def evaluate(self, state: Sequence[float]) -> np.ndarray:
        return self.compiled_rhs()(self._check_state(state))

    def jacobian(self, state: Sequence[float]) -> np.ndarray:
        return self.compiled_jacobian()(self._check_state(state))

    def jacobian_polynomials(self) -> tuple[tuple[Polynomial, ...], ...]:
        """The n x n grid of exact partial derivatives dF_i/dx_k."""
        if self._jac_polys is None:
            self._jac_polys = tuple(
                tuple(p.differentiate(k) for k in range(self.dimension))
                for p in self.components
            )
        return self._jac_polys

    def divergence(self) -> Polynomial:
        """Trace of the Jacobian as a polynomial (sum of dF_i/dx_i)."""
        out = Polynomial.zero()
        for i, p in enumerate(self.components):
            out = out + p.differentiate(i)
        return out

    # -- compiled callables ------------------------------------------------

    def compiled_rhs(self) -> Callable[[np.ndarray], np.ndarray]:
        """f(y) -> ndarray, generated and exec'd once per field."""
        if self._rhs is None:
            self._rhs = _compile_vector(self.components, self.dimension, "_rhs")
        return self._rhs

    def compiled_jacobian(self) -> Callable[[np.ndarray], np.ndarray]:
        if self._jac is None:
            flat = [p for row in self.jacobian_polynomials() for p in row]
            fn = _compile_vector(flat, self.dimension, "_jac")
            n = self.dimension
            self._jac = lambda y, _fn=fn, _n=n: _fn(y).reshape(_n, _n)
        return self._jac

    def compiled_tangent_rhs(self) -> Callable[[np.ndarray], np.ndarray]:
        """Augmented right-hand side for (x, V): returns (f(x), J(x) V) flat.

        Input and output are flat vectors of length n + n*n with V in
        row-major order.
        """
        if self._tangent_rhs is None:
            self._tangent_rhs = _compile_tangent(self)
        return self._tangent_rhs


# -- code generation -------------------------------------------------------


def _monomial_expr(m: Monomial) -> str:
    parts = [repr(m.coefficient)]
    for i, e in enumerate(m.exponents):
        if e == 1:
            parts.append(f"x{i}")
        elif e > 1:
            parts.append(f"x{i}**{e}")
    return "*".join(parts)


def _poly_expr(p: Polynomial) -> str:
    if not p.terms:
        return "0.0"
    return " + ".join(_monomial_expr(m) for m in p.terms)


def _unpack_lines(n: int, src: str = "y") -> list[str]:
    return [f"    x{i} = {src}[{i}]" for i in range(n)]


def _compile_vector(polys: Sequence[Polynomial], n: int, name: str) -> Callable:
    lines = [f"def {name}(y, _array=_array):"]
    lines += _unpack_lines(n)
    body = ", ".join(_poly_expr(p) for p in polys)
    lines.append(f"    return _array(({body},))")
    ns = {"_array": lambda t: np.array(t, dtype=float)}
    exec("\n".join(lines), ns)
    return ns[name]


def _compile_tangent(field: PolyField) -> Callable:
    n = field.dimension
    jac = field.jacobian_polynomials()
    lines = ["def _aug(w, _array=_array):"]
    lines += _unpack_lines(n, "w")
    for i in range(n):
        for k in range(n):
            lines.append(f"    j{i}{k} = {_poly_expr(jac[i][k])}")
    out = [_poly_expr(p) for p in field.components]
    # dV/dt = J V, with V unpacked row-major from w[n:]
    for i in range(n):
        for c in range(n):
            prods = [f"j{i}{k}*w[{n + k * n + c}]" for k in range(n)]
            out.append(" + ".join(prods))
    lines.append(f"    return _array(({', '.join(out)},))")
    ns = {"_array": lambda t: np.array(t, dtype=float)}
    exec("\n".join(lines), ns)
    return ns["_aug"]


# -- parsing ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*^()/=]))"
)


@dataclass
class _Token:
    kind: str  # "number" | "name" | "op" | "end"
    text: str
    line: int
    column: int


def _tokenize_line(text: str, lineno: int) -> list[_Token]:
    hash_pos = text.find("#")
    if hash_pos >= 0:
        text = text[:hash_pos]
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            col = pos + (len(text[pos:]) - len(stripped)) + 1
            raise SystemConfigError(f"unexpected character {stripped[0]!r}", lineno, col)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), lineno, m.start(kind) + 1))
        pos = m.end()
    return tokens


class _ExprParser:
    """Recursive descent over one equation's token list.

    Grammar: expr := ['+'|'-'] term (('+'|'-') term)*
             term := factor ('*' factor)*
             factor := base ['^' integer]
             base := NUMBER | NAME | '(' expr ')'
    """

    def __init__(self, tokens: list[_Token], lineno: int, n: int,
                 var_index: Mapping[str, int], params: Mapping[str, float]):
        self.tokens = tokens
        self.pos = 0
        self.lineno = lineno
        self.n = n
        self.var_index = var_index
        self.params = params

    def _peek(self) -> _Token:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        col = self.tokens[-1].column + len(self.tokens[-1].text) if self.tokens else 1
        return _Token("end", "", self.lineno, col)

    def _next(self) -> _Token:
        tok = self._peek()
        self.pos += 1
        return tok

    def _error(self, message: str, tok: _Token):
        raise SystemConfigError(message, tok.line, tok.column)

    def parse(self) -> Polynomial:
        poly = self.expr()
        tok = self._peek()
        if tok.kind != "end":
            self._error(f"unexpected {tok.text!r} after expression", tok)
        return poly

    def expr(self) -> Polynomial:
        tok = self._peek()
        negate = False
        if tok.kind == "op" and tok.text in "+-":
            self._next()
            negate = tok.text == "-"
        poly = self.term()
        if negate:
            poly = -poly
        while True:
            tok = self._peek()
            if tok.kind == "op" and tok.text in "+-":
                self._next()
                rhs = self.term()
                poly = poly - rhs if tok.text == "-" else poly + rhs
            else:
                return poly

    def term(self) -> Polynomial:
        poly = self.factor()
        while True:
            tok = self._peek()
            if tok.kind == "op" and tok.text == "*":
                self._next()
                poly = poly * self.factor()
            else:
                return poly

    def factor(self) -> Polynomial:
        poly = self.base()
        tok = self._peek()
        if tok.kind == "op" and tok.text == "^":
            self._next()
            etok = self._next()
            if etok.kind != "number" or not re.fullmatch(r"\d+", etok.text):
                self._error("exponent must be a non-negative integer literal", etok)
            if int(etok.text) > 64:
                self._error("exponent too large (limit 64)", etok)
            poly = poly ** int(etok.text)
        return poly

    def base(self) -> Polynomial:
        tok = self._next()
        if tok.kind == "number":
            value = float(tok.text)
            if not np.isfinite(value):
                self._error("numeric literal overflows double precision", tok)
            return Polynomial.constant(value, self.n)
        if tok.kind == "name":
            if tok.text in self.var_index:
                return Polynomial.variable(self.var_index[tok.text], self.n)
            if tok.text in self.params:
                return Polynomial.constant(self.params[tok.text], self.n)
            self._error(f"undefined variable or parameter {tok.text!r}", tok)
        if tok.kind == "op" and tok.text == "(":
            poly = self.expr()
            closing = self._next()
            if closing.kind != "op" or closing.text != ")":
                self._error("expected ')'", closing)
            return poly
        if tok.kind == "end":
            self._error("unexpected end of expression", tok)
        self._error(f"unexpected {tok.text!r}", tok)


def parse_system(text: str) -> PolyField:
    """Parse system-config text into a canonical PolyField.

    Format: zero or more `param name=value` lines, then one
    `d<var>/dt = <expr>` line per state variable. Equation order fixes
    component order; parameters are substituted numerically here.
    """
    params: dict[str, float] = {}
    equations: list[tuple[str, list[_Token], int, _Token]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokenize_line(raw, lineno)
        if not tokens:
            continue
        head = tokens[0]
        if head.kind == "name" and head.text == "param":
            _parse_param_line(tokens, lineno, params)
        else:
            var, rhs_tokens = _split_equation(tokens, lineno)
            if any(var == v for v, *_ in equations):
                raise SystemConfigError(
                    f"duplicate equation for {var!r}", lineno, head.column)
            equations.append((var, rhs_tokens, lineno, head))

    if not equations:
        raise SystemConfigError("no equations found", 1, 1)

    names = [var for var, *_ in equations]
    clash = set(names) & set(params)
    if clash:
        name = sorted(clash)[0]
        raise SystemConfigError(
            f"{name!r} is declared both as parameter and state variable", 1, 1)
    var_index = {v: i for i, v in enumerate(names)}
    n = len(names)

    components = []
    for var, rhs_tokens, lineno, _head in equations:
        parser = _ExprParser(rhs_tokens, lineno, n, var_index, params)
        components.append(parser.parse())

    return PolyField(components, names, params)


def _parse_param_line(tokens: list[_Token], lineno: int, params: dict[str, float]):
    def expect(i: int, kind: str, text: Optional[str] = None, what: str = "") -> _Token:
        if i >= len(tokens):
            last = tokens[-1]
            raise SystemConfigError(
                f"expected {what} in param line", lineno, last.column + len(last.text))
        tok = tokens[i]
        if tok.kind != kind or (text is not None and tok.text != text):
            raise SystemConfigError(f"expected {what} in param line", tok.line, tok.column)
        return tok

    name_tok = expect(1, "name", what="parameter name")
    expect(2, "op", "=", what="'='")
    idx = 3
    sign = 1.0
    if idx < len(tokens) and tokens[idx].kind == "op" and tokens[idx].text in "+-":
        sign = -1.0 if tokens[idx].text == "-" else 1.0
        idx += 1
    value_tok = expect(idx, "number", what="numeric value")
    if idx + 1 < len(tokens):
        extra = tokens[idx + 1]
        raise SystemConfigError(
            f"unexpected {extra.text!r} after param value", extra.line, extra.column)
    if name_tok.text in params:
        raise SystemConfigError(
            f"duplicate param {name_tok.text!r}", lineno, name_tok.column)
    value = sign * float(value_tok.text)
    if not np.isfinite(value):
        raise SystemConfigError(
            "param value overflows double precision", value_tok.line, value_tok.column)
    params[name_tok.text] = value


def _split_equation(tokens: list[_Token], lineno: int) -> tuple[str, list[_Token]]:
    head = tokens[0]
    if head.kind != "name" or not head.text.startswith("d") or len(head.text) < 2:
        raise SystemConfigError(
            "expected 'param' or 'd<var>/dt = ...'", head.line, head.column)
    fail = SystemConfigError("equation must start 'd<var>/dt ='", head.line, head.column)
    if len(tokens) < 4:
        raise fail
    slash, dt, eq = tokens[1], tokens[2], tokens[3]
    if not (slash.kind == "op" and slash.text == "/"
            and dt.kind == "name" and dt.text == "dt"
            and eq.kind == "op" and eq.text == "="):
        raise fail
    if len(tokens) == 4:
        raise SystemConfigError(
            "empty right-hand side", lineno, eq.column + 1)
    return head.text[1:], tokens[4:]


# -- module-level operations ------------------------------------------------


def evaluate(field: PolyField, state: Sequence[float]) -> np.ndarray:
    """Evaluate the field: component-wise exact monomial sums."""
    return field.evaluate(state)


def jacobian(field: PolyField, state: Sequence[float]) -> np.ndarray:
    """Exact symbolic Jacobian of the field at `state`."""
    return field.jacobian(state)


def certify_lower_bound(poly: Polynomial) -> Optional[float]:
    """Sound syntactic lower bound: c0 when every non-constant term has
    all-even exponents and a non-negative coefficient; None otherwise.

    None means "could not certify", not "unbounded below".
    """
    alpha = 0.0
    for m in poly.terms:
        if m.degree == 0:
            alpha = m.coefficient
        elif any(e % 2 for e in m.exponents) or m.coefficient < 0.0:
            return None
    return alpha
