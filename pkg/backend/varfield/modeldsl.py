"""Model definition language.

A model file is a sequence of line-oriented statements (``#`` starts a
comment, a trailing ``\\`` continues a line)::

    dim 2
    field w[A:3, mu:dim]
    const c[A:3, B:3, C:3] antisymmetric = levi_civita
    metric = diag(1, -1)
    F[A,mu,nu] = d(mu, w[A,nu]) - d(nu, w[A,mu]) + c[A,B,C]*w[B,mu]*w[C,nu]
    lagrangian = -1/4 * F[A,mu,nu]*g[mu,rho]*g[nu,sig]*F[B,rho,sig]*delta[A,B]
    vecfield psi = { w[A,mu]: arbitrary }
    section flat = { w[A,mu]: 0 }

Repeated indices follow the Einstein convention over the concrete declared
ranges and are expanded when the model is parsed. The full grammar is in
docs/dsl.md.
"""
from __future__ import annotations

import itertools
import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import sympy

from .calcforms import Form, volume
from .errors import DerivationError, ModelParseError, UnknownNameError
from .jetgeom import ConstTable, JetContext, Section, VecField, total_derivative
from .symkernel import MultiIndex, base_name, canonicalize, parse_base_name

logger = logging.getLogger(__name__)

Position = Tuple[int, int]

_TOKEN = re.compile(
    r"""
    (?P<NUMBER>\d+(?:\.\d+)?)
    |(?P<NAME>[A-Za-z][A-Za-z0-9]*)
    |(?P<POW>\*\*|\^)
    |(?P<OP>[-+*/=(),;:\[\]{}_])
    |(?P<SPACE>[ \t]+)
    |(?P<MISMATCH>.)
    """,
    re.VERBOSE,
)
_DERIV_NAME = re.compile(r"^d(?P<index>[0-9]+)$")

FUNCTIONS: Dict[str, Callable[[sympy.Expr], sympy.Expr]] = {"sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp}
KEYWORDS = {"dim", "field", "const", "metric", "lagrangian", "vecfield", "section", "arbitrary", "sum", "d", "diag"}
CONST_RULES = ("levi_civita", "kronecker", "zero")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int

    @property
    def pos(self) -> Position:
        return (self.line, self.column)


def _logical_lines(text: str) -> Iterator[Tuple[int, str]]:
    pending = ""
    start = 0
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not pending:
            start = number
        if line.endswith("\\"):
            pending += line[:-1] + " "
            continue
        pending += line
        if pending.strip():
            yield start, pending
        pending = ""
    if pending.strip():
        yield start, pending


def tokenize(line: str, number: int) -> List[Token]:
    tokens = []
    for match in _TOKEN.finditer(line):
        kind = match.lastgroup
        column = match.start() + 1
        if kind == "SPACE":
            continue
        if kind == "MISMATCH":
            raise ModelParseError(f"unexpected character '{match.group()}'", number, column)
        if kind == "OP":
            kind = match.group()
        tokens.append(Token(kind, match.group(), number, column))
    return tokens


# ---------------------------------------------------------------------------
# syntax tree


@dataclass(frozen=True)
class Slot:
    pos: Position
    value: Optional[int] = None
    name: Optional[str] = None


class Node:
    pos: Position

    def __post_init__(self) -> None:
        self.free: Dict[str, Position] = {}
        self.summed: Dict[str, int] = {}


@dataclass(eq=False)
class Num(Node):
    pos: Position
    value: sympy.Rational


@dataclass(eq=False)
class Arbitrary(Node):
    pos: Position


@dataclass(eq=False)
class Ref(Node):
    pos: Position
    name: str
    slots: Tuple[Slot, ...] = ()
    suffix: Tuple[Slot, ...] = ()


@dataclass(eq=False)
class Neg(Node):
    pos: Position
    arg: Node


@dataclass(eq=False)
class Add(Node):
    pos: Position
    terms: List[Tuple[int, Node]]


@dataclass(eq=False)
class Mul(Node):
    pos: Position
    factors: List[Node]


@dataclass(eq=False)
class Inv(Node):
    pos: Position
    arg: Node


@dataclass(eq=False)
class Pow(Node):
    pos: Position
    base: Node
    exponent: Node


@dataclass(eq=False)
class Call(Node):
    pos: Position
    func: str
    arg: Node


@dataclass(eq=False)
class Deriv(Node):
    pos: Position
    slot: Slot
    arg: Node


@dataclass(eq=False)
class Sum(Node):
    pos: Position
    slot: Slot
    arg: Node


class _TokenStream:
    def __init__(self, tokens: Sequence[Token], line: int):
        self.tokens = list(tokens)
        self.index = 0
        self.line = line

    @property
    def current(self) -> Optional[Token]:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def position(self) -> Position:
        token = self.current
        if token is None:
            last = self.tokens[-1] if self.tokens else None
            return (self.line, last.column + len(last.text) if last else 1)
        return token.pos

    def peek(self, kind: str, text: Optional[str] = None) -> bool:
        token = self.current
        return token is not None and token.kind == kind and (text is None or token.text == text)

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[Token]:
        if self.peek(kind, text):
            token = self.current
            self.index += 1
            return token
        return None

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        token = self.accept(kind, text)
        if token is None:
            found = self.current.text if self.current else "end of line"
            wanted = text or kind
            line, column = self.position()
            raise ModelParseError(f"expected '{wanted}', found '{found}'", line, column)
        return token

    def done(self) -> bool:
        return self.current is None

    def finish(self) -> None:
        if not self.done():
            line, column = self.position()
            raise ModelParseError(f"unexpected '{self.current.text}'", line, column)


class _ExpressionParser:
    """Recursive-descent parser producing the syntax tree of one expression."""

    def __init__(self, stream: _TokenStream):
        self.stream = stream

    # <EXPR> -> <TERM> { ( '+' | '-' ) <TERM> }*
    def expression(self) -> Node:
        pos = self.stream.position()
        terms = [(1, self.term())]
        while self.stream.peek("+") or self.stream.peek("-"):
            sign = 1
            if not self.stream.accept("+"):
                self.stream.expect("-")
                sign = -1
            terms.append((sign, self.term()))
        if len(terms) == 1:
            return terms[0][1]
        return Add(pos, terms)

    # <TERM> -> <UNARY> { ( '*' | '/' ) <UNARY> }*
    def term(self) -> Node:
        pos = self.stream.position()
        factors = [self.unary()]
        while self.stream.peek("*") or self.stream.peek("/"):
            if self.stream.accept("*"):
                factors.append(self.unary())
            else:
                divisor_pos = self.stream.expect("/").pos
                factors.append(Inv(divisor_pos, self.unary()))
        if len(factors) == 1:
            return factors[0]
        return Mul(pos, factors)

    # <UNARY> -> '-' <UNARY> | '+' <UNARY> | <POWER>
    def unary(self) -> Node:
        token = self.stream.accept("-")
        if token is not None:
            return Neg(token.pos, self.unary())
        if self.stream.accept("+"):
            return self.unary()
        return self.power()

    # <POWER> -> <ATOM> [ '^' <UNARY> ]
    def power(self) -> Node:
        base = self.atom()
        token = self.stream.accept("POW")
        if token is not None:
            return Pow(token.pos, base, self.unary())
        return base

    # <ATOM> -> NUMBER | '(' <EXPR> ')' | <CALL> | <REF>
    def atom(self) -> Node:
        stream = self.stream
        number = stream.accept("NUMBER")
        if number is not None:
            return Num(number.pos, sympy.Rational(number.text))
        if stream.accept("("):
            inner = self.expression()
            stream.expect(")")
            return inner
        token = stream.expect("NAME")
        name = token.text
        if name == "arbitrary":
            return Arbitrary(token.pos)
        if name in FUNCTIONS:
            stream.expect("(")
            arg = self.expression()
            stream.expect(")")
            return Call(token.pos, name, arg)
        if name == "d":
            stream.expect("(")
            slot = self.slot()
            stream.expect(",")
            arg = self.expression()
            stream.expect(")")
            return Deriv(token.pos, slot, arg)
        if name == "sum":
            stream.expect("(")
            slot = self.slot()
            if slot.name is None:
                raise ModelParseError("sum needs an index name", *slot.pos)
            stream.expect(",")
            arg = self.expression()
            stream.expect(")")
            return Sum(token.pos, slot, arg)
        match = _DERIV_NAME.match(name)
        if match and stream.peek("("):
            stream.expect("(")
            arg = self.expression()
            stream.expect(")")
            return Deriv(token.pos, Slot(token.pos, value=int(match.group("index"))), arg)
        return self.reference(token)

    # <REF> -> NAME [ '[' <SLOT> { ',' <SLOT> }* ']' ] [ '_' '{' <SLOT> { ',' <SLOT> }* '}' ]
    def reference(self, token: Token) -> Ref:
        slots: Tuple[Slot, ...] = ()
        suffix: Tuple[Slot, ...] = ()
        if self.stream.accept("["):
            slots = self.slot_list("]")
        if self.stream.accept("_"):
            self.stream.expect("{")
            suffix = self.slot_list("}")
        return Ref(token.pos, token.text, slots, suffix)

    def slot_list(self, closing: str) -> Tuple[Slot, ...]:
        slots = [self.slot()]
        while self.stream.accept(","):
            slots.append(self.slot())
        self.stream.expect(closing)
        return tuple(slots)

    def slot(self) -> Slot:
        number = self.stream.accept("NUMBER")
        if number is not None:
            if "." in number.text:
                raise ModelParseError("index values must be integers", *number.pos)
            return Slot(number.pos, value=int(number.text))
        name = self.stream.expect("NAME")
        return Slot(name.pos, name=name.text)


# ---------------------------------------------------------------------------
# model namespace


@dataclass(frozen=True)
class FieldDecl:
    name: str
    indices: Tuple[str, ...]
    ranges: Tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        size = 1
        for bound in self.ranges:
            size *= bound
        return size

    def labels(self) -> List[str]:
        if not self.ranges:
            return [self.name]
        return [f"{self.name}[{','.join(str(v) for v in values)}]" for values in _index_tuples(self.ranges)]

    def sigma(self, *values: int) -> int:
        if len(values) != len(self.ranges):
            raise DerivationError(f"field '{self.name}' takes {len(self.ranges)} indices")
        flat = 0
        for value, bound in zip(values, self.ranges):
            if not 1 <= value <= bound:
                raise DerivationError(f"index {value} out of range 1..{bound} for field '{self.name}'")
            flat = flat * bound + (value - 1)
        return self.offset + flat + 1


def _index_tuples(ranges: Sequence[int]) -> Iterator[Tuple[int, ...]]:
    return itertools.product(*(range(1, bound + 1) for bound in ranges))


class Definition:
    """Indexed derived quantity; components are evaluated on demand and memoised."""

    def __init__(self, name: str, indices: Tuple[str, ...], ranges: Tuple[int, ...], body: Node, evaluator: "_Evaluator"):
        self.name = name
        self.indices = indices
        self.ranges = ranges
        self.body = body
        self._evaluator = evaluator
        self._cache: Dict[Tuple[int, ...], sympy.Expr] = {}

    def value(self, *values: int) -> sympy.Expr:
        if len(values) != len(self.ranges):
            raise DerivationError(f"'{self.name}' takes {len(self.ranges)} indices")
        for value, bound in zip(values, self.ranges):
            if not 1 <= value <= bound:
                raise DerivationError(f"index {value} out of range 1..{bound} for '{self.name}'")
        cached = self._cache.get(values)
        if cached is None:
            cached = canonicalize(self._evaluator.evaluate(self.body, dict(zip(self.indices, values))))
            self._cache[values] = cached
        return cached


@dataclass
class _Namespace:
    n: int = 0
    fields: Dict[str, FieldDecl] = field(default_factory=dict)
    constants: Dict[str, ConstTable] = field(default_factory=dict)
    definitions: Dict[str, Definition] = field(default_factory=dict)
    vecfields: Dict[str, VecField] = field(default_factory=dict)
    sections: Dict[str, Section] = field(default_factory=dict)
    ctx: Optional[JetContext] = None

    def kind_of(self, name: str) -> Optional[str]:
        if parse_base_name(name) is not None:
            return "base"
        for kind, table in (
            ("field", self.fields),
            ("const", self.constants),
            ("definition", self.definitions),
            ("vecfield", self.vecfields),
        ):
            if name in table:
                return kind
        return None

    def single_field(self, pos: Position) -> FieldDecl:
        if len(self.fields) != 1:
            raise ModelParseError("vector field components can only be referenced in single-field models", *pos)
        return next(iter(self.fields.values()))

    def slot_ranges(self, ref: Ref) -> Tuple[int, ...]:
        kind = self.kind_of(ref.name)
        if kind == "base":
            return ()
        if kind == "field":
            return self.fields[ref.name].ranges
        if kind == "const":
            return self.constants[ref.name].ranges
        if kind == "definition":
            return self.definitions[ref.name].ranges
        if kind == "vecfield":
            return self.single_field(ref.pos).ranges
        raise ModelParseError(f"unknown symbol '{ref.name}'", *ref.pos)


class _Analyzer:
    """Static index analysis: ranges, free and summed indices of every node."""

    def __init__(self, namespace: _Namespace, ranges: Optional[Dict[str, int]] = None):
        self.namespace = namespace
        self.ranges: Dict[str, int] = dict(ranges or {})

    def bind(self, slot: Slot, bound: int) -> None:
        if slot.name is None:
            if not 1 <= slot.value <= bound:
                raise ModelParseError(f"index value {slot.value} out of range 1..{bound}", *slot.pos)
            return
        known = self.ranges.get(slot.name)
        if known is not None and known != bound:
            raise ModelParseError(f"index '{slot.name}' used with ranges {known} and {bound}", *slot.pos)
        self.ranges[slot.name] = bound

    def analyze(self, node: Node) -> Dict[str, Position]:
        free = self._analyze(node)
        node.free = free
        return free

    def _analyze(self, node: Node) -> Dict[str, Position]:
        if isinstance(node, (Num, Arbitrary)):
            return {}
        if isinstance(node, Ref):
            return self._reference(node)
        if isinstance(node, (Neg, Call)):
            return dict(self.analyze(node.arg))
        if isinstance(node, Inv):
            self._scalar(self.analyze(node.arg), "a divisor")
            return {}
        if isinstance(node, Pow):
            self._scalar(self.analyze(node.base), "a power")
            self._scalar(self.analyze(node.exponent), "an exponent")
            return {}
        if isinstance(node, Add):
            return self._sum_of_terms(node)
        if isinstance(node, Mul):
            return self._product(node)
        if isinstance(node, Deriv):
            return self._derivative(node)
        if isinstance(node, Sum):
            return self._explicit_sum(node)
        raise TypeError(f"unknown node {node!r}")

    @staticmethod
    def _scalar(free: Mapping[str, Position], where: str) -> None:
        for name, pos in free.items():
            raise ModelParseError(f"index '{name}' cannot appear inside {where}", *pos)

    def _reference(self, node: Ref) -> Dict[str, Position]:
        namespace = self.namespace
        ranges = namespace.slot_ranges(node)
        kind = namespace.kind_of(node.name)
        if len(node.slots) != len(ranges):
            raise ModelParseError(f"'{node.name}' takes {len(ranges)} indices, got {len(node.slots)}", *node.pos)
        if node.suffix and kind != "field":
            raise ModelParseError(f"derivative suffix on non-field symbol '{node.name}'", *node.pos)
        free: Dict[str, Position] = {}
        for slot, bound in list(zip(node.slots, ranges)) + [(slot, namespace.n) for slot in node.suffix]:
            self.bind(slot, bound)
            if slot.name is None:
                continue
            if slot.name in free:
                raise ModelParseError(f"index '{slot.name}' repeated within '{node.name}'", *slot.pos)
            free[slot.name] = slot.pos
        return free

    def _sum_of_terms(self, node: Add) -> Dict[str, Position]:
        first = self.analyze(node.terms[0][1])
        for _, term in node.terms[1:]:
            other = self.analyze(term)
            for name in sorted(set(first) ^ set(other)):
                pos = other.get(name) or first.get(name)
                raise ModelParseError(f"unbalanced index '{name}'", *pos)
        return dict(first)

    def _product(self, node: Mul) -> Dict[str, Position]:
        seen: Dict[str, List[Position]] = {}
        for factor in node.factors:
            for name, pos in self.analyze(factor).items():
                seen.setdefault(name, []).append(pos)
        free: Dict[str, Position] = {}
        for name, positions in seen.items():
            if len(positions) >= 3:
                raise ModelParseError(f"index '{name}' appears {len(positions)} times in a product", *positions[2])
            if len(positions) == 2:
                node.summed[name] = self.ranges[name]
            else:
                free[name] = positions[0]
        return free

    def _derivative(self, node: Deriv) -> Dict[str, Position]:
        self.bind(node.slot, self.namespace.n)
        free = dict(self.analyze(node.arg))
        name = node.slot.name
        if name is None:
            return free
        if name in free:
            del free[name]
            node.summed[name] = self.namespace.n
        else:
            free[name] = node.slot.pos
        return free

    def _explicit_sum(self, node: Sum) -> Dict[str, Position]:
        free = dict(self.analyze(node.arg))
        name = node.slot.name
        if name not in free:
            raise ModelParseError(f"summation index '{name}' does not occur free in its argument", *node.slot.pos)
        del free[name]
        node.summed[name] = self.ranges[name]
        return free


class _Evaluator:
    """Expands an analysed tree into a sympy expression over concrete indices."""

    def __init__(self, namespace: _Namespace):
        self.namespace = namespace
        self.component_function: Optional[sympy.Expr] = None

    def slot_value(self, slot: Slot, env: Mapping[str, int]) -> int:
        if slot.name is None:
            return slot.value
        return env[slot.name]

    def evaluate(self, node: Node, env: Mapping[str, int]) -> sympy.Expr:
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Ref):
            return self._reference(node, env)
        if isinstance(node, Arbitrary):
            if self.component_function is None:
                raise ModelParseError("'arbitrary' is only allowed in vector field and section components", *node.pos)
            return self.component_function
        if isinstance(node, Neg):
            return -self.evaluate(node.arg, env)
        if isinstance(node, Add):
            return sympy.Add(*(sign * self.evaluate(term, env) for sign, term in node.terms))
        if isinstance(node, Mul):
            return self._product(node, env)
        if isinstance(node, Inv):
            value = self.evaluate(node.arg, env)
            if value == 0:
                raise ModelParseError("division by zero", *node.pos)
            return 1 / value
        if isinstance(node, Pow):
            return self.evaluate(node.base, env) ** self.evaluate(node.exponent, env)
        if isinstance(node, Call):
            return FUNCTIONS[node.func](self.evaluate(node.arg, env))
        if isinstance(node, Deriv):
            return self._derivative(node, env)
        if isinstance(node, Sum):
            name = node.slot.name
            return sympy.Add(
                *(self.evaluate(node.arg, {**env, name: value}) for value in range(1, node.summed[name] + 1))
            )
        raise TypeError(f"unknown node {node!r}")

    def _reference(self, node: Ref, env: Mapping[str, int]) -> sympy.Expr:
        namespace = self.namespace
        values = tuple(self.slot_value(slot, env) for slot in node.slots)
        kind = namespace.kind_of(node.name)
        if kind == "base":
            index = parse_base_name(node.name)
            if base_name(index, namespace.n) != node.name:
                raise ModelParseError(f"unknown base coordinate '{node.name}' in dimension {namespace.n}", *node.pos)
            return namespace.ctx.x(index)
        if kind == "field":
            sigma = namespace.fields[node.name].sigma(*values)
            multi = MultiIndex(tuple(self.slot_value(slot, env) for slot in node.suffix))
            return namespace.ctx.y(sigma, multi)
        if kind == "const":
            return namespace.constants[node.name].value(*values)
        if kind == "definition":
            return namespace.definitions[node.name].value(*values)
        decl = namespace.single_field(node.pos)
        return namespace.vecfields[node.name].psi[decl.sigma(*values) - 1]

    def _product(self, node: Mul, env: Mapping[str, int]) -> sympy.Expr:
        # summed indices are local to the product and shadow outer bindings
        summed = node.summed
        factors = sorted(node.factors, key=lambda factor: 0 if self._is_constant(factor) else 1)
        results: List[sympy.Expr] = []

        def walk(position: int, bound: Dict[str, int], assigned: frozenset, accumulated: sympy.Expr) -> None:
            if position == len(factors):
                results.append(accumulated)
                return
            factor = factors[position]
            names = [name for name in factor.free if name in summed and name not in assigned]
            for values in _index_tuples([summed[name] for name in names]):
                local = {**bound, **dict(zip(names, values))}
                value = self.evaluate(factor, local)
                if value == 0:
                    continue
                walk(position + 1, local, assigned.union(names), accumulated * value)

        walk(0, dict(env), frozenset(), sympy.Integer(1))
        return sympy.Add(*results)

    def _is_constant(self, node: Node) -> bool:
        if isinstance(node, Num):
            return True
        return isinstance(node, Ref) and self.namespace.kind_of(node.name) == "const"

    def _derivative(self, node: Deriv, env: Mapping[str, int]) -> sympy.Expr:
        ctx = self.namespace.ctx
        name = node.slot.name
        if name is not None and name in node.summed:
            return sympy.Add(
                *(
                    total_derivative(ctx, self.evaluate(node.arg, {**env, name: value}), value)
                    for value in range(1, self.namespace.n + 1)
                )
            )
        return total_derivative(ctx, self.evaluate(node.arg, env), self.slot_value(node.slot, env))


# ---------------------------------------------------------------------------
# public model


@dataclass(frozen=True)
class ModelSpec:
    """Parsed model: jet context, expanded Lagrangian, named vector fields and sections."""

    n: int
    fields: Tuple[FieldDecl, ...]
    constants: Mapping[str, ConstTable]
    metric: Optional[ConstTable]
    lagrangian: sympy.Expr
    vecfields: Mapping[str, VecField]
    sections: Mapping[str, Section]
    ctx: JetContext
    definitions: Mapping[str, Definition] = field(default_factory=dict, repr=False, compare=False)
    namespace: Optional[_Namespace] = field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        return self.ctx.m

    @property
    def lagrangian_order(self) -> int:
        return self.ctx.order_of(self.lagrangian)

    def lagrangian_form(self) -> Form:
        return volume(self.ctx) * self.lagrangian

    def vecfield(self, name: str) -> VecField:
        try:
            return self.vecfields[name]
        except KeyError:
            raise UnknownNameError("vector field", name) from None

    def section(self, name: str) -> Section:
        try:
            return self.sections[name]
        except KeyError:
            raise UnknownNameError("section", name) from None

    def definition(self, name: str, *values: int) -> sympy.Expr:
        try:
            entry = self.definitions[name]
        except KeyError:
            raise UnknownNameError("definition", name) from None
        return entry.value(*values)

    def fiber_index(self, name: str, *values: int) -> int:
        for decl in self.fields:
            if decl.name == name:
                return decl.sigma(*values)
        raise UnknownNameError("field", name)


class _ModelParser:
    def __init__(self, text: str):
        self.statements = [(number, tokenize(line, number)) for number, line in _logical_lines(text)]
        self.namespace = _Namespace()
        self.evaluator = _Evaluator(self.namespace)
        self.metric: Optional[ConstTable] = None
        self.lagrangian: Optional[sympy.Expr] = None

    def parse(self) -> ModelSpec:
        declarations = {"dim", "field", "const", "metric"}
        deferred = []
        for number, tokens in self.statements:
            head = tokens[0]
            if head.kind == "NAME" and head.text in declarations:
                self._declaration(_TokenStream(tokens, number))
            else:
                deferred.append((number, tokens))
        if not self.namespace.n:
            raise ModelParseError("missing 'dim' declaration")
        if not self.namespace.fields:
            raise ModelParseError("at least one 'field' declaration is required")
        self._build_context()
        for number, tokens in deferred:
            self._statement(_TokenStream(tokens, number))
        if self.lagrangian is None:
            raise ModelParseError("missing 'lagrangian' statement")
        namespace = self.namespace
        ctx = namespace.ctx.with_order(max(1, namespace.ctx.order_of(self.lagrangian)))
        logger.debug("parsed model: n=%s m=%s, %s definitions", namespace.n, ctx.m, len(namespace.definitions))
        return ModelSpec(
            n=namespace.n,
            fields=tuple(namespace.fields.values()),
            constants=dict(namespace.constants),
            metric=self.metric,
            lagrangian=self.lagrangian,
            vecfields=dict(namespace.vecfields),
            sections=dict(namespace.sections),
            ctx=ctx,
            definitions=namespace.definitions,
            namespace=namespace,
        )

    def _build_context(self) -> None:
        labels: List[str] = []
        for decl in self.namespace.fields.values():
            labels.extend(decl.labels())
        self.namespace.ctx = JetContext(
            n=self.namespace.n,
            labels=tuple(labels),
            constants=tuple(self.namespace.constants.values()),
        )

    def _check_new_name(self, token: Token) -> None:
        name = token.text
        if name in KEYWORDS or name in FUNCTIONS or name in CONST_RULES or _DERIV_NAME.match(name):
            raise ModelParseError(f"'{name}' is a reserved word", *token.pos)
        if self.namespace.kind_of(name) is not None or name in self.namespace.sections:
            raise ModelParseError(f"'{name}' is already defined", *token.pos)

    # declarations -------------------------------------------------------

    def _declaration(self, stream: _TokenStream) -> None:
        keyword = stream.expect("NAME").text
        if keyword == "dim":
            if self.namespace.n:
                raise ModelParseError("dimension declared twice", *stream.tokens[0].pos)
            token = stream.expect("NUMBER")
            value = int(token.text) if token.text.isdigit() else 0
            if value < 1:
                raise ModelParseError("dimension must be a positive integer", *token.pos)
            self.namespace.n = value
        elif keyword == "field":
            self._field(stream)
        elif keyword == "const":
            self._constant(stream)
        else:
            self._metric(stream)
        stream.finish()

    def _index_declarations(self, stream: _TokenStream) -> Tuple[Tuple[str, ...], Tuple[int, ...]]:
        names: List[str] = []
        ranges: List[int] = []
        if not stream.accept("["):
            return (), ()
        while True:
            token = stream.expect("NAME")
            if token.text in names:
                raise ModelParseError(f"index '{token.text}' declared twice", *token.pos)
            stream.expect(":")
            names.append(token.text)
            ranges.append(self._range(stream))
            if stream.accept("]"):
                return tuple(names), tuple(ranges)
            stream.expect(",")

    def _range(self, stream: _TokenStream) -> int:
        if stream.accept("NAME", "dim"):
            if not self.namespace.n:
                raise ModelParseError("'dim' used before the dimension is declared", *stream.position())
            return self.namespace.n
        token = stream.expect("NUMBER")
        if not token.text.isdigit() or int(token.text) < 1:
            raise ModelParseError("index ranges must be positive integers", *token.pos)
        return int(token.text)

    def _field(self, stream: _TokenStream) -> None:
        token = stream.expect("NAME")
        self._check_new_name(token)
        if self.namespace.ctx is not None:
            raise ModelParseError("fields must be declared before use", *token.pos)
        names, ranges = self._index_declarations(stream)
        offset = sum(decl.size for decl in self.namespace.fields.values())
        self.namespace.fields[token.text] = FieldDecl(token.text, names, ranges, offset)

    def _constant(self, stream: _TokenStream) -> None:
        token = stream.expect("NAME")
        self._check_new_name(token)
        _, ranges = self._index_declarations(stream)
        symmetry = "none"
        marker = stream.accept("NAME")
        if marker is not None:
            if marker.text not in ("symmetric", "antisymmetric", "none"):
                raise ModelParseError(f"unknown symmetry '{marker.text}'", *marker.pos)
            symmetry = marker.text
        stream.expect("=")
        entries = self._constant_entries(stream, token.text, ranges)
        try:
            table = ConstTable.from_entries(token.text, ranges, symmetry, entries)
        except ValueError as exc:
            raise ModelParseError(str(exc), *token.pos) from None
        self.namespace.constants[token.text] = table

    def _constant_entries(
        self, stream: _TokenStream, name: str, ranges: Tuple[int, ...]
    ) -> Dict[Tuple[int, ...], sympy.Rational]:
        rule = stream.accept("NAME")
        if rule is not None:
            if rule.text == "zero":
                return {}
            if rule.text == "kronecker":
                if len(ranges) != 2 or ranges[0] != ranges[1]:
                    raise ModelParseError("kronecker needs two indices with equal ranges", *rule.pos)
                return {(i, i): sympy.Integer(1) for i in range(1, ranges[0] + 1)}
            if rule.text == "levi_civita":
                if len(set(ranges)) != 1 or ranges[0] != len(ranges):
                    raise ModelParseError("levi_civita needs k indices of range k", *rule.pos)
                return {
                    tuple(p + 1 for p in perm): sympy.Integer(_parity(perm))
                    for perm in itertools.permutations(range(len(ranges)))
                }
            raise ModelParseError(f"unknown constant rule '{rule.text}'", *rule.pos)
        stream.expect("{")
        entries: Dict[Tuple[int, ...], sympy.Rational] = {}
        while not stream.accept("}"):
            index = [self._integer(stream)]
            while stream.accept(","):
                index.append(self._integer(stream))
            colon = stream.expect(":")
            entries[tuple(index)] = self._rational(stream)
            if not stream.peek("}"):
                stream.expect(";")
            if len(index) != len(ranges):
                raise ModelParseError(f"constant '{name}' takes {len(ranges)} indices", *colon.pos)
        return entries

    @staticmethod
    def _integer(stream: _TokenStream) -> int:
        token = stream.expect("NUMBER")
        if not token.text.isdigit():
            raise ModelParseError("index values must be integers", *token.pos)
        return int(token.text)

    @staticmethod
    def _rational(stream: _TokenStream) -> sympy.Rational:
        sign = -1 if stream.accept("-") else 1
        value = sympy.Rational(stream.expect("NUMBER").text)
        if stream.accept("/"):
            value = value / sympy.Rational(stream.expect("NUMBER").text)
        return sign * value

    def _metric(self, stream: _TokenStream) -> None:
        stream.expect("=")
        head = stream.expect("NAME", "diag")
        if self.metric is not None:
            raise ModelParseError("metric declared twice", *head.pos)
        stream.expect("(")
        values = [self._rational(stream)]
        while stream.accept(","):
            values.append(self._rational(stream))
        stream.expect(")")
        n = self.namespace.n
        if len(values) != n:
            raise ModelParseError(f"metric needs {n} diagonal entries, got {len(values)}", *head.pos)
        entries = {(i + 1, i + 1): value for i, value in enumerate(values)}
        self.metric = ConstTable.from_entries("g", (n, n), "symmetric", entries)
        self.namespace.constants["g"] = self.metric

    # statements ---------------------------------------------------------

    def _statement(self, stream: _TokenStream) -> None:
        head = stream.expect("NAME")
        if head.text == "lagrangian":
            if self.lagrangian is not None:
                raise ModelParseError("lagrangian declared twice", *head.pos)
            stream.expect("=")
            self.lagrangian = self.scalar_expression(stream, "free index in scalar position")
        elif head.text in ("vecfield", "section"):
            self._components(stream, head.text)
        else:
            self._definition(stream, head)
        stream.finish()

    def scalar_expression(self, stream: _TokenStream, message: str) -> sympy.Expr:
        node = _ExpressionParser(stream).expression()
        analyzer = _Analyzer(self.namespace)
        for name, pos in analyzer.analyze(node).items():
            raise ModelParseError(f"{message} (index '{name}')", *pos)
        return canonicalize(self.evaluator.evaluate(node, {}))

    def _definition(self, stream: _TokenStream, head: Token) -> None:
        self._check_new_name(head)
        indices: List[Slot] = []
        if stream.accept("["):
            indices = list(_ExpressionParser(stream).slot_list("]"))
        names = [slot.name for slot in indices]
        if any(name is None for name in names) or len(set(names)) != len(names):
            raise ModelParseError(f"left-hand side of '{head.text}' needs distinct index names", *head.pos)
        stream.expect("=")
        body = _ExpressionParser(stream).expression()
        analyzer = _Analyzer(self.namespace)
        free = analyzer.analyze(body)
        for name, pos in free.items():
            if name not in names:
                raise ModelParseError(f"free index '{name}' is not on the left-hand side of '{head.text}'", *pos)
        for slot in indices:
            if slot.name not in free:
                raise ModelParseError(f"index '{slot.name}' is not free in the body of '{head.text}'", *slot.pos)
        ranges = tuple(analyzer.ranges[name] for name in names)
        self.namespace.definitions[head.text] = Definition(head.text, tuple(names), ranges, body, self.evaluator)

    def _components(self, stream: _TokenStream, kind: str) -> None:
        token = stream.expect("NAME")
        self._check_new_name(token)
        stream.expect("=")
        stream.expect("{")
        namespace = self.namespace
        n, m = namespace.n, namespace.ctx.m
        xi: List[sympy.Expr] = [sympy.Integer(0)] * n
        psi: List[sympy.Expr] = [sympy.Integer(0)] * m
        assigned: Dict[Tuple[str, int], Position] = {}
        while not stream.accept("}"):
            target = _ExpressionParser(stream).reference(stream.expect("NAME"))
            stream.expect(":")
            body = _ExpressionParser(stream).expression()
            if not stream.peek("}"):
                stream.expect(";")
            analyzer = _Analyzer(namespace)
            decl = namespace.fields.get(target.name)
            if decl is not None and len(target.slots) == len(decl.ranges):
                for slot, bound in zip(target.slots, decl.ranges):
                    analyzer.bind(slot, bound)
            analyzer.analyze(body)
            self._check_body(body, target)
            for slot_key, env in self._targets(target, kind):
                if slot_key in assigned:
                    raise ModelParseError(f"component {target.name} assigned twice in '{token.text}'", *target.pos)
                assigned[slot_key] = target.pos
                self.evaluator.component_function = self._component_function(token.text, slot_key)
                try:
                    value = canonicalize(self.evaluator.evaluate(body, env))
                finally:
                    self.evaluator.component_function = None
                if slot_key[0] == "x":
                    xi[slot_key[1] - 1] = value
                else:
                    psi[slot_key[1] - 1] = value
        try:
            if kind == "vecfield":
                namespace.vecfields[token.text] = VecField.build(namespace.ctx, xi=xi, psi=psi, name=token.text)
            else:
                namespace.sections[token.text] = Section.build(namespace.ctx, psi, name=token.text)
        except DerivationError as exc:
            raise ModelParseError(str(exc), *token.pos) from None

    def _check_body(self, body: Node, target: Ref) -> None:
        allowed = {slot.name for slot in target.slots if slot.name is not None}
        for name, pos in body.free.items():
            if name not in allowed:
                raise ModelParseError(f"free index '{name}' does not appear in the target", *pos)

    def _targets(self, target: Ref, kind: str) -> Iterator[Tuple[Tuple[str, int], Dict[str, int]]]:
        namespace = self.namespace
        base = parse_base_name(target.name)
        if base is not None:
            if kind == "section":
                raise ModelParseError("sections only assign field components", *target.pos)
            if target.slots or target.suffix or base_name(base, namespace.n) != target.name:
                raise ModelParseError(f"invalid base component '{target.name}'", *target.pos)
            yield ("x", base), {}
            return
        decl = namespace.fields.get(target.name)
        if decl is None:
            raise ModelParseError(f"unknown field '{target.name}'", *target.pos)
        if target.suffix:
            raise ModelParseError("component targets cannot carry derivative suffixes", *target.pos)
        if len(target.slots) != len(decl.ranges):
            raise ModelParseError(f"'{target.name}' takes {len(decl.ranges)} indices", *target.pos)
        names = [slot.name for slot in target.slots if slot.name is not None]
        bounds = [bound for slot, bound in zip(target.slots, decl.ranges) if slot.name is not None]
        for slot, bound in zip(target.slots, decl.ranges):
            if slot.value is not None and not 1 <= slot.value <= bound:
                raise ModelParseError(f"index value {slot.value} out of range 1..{bound}", *slot.pos)
        for values in _index_tuples(bounds):
            env = dict(zip(names, values))
            concrete = [slot.value if slot.name is None else env[slot.name] for slot in target.slots]
            yield ("y", decl.sigma(*concrete)), env

    def _component_function(self, owner: str, slot_key: Tuple[str, int]) -> sympy.Expr:
        ctx = self.namespace.ctx
        if slot_key[0] == "x":
            name = f"{owner}_{base_name(slot_key[1], ctx.n)}"
        else:
            label = ctx.labels[slot_key[1] - 1]
            bracket = label.find("[")
            if bracket >= 0:
                name = owner + label[bracket:]
            elif ctx.m == 1:
                name = owner
            else:
                name = f"{owner}_{label}"
        return sympy.Function(name)(*ctx.base_symbols)


def _parity(perm: Sequence[int]) -> int:
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def parse_model(text: str) -> ModelSpec:
    return _ModelParser(text).parse()


def parse_expression(text: str, model: ModelSpec) -> sympy.Expr:
    """Parse a scalar expression against the namespace of a parsed model."""
    lines = list(_logical_lines(text))
    if len(lines) != 1:
        raise ModelParseError("expected a single expression")
    number, line = lines[0]
    stream = _TokenStream(tokenize(line, number), number)
    namespace = model.namespace if model.namespace is not None else _namespace_of(model)
    node = _ExpressionParser(stream).expression()
    stream.finish()
    for name, pos in _Analyzer(namespace).analyze(node).items():
        raise ModelParseError(f"free index in scalar position (index '{name}')", *pos)
    return canonicalize(_Evaluator(namespace).evaluate(node, {}))


def _namespace_of(model: ModelSpec) -> _Namespace:
    return _Namespace(
        n=model.n,
        fields={decl.name: decl for decl in model.fields},
        constants=dict(model.constants),
        definitions=dict(model.definitions),
        vecfields=dict(model.vecfields),
        sections=dict(model.sections),
        ctx=model.ctx,
    )
