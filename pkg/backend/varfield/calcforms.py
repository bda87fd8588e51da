"""Differential forms on jet prolongations in the contact-adapted basis.

A form of ambient order k is stored as ``{monomial: coefficient}`` where a
monomial is a sorted tuple of basis one-forms: ``dx^i``, contact forms
``omega^sigma_J`` with |J| < k and ``dy^sigma_J`` with |J| = k. Whenever the
order grows, lower ``dy^sigma_J`` are rewritten as
``omega^sigma_J + y^sigma_{Ji} dx^i`` so that equal forms have equal terms.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import sympy

from .errors import DerivationError
from .jetgeom import (
    JetContext,
    Section,
    VecField,
    characteristic_derivative,
    prolonged_component,
    substitute_section,
    total_derivative,
)
from .symkernel import EMPTY, Expr, MultiIndex, canonicalize

logger = logging.getLogger(__name__)


class Kind(IntEnum):
    DX = 0
    OMEGA = 1
    DY = 2


@dataclass(frozen=True)
class BasisOne:
    kind: Kind
    index: int
    multi: MultiIndex = EMPTY

    def sort_key(self) -> Tuple[int, int, int, Tuple[int, ...]]:
        return (int(self.kind), self.index, len(self.multi), self.multi.entries)

    @property
    def is_contact(self) -> bool:
        return self.kind == Kind.OMEGA


Monomial = Tuple[BasisOne, ...]
Scalar = Union[Expr, int]


def DX(index: int) -> BasisOne:
    return BasisOne(Kind.DX, index)


def OMEGA(sigma: int, multi: MultiIndex = EMPTY) -> BasisOne:
    return BasisOne(Kind.OMEGA, sigma, multi)


def DY(sigma: int, multi: MultiIndex = EMPTY) -> BasisOne:
    return BasisOne(Kind.DY, sigma, multi)


def monomial_key(monomial: Monomial) -> Tuple:
    return tuple(factor.sort_key() for factor in monomial)


def contact_degree(monomial: Monomial) -> int:
    return sum(1 for factor in monomial if factor.kind == Kind.OMEGA)


def sort_monomial(factors: Sequence[BasisOne]) -> Tuple[int, Optional[Monomial]]:
    """Sort wedge factors; returns (sign, monomial) or (0, None) for a repeated factor."""
    items = list(factors)
    sign = 1
    for i in range(1, len(items)):
        j = i
        while j > 0:
            left, right = items[j - 1].sort_key(), items[j].sort_key()
            if left == right:
                return 0, None
            if left < right:
                break
            items[j - 1], items[j] = items[j], items[j - 1]
            sign = -sign
            j -= 1
    return sign, tuple(items)


def _expansions(ctx: JetContext, factor: BasisOne, order: int) -> List[Tuple[BasisOne, Expr]]:
    if factor.kind == Kind.DY and len(factor.multi) < order:
        options = [(OMEGA(factor.index, factor.multi), sympy.Integer(1))]
        for i in range(1, ctx.n + 1):
            options.append((DX(i), ctx.y(factor.index, factor.multi + i)))
        return options
    return [(factor, sympy.Integer(1))]


def _required_order(ctx: JetContext, monomial: Sequence[BasisOne], coefficient: Expr) -> int:
    order = ctx.order_of(coefficient)
    for factor in monomial:
        if factor.kind == Kind.OMEGA:
            order = max(order, len(factor.multi) + 1)
        elif factor.kind == Kind.DY:
            order = max(order, len(factor.multi))
    return order


def _normalize(
    ctx: JetContext,
    pairs: Iterable[Tuple[Sequence[BasisOne], Scalar]],
    order: int,
) -> Tuple[Dict[Monomial, Expr], int]:
    raw = [(tuple(monomial), sympy.sympify(coefficient)) for monomial, coefficient in pairs]
    raw = [(monomial, coefficient) for monomial, coefficient in raw if coefficient != 0]
    for monomial, coefficient in raw:
        order = max(order, _required_order(ctx, monomial, coefficient))

    addends: Dict[Monomial, List[Expr]] = defaultdict(list)
    for monomial, coefficient in raw:
        partial_terms: List[Tuple[List[BasisOne], Expr]] = [([], coefficient)]
        for factor in monomial:
            extended = []
            for chosen, value in partial_terms:
                for option, weight in _expansions(ctx, factor, order):
                    if option.kind == Kind.DX and option in chosen:
                        continue
                    extended.append((chosen + [option], value * weight))
            partial_terms = extended
        for chosen, value in partial_terms:
            sign, sorted_monomial = sort_monomial(chosen)
            if sign == 0:
                continue
            addends[sorted_monomial].append(sign * value)

    terms: Dict[Monomial, Expr] = {}
    for monomial in sorted(addends, key=monomial_key):
        coefficient = canonicalize(sympy.Add(*addends[monomial]))
        if coefficient != 0:
            terms[monomial] = coefficient
    return terms, order


class Form:
    """Graded differential form on J^kY; immutable."""

    __slots__ = ("ctx", "terms", "order")
    __hash__ = None  # type: ignore[assignment]

    def __init__(
        self,
        ctx: JetContext,
        pairs: Union[Mapping[Sequence[BasisOne], Scalar], Iterable[Tuple[Sequence[BasisOne], Scalar]], None] = None,
        order: int = 0,
    ):
        if pairs is None:
            pairs = ()
        elif isinstance(pairs, Mapping):
            pairs = pairs.items()
        terms, order = _normalize(ctx, pairs, order)
        object.__setattr__(self, "ctx", ctx)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "order", order)

    def __setattr__(self, name, value):
        raise AttributeError("Form is immutable")

    @classmethod
    def zero(cls, ctx: JetContext, order: int = 0) -> "Form":
        return cls(ctx, (), order)

    @classmethod
    def scalar(cls, ctx: JetContext, value: Scalar, order: int = 0) -> "Form":
        return cls(ctx, [((), value)], order)

    @classmethod
    def basis(cls, ctx: JetContext, *factors: BasisOne, coefficient: Scalar = 1, order: int = 0) -> "Form":
        return cls(ctx, [(factors, coefficient)], order)

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        degrees = self.degrees
        if len(degrees) > 1:
            raise DerivationError(f"form is not homogeneous: degrees {sorted(degrees)}")
        return next(iter(degrees), 0)

    @property
    def degrees(self) -> set:
        return {len(monomial) for monomial in self.terms}

    @property
    def is_horizontal(self) -> bool:
        return all(factor.kind == Kind.DX for monomial in self.terms for factor in monomial)

    def items(self) -> List[Tuple[Monomial, Expr]]:
        return list(self.terms.items())

    def coefficient(self, *factors: BasisOne) -> Expr:
        sign, monomial = sort_monomial(factors)
        if sign == 0:
            return sympy.Integer(0)
        return sign * self.terms.get(monomial, sympy.Integer(0))

    def map_coefficients(self, fn: Callable[[Expr], Scalar], order: Optional[int] = None) -> "Form":
        return Form(self.ctx, [(m, fn(c)) for m, c in self.terms.items()], self.order if order is None else order)

    def raise_order(self, order: int) -> "Form":
        return raise_order(self, order)

    def __add__(self, other: "Form") -> "Form":
        if not isinstance(other, Form):
            other = Form.scalar(self.ctx, other)
        return Form(self.ctx, list(self.terms.items()) + list(other.terms.items()), max(self.order, other.order))

    __radd__ = __add__

    def __neg__(self) -> "Form":
        return Form(self.ctx, [(m, -c) for m, c in self.terms.items()], self.order)

    def __sub__(self, other: "Form") -> "Form":
        if not isinstance(other, Form):
            other = Form.scalar(self.ctx, other)
        return self + (-other)

    def __mul__(self, factor: Scalar) -> "Form":
        if isinstance(factor, Form):
            return wedge(self, factor)
        return Form(self.ctx, [(m, factor * c) for m, c in self.terms.items()], self.order)

    __rmul__ = __mul__

    def __xor__(self, other: "Form") -> "Form":
        return wedge(self, other)

    def wedge(self, other: "Form") -> "Form":
        return wedge(self, other)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, sympy.Expr)):
            other = Form.scalar(self.ctx, other)
        if not isinstance(other, Form):
            return NotImplemented
        return (self - other).is_zero()

    def __repr__(self) -> str:
        body = " + ".join(f"({c})*{_monomial_repr(m)}" for m, c in self.terms.items()) or "0"
        return f"Form[order={self.order}]({body})"


def _monomial_repr(monomial: Monomial) -> str:
    if not monomial:
        return "1"
    parts = []
    for factor in monomial:
        name = {Kind.DX: "dx", Kind.OMEGA: "w", Kind.DY: "dy"}[factor.kind]
        suffix = f"_{{{factor.multi.label()}}}" if len(factor.multi) else ""
        parts.append(f"{name}{factor.index}{suffix}")
    return "^".join(parts)


def dx(ctx: JetContext, index: int) -> Form:
    return Form.basis(ctx, DX(index))


def omega(ctx: JetContext, sigma: int, multi: MultiIndex = EMPTY) -> Form:
    return Form.basis(ctx, OMEGA(sigma, multi))


def dy(ctx: JetContext, sigma: int, multi: MultiIndex = EMPTY) -> Form:
    return Form.basis(ctx, DY(sigma, multi), order=len(multi))


def volume(ctx: JetContext) -> Form:
    return Form.basis(ctx, *(DX(i) for i in range(1, ctx.n + 1)))


def ds(ctx: JetContext, index: int) -> Form:
    """ds_i = d_i contracted with the volume form."""
    factors = tuple(DX(i) for i in range(1, ctx.n + 1) if i != index)
    return Form.basis(ctx, *factors, coefficient=(-1) ** (index - 1))


def wedge(alpha: Form, beta: Form) -> Form:
    pairs = []
    for left, a in alpha.terms.items():
        for right, b in beta.terms.items():
            pairs.append((left + right, a * b))
    return Form(alpha.ctx, pairs, max(alpha.order, beta.order))


def raise_order(rho: Form, order: int) -> Form:
    if order < rho.order:
        raise DerivationError(f"cannot lower ambient order from {rho.order} to {order}")
    return Form(rho.ctx, rho.terms, order)


def _coefficient_differential(ctx: JetContext, coefficient: Expr) -> List[Tuple[BasisOne, Expr]]:
    pieces = []
    for i in range(1, ctx.n + 1):
        derivative = sympy.diff(coefficient, ctx.x(i))
        if derivative != 0:
            pieces.append((DX(i), derivative))
    for atom in ctx.jet_atoms(coefficient):
        pieces.append((DY(atom.sigma, atom.multi), sympy.diff(coefficient, atom.symbol)))
    return pieces


def ext_d(rho: Form) -> Form:
    ctx = rho.ctx
    pairs = []
    for monomial, coefficient in rho.terms.items():
        for factor, derivative in _coefficient_differential(ctx, coefficient):
            pairs.append(((factor,) + monomial, derivative))
        for position, factor in enumerate(monomial):
            if factor.kind != Kind.OMEGA:
                continue
            sign = (-1) ** position
            for i in range(1, ctx.n + 1):
                replaced = monomial[:position] + (DX(i), DY(factor.index, factor.multi + i)) + monomial[position + 1 :]
                pairs.append((replaced, sign * coefficient))
    return Form(ctx, pairs, rho.order)


@dataclass(frozen=True)
class ContactSplit:
    parts: Tuple[Form, ...]
    order: int

    def __getitem__(self, degree: int) -> Form:
        if 0 <= degree < len(self.parts):
            return self.parts[degree]
        ctx = self.parts[0].ctx
        return Form.zero(ctx, self.order)

    def __len__(self) -> int:
        return len(self.parts)

    @property
    def horizontal(self) -> Form:
        return self[0]

    def total(self) -> Form:
        result = self.parts[0]
        for part in self.parts[1:]:
            result = result + part
        return result


def contact_split(rho: Form) -> ContactSplit:
    """Canonical decomposition p_0 + ... + p_q after one order raise."""
    raised = raise_order(rho, rho.order + 1)
    grouped: Dict[int, List[Tuple[Monomial, Expr]]] = defaultdict(list)
    top = 0
    for monomial, coefficient in raised.terms.items():
        degree = contact_degree(monomial)
        grouped[degree].append((monomial, coefficient))
        top = max(top, len(monomial))
    parts = tuple(Form(rho.ctx, grouped.get(l, ()), raised.order) for l in range(top + 1))
    return ContactSplit(parts=parts, order=raised.order)


def horizontal(rho: Form) -> Form:
    return contact_split(rho).horizontal


def horizontal_vertical_d(rho: Form) -> Tuple[Form, Form]:
    """(d_H rho, d_V rho) with d_H = sum p_l d p_l and d_V = sum p_{l+1} d p_l."""
    split = contact_split(rho)
    d_h = Form.zero(rho.ctx, split.order)
    d_v = Form.zero(rho.ctx, split.order)
    for degree, part in enumerate(split.parts):
        if part.is_zero():
            continue
        pieces = contact_split(ext_d(part))
        d_h = d_h + pieces[degree]
        d_v = d_v + pieces[degree + 1]
    return d_h, d_v


def horizontal_d(rho: Form) -> Form:
    if rho.is_horizontal:
        ctx = rho.ctx
        pairs = []
        for monomial, coefficient in rho.terms.items():
            for i in range(1, ctx.n + 1):
                pairs.append(((DX(i),) + monomial, total_derivative(ctx, coefficient, i)))
        return Form(ctx, pairs, rho.order + 1)
    return horizontal_vertical_d(rho)[0]


def formal_derivative_form(rho: Form, index: int) -> Form:
    """Even derivation with d_i dx = 0, d_i omega_J = omega_{Ji}, d_i dy_J = dy_{Ji}."""
    ctx = rho.ctx
    pairs = []
    for monomial, coefficient in rho.terms.items():
        pairs.append((monomial, total_derivative(ctx, coefficient, index)))
        for position, factor in enumerate(monomial):
            if factor.kind == Kind.DX:
                continue
            shifted = BasisOne(factor.kind, factor.index, factor.multi + index)
            pairs.append((monomial[:position] + (shifted,) + monomial[position + 1 :], coefficient))
    return Form(ctx, pairs, rho.order + 1)


def iterated_formal_derivative(rho: Form, multi: MultiIndex) -> Form:
    for index in multi:
        rho = formal_derivative_form(rho, index)
    return rho


INTERIOR_PARTS = ("full", "vertical", "horizontal")


def _pairing(ctx: JetContext, psi: VecField, factor: BasisOne, part: str) -> Expr:
    if factor.kind == Kind.DX:
        return sympy.Integer(0) if part == "vertical" else psi.xi[factor.index - 1]
    if factor.kind == Kind.OMEGA:
        if part == "horizontal":
            return sympy.Integer(0)
        return characteristic_derivative(ctx, psi, factor.index, factor.multi)
    if part == "full":
        return prolonged_component(ctx, psi, factor.index, factor.multi)
    if part == "vertical":
        return characteristic_derivative(ctx, psi, factor.index, factor.multi)
    total = sympy.Integer(0)
    for i in range(1, ctx.n + 1):
        total += ctx.y(factor.index, factor.multi + i) * psi.xi[i - 1]
    return total


def interior(psi: VecField, rho: Form, part: str = "full", k: Optional[int] = None) -> Form:
    """Contraction of the prolonged field (or its vertical/horizontal part) with rho."""
    if part not in INTERIOR_PARTS:
        raise DerivationError(f"unknown interior part '{part}'")
    if k is not None and rho.order > k:
        raise DerivationError(f"form of order {rho.order} cannot be contracted with a {k}-th prolongation")
    ctx = rho.ctx
    pairs = []
    for monomial, coefficient in rho.terms.items():
        for position, factor in enumerate(monomial):
            value = _pairing(ctx, psi, factor, part)
            if value == 0:
                continue
            rest = monomial[:position] + monomial[position + 1 :]
            pairs.append((rest, (-1) ** position * value * coefficient))
    return Form(ctx, pairs, rho.order)


def lie_derivative(psi: VecField, rho: Form, k: Optional[int] = None) -> Form:
    """Cartan formula L = i d + d i."""
    return interior(psi, ext_d(rho), k=k) + ext_d(interior(psi, rho, k=k))


def form_sum(ctx: JetContext, forms: Iterable[Form], order: int = 0) -> Form:
    pairs: List[Tuple[Monomial, Expr]] = []
    for form in forms:
        pairs.extend(form.terms.items())
        order = max(order, form.order)
    return Form(ctx, pairs, order)


def pullback(rho: Form, section: Section) -> Form:
    """Pull back along the prolonged section; contact terms drop out."""
    ctx = rho.ctx
    flat = contact_split(rho).horizontal
    return Form(ctx, [(m, substitute_section(ctx, section, c)) for m, c in flat.terms.items()], 0)


def restrict(rho: Form, section: Section) -> Form:
    """Evaluate every coefficient along the prolonged section, keeping the basis.

    This is how source forms such as E(lambda) are "pulled back" along extremals.
    """
    ctx = rho.ctx
    return Form(ctx, [(m, substitute_section(ctx, section, c)) for m, c in rho.terms.items()], 0)
