from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import sympy

from .errors import DerivationError, UnknownNameError
from .symkernel import (
    EMPTY,
    Expr,
    MultiIndex,
    base_symbol,
    canonicalize,
    jet_symbol,
    parse_base_name,
    split_jet_name,
)

logger = logging.getLogger(__name__)

SYMMETRIES = ("symmetric", "antisymmetric", "none")


@dataclass(frozen=True)
class ConstTable:
    """Rational component table of a declared constant; only nonzero entries are stored."""

    name: str
    ranges: Tuple[int, ...]
    symmetry: str = "none"
    entries: Tuple[Tuple[Tuple[int, ...], sympy.Rational], ...] = ()

    @classmethod
    def from_entries(
        cls,
        name: str,
        ranges: Sequence[int],
        symmetry: str,
        entries: Mapping[Tuple[int, ...], sympy.Rational],
    ) -> "ConstTable":
        """Complete a partial table using the declared symmetry.

        Raises ValueError when the listed entries contradict the symmetry.
        """
        if symmetry not in SYMMETRIES:
            raise ValueError(f"unknown symmetry '{symmetry}'")
        ranges = tuple(ranges)
        if symmetry != "none" and len(set(ranges)) > 1:
            raise ValueError(f"{symmetry} constant '{name}' needs equal index ranges")
        filled: Dict[Tuple[int, ...], sympy.Rational] = {}
        for index, value in entries.items():
            if len(index) != len(ranges):
                raise ValueError(f"constant '{name}' takes {len(ranges)} indices, got {len(index)}")
            for position, (value_index, bound) in enumerate(zip(index, ranges)):
                if not 1 <= value_index <= bound:
                    raise ValueError(f"index {value_index} out of range 1..{bound} in slot {position + 1} of '{name}'")
            value = sympy.Rational(value)
            images = [(index, value)]
            if symmetry != "none":
                images = []
                for perm in itertools.permutations(range(len(index))):
                    permuted = tuple(index[p] for p in perm)
                    sign = _permutation_sign(perm) if symmetry == "antisymmetric" else 1
                    images.append((permuted, sign * value))
            for image, image_value in images:
                if symmetry == "antisymmetric" and len(set(image)) < len(image) and image_value != 0:
                    raise ValueError(f"antisymmetric constant '{name}' has nonzero entry {image} with repeated index")
                previous = filled.get(image)
                if previous is not None and previous != image_value:
                    raise ValueError(f"constant '{name}' entry {image} is inconsistent with its {symmetry} declaration")
                filled[image] = image_value
        nonzero = tuple(sorted((key, val) for key, val in filled.items() if val != 0))
        return cls(name=name, ranges=ranges, symmetry=symmetry, entries=nonzero)

    @cached_property
    def _lookup(self) -> Dict[Tuple[int, ...], sympy.Rational]:
        return dict(self.entries)

    def value(self, *index: int) -> sympy.Rational:
        if len(index) != len(self.ranges):
            raise DerivationError(f"constant '{self.name}' takes {len(self.ranges)} indices")
        return self._lookup.get(tuple(index), sympy.Integer(0))

    def satisfies_symmetry(self) -> bool:
        if self.symmetry == "none":
            return True
        for index in itertools.product(*(range(1, bound + 1) for bound in self.ranges)):
            for perm in itertools.permutations(range(len(index))):
                permuted = tuple(index[p] for p in perm)
                sign = _permutation_sign(perm) if self.symmetry == "antisymmetric" else 1
                if self.value(*permuted) != sign * self.value(*index):
                    return False
        return True


def _permutation_sign(perm: Sequence[int]) -> int:
    sign = 1
    seen = list(perm)
    for i in range(len(seen)):
        for j in range(i + 1, len(seen)):
            if seen[i] > seen[j]:
                sign = -sign
    return sign


@dataclass(frozen=True)
class JetAtom:
    symbol: sympy.Symbol
    sigma: int
    multi: MultiIndex


@dataclass(frozen=True)
class JetContext:
    """Coordinates of J^rY over a single chart.

    Fiber coordinates are numbered sigma = 1..m in the order of ``labels``.
    ``max_order`` is a working order; derivatives beyond it extend it.
    """

    n: int
    labels: Tuple[str, ...]
    max_order: int = 1
    constants: Tuple[ConstTable, ...] = ()

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DerivationError("base dimension must be >= 1")
        if not self.labels:
            raise DerivationError("at least one fiber coordinate is required")
        if self.max_order < 1:
            raise DerivationError("working order must be >= 1")
        if len(set(self.labels)) != len(self.labels):
            raise DerivationError("fiber labels must be distinct")
        for label in self.labels:
            parsed = split_jet_name(label)
            if parsed is None or len(parsed[1]) or parse_base_name(label) is not None:
                raise DerivationError(f"invalid fiber label '{label}'")

    @property
    def m(self) -> int:
        return len(self.labels)

    @cached_property
    def base_symbols(self) -> Tuple[sympy.Symbol, ...]:
        return tuple(base_symbol(i, self.n) for i in range(1, self.n + 1))

    @cached_property
    def _sigma_by_label(self) -> Dict[str, int]:
        return {label: index + 1 for index, label in enumerate(self.labels)}

    @cached_property
    def _base_by_symbol(self) -> Dict[sympy.Symbol, int]:
        return {symbol: index + 1 for index, symbol in enumerate(self.base_symbols)}

    def x(self, index: int) -> sympy.Symbol:
        if not 1 <= index <= self.n:
            raise DerivationError(f"base index {index} out of range 1..{self.n}")
        return self.base_symbols[index - 1]

    def y(self, sigma: int, multi: MultiIndex = EMPTY) -> sympy.Symbol:
        if not 1 <= sigma <= self.m:
            raise DerivationError(f"fiber index {sigma} out of range 1..{self.m}")
        if any(entry > self.n for entry in multi):
            raise DerivationError(f"derivative index out of range in {multi}")
        return jet_symbol(self.labels[sigma - 1], multi)

    def sigma_of(self, label: str) -> int:
        try:
            return self._sigma_by_label[label]
        except KeyError:
            raise UnknownNameError("field", label) from None

    def base_index(self, symbol: sympy.Basic) -> Optional[int]:
        return self._base_by_symbol.get(symbol)

    def classify(self, symbol: sympy.Basic) -> Optional[JetAtom]:
        if not isinstance(symbol, sympy.Symbol) or symbol in self._base_by_symbol:
            return None
        parsed = split_jet_name(symbol.name)
        if parsed is None:
            return None
        label, multi = parsed
        sigma = self._sigma_by_label.get(label)
        if sigma is None:
            return None
        return JetAtom(symbol, sigma, multi)

    def jet_atoms(self, e: Expr) -> List[JetAtom]:
        atoms = [self.classify(symbol) for symbol in sympy.sympify(e).free_symbols]
        return sorted((atom for atom in atoms if atom is not None), key=lambda a: (a.sigma, a.multi.sort_key()))

    def order_of(self, e: Expr) -> int:
        return max((len(atom.multi) for atom in self.jet_atoms(e)), default=0)

    def with_order(self, order: int) -> "JetContext":
        if order <= self.max_order:
            return self
        logger.debug("extending working jet order from %s to %s", self.max_order, order)
        return replace(self, max_order=order)

    def constant(self, name: str) -> ConstTable:
        for table in self.constants:
            if table.name == name:
                return table
        raise UnknownNameError("constant", name)

    def jet_coordinates(self, order: int) -> Iterable[Tuple[int, MultiIndex]]:
        for sigma in range(1, self.m + 1):
            for multi in MultiIndex.all(self.n, order):
                yield sigma, multi


@lru_cache(maxsize=200_000)
def _total_derivative(ctx: JetContext, e: Expr, index: int) -> Expr:
    result = sympy.diff(e, ctx.x(index))
    for atom in ctx.jet_atoms(e):
        result += ctx.y(atom.sigma, atom.multi + index) * sympy.diff(e, atom.symbol)
    return sympy.expand(result)


def total_derivative(ctx: JetContext, e: Expr, index: int) -> Expr:
    """d_i e = de/dx^i + sum over jets of y_{Ji} de/dy_J."""
    return _total_derivative(ctx, canonicalize(e), index)


def iterated_derivative(ctx: JetContext, e: Expr, multi: MultiIndex) -> Expr:
    result = canonicalize(e)
    for index in multi:
        result = _total_derivative(ctx, result, index)
    return result


@dataclass(frozen=True)
class VecField:
    """Projectable vector field xi^i(x) d_i + psi^sigma(x, y) d_sigma."""

    xi: Tuple[Expr, ...]
    psi: Tuple[Expr, ...]
    name: str = field(default="", compare=False)

    @classmethod
    def build(
        cls,
        ctx: JetContext,
        xi: Optional[Sequence] = None,
        psi: Optional[Sequence] = None,
        name: str = "",
    ) -> "VecField":
        xi_values = tuple(canonicalize(value) for value in (xi if xi is not None else [0] * ctx.n))
        psi_values = tuple(canonicalize(value) for value in (psi if psi is not None else [0] * ctx.m))
        if len(xi_values) != ctx.n or len(psi_values) != ctx.m:
            raise DerivationError(f"vector field needs {ctx.n} base and {ctx.m} fiber components")
        for value in xi_values:
            if ctx.jet_atoms(value):
                raise DerivationError(f"vector field '{name}' is not projectable: base component {value} depends on fibers")
        for value in psi_values:
            if ctx.order_of(value) > 0:
                raise DerivationError(f"vector field '{name}' fiber component {value} depends on derivatives")
        return cls(xi=xi_values, psi=psi_values, name=name)

    @classmethod
    def vertical(cls, ctx: JetContext, psi: Sequence, name: str = "") -> "VecField":
        return cls.build(ctx, psi=psi, name=name)

    @classmethod
    def zero(cls, ctx: JetContext) -> "VecField":
        return cls.build(ctx, name="0")

    @property
    def is_vertical(self) -> bool:
        return all(value == 0 for value in self.xi)

    @property
    def is_zero(self) -> bool:
        return self.is_vertical and all(value == 0 for value in self.psi)

    def __add__(self, other: "VecField") -> "VecField":
        return VecField(
            xi=tuple(canonicalize(a + b) for a, b in zip(self.xi, other.xi)),
            psi=tuple(canonicalize(a + b) for a, b in zip(self.psi, other.psi)),
        )

    def scaled(self, factor) -> "VecField":
        return VecField(
            xi=tuple(canonicalize(factor * a) for a in self.xi),
            psi=tuple(canonicalize(factor * a) for a in self.psi),
        )


def characteristic(ctx: JetContext, psi: VecField, sigma: int) -> Expr:
    """Vertical part psi^sigma - y^sigma_i xi^i."""
    value = psi.psi[sigma - 1]
    for index in range(1, ctx.n + 1):
        value -= ctx.y(sigma, MultiIndex.of(index)) * psi.xi[index - 1]
    return canonicalize(value)


@lru_cache(maxsize=100_000)
def characteristic_derivative(ctx: JetContext, psi: VecField, sigma: int, multi: MultiIndex) -> Expr:
    """d_J of the characteristic; the pairing of j psi with the contact form omega^sigma_J."""
    if not len(multi):
        return characteristic(ctx, psi, sigma)
    last = multi.entries[-1]
    return total_derivative(ctx, characteristic_derivative(ctx, psi, sigma, multi.remove(last)), last)


def prolonged_component(ctx: JetContext, psi: VecField, sigma: int, multi: MultiIndex) -> Expr:
    value = characteristic_derivative(ctx, psi, sigma, multi)
    for index in range(1, ctx.n + 1):
        value += ctx.y(sigma, multi + index) * psi.xi[index - 1]
    return canonicalize(value)


def prolong_field(ctx: JetContext, psi: VecField, k: int) -> Dict[Tuple[int, MultiIndex], Expr]:
    if k > ctx.max_order:
        ctx = ctx.with_order(k)
    return {(sigma, multi): prolonged_component(ctx, psi, sigma, multi) for sigma, multi in ctx.jet_coordinates(k)}


def lie_bracket(ctx: JetContext, first: VecField, second: VecField) -> VecField:
    """[X, Y] on Y; projectable fields stay projectable."""

    def apply(field_: VecField, value: Expr) -> Expr:
        result = sympy.Integer(0)
        for index in range(1, ctx.n + 1):
            result += field_.xi[index - 1] * sympy.diff(value, ctx.x(index))
        for sigma in range(1, ctx.m + 1):
            result += field_.psi[sigma - 1] * sympy.diff(value, ctx.y(sigma))
        return result

    xi = [apply(first, b) - apply(second, a) for a, b in zip(first.xi, second.xi)]
    psi = [apply(first, b) - apply(second, a) for a, b in zip(first.psi, second.psi)]
    return VecField.build(ctx, xi=xi, psi=psi, name=f"[{first.name},{second.name}]")


@dataclass(frozen=True)
class Section:
    components: Tuple[Expr, ...]
    name: str = field(default="", compare=False)

    @classmethod
    def build(cls, ctx: JetContext, components: Sequence, name: str = "") -> "Section":
        values = tuple(canonicalize(value) for value in components)
        if len(values) != ctx.m:
            raise DerivationError(f"section needs {ctx.m} components, got {len(values)}")
        for value in values:
            if ctx.jet_atoms(value):
                raise DerivationError(f"section '{name}' component {value} depends on fiber coordinates")
        return cls(components=values, name=name)


def _section_value(ctx: JetContext, section: Section, sigma: int, multi: MultiIndex) -> Expr:
    value = section.components[sigma - 1]
    if len(multi):
        value = sympy.diff(value, *(ctx.x(index) for index in multi))
    return canonicalize(value)


def prolong_section(ctx: JetContext, section: Section, k: int) -> Dict[sympy.Symbol, Expr]:
    return {ctx.y(sigma, multi): _section_value(ctx, section, sigma, multi) for sigma, multi in ctx.jet_coordinates(k)}


def substitute_section(ctx: JetContext, section: Section, e: Expr) -> Expr:
    """Bind every jet coordinate occurring in e to the derivatives of the section."""
    bindings = {atom.symbol: _section_value(ctx, section, atom.sigma, atom.multi) for atom in ctx.jet_atoms(e)}
    if not bindings:
        return canonicalize(e)
    return canonicalize(sympy.sympify(e).xreplace(bindings))
