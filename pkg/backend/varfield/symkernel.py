"""Scalar expression substrate.

Expressions are plain sympy expressions kept in expanded form. Atoms are
sympy symbols whose *names* carry the jet structure:

* base coordinates: ``x`` (one dimension) or ``x1 .. xn``;
* jet coordinates: a fiber label followed by an optional sorted derivative
  suffix, e.g. ``y``, ``y_{1,2}``, ``w[1,2]_{3}``;
* analytic atoms: ``sin``, ``cos``, ``exp`` applications and undefined
  functions of the base coordinates (symbolic vector-field profiles).

Nothing here is mutable; every helper is a pure function of its arguments.
"""
from __future__ import annotations

import itertools
import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Optional, Tuple, Union

import sympy
from sympy.core.function import AppliedUndef

from .errors import EvaluationError, SymbolError

Expr = sympy.Expr

_JET_NAME = re.compile(r"^(?P<label>[A-Za-z][A-Za-z0-9]*(?:\[[0-9]+(?:,[0-9]+)*\])?)(?:_\{(?P<idx>[0-9]+(?:,[0-9]+)*)\})?$")
_BASE_NAME = re.compile(r"^x(?P<index>[0-9]*)$")


@dataclass(frozen=True)
class MultiIndex:
    """Unordered multi-index; entries are stored sorted."""

    entries: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        entries = tuple(sorted(int(value) for value in self.entries))
        if any(value < 1 for value in entries):
            raise ValueError(f"multi-index entries must be >= 1: {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def of(cls, *entries: int) -> "MultiIndex":
        return cls(tuple(entries))

    @classmethod
    def all(cls, n: int, max_length: int) -> Iterator["MultiIndex"]:
        for length in range(max_length + 1):
            for combo in itertools.combinations_with_replacement(range(1, n + 1), length):
                yield cls(combo)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __add__(self, other: Union["MultiIndex", int]) -> "MultiIndex":
        if isinstance(other, MultiIndex):
            return MultiIndex(self.entries + other.entries)
        return MultiIndex(self.entries + (int(other),))

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        if not self.contains(other):
            raise ValueError(f"{other} is not contained in {self}")
        remaining = self.counts() - other.counts()
        return MultiIndex(tuple(remaining.elements()))

    def remove(self, index: int) -> "MultiIndex":
        return self - MultiIndex.of(index)

    def counts(self) -> Counter:
        return Counter(self.entries)

    def count(self, index: int) -> int:
        return self.entries.count(index)

    def distinct(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.entries)))

    def contains(self, other: "MultiIndex") -> bool:
        mine = self.counts()
        return all(mine[key] >= value for key, value in other.counts().items())

    def binom(self, sub: "MultiIndex") -> int:
        """Product of per-coordinate binomials C(l_i, k_i)."""
        mine = self.counts()
        theirs = sub.counts()
        result = 1
        for key, value in mine.items():
            result *= math.comb(value, theirs.get(key, 0))
        return result

    def sub_indices(self) -> Iterator["MultiIndex"]:
        keys = self.distinct()
        mine = self.counts()
        for choice in itertools.product(*(range(mine[key] + 1) for key in keys)):
            entries: Tuple[int, ...] = ()
            for key, repeat in zip(keys, choice):
                entries += (key,) * repeat
            yield MultiIndex(entries)

    def sort_key(self) -> Tuple[int, Tuple[int, ...]]:
        return (len(self.entries), self.entries)

    def label(self) -> str:
        return ",".join(str(value) for value in self.entries)

    def __repr__(self) -> str:
        return f"MultiIndex({self.label()})"


EMPTY = MultiIndex()


def base_name(index: int, n: int) -> str:
    if n == 1:
        return "x"
    return f"x{index}"


@lru_cache(maxsize=None)
def base_symbol(index: int, n: int) -> sympy.Symbol:
    return sympy.Symbol(base_name(index, n))


def parse_base_name(name: str) -> Optional[int]:
    match = _BASE_NAME.match(name)
    if not match:
        return None
    digits = match.group("index")
    return int(digits) if digits else 1


def jet_name(label: str, multi: MultiIndex = EMPTY) -> str:
    if not len(multi):
        return label
    return f"{label}_{{{multi.label()}}}"


@lru_cache(maxsize=None)
def jet_symbol(label: str, multi: MultiIndex = EMPTY) -> sympy.Symbol:
    return sympy.Symbol(jet_name(label, multi))


@lru_cache(maxsize=None)
def split_jet_name(name: str) -> Optional[Tuple[str, MultiIndex]]:
    match = _JET_NAME.match(name)
    if not match:
        return None
    raw = match.group("idx")
    multi = MultiIndex(tuple(int(part) for part in raw.split(","))) if raw else EMPTY
    return match.group("label"), multi


def canonicalize(e: Union[Expr, int, float]) -> Expr:
    """Expanded canonical form; idempotent."""
    return sympy.expand(sympy.sympify(e))


def partial(e: Expr, atom: sympy.Basic) -> Expr:
    """Formal partial derivative; each sorted jet symbol is one variable."""
    if not isinstance(atom, sympy.Symbol):
        raise SymbolError(f"cannot differentiate with respect to {atom}")
    return sympy.expand(sympy.diff(e, atom))


def function_atoms(e: Expr) -> Iterable[sympy.Basic]:
    return e.atoms(AppliedUndef, sympy.Derivative)


def eval_numeric(e: Expr, bind: Mapping[Union[sympy.Symbol, str], float]) -> float:
    bound = {(sympy.Symbol(key) if isinstance(key, str) else key): value for key, value in bind.items()}
    expression = sympy.sympify(e)
    undefined = sorted(function_atoms(expression), key=str)
    if undefined:
        raise EvaluationError(f"cannot evaluate undefined function {undefined[0]}", atom=str(undefined[0]))
    missing = sorted((symbol for symbol in expression.free_symbols if symbol not in bound), key=str)
    if missing:
        raise EvaluationError(f"unbound atom {missing[0]}", atom=str(missing[0]))
    substituted = expression.xreplace({symbol: sympy.Float(value, 17) for symbol, value in bound.items()})
    try:
        return float(substituted.evalf(17))
    except TypeError as exc:
        raise EvaluationError(f"expression did not reduce to a real number: {substituted}") from exc
