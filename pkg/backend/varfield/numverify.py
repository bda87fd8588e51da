"""Numerical checks of symbolic identities along concrete sections."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from .calcforms import DX, Form, horizontal_d, interior, pullback, restrict
from .errors import DerivationError, EvaluationError
from .jetgeom import JetContext, Section, VecField
from .symkernel import function_atoms
from .utils import CancelToken, check_cancel
from .varops import euler_lagrange, noether_current

logger = logging.getLogger(__name__)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class GridSpec:
    ranges: Tuple[Tuple[float, float], ...]
    counts: Tuple[int, ...]
    tol: float = 1e-9
    rel_floor: float = 0.0

    def __post_init__(self) -> None:
        if len(self.ranges) != len(self.counts):
            raise DerivationError("grid needs one sample count per coordinate range")
        if any(count < 2 for count in self.counts):
            raise DerivationError("grid sample counts must be >= 2")
        if any(hi <= lo for lo, hi in self.ranges):
            raise DerivationError("grid ranges must satisfy lo < hi")
        if self.tol <= 0:
            raise DerivationError("tolerance must be positive")
        if self.rel_floor < 0:
            raise DerivationError("relative floor must be non-negative")

    @classmethod
    def uniform(cls, n: int, lo: float, hi: float, count: int, tol: float = 1e-9) -> "GridSpec":
        return cls(ranges=((lo, hi),) * n, counts=(count,) * n, tol=tol)

    @property
    def dimension(self) -> int:
        return len(self.counts)

    @property
    def samples(self) -> int:
        return int(np.prod(self.counts))

    def axes(self) -> List[np.ndarray]:
        return [np.linspace(lo, hi, count) for (lo, hi), count in zip(self.ranges, self.counts)]

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def with_tol(self, tol: float) -> "GridSpec":
        return GridSpec(ranges=self.ranges, counts=self.counts, tol=tol, rel_floor=self.rel_floor)


def parse_grid(text: str, n: int, tol: float = 1e-9) -> GridSpec:
    """``lo:hi:count`` per coordinate, comma separated; a single entry applies to all."""
    entries = [entry.strip() for entry in text.split(",") if entry.strip()]
    if len(entries) == 1:
        entries = entries * n
    if len(entries) != n:
        raise DerivationError(f"grid spec '{text}' needs 1 or {n} entries")
    ranges = []
    counts = []
    for entry in entries:
        parts = entry.split(":")
        if len(parts) != 3:
            raise DerivationError(f"grid entry '{entry}' is not of the form lo:hi:count")
        try:
            ranges.append((float(parts[0]), float(parts[1])))
            counts.append(int(parts[2]))
        except ValueError:
            raise DerivationError(f"grid entry '{entry}' is not numeric") from None
    return GridSpec(ranges=tuple(ranges), counts=tuple(counts), tol=tol)


@dataclass(frozen=True)
class VerifyReport:
    max_residual: float
    argmax: Tuple[float, ...]
    passed: bool
    samples: int
    wall_time: float
    threshold: float
    label: str = ""

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload["argmax"] = list(self.argmax)
        return payload


def _lambdify(ctx: JetContext, expression: sympy.Expr):
    undefined = sorted(function_atoms(expression), key=str)
    if undefined:
        raise EvaluationError(f"cannot evaluate undefined function {undefined[0]}", atom=str(undefined[0]))
    symbols = ctx.base_symbols
    unbound = sorted((symbol for symbol in expression.free_symbols if symbol not in symbols), key=str)
    if unbound:
        raise EvaluationError(f"unbound atom {unbound[0]} after substitution", atom=str(unbound[0]))
    return sympy.lambdify(symbols, expression, modules="numpy")


def _sample(ctx: JetContext, expression: sympy.Expr, mesh: Sequence[np.ndarray]) -> np.ndarray:
    values = _lambdify(ctx, expression)(*mesh)
    return np.broadcast_to(np.asarray(values, dtype=float), mesh[0].shape)


def _coefficients_along(rho: Form, section: Section) -> List[sympy.Expr]:
    ctx = rho.ctx
    n = ctx.n
    degrees = rho.degrees
    if rho.is_horizontal and degrees == {n - 1}:
        rho = horizontal_d(rho)
    elif rho.is_horizontal and rho.terms and degrees != {n}:
        raise DerivationError(f"expected a horizontal form of degree {n} or {n - 1}")
    if rho.is_horizontal:
        flat = pullback(rho, section)
        return [flat.coefficient(*(DX(i) for i in range(1, n + 1)))]
    return list(restrict(rho, section).terms.values())


def pullback_eval(
    rho: Form,
    section: Section,
    grid: GridSpec,
    cancel: Optional[CancelToken] = None,
    label: str = "",
) -> VerifyReport:
    """Pull rho back along the prolonged section and evaluate it on the grid.

    Horizontal (n-1)-forms are differentiated with d_H first; forms with contact
    factors are evaluated coefficient-wise along the section.
    """
    ctx = rho.ctx
    if grid.dimension != ctx.n:
        raise DerivationError(f"grid has {grid.dimension} coordinates, base has {ctx.n}")
    started = time.perf_counter()
    coefficients = list(dict.fromkeys(_coefficients_along(rho, section)))
    mesh = grid.mesh()
    residual = np.zeros(mesh[0].shape)
    scale = 0.0
    for coefficient in coefficients:
        check_cancel(cancel)
        residual = np.maximum(residual, np.abs(_sample(ctx, coefficient, mesh)))
        if grid.rel_floor > 0:
            for term in sympy.Add.make_args(coefficient):
                scale = max(scale, float(np.max(np.abs(_sample(ctx, term, mesh)))))
    flat_index = int(np.argmax(residual))
    position = np.unravel_index(flat_index, residual.shape)
    axes = grid.axes()
    argmax = tuple(float(axes[axis][index]) for axis, index in enumerate(position))
    max_residual = float(residual.flat[flat_index])
    threshold = max(grid.tol, grid.rel_floor * scale)
    report = VerifyReport(
        max_residual=max_residual,
        argmax=argmax,
        passed=max_residual <= threshold,
        samples=grid.samples,
        wall_time=time.perf_counter() - started,
        threshold=threshold,
        label=label,
    )
    logger.info("pullback check %s: max residual %.3e over %s samples", label or "-", max_residual, grid.samples)
    return report


def integrate(ctx: JetContext, expression: sympy.Expr, grid: GridSpec) -> float:
    """Composite trapezoid integral over the grid box."""
    values = np.array(_sample(ctx, expression, grid.mesh()), dtype=float)
    for axis, points in reversed(list(enumerate(grid.axes()))):
        values = _trapezoid(values, x=points, axis=axis)
    return float(values)


def _require_profile(ctx: JetContext, psi: VecField) -> None:
    if not psi.is_vertical:
        raise DerivationError("finite-difference checks need a vertical vector field")
    allowed = set(ctx.base_symbols)
    for component in psi.psi:
        if not component.free_symbols <= allowed or function_atoms(component):
            raise DerivationError(f"vector field '{psi.name}' must have components depending on x only")


def finite_difference_check(
    lam: Form,
    section: Section,
    psi: VecField,
    h_step: float,
    grid: GridSpec,
    cancel: Optional[CancelToken] = None,
) -> VerifyReport:
    """Central difference of the action along section + eps*psi against the first-variation integrand."""
    ctx = lam.ctx
    _require_profile(ctx, psi)
    if h_step <= 0:
        raise DerivationError("finite-difference step must be positive")
    started = time.perf_counter()
    volume_factors = tuple(DX(i) for i in range(1, ctx.n + 1))
    density = lam.coefficient(*volume_factors)

    def action(shift: float) -> float:
        check_cancel(cancel)
        moved = Section.build(
            ctx, [value + shift * delta for value, delta in zip(section.components, psi.psi)], name=section.name
        )
        flat = pullback(Form(ctx, [(volume_factors, density)]), moved)
        return integrate(ctx, flat.coefficient(*volume_factors), grid)

    difference = (action(h_step) - action(-h_step)) / (2 * h_step)
    integrand = interior(psi, euler_lagrange(lam, cancel=cancel), part="vertical")
    integrand = integrand + noether_current(lam, psi, cancel=cancel).divergence()
    exact = integrate(ctx, pullback(integrand, section).coefficient(*volume_factors), grid)
    discrepancy = abs(difference - exact)
    logger.info("finite difference %.12g vs symbolic %.12g (h=%s)", difference, exact, h_step)
    return VerifyReport(
        max_residual=discrepancy,
        argmax=(),
        passed=discrepancy <= grid.tol,
        samples=grid.samples,
        wall_time=time.perf_counter() - started,
        threshold=grid.tol,
        label="firstvar",
    )
