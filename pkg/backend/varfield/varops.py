"""Variational operators built on the contact-adapted form calculus.

Everything here is a pure function of immutable inputs. Heavy operators take
an optional ``cancel`` token which is checked between derivation steps; a
cancelled derivation raises and never returns a partial result.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import sympy

from .calcforms import (
    DX,
    BasisOne,
    Form,
    Kind,
    contact_split,
    ds,
    ext_d,
    form_sum,
    horizontal,
    horizontal_d,
    interior,
    iterated_formal_derivative,
    lie_derivative,
    omega,
    restrict,
    volume,
)
from .errors import DerivationError, NotExtremalError
from .jetgeom import JetContext, Section, VecField, iterated_derivative, lie_bracket
from .symkernel import Expr, MultiIndex, canonicalize, partial
from .utils import CancelToken, check_cancel

logger = logging.getLogger(__name__)

ContactKey = Tuple[int, MultiIndex]


class SourceForm(Form):
    """k-contact (n+k)-form generated by the order-zero contact forms omega^sigma."""

    __slots__ = ("k",)

    @classmethod
    def of(cls, form: Form, k: int = 1) -> "SourceForm":
        n = form.ctx.n
        for monomial in form.terms:
            contacts = [factor for factor in monomial if factor.kind == Kind.OMEGA]
            dxs = [factor for factor in monomial if factor.kind == Kind.DX]
            if len(contacts) != k or len(dxs) != n or len(monomial) != n + k:
                raise DerivationError(f"not a {k}-contact source form of degree {n + k}")
            if not any(len(factor.multi) == 0 for factor in contacts):
                raise DerivationError("source form terms must contain an order-zero contact factor")
        obj = object.__new__(cls)
        object.__setattr__(obj, "ctx", form.ctx)
        object.__setattr__(obj, "terms", dict(form.terms))
        object.__setattr__(obj, "order", form.order)
        object.__setattr__(obj, "k", k)
        return obj

    def coefficients(self) -> Dict[int, Expr]:
        """E_sigma of E = sum E_sigma omega^sigma ^ dx^1 ^ ... ^ dx^n (k = 1 only)."""
        if self.k != 1:
            raise DerivationError("coefficient table is only defined for 1-contact source forms")
        n = self.ctx.n
        table = {sigma: sympy.Integer(0) for sigma in range(1, self.ctx.m + 1)}
        for monomial, coefficient in self.terms.items():
            sigma = monomial[-1].index
            table[sigma] = canonicalize(table[sigma] + (-1) ** n * coefficient)
        return table

    def coefficient_of(self, sigma: int) -> Expr:
        return self.coefficients()[sigma]


def source_form(ctx: JetContext, coefficients: Mapping[int, Expr]) -> SourceForm:
    """Assemble sum_sigma E_sigma omega^sigma ^ vol."""
    vol = volume(ctx)
    parts = [omega(ctx, sigma) * vol * value for sigma, value in coefficients.items()]
    return SourceForm.of(form_sum(ctx, parts), 1)


def lagrangian_form(ctx: JetContext, density: Expr) -> Form:
    return volume(ctx) * canonicalize(density)


def _require_lagrangian(lam: Form) -> None:
    if lam.is_zero():
        return
    if not lam.is_horizontal or lam.degree != lam.ctx.n:
        raise DerivationError("a Lagrangian must be a horizontal n-form")


def _require_vertical(*fields: VecField) -> None:
    for psi in fields:
        if not psi.is_vertical:
            raise DerivationError(f"vector field '{psi.name}' must be vertical")


def _contact_coefficients(part: Form) -> Dict[ContactKey, Form]:
    """Group p_k rho as sum omega^sigma_J ^ Psi^J_sigma, one entry per contact factor.

    A term with several contact factors contributes to each of them, which is
    the contraction d/dy^sigma_J applied to p_k rho.
    """
    pairs: Dict[ContactKey, List[Tuple[Tuple[BasisOne, ...], Expr]]] = defaultdict(list)
    for monomial, coefficient in part.terms.items():
        for position, factor in enumerate(monomial):
            if factor.kind != Kind.OMEGA:
                continue
            rest = monomial[:position] + monomial[position + 1 :]
            pairs[(factor.index, factor.multi)].append((rest, (-1) ** position * coefficient))
    return {key: Form(part.ctx, value, part.order) for key, value in pairs.items()}


def _check_contact_part(rho: Form, k: int) -> Form:
    if k < 1:
        raise DerivationError("the interior Euler operator needs contact degree k >= 1")
    part = contact_split(rho)[k]
    expected = rho.ctx.n + k
    if any(len(monomial) != expected for monomial in part.terms):
        raise DerivationError(f"expected a form of degree {expected}")
    return part


def interior_euler(rho: Form, k: int = 1, cancel: Optional[CancelToken] = None) -> SourceForm:
    """I(rho) = (1/k) omega^sigma ^ sum_J (-1)^|J| d_J (d/dy^sigma_J -| p_k rho)."""
    part = _check_contact_part(rho, k)
    ctx = rho.ctx
    pieces = []
    coefficients = _contact_coefficients(part)
    for sigma, multi in sorted(coefficients, key=lambda key: (key[0], key[1].sort_key())):
        check_cancel(cancel)
        psi_form = coefficients[(sigma, multi)]
        term = iterated_formal_derivative(psi_form, multi) * ((-1) ** len(multi))
        pieces.append(omega(ctx, sigma) * term)
    result = form_sum(ctx, pieces, part.order) * sympy.Rational(1, k)
    logger.debug("interior Euler: %s terms at order %s", len(result.terms), result.order)
    return SourceForm.of(result, k)


def _devolume(phi: Form) -> Form:
    """Strip the volume from dx^1 ^ ... ^ dx^n ^ C, moving it behind C."""
    ctx = phi.ctx
    n = ctx.n
    full = tuple(DX(i) for i in range(1, n + 1))
    pairs = []
    for monomial, coefficient in phi.terms.items():
        if monomial[:n] != full:
            raise DerivationError("flux term is not of the form vol ^ C")
        rest = monomial[n:]
        pairs.append((rest, (-1) ** (n * len(rest)) * coefficient))
    return Form(ctx, pairs, phi.order)


@dataclass(frozen=True)
class ResidualDecomposition:
    rho: Form
    k: int
    I_part: SourceForm
    R_part: Form
    zeta: Mapping[ContactKey, Form] = field(default_factory=dict)
    phi: Mapping[int, Form] = field(default_factory=dict)

    def identity_residual(self) -> Form:
        """p_k rho - I(rho) - p_k d p_k R(rho); identically zero."""
        k = self.k
        target = contact_split(self.rho)[k]
        exact = contact_split(ext_d(contact_split(self.R_part)[k]))[k]
        return target - self.I_part - exact


def residual(rho: Form, k: int = 1, cancel: Optional[CancelToken] = None) -> ResidualDecomposition:
    """Split p_k rho into its source part and a d-exact remainder by formal integration by parts."""
    part = _check_contact_part(rho, k)
    ctx = rho.ctx
    weight = sympy.Rational(1, k)
    psi = {key: form * weight for key, form in _contact_coefficients(part).items()}

    zeta_pieces: Dict[ContactKey, List[Form]] = defaultdict(list)
    for (sigma, top), psi_form in psi.items():
        check_cancel(cancel)
        for sub in top.sub_indices():
            lost = top - sub
            factor = (-1) ** len(lost) * top.binom(sub)
            zeta_pieces[(sigma, sub)].append(iterated_formal_derivative(psi_form, lost) * factor)
    zeta = {key: form_sum(ctx, forms) for key, forms in zeta_pieces.items()}

    source_pieces = [omega(ctx, sigma) * zeta_form for (sigma, multi), zeta_form in zeta.items() if not len(multi)]
    I_part = SourceForm.of(form_sum(ctx, source_pieces, part.order), k)

    flux_pieces: Dict[int, List[Form]] = defaultdict(list)
    for (sigma, multi), zeta_form in zeta.items():
        if not len(multi):
            continue
        check_cancel(cancel)
        generated = omega(ctx, sigma) * zeta_form
        for j in multi.distinct():
            share = sympy.Rational(multi.count(j), len(multi))
            flux_pieces[j].append(iterated_formal_derivative(generated, multi.remove(j)) * share)
    phi = {j: form_sum(ctx, forms) for j, forms in sorted(flux_pieces.items())}

    sign = (-1) ** k
    R_part = form_sum(ctx, [_devolume(flux) * ds(ctx, j) * sign for j, flux in phi.items()])
    logger.debug("residual: %s zeta entries, %s flux directions", len(zeta), len(phi))
    return ResidualDecomposition(rho=rho, k=k, I_part=I_part, R_part=R_part, zeta=zeta, phi=phi)


def euler_lagrange(lam: Form, cancel: Optional[CancelToken] = None) -> SourceForm:
    _require_lagrangian(lam)
    return interior_euler(ext_d(lam), 1, cancel=cancel)


def euler_expressions(ctx: JetContext, density: Expr) -> Dict[int, Expr]:
    """Textbook E_sigma = sum_J (-1)^|J| d_J dL/dy^sigma_J."""
    density = canonicalize(density)
    table = {sigma: sympy.Integer(0) for sigma in range(1, ctx.m + 1)}
    for atom in ctx.jet_atoms(density):
        term = iterated_derivative(ctx, partial(density, atom.symbol), atom.multi)
        table[atom.sigma] += (-1) ** len(atom.multi) * term
    return {sigma: canonicalize(value) for sigma, value in table.items()}


def momentum(lam: Form, cancel: Optional[CancelToken] = None) -> Form:
    """Generalized momentum -p_1 R(d lambda)."""
    _require_lagrangian(lam)
    if lam.is_zero():
        return Form.zero(lam.ctx)
    decomposition = residual(ext_d(lam), 1, cancel=cancel)
    return -contact_split(decomposition.R_part)[1]


@dataclass(frozen=True)
class NoetherCurrent:
    form: Form
    lagrangian: Form
    field: VecField
    momentum: Form

    @property
    def ctx(self) -> JetContext:
        return self.form.ctx

    def components(self) -> Dict[int, Expr]:
        """Coefficients epsilon^i of epsilon = epsilon^i ds_i."""
        ctx = self.ctx
        if ctx.n == 1:
            return {1: self.form.coefficient()}
        table = {}
        for i in range(1, ctx.n + 1):
            factors = tuple(DX(j) for j in range(1, ctx.n + 1) if j != i)
            table[i] = canonicalize((-1) ** (i - 1) * self.form.coefficient(*factors))
        return table

    def divergence(self) -> Form:
        return horizontal_d(self.form)

    def is_zero(self) -> bool:
        return self.form.is_zero()


def noether_current(lam: Form, psi: VecField, cancel: Optional[CancelToken] = None) -> NoetherCurrent:
    """epsilon_psi(lambda) = psi_V -| p_{d_V lambda} + psi_H -| lambda."""
    p = momentum(lam, cancel=cancel)
    check_cancel(cancel)
    current = interior(psi, p, part="vertical") + interior(psi, lam, part="horizontal")
    return NoetherCurrent(form=current, lagrangian=lam, field=psi, momentum=p)


def first_variation_residual(lam: Form, psi: VecField) -> Form:
    """h L_psi lambda - psi_V -| E(lambda) - d_H epsilon_psi(lambda)."""
    variation = horizontal(lie_derivative(psi, lam))
    source = interior(psi, euler_lagrange(lam), part="vertical")
    return variation - source - noether_current(lam, psi).divergence()


@dataclass(frozen=True)
class VariationDecomposition:
    fields: Tuple[VecField, ...]
    lagrangians: Tuple[Form, ...]
    euler_term: Form
    current_terms: Tuple[Form, ...]
    currents: Tuple[Tuple[NoetherCurrent, ...], ...]

    def total(self) -> Form:
        return form_sum(self.euler_term.ctx, (self.euler_term,) + self.current_terms)

    def lhs(self) -> Form:
        """h L_l ... h L_1 lambda computed directly from Lie derivatives."""
        value = self.lagrangians[0]
        for psi in self.fields:
            value = horizontal(lie_derivative(psi, value))
        return value

    def residual(self) -> Form:
        return self.lhs() - self.total()


def variation_decompose(
    lam: Form,
    fields: Sequence[VecField],
    cancel: Optional[CancelToken] = None,
) -> VariationDecomposition:
    """Higher variations as a nested Euler term plus a tower of d_H-exact currents.

    With Lambda_0 = lambda and Lambda_j = psi_j -| E(Lambda_{j-1}):
    h L_l ... h L_1 lambda = Lambda_l + sum_s D_l ... D_s (Lambda_{s-1}),
    where D_t(mu) = d_H epsilon_{psi_t}(mu).
    """
    fields = tuple(fields)
    if not fields:
        raise DerivationError("at least one vector field is required")
    _require_lagrangian(lam)
    lagrangians = [lam]
    for psi in fields:
        check_cancel(cancel)
        lagrangians.append(interior(psi, euler_lagrange(lagrangians[-1], cancel=cancel), part="vertical"))

    current_terms: List[Form] = []
    currents: List[Tuple[NoetherCurrent, ...]] = []
    for s in range(len(fields)):
        value = lagrangians[s]
        tower = []
        for psi in fields[s:]:
            check_cancel(cancel)
            current = noether_current(value, psi, cancel=cancel)
            tower.append(current)
            value = current.divergence()
        current_terms.append(value)
        currents.append(tuple(tower))
    logger.info("variation of order %s decomposed into %s current terms", len(fields), len(current_terms))
    return VariationDecomposition(
        fields=fields,
        lagrangians=tuple(lagrangians),
        euler_term=lagrangians[-1],
        current_terms=tuple(current_terms),
        currents=tuple(currents),
    )


def higher_noether_currents(
    lam: Form,
    first: VecField,
    second: VecField,
    cancel: Optional[CancelToken] = None,
) -> Tuple[NoetherCurrent, NoetherCurrent]:
    """The two currents of the second variation: of psi1 -| E(lambda) and of d_H epsilon_psi1(lambda)."""
    deformed = interior(first, euler_lagrange(lam, cancel=cancel), part="vertical")
    exact = noether_current(lam, first, cancel=cancel).divergence()
    return noether_current(deformed, second, cancel=cancel), noether_current(exact, second, cancel=cancel)


def _jacobi_from_euler(euler: SourceForm, psi: VecField, cancel: Optional[CancelToken]) -> SourceForm:
    deformed = interior(psi, euler, part="vertical")
    return euler_lagrange(deformed, cancel=cancel)


def jacobi_coordinate_forms(lam: Form, psi: VecField) -> Tuple[SourceForm, SourceForm]:
    """(adjoint, linearised) coordinate expressions of the Jacobi morphism.

    adjoint_sigma = sum_J (-1)^|J| d_J (psi^rho dE_rho/dy^sigma_J)
    linear_rho = sum_J d_J psi^sigma dE_rho/dy^sigma_J
    """
    _require_vertical(psi)
    ctx = lam.ctx
    table = euler_lagrange(lam).coefficients()
    adjoint = {sigma: sympy.Integer(0) for sigma in range(1, ctx.m + 1)}
    linear = {sigma: sympy.Integer(0) for sigma in range(1, ctx.m + 1)}
    for rho, value in table.items():
        for atom in ctx.jet_atoms(value):
            slope = partial(value, atom.symbol)
            adjoint[atom.sigma] += (-1) ** len(atom.multi) * iterated_derivative(ctx, psi.psi[rho - 1] * slope, atom.multi)
            linear[rho] += iterated_derivative(ctx, psi.psi[atom.sigma - 1], atom.multi) * slope
    return source_form(ctx, adjoint), source_form(ctx, linear)


def jacobi_morphism(
    lam: Form,
    psi: VecField,
    cancel: Optional[CancelToken] = None,
    check_adjoint: bool = False,
) -> SourceForm:
    """J_psi(lambda) = I d(psi -| I d lambda)."""
    _require_vertical(psi)
    result = _jacobi_from_euler(euler_lagrange(lam, cancel=cancel), psi, cancel)
    if check_adjoint:
        adjoint, _ = jacobi_coordinate_forms(lam, psi)
        mismatch = result - adjoint
        if not mismatch.is_zero():
            logger.warning(
                "Jacobi morphism differs from its adjoint coordinate form off shell (%s terms)",
                len(mismatch.terms),
            )
    return result


def nested_jacobi(lam: Form, fields: Sequence[VecField], cancel: Optional[CancelToken] = None) -> Form:
    """psi_l -| J_{psi_{l-1}}(Lambda_{l-2}); equals the Euler term of the l-th variation."""
    fields = tuple(fields)
    if len(fields) < 2:
        raise DerivationError("nested Jacobi terms need at least two vector fields")
    _require_vertical(*fields)
    value = lam
    for psi in fields[:-2]:
        value = interior(psi, euler_lagrange(value, cancel=cancel), part="vertical")
    jacobi = jacobi_morphism(value, fields[-2], cancel=cancel)
    return interior(fields[-1], jacobi, part="vertical")


def _require_extremal(lam: Form, section: Section, euler: Optional[SourceForm] = None) -> SourceForm:
    euler = euler if euler is not None else euler_lagrange(lam)
    on_shell = restrict(euler, section)
    if not on_shell.is_zero():
        raise NotExtremalError(f"section '{section.name}' is not an extremal", residual=on_shell)
    return euler


def is_jacobi_field(lam: Form, psi: VecField, section: Optional[Section] = None) -> Tuple[bool, Form]:
    jacobi = jacobi_morphism(lam, psi)
    if section is None:
        return jacobi.is_zero(), jacobi
    _require_extremal(lam, section)
    on_shell = restrict(jacobi, section)
    return on_shell.is_zero(), on_shell


def pair_current(
    lam: Form,
    first: VecField,
    second: VecField,
    cancel: Optional[CancelToken] = None,
) -> NoetherCurrent:
    """Noether current of psi2 for the deformed Lagrangian psi1 -| E(lambda)."""
    _require_vertical(first, second)
    deformed = interior(first, euler_lagrange(lam, cancel=cancel), part="vertical")
    return noether_current(deformed, second, cancel=cancel)


def check_commutator_identity(
    lam: Form,
    first: VecField,
    second: VecField,
    cancel: Optional[CancelToken] = None,
) -> Form:
    """psi1 -| J_psi2 - psi2 -| J_psi1 - [psi1, psi2] -| E - d_H epsilon_psi2(psi1 -| E)."""
    _require_vertical(first, second)
    euler = euler_lagrange(lam, cancel=cancel)
    lhs = interior(first, _jacobi_from_euler(euler, second, cancel), part="vertical") - interior(
        second, _jacobi_from_euler(euler, first, cancel), part="vertical"
    )
    check_cancel(cancel)
    bracket = lie_bracket(lam.ctx, first, second)
    deformed = interior(first, euler, part="vertical")
    rhs = interior(bracket, euler, part="vertical") + noether_current(deformed, second, cancel=cancel).divergence()
    return lhs - rhs


@dataclass(frozen=True)
class StrongConservation:
    residual: Form
    hypotheses: Mapping[str, bool]

    @property
    def holds(self) -> bool:
        return self.residual.is_zero()


def strong_conservation_check(
    lam: Form,
    fields: Sequence[VecField],
    s: int,
    cancel: Optional[CancelToken] = None,
) -> StrongConservation:
    """d_H eps_{psi_l} ... d_H eps_{psi_{s+1}} (h L_s ... h L_1 lambda) with the decidable hypotheses."""
    fields = tuple(fields)
    count = len(fields)
    if count < 2 or not 1 <= s < count:
        raise DerivationError(f"strong conservation needs l >= 2 fields and 1 <= s < l (got l={count}, s={s})")
    _require_lagrangian(lam)
    variations = [lam]
    for psi in fields[: count - 1]:
        check_cancel(cancel)
        variations.append(horizontal(lie_derivative(psi, variations[-1])))

    value = variations[s]
    for psi in fields[s:]:
        check_cancel(cancel)
        value = noether_current(value, psi, cancel=cancel).divergence()

    hypotheses: Dict[str, bool] = {}
    for t in range(s):
        if fields[t].is_vertical:
            hypotheses[f"jacobi[{t + 1}]"] = jacobi_morphism(variations[t], fields[t], cancel=cancel).is_zero()
    if fields[s - 1].is_vertical and fields[s].is_vertical:
        jacobi = jacobi_morphism(variations[s - 1], fields[s - 1], cancel=cancel)
        hypotheses["pairing"] = interior(fields[s], jacobi, part="vertical").is_zero()
    last = fields[-1]
    hypotheses[f"symmetry[{count}]"] = horizontal(lie_derivative(last, variations[count - 1])).is_zero()
    if not value.is_zero():
        logger.info("strong conservation residual is nonzero; hypotheses: %s", hypotheses)
    return StrongConservation(residual=value, hypotheses=hypotheses)


def naturality_residual(lam: Form, psi: VecField) -> Form:
    """L_psi E(lambda) - E(h L_psi lambda)."""
    euler = euler_lagrange(lam)
    return lie_derivative(psi, euler) - euler_lagrange(horizontal(lie_derivative(psi, lam)))


def self_adjointness_residual(
    lam: Form,
    first: VecField,
    second: VecField,
    section: Section,
    include_exact: bool = True,
) -> Form:
    """psi2 -| J_psi1 - psi1 -| J_psi2 (minus d_H eps_psi1(psi2 -| E)) along an extremal.

    With ``include_exact`` the value equals [psi2, psi1] -| E on the section, so it
    vanishes for every pair of vertical fields; without it, it vanishes for Jacobi fields.
    """
    _require_vertical(first, second)
    euler = _require_extremal(lam, section)
    value = interior(second, _jacobi_from_euler(euler, first, None), part="vertical") - interior(
        first, _jacobi_from_euler(euler, second, None), part="vertical"
    )
    if include_exact:
        deformed = interior(second, euler, part="vertical")
        value = value - noether_current(deformed, first).divergence()
    return restrict(value, section)


def generates_symmetry_transformations(lam: Form, psi: VecField, section: Section) -> Tuple[bool, Form]:
    """Whether the flow of psi maps the extremal to extremals to first order: E(h L_psi lambda) along it."""
    _require_vertical(psi)
    _require_extremal(lam, section)
    source = euler_lagrange(horizontal(lie_derivative(psi, lam)))
    on_shell = restrict(source, section)
    return on_shell.is_zero(), on_shell

