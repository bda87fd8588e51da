"""Randomised checks of the exact identities of the variational bicomplex."""
from math import prod
from pathlib import Path
from typing import List, Optional

import sympy
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from varfield import jetgeom, varops
from varfield.calcforms import Form, ext_d, omega, volume
from varfield.jetgeom import JetContext, VecField
from varfield.modeldsl import parse_model
from varfield.symkernel import MultiIndex

CONTEXTS = (
    JetContext(n=1, labels=("y",)),
    JetContext(n=2, labels=("u",)),
    JetContext(n=1, labels=("u", "v")),
)

MODELS = Path(__file__).resolve().parents[1] / "varfield" / "models"
SHIPPED = tuple(
    parse_model((MODELS / name).read_text(encoding="utf-8")) for name in ("free_particle.vf", "wave.vf")
)

FAST = settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
SLOW = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def examples(count: int) -> settings:
    return settings(max_examples=count, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def polynomials(draw, ctx: JetContext, order: Optional[int], terms: int = 3):
    """Small integer polynomials in x and, unless order is None, the jets up to that order."""
    atoms = list(ctx.base_symbols)
    if order is not None:
        atoms += [ctx.y(sigma, multi) for sigma, multi in ctx.jet_coordinates(order)]
    value = sympy.Integer(0)
    for _ in range(draw(st.integers(1, terms))):
        coefficient = draw(st.integers(-3, 3))
        factors = draw(st.lists(st.sampled_from(atoms), max_size=3))
        value += coefficient * prod(factors, start=sympy.Integer(1))
    return sympy.expand(value)


@st.composite
def densities(draw, order: int):
    ctx = draw(st.sampled_from(CONTEXTS))
    return ctx, draw(polynomials(ctx, order))


@st.composite
def vector_fields(draw, ctx: JetContext, count: int, vertical: bool) -> List[VecField]:
    """Projectable fields with polynomial components in x and y."""
    fields = []
    for index in range(count):
        psi = [draw(polynomials(ctx, 0, terms=2)) for _ in range(ctx.m)]
        xi = None if vertical else [draw(polynomials(ctx, None, terms=2)) for _ in range(ctx.n)]
        fields.append(VecField.build(ctx, xi=xi, psi=psi, name=f"psi{index + 1}"))
    return fields


@st.composite
def lagrangian_and_fields(draw, count: int, vertical: bool = True):
    ctx, density = draw(densities(1))
    return varops.lagrangian_form(ctx, density), draw(vector_fields(ctx, count, vertical))


@st.composite
def model_lagrangian_and_fields(draw, count: int, vertical: bool = True):
    """Lagrangian of the free particle or the wave equation with random fields."""
    model = draw(st.sampled_from(SHIPPED))
    return model.lagrangian_form(), draw(vector_fields(model.ctx, count, vertical))


@st.composite
def contact_forms(draw, k: int):
    """Sums of omega^s1_J1 ^ ... ^ omega^sk_Jk ^ f dx^1 ^ ... ^ dx^n with random J and f."""
    ctx = draw(st.sampled_from(CONTEXTS))
    multis = list(MultiIndex.all(ctx.n, 2))
    rho = Form.zero(ctx)
    for _ in range(draw(st.integers(1, 3))):
        term = volume(ctx) * draw(polynomials(ctx, 1))
        for _ in range(k):
            term = omega(ctx, draw(st.integers(1, ctx.m)), draw(st.sampled_from(multis))) * term
        rho = rho + term
    return rho


@FAST
@given(densities(2))
def test_euler_lagrange_matches_textbook_expressions(drawn):
    ctx, density = drawn
    euler = varops.euler_lagrange(varops.lagrangian_form(ctx, density))
    assert euler.coefficients() == varops.euler_expressions(ctx, density)


@FAST
@given(densities(2))
def test_residual_operator_splits_exactly(drawn):
    ctx, density = drawn
    decomposition = varops.residual(ext_d(varops.lagrangian_form(ctx, density)))
    assert decomposition.identity_residual().is_zero()


@FAST
@given(contact_forms(1))
def test_residual_operator_splits_one_contact_forms(rho):
    decomposition = varops.residual(rho)
    assert decomposition.identity_residual().is_zero()
    assert decomposition.I_part == varops.interior_euler(rho)


@SLOW
@given(contact_forms(2))
def test_residual_operator_splits_two_contact_forms(rho):
    decomposition = varops.residual(rho, 2)
    assert decomposition.identity_residual().is_zero()
    assert decomposition.I_part == varops.interior_euler(rho, 2)


@SLOW
@given(densities(1))
def test_residual_operator_splits_second_variation_forms(drawn):
    ctx, density = drawn
    rho = ext_d(varops.euler_lagrange(varops.lagrangian_form(ctx, density)))
    decomposition = varops.residual(rho, 2)
    assert decomposition.identity_residual().is_zero()
    assert decomposition.I_part == varops.interior_euler(rho, 2)


@FAST
@given(densities(1), st.integers(1, 2))
def test_total_divergences_are_variationally_trivial(drawn, index):
    ctx, potential = drawn
    index = min(index, ctx.n)
    density = jetgeom.total_derivative(ctx, potential, index)
    assert varops.euler_lagrange(varops.lagrangian_form(ctx, density)).is_zero()


@examples(100)
@given(lagrangian_and_fields(1, vertical=False))
def test_first_variation_formula(drawn):
    lam, (psi,) = drawn
    assert varops.first_variation_residual(lam, psi).is_zero()


@examples(100)
@given(model_lagrangian_and_fields(1, vertical=False))
def test_first_variation_formula_on_shipped_models(drawn):
    lam, (psi,) = drawn
    assert varops.first_variation_residual(lam, psi).is_zero()


@examples(50)
@given(lagrangian_and_fields(2))
def test_commutator_identity(drawn):
    lam, (first, second) = drawn
    assert varops.check_commutator_identity(lam, first, second).is_zero()


@examples(50)
@given(model_lagrangian_and_fields(2))
def test_commutator_identity_on_shipped_models(drawn):
    lam, (first, second) = drawn
    assert varops.check_commutator_identity(lam, first, second).is_zero()


@SLOW
@given(lagrangian_and_fields(2))
def test_second_variation_decomposition(drawn):
    lam, fields = drawn
    assert varops.variation_decompose(lam, fields).residual().is_zero()


@SLOW
@given(lagrangian_and_fields(1, vertical=False))
def test_euler_operator_is_natural(drawn):
    lam, (psi,) = drawn
    assert varops.naturality_residual(lam, psi).is_zero()


@SLOW
@given(lagrangian_and_fields(2))
def test_jacobi_morphism_is_additive(drawn):
    lam, (first, second) = drawn
    combined = varops.jacobi_morphism(lam, first + second)
    assert combined == varops.jacobi_morphism(lam, first) + varops.jacobi_morphism(lam, second)
