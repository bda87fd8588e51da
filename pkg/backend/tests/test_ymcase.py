import pytest
import sympy

from varfield import ymcase
from varfield.calcforms import restrict
from varfield.errors import DerivationError
from varfield.jetgeom import substitute_section
from varfield.numverify import GridSpec, pullback_eval
from varfield.varops import euler_lagrange, is_jacobi_field, jacobi_morphism, pair_current, self_adjointness_residual


def test_model_shape(ym2):
    assert ym2.dim == 2
    assert ym2.algebra_dim == 3
    assert ym2.ctx.m == 6
    assert ym2.indices(ym2.sigma(3, 2)) == (3, 2)
    assert ym2.structure_constant(1, 2, 3) == 1


@pytest.mark.parametrize("group, dim", [("su3", 4), ("su2", 5), ("su2", 1)])
def test_unsupported_models(group, dim):
    with pytest.raises(DerivationError):
        ymcase.build_ym(group, dim)


def test_build_is_cached(ym2):
    assert ymcase.build_ym("su2", 2) is ym2


def test_field_strength_is_antisymmetric(ym2):
    for a in range(1, 4):
        for mu in (1, 2):
            for nu in (1, 2):
                total = ym2.field_strength(a, mu, nu) + ym2.field_strength(a, nu, mu)
                assert sympy.expand(total) == 0


def test_flat_connection_has_zero_action(ym2):
    flat = ymcase.flat_section(ym2)
    assert substitute_section(ym2.ctx, flat, ym2.spec.lagrangian) == 0
    assert restrict(euler_lagrange(ym2.lagrangian), flat).is_zero()


def test_euler_lagrange_matches_reference(ym2):
    comparison = ymcase.compare_euler(ym2)
    assert comparison.matches, comparison.mismatched
    assert comparison.components == 6
    assert euler_lagrange(ym2.lagrangian) == ymcase.ym_reference_euler(ym2)


def test_jacobi_equations_match_reference(ym2):
    comparison = ymcase.compare_jacobi(ym2, threads=2)
    assert comparison.matches, comparison.mismatched
    split = ymcase.ym_reference_jacobi(ym2)
    assert jacobi_morphism(ym2.lagrangian, ym2.spec.vecfield("psi")) == split.total()


def test_pair_current_matches_reference(ym2):
    comparison = ymcase.compare_pair_current(ym2)
    assert comparison.matches, comparison.mismatched
    assert comparison.components == 2
    assert comparison.to_dict()["mismatched"] == []


def test_pair_current_of_a_field_with_itself_vanishes(ym2):
    psi = ym2.spec.vecfield("psi")
    assert pair_current(ym2.lagrangian, psi, psi).is_zero()


def test_covariant_divergence_of_euler_expressions(ym2):
    values = ymcase.covariant_divergence(ym2, euler_lagrange(ym2.lagrangian))
    assert values == [0, 0, 0]


def test_quadratic_truncation_is_homogeneous(ym2):
    quadratic = ymcase.quadratic_truncation(ym2)
    doubled = quadratic.xreplace({atom.symbol: 2 * atom.symbol for atom in ym2.ctx.jet_atoms(quadratic)})
    assert sympy.expand(doubled - 4 * quadratic) == 0


def test_jacobi_morphism_linearises_along_flat_connection(ym2):
    psi = ym2.spec.vecfield("psi")
    jacobi = jacobi_morphism(ym2.lagrangian, psi)
    assert restrict(jacobi, ymcase.flat_section(ym2)) == ymcase.linearised_euler(ym2, psi)


def test_plane_waves_are_jacobi_fields_of_flat_connection(ym2):
    flat = ymcase.flat_section(ym2)
    first = ymcase.plane_wave(ym2, (1, 0, 0))
    second = ymcase.plane_wave(ym2, (0, 0, 1), profile=sympy.sin)
    assert is_jacobi_field(ym2.lagrangian, first, flat)[0]
    assert is_jacobi_field(ym2.lagrangian, second, flat)[0]
    residual = self_adjointness_residual(ym2.lagrangian, first, second, flat, include_exact=False)
    assert residual.is_zero()


def test_pair_current_of_plane_waves_is_conserved(ym2):
    first = ymcase.plane_wave(ym2, (1, 0, 0))
    second = ymcase.plane_wave(ym2, (0, 1, 0), profile=sympy.sin)
    current = pair_current(ym2.lagrangian, first, second)
    report = pullback_eval(current.form, ymcase.flat_section(ym2), GridSpec.uniform(2, 0.0, 1.0, 5))
    assert report.passed


def test_plane_wave_argument_checks(ym2):
    with pytest.raises(DerivationError):
        ymcase.plane_wave(ym2, (1, 0))
    with pytest.raises(DerivationError):
        ymcase.plane_wave(ym2, (1, 0, 0), polarisation=(1, 0, 0))


def test_null_phase_and_polarisation(ym2):
    x1, x2 = ym2.ctx.base_symbols
    assert ymcase.null_phase(ym2) == x1 - x2
    assert ymcase.transverse_polarisation(ym2) == (1, -1)


@pytest.mark.slow
@pytest.mark.parametrize("dim", [3, 4])
def test_higher_dimensional_comparisons(dim):
    model = ymcase.build_ym("su2", dim)
    assert ymcase.compare_euler(model, threads=4).matches
    assert ymcase.compare_jacobi(model, threads=4).matches
    assert ymcase.compare_pair_current(model, threads=4).matches
    assert ymcase.covariant_divergence(model, euler_lagrange(model.lagrangian)) == [0, 0, 0]


@pytest.mark.slow
def test_pair_current_of_plane_waves_is_conserved_in_dimension_four():
    model = ymcase.build_ym("su2", 4)
    first = ymcase.plane_wave(model, (1, 0, 0))
    second = ymcase.plane_wave(model, (0, 0, 1), profile=sympy.sin)
    current = pair_current(model.lagrangian, first, second)
    report = pullback_eval(current.form, ymcase.flat_section(model), GridSpec.uniform(4, 0.0, 1.0, 9))
    assert report.passed
    assert report.max_residual <= 1e-9
    assert report.samples == 9**4
