import pytest
import sympy

from varfield import numverify
from varfield.calcforms import DX, Form
from varfield.errors import DerivationError, EvaluationError
from varfield.jetgeom import VecField
from varfield.modeldsl import parse_model
from varfield.numverify import GridSpec
from varfield.varops import euler_lagrange, jacobi_morphism, pair_current

QUARTIC = """
dim 1
field y
lagrangian = 1/4 * d1(y)^4
vecfield quad = { y: x^2 }
vecfield arb = { y: arbitrary }
section line = { y: x }
"""


def test_parse_grid_repeats_single_entry():
    grid = numverify.parse_grid("0:1:5", 2, tol=1e-6)
    assert grid.ranges == ((0.0, 1.0), (0.0, 1.0))
    assert grid.counts == (5, 5)
    assert grid.samples == 25
    assert grid.tol == 1e-6


def test_parse_grid_per_coordinate_entries():
    grid = numverify.parse_grid("0:1:5, -1:1:3", 2)
    assert grid.ranges[1] == (-1.0, 1.0)
    assert grid.counts == (5, 3)


@pytest.mark.parametrize("text", ["0:1", "0:1:x", "0:1:1", "1:0:5", "0:1:5,0:1:5,0:1:5"])
def test_parse_grid_rejects_bad_specs(text):
    with pytest.raises(DerivationError):
        numverify.parse_grid(text, 2)


def test_grid_spec_validation():
    with pytest.raises(DerivationError):
        GridSpec(ranges=((0.0, 1.0),), counts=(5, 5))
    with pytest.raises(DerivationError):
        GridSpec.uniform(1, 0.0, 1.0, 5, tol=0.0)
    assert GridSpec.uniform(3, 0.0, 1.0, 4).samples == 64


def test_integrate_trapezoid(free_particle, wave):
    x = free_particle.ctx.x(1)
    assert numverify.integrate(free_particle.ctx, x**2, GridSpec.uniform(1, 0.0, 1.0, 1001)) == pytest.approx(1 / 3, abs=1e-6)
    x1, x2 = wave.ctx.base_symbols
    assert numverify.integrate(wave.ctx, x1 * x2, GridSpec.uniform(2, 0.0, 1.0, 11)) == pytest.approx(0.25)


def test_euler_vanishes_along_extremal(free_particle):
    euler = euler_lagrange(free_particle.lagrangian_form())
    report = numverify.pullback_eval(euler, free_particle.section("ext1"), numverify.parse_grid("0:1:33", 1))
    assert report.passed
    assert report.max_residual == 0.0
    assert report.samples == 33


def test_euler_along_non_extremal_reports_worst_point(free_particle):
    euler = euler_lagrange(free_particle.lagrangian_form())
    report = numverify.pullback_eval(euler, free_particle.section("cubic"), numverify.parse_grid("0:1:33", 1))
    assert not report.passed
    assert report.max_residual == pytest.approx(6.0)
    assert report.argmax == (1.0,)


def test_pair_current_is_conserved_along_extremal(free_particle):
    current = pair_current(free_particle.lagrangian_form(), free_particle.vecfield("psiA"), free_particle.vecfield("psiB"))
    report = numverify.pullback_eval(current.form, free_particle.section("ext1"), numverify.parse_grid("0:1:33", 1))
    assert report.passed
    assert report.max_residual <= 1e-12


def test_ties_resolve_to_first_grid_point(free_particle):
    constant = Form.basis(free_particle.ctx, DX(1), coefficient=5)
    report = numverify.pullback_eval(constant, free_particle.section("ext1"), GridSpec.uniform(1, 0.0, 1.0, 9))
    assert report.max_residual == 5.0
    assert report.argmax == (0.0,)
    assert report.to_dict()["argmax"] == [0.0]


def test_pullback_eval_argument_checks(free_particle, wave):
    euler = euler_lagrange(free_particle.lagrangian_form())
    with pytest.raises(DerivationError):
        numverify.pullback_eval(euler, free_particle.section("ext1"), GridSpec.uniform(2, 0.0, 1.0, 3))
    with pytest.raises(DerivationError):
        numverify.pullback_eval(Form.scalar(wave.ctx, 1), wave.section("standing"), GridSpec.uniform(2, 0.0, 1.0, 3))


def test_undefined_functions_cannot_be_evaluated():
    model = parse_model(QUARTIC)
    jacobi = jacobi_morphism(model.lagrangian_form(), model.vecfield("arb"))
    with pytest.raises(EvaluationError) as info:
        numverify.pullback_eval(jacobi, model.section("line"), GridSpec.uniform(1, 0.0, 1.0, 5))
    assert "arb" in info.value.atom


def test_finite_difference_free_particle(free_particle):
    grid = numverify.parse_grid("0:1:1001", 1, tol=1e-6)
    lam = free_particle.lagrangian_form()
    report = numverify.finite_difference_check(lam, free_particle.section("parabola"), free_particle.vecfield("bump"), 1e-5, grid)
    assert report.passed
    assert report.label == "firstvar"


def test_finite_difference_wave(wave):
    grid = numverify.parse_grid("0:1:101", 2, tol=1e-6)
    report = numverify.finite_difference_check(
        wave.lagrangian_form(), wave.section("standing"), wave.vecfield("bump"), 1e-5, grid
    )
    assert report.passed


def test_finite_difference_error_shrinks_quadratically():
    model = parse_model(QUARTIC)
    lam, section, psi = model.lagrangian_form(), model.section("line"), model.vecfield("quad")
    grid = GridSpec.uniform(1, 0.0, 1.0, 101)
    coarse = numverify.finite_difference_check(lam, section, psi, 0.02, grid).max_residual
    fine = numverify.finite_difference_check(lam, section, psi, 0.01, grid).max_residual
    assert coarse == pytest.approx(8e-4, rel=1e-3)
    assert coarse / fine == pytest.approx(4.0, rel=1e-3)


def test_finite_difference_of_zero_field(free_particle):
    grid = GridSpec.uniform(1, 0.0, 1.0, 11)
    report = numverify.finite_difference_check(
        free_particle.lagrangian_form(), free_particle.section("cubic"), VecField.zero(free_particle.ctx), 1e-3, grid
    )
    assert report.max_residual == 0.0
    assert report.passed


@pytest.mark.parametrize("name", ["translate", "scale"])
def test_finite_difference_needs_x_only_vertical_field(free_particle, name):
    with pytest.raises(DerivationError):
        numverify.finite_difference_check(
            free_particle.lagrangian_form(),
            free_particle.section("ext1"),
            free_particle.vecfield(name),
            1e-5,
            GridSpec.uniform(1, 0.0, 1.0, 11),
        )


def test_finite_difference_step_must_be_positive(free_particle):
    with pytest.raises(DerivationError):
        numverify.finite_difference_check(
            free_particle.lagrangian_form(),
            free_particle.section("ext1"),
            free_particle.vecfield("bump"),
            0.0,
            GridSpec.uniform(1, 0.0, 1.0, 11),
        )


def test_report_dict_is_json_ready():
    report = numverify.VerifyReport(1e-3, (0.25, 0.5), False, 9, 0.1, 1e-9, "euler")
    assert report.to_dict() == {
        "max_residual": 1e-3,
        "argmax": [0.25, 0.5],
        "passed": False,
        "samples": 9,
        "wall_time": 0.1,
        "threshold": 1e-9,
        "label": "euler",
    }


def test_sympy_constants_are_broadcast(free_particle):
    samples = numverify._sample(free_particle.ctx, sympy.Integer(2), GridSpec.uniform(1, 0.0, 1.0, 4).mesh())
    assert samples.shape == (4,)
    assert list(samples) == [2.0] * 4
