import pytest
import sympy

from varfield import calcforms
from varfield.calcforms import DX, OMEGA, Form, ds, dx, dy, omega, volume
from varfield.errors import DerivationError
from varfield.jetgeom import JetContext, Section, VecField
from varfield.symkernel import MultiIndex


@pytest.fixture
def line() -> JetContext:
    return JetContext(n=1, labels=("y",))


@pytest.fixture
def space() -> JetContext:
    return JetContext(n=3, labels=("u",))


def y1(ctx: JetContext) -> sympy.Symbol:
    return ctx.y(1, MultiIndex.of(1))


def test_wedge_is_graded_antisymmetric(line):
    assert (dx(line, 1) ^ dx(line, 1)).is_zero()
    assert dx(line, 1) ^ omega(line, 1) == -(omega(line, 1) ^ dx(line, 1))
    assert (omega(line, 1) ^ omega(line, 1)).is_zero()


def test_ds_completes_the_volume(space):
    for i in range(1, 4):
        assert dx(space, i) ^ ds(space, i) == volume(space)


def test_dy_splits_into_contact_and_horizontal_parts(line):
    assert dy(line, 1) == omega(line, 1) + dx(line, 1) * y1(line)


def test_exterior_derivative_squares_to_zero(line):
    x = line.x(1)
    value = Form.scalar(line, x * y1(line) ** 2 + line.y(1) ** 3)
    assert calcforms.ext_d(calcforms.ext_d(value)).is_zero()
    one_form = omega(line, 1) * (x * line.y(1))
    assert calcforms.ext_d(calcforms.ext_d(one_form)).is_zero()


def test_contact_split_of_lagrangian_differential(line):
    lam = dx(line, 1) * (y1(line) ** 2 / 2)
    split = calcforms.contact_split(calcforms.ext_d(lam))
    assert split.horizontal.is_zero()
    assert split[1] == Form.basis(line, OMEGA(1, MultiIndex.of(1)), DX(1), coefficient=y1(line))
    assert split[5].is_zero()


def test_contact_split_sums_back(line):
    rho = dy(line, 1) * line.y(1)
    split = calcforms.contact_split(rho)
    assert split.total() == rho


def test_horizontal_derivative_of_function(line):
    lam = Form.scalar(line, y1(line) ** 2 / 2)
    expected = dx(line, 1) * (y1(line) * line.y(1, MultiIndex.of(1, 1)))
    assert calcforms.horizontal_d(lam) == expected


def test_d_splits_into_horizontal_and_vertical_parts(line):
    value = Form.scalar(line, line.x(1) * y1(line))
    d_h, d_v = calcforms.horizontal_vertical_d(value)
    assert d_h + d_v == calcforms.ext_d(value)
    assert d_h.is_horizontal


def test_formal_derivative_shifts_contact_factors(line):
    shifted = calcforms.formal_derivative_form(omega(line, 1), 1)
    assert shifted == omega(line, 1, MultiIndex.of(1))


def test_interior_products(line):
    x = line.x(1)
    shear = VecField.vertical(line, [x])
    translate = VecField.build(line, xi=[1])
    assert calcforms.interior(shear, omega(line, 1)) == x
    assert calcforms.interior(translate, omega(line, 1)) == -y1(line)
    assert calcforms.interior(translate, omega(line, 1), part="horizontal").is_zero()
    assert calcforms.interior(translate, dx(line, 1)) == 1
    with pytest.raises(DerivationError):
        calcforms.interior(shear, dx(line, 1), part="sideways")


def test_lie_derivative_of_free_particle_lagrangian(line):
    lam = dx(line, 1) * (y1(line) ** 2 / 2)
    shear = VecField.vertical(line, [line.x(1)])
    translate = VecField.build(line, xi=[1])
    assert calcforms.horizontal(calcforms.lie_derivative(shear, lam)) == dx(line, 1) * y1(line)
    assert calcforms.horizontal(calcforms.lie_derivative(translate, lam)).is_zero()


def test_pullback_and_restrict(line):
    x = line.x(1)
    straight = Section.build(line, [2 + 3 * x], name="straight")
    assert calcforms.pullback(dx(line, 1) * y1(line), straight) == dx(line, 1) * 3
    assert calcforms.pullback(omega(line, 1), straight).is_zero()
    assert calcforms.restrict(omega(line, 1) * y1(line), straight) == omega(line, 1) * 3


def test_degree_of_inhomogeneous_form_raises(line):
    mixed = Form.scalar(line, 1) + dx(line, 1)
    assert mixed.degrees == {0, 1}
    with pytest.raises(DerivationError):
        mixed.degree


def test_forms_are_immutable(line):
    with pytest.raises(AttributeError):
        dx(line, 1).order = 3
