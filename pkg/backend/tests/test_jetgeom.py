import pytest
import sympy

from varfield import jetgeom
from varfield.errors import DerivationError, UnknownNameError
from varfield.jetgeom import ConstTable, JetContext, Section, VecField
from varfield.symkernel import MultiIndex


@pytest.fixture
def line() -> JetContext:
    return JetContext(n=1, labels=("y",))


@pytest.fixture
def plane() -> JetContext:
    return JetContext(n=2, labels=("u", "v"))


def test_context_symbols(line, plane):
    assert str(line.x(1)) == "x"
    assert str(line.y(1, MultiIndex.of(1, 1))) == "y_{1,1}"
    assert [str(symbol) for symbol in plane.base_symbols] == ["x1", "x2"]
    assert plane.sigma_of("v") == 2
    with pytest.raises(UnknownNameError):
        plane.sigma_of("w")


def test_context_rejects_bad_labels():
    with pytest.raises(DerivationError):
        JetContext(n=1, labels=("x",))
    with pytest.raises(DerivationError):
        JetContext(n=1, labels=("y", "y"))
    with pytest.raises(DerivationError):
        JetContext(n=0, labels=("y",))


def test_classify_and_order(plane):
    u12 = plane.y(1, MultiIndex.of(1, 2))
    atom = plane.classify(u12)
    assert atom.sigma == 1 and atom.multi == MultiIndex.of(1, 2)
    assert plane.classify(plane.x(1)) is None
    assert plane.order_of(u12 * plane.y(2)) == 2


def test_total_derivative_chain_rule(line):
    x, y1, y11 = line.x(1), line.y(1, MultiIndex.of(1)), line.y(1, MultiIndex.of(1, 1))
    assert jetgeom.total_derivative(line, y1**2 / 2, 1) == y1 * y11
    assert jetgeom.total_derivative(line, x * line.y(1), 1) == line.y(1) + x * y1


def test_total_derivatives_commute(plane):
    value = plane.x(1) * plane.y(1, MultiIndex.of(2)) ** 2 + plane.y(2) * plane.y(1)
    first = jetgeom.total_derivative(plane, jetgeom.total_derivative(plane, value, 1), 2)
    second = jetgeom.total_derivative(plane, jetgeom.total_derivative(plane, value, 2), 1)
    assert sympy.expand(first - second) == 0
    assert jetgeom.iterated_derivative(plane, value, MultiIndex.of(1, 2)) == first


def test_const_table_completes_antisymmetric_entries():
    table = ConstTable.from_entries("c", (3, 3, 3), "antisymmetric", {(1, 2, 3): 1})
    assert table.value(2, 1, 3) == -1
    assert table.value(3, 1, 2) == 1
    assert table.value(1, 1, 2) == 0
    assert table.satisfies_symmetry()


def test_const_table_rejects_contradictions():
    with pytest.raises(ValueError):
        ConstTable.from_entries("g", (2, 2), "symmetric", {(1, 2): 1, (2, 1): 2})
    with pytest.raises(ValueError):
        ConstTable.from_entries("c", (2, 2), "antisymmetric", {(1, 1): 1})


def test_vecfield_must_be_projectable(line):
    with pytest.raises(DerivationError):
        VecField.build(line, xi=[line.y(1)], psi=[0])
    with pytest.raises(DerivationError):
        VecField.vertical(line, [line.y(1, MultiIndex.of(1))])


def test_characteristic_and_prolongation(line):
    x = line.x(1)
    translate = VecField.build(line, xi=[1], name="translate")
    assert jetgeom.characteristic(line, translate, 1) == -line.y(1, MultiIndex.of(1))
    bend = VecField.vertical(line, [x**2], name="bend")
    prolonged = jetgeom.prolong_field(line, bend, 2)
    assert prolonged[(1, MultiIndex.of(1))] == 2 * x
    assert prolonged[(1, MultiIndex.of(1, 1))] == 2
    # the prolongation of a base translation has no jet components
    assert jetgeom.prolonged_component(line, translate, 1, MultiIndex.of(1)) == 0


def test_lie_bracket(line):
    x = line.x(1)
    translate = VecField.build(line, xi=[1])
    shear = VecField.vertical(line, [x])
    bracket = jetgeom.lie_bracket(line, translate, shear)
    assert bracket == VecField.vertical(line, [1])
    assert jetgeom.lie_bracket(line, shear, translate) == VecField.vertical(line, [-1])


def test_section_prolongation_and_substitution(line):
    x = line.x(1)
    section = Section.build(line, [x**3], name="cubic")
    values = jetgeom.prolong_section(line, section, 2)
    assert values[line.y(1, MultiIndex.of(1, 1))] == 6 * x
    expression = line.y(1) * line.y(1, MultiIndex.of(1))
    assert jetgeom.substitute_section(line, section, expression) == 3 * x**5


def test_section_components_must_not_depend_on_fibers(line):
    with pytest.raises(DerivationError):
        Section.build(line, [line.y(1)])
