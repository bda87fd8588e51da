import orjson
import pytest
import sympy

from varfield import render
from varfield.calcforms import dx, omega
from varfield.errors import DerivationError
from varfield.numverify import VerifyReport
from varfield.symkernel import MultiIndex
from varfield.varops import euler_lagrange, momentum, noether_current


def test_plain_euler_lagrange_form(free_particle):
    euler = euler_lagrange(free_particle.lagrangian_form())
    assert render.render(euler) == "-y_{1,1} ω∧dx"


def test_latex_euler_lagrange_form(free_particle):
    euler = euler_lagrange(free_particle.lagrangian_form())
    assert render.render(euler, "latex") == r"-y_{11}\,\omega\wedge dx"


def test_plain_current_and_momentum(free_particle):
    lam = free_particle.lagrangian_form()
    assert render.render(noether_current(lam, free_particle.vecfield("translate"))) == "-y_{1}**2/2"
    assert render.render(momentum(lam)) == "y_{1} ω"


def test_plain_rendering_of_volume_and_ds(wave):
    ctx = wave.ctx
    assert render.render(dx(ctx, 1) ^ dx(ctx, 2)) == "ds"
    assert render.render(dx(ctx, 2) * 3) == "3 ds_1"
    assert render.render(dx(ctx, 1)) == "-ds_2"


def test_expression_rendering(free_particle):
    ctx = free_particle.ctx
    y1 = ctx.y(1, MultiIndex.of(1))
    assert render.render(y1**2 / 2) == "y_{1}**2/2"
    assert render.render(ctx.y(1, MultiIndex.of(1, 1)), "latex") == "y_{11}"


def test_latex_names_of_multi_component_fields(ym2):
    ctx = ym2.ctx
    symbol = ctx.y(ym2.sigma(1, 2), MultiIndex.of(1))
    assert render.render(symbol, "latex") == "w^{(1,2)}_{1}"


def test_zero_form_renders_as_zero(free_particle):
    assert render.render(omega(free_particle.ctx, 1) * 0) == "0"


def test_rendering_is_deterministic(wave):
    euler = euler_lagrange(wave.lagrangian_form())
    assert render.render(euler) == render.render(euler)
    assert render.render(euler, "json") == render.render(euler, "json")


def test_json_document_shape(free_particle):
    euler = euler_lagrange(free_particle.lagrangian_form())
    document = orjson.loads(render.render(euler, "json"))
    assert document["schema"] == render.SCHEMA
    assert document["kind"] == "form"
    assert document["degree"] == 2
    assert document["fields"] == ["y"]
    assert len(document["terms"]) == 1


def test_json_loads_back_forms_and_expressions(wave):
    euler = euler_lagrange(wave.lagrangian_form())
    assert render.load_json(render.render(euler, "json"), wave) == euler
    expression = wave.ctx.x(1) * wave.ctx.y(1, MultiIndex.of(2)) / 3
    assert render.load_json(render.render(expression, "json", wave.ctx), wave) == expression


def test_json_rejects_unknown_schema(free_particle):
    with pytest.raises(DerivationError):
        render.load_json(b'{"schema": "other/2", "kind": "form", "terms": []}', free_particle)


def test_report_rendering():
    report = VerifyReport(max_residual=2.5e-12, argmax=(0.5,), passed=True, samples=33, wall_time=0.01, threshold=1e-9)
    text = render.render(report)
    assert text.startswith("PASS: max |residual| = 2.500e-12 at (0.5)")
    assert "33 samples" in text
    payload = orjson.loads(render.render(report, "json"))
    assert payload["kind"] == "report"
    assert payload["argmax"] == [0.5]


def test_unknown_format():
    with pytest.raises(DerivationError):
        render.render(sympy.Integer(1), "html")
