"""Plain text, LaTeX and JSON renderings of expressions, forms and reports."""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import orjson
import sympy

from .calcforms import DX, DY, OMEGA, BasisOne, Form, Kind, Monomial
from .errors import DerivationError
from .jetgeom import JetContext
from .modeldsl import ModelSpec, parse_expression
from .numverify import VerifyReport
from .symkernel import MultiIndex, canonicalize, jet_name, parse_base_name, split_jet_name
from .varops import NoetherCurrent

logger = logging.getLogger(__name__)

SCHEMA = "varfield-json/1"
FORMATS = ("plain", "latex", "json")

Renderable = Union[sympy.Expr, int, Form, NoetherCurrent, VerifyReport]


def render(value: Renderable, fmt: str = "plain", ctx: Optional[JetContext] = None) -> str:
    if fmt not in FORMATS:
        raise DerivationError(f"unknown output format '{fmt}'")
    if isinstance(value, NoetherCurrent):
        value = value.form
    if isinstance(value, VerifyReport):
        return _render_report(value, fmt)
    if fmt == "json":
        return orjson.dumps(to_json(value, ctx), option=orjson.OPT_SORT_KEYS).decode("utf-8")
    if isinstance(value, Form):
        return _render_form(value, latex=fmt == "latex")
    expression = canonicalize(value)
    return _latex_expression(expression) if fmt == "latex" else sympy.sstr(expression)


# ---------------------------------------------------------------------------
# display order: contact factors first, then the horizontal part


def _display_terms(form: Form) -> List[Tuple[sympy.Expr, List[BasisOne], Tuple[str, Optional[int]], List[int]]]:
    """(coefficient, contact factors, horizontal tag) with signs adjusted for the reordering."""
    n = form.ctx.n
    items = []
    for monomial, coefficient in form.terms.items():
        horizontal = [factor.index for factor in monomial if factor.kind == Kind.DX]
        contact = [factor for factor in monomial if factor.kind != Kind.DX]
        sign = (-1) ** (len(horizontal) * len(contact))
        if len(horizontal) == n:
            tag: Tuple[str, Optional[int]] = ("vol", None)
        elif n >= 2 and len(horizontal) == n - 1:
            missing = next(i for i in range(1, n + 1) if i not in horizontal)
            sign *= (-1) ** (missing - 1)
            tag = ("ds", missing)
        elif not horizontal:
            tag = ("none", None)
        else:
            tag = ("dx", None)
        items.append((sign * coefficient, contact, tag, horizontal))
    return items


def _horizontal_text(ctx: JetContext, tag: Tuple[str, Optional[int]], horizontal: Sequence[int], latex: bool) -> List[str]:
    kind, index = tag
    n = ctx.n
    if kind == "none":
        return []
    if kind == "vol":
        if n == 1:
            return ["dx"]
        return ["ds"]
    if kind == "ds":
        return [f"ds_{{{index}}}" if latex else f"ds_{index}"]
    return [_dx_text(n, i, latex) for i in horizontal]


def _dx_text(n: int, index: int, latex: bool) -> str:
    if n == 1:
        return "dx"
    return f"dx^{{{index}}}" if latex else f"dx{index}"


def _label_suffix(label: str) -> str:
    bracket = label.find("[")
    return label[bracket + 1 : -1] if bracket >= 0 else label


def _multi_latex(multi: MultiIndex) -> str:
    if any(entry >= 10 for entry in multi):
        return multi.label()
    return "".join(str(entry) for entry in multi)


def _factor_text(ctx: JetContext, factor: BasisOne, latex: bool) -> str:
    label = ctx.labels[factor.index - 1]
    multi = factor.multi
    if factor.kind == Kind.OMEGA:
        if latex:
            head = r"\omega" if ctx.m == 1 else rf"\omega^{{({_label_suffix(label)})}}"
            return head + (f"_{{{_multi_latex(multi)}}}" if len(multi) else "")
        head = "ω" if ctx.m == 1 else f"ω^{{{label}}}"
        return head + (f"_{{{multi.label()}}}" if len(multi) else "")
    if latex:
        return "d" + _latex_symbol_name(jet_name(label, multi))
    return "d" + jet_name(label, multi)


def _render_form(form: Form, latex: bool) -> str:
    ctx = form.ctx
    pieces = []
    for coefficient, contact, tag, horizontal in _display_terms(form):
        factors = [_factor_text(ctx, factor, latex) for factor in contact]
        factors.extend(_horizontal_text(ctx, tag, horizontal, latex))
        wedge = r"\wedge " if latex else "∧"
        basis = wedge.join(factors)
        pieces.append(_term_text(canonicalize(coefficient), basis, latex))
    if not pieces:
        return "0"
    pieces.sort(key=lambda piece: (piece[1], piece[0]))
    text = ""
    for index, (sign, key, body) in enumerate(pieces):
        if index == 0:
            text = ("-" if sign < 0 else "") + body
        else:
            text += (" - " if sign < 0 else " + ") + body
    return text


def _term_text(coefficient: sympy.Expr, basis: str, latex: bool) -> Tuple[int, str, str]:
    """(sign, sort key, unsigned text) of one displayed term."""
    sign = 1
    if coefficient.could_extract_minus_sign() and not isinstance(coefficient, sympy.Add):
        sign = -1
        coefficient = -coefficient
    if latex:
        body = _latex_expression(coefficient)
        if isinstance(coefficient, sympy.Add):
            body = rf"\left({body}\right)"
        separator = r"\,"
    else:
        body = sympy.sstr(coefficient)
        if isinstance(coefficient, sympy.Add):
            body = f"({body})"
        separator = " "
    if not basis:
        return sign, "", body
    if coefficient == 1:
        return sign, basis, basis
    return sign, basis, body + separator + basis


# ---------------------------------------------------------------------------
# LaTeX


def _latex_symbol_name(name: str) -> str:
    base = parse_base_name(name)
    if base is not None:
        return name if name == "x" else f"x^{{{base}}}"
    parsed = split_jet_name(name)
    if parsed is None:
        return name
    label, multi = parsed
    bracket = label.find("[")
    if bracket >= 0:
        head = f"{label[:bracket]}^{{({label[bracket + 1:-1]})}}"
    else:
        head = label
    if not len(multi):
        return head
    return f"{head}_{{{_multi_latex(multi)}}}"


def _latex_expression(expression: sympy.Expr) -> str:
    names = {symbol: _latex_symbol_name(symbol.name) for symbol in expression.free_symbols}
    return sympy.latex(expression, symbol_names=names)


# ---------------------------------------------------------------------------
# JSON


def _atoms(monomial: sympy.Expr) -> Tuple[sympy.Rational, List[List[Any]]]:
    rational, rest = monomial.as_coeff_Mul()
    atoms = []
    if rest != 1:
        for atom, power in sorted(rest.as_powers_dict().items(), key=lambda item: sympy.sstr(item[0])):
            power = sympy.sympify(power)
            atoms.append([sympy.sstr(atom), int(power) if power.is_Integer else sympy.sstr(power)])
    return sympy.Rational(rational), atoms


def _basis_json(factor: BasisOne) -> List[Any]:
    if factor.kind == Kind.DX:
        return ["dx", factor.index]
    name = "omega" if factor.kind == Kind.OMEGA else "dy"
    return [name, factor.index, list(factor.multi.entries)]


def _expression_terms(expression: sympy.Expr, basis: List[List[Any]]) -> List[Dict[str, Any]]:
    terms = []
    for monomial in sorted(sympy.Add.make_args(canonicalize(expression)), key=sympy.sstr):
        if monomial == 0:
            continue
        rational, atoms = _atoms(monomial)
        terms.append({"coeff": str(rational), "atoms": atoms, "basis": basis})
    return terms


def to_json(value: Union[sympy.Expr, int, Form], ctx: Optional[JetContext] = None) -> Dict[str, Any]:
    if isinstance(value, Form):
        ctx = value.ctx
        terms: List[Dict[str, Any]] = []
        for monomial, coefficient in value.terms.items():
            terms.extend(_expression_terms(coefficient, [_basis_json(factor) for factor in monomial]))
        degrees = value.degrees
        degree = next(iter(degrees)) if len(degrees) == 1 else (0 if not degrees else None)
        kind = "form"
    else:
        terms = _expression_terms(sympy.sympify(value), [])
        degree = 0
        kind = "expr"
    return {
        "schema": SCHEMA,
        "kind": kind,
        "n": ctx.n if ctx is not None else None,
        "fields": list(ctx.labels) if ctx is not None else [],
        "degree": degree,
        "terms": terms,
    }


def _render_report(report: VerifyReport, fmt: str) -> str:
    payload = report.to_dict()
    if fmt == "json":
        payload = {"schema": SCHEMA, "kind": "report", **payload}
        return orjson.dumps(payload, option=orjson.OPT_SORT_KEYS).decode("utf-8")
    status = "PASS" if report.passed else "FAIL"
    point = ", ".join(f"{value:.6g}" for value in report.argmax)
    if fmt == "latex":
        relation = r"\le" if report.passed else ">"
        return rf"\text{{{status}}}\quad \max|r| = {report.max_residual:.3e} {relation} {report.threshold:.1e}"
    return (
        f"{status}: max |residual| = {report.max_residual:.3e} at ({point}); "
        f"threshold {report.threshold:.1e}; {report.samples} samples in {report.wall_time:.2f}s"
    )


def _basis_factor(entry: Sequence[Any]) -> BasisOne:
    kind = entry[0]
    if kind == "dx":
        return DX(int(entry[1]))
    multi = MultiIndex(tuple(int(value) for value in entry[2]))
    if kind == "omega":
        return OMEGA(int(entry[1]), multi)
    if kind == "dy":
        return DY(int(entry[1]), multi)
    raise DerivationError(f"unknown basis element '{kind}'")


def load_json(text: Union[str, bytes], model: ModelSpec) -> Union[sympy.Expr, Form, Dict[str, Any]]:
    """Rebuild an expression or form from its JSON rendering; reports come back as dicts."""
    payload = orjson.loads(text)
    if payload.get("schema") != SCHEMA:
        raise DerivationError(f"unsupported schema {payload.get('schema')!r}")
    kind = payload.get("kind")
    if kind == "report":
        return payload
    atoms_cache: Dict[str, sympy.Expr] = {}

    def atom_value(name: str) -> sympy.Expr:
        if name not in atoms_cache:
            atoms_cache[name] = parse_expression(name, model)
        return atoms_cache[name]

    pairs: List[Tuple[Monomial, sympy.Expr]] = []
    for term in payload.get("terms", []):
        value = sympy.Rational(term["coeff"])
        for name, power in term["atoms"]:
            value *= atom_value(name) ** sympy.Rational(power)
        basis = tuple(_basis_factor(entry) for entry in term.get("basis", []))
        pairs.append((basis, value))
    if kind == "expr":
        return canonicalize(sympy.Add(*(value for _, value in pairs)))
    if kind == "form":
        return Form(model.ctx, pairs)
    raise DerivationError(f"unknown document kind {kind!r}")
