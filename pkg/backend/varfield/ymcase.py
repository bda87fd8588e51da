"""Yang-Mills case study: model builder, closed-form references and the comparison harness.

The shipped models describe an su(2) connection w^A_mu on Minkowski space of
dimension 2, 3 or 4 with metric diag(+1, -1, ...), structure constants
c_ABC = epsilon_ABC and the Cartan-Killing form delta_AB. The closed-form
Euler-Lagrange expressions, Jacobi equations and pair current are kept as
data in ``models/yangmills_reference.vf`` and evaluated by the model
language, so the comparison never runs through the engine's own code paths.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import sympy

from .calcforms import Form, ds, form_sum
from .errors import DerivationError
from .jetgeom import JetContext, Section, VecField, total_derivative
from .modeldsl import ModelSpec, parse_model
from .symkernel import Expr, canonicalize
from .utils import CancelToken, check_cancel
from .varops import SourceForm, euler_lagrange, euler_expressions, jacobi_morphism, pair_current, source_form

logger = logging.getLogger(__name__)

MODELS_DIR = Path(__file__).resolve().parent / "models"
REFERENCE_FILE = "yangmills_reference.vf"
SUPPORTED: Dict[str, Tuple[int, ...]] = {"su2": (2, 3, 4)}


@dataclass(frozen=True)
class YMModel:
    group: str
    dim: int
    spec: ModelSpec

    @property
    def ctx(self) -> JetContext:
        return self.spec.ctx

    @property
    def algebra_dim(self) -> int:
        return self.spec.fields[0].ranges[0]

    @property
    def lagrangian(self) -> Form:
        return self.spec.lagrangian_form()

    def sigma(self, a: int, mu: int) -> int:
        """Fiber index of w^a_mu."""
        return self.spec.fiber_index("w", a, mu)

    def indices(self, sigma: int) -> Tuple[int, int]:
        """(a, mu) of the fiber index sigma."""
        for a, mu in self.components():
            if self.sigma(a, mu) == sigma:
                return a, mu
        raise DerivationError(f"fiber index {sigma} out of range")

    def components(self) -> List[Tuple[int, int]]:
        return [(a, mu) for a in range(1, self.algebra_dim + 1) for mu in range(1, self.dim + 1)]

    def field_strength(self, a: int, mu: int, nu: int) -> Expr:
        return self.spec.definition("F", a, mu, nu)

    def structure_constant(self, a: int, b: int, c: int) -> sympy.Rational:
        return self.spec.constants["c"].value(a, b, c)


def _model_text(group: str, dim: int) -> str:
    path = MODELS_DIR / f"yangmills_{group}_d{dim}.vf"
    reference = MODELS_DIR / REFERENCE_FILE
    return path.read_text(encoding="utf-8") + "\n" + reference.read_text(encoding="utf-8")


@lru_cache(maxsize=8)
def build_ym(group: str = "su2", dim: int = 4) -> YMModel:
    if dim not in SUPPORTED.get(group, ()):
        raise DerivationError(f"unsupported gauge group / dimension pair ({group}, {dim})")
    started = time.perf_counter()
    spec = parse_model(_model_text(group, dim))
    model = YMModel(group=group, dim=dim, spec=spec)
    logger.info(
        "built %s Yang-Mills model in dimension %s: m=%s, %s Lagrangian terms (%.2fs)",
        group,
        dim,
        spec.m,
        len(sympy.Add.make_args(spec.lagrangian)),
        time.perf_counter() - started,
    )
    return model


# ---------------------------------------------------------------------------
# closed-form references


def ym_reference_euler(model: YMModel) -> SourceForm:
    table = {model.sigma(b, nu): model.spec.definition("E", b, nu) for b, nu in model.components()}
    return source_form(model.ctx, table)


@dataclass(frozen=True)
class JacobiSplit:
    """Antisymmetric and symmetric parts of the Jacobi equations, keyed by fiber index."""

    antisymmetric: Mapping[int, Expr]
    symmetric: Mapping[int, Expr]
    ctx: JetContext

    def table(self) -> Dict[int, Expr]:
        return {sigma: canonicalize(self.antisymmetric[sigma] + self.symmetric[sigma]) for sigma in self.antisymmetric}

    def total(self) -> SourceForm:
        return source_form(self.ctx, self.table())


def ym_reference_jacobi(model: YMModel) -> JacobiSplit:
    """Jacobi equations for the arbitrary variation field ``psi``."""
    antisymmetric = {}
    symmetric = {}
    for b, nu in model.components():
        sigma = model.sigma(b, nu)
        antisymmetric[sigma] = model.spec.definition("JA", b, nu)
        symmetric[sigma] = model.spec.definition("JS", b, nu)
    return JacobiSplit(antisymmetric=antisymmetric, symmetric=symmetric, ctx=model.ctx)


def ym_reference_pair_current(model: YMModel) -> Form:
    """Current sum_xi CUR^xi ds_xi for the variation fields ``psi`` and ``psit``."""
    ctx = model.ctx
    return form_sum(ctx, (ds(ctx, xi) * model.spec.definition("CUR", xi) for xi in range(1, model.dim + 1)))


# ---------------------------------------------------------------------------
# comparison harness


@dataclass(frozen=True)
class Comparison:
    name: str
    components: int
    mismatched: Tuple[str, ...]
    wall_time: float

    @property
    def matches(self) -> bool:
        return not self.mismatched

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "components": self.components,
            "mismatched": list(self.mismatched),
            "matches": self.matches,
            "wall_time": self.wall_time,
        }


def _compare(
    name: str,
    engine: Mapping[Hashable, Expr],
    reference: Callable[[Hashable], Expr],
    label: Callable[[Hashable], str],
    threads: int,
    cancel: Optional[CancelToken],
) -> Comparison:
    keys = list(engine)

    def differs(key: Hashable) -> bool:
        check_cancel(cancel)
        return canonicalize(engine[key] - reference(key)) != 0

    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        flags = list(pool.map(differs, keys))
    mismatched = tuple(label(key) for key, flag in zip(keys, flags) if flag)
    if mismatched:
        logger.warning("%s: engine and reference disagree on %s of %s components", name, len(mismatched), len(keys))
    else:
        logger.info("%s: all %s components agree", name, len(keys))
    return Comparison(name=name, components=len(keys), mismatched=mismatched, wall_time=time.perf_counter() - started)


def _label(model: YMModel) -> Callable[[int], str]:
    return lambda sigma: model.ctx.labels[sigma - 1]


def compare_euler(model: YMModel, threads: int = 1, cancel: Optional[CancelToken] = None) -> Comparison:
    engine = euler_lagrange(model.lagrangian, cancel=cancel).coefficients()

    def reference(sigma: int) -> Expr:
        return model.spec.definition("E", *model.indices(sigma))

    return _compare("euler", engine, reference, _label(model), threads, cancel)


def compare_jacobi(model: YMModel, threads: int = 1, cancel: Optional[CancelToken] = None) -> Comparison:
    psi = model.spec.vecfield("psi")
    engine = jacobi_morphism(model.lagrangian, psi, cancel=cancel).coefficients()

    def reference(sigma: int) -> Expr:
        b, nu = model.indices(sigma)
        return model.spec.definition("JA", b, nu) + model.spec.definition("JS", b, nu)

    return _compare("jacobi", engine, reference, _label(model), threads, cancel)


def compare_pair_current(model: YMModel, threads: int = 1, cancel: Optional[CancelToken] = None) -> Comparison:
    current = pair_current(model.lagrangian, model.spec.vecfield("psi"), model.spec.vecfield("psit"), cancel=cancel)
    return _compare(
        "pair_current",
        current.components(),
        lambda xi: model.spec.definition("CUR", xi),
        lambda xi: f"ds_{xi}",
        threads,
        cancel,
    )


# ---------------------------------------------------------------------------
# structural checks and special solutions


def quadratic_truncation(model: YMModel) -> Expr:
    """Part of the Lagrangian quadratic in the jet coordinates (free Maxwell-type theory)."""
    ctx = model.ctx
    lagrangian = model.spec.lagrangian
    t = sympy.Dummy("t")
    scaled = lagrangian.xreplace({atom.symbol: t * atom.symbol for atom in ctx.jet_atoms(lagrangian)})
    return canonicalize(sympy.expand(scaled).coeff(t, 2))


def linearised_euler(model: YMModel, psi: VecField) -> SourceForm:
    """Euler-Lagrange expressions of the quadratic truncation with y^sigma_J replaced by d_J psi^sigma.

    Agrees with the Jacobi morphism along the flat connection.
    """
    ctx = model.ctx
    table = euler_expressions(ctx, quadratic_truncation(model))
    values = {}
    for sigma, value in table.items():
        replacements = {}
        for atom in ctx.jet_atoms(value):
            component = psi.psi[atom.sigma - 1]
            for entry in atom.multi:
                component = sympy.diff(component, ctx.x(entry))
            replacements[atom.symbol] = component
        values[sigma] = canonicalize(value.xreplace(replacements))
    return source_form(ctx, values)


def covariant_divergence(model: YMModel, euler: SourceForm) -> List[Expr]:
    """d_nu E_(B,nu) + c_BCA w^C_nu E_(A,nu) for every algebra index B; vanishes identically."""
    ctx = model.ctx
    table = euler.coefficients()
    values = []
    for b in range(1, model.algebra_dim + 1):
        value = sympy.Integer(0)
        for nu in range(1, model.dim + 1):
            value += total_derivative(ctx, table[model.sigma(b, nu)], nu)
            for c in range(1, model.algebra_dim + 1):
                for a in range(1, model.algebra_dim + 1):
                    constant = model.structure_constant(b, c, a)
                    if constant:
                        value += constant * ctx.y(model.sigma(c, nu)) * table[model.sigma(a, nu)]
        values.append(canonicalize(value))
    return values


def null_phase(model: YMModel) -> Expr:
    """x^1 - x^n, constant along a light ray of the metric diag(+1, -1, ...)."""
    return model.ctx.x(1) - model.ctx.x(model.dim)


def transverse_polarisation(model: YMModel) -> Tuple[int, ...]:
    if model.dim == 2:
        # in 1+1 dimensions the only polarisation orthogonal to the null wave vector is the vector itself
        return (1, -1)
    return tuple(1 if mu == 2 else 0 for mu in range(1, model.dim + 1))


def plane_wave(
    model: YMModel,
    amplitude: Sequence[Any],
    polarisation: Optional[Sequence[Any]] = None,
    phase: Optional[Expr] = None,
    profile: Callable[[Expr], Expr] = sympy.cos,
    name: str = "wave",
) -> VecField:
    """psi^A_mu = e_mu a^A profile(phase); a Jacobi field of the flat connection when null and transverse."""
    if len(amplitude) != model.algebra_dim:
        raise DerivationError(f"amplitude needs {model.algebra_dim} entries")
    polarisation = tuple(polarisation) if polarisation is not None else transverse_polarisation(model)
    if len(polarisation) != model.dim:
        raise DerivationError(f"polarisation needs {model.dim} entries")
    wave = profile(phase if phase is not None else null_phase(model))
    psi = [sympy.Integer(0)] * model.ctx.m
    for a, mu in model.components():
        psi[model.sigma(a, mu) - 1] = sympy.sympify(polarisation[mu - 1]) * sympy.sympify(amplitude[a - 1]) * wave
    return VecField.vertical(model.ctx, psi, name=name)


def flat_section(model: YMModel) -> Section:
    return Section.build(model.ctx, [0] * model.ctx.m, name="flat")
