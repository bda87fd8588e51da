"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage, parse or derivation error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, TextIO, Tuple

import orjson

from . import __version__
from .calcforms import Form, Kind
from .config import Settings, get_settings
from .errors import DerivationError, VarfieldError
from .log import configure_logging
from .modeldsl import ModelSpec, parse_model
from .numverify import GridSpec, VerifyReport, finite_difference_check, parse_grid, pullback_eval
from .pipeline import YMDemoPipeline, summary_lines
from .render import FORMATS, SCHEMA, render, to_json
from .utils import CancelToken
from .varops import (
    euler_lagrange,
    first_variation_residual,
    jacobi_morphism,
    noether_current,
    pair_current,
    variation_decompose,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2

VERIFY_TARGETS = ("euler", "jacobi", "paircurrent", "firstvar")
DEFAULT_GRID = "0:1:33"
MAX_VARIATIONS = 3


@dataclass(frozen=True)
class RunConfig:
    model_path: Optional[Path]
    fmt: str
    max_order: int
    timeout_s: float
    grid: Optional[str] = None
    tol: Optional[float] = None
    fields: Tuple[str, ...] = ()
    section: Optional[str] = None

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise DerivationError("timeout must be positive")
        if self.fmt not in FORMATS:
            raise DerivationError(f"unknown output format '{self.fmt}'")

    @classmethod
    def from_args(cls, args: argparse.Namespace, settings: Settings) -> "RunConfig":
        model = getattr(args, "model", None)
        fields: List[str] = []
        for name in ("field", "fields", "first", "second"):
            value = getattr(args, name, None)
            if isinstance(value, str):
                fields.append(value)
            elif value:
                fields.extend(value)
        return cls(
            model_path=settings.resolve_model(model) if model else None,
            fmt=args.format or settings.output_format,
            max_order=args.max_order if args.max_order is not None else settings.max_order,
            timeout_s=args.timeout_s if args.timeout_s is not None else settings.timeout_s,
            grid=args.grid or settings.grid,
            tol=args.tol,
            fields=tuple(fields),
            section=getattr(args, "section", None),
        )

    def cancel_token(self) -> CancelToken:
        return CancelToken.after(self.timeout_s)

    def load_model(self) -> ModelSpec:
        if self.model_path is None:
            raise DerivationError("a model file is required")
        model = parse_model(self.model_path.read_text(encoding="utf-8"))
        if model.lagrangian_order > self.max_order:
            raise DerivationError(
                f"Lagrangian order {model.lagrangian_order} exceeds the jet order cap {self.max_order}"
            )
        return model

    def check_order(self, *values: Form) -> None:
        for value in values:
            order = derived_order(value)
            if order > self.max_order:
                raise DerivationError(f"derived jet order {order} exceeds the jet order cap {self.max_order}")


def derived_order(form: Form) -> int:
    """Highest jet order among the coefficients and contact factors of a form."""
    ctx = form.ctx
    order = 0
    for monomial, coefficient in form.terms.items():
        # omega_J carries y_{J+1}, dy_J only y_J
        factors = [len(factor.multi) + factor.is_contact for factor in monomial if factor.kind != Kind.DX]
        order = max(order, ctx.order_of(coefficient), *factors)
    return order


@dataclass
class Outcome:
    text: str
    exit_code: int = EXIT_OK


# ---------------------------------------------------------------------------
# commands


def cmd_elform(config: RunConfig) -> Outcome:
    model = config.load_model()
    euler = euler_lagrange(model.lagrangian_form(), cancel=config.cancel_token())
    config.check_order(euler)
    return Outcome(render(euler, config.fmt, model.ctx))


def cmd_noether(config: RunConfig) -> Outcome:
    model = config.load_model()
    psi = model.vecfield(config.fields[0])
    current = noether_current(model.lagrangian_form(), psi, cancel=config.cancel_token())
    config.check_order(current.form)
    return Outcome(render(current, config.fmt, model.ctx))


def cmd_jacobi(config: RunConfig) -> Outcome:
    model = config.load_model()
    psi = model.vecfield(config.fields[0])
    jacobi = jacobi_morphism(model.lagrangian_form(), psi, cancel=config.cancel_token())
    config.check_order(jacobi)
    return Outcome(render(jacobi, config.fmt, model.ctx))


def cmd_varsplit(config: RunConfig) -> Outcome:
    if not 1 <= len(config.fields) <= MAX_VARIATIONS:
        raise DerivationError(f"varsplit takes between 1 and {MAX_VARIATIONS} vector fields")
    model = config.load_model()
    fields = [model.vecfield(name) for name in config.fields]
    split = variation_decompose(model.lagrangian_form(), fields, cancel=config.cancel_token())
    config.check_order(split.euler_term, *split.current_terms)
    if config.fmt == "json":
        payload = {
            "schema": SCHEMA,
            "kind": "varsplit",
            "fields": list(config.fields),
            "euler_term": to_json(split.euler_term),
            "current_terms": [to_json(term) for term in split.current_terms],
        }
        return Outcome(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS).decode("utf-8"))
    lines = [f"euler: {render(split.euler_term, config.fmt)}"]
    for index, term in enumerate(split.current_terms, start=1):
        lines.append(f"current[{index}]: {render(term, config.fmt)}")
    return Outcome("\n".join(lines))


def cmd_paircurrent(config: RunConfig) -> Outcome:
    model = config.load_model()
    first, second = (model.vecfield(name) for name in config.fields[:2])
    current = pair_current(model.lagrangian_form(), first, second, cancel=config.cancel_token())
    config.check_order(current.form)
    return Outcome(render(current, config.fmt, model.ctx))


def _grid(config: RunConfig, n: int, default: str, tol: float) -> GridSpec:
    return parse_grid(config.grid or default, n, tol=config.tol if config.tol is not None else tol)


def _report_outcome(report: VerifyReport, fmt: str) -> Outcome:
    return Outcome(render(report, fmt), EXIT_OK if report.passed else EXIT_FAILED)


def cmd_verify(config: RunConfig, what: str, settings: Settings) -> Outcome:
    model = config.load_model()
    if config.section is None:
        raise DerivationError(f"verify {what} needs --section")
    section = model.section(config.section)
    lam = model.lagrangian_form()
    cancel = config.cancel_token()
    names = list(config.fields) or list(model.vecfields)[:2]

    if what == "euler":
        grid = _grid(config, model.n, DEFAULT_GRID, settings.tol_identity)
        euler = euler_lagrange(lam, cancel=cancel)
        config.check_order(euler)
        return _report_outcome(pullback_eval(euler, section, grid, cancel, "euler"), config.fmt)
    if not names:
        raise DerivationError(f"verify {what} needs --fields")
    if what == "jacobi":
        grid = _grid(config, model.n, DEFAULT_GRID, settings.tol_identity)
        jacobi = jacobi_morphism(lam, model.vecfield(names[0]), cancel=cancel)
        config.check_order(jacobi)
        return _report_outcome(pullback_eval(jacobi, section, grid, cancel, "jacobi"), config.fmt)
    if what == "paircurrent":
        if len(names) < 2:
            raise DerivationError("verify paircurrent needs two vector fields")
        current = pair_current(lam, model.vecfield(names[0]), model.vecfield(names[1]), cancel=cancel)
        config.check_order(current.form)
        grid = _grid(config, model.n, DEFAULT_GRID, settings.tol_identity)
        return _report_outcome(pullback_eval(current.form, section, grid, cancel, "paircurrent"), config.fmt)
    if what == "firstvar":
        psi = model.vecfield(names[0])
        residual = first_variation_residual(lam, psi)
        if not residual.is_zero():
            logger.warning("first variation formula leaves a symbolic residual: %s", residual)
            return Outcome(f"FAIL: symbolic first-variation residual {render(residual, 'plain')}", EXIT_FAILED)
        points = settings.fd_points if model.n == 1 else 101
        grid = _grid(config, model.n, f"0:1:{points}", settings.tol_fd)
        report = finite_difference_check(lam, section, psi, settings.fd_step, grid, cancel=cancel)
        return _report_outcome(report, config.fmt)
    raise DerivationError(f"unknown verification target '{what}'")


def cmd_ym_demo(config: RunConfig, dim: int, settings: Settings) -> Outcome:
    pipeline = YMDemoPipeline(dim=dim, settings=settings, cancel=config.cancel_token())
    events = []
    for event in pipeline.run():
        logger.info("ym-demo stage %s", event["stage"])
        events.append(event)
    last = events[-1]
    if last["stage"] == "error":
        raise DerivationError(last["error"])
    code = EXIT_OK if last["passed"] else EXIT_FAILED
    if config.fmt == "json":
        payload = {"schema": SCHEMA, "kind": "ym-demo", "events": events}
        return Outcome(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS).decode("utf-8"), code)
    return Outcome("\n".join(summary_lines(events)), code)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, default=None, help="output format (default: plain)")
    common.add_argument("--max-order", type=int, default=None, help="cap on the working jet order")
    common.add_argument("--timeout-s", type=float, default=None, help="cancel derivations after this many seconds")
    common.add_argument("--grid", default=None, help="grid spec lo:hi:count[,lo:hi:count...]")
    common.add_argument("--tol", type=float, default=None, help="absolute pass threshold for verification")
    common.add_argument("--log-level", default=None, help="log level for the JSON log on stderr")

    parser = argparse.ArgumentParser(prog="varfield", description="Symbolic variational calculus on jet bundles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    elform = commands.add_parser("elform", parents=[common], help="Euler-Lagrange form")
    elform.add_argument("model")

    noether = commands.add_parser("noether", parents=[common], help="Noether current of a vector field")
    noether.add_argument("model")
    noether.add_argument("field")

    jacobi = commands.add_parser("jacobi", parents=[common], help="Jacobi morphism of a vertical field")
    jacobi.add_argument("model")
    jacobi.add_argument("field")

    varsplit = commands.add_parser("varsplit", parents=[common], help="split of the l-th variation")
    varsplit.add_argument("model")
    varsplit.add_argument("fields", nargs="+")

    paircurrent = commands.add_parser("paircurrent", parents=[common], help="current of a pair of vertical fields")
    paircurrent.add_argument("model")
    paircurrent.add_argument("first")
    paircurrent.add_argument("second")

    verify = commands.add_parser("verify", parents=[common], help="numeric verification along a section")
    verify.add_argument("model")
    verify.add_argument("what", choices=VERIFY_TARGETS)
    verify.add_argument("--section", default=None)
    verify.add_argument("--fields", nargs="+", default=None)

    demo = commands.add_parser("ym-demo", parents=[common], help="Yang-Mills demonstration run")
    demo.add_argument("--dim", type=int, choices=(2, 3, 4), default=2)
    return parser


Command = Callable[[RunConfig, argparse.Namespace, Settings], Outcome]

COMMANDS: Dict[str, Command] = {
    "elform": lambda config, args, settings: cmd_elform(config),
    "noether": lambda config, args, settings: cmd_noether(config),
    "jacobi": lambda config, args, settings: cmd_jacobi(config),
    "varsplit": lambda config, args, settings: cmd_varsplit(config),
    "paircurrent": lambda config, args, settings: cmd_paircurrent(config),
    "verify": lambda config, args, settings: cmd_verify(config, args.what, settings),
    "ym-demo": lambda config, args, settings: cmd_ym_demo(config, args.dim, settings),
}


def main(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None, stderr: Optional[TextIO] = None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    args = build_parser().parse_args(argv)
    settings = get_settings()
    configure_logging(args.log_level or settings.log_level, stream=stderr)
    try:
        config = RunConfig.from_args(args, settings)
        outcome = COMMANDS[args.command](config, args, settings)
    except OSError as exc:
        path = exc.filename if exc.filename is not None else getattr(args, "model", "")
        print(f"error: cannot read model file '{path}': {exc.strerror or exc}", file=stderr)
        return EXIT_ERROR
    except VarfieldError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_ERROR
    print(outcome.text, file=stdout)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
