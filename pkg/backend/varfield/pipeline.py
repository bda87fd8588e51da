from __future__ import annotations

import asyncio
import logging
import time
from typing import AsyncIterator, Callable, Dict, Iterator, List, Optional, Tuple

import sympy

from .config import Settings, get_settings
from .errors import VarfieldError
from .numverify import GridSpec, parse_grid, pullback_eval
from .utils import CancelToken, utc_now
from .varops import pair_current
from .ymcase import YMModel, build_ym, compare_euler, compare_jacobi, compare_pair_current, flat_section, plane_wave

logger = logging.getLogger(__name__)

Stage = Callable[[YMModel], dict]


class YMDemoPipeline:
    """Yang-Mills demonstration: three exact comparisons and one numeric conservation check."""

    def __init__(
        self,
        dim: int = 2,
        group: str = "su2",
        settings: Optional[Settings] = None,
        cancel: Optional[CancelToken] = None,
    ):
        self.dim = dim
        self.group = group
        self.settings = settings or get_settings()
        self.cancel = cancel if cancel is not None else CancelToken.after(self.settings.timeout_s)

    def _stages(self) -> List[Tuple[str, Stage]]:
        return [
            ("euler", self._euler),
            ("jacobi", self._jacobi),
            ("pair_current", self._pair_current),
            ("conservation", self._conservation),
        ]

    def run(self) -> Iterator[dict]:
        yield {"stage": "started", "group": self.group, "dim": self.dim, "at": utc_now()}
        started_at = time.monotonic()
        results: Dict[str, bool] = {}
        try:
            model = build_ym(self.group, self.dim)
            for name, stage in self._stages():
                payload = stage(model)
                results[name] = payload["passed"]
                yield {"stage": name, **payload}
        except VarfieldError as exc:
            logger.warning("Yang-Mills demo failed: %s", exc)
            yield {"stage": "error", "dim": self.dim, "error": str(exc)}
            return
        duration_ms = int((time.monotonic() - started_at) * 1000)
        yield {"stage": "done", "dim": self.dim, "passed": all(results.values()), "duration_ms": duration_ms}

    async def stream(self) -> AsyncIterator[dict]:
        loop = asyncio.get_running_loop()
        events = self.run()
        finished = object()
        while True:
            event = await loop.run_in_executor(None, next, events, finished)
            if event is finished:
                return
            yield event

    def _euler(self, model: YMModel) -> dict:
        comparison = compare_euler(model, threads=self.settings.threads, cancel=self.cancel)
        return {"passed": comparison.matches, **comparison.to_dict()}

    def _jacobi(self, model: YMModel) -> dict:
        comparison = compare_jacobi(model, threads=self.settings.threads, cancel=self.cancel)
        return {"passed": comparison.matches, **comparison.to_dict()}

    def _pair_current(self, model: YMModel) -> dict:
        comparison = compare_pair_current(model, threads=self.settings.threads, cancel=self.cancel)
        return {"passed": comparison.matches, **comparison.to_dict()}

    def grid(self) -> GridSpec:
        tol = self.settings.tol_identity
        if self.settings.grid:
            return parse_grid(self.settings.grid, self.dim, tol=tol)
        return GridSpec.uniform(self.dim, 0.0, 1.0, self.settings.ym_grid_points, tol=tol)

    def _conservation(self, model: YMModel) -> dict:
        # two null transverse plane waves are Jacobi fields of the flat connection
        first = plane_wave(model, (1, 0, 0), name="wave1")
        second = plane_wave(model, (0, 0, 1), profile=sympy.sin, name="wave2")
        current = pair_current(model.lagrangian, first, second, cancel=self.cancel)
        report = pullback_eval(current.form, flat_section(model), self.grid(), cancel=self.cancel, label="conservation")
        return {"passed": report.passed, **report.to_dict()}


def summary_lines(events: List[dict]) -> List[str]:
    """Four PASS/FAIL lines, one per demonstration stage."""
    titles = {
        "euler": "Euler-Lagrange match",
        "jacobi": "Jacobi equation match",
        "pair_current": "pair current match",
        "conservation": "numeric conservation",
    }
    by_stage = {event["stage"]: event for event in events}
    lines = []
    for stage, title in titles.items():
        event = by_stage.get(stage)
        if event is None:
            lines.append(f"{title}: FAIL (not reached)")
            continue
        status = "PASS" if event["passed"] else "FAIL"
        if stage == "conservation":
            detail = f"max |residual| = {event['max_residual']:.3e} on {event['samples']} samples"
        else:
            detail = f"{event['components']} components, {event['wall_time']:.2f}s"
        lines.append(f"{title}: {status} ({detail})")
    return lines
