"""Refinement study of the touching-ball condenser near its touching point."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .. import kernel as kern
from ..geometry import CondenserGeometry, touching_balls
from ..measure import ProblemData, lebesgue_sigma
from .core import SolveOptions
from .problems import SolveResult, solve_constrained

MONOTONE_SLACK = 1e-9
DEFAULT_RHO_CELLS = 5.0


@dataclass(frozen=True)
class ProbeTemplate:
    """Problem data shared by every level; geometry is built per level.

    ``sigma_multiple`` is ``c_i`` in ``sigma^i = c_i * cell volume``; ``None``
    means unconstrained. ``exclusion_cells`` is the pole-exclusion radius in
    units of the level's cell size.
    """

    alpha: float = 2.0
    dimension: int = 3
    mode: str = "exact"
    eps_cells: Optional[float] = None
    g: Tuple[float, float] = (1.0, 1.0)
    a: Tuple[float, float] = (1.0, 1.0)
    sigma_multiple: Optional[Tuple[float, float]] = None
    exclusion_cells: float = 1.0

    @property
    def constrained(self) -> bool:
        return self.sigma_multiple is not None

    def kernel_for(self, h: float) -> kern.KernelSpec:
        if self.mode == "exact":
            return kern.KernelSpec(self.alpha, self.dimension)
        if self.eps_cells is None:
            return kern.KernelSpec.for_grid(self.alpha, self.dimension, h)
        return kern.KernelSpec(self.alpha, self.dimension, "regularized", self.eps_cells * h)

    def geometry(self, level: int) -> CondenserGeometry:
        h = 2.0 / level
        return touching_balls(level, exclusion=self.exclusion_cells * h, dimension=self.dimension)

    def problem(self, level: int) -> ProblemData:
        geom = self.geometry(level)
        h = geom.plate_pos.cell_size
        sigma = None
        if self.sigma_multiple is not None:
            sigma = lebesgue_sigma(geom, self.sigma_multiple)
        return ProblemData(geom, self.kernel_for(h), self.g, self.a, sigma)


def ball_ratio_multiple(a: Sequence[float], dimension: int = 3, factor: float = 2.0):
    """``c_i = factor * a_i / vol(unit ball)``."""
    from math import gamma, pi

    vol = pi ** (dimension / 2) / gamma(dimension / 2 + 1)
    return tuple(factor * ai / vol for ai in a)


@dataclass
class ProbeLevel:
    level: int
    cell_size: float
    n_points: Tuple[int, int]
    objective: float
    near_fraction: Tuple[float, float]
    upper_active_near: int
    status: str
    kkt_residual: float


@dataclass
class ProbeReport:
    levels: List[ProbeLevel]
    rho: float
    constrained: bool
    checks: dict = field(default_factory=dict)

    @property
    def objectives(self) -> List[float]:
        return [lv.objective for lv in self.levels]

    def rows(self):
        for lv in self.levels:
            yield (lv.level, lv.objective, lv.near_fraction[0], lv.near_fraction[1],
                   lv.upper_active_near)


def _near_fraction(res: SolveResult, geom: CondenserGeometry, rho: float):
    fr = []
    for m in res.weights.components:
        d = np.linalg.norm(m.points - geom.touch_point, axis=1)
        total = float(np.sum(m.weights))
        fr.append(float(np.sum(m.weights[d < rho])) / total if total > 0 else 0.0)
    return tuple(fr)


def _upper_near(res: SolveResult, geom: CondenserGeometry, rho: float) -> int:
    pts = np.concatenate([c.points for c in geom.plates])
    idx = np.asarray(res.active_upper, dtype=int)
    if idx.size == 0:
        return 0
    d = np.linalg.norm(pts[idx] - geom.touch_point, axis=1)
    return int(np.count_nonzero(d < rho))


def evaluate_checks(report: ProbeReport) -> dict:
    obj = np.asarray(report.objectives)
    diffs = np.diff(obj)
    fr = np.asarray([lv.near_fraction for lv in report.levels])
    checks = {
        "objective_nonincreasing": bool(np.all(diffs <= MONOTONE_SLACK)),
        "objective_strictly_decreasing": bool(np.all(diffs < 0)),
        "near_fraction_nondecreasing": bool(np.all(np.diff(fr, axis=0) >= -MONOTONE_SLACK)),
        "differences_decreasing": bool(np.all(np.diff(np.abs(diffs)) < 0)),
        "upper_active_near_nonempty": all(lv.upper_active_near > 0 for lv in report.levels),
        "all_optimal": all(lv.status == "optimal" for lv in report.levels),
    }
    if report.constrained:
        checks["contract"] = (checks["differences_decreasing"]
                              and checks["upper_active_near_nonempty"])
    else:
        checks["contract"] = (checks["objective_strictly_decreasing"]
                              and checks["near_fraction_nondecreasing"])
    return checks


def short_circuit_probe(levels: Sequence[int], template: ProbeTemplate,
                        constrained: Optional[bool] = None, rho: Optional[float] = None,
                        opts: Optional[SolveOptions] = None) -> ProbeReport:
    """Solve the template at each resolution and track mass near the touching point.

    ``rho`` defaults to 5 cell sizes of the coarsest level and is then held
    fixed. ``constrained=False`` drops the template's constraint.
    """
    levels = [int(L) for L in levels]
    if not levels:
        raise ValueError("no levels given")
    if constrained is None:
        constrained = template.constrained
    if constrained and not template.constrained:
        raise ValueError("constrained probe needs a sigma multiple in the template")
    if rho is None:
        rho = DEFAULT_RHO_CELLS * 2.0 / min(levels)
    out = []
    for L in levels:
        prob = template.problem(L)
        if not constrained:
            prob = prob.with_sigma(None)
        geom = prob.geometry
        res = solve_constrained(prob, opts)
        out.append(ProbeLevel(
            level=L,
            cell_size=geom.plate_pos.cell_size,
            n_points=(len(geom.plate_pos), len(geom.plate_neg)),
            objective=res.objective,
            near_fraction=_near_fraction(res, geom, rho),
            upper_active_near=_upper_near(res, geom, rho),
            status=res.status,
            kkt_residual=res.kkt_residual,
        ))
    report = ProbeReport(out, rho, bool(constrained))
    report.checks = evaluate_checks(report)
    return report


__all__ = [
    "ProbeLevel",
    "ProbeReport",
    "ProbeTemplate",
    "ball_ratio_multiple",
    "evaluate_checks",
    "short_circuit_probe",
]
