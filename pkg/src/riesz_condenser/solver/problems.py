"""Discrete Gauss problems on a condenser, capacity, and hypothesis checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import kernel as kern
from ..errors import InfeasibleProblemError, InvalidGeometryError, ModeMisuseError, RieszError
from ..geometry import PointCloud, validate_condenser
from ..measure import (
    DiscreteMeasure,
    ProblemData,
    VectorMeasure,
    check_feasible,
)
from .core import (
    INFEASIBLE,
    OPTIMAL,
    Block,
    KKTReport,
    QuadraticProgram,
    SolveOptions,
    solve_qp,
)


@dataclass
class SolveResult:
    weights: VectorMeasure
    objective: float
    kkt_residual: float
    active_lower: np.ndarray
    active_upper: np.ndarray
    multipliers: Tuple[float, float]
    trace: List[Tuple[float, float]]
    status: str
    iterations: int = 0
    message: str = ""
    kkt: Optional[KKTReport] = None
    iterates: Optional[List[VectorMeasure]] = None

    def summary(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "multipliers": list(self.multipliers),
            "iterations": self.iterations,
            "active_lower_count": int(len(self.active_lower)),
            "active_upper_count": int(len(self.active_upper)),
            "message": self.message,
        }


@dataclass
class CapacityResult:
    estimate: float
    equilibrium_weights: DiscreteMeasure
    min_energy: float
    status: str = OPTIMAL


def condenser_matrix(problem: ProblemData) -> np.ndarray:
    """Signed block matrix ``S K S`` with ``S = diag(+1, ..., -1, ...)``.

    ``w^T Q w`` equals the vector energy of the measure with flat weights ``w``.
    """
    geom = problem.geometry
    pts = np.concatenate([c.points for c in geom.plates])
    sizes = np.concatenate([c.sizes for c in geom.plates])
    k = kern.self_matrix(pts, sizes, problem.kernel)
    n1 = len(geom.plate_pos)
    k[:n1, n1:] *= -1.0
    k[n1:, :n1] *= -1.0
    return k


def build_qp(problem: ProblemData, check_pd: bool = True) -> QuadraticProgram:
    if not all(float(np.min(g)) > 0 for g in problem.g):
        raise InvalidGeometryError("g must be strictly positive on every plate point")
    Q = condenser_matrix(problem)
    if check_pd and not kern.is_positive_definite(Q):
        raise ModeMisuseError(
            f"{problem.kernel.mode} kernel matrix failed the Cholesky positive-definiteness "
            "certificate; the problem is not strictly convex in this mode"
        )
    f = problem.field.flat
    fixed = np.isinf(f)
    n1 = len(problem.geometry.plate_pos)
    sig = problem.sigma_or_inf()
    blocks = [
        Block(0, n1, problem.g[0], problem.a[0], sig[0]),
        Block(n1, Q.shape[0], problem.g[1], problem.a[1], sig[1]),
    ]
    return QuadraticProgram(Q, np.where(fixed, 0.0, f), blocks, fixed)


def _result(problem: ProblemData, qp: QuadraticProgram, res) -> SolveResult:
    nu = VectorMeasure.from_flat(problem.geometry, res.w)
    status = res.status
    if status == OPTIMAL and not check_feasible(nu, problem).feasible:
        status = "iteration_limit"
    iterates = None
    if res.iterates is not None:
        iterates = [VectorMeasure.from_flat(problem.geometry, w) for w in res.iterates]
    return SolveResult(
        weights=nu,
        objective=res.objective,
        kkt_residual=res.kkt.residual,
        active_lower=res.active_lower,
        active_upper=res.active_upper,
        multipliers=tuple(res.kkt.multipliers),
        trace=res.trace,
        status=status,
        iterations=res.iterations,
        message=res.message,
        kkt=res.kkt,
        iterates=iterates,
    )


def solve_constrained(problem: ProblemData, opts: Optional[SolveOptions] = None,
                      w0=None) -> SolveResult:
    """Minimise the Gauss functional over ``{0 <= nu <= sigma, <g_i, nu^i> = a_i}``.

    Raises :class:`InfeasibleProblemError` when a plate cannot carry its mass
    and :class:`ModeMisuseError` when the kernel matrix is not certified
    positive definite.
    """
    opts = opts or SolveOptions()
    qp = build_qp(problem)
    res = solve_qp(qp, opts, None if w0 is None else np.asarray(w0, float))
    return _result(problem, qp, res)


def solve_unconstrained(problem: ProblemData, opts: Optional[SolveOptions] = None,
                        w0=None) -> SolveResult:
    """Same as :func:`solve_constrained` with every upper bound at ``+inf``."""
    return solve_constrained(problem.with_sigma(None), opts, w0)


def kkt_check(problem: ProblemData, weights: VectorMeasure) -> KKTReport:
    qp = build_qp(problem, check_pd=False)
    return qp.kkt(weights.flat)


# -- hypotheses ---------------------------------------------------------------

@dataclass
class ProblemReport:
    conditions: Dict[str, bool]
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.conditions.values())

    def failed(self) -> List[str]:
        return [k for k, v in self.conditions.items() if not v]

    def as_dict(self) -> dict:
        return {"ok": self.ok, "conditions": dict(self.conditions), "details": self.details}


def validate_problem(problem: ProblemData) -> ProblemReport:
    """Discrete analogues of the solvability hypotheses; never raises.

    * ``touching``: the geometry validates with at most one touching point;
    * ``field_finite``: the field is finite off an explicit list of points
      (those are pinned to zero weight);
    * ``sigma_energy``: the constraint has finite energy on the cloud;
    * ``g_mass``: every plate has finite ``<g_i, sigma^i>`` strictly above a_i;
    * ``g_inf``: ``min g_i > 0``.
    """
    cond: Dict[str, bool] = {}
    det: Dict[str, object] = {}
    geom = problem.geometry
    try:
        rep = validate_condenser(geom)
        cond["touching"] = rep.ok
        det["condenser"] = rep.as_dict()
    except RieszError as exc:
        cond["touching"] = False
        det["condenser"] = {"error": str(exc)}

    inf_pts = problem.field.infinite_points()
    det["infinite_field_points"] = [list(p) for p in inf_pts]
    # finite except on a flagged list; the list may not cover a whole plate
    cond["field_finite"] = all(
        len([p for p in inf_pts if p[0] == i]) < len(c) for i, c in enumerate(geom.plates)
    )
    det["field_flagged"] = bool(inf_pts)

    cond["g_inf"] = all(float(np.min(g)) > 0 for g in problem.g)
    det["g_inf"] = [float(np.min(g)) for g in problem.g]

    if problem.sigma is None:
        cond["sigma_energy"] = True
        cond["g_mass"] = True
        det["sigma"] = "unconstrained"
        return ProblemReport(cond, det)

    energies = []
    for cloud, sig in zip(geom.plates, problem.sigma):
        if np.any(np.isinf(sig)):
            energies.append(math.inf)
            continue
        try:
            energies.append(kern.energy(DiscreteMeasure(cloud, sig), problem.kernel))
        except RieszError:
            energies.append(math.nan)
    det["sigma_energy"] = energies
    cond["sigma_energy"] = all(math.isfinite(e) for e in energies)

    masses = [float(math.fsum(g * s)) for g, s in zip(problem.g, problem.sigma)]
    det["g_sigma_mass"] = masses
    det["a"] = list(problem.a)
    cond["g_mass"] = all(math.isfinite(m) and m > a for m, a in zip(masses, problem.a))
    det["sigma_full_support"] = [bool(np.all(s > 0)) for s in problem.sigma]
    cond["sigma_full_support"] = all(det["sigma_full_support"])
    return ProblemReport(cond, det)


# -- capacity -----------------------------------------------------------------

def capacity_estimate(cloud: PointCloud, spec: kern.KernelSpec,
                      opts: Optional[SolveOptions] = None) -> CapacityResult:
    """Reciprocal of the least energy of a unit-mass measure on the cloud."""
    if len(cloud) == 0:
        raise InvalidGeometryError("cloud is empty")
    opts = opts or SolveOptions()
    K = kern.self_matrix(cloud.points, cloud.sizes, spec)
    if not kern.is_positive_definite(K):
        raise ModeMisuseError("kernel matrix on this cloud is not positive definite")
    n = len(cloud)
    qp = QuadraticProgram(K, np.zeros(n), [Block(0, n, np.ones(n), 1.0, np.full(n, np.inf))])
    res = solve_qp(qp, opts)
    if not res.objective > 0:
        raise ModeMisuseError(f"minimal energy {res.objective!r} is not positive")
    mu = DiscreteMeasure(cloud, res.w)
    return CapacityResult(1.0 / res.objective, mu, res.objective, res.status)


__all__ = [
    "CapacityResult",
    "ProblemReport",
    "SolveResult",
    "build_qp",
    "capacity_estimate",
    "condenser_matrix",
    "kkt_check",
    "solve_constrained",
    "solve_unconstrained",
    "validate_problem",
]
