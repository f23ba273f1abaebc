"""Convex quadratic programs over products of knapsack sets.

The objective is ``G(w) = w^T Q w + 2 <lin, w>`` with ``Q`` symmetric
positive definite. The feasible set is a product of blocks
``{0 <= w_b <= sigma_b, <g_b, w_b> = a_b}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from ..errors import InfeasibleProblemError
from ..parallel import matvec
from .projection import (
    check_knapsack_feasible,
    knapsack_face_max,
    knapsack_lmo,
    max_step,
    project_knapsack,
)

OPTIMAL = "optimal"
ITERATION_LIMIT = "iteration_limit"
INFEASIBLE = "infeasible"

PROJECTED_GRADIENT = "projected_gradient"
FRANK_WOLFE = "frank_wolfe"


@dataclass(frozen=True)
class SolveOptions:
    algorithm: str = PROJECTED_GRADIENT
    max_iter: int = 50000
    tol_kkt: float = 1e-10
    step_rule: str = "backtracking"
    eta: Optional[float] = None
    beta: float = 0.5
    c: float = 1e-4
    seed: int = 0
    random_start: bool = False
    stall_window: int = 10
    stall_rtol: float = 1e-12
    subspace_steps: bool = True
    record_iterates: bool = False

    def __post_init__(self):
        if not self.tol_kkt > 0:
            raise ValueError("tol_kkt must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.algorithm not in (PROJECTED_GRADIENT, FRANK_WOLFE):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == "fixed" and not (self.eta and self.eta > 0):
            raise ValueError("fixed step rule needs eta > 0")
        if not (0 < self.beta < 1 and 0 < self.c < 1):
            raise ValueError("backtracking needs 0 < beta < 1 and 0 < c < 1")


@dataclass(frozen=True)
class Block:
    start: int
    stop: int
    g: np.ndarray
    a: float
    sigma: np.ndarray

    @property
    def sl(self) -> slice:
        return slice(self.start, self.stop)


@dataclass
class KKTReport:
    residual: float
    multipliers: Tuple[float, ...]
    stationarity: Tuple[float, ...]
    lower_violation: Tuple[float, ...]
    upper_violation: Tuple[float, ...]
    scale: float

    @property
    def per_block(self):
        return list(zip(self.multipliers, self.stationarity, self.lower_violation,
                        self.upper_violation))

    def as_dict(self) -> dict:
        return {
            "residual": self.residual,
            "multipliers": list(self.multipliers),
            "stationarity": list(self.stationarity),
            "lower_violation": list(self.lower_violation),
            "upper_violation": list(self.upper_violation),
            "scale": self.scale,
        }


@dataclass
class QPResult:
    w: np.ndarray
    objective: float
    kkt: KKTReport
    status: str
    iterations: int
    trace: List[Tuple[float, float]]
    active_lower: np.ndarray
    active_upper: np.ndarray
    message: str = ""
    iterates: Optional[List[np.ndarray]] = None


class QuadraticProgram:
    def __init__(self, Q: np.ndarray, lin: np.ndarray, blocks: Sequence[Block],
                 fixed: Optional[np.ndarray] = None):
        self.Q = Q
        self.lin = np.asarray(lin, dtype=float)
        self.n = Q.shape[0]
        fixed = np.zeros(self.n, bool) if fixed is None else np.asarray(fixed, bool)
        self.fixed = fixed
        # fixed coordinates are pinned to zero through a zero upper bound
        self.blocks = [
            Block(b.start, b.stop, np.asarray(b.g, float), float(b.a),
                  np.where(fixed[b.sl], 0.0, np.asarray(b.sigma, float)))
            for b in blocks
        ]
        self.lin = np.where(fixed, 0.0, self.lin)
        for b in self.blocks:
            check_knapsack_feasible(b.g, b.a, b.sigma)
        self.sigma = np.concatenate([b.sigma for b in self.blocks])

    # -- basic quantities ---------------------------------------------------
    def objective(self, w, Qw=None) -> float:
        if Qw is None:
            Qw = matvec(self.Q, w)
        return float(w @ Qw + 2.0 * (self.lin @ w))

    def gradient(self, w, Qw=None) -> np.ndarray:
        if Qw is None:
            Qw = matvec(self.Q, w)
        return 2.0 * (Qw + self.lin)

    def project(self, w) -> np.ndarray:
        out = np.empty_like(w)
        for b in self.blocks:
            out[b.sl] = project_knapsack(w[b.sl], b.g, b.a, b.sigma)
        return out

    def uniform_start(self) -> np.ndarray:
        w = np.empty(self.n)
        for b in self.blocks:
            cap = np.where(np.isfinite(b.sigma), b.sigma, 1.0)
            cap = np.where(b.sigma > 0, cap, 0.0)
            w[b.sl] = project_knapsack(b.a * cap / float(np.sum(b.g * cap)), b.g, b.a, b.sigma)
        return w

    def random_start(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        w = np.empty(self.n)
        for b in self.blocks:
            m = b.stop - b.start
            cap = np.where(np.isfinite(b.sigma), b.sigma, b.a / b.g)
            raw = rng.random(m) * cap
            raw *= b.a / max(float(np.sum(b.g * raw)), 1e-300)
            w[b.sl] = project_knapsack(raw, b.g, b.a, b.sigma)
        return w

    def active_sets(self, w):
        lower = (w <= 0.0) & ~self.fixed
        upper = (w >= self.sigma) & ~lower & ~self.fixed
        return np.flatnonzero(lower), np.flatnonzero(upper)

    # -- first-order certificate --------------------------------------------
    def kkt(self, w, grad=None) -> KKTReport:
        """Best-fit multipliers and the worst first-order violation.

        Per block, ``r = grad - mu * g`` must vanish on free coordinates, be
        ``>= 0`` where ``w = 0`` and ``<= 0`` where ``w = sigma``. The residual
        is the largest violation divided by ``max(1, max |grad|)``.
        """
        if grad is None:
            grad = self.gradient(w)
        live = ~self.fixed
        scale = max(1.0, float(np.max(np.abs(grad[live]), initial=0.0)))
        mus, stats, lows, ups = [], [], [], []
        for b in self.blocks:
            wb, gb, gr = w[b.sl], b.g, grad[b.sl]
            lv = live[b.sl]
            lower = (wb <= 0.0) & lv
            upper = (wb >= b.sigma) & ~lower & lv
            free = lv & ~lower & ~upper
            if free.any():
                mu = float(np.sum(gb[free] * gr[free]) / np.sum(gb[free] ** 2))
            else:
                ratio = gr / gb
                lo = float(np.max(ratio[upper], initial=-math.inf))
                hi = float(np.min(ratio[lower], initial=math.inf))
                if math.isinf(lo) and math.isinf(hi):
                    mu = 0.0
                elif math.isinf(lo):
                    mu = hi
                elif math.isinf(hi):
                    mu = lo
                else:
                    mu = 0.5 * (lo + hi)
            r = gr - mu * gb
            mus.append(mu)
            stats.append(float(np.max(np.abs(r[free]), initial=0.0)) / scale)
            lows.append(float(np.max(-r[lower], initial=0.0)) / scale)
            ups.append(float(np.max(r[upper], initial=0.0)) / scale)
        residual = max(max(stats), max(lows), max(ups))
        return KKTReport(residual, tuple(mus), tuple(stats), tuple(lows), tuple(ups), scale)

    # -- subspace minimisation ----------------------------------------------
    def subspace_point(self, w) -> Optional[np.ndarray]:
        """Minimiser over the affine face fixing every coordinate at a bound."""
        free = (w > 0.0) & (w < self.sigma) & ~self.fixed
        idx = np.flatnonzero(free)
        if idx.size == 0:
            return None
        Qff = self.Q[np.ix_(idx, idx)]
        rest = w.copy()
        rest[idx] = 0.0
        rhs = -(matvec(self.Q, rest)[idx] + self.lin[idx])
        cons = []
        for b in self.blocks:
            in_b = (idx >= b.start) & (idx < b.stop)
            if in_b.any():
                row = np.zeros(idx.size)
                row[in_b] = b.g[idx[in_b] - b.start]
                cons.append((row, float(row[in_b] @ w[idx[in_b]])))
        try:
            fac = cho_factor(Qff)
        except LinAlgError:
            return None
        C = np.array([c[0] for c in cons])
        r = np.array([c[1] for c in cons])
        y0 = cho_solve(fac, rhs)
        Y = cho_solve(fac, C.T)
        S = C @ Y
        try:
            nu = np.linalg.solve(S, r - C @ y0)
        except np.linalg.LinAlgError:
            return None
        out = w.copy()
        out[idx] = y0 + Y @ nu
        return out


# -- projected gradient --------------------------------------------------------

def _move(w, d, t, tmax, sigma):
    """``w + t d`` clipped to the box; blocking coordinates land exactly on their bound."""
    out = np.clip(w + t * d, 0.0, sigma)
    if t >= tmax:
        with np.errstate(divide="ignore", invalid="ignore"):
            t_low = np.where(d < 0, w / -d, np.inf)
            t_up = np.where(d > 0, (sigma - w) / d, np.inf)
        lim = tmax * (1.0 + 1e-12)
        out[t_low <= lim] = 0.0
        up = t_up <= lim
        out[up] = sigma[up]
    return out


def _descends(G_new, G_old):
    return G_new <= G_old + 1e-15 * max(1.0, abs(G_old))


def projected_gradient(qp: QuadraticProgram, opts: SolveOptions,
                       w0: Optional[np.ndarray] = None) -> QPResult:
    """Projected gradient on the product of knapsack sets.

    Each iteration takes an Armijo-backtracked step along the projection arc
    (trying a step one ``1/beta`` larger than the last accepted one first).
    When the set of free coordinates stops changing, the exact minimiser on
    the current face is computed and the iterate moves toward it as far as
    the bounds allow, which never increases the objective.
    """
    w = qp.uniform_start() if w0 is None else qp.project(np.asarray(w0, float))
    Qw = matvec(qp.Q, w)
    G = qp.objective(w, Qw)
    rowsum = float(np.max(np.sum(np.abs(qp.Q), axis=1)))
    eta = opts.eta if opts.eta else 1.0 / (2.0 * rowsum)
    trace: List[Tuple[float, float]] = []
    iterates = [w.copy()] if opts.record_iterates else None
    history = [G]
    prev_free = None
    status, message = ITERATION_LIMIT, "iteration limit reached"
    it = 0
    for it in range(1, opts.max_iter + 1):
        grad = qp.gradient(w, Qw)
        rep = qp.kkt(w, grad)
        trace.append((G, rep.residual))
        if rep.residual <= opts.tol_kkt:
            status, message = OPTIMAL, "kkt residual below tolerance"
            break

        # projection-arc step
        step = eta / opts.beta if opts.step_rule == "backtracking" else eta
        while True:
            w_new = qp.project(w - step * grad)
            d = w_new - w
            Qw_new = matvec(qp.Q, w_new)
            G_new = qp.objective(w_new, Qw_new)
            if opts.step_rule == "fixed":
                break
            if G_new <= G + opts.c * float(grad @ d) or not np.any(d):
                break
            step *= opts.beta
            if step < 1e-30 * eta:
                break
        if opts.step_rule == "backtracking":
            eta = step
        if _descends(G_new, G) or opts.step_rule == "fixed":
            w, Qw, G = w_new, Qw_new, G_new

        if opts.subspace_steps:
            free = (w > 0.0) & (w < qp.sigma)
            if prev_free is not None and np.array_equal(free, prev_free):
                target = qp.subspace_point(w)
                if target is not None:
                    d = target - w
                    tmax = max_step(w, d, qp.sigma)
                    t = min(1.0, tmax)
                    if t > 0:
                        cand = _move(w, d, t, tmax, qp.sigma)
                        Qc = matvec(qp.Q, cand)
                        Gc = qp.objective(cand, Qc)
                        if _descends(Gc, G):
                            w, Qw, G = cand, Qc, Gc
                free = (w > 0.0) & (w < qp.sigma)
            prev_free = free

        if iterates is not None:
            iterates.append(w.copy())
        history.append(G)
        if len(history) > opts.stall_window:
            old = history[-1 - opts.stall_window]
            if abs(old - G) <= opts.stall_rtol * max(1.0, abs(G)):
                rep = qp.kkt(w)
                trace.append((G, rep.residual))
                if rep.residual <= opts.tol_kkt:
                    status, message = OPTIMAL, "kkt residual below tolerance"
                else:
                    message = "objective stalled"
                break
    rep = qp.kkt(w)
    lower, upper = qp.active_sets(w)
    return QPResult(w, G, rep, status, it, trace, lower, upper, message, iterates)


# -- Frank-Wolfe with away steps ---------------------------------------------

def frank_wolfe(qp: QuadraticProgram, opts: SolveOptions,
                w0: Optional[np.ndarray] = None, gap_rtol: float = 1e-11) -> QPResult:
    """Away-step Frank-Wolfe with exact line search.

    The linear oracle is a greedy fractional-knapsack fill per block; the away
    vertex maximises the linearisation over the smallest face containing the
    iterate. Stops when the Frank-Wolfe gap, an upper bound on ``G - G*``,
    drops below ``gap_rtol * max(1, |G|)``.
    """
    w = qp.uniform_start() if w0 is None else qp.project(np.asarray(w0, float))
    Qw = matvec(qp.Q, w)
    G = qp.objective(w, Qw)
    trace: List[Tuple[float, float]] = []
    iterates = [w.copy()] if opts.record_iterates else None
    status, message = ITERATION_LIMIT, "iteration limit reached"
    it = 0
    for it in range(1, opts.max_iter + 1):
        grad = qp.gradient(w, Qw)
        s = np.empty_like(w)
        v = np.empty_like(w)
        for b in qp.blocks:
            s[b.sl] = knapsack_lmo(grad[b.sl], b.g, b.a, b.sigma)
            v[b.sl] = knapsack_face_max(grad[b.sl], w[b.sl], b.g, b.a, b.sigma)
        d_fw = s - w
        d_aw = w - v
        gap = -float(grad @ d_fw)
        trace.append((G, gap / max(1.0, abs(G))))
        if gap <= gap_rtol * max(1.0, abs(G)):
            status, message = OPTIMAL, "frank-wolfe gap below tolerance"
            break
        if -float(grad @ d_aw) > gap:
            d = d_aw
            tmax = max_step(w, d, qp.sigma)
        else:
            d = d_fw
            tmax = 1.0
        Qd = matvec(qp.Q, d)
        curv = float(d @ Qd)
        slope = float(grad @ d)
        t = tmax if curv <= 0 else min(tmax, -slope / (2.0 * curv))
        if t <= 0:
            message = "no descent direction"
            break
        w = _move(w, d, t, tmax, qp.sigma)
        Qw = Qw + t * Qd
        G = qp.objective(w, Qw)
        if iterates is not None:
            iterates.append(w.copy())
    Qw = matvec(qp.Q, w)
    G = qp.objective(w, Qw)
    rep = qp.kkt(w)
    lower, upper = qp.active_sets(w)
    return QPResult(w, G, rep, status, it, trace, lower, upper, message, iterates)


def solve_qp(qp: QuadraticProgram, opts: SolveOptions, w0=None) -> QPResult:
    if w0 is None and opts.random_start:
        w0 = qp.random_start(opts.seed)
    if opts.algorithm == FRANK_WOLFE:
        return frank_wolfe(qp, opts, w0)
    return projected_gradient(qp, opts, w0)


__all__ = [
    "Block",
    "FRANK_WOLFE",
    "INFEASIBLE",
    "ITERATION_LIMIT",
    "InfeasibleProblemError",
    "KKTReport",
    "OPTIMAL",
    "PROJECTED_GRADIENT",
    "QPResult",
    "QuadraticProgram",
    "SolveOptions",
    "frank_wolfe",
    "projected_gradient",
    "solve_qp",
]
