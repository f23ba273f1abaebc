"""Operations on the per-plate feasible set ``{0 <= w <= sigma, <g, w> = a}``."""
from __future__ import annotations

import math

import numpy as np

from ..errors import InfeasibleProblemError

BISECT_MAX = 200


def _mass(w, lam, g, sigma):
    return float(np.sum(g * np.clip(w + lam * g, 0.0, sigma)))


def check_knapsack_feasible(g, a, sigma) -> None:
    cap = float(np.sum(g * sigma))
    if not cap >= a:
        raise InfeasibleProblemError(
            f"empty feasible set: <g, sigma> = {cap:.17g} < a = {a:.17g}"
        )


def project_knapsack(w, g, a: float, sigma, rtol: float = 1e-12) -> np.ndarray:
    """Euclidean projection onto ``{0 <= v <= sigma, <g, v> = a}``.

    The projection is ``clamp(w + lam * g, 0, sigma)`` for the scalar ``lam``
    at which the (nondecreasing) mass equals ``a``. ``lam`` is bracketed and
    bisected, with the midpoint convention ``lam = lo + (hi - lo) / 2``; once
    the mass is within ``rtol * a`` the free set is frozen and ``lam`` is
    solved for in closed form on it.
    """
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), w.shape)
    check_knapsack_feasible(g, a, sigma)
    if w.size == 0:
        return w.copy()

    lo = float(np.min(-w / g))
    finite = np.isfinite(sigma)
    if finite.all():
        hi = float(np.max((sigma - w) / g))
    else:
        ginf = g[~finite]
        hi = float(np.min((a / ginf - w[~finite]) / ginf))
    hi = max(hi, lo)

    lam = hi
    for _ in range(BISECT_MAX):
        lam = lo + (hi - lo) / 2.0
        m = _mass(w, lam, g, sigma)
        if abs(m - a) <= rtol * a or not (lo < lam < hi):
            break
        if m < a:
            lo = lam
        else:
            hi = lam

    # closed form on the frozen free set
    z = w + lam * g
    free = (z > 0.0) & (z < sigma)
    upper = z >= sigma
    if free.any():
        fixed_mass = float(np.sum(g[upper] * sigma[upper]))
        lam = (a - fixed_mass - float(np.sum(g[free] * w[free]))) / float(np.sum(g[free] ** 2))
    return np.clip(w + lam * g, 0.0, sigma)


def knapsack_lmo(c, g, a: float, sigma) -> np.ndarray:
    """Vertex minimising ``<c, v>`` over the set: greedy fill by ``c / g``."""
    c = np.asarray(c, dtype=float)
    g = np.asarray(g, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), c.shape)
    return _greedy_fill(np.argsort(c / g, kind="stable"), g, a, sigma, c.shape[0])


def _greedy_fill(order, g, remaining, sigma, n):
    v = np.zeros(n)
    for j in order:
        if remaining <= 0.0:
            break
        take = min(sigma[j], remaining / g[j])
        v[j] = take
        remaining -= g[j] * take
    return v


def knapsack_face_max(c, w, g, a: float, sigma) -> np.ndarray:
    """Vertex maximising ``<c, v>`` over the smallest face containing ``w``.

    Coordinates of ``w`` at a bound stay there; the rest are filled greedily
    in decreasing order of ``c / g``.
    """
    c = np.asarray(c, dtype=float)
    g = np.asarray(g, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), c.shape)
    at_bound = (w <= 0.0) | (w >= sigma)
    v = np.where(at_bound, w, 0.0)
    remaining = a - float(np.sum(g[at_bound] * w[at_bound]))
    free = np.flatnonzero(~at_bound)
    order = free[np.argsort(-(c[free] / g[free]), kind="stable")]
    v[free] = _greedy_fill(order, g, remaining, sigma, c.shape[0])[free]
    return v


def max_step(w, d, sigma) -> float:
    """Largest ``t`` with ``0 <= w + t d <= sigma``."""
    t = math.inf
    neg = d < 0
    if neg.any():
        t = min(t, float(np.min(w[neg] / -d[neg])))
    pos = d > 0
    if pos.any():
        t = min(t, float(np.min((sigma[pos] - w[pos]) / d[pos])))
    return max(t, 0.0)
