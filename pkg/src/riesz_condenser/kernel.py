"""alpha-Riesz kernels, kernel matrices, potentials and energies.

Two evaluation modes are supported:

``exact``
    ``|x - y|**(alpha - n)``, infinite on the diagonal. When a cloud is paired
    with itself the diagonal is replaced by the self-energy of a uniformly
    charged cubic cell, ``c(n, alpha) * h**(alpha - n)``.
``regularized``
    The inverse multiquadric ``(|x - y|**2 + eps**2)**((alpha - n) / 2)``,
    finite everywhere and strictly positive definite.

Measures are passed duck-typed: anything with ``points`` (N, n), ``weights``
(N,) and ``sizes`` (N,) attributes works.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatchError, InvalidGeometryError, ModeMisuseError
from .parallel import map_chunks

EXACT = "exact"
REGULARIZED = "regularized"


@dataclass(frozen=True)
class KernelSpec:
    alpha: float
    dimension: int
    mode: str = EXACT
    eps: Optional[float] = None

    def __post_init__(self):
        if self.dimension < 2:
            raise InvalidGeometryError("dimension must be at least 2")
        if not (0.0 < self.alpha < self.dimension):
            raise InvalidGeometryError(
                f"alpha must lie in (0, n) = (0, {self.dimension}), got {self.alpha}"
            )
        if self.mode not in (EXACT, REGULARIZED):
            raise ValueError(f"unknown kernel mode {self.mode!r}")
        if self.mode == REGULARIZED:
            if self.eps is None or not self.eps > 0:
                raise InvalidGeometryError("regularized mode needs eps > 0")

    @property
    def exponent(self) -> float:
        return self.alpha - self.dimension

    @property
    def is_exact(self) -> bool:
        return self.mode == EXACT

    @classmethod
    def regularized(cls, alpha, dimension, eps):
        return cls(alpha, dimension, REGULARIZED, float(eps))

    @classmethod
    def for_grid(cls, alpha, dimension, cell_size):
        """Regularized kernel with the default ``eps = cell_size / 2``."""
        return cls.regularized(alpha, dimension, 0.5 * cell_size)

    def diag_value(self, sizes) -> np.ndarray:
        sizes = np.asarray(sizes, dtype=float)
        if self.is_exact:
            # atoms without a cell (nan size) are true point charges
            with np.errstate(invalid="ignore"):
                d = cell_constant(self.dimension, self.alpha) * sizes ** self.exponent
            return np.where(np.isnan(sizes), np.inf, d)
        return np.full(sizes.shape, self.eps ** self.exponent)

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "dimension": self.dimension, "mode": self.mode,
                "eps": self.eps}


@functools.lru_cache(maxsize=None)
def cell_constant(dimension: int, alpha: float, order: int = 24) -> float:
    """Self-energy of the unit cube with unit uniform density.

    Returns ``c = int_{[0,1]^n} int_{[0,1]^n} |x - y|**(alpha - n) dx dy``.
    The double integral is reduced to ``2**n * int_{[0,1]^n} |z|**p
    prod(1 - z_k) dz`` and the corner singularity is removed by splitting the
    cube into ``n`` pyramids and using the Duffy map ``z = t * (1, u)``; the
    radial integral of ``t**(alpha-1) * poly(t)`` is then exact and the
    remaining integrand over ``u`` is smooth, handled by tensor Gauss-Legendre.
    """
    n = int(dimension)
    p = float(alpha) - n
    nodes, wts = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (nodes + 1.0)
    wts = 0.5 * wts
    total = 0.0
    for idx in itertools.product(range(order), repeat=n - 1):
        u = nodes[list(idx)]
        wu = float(np.prod(wts[list(idx)]))
        # poly(t) = (1 - t) * prod_k (1 - t * u_k), coefficients low -> high
        coeffs = np.array([1.0, -1.0])
        for uk in u:
            coeffs = np.convolve(coeffs, [1.0, -uk])
        radial = sum(c / (alpha + m) for m, c in enumerate(coeffs))
        total += wu * (1.0 + float(u @ u)) ** (p / 2.0) * radial
    return float(2 ** n * n * total)


def _check_dim(points: np.ndarray, spec: KernelSpec):
    if points.ndim != 2 or points.shape[1] != spec.dimension:
        raise DimensionMismatchError(
            f"points of dimension {points.shape[-1]} used with a {spec.dimension}-d kernel"
        )


def _power(d2: np.ndarray, spec: KernelSpec) -> np.ndarray:
    half = 0.5 * spec.exponent
    if spec.is_exact:
        with np.errstate(divide="ignore"):
            return np.power(d2, half)
    return np.power(d2 + spec.eps * spec.eps, half)


def _sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = np.zeros((a.shape[0], b.shape[0]))
    diff = np.empty_like(d2)
    for k in range(a.shape[1]):
        np.subtract(a[:, k, None], b[None, :, k], out=diff)
        diff *= diff
        d2 += diff
    return d2


def kernel_value(x, y, spec: KernelSpec) -> float:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    _check_dim(x, spec)
    _check_dim(y, spec)
    return float(_power(_sq_dist(x, y), spec)[0, 0])


def cross_matrix(a: np.ndarray, b: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Entry-wise kernel values; coincident points give +inf in exact mode."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_dim(a, spec)
    _check_dim(b, spec)
    out = np.empty((a.shape[0], b.shape[0]))

    def work(s, e):
        out[s:e] = _power(_sq_dist(a[s:e], b), spec)

    map_chunks(work, a.shape[0])
    return out


def self_matrix(points: np.ndarray, sizes, spec: KernelSpec) -> np.ndarray:
    """Symmetric kernel matrix of a cloud with itself, diagonal per mode."""
    points = np.asarray(points, dtype=float)
    _check_dim(points, spec)
    # x - y is exactly -(y - x) in floating point, so this is already symmetric
    k = cross_matrix(points, points, spec)
    np.fill_diagonal(k, spec.diag_value(sizes))
    return k


def assemble_matrix(a, b, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix between two point clouds.

    When ``a`` and ``b`` are the same cloud the diagonal follows the mode's
    diagonal rule instead of ``+inf``.
    """
    if a is b or _same_support(a.points, b.points):
        return self_matrix(a.points, a.sizes, spec)
    return cross_matrix(a.points, b.points, spec)


def _same_support(p: np.ndarray, q: np.ndarray) -> bool:
    return p is q or (p.shape == q.shape and np.array_equal(p, q))


def is_positive_definite(mat: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return False
    return True


def potential(mu, x, spec: KernelSpec) -> float:
    """Potential ``sum_j w_j k(x, y_j)``; +inf at a charged atom in exact mode."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(potentials(mu, x, spec)[0])


def potentials(mu, xs, spec: KernelSpec) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    _check_dim(xs, spec)
    w = np.asarray(mu.weights, dtype=float)
    if w.size == 0:
        return np.zeros(xs.shape[0])
    live = w != 0
    k = cross_matrix(xs, np.asarray(mu.points)[live], spec)
    out = np.empty(xs.shape[0])
    wl = w[live]

    def work(s, e):
        out[s:e] = k[s:e] @ wl

    map_chunks(work, xs.shape[0])
    return out


def pair_matrix(mu, nu, spec: KernelSpec) -> np.ndarray:
    if _same_support(mu.points, nu.points):
        return self_matrix(mu.points, mu.sizes, spec)
    return cross_matrix(mu.points, nu.points, spec)


def mutual_energy(mu, nu, spec: KernelSpec) -> float:
    """``w_mu^T K w_nu`` over the assembled pair matrix.

    Entries paired with a zero weight are skipped so that an infinite kernel
    value only matters when both atoms carry charge.
    """
    wm = np.asarray(mu.weights, dtype=float)
    wn = np.asarray(nu.weights, dtype=float)
    if wm.size == 0 or wn.size == 0:
        return 0.0
    k = pair_matrix(mu, nu, spec)
    rows = wm != 0
    cols = wn != 0
    if not rows.any() or not cols.any():
        return 0.0
    if rows.all() and cols.all():
        return float(wm @ (k @ wn))
    sub = k[np.ix_(rows, cols)]
    return float(wm[rows] @ (sub @ wn[cols]))


def energy(mu, spec: KernelSpec) -> float:
    return mutual_energy(mu, mu, spec)


def offdiag_mutual_energy(mu, nu, spec: KernelSpec) -> float:
    """Mutual energy with every coincident pair of atoms left out.

    For a same-support pair this drops exactly the diagonal; it is the part of
    the energy that does not depend on the self-energy convention.
    """
    wm = np.asarray(mu.weights, dtype=float)
    wn = np.asarray(nu.weights, dtype=float)
    if wm.size == 0 or wn.size == 0:
        return 0.0
    k = cross_matrix(mu.points, nu.points, spec)
    k[_sq_dist(mu.points, nu.points) == 0.0] = 0.0
    return float(wm @ (k @ wn))


def require_positive_definite(mat: np.ndarray, spec: KernelSpec) -> None:
    if not is_positive_definite(mat):
        raise ModeMisuseError(
            f"{spec.mode} kernel matrix is not positive definite "
            "(Cholesky factorization failed); use the regularized mode"
        )


__all__ = [
    "EXACT",
    "REGULARIZED",
    "KernelSpec",
    "assemble_matrix",
    "cell_constant",
    "cross_matrix",
    "energy",
    "is_positive_definite",
    "kernel_value",
    "mutual_energy",
    "offdiag_mutual_energy",
    "potential",
    "potentials",
    "self_matrix",
]
