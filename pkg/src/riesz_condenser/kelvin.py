"""Kelvin inversion in the unit sphere about a pole ``x0``.

Points map by ``x* = x0 + (x - x0) / |x - x0|**2`` and charges by
``w* = w * |x - x0|**(alpha - n)``. Under the exact Riesz kernel this keeps
every point-pair interaction ``k(x_i, x_j) w_i w_j`` unchanged, so mutual
energies (off the diagonal) and the condenser metric are preserved, and a
condenser touching at ``x0`` is sent to one with separated plates.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Union

import numpy as np

from . import kernel as kern
from .errors import ModeMisuseError, PoleError
from .geometry import CondenserGeometry, PointCloud, as_point, validate_condenser
from .measure import (
    DiscreteMeasure,
    SignedMeasure,
    VectorMeasure,
    condenser_metric_sq,
)


@dataclass(frozen=True, eq=False)
class InversionSpec:
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))

    @property
    def dimension(self) -> int:
        return self.center.shape[0]


def _radii(points: np.ndarray, inv: InversionSpec) -> np.ndarray:
    diff = np.atleast_2d(points) - inv.center
    r = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if np.any(r == 0.0):
        raise PoleError(f"point coincides with the inversion pole {inv.center.tolist()}")
    return r


def invert_points(points, inv: InversionSpec) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = _radii(pts, inv)
    return inv.center + (pts - inv.center) / (r * r)[:, None]


def invert_point(x, inv: InversionSpec) -> np.ndarray:
    return invert_points(as_point(x, inv.dimension), inv)[0]


def _rel(a: float, b: float) -> float:
    if not (np.isfinite(a) and np.isfinite(b)):
        return 0.0 if a == b else float("inf")
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def check_distance_identity(x, y, inv: InversionSpec) -> float:
    """Relative residual of ``|x* - y*| = |x - y| / (|x0 - x| |x0 - y|)``."""
    x = as_point(x, inv.dimension)
    y = as_point(y, inv.dimension)
    xs, ys = invert_point(x, inv), invert_point(y, inv)
    lhs = float(np.linalg.norm(xs - ys))
    rhs = float(np.linalg.norm(x - y) / (np.linalg.norm(x - inv.center) * np.linalg.norm(y - inv.center)))
    return _rel(lhs, rhs)


def invert_cloud(cloud: PointCloud, inv: InversionSpec) -> PointCloud:
    """Image cloud; cell volumes and sizes follow the local Jacobian."""
    r = _radii(cloud.points, inv)
    n = cloud.dimension
    return replace(
        cloud,
        points=inv.center + (cloud.points - inv.center) / (r * r)[:, None],
        cell_weights=cloud.cell_weights * r ** (-2.0 * n),
        local_sizes=cloud.sizes * r ** -2.0,
        uniform=False,
    )


def _require_exact(spec: kern.KernelSpec):
    if not spec.is_exact:
        raise ModeMisuseError(
            "Kelvin identities hold for the exact Riesz kernel only, not the regularized one"
        )


Measure = Union[DiscreteMeasure, SignedMeasure]


def kelvin_measure(mu: Measure, inv: InversionSpec, spec: kern.KernelSpec) -> Measure:
    """Kelvin transform of a discrete (or signed) measure."""
    r = _radii(mu.points, inv)
    factor = r ** spec.exponent
    if isinstance(mu, DiscreteMeasure):
        return DiscreteMeasure(invert_cloud(mu.cloud, inv), mu.weights * factor)
    return SignedMeasure(
        inv.center + (mu.points - inv.center) / (r * r)[:, None],
        mu.weights * factor,
        mu.sizes * r ** -2.0,
    )


def check_potential_transform(mu: Measure, x, inv: InversionSpec, spec: kern.KernelSpec) -> float:
    """Relative residual of ``U^{mu*}(x*) = |x - x0|**(n - alpha) U^mu(x)``."""
    _require_exact(spec)
    x = as_point(x, inv.dimension)
    r = float(np.linalg.norm(x - inv.center))
    if r == 0.0:
        raise PoleError("evaluation point is the pole")
    star = kelvin_measure(mu, inv, spec)
    lhs = kern.potential(star, invert_point(x, inv), spec)
    rhs = r ** (-spec.exponent) * kern.potential(mu, x, spec)
    return _rel(lhs, rhs)


def check_energy_preservation(mu: Measure, nu: Measure, inv: InversionSpec,
                              spec: kern.KernelSpec) -> float:
    """Relative residual between off-diagonal mutual energies before and after."""
    _require_exact(spec)
    before = kern.offdiag_mutual_energy(mu, nu, spec)
    after = kern.offdiag_mutual_energy(
        kelvin_measure(mu, inv, spec), kelvin_measure(nu, inv, spec), spec
    )
    return _rel(before, after)


@dataclass(frozen=True, eq=False)
class KelvinCondenser:
    """Image of a touching condenser together with the measure transport."""

    source: CondenserGeometry
    image: CondenserGeometry
    inversion: InversionSpec

    def transport(self, nu: VectorMeasure, spec: kern.KernelSpec) -> VectorMeasure:
        r = [_radii(m.points, self.inversion) ** spec.exponent for m in nu.components]
        return VectorMeasure(
            DiscreteMeasure(self.image.plate_pos, nu.pos.weights * r[0]),
            DiscreteMeasure(self.image.plate_neg, nu.neg.weights * r[1]),
        )


def transform_condenser(geom: CondenserGeometry, inv: InversionSpec) -> KelvinCondenser:
    if geom.touch_point is None or not np.array_equal(geom.touch_point, inv.center):
        raise ValueError("the inversion pole must be the declared touching point")
    image = CondenserGeometry(
        invert_cloud(geom.plate_pos, inv), invert_cloud(geom.plate_neg, inv)
    )
    report = validate_condenser(image)
    if not report.min_separation > 0:
        raise ValueError("image condenser is not separated")
    return KelvinCondenser(geom, image, inv)


# -- randomized identity suite -----------------------------------------------

def _random_signed(rng, points, sizes, n_atoms):
    idx = rng.choice(len(points), size=min(n_atoms, len(points)), replace=False)
    w = rng.standard_normal(idx.shape[0])
    return SignedMeasure(points[idx], w, sizes[idx])


def identity_suite(geom: CondenserGeometry, spec: kern.KernelSpec, seed: int = 0,
                   count: int = 200, max_atoms: int = 500) -> Dict[str, float]:
    """Maximum relative residual of each inversion identity over random trials.

    The pole is the geometry's touching point. Trial sizes cycle so the whole
    suite stays cheap; the largest measures have ``max_atoms`` atoms.
    """
    _require_exact(spec)
    if geom.touch_point is None:
        raise ValueError("geometry declares no touching point to use as pole")
    inv = InversionSpec(geom.touch_point)
    rng = np.random.default_rng(seed)
    pts = np.concatenate([c.points for c in geom.plates])
    sizes = np.concatenate([c.sizes for c in geom.plates])
    _radii(pts, inv)
    kc = transform_condenser(geom, inv)
    worst = dict.fromkeys(
        ["distance", "potential", "energy", "additivity", "involution", "isometry"], 0.0
    )
    atom_sizes = [max(2, max_atoms // 20), max(2, max_atoms // 4), max_atoms]
    n = geom.dimension
    for t in range(count):
        k = atom_sizes[t % len(atom_sizes)] if t % 10 == 0 else atom_sizes[0]
        i, j = rng.choice(len(pts), size=2, replace=False)
        worst["distance"] = max(worst["distance"], check_distance_identity(pts[i], pts[j], inv))

        mu = _random_signed(rng, pts, sizes, k)
        nu = _random_signed(rng, pts, sizes, k)
        x = pts[i] + rng.standard_normal(n) * 0.5
        if np.linalg.norm(x - inv.center) > 1e-6 and np.min(np.linalg.norm(mu.points - x, axis=1)) > 0:
            worst["potential"] = max(worst["potential"], check_potential_transform(mu, x, inv, spec))
        worst["energy"] = max(worst["energy"], check_energy_preservation(mu, nu, inv, spec))

        # additivity and involution on a shared support
        w1 = rng.random(k)
        w2 = rng.random(k)
        idx = rng.choice(len(pts), size=min(k, len(pts)), replace=False)
        m1 = SignedMeasure(pts[idx], w1[: len(idx)], sizes[idx])
        m2 = SignedMeasure(pts[idx], w2[: len(idx)], sizes[idx])
        s_sum = kelvin_measure(SignedMeasure(m1.points, m1.weights + m2.weights, m1.sizes), inv, spec)
        s1, s2 = kelvin_measure(m1, inv, spec), kelvin_measure(m2, inv, spec)
        worst["additivity"] = max(
            worst["additivity"],
            float(np.max(np.abs(s_sum.weights - (s1.weights + s2.weights)) / np.abs(s_sum.weights))),
            float(np.max(np.abs(s_sum.points - s1.points))),
        )
        back = kelvin_measure(s1, inv, spec)
        worst["involution"] = max(
            worst["involution"],
            float(np.max(np.abs(back.weights - m1.weights) / np.abs(m1.weights))),
            float(np.max(np.abs(back.points - m1.points) / np.maximum(1.0, np.abs(m1.points)))),
        )

        if t % 10 == 0:
            a = _random_vector_measure(rng, geom)
            b = _random_vector_measure(rng, geom)
            before = condenser_metric_sq(a, b, spec, offdiag=True)
            after = condenser_metric_sq(kc.transport(a, spec), kc.transport(b, spec), spec, offdiag=True)
            worst["isometry"] = max(worst["isometry"], _rel(before, after))
    return worst


def _random_vector_measure(rng, geom: CondenserGeometry) -> VectorMeasure:
    return VectorMeasure.from_weights(
        geom, rng.random(len(geom.plate_pos)), rng.random(len(geom.plate_neg))
    )
