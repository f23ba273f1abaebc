"""Vector measures on a condenser, the R-map, and the Gauss functional.

Plate signs are fixed by position: the first plate is positive, the second
negative. A :class:`VectorMeasure` holds one nonnegative
:class:`DiscreteMeasure` per plate; :func:`r_map` turns it into the signed
measure ``nu_pos - nu_neg`` on the concatenated support.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from . import kernel as kern
from .errors import DimensionMismatchError, InvalidGeometryError, ModeMisuseError
from .geometry import CondenserGeometry, PointCloud, as_point

SIGNS = (1.0, -1.0)

#: Radicands of the condenser metric in [-METRIC_CLAMP, 0) are treated as 0.
METRIC_CLAMP = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    cloud: PointCloud
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != len(self.cloud):
            raise InvalidGeometryError(
                f"{w.shape[0]} weights for a cloud of {len(self.cloud)} points"
            )
        if np.any(w < 0) or np.any(np.isnan(w)):
            raise InvalidGeometryError("measure weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    @property
    def sizes(self) -> np.ndarray:
        return self.cloud.sizes

    @property
    def mass(self) -> float:
        return float(math.fsum(self.weights))

    @classmethod
    def zero(cls, cloud: PointCloud) -> "DiscreteMeasure":
        return cls(cloud, np.zeros(len(cloud)))

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        _same_cloud(self.cloud, other.cloud)
        return DiscreteMeasure(self.cloud, self.weights + other.weights)

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.cloud, c * self.weights)


def _same_cloud(a: PointCloud, b: PointCloud):
    if a is not b and not np.array_equal(a.points, b.points):
        raise InvalidGeometryError("measures live on different clouds")


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Finite signed combination of atoms.

    ``sizes`` gives the cell size attached to each atom; it only matters for
    the exact-mode diagonal rule.
    """

    points: np.ndarray
    weights: np.ndarray
    sizes: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] != w.shape[0]:
            raise InvalidGeometryError("signed measure needs one weight per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if self.sizes is None:
            object.__setattr__(self, "sizes", np.full(w.shape[0], np.nan))
        else:
            object.__setattr__(self, "sizes", np.asarray(self.sizes, dtype=float).reshape(-1))

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def positive_part(self) -> np.ndarray:
        return np.clip(self.weights, 0.0, None)

    def negative_part(self) -> np.ndarray:
        return np.clip(-self.weights, 0.0, None)

    def __add__(self, other: "SignedMeasure") -> "SignedMeasure":
        # atoms are kept separate; coincident atoms are not merged
        return SignedMeasure(
            np.concatenate([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
            np.concatenate([self.sizes, other.sizes]),
        )

    def __neg__(self) -> "SignedMeasure":
        return SignedMeasure(self.points, -self.weights, self.sizes)

    def __sub__(self, other: "SignedMeasure") -> "SignedMeasure":
        if np.array_equal(self.points, other.points):
            return SignedMeasure(self.points, self.weights - other.weights, self.sizes)
        return self + (-other)


@dataclass(frozen=True, eq=False)
class VectorMeasure:
    pos: DiscreteMeasure
    neg: DiscreteMeasure

    @property
    def components(self) -> Tuple[DiscreteMeasure, DiscreteMeasure]:
        return (self.pos, self.neg)

    @classmethod
    def from_weights(cls, geom: CondenserGeometry, w_pos, w_neg) -> "VectorMeasure":
        return cls(DiscreteMeasure(geom.plate_pos, w_pos), DiscreteMeasure(geom.plate_neg, w_neg))

    @classmethod
    def from_flat(cls, geom: CondenserGeometry, w) -> "VectorMeasure":
        w = np.asarray(w, dtype=float)
        n1 = len(geom.plate_pos)
        return cls.from_weights(geom, w[:n1], w[n1:])

    @classmethod
    def zero(cls, geom: CondenserGeometry) -> "VectorMeasure":
        return cls(DiscreteMeasure.zero(geom.plate_pos), DiscreteMeasure.zero(geom.plate_neg))

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.pos.weights, self.neg.weights])

    def __add__(self, other: "VectorMeasure") -> "VectorMeasure":
        return VectorMeasure(self.pos + other.pos, self.neg + other.neg)

    def scaled(self, c: float) -> "VectorMeasure":
        return VectorMeasure(self.pos.scaled(c), self.neg.scaled(c))


# -- external fields ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExternalField:
    """Sampled external field, one array per plate.

    ``case`` is ``"I"`` for a directly given lower-bounded field or ``"II"``
    when the samples are ``s_i * U^zeta`` of a signed measure ``zeta`` (kept in
    ``zeta`` so identities that need it remain available). Values of ``+inf``
    are allowed and force the weight at that point to zero.
    """

    values_pos: np.ndarray
    values_neg: np.ndarray
    case: str = "I"
    zeta: Optional[SignedMeasure] = None

    def __post_init__(self):
        for name in ("values_pos", "values_neg"):
            v = np.array(getattr(self, name), dtype=float).reshape(-1)
            if np.any(np.isnan(v)) or np.any(v == -np.inf):
                raise InvalidGeometryError("field values must be > -inf and not NaN")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.case not in ("I", "II"):
            raise ValueError("field case must be 'I' or 'II'")
        if self.case == "II" and self.zeta is None:
            raise ValueError("a Case II field needs its zeta measure")

    @property
    def per_plate(self):
        return (self.values_pos, self.values_neg)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.values_pos, self.values_neg])

    def infinite_points(self):
        """``(plate, index)`` pairs where the field is ``+inf``."""
        out = []
        for plate, v in enumerate(self.per_plate):
            out.extend((plate, int(i)) for i in np.flatnonzero(np.isinf(v)))
        return out

    @classmethod
    def zero(cls, geom: CondenserGeometry) -> "ExternalField":
        return cls(np.zeros(len(geom.plate_pos)), np.zeros(len(geom.plate_neg)))


def field_from_zeta(zeta: SignedMeasure, geom: CondenserGeometry,
                    spec: kern.KernelSpec) -> ExternalField:
    """Sample ``f_i = s_i U^zeta`` on every plate point (Case II)."""
    if zeta.dimension != geom.dimension:
        raise DimensionMismatchError("zeta and condenser dimensions differ")
    vals = []
    for s, cloud in zip(SIGNS, geom.plates):
        u = kern.potentials(zeta, cloud.points, spec)
        vals.append(s * u)
    return ExternalField(vals[0], vals[1], case="II", zeta=zeta)


# -- R-map, energies, metric -------------------------------------------------

def r_map(nu: VectorMeasure) -> SignedMeasure:
    pos, neg = nu.components
    return SignedMeasure(
        np.concatenate([pos.points, neg.points]),
        np.concatenate([pos.weights, -neg.weights]),
        np.concatenate([pos.sizes, neg.sizes]),
    )


def _check_pair(nu: VectorMeasure, nu1: VectorMeasure):
    for a, b in zip(nu.components, nu1.components):
        _same_cloud(a.cloud, b.cloud)


def vector_energy(nu: VectorMeasure, nu1: VectorMeasure, spec: kern.KernelSpec) -> float:
    """Sign-weighted sum of the four plate-by-plate mutual energies."""
    _check_pair(nu, nu1)
    total = 0.0
    for si, a in zip(SIGNS, nu.components):
        for sj, b in zip(SIGNS, nu1.components):
            total += si * sj * kern.mutual_energy(a, b, spec)
    return total


def signed_energy(mu: SignedMeasure, spec: kern.KernelSpec, mu1: Optional[SignedMeasure] = None) -> float:
    return kern.mutual_energy(mu, mu if mu1 is None else mu1, spec)


def condenser_metric_sq(nu: VectorMeasure, nu1: VectorMeasure, spec: kern.KernelSpec,
                        offdiag: bool = False) -> float:
    """Radicand ``sum_ij s_i s_j E(nu^i - nu1^i, nu^j - nu1^j)``.

    With ``offdiag=True`` the same-cell diagonal terms are dropped, which
    leaves only the point-pair sums that the Kelvin transform preserves.
    """
    _check_pair(nu, nu1)
    diffs = [
        _DiffMeasure(a.cloud, a.weights - b.weights)
        for a, b in zip(nu.components, nu1.components)
    ]
    mutual = kern.offdiag_mutual_energy if offdiag else kern.mutual_energy
    total = 0.0
    for si, a in zip(SIGNS, diffs):
        for sj, b in zip(SIGNS, diffs):
            total += si * sj * mutual(a, b, spec)
    return total


@dataclass(frozen=True)
class _DiffMeasure:
    cloud: PointCloud
    weights: np.ndarray

    @property
    def points(self):
        return self.cloud.points

    @property
    def sizes(self):
        return self.cloud.sizes


def condenser_metric(nu: VectorMeasure, nu1: VectorMeasure, spec: kern.KernelSpec) -> float:
    rad = condenser_metric_sq(nu, nu1, spec)
    if rad < -METRIC_CLAMP:
        raise ModeMisuseError(
            f"negative metric radicand {rad:.3e}: the kernel mode is not positive definite"
        )
    return math.sqrt(max(rad, 0.0))


def signed_norm(mu: SignedMeasure, spec: kern.KernelSpec) -> float:
    e = signed_energy(mu, spec)
    if e < -METRIC_CLAMP:
        raise ModeMisuseError(f"negative energy {e:.3e}: kernel mode is not positive definite")
    return math.sqrt(max(e, 0.0))


# -- problem data ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProblemData:
    """Discrete constrained Gauss problem.

    ``sigma`` is ``None`` for the unconstrained problem; otherwise a pair of
    per-point upper bounds (``+inf`` entries allowed).
    """

    geometry: CondenserGeometry
    kernel: kern.KernelSpec
    g: Tuple[np.ndarray, np.ndarray]
    a: Tuple[float, float]
    sigma: Optional[Tuple[np.ndarray, np.ndarray]] = None
    field: Optional[ExternalField] = None

    def __post_init__(self):
        geom = self.geometry
        sizes = (len(geom.plate_pos), len(geom.plate_neg))
        if self.kernel.dimension != geom.dimension:
            raise DimensionMismatchError("kernel and geometry dimensions differ")
        g = tuple(_per_point(v, n, "g") for v, n in zip(self.g, sizes))
        object.__setattr__(self, "g", g)
        a = tuple(float(x) for x in self.a)
        if len(a) != 2 or not all(x > 0 and math.isfinite(x) for x in a):
            raise InvalidGeometryError("masses a must be two positive finite numbers")
        object.__setattr__(self, "a", a)
        if self.sigma is not None:
            sig = tuple(_per_point(v, n, "sigma", allow_inf=True) for v, n in zip(self.sigma, sizes))
            object.__setattr__(self, "sigma", sig)
        f = self.field if self.field is not None else ExternalField.zero(geom)
        if f.values_pos.shape[0] != sizes[0] or f.values_neg.shape[0] != sizes[1]:
            raise InvalidGeometryError("field needs one value per plate point")
        object.__setattr__(self, "field", f)

    @property
    def constrained(self) -> bool:
        return self.sigma is not None and not all(np.all(np.isinf(s)) for s in self.sigma)

    def sigma_or_inf(self):
        if self.sigma is None:
            return tuple(np.full(len(c), np.inf) for c in self.geometry.plates)
        return self.sigma

    def with_sigma(self, sigma):
        return ProblemData(self.geometry, self.kernel, self.g, self.a, sigma, self.field)


def _per_point(v, n, name, allow_inf=False):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    arr = np.array(arr, dtype=float).reshape(-1)
    if arr.shape[0] != n:
        raise InvalidGeometryError(f"{name} needs {n} values, got {arr.shape[0]}")
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise InvalidGeometryError(f"{name} values must be nonnegative")
    if not allow_inf and np.any(np.isinf(arr)):
        raise InvalidGeometryError(f"{name} values must be finite")
    arr.setflags(write=False)
    return arr


def lebesgue_sigma(geom: CondenserGeometry, c: Sequence[float]):
    """Constraint ``sigma^i = c_i`` times the Lebesgue cell volumes."""
    return tuple(ci * cloud.cell_weights for ci, cloud in zip(c, geom.plates))


def pairing(values: np.ndarray, weights: np.ndarray) -> float:
    """``<f, nu>`` for one plate; zero-weight points never contribute."""
    live = weights != 0
    if not live.any():
        return 0.0
    return float(values[live] @ weights[live])


def field_pairing(field: ExternalField, nu: VectorMeasure) -> float:
    return sum(pairing(f, m.weights) for f, m in zip(field.per_plate, nu.components))


def gauss_functional(nu: VectorMeasure, problem: ProblemData) -> float:
    """``E(nu) + 2 <f, nu>``; returns ``+inf`` if charge sits where f is infinite."""
    lin = field_pairing(problem.field, nu)
    if math.isinf(lin):
        return math.inf
    return vector_energy(nu, nu, problem.kernel) + 2.0 * lin


@dataclass(frozen=True)
class FeasibilityReport:
    mass_residual: Tuple[float, float]
    max_violation: Tuple[float, float]
    tolerance: Tuple[float, float]

    @property
    def feasible(self) -> bool:
        return all(
            r <= t and v <= t
            for r, v, t in zip(self.mass_residual, self.max_violation, self.tolerance)
        )

    def as_dict(self) -> dict:
        return {
            "mass_residual": list(self.mass_residual),
            "max_violation": list(self.max_violation),
            "tolerance": list(self.tolerance),
            "feasible": self.feasible,
        }


#: Relative feasibility tolerance, scaled by each plate's mass a_i.
TAU_FEAS = 1e-9


def check_feasible(nu: VectorMeasure, problem: ProblemData, tau: float = TAU_FEAS) -> FeasibilityReport:
    res, viol, tol = [], [], []
    for m, g, a, sig in zip(nu.components, problem.g, problem.a, problem.sigma_or_inf()):
        res.append(abs(float(math.fsum(g * m.weights)) - a))
        over = m.weights - sig
        viol.append(float(max(np.max(over, initial=0.0), 0.0)))
        tol.append(tau * a)
    return FeasibilityReport(tuple(res), tuple(viol), tuple(tol))


# -- serialization -----------------------------------------------------------

def vector_measure_csv(nu: VectorMeasure) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "plate", "weight"])
    for plate, m in zip((1, 2), nu.components):
        for i, x in enumerate(m.weights):
            w.writerow([i, plate, format(float(x), ".17g")])
    return buf.getvalue()


def save_vector_measure_csv(nu: VectorMeasure, path) -> None:
    Path(path).write_text(vector_measure_csv(nu), encoding="utf-8")


def load_vector_measure_csv(geom: CondenserGeometry, path) -> VectorMeasure:
    wts = [np.zeros(len(geom.plate_pos)), np.zeros(len(geom.plate_neg))]
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        if [h.strip() for h in header] != ["index", "plate", "weight"]:
            raise ValueError("weights csv header must be index,plate,weight")
        for row in reader:
            i, plate, x = int(row[0]), int(row[1]), float(row[2])
            wts[plate - 1][i] = x
    return VectorMeasure.from_weights(geom, *wts)


def point_mass(x, weight: float = 1.0, size: float = np.nan) -> SignedMeasure:
    p = as_point(x)
    return SignedMeasure(p.reshape(1, -1), [weight], [size])
