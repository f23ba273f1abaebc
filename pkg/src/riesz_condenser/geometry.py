"""Discretized condenser plates.

A plate is carried by a :class:`PointCloud`: cell centers of a uniform grid
together with the Lebesgue volume of each cell. Two clouds make a
:class:`CondenserGeometry`; when the continuous plates touch at a finite
point, that point is declared explicitly since finite clouds always stay
a positive distance apart.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    CloudParseError,
    DegeneratePlateError,
    DimensionMismatchError,
    InvalidCondenserError,
    InvalidGeometryError,
)

#: A touching configuration needs plate points within this many cells of x0.
TOUCH_PROXIMITY_CELLS = 3.0


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def as_point(x, dimension: Optional[int] = None) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(-1)
    if dimension is not None and p.shape[0] != dimension:
        raise DimensionMismatchError(
            f"point has {p.shape[0]} coordinates, expected {dimension}"
        )
    return p


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Quadrature points of one plate.

    ``cell_size`` is the characteristic linear size ``h`` of the grid. Clouds
    produced by a Kelvin inversion are no longer uniform; they carry a
    per-point ``local_sizes`` array and ``uniform=False``.
    """

    points: np.ndarray
    cell_weights: np.ndarray
    cell_size: float
    label: str = ""
    uniform: bool = True
    local_sizes: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1) if pts.size else pts.reshape(0, 2)
        if pts.ndim != 2:
            raise InvalidGeometryError("points must be a 2-d array (N, n)")
        w = np.asarray(self.cell_weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise InvalidGeometryError(
                f"{pts.shape[0]} points but {w.shape[0]} cell weights"
            )
        if np.any(~(w > 0)):
            raise InvalidGeometryError("cell weights must be strictly positive")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise InvalidGeometryError("cell_size must be a positive finite number")
        if pts.shape[0] > 1:
            if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
                raise InvalidGeometryError("cloud points must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "cell_weights", _frozen(w))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        if self.local_sizes is not None:
            ls = np.asarray(self.local_sizes, dtype=float).reshape(-1)
            if ls.shape[0] != pts.shape[0] or np.any(~(ls > 0)):
                raise InvalidGeometryError("local_sizes must be positive, one per point")
            object.__setattr__(self, "local_sizes", _frozen(ls))

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        """Per-point linear cell size."""
        if self.local_sizes is not None:
            return self.local_sizes
        return np.full(len(self), self.cell_size)

    @property
    def total_weight(self) -> float:
        return float(math.fsum(self.cell_weights))

    def subset(self, mask) -> "PointCloud":
        mask = np.asarray(mask)
        ls = None if self.local_sizes is None else self.local_sizes[mask]
        return replace(
            self,
            points=self.points[mask],
            cell_weights=self.cell_weights[mask],
            local_sizes=ls,
        )

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.cell_weights, other.cell_weights)
            and self.cell_size == other.cell_size
            and self.label == other.label
        )

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class CondenserGeometry:
    plate_pos: PointCloud
    plate_neg: PointCloud
    touch_point: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.plate_pos.dimension != self.plate_neg.dimension:
            raise DimensionMismatchError("plates live in different dimensions")
        if self.dimension < 2:
            raise InvalidGeometryError("ambient dimension must be at least 2")
        if self.touch_point is not None:
            object.__setattr__(
                self, "touch_point", _frozen(as_point(self.touch_point, self.dimension))
            )

    @property
    def dimension(self) -> int:
        return self.plate_pos.dimension

    @property
    def plates(self):
        return (self.plate_pos, self.plate_neg)

    @property
    def min_separation(self) -> float:
        return _min_distance(self.plate_pos.points, self.plate_neg.points)

    @property
    def size(self) -> int:
        return len(self.plate_pos) + len(self.plate_neg)


@dataclass(frozen=True)
class ValidationReport:
    disjoint: bool
    min_separation: float
    touch_declared: bool
    pole_excluded: Optional[bool]
    pos_near_touch: Optional[bool]
    neg_near_touch: Optional[bool]
    standard: bool

    @property
    def touching_confirmed(self) -> bool:
        return bool(
            self.touch_declared
            and self.pole_excluded
            and self.pos_near_touch
            and self.neg_near_touch
        )

    @property
    def ok(self) -> bool:
        if not self.disjoint:
            return False
        if self.touch_declared:
            return self.touching_confirmed
        return self.min_separation > 0

    def as_dict(self) -> dict:
        return {
            "disjoint": self.disjoint,
            "min_separation": self.min_separation,
            "touch_declared": self.touch_declared,
            "pole_excluded": self.pole_excluded,
            "pos_near_touch": self.pos_near_touch,
            "neg_near_touch": self.neg_near_touch,
            "touching_confirmed": self.touching_confirmed,
            "standard": self.standard,
            "ok": self.ok,
        }


def _min_distance(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        return math.inf
    d, _ = cKDTree(b).query(a, k=1)
    return float(np.min(d))


def generate_ball_cloud(center, radius: float, dimension: int, resolution: int,
                        label: str = "") -> PointCloud:
    """Cell centers of a uniform grid that fall inside the closed ball.

    The grid has ``resolution`` cells of size ``h = 2 * radius / resolution``
    along each axis of the bounding box; every retained point carries the
    cell volume ``h**dimension``.
    """
    if dimension < 2:
        raise InvalidGeometryError("dimension must be at least 2")
    if resolution < 2:
        raise InvalidGeometryError("resolution must be at least 2")
    if not (radius > 0 and math.isfinite(radius)):
        raise InvalidGeometryError(f"radius must be positive, got {radius!r}")
    c = as_point(center, dimension)
    h = 2.0 * radius / resolution
    ticks = -radius + (np.arange(resolution) + 0.5) * h
    offsets = np.stack(np.meshgrid(*([ticks] * dimension), indexing="ij"), axis=-1)
    offsets = offsets.reshape(-1, dimension)
    inside = np.einsum("ij,ij->i", offsets, offsets) <= radius * radius
    pts = c + offsets[inside]
    return PointCloud(pts, np.full(len(pts), h ** dimension), h, label=label)


def fibonacci_sphere(n_points: int, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Quasi-uniform points on a 2-sphere in R^3 (golden-angle spiral)."""
    k = np.arange(n_points) + 0.5
    z = 1.0 - 2.0 * k / n_points
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return np.asarray(center, dtype=float) + radius * pts


def exclude_near(cloud: PointCloud, x0, eps: float) -> PointCloud:
    """Drop every point within distance ``eps`` of ``x0``.

    ``eps = 0`` removes exact matches only; for ``eps > 0`` the removed set is
    the open ball ``B(x0, eps)``.
    """
    if eps < 0:
        raise InvalidGeometryError("eps must be nonnegative")
    p = as_point(x0, cloud.dimension)
    diff = cloud.points - p
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    drop = dist == 0.0 if eps == 0 else dist < eps
    if not drop.any():
        return cloud
    if drop.all():
        raise DegeneratePlateError(f"excluding around {p.tolist()} removes the whole plate")
    return cloud.subset(~drop)


def validate_condenser(geom: CondenserGeometry) -> ValidationReport:
    """Check the discrete analogue of the generalized-condenser conditions.

    Raises :class:`InvalidCondenserError` when the plates share a point.
    """
    pos, neg = geom.plates
    if len(pos) == 0 or len(neg) == 0:
        raise DegeneratePlateError("both plates must be nonempty")
    sep = geom.min_separation
    if sep == 0.0:
        raise InvalidCondenserError("plates share at least one point")
    touch = geom.touch_point
    if touch is None:
        return ValidationReport(True, sep, False, None, None, None, standard=sep > 0)
    pole_excluded = True
    near = []
    for cloud in (pos, neg):
        diff = cloud.points - touch
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if np.any(dist == 0.0):
            pole_excluded = False
        near.append(bool(np.any(dist <= TOUCH_PROXIMITY_CELLS * cloud.cell_size)))
    return ValidationReport(True, sep, True, pole_excluded, near[0], near[1], standard=False)


def touching_balls(resolution: int, exclusion: float = 0.0, dimension: int = 3) -> CondenserGeometry:
    """Two unit balls centred at the origin and at ``2 e_1``, touching at ``e_1``.

    Points within ``exclusion`` of the touching point are removed from both
    plates (``exclusion = 0`` removes only an exact hit).
    """
    x0 = np.zeros(dimension)
    x0[0] = 1.0
    c2 = 2.0 * x0
    pos = generate_ball_cloud(np.zeros(dimension), 1.0, dimension, resolution, label="pos")
    neg = generate_ball_cloud(c2, 1.0, dimension, resolution, label="neg")
    pos = exclude_near(pos, x0, exclusion)
    neg = exclude_near(neg, x0, exclusion)
    return CondenserGeometry(pos, neg, touch_point=x0)


def separated_balls(resolution: int, gap: float, dimension: int = 3) -> CondenserGeometry:
    """Two unit balls whose closures are ``gap`` apart along the first axis."""
    c2 = np.zeros(dimension)
    c2[0] = 2.0 + gap
    pos = generate_ball_cloud(np.zeros(dimension), 1.0, dimension, resolution, label="pos")
    neg = generate_ball_cloud(c2, 1.0, dimension, resolution, label="neg")
    return CondenserGeometry(pos, neg)


# -- CSV ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_cloud_csv(cloud: PointCloud, path: Union[str, Path]) -> None:
    n = cloud.dimension
    buf = io.StringIO()
    buf.write(f"# cell_size={_fmt(cloud.cell_size)}\n")
    if cloud.label:
        buf.write(f"# label={cloud.label}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x_{k + 1}" for k in range(n)] + ["weight"])
    for p, w in zip(cloud.points, cloud.cell_weights):
        writer.writerow([_fmt(v) for v in p] + [_fmt(w)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_cloud_csv(path: Union[str, Path], cell_size: Optional[float] = None,
                   label: Optional[str] = None) -> PointCloud:
    """Read a cloud written by :func:`save_cloud_csv`.

    The header row ``x_1,...,x_n,weight`` fixes the dimension. Lines starting
    with ``#`` are comments; ``# cell_size=`` and ``# label=`` comments are
    honoured when the caller does not pass those values.
    """
    text = Path(path).read_text(encoding="utf-8")
    meta = {}
    rows = []
    header = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        cells = next(csv.reader([stripped]))
        if header is None:
            header = [c.strip() for c in cells]
            if len(header) < 3 or header[-1] != "weight":
                raise CloudParseError("header must be x_1,...,x_n,weight with n >= 2", lineno)
            continue
        if len(cells) != len(header):
            raise CloudParseError(
                f"expected {len(header)} columns, found {len(cells)}", lineno
            )
        try:
            vals = [float(c) for c in cells]
        except ValueError as exc:
            raise CloudParseError(f"not a number ({exc})", lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise CloudParseError("non-finite value", lineno)
        if not vals[-1] > 0:
            raise CloudParseError(f"weight must be positive, got {vals[-1]!r}", lineno)
        rows.append(vals)
    if header is None:
        raise CloudParseError("missing header")
    n = len(header) - 1
    if not rows:
        raise CloudParseError("no data rows")
    arr = np.array(rows, dtype=float)
    if cell_size is None:
        if "cell_size" in meta:
            cell_size = float(meta["cell_size"])
        else:
            cell_size = float(np.median(arr[:, -1]) ** (1.0 / n))
    if label is None:
        label = meta.get("label", "")
    return PointCloud(arr[:, :n], arr[:, n], cell_size, label=label)


def concat_points(clouds: Sequence[PointCloud]) -> np.ndarray:
    return np.concatenate([c.points for c in clouds], axis=0)
