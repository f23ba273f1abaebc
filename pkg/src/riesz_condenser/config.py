"""JSON problem configuration: parsing, canonical hashing, problem assembly.

Schema (version 1)::

    {
      "schema_version": 1,
      "dimension": 3,
      "alpha": 1.5,
      "kernel": {"mode": "exact" | "regularized", "eps": null},
      "geometry": {"type": "touching_balls", "resolution": 10, "exclusion": 0.0}
                | {"type": "separated_balls", "resolution": 10, "gap": 0.5}
                | {"type": "plates", "touch_point": [1, 0, 0] | null,
                   "plates": [PLATE, PLATE]},
      "g": [1.0, 1.0],                      # constant or {"csv": path} per plate
      "a": [1.0, 1.0],
      "sigma": {"type": "unconstrained"}
             | {"type": "lebesgue_multiple", "c": [c1, c2]}
             | {"type": "lebesgue_ratio", "factor": 2.0}
             | {"type": "csv", "paths": [p1, p2]},
      "field": {"type": "zero"}
             | {"type": "case1_csv", "paths": [p1, p2]}
             | {"type": "case2_zeta", "atoms": [{"point": [...], "weight": w}, ...]},
      "solver": {SolveOptions fields},
      "capacity": {"plate": "pos" | "neg"} | {"cloud": PLATE},
      "probe": {"levels": [6, 8, 10, 12], "constrained": false, "rho": null,
                "exclusion_cells": 1.0, "sigma_factor": 2.0, "eps_cells": null},
      "kelvin": {"count": 200, "max_atoms": 500}
    }

    PLATE = {"type": "ball", "center": [...], "radius": 1, "resolution": 8,
             "exclude": {"point": [...], "eps": 0.0}}
          | {"type": "csv", "path": "cloud.csv", "cell_size": null}

Per-point csv files (g, sigma, case I field) hold one ``value`` column with a
header row; ``inf`` is accepted where the quantity allows it. Relative paths
resolve against the config file's directory. The probe rebuilds the
touching-ball geometry at each level, so it ignores ``geometry``; in
regularized mode its ``eps`` is ``eps_cells`` cell sizes (default one half).
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import kernel as kern
from .errors import RieszError
from .geometry import (
    CondenserGeometry,
    PointCloud,
    exclude_near,
    generate_ball_cloud,
    load_cloud_csv,
    separated_balls,
    touching_balls,
)
from .measure import ExternalField, ProblemData, SignedMeasure, field_from_zeta, lebesgue_sigma
from .solver import SolveOptions, ProbeTemplate

SCHEMA_VERSION = 1


class ConfigError(RieszError):
    """Malformed or invalid configuration; ``where`` names the field."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def canonical_text(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_text(cfg).encode("utf-8")).hexdigest()


def load_config(path) -> "Config":
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    return Config(raw, path.parent)


def _get(d: dict, key: str, where: str, default=...):
    if key in d:
        return d[key]
    if default is ...:
        raise ConfigError(f"{where}.{key}" if where else key, "missing required field")
    return default


def _num(x, where: str, positive=False, integer=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(where, f"expected a number, got {x!r}")
    if integer and int(x) != x:
        raise ConfigError(where, f"expected an integer, got {x!r}")
    if not math.isfinite(x):
        raise ConfigError(where, "must be finite")
    if positive and not x > 0:
        raise ConfigError(where, f"must be positive, got {x!r}")
    return int(x) if integer else float(x)


def _pair(x, where: str) -> List[Any]:
    if not isinstance(x, list) or len(x) != 2:
        raise ConfigError(where, "expected a list of two entries, one per plate")
    return x


def _read_values(path: Path, where: str, allow_inf: bool) -> np.ndarray:
    vals = []
    try:
        with open(path, encoding="utf-8") as fh:
            rows = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(rows, None)
            if header is None or [h.strip() for h in header] != ["value"]:
                raise ConfigError(where, f"{path}: header must be 'value'")
            for i, row in enumerate(rows, start=2):
                if len(row) != 1:
                    raise ConfigError(where, f"{path}: row {i} must have one column")
                try:
                    v = float(row[0])
                except ValueError:
                    raise ConfigError(where, f"{path}: row {i} is not a number") from None
                if math.isnan(v) or (math.isinf(v) and not allow_inf):
                    raise ConfigError(where, f"{path}: row {i} must be finite")
                vals.append(v)
    except OSError as exc:
        raise ConfigError(where, f"cannot read {path}: {exc.strerror}") from None
    return np.asarray(vals)


class Config:
    """Parsed configuration with lazily built problem objects."""

    def __init__(self, raw: dict, base: Path = Path(".")):
        self.raw = raw
        self.base = Path(base)
        ver = _get(raw, "schema_version", "")
        if ver != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {ver!r}, expected {SCHEMA_VERSION}")
        self.dimension = _num(_get(raw, "dimension", "", 3), "dimension", positive=True, integer=True)
        self.alpha = _num(_get(raw, "alpha", ""), "alpha", positive=True)
        self.kernel_cfg = _get(raw, "kernel", "", {}) or {}
        # type-level invariants up front, so alpha >= n fails before any work
        self.mode = self.kernel_cfg.get("mode", "exact")
        if self.mode not in ("exact", "regularized"):
            raise ConfigError("kernel.mode", f"unknown mode {self.mode!r}")
        if not self.alpha < self.dimension:
            raise ConfigError("alpha", f"need 0 < alpha < n, got alpha={self.alpha} with n={self.dimension}")
        self._geometry: Optional[CondenserGeometry] = None

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def _path(self, p) -> Path:
        if not isinstance(p, str):
            raise ConfigError("path", f"expected a file path, got {p!r}")
        path = Path(p)
        return path if path.is_absolute() else self.base / path

    # -- kernel and geometry ----------------------------------------------

    def kernel(self, cell_size: Optional[float] = None) -> kern.KernelSpec:
        eps = self.kernel_cfg.get("eps")
        try:
            if self.mode == "exact":
                return kern.KernelSpec(self.alpha, self.dimension)
            if eps is None:
                if cell_size is None:
                    raise ConfigError("kernel.eps", "needed when the geometry has no cell size")
                return kern.KernelSpec.for_grid(self.alpha, self.dimension, cell_size)
            return kern.KernelSpec(self.alpha, self.dimension, "regularized",
                                   _num(eps, "kernel.eps", positive=True))
        except (ValueError, RieszError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("kernel", str(exc)) from None

    def _plate(self, spec: dict, where: str, label: str) -> PointCloud:
        if not isinstance(spec, dict):
            raise ConfigError(where, "plate must be an object")
        kind = _get(spec, "type", where)
        if kind == "ball":
            center = _get(spec, "center", where)
            cloud = generate_ball_cloud(
                center,
                _num(_get(spec, "radius", where), f"{where}.radius", positive=True),
                self.dimension,
                _num(_get(spec, "resolution", where), f"{where}.resolution", positive=True, integer=True),
                label=label,
            )
        elif kind == "csv":
            cs = spec.get("cell_size")
            cloud = load_cloud_csv(self._path(_get(spec, "path", where)),
                                   cell_size=None if cs is None else _num(cs, f"{where}.cell_size", positive=True),
                                   label=label)
        else:
            raise ConfigError(f"{where}.type", f"unknown plate type {kind!r}")
        if cloud.dimension != self.dimension:
            raise ConfigError(where, f"plate dimension {cloud.dimension} != {self.dimension}")
        ex = spec.get("exclude")
        if ex is not None:
            cloud = exclude_near(cloud, _get(ex, "point", f"{where}.exclude"),
                                 _num(ex.get("eps", 0.0), f"{where}.exclude.eps"))
        return cloud

    def geometry(self) -> CondenserGeometry:
        if self._geometry is None:
            try:
                self._geometry = self._build_geometry()
            except RieszError:
                raise
            except (ValueError, TypeError) as exc:
                raise ConfigError("geometry", str(exc)) from None
        return self._geometry

    def _build_geometry(self) -> CondenserGeometry:
        g = _get(self.raw, "geometry", "")
        kind = _get(g, "type", "geometry")
        if kind == "touching_balls":
            return touching_balls(
                _num(_get(g, "resolution", "geometry"), "geometry.resolution", positive=True, integer=True),
                exclusion=_num(g.get("exclusion", 0.0), "geometry.exclusion"),
                dimension=self.dimension,
            )
        if kind == "separated_balls":
            return separated_balls(
                _num(_get(g, "resolution", "geometry"), "geometry.resolution", positive=True, integer=True),
                _num(_get(g, "gap", "geometry"), "geometry.gap", positive=True),
                dimension=self.dimension,
            )
        if kind == "plates":
            plates = _pair(_get(g, "plates", "geometry"), "geometry.plates")
            pos = self._plate(plates[0], "geometry.plates[0]", "pos")
            neg = self._plate(plates[1], "geometry.plates[1]", "neg")
            return CondenserGeometry(pos, neg, touch_point=g.get("touch_point"))
        raise ConfigError("geometry.type", f"unknown geometry type {kind!r}")

    # -- problem ------------------------------------------------------------

    def _per_plate(self, key: str, allow_inf: bool):
        vals = _pair(_get(self.raw, key, ""), key)
        out = []
        for i, v in enumerate(vals):
            where = f"{key}[{i}]"
            if isinstance(v, dict):
                out.append(_read_values(self._path(_get(v, "csv", where)), where, allow_inf))
            else:
                out.append(_num(v, where, positive=True))
        return tuple(out)

    def masses(self):
        a = _pair(_get(self.raw, "a", ""), "a")
        return tuple(_num(x, f"a[{i}]", positive=True) for i, x in enumerate(a))

    def sigma(self, geom: CondenserGeometry):
        s = self.raw.get("sigma", {"type": "unconstrained"})
        kind = _get(s, "type", "sigma")
        if kind == "unconstrained":
            return None
        if kind == "lebesgue_multiple":
            c = _pair(_get(s, "c", "sigma"), "sigma.c")
            return lebesgue_sigma(geom, [_num(x, f"sigma.c[{i}]", positive=True) for i, x in enumerate(c)])
        if kind == "lebesgue_ratio":
            return lebesgue_sigma(geom, self.ratio_multiple(s.get("factor", 2.0)))
        if kind == "csv":
            paths = _pair(_get(s, "paths", "sigma"), "sigma.paths")
            return tuple(_read_values(self._path(p), f"sigma.paths[{i}]", True)
                         for i, p in enumerate(paths))
        raise ConfigError("sigma.type", f"unknown sigma type {kind!r}")

    def ratio_multiple(self, factor) -> tuple:
        """``c_i = factor * a_i / vol(unit ball)``."""
        factor = _num(factor, "sigma.factor", positive=True)
        n = self.dimension
        vol = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
        return tuple(factor * a / vol for a in self.masses())

    def field(self, geom: CondenserGeometry, spec: kern.KernelSpec) -> Optional[ExternalField]:
        f = self.raw.get("field", {"type": "zero"})
        kind = _get(f, "type", "field")
        if kind == "zero":
            return None
        if kind == "case1_csv":
            paths = _pair(_get(f, "paths", "field"), "field.paths")
            vals = [_read_values(self._path(p), f"field.paths[{i}]", True) for i, p in enumerate(paths)]
            return ExternalField(vals[0], vals[1])
        if kind == "case2_zeta":
            atoms = _get(f, "atoms", "field")
            if not isinstance(atoms, list) or not atoms:
                raise ConfigError("field.atoms", "expected a nonempty list of atoms")
            pts = np.asarray([_get(a, "point", f"field.atoms[{i}]") for i, a in enumerate(atoms)], float)
            w = [_num(_get(a, "weight", f"field.atoms[{i}]"), f"field.atoms[{i}].weight")
                 for i, a in enumerate(atoms)]
            sizes = [a.get("size", math.nan) for a in atoms]
            return field_from_zeta(SignedMeasure(pts, w, sizes), geom, spec)
        raise ConfigError("field.type", f"unknown field type {kind!r}")

    def problem(self) -> ProblemData:
        geom = self.geometry()
        spec = self.kernel(geom.plate_pos.cell_size)
        try:
            return ProblemData(geom, spec, self._per_plate("g", False), self.masses(),
                               self.sigma(geom), self.field(geom, spec))
        except (ValueError, TypeError) as exc:
            raise ConfigError("problem", str(exc)) from None

    def solve_options(self, seed: Optional[int] = None) -> SolveOptions:
        s = dict(self.raw.get("solver", {}) or {})
        known = {f.name for f in fields(SolveOptions)}
        extra = sorted(set(s) - known)
        if extra:
            raise ConfigError("solver", f"unknown option(s) {', '.join(extra)}")
        if seed is not None:
            s["seed"] = seed
        try:
            return SolveOptions(**s)
        except (TypeError, ValueError) as exc:
            raise ConfigError("solver", str(exc)) from None

    # -- experiment sections ---------------------------------------------------

    def capacity_cloud(self) -> PointCloud:
        c = self.raw.get("capacity", {}) or {}
        if "cloud" in c:
            return self._plate(c["cloud"], "capacity.cloud", "capacity")
        plate = c.get("plate", "pos")
        if plate not in ("pos", "neg"):
            raise ConfigError("capacity.plate", f"expected 'pos' or 'neg', got {plate!r}")
        geom = self.geometry()
        return geom.plate_pos if plate == "pos" else geom.plate_neg

    def kelvin_settings(self) -> Dict[str, int]:
        k = self.raw.get("kelvin", {}) or {}
        return {
            "count": _num(k.get("count", 200), "kelvin.count", positive=True, integer=True),
            "max_atoms": _num(k.get("max_atoms", 500), "kelvin.max_atoms", positive=True, integer=True),
        }

    def probe_settings(self) -> dict:
        p = self.raw.get("probe", {}) or {}
        levels = p.get("levels", [6, 8, 10, 12])
        if not isinstance(levels, list) or not levels:
            raise ConfigError("probe.levels", "expected a nonempty list of resolutions")
        rho = p.get("rho")
        return {
            "levels": [_num(L, "probe.levels", positive=True, integer=True) for L in levels],
            "constrained": bool(p.get("constrained", False)),
            "rho": None if rho is None else _num(rho, "probe.rho", positive=True),
            "exclusion_cells": _num(p.get("exclusion_cells", 1.0), "probe.exclusion_cells"),
            "sigma_factor": _num(p.get("sigma_factor", 2.0), "probe.sigma_factor", positive=True),
            "eps_cells": None if p.get("eps_cells") is None
            else _num(p["eps_cells"], "probe.eps_cells", positive=True),
        }

    def probe_template(self) -> ProbeTemplate:
        p = self.probe_settings()
        g = self._per_plate("g", False)
        if not all(isinstance(x, float) for x in g):
            raise ConfigError("g", "the probe needs constant g per plate")
        return ProbeTemplate(
            alpha=self.alpha,
            dimension=self.dimension,
            mode=self.mode,
            eps_cells=p["eps_cells"],
            g=g,
            a=self.masses(),
            sigma_multiple=self.ratio_multiple(p["sigma_factor"]),
            exclusion_cells=p["exclusion_cells"],
        )
