"""Measurement records: deterministic simulation of the sensing rig and dataset I/O.

The simulated rig places every object at the origin of the table plane (z = 0),
openings facing up, length along x. The top camera looks down -z and the side
camera looks down -x, both orthographic. Surfaces are sampled uniformly by
area; vertical inner walls have no orthographic footprint from above and are
never part of the top view.
"""
from __future__ import annotations

import json
import math
import re
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import (
    ApparatusLimitError,
    DatasetIOError,
    InvalidSpecError,
    SchemaError,
    UnsupportedShapeError,
    ValidationError,
)
from .geometry import PointCloud

SHAPES = ("box", "open_box", "cylinder", "open_cylinder", "sphere", "sheet")
OPEN_SHAPES = ("open_box", "open_cylinder")
ROUND_SHAPES = ("cylinder", "open_cylinder", "sphere")

PRESS_REACH_LIMIT_M = 0.20
RAMP_STEP_DEG = 0.5
DEFAULT_POINTS_PER_VIEW = 1000

_ID_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass(frozen=True)
class Dims:
    length: float
    width: float
    height: float
    wall: float | None = None
    base: float | None = None


@dataclass(frozen=True)
class Material:
    stiffness_mm: float
    friction_mu: float
    density_g_cm3: float
    name: str = ""


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    class_name: str
    shape: str
    dims: Dims
    material: Material
    noise_sigma_m: float = 0.0
    marker_sigma_m: float = 0.0

    def __post_init__(self):
        if isinstance(self.dims, dict):
            object.__setattr__(self, "dims", Dims(**self.dims))
        if isinstance(self.material, dict):
            object.__setattr__(self, "material", Material(**self.material))
        self.validate()

    def validate(self):
        d, m = self.dims, self.material
        if not _ID_RE.match(self.id or ""):
            raise InvalidSpecError(f"id {self.id!r} must match {_ID_RE.pattern}")
        if self.shape not in SHAPES:
            raise InvalidSpecError(f"{self.id}: unknown shape {self.shape!r}; expected one of {SHAPES}")
        for name in ("length", "width", "height"):
            v = getattr(d, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidSpecError(f"{self.id}: dims.{name} must be > 0, got {v!r}")
        if self.shape in OPEN_SHAPES:
            if d.wall is None or d.base is None:
                raise InvalidSpecError(f"{self.id}: open shapes need dims.wall and dims.base")
            if not 0 < 2 * d.wall < min(d.length, d.width):
                raise InvalidSpecError(f"{self.id}: dims.wall must satisfy 0 < 2*wall < min(length, width)")
            if not 0 < d.base < d.height:
                raise InvalidSpecError(f"{self.id}: dims.base must satisfy 0 < base < height")
        if self.shape in ("cylinder", "open_cylinder") and not math.isclose(d.length, d.width, rel_tol=1e-9):
            raise InvalidSpecError(f"{self.id}: cylinders need length == width (the diameter)")
        if self.shape == "sphere" and not (
            math.isclose(d.length, d.width, rel_tol=1e-9) and math.isclose(d.length, d.height, rel_tol=1e-9)
        ):
            raise InvalidSpecError(f"{self.id}: spheres need length == width == height (the diameter)")
        if not m.stiffness_mm >= 0:
            raise InvalidSpecError(f"{self.id}: material.stiffness_mm must be >= 0")
        if not m.friction_mu >= 0:
            raise InvalidSpecError(f"{self.id}: material.friction_mu must be >= 0")
        if not m.density_g_cm3 > 0:
            raise InvalidSpecError(f"{self.id}: material.density_g_cm3 must be > 0")
        if not (self.noise_sigma_m >= 0 and self.marker_sigma_m >= 0):
            raise InvalidSpecError(f"{self.id}: noise sigmas must be >= 0")

    @property
    def is_open(self) -> bool:
        return self.shape in OPEN_SHAPES

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dims"] = {k: v for k, v in out["dims"].items() if v is not None}
        return out


@dataclass(frozen=True)
class MeasurementRecord:
    instance_id: str
    class_name: str
    top_cloud: PointCloud
    side_cloud: PointCloud
    marker_reference_z_m: float
    marker_internal_z_m: float
    rim_top_z_m: float
    press_contact_z_m: float
    press_stop_z_m: float
    slide_angle_deg: float
    weight_g: int
    ramp_rolled: bool = False

    def __post_init__(self):
        problems = record_invariant_violations(asdict_shallow(self))
        if problems:
            field_name, msg = problems[0]
            raise SchemaError(msg, path=f"/{field_name}", source=self.instance_id)


def asdict_shallow(rec) -> dict:
    return {f: getattr(rec, f) for f in rec.__dataclass_fields__}


def record_invariant_violations(d: dict) -> list[tuple[str, str]]:
    out = []
    if not d["press_contact_z_m"] >= d["press_stop_z_m"]:
        out.append(("press_stop_z_m", "constraint press_contact_z_m >= press_stop_z_m violated"))
    if not 0 <= d["slide_angle_deg"] <= 90:
        out.append(("slide_angle_deg", f"range constraint 0 <= slide_angle_deg <= 90 violated ({d['slide_angle_deg']})"))
    w = d["weight_g"]
    if not (w >= 0 and float(w).is_integer()):
        out.append(("weight_g", f"weight_g must be a non-negative integer number of grams ({w})"))
    if not d["marker_internal_z_m"] >= d["marker_reference_z_m"]:
        out.append(("marker_internal_z_m", "constraint marker_internal_z_m >= marker_reference_z_m violated"))
    return out


# --------------------------------------------------------------------------
# simulation

def _rng(seed):
    return np.random.default_rng(seed)


def instance_seed(seed: int, instance_id: str) -> np.random.SeedSequence:
    """Per-instance stream that does not depend on corpus order."""
    return np.random.SeedSequence([int(seed), zlib.crc32(instance_id.encode("utf-8"))])


def _rect_xy(rng, n, x0, x1, y0, y1, z):
    return np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n), np.full(n, z)])


def _annulus(rng, n, r0, r1, z):
    r = np.sqrt(rng.uniform(r0 * r0, r1 * r1, n))
    phi = rng.uniform(0.0, 2 * math.pi, n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), np.full(n, z)])


def _top_patches(spec: ObjectSpec):
    """(area, sampler) pairs for every surface seen from +z."""
    d = spec.dims
    L, W, H = d.length, d.width, d.height
    if spec.shape in ("box", "sheet"):
        return [(L * W, lambda g, n: _rect_xy(g, n, -L / 2, L / 2, -W / 2, W / 2, H))]
    if spec.shape == "cylinder":
        R = L / 2
        return [(math.pi * R * R, lambda g, n: _annulus(g, n, 0.0, R, H))]
    if spec.shape == "open_box":
        t, b = d.wall, d.base
        xi, yi = L / 2 - t, W / 2 - t
        return [
            (L * t, lambda g, n: _rect_xy(g, n, -L / 2, L / 2, yi, W / 2, H)),
            (L * t, lambda g, n: _rect_xy(g, n, -L / 2, L / 2, -W / 2, -yi, H)),
            (t * (W - 2 * t), lambda g, n: _rect_xy(g, n, xi, L / 2, -yi, yi, H)),
            (t * (W - 2 * t), lambda g, n: _rect_xy(g, n, -L / 2, -xi, -yi, yi, H)),
            ((L - 2 * t) * (W - 2 * t), lambda g, n: _rect_xy(g, n, -xi, xi, -yi, yi, b)),
        ]
    if spec.shape == "open_cylinder":
        R, t, b = L / 2, d.wall, d.base
        return [
            (math.pi * (R * R - (R - t) ** 2), lambda g, n: _annulus(g, n, R - t, R, H)),
            (math.pi * (R - t) ** 2, lambda g, n: _annulus(g, n, 0.0, R - t, b)),
        ]
    r = L / 2

    def upper_hemisphere(g, n):
        # Archimedes: uniform height on a sphere is uniform in area
        h = g.uniform(0.0, r, n)
        phi = g.uniform(0.0, 2 * math.pi, n)
        rho = np.sqrt(np.maximum(r * r - h * h, 0.0))
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), r + h])

    return [(2 * math.pi * r * r, upper_hemisphere)]


def _side_patches(spec: ObjectSpec):
    """(area, sampler) pairs for every surface seen from +x."""
    d = spec.dims
    L, W, H = d.length, d.width, d.height
    if spec.shape in ("box", "sheet", "open_box"):
        def face(g, n):
            return np.column_stack([np.full(n, L / 2), g.uniform(-W / 2, W / 2, n), g.uniform(0.0, H, n)])
        return [(W * H, face)]
    if spec.shape in ("cylinder", "open_cylinder"):
        R = L / 2

        def half_shell(g, n):
            th = g.uniform(-math.pi / 2, math.pi / 2, n)
            return np.column_stack([R * np.cos(th), R * np.sin(th), g.uniform(0.0, H, n)])
        return [(math.pi * R * H, half_shell)]
    r = L / 2

    def front_hemisphere(g, n):
        a = g.uniform(0.0, r, n)
        phi = g.uniform(0.0, 2 * math.pi, n)
        rho = np.sqrt(np.maximum(r * r - a * a, 0.0))
        return np.column_stack([a, rho * np.cos(phi), r + rho * np.sin(phi)])
    return [(2 * math.pi * r * r, front_hemisphere)]


def _sample(patches, n, rng, sigma):
    areas = np.array([a for a, _ in patches], dtype=float)
    counts = rng.multinomial(n, areas / areas.sum())
    parts = [sampler(rng, int(c)) for (_, sampler), c in zip(patches, counts) if c > 0]
    pts = np.vstack(parts)
    if sigma > 0:
        pts = pts + rng.normal(0.0, sigma, pts.shape)
    return PointCloud(pts)


def simulate_views(spec: ObjectSpec, points_per_view: int = DEFAULT_POINTS_PER_VIEW, seed=0):
    """Top (+z) and side (+x) clouds of ``spec`` with per-axis Gaussian jitter."""
    if points_per_view < 100:
        raise InvalidSpecError("points_per_view must be >= 100")
    spec.validate()
    rng = _rng(seed)
    top = _sample(_top_patches(spec), points_per_view, rng, spec.noise_sigma_m)
    side = _sample(_side_patches(spec), points_per_view, rng, spec.noise_sigma_m)
    return top, side


def simulate_press(spec: ObjectSpec) -> tuple[float, float]:
    """Arm heights at first contact and at the effort threshold."""
    h = spec.dims.height
    if h >= PRESS_REACH_LIMIT_M:
        raise ApparatusLimitError(
            f"{spec.id}: height {h} m exceeds the press reach limit of {PRESS_REACH_LIMIT_M} m"
        )
    return h, h - min(spec.material.stiffness_mm / 1000.0, h)


def simulate_ramp(spec: ObjectSpec, step_deg: float = RAMP_STEP_DEG) -> float:
    """Ramp angle at which the object starts to slide, on the actuator's step grid."""
    if spec.shape == "sphere":
        raise UnsupportedShapeError(f"{spec.id}: spheres roll instead of sliding on the ramp")
    onset = math.degrees(math.atan(spec.material.friction_mu))
    # the ramp stops at the first step at or beyond the onset angle
    steps = math.ceil(onset / step_deg - 1e-9)
    return min(steps * step_deg, 90.0)


def shell_volume_m3(spec: ObjectSpec) -> float:
    d = spec.dims
    L, W, H = d.length, d.width, d.height
    if spec.shape in ("box", "sheet"):
        return L * W * H
    if spec.shape == "cylinder":
        return math.pi * (L / 2) ** 2 * H
    if spec.shape == "sphere":
        return 4.0 / 3.0 * math.pi * (L / 2) ** 3
    if spec.shape == "open_box":
        return L * W * H - (L - 2 * d.wall) * (W - 2 * d.wall) * (H - d.base)
    R = L / 2
    return math.pi * R * R * H - math.pi * (R - d.wall) ** 2 * (H - d.base)


def simulate_scale(spec: ObjectSpec) -> int:
    """Scale reading in whole grams."""
    return int(round(shell_volume_m3(spec) * 1e6 * spec.material.density_g_cm3))


def simulate_record(spec: ObjectSpec, seed: int = 42, points_per_view: int = DEFAULT_POINTS_PER_VIEW) -> MeasurementRecord:
    ss = instance_seed(seed, spec.id)
    view_seed, marker_seed = ss.spawn(2)
    top, side = simulate_views(spec, points_per_view, view_seed)
    contact, stop = simulate_press(spec)
    try:
        angle, rolled = simulate_ramp(spec), False
    except UnsupportedShapeError:
        # a sphere rolls off as soon as the ramp tilts; the rig logs the first step
        angle, rolled = 0.0, True

    h = spec.dims.height
    rim, internal = h, (spec.dims.base if spec.is_open else h)
    if spec.marker_sigma_m > 0:
        g = _rng(marker_seed)
        rim += float(g.normal(0.0, spec.marker_sigma_m))
        internal += float(g.normal(0.0, spec.marker_sigma_m))
        internal = max(internal, 0.0)
    return MeasurementRecord(
        instance_id=spec.id,
        class_name=spec.class_name,
        top_cloud=top,
        side_cloud=side,
        marker_reference_z_m=0.0,
        marker_internal_z_m=internal,
        rim_top_z_m=rim,
        press_contact_z_m=contact,
        press_stop_z_m=stop,
        slide_angle_deg=angle,
        weight_g=simulate_scale(spec),
        ramp_rolled=rolled,
    )


# --------------------------------------------------------------------------
# file formats

SPEC_SCHEMA = {
    "type": "object",
    "required": ["id", "class_name", "shape", "dims", "material"],
    "properties": {
        "id": {"type": "string", "pattern": _ID_RE.pattern},
        "class_name": {"type": "string", "minLength": 1},
        "shape": {"enum": list(SHAPES)},
        "dims": {
            "type": "object",
            "required": ["length", "width", "height"],
            "properties": {k: {"type": "number"} for k in ("length", "width", "height", "wall", "base")},
            "additionalProperties": False,
        },
        "material": {
            "type": "object",
            "required": ["stiffness_mm", "friction_mu", "density_g_cm3"],
            "properties": {
                "stiffness_mm": {"type": "number"},
                "friction_mu": {"type": "number"},
                "density_g_cm3": {"type": "number"},
                "name": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "noise_sigma_m": {"type": "number"},
        "marker_sigma_m": {"type": "number"},
    },
    "additionalProperties": False,
}

RECORD_SCHEMA = {
    "type": "object",
    "required": [
        "instance_id", "class_name", "top_cloud", "side_cloud", "marker_reference_z_m",
        "marker_internal_z_m", "rim_top_z_m", "press_contact_z_m", "press_stop_z_m",
        "slide_angle_deg", "weight_g",
    ],
    "properties": {
        "instance_id": {"type": "string", "pattern": _ID_RE.pattern},
        "class_name": {"type": "string", "minLength": 1},
        "top_cloud": {"type": "string"},
        "side_cloud": {"type": "string"},
        "marker_reference_z_m": {"type": "number"},
        "marker_internal_z_m": {"type": "number"},
        "rim_top_z_m": {"type": "number"},
        "press_contact_z_m": {"type": "number"},
        "press_stop_z_m": {"type": "number"},
        "slide_angle_deg": {"type": "number", "minimum": 0, "maximum": 90},
        "weight_g": {"type": "integer", "minimum": 0},
        "ramp_rolled": {"type": "boolean"},
    },
    "additionalProperties": False,
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def check_schema(doc, schema, source=None, prefix=""):
    """Raise ``SchemaError`` for the first violation, located by JSON pointer."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        constraint = f"{e.validator} {e.validator_value!r}" if e.validator != "required" else "required"
        raise SchemaError(f"{e.message} (constraint: {constraint})", path=prefix + _pointer(e.absolute_path), source=source)


def load_object_specs(path) -> list[ObjectSpec]:
    """Read a JSON array of object specs; errors name the offending index."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DatasetIOError(f"cannot read spec file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e}", source=str(path)) from e
    return specs_from_json(doc, source=str(path))


def specs_from_json(doc, source=None) -> list[ObjectSpec]:
    if not isinstance(doc, list):
        raise SchemaError("expected a JSON array of object specs", source=source)
    specs, seen = [], set()
    for i, item in enumerate(doc):
        check_schema(item, SPEC_SCHEMA, source=source, prefix=f"/{i}")
        try:
            spec = ObjectSpec(**item)
        except InvalidSpecError as e:
            raise InvalidSpecError(f"spec entry {i}: {e}") from e
        if spec.id in seen:
            raise InvalidSpecError(f"spec entry {i}: duplicate instance id {spec.id!r}")
        seen.add(spec.id)
        specs.append(spec)
    return specs


def write_xyz(cloud: PointCloud, path) -> None:
    lines = [f"{x!r} {y!r} {z!r}" for x, y, z in cloud.points.tolist()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_xyz(path) -> PointCloud:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot read cloud file {path}: {e}") from e
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise SchemaError(f"line {lineno}: expected 'x y z', got {line!r}", source=str(path))
        try:
            rows.append([float(p) for p in parts])
        except ValueError as e:
            raise SchemaError(f"line {lineno}: {e}", source=str(path)) from e
    try:
        return PointCloud(np.array(rows, dtype=float).reshape(-1, 3))
    except ValueError as e:
        raise SchemaError(str(e), source=str(path)) from e


def record_to_json(rec: MeasurementRecord, top_rel: str, side_rel: str) -> dict:
    d = asdict_shallow(rec)
    d["top_cloud"], d["side_cloud"] = top_rel, side_rel
    return d


def write_record(rec: MeasurementRecord, out_dir) -> None:
    out_dir = Path(out_dir)
    (out_dir / "clouds").mkdir(parents=True, exist_ok=True)
    top_rel = f"clouds/{rec.instance_id}_top.xyz"
    side_rel = f"clouds/{rec.instance_id}_side.xyz"
    write_xyz(rec.top_cloud, out_dir / top_rel)
    write_xyz(rec.side_cloud, out_dir / side_rel)
    doc = record_to_json(rec, top_rel, side_rel)
    (out_dir / f"{rec.instance_id}.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_record(path) -> MeasurementRecord:
    path = Path(path)
    src = str(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DatasetIOError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e}", source=src) from e
    check_schema(doc, RECORD_SCHEMA, source=src)
    problems = record_invariant_violations(doc)
    if problems:
        field_name, msg = problems[0]
        raise SchemaError(msg, path=f"/{field_name}", source=src)
    base = path.parent
    clouds = {}
    for key in ("top_cloud", "side_cloud"):
        p = base / doc[key]
        if not p.is_file():
            raise DatasetIOError(f"{src}: {key} file {p} not found")
        clouds[key] = read_xyz(p)
    doc = dict(doc, **clouds)
    doc["weight_g"] = int(doc["weight_g"])
    return MeasurementRecord(**doc)


def ingest_dataset(path) -> list[MeasurementRecord]:
    """All records of a dataset directory, ordered by instance id.

    Files whose name starts with an underscore (the simulation manifest) are
    not records.
    """
    path = Path(path)
    if not path.is_dir():
        raise DatasetIOError(f"dataset directory {path} does not exist")
    records = [read_record(p) for p in sorted(path.glob("*.json")) if not p.name.startswith("_")]
    records.sort(key=lambda r: r.instance_id)
    ids = [r.instance_id for r in records]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ValidationError(f"duplicate instance ids in {path}: {dupes}")
    return records
