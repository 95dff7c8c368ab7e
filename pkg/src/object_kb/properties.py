"""Physical property extraction and functional property derivation."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

from . import geometry
from .errors import EmptyInputError, KBError
from .sensing import MeasurementRecord, instance_seed


@dataclass(frozen=True)
class ExtractionConfig:
    delta0_mm: float = 10.0
    threshold_m: float = geometry.DEFAULT_THRESHOLD_M
    iterations: int = geometry.DEFAULT_ITERATIONS
    seed: int = 42


@dataclass(frozen=True)
class PhysicalProfile:
    size: tuple[float, float, float]
    flatness: float
    hollowness: float
    rigidity: float
    roughness_deg: float
    weight_g: float
    deformation_mm: float = 0.0

    def __post_init__(self):
        for name in ("flatness", "hollowness", "rigidity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.roughness_deg <= 90.0:
            raise ValueError(f"roughness_deg must lie in [0, 90], got {self.roughness_deg}")
        if self.weight_g < 0 or self.deformation_mm < 0 or min(self.size) < 0:
            raise ValueError("size, weight_g and deformation_mm must be non-negative")

    @property
    def footprint_m2(self) -> float:
        return self.size[0] * self.size[1]

    @property
    def volume_m3(self) -> float:
        return self.size[0] * self.size[1] * self.size[2]


@dataclass(frozen=True)
class FunctionalProfile:
    support: float
    containment: float
    movability: float
    blockage: float


@dataclass(frozen=True)
class NormalizationContext:
    """Corpus-wide (min, max) of every scalar that gets min-max scaled."""

    footprint_m2: tuple[float, float]
    volume_m3: tuple[float, float]
    weight_g: tuple[float, float]
    roughness_deg: tuple[float, float]

    def scale(self, name: str, value: float) -> float:
        lo, hi = getattr(self, name)
        if hi == lo:
            return 0.5
        return min(max((value - lo) / (hi - lo), 0.0), 1.0)

    def to_dict(self) -> dict:
        return {f.name: {"min": getattr(self, f.name)[0], "max": getattr(self, f.name)[1]} for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> NormalizationContext:
        return cls(**{f.name: (d[f.name]["min"], d[f.name]["max"]) for f in fields(cls)})


def rigidity_from_deformation(deformation_mm: float, delta0_mm: float = 10.0) -> float:
    return math.exp(-deformation_mm / delta0_mm)


def extract_physical(record: MeasurementRecord, config: ExtractionConfig = ExtractionConfig()) -> PhysicalProfile:
    try:
        box = geometry.bounding_box(record.side_cloud.merged(record.top_cloud))
        flat = geometry.flatness_ratio(
            record.top_cloud,
            config.threshold_m,
            config.iterations,
            instance_seed(config.seed, record.instance_id),
        )
        hollow = geometry.marker_depth_ratio(
            record.rim_top_z_m, record.marker_internal_z_m, record.marker_reference_z_m
        )
    except KBError as e:
        raise type(e)(f"{record.instance_id}: {e}") from e
    deformation = (record.press_contact_z_m - record.press_stop_z_m) * 1000.0
    return PhysicalProfile(
        size=(box.length_m, box.width_m, box.height_m),
        flatness=flat,
        hollowness=hollow,
        rigidity=rigidity_from_deformation(deformation, config.delta0_mm),
        roughness_deg=float(record.slide_angle_deg),
        weight_g=float(record.weight_g),
        deformation_mm=deformation,
    )


def normalize(profiles: list[PhysicalProfile]) -> NormalizationContext:
    if not profiles:
        raise EmptyInputError("normalize: no profiles")

    def span(values):
        values = list(values)
        return (min(values), max(values))

    return NormalizationContext(
        footprint_m2=span(p.footprint_m2 for p in profiles),
        volume_m3=span(p.volume_m3 for p in profiles),
        weight_g=span(p.weight_g for p in profiles),
        roughness_deg=span(p.roughness_deg for p in profiles),
    )


# Support and containment use geometric means so that a missing prerequisite
# (zero rigidity, no cavity) vetoes the affordance; weight and roughness trade
# off against each other, so movability uses an arithmetic mean.

def derive_support(p: PhysicalProfile, ctx: NormalizationContext) -> float:
    area = ctx.scale("footprint_m2", p.footprint_m2)
    return (p.rigidity * p.flatness * area) ** (1.0 / 3.0)


def derive_containment(p: PhysicalProfile, ctx: NormalizationContext) -> float:
    return math.sqrt(p.hollowness * ctx.scale("volume_m3", p.volume_m3))


def derive_movability(p: PhysicalProfile, ctx: NormalizationContext) -> float:
    """Ease of moving the object: 1 is effortless, 0 immovable."""
    weight = ctx.scale("weight_g", p.weight_g)
    return 1.0 - (weight + p.roughness_deg / 90.0) / 2.0


def derive_blockage(movability: float) -> float:
    return 1.0 - movability


def derive_functional(p: PhysicalProfile, ctx: NormalizationContext) -> FunctionalProfile:
    movability = derive_movability(p, ctx)
    return FunctionalProfile(
        support=derive_support(p, ctx),
        containment=derive_containment(p, ctx),
        movability=movability,
        blockage=derive_blockage(movability),
    )


PHYSICAL_PROPERTIES = ("size", "flatness", "hollowness", "rigidity", "roughness", "weight")
FUNCTIONAL_PROPERTIES = ("support", "containment", "movability", "blockage")

# property name -> the retained scalar that represents it
PROPERTY_SCALAR = {
    "size": "volume_m3",
    "flatness": "flatness",
    "hollowness": "hollowness",
    "rigidity": "rigidity",
    "roughness": "roughness_deg",
    "weight": "weight_g",
    "support": "support",
    "containment": "containment",
    "movability": "movability",
    "blockage": "blockage",
}

PHYSICAL_FEATURES = (
    "length_m", "width_m", "height_m", "flatness", "hollowness", "rigidity", "roughness_deg", "weight_g",
)
FUNCTIONAL_FEATURES = FUNCTIONAL_PROPERTIES


def instance_scalars(p: PhysicalProfile, f: FunctionalProfile) -> dict[str, float]:
    """Every scalar kept next to an instance's symbols in the knowledge base."""
    return {
        "length_m": p.size[0],
        "width_m": p.size[1],
        "height_m": p.size[2],
        "footprint_m2": p.footprint_m2,
        "volume_m3": p.volume_m3,
        "flatness": p.flatness,
        "hollowness": p.hollowness,
        "deformation_mm": p.deformation_mm,
        "rigidity": p.rigidity,
        "roughness_deg": p.roughness_deg,
        "weight_g": p.weight_g,
        "support": f.support,
        "containment": f.containment,
        "movability": f.movability,
        "blockage": f.blockage,
    }
