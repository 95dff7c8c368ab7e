"""Sub-categorization, conceptualization and the JSON knowledge base.

Sub-categorization clusters one property's scalars into ``k`` ordered
qualitative labels. Conceptualization folds the labels of every instance of a
class into marginal label proportions and pairwise joint frequencies.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import properties as props
from ._io import atomic_write_text
from .analysis import kmeans
from .corpus import class_label_map
from .errors import DatasetIOError, EmptyInputError, InsufficientDataError, NotFoundError, NumericError, SchemaError
from .sensing import MeasurementRecord, check_schema

KB_VERSION = "1.0"
SUM_TOL = 1e-9

DEFAULT_VOCABULARIES = {
    "size": ("small", "medium", "large"),
    "flatness": ("curved", "mixed", "flat"),
    "hollowness": ("solid", "dented", "hollow"),
    "rigidity": ("soft", "medium", "rigid"),
    "roughness": ("smooth", "medium", "rough"),
    "weight": ("light", "medium", "heavy"),
    "support": ("low", "medium", "high"),
    "containment": ("low", "medium", "high"),
    "movability": ("low", "medium", "high"),
    "blockage": ("low", "medium", "high"),
}
DEFAULT_PROPERTIES = props.PHYSICAL_PROPERTIES + props.FUNCTIONAL_PROPERTIES


@dataclass(frozen=True)
class QualitativeModel:
    property_name: str
    k: int
    centroids: tuple[float, ...]
    labels: tuple[str, ...]
    orientation: str = "ascending"
    scope: str = "corpus"
    scalar: str = ""

    def label_for(self, value: float) -> str:
        c = np.asarray(self.centroids)
        i = int(np.argmin(np.abs(c - value)))  # ties -> lower centroid
        return self.labels[i] if self.orientation == "ascending" else self.labels[self.k - 1 - i]

    def to_dict(self) -> dict:
        return {
            "property": self.property_name,
            "scope": self.scope,
            "scalar": self.scalar,
            "k": self.k,
            "orientation": self.orientation,
            "centroids": list(self.centroids),
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> QualitativeModel:
        return cls(
            property_name=d["property"], k=d["k"], centroids=tuple(d["centroids"]), labels=tuple(d["labels"]),
            orientation=d["orientation"], scope=d["scope"], scalar=d["scalar"],
        )


@dataclass(frozen=True)
class InstanceSymbols:
    instance_id: str
    class_name: str
    symbols: dict[str, str]
    scalars: dict[str, float] = field(default_factory=dict)
    class_label: int = -1


@dataclass(frozen=True)
class JointEntry:
    labels: tuple[str, str]
    count: int
    proportion: float


@dataclass(frozen=True)
class JointDistribution:
    properties: tuple[str, str]
    entries: tuple[JointEntry, ...]


@dataclass(frozen=True)
class ClassConcept:
    class_name: str
    instance_count: int
    marginals: dict[str, dict[str, float]]
    joints: tuple[JointDistribution, ...] = ()
    class_label: int = -1

    def joint(self, a: str, b: str) -> dict[tuple[str, str], float]:
        for j in self.joints:
            if j.properties == (a, b):
                return {e.labels: e.proportion for e in j.entries}
            if j.properties == (b, a):
                return {e.labels[::-1]: e.proportion for e in j.entries}
        raise KeyError((a, b))


@dataclass
class KnowledgeBase:
    version: str = KB_VERSION
    normalization: props.NormalizationContext | None = None
    models: list[QualitativeModel] = field(default_factory=list)
    instances: list[InstanceSymbols] = field(default_factory=list)
    classes: list[ClassConcept] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def concept(self, class_name: str) -> ClassConcept:
        for c in self.classes:
            if c.class_name == class_name:
                return c
        raise NotFoundError(
            f"unknown class {class_name!r}; known classes: {', '.join(c.class_name for c in self.classes)}"
        )

    def model(self, property_name: str, class_name: str | None = None) -> QualitativeModel:
        for m in self.models:
            if m.property_name == property_name and m.scope in ("corpus", class_name):
                return m
        raise KeyError((property_name, class_name))


@dataclass(frozen=True)
class BuildConfig:
    k: int = 3
    k_per_property: dict = field(default_factory=dict)
    scope: str = "corpus"
    seed: int = 42
    delta0_mm: float = 10.0
    threshold_m: float = 0.005
    iterations: int = 500
    properties: tuple[str, ...] = DEFAULT_PROPERTIES
    vocabularies: dict = field(default_factory=dict)

    @property
    def extraction(self) -> props.ExtractionConfig:
        return props.ExtractionConfig(self.delta0_mm, self.threshold_m, self.iterations, self.seed)

    def k_for(self, prop: str) -> int:
        return int(self.k_per_property.get(prop, self.k))

    def vocabulary(self, prop: str) -> tuple[str, ...]:
        k = self.k_for(prop)
        vocab = tuple(self.vocabularies.get(prop, DEFAULT_VOCABULARIES.get(prop, ())))
        if len(vocab) == k:
            return vocab
        if prop in self.vocabularies:
            raise ValueError(f"vocabulary for {prop} has {len(vocab)} labels, k is {k}")
        if 1 <= k < len(vocab):
            return spread_labels(vocab, k)
        return tuple(f"{prop}_{i + 1}" for i in range(k))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["properties"] = list(self.properties)
        d["vocabularies"] = {p: list(self.vocabulary(p)) for p in self.properties}
        return d


def spread_labels(vocab, m: int) -> tuple[str, ...]:
    """``m`` labels spread evenly over an ordered vocabulary (the middle one if m == 1)."""
    K = len(vocab)
    if m >= K:
        return tuple(vocab)
    if m == 1:
        return (vocab[K // 2],)
    return tuple(vocab[round(i * (K - 1) / (m - 1))] for i in range(m))


# --------------------------------------------------------------------------
# sub-categorization

def subcategorize(values, k: int, labels, orientation: str = "ascending", seed=0, property_name: str = "", scope: str = "corpus"):
    """Cluster ``(instance_id, scalar)`` pairs into ``k`` ordered qualitative labels.

    Returns the model (centroids ascending) and a dict instance_id -> label.
    Needs at least ``k`` distinct values so every label owns a distinct centroid.
    """
    labels = tuple(labels)
    if len(labels) != k:
        raise ValueError(f"{len(labels)} labels given for k={k}")
    if orientation not in ("ascending", "descending"):
        raise ValueError("orientation must be 'ascending' or 'descending'")
    if len(values) < k:
        raise InsufficientDataError(f"subcategorize {property_name}: {len(values)} values for k={k}")
    ids = [i for i, _ in values]
    x = np.array([v for _, v in values], dtype=float)
    if len(np.unique(x)) < k:
        raise InsufficientDataError(f"subcategorize {property_name}: fewer than k={k} distinct values")
    report = kmeans(x, k, seed=seed)
    centroids = tuple(sorted(float(c) for c in report.centroids[:, 0]))
    if any(b <= a for a, b in zip(centroids, centroids[1:])):
        raise NumericError(f"subcategorize {property_name}: clustering produced coincident centroids")
    model = QualitativeModel(property_name, k, centroids, labels, orientation, scope)
    return model, {i: model.label_for(v) for i, v in zip(ids, x.tolist())}


# --------------------------------------------------------------------------
# conceptualization

def conceptualize(instances, class_name: str, properties=None, vocabularies=None) -> ClassConcept:
    members = [s for s in instances if s.class_name == class_name]
    if not members:
        raise EmptyInputError(f"conceptualize: no instances of class {class_name!r}")
    if properties is None:
        properties = list(members[0].symbols)
    vocabularies = vocabularies or {}
    n = len(members)
    marginals = {}
    for p in properties:
        counts = Counter(s.symbols[p] for s in members)
        vocab = list(vocabularies.get(p, ())) + sorted(set(counts) - set(vocabularies.get(p, ())))
        marginals[p] = {lab: counts.get(lab, 0) / n for lab in vocab}
    joints = []
    for a, b in itertools.combinations(properties, 2):
        counts = Counter((s.symbols[a], s.symbols[b]) for s in members)
        entries = tuple(JointEntry(pair, c, c / n) for pair, c in sorted(counts.items()))
        joints.append(JointDistribution((a, b), entries))
    label = members[0].class_label
    return ClassConcept(class_name, n, marginals, tuple(joints), label)


# --------------------------------------------------------------------------
# assembly

def build_kb(records: list[MeasurementRecord], config: BuildConfig = BuildConfig()) -> KnowledgeBase:
    if config.scope not in ("corpus", "class"):
        raise ValueError("scope must be 'corpus' or 'class'")
    if not records:
        raise EmptyInputError("build_kb: no measurement records")
    records = sorted(records, key=lambda r: r.instance_id)
    physical = [props.extract_physical(r, config.extraction) for r in records]
    ctx = props.normalize(physical)
    functional = [props.derive_functional(p, ctx) for p in physical]
    scalars = {r.instance_id: props.instance_scalars(p, f) for r, p, f in zip(records, physical, functional)}
    class_of = {r.instance_id: r.class_name for r in records}
    labels_of = class_label_map(class_of.values())

    if config.scope == "corpus":
        groups = {"corpus": [r.instance_id for r in records]}
    else:
        groups = {}
        for r in records:
            groups.setdefault(r.class_name, []).append(r.instance_id)

    models, symbols = [], {iid: {} for iid in class_of}
    for prop in config.properties:
        scalar = props.PROPERTY_SCALAR[prop]
        vocab = config.vocabulary(prop)
        for scope, ids in sorted(groups.items()):
            values = [(iid, scalars[iid][scalar]) for iid in ids]
            k_eff = min(len(vocab), len({v for _, v in values}))
            model, assigned = subcategorize(
                values, k_eff, spread_labels(vocab, k_eff), seed=config.seed, property_name=prop, scope=scope
            )
            models.append(QualitativeModel(model.property_name, model.k, model.centroids, model.labels,
                                           model.orientation, scope, scalar))
            for iid, lab in assigned.items():
                symbols[iid][prop] = lab

    instances = [
        InstanceSymbols(iid, class_of[iid], symbols[iid], scalars[iid], labels_of[class_of[iid]])
        for iid in sorted(class_of)
    ]
    classes = []
    for name in sorted(set(class_of.values()), key=lambda c: (labels_of[c], c)):
        vocab = {m.property_name: m.labels for m in models if m.scope in ("corpus", name)}
        classes.append(conceptualize(instances, name, config.properties, vocab))

    kb = KnowledgeBase(KB_VERSION, ctx, models, instances, classes, {"config": config.to_dict()})
    validate_kb_dict(kb_to_dict(kb))
    return kb


# --------------------------------------------------------------------------
# serialization

def kb_to_dict(kb: KnowledgeBase) -> dict:
    return {
        "version": kb.version,
        "metadata": kb.metadata,
        "normalization": kb.normalization.to_dict() if kb.normalization else None,
        "models": [m.to_dict() for m in kb.models],
        "instances": [
            {
                "instance_id": s.instance_id,
                "class_name": s.class_name,
                "class_label": s.class_label,
                "symbols": dict(s.symbols),
                "scalars": dict(s.scalars),
            }
            for s in kb.instances
        ],
        "classes": [
            {
                "class_name": c.class_name,
                "class_label": c.class_label,
                "instance_count": c.instance_count,
                "marginals": {p: dict(d) for p, d in c.marginals.items()},
                "joints": [
                    {
                        "properties": list(j.properties),
                        "entries": [
                            {"labels": list(e.labels), "count": e.count, "proportion": e.proportion}
                            for e in j.entries
                        ],
                    }
                    for j in c.joints
                ],
            }
            for c in kb.classes
        ],
    }


def kb_from_dict(d: dict) -> KnowledgeBase:
    return KnowledgeBase(
        version=d["version"],
        metadata=d.get("metadata", {}),
        normalization=props.NormalizationContext.from_dict(d["normalization"]) if d["normalization"] else None,
        models=[QualitativeModel.from_dict(m) for m in d["models"]],
        instances=[
            InstanceSymbols(s["instance_id"], s["class_name"], dict(s["symbols"]), dict(s["scalars"]), s["class_label"])
            for s in d["instances"]
        ],
        classes=[
            ClassConcept(
                c["class_name"],
                c["instance_count"],
                {p: dict(m) for p, m in c["marginals"].items()},
                tuple(
                    JointDistribution(
                        tuple(j["properties"]),
                        tuple(JointEntry(tuple(e["labels"]), e["count"], e["proportion"]) for e in j["entries"]),
                    )
                    for j in c["joints"]
                ),
                c["class_label"],
            )
            for c in d["classes"]
        ],
    )


_NUM = {"type": "number"}
_MINMAX = {"type": "object", "required": ["min", "max"], "properties": {"min": _NUM, "max": _NUM},
           "additionalProperties": False}

KB_SCHEMA = {
    "type": "object",
    "required": ["version", "normalization", "models", "instances", "classes"],
    "properties": {
        "version": {"type": "string"},
        "metadata": {"type": "object"},
        "normalization": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["footprint_m2", "volume_m3", "weight_g", "roughness_deg"],
                    "properties": {k: _MINMAX for k in ("footprint_m2", "volume_m3", "weight_g", "roughness_deg")},
                    "additionalProperties": False,
                },
            ]
        },
        "models": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["property", "scope", "scalar", "k", "orientation", "centroids", "labels"],
                "properties": {
                    "property": {"type": "string"},
                    "scope": {"type": "string"},
                    "scalar": {"type": "string"},
                    "k": {"type": "integer", "minimum": 1},
                    "orientation": {"enum": ["ascending", "descending"]},
                    "centroids": {"type": "array", "items": _NUM},
                    "labels": {"type": "array", "items": {"type": "string"}},
                },
                "additionalProperties": False,
            },
        },
        "instances": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["instance_id", "class_name", "class_label", "symbols", "scalars"],
                "properties": {
                    "instance_id": {"type": "string"},
                    "class_name": {"type": "string"},
                    "class_label": {"type": "integer"},
                    "symbols": {"type": "object", "additionalProperties": {"type": "string"}},
                    "scalars": {"type": "object", "additionalProperties": _NUM},
                },
                "additionalProperties": False,
            },
        },
        "classes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["class_name", "class_label", "instance_count", "marginals", "joints"],
                "properties": {
                    "class_name": {"type": "string"},
                    "class_label": {"type": "integer"},
                    "instance_count": {"type": "integer", "minimum": 1},
                    "marginals": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "additionalProperties": {"type": "number", "minimum": 0},
                        },
                    },
                    "joints": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["properties", "entries"],
                            "properties": {
                                "properties": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                                "entries": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["labels", "count", "proportion"],
                                        "properties": {
                                            "labels": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                                            "count": {"type": "integer", "minimum": 0},
                                            "proportion": {"type": "number", "minimum": 0},
                                        },
                                        "additionalProperties": False,
                                    },
                                },
                            },
                            "additionalProperties": False,
                        },
                    },
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def _sum_check(total, path, source, what):
    if not abs(total - 1.0) <= SUM_TOL:
        raise SchemaError(
            f"distribution-sum invariant violated: {what} sums to {total!r}, expected 1 +/- {SUM_TOL}",
            path=path, source=source,
        )


def validate_kb_dict(d: dict, source=None) -> None:
    """Schema plus cross-field invariants of a KB document."""
    check_schema(d, KB_SCHEMA, source=source)
    models = {}
    for i, m in enumerate(d["models"]):
        p = f"/models/{i}"
        if not m["k"] == len(m["labels"]) == len(m["centroids"]):
            raise SchemaError("k must equal the number of labels and centroids", path=p, source=source)
        c = m["centroids"]
        if any(b <= a for a, b in zip(c, c[1:])):
            raise SchemaError("centroids must be strictly ascending", path=f"{p}/centroids", source=source)
        models[(m["property"], m["scope"])] = set(m["labels"])

    class_names = {c["class_name"] for c in d["classes"]}
    for i, s in enumerate(d["instances"]):
        p = f"/instances/{i}"
        if s["class_name"] not in class_names:
            raise SchemaError(f"class {s['class_name']!r} has no class entry", path=f"{p}/class_name", source=source)
        for prop, lab in s["symbols"].items():
            vocab = models.get((prop, "corpus"), models.get((prop, s["class_name"])))
            if vocab is None or lab not in vocab:
                raise SchemaError(f"label {lab!r} not defined by any {prop} model", path=f"{p}/symbols/{prop}", source=source)

    for i, c in enumerate(d["classes"]):
        p = f"/classes/{i}"
        for prop, dist in c["marginals"].items():
            _sum_check(math.fsum(dist.values()), f"{p}/marginals/{prop}", source, f"marginal {prop}")
        for j, joint in enumerate(c["joints"]):
            jp = f"{p}/joints/{j}"
            _sum_check(math.fsum(e["proportion"] for e in joint["entries"]), jp, source, "joint distribution")
            a, b = joint["properties"]
            for axis, prop in enumerate((a, b)):
                if prop not in c["marginals"]:
                    raise SchemaError(f"joint refers to property {prop!r} without a marginal", path=jp, source=source)
                summed = Counter()
                for e in joint["entries"]:
                    summed[e["labels"][axis]] += e["proportion"]
                marg = c["marginals"][prop]
                for lab in set(summed) | set(marg):
                    if abs(summed.get(lab, 0.0) - marg.get(lab, 0.0)) > SUM_TOL:
                        raise SchemaError(
                            f"joint ({a}, {b}) does not marginalize to the {prop} marginal at label {lab!r}",
                            path=jp, source=source,
                        )


def save_kb(kb: KnowledgeBase, path) -> None:
    doc = kb_to_dict(kb)
    validate_kb_dict(doc)
    atomic_write_text(path, json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def load_kb(path) -> KnowledgeBase:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot read knowledge base {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e}", source=str(path)) from e
    validate_kb_dict(doc, source=str(path))
    return kb_from_dict(doc)


# --------------------------------------------------------------------------
# queries

def marginal_vector(concept: ClassConcept) -> dict[tuple[str, str], float]:
    return {(p, lab): v for p, dist in concept.marginals.items() for lab, v in dist.items()}


def nearest_classes(kb: KnowledgeBase, class_name: str, n: int = 3) -> list[tuple[str, float]]:
    """Other classes ranked by L1 distance between marginal label vectors."""
    target = marginal_vector(kb.concept(class_name))
    out = []
    for c in kb.classes:
        if c.class_name == class_name:
            continue
        other = marginal_vector(c)
        keys = set(target) | set(other)
        out.append((c.class_name, math.fsum(abs(target.get(x, 0.0) - other.get(x, 0.0)) for x in keys)))
    out.sort(key=lambda t: (t[1], t[0]))
    return out[:n]
