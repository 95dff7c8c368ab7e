"""Bundled synthetic corpus: 46 household objects over the 17 labelled classes.

Class order defines the numeric class labels used in plots. Instances of a
class share shape and material and differ in size by a class-specific spread.
"""
from __future__ import annotations

import re

from .sensing import Dims, Material, ObjectSpec

TABLE_CLASSES = (
    "Plastic Box", "Paper Plate", "Steel Cup", "Ceramic Bowl", "Plastic Cup", "Paper Box",
    "Ceramic Plate", "Ball", "Metal Box", "Paper Cup", "Marker", "Plastic Bowl",
    "Ceramic Cup", "Sponge", "Marble Plank", "Ceramic Glass", "Book",
)
TABLE_COUNTS = (1, 1, 1, 3, 3, 9, 6, 1, 3, 1, 3, 3, 3, 2, 1, 1, 4)

MATERIALS = {
    "plastic": Material(stiffness_mm=2.0, friction_mu=0.35, density_g_cm3=0.95, name="plastic"),
    "paper": Material(stiffness_mm=5.0, friction_mu=0.5, density_g_cm3=0.7, name="paper"),
    "cardboard": Material(stiffness_mm=4.0, friction_mu=0.45, density_g_cm3=0.06, name="cardboard"),
    "steel": Material(stiffness_mm=0.0, friction_mu=0.25, density_g_cm3=7.8, name="steel"),
    "ceramic": Material(stiffness_mm=0.0, friction_mu=0.5, density_g_cm3=2.3, name="ceramic"),
    "rubber": Material(stiffness_mm=3.0, friction_mu=0.9, density_g_cm3=0.35, name="rubber"),
    "foam": Material(stiffness_mm=15.0, friction_mu=1.0, density_g_cm3=0.03, name="foam"),
    "marble": Material(stiffness_mm=0.0, friction_mu=0.55, density_g_cm3=2.7, name="marble"),
    "bound_paper": Material(stiffness_mm=0.5, friction_mu=0.4, density_g_cm3=0.7, name="bound_paper"),
}

# class -> (shape, length, width, height, wall, base, material, size spread)
_TEMPLATES = {
    "Plastic Box": ("open_box", 0.30, 0.20, 0.15, 0.003, 0.003, "plastic", 0.0),
    "Paper Plate": ("open_cylinder", 0.22, 0.22, 0.02, 0.002, 0.001, "paper", 0.0),
    "Steel Cup": ("open_cylinder", 0.08, 0.08, 0.09, 0.001, 0.001, "steel", 0.0),
    "Ceramic Bowl": ("open_cylinder", 0.15, 0.15, 0.07, 0.005, 0.006, "ceramic", 0.1),
    "Plastic Cup": ("open_cylinder", 0.075, 0.075, 0.10, 0.0015, 0.002, "plastic", 0.1),
    "Paper Box": ("box", 0.25, 0.15, 0.10, None, None, "cardboard", 0.3),
    "Ceramic Plate": ("open_cylinder", 0.25, 0.25, 0.025, 0.006, 0.006, "ceramic", 0.15),
    "Ball": ("sphere", 0.07, 0.07, 0.07, None, None, "rubber", 0.0),
    "Metal Box": ("open_box", 0.20, 0.15, 0.08, 0.001, 0.001, "steel", 0.1),
    "Paper Cup": ("open_cylinder", 0.08, 0.08, 0.11, 0.0008, 0.001, "paper", 0.0),
    "Marker": ("box", 0.14, 0.018, 0.018, None, None, "plastic", 0.1),
    "Plastic Bowl": ("open_cylinder", 0.16, 0.16, 0.07, 0.002, 0.002, "plastic", 0.1),
    "Ceramic Cup": ("open_cylinder", 0.08, 0.08, 0.095, 0.005, 0.006, "ceramic", 0.1),
    "Sponge": ("box", 0.10, 0.07, 0.04, None, None, "foam", 0.1),
    "Marble Plank": ("box", 0.30, 0.10, 0.02, None, None, "marble", 0.0),
    "Ceramic Glass": ("open_cylinder", 0.07, 0.07, 0.12, 0.003, 0.005, "ceramic", 0.0),
    "Book": ("box", 0.24, 0.17, 0.03, None, None, "bound_paper", 0.2),
}

NOISE_SIGMA_M = 0.001


def slug(class_name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", class_name.lower()).strip("_")


def class_label_map(class_names) -> dict[str, int]:
    """The 17 bundled classes keep labels 0-16; other classes follow in sorted order."""
    labels = {name: i for i, name in enumerate(TABLE_CLASSES)}
    for name in sorted(set(class_names) - set(labels)):
        labels[name] = len(labels)
    return {name: labels[name] for name in set(class_names)}


def _factors(n: int, spread: float) -> list[float]:
    if n == 1 or spread == 0:
        return [1.0] * n
    return [1.0 - spread / 2 + spread * i / (n - 1) for i in range(n)]


def default_corpus() -> list[ObjectSpec]:
    specs = []
    for name, count in zip(TABLE_CLASSES, TABLE_COUNTS):
        shape, L, W, H, wall, base, material, spread = _TEMPLATES[name]
        for i, f in enumerate(_factors(count, spread)):
            if shape == "sphere":
                dims = Dims(L * f, L * f, L * f)
            else:
                dims = Dims(round(L * f, 6), round(W * f, 6), round(H * f, 6), wall, base)
            specs.append(ObjectSpec(
                id=f"{slug(name)}_{i + 1}",
                class_name=name,
                shape=shape,
                dims=dims,
                material=MATERIALS[material],
                noise_sigma_m=NOISE_SIGMA_M,
            ))
    return specs
