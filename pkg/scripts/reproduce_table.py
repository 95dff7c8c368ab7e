"""Rigidity sub-categorization of three ceramic cups, two ways.

1. Three fixed scalar rigidity values, clustered directly.
2. Three simulated cups whose press depths differ, built into a class-scoped KB.
"""
import time

from object_kb.sensing import Dims, Material, ObjectSpec, simulate_record
from object_kb.symbols import BuildConfig, build_kb, subcategorize

VALUES = [("ceramic_cup_1", 0.76), ("ceramic_cup_2", 3.17), ("ceramic_cup_3", 7.69)]


def scalar_run():
    t0 = time.perf_counter()
    model, assigned = subcategorize(VALUES, 3, ["soft", "medium", "rigid"], scope="Ceramic Cup")
    ms = (time.perf_counter() - t0) * 1000
    print(f"scalar values ({ms:.1f} ms), centroids {model.centroids}")
    for iid, v in VALUES:
        print(f"  {iid}: {v:5.2f} -> {assigned[iid]}")


def simulated_run():
    cups = []
    for i, stiffness in enumerate((20.0, 5.0, 0.0), 1):
        spec = ObjectSpec(f"ceramic_cup_{i}", "Ceramic Cup", "open_cylinder",
                          Dims(0.08, 0.08, 0.10, 0.004, 0.01), Material(stiffness, 0.6, 2.4))
        cups.append(simulate_record(spec, seed=42))
    kb = build_kb(cups, BuildConfig(scope="class", properties=("rigidity",)))
    print("simulated cups, class scope")
    for s in kb.instances:
        print(f"  {s.instance_id}: rigidity {s.scalars['rigidity']:.4f} "
              f"(deformation {s.scalars['deformation_mm']:.1f} mm) -> {s.symbols['rigidity']}")
    print(f"  marginal: {kb.concept('Ceramic Cup').marginals['rigidity']}")


if __name__ == "__main__":
    scalar_run()
    simulated_run()
