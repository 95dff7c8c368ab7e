"""Run simulate -> build -> analyze on the bundled corpus and report timing and cluster purity.

Purity: every (shape, material) group contributes the size of its largest
cluster; the sum is divided by the number of instances.
"""
import argparse
import csv
import tempfile
import time
from collections import Counter, defaultdict
from pathlib import Path

from object_kb.cli import main as kb
from object_kb.corpus import default_corpus


def purity(csv_path):
    group_of = {s.id: (s.shape, s.material.name) for s in default_corpus()}
    groups = defaultdict(Counter)
    with open(csv_path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        groups[group_of[r["instance_id"]]][r["cluster"]] += 1
    return sum(max(c.values()) for c in groups.values()) / len(rows)


def run(out: Path, seed: int, k: int, properties: str):
    timings = {}
    steps = [
        ("simulate", ["simulate", "--out", str(out / "data"), "--seed", str(seed), "--overwrite"]),
        ("build", ["build", "--dataset", str(out / "data"), "--out", str(out / "kb.json"), "--seed", str(seed)]),
        ("analyze", ["analyze", "--kb", str(out / "kb.json"), "--out", str(out / "emb.csv"), "--svg",
                     str(out / "plot.svg"), "--k", str(k), "--seed", str(seed), "--properties", properties,
                     "--bridge-components"]),
    ]
    for name, argv in steps:
        t0 = time.perf_counter()
        code = kb(argv)
        timings[name] = time.perf_counter() - t0
        if code:
            raise SystemExit(code)
    print("timings: " + ", ".join(f"{n} {t:.2f} s" for n, t in timings.items()))
    print(f"purity over (shape, material) groups: {purity(out / 'emb.csv'):.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", help="output directory (default: a temp dir)")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--k", type=int, default=7)
    ap.add_argument("--properties", default="physical")
    args = ap.parse_args()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        run(out, args.seed, args.k, args.properties)
    else:
        with tempfile.TemporaryDirectory() as d:
            run(Path(d), args.seed, args.k, args.properties)


if __name__ == "__main__":
    main()
