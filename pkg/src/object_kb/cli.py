"""``kb`` command line: simulate -> build -> analyze, plus read-only queries.

Exit codes: 0 success, 1 validation, 2 I/O, 3 numeric/sizing.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from collections import Counter
from pathlib import Path

from . import analysis, sensing, symbols
from .corpus import default_corpus
from .errors import DatasetIOError, KBError

DEFAULT_SEED = 42
SEED_ENV = "OBJECT_KB_SEED"
MANIFEST = "_manifest.json"


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise KBError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def cmd_simulate(spec_file, out_dir, seed: int = DEFAULT_SEED, points_per_view: int = sensing.DEFAULT_POINTS_PER_VIEW,
                 overwrite: bool = False) -> dict:
    """Simulate every object spec into a dataset directory; returns the manifest.

    The dataset is assembled in a sibling temp directory and moved into place
    only when every record succeeded.
    """
    specs = default_corpus() if spec_file is None else sensing.load_object_specs(spec_file)
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        raise DatasetIOError(f"output directory {out_dir} is not empty (use --overwrite)")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        (tmp / "clouds").mkdir()
        for i, spec in enumerate(specs):
            try:
                rec = sensing.simulate_record(spec, seed=seed, points_per_view=points_per_view)
            except KBError as e:
                raise type(e)(f"spec entry {i} ({spec.id}): {e}") from e
            sensing.write_record(rec, tmp)
        counts = Counter(s.class_name for s in specs)
        manifest = {
            "count": len(specs),
            "seed": seed,
            "points_per_view": points_per_view,
            "classes": dict(sorted(counts.items())),
        }
        (tmp / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def cmd_build(dataset_dir, out_kb, config: symbols.BuildConfig = symbols.BuildConfig()) -> symbols.KnowledgeBase:
    records = sensing.ingest_dataset(dataset_dir)
    kb = symbols.build_kb(records, config)
    symbols.save_kb(kb, out_kb)
    return kb


def cmd_analyze(kb_path, out_csv, properties="physical", k=analysis.DEFAULT_CLUSTERS,
                neighbors=analysis.DEFAULT_NEIGHBORS, seed=DEFAULT_SEED, svg=None, bridge=False):
    kb = symbols.load_kb(kb_path)
    emb, report = analysis.analyze(kb, properties, k, neighbors, seed, bridge)
    analysis.export_plot(emb, report, out_csv, svg)
    return emb, report


def format_query(kb: symbols.KnowledgeBase, class_name: str, nearest: int = 3, joints: bool = False) -> str:
    c = kb.concept(class_name)
    lines = [f"class: {c.class_name} (label {c.class_label}, {c.instance_count} instances)", "marginals:"]
    for prop, dist in c.marginals.items():
        body = ", ".join(f"{lab}={p:.4g}" for lab, p in dist.items())
        lines.append(f"  {prop}: {body}")
    if joints:
        lines.append("joints:")
        for j in c.joints:
            body = ", ".join(f"({a},{b})={e.proportion:.4g}" for e in j.entries for a, b in [e.labels])
            lines.append(f"  {j.properties[0]} x {j.properties[1]}: {body}")
    lines.append("nearest classes (L1 over marginals):")
    for name, dist in symbols.nearest_classes(kb, class_name, nearest):
        lines.append(f"  {name}: {dist:.4g}")
    return "\n".join(lines)


def _summary(kb: symbols.KnowledgeBase) -> str:
    lines = [f"instances: {len(kb.instances)}", f"classes: {len(kb.classes)}", "centroids:"]
    for m in kb.models:
        cs = ", ".join(f"{lab}={c:.4g}" for lab, c in zip(m.labels, m.centroids))
        lines.append(f"  {m.property_name} [{m.scope}]: {cs}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kb", description="Robot-centric object knowledge base pipeline.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate measurement records for an object corpus")
    s.add_argument("--spec", help="JSON array of object specs (default: bundled 46-object corpus)")
    s.add_argument("--out", required=True, help="dataset directory to create")
    s.add_argument("--seed", type=int)
    s.add_argument("--points-per-view", type=int, default=sensing.DEFAULT_POINTS_PER_VIEW)
    s.add_argument("--overwrite", action="store_true", help="replace a non-empty output directory")

    b = sub.add_parser("build", help="extract properties and write the knowledge base")
    b.add_argument("--dataset", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--k", type=int, default=3, help="clusters per property")
    b.add_argument("--scope", choices=("corpus", "class"), default="corpus")
    b.add_argument("--seed", type=int)
    b.add_argument("--delta0-mm", type=float, default=10.0, help="deformation scale of the rigidity transform")
    b.add_argument("--threshold-m", type=float, default=0.005, help="RANSAC inlier distance")
    b.add_argument("--iterations", type=int, default=500, help="RANSAC hypotheses")

    a = sub.add_parser("analyze", help="Isomap embedding + K-means over KB instances")
    a.add_argument("--kb", required=True)
    a.add_argument("--properties", default="physical",
                   help="physical, functional, or comma-separated property names (e.g. support)")
    a.add_argument("--k", type=int, default=analysis.DEFAULT_CLUSTERS)
    a.add_argument("--neighbors", type=int, default=analysis.DEFAULT_NEIGHBORS)
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True, help="CSV output")
    a.add_argument("--svg", help="optional SVG scatter plot")
    a.add_argument("--bridge-components", action="store_true",
                   help="join a disconnected neighbour graph instead of failing")

    q = sub.add_parser("query", help="show a class concept and its nearest classes")
    q.add_argument("--kb", required=True)
    q.add_argument("class_name")
    q.add_argument("--nearest", type=int, default=3)
    q.add_argument("--joints", action="store_true", help="also print joint distributions")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            m = cmd_simulate(args.spec, args.out, resolve_seed(args.seed), args.points_per_view, args.overwrite)
            print(f"simulated {m['count']} records into {args.out}")
            for name, n in m["classes"].items():
                print(f"  {name}: {n}")
        elif args.command == "build":
            cfg = symbols.BuildConfig(
                k=args.k, scope=args.scope, seed=resolve_seed(args.seed), delta0_mm=args.delta0_mm,
                threshold_m=args.threshold_m, iterations=args.iterations,
            )
            kb = cmd_build(args.dataset, args.out, cfg)
            print(_summary(kb))
        elif args.command == "analyze":
            emb, report = cmd_analyze(args.kb, args.out, args.properties, args.k, args.neighbors,
                                      resolve_seed(args.seed), args.svg, args.bridge_components)
            sizes = [len(v) for v in report.members().values()]
            print(f"embedded {len(report.labels)} instances; eigenvalues {emb.eigenvalues[0]:.4g}, "
                  f"{emb.eigenvalues[1]:.4g}; inertia {report.inertia:.4g}; cluster sizes {sizes}")
        elif args.command == "query":
            print(format_query(symbols.load_kb(args.kb), args.class_name, args.nearest, args.joints))
    except KBError as e:
        print(f"kb {args.command}: error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"kb {args.command}: invalid argument: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"kb {args.command}: I/O error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
