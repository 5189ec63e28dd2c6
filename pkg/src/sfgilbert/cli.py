"""Command line entry point: ``sfgilbert <command> ...``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import List, Optional

from . import __version__
from .errors import ConfigError, GilbertError
from .experiments import load_config, run, validate, write_csv
from .graph import build_full_graph, thin, write_edges
from .hierarchy import build_backbone, longest_descending_chain, verify_backbone
from .paths import DISTANCE_COLUMNS, chemical_distance, crossing_distance, diameter
from .sampling import RadiusLaw, read_points, sample_instance, write_points


def _out_path(args, default_name: str) -> Optional[str]:
    if args.output:
        return args.output
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        return os.path.join(args.out_dir, default_name)
    return None


def _emit_text(path: Optional[str], writer) -> None:
    if path is None:
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            p = os.path.join(tmp, "out.txt")
            writer(p)
            with open(p) as fh:
                sys.stdout.write(fh.read())
    else:
        writer(path)
        print(path, file=sys.stderr)


def cmd_sample(args) -> int:
    law = RadiusLaw.pareto(args.s, args.beta)
    inst = sample_instance(args.d, args.n, args.lam, law, args.seed)
    _emit_text(_out_path(args, "points.txt"), lambda p: write_points(inst, p))
    return 0


def cmd_build(args, thinned: bool = False) -> int:
    inst = read_points(args.points)
    g = build_full_graph(inst)
    if thinned:
        g = thin(g)
    name = "thinned_edges.txt" if thinned else "edges.txt"
    _emit_text(_out_path(args, name), lambda p: write_edges(g, p))
    return 0


def cmd_distances(args) -> int:
    inst = read_points(args.points)
    g = build_full_graph(inst)
    if args.variant == "thinned":
        g = thin(g)
    results = []
    if args.crossing:
        results.append(crossing_distance(inst, g))
    for pair in args.pair or []:
        a, b = (int(x) for x in pair.split(","))
        results.append(chemical_distance(g, a, b, with_path=False))
    seed = "" if inst.seed is None else inst.seed
    rows = [[seed, repr(float(inst.n)), r.source, r.target, "" if r.hops is None else r.hops, int(r.reachable)] for r in results]
    if args.diameter:
        dm = diameter(g, sampled=args.sampled_roots)
        kind = "exact" if dm.exact else "lower-bound"
        print(f"# diameter={'' if dm.value is None else dm.value} connected={int(dm.connected)} mode={kind}", file=sys.stderr)
    path = _out_path(args, "distances.csv")
    if path is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(DISTANCE_COLUMNS)
        w.writerows(rows)
    else:
        write_csv(path, DISTANCE_COLUMNS, rows)
        print(path, file=sys.stderr)
    return 0


def cmd_backbone(args) -> int:
    inst = read_points(args.points)
    res = build_backbone(inst, args.depth_cap)
    bfs, connected, ok = "", "", ""
    if res.terminated:
        g = build_full_graph(inst)
        dm = diameter(g)
        bfs = "" if dm.value is None else dm.value
        connected = int(dm.connected)
        ok = int(verify_backbone(inst, g, res))
    seed = "" if inst.seed is None else inst.seed
    row = [seed, repr(float(inst.n)), int(res.terminated), res.depth, res.backbone_size, res.diameter_bound, bfs, connected]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["seed", "n", "terminated", "depth", "backbone_size", "diameter_bound", "bfs_diameter", "connected"])
    w.writerow(row)
    print(f"# verified={ok} backbone={' '.join(map(str, res.backbone.tolist()))}", file=sys.stderr)
    return 0


def cmd_chains(args) -> int:
    inst = read_points(args.points)
    chain = longest_descending_chain(inst)
    print(json.dumps({"length": len(chain), "ids": list(chain.ids)}))
    return 0


def cmd_experiment(args) -> int:
    if args.action == "validate":
        import yaml

        try:
            with open(args.config) as fh:
                raw = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        v = validate(raw if raw is not None else {})
        for w in v.warnings:
            print(f"warning: {w}")
        for e in v.errors:
            print(f"violation: {e}")
        if v.ok:
            print("ok")
        return 0 if v.ok else 1
    cfg = load_config(args.config)
    v = validate(cfg)
    for w in v.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.seed is not None:
        cfg.seed = args.seed
    manifest = run(cfg, out_dir=args.out_dir, threads=args.threads)
    print(manifest.directory)
    for f in manifest.failures:
        print(f"failed replication {f['key']}: {f['error']}", file=sys.stderr)
    return 0 if manifest.ok else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfgilbert", description="Scale-free Gilbert graphs on the torus.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides config seed)")
    p.add_argument("--threads", type=int, default=None, help="worker processes for experiments")
    p.add_argument("--out-dir", default=None, help="directory for output files")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw a marked Poisson point set")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--n", type=float, required=True, help="torus side length")
    s.add_argument("--s", type=float, default=2.0, help="tail index of the radius law")
    s.add_argument("--beta", type=float, default=1.0, help="tail constant of the radius law")
    s.add_argument("--lam", type=float, default=1.0, help="intensity")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sample)

    for name, thinned in (("build", False), ("thin", True)):
        b = sub.add_parser(name, help=f"edge list of the {'thinned' if thinned else 'full'} graph")
        b.add_argument("points")
        b.add_argument("-o", "--output")
        b.set_defaults(func=lambda a, t=thinned: cmd_build(a, t))

    d = sub.add_parser("distances", help="hop distances as CSV rows")
    d.add_argument("points")
    d.add_argument("--variant", choices=["full", "thinned"], default="full")
    d.add_argument("--pair", action="append", help="source,target ids; repeatable")
    d.add_argument("--crossing", action="store_true", help="distance between the points nearest -n e1/4 and n e1/4")
    d.add_argument("--diameter", action="store_true", help="also report the diameter on stderr")
    d.add_argument("--sampled-roots", type=int, default=None, help="lower-bound diameter from this many roots")
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_distances)

    bb = sub.add_parser("backbone", help="dyadic backbone report")
    bb.add_argument("points")
    bb.add_argument("--depth-cap", type=int, default=None)
    bb.set_defaults(func=cmd_backbone)

    c = sub.add_parser("chains", help="longest toroidal descending chain")
    c.add_argument("points")
    c.set_defaults(func=cmd_chains)

    e = sub.add_parser("experiment", help="run or validate an experiment config")
    e.add_argument("action", choices=["run", "validate"])
    e.add_argument("config")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if getattr(args, "seed", None) is None and args.command == "sample":
        args.seed = 0
    try:
        return args.func(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 1
    except (GilbertError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
