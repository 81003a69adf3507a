"""Command-line harness: ``edgechroma {gap,mixing,sample,decompose,verify}``.

JSON is the canonical output; ``--format csv`` emits fixed columns per
command.  Exit codes: 0 success, 1 failed verification, 2 non-ergodic
chain, 3 state-space cap exceeded, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass

from .chain import MIXING_LIMIT, mixing_time, spectral_gap
from .coloring import CapExceeded
from .decompose import certified_bound, decompose, regularise_and_reduce
from .glauber import build_glauber, edge_spec, greedy_colouring, simulate
from .graph_core import Tree, TreeError, parse_tree

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_NON_ERGODIC = 2
EXIT_CAP = 3
EXIT_USAGE = 64

CSV_COLUMNS = {
    "gap": ["n_states", "gap", "relaxation", "ergodic", "method"],
    "mixing": ["n_states", "mixing_time", "gap", "relaxation"],
    "sample": ["t", "site", "colour"],
    "decompose": ["level", "m", "case", "lemma_applications", "roots"],
    "verify": ["suite", "name", "passed", "measured", "limit", "slack"],
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    tree_path: str | None
    k: int | None
    rates: object
    seed: int | None
    cap: int | None
    boundary: dict | None
    fmt: str
    workers: int
    horizon: float
    replica: int

    def __post_init__(self):
        for name in ("k", "cap", "workers"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise UsageError(f"--{name} must be positive")
        if self.horizon < 0:
            raise UsageError("--horizon must be non-negative")
        if self.command == "sample" and self.seed is None:
            raise UsageError("sample needs --seed")


def _finite(x: float):
    return None if x is None or not math.isfinite(x) else x


def _emit(doc, rows, command: str, fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS[command], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    out.write(buf.getvalue())


def _load_tree(path: str) -> Tree:
    try:
        text = sys.stdin.read() if path == "-" else open(path, encoding="utf-8").read()
    except OSError as exc:
        raise UsageError(f"cannot read tree file: {exc}") from exc
    return parse_tree(text)


def _load_boundary(tree: Tree, path: str | None) -> dict[int, int]:
    """Boundary file: JSON map from edge id (or ``"a-b"`` vertex pair) to colour."""
    if path is None:
        return {}
    try:
        raw = json.load(open(path, encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read boundary file: {exc}") from exc
    out = {}
    for key, colour in raw.items():
        if isinstance(key, str) and "-" in key:
            a, b = key.split("-", 1)
            try:
                e = tree.edge_between(a, b)
            except (KeyError, ValueError) as exc:
                raise UsageError(f"boundary names a missing edge {key!r}") from exc
        else:
            e = int(key)
            if not 0 <= e < tree.m:
                raise UsageError(f"boundary edge id {e} out of range")
        out[e] = int(colour)
    return out


def _parse_rates(text: str | None):
    if text is None:
        return None
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--rates is not valid JSON: {exc}") from exc
    if isinstance(value, dict):
        return {(k if k == "default" else int(k)): v for k, v in value.items()}
    return value


def _spec(cfg: ExperimentConfig, tree: Tree):
    if cfg.k is None:
        raise UsageError("--k is required")
    mu = cfg.boundary or {}
    free = [e for e in range(tree.m) if e not in mu]
    if not free:
        raise UsageError("boundary colours every edge")
    try:
        sub = tree.subtree(free)
    except ValueError as exc:
        raise UsageError(f"edges outside the boundary must form a subtree: {exc}") from exc
    return edge_spec(tree, cfg.k, mu, sub, cfg.rates)


def cmd_gap(cfg: ExperimentConfig, tree: Tree, out) -> int:
    chain = build_glauber(_spec(cfg, tree), cfg.cap)
    rep = spectral_gap(chain)
    doc = {"n_states": rep.n_states, "gap": _finite(rep.gap), "relaxation": _finite(rep.relaxation),
           "ergodic": rep.ergodic, "method": rep.method}
    _emit(doc, [doc], "gap", cfg.fmt, out)
    return EXIT_OK if rep.ergodic else EXIT_NON_ERGODIC


def cmd_mixing(cfg: ExperimentConfig, tree: Tree, out) -> int:
    chain = build_glauber(_spec(cfg, tree), cfg.cap)
    rep = spectral_gap(chain)
    if not rep.ergodic:
        doc = {"n_states": rep.n_states, "mixing_time": None, "gap": 0.0, "relaxation": None}
        _emit(doc, [doc], "mixing", cfg.fmt, out)
        return EXIT_NON_ERGODIC
    if chain.n > MIXING_LIMIT:
        raise CapExceeded(MIXING_LIMIT, chain.n)
    doc = {"n_states": rep.n_states, "mixing_time": mixing_time(chain), "gap": _finite(rep.gap),
           "relaxation": _finite(rep.relaxation)}
    _emit(doc, [doc], "mixing", cfg.fmt, out)
    return EXIT_OK


def cmd_sample(cfg: ExperimentConfig, tree: Tree, out) -> int:
    spec = _spec(cfg, tree)
    start = greedy_colouring(spec)
    traj = simulate(spec, start, cfg.horizon, cfg.seed, cfg.replica)
    if cfg.fmt == "json":
        out.write(traj.to_jsonl())
    else:
        rows = [{"t": repr(float(t)), "site": spec.label(s), "colour": c} for t, s, c in traj.events]
        _emit(None, rows, "sample", "csv", out)
    return EXIT_OK


def cmd_decompose(cfg: ExperimentConfig, tree: Tree, out, with_bound: bool = False) -> int:
    if cfg.k is None:
        raise UsageError("--k is required")
    if cfg.k <= tree.max_degree:
        raise UsageError(f"decomposition needs k > max degree {tree.max_degree}")
    plan = regularise_and_reduce(tree, cfg.k)
    host = plan.regular
    dt = decompose(host)
    doc = {"d": plan.d, "m": host.m, "regularisation": plan.to_json(), "depth": dt.depth,
           "lemma_depth": dt.lemma_depth, "tree": dt.to_json(host)}
    if with_bound:
        doc["certified_bound"] = certified_bound(host, dt, cfg.k).to_json()
    rows = []

    def walk(node, level):
        if node.step is not None:
            rows.append({"level": level, "m": node.sub.m, "case": node.step.case,
                         "lemma_applications": node.step.lemma_applications,
                         "roots": ";".join(f"{kind}:{host.names[x] if kind == 'vertex' else x}"
                                           for kind, x in node.step.roots_used)})
            for child in node.children:
                walk(child, level + 1)

    walk(dt, 0)
    _emit(doc, rows, "decompose", cfg.fmt, out)
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, suites: list[str], out) -> int:
    from .verify import SUITES, run_suites

    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite {unknown[0]!r}; choose from {', '.join(sorted(SUITES))}")
    reports = run_suites(suites, workers=cfg.workers, seed=cfg.seed or 0)
    doc = {"passed": all(r.passed for r in reports), "suites": [r.to_json() for r in reports]}
    rows = [{"suite": r.suite, **{k: v for k, v in c.to_json().items() if k != "kind"}} for r in reports for c in r.checks]
    _emit(doc, rows, "verify", cfg.fmt, out)
    return EXIT_OK if doc["passed"] else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=int, help="number of colours")
    common.add_argument("--rates", help="site rates as JSON: number, list, or {edge id: rate, 'default': rate}")
    common.add_argument("--seed", type=int, help="seed for all randomness")
    common.add_argument("--cap", type=int, help="maximum number of enumerated states")
    common.add_argument("--boundary", help="JSON file fixing colours of some edges")
    common.add_argument("--format", dest="fmt", choices=["json", "csv"], default="json")
    common.add_argument("--workers", type=int, default=1, help="parallel workers (results do not depend on it)")

    parser = _Parser(prog="edgechroma", description="Exact analysis and simulation of Glauber dynamics for edge colourings of trees.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in (("gap", "spectral gap and relaxation time"), ("mixing", "exact mixing time"),
                            ("sample", "simulate and stream accepted recolourings"),
                            ("decompose", "regularise and run the splitting procedure")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("tree", help="tree file (edge list or JSON), '-' for stdin")
        if name == "sample":
            p.add_argument("--horizon", type=float, default=1.0)
            p.add_argument("--replica", type=int, default=0)
        if name == "decompose":
            p.add_argument("--bound", action="store_true", help="also evaluate the certified relaxation bound")
    p = sub.add_parser("verify", parents=[common], help="run named check suites")
    p.add_argument("suites", nargs="+", help="mono, blocks, reduced, congestion, each_col, splitting")
    return parser


def main(argv: list[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        tree = _load_tree(args.tree) if args.command != "verify" else None
        cfg = ExperimentConfig(
            command=args.command,
            tree_path=getattr(args, "tree", None),
            k=args.k,
            rates=_parse_rates(args.rates),
            seed=args.seed,
            cap=args.cap,
            boundary=_load_boundary(tree, args.boundary) if tree is not None else None,
            fmt=args.fmt,
            workers=args.workers,
            horizon=getattr(args, "horizon", 0.0),
            replica=getattr(args, "replica", 0),
        )
        if cfg.command == "gap":
            return cmd_gap(cfg, tree, out)
        if cfg.command == "mixing":
            return cmd_mixing(cfg, tree, out)
        if cfg.command == "sample":
            return cmd_sample(cfg, tree, out)
        if cfg.command == "decompose":
            return cmd_decompose(cfg, tree, out, args.bound)
        return cmd_verify(cfg, args.suites, out)
    except CapExceeded as exc:
        print(f"edgechroma: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (UsageError, TreeError, ValueError) as exc:
        print(f"edgechroma: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
