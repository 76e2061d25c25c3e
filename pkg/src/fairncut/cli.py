"""Command line: ``partition``, ``sbm`` and ``prep`` subcommands.

Exit codes: 0 fair result, 2 fair result from an embedding that missed its
violation tolerance, 3 no fair rounding exists, 4 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bench import (EXIT_INFEASIBLE, EXIT_INPUT_ERROR, SbmConfig, emit_report, grid_search,
                    largest_component_subgraph, run_fnm, sbm_generate)
from .embedding import EmbeddingConfig
from .errors import AllCellsFailed, DisconnectedAfterRetries, GraphError, GroupError, Ip2Infeasible
from .fairness import as_fraction
from .graph import parse_edge_lines, read_edge_list, read_groups, write_edge_list, write_groups
from .rounding import RoundingConfig

log = logging.getLogger("fairncut")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def _rational(text: str) -> Fraction:
    try:
        value = as_fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1]: {text!r}")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"probability outside [0, 1]: {text!r}")
    return value


def _sizes(text: str) -> tuple:
    try:
        sizes = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("cluster sizes must be positive")
    return sizes


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fairncut", description="Fair normalized-cut graph partitioning.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    part = sub.add_parser("partition", help="partition a graph under group fairness bounds")
    part.add_argument("--edges", required=True, type=Path, help="edge list: 'i j [w]' per line")
    part.add_argument("--groups", required=True, type=Path, help="group file: 'i c' per line")
    part.add_argument("--k", required=True, type=_positive_int, help="number of clusters")
    part.add_argument("--sigma", required=True, type=_rational,
                      help="fairness looseness in [0, 1], e.g. 0.2 or 1/5")
    part.add_argument("--seed", type=int, default=0)
    part.add_argument("--mode", choices=("lp", "kr", "auto"), default="auto",
                      help="rounding by fair LP or by nearest center + repair (default: by size)")
    part.add_argument("--grid-search", action="store_true",
                      help="search xi in {2,4,6,8,10} x mu0 in {1e-4,1e-2,1,1e2}")
    part.add_argument("--sigma-emb", type=_rational, default=None,
                      help="looseness for the embedding bounds (default: --sigma)")
    part.add_argument("--xi", type=float, default=EmbeddingConfig.xi)
    part.add_argument("--mu0", type=float, default=EmbeddingConfig.mu0)
    part.add_argument("--report", type=Path, default=None, help="write report here (default stdout)")
    part.add_argument("--format", choices=("json", "csv"), default="json")
    part.add_argument("--labels-out", type=Path, default=None,
                      help="write 'i cluster' lines for the returned partition")

    sbm = sub.add_parser("sbm", help="sample a stochastic block model benchmark graph")
    sbm.add_argument("--sizes", type=_sizes, default=SbmConfig.cluster_sizes)
    sbm.add_argument("--p-in", type=_probability, default=SbmConfig.p_in)
    sbm.add_argument("--p-out", type=_probability, default=SbmConfig.p_out)
    sbm.add_argument("--p-same", type=_probability, default=SbmConfig.p_same,
                     help="probability a node joins its cluster's group; the rest is split evenly")
    sbm.add_argument("--seed", type=int, default=0)
    sbm.add_argument("--out-prefix", required=True, type=Path,
                     help="writes PREFIX.edges, PREFIX.groups and PREFIX.truth")

    prep = sub.add_parser("prep", help="restrict a raw graph to its largest connected component")
    prep.add_argument("--edges", required=True, type=Path)
    prep.add_argument("--groups", type=Path, default=None)
    prep.add_argument("--out-prefix", required=True, type=Path,
                      help="writes PREFIX.edges, PREFIX.groups and PREFIX.ids (original id per node)")
    return p


def _write(path: Path | None, data: bytes) -> None:
    if path is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        path.write_bytes(data)


def cmd_partition(args) -> int:
    g = read_edge_list(args.edges)
    ga = read_groups(args.groups, g.n)
    if not 1 <= args.k <= g.n:
        raise GraphError(f"--k must lie in [1, {g.n}]")
    embedding = EmbeddingConfig(xi=args.xi, mu0=args.mu0)
    rounding = RoundingConfig(mode=args.mode)
    common = dict(seed=args.seed, embedding=embedding, rounding=rounding,
                  sigma_emb=args.sigma_emb, dataset=args.edges.stem)
    if args.grid_search:
        report = grid_search(g, ga, args.k, args.sigma, **common)
    else:
        report = run_fnm(g, ga, args.k, args.sigma, **common)
    _write(args.report, emit_report(report, args.format))
    if args.labels_out is not None:
        args.labels_out.write_text("".join(f"{i} {l}\n" for i, l in enumerate(report.labels)))
    log.info("ncut %.6f balance %.6f fair %s", report.ncut, report.balance, report.fair)
    return report.exit_code


def cmd_sbm(args) -> int:
    nc = len(args.sizes)
    p_other = (1 - args.p_same) / (nc - 1) if nc > 1 else 0.0
    cfg = SbmConfig(args.sizes, args.p_in, args.p_out, args.p_same, p_other, args.seed)
    g, ga, truth = sbm_generate(cfg)
    prefix = str(args.out_prefix)
    write_edge_list(g, prefix + ".edges")
    write_groups(ga, prefix + ".groups")
    Path(prefix + ".truth").write_text("".join(f"{i} {l}\n" for i, l in enumerate(truth.tolist())))
    print(json.dumps({"n": g.n, "edges": g.num_edges, "expected_edges": cfg.expected_edges(),
                      "edge_std": cfg.edge_std(), "groups": ga.counts.tolist()}))
    return 0


def cmd_prep(args) -> int:
    edges = parse_edge_lines(args.edges.read_text(encoding="utf-8"))
    phi = None
    if args.groups is not None:
        phi = read_groups(args.groups).phi
    g, ga, ids = largest_component_subgraph(edges, phi)
    prefix = str(args.out_prefix)
    write_edge_list(g, prefix + ".edges")
    if ga is not None:
        write_groups(ga, prefix + ".groups")
    np.savetxt(prefix + ".ids", ids, fmt="%d")
    print(json.dumps({"n": g.n, "edges": g.num_edges}))
    return 0


COMMANDS = {"partition": cmd_partition, "sbm": cmd_sbm, "prep": cmd_prep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (GraphError, GroupError, OSError, ValueError) as exc:
        print(f"fairncut: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except Ip2Infeasible as exc:
        print(f"fairncut: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except AllCellsFailed as exc:
        print(f"fairncut: {exc}", file=sys.stderr)
        for xi, mu0, err in exc.failures:
            print(f"  xi={xi} mu0={mu0}: {type(err).__name__}: {err}", file=sys.stderr)
        if all(isinstance(err, Ip2Infeasible) for _, _, err in exc.failures):
            return EXIT_INFEASIBLE
        return 1
    except DisconnectedAfterRetries as exc:
        print(f"fairncut: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
