"""End-to-end driver: SBM benchmark graphs, FNM runs, grid search, reports."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .embedding import EmbeddingConfig, fair_spectral_embedding
from .errors import AllCellsFailed, DisconnectedAfterRetries, FairNcutError, GraphError
from .fairness import as_fraction, bounds_from_sigma, is_fair
from .graph import Graph, GroupAssignment, PartitionState, balance, component_count
from .rounding import RoundingConfig, fair_rounding

XI_GRID = (2.0, 4.0, 6.0, 8.0, 10.0)
MU0_GRID = (1e-4, 1e-2, 1.0, 1e2)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INFEASIBLE = 3
EXIT_INPUT_ERROR = 4

# stable column order for CSV output and the leading keys of the JSON document
REPORT_COLUMNS = ("dataset", "n", "m", "k", "sigma", "seed", "mode", "xi", "mu0", "ncut",
                  "balance", "fair", "embed_seconds", "round_seconds", "total_seconds",
                  "embed_iters", "violation", "moves")


# -- stochastic block model ----------------------------------------------------

@dataclass(frozen=True)
class SbmConfig:
    """Planted-partition graph with one preferred group per cluster.

    A node of cluster j joins group j with probability ``p_same`` and each
    other group with probability ``p_other``.
    """

    cluster_sizes: tuple = (500, 200, 100, 100, 100)
    p_in: float = 0.25
    p_out: float = 0.05
    p_same: float = 0.6
    p_other: float = 0.1
    seed: int = 0
    max_retries: int = 20

    def __post_init__(self):
        object.__setattr__(self, "cluster_sizes", tuple(int(s) for s in self.cluster_sizes))
        if not self.cluster_sizes or min(self.cluster_sizes) < 1:
            raise ValueError("cluster sizes must be positive")
        for name in ("p_in", "p_out", "p_same", "p_other"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        total = self.p_same + (len(self.cluster_sizes) - 1) * self.p_other
        if abs(total - 1) > 1e-9:
            raise ValueError(f"group probabilities sum to {total}, expected 1")
        if self.max_retries < 1:
            raise ValueError("max_retries must be positive")

    @property
    def n(self) -> int:
        return sum(self.cluster_sizes)

    def pair_counts(self) -> tuple[int, int]:
        """Number of (intra-cluster, inter-cluster) node pairs."""
        intra = sum(s * (s - 1) // 2 for s in self.cluster_sizes)
        return intra, self.n * (self.n - 1) // 2 - intra

    def expected_edges(self) -> float:
        intra, inter = self.pair_counts()
        return self.p_in * intra + self.p_out * inter

    def edge_std(self) -> float:
        intra, inter = self.pair_counts()
        return float(np.sqrt(intra * self.p_in * (1 - self.p_in)
                             + inter * self.p_out * (1 - self.p_out)))


def _sample_sbm_edges(cfg: SbmConfig, rng) -> sp.csr_array:
    starts = np.concatenate([[0], np.cumsum(cfg.cluster_sizes)])
    rows, cols = [], []
    nc = len(cfg.cluster_sizes)
    for a in range(nc):
        for b in range(a, nc):
            sa, sb = cfg.cluster_sizes[a], cfg.cluster_sizes[b]
            p = cfg.p_in if a == b else cfg.p_out
            hit = rng.random((sa, sb)) < p
            if a == b:
                hit = np.triu(hit, 1)
            i, j = np.nonzero(hit)
            rows.append(i + starts[a])
            cols.append(j + starts[b])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    upper = sp.coo_array((np.ones(rows.size), (rows, cols)), shape=(cfg.n, cfg.n))
    return (upper + upper.T).tocsr()


def sbm_generate(cfg: SbmConfig = SbmConfig()):
    """Sample a connected SBM graph; returns (graph, groups, planted labels).

    Disconnected draws are discarded and redrawn from the same generator,
    so the result is a deterministic function of ``cfg``.
    """
    rng = np.random.default_rng(cfg.seed)
    nc = len(cfg.cluster_sizes)
    truth = np.repeat(np.arange(nc), cfg.cluster_sizes)
    probs = np.full((nc, nc), cfg.p_other)
    np.fill_diagonal(probs, cfg.p_same)
    for _ in range(cfg.max_retries):
        adj = _sample_sbm_edges(cfg, rng)
        u = rng.random(cfg.n)
        phi = (u[:, None] > np.cumsum(probs[truth], axis=1)).sum(axis=1)
        phi = np.minimum(phi, nc - 1)
        if component_count(adj) == 1 and cfg.n > 1:
            return Graph(adj), GroupAssignment(phi, nc), truth
    raise DisconnectedAfterRetries(
        f"SBM sample disconnected in {cfg.max_retries} attempts; raise p_in or p_out")


# -- reports -------------------------------------------------------------------

@dataclass
class RunReport:
    dataset: str
    n: int
    m: int
    k: int
    sigma: str
    seed: int
    mode: str
    xi: float
    mu0: float
    ncut: float
    balance: float
    fair: bool
    embed_seconds: float
    round_seconds: float
    total_seconds: float
    embed_iters: int
    violation: float
    moves: int
    converged: bool = True
    exit_code: int = EXIT_OK
    embed_objective: float = 0.0
    labels: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def partition(self, g: Graph, ga: GroupAssignment) -> PartitionState:
        return PartitionState.from_labels(g, np.asarray(self.labels), self.k, ga)


TIMING_FIELDS = ("embed_seconds", "round_seconds", "total_seconds")


def emit_report(r: RunReport, fmt: str = "json") -> bytes:
    """JSON document (all fields) or one CSV data row under ``REPORT_COLUMNS``."""
    if fmt == "json":
        d = asdict(r)
        ordered = {k: d.pop(k) for k in REPORT_COLUMNS}
        ordered.update(d)
        return (json.dumps(ordered, indent=1) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        w.writerow([_csv_cell(getattr(r, c)) for c in REPORT_COLUMNS])
        return buf.getvalue().encode()
    raise ValueError(f"unknown report format {fmt!r}")


def _csv_cell(v):
    return repr(v) if isinstance(v, float) else v


def parse_report(data: bytes | str) -> RunReport:
    """Inverse of the JSON form of ``emit_report``."""
    d = json.loads(data)
    names = {f.name for f in fields(RunReport)}
    return RunReport(**{k: v for k, v in d.items() if k in names})


def parse_csv_reports(data: bytes | str) -> list[dict]:
    """Rows of a CSV report (or several concatenated ones) as typed dicts."""
    text = data.decode() if isinstance(data, bytes) else data
    types = {f.name: f.type for f in fields(RunReport)}
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        if row["dataset"] == "dataset":   # header of a concatenated report
            continue
        typed = {}
        for k, v in row.items():
            t = types[k]
            if t == "int":
                typed[k] = int(v)
            elif t == "float":
                typed[k] = float(v)
            elif t == "bool":
                typed[k] = v == "True"
            else:
                typed[k] = v
        out.append(typed)
    return out


def strip_timings(r: RunReport) -> RunReport:
    """Copy with every wall-clock field zeroed, for reproducibility checks."""
    cells = [{**c, **{t: 0.0 for t in TIMING_FIELDS if t in c}} for c in r.cells]
    return replace(r, cells=cells, **{t: 0.0 for t in TIMING_FIELDS})


# -- FNM driver ----------------------------------------------------------------

def _phase_seeds(seed: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence(seed).spawn(2)
    return int(a.generate_state(1)[0]), int(b.generate_state(1)[0])


def run_fnm(g: Graph, ga: GroupAssignment, k: int, sigma, *, seed: int = 0,
            embedding: EmbeddingConfig = EmbeddingConfig(),
            rounding: RoundingConfig = RoundingConfig(),
            sigma_emb=None, dataset: str = "") -> RunReport:
    """Fair embedding followed by fair rounding.

    ``sigma`` sets the fairness bounds of the returned partition;
    ``sigma_emb`` (default: ``sigma``) sets the bounds the embedding is
    steered towards. An embedding that misses its violation tolerance is
    still rounded; the report then carries ``EXIT_NOT_CONVERGED``.
    Rounding errors such as ``Ip2Infeasible`` propagate.
    """
    if ga.n != g.n:
        raise GraphError(f"groups cover {ga.n} nodes but the graph has {g.n}")
    if not 1 <= k <= g.n:
        raise ValueError(f"need 1 <= k <= n, got k={k}")
    sigma = as_fraction(sigma)
    sigma_emb = sigma if sigma_emb is None else as_fraction(sigma_emb)
    fb = bounds_from_sigma(ga, sigma)
    fb_emb = bounds_from_sigma(ga, sigma_emb)
    emb_seed, round_seed = _phase_seeds(seed)
    ecfg = replace(embedding, seed=emb_seed)
    rcfg = replace(rounding, seed=round_seed)

    t0 = time.perf_counter()
    emb_trace: list = []
    emb = fair_spectral_embedding(g, ga, fb_emb, k, ecfg, strict=False, trace=emb_trace)
    t1 = time.perf_counter()
    rr = fair_rounding(g, emb.H, ga, fb, rcfg)
    t2 = time.perf_counter()

    p = rr.partition
    fair = is_fair(p, ga, fb)
    if not fair:
        raise AssertionError("rounding returned an unfair partition")
    return RunReport(
        dataset=dataset, n=g.n, m=ga.m, k=k, sigma=str(sigma), seed=seed, mode=rr.mode,
        xi=ecfg.xi, mu0=ecfg.mu0, ncut=rr.ncut, balance=float(balance(p, ga)), fair=fair,
        embed_seconds=t1 - t0, round_seconds=t2 - t1, total_seconds=t2 - t0,
        embed_iters=emb.inner_iters, violation=emb.violation, moves=rr.moves,
        converged=emb.converged,
        exit_code=EXIT_OK if emb.converged else EXIT_NOT_CONVERGED,
        embed_objective=emb.objective,
        labels=p.labels.tolist(),
        traces={"embedding": emb_trace, "rounding": rr.trace},
        config={"sigma_emb": str(sigma_emb), "embedding": asdict(ecfg),
                "rounding": asdict(rcfg)},
    )


def grid_search(g: Graph, ga: GroupAssignment, k: int, sigma, *, xi_grid=XI_GRID,
                mu0_grid=MU0_GRID, seed: int = 0,
                embedding: EmbeddingConfig = EmbeddingConfig(),
                rounding: RoundingConfig = RoundingConfig(),
                sigma_emb=None, dataset: str = "", keep_traces: bool = False) -> RunReport:
    """Run FNM for every (xi, mu0) and keep the fair result with the smallest Ncut.

    Every cell's summary, including failures, is stored in ``cells`` of
    the returned report. Ties go to the earliest cell in grid order.
    """
    if not xi_grid or not mu0_grid:
        raise ValueError("grids must be nonempty")
    best, cells, failures = None, [], []
    for xi in xi_grid:
        for mu0 in mu0_grid:
            cfg = replace(embedding, xi=float(xi), mu0=float(mu0))
            try:
                r = run_fnm(g, ga, k, sigma, seed=seed, embedding=cfg, rounding=rounding,
                            sigma_emb=sigma_emb, dataset=dataset)
            except FairNcutError as exc:
                failures.append((xi, mu0, exc))
                cells.append({"xi": float(xi), "mu0": float(mu0),
                              "error": f"{type(exc).__name__}: {exc}"})
                continue
            cells.append({"xi": r.xi, "mu0": r.mu0, "ncut": r.ncut, "balance": r.balance,
                          "fair": r.fair, "converged": r.converged,
                          "embed_objective": r.embed_objective, "violation": r.violation,
                          "total_seconds": r.total_seconds})
            if r.fair and (best is None or r.ncut < best.ncut):
                best = r
    if best is None:
        raise AllCellsFailed(failures)
    if not keep_traces:
        best.traces = {}
    best.cells = cells
    return best


# -- preprocessing -------------------------------------------------------------

def largest_component_subgraph(edges, phi=None):
    """Restrict raw (i, j[, w]) edges to their largest connected component.

    Self-loops are dropped and repeated node pairs (in either direction)
    collapse to one edge keeping the largest weight. Surviving nodes are
    renumbered 0..n'-1 in increasing order of their original ids.
    Returns (graph, groups or None, original ids).
    """
    edges = [(int(e[0]), int(e[1]), float(e[2]) if len(e) > 2 else 1.0)
             for e in edges if int(e[0]) != int(e[1])]
    if not edges:
        raise GraphError("no edges left after dropping self-loops")
    arr = np.array(edges)
    i = arr[:, 0].astype(np.int64)
    j = arr[:, 1].astype(np.int64)
    w = arr[:, 2]
    if np.any(w <= 0):
        raise GraphError("edge weights must be positive")
    if min(i.min(), j.min()) < 0:
        raise GraphError("node ids must be nonnegative")
    n = int(max(i.max(), j.max())) + 1
    if phi is not None:
        phi = np.asarray(phi)
        n = max(n, phi.size)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    # max over duplicates: sum_duplicates would add them
    order = np.lexsort((-w, hi, lo))
    keep = np.ones(order.size, dtype=bool)
    keep[1:] = (lo[order][1:] != lo[order][:-1]) | (hi[order][1:] != hi[order][:-1])
    sel = order[keep]
    upper = sp.coo_array((w[sel], (lo[sel], hi[sel])), shape=(n, n))
    adj = (upper + upper.T).tocsr()
    _, comp = connected_components(adj, directed=False)
    sizes = np.bincount(comp)
    # isolated ids (never in an edge) form singleton components and never win
    ids = np.flatnonzero(comp == np.argmax(sizes))
    sub = adj[ids][:, ids].tocsr()
    groups = None
    if phi is not None:
        if phi.size < n:
            raise GraphError("group file does not cover every node id")
        groups = GroupAssignment.from_labels(_compact(phi[ids]))
    return Graph(sub), groups, ids


def _compact(labels):
    """Renumber labels to 0..m'-1 preserving order (drops groups that vanished)."""
    _, inv = np.unique(labels, return_inverse=True)
    return inv
