"""Column-correlation communities of a sensing matrix and placement scoring."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from html import escape

import networkx as nx
import numpy as np
from scipy.sparse.csgraph import connected_components

from .localizer import DEFAULT_RANK_TOL, WhitenedModel, build_whitened_model
from .matrices import (AdmittanceMatrix, ImpedanceMatrix, PartitionedBlocks, Placement,
                       build_admittance, invert_to_impedance, make_placement, partition)
from .netmodel import PHASES, NetworkModel, NodeIndexMap

DEFAULT_TAU = 0.814
# correlations this close to 1 are rounding noise on proportional columns
_UNIT_SNAP = 1e-12
_ZERO_COL = 1e-12


@dataclass
class CorrelationMatrix:
    C: np.ndarray
    phase_blocks: dict[str, list[int]] = field(default_factory=dict)
    source_matrix_kind: str = "whitened"
    zero_columns: list[int] = field(default_factory=list)


@dataclass
class CommunityGraph:
    A: np.ndarray
    tau: float
    communities: list[list[int]]
    labels: np.ndarray
    unlocatable: list[int] = field(default_factory=list)

    def community_of(self, index: int) -> list[int]:
        return self.communities[int(self.labels[index])]

    def same_community(self, i: int, j: int) -> bool:
        return self.labels[i] == self.labels[j]

    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.communities])


def column_correlations(X: np.ndarray, phases: list[str] | None = None,
                        kind: str = "whitened") -> CorrelationMatrix:
    """|x_m^H x_n| / (||x_m|| ||x_n||) for every column pair.

    With ``phases`` (one label per column) only same-phase pairs are kept.
    Zero columns correlate with nothing and keep a unit diagonal.
    """
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    n = X.shape[1]
    norms = np.linalg.norm(X, axis=0)
    zero = norms <= _ZERO_COL * max(norms.max(initial=0.0), 1e-300)
    safe = np.where(zero, 1.0, norms)
    G = np.abs(X.conj().T @ X) / np.outer(safe, safe)
    G[zero, :] = 0.0
    G[:, zero] = 0.0
    G = np.clip(G, 0.0, 1.0)
    G[G > 1.0 - _UNIT_SNAP] = 1.0
    G = np.maximum(G, G.T)
    blocks = {}
    if phases is not None:
        phases = list(phases)
        if len(phases) != n:
            raise ValueError("need one phase label per column")
        lab = np.array(phases)
        G[lab[:, None] != lab[None, :]] = 0.0
        blocks = {p: np.flatnonzero(lab == p).tolist() for p in PHASES if np.any(lab == p)}
    np.fill_diagonal(G, 1.0)
    return CorrelationMatrix(G, blocks, kind, np.flatnonzero(zero).tolist())


def threshold_adjacency(corr: CorrelationMatrix, tau: float = DEFAULT_TAU) -> CommunityGraph:
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    A = (corr.C >= tau).astype(np.int8)
    np.fill_diagonal(A, 0)
    n_comp, raw = connected_components(A, directed=False)
    groups: dict[int, list[int]] = {}
    for i, c in enumerate(raw):
        groups.setdefault(int(c), []).append(i)
    comms = sorted(groups.values(), key=lambda g: g[0])
    labels = np.empty(A.shape[0], dtype=int)
    for k, g in enumerate(comms):
        labels[g] = k
    return CommunityGraph(A, tau, comms, labels, list(corr.zero_columns))


@dataclass(frozen=True)
class Community:
    id: int
    members: tuple[tuple[str, str], ...]

    @property
    def buses(self) -> list[str]:
        out = []
        for b, _ in self.members:
            if b not in out:
                out.append(b)
        return out


def extract_communities(graph: CommunityGraph, index_map: NodeIndexMap) -> list[Community]:
    return [Community(k, tuple(index_map.entries[i] for i in comm))
            for k, comm in enumerate(graph.communities)]


def sensing_matrix(blocks: PartitionedBlocks, kind: str = "whitened",
                   wm: WhitenedModel | None = None,
                   rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Sensing matrix with columns in original node-phase order."""
    M = blocks.M
    if kind == "whitened":
        wm = wm or build_whitened_model(blocks, rank_tol)
        X = wm.D
    elif kind == "raw":
        X = blocks.Z_a
    else:
        raise ValueError(f"unknown sensing matrix kind {kind!r}")
    out = np.empty((X.shape[0], M), dtype=complex)
    out[:, blocks.permutation] = X
    return out


def community_graph(blocks: PartitionedBlocks, index_map: NodeIndexMap,
                    tau: float = DEFAULT_TAU, kind: str = "whitened",
                    wm: WhitenedModel | None = None,
                    rank_tol: float = DEFAULT_RANK_TOL) -> tuple[CorrelationMatrix, CommunityGraph]:
    X = sensing_matrix(blocks, kind, wm, rank_tol)
    corr = column_correlations(X, [p for _, p in index_map.entries], kind)
    return corr, threshold_adjacency(corr, tau)


def in_same_community(graph: CommunityGraph, index_map: NodeIndexMap,
                      bus_a: str, bus_b: str, phases) -> bool:
    """True when the two buses share a community on every listed phase."""
    return all(graph.same_community(index_map.index(bus_a, p), index_map.index(bus_b, p))
               for p in phases)


@dataclass
class PlacementScore:
    monitored: tuple[str, ...]
    K: int
    M: int
    rank_Yau: int
    condition_Yau: float
    max_community_size: dict[str, int]
    mean_community_size: dict[str, float]
    num_communities: dict[str, int]
    adjacent_sensors: bool
    unlocatable: int = 0

    @property
    def overall_max_community(self) -> int:
        return max(self.max_community_size.values(), default=1)

    def summary(self) -> str:
        lines = [f"placement: {','.join(self.monitored)}  (K={self.K}, M={self.M})",
                 f"rank(Y_au) = {self.rank_Yau}   cond(Y_au Y_uu^-1) = {self.condition_Yau:.4g}"]
        for p in self.max_community_size:
            lines.append(f"phase {p}: {self.num_communities[p]} communities, "
                         f"max size {self.max_community_size[p]}, "
                         f"mean size {self.mean_community_size[p]:.2f}")
        if self.adjacent_sensors:
            lines.append("warning: monitored buses are adjacent (Y_aa is not diagonal)")
        if self.unlocatable:
            lines.append(f"warning: {self.unlocatable} node-phase(s) are invisible to all sensors")
        return "\n".join(lines)


def _community_stats(graph: CommunityGraph, index_map: NodeIndexMap):
    mx, mean, num = {}, {}, {}
    for p in PHASES:
        rows = set(index_map.phase_indices(p))
        if not rows:
            continue
        sizes = [len(c) for c in graph.communities if c[0] in rows]
        mx[p], mean[p], num[p] = max(sizes), float(np.mean(sizes)), len(sizes)
    return mx, mean, num


def _adjacent(blocks: PartitionedBlocks, index_map: NodeIndexMap) -> bool:
    Yaa = blocks.Y_aa
    buses = [index_map.entries[i][0] for i in blocks.available]
    for i in range(len(buses)):
        for j in range(len(buses)):
            if buses[i] != buses[j] and Yaa[i, j] != 0:
                return True
    return False


def score_blocks(blocks: PartitionedBlocks, index_map: NodeIndexMap, monitored,
                 tau: float = DEFAULT_TAU, rank_tol: float = DEFAULT_RANK_TOL) -> PlacementScore:
    if blocks.K == blocks.M:
        n = {p: len(index_map.phase_indices(p)) for p in PHASES if index_map.phase_indices(p)}
        return PlacementScore(tuple(monitored), blocks.K, blocks.M, 0, 1.0,
                              {p: 1 for p in n}, {p: 1.0 for p in n}, dict(n),
                              _adjacent(blocks, index_map))
    wm = build_whitened_model(blocks, rank_tol)
    _, graph = community_graph(blocks, index_map, tau, "whitened", wm)
    mx, mean, num = _community_stats(graph, index_map)
    return PlacementScore(tuple(monitored), blocks.K, blocks.M, wm.rank, wm.condition,
                          mx, mean, num, _adjacent(blocks, index_map), len(graph.unlocatable))


def placement_quality(model: NetworkModel, placement: Placement, tau: float = DEFAULT_TAU,
                      rank_tol: float = DEFAULT_RANK_TOL,
                      adm: AdmittanceMatrix | None = None,
                      imp: ImpedanceMatrix | None = None) -> PlacementScore:
    adm = adm or build_admittance(model)
    imp = imp or invert_to_impedance(adm)
    if placement.K >= adm.index_map.M:
        raise ValueError("placement_quality needs at least one unmonitored node-phase")
    blocks = partition(adm, imp, placement)
    return score_blocks(blocks, adm.index_map, placement.monitored, tau, rank_tol)


def greedy_placement(model: NetworkModel, n_sensors: int, tau: float = DEFAULT_TAU,
                     rank_tol: float = DEFAULT_RANK_TOL,
                     adm: AdmittanceMatrix | None = None,
                     imp: ImpedanceMatrix | None = None) -> Placement:
    """Grow a placement one bus at a time, sources first.

    Each step adds the bus giving the smallest maximum community size, ties
    broken by the condition number of Y_au Y_uu^-1 and then bus order.
    """
    buses = model.bus_ids
    if not 1 <= n_sensors <= len(buses):
        raise ValueError(f"n_sensors must be in 1..{len(buses)}")
    adm = adm or build_admittance(model)
    imp = imp or invert_to_impedance(adm)
    imap = adm.index_map
    sources = model.source_buses
    if n_sensors < len(sources):
        warnings.warn(f"{n_sensors} sensor(s) cannot cover {len(sources)} source bus(es); "
                      "the fault current approximation will be unavailable", stacklevel=2)
    chosen = list(sources[:n_sensors])
    while len(chosen) < n_sensors:
        best = None
        for order, bus in enumerate(buses):
            if bus in chosen:
                continue
            trial = chosen + [bus]
            pl = make_placement(imap, trial)
            blocks = partition(adm, imp, pl)
            score = score_blocks(blocks, imap, trial, tau, rank_tol)
            key = (score.overall_max_community, score.condition_Yau, order)
            if best is None or key < best[0]:
                best = (key, bus)
        chosen.append(best[1])
    return make_placement(imap, chosen)


# --------------------------------------------------------------------------
# exports


def feeder_order(model: NetworkModel, root: str | None = None) -> list[str]:
    """Buses in depth-first feeder order from the first source (or ``root``)."""
    g = model.graph()
    root = root or model.source_buses[0]
    pos = {b: i for i, b in enumerate(model.bus_ids)}
    order, seen, stack = [], set(), [root]
    while stack:
        b = stack.pop()
        if b in seen:
            continue
        seen.add(b)
        order.append(b)
        stack.extend(sorted((n for n in g.neighbors(b) if n not in seen),
                            key=lambda n: -pos[n]))
    return order + [b for b in model.bus_ids if b not in seen]


def phase_view(corr: CorrelationMatrix, index_map: NodeIndexMap, phase: str,
               bus_order: list[str] | None = None) -> tuple[list[str], np.ndarray]:
    """Rows/cols of C for one phase, optionally reordered by bus."""
    idx = index_map.phase_indices(phase)
    if bus_order is not None:
        rank = {b: i for i, b in enumerate(bus_order)}
        idx = sorted(idx, key=lambda i: rank.get(index_map.entries[i][0], len(rank)))
    labels = [index_map.entries[i][0] for i in idx]
    return labels, corr.C[np.ix_(idx, idx)]


def write_correlation_csv(path, labels: list[str], C: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("bus," + ",".join(labels) + "\n")
        for lab, row in zip(labels, C):
            fh.write(lab + "," + ",".join(repr(float(v)) for v in row) + "\n")


def write_communities_csv(path, communities: list[Community]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("community_id,bus,phase\n")
        for comm in communities:
            for bus, phase in comm.members:
                fh.write(f"{comm.id},{bus},{phase}\n")


def write_adjacency_csv(path, labels: list[str], A: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("node," + ",".join(labels) + "\n")
        for lab, row in zip(labels, A):
            fh.write(lab + "," + ",".join(str(int(v)) for v in row) + "\n")


def _color(v: float) -> str:
    # white -> dark blue
    v = min(max(float(v), 0.0), 1.0)
    r = int(round(255 * (1 - v) + 8 * v))
    g = int(round(255 * (1 - v) + 48 * v))
    b = int(round(255 * (1 - v) + 107 * v))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(labels: list[str], C: np.ndarray, title: str = "",
                tau: float | None = None, cell: int = 14) -> str:
    """Self-contained SVG heatmap; with ``tau`` the map is thresholded."""
    n = len(labels)
    margin = 60
    size = margin + n * cell + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}" '
           f'font-family="sans-serif" font-size="{max(cell - 5, 6)}">']
    if title:
        out.append(f'<text x="{margin}" y="14" font-size="12">{escape(title)}</text>')
    for i in range(n):
        for j in range(n):
            v = C[i, j] if tau is None else float(C[i, j] >= tau)
            out.append(f'<rect x="{margin + j * cell}" y="{margin + i * cell}" width="{cell}" '
                       f'height="{cell}" fill="{_color(v)}"><title>{escape(labels[i])} / '
                       f'{escape(labels[j])}: {float(C[i, j]):.3f}</title></rect>')
    for k, lab in enumerate(labels):
        y = margin + k * cell + cell - 3
        out.append(f'<text x="{margin - 3}" y="{y}" text-anchor="end">{escape(lab)}</text>')
        x = margin + k * cell + cell - 3
        out.append(f'<text x="{x}" y="{margin - 3}" transform="rotate(-90 {x} {margin - 3})">'
                   f'{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def community_bus_graph(model: NetworkModel, graph: CommunityGraph,
                        index_map: NodeIndexMap, phase: str) -> nx.Graph:
    """Thresholded correlation edges for one phase, keyed by bus id."""
    g = nx.Graph()
    idx = index_map.phase_indices(phase)
    g.add_nodes_from(index_map.entries[i][0] for i in idx)
    for a in idx:
        for b in idx:
            if a < b and graph.A[a, b]:
                g.add_edge(index_map.entries[a][0], index_map.entries[b][0])
    return g


def spans_disconnected_region(model: NetworkModel, community: Community) -> bool:
    """True if a community's buses do not form a connected piece of the feeder."""
    buses = community.buses
    if len(buses) < 2:
        return False
    return not nx.is_connected(model.graph().subgraph(buses))
