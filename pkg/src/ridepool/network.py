"""Static directed road network with exact shortest-path travel times.

Every other module treats this as the travel-time oracle.  Travel times are
static for the whole run: the feasibility cache and the search pruning are
exact only when network times never decrease, so this module never mutates
edge weights after load.

Node ids are remapped to dense ``0..N-1`` indices at load; the original
(external) ids are retained for file round-trips.  Coordinates are planar
miles, pre-projected.
"""

from __future__ import annotations

import heapq
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, QueryError

#: Sentinel returned by :meth:`Network.travel_time` for disconnected pairs.
UNREACHABLE = math.inf

#: Node counts up to this size get the full travel-time matrix at load time;
#: larger networks fill per-source rows lazily.
EAGER_MATRIX_LIMIT = 2000


class Network:
    """Directed graph with memoized single-source shortest-path rows.

    Read-only after construction.  Concurrent queries are safe: cache fills
    are idempotent (recomputation yields the identical row), so racing
    writers store equal values.
    """

    def __init__(
        self,
        coords: np.ndarray,
        edges: Sequence[tuple[int, int, float]],
        external_ids: Sequence[str],
        eager_limit: int = EAGER_MATRIX_LIMIT,
    ):
        self.n_nodes = len(external_ids)
        self.coords = np.asarray(coords, dtype=float).reshape(self.n_nodes, 2)
        self.external_ids = [str(e) for e in external_ids]
        self._index = {e: i for i, e in enumerate(self.external_ids)}
        self.edges = [(int(a), int(b), float(w)) for a, b, w in edges]

        # forward / reverse adjacency, neighbor-sorted for determinism
        self._adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n_nodes)]
        self._radj: list[list[tuple[int, float]]] = [[] for _ in range(self.n_nodes)]
        for a, b, w in self.edges:
            self._adj[a].append((b, w))
            self._radj[b].append((a, w))
        for lst in self._adj:
            lst.sort()
        for lst in self._radj:
            lst.sort()

        self._rows: dict[int, np.ndarray] = {}       # source -> distances
        self._rows_to: dict[int, np.ndarray] = {}    # target -> distances on reverse graph
        self._matrix: np.ndarray | None = None
        if self.n_nodes <= eager_limit:
            self.matrix()

    # -- queries -------------------------------------------------------

    def node_index(self, external_id) -> int:
        try:
            return self._index[str(external_id)]
        except KeyError:
            raise QueryError(f"unknown node id {external_id!r}") from None

    def external_id(self, node: int) -> str:
        self._check_node(node)
        return self.external_ids[node]

    def travel_time(self, a: int, b: int) -> float:
        """Exact shortest-path duration in seconds; UNREACHABLE when no path."""
        self._check_node(a)
        self._check_node(b)
        if self._matrix is not None:
            return float(self._matrix[a, b])
        return float(self._row_from(a)[b])

    def recompute_travel_time(self, a: int, b: int) -> float:
        """Cold recomputation bypassing every cache (cache-transparency checks)."""
        self._check_node(a)
        self._check_node(b)
        return float(_dijkstra(self._adj, a, self.n_nodes)[b])

    def shortest_path(self, a: int, b: int) -> list[int]:
        """Node sequence from a to b along a shortest path.

        Among equal-cost paths the one choosing the smallest next node id at
        every step is returned.
        """
        self._check_node(a)
        self._check_node(b)
        if a == b:
            return [a]
        dist_to = self._row_to(b)
        if math.isinf(dist_to[a]):
            raise QueryError(f"no path from node {a} to node {b}")
        path = [a]
        u = a
        while u != b:
            best = -1
            remaining = dist_to[u]
            for v, w in self._adj[u]:
                if w + dist_to[v] == remaining:
                    best = v
                    break  # neighbors sorted ascending: first hit is smallest
            if best < 0:
                raise QueryError(f"path reconstruction failed at node {u}")
            path.append(best)
            u = best
        return path

    def path_duration(self, path: Sequence[int]) -> float:
        """Sum of edge times along an explicit node sequence."""
        total = 0.0
        for u, v in zip(path, path[1:]):
            for nb, w in self._adj[u]:
                if nb == v:
                    total += w
                    break
            else:
                raise QueryError(f"no edge {u} -> {v}")
        return total

    def matrix(self) -> np.ndarray:
        """Full travel-time matrix (float64, inf = unreachable), built once."""
        if self._matrix is None:
            m = np.empty((self.n_nodes, self.n_nodes), dtype=float)
            for s in range(self.n_nodes):
                m[s] = self._row_from(s)
            self._matrix = m
        return self._matrix

    def hull_area(self) -> float:
        """Convex-hull area of node coordinates in square miles (0 if degenerate)."""
        from scipy.spatial import ConvexHull, QhullError

        if self.n_nodes < 3:
            return 0.0
        try:
            return float(ConvexHull(self.coords).volume)
        except QhullError:
            return 0.0

    # -- internals -----------------------------------------------------

    def _check_node(self, node: int) -> None:
        if not (isinstance(node, (int, np.integer)) and 0 <= node < self.n_nodes):
            raise QueryError(f"invalid node id {node!r}")

    def _row_from(self, source: int) -> np.ndarray:
        row = self._rows.get(source)
        if row is None:
            row = _dijkstra(self._adj, source, self.n_nodes)
            self._rows[source] = row
        return row

    def _row_to(self, target: int) -> np.ndarray:
        row = self._rows_to.get(target)
        if row is None:
            row = _dijkstra(self._radj, target, self.n_nodes)
            self._rows_to[target] = row
        return row


def _dijkstra(adj: list[list[tuple[int, float]]], source: int, n: int) -> np.ndarray:
    dist = np.full(n, math.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = bytearray(n)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = 1
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


# -- construction --------------------------------------------------------


def load_network(
    node_records: Iterable[Sequence],
    edge_records: Iterable[Sequence],
    eager_limit: int = EAGER_MATRIX_LIMIT,
) -> Network:
    """Build a validated Network from parsed (id, x, y) and (from, to, seconds) rows.

    Raises DataError naming the offending record for duplicate node ids,
    dangling edge endpoints, or non-positive travel times.
    """
    ids: list[str] = []
    coords: list[tuple[float, float]] = []
    index: dict[str, int] = {}
    for rec in node_records:
        nid = str(rec[0]).strip()
        if nid in index:
            raise DataError(f"duplicate node id {nid!r}")
        try:
            x, y = float(rec[1]), float(rec[2])
        except (TypeError, ValueError, IndexError):
            raise DataError(f"bad node record {rec!r}") from None
        index[nid] = len(ids)
        ids.append(nid)
        coords.append((x, y))
    if not ids:
        raise DataError("network has no nodes")

    edges: list[tuple[int, int, float]] = []
    for rec in edge_records:
        a, b = str(rec[0]).strip(), str(rec[1]).strip()
        if a not in index:
            raise DataError(f"edge references unknown node {a!r}")
        if b not in index:
            raise DataError(f"edge references unknown node {b!r}")
        try:
            w = float(rec[2])
        except (TypeError, ValueError, IndexError):
            raise DataError(f"bad edge record {rec!r}") from None
        if not w > 0:
            raise DataError(f"edge {a!r} -> {b!r} has non-positive travel time {w}")
        edges.append((index[a], index[b], w))

    arr = np.array(coords, dtype=float) if coords else np.zeros((0, 2))
    return Network(arr, edges, ids, eager_limit=eager_limit)


def _read_table(path: str | Path, expected: Sequence[str]) -> list[list[str]]:
    """Read a delimiter-separated file (comma or whitespace) with a header row."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty file (header row required)")
    delim = "," if "," in lines[0] else None
    header = [c.strip() for c in (lines[0].split(delim) if delim is None else lines[0].split(","))]
    if [h.lower() for h in header] != list(expected):
        raise DataError(f"{path}: expected header {','.join(expected)}, got {','.join(header)}")
    rows = []
    for ln in lines[1:]:
        parts = [c.strip() for c in (ln.split(delim) if delim is None else ln.split(","))]
        if len(parts) != len(expected):
            raise DataError(f"{path}: malformed row {ln!r}")
        rows.append(parts)
    return rows


def load_network_files(
    node_path: str | Path,
    edge_path: str | Path,
    eager_limit: int = EAGER_MATRIX_LIMIT,
) -> Network:
    """Load from the on-disk format: node_id,x,y and from,to,travel_time_seconds."""
    nodes = _read_table(node_path, ("node_id", "x", "y"))
    edges = _read_table(edge_path, ("from", "to", "travel_time_seconds"))
    return load_network(nodes, edges, eager_limit=eager_limit)
