"""Finite truncations of infinite weighted graphs.

A graph is a symmetric, positively weighted, connected adjacency structure
with a distinguished root vertex.  Truncation follows the Dirichlet-with-ghosts
convention: every vertex keeps the measure

    m(x) = sum of ALL its edge weights in the ambient infinite graph,

and edges that lead to vertices outside the truncation are accounted in a
per-vertex ghost weight.  Ghost neighbors are treated as permanently holding
the value 0, so operators evaluated near the boundary agree with the ambient
operator applied to a compactly supported extension.

Vertices are stored in breadth-first order from the root, which makes the
combinatorial distance to the root a precomputed per-vertex attribute.
Graphs are immutable after construction (the backing arrays are marked
read-only) and safe to share across parallel workers.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Refuse to build truncations larger than this many vertices unless the
# caller raises the cap explicitly.
DEFAULT_VERTEX_CAP = 2_000_000

# A single vertex with no edges has an empty weight sum; give it unit measure
# so pure-absorption ODE oracles are well defined.  Test-only convention.
ISOLATED_VERTEX_MEASURE = 1.0


@dataclass(frozen=True)
class LatticeSpec:
    """Integer lattice of dimension ``dim`` truncated to the combinatorial
    ball of radius ``radius``, with a uniform edge weight."""

    dim: int
    radius: int
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"lattice dim must be >= 1, got {self.dim}")
        if self.radius < 1:
            raise ValueError(f"lattice radius must be >= 1, got {self.radius}")
        if not self.weight > 0:
            raise ValueError(f"lattice edge weight must be > 0, got {self.weight}")


class WeightedGraph:
    """Immutable weighted graph in CSR form, BFS-ordered from the root.

    Attributes
    ----------
    n : number of vertices (ids are 0..n-1, root is always id 0)
    indptr, indices, weights : CSR adjacency (both edge directions stored)
    src : edge source id per CSR entry (parallel to ``indices``)
    measure : m(x), the full ambient weight sum at x (includes ghost weight)
    ghost : total weight of edges to truncated-away neighbors held at 0
    dist : combinatorial distance to the root
    labels : original vertex labels (lattice coordinates or file ids)
    """

    __slots__ = ("n", "indptr", "indices", "weights", "src", "measure",
                 "ghost", "dist", "labels", "_label_index")

    def __init__(self, indptr, indices, weights, measure, ghost, dist, labels):
        self.n = len(indptr) - 1
        self.indptr = np.ascontiguousarray(indptr, dtype=np.intp)
        self.indices = np.ascontiguousarray(indices, dtype=np.intp)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.src = np.repeat(np.arange(self.n, dtype=np.intp),
                             np.diff(self.indptr))
        self.measure = np.ascontiguousarray(measure, dtype=np.float64)
        self.ghost = np.ascontiguousarray(ghost, dtype=np.float64)
        self.dist = np.ascontiguousarray(dist, dtype=np.intp)
        self.labels = tuple(labels)
        self._label_index = {lab: i for i, lab in enumerate(self.labels)}
        for arr in (self.indptr, self.indices, self.weights, self.src,
                    self.measure, self.ghost, self.dist):
            arr.setflags(write=False)

    @property
    def root(self) -> int:
        return 0

    @property
    def radius(self) -> int:
        """Truncation radius: the largest distance to the root."""
        return int(self.dist.max())

    @property
    def n_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    def degree(self, x: int) -> int:
        return int(self.indptr[x + 1] - self.indptr[x])

    def neighbors(self, x: int):
        """Iterate (neighbor id, weight) pairs at vertex ``x``."""
        lo, hi = self.indptr[x], self.indptr[x + 1]
        return zip(self.indices[lo:hi].tolist(), self.weights[lo:hi].tolist())

    def index_of(self, label) -> int:
        """Vertex id carrying the given original label."""
        return self._label_index[label]

    def __repr__(self) -> str:
        return (f"WeightedGraph(n={self.n}, edges={self.n_edges}, "
                f"radius={self.radius})")


def _assemble(labels, edges, root_label, ghost_by_label) -> WeightedGraph:
    """Build a WeightedGraph from labeled undirected edges.

    Enforces: no self-loops, strictly positive weights, no duplicate edges,
    connectivity from the root.  Vertices are reordered breadth-first from the
    root, visiting neighbors in sorted label order so construction is
    deterministic.
    """
    label_set = set(labels)
    if root_label not in label_set:
        raise ValueError(f"root {root_label!r} is not a vertex")
    adj: dict = {lab: [] for lab in labels}
    seen = set()
    for a, b, w in edges:
        if a == b:
            raise ValueError(f"self-loop at vertex {a!r}")
        if not (w > 0) or not math.isfinite(w):
            raise ValueError(f"edge ({a!r},{b!r}) has nonpositive weight {w}")
        if a not in label_set or b not in label_set:
            raise ValueError(f"edge ({a!r},{b!r}) references unknown vertex")
        key = (a, b) if repr(a) <= repr(b) else (b, a)
        if key in seen:
            raise ValueError(f"duplicate edge ({a!r},{b!r})")
        seen.add(key)
        adj[a].append((b, w))
        adj[b].append((a, w))

    # Deterministic BFS order from the root.
    order = [root_label]
    dist_by_label = {root_label: 0}
    queue = deque([root_label])
    while queue:
        x = queue.popleft()
        for y, _ in sorted(adj[x], key=lambda t: repr(t[0])):
            if y not in dist_by_label:
                dist_by_label[y] = dist_by_label[x] + 1
                order.append(y)
                queue.append(y)
    if len(order) != len(labels):
        missing = sorted(label_set - set(order), key=repr)[:3]
        raise ValueError(
            f"graph is not connected: {len(labels) - len(order)} vertices "
            f"unreachable from root, e.g. {missing}")

    index = {lab: i for i, lab in enumerate(order)}
    indptr = np.zeros(len(order) + 1, dtype=np.intp)
    indices_rows = []
    weights_rows = []
    for i, lab in enumerate(order):
        row = sorted(((index[y], w) for y, w in adj[lab]), key=lambda t: t[0])
        indptr[i + 1] = indptr[i] + len(row)
        indices_rows.extend(idx for idx, _ in row)
        weights_rows.extend(w for _, w in row)
    indices = np.asarray(indices_rows, dtype=np.intp)
    weights = np.asarray(weights_rows, dtype=np.float64)

    ghost = np.zeros(len(order))
    for lab, gval in ghost_by_label.items():
        if lab not in index:
            raise ValueError(f"ghost entry references unknown vertex {lab!r}")
        if gval < 0 or not math.isfinite(gval):
            raise ValueError(f"ghost weight at {lab!r} must be >= 0, got {gval}")
        ghost[index[lab]] = gval

    measure = np.zeros(len(order))
    np.add.at(measure, np.repeat(np.arange(len(order)), np.diff(indptr)),
              weights)
    measure += ghost
    if len(order) == 1 and measure[0] == 0.0:
        measure[0] = ISOLATED_VERTEX_MEASURE
    if not (measure > 0).all():
        bad = order[int(np.argmin(measure))]
        raise ValueError(f"vertex {bad!r} has zero measure")

    dist = np.asarray([dist_by_label[lab] for lab in order], dtype=np.intp)
    return WeightedGraph(indptr, indices, weights, measure, ghost, dist, order)


def lattice_ball_count(dim: int, radius: int) -> int:
    """Number of integer points with L1 norm <= radius in ``dim`` dimensions."""
    return sum(2**k * math.comb(dim, k) * math.comb(radius, k)
               for k in range(min(dim, radius) + 1))


def build_lattice(spec: LatticeSpec,
                  vertex_cap: int = DEFAULT_VERTEX_CAP) -> WeightedGraph:
    """Truncate the unit-distance integer lattice to a combinatorial ball.

    Every vertex carries the full infinite-lattice measure m(x) = 2*dim*weight;
    edges leaving the ball are recorded as ghost weight (Dirichlet truncation).
    """
    count = lattice_ball_count(spec.dim, spec.radius)
    if count > vertex_cap:
        raise ValueError(
            f"lattice ball dim={spec.dim} radius={spec.radius} has {count} "
            f"vertices, above the cap of {vertex_cap}")

    points: list[tuple] = []

    def fill(prefix, budget, remaining):
        if remaining == 0:
            points.append(tuple(prefix))
            return
        for v in range(-budget, budget + 1):
            prefix.append(v)
            fill(prefix, budget - abs(v), remaining - 1)
            prefix.pop()

    fill([], spec.radius, spec.dim)
    points.sort(key=lambda pt: (sum(abs(c) for c in pt), pt))
    point_set = set(points)

    edges = []
    ghost_counts = {}
    for pt in points:
        outside = 0
        for axis in range(spec.dim):
            for step in (-1, 1):
                nbr = pt[:axis] + (pt[axis] + step,) + pt[axis + 1:]
                if nbr in point_set:
                    if nbr > pt:  # store each undirected edge once
                        edges.append((pt, nbr, spec.weight))
                else:
                    outside += 1
        if outside:
            ghost_counts[pt] = outside * spec.weight

    return _assemble(points, edges, (0,) * spec.dim, ghost_counts)


def load_edge_list(path) -> WeightedGraph:
    """Read a graph from an edge-list text file.

    Format: one line per undirected edge ``x y w`` (integer vertex labels,
    positive weight); one line ``root x`` naming the root vertex; optional
    lines ``ghost x g`` giving per-vertex ghost weight.  Blank lines and
    ``#`` comments are ignored.
    """
    path = Path(path)
    root_label = None
    edges = []
    ghost = {}
    labels = set()
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "root":
                if root_label is not None:
                    raise ValueError("duplicate root line")
                if len(parts) != 2:
                    raise ValueError("expected 'root <vertex>'")
                root_label = int(parts[1])
                labels.add(root_label)
            elif parts[0] == "ghost":
                if len(parts) != 3:
                    raise ValueError("expected 'ghost <vertex> <weight>'")
                ghost[int(parts[1])] = float(parts[2])
                labels.add(int(parts[1]))
            elif len(parts) == 3:
                a, b, w = int(parts[0]), int(parts[1]), float(parts[2])
                edges.append((a, b, w))
                labels.add(a)
                labels.add(b)
            else:
                raise ValueError("expected 'x y w', 'root x' or 'ghost x g'")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if root_label is None:
        raise ValueError(f"{path}: missing 'root' line")
    return _assemble(sorted(labels), edges, root_label, ghost)


def distance(g: WeightedGraph, x: int, x0: int) -> int:
    """Combinatorial distance (shortest edge path) between two vertices."""
    for v in (x, x0):
        if not 0 <= v < g.n:
            raise ValueError(f"vertex {v} not in graph of size {g.n}")
    if x0 == g.root:
        return int(g.dist[x])
    if x == g.root:
        return int(g.dist[x0])
    if x == x0:
        return 0
    seen = {x: 0}
    queue = deque([x])
    while queue:
        v = queue.popleft()
        lo, hi = g.indptr[v], g.indptr[v + 1]
        for y in g.indices[lo:hi]:
            y = int(y)
            if y not in seen:
                seen[y] = seen[v] + 1
                if y == x0:
                    return seen[y]
                queue.append(y)
    raise ValueError(f"vertex {x0} unreachable from {x}: connectivity breach")


def ball_volume(g: WeightedGraph, R: int) -> float:
    """Measure of the ball of radius R about the root: sum of m(x), d(x) <= R."""
    if R < 0:
        raise ValueError(f"ball radius must be >= 0, got {R}")
    if R > g.radius:
        raise ValueError(
            f"ball radius {R} exceeds truncation radius {g.radius}")
    return float(g.measure[g.dist <= R].sum())


def volume_growth_constant(g: WeightedGraph, N: int, R_list) -> float:
    """Smallest admissible C with ball volume <= C * R**N over sampled radii."""
    R_list = list(R_list)
    if not R_list:
        raise ValueError("volume growth audit needs at least one radius")
    worst = 0.0
    for R in R_list:
        if R < 1:
            raise ValueError(f"audit radii must be >= 1, got {R}")
        worst = max(worst, ball_volume(g, R) / float(R) ** N)
    return worst
