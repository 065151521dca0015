"""Space-time interaction graphs of nearest-neighbour circuits and their
contraction to a bond-percolation lattice.

Particles live on an open box of ``sides`` in ``dim`` dimensions and are
numbered in C order.  At step ``t`` (``1 <= t <= steps``) the particles are
paired along axis ``(t - 1) % dim``; the pairing offset along an axis flips
between consecutive visits to that axis, so the full pattern repeats every
``2 * dim`` steps.  Space-time vertices are dense integers ``t * n + x``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from .errors import CapacityError, ValidationError

MAX_VERTICES = 50_000_000


@dataclass(frozen=True)
class LatticeSpec:
    dim: int
    sides: tuple[int, ...]
    steps: int

    def __post_init__(self):
        sides = tuple(int(s) for s in self.sides)
        object.__setattr__(self, "sides", sides)
        if int(self.dim) < 1:
            raise ValidationError(f"dim must be >= 1, got {self.dim}")
        if len(sides) != self.dim:
            raise ValidationError(
                f"expected {self.dim} side lengths, got {len(sides)}")
        if any(s < 2 for s in sides):
            raise ValidationError(f"every side must be >= 2, got {sides}")
        if int(self.steps) < 0:
            raise ValidationError(f"steps must be >= 0, got {self.steps}")

    @classmethod
    def chain(cls, n: int, steps: int) -> "LatticeSpec":
        return cls(1, (n,), steps)

    @property
    def n(self) -> int:
        return math.prod(self.sides)

    @property
    def strides(self) -> tuple[int, ...]:
        out = []
        for k in range(self.dim):
            out.append(math.prod(self.sides[k + 1:]))
        return tuple(out)

    def coords(self, particle: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(particle, self.sides))

    def index(self, coords) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.sides))

    def manhattan(self, a: int, b: int) -> int:
        return sum(abs(i - j) for i, j in zip(self.coords(a), self.coords(b)))

    def neighbors(self, a: int, b: int) -> bool:
        return self.manhattan(a, b) == 1


def interaction_schedule(spec: LatticeSpec, t: int) -> list[tuple[int, int]]:
    """Pairs of particles that interact at step ``t``.

    The returned pairs form a matching of nearest neighbours along axis
    ``(t - 1) % dim``; particles without a partner idle.
    """
    if not 1 <= t <= spec.steps:
        raise ValidationError(f"step t={t} outside [1, {spec.steps}]")
    return _schedule(spec, t)


def _schedule(spec: LatticeSpec, t: int) -> list[tuple[int, int]]:
    axis = (t - 1) % spec.dim
    offset = ((t - 1) // spec.dim) % 2
    side = spec.sides[axis]
    stride = spec.strides[axis]
    coord = np.indices(spec.sides)[axis].ravel()
    first = np.flatnonzero(((coord - offset) % 2 == 0) & (coord + 1 < side))
    return [(int(x), int(x) + stride) for x in first]


@dataclass(frozen=True)
class SpacetimeGraph:
    """Vertices ``(x, t)`` with id ``t * n + x``; edges as ``(k, 2)`` id arrays.

    ``vertical[e]`` joins ``(x, t)`` and ``(x, t + 1)`` with ``e = t * n + x``.
    """

    spec: LatticeSpec
    vertical: np.ndarray
    interaction: np.ndarray

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def n_vertices(self) -> int:
        return self.spec.n * (self.spec.steps + 1)

    def vertex(self, x: int, t: int) -> int:
        return t * self.spec.n + x

    def unpack(self, v: int) -> tuple[int, int]:
        t, x = divmod(int(v), self.spec.n)
        return x, t


def build_spacetime_graph(spec: LatticeSpec,
                          max_vertices: int = MAX_VERTICES) -> SpacetimeGraph:
    n, T = spec.n, spec.steps
    if n * (T + 1) > max_vertices:
        raise CapacityError(
            f"{n * (T + 1)} space-time vertices exceed the limit {max_vertices}")
    lower = np.arange(n * T, dtype=np.int64)
    vertical = np.stack([lower, lower + n], axis=1)
    inter = []
    for t in range(1, T + 1):
        for a, b in _schedule(spec, t):
            inter.append((t * n + a, t * n + b))
    interaction = np.asarray(inter, dtype=np.int64).reshape(-1, 2)
    return SpacetimeGraph(spec, vertical, interaction)


@dataclass(frozen=True)
class PercolationLattice:
    """Bond-percolation lattice obtained by contracting interaction edges.

    Attributes
    ----------
    node_of_vertex : (n * (steps + 1),) array
        Contracted node of every space-time vertex.
    edges : (n * steps, 2) array
        Percolation edges; row ``e`` is the image of vertical edge ``e``.
    node_layer : array
        Time layer of each node.
    node_particles : (n_nodes, 2) array
        Particles merged into each node, ``-1`` padded.
    fixed_edges : (k, 2) array
        Edges that are open in every realization (empty for the plain model).
    """

    spec: LatticeSpec
    n_nodes: int
    node_of_vertex: np.ndarray
    edges: np.ndarray
    node_layer: np.ndarray
    node_particles: np.ndarray
    fixed_edges: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def image(self, x: int, t: int) -> int:
        return int(self.node_of_vertex[t * self.spec.n + x])

    def images(self, t: int) -> np.ndarray:
        n = self.spec.n
        return self.node_of_vertex[t * n:(t + 1) * n]

    def layer_nodes(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.node_layer == t)

    @cached_property
    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n_nodes)]
        for u, v in np.concatenate([self.edges, self.fixed_edges]):
            adj[u].append(int(v))
            adj[v].append(int(u))
        return adj

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def distances_from(self, source: int) -> np.ndarray:
        """Graph distance (all edges present) from ``source`` to every node."""
        dist = np.full(self.n_nodes, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        adj = self.adjacency
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def boundary_nodes(self, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Nodes holding a particle on the low / high face of ``axis``."""
        coord = np.indices(self.spec.sides)[axis].ravel()
        side = self.spec.sides[axis]
        lo = np.unique(self.node_of_vertex.reshape(-1, self.spec.n)[:, coord == 0])
        hi = np.unique(
            self.node_of_vertex.reshape(-1, self.spec.n)[:, coord == side - 1])
        return lo, hi


def contract_interactions(g: SpacetimeGraph) -> PercolationLattice:
    n, T = g.spec.n, g.spec.steps
    partner = np.full(g.n_vertices, -1, dtype=np.int64)
    if len(g.interaction):
        partner[g.interaction[:, 1]] = g.interaction[:, 0]
    node_of_vertex = np.empty(g.n_vertices, dtype=np.int64)
    particles = []
    layers = []
    for v in range(g.n_vertices):
        p = partner[v]
        if p >= 0:
            node = node_of_vertex[p]
            node_of_vertex[v] = node
            particles[node][1] = v % n
        else:
            node_of_vertex[v] = len(particles)
            particles.append([v % n, -1])
            layers.append(v // n)
    edges = node_of_vertex[g.vertical]
    return PercolationLattice(
        spec=g.spec,
        n_nodes=len(particles),
        node_of_vertex=node_of_vertex,
        edges=edges.reshape(-1, 2),
        node_layer=np.asarray(layers, dtype=np.int64),
        node_particles=np.asarray(particles, dtype=np.int64).reshape(-1, 2),
    )


def build_lattice(spec: LatticeSpec) -> PercolationLattice:
    return contract_interactions(build_spacetime_graph(spec))


def graph_edge_rows(g: SpacetimeGraph):
    """Rows ``(kind, x1, t1, x2, t2)`` for every edge of ``g``."""
    for kind, arr in (("vertical", g.vertical), ("interaction", g.interaction)):
        for u, v in arr:
            x1, t1 = g.unpack(u)
            x2, t2 = g.unpack(v)
            yield kind, x1, t1, x2, t2
