"""Disjoint-set forests in pure Python."""
from __future__ import annotations


class DisjointSet:
    """Union by rank with path compression over ``0..n-1``."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def __len__(self):
        return len(self.parent)

    def add(self) -> int:
        x = len(self.parent)
        self.parent.append(x)
        self.rank.append(0)
        return x

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return ra


class DetachableDisjointSet:
    """Partition of particles supporting merge and single-particle detachment.

    A disjoint-set forest cannot delete members, so each particle points at a
    *slot* of the forest.  Detaching gives the particle a fresh slot; the old
    slot stays behind as a ghost so the rest of the cluster keeps its root.
    ``live[root]`` counts the particles (not ghosts) in each cluster.
    """

    def __init__(self, n: int, giant: bool = False):
        self.forest = DisjointSet(n)
        self.slot = list(range(n))
        self.live = [1] * n
        if giant:
            for x in range(1, n):
                self.union(0, x)

    @property
    def n(self) -> int:
        return len(self.slot)

    def root(self, x: int) -> int:
        return self.forest.find(self.slot[x])

    def size(self, x: int) -> int:
        return self.live[self.root(x)]

    def union(self, a: int, b: int) -> None:
        ra, rb = self.root(a), self.root(b)
        if ra == rb:
            return
        total = self.live[ra] + self.live[rb]
        r = self.forest.union(ra, rb)
        self.live[r] = total

    def detach(self, x: int) -> None:
        r = self.root(x)
        if self.live[r] == 1:
            return
        self.live[r] -= 1
        s = self.forest.add()
        self.live.append(1)
        self.slot[x] = s

    def labels(self) -> list[int]:
        """Canonical labels: the smallest particle index of each cluster."""
        first = {}
        out = []
        for x in range(self.n):
            out.append(first.setdefault(self.root(x), x))
        return out
