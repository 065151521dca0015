"""Cluster picture of a noisy circuit: interactions merge clusters, collapses
detach particles, and the resulting partitions match percolation connectivity.

Time step ``t`` first applies the interactions scheduled at ``t`` and then the
noise on the vertical edges ``t -> t + 1``.  ``labels[t]`` is the partition right
after the interactions of step ``t``, which is the partition compared against
same-layer connectivity.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Literal

import numpy as np

from .errors import ShapeError, ValidationError
from .lattice import LatticeSpec, PercolationLattice, _schedule, build_lattice
from .percolation import NoiseRealization, sample_realization
from .unionfind import DetachableDisjointSet, DisjointSet

InitMode = Literal["singletons", "giant"]


def _check_init(init):
    if init not in ("singletons", "giant"):
        raise ValidationError(f"init must be 'singletons' or 'giant', got {init!r}")


@dataclass(frozen=True)
class ClusterTrajectory:
    """Partitions of the particles over time.

    Attributes
    ----------
    labels : (steps + 1, n) int array
        Canonical cluster labels after the interactions of each step.
    after_noise : (steps, n) int array
        Labels after the noise that follows step ``t`` (edges ``t -> t + 1``).
    """

    spec: LatticeSpec
    realization: NoiseRealization
    init: str
    labels: np.ndarray
    after_noise: np.ndarray

    def cluster_sizes(self, t: int) -> np.ndarray:
        return np.bincount(self.labels[t], minlength=self.spec.n)[
            np.unique(self.labels[t])]

    def rows(self):
        """``(t, particle, cluster_id)`` for every step and particle."""
        for t, row in enumerate(self.labels):
            for x, c in enumerate(row):
                yield t, x, int(c)


def _check_realization(spec, r):
    lat = r.lattice
    if lat.spec != spec or r.is_open.shape != (spec.n * spec.steps,):
        raise ShapeError(
            f"realization for {lat.spec} with {r.is_open.shape[0]} edges does "
            f"not match {spec}")


def evolve_clusters(spec: LatticeSpec, r: NoiseRealization,
                    init: InitMode = "singletons") -> ClusterTrajectory:
    _check_init(init)
    _check_realization(spec, r)
    n, T = spec.n, spec.steps
    closed = ~r.is_open.reshape(T, n) if T else np.zeros((0, n), bool)
    dsu = DetachableDisjointSet(n, giant=(init == "giant"))
    labels = [dsu.labels()]
    after = []
    for t in range(T + 1):
        if t > 0:
            for a, b in _schedule(spec, t):
                dsu.union(a, b)
            labels.append(dsu.labels())
        if t < T:
            for x in np.flatnonzero(closed[t]):
                dsu.detach(int(x))
            after.append(dsu.labels())
    return ClusterTrajectory(spec, r, init,
                             np.asarray(labels, dtype=np.int64),
                             np.asarray(after, dtype=np.int64).reshape(T, n))


def giant_initial_augmentation(lattice: PercolationLattice) -> PercolationLattice:
    """Join every layer-0 node by an always-open chain (single giant cluster at t=0)."""
    nodes = lattice.images(0)
    chain = np.stack([nodes[:-1], nodes[1:]], axis=1).astype(np.int64)
    fixed = np.concatenate([lattice.fixed_edges, chain]).reshape(-1, 2)
    return replace(lattice, fixed_edges=fixed)


@dataclass(frozen=True)
class CorrespondenceResult:
    ok: bool
    mismatch: tuple[int, int, int] | None = None

    def __bool__(self):
        return self.ok


def _canonical(roots):
    first = {}
    return [first.setdefault(r, x) for x, r in enumerate(roots)]


def _first_mismatch(t, lab_c, lab_p):
    n = len(lab_c)
    for a in range(n):
        for b in range(a + 1, n):
            if (lab_c[a] == lab_c[b]) != (lab_p[a] == lab_p[b]):
                return (t, a, b)
    return (t, -1, -1)


def percolation_layer_labels(lattice: PercolationLattice,
                             is_open: np.ndarray) -> np.ndarray:
    """Canonical particle labels at each layer ``t`` from connectivity of the
    images of ``(x, t)`` using only edges (and fixed edges) up to layer ``t``."""
    spec = lattice.spec
    n, T = spec.n, spec.steps
    dsu = DisjointSet(lattice.n_nodes)
    # fixed edges at layer 0 only (the giant augmentation)
    for u, v in lattice.fixed_edges:
        dsu.union(int(u), int(v))
    out = []
    edges = lattice.edges
    for t in range(T + 1):
        if t > 0:
            lo = (t - 1) * n
            for e in range(lo, lo + n):
                if is_open[e]:
                    dsu.union(int(edges[e, 0]), int(edges[e, 1]))
        out.append(_canonical([dsu.find(int(v)) for v in lattice.images(t)]))
    return np.asarray(out, dtype=np.int64)


def verify_correspondence(spec: LatticeSpec, r: NoiseRealization,
                          init: InitMode = "singletons") -> CorrespondenceResult:
    """Check that cluster co-membership equals same-layer percolation
    connectivity at every step.

    For ``init="giant"`` the percolation side uses the lattice with the layer-0
    chain added by :func:`giant_initial_augmentation`.
    """
    _check_init(init)
    traj = evolve_clusters(spec, r, init)
    lattice = r.lattice
    if init == "giant" and not len(lattice.fixed_edges):
        lattice = giant_initial_augmentation(lattice)
    perc = percolation_layer_labels(lattice, r.is_open)
    for t in range(spec.steps + 1):
        if not np.array_equal(traj.labels[t], perc[t]):
            return CorrespondenceResult(False, _first_mismatch(
                t, traj.labels[t], perc[t]))
    return CorrespondenceResult(True)


@dataclass(frozen=True)
class SweepResult:
    trials: int
    mismatches: list

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> dict:
        return {"trials": self.trials, "ok": self.ok,
                "mismatches": [dict(m) for m in self.mismatches]}


_SWEEP_ETAS = (0.1, 0.3, 0.5, 0.7, 0.9)


def random_instance_specs(trials: int, seed: int, dims=(1, 2), max_n: int = 16,
                          max_steps: int = 16, etas=_SWEEP_ETAS):
    """Deterministic ``(spec, eta)`` draws for randomized correspondence checks."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        dim = int(rng.choice(dims))
        if dim == 1:
            sides = (int(rng.integers(2, max_n + 1)),)
        else:
            while True:
                sides = tuple(int(s) for s in rng.integers(2, max_n // 2 + 1, dim))
                if int(np.prod(sides)) <= max_n:
                    break
        spec = LatticeSpec(dim, sides, int(rng.integers(0, max_steps + 1)))
        out.append((spec, float(rng.choice(etas))))
    return out


def correspondence_sweep(trials: int, seed: int, init: InitMode = "singletons",
                         dims=(1, 2), max_n: int = 16, max_steps: int = 16,
                         stop_at_first: bool = True) -> SweepResult:
    """Run :func:`verify_correspondence` on random lattices and realizations."""
    lattice_of = lru_cache(maxsize=None)(build_lattice)
    bad = []
    for i, (spec, eta) in enumerate(random_instance_specs(
            trials, seed, dims, max_n, max_steps)):
        lattice = lattice_of(spec)
        if init == "giant":
            lattice = giant_initial_augmentation(lattice)
        r = sample_realization(lattice, 1.0 - eta, seed, i)
        res = verify_correspondence(spec, r, init)
        if not res.ok:
            bad.append({"trial": i, "dim": spec.dim, "sides": list(spec.sides),
                        "steps": spec.steps, "eta": eta,
                        "mismatch": list(res.mismatch)})
            if stop_at_first:
                break
    return SweepResult(trials, bad)
