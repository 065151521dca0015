"""Monte-Carlo bond percolation on contracted circuit lattices.

Each sample is keyed by ``(master_seed, index)``: the uniforms of sample
``index`` come from ``SeedSequence(master_seed, spawn_key=(index,))`` and an
edge is open iff its uniform is below ``p``.  Estimates at several ``p`` thus
reuse the same draws (coupled sampling), and any partition of the index range
into chunks gives the same summed counts.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import os

import numpy as np
from scipy import stats

from . import _uf_kernels as uf
from .errors import (BracketError, DegenerateFitError, InsufficientDataError,
                     ValidationError)
from .lattice import LatticeSpec, PercolationLattice, build_lattice

MIN_FIT_HITS = 10
_CHUNK_FLOATS = 2_000_000


def _check_p(p):
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"p must lie in [0, 1], got {p}")


def sample_uniforms(master_seed: int, index: int, n_edges: int) -> np.ndarray:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.default_rng(ss).random(n_edges)


def _uniform_block(master_seed, start, stop, n_edges):
    out = np.empty((stop - start, n_edges))
    for row, i in enumerate(range(start, stop)):
        out[row] = sample_uniforms(master_seed, i, n_edges)
    return out


def _chunks(samples, n_edges):
    size = max(1, min(samples, _CHUNK_FLOATS // max(n_edges, 1)))
    return [(s, min(s + size, samples)) for s in range(0, samples, size)]


def _map_chunks(fn, samples, n_edges, threads):
    workers = threads if threads and threads > 0 else (os.cpu_count() or 1)
    chunks = _chunks(samples, n_edges)
    if workers == 1 or len(chunks) == 1:
        return [fn(a, b) for a, b in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), chunks))


@dataclass(frozen=True)
class NoiseRealization:
    """Open/closed state of every percolation edge for one sample.

    ``is_open[e]`` refers to vertical edge ``e`` (particle ``e % n`` between
    layers ``e // n`` and ``e // n + 1``); closed means the particle collapsed.
    """

    lattice: PercolationLattice
    is_open: np.ndarray
    p: float
    seed: int | None = None
    index: int | None = None


def sample_realization(lattice: PercolationLattice, p: float,
                       master_seed: int, index: int) -> NoiseRealization:
    _check_p(p)
    u = sample_uniforms(master_seed, index, lattice.n_edges)
    return NoiseRealization(lattice, u < p, float(p), int(master_seed), int(index))


def realization_from_bits(lattice: PercolationLattice, is_open) -> NoiseRealization:
    bits = np.asarray(is_open, dtype=bool)
    if bits.shape != (lattice.n_edges,):
        raise ValidationError(
            f"expected {lattice.n_edges} edge bits, got shape {bits.shape}")
    return NoiseRealization(lattice, bits, float("nan"))


@dataclass(frozen=True)
class ClusterPartition:
    labels: np.ndarray
    parent: np.ndarray
    rank: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_nodes)[
            np.unique(self.labels)]

    @property
    def n_components(self) -> int:
        return len(np.unique(self.labels))

    def size_histogram(self) -> dict[int, int]:
        vals, counts = np.unique(self.sizes, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def find(self, x: int) -> int:
        return int(self.labels[x])

    def same(self, a: int, b: int) -> bool:
        return self.labels[a] == self.labels[b]


def _kernel_args(lattice):
    e = lattice.edges
    f = lattice.fixed_edges
    return (lattice.n_nodes, np.ascontiguousarray(e[:, 0]),
            np.ascontiguousarray(e[:, 1]), np.ascontiguousarray(f[:, 0]),
            np.ascontiguousarray(f[:, 1]))


def connected_components(r: NoiseRealization) -> ClusterPartition:
    n_nodes, eu, ev, fu, fv = _kernel_args(r.lattice)
    labels, parent, rank = uf.components(n_nodes, eu, ev, r.is_open, fu, fv)
    return ClusterPartition(labels, parent, rank)


@dataclass(frozen=True)
class ClusterStats:
    histogram: dict[int, int]
    mean: float
    weighted_mean: float
    max: int
    n_components: int


def cluster_size_stats(r: NoiseRealization) -> ClusterStats:
    """Component-size statistics of one realization.

    ``weighted_mean`` is the mean size of the component containing a uniformly
    chosen node, ``sum(s**2) / sum(s)``.
    """
    sizes = connected_components(r).sizes
    return ClusterStats(
        histogram={int(k): int(v) for k, v in
                   zip(*np.unique(sizes, return_counts=True))},
        mean=float(sizes.mean()),
        weighted_mean=float((sizes.astype(float) ** 2).sum() / sizes.sum()),
        max=int(sizes.max()),
        n_components=len(sizes),
    )


def max_cluster_samples(lattice: PercolationLattice, p: float, samples: int,
                        seed: int, threads: int = 1) -> np.ndarray:
    _check_p(p)
    args = _kernel_args(lattice)

    def run(a, b):
        u = _uniform_block(seed, a, b, lattice.n_edges)
        return uf.max_cluster_sizes(*args, u, float(p))

    return np.concatenate(_map_chunks(run, samples, lattice.n_edges, threads))


@dataclass(frozen=True)
class TauEstimate:
    pair: tuple
    distance: float
    samples: int
    hits: int
    tau: float
    stderr: float

    @classmethod
    def from_counts(cls, pair, distance, samples, hits):
        tau = hits / samples
        return cls(tuple(pair), float(distance), int(samples), int(hits), tau,
                   math.sqrt(tau * (1.0 - tau) / samples))


def pair_connection_counts(lattice: PercolationLattice, p_values, pairs,
                           samples: int, seed: int,
                           threads: int = 1) -> np.ndarray:
    """Hit counts of shape ``(len(p_values), len(pairs))`` from coupled samples."""
    p_values = np.asarray(p_values, dtype=float)
    for p in p_values:
        _check_p(p)
    if samples < 1:
        raise ValidationError(f"samples must be >= 1, got {samples}")
    order = np.argsort(p_values, kind="stable")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    args = _kernel_args(lattice)
    pa = np.ascontiguousarray(pairs[:, 0])
    pb = np.ascontiguousarray(pairs[:, 1])

    def run(a, b):
        u = _uniform_block(seed, a, b, lattice.n_edges)
        return uf.pair_hits(*args, u, p_values[order], pa, pb)

    total = sum(_map_chunks(run, samples, lattice.n_edges, threads))
    out = np.empty_like(total)
    out[order] = total
    return out


def node_distances(lattice: PercolationLattice, pairs) -> list[int]:
    cache = {}
    out = []
    for a, b in pairs:
        if a not in cache:
            cache[a] = lattice.distances_from(a)
        out.append(int(cache[a][b]))
    return out


def tau_estimate(lattice: PercolationLattice, p: float, pairs, samples: int,
                 seed: int, threads: int = 1) -> list[TauEstimate]:
    """Monte-Carlo connection probability of each node pair at open probability p."""
    pairs = [(int(a), int(b)) for a, b in pairs]
    hits = pair_connection_counts(lattice, [p], pairs, samples, seed, threads)[0]
    dist = node_distances(lattice, pairs)
    return [TauEstimate.from_counts(pr, d, samples, h)
            for pr, d, h in zip(pairs, dist, hits)]


def top_layer_pairs(lattice: PercolationLattice, d_min: int = 1,
                    d_max: int | None = None, layer: int | None = None):
    """All pairs of nodes on one layer (default: the top) within a distance window."""
    layer = lattice.spec.steps if layer is None else layer
    nodes = lattice.layer_nodes(layer)
    out = []
    for i, a in enumerate(nodes):
        dist = lattice.distances_from(int(a))
        for b in nodes[i + 1:]:
            d = int(dist[b])
            if d >= d_min and (d_max is None or d <= d_max):
                out.append((int(a), int(b), d))
    return out


def pool_by_distance(estimates) -> list[TauEstimate]:
    """Merge estimates sharing a distance; counts add, pairs are treated as
    independent trials (the normal-approximation error is then optimistic)."""
    groups = {}
    for e in estimates:
        groups.setdefault(e.distance, []).append(e)
    out = []
    for d in sorted(groups):
        g = groups[d]
        out.append(TauEstimate.from_counts(
            ("pooled", len(g)), d, sum(e.samples for e in g),
            sum(e.hits for e in g)))
    return out


@dataclass(frozen=True)
class DecayFit:
    """Straight-line fit of ``-log(value)`` against distance.

    ``slope`` is the inverse length (positive for decay).  ``slope_ci`` is a
    two-sided interval at ``confidence``.
    """

    distances: np.ndarray
    neg_log: np.ndarray
    slope: float
    intercept: float
    slope_stderr: float
    slope_ci: tuple[float, float]
    r_squared: float
    residual_rms: float
    dropped: int = 0
    confidence: float = 0.95
    notes: list[str] = field(default_factory=list)

    @property
    def length(self) -> float:
        return 1.0 / self.slope if self.slope > 0 else math.inf

    @property
    def length_upper(self) -> float:
        lo = self.slope_ci[0]
        return 1.0 / lo if lo > 0 else math.inf

    @property
    def length_lower(self) -> float:
        hi = self.slope_ci[1]
        return 1.0 / hi if hi > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "distances": [float(x) for x in self.distances],
            "neg_log": [float(y) for y in self.neg_log],
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_stderr,
            "slope_ci": list(self.slope_ci),
            "confidence": self.confidence,
            "r_squared": self.r_squared,
            "residual_rms": self.residual_rms,
            "length": _finite_or_str(self.length),
            "length_upper": _finite_or_str(self.length_upper),
            "dropped": self.dropped,
            "notes": list(self.notes),
        }


def _finite_or_str(x):
    return x if math.isfinite(x) else "inf"


def fit_exponential_decay(distances, values, sigmas=None, confidence=0.95,
                          dropped=0, notes=()) -> DecayFit:
    """Least-squares line through ``(distance, -log value)``.

    With ``sigmas`` (standard errors of ``values``) the fit is weighted and the
    slope error is propagated from them; otherwise it comes from the residuals.
    """
    x = np.asarray(distances, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(x) and not np.any(v > 0):
        raise DegenerateFitError(
            "all values are zero: decay length is below resolution")
    keep = v > 0
    x, v = x[keep], v[keep]
    dropped += int((~keep).sum())
    if len(x) < 3:
        raise InsufficientDataError(
            f"need >= 3 positive points, have {len(x)}")
    y = -np.log(v)
    if sigmas is None:
        w = np.ones_like(x)
    else:
        s = np.asarray(sigmas, dtype=float)[keep] / v
        if np.any(s <= 0):
            raise ValidationError("sigmas must be positive")
        w = 1.0 / s ** 2
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    if sxx == 0:
        raise InsufficientDataError("all points share one distance")
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    dof = len(x) - 2
    ss_res = float(np.sum(w * resid ** 2))
    ss_tot = float(np.sum(w * (y - ym) ** 2))
    if sigmas is None:
        stderr = math.sqrt(ss_res / dof / sxx)
        q = stats.t.ppf(0.5 + confidence / 2, dof)
    else:
        stderr = math.sqrt(1.0 / sxx)
        q = stats.norm.ppf(0.5 + confidence / 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return DecayFit(
        distances=x, neg_log=y, slope=slope, intercept=intercept,
        slope_stderr=stderr, slope_ci=(slope - q * stderr, slope + q * stderr),
        r_squared=float(r2), residual_rms=float(math.sqrt(np.mean(resid ** 2))),
        dropped=dropped, confidence=confidence, notes=list(notes))


def fit_correlation_length(points, min_hits: int = MIN_FIT_HITS,
                           confidence: float = 0.95) -> DecayFit:
    """Fit the correlation length from connection-probability estimates.

    ``points`` holds :class:`TauEstimate` objects or ``(distance, tau)``
    tuples.  Monte-Carlo estimates with fewer than ``min_hits`` hits are
    dropped before the fit.
    """
    dist, vals, dropped = [], [], 0
    for pt in points:
        if isinstance(pt, TauEstimate):
            if pt.hits < min_hits:
                dropped += 1
                continue
            dist.append(pt.distance)
            vals.append(pt.tau)
        else:
            dist.append(float(pt[0]))
            vals.append(float(pt[1]))
    if not dist:
        raise DegenerateFitError(
            f"no estimate reached {min_hits} hits: decay length below resolution")
    notes = [f"dropped {dropped} estimate(s) with fewer than {min_hits} hits"] \
        if dropped else []
    return fit_exponential_decay(dist, vals, confidence=confidence,
                                 dropped=dropped, notes=notes)


@dataclass(frozen=True)
class SpanningPatch:
    """A finite graph with two boundary node sets for crossing probabilities."""

    n_nodes: int
    edges: np.ndarray
    left: np.ndarray
    right: np.ndarray
    fixed_edges: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @classmethod
    def from_lattice(cls, lattice: PercolationLattice, axis: int = 0):
        lo, hi = lattice.boundary_nodes(axis)
        return cls(lattice.n_nodes, lattice.edges, lo, hi, lattice.fixed_edges)

    @classmethod
    def chain(cls, length: int):
        u = np.arange(length - 1, dtype=np.int64)
        return cls(length, np.stack([u, u + 1], axis=1),
                   np.array([0]), np.array([length - 1]))


def circuit_patch(dim: int, size: int) -> SpanningPatch:
    """``size**dim`` particles evolved for ``size`` steps, crossing along axis 0."""
    return SpanningPatch.from_lattice(
        build_lattice(LatticeSpec(dim, (size,) * dim, size)))


def spanning_counts(patch: SpanningPatch, p_values, samples: int, seed: int,
                    threads: int = 1) -> np.ndarray:
    p_values = np.asarray(p_values, dtype=float)
    order = np.argsort(p_values, kind="stable")
    args = (patch.n_nodes, np.ascontiguousarray(patch.edges[:, 0]),
            np.ascontiguousarray(patch.edges[:, 1]),
            np.ascontiguousarray(patch.fixed_edges[:, 0]),
            np.ascontiguousarray(patch.fixed_edges[:, 1]))
    left = np.asarray(patch.left, dtype=np.int64)
    right = np.asarray(patch.right, dtype=np.int64)

    def run(a, b):
        u = _uniform_block(seed, a, b, patch.n_edges)
        return uf.span_hits(*args, u, p_values[order], left, right)

    total = sum(_map_chunks(run, samples, patch.n_edges, threads))
    out = np.empty_like(total)
    out[order] = total
    return out


@dataclass(frozen=True)
class PcEstimate:
    pc: float
    uncertainty: float
    crossings: list[dict]
    p_values: np.ndarray
    curves: dict
    samples: int

    def to_dict(self) -> dict:
        return {
            "pc": self.pc,
            "uncertainty": self.uncertainty,
            "crossings": self.crossings,
            "p_values": [float(p) for p in self.p_values],
            "curves": {str(k): [float(x) for x in v]
                       for k, v in self.curves.items()},
            "samples": self.samples,
        }


def _crossing(p, small, large, samples):
    """Crossing of two spanning curves, from the sign change of their difference."""
    diff = large - small
    var = (small * (1 - small) + large * (1 - large)) / samples
    idx = [k for k in range(len(p) - 1) if diff[k] < 0 <= diff[k + 1]]
    if not idx:
        return None
    found = []
    for k in idx:
        d0, d1 = diff[k], diff[k + 1]
        frac = -d0 / (d1 - d0)
        pk = p[k] + frac * (p[k + 1] - p[k])
        slope = (d1 - d0) / (p[k + 1] - p[k])
        sd = math.sqrt((1 - frac) * var[k] + frac * var[k + 1])
        stat = sd / slope if slope > 0 else math.inf
        found.append((pk, 0.5 * (p[k + 1] - p[k]) + stat))
    ps = [f[0] for f in found]
    return (float(np.mean(ps)),
            float(max(f[1] for f in found) + 0.5 * (max(ps) - min(ps))),
            len(found))


def estimate_pc(patches: dict, p_values, samples: int, seed: int,
                threads: int = 1) -> PcEstimate:
    """Critical point from crossings of spanning-probability curves.

    ``patches`` maps a size label to a :class:`SpanningPatch`; curves of
    consecutive sizes (sorted by label) are intersected.  Below the critical
    point the larger patch spans less often, above it more often.
    """
    if len(patches) < 2:
        raise ValidationError("estimate_pc needs at least two sizes")
    p = np.asarray(sorted(float(x) for x in p_values))
    if len(p) < 2:
        raise ValidationError("p grid needs at least two points")
    sizes = sorted(patches)
    curves = {}
    for size in sizes:
        curves[size] = spanning_counts(patches[size], p, samples, seed,
                                       threads) / samples
    crossings = []
    for small, large in zip(sizes, sizes[1:]):
        c = _crossing(p, curves[small], curves[large], samples)
        if c is None:
            raise BracketError(
                f"spanning curves for sizes {small} and {large} do not cross "
                f"on [{p[0]}, {p[-1]}]",
                {"p": p.tolist(), str(small): curves[small].tolist(),
                 str(large): curves[large].tolist()})
        crossings.append({"sizes": [small, large], "p": c[0],
                          "uncertainty": c[1], "sign_changes": c[2]})
    ps = [c["p"] for c in crossings]
    unc = max(c["uncertainty"] for c in crossings) + 0.5 * (max(ps) - min(ps))
    return PcEstimate(float(np.mean(ps)), float(unc), crossings, p, curves,
                      samples)


def branching_upper_tree(p: float, depth: int) -> float:
    """Survival to generation ``depth`` of a Binomial(3, p) branching process.

    Uses ``s_{k+1} = 1 - (1 - p * s_k)**3`` from ``s_0 = 1``; the process is
    subcritical exactly when ``3 p < 1``.
    """
    _check_p(p)
    if depth < 1:
        raise ValidationError(f"depth must be >= 1, got {depth}")
    s = 1.0
    for _ in range(depth):
        s = 1.0 - (1.0 - p * s) ** 3
    return s
