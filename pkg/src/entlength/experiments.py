"""End-to-end studies: time-averaged entanglement, entanglement-length fits,
the finite-noise bound check and the noiseless GHZ contrast.

Distances are graph distances on the contracted lattice of the run's
:class:`LatticeSpec`, between images of the two sets at the top layer (or at
the layer under test for per-step checks), so entanglement and percolation
lengths share one unit.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
import io
import json
import math

import numpy as np

from .entanglement import Bipartition, eof, theorem1_bound
from .errors import (ConfigurationError, DegenerateFitError, FitError,
                     InsufficientDataError, ValidationError)
from .lattice import LatticeSpec, PercolationLattice, build_lattice
from .percolation import (DecayFit, fit_correlation_length,
                          fit_exponential_decay, pool_by_distance,
                          tau_estimate, top_layer_pairs)
from .quantum import (MAX_QUBITS, DensityMatrix, NoiseChannelSpec, ghz_circuit,
                      iter_evolution, random_circuit, random_pure_state,
                      reduced_density_matrix)

EF_FLOOR = 1e-9
DEFAULT_BATCHES = 10


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one study.

    ``pairs`` is ``"all"`` (every single-qubit pair) or a ``;``-separated list
    of ``A|B`` sets such as ``"0|9;0,1|8,9"``.  ``init`` is ``product``
    (all zeros) or ``giant`` (a Haar-random pure state of all qubits).
    """

    dim: int = 1
    sides: tuple[int, ...] = (10,)
    steps: int = 8
    eta: float = 0.7
    noise: str = "collapse"
    circuit: str = "random"
    init: str = "product"
    ghz_m: int = 1
    ghz_mid: int = 1
    ghz_q: int = 1
    pairs: str = "all"
    instances: int = 1
    tau_samples: int = 20000
    confidence: float = 0.95
    batches: int = DEFAULT_BATCHES
    seed: int = 0
    threads: int = 1
    max_qubits: int = MAX_QUBITS

    def __post_init__(self):
        object.__setattr__(self, "sides", tuple(int(s) for s in self.sides))
        self.validate()

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        """Build from strings or native values; unknown keys are rejected."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            default = known[name].default
            try:
                if name == "sides":
                    if isinstance(value, str):
                        value = tuple(int(x) for x in value.replace("x", ",")
                                      .split(",") if x.strip())
                    kwargs[name] = tuple(int(x) for x in value)
                elif isinstance(default, bool):
                    kwargs[name] = str(value).lower() in ("1", "true", "yes")
                else:
                    kwargs[name] = type(default)(value)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(
                    f"bad value {value!r} for {key}") from exc
        return cls(**kwargs)

    def validate(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigurationError(f"eta must lie in [0, 1], got {self.eta}")
        if self.noise not in ("collapse", "depolarize"):
            raise ConfigurationError(f"unknown noise model {self.noise!r}")
        if self.circuit not in ("random", "ghz"):
            raise ConfigurationError(f"unknown circuit {self.circuit!r}")
        if self.init not in ("product", "giant"):
            raise ConfigurationError(f"unknown init {self.init!r}")
        if self.instances < 1 or self.tau_samples < 1 or self.batches < 1:
            raise ConfigurationError("instances, tau_samples, batches must be >= 1")
        if not 0 < self.confidence < 1:
            raise ConfigurationError("confidence must lie in (0, 1)")
        spec = self.lattice_spec()
        if spec.n > self.max_qubits:
            raise ConfigurationError(
                f"{spec.n} qubits exceed the exact-engine limit {self.max_qubits}")
        try:
            for bip in self.bipartitions():
                bip.check(spec.n)
        except ValidationError as exc:
            raise ConfigurationError(str(exc)) from exc

    def lattice_spec(self) -> LatticeSpec:
        try:
            if self.circuit == "ghz":
                n = self.ghz_m + self.ghz_mid + self.ghz_q
                return LatticeSpec.chain(n, self.steps)
            return LatticeSpec(self.dim, self.sides, self.steps)
        except ValidationError as exc:
            raise ConfigurationError(str(exc)) from exc

    def bipartitions(self) -> list[Bipartition]:
        if self.circuit == "ghz" and self.pairs == "all":
            m, q = self.ghz_m, self.ghz_q
            n = m + self.ghz_mid + q
            return [Bipartition(tuple(range(m)), tuple(range(n - q, n)))]
        if self.pairs == "all":
            n = math.prod(self.sides)
            return [Bipartition((a,), (b,)) for a in range(n)
                    for b in range(a + 1, n)]
        return [Bipartition.parse(s.strip()) for s in self.pairs.split(";")
                if s.strip()]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sides"] = list(self.sides)
        return d


@lru_cache(maxsize=32)
def _lattice(spec: LatticeSpec) -> PercolationLattice:
    return build_lattice(spec)


@lru_cache(maxsize=4096)
def _layer_distance(spec: LatticeSpec, a: tuple, b: tuple, t: int) -> int:
    lat = _lattice(spec)
    best = None
    for x in a:
        dist = lat.distances_from(lat.image(x, t))
        for y in b:
            d = int(dist[lat.image(y, t)])
            best = d if best is None else min(best, d)
    return best


def set_distance(spec: LatticeSpec, bip: Bipartition, t: int | None = None) -> int:
    """Graph distance between the images of two sets at layer ``t`` (default top)."""
    return _layer_distance(spec, bip.a, bip.b, spec.steps if t is None else t)


def _instance_seed(seed: int, instance: int, stream: int):
    return np.random.SeedSequence(seed, spawn_key=(instance, stream))


def trajectory(config: ExperimentConfig, instance: int = 0):
    """Iterator over the exact states of one circuit instance."""
    spec = config.lattice_spec()
    noise = NoiseChannelSpec(config.noise, eta=config.eta)
    if config.circuit == "ghz":
        circ = ghz_circuit(config.ghz_m, config.ghz_mid, config.ghz_q,
                           config.max_qubits)
        if len(circ.layers) > spec.steps:
            raise ConfigurationError(
                f"GHZ preparation needs {len(circ.layers)} steps, "
                f"run has {spec.steps}")
        circ = circ.padded(spec.steps)
    else:
        circ = random_circuit(spec, _instance_seed(config.seed, instance, 0))
    if config.init == "giant":
        rho0 = DensityMatrix.from_state(
            random_pure_state(spec.n, _instance_seed(config.seed, instance, 1)))
    else:
        rho0 = DensityMatrix.basis([0] * spec.n)
    return iter_evolution(spec, circ, noise, rho0, max_qubits=config.max_qubits)


def _ef(rho, bip):
    local = Bipartition.halves(len(bip.a), len(bip.b))
    sub = reduced_density_matrix(rho, bip.qubits)
    if len(bip.a) == 1 and len(bip.b) == 1:
        return eof(sub, local, method="closed").value
    return eof(sub, local, method="auto", restarts=8).value


def entanglement_series(config: ExperimentConfig, instance: int = 0,
                        bips=None) -> np.ndarray:
    """E_f of every set pair at every step, shape ``(steps + 1, n_pairs)``."""
    bips = config.bipartitions() if bips is None else bips
    rows = []
    for rho in trajectory(config, instance):
        rows.append([_ef(rho, bip) for bip in bips])
    return np.asarray(rows, dtype=float).reshape(-1, len(bips))


def batch_means(series, batches: int = DEFAULT_BATCHES) -> np.ndarray:
    """Means of ``min(batches, len)`` contiguous, nearly equal blocks."""
    series = np.asarray(series, dtype=float)
    k = max(1, min(batches, len(series)))
    return np.array([b.mean() for b in np.array_split(series, k)])


def batch_stderr(means) -> float:
    means = np.asarray(means, dtype=float)
    if len(means) < 2:
        return 0.0
    return float(means.std(ddof=1) / math.sqrt(len(means)))


@dataclass(frozen=True)
class PairAverage:
    a: tuple[int, ...]
    b: tuple[int, ...]
    distance: int
    mean: float
    stderr: float

    def to_dict(self) -> dict:
        return {"a": list(self.a), "b": list(self.b), "distance": self.distance,
                "mean": self.mean, "stderr": self.stderr}


def time_averaged_entanglement(config: ExperimentConfig) -> list[PairAverage]:
    """Average of E_f over ``t = 0..steps`` for each set pair.

    The error is the spread of batch means (pooled over circuit instances),
    which accounts for correlation along the time series.
    """
    spec = config.lattice_spec()
    bips = config.bipartitions()
    series = [entanglement_series(config, i, bips)
              for i in range(config.instances)]
    out = []
    for j, bip in enumerate(bips):
        per = [s[:, j] for s in series]
        means = np.concatenate([batch_means(s, config.batches) for s in per])
        mean = float(np.mean([s.mean() for s in per]))
        out.append(PairAverage(bip.a, bip.b, set_distance(spec, bip),
                               max(0.0, mean), batch_stderr(means)))
    return out


@dataclass(frozen=True)
class DistancePoint:
    distance: int
    n_pairs: int
    mean: float
    stderr: float

    def to_dict(self) -> dict:
        return asdict(self)


def group_by_distance(averages) -> list[DistancePoint]:
    groups = {}
    for a in averages:
        groups.setdefault(a.distance, []).append(a)
    out = []
    for d in sorted(groups):
        g = groups[d]
        mean = float(np.mean([x.mean for x in g]))
        err = float(math.sqrt(sum(x.stderr ** 2 for x in g)) / len(g))
        out.append(DistancePoint(d, len(g), mean, err))
    return out


@dataclass(frozen=True)
class XiMeasurement:
    """Correlation length from top-layer connection probabilities."""

    p: float
    fit: DecayFit | None
    xi: float
    xi_upper: float
    extent: int
    note: str = ""

    @property
    def resolved(self) -> bool:
        """False when the upper limit exceeds half the largest pair distance,
        so the lattice cannot separate the decay from its own size."""
        return math.isfinite(self.xi_upper) and self.xi_upper <= self.extent / 2

    def to_dict(self) -> dict:
        return {"p": self.p, "xi": _num(self.xi), "xi_upper": _num(self.xi_upper),
                "extent": self.extent, "resolved": self.resolved,
                "fit": self.fit.to_dict() if self.fit else None,
                "note": self.note}


def measure_xi(spec: LatticeSpec, p: float, samples: int, seed: int,
               confidence: float = 0.95, threads: int = 1) -> XiMeasurement:
    """Fit ``xi(p)`` on the lattice contracted from ``spec``.

    When no pair is ever connected the length is below resolution; the upper
    limit then follows from the rule-of-three bound ``tau < 3 / samples`` at
    the smallest distance.
    """
    lat = _lattice(spec)
    pairs = top_layer_pairs(lat, d_min=1)
    if not pairs:
        raise ConfigurationError("lattice has no top-layer pairs at distance >= 1")
    est = pool_by_distance(tau_estimate(lat, p, [(a, b) for a, b, _ in pairs],
                                        samples, seed, threads))
    extent = max(e.distance for e in est)
    try:
        fit = fit_correlation_length(est, confidence=confidence)
    except DegenerateFitError:
        if any(e.hits for e in est):
            raise ConfigurationError(
                f"too few connected samples to fit xi at p={p}") from None
        d_min = min(e.distance for e in est)
        bound = d_min / math.log(samples / 3.0) if samples > 3 else math.inf
        return XiMeasurement(p, None, 0.0, bound, extent,
                             "no connections observed; rule-of-three bound")
    except InsufficientDataError as exc:
        raise ConfigurationError(f"xi unavailable at p={p}: {exc}") from None
    return XiMeasurement(p, fit, fit.length, fit.length_upper, extent)


@dataclass(frozen=True)
class EntLenReport:
    config: ExperimentConfig
    averages: list[PairAverage]
    points: list[DistancePoint]
    fit: DecayFit | None
    mu: float
    mu_upper: float
    resolved: bool
    xi: XiMeasurement | None
    notes: list[str] = field(default_factory=list)

    @property
    def mu_within_xi(self) -> bool | None:
        if self.xi is None:
            return None
        return bool(self.mu_upper <= self.xi.xi_upper)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "averages": [a.to_dict() for a in self.averages],
            "points": [p.to_dict() for p in self.points],
            "fit": self.fit.to_dict() if self.fit else None,
            "mu": _num(self.mu),
            "mu_upper": _num(self.mu_upper),
            "xi": self.xi.to_dict() if self.xi else None,
            "verdicts": {"resolved": self.resolved,
                         "mu_le_xi": self.mu_within_xi},
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["distance", "n_pairs", "mean_ef", "stderr"])
        for p in self.points:
            w.writerow([p.distance, p.n_pairs, repr(p.mean), repr(p.stderr)])
        return buf.getvalue()


def resolution_limit(points, floor: float = EF_FLOOR) -> float:
    """Largest length compatible with ``E(d) <= exp(-d / mu)`` at every point,
    with values under ``floor`` replaced by ``floor``."""
    best = 0.0
    for p in points:
        if p.distance <= 0:
            continue
        v = max(p.mean, floor)
        if v >= 1.0:
            return math.inf
        best = max(best, p.distance / -math.log(v))
    return best


def fit_entanglement_length(points, confidence: float = 0.95,
                            floor: float = EF_FLOOR):
    """Weighted fit of ``-log <E_f>`` against distance (``d >= 1``).

    Returns ``(fit, mu, mu_upper, resolved, notes)``.  With fewer than three
    points above ``floor`` the length is below resolution and ``mu_upper`` is
    :func:`resolution_limit`.
    """
    use = [p for p in points if p.distance >= 1]
    d = np.array([p.distance for p in use], dtype=float)
    v = np.array([p.mean if p.mean >= floor else 0.0 for p in use])
    s = np.array([p.stderr for p in use])
    notes = []
    try:
        weighted = np.all(s[v > 0] > 0)
        fit = fit_exponential_decay(d, v, s if weighted else None, confidence)
        if not weighted:
            notes.append("some errors are zero; unweighted fit")
    except FitError as exc:
        notes.append(f"below resolution: {exc}")
        return None, 0.0, resolution_limit(use, floor), False, notes
    return fit, fit.length, fit.length_upper, True, notes


def estimate_entanglement_length(config: ExperimentConfig,
                                 with_xi: bool = True) -> EntLenReport:
    averages = time_averaged_entanglement(config)
    points = group_by_distance(averages)
    fit, mu, mu_up, resolved, notes = fit_entanglement_length(
        points, config.confidence)
    xi = None
    if with_xi:
        try:
            xi = measure_xi(config.lattice_spec(),
                            round(1.0 - config.eta, 12),
                            config.tau_samples, config.seed, config.confidence,
                            config.threads)
        except ConfigurationError as exc:
            notes.append(f"xi unavailable: {exc}")
    return EntLenReport(config, averages, points, fit, mu, mu_up, resolved,
                        xi, notes)


@dataclass(frozen=True)
class BoundRow:
    init: str
    t: int
    a: int
    b: int
    distance: int
    ef: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.ef <= self.bound + 1e-12


@dataclass(frozen=True)
class BoundTable:
    xi: XiMeasurement
    rows: list[BoundRow]

    @property
    def all_pass(self) -> bool:
        return all(r.ok for r in self.rows)

    def failures(self) -> list[BoundRow]:
        return [r for r in self.rows if not r.ok]

    def to_dict(self) -> dict:
        return {"xi": self.xi.to_dict(), "all_pass": self.all_pass,
                "rows": [dict(asdict(r), ok=r.ok) for r in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["init", "t", "a", "b", "distance", "ef", "bound", "ok"])
        for r in self.rows:
            w.writerow([r.init, r.t, r.a, r.b, r.distance, repr(r.ef),
                        repr(r.bound), int(r.ok)])
        return buf.getvalue()


def theorem1_check(config: ExperimentConfig,
                   inits=("product", "giant")) -> BoundTable:
    """Compare every single-qubit pair at every step with the decay bound.

    The bound uses the upper confidence limit of ``xi(1 - eta)``.  The
    ``giant`` initialization adds the time-decaying term for a general
    initial state.
    """
    spec = config.lattice_spec()
    xi = measure_xi(spec, round(1.0 - config.eta, 12), config.tau_samples,
                    config.seed, config.confidence, config.threads)
    if not xi.resolved:
        raise ConfigurationError(
            f"xi(1 - eta) is unavailable at eta={config.eta}: upper limit "
            f"{xi.xi_upper:.3g} exceeds half the lattice extent {xi.extent}")
    n = spec.n
    bips = [Bipartition((a,), (b,)) for a in range(n) for b in range(a + 1, n)]
    rows = []
    for init in inits:
        cfg = ExperimentConfig.from_mapping({**config.to_dict(), "init": init})
        for i in range(cfg.instances):
            series = entanglement_series(cfg, i, bips)
            for t in range(spec.steps + 1):
                for j, bip in enumerate(bips):
                    dist = set_distance(spec, bip, t)
                    extra = {"t": t, "n": n} if init == "giant" else {}
                    bound = theorem1_bound(1, 1, dist, xi.xi_upper, **extra)
                    rows.append(BoundRow(init, t, bip.a[0], bip.b[0], dist,
                                         float(series[t, j]), bound))
    return BoundTable(xi, rows)


@dataclass(frozen=True)
class GhzContrast:
    points: list[DistancePoint]
    fit: DecayFit | None
    min_average: float

    @property
    def slope_sigma(self) -> float:
        return self.fit.slope_stderr if self.fit else math.nan

    @property
    def slope_consistent_with_zero(self) -> bool:
        if self.fit is None:
            return False
        return abs(self.fit.slope) <= 2 * self.fit.slope_stderr + 1e-15

    def to_dict(self) -> dict:
        return {"points": [p.to_dict() for p in self.points],
                "fit": self.fit.to_dict() if self.fit else None,
                "min_average": self.min_average,
                "slope_consistent_with_zero": self.slope_consistent_with_zero}


def ghz_contrast(mids=range(1, 7), steps: int = 1000, m: int = 1, q: int = 1,
                 eta: float = 0.0, noise: str = "collapse",
                 batches: int = DEFAULT_BATCHES) -> GhzContrast:
    """Time-averaged E_f between the GHZ end registers for growing middle
    registers, with a decay fit whose errors come from batch means."""
    points = []
    for mid in mids:
        cfg = ExperimentConfig(circuit="ghz", ghz_m=m, ghz_mid=mid, ghz_q=q,
                               steps=steps, eta=eta, noise=noise,
                               batches=batches)
        (avg,) = time_averaged_entanglement(cfg)
        points.append(DistancePoint(avg.distance, 1, avg.mean, avg.stderr))
    d = [p.distance for p in points]
    v = [p.mean for p in points]
    s = [p.stderr for p in points]
    try:
        fit = fit_exponential_decay(d, v, s if all(x > 0 for x in s) else None)
    except FitError:
        fit = None
    return GhzContrast(points, fit, min(v))


def _num(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return _num(float(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as strings."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2,
                      allow_nan=False) + "\n"
