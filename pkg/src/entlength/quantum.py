"""Exact density-matrix evolution of small nearest-neighbour circuits.

Qubit 0 is the most significant bit: basis state ``|b0 b1 ... b_{n-1}>`` has
index ``sum(b_k << (n - 1 - k))``.  A density matrix of ``n`` qubits is viewed
as a tensor with ``2n`` axes of length 2 (row axes first) whenever a local
operator is applied.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Literal

import numpy as np
from scipy.stats import unitary_group

from .errors import CapacityError, ScheduleError, ValidationError
from .lattice import LatticeSpec, _schedule

MAX_QUBITS = 12
UNITARY_ATOL = 1e-10

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
CNOT = np.array([[1, 0, 0, 0],
                 [0, 1, 0, 0],
                 [0, 0, 0, 1],
                 [0, 0, 1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0],
                 [0, 0, 1, 0],
                 [0, 1, 0, 0],
                 [0, 0, 0, 1]], dtype=complex)


@dataclass(frozen=True)
class DensityMatrix:
    data: np.ndarray
    n_qubits: int
    herm_atol: float = 1e-10
    trace_atol: float = 1e-10
    eig_atol: float = 1e-9

    def __post_init__(self):
        dim = 2 ** self.n_qubits
        if self.data.shape != (dim, dim):
            raise ValidationError(
                f"matrix of shape {self.data.shape} is not {dim}x{dim}")

    @classmethod
    def from_matrix(cls, matrix, n_qubits: int | None = None) -> "DensityMatrix":
        m = np.asarray(matrix, dtype=complex)
        if n_qubits is None:
            n_qubits = int(round(math.log2(m.shape[0])))
        return cls(m, n_qubits)

    @classmethod
    def from_state(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        n = int(round(math.log2(len(psi))))
        if 2 ** n != len(psi):
            raise ValidationError(f"state length {len(psi)} is not a power of 2")
        return cls(np.outer(psi, psi.conj()), n)

    @classmethod
    def basis(cls, bits) -> "DensityMatrix":
        return cls.from_state(basis_state(bits))

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        dim = 2 ** n_qubits
        return cls(np.eye(dim, dtype=complex) / dim, n_qubits)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def violations(self) -> list[str]:
        m = self.data
        out = []
        herm = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
        if herm > self.herm_atol:
            out.append(f"not Hermitian (max deviation {herm:.3e})")
        tr = abs(np.trace(m) - 1.0)
        if tr > self.trace_atol:
            out.append(f"trace deviates from 1 by {tr:.3e}")
        lam = float(np.linalg.eigvalsh((m + m.conj().T) / 2).min())
        if lam < -self.eig_atol:
            out.append(f"negative eigenvalue {lam:.3e}")
        return out

    def validate(self) -> "DensityMatrix":
        bad = self.violations()
        if bad:
            raise ValidationError("invalid density matrix: " + "; ".join(bad))
        return self


def basis_state(bits) -> np.ndarray:
    bits = [int(b) for b in bits]
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int("".join(map(str, bits)), 2) if bits else 0] = 1.0
    return psi


def is_unitary(u, atol=UNITARY_ATOL) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.allclose(
        u @ u.conj().T, np.eye(u.shape[0]), rtol=0, atol=atol)


_FIXED = {"h": (HADAMARD, 1), "cnot": (CNOT, 2), "swap": (SWAP, 2)}
GateKind = Literal["h", "cnot", "swap", "u1", "u2"]


@dataclass(frozen=True)
class GateOp:
    """A gate on named qubits.  ``cnot`` targets are ``(control, target)``."""

    kind: GateKind
    targets: tuple[int, ...]
    matrix: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        if self.kind in _FIXED:
            arity = _FIXED[self.kind][1]
        elif self.kind in ("u1", "u2"):
            arity = 1 if self.kind == "u1" else 2
            if self.matrix is None:
                raise ValidationError(f"{self.kind} gate needs a matrix")
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (2 ** arity, 2 ** arity):
                raise ValidationError(
                    f"{self.kind} matrix must be {2 ** arity}x{2 ** arity}")
            if not is_unitary(m):
                raise ValidationError(f"{self.kind} matrix is not unitary")
            object.__setattr__(self, "matrix", m)
        else:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        if len(self.targets) != arity or len(set(self.targets)) != arity:
            raise ValidationError(
                f"{self.kind} gate needs {arity} distinct targets, "
                f"got {self.targets}")

    @property
    def unitary(self) -> np.ndarray:
        return _FIXED[self.kind][0] if self.kind in _FIXED else self.matrix

    @property
    def arity(self) -> int:
        return len(self.targets)


def _apply_local(data, n, op, targets, adjoint_right=True):
    """``op . rho . op^dagger`` with ``op`` acting on ``targets``."""
    k = len(targets)
    t = data.reshape((2,) * (2 * n))
    ot = op.reshape((2,) * (2 * k))
    t = np.tensordot(ot, t, axes=(list(range(k, 2 * k)), list(targets)))
    t = np.moveaxis(t, list(range(k)), list(targets))
    cols = [n + q for q in targets]
    right = ot.conj() if adjoint_right else ot
    t = np.tensordot(t, right, axes=(cols, list(range(k, 2 * k))))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)), cols)
    return t.reshape(data.shape)


def _check_targets(rho, targets):
    for q in targets:
        if not 0 <= q < rho.n_qubits:
            raise ValidationError(
                f"qubit {q} out of range for {rho.n_qubits} qubits")


def apply_gate(rho: DensityMatrix, g: GateOp,
               spec: LatticeSpec | None = None) -> DensityMatrix:
    """Return ``U rho U^dagger``.

    With ``spec`` given, a two-qubit gate must act on lattice neighbours.
    """
    _check_targets(rho, g.targets)
    if spec is not None and g.arity == 2 and not spec.neighbors(*g.targets):
        raise ScheduleError(f"qubits {g.targets} are not nearest neighbours")
    out = _apply_local(rho.data, rho.n_qubits, g.unitary, g.targets)
    return DensityMatrix(out, rho.n_qubits)


NoiseModel = Literal["collapse", "depolarize", "dephase"]


@dataclass(frozen=True)
class NoiseChannelSpec:
    """Local noise applied to one qubit.

    ``collapse`` measures in the columns of ``basis`` (default computational)
    with probability ``eta``; ``depolarize`` replaces the qubit by I/2 with
    probability ``eta``; ``dephase`` damps single-qubit coherences by
    ``exp(-gamma_dt)``.
    """

    model: NoiseModel = "collapse"
    eta: float = 0.0
    gamma_dt: float = 0.0
    basis: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.model not in ("collapse", "depolarize", "dephase"):
            raise ValidationError(f"unknown noise model {self.model!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValidationError(f"eta must lie in [0, 1], got {self.eta}")
        if not self.gamma_dt >= 0.0:
            raise ValidationError(f"gamma_dt must be >= 0, got {self.gamma_dt}")
        if self.basis is not None:
            b = np.asarray(self.basis, dtype=complex)
            if b.shape != (2, 2) or not is_unitary(b):
                raise ValidationError("collapse basis must be a 2x2 unitary")
            object.__setattr__(self, "basis", b)

    @property
    def is_identity(self) -> bool:
        if self.model == "dephase":
            return self.gamma_dt == 0.0
        return self.eta == 0.0


def _collapse(data, n, q, eta, basis):
    b = np.eye(2, dtype=complex) if basis is None else basis
    measured = np.zeros_like(data)
    for i in range(2):
        proj = np.outer(b[:, i], b[:, i].conj())
        measured += _apply_local(data, n, proj, (q,))
    return (1.0 - eta) * data + eta * measured


def _depolarize(data, n, q, eta):
    t = data.reshape((2,) * (2 * n))
    reduced = np.trace(t, axis1=q, axis2=n + q)
    full = np.multiply.outer(reduced, np.eye(2) / 2.0)
    # the two new axes are appended; row axis q sits before the column axes
    full = np.moveaxis(full, [2 * n - 2, 2 * n - 1], [q, n + q])
    return (1.0 - eta) * data + eta * full.reshape(data.shape)


def _dephase(data, n, q, gamma_dt):
    factor = math.exp(-gamma_dt)
    dim = data.shape[0]
    bit = (np.arange(dim) >> (n - 1 - q)) & 1
    mask = np.where(bit[:, None] != bit[None, :], factor, 1.0)
    return data * mask


def apply_noise_channel(rho: DensityMatrix, spec: NoiseChannelSpec,
                        qubit: int) -> DensityMatrix:
    _check_targets(rho, (qubit,))
    if spec.is_identity:
        return rho
    n = rho.n_qubits
    if spec.model == "collapse":
        out = _collapse(rho.data, n, qubit, spec.eta, spec.basis)
    elif spec.model == "depolarize":
        out = _depolarize(rho.data, n, qubit, spec.eta)
    else:
        out = _dephase(rho.data, n, qubit, spec.gamma_dt)
    return DensityMatrix(out, n)


@dataclass(frozen=True)
class Circuit:
    """Gate layers on a lattice; ``layers[t - 1]`` runs at step ``t``."""

    spec: LatticeSpec
    layers: list[list[GateOp]]

    @property
    def n_qubits(self) -> int:
        return self.spec.n

    def padded(self, steps: int) -> "Circuit":
        if steps < len(self.layers):
            raise ValidationError(
                f"circuit needs {len(self.layers)} steps, asked for {steps}")
        spec = LatticeSpec(self.spec.dim, self.spec.sides, steps)
        return Circuit(spec, self.layers + [[] for _ in
                                            range(steps - len(self.layers))])


def _ordered(layer):
    singles = sorted((g for g in layer if g.arity == 1), key=lambda g: g.targets)
    pairs = sorted((g for g in layer if g.arity == 2),
                   key=lambda g: sorted(g.targets))
    return singles + pairs


def check_layer(spec: LatticeSpec, t: int, layer, mode: str = "alternating"):
    if mode == "off":
        return
    allowed = set(_schedule(spec, t)) if mode == "alternating" else None
    seen1, seen2 = set(), set()
    for g in layer:
        seen = seen1 if g.arity == 1 else seen2
        if seen & set(g.targets):
            raise ScheduleError(f"qubit used twice at step {t}: {g.targets}")
        seen |= set(g.targets)
        if g.arity == 2:
            pair = tuple(sorted(g.targets))
            if mode == "alternating" and pair not in allowed:
                raise ScheduleError(
                    f"pair {pair} does not interact at step {t}")
            if mode == "neighbor" and not spec.neighbors(*pair):
                raise ScheduleError(f"pair {pair} is not nearest-neighbour")


def iter_evolution(spec: LatticeSpec, gates, noise: NoiseChannelSpec,
                   rho0: DensityMatrix, check: str = "alternating",
                   monitor: bool = False, max_qubits: int = MAX_QUBITS):
    """Yield ``rho(0), rho(1), ..., rho(steps)`` without keeping them."""
    if spec.n > max_qubits:
        raise CapacityError(f"{spec.n} qubits exceed the limit {max_qubits}")
    if rho0.n_qubits != spec.n:
        raise ValidationError(
            f"initial state has {rho0.n_qubits} qubits, lattice has {spec.n}")
    layers = gates.layers if isinstance(gates, Circuit) else list(gates)
    if len(layers) > spec.steps:
        raise ValidationError(
            f"{len(layers)} gate layers for {spec.steps} steps")
    rho = rho0
    yield rho
    for t in range(1, spec.steps + 1):
        layer = layers[t - 1] if t - 1 < len(layers) else []
        check_layer(spec, t, layer, check)
        for g in _ordered(layer):
            rho = apply_gate(rho, g)
        for q in range(spec.n):
            rho = apply_noise_channel(rho, noise, q)
        if monitor:
            bad = rho.violations()
            if bad:
                raise ValidationError(f"step {t}: " + "; ".join(bad))
        yield rho


def evolve_circuit(spec: LatticeSpec, gates, noise: NoiseChannelSpec,
                   rho0: DensityMatrix, check: str = "alternating",
                   monitor: bool = False,
                   max_qubits: int = MAX_QUBITS) -> list[DensityMatrix]:
    """States ``rho(0..steps)``; step ``t`` applies layer ``t`` then noise on
    every qubit.

    ``gates`` is a :class:`Circuit` or a list of layers (shorter lists idle for
    the remaining steps).  ``check`` is ``alternating`` (pairs must be on the
    schedule of their step), ``neighbor`` or ``off``.  ``monitor``
    re-validates the state after each step.
    """
    return list(iter_evolution(spec, gates, noise, rho0, check, monitor,
                               max_qubits))


def compile_to_schedule(n: int, gates, max_qubits: int = MAX_QUBITS) -> Circuit:
    """Place a sequential gate list on the alternating chain schedule.

    Gates keep their order on every qubit.  Single-qubit gates at a step run
    before that step's two-qubit gates, so consecutive single-qubit gates on a
    qubit share a step and are multiplied together.
    """
    if n > max_qubits:
        raise CapacityError(f"{n} qubits exceed the limit {max_qubits}")
    spec0 = LatticeSpec.chain(n, 2 * len(gates) + 2)
    last1 = [0] * n
    last2 = [0] * n
    layers: dict[int, dict] = {}
    for g in gates:
        if g.arity == 1:
            (q,) = g.targets
            t = max(1, last2[q] + 1, last1[q])
            slot = layers.setdefault(t, {"u1": {}, "u2": []})["u1"]
            prev = slot.get(q)
            slot[q] = g.unitary if prev is None else g.unitary @ prev
            last1[q] = t
        else:
            a, b = g.targets
            pair = tuple(sorted(g.targets))
            t = max(1, last2[a] + 1, last2[b] + 1, last1[a], last1[b])
            while pair not in _schedule(spec0, t):
                t += 1
            layers.setdefault(t, {"u1": {}, "u2": []})["u2"].append(g)
            last2[a] = last2[b] = t
    steps = max(layers) if layers else 0
    out = []
    for t in range(1, steps + 1):
        slot = layers.get(t, {"u1": {}, "u2": []})
        layer = [GateOp("u1", (q,), u) for q, u in sorted(slot["u1"].items())]
        out.append(layer + slot["u2"])
    return Circuit(LatticeSpec.chain(n, steps), out)


def ghz_gate_list(m: int, n_mid: int, q: int) -> list[GateOp]:
    """Hadamard, CNOT chain over the first ``m + q`` qubits, then a swap ladder
    moving the last ``q`` of them to the right end of the chain."""
    if m < 1 or q < 1 or n_mid < 0:
        raise ValidationError(f"need m, q >= 1 and n_mid >= 0, got {m, n_mid, q}")
    n = m + n_mid + q
    gates = [GateOp("h", (0,))]
    gates += [GateOp("cnot", (i, i + 1)) for i in range(m + q - 1)]
    for b in reversed(range(q)):
        for j in range(m + b, n - q + b):
            gates.append(GateOp("swap", (j, j + 1)))
    return gates


def ghz_circuit(m: int, n_mid: int, q: int,
                max_qubits: int = MAX_QUBITS) -> Circuit:
    n = m + n_mid + q
    if n > max_qubits:
        raise CapacityError(f"{n} qubits exceed the limit {max_qubits}")
    return compile_to_schedule(n, ghz_gate_list(m, n_mid, q), max_qubits)


def ghz_target_state(m: int, n_mid: int, q: int) -> np.ndarray:
    n = m + n_mid + q
    psi = basis_state([0] * n) + basis_state([1] * m + [0] * n_mid + [1] * q)
    return psi / math.sqrt(2)


def random_circuit(spec: LatticeSpec, seed) -> Circuit:
    """Haar-random two-qubit unitary on every scheduled pair of every step."""
    rng = np.random.default_rng(seed)
    layers = []
    for t in range(1, spec.steps + 1):
        layers.append([GateOp("u2", pair, unitary_group.rvs(4, random_state=rng))
                       for pair in _schedule(spec, t)])
    return Circuit(spec, layers)


def random_pure_state(n_qubits: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=2 ** n_qubits) + 1j * rng.normal(size=2 ** n_qubits)
    return psi / np.linalg.norm(psi)


def reduced_density_matrix(rho: DensityMatrix, subset) -> DensityMatrix:
    """Partial trace onto ``subset``; kept qubits appear in the given order."""
    subset = [int(q) for q in subset]
    n = rho.n_qubits
    if not subset or len(set(subset)) != len(subset) or any(
            not 0 <= q < n for q in subset):
        raise ValidationError(f"invalid subset {subset} of {n} qubits")
    keep = set(subset)
    rows = list(range(n))
    cols = [n + q if q in keep else q for q in range(n)]
    out_axes = subset + [n + q for q in subset]
    t = np.einsum(rho.data.reshape((2,) * (2 * n)), rows + cols, out_axes)
    dim = 2 ** len(subset)
    return DensityMatrix(t.reshape(dim, dim), len(subset))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of ``a - b``."""
    d = np.asarray(a) - np.asarray(b)
    return 0.5 * float(np.abs(np.linalg.eigvalsh((d + d.conj().T) / 2)).sum())


def random_density_matrix(n_qubits: int, rng, rank: int | None = None) -> np.ndarray:
    """Ginibre-distributed mixed state of the given rank (full by default)."""
    dim = 2 ** n_qubits
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def dephasing_collapse_gap(trials: int, seed: int, eta: float = 0.3) -> float:
    """Largest trace distance between dephasing with ``exp(-gamma_dt) = 1 - eta``
    and collapse at rate ``eta``, over random single-qubit states."""
    rng = np.random.default_rng(seed)
    gamma_dt = -math.log1p(-eta) if eta < 1 else math.inf
    collapse = NoiseChannelSpec("collapse", eta=eta)
    dephase = NoiseChannelSpec("dephase", gamma_dt=gamma_dt)
    worst = 0.0
    for _ in range(trials):
        rho = DensityMatrix(random_density_matrix(1, rng), 1)
        a = apply_noise_channel(rho, collapse, 0).data
        b = apply_noise_channel(rho, dephase, 0).data
        worst = max(worst, trace_distance(a, b))
    return worst
