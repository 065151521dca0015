"""Entanglement measures in ebits (base-2 logarithms).

Entropy of entanglement for pure states, entanglement of formation (closed
form for two qubits, ensemble minimization otherwise), the continuity bound
and the finite-noise bound evaluator.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import ValidationError
from .quantum import DensityMatrix, reduced_density_matrix

ZERO_EIG = 1e-12
MAX_EOF_DIM = 64
LN2 = math.log(2.0)


@dataclass(frozen=True)
class Bipartition:
    """Disjoint qubit sets ``a`` and ``b``.  States are read in ``a + b`` order."""

    a: tuple[int, ...]
    b: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(q) for q in self.a)
        b = tuple(int(q) for q in self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if not a or not b:
            raise ValidationError("both sides of a bipartition must be nonempty")
        if len(set(a)) != len(a) or len(set(b)) != len(b) or set(a) & set(b):
            raise ValidationError(f"sides {a} and {b} are not disjoint sets")

    @classmethod
    def parse(cls, text: str) -> "Bipartition":
        """``"0,1|2,3"`` -> ``Bipartition((0, 1), (2, 3))``."""
        try:
            left, right = text.split("|")
            return cls(tuple(int(x) for x in left.split(",")),
                       tuple(int(x) for x in right.split(",")))
        except ValueError as exc:
            raise ValidationError(f"malformed partition {text!r}") from exc

    @classmethod
    def halves(cls, n_a: int, n_b: int) -> "Bipartition":
        return cls(tuple(range(n_a)), tuple(range(n_a, n_a + n_b)))

    @property
    def dims(self) -> tuple[int, int]:
        return 2 ** len(self.a), 2 ** len(self.b)

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.a + self.b

    def check(self, n_qubits: int):
        if max(self.qubits) >= n_qubits:
            raise ValidationError(
                f"partition {self.a}|{self.b} exceeds {n_qubits} qubits")


def shannon_bits(probs) -> float:
    p = np.asarray(probs, dtype=float)
    p = p[p > ZERO_EIG]
    return float(-(p * np.log2(p)).sum()) + 0.0


def von_neumann_entropy(rho) -> float:
    m = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return shannon_bits(np.linalg.eigvalsh((m + m.conj().T) / 2))


def _ordered_state(rho: DensityMatrix, bip: Bipartition) -> np.ndarray:
    bip.check(rho.n_qubits)
    if bip.qubits == tuple(range(rho.n_qubits)):
        return rho.data
    return reduced_density_matrix(rho, bip.qubits).data


def entropy_of_entanglement(psi, bip: Bipartition, atol: float = 1e-10) -> float:
    """Entropy of the ``a`` marginal of a pure state (a vector or rank-1 ρ)."""
    if isinstance(psi, DensityMatrix):
        m = _ordered_state(psi, bip)
        lam, vec = np.linalg.eigh(m)
        if lam[-1] < 1 - 1e-8:
            raise ValidationError("density matrix is not pure")
        psi = vec[:, -1]
        n = len(bip.qubits)
    else:
        psi = np.asarray(psi, dtype=complex).ravel()
        n = int(round(math.log2(len(psi))))
        if 2 ** n != len(psi):
            raise ValidationError(f"state length {len(psi)} is not a power of 2")
        bip.check(n)
        if abs(np.vdot(psi, psi).real - 1.0) > atol:
            raise ValidationError("state is not normalized")
        if bip.qubits != tuple(range(n)):
            t = psi.reshape((2,) * n)
            rest = [q for q in range(n) if q not in bip.qubits]
            t = np.transpose(t, list(bip.qubits) + rest)
            if rest:
                # tracing a pure state over spectators: use the mixed marginal
                mat = t.reshape(2 ** len(bip.a), -1)
                return shannon_bits(np.linalg.svd(mat, compute_uv=False) ** 2)
            psi = t.ravel()
    da = 2 ** len(bip.a)
    s = np.linalg.svd(psi.reshape(da, -1), compute_uv=False)
    return shannon_bits(s ** 2)


@dataclass(frozen=True)
class EofResult:
    value: float
    method: str
    k: int | None = None
    restarts: int | None = None
    weights: np.ndarray | None = None
    states: np.ndarray | None = None
    converged: bool = True

    def reconstruct(self) -> np.ndarray:
        """``sum_i w_i |a_i><a_i|`` of the returned ensemble."""
        if self.states is None:
            raise ValidationError(f"{self.method} result carries no ensemble")
        s = self.states
        return np.einsum("i,ij,ik->jk", self.weights, s, s.conj())

    def to_dict(self) -> dict:
        out = {"value": self.value, "method": self.method,
               "converged": self.converged}
        if self.k is not None:
            out.update(k=self.k, restarts=self.restarts,
                       weights=[float(w) for w in self.weights],
                       states=[[[float(z.real), float(z.imag)] for z in row]
                               for row in self.states])
        return out


_YY = np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]],
               dtype=complex)


def _psd_sqrt(m):
    lam, v = np.linalg.eigh((m + m.conj().T) / 2)
    return (v * np.sqrt(np.clip(lam, 0, None))) @ v.conj().T


def concurrence(rho) -> float:
    m = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    tilde = _YY @ m.conj() @ _YY
    root = _psd_sqrt(m)
    lam = np.sqrt(np.clip(np.linalg.eigvalsh(root @ tilde @ root), 0, None))
    lam = np.sort(lam)[::-1]
    return float(max(0.0, lam[0] - lam[1:].sum()))


def binary_entropy(x: float) -> float:
    return shannon_bits([x, 1.0 - x])


def eof_two_qubit(rho: DensityMatrix, bip: Bipartition | None = None,
                  validate: bool = True) -> EofResult:
    """Closed-form E_f of a two-qubit state from its concurrence."""
    if bip is not None:
        if len(bip.a) != 1 or len(bip.b) != 1:
            raise ValidationError("closed form needs one qubit per side")
        rho = DensityMatrix(_ordered_state(rho, bip), 2)
    if rho.n_qubits != 2:
        raise ValidationError(f"closed form needs 2 qubits, got {rho.n_qubits}")
    if validate:
        rho.validate()
    c = min(1.0, concurrence(rho))
    return EofResult(binary_entropy((1 + math.sqrt(1 - c * c)) / 2),
                     "closed-form")


def _ensemble_cost(W, amps, da, db):
    """Average pure-state entropy (nats) of the ensemble ``W @ amps`` for each
    restart, and its gradient with respect to conj(W)."""
    m = np.einsum("bij,jx->bix", W, amps).reshape(W.shape[0], W.shape[1], da, db)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    s2 = s * s
    w = s2.sum(axis=-1)
    safe_w = np.where(w > 0, w, 1.0)
    logs2 = np.log(np.where(s2 > 0, s2, 1.0))
    cost = (-(s2 * logs2).sum(axis=-1) + w * np.log(safe_w)).sum(axis=-1)
    # d cost / d conj(M_i) = log(w_i) M_i - U diag(s log s^2) V^dagger
    g = (np.log(safe_w)[..., None, None] * m
         - np.einsum("bkij,bkj,bkjl->bkil", u, s * logs2, vh))
    grad = np.einsum("bkij,xij->bkx", g, amps.reshape(-1, da, db).conj())
    return cost, grad


def _unitary_step(W, omega, alpha):
    """``exp(-alpha * omega) @ W`` for skew-Hermitian ``omega`` (batched)."""
    lam, v = np.linalg.eigh(1j * omega)
    phase = np.exp(1j * alpha[:, None] * lam)
    return np.einsum("bij,bj,bkj,bkl->bil", v, phase, v.conj(), W)


def _haar(rng, k, batch):
    z = (rng.normal(size=(batch, k, k)) + 1j * rng.normal(size=(batch, k, k)))
    q, r = np.linalg.qr(z / math.sqrt(2))
    d = np.diagonal(r, axis1=1, axis2=2)
    return q * (d / np.abs(d))[:, None, :]


def eof_minimize(rho: DensityMatrix, bip: Bipartition, k: int | None = None,
                 restarts: int = 32, tol: float = 1e-7, max_iter: int = 2000,
                 seed: int = 0) -> EofResult:
    """Upper bound on E_f from the best ensemble found by local search.

    Every size-``k`` decomposition of a rank-``r`` state is
    ``|a_i> = sum_j U_ij sqrt(l_j) |e_j>`` for a ``k x r`` isometry ``U`` on the
    eigendecomposition.  ``U`` is taken as the first ``r`` columns of a
    ``k x k`` unitary, optimized by Riemannian gradient descent with Armijo
    backtracking from ``restarts`` starting points (the first is the
    eigenbasis itself).
    """
    m = _ordered_state(rho, bip)
    da, db = bip.dims
    if da * db > MAX_EOF_DIM:
        raise ValidationError(
            f"dimension {da * db} exceeds the minimization cap {MAX_EOF_DIM}")
    DensityMatrix(m, len(bip.qubits)).validate()
    lam, vec = np.linalg.eigh((m + m.conj().T) / 2)
    keep = lam > ZERO_EIG
    lam, vec = lam[keep][::-1], vec[:, keep][:, ::-1]
    r = len(lam)
    k = r if k is None else int(k)
    if k < r:
        raise ValidationError(f"ensemble size k={k} is below rank {r}")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    amps = (vec * np.sqrt(lam)).T.copy()  # (r, D) rows sqrt(l_j) e_j
    amps_k = np.zeros((k, da * db), dtype=complex)
    amps_k[:r] = amps

    rng = np.random.default_rng(seed)
    W = _haar(rng, k, restarts)
    W[0] = np.eye(k)
    alpha = np.full(restarts, 1.0)
    active = np.ones(restarts, dtype=bool)
    done = np.zeros(restarts, dtype=bool)
    cost, grad = _ensemble_cost(W, amps_k, da, db)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        Wi, gi = W[idx], grad[idx]
        omega = np.einsum("bij,bkj->bik", gi, Wi.conj())
        omega = omega - omega.conj().transpose(0, 2, 1)
        gnorm = 0.5 * np.einsum("bij,bij->b", omega, omega.conj()).real
        trial = _unitary_step(Wi, omega, alpha[idx])
        c_new, g_new = _ensemble_cost(trial, amps_k, da, db)
        ok = c_new <= cost[idx] - 1e-4 * alpha[idx] * gnorm
        small = (cost[idx] - c_new < tol * LN2) | (gnorm < 1e-24)
        acc = idx[ok]
        W[acc], grad[acc] = trial[ok], g_new[ok]
        stop = ok & small
        cost[acc] = c_new[ok]
        alpha[acc] *= 2.0
        alpha[idx[~ok]] *= 0.5
        stalled = ~ok & (alpha[idx] < 1e-12)
        done[idx[stop]] = True
        active[idx[stop | stalled]] = False
        done[idx[stalled & (gnorm < 1e-16)]] = True

    best = int(np.argmin(cost))
    ens = W[best] @ amps_k
    w = np.einsum("ij,ij->i", ens, ens.conj()).real
    nz = w > 0
    states = np.zeros_like(ens)
    states[nz] = ens[nz] / np.sqrt(w[nz])[:, None]
    return EofResult(max(0.0, float(cost[best]) / LN2), "minimization", k,
                     restarts, w, states, bool(done[best]))


def eof(rho: DensityMatrix, bip: Bipartition, method: str = "auto",
        **kwargs) -> EofResult:
    """E_f by ``closed`` form, ``minimize`` search or ``auto`` choice."""
    if method not in ("auto", "closed", "minimize"):
        raise ValidationError(f"unknown E_f method {method!r}")
    two = len(bip.a) == 1 and len(bip.b) == 1
    if method == "closed" or (method == "auto" and two):
        return eof_two_qubit(rho, bip)
    if method == "auto":
        m = _ordered_state(rho, bip)
        lam = np.linalg.eigvalsh((m + m.conj().T) / 2)
        if (lam > ZERO_EIG).sum() == 1:
            sub = DensityMatrix(m, len(bip.qubits))
            value = entropy_of_entanglement(
                sub, Bipartition.halves(len(bip.a), len(bip.b)))
            return EofResult(value, "pure")
    return eof_minimize(rho, bip, **kwargs)


def trace_norm(a) -> float:
    a = np.asarray(a)
    return float(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2)).sum())


def continuity_bound_from_distance(eps: float, d: int, d2: int) -> float:
    if eps < 0:
        raise ValidationError(f"distance must be >= 0, got {eps}")
    if eps > 1:
        return math.inf
    if eps == 0:
        return 0.0
    return 9 * eps * math.log2(max(d, d2)) - eps * math.log2(eps)


def continuity_bound(rho, sigma, bip) -> float:
    """Bound on ``|E_f(rho) - E_f(sigma)|`` with ``eps = ||rho - sigma||_1``.

    ``bip`` is a :class:`Bipartition` or a ``(d, d')`` pair.  Returns ``inf``
    when ``eps > 1``, outside the bound's domain.
    """
    a = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    b = sigma.data if isinstance(sigma, DensityMatrix) else np.asarray(sigma)
    if a.shape != b.shape:
        raise ValidationError(f"shapes {a.shape} and {b.shape} differ")
    d, d2 = bip.dims if isinstance(bip, Bipartition) else bip
    if d * d2 != a.shape[0]:
        raise ValidationError(f"dims {d}x{d2} do not match {a.shape[0]}")
    return continuity_bound_from_distance(trace_norm(a - b), d, d2)


def theorem1_bound(size_a: int, size_b: int, distance: float, xi: float,
                   t: float | None = None, n: int | None = None) -> float:
    """``m |A| |B| exp(-dist / xi)`` with ``m = min(|A|, |B|)``, plus
    ``m * n * m * exp(-t / xi)`` when ``(t, n)`` are supplied."""
    if size_a < 1 or size_b < 1:
        raise ValidationError("set sizes must be >= 1")
    if not xi > 0:
        raise ValidationError(f"xi must be > 0, got {xi}")
    lo = min(size_a, size_b)
    value = lo * size_a * size_b * math.exp(-distance / xi)
    if (t is None) != (n is None):
        raise ValidationError("t and n must be given together")
    if t is not None:
        value += lo * n * lo * math.exp(-t / xi)
    return value
