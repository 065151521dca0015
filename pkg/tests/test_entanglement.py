import math

import numpy as np
import pytest

from entlength.entanglement import (Bipartition, continuity_bound,
                                    continuity_bound_from_distance, eof,
                                    eof_minimize, eof_two_qubit,
                                    entropy_of_entanglement, theorem1_bound,
                                    trace_norm)
from entlength.errors import ValidationError
from entlength.quantum import (DensityMatrix, random_density_matrix,
                               random_pure_state)

RNG = np.random.default_rng(77)
AB = Bipartition((0,), (1,))
BELL = np.array([1, 0, 0, 1]) / math.sqrt(2)


def _rho(n, rank=None, rng=RNG):
    return DensityMatrix(random_density_matrix(n, rng, rank), n)


def _local(rng):
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return np.linalg.qr(z)[0]


def _min_partial_transpose_eig(m):
    # independent separability oracle for two qubits
    pt = m.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    return np.linalg.eigvalsh(pt).min()


def test_bipartition_parse_and_validation():
    b = Bipartition.parse("0,1|2,3")
    assert b.a == (0, 1) and b.b == (2, 3) and b.dims == (4, 4)
    for bad in ("0,1|1", "|2", "0;1", "a|b"):
        with pytest.raises(ValidationError):
            Bipartition.parse(bad)
    with pytest.raises(ValidationError):
        Bipartition((0,), (5,)).check(3)


def test_entropy_examples():
    assert entropy_of_entanglement(BELL, AB) == pytest.approx(1.0, abs=1e-12)
    assert entropy_of_entanglement([1, 0, 0, 0], AB) == 0.0
    psi = np.array([math.sqrt(0.9), 0, 0, math.sqrt(0.1)])
    expected = -0.9 * math.log2(0.9) - 0.1 * math.log2(0.1)
    assert entropy_of_entanglement(psi, AB) == pytest.approx(expected, abs=1e-12)
    assert round(expected, 4) == 0.4690


def test_entropy_rejects_unnormalized():
    with pytest.raises(ValidationError):
        entropy_of_entanglement([1, 0, 0, 1], AB)


def test_entropy_symmetric_in_sides():
    for _ in range(20):
        psi = random_pure_state(4, RNG)
        a = entropy_of_entanglement(psi, Bipartition((0, 1), (2, 3)))
        b = entropy_of_entanglement(psi, Bipartition((2, 3), (0, 1)))
        c = entropy_of_entanglement(psi, Bipartition((0,), (1, 2, 3)))
        d = entropy_of_entanglement(psi, Bipartition((1, 2, 3), (0,)))
        assert abs(a - b) < 1e-10 and abs(c - d) < 1e-10


def test_entropy_from_density_matrix_matches_vector():
    psi = random_pure_state(3, RNG)
    bip = Bipartition((2,), (0, 1))
    assert entropy_of_entanglement(DensityMatrix.from_state(psi), bip) == \
        pytest.approx(entropy_of_entanglement(psi, bip), abs=1e-10)


def test_closed_form_examples():
    assert eof_two_qubit(DensityMatrix.from_state(BELL)).value == \
        pytest.approx(1.0, abs=1e-12)
    assert eof_two_qubit(DensityMatrix.maximally_mixed(2)).value == 0.0
    with pytest.raises(ValidationError):
        eof_two_qubit(DensityMatrix(np.eye(4) / 2, 2))


def test_closed_form_zero_iff_ppt():
    seen = {True: 0, False: 0}
    for i in range(200):
        rank = 1 + i % 4
        m = random_density_matrix(2, RNG, rank)
        if i % 3 == 0:
            m = 0.5 * m + 0.5 * np.eye(4) / 4
        lo = _min_partial_transpose_eig(m)
        if abs(lo) < 1e-9:
            continue
        value = eof_two_qubit(DensityMatrix(m, 2)).value
        separable = lo > 0
        seen[separable] += 1
        assert (value < 1e-12) == separable
    assert seen[True] >= 20 and seen[False] >= 20


def test_local_unitary_invariance():
    for _ in range(20):
        u = np.kron(_local(RNG), np.eye(2))
        rho = _rho(2)
        rot = DensityMatrix(u @ rho.data @ u.conj().T, 2)
        assert abs(eof_two_qubit(rho).value - eof_two_qubit(rot).value) < 1e-9
        psi = random_pure_state(2, RNG)
        assert abs(entropy_of_entanglement(psi, AB)
                   - entropy_of_entanglement(u @ psi, AB)) < 1e-9


def test_minimize_pure_state():
    psi = random_pure_state(4, RNG)
    bip = Bipartition((0, 1), (2, 3))
    res = eof_minimize(DensityMatrix.from_state(psi), bip, restarts=4)
    assert abs(res.value - entropy_of_entanglement(psi, bip)) < 1e-8


def test_minimize_separable_mixture():
    a = np.kron(random_pure_state(1, RNG), random_pure_state(2, RNG))
    b = np.kron(random_pure_state(1, RNG), random_pure_state(2, RNG))
    m = 0.3 * np.outer(a, a.conj()) + 0.7 * np.outer(b, b.conj())
    res = eof_minimize(DensityMatrix(m, 3), Bipartition((0,), (1, 2)), k=2)
    assert abs(res.value) < 1e-6


def test_minimize_decomposition_reconstructs():
    target = _rho(3, 3)
    res = eof_minimize(target, Bipartition((0,), (1, 2)), k=5, restarts=8)
    assert res.k == 5 and len(res.weights) == 5 and res.value >= 0
    assert trace_norm(res.reconstruct() - target.data) / 2 < 1e-8


def test_minimize_rejects_small_k_and_large_dims():
    with pytest.raises(ValidationError):
        eof_minimize(_rho(2, 3), AB, k=2)
    with pytest.raises(ValidationError):
        eof_minimize(DensityMatrix.basis([0] * 7), Bipartition((0, 1, 2), (3, 4, 5, 6)))


def test_minimize_is_an_upper_bound_on_closed_form():
    for _ in range(10):
        rho = _rho(2)
        exact = eof_two_qubit(rho).value
        got = eof_minimize(rho, AB, k=4, restarts=8).value
        assert got >= exact - 1e-6


def test_minimize_monotone_in_restarts():
    bip = Bipartition((0,), (1, 2))
    for _ in range(5):
        rho = _rho(3, 2)
        few = eof_minimize(rho, bip, restarts=4, seed=3).value
        many = eof_minimize(rho, bip, restarts=32, seed=3).value
        assert many <= few + 1e-9


def test_minimize_monotone_in_k_on_average():
    bip = Bipartition((0,), (1, 2))
    small, large = [], []
    for _ in range(8):
        rho = _rho(3, 2)
        small.append(eof_minimize(rho, bip, k=2, restarts=16).value)
        large.append(eof_minimize(rho, bip, k=4, restarts=16).value)
    assert np.mean(large) <= np.mean(small) + 1e-4


def test_dispatch():
    bell = DensityMatrix.from_state(BELL)
    assert eof(bell, AB).method == "closed-form"
    four = DensityMatrix.from_state(random_pure_state(4, RNG))
    assert eof(four, Bipartition((0, 1), (2, 3))).method == "pure"
    assert eof(_rho(3, 2), Bipartition((0,), (1, 2)), restarts=2).method == \
        "minimization"
    with pytest.raises(ValidationError):
        eof(bell, AB, method="guess")


def test_continuity_examples():
    rho = _rho(2)
    assert continuity_bound(rho, rho, AB) == 0.0
    assert continuity_bound_from_distance(0.01, 2, 2) == pytest.approx(
        9 * 0.01 - 0.01 * math.log2(0.01))
    assert round(continuity_bound_from_distance(0.01, 2, 2), 4) == 0.1564
    assert continuity_bound_from_distance(1.5, 2, 2) == math.inf
    with pytest.raises(ValidationError):
        continuity_bound(rho, _rho(3), AB)


def test_continuity_holds_on_random_pairs():
    for i in range(100):
        rho = _rho(2)
        mix = 10 ** RNG.uniform(-4, -0.5)
        sigma = DensityMatrix((1 - mix) * rho.data + mix * random_density_matrix(2, RNG), 2)
        if i % 2:
            sigma = _rho(2)
        gap = abs(eof_two_qubit(rho).value - eof_two_qubit(sigma).value)
        assert gap <= continuity_bound(rho, sigma, AB) + 1e-12


def test_theorem_bound_examples():
    assert theorem1_bound(1, 1, 10, 2) == pytest.approx(math.exp(-5))
    assert round(theorem1_bound(1, 1, 10, 2), 5) == 0.00674
    assert theorem1_bound(2, 3, 0, 1.0) == 2 * 2 * 3
    assert theorem1_bound(1, 1, 5, 1e-3) < 1e-300
    assert theorem1_bound(1, 2, 4, 2.0, t=6, n=10) == pytest.approx(
        2 * math.exp(-2) + 10 * math.exp(-3))
    with pytest.raises(ValidationError):
        theorem1_bound(1, 1, 1, 0.0)
