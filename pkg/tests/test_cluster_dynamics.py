import numpy as np
import pytest

from entlength.cluster_dynamics import (correspondence_sweep, evolve_clusters,
                                        giant_initial_augmentation,
                                        percolation_layer_labels,
                                        verify_correspondence)
from entlength.errors import ShapeError, ValidationError
from entlength.lattice import LatticeSpec, build_lattice
from entlength.percolation import (connected_components,
                                   realization_from_bits, sample_realization,
                                   tau_estimate)
from entlength.unionfind import DetachableDisjointSet

from oracles import naive_cluster_evolution, partition_of_labels


def _real(spec, p, seed=0, index=0, giant=False):
    lat = build_lattice(spec)
    if giant:
        lat = giant_initial_augmentation(lat)
    return sample_realization(lat, p, seed, index)


def test_full_noise_gives_singletons_after_noise():
    spec = LatticeSpec.chain(6, 5)
    traj = evolve_clusters(spec, _real(spec, 0.0))
    n = spec.n
    for row in traj.after_noise:
        assert len(set(row)) == n


def test_initial_modes():
    spec = LatticeSpec.chain(5, 3)
    assert len(set(evolve_clusters(spec, _real(spec, 0.5)).labels[0])) == 5
    giant = evolve_clusters(spec, _real(spec, 0.5, giant=True), "giant")
    assert len(set(giant.labels[0])) == 1


def test_bad_init_and_shape():
    spec = LatticeSpec.chain(4, 2)
    r = _real(spec, 0.5)
    with pytest.raises(ValidationError):
        evolve_clusters(spec, r, "mixed")
    with pytest.raises(ShapeError):
        evolve_clusters(LatticeSpec.chain(4, 3), r)


@pytest.mark.parametrize("giant", [False, True])
def test_matches_list_of_sets_oracle(giant):
    rng = np.random.default_rng(8)
    for _ in range(150):
        dim = int(rng.integers(1, 3))
        sides = (int(rng.integers(2, 9)),) if dim == 1 else \
            tuple(int(s) for s in rng.integers(2, 4, 2))
        spec = LatticeSpec(dim, sides, int(rng.integers(0, 7)))
        r = _real(spec, float(rng.random()), int(rng.integers(1000)), 0, giant)
        closed = (~r.is_open).reshape(spec.steps, spec.n)
        traj = evolve_clusters(spec, r, "giant" if giant else "singletons")
        ref = naive_cluster_evolution(spec, closed, giant)
        for t in range(spec.steps + 1):
            assert partition_of_labels(traj.labels[t]) == ref[t]


def test_size_changes_are_merges_or_detachments():
    spec = LatticeSpec.chain(10, 12)
    traj = evolve_clusters(spec, _real(spec, 0.6, 3))
    for t in range(spec.steps):
        before = partition_of_labels(traj.labels[t])
        after = partition_of_labels(traj.after_noise[t])
        assert sum(map(len, after)) == spec.n
        closed = ~traj.realization.is_open.reshape(spec.steps, spec.n)[t]
        for c in after:
            if len(c) == 1 and closed[c[0]]:
                continue
            # a surviving cluster is an old cluster minus collapsed particles
            host = next(b for b in before if c[0] in b)
            assert set(c) == {x for x in host if not closed[x]}
        nxt = partition_of_labels(traj.labels[t + 1])
        for c in nxt:
            # interactions only merge: each new cluster is a union of old ones
            for a in after:
                assert set(a) <= set(c) or not set(a) & set(c)


def test_correspondence_examples():
    spec = LatticeSpec(2, (3, 3), 6)
    for i in range(50):
        assert verify_correspondence(spec, _real(spec, 0.5, 1, i)).ok


def test_correspondence_sweeps_both_modes():
    assert correspondence_sweep(300, 4).ok
    assert correspondence_sweep(300, 5, "giant", max_n=8, max_steps=8).ok


def test_correspondence_detects_corruption():
    spec = LatticeSpec.chain(6, 4)
    lat = build_lattice(spec)
    r = realization_from_bits(lat, np.zeros(lat.n_edges, bool))
    good = percolation_layer_labels(lat, r.is_open)
    traj = evolve_clusters(spec, r)
    assert np.array_equal(traj.labels, good)
    # same realization, but the percolation side sees all edges open
    wrong = percolation_layer_labels(lat, np.ones(lat.n_edges, bool))
    assert not np.array_equal(traj.labels, wrong)


def test_giant_augmentation_joins_layer_zero():
    lat = giant_initial_augmentation(build_lattice(LatticeSpec.chain(4, 2)))
    part = connected_components(realization_from_bits(
        lat, np.zeros(lat.n_edges, bool)))
    roots = {part.find(int(v)) for v in lat.images(0)}
    assert len(roots) == 1


def test_giant_augmentation_only_increases_tau():
    spec = LatticeSpec.chain(8, 6)
    plain = build_lattice(spec)
    aug = giant_initial_augmentation(plain)
    top = plain.images(spec.steps)
    pairs = [(int(top[a]), int(top[b])) for a in range(8) for b in range(a + 1, 8)]
    t0 = tau_estimate(plain, 0.5, pairs, 2000, 2)
    t1 = tau_estimate(aug, 0.5, pairs, 2000, 2)
    assert all(b.hits >= a.hits for a, b in zip(t0, t1))


def test_detachable_set_labels_are_canonical():
    s = DetachableDisjointSet(5)
    s.union(0, 1)
    s.union(3, 4)
    s.union(1, 4)
    assert list(s.labels()) == [0, 0, 2, 0, 0]
    s.detach(0)
    assert list(s.labels()) == [0, 1, 2, 1, 1]
    s.detach(2)  # already alone
    assert list(s.labels()) == [0, 1, 2, 1, 1]
