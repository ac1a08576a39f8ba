import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from isingiic.circuits import (CircuitQuery, brute_force_innermost, enclosed_count,
                               exists_plus_circuit, face_dual_circuit, innermost_batch,
                               innermost_is, innermost_plus_circuit)
from isingiic.lattice import Box, Circuit, LatticeKind, enclosed_sites, ring, surrounds
from isingiic.model import SpinConfig, Window

SQ, TRI = LatticeKind.SQUARE, LatticeKind.TRIANGULAR
kinds = st.sampled_from([SQ, TRI])
Q = CircuitQuery(1, 4)


def _random(kind, seed, n=4):
    w = Window.box(n, kind)
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.4, 0.85)
    return SpinConfig(w, np.where(rng.random(w.n) < p, 1, -1), None)


def _rings(kind, radii, n=4):
    return SpinConfig.from_function(Window.box(n, kind),
                                    lambda s: 1 if max(abs(s[0]), abs(s[1])) in radii else -1)


def test_query_validation():
    with pytest.raises(ValueError):
        CircuitQuery(3, 3)
    with pytest.raises(ValueError):
        CircuitQuery(Box(3), 3)
    assert CircuitQuery(1, 4).in_hole((1, -1)) and CircuitQuery(1, 4).contains((4, 0))


@pytest.mark.parametrize("kind", [SQ, TRI])
def test_existence_examples(kind):
    w = Window.box(4, kind)
    assert exists_plus_circuit(SpinConfig.constant(w, 1), Q)
    assert not exists_plus_circuit(SpinConfig.constant(w, -1), Q)
    # a straight minus ray from the hole to the edge blocks every circuit
    ray = SpinConfig.from_function(w, lambda s: -1 if s[1] == 0 and s[0] >= 0 else 1)
    assert not exists_plus_circuit(ray, Q)
    assert innermost_plus_circuit(ray, Q) is None


def test_diagonal_minus_path_blocks_on_square_only():
    diag = lambda s: -1 if s[0] == s[1] and s[0] >= 2 else 1  # noqa: E731
    assert not exists_plus_circuit(SpinConfig.from_function(Window.box(4), diag), Q)
    # (x, x) -> (x+1, x+1) is a lattice edge on the triangular lattice, so
    # plus sites on either side cannot pass between them there...
    tri = SpinConfig.from_function(Window.box(4, TRI), diag)
    assert not exists_plus_circuit(tri, Q)
    # ...but an anti-diagonal minus path leaks through
    anti = lambda s: -1 if s[0] == -s[1] and s[0] >= 2 else 1  # noqa: E731
    assert exists_plus_circuit(SpinConfig.from_function(Window.box(4, TRI), anti), Q)
    assert not exists_plus_circuit(SpinConfig.from_function(Window.box(4), anti), Q)


@pytest.mark.parametrize("kind", [SQ, TRI])
def test_concentric_rings(kind):
    got = innermost_plus_circuit(_rings(kind, {2, 4}), Q)
    assert set(got.sites) <= set(ring(2).sites)
    assert surrounds(got, Box(1))
    only = innermost_plus_circuit(_rings(kind, {3}), Q)
    assert set(only.sites) <= set(ring(3).sites)
    if kind is SQ:
        assert only == ring(3)


@pytest.mark.parametrize("kind", [SQ, TRI])
def test_all_plus_gives_tightest_ring(kind):
    c = SpinConfig.constant(Window.box(4, kind), 1)
    got = innermost_plus_circuit(c, Q)
    assert got == brute_force_innermost(c, Q)
    ref_region, _ = oracles.innermost({s: 1 for s in oracles.box(2)}, 1, 2, kind.value)
    assert enclosed_sites(got) == ref_region
    if kind is SQ:
        assert got == ring(2)


def test_brute_force_refuses_large_scales():
    with pytest.raises(ValueError):
        brute_force_innermost(SpinConfig.constant(Window.box(7), 1), CircuitQuery(1, 7))


@pytest.mark.parametrize("kind", [SQ, TRI])
def test_matches_pure_python_oracle(kind):
    # cycle enumeration in tests/oracles.py is exponential; keep density moderate
    rng = np.random.default_rng(17)
    q = CircuitQuery(0, 2)
    w = Window.box(2, kind)
    density = 0.65 if kind is SQ else 0.6
    hits = 0
    for _ in range(300):
        c = SpinConfig(w, np.where(rng.random(w.n) < density, 1, -1), None)
        cfg = {(int(a), int(b)): int(v) for (a, b), v in zip(w.sites, c.spins)}
        ref = oracles.innermost(cfg, 0, 2, kind.value)
        got = innermost_plus_circuit(c, q)
        assert (ref is None) == (got is None)
        if got is not None:
            hits += 1
            assert enclosed_sites(got) == ref[0]
            assert set(got.sites) == set(ref[1])
    assert hits > 20


@settings(max_examples=300)
@given(kinds, st.integers(0, 2 ** 32 - 1))
def test_matches_brute_force(kind, seed):
    c = _random(kind, seed)
    assert innermost_plus_circuit(c, Q) == brute_force_innermost(c, Q)


@settings(max_examples=300)
@given(kinds, st.integers(0, 2 ** 32 - 1))
def test_result_is_a_surrounding_plus_circuit(kind, seed):
    c = _random(kind, seed)
    got = innermost_plus_circuit(c, Q)
    assert (got is not None) == exists_plus_circuit(c, Q)
    if got is None:
        return
    Circuit(got.sites, kind)
    assert surrounds(got, Box(1))
    assert all(Q.contains(s) and c[s] == 1 for s in got.sites)
    assert enclosed_count(got) == len(enclosed_sites(got))
    # every surrounding circuit, in particular the dual one, encloses it
    dual = face_dual_circuit(c, Q)
    assert enclosed_sites(got) <= enclosed_sites(dual)


@pytest.mark.parametrize("kind", [SQ, TRI])
def test_partition_identity(kind):
    w = Window.box(4, kind)
    rng = np.random.default_rng(5)
    spins = np.where(rng.random((2000, w.n)) < rng.uniform(0.5, 0.85, (2000, 1)), 1, -1)
    spins = spins.astype(np.int8)
    found = innermost_batch(spins, w, Q)
    exists = np.array([exists_plus_circuit(SpinConfig(w, s, None), Q) for s in spins])
    distinct = {c.canonical(): c for c in found if c is not None}
    total = np.zeros(len(spins), dtype=int)
    for c in distinct.values():
        total += innermost_is(spins, w, Q, c)
    assert np.array_equal(total, exists.astype(int))
    assert exists.any() and not exists.all()


@settings(max_examples=1000)
@given(kinds, st.integers(0, 2 ** 32 - 1))
def test_flipping_to_plus_keeps_circuits(kind, seed):
    c = _random(kind, seed)
    minus = np.nonzero(c.spins < 0)[0]
    if not len(minus):
        return
    up = c.copy()
    up.spins[np.random.default_rng(seed).choice(minus)] = 1
    assert exists_plus_circuit(c, Q) <= exists_plus_circuit(up, Q)


def test_innermost_is_validates_target():
    w = Window.box(4)
    spins = np.ones((1, w.n), dtype=np.int8)
    with pytest.raises(ValueError):
        innermost_is(spins, w, Q, ring(1))
    assert innermost_is(spins, w, Q, ring(2))[0]
    assert not innermost_is(spins, w, Q, ring(3))[0]
