import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from isingiic.events import Always, Connect, Crossing, SpinIs, parse_event
from isingiic.lattice import Box, Explicit, LatticeKind, Rectangle
from isingiic.model import (ClampedGibbs, ModelParams, SpinConfig, Window, check_dlr, check_fkg,
                            exact_conditional, exact_event_prob, exact_gibbs, hamiltonian,
                            is_increasing)

SQ, TRI = LatticeKind.SQUARE, LatticeKind.TRIANGULAR

# P(origin joined to the outer ring of S(1)) on S(1), beta=0.3, h=0.2, plus
# boundary; pure-python sum over the 512 configurations (tests/oracles.py)
ORIGIN_TO_RIM = {SQ: 0.8342741955892057, TRI: 0.9642100558448847}


@st.composite
def instances(draw, max_sites=12):
    """Random small rectangle, lattice, parameters and boundary."""
    kind = draw(st.sampled_from([SQ, TRI]))
    w = draw(st.integers(1, 4))
    h_ = draw(st.integers(1, max(1, min(4, max_sites // w))))
    x0, y0 = draw(st.integers(-2, 0)), draw(st.integers(-2, 0))
    rect = Rectangle(x0, y0, x0 + w - 1, y0 + h_ - 1)
    beta = draw(st.floats(0.05, 0.6))
    field = draw(st.floats(-0.5, 0.5))
    seed = draw(st.integers(0, 2 ** 16))
    return kind, rect, beta, field, seed


def _random_boundary(window, seed, p_plus=0.5):
    rng = np.random.default_rng(seed)
    return np.where(rng.random(len(window.exterior)) < p_plus, 1, -1).astype(np.int8)


def _oracle_table(window, beta, h, omega):
    outside = {(int(a), int(b)): int(v) for (a, b), v in zip(window.exterior, omega)}
    sites = [(int(a), int(b)) for a, b in window.sites]
    return sites, oracles.gibbs(sites, window.kind.value, beta, h, outside.__getitem__)


def test_hamiltonian_examples():
    for h in (0.0, 0.3, -1.2):
        assert hamiltonian(Box(0), h, {(0, 0): 1}) == pytest.approx(-(h + 4))
        assert hamiltonian(Box(0), h, {(0, 0): -1}) == pytest.approx(h + 4)
    assert hamiltonian(Explicit([(0, 0), (1, 0)]), 0.0, 1) == -7


def test_hamiltonian_incomplete():
    with pytest.raises(ValueError, match="incomplete configuration"):
        hamiltonian(Explicit([(0, 0), (1, 0)]), 0.0, {(0, 0): 1})
    with pytest.raises(ValueError, match="incomplete configuration"):
        SpinConfig(Window.box(1), np.ones(4), None)


@given(instances(max_sites=8), st.data())
def test_hamiltonian_matches_oracle(inst, data):
    kind, rect, _, h, seed = inst
    w = Window(rect, kind)
    omega = _random_boundary(w, seed)
    spins = np.array(data.draw(st.lists(st.sampled_from([-1, 1]), min_size=w.n, max_size=w.n)))
    outside = {(int(a), int(b)): int(v) for (a, b), v in zip(w.exterior, omega)}
    cfg = {(int(a), int(b)): int(v) for (a, b), v in zip(w.sites, spins)}
    ref = oracles.energy(list(cfg), cfg, kind.value, h, outside.__getitem__)
    assert hamiltonian(w, h, spins, omega) == pytest.approx(ref, abs=1e-12)


def test_single_site_closed_form():
    for beta, h in [(0.3, 0.0), (0.7, 0.25), (0.1, -0.4)]:
        t = exact_gibbs(Box(0), ModelParams(SQ, beta, h))
        e = beta * (h + 4)
        assert t.probs[1] == pytest.approx(math.exp(e) / (math.exp(e) + math.exp(-e)), rel=1e-12)
        ev = exact_event_prob(Box(0), ModelParams(SQ, beta, h), None, SpinIs(0, 0, 1))
        assert ev == pytest.approx(t.probs[1], rel=1e-12)


def test_high_temperature_is_uniform():
    t = exact_gibbs(Box(1), ModelParams(TRI, 1e-9, 0.3))
    assert np.allclose(t.probs, 1 / 512, atol=1e-6)


@pytest.mark.parametrize("kind", [SQ, TRI])
@pytest.mark.parametrize("h", [0.0, 0.2, 1.0])
def test_origin_leans_plus(kind, h):
    p = ModelParams(kind, 0.4, h)
    assert exact_event_prob(Box(1), p, None, SpinIs(0, 0, 1)) >= 0.5


def test_always_true():
    assert exact_event_prob(Box(1), ModelParams(), None, Always()) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", [SQ, TRI])
def test_origin_to_rim_frozen(kind):
    p = ModelParams(kind, 0.3, 0.2)
    ev = parse_event("connect(box(0), boundary(0))")
    assert exact_event_prob(Box(1), p, None, ev) == pytest.approx(ORIGIN_TO_RIM[kind], abs=1e-12)


def test_enumeration_cutoff():
    with pytest.raises(ValueError, match="volume too large for enumeration"):
        exact_gibbs(Box(2), ModelParams())
    t = exact_gibbs(Explicit([(x, 0) for x in range(10)]), ModelParams(), cutoff=10)
    assert t.window.n == 10


@settings(max_examples=100)
@given(instances())
def test_table_matches_oracle_and_sums_to_one(inst):
    kind, rect, beta, h, seed = inst
    w = Window(rect, kind)
    omega = _random_boundary(w, seed)
    t = exact_gibbs(w, ModelParams(kind, beta, h), omega)
    assert abs(t.probs.sum() - 1) < 1e-12
    sites, ref = _oracle_table(w, beta, h, omega)
    mine = {}
    for k, p in enumerate(t.probs):
        mine[tuple(1 if (k >> i) & 1 else -1 for i in range(w.n))] = p
    for cfg, p in ref:
        assert mine[tuple(cfg[s] for s in sites)] == pytest.approx(p, abs=1e-13)


@settings(max_examples=50)
@given(instances())
def test_spin_flip_duality(inst):
    kind, rect, beta, h, seed = inst
    w = Window(rect, kind)
    omega = _random_boundary(w, seed)
    a = exact_gibbs(w, ModelParams(kind, beta, h), omega).probs
    b = exact_gibbs(w, ModelParams(kind, beta, -h), -omega).probs
    # complementing every bit maps sigma to -sigma
    assert np.allclose(a, b[::-1], rtol=1e-12, atol=0)


def _increasing_events(rect):
    return [SpinIs(rect.x0, rect.y0, 1), Crossing(rect, True), Crossing(rect, False),
            Crossing(rect, True) | SpinIs(rect.x1, rect.y1, 1)]


@settings(max_examples=50)
@given(instances(), st.floats(0.0, 1.0))
def test_monotone_in_field(inst, dh):
    kind, rect, beta, h, seed = inst
    w = Window(rect, kind)
    omega = _random_boundary(w, seed)
    lo = exact_gibbs(w, ModelParams(kind, beta, h), omega)
    hi = exact_gibbs(w, ModelParams(kind, beta, h + dh), omega)
    for ev in _increasing_events(rect):
        assert lo.prob(ev) <= hi.prob(ev) + 1e-12


@settings(max_examples=50)
@given(instances())
def test_monotone_in_boundary(inst):
    kind, rect, beta, h, seed = inst
    w = Window(rect, kind)
    low = _random_boundary(w, seed)
    high = np.maximum(low, _random_boundary(w, seed + 1))
    p = ModelParams(kind, beta, h)
    a, b = exact_gibbs(w, p, low), exact_gibbs(w, p, high)
    for ev in _increasing_events(rect):
        assert a.prob(ev) <= b.prob(ev) + 1e-12


@pytest.mark.parametrize("kind", [SQ, TRI])
def test_fkg_crossing_and_origin(kind):
    a = Crossing(Rectangle(-1, -1, 1, 1), True)
    b = SpinIs(0, 0, 1)
    r = check_fkg(Box(1), ModelParams(kind, 0.3, 0.0), None, a, b)
    assert r.holds and r.p_ab >= r.p_a_p_b
    sites, ref = _oracle_table(Window.box(1, kind), 0.3, 0.0, np.ones(16 if kind is SQ else 18))
    pab = oracles.prob(ref, lambda c: oracles.crosses(c, -1, -1, 1, 1, kind.value)
                       and c[(0, 0)] > 0)
    assert r.p_ab == pytest.approx(pab, abs=1e-12)


def test_fkg_same_event():
    b = SpinIs(0, 0, 1)
    r = check_fkg(Box(1), ModelParams(SQ, 0.3, 0.1), None, b, b)
    assert r.holds and r.p_ab > r.p_a_p_b


def test_fkg_rejects_declared_non_monotone():
    with pytest.raises(ValueError):
        check_fkg(Box(1), ModelParams(), None, ~SpinIs(0, 0, 1), SpinIs(0, 0, 1))


def test_dlr_examples():
    p = ModelParams(SQ, 0.3, 0.1)
    r = check_dlr(Box(0), Box(1), p, None, SpinIs(0, 0, 1))
    assert r.agree
    same = check_dlr(Box(1), Box(1), p, None, Crossing(Rectangle(-1, -1, 1, 1)))
    assert same.lhs == pytest.approx(same.rhs, abs=1e-14)
    hot = check_dlr(Box(0), Box(1), ModelParams(TRI, 1e-9, 0.0), None, SpinIs(0, 0, 1))
    assert hot.lhs == pytest.approx(0.5, abs=1e-6) and hot.rhs == pytest.approx(0.5, abs=1e-6)


@settings(max_examples=50)
@given(instances(max_sites=9), st.integers(0, 2 ** 16))
def test_dlr_random_nestings(inst, pick):
    kind, rect, beta, h, seed = inst
    outer = Window(rect, kind)
    rng = np.random.default_rng(pick)
    k = int(rng.integers(1, outer.n + 1))
    chosen = rng.choice(outer.n, size=k, replace=False)
    inner = Explicit([tuple(map(int, outer.sites[i])) for i in chosen])
    s0 = tuple(map(int, inner.sites()[0]))
    ev = SpinIs(s0[0], s0[1], 1)
    r = check_dlr(inner, outer, ModelParams(kind, beta, h), _random_boundary(outer, seed), ev)
    assert r.agree


def test_conditional_matches_oracle():
    p = ModelParams(TRI, 0.35, 0.1)
    given_ = SpinIs(1, 1, -1)
    ev = Connect(Box(0), Explicit([(-1, 1)]))
    value = exact_conditional(Box(1), p, None, ev, given_)
    _, ref = _oracle_table(Window.box(1, TRI), 0.35, 0.1, np.ones(18))
    num = oracles.prob(ref, lambda c: c[(1, 1)] < 0
                       and oracles.connected(c, [(0, 0)], [(-1, 1)], "triangular"))
    den = oracles.prob(ref, lambda c: c[(1, 1)] < 0)
    assert value == pytest.approx(num / den, abs=1e-12)


def test_clamped_gibbs_is_conditioning():
    p = ModelParams(SQ, 0.4, 0.05)
    w = Window.box(1)
    pinned = {(1, 0): 1, (-1, 0): -1}
    ev = Connect(Box(0), Explicit([(0, 1)]))
    given_ = SpinIs(1, 0, 1) & SpinIs(-1, 0, -1)
    clamped = ClampedGibbs(w, p, None, pinned).prob(ev)
    assert clamped == pytest.approx(exact_conditional(w, p, None, ev, given_), abs=1e-12)


def test_monotonicity_validator():
    w = Window.box(1)
    assert is_increasing(Crossing(Rectangle(-1, -1, 1, 1)), w)
    assert not is_increasing(~SpinIs(0, 0, 1), w)
    with pytest.raises(ValueError):
        is_increasing(SpinIs(0, 0, 1), Window.box(2))
