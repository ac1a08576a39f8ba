import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from isingiic.events import (Always, And, CircuitExists, Connect, Crossing, EventError,
                             FunctionEvent, Not, Or, SpinIs, as_event, one_arm, parse_event)
from isingiic.lattice import (Annulus, Box, Boundary, ComplementBox, Explicit, LatticeKind,
                              Rectangle)
from isingiic.model import SpinConfig, Window

SQ, TRI = LatticeKind.SQUARE, LatticeKind.TRIANGULAR

TEXTS = [
    "true",
    "false",
    "spin(0,0)=+1",
    "spin(-2,1)=-1",
    "and(spin(0,0)=+1,spin(1,0)=-1)",
    "or(spin(0,0)=+1,not(spin(0,1)=+1),hcross(-1,-1,1,1))",
    "connect(box(0),boundary(2))",
    "connect(sites((1,0),(0,1)),rect(-2,-2,2,-2))",
    "connect(box(1),annulus(1,3))",
    "vcross(-2,-1,2,1)",
    "circuit(1,3)",
]


@pytest.mark.parametrize("text", TEXTS)
def test_text_round_trip(text):
    e = parse_event(text)
    assert parse_event(e.to_text()) == e


def test_whitespace_insensitive():
    assert parse_event(" and ( spin( 0 , 0 ) = +1 ,\n connect(box( 0 ),boundary(1)) ) ") == \
        And((SpinIs(0, 0, 1), Connect(Box(0), Boundary(1))))


def test_parse_builds_expected_objects():
    assert parse_event("hcross(0,0,3,1)") == Crossing(Rectangle(0, 0, 3, 1), True)
    assert parse_event("circuit(2,5)") == CircuitExists(2, 5)
    assert parse_event("connect(complement_box(3),box(0))") == Connect(ComplementBox(3), Box(0))
    assert parse_event("connect(annulus(1,2),sites((0,0)))") == \
        Connect(Annulus(1, 2), Explicit([(0, 0)]))
    assert as_event("true") == Always(True)
    with pytest.raises(TypeError):
        as_event(3)


@pytest.mark.parametrize("text, where, expected", [
    ("spin(0,0)=2", 10, "+1 or -1"),
    ("spin(0 0)=+1", 7, "','"),
    ("connect(box(0))", 14, "','"),
    ("wobble(1)", 0, "event name"),
    ("connect(disc(1),box(0))", 8, "region"),
    ("spin(0,0)=+1 true", 13, "end of input"),
])
def test_parse_errors_report_position(text, where, expected):
    with pytest.raises(EventError) as err:
        parse_event(text)
    msg = str(err.value)
    assert f"position {where}" in msg and expected in msg


def test_monotone_flags():
    assert SpinIs(0, 0, 1).monotone and not SpinIs(0, 0, -1).monotone
    assert (Connect(Box(0), Boundary(1)) & Crossing(Rectangle(0, 0, 1, 1))).monotone
    assert not Not(SpinIs(0, 0, 1)).monotone
    assert not Or((SpinIs(0, 0, 1), SpinIs(1, 0, -1))).monotone


def test_radius():
    assert parse_event("and(spin(3,-1)=+1,connect(box(0),boundary(4)))").radius() == 5
    assert one_arm(1, 6) == Connect(Box(1), Boundary(6))


def test_function_event_has_no_text():
    f = FunctionEvent(lambda row, w: True, 0, "anything")
    assert f(SpinConfig.constant(Window.box(1), 1))
    with pytest.raises(EventError):
        f.to_text()


@settings(max_examples=60)
@given(st.sampled_from([SQ, TRI]), st.integers(0, 2 ** 32 - 1))
def test_evaluation_matches_oracle(kind, seed):
    w = Window.box(3, kind)
    rng = np.random.default_rng(seed)
    block = np.where(rng.random((8, w.n)) < 0.6, 1, -1).astype(np.int8)
    events = {
        "connect(box(0),boundary(1))":
            lambda c: oracles.connected(c, [(0, 0)], oracles.ring(2), kind.value),
        "hcross(-3,-1,3,1)": lambda c: oracles.crosses(c, -3, -1, 3, 1, kind.value),
        "vcross(-1,-3,2,3)": lambda c: oracles.crosses(c, -1, -3, 2, 3, kind.value, False),
        "and(spin(1,1)=-1,not(spin(0,0)=-1))": lambda c: c[(1, 1)] < 0 and c[(0, 0)] > 0,
        "circuit(0,2)": lambda c: oracles.innermost(c, 0, 2, kind.value) is not None,
    }
    for text, ref in events.items():
        got = parse_event(text).evaluate(block, w)
        for row, g in zip(block, got):
            cfg = {(int(a), int(b)): int(v) for (a, b), v in zip(w.sites, row)}
            assert bool(g) == ref(cfg), text


def test_event_outside_window():
    with pytest.raises(ValueError):
        parse_event("spin(5,0)=+1").evaluate(np.ones((1, 9), dtype=np.int8), Window.box(1))
