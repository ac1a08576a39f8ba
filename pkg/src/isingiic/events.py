"""Cylinder events and their text grammar.

Grammar (whitespace-insensitive)::

    event   := spin(x,y)=+1 | spin(x,y)=-1 | true | false
             | and(event, ...) | or(event, ...) | not(event)
             | connect(region, region)
             | hcross(x0,y0,x1,y1) | vcross(x0,y0,x1,y1)
             | circuit(inner, outer)
    region  := box(n) | boundary(n) | annulus(a,b) | rect(x0,y0,x1,y1)
             | sites((x,y), ...) | complement_box(n)

Events evaluate on blocks of configurations: ``spins`` of shape ``(m, n)``
(or a single ``(n,)`` row) over a :class:`~isingiic.model.Window`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .lattice import (Annulus, Box, Boundary, ComplementBox, Explicit, Rectangle,
                      Region)


class EventError(ValueError):
    pass


class Event:
    monotone = False

    def evaluate(self, spins, window) -> np.ndarray:
        spins = np.asarray(spins, dtype=np.int8)
        single = spins.ndim == 1
        out = self._eval(np.atleast_2d(spins), window)
        return bool(out[0]) if single else out

    def __call__(self, config) -> bool:
        return bool(self._eval(config.spins[None, :], config.window)[0])

    def _eval(self, spins, window) -> np.ndarray:
        raise NotImplementedError

    def radius(self) -> int:
        """ℓ∞ radius of the box the event depends on."""
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))

    def __invert__(self):
        return Not(self)


def _region_radius(r: Region) -> int:
    if isinstance(r, ComplementBox):
        return r.n + 1
    x0, y0, x1, y1 = r.bbox()
    return max(abs(x0), abs(y0), abs(x1), abs(y1))


def _region_text(r: Region) -> str:
    if isinstance(r, Box):
        return f"box({r.n})"
    if isinstance(r, Boundary):
        return f"boundary({r.n})"
    if isinstance(r, Annulus):
        return f"annulus({r.inner},{r.outer})"
    if isinstance(r, Rectangle):
        return f"rect({r.x0},{r.y0},{r.x1},{r.y1})"
    if isinstance(r, ComplementBox):
        return f"complement_box({r.n})"
    pts = ",".join(f"({a},{b})" for a, b in r.sites())
    return f"sites({pts})"


@lru_cache(maxsize=4096)
def _mask(region: Region, window) -> np.ndarray:
    return window.mask(region)


def _window_mask(region, window, require_inside=True):
    m = _mask(region, window)
    if require_inside and region.finite:
        if m.sum() != len(region.sites()):
            raise EventError("region exceeds window")
    if not m.any():
        raise EventError("region exceeds window")
    return m


@dataclass(frozen=True)
class Always(Event):
    value: bool = True
    monotone = True

    def _eval(self, spins, window):
        return np.full(spins.shape[0], self.value, dtype=bool)

    def radius(self):
        return 0

    def to_text(self):
        return "true" if self.value else "false"


@dataclass(frozen=True)
class SpinIs(Event):
    x: int
    y: int
    value: int = 1

    @property
    def monotone(self):
        return self.value > 0

    def _eval(self, spins, window):
        return spins[:, window.idx((self.x, self.y))] == self.value

    def radius(self):
        return max(abs(self.x), abs(self.y))

    def to_text(self):
        return f"spin({self.x},{self.y})={'+1' if self.value > 0 else '-1'}"


@dataclass(frozen=True)
class And(Event):
    parts: tuple

    @property
    def monotone(self):
        return all(p.monotone for p in self.parts)

    def _eval(self, spins, window):
        out = np.ones(spins.shape[0], dtype=bool)
        for p in self.parts:
            out &= p._eval(spins, window)
        return out

    def radius(self):
        return max(p.radius() for p in self.parts)

    def to_text(self):
        return "and(" + ",".join(p.to_text() for p in self.parts) + ")"


@dataclass(frozen=True)
class Or(Event):
    parts: tuple

    @property
    def monotone(self):
        return all(p.monotone for p in self.parts)

    def _eval(self, spins, window):
        out = np.zeros(spins.shape[0], dtype=bool)
        for p in self.parts:
            out |= p._eval(spins, window)
        return out

    def radius(self):
        return max(p.radius() for p in self.parts)

    def to_text(self):
        return "or(" + ",".join(p.to_text() for p in self.parts) + ")"


@dataclass(frozen=True)
class Not(Event):
    part: Event
    monotone = False

    def _eval(self, spins, window):
        return ~self.part._eval(spins, window)

    def radius(self):
        return self.part.radius()

    def to_text(self):
        return f"not({self.part.to_text()})"


@dataclass(frozen=True)
class Connect(Event):
    """``A ↝ B``: some plus site of A and some plus site of B share a (+)-cluster."""
    a: Region
    b: Region
    monotone = True

    def _eval(self, spins, window):
        ma = _window_mask(self.a, window, require_inside=False)
        mb = _window_mask(self.b, window, require_inside=False)
        allowed = np.ones(window.n, dtype=bool)
        return _kernels.connects_batch(spins, window.nbr, allowed, ma, mb)

    def radius(self):
        return max(_region_radius(self.a), _region_radius(self.b))

    def to_text(self):
        return f"connect({_region_text(self.a)},{_region_text(self.b)})"


@dataclass(frozen=True)
class Crossing(Event):
    """(+)-crossing of a rectangle using only sites inside it."""
    rect: Rectangle
    horizontal: bool = True
    monotone = True

    def _eval(self, spins, window):
        r = self.rect
        allowed = _window_mask(r, window)
        if self.horizontal:
            a = _mask(Rectangle(r.x0, r.y0, r.x0, r.y1), window)
            b = _mask(Rectangle(r.x1, r.y0, r.x1, r.y1), window)
        else:
            a = _mask(Rectangle(r.x0, r.y0, r.x1, r.y0), window)
            b = _mask(Rectangle(r.x0, r.y1, r.x1, r.y1), window)
        return _kernels.connects_batch(spins, window.nbr, allowed, a, b)

    def radius(self):
        return _region_radius(self.rect)

    def to_text(self):
        r = self.rect
        name = "hcross" if self.horizontal else "vcross"
        return f"{name}({r.x0},{r.y0},{r.x1},{r.y1})"


def hole_region(inner) -> Region:
    """The surrounded set: ``S(inner)`` for an integer, else the region itself."""
    return inner if isinstance(inner, Region) else Box(int(inner))


@lru_cache(maxsize=1024)
def _circuit_masks(inner, outer: int, window):
    hole = _window_mask(hole_region(inner), window)
    ann = _window_mask(Box(outer), window) & ~hole
    inside = hole | ann
    b = window.bnbr
    off_window = (b < 0).any(axis=1)
    nb_inside = np.where(b >= 0, inside[np.maximum(b, 0)], False)
    leaks = ((b >= 0) & ~nb_inside).any(axis=1)
    # a blocking neighbour outside the window counts as exterior unless it is
    # inside S(outer), which cannot happen once the annulus fits the window
    exits = ann & (leaks | off_window)
    return hole, ann, exits


@dataclass(frozen=True)
class CircuitExists(Event):
    """A (+)-circuit in ``S(outer) \\ S(inner)`` surrounding ``S(inner)``.

    ``inner`` may also be a region containing the origin (the hole).
    """
    inner: object
    outer: int
    monotone = True

    def _eval(self, spins, window):
        hole, ann, exits = _circuit_masks(self.inner, self.outer, window)
        return _kernels.circuit_exists_batch(spins, window.bnbr, hole, ann, exits)

    def radius(self):
        return self.outer

    def to_text(self):
        if isinstance(self.inner, Region):
            raise EventError("circuit events with a custom hole have no text form")
        return f"circuit({self.inner},{self.outer})"


@dataclass(frozen=True)
class FunctionEvent(Event):
    """Wraps a per-configuration predicate ``f(spins_row, window) -> bool``."""
    f: object
    r: int
    name: str = "function"
    monotone: bool = False

    def _eval(self, spins, window):
        return np.array([bool(self.f(row, window)) for row in spins], dtype=bool)

    def radius(self):
        return self.r

    def to_text(self):
        raise EventError(f"event {self.name!r} has no text form")


def one_arm(R: int, n: int) -> Connect:
    """``S(R) ↝ S^c(n)``; inside a window the target is ``∂S(n)``."""
    return Connect(Box(R), Boundary(n))


def hcross(x0, y0, x1, y1) -> Crossing:
    return Crossing(Rectangle(x0, y0, x1, y1), True)


def vcross(x0, y0, x1, y1) -> Crossing:
    return Crossing(Rectangle(x0, y0, x1, y1), False)


# --------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z_0-9]*)|([+-]?\d+)|(.))")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = []
        for m in _TOKEN.finditer(text):
            if m.group(0).strip() == "":
                continue
            kind = "id" if m.group(1) else "int" if m.group(2) else "sym"
            val = m.group(1) or m.group(2) or m.group(3)
            self.toks.append((kind, val, m.start(m.lastindex)))
        self.i = 0

    def error(self, expected):
        pos = self.toks[self.i][2] if self.i < len(self.toks) else len(self.text)
        got = self.toks[self.i][1] if self.i < len(self.toks) else "end of input"
        raise EventError(f"parse error at position {pos}: expected {expected}, got {got!r}")

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, len(self.text))

    def sym(self, s):
        k, v, _ = self.peek()
        if k != "sym" or v != s:
            self.error(repr(s))
        self.i += 1

    def int_(self):
        k, v, _ = self.peek()
        if k != "int":
            self.error("integer")
        self.i += 1
        return int(v)

    def ints(self, count):
        self.sym("(")
        out = []
        for j in range(count):
            if j:
                self.sym(",")
            out.append(self.int_())
        self.sym(")")
        return out

    def event(self) -> Event:
        k, v, _ = self.peek()
        if k != "id":
            self.error("event name (spin, and, or, not, connect, hcross, vcross, circuit, "
                       "true, false)")
        self.i += 1
        if v in ("true", "false"):
            return Always(v == "true")
        if v == "spin":
            x, y = self.ints(2)
            self.sym("=")
            val = self.int_()
            if val not in (1, -1):
                self.i -= 1
                self.error("+1 or -1")
            return SpinIs(x, y, val)
        if v in ("and", "or"):
            self.sym("(")
            parts = [self.event()]
            while self.peek()[1] == ",":
                self.i += 1
                parts.append(self.event())
            self.sym(")")
            return (And if v == "and" else Or)(tuple(parts))
        if v == "not":
            self.sym("(")
            e = self.event()
            self.sym(")")
            return Not(e)
        if v == "connect":
            self.sym("(")
            a = self.region()
            self.sym(",")
            b = self.region()
            self.sym(")")
            return Connect(a, b)
        if v in ("hcross", "vcross"):
            return Crossing(Rectangle(*self.ints(4)), v == "hcross")
        if v == "circuit":
            a, b = self.ints(2)
            return CircuitExists(a, b)
        self.i -= 1
        self.error("event name (spin, and, or, not, connect, hcross, vcross, circuit, true, false)")

    def region(self) -> Region:
        k, v, _ = self.peek()
        if k != "id":
            self.error("region (box, boundary, annulus, rect, sites, complement_box)")
        self.i += 1
        if v == "box":
            return Box(*self.ints(1))
        if v == "boundary":
            return Boundary(*self.ints(1))
        if v == "annulus":
            return Annulus(*self.ints(2))
        if v == "rect":
            return Rectangle(*self.ints(4))
        if v == "complement_box":
            return ComplementBox(*self.ints(1))
        if v == "sites":
            self.sym("(")
            pts = [tuple(self.ints(2))]
            while self.peek()[1] == ",":
                self.i += 1
                pts.append(tuple(self.ints(2)))
            self.sym(")")
            return Explicit(pts)
        self.i -= 1
        self.error("region (box, boundary, annulus, rect, sites, complement_box)")


def parse_event(text: str) -> Event:
    p = _Parser(text)
    e = p.event()
    if p.i != len(p.toks):
        p.error("end of input")
    return e


def as_event(obj) -> Event:
    if isinstance(obj, Event):
        return obj
    if isinstance(obj, str):
        return parse_event(obj)
    raise TypeError(f"cannot interpret {obj!r} as an event")
