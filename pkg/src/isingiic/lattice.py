"""Square and triangular lattice geometry.

Sites are integer pairs ``(x, y)``.  The triangular lattice is embedded on
the integer grid by adding the two diagonal offsets ``(1, 1)`` and
``(-1, -1)`` to the square neighbourhood.  Neighbour offsets are stored in
counter-clockwise angular order, which the contour tracer in
:mod:`isingiic.circuits` relies on.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class LatticeKind(str, enum.Enum):
    SQUARE = "square"
    TRIANGULAR = "triangular"

    @property
    def offsets(self) -> tuple[tuple[int, int], ...]:
        return _OFFSETS[self]

    @property
    def blocking_offsets(self) -> tuple[tuple[int, int], ...]:
        """Adjacency used by dual (blocking) paths: 8-neighbour on the square
        lattice, the native adjacency on the self-matching triangular one."""
        return _BLOCKING[self]

    @property
    def degree(self) -> int:
        return len(self.offsets)


# counter-clockwise order
_SQUARE = ((1, 0), (0, 1), (-1, 0), (0, -1))
_SQUARE_STAR = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
_TRIANGULAR = ((1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1))

_OFFSETS = {LatticeKind.SQUARE: _SQUARE, LatticeKind.TRIANGULAR: _TRIANGULAR}
_BLOCKING = {LatticeKind.SQUARE: _SQUARE_STAR, LatticeKind.TRIANGULAR: _TRIANGULAR}


def as_kind(kind) -> LatticeKind:
    return kind if isinstance(kind, LatticeKind) else LatticeKind(str(kind).lower())


def norm1(s) -> int:
    return abs(s[0]) + abs(s[1])


def neighbors(s, kind=LatticeKind.SQUARE) -> list[tuple[int, int]]:
    """Adjacent sites of ``s`` in counter-clockwise order starting east."""
    x, y = s
    return [(x + dx, y + dy) for dx, dy in as_kind(kind).offsets]


def is_adjacent(a, b, kind=LatticeKind.SQUARE) -> bool:
    return (b[0] - a[0], b[1] - a[1]) in as_kind(kind).offsets


# --------------------------------------------------------------------------
# Regions


class Region:
    """A set of sites given by a membership predicate.

    Finite regions enumerate their sites in row-major order (``y`` outer,
    ``x`` inner), which fixes the scan order of every sampler.
    """

    finite = True

    def contains_xy(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __contains__(self, s) -> bool:
        return bool(self.contains_xy(np.asarray([s[0]]), np.asarray([s[1]]))[0])

    def bbox(self) -> tuple[int, int, int, int]:
        raise NotImplementedError

    def sites(self) -> np.ndarray:
        if not self.finite:
            raise ValueError("infinite region has no site list")
        x0, y0, x1, y1 = self.bbox()
        ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        xs, ys = xs.ravel(), ys.ravel()
        keep = self.contains_xy(xs, ys)
        return np.stack([xs[keep], ys[keep]], axis=1).astype(np.int64)

    def __len__(self) -> int:
        return len(self.sites())

    def site_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.sites()}

    def mask(self, sites: np.ndarray) -> np.ndarray:
        """Membership of each row of an ``(n, 2)`` site array."""
        return self.contains_xy(sites[:, 0], sites[:, 1])


@dataclass(frozen=True)
class Box(Region):
    """``S(n) = [-n, n]^2``."""
    n: int

    def contains_xy(self, x, y):
        return (np.abs(x) <= self.n) & (np.abs(y) <= self.n)

    def bbox(self):
        return (-self.n, -self.n, self.n, self.n)


@dataclass(frozen=True)
class Boundary(Region):
    """``∂S(n) = S(n+1) \\ S(n)``."""
    n: int

    def contains_xy(self, x, y):
        r = np.maximum(np.abs(x), np.abs(y))
        return r == self.n + 1

    def bbox(self):
        m = self.n + 1
        return (-m, -m, m, m)


@dataclass(frozen=True)
class Annulus(Region):
    """``S(outer) \\ S(inner)``."""
    inner: int
    outer: int

    def __post_init__(self):
        if not self.inner < self.outer:
            raise ValueError("annulus needs inner < outer")

    def contains_xy(self, x, y):
        r = np.maximum(np.abs(x), np.abs(y))
        return (r > self.inner) & (r <= self.outer)

    def bbox(self):
        return (-self.outer, -self.outer, self.outer, self.outer)

    @property
    def hole(self) -> Box:
        return Box(self.inner)


@dataclass(frozen=True)
class Rectangle(Region):
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError("degenerate rectangle")

    def contains_xy(self, x, y):
        return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)

    def bbox(self):
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class ComplementBox(Region):
    """``S^c(n)``; infinite, so only usable through membership or restricted
    to a finite window."""
    n: int
    finite = False

    def contains_xy(self, x, y):
        return (np.abs(x) > self.n) | (np.abs(y) > self.n)

    def bbox(self):
        raise ValueError("infinite region has no bounding box")


@dataclass(frozen=True)
class Explicit(Region):
    points: frozenset = field(default_factory=frozenset)

    def __init__(self, points: Iterable):
        object.__setattr__(self, "points", frozenset((int(a), int(b)) for a, b in points))

    def contains_xy(self, x, y):
        return np.array([(int(a), int(b)) in self.points for a, b in zip(x, y)], dtype=bool)

    def bbox(self):
        if not self.points:
            raise ValueError("empty region")
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return (min(xs), min(ys), max(xs), max(ys))

    def sites(self):
        if not self.points:
            return np.zeros((0, 2), dtype=np.int64)
        pts = sorted(self.points, key=lambda p: (p[1], p[0]))
        return np.array(pts, dtype=np.int64)


def as_region(obj) -> Region:
    if isinstance(obj, Region):
        return obj
    if isinstance(obj, Circuit):
        return Explicit(obj.sites)
    return Explicit(obj)


def set_distance(v1, v2) -> int:
    """ℓ¹ distance between two finite regions."""
    a = as_region(v1).sites()
    b = as_region(v2).sites()
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty region")
    best = None
    for chunk in np.array_split(a, max(1, len(a) // 2048)):
        d = np.abs(chunk[:, None, :] - b[None, :, :]).sum(axis=2).min()
        best = d if best is None else min(best, d)
    return int(best)


# --------------------------------------------------------------------------
# Annulus schedule


@dataclass(frozen=True)
class AnnulusSchedule:
    """Scales ``k(1) < k(2) < ...``; annulus ``A(i) = S(3^k(i+1)) \\ S(2·3^k(i))``."""
    scales: tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self):
        s = tuple(int(k) for k in self.scales)
        if len(s) < 2 or any(b <= a for a, b in zip(s, s[1:])) or s[0] < 1:
            raise ValueError("scales must be strictly increasing integers >= 1")
        object.__setattr__(self, "scales", s)

    def k(self, i: int) -> int:
        return self.scales[i - 1]

    def inner_radius(self, i: int) -> int:
        return 2 * 3 ** self.k(i)

    def outer_radius(self, i: int) -> int:
        return 3 ** self.k(i + 1)

    def annulus(self, i: int) -> Annulus:
        if not 1 <= i < len(self.scales):
            raise IndexError(f"annulus index {i} outside schedule")
        return Annulus(self.inner_radius(i), self.outer_radius(i))


# --------------------------------------------------------------------------
# Circuits


@dataclass(frozen=True)
class Circuit:
    """Closed self-avoiding lattice path, stored without the repeated endpoint."""
    sites: tuple[tuple[int, int], ...]
    kind: LatticeKind = LatticeKind.SQUARE

    def __init__(self, sites: Sequence, kind=LatticeKind.SQUARE, check: bool = True):
        pts = [(int(a), int(b)) for a, b in sites]
        if len(pts) > 1 and pts[0] == pts[-1]:
            pts = pts[:-1]
        object.__setattr__(self, "sites", tuple(pts))
        object.__setattr__(self, "kind", as_kind(kind))
        if check:
            self.validate()

    def validate(self) -> None:
        pts = self.sites
        if len(pts) < 3:
            raise ValueError("circuit needs at least 3 sites")
        if len(set(pts)) != len(pts):
            raise ValueError("circuit is not self-avoiding")
        for a, b in zip(pts, pts[1:] + pts[:1]):
            if not is_adjacent(a, b, self.kind):
                raise ValueError(f"circuit sites {a} and {b} are not adjacent")

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def canonical(self) -> tuple:
        """Orientation- and rotation-free key (the sorted edge list)."""
        pts = self.sites
        return tuple(sorted(tuple(sorted(e)) for e in zip(pts, pts[1:] + pts[:1])))

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return self.kind == other.kind and self.canonical() == other.canonical()

    def __hash__(self):
        return hash((self.kind, self.canonical()))

    def translate(self, v) -> "Circuit":
        return Circuit([(a + v[0], b + v[1]) for a, b in self.sites], self.kind, check=False)

    def radius(self) -> int:
        return max(max(abs(a), abs(b)) for a, b in self.sites)

    def winding_number(self, point=(0, 0)) -> int:
        px, py = point
        total = 0.0
        pts = self.sites
        for (ax, ay), (bx, by) in zip(pts, pts[1:] + pts[:1]):
            a1 = math.atan2(ay - py, ax - px)
            a2 = math.atan2(by - py, bx - px)
            d = a2 - a1
            while d > math.pi:
                d -= 2 * math.pi
            while d < -math.pi:
                d += 2 * math.pi
            total += d
        return int(round(total / (2 * math.pi)))


def ring(r: int, kind=LatticeKind.SQUARE) -> Circuit:
    """The square ring ``∂S(r-1)`` at ℓ∞-radius ``r``, ordered counter-clockwise."""
    if r < 1:
        raise ValueError("ring radius must be >= 1")
    pts = []
    for x in range(-r, r):
        pts.append((x, -r))
    for y in range(-r, r):
        pts.append((r, y))
    for x in range(r, -r, -1):
        pts.append((x, r))
    for y in range(r, -r, -1):
        pts.append((-r, y))
    return Circuit(pts, kind)


def enclosed_sites(c: Circuit) -> set[tuple[int, int]]:
    """Sites of ``c`` together with every site it separates from infinity."""
    cs = set(c.sites)
    xs = [p[0] for p in cs]
    ys = [p[1] for p in cs]
    x0, x1, y0, y1 = min(xs) - 1, max(xs) + 1, min(ys) - 1, max(ys) + 1
    outside = set()
    stack = [(x0, y0)]
    outside.add((x0, y0))
    offs = c.kind.offsets
    while stack:
        x, y = stack.pop()
        for dx, dy in offs:
            q = (x + dx, y + dy)
            if x0 <= q[0] <= x1 and y0 <= q[1] <= y1 and q not in cs and q not in outside:
                outside.add(q)
                stack.append(q)
    return {(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)} - outside


def surrounds(c: Circuit, d, kind=None) -> bool:
    """True iff ``c`` avoids ``d`` and every lattice path from ``d`` to
    infinity meets ``c``."""
    kind = c.kind if kind is None else as_kind(kind)
    cs = set(c.sites)
    ds = as_region(d).site_set()
    if not ds or cs & ds:
        return False
    xs = [p[0] for p in cs | ds]
    ys = [p[1] for p in cs | ds]
    x0, x1, y0, y1 = min(xs) - 1, max(xs) + 1, min(ys) - 1, max(ys) + 1
    seen = set(ds)
    stack = list(ds)
    while stack:
        x, y = stack.pop()
        for dx, dy in kind.offsets:
            q = (x + dx, y + dy)
            if q in cs or q in seen:
                continue
            if not (x0 <= q[0] <= x1 and y0 <= q[1] <= y1):
                return False
            seen.add(q)
            stack.append(q)
    return True
