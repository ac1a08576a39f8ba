"""(+)-circuits in annuli: existence, the innermost circuit, and a brute-force
oracle for the innermost circuit at tiny scales.

A circuit is *innermost* when the closed region it bounds (the circuit plus
every site it separates from infinity) has the fewest sites among all
(+)-circuits of the annulus surrounding the hole.  Several circuits can bound
the same closed region (a plus 2x2 block on the rim can be cut either way);
among those the innermost one has the fewest strictly enclosed sites.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import CircuitExists, hole_region
from .lattice import (Annulus, Box, Circuit, Explicit, LatticeKind, Region, enclosed_sites,
                      surrounds)
from .model import SpinConfig


@dataclass(frozen=True)
class CircuitQuery:
    """Circuits in ``S(outer) \\ hole`` surrounding the hole.

    ``inner`` is a radius (hole ``S(inner)``) or a finite region that
    contains the origin and lies inside ``S(outer - 1)``.
    """
    inner: object
    outer: int

    def __post_init__(self):
        if isinstance(self.inner, Region):
            pts = {(int(a), int(b)) for a, b in self.inner.sites()}
            if (0, 0) not in pts or max(max(abs(a), abs(b)) for a, b in pts) >= self.outer:
                raise ValueError("hole must contain the origin and lie inside S(outer - 1)")
            object.__setattr__(self, "_hole_sites", frozenset(pts))
        elif not 0 <= self.inner < self.outer:
            raise ValueError("need 0 <= inner < outer")

    @property
    def hole(self) -> Region:
        return hole_region(self.inner)

    @property
    def annulus(self) -> Region:
        if isinstance(self.inner, Region):
            return Explicit(s for s in map(tuple, Box(self.outer).sites())
                            if s not in self._hole_sites)
        return Annulus(self.inner, self.outer)

    @classmethod
    def from_schedule(cls, schedule, i: int) -> "CircuitQuery":
        a = schedule.annulus(i)
        return cls(a.inner, a.outer)

    def in_hole(self, s) -> bool:
        if isinstance(self.inner, Region):
            return (int(s[0]), int(s[1])) in self._hole_sites
        return max(abs(s[0]), abs(s[1])) <= self.inner

    def contains(self, s) -> bool:
        return max(abs(s[0]), abs(s[1])) <= self.outer and not self.in_hole(s)


def _check_window(c: SpinConfig, q: CircuitQuery):
    w = c.window
    for s in ((q.outer, q.outer), (-q.outer, -q.outer), (q.outer, -q.outer), (-q.outer, q.outer)):
        if s not in w.index:
            raise ValueError("annulus exceeds window")


def exists_plus_circuit(c: SpinConfig, q: CircuitQuery) -> bool:
    return CircuitExists(q.inner, q.outer)(c)


def circuit_event(q: CircuitQuery) -> CircuitExists:
    return CircuitExists(q.inner, q.outer)


def blocking_region(c: SpinConfig, q: CircuitQuery) -> tuple[set, bool]:
    """Hole plus all minus annulus sites joined to it by blocking paths.

    Returns ``(sites, escapes)``; ``escapes`` is true when the blocking
    cluster reaches the outside of the annulus (no circuit exists).
    """
    w = c.window
    boffs = w.kind.blocking_offsets
    hole = [tuple(map(int, s)) for s in q.hole.sites()]
    seen = set(hole)
    stack = list(hole)
    escapes = False
    while stack:
        x, y = stack.pop()
        for dx, dy in boffs:
            p = (x + dx, y + dy)
            if p in seen:
                continue
            if not q.contains(p):
                if not q.in_hole(p):
                    escapes = True
                continue
            if c[p] < 0:
                seen.add(p)
                stack.append(p)
    return seen, escapes


def _trace(region: set, kind: LatticeKind) -> list:
    """Closed walk around the outside of ``region`` keeping it on the left.

    At each step the walker turns as sharply left as the lattice allows
    (wall following), so it visits exactly the outer sites adjacent to the
    region in the blocking sense.
    """
    offs = kind.offsets
    deg = len(offs)
    half = deg // 2
    r = min(region, key=lambda s: (s[1], s[0]))
    p = (r[0], r[1] - 1)
    sd = offs.index((0, 1))
    walk = []
    first = None
    for _ in range(16 * (len(region) + 16) * deg):
        for k in range(deg):
            d = (sd - k) % deg
            nxt = (p[0] + offs[d][0], p[1] + offs[d][1])
            if nxt not in region:
                break
        else:
            raise RuntimeError("walker is enclosed")
        p = nxt
        sd = (d + half - 1) % deg
        state = (p, d)
        if first is None:
            first = state
        elif state == first:
            return walk
        walk.append(p)
    raise RuntimeError("contour tracing did not close")


def _winding(walk, point=(0, 0)) -> int:
    if len(walk) < 3:
        return 0
    return Circuit(walk, check=False).winding_number(point)


def _simplify(walk: list) -> list:
    """Cut closed sub-walks at repeated sites, keeping the piece that winds
    around the origin."""
    w = list(walk)
    while True:
        pos = {}
        cut = None
        for k, s in enumerate(w):
            if s in pos:
                cut = (pos[s], k)
                break
            pos[s] = k
        if cut is None:
            return w
        i, j = cut
        loop = w[i:j]
        rest = w[:i] + w[j:]
        w = loop if _winding(loop) != 0 else rest


def _verify(circ_sites, c: SpinConfig, q: CircuitQuery) -> Circuit | None:
    try:
        circ = Circuit(circ_sites, c.window.kind)
    except ValueError:
        return None
    for s in circ.sites:
        if not q.contains(s) or c[s] < 0:
            return None
    if not surrounds(circ, q.hole):
        return None
    return circ


def innermost_plus_circuit(c: SpinConfig, q: CircuitQuery) -> Circuit | None:
    _check_window(c, q)
    region, escapes = blocking_region(c, q)
    if escapes:
        return None
    walk = _trace(region, c.window.kind)
    circ = _verify(_simplify(walk), c, q)
    if circ is None:
        # tracing edge case: exhaustive search restricted to the traced rim
        circ = brute_force_innermost(c, q, restrict=set(walk))
    return circ


# --------------------------------------------------------------------------
# Face-dual construction


def _faces(kind: LatticeKind, x: int, y: int):
    """Faces of the unit cell with lower-left corner ``(x, y)`` as corner triples
    or quadruples in counter-clockwise order."""
    a, b, c, d = (x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)
    if kind is LatticeKind.SQUARE:
        return [(a, b, c, d)]
    return [(a, b, c), (a, c, d)]


def face_dual_circuit(c: SpinConfig, q: CircuitQuery) -> Circuit | None:
    """Innermost circuit from the planar dual.

    Faces are merged across every lattice edge that is not a (+)-edge of the
    annulus; the merged group of the face at the origin, with its holes
    filled, is contained in the polygon of every surrounding (+)-circuit, and
    its outer boundary is itself such a circuit.  No circuit exists when the
    group reaches the unbounded face.
    """
    kind = c.window.kind
    m = q.outer + 1
    edge_faces: dict = {}
    faces = []
    for x in range(-m, m):
        for y in range(-m, m):
            for f in _faces(kind, x, y):
                fi = len(faces)
                faces.append(f)
                for u, v in zip(f, f[1:] + f[:1]):
                    edge_faces.setdefault(frozenset((u, v)), []).append(fi)
    plus = {}

    def ok(s):
        if s not in plus:
            plus[s] = q.contains(s) and c[s] > 0
        return plus[s]

    OUT = -1
    adj = [[] for _ in faces]
    for e, fs in edge_faces.items():
        u, v = tuple(e)
        allowed = ok(u) and ok(v)
        if len(fs) == 2:
            adj[fs[0]].append((fs[1], allowed, e))
            adj[fs[1]].append((fs[0], allowed, e))
        else:
            adj[fs[0]].append((OUT, allowed, e))
    start = next(i for i, f in enumerate(faces) if f[0] == (0, 0))
    group = {start}
    stack = [start]
    while stack:
        f = stack.pop()
        for g, allowed, _ in adj[f]:
            if allowed:
                continue
            if g == OUT:
                return None
            if g not in group:
                group.add(g)
                stack.append(g)
    # fill holes: faces not reachable from the unbounded face avoiding the group
    outside = set()
    stack = [i for i, f in enumerate(faces)
             if any(g == OUT for g, _, _ in adj[i]) and i not in group]
    outside.update(stack)
    while stack:
        f = stack.pop()
        for g, _, _ in adj[f]:
            if g != OUT and g not in group and g not in outside:
                outside.add(g)
                stack.append(g)
    boundary = {}
    for f in range(len(faces)):
        if f in outside:
            continue
        for g, allowed, e in adj[f]:
            if g == OUT or g in outside:
                u, v = tuple(e)
                boundary.setdefault(u, []).append(v)
                boundary.setdefault(v, []).append(u)
    if any(len(v) != 2 for v in boundary.values()):
        raise RuntimeError("dual boundary is not a simple cycle")
    first = min(boundary)
    cyc = [first]
    prev, cur = None, first
    while True:
        a, b = boundary[cur]
        nxt = a if a != prev else b
        if nxt == first:
            break
        cyc.append(nxt)
        prev, cur = cur, nxt
    if len(cyc) != len(boundary):
        raise RuntimeError("dual boundary is not a single cycle")
    return Circuit(cyc, kind)


# --------------------------------------------------------------------------
# Brute-force oracle


def enclosed_count(circ: Circuit) -> int:
    """Sites in the closed region bounded by ``circ`` (Pick's theorem; every
    lattice edge is primitive, so boundary points are the circuit sites)."""
    pts = circ.sites
    a2 = 0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        a2 += x0 * y1 - x1 * y0
    area2 = abs(a2)
    L = len(pts)
    # interior = A - L/2 + 1 ; closed = interior + L
    return (area2 - L + 2) // 2 + L


class OracleBudgetExceeded(RuntimeError):
    pass


def _cut_step(a, b) -> int:
    """Sheet change of the step ``a -> b`` across the cut ``{(t, -1/2): t > 0}``."""
    if a[1] == -1 and b[1] == 0 and (a[0] + b[0]) > 0:
        return 1
    if a[1] == 0 and b[1] == -1 and (a[0] + b[0]) > 0:
        return -1
    return 0


_SHEETS = 4


def _cover_distances(allowed: set, root, offs) -> dict:
    """``dist[(v, k)]``: shortest path length from ``v`` on sheet ``k`` to
    ``root`` on sheet 1 in the covering graph (sheets clipped to ±_SHEETS)."""
    target = (root, 1)
    dist = {target: 0}
    frontier = [target]
    while frontier:
        nxt = []
        for (b, kb) in frontier:
            for dx, dy in offs:
                a = (b[0] - dx, b[1] - dy)
                if a not in allowed:
                    continue
                ka = kb - _cut_step(a, b)
                if abs(ka) > _SHEETS or (a, ka) in dist:
                    continue
                dist[(a, ka)] = dist[(b, kb)] + 1
                nxt.append((a, ka))
        frontier = nxt
    return dist


def plus_circuit_exists_cover(c: SpinConfig, q: CircuitQuery) -> bool:
    """Existence of a surrounding (+)-circuit without duality: some plus
    component of the annulus lifts to a walk that winds once around the hole."""
    offs = c.window.kind.offsets
    allowed = _plus_sites(c, q, None)
    seen = set()
    for s in allowed:
        if (s, 0) in seen:
            continue
        comp = {(s, 0)}
        stack = [(s, 0)]
        while stack:
            a, k = stack.pop()
            for dx, dy in offs:
                b = (a[0] + dx, a[1] + dy)
                if b not in allowed:
                    continue
                kb = k + _cut_step(a, b)
                if (b, kb) in comp:
                    continue
                if (b, kb - 1) in comp or (b, kb + 1) in comp:
                    return True
                comp.add((b, kb))
                stack.append((b, kb))
        seen |= comp
    return False


def _plus_sites(c, q, restrict):
    out = set()
    for s in q.annulus.sites():
        s = (int(s[0]), int(s[1]))
        if c[s] > 0 and (restrict is None or s in restrict):
            out.add(s)
    return out


def _left_sector(offs, d_in: int, d_out: int):
    """Offsets strictly between the outgoing direction and the reversed
    incoming direction, turning counter-clockwise: the left side of a
    path through a vertex."""
    deg = len(offs)
    back = (d_in + deg // 2) % deg
    out = []
    d = (d_out + 1) % deg
    while d != back:
        out.append(offs[d])
        d = (d + 1) % deg
    return out


def enumerate_surrounding_circuits(c: SpinConfig, q: CircuitQuery, restrict=None,
                                   max_enclosed: int | None = None,
                                   budget: int = 20_000_000, required=None):
    """All (+)-circuits in the annulus surrounding the hole, each once.

    Every such circuit meets the half-line ``{(x, 0): x > 0}``; cycles are
    rooted at their smallest-x site there and traversed counter-clockwise
    (closing on sheet 1 of the covering graph cut along ``y = -1/2, x > 0``).

    With ``max_enclosed`` only circuits whose closed region has at most that
    many sites are returned.  Partial paths are pruned with two lower bounds
    on the closed region: hole + path + the sites still needed to close the
    loop, and hole + path + the neighbours on the left of the path (the
    interior side of a counter-clockwise circuit).  ``required`` is a set of
    sites known to lie in the closed region of every surrounding circuit;
    it sharpens the second bound.
    """
    kind = c.window.kind
    offs = kind.offsets
    deg = len(offs)
    hole = {(int(a), int(b)) for a, b in q.hole.sites()}
    hole_size = len(hole)
    base = set(hole) if required is None else set(required) | hole
    allowed = _plus_sites(c, q, restrict)
    roots = sorted((s for s in allowed if s[1] == 0 and s[0] > 0))
    limit = max_enclosed if max_enclosed is not None else hole_size + len(allowed)
    found = {}
    steps = 0
    for root in roots:
        usable = {s for s in allowed if not (s[1] == 0 and 0 < s[0] < root[0])}
        dist = _cover_distances(usable, root, offs)
        path = [root]
        dirs = [-1]
        sheets = [0]
        on_path = {root}
        # multiset of left-side sites outside hole and path, one entry per vertex
        left_count: dict = {}
        left_added = [[]]
        iters = [iter(range(deg))]
        while iters:
            steps += 1
            if steps > budget:
                raise OracleBudgetExceeded("circuit enumeration budget exceeded")
            try:
                d = next(iters[-1])
            except StopIteration:
                iters.pop()
                sheets.pop()
                dirs.pop()
                on_path.discard(path.pop())
                for s in left_added.pop():
                    left_count[s] -= 1
                    if not left_count[s]:
                        del left_count[s]
                continue
            cur = path[-1]
            nxt = (cur[0] + offs[d][0], cur[1] + offs[d][1])
            k = sheets[-1] + _cut_step(cur, nxt)
            if nxt == root:
                if k == 1 and len(path) >= 3:
                    circ = Circuit(path, kind, check=False)
                    if enclosed_count(circ) <= limit:
                        found.setdefault(circ.canonical(), circ)
                continue
            if nxt not in usable or nxt in on_path:
                continue
            if abs(k) <= _SHEETS:
                dd = dist.get((nxt, k))
                if dd is None or hole_size + len(path) + dd > limit:
                    continue
            # left side of the current vertex, now that its exit is known
            added = []
            ok = True
            if dirs[-1] >= 0:
                for dx, dy in _left_sector(offs, dirs[-1], d):
                    s = (cur[0] + dx, cur[1] + dy)
                    if not q.contains(s) and s not in hole:
                        ok = False
                        break
                    if s not in hole:
                        added.append(s)
            if not ok:
                continue
            for s in added:
                left_count[s] = left_count.get(s, 0) + 1
            extra = sum(1 for s in left_count if s not in on_path and s != nxt and s not in base)
            extra += sum(1 for s in on_path if s not in base) + (nxt not in base)
            if len(base) + extra > limit:
                for s in added:
                    left_count[s] -= 1
                    if not left_count[s]:
                        del left_count[s]
                continue
            path.append(nxt)
            dirs.append(d)
            sheets.append(k)
            on_path.add(nxt)
            left_added.append(added)
            iters.append(iter(range(deg)))
    return list(found.values())


def brute_force_innermost(c: SpinConfig, q: CircuitQuery, restrict=None,
                          max_radius: int = 5, upper_bound: int | None = None,
                          budget: int = 20_000_000, dual_bound: bool = True) -> Circuit | None:
    """Exhaustive depth-first search for the innermost circuit.

    Existence is decided by the covering-graph search (no duality).  The
    enumeration is branch-and-bound: with ``dual_bound`` the closed region
    of the face-dual circuit, which every surrounding circuit's closed region
    contains, is both a lower bound for partial paths and the cap on the
    region size, so every circuit that could be innermost is still visited.
    ``upper_bound`` caps the closed-region size without that lower bound.
    """
    if restrict is None and q.outer > max_radius:
        raise ValueError("scale too large for brute-force circuit enumeration")
    if restrict is None and not plus_circuit_exists_cover(c, q):
        return None
    required = None
    cap = upper_bound
    if dual_bound and restrict is None:
        g = face_dual_circuit(c, q)
        if g is None:
            raise RuntimeError("covering search and dual disagree on existence")
        required = enclosed_sites(g)
        cap = len(required) if cap is None else min(cap, len(required))
    circs = enumerate_surrounding_circuits(c, q, restrict, cap, budget, required)
    if not circs and cap is not None:
        circs = enumerate_surrounding_circuits(c, q, restrict, None, budget)
    if not circs:
        return None
    # smallest closed region; among circuits bounding the same region, the
    # one with the fewest strictly enclosed sites (the longest)
    keys = [(enclosed_count(x), -len(x)) for x in circs]
    best = min(keys)
    winners = [x for x, s in zip(circs, keys) if s == best]
    if len(winners) != 1:
        raise RuntimeError("innermost circuit is not unique")
    return Circuit(winners[0].sites, c.window.kind)


# --------------------------------------------------------------------------
# Blocks of configurations


def _annulus_index(window, q: CircuitQuery) -> np.ndarray:
    return np.nonzero(window.mask(q.annulus))[0]


def innermost_batch(spins: np.ndarray, window, q: CircuitQuery, boundary=None) -> list:
    """Innermost circuit (or ``None``) for each row of ``spins``.

    The answer depends only on the annulus spins, so each distinct annulus
    pattern is traced once.
    """
    spins = np.atleast_2d(np.asarray(spins, dtype=np.int8))
    idx = _annulus_index(window, q)
    keys = np.ascontiguousarray(spins[:, idx])
    cache: dict = {}
    out = []
    for row, k in zip(spins, keys):
        kb = k.tobytes()
        if kb not in cache:
            cache[kb] = innermost_plus_circuit(SpinConfig(window, row, boundary), q)
        out.append(cache[kb])
    return out


def innermost_is(spins: np.ndarray, window, q: CircuitQuery, target: Circuit) -> np.ndarray:
    """Rows whose innermost circuit is ``target`` (``F(target)``)."""
    spins = np.atleast_2d(np.asarray(spins, dtype=np.int8))
    for s in target.sites:
        if not q.contains(s):
            raise ValueError("circuit not in annulus")
    if not surrounds(target, q.hole):
        raise ValueError("circuit does not surround the hole")
    tidx = np.array([window.idx(s) for s in target.sites], dtype=np.int64)
    out = np.zeros(len(spins), dtype=bool)
    cand = np.nonzero((spins[:, tidx] > 0).all(axis=1))[0]
    if len(cand):
        found = innermost_batch(spins[cand], window, q)
        out[cand] = [c is not None and c == target for c in found]
    return out
