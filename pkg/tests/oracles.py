"""Slow, obviously-correct reference computations used to check the library.

Nothing here imports ``isingiic``: sites are plain ``(x, y)`` tuples, the
Gibbs law is summed term by term and connectivity is a breadth-first search.
"""
from __future__ import annotations

import itertools
import math
from collections import deque

OFFSETS = {
    "square": ((1, 0), (0, 1), (-1, 0), (0, -1)),
    "triangular": ((1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1)),
}


def box(n):
    """Sites of the box of radius ``n`` in row-major order (y outer)."""
    return [(x, y) for y in range(-n, n + 1) for x in range(-n, n + 1)]


def ring(n):
    return [s for s in box(n) if max(abs(s[0]), abs(s[1])) == n]


def nbrs(s, kind):
    return [(s[0] + dx, s[1] + dy) for dx, dy in OFFSETS[kind]]


def energy(sites, spins, kind, h, outside=lambda s: 1):
    """Hamiltonian of ``spins`` (a dict on ``sites``) with ``outside`` fixing
    every other site."""
    inside = set(sites)
    e = 0.0
    for s in sites:
        e -= h * spins[s]
        for t in nbrs(s, kind):
            if t in inside:
                if s < t:
                    e -= spins[s] * spins[t]
            else:
                e -= spins[s] * outside(t)
    return e


def gibbs(sites, kind, beta, h, outside=lambda s: 1):
    """List of ``(config dict, probability)`` over every configuration."""
    rows = []
    for vals in itertools.product((-1, 1), repeat=len(sites)):
        cfg = dict(zip(sites, vals))
        rows.append((cfg, -beta * energy(sites, cfg, kind, h, outside)))
    top = max(w for _, w in rows)
    weights = [math.exp(w - top) for _, w in rows]
    z = sum(weights)
    return [(cfg, w / z) for (cfg, _), w in zip(rows, weights)]


def prob(table, event):
    return sum(p for cfg, p in table if event(cfg))


def reach(plus, start, kind):
    """Plus sites joined to ``start`` by plus paths (``start`` filtered to plus)."""
    seen = {s for s in start if s in plus}
    todo = deque(seen)
    while todo:
        s = todo.popleft()
        for t in nbrs(s, kind):
            if t in plus and t not in seen:
                seen.add(t)
                todo.append(t)
    return seen


def connected(cfg, a, b, kind):
    plus = {s for s, v in cfg.items() if v > 0}
    return bool(reach(plus, a, kind) & set(b))


def cluster_size(cfg, origin, kind):
    plus = {s for s, v in cfg.items() if v > 0}
    return len(reach(plus, [origin], kind))


def crosses(cfg, x0, y0, x1, y1, kind, horizontal=True):
    """Plus path inside the rectangle joining its two opposite sides."""
    rect = {(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)}
    plus = {s for s in rect if cfg.get(s, -1) > 0}
    if horizontal:
        a = [s for s in rect if s[0] == x0]
        b = {s for s in rect if s[0] == x1}
    else:
        a = [s for s in rect if s[1] == y0]
        b = {s for s in rect if s[1] == y1}
    return bool(reach(plus, a, kind) & b)


# --------------------------------------------------------------------------
# circuits


def closed_region(cycle, kind):
    """The cycle plus every site it cuts off from infinity."""
    cs = set(cycle)
    xs = [p[0] for p in cs]
    ys = [p[1] for p in cs]
    lo_x, hi_x, lo_y, hi_y = min(xs) - 1, max(xs) + 1, min(ys) - 1, max(ys) + 1
    frame = {(x, y) for x in range(lo_x, hi_x + 1) for y in range(lo_y, hi_y + 1)}
    out = {(lo_x, lo_y)}
    todo = [(lo_x, lo_y)]
    while todo:
        s = todo.pop()
        for t in nbrs(s, kind):
            if t in frame and t not in cs and t not in out:
                out.add(t)
                todo.append(t)
    return frame - out


def _adjacent(a, b, kind):
    return (b[0] - a[0], b[1] - a[1]) in OFFSETS[kind]


def simple_cycles(sites, kind):
    """Every simple cycle (length >= 3) of the induced graph, each once as a
    site tuple starting at its smallest site."""
    sites = sorted(sites)
    pos = {s: i for i, s in enumerate(sites)}
    found = set()
    out = []
    for start in sites:
        stack = [(start, [start])]
        while stack:
            cur, path = stack.pop()
            for t in nbrs(cur, kind):
                if t not in pos or pos[t] < pos[start]:
                    continue
                if t == start and len(path) >= 3:
                    key = frozenset(frozenset(e) for e in zip(path, path[1:] + path[:1]))
                    if key not in found:
                        found.add(key)
                        out.append(tuple(path))
                elif t not in path:
                    stack.append((t, path + [t]))
    return out


def innermost(cfg, hole_radius, outer, kind):
    """Closed region of the innermost plus circuit in S(outer) \\ S(hole_radius)
    around the hole, or ``None``.  Among circuits bounding the same region the
    longest is preferred; the return value is ``(closed region, cycle)``."""
    hole = set(box(hole_radius))
    plus = [s for s, v in cfg.items()
            if v > 0 and s not in hole and max(abs(s[0]), abs(s[1])) <= outer]
    best = None
    for cyc in simple_cycles(plus, kind):
        region = closed_region(cyc, kind)
        if not hole <= region:
            continue
        key = (len(region), -len(cyc))
        if best is None or key < best[0]:
            best = (key, region, cyc)
    return None if best is None else (best[1], best[2])
