"""Independent site percolation: exact connection probabilities and a
crossing-based threshold sweep.

At ``β → 0`` the spins are independent with ``P(+) = 1/(1+e^{-2βh})`` and the
model reduces to Bernoulli site percolation, which these routines handle
without going through the Gibbs machinery.
"""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np
from scipy import ndimage

from .lattice import LatticeKind, as_kind, as_region


def independent_plus_probability(beta: float, h: float) -> float:
    return 1.0 / (1.0 + math.exp(-2.0 * beta * h))


def _canon(labels, flags):
    remap = {}
    out = []
    for a in labels:
        if a == 0:
            out.append(0)
        else:
            out.append(remap.setdefault(a, len(remap) + 1))
    new_flags = [0] * len(remap)
    for old, new in remap.items():
        new_flags[new - 1] = flags[old - 1]
    return tuple(out), tuple(new_flags)


def connection_probability(order, offsets, p_open, source, sink) -> float:
    """Exact ``P(some open path joins source to sink)`` for independent sites.

    ``order`` lists the sites in processing order (an order that keeps the
    frontier short, e.g. by angle around an annulus); paths use ``offsets``
    and stay inside ``order``.  ``p_open`` is a float or a mapping per site.
    """
    order = [(int(a), int(b)) for a, b in order]
    pos = {s: i for i, s in enumerate(order)}
    source, sink = set(source), set(sink)
    nbrs = [[pos[q] for q in ((x + dx, y + dy) for dx, dy in offsets) if q in pos]
            for x, y in order]
    last_use = [max([i] + [j for j in nb]) for i, nb in enumerate(nbrs)]
    # state: (labels on frontier, flags of label k at k-1); bit 1 = source, 2 = sink
    states = {((), ()): 1.0}
    frontier: list[int] = []
    done = 0.0
    for i, s in enumerate(order):
        p = p_open if isinstance(p_open, float) else p_open[s]
        own = (1 if s in source else 0) | (2 if s in sink else 0)
        fpos = {v: k for k, v in enumerate(frontier)}
        touching = [fpos[j] for j in nbrs[i] if j in fpos]
        nxt: dict = defaultdict(float)
        for (labels, flags), w in states.items():
            # closed
            if p < 1.0:
                nxt[(labels + (0,), flags)] += w * (1 - p)
            if p <= 0.0:
                continue
            merge = {labels[k] for k in touching if labels[k]}
            f = own
            for m in merge:
                f |= flags[m - 1]
            if f == 3:
                done += w * p
                continue
            new = len(flags) + 1
            lab = tuple(new if a in merge else a for a in labels) + (new,)
            nxt[(lab, flags + (f,))] += w * p
        frontier.append(i)
        keep = [k for k, v in enumerate(frontier) if last_use[v] > i]
        frontier = [frontier[k] for k in keep]
        states = defaultdict(float)
        for (labels, flags), w in nxt.items():
            states[_canon(tuple(labels[k] for k in keep), flags)] += w
    return done


def _angle_order(sites):
    return sorted(sites, key=lambda s: (math.atan2(s[1] + 1e-9, s[0] - 1e-9) % (2 * math.pi),
                                        max(abs(s[0]), abs(s[1])), s))


def independent_circuit_probability(inner: int, outer: int, kind, p_plus: float) -> float:
    """Exact probability of a plus circuit in ``S(outer) \\ S(inner)``
    surrounding ``S(inner)`` when spins are independent.

    No circuit exists exactly when a minus path in the blocking adjacency
    runs from the hole to the outside.
    """
    kind = as_kind(kind)
    boffs = kind.blocking_offsets
    ann = [(x, y) for x in range(-outer, outer + 1) for y in range(-outer, outer + 1)
           if max(abs(x), abs(y)) > inner]
    src = [s for s in ann if max(abs(s[0]), abs(s[1])) == inner + 1
           and any(max(abs(s[0] + dx), abs(s[1] + dy)) <= inner for dx, dy in boffs)]
    snk = [s for s in ann if max(abs(s[0]), abs(s[1])) == outer]
    return 1.0 - connection_probability(_angle_order(ann), boffs, 1.0 - p_plus, src, snk)


def independent_connection_probability(a, b, within, kind, p_plus: float) -> float:
    """Exact ``P(A ↝ B)`` by plus paths inside ``within``; row-major order."""
    kind = as_kind(kind)
    sites = [tuple(map(int, s)) for s in as_region(within).sites()]
    ra, rb = as_region(a), as_region(b)
    src = [s for s in sites if s in ra]
    snk = [s for s in sites if s in rb]
    return connection_probability(sites, kind.offsets, p_plus, src, snk)


# --------------------------------------------------------------------------
# Monte Carlo threshold sweep


def _structure(kind: LatticeKind):
    if kind is LatticeKind.SQUARE:
        return ndimage.generate_binary_structure(2, 1)
    # triangular: E, W, N, S and the (1,1)/(-1,-1) diagonal; arrays are [x, y]
    return np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=bool)


def crossing_fraction(n: int, p_plus: float, kind, samples: int, rng: np.random.Generator) -> float:
    """Fraction of ``samples`` Bernoulli configurations on an ``(n+1)²`` box
    with a left-right plus crossing, via scipy labelling."""
    kind = as_kind(kind)
    st = _structure(kind)
    hits = 0
    for _ in range(samples):
        occ = rng.random((n + 1, n + 1)) < p_plus  # indexed [x, y]
        lab, _ = ndimage.label(occ, structure=st)
        left = set(np.unique(lab[0, :])) - {0}
        right = set(np.unique(lab[-1, :])) - {0}
        hits += bool(left & right)
    return hits / samples


def site_percolation_threshold(kind, sizes=(16, 32), samples: int = 400, lo: float = 0.3,
                               hi: float = 0.8, iters: int = 8,
                               seed: int = 0) -> tuple[float, float]:
    """Bisection for the ``p`` where the square-crossing fraction stops
    depending on size; returns ``(estimate, bracket width)``."""
    rng = np.random.default_rng(seed)
    n1, n2 = sizes
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        d = (crossing_fraction(n2, mid, kind, samples, rng)
             - crossing_fraction(n1, mid, kind, samples, rng))
        if d > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), hi - lo
