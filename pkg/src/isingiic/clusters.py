"""(+)-cluster labelling and connection events on single configurations."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .lattice import Rectangle, as_region
from .model import SpinConfig


@dataclass(frozen=True)
class ClusterLabeling:
    """``labels[i]`` is the cluster id of plus site ``i`` (``-1`` for minus
    sites); ids are the smallest window index in each cluster."""
    labels: np.ndarray
    sizes: dict

    def cluster_of(self, i: int) -> int:
        return int(self.labels[i])

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)


def plus_clusters(c: SpinConfig, allowed=None) -> ClusterLabeling:
    w = c.window
    allowed = np.ones(w.n, dtype=bool) if allowed is None else allowed
    roots = _kernels.label_clusters(c.spins, w.nbr, allowed)
    labels = np.full(w.n, -1, dtype=np.int64)
    plus = roots >= 0
    if plus.any():
        # canonical id: minimum member index
        first = {}
        for i in np.nonzero(plus)[0]:
            first.setdefault(int(roots[i]), int(i))
        labels[plus] = [first[int(r)] for r in roots[plus]]
    ids, counts = np.unique(labels[plus], return_counts=True)
    return ClusterLabeling(labels, {int(a): int(b) for a, b in zip(ids, counts)})


def bfs_clusters(c: SpinConfig) -> ClusterLabeling:
    """Flood-fill labelling; independent check of :func:`plus_clusters`."""
    w = c.window
    labels = np.full(w.n, -1, dtype=np.int64)
    sizes = {}
    for s in range(w.n):
        if c.spins[s] <= 0 or labels[s] >= 0:
            continue
        labels[s] = s
        q = deque([s])
        cnt = 0
        while q:
            i = q.popleft()
            cnt += 1
            for j in w.nbr[i]:
                if j >= 0 and c.spins[j] > 0 and labels[j] < 0:
                    labels[j] = s
                    q.append(j)
        sizes[s] = cnt
    return ClusterLabeling(labels, sizes)


def _region_mask(c: SpinConfig, region):
    r = as_region(region)
    m = c.window.mask(r)
    if not m.any():
        raise ValueError("region exceeds window")
    return m


def connects(c: SpinConfig, a, b) -> bool:
    """``A ↝ B`` inside the window."""
    ma, mb = _region_mask(c, a), _region_mask(c, b)
    allowed = np.ones(c.window.n, dtype=bool)
    return bool(_kernels.connects_batch(c.spins[None, :], c.window.nbr, allowed, ma, mb)[0])


def crossing(c: SpinConfig, rect: Rectangle, direction: str = "horizontal") -> bool:
    from .events import Crossing
    if direction not in ("horizontal", "vertical"):
        raise ValueError("direction must be 'horizontal' or 'vertical'")
    if rect.x0 == rect.x1 and rect.y0 == rect.y1:
        raise ValueError("degenerate rectangle")
    return Crossing(rect, direction == "horizontal")(c)


def restricted_cluster_size(c: SpinConfig, n: int) -> int:
    """``#(C_0^+ ∩ S(n))``."""
    from .lattice import Box
    w = c.window
    o = w.idx((0, 0))
    mask = w.mask(Box(n))
    return int(_kernels.cluster_size_batch(c.spins[None, :], w.nbr, o, mask)[0])


def origin_cluster_size(c: SpinConfig) -> int:
    w = c.window
    return int(_kernels.cluster_size_batch(c.spins[None, :], w.nbr, w.idx((0, 0)),
                                           np.ones(w.n, dtype=bool))[0])


def star_minus_vertical_crossing(c: SpinConfig, rect: Rectangle) -> bool:
    """Vertical crossing of the rectangle by minus sites under ∗-adjacency.

    On the square lattice this happens iff there is no horizontal (+)-crossing.
    """
    w = c.window
    allowed = w.mask(rect)
    a = w.mask(Rectangle(rect.x0, rect.y0, rect.x1, rect.y0))
    b = w.mask(Rectangle(rect.x0, rect.y1, rect.x1, rect.y1))
    flipped = (-c.spins)[None, :]
    return bool(_kernels.connects_batch(flipped, w.bnbr, allowed, a, b)[0])
