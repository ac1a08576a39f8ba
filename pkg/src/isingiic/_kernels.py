"""Compiled inner loops.

Every kernel takes the window's neighbour table ``nbr`` (shape ``(n, deg)``,
``-1`` for neighbours outside the window) and consumes pre-drawn uniforms,
so all randomness stays in numpy generators owned by the caller.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def heat_bath_sweep(spins, nbr, bfield, order, beta, h, u):
    deg = nbr.shape[1]
    for k in range(order.shape[0]):
        i = order[k]
        s = bfield[i] + h
        for d in range(deg):
            j = nbr[i, d]
            if j >= 0:
                s += spins[j]
        p = 1.0 / (1.0 + np.exp(-2.0 * beta * s))
        spins[i] = 1 if u[k] < p else -1


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _union(parent, size, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return ra
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]
    return ra


@njit(cache=True)
def swendsen_wang_sweep(spins, nbr, nplus, nminus, frozen, beta, h, u_bond, u_fix, u_flip):
    """One Swendsen-Wang update with fixed spins.

    Boundary spins, clamped sites and the ghost spin (carrying the field,
    ``h >= 0``) are all fixed; any cluster bonded to one keeps its sign.
    """
    n = spins.shape[0]
    deg = nbr.shape[1]
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    fixed = np.zeros(n, dtype=np.bool_)
    p_edge = 1.0 - np.exp(-2.0 * beta)
    for i in range(n):
        for d in range(deg):
            j = nbr[i, d]
            if j > i and spins[i] == spins[j] and u_bond[i, d] < p_edge:
                _union(parent, size, i, j)
        if frozen[i]:
            fixed[i] = True
        else:
            if spins[i] > 0:
                w = nplus[i] + h
            else:
                w = nminus[i]
            if w > 0 and u_fix[i] < 1.0 - np.exp(-2.0 * beta * w):
                fixed[i] = True
    root_fixed = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if fixed[i]:
            root_fixed[_find(parent, i)] = True
    for i in range(n):
        r = _find(parent, i)
        if not root_fixed[r]:
            spins[i] = 1 if u_flip[r] < 0.5 else -1


@njit(cache=True)
def label_clusters(spins, nbr, allowed):
    """Union-find labels of (+)-clusters restricted to ``allowed`` sites.

    Returns the root index per site (``-1`` for minus or disallowed sites).
    """
    n = spins.shape[0]
    deg = nbr.shape[1]
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    for i in range(n):
        if spins[i] > 0 and allowed[i]:
            for d in range(deg):
                j = nbr[i, d]
                if j > i and spins[j] > 0 and allowed[j]:
                    _union(parent, size, i, j)
    labels = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if spins[i] > 0 and allowed[i]:
            labels[i] = _find(parent, i)
    return labels


@njit(cache=True)
def connects_batch(spins, nbr, allowed, mask_a, mask_b):
    """Row-wise ``A ↝ B`` through (+)-paths inside ``allowed``."""
    m, n = spins.shape
    deg = nbr.shape[1]
    out = np.zeros(m, dtype=np.bool_)
    seen = np.zeros(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    for r in range(m):
        seen[:] = False
        top = 0
        for i in range(n):
            if mask_a[i] and allowed[i] and spins[r, i] > 0:
                seen[i] = True
                stack[top] = i
                top += 1
        hit = False
        while top > 0 and not hit:
            top -= 1
            i = stack[top]
            if mask_b[i]:
                hit = True
                break
            for d in range(deg):
                j = nbr[i, d]
                if j >= 0 and not seen[j] and allowed[j] and spins[r, j] > 0:
                    seen[j] = True
                    stack[top] = j
                    top += 1
        out[r] = hit
    return out


@njit(cache=True)
def cluster_size_batch(spins, nbr, origin, mask):
    """Row-wise size of the origin's (+)-cluster intersected with ``mask``."""
    m, n = spins.shape
    deg = nbr.shape[1]
    out = np.zeros(m, dtype=np.int64)
    seen = np.zeros(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    for r in range(m):
        if spins[r, origin] <= 0:
            continue
        seen[:] = False
        seen[origin] = True
        stack[0] = origin
        top = 1
        cnt = 0
        while top > 0:
            top -= 1
            i = stack[top]
            if mask[i]:
                cnt += 1
            for d in range(deg):
                j = nbr[i, d]
                if j >= 0 and not seen[j] and spins[r, j] > 0:
                    seen[j] = True
                    stack[top] = j
                    top += 1
        out[r] = cnt
    return out


@njit(cache=True)
def circuit_exists_batch(spins, bnbr, hole, annulus, exits):
    """Row-wise existence of a (+)-circuit in the annulus around the hole.

    Dual search: grow the blocking cluster of non-plus annulus sites from the
    hole; a circuit exists iff it never reaches an ``exits`` site (an annulus
    site with a blocking neighbour outside annulus and hole).
    """
    m, n = spins.shape
    deg = bnbr.shape[1]
    out = np.zeros(m, dtype=np.bool_)
    seen = np.zeros(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    for r in range(m):
        seen[:] = False
        top = 0
        for i in range(n):
            if hole[i]:
                seen[i] = True
                stack[top] = i
                top += 1
        blocked = False
        while top > 0:
            top -= 1
            i = stack[top]
            if annulus[i] and exits[i]:
                blocked = True
                break
            for d in range(deg):
                j = bnbr[i, d]
                if j >= 0 and not seen[j] and annulus[j] and spins[r, j] < 0:
                    seen[j] = True
                    stack[top] = j
                    top += 1
        out[r] = not blocked
    return out


@njit(cache=True)
def energies_batch(spins, ei, ej, field):
    """Row-wise Hamiltonian: ``-Σ_edges σσ - Σ field·σ``."""
    m = spins.shape[0]
    out = np.zeros(m)
    for r in range(m):
        e = 0.0
        for k in range(ei.shape[0]):
            e -= spins[r, ei[k]] * spins[r, ej[k]]
        for i in range(field.shape[0]):
            e -= field[i] * spins[r, i]
        out[r] = e
    return out


@njit(cache=True)
def coupled_run(top, bottom, nbr, bf_top, bf_bottom, order, beta, h, us):
    """Drive two states with the same uniforms; True once they agree."""
    for t in range(us.shape[0]):
        heat_bath_sweep(top, nbr, bf_top, order, beta, h, us[t])
        heat_bath_sweep(bottom, nbr, bf_bottom, order, beta, h, us[t])
    for i in range(top.shape[0]):
        if top[i] != bottom[i]:
            return False
    return True
