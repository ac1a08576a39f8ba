"""Finite-volume Ising model and exact enumeration oracles.

The Hamiltonian on a finite set ``V`` with boundary configuration ``ω`` is

    H(σ) = -Σ_{edges xy ⊂ V} σ(x)σ(y) - Σ_{x∈V} (h + Σ_{y∉V, y~x} ω(y)) σ(x)

(the ordered-pair sum with factor ½ counts each interior edge once).  The
Gibbs weight is ``exp(-β H)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .lattice import Box, Explicit, LatticeKind, as_kind, as_region

ENUMERATION_CUTOFF = 24
_CHUNK = 1 << 16


@dataclass(frozen=True)
class ModelParams:
    lattice: LatticeKind = LatticeKind.SQUARE
    beta: float = 0.3
    h: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lattice", as_kind(self.lattice))
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def with_h(self, h: float) -> "ModelParams":
        return ModelParams(self.lattice, self.beta, float(h))

    def with_beta(self, beta: float) -> "ModelParams":
        return ModelParams(self.lattice, float(beta), self.h)


class Window:
    """A finite set of sites with its neighbour tables.

    ``nbr[i, d]`` is the window index of the ``d``-th lattice neighbour of
    site ``i`` or ``-1`` if that neighbour lies outside; ``ext_nbr`` maps the
    outside neighbours to indices of :attr:`exterior`.  ``bnbr`` is the same
    table for the blocking adjacency.
    """

    def __init__(self, region, kind=LatticeKind.SQUARE):
        self.kind = as_kind(kind)
        self.region = as_region(region)
        self.sites = self.region.sites()
        if len(self.sites) == 0:
            raise ValueError("empty region")
        self.n = len(self.sites)
        self.index = {(int(a), int(b)): i for i, (a, b) in enumerate(self.sites)}
        ext: dict[tuple[int, int], int] = {}
        offs = self.kind.offsets
        self.nbr = np.full((self.n, len(offs)), -1, dtype=np.int64)
        self.ext_nbr = np.full((self.n, len(offs)), -1, dtype=np.int64)
        for i, (x, y) in enumerate(self.sites):
            for d, (dx, dy) in enumerate(offs):
                q = (int(x + dx), int(y + dy))
                j = self.index.get(q)
                if j is not None:
                    self.nbr[i, d] = j
                else:
                    self.ext_nbr[i, d] = ext.setdefault(q, len(ext))
        self.exterior = np.array(sorted(ext, key=ext.get), dtype=np.int64).reshape(-1, 2)
        boffs = self.kind.blocking_offsets
        self.bnbr = np.full((self.n, len(boffs)), -1, dtype=np.int64)
        for i, (x, y) in enumerate(self.sites):
            for d, (dx, dy) in enumerate(boffs):
                self.bnbr[i, d] = self.index.get((int(x + dx), int(y + dy)), -1)

    @classmethod
    def box(cls, n: int, kind=LatticeKind.SQUARE) -> "Window":
        return cls(Box(n), kind)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Window({self.region!r}, {self.kind.value}, n={self.n})"

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        i, d = np.nonzero(self.nbr >= 0)
        j = self.nbr[i, d]
        keep = j > i
        return i[keep].astype(np.int64), j[keep].astype(np.int64)

    def mask(self, region) -> np.ndarray:
        return as_region(region).mask(self.sites)

    def idx(self, s) -> int:
        try:
            return self.index[(int(s[0]), int(s[1]))]
        except KeyError:
            raise ValueError(f"site {tuple(s)} outside window") from None

    def plus_boundary(self) -> np.ndarray:
        return np.ones(len(self.exterior), dtype=np.int8)

    def constant_boundary(self, value: int) -> np.ndarray:
        return np.full(len(self.exterior), value, dtype=np.int8)

    def boundary_from(self, omega) -> np.ndarray:
        """Boundary array from a scalar, an array, a mapping or a callable."""
        if omega is None:
            return self.plus_boundary()
        if np.isscalar(omega):
            return self.constant_boundary(int(omega))
        if isinstance(omega, Mapping):
            try:
                return np.array([omega[(int(a), int(b))] for a, b in self.exterior], dtype=np.int8)
            except KeyError as e:
                raise ValueError("incomplete configuration") from e
        if callable(omega):
            return np.array([omega((int(a), int(b))) for a, b in self.exterior], dtype=np.int8)
        arr = np.asarray(omega, dtype=np.int8)
        if arr.shape != (len(self.exterior),):
            raise ValueError("incomplete configuration")
        return arr

    def boundary_field(self, boundary) -> np.ndarray:
        """``Σ_{y∉V, y~x} ω(y)`` for each window site."""
        b = np.concatenate([np.asarray(boundary, dtype=np.float64), [0.0]])
        idx = np.where(self.ext_nbr >= 0, self.ext_nbr, len(b) - 1)
        return b[idx].sum(axis=1)

    def boundary_counts(self, boundary) -> tuple[np.ndarray, np.ndarray]:
        b = np.concatenate([np.asarray(boundary, dtype=np.int64), [0]])
        idx = np.where(self.ext_nbr >= 0, self.ext_nbr, len(b) - 1)
        vals = b[idx]
        return (vals > 0).sum(axis=1).astype(np.float64), (vals < 0).sum(axis=1).astype(np.float64)


@dataclass
class SpinConfig:
    """Spins on a window plus the fixed boundary spins around it."""
    window: Window
    spins: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        self.spins = np.asarray(self.spins, dtype=np.int8)
        self.boundary = self.window.boundary_from(self.boundary)
        if self.spins.shape != (self.window.n,):
            raise ValueError("incomplete configuration")

    def __getitem__(self, s) -> int:
        return int(self.spins[self.window.idx(s)])

    def copy(self) -> "SpinConfig":
        return SpinConfig(self.window, self.spins.copy(), self.boundary.copy())

    @classmethod
    def constant(cls, window: Window, value: int, boundary=None) -> "SpinConfig":
        return cls(window, np.full(window.n, value, dtype=np.int8), window.boundary_from(boundary))

    @classmethod
    def from_function(cls, window: Window, f: Callable, boundary=None) -> "SpinConfig":
        spins = np.array([f((int(a), int(b))) for a, b in window.sites], dtype=np.int8)
        return cls(window, spins, window.boundary_from(boundary))


# --------------------------------------------------------------------------
# Hamiltonian and exact enumeration


def _spins_vector(window: Window, sigma) -> np.ndarray:
    if isinstance(sigma, Mapping):
        try:
            return np.array([sigma[(int(a), int(b))] for a, b in window.sites], dtype=np.int8)
        except KeyError as e:
            raise ValueError("incomplete configuration") from e
    if np.isscalar(sigma):
        return np.full(window.n, int(sigma), dtype=np.int8)
    arr = np.asarray(sigma, dtype=np.int8)
    if arr.shape != (window.n,):
        raise ValueError("incomplete configuration")
    return arr


def hamiltonian(V, h: float, sigma, omega=None, kind=LatticeKind.SQUARE) -> float:
    """``H_{V,h}^ω(σ)``; ``V`` is a :class:`Window` or any finite region."""
    w = V if isinstance(V, Window) else Window(V, kind)
    s = _spins_vector(w, sigma).astype(np.float64)
    field = h + w.boundary_field(w.boundary_from(omega))
    ei, ej = w.edges
    return float(-(s[ei] * s[ej]).sum() - (field * s).sum())


def all_configs(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows ``k`` in ``[start, stop)`` of the full ±1 table; bit ``i`` of ``k``
    set means site ``i`` is +1."""
    stop = (1 << n) if stop is None else stop
    k = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (k >> np.arange(n, dtype=np.int64)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


class GibbsTable:
    """Exact finite-volume Gibbs distribution on a window.

    Probabilities are stored for all ``2^n`` configurations when that fits
    (``n <= 20``); larger windows are streamed chunk by chunk.
    """

    def __init__(self, window: Window, params: ModelParams, boundary=None,
                 cutoff: int = ENUMERATION_CUTOFF):
        if window.n > cutoff:
            raise ValueError("volume too large for enumeration")
        self.window = window
        self.params = params
        self.boundary = window.boundary_from(boundary)
        self.field = params.h + window.boundary_field(self.boundary)
        self._ei, self._ej = window.edges
        # normalise by the largest exponent: the ground-state bound
        self._emin = -(len(self._ei) + np.abs(self.field).sum())
        self.log_z = self._log_partition()
        self._probs = None
        if window.n <= 20:
            self._probs = np.concatenate([p for _, p in self.chunks()])

    def _weights(self, spins):
        e = _kernels.energies_batch(spins, self._ei, self._ej, self.field)
        return np.exp(-self.params.beta * (e - self._emin))

    def _ranges(self):
        total = 1 << self.window.n
        for start in range(0, total, _CHUNK):
            yield start, min(total, start + _CHUNK)

    def _log_partition(self):
        z = 0.0
        for a, b in self._ranges():
            z += self._weights(all_configs(self.window.n, a, b)).sum()
        return np.log(z) - self.params.beta * self._emin

    def chunks(self):
        """Yield ``(spins, probabilities)`` blocks covering every configuration."""
        for a, b in self._ranges():
            spins = all_configs(self.window.n, a, b)
            if self._probs is not None:
                yield spins, self._probs[a:b]
            else:
                w = self._weights(spins)
                yield spins, w * np.exp(-self.params.beta * self._emin - self.log_z)

    @property
    def probs(self) -> np.ndarray:
        if self._probs is None:
            raise ValueError("probability table not materialised for this volume")
        return self._probs

    def prob(self, event) -> float:
        """Exact probability of an event given as a callable on spin blocks."""
        ev = _as_batch_event(event, self.window)
        return float(sum(p[ev(s)].sum() for s, p in self.chunks()))

    def expect(self, f) -> float:
        """Exact expectation of ``f(spins_block) -> values``."""
        return float(sum((p * f(s)).sum() for s, p in self.chunks()))

    def marginals(self) -> np.ndarray:
        """``P(σ(x) = +1)`` for each site."""
        out = np.zeros(self.window.n)
        for s, p in self.chunks():
            out += ((s > 0) * p[:, None]).sum(axis=0)
        return out


def exact_gibbs(V, params: ModelParams, omega=None, cutoff: int = ENUMERATION_CUTOFF) -> GibbsTable:
    w = V if isinstance(V, Window) else Window(V, params.lattice)
    return GibbsTable(w, params, omega, cutoff)


def _as_batch_event(event, window: Window):
    from .events import Event
    if isinstance(event, Event):
        return lambda spins: event.evaluate(spins, window)
    if callable(event):
        return event
    raise TypeError("event must be an Event or a callable on spin blocks")


def exact_event_prob(V, params: ModelParams, omega, event,
                     cutoff: int = ENUMERATION_CUTOFF) -> float:
    return exact_gibbs(V, params, omega, cutoff).prob(event)


def exact_conditional(V, params: ModelParams, omega, event, given,
                      cutoff=ENUMERATION_CUTOFF) -> float:
    """Exact ``P(event | given)``."""
    t = exact_gibbs(V, params, omega, cutoff)
    ev = _as_batch_event(event, t.window)
    gv = _as_batch_event(given, t.window)
    num = den = 0.0
    for s, p in t.chunks():
        g = gv(s)
        den += p[g].sum()
        num += p[g & ev(s)].sum()
    if den == 0:
        raise ZeroDivisionError("conditioning event has probability zero")
    return float(num / den)


@dataclass(frozen=True)
class FKGResult:
    p_ab: float
    p_a_p_b: float
    holds: bool


def check_fkg(V, params: ModelParams, omega, a, b, tol: float = 1e-12) -> FKGResult:
    """Exact check of ``P(A∩B) >= P(A)P(B)`` for declared-increasing events."""
    for e in (a, b):
        if getattr(e, "monotone", True) is False:
            raise ValueError("FKG check requires events declared increasing")
    t = exact_gibbs(V, params, omega)
    ea, eb = _as_batch_event(a, t.window), _as_batch_event(b, t.window)
    pa = pb = pab = 0.0
    for s, p in t.chunks():
        ma, mb = ea(s), eb(s)
        pa += p[ma].sum()
        pb += p[mb].sum()
        pab += p[ma & mb].sum()
    return FKGResult(float(pab), float(pa * pb), bool(pab >= pa * pb - tol))


@dataclass(frozen=True)
class DLRResult:
    lhs: float
    rhs: float
    agree: bool


def check_dlr(V, Lam, params: ModelParams, omega, event, tol: float = 1e-10) -> DLRResult:
    """Compare ``q_Λ(A)`` with ``Σ_η q_Λ(η) q_V^η(A)`` for ``A`` measurable on ``V``.

    ``η`` runs over configurations of ``Λ \\ V``; the inner measure uses the
    spins of ``η`` (and of ``ω`` where ``V`` touches ``∂Λ``) as boundary.
    """
    wl = Lam if isinstance(Lam, Window) else Window(Lam, params.lattice)
    wv = V if isinstance(V, Window) else Window(V, params.lattice)
    outer = exact_gibbs(wl, params, omega)
    ev_l = _as_batch_event(event, wl)
    lhs = outer.prob(ev_l)

    omega_l = outer.boundary
    v_idx = np.array([wl.idx(s) for s in wv.sites], dtype=np.int64)
    rest = np.setdiff1d(np.arange(wl.n), v_idx)
    ext_src = []  # for each exterior site of V: ('L', idx) or ('B', idx)
    ext_lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(wl.exterior)}
    for a, b in wv.exterior:
        key = (int(a), int(b))
        if key in wl.index:
            ext_src.append((0, wl.index[key]))
        else:
            ext_src.append((1, ext_lookup[key]))
    ev_v = _as_batch_event(event, wv)

    # marginal law of the configuration on Λ \ V
    marg: dict[bytes, float] = {}
    rest_rows: dict[bytes, np.ndarray] = {}
    for s, p in outer.chunks():
        keys = s[:, rest]
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        sums = np.bincount(inv.ravel(), weights=p, minlength=len(uniq))
        for row, w in zip(uniq, sums):
            k = row.tobytes()
            marg[k] = marg.get(k, 0.0) + w
            rest_rows[k] = row
    rhs = 0.0
    full = np.zeros(wl.n, dtype=np.int8)
    for k, w in marg.items():
        if w == 0.0:
            continue
        full[rest] = rest_rows[k]
        bnd = np.array([full[j] if src == 0 else omega_l[j] for src, j in ext_src], dtype=np.int8)
        rhs += w * GibbsTable(wv, params, bnd).prob(ev_v)
    return DLRResult(float(lhs), float(rhs), bool(abs(lhs - rhs) <= tol))


def is_increasing(event, window: Window, max_sites: int = 12) -> bool:
    """Exhaustive monotonicity check: flipping any minus spin to plus never
    turns the event off."""
    if window.n > max_sites:
        raise ValueError("volume too large for monotonicity check")
    ev = _as_batch_event(event, window)
    spins = all_configs(window.n)
    val = ev(spins)
    k = np.arange(1 << window.n)
    for i in range(window.n):
        lower = (k >> i) & 1 == 0
        up = k[lower] | (1 << i)
        if np.any(val[lower] & ~val[up]):
            return False
    return True


class ClampedGibbs:
    """Exact law on a window with some sites pinned.

    Only the free sites are enumerated; pinned spins act as extra boundary,
    which is the DLR form of conditioning on their values.  Blocks are
    returned as full-window spin rows.
    """

    def __init__(self, window: Window, params: ModelParams, boundary=None,
                 pinned: Mapping | None = None, cutoff: int = ENUMERATION_CUTOFF):
        pinned = {(int(a), int(b)): int(v) for (a, b), v in (pinned or {}).items()}
        self.window = window
        self.params = params
        self.boundary = window.boundary_from(boundary)
        self.base = np.zeros(window.n, dtype=np.int8)
        for s, v in pinned.items():
            self.base[window.idx(s)] = v
        free = [(int(a), int(b)) for a, b in window.sites if (int(a), int(b)) not in pinned]
        self.table = None
        self.free_idx = np.array([window.idx(s) for s in free], dtype=np.int64)
        if free:
            omega = {(int(a), int(b)): int(v) for (a, b), v in zip(window.exterior, self.boundary)}
            omega.update(pinned)
            sub = Window(Explicit(free), window.kind)
            self.table = GibbsTable(sub, params, omega, cutoff)
            self.free_idx = np.array([window.idx(s) for s in sub.sites], dtype=np.int64)

    def chunks(self):
        if self.table is None:
            yield self.base[None, :].copy(), np.ones(1)
            return
        for s, p in self.table.chunks():
            full = np.repeat(self.base[None, :], len(s), axis=0)
            full[:, self.free_idx] = s
            yield full, p

    def prob(self, event, given=None) -> float:
        return self.expect(lambda s: _as_batch_event(event, self.window)(s).astype(np.float64),
                           given)

    def expect(self, f, given=None) -> float:
        """``E[f | given]``; ``f`` maps spin blocks to values."""
        gv = None if given is None else _as_batch_event(given, self.window)
        num = den = 0.0
        for s, p in self.chunks():
            if gv is not None:
                g = gv(s)
                s, p = s[g], p[g]
            den += p.sum()
            num += (p * f(s)).sum()
        if den == 0:
            raise ZeroDivisionError("conditioning event has probability zero")
        return float(num / den)
