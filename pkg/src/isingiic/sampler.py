"""Markov chain and perfect sampling of the finite-volume Gibbs measure.

The infinite-volume measure is approximated by the plus-boundary measure on
``S(N + m)``; events are read off inside ``S(N)``.  Every chain owns a numpy
generator seeded from ``(seed, chain_index)``, and the compiled sweeps only
consume uniforms drawn from it, so a spec determines its sample stream.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from . import _kernels
from .events import as_event
from .lattice import Box, as_kind
from .model import ModelParams, SpinConfig, Window
from .stats import digest, wilson

_CHUNK = 256


class Scheme(str, Enum):
    HEAT_BATH = "HeatBath"
    CLUSTER_GHOST = "ClusterGhost"
    EXACT = "ExactMonotoneCoupling"


class CoalescenceError(RuntimeError):
    pass


class RareEventError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerSpec:
    box_size: int = 16
    margin: int | None = None
    scheme: Scheme = Scheme.HEAT_BATH
    sweeps_between_samples: int = 1
    burn_in_sweeps: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.margin is None:
            object.__setattr__(self, "margin", max(16, self.box_size // 4))
        if self.box_size < 1:
            raise ValueError("box_size must be at least 1")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if self.sweeps_between_samples < 1:
            raise ValueError("sweeps_between_samples must be at least 1")
        if self.burn_in_sweeps < 0:
            raise ValueError("burn_in_sweeps must be nonnegative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def radius(self) -> int:
        return self.box_size + self.margin

    def window(self, kind) -> Window:
        return box_window(self.radius, as_kind(kind))

    def replace(self, **kw) -> "SamplerSpec":
        d = self.to_dict()
        d.update(kw)
        # a margin equal to the derived default follows the new box size,
        # any other value is kept
        if "box_size" in kw and "margin" not in kw and \
                self.margin == max(16, self.box_size // 4):
            d["margin"] = None
        return SamplerSpec(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        return d

    def digest(self, params: ModelParams | None = None, **extra) -> str:
        d = {"sampler": self.to_dict(), **extra}
        if params is not None:
            d["model"] = {"lattice": params.lattice.value, "beta": params.beta, "h": params.h}
        return digest(d)


@lru_cache(maxsize=32)
def box_window(n: int, kind) -> Window:
    return Window(Box(n), kind)


@dataclass(frozen=True)
class Clamp:
    sites: frozenset = frozenset()
    value: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sites", frozenset((int(a), int(b)) for a, b in self.sites))
        if self.value not in (1, -1):
            raise ValueError("clamp value must be +1 or -1")

    def mask(self, window: Window) -> np.ndarray:
        m = np.zeros(window.n, dtype=bool)
        for s in self.sites:
            m[window.idx(s)] = True
        return m


NO_CLAMP = Clamp()


def make_rng(seed: int, chain_index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chain_index),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class SampleStream:
    window: Window
    boundary: np.ndarray
    spins: np.ndarray
    acceptance_rate: float = 1.0
    n_proposed: int = 0
    n_accepted: int = 0

    def __len__(self):
        return len(self.spins)

    def __iter__(self):
        for row in self.spins:
            yield SpinConfig(self.window, row, self.boundary)

    def __getitem__(self, k) -> SpinConfig:
        return SpinConfig(self.window, self.spins[k], self.boundary)

    def acceptance_ci(self) -> tuple[float, float]:
        return wilson(self.n_accepted, self.n_proposed)


def _rng(rng_state) -> np.random.Generator:
    if rng_state is None:
        return make_rng(0)
    if isinstance(rng_state, np.random.Generator):
        return rng_state
    return make_rng(int(rng_state))


# --------------------------------------------------------------------------
# single updates on SpinConfig objects


def heat_bath_sweep(c: SpinConfig, p: ModelParams, clamp: Clamp = NO_CLAMP,
                    rng_state=None) -> SpinConfig:
    """One row-major heat-bath pass over the unclamped sites."""
    rng = _rng(rng_state)
    w = c.window
    order = np.nonzero(~clamp.mask(w))[0]
    out = c.copy()
    u = rng.random(len(order))
    _kernels.heat_bath_sweep(out.spins, w.nbr, w.boundary_field(c.boundary), order,
                             p.beta, p.h, u)
    return out


def _check_ghost(h: float):
    if h < 0:
        raise ValueError("ghost construction requires h ≥ 0")


def cluster_ghost_sweep(c: SpinConfig, p: ModelParams, clamp: Clamp = NO_CLAMP,
                        rng_state=None) -> SpinConfig:
    """One Swendsen-Wang update with the field carried by a ghost spin."""
    _check_ghost(p.h)
    rng = _rng(rng_state)
    w = c.window
    out = c.copy()
    nplus, nminus = w.boundary_counts(c.boundary)
    _kernels.swendsen_wang_sweep(out.spins, w.nbr, nplus, nminus, clamp.mask(w), p.beta, p.h,
                                 rng.random(w.nbr.shape), rng.random(w.n), rng.random(w.n))
    return out


# --------------------------------------------------------------------------
# chains


class Chain:
    """A single Markov chain (or a sequence of perfect draws) on a window."""

    def __init__(self, window: Window, params: ModelParams, scheme=Scheme.HEAT_BATH,
                 boundary=None, clamp: Clamp = NO_CLAMP, seed: int = 0, chain_index: int = 0,
                 init: int = 1, max_doublings: int = 16):
        if window.kind is not params.lattice:
            raise ValueError("window and model use different lattices")
        self.window = window
        self.params = params
        self.scheme = Scheme(scheme)
        if self.scheme is Scheme.CLUSTER_GHOST:
            _check_ghost(params.h)
        self.boundary = window.boundary_from(boundary)
        self.clamp = clamp
        self.clamp_mask = clamp.mask(window)
        self.order = np.nonzero(~self.clamp_mask)[0]
        self.bfield = window.boundary_field(self.boundary)
        self.nplus, self.nminus = window.boundary_counts(self.boundary)
        self.rng = make_rng(seed, chain_index)
        self.max_doublings = max_doublings
        self.spins = np.full(window.n, init, dtype=np.int8)
        self.spins[self.clamp_mask] = clamp.value
        self.sweeps = 0

    def sweep(self, k: int = 1):
        p = self.params
        w = self.window
        for _ in range(k):
            if self.scheme is Scheme.CLUSTER_GHOST:
                _kernels.swendsen_wang_sweep(self.spins, w.nbr, self.nplus, self.nminus,
                                             self.clamp_mask, p.beta, p.h,
                                             self.rng.random(w.nbr.shape),
                                             self.rng.random(w.n), self.rng.random(w.n))
            else:
                _kernels.heat_bath_sweep(self.spins, w.nbr, self.bfield, self.order,
                                         p.beta, p.h, self.rng.random(len(self.order)))
        self.sweeps += k

    def exact_draw(self) -> np.ndarray:
        """Coupling from the past with the all-plus and all-minus states."""
        w, p = self.window, self.params
        nfree = len(self.order)
        us = self.rng.random((1, nfree))
        for _ in range(self.max_doublings + 1):
            top = np.ones(w.n, dtype=np.int8)
            bot = -np.ones(w.n, dtype=np.int8)
            top[self.clamp_mask] = self.clamp.value
            bot[self.clamp_mask] = self.clamp.value
            if _kernels.coupled_run(top, bot, w.nbr, self.bfield, self.bfield, self.order,
                                    p.beta, p.h, us):
                self.spins = top
                return top.copy()
            # extend further into the past, reusing the recent uniforms
            us = np.concatenate([self.rng.random((len(us), nfree)), us])
        raise CoalescenceError("coalescence budget exceeded")

    def draw(self, n: int, every: int = 1, burn_in: int = 0) -> np.ndarray:
        out = np.empty((n, self.window.n), dtype=np.int8)
        if self.scheme is Scheme.EXACT:
            for k in range(n):
                out[k] = self.exact_draw()
        else:
            if burn_in and self.sweeps == 0:
                self.sweep(burn_in)
            for k in range(n):
                self.sweep(every)
                out[k] = self.spins
        if self.clamp.sites:
            assert np.all(out[:, self.clamp_mask] == self.clamp.value)
        return out


def chain_for(spec: SamplerSpec, params: ModelParams, clamp: Clamp = NO_CLAMP,
              chain_index: int = 0, boundary=None) -> Chain:
    return Chain(spec.window(params.lattice), params, spec.scheme, boundary=boundary,
                 clamp=clamp, seed=spec.seed, chain_index=chain_index)


def stream_chunks(spec: SamplerSpec, params: ModelParams, n_samples: int,
                  clamp: Clamp = NO_CLAMP, n_chains: int = 1, chunk: int = _CHUNK,
                  boundary=None):
    """Yield blocks of samples; chains run one after another in index order."""
    per = [n_samples // n_chains + (1 if j < n_samples % n_chains else 0) for j in range(n_chains)]
    for j, m in enumerate(per):
        ch = chain_for(spec, params, clamp, j, boundary)
        first = True
        while m > 0:
            k = min(chunk, m)
            yield ch.draw(k, spec.sweeps_between_samples,
                          spec.burn_in_sweeps if first else 0)
            first = False
            m -= k


def sample(spec: SamplerSpec, params: ModelParams, n_samples: int,
           clamp: Clamp = NO_CLAMP, n_chains: int = 1, boundary=None) -> SampleStream:
    w = spec.window(params.lattice)
    blocks = list(stream_chunks(spec, params, n_samples, clamp, n_chains, boundary=boundary))
    spins = np.concatenate(blocks) if blocks else np.empty((0, w.n), dtype=np.int8)
    return SampleStream(w, w.boundary_from(boundary), spins, 1.0, n_samples, n_samples)


def exact_sample(spec: SamplerSpec, p: ModelParams, clamp: Clamp = NO_CLAMP,
                 rng_state=None, boundary=None) -> SpinConfig:
    if spec.scheme is not Scheme.EXACT:
        raise ValueError("exact_sample needs the ExactMonotoneCoupling scheme")
    ch = chain_for(spec, p, clamp, boundary=boundary)
    if rng_state is not None:
        ch.rng = _rng(rng_state)
    return SpinConfig(ch.window, ch.exact_draw(), ch.boundary)


class ConditionedStream:
    """Rejection sampler yielding blocks of accepted configurations.

    Proposals come from ``n_chains`` chains used in turn, one block each.
    Iteration stops after ``n_samples`` acceptances (or ``max_proposals``
    proposals) and raises :class:`RareEventError` once at least ``warmup``
    proposals were made and the upper end of the acceptance rate's 95%
    interval is below ``floor``.
    """

    def __init__(self, spec: SamplerSpec, p: ModelParams, clamp: Clamp = NO_CLAMP,
                 condition="true", n_samples: int = 1000, floor: float = 1e-5,
                 warmup: int = 1000, max_proposals: int | None = None,
                 n_chains: int = 1, boundary=None):
        self.condition = as_event(condition)
        self.window = spec.window(p.lattice)
        if self.condition.radius() > min(spec.box_size + 1, spec.radius):
            raise ValueError("condition not evaluable in window interior")
        self.spec, self.params, self.clamp = spec, p, clamp
        self.n_samples, self.floor, self.warmup = n_samples, floor, warmup
        self.max_proposals, self.n_chains = max_proposals, n_chains
        self.boundary = self.window.boundary_from(boundary)
        self.n_proposed = 0
        self.n_accepted = 0

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else 0.0

    def __iter__(self):
        spec = self.spec
        chains = [chain_for(spec, self.params, self.clamp, j, self.boundary)
                  for j in range(self.n_chains)]
        k = 0
        while self.n_accepted < self.n_samples:
            ch = chains[k % self.n_chains]
            block = ch.draw(_CHUNK, spec.sweeps_between_samples,
                            spec.burn_in_sweeps if k < self.n_chains else 0)
            k += 1
            hit = np.asarray(self.condition.evaluate(block, self.window), dtype=bool)
            idx = np.nonzero(hit)[0]
            need = self.n_samples - self.n_accepted
            if len(idx) > need:
                # stop at the proposal that completes the request
                cut = idx[need - 1] + 1
                hit, block, idx = hit[:cut], block[:cut], idx[:need]
            self.n_proposed += len(hit)
            self.n_accepted += len(idx)
            if len(idx):
                yield block[idx]
            upper = wilson(self.n_accepted, self.n_proposed)[1]
            if self.n_proposed >= self.warmup and upper < self.floor:
                raise RareEventError("conditioning event too rare at this scale")
            if self.max_proposals is not None and self.n_proposed >= self.max_proposals:
                return


def sample_conditioned(spec: SamplerSpec, p: ModelParams, clamp: Clamp = NO_CLAMP,
                       condition="true", n_samples: int = 1000, floor: float = 1e-5,
                       warmup: int = 1000, max_proposals: int | None = None,
                       n_chains: int = 1, boundary=None) -> SampleStream:
    """Rejection sampling: keep the draws satisfying ``condition``."""
    cs = ConditionedStream(spec, p, clamp, condition, n_samples, floor, warmup,
                           max_proposals, n_chains, boundary)
    blocks = list(cs)
    w = cs.window
    spins = np.concatenate(blocks) if blocks else np.empty((0, w.n), dtype=np.int8)
    return SampleStream(w, cs.boundary, spins, cs.acceptance_rate, cs.n_proposed, cs.n_accepted)


# --------------------------------------------------------------------------
# coupled chains


class CoupledPair:
    """Two heat-bath chains driven by the same uniforms.

    ``top`` starts all plus under ``boundary_top`` and ``bottom`` all minus
    under ``boundary_bottom``; when the top boundary dominates the bottom one
    the sitewise order ``top >= bottom`` is preserved at every sweep.
    """

    def __init__(self, window: Window, params: ModelParams, boundary_top=None,
                 boundary_bottom=None, clamp: Clamp = NO_CLAMP, seed: int = 0,
                 chain_index: int = 0):
        self.window = window
        self.params = params
        bt = window.boundary_from(boundary_top)
        bb = bt if boundary_bottom is None else window.boundary_from(boundary_bottom)
        mask = clamp.mask(window)
        self.order = np.nonzero(~mask)[0]
        self.bf_top = window.boundary_field(bt)
        self.bf_bottom = window.boundary_field(bb)
        self.top = np.ones(window.n, dtype=np.int8)
        self.bottom = -np.ones(window.n, dtype=np.int8)
        self.top[mask] = clamp.value
        self.bottom[mask] = clamp.value
        self.rng = make_rng(seed, chain_index)

    def sweep(self, k: int = 1) -> bool:
        us = self.rng.random((k, len(self.order)))
        w, p = self.window, self.params
        return _kernels.coupled_run(self.top, self.bottom, w.nbr, self.bf_top, self.bf_bottom,
                                    self.order, p.beta, p.h, us)

    def ordered(self) -> bool:
        return bool(np.all(self.top >= self.bottom))

    def coalesced(self) -> bool:
        return bool(np.array_equal(self.top, self.bottom))
