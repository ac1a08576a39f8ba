"""Estimators and probes on the plus-boundary proxy of the infinite-volume
measure.

Every estimator runs either by Monte Carlo (the default) or, with
``exact=True``, by enumerating the same finite-volume measure; the exact path
is what the micro-scale checks compare against.  Sums over circuits are never
formed by listing circuits: each sample contributes to the single innermost
circuit it contains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import stats
from .circuits import CircuitQuery, circuit_event, innermost_batch, innermost_is
from .events import CircuitExists, Connect, Crossing, Event, SpinIs, as_event
from .lattice import (AnnulusSchedule, Box, Boundary, Circuit, Explicit, LatticeKind,
                      Rectangle, as_kind, enclosed_sites)
from .model import ENUMERATION_CUTOFF, ClampedGibbs, ModelParams
from .sampler import (NO_CLAMP, Chain, Clamp, ConditionedStream, CoupledPair, RareEventError,
                      SamplerSpec, Scheme, box_window, make_rng, stream_chunks)
from . import _kernels

DEFAULT_SAMPLES = 2000


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit seed for a sub-run, determined by ``seed`` and ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    a, b = ss.generate_state(2)
    return int(a) << 32 | int(b)


def _text(ev) -> str:
    try:
        return ev.to_text()
    except Exception:
        return repr(ev)


# --------------------------------------------------------------------------
# sampling backbone


@dataclass
class Sampled:
    """Per-sample values (Monte Carlo) or exact expectations of named
    functions, possibly under a conditioning event."""
    values: dict
    exact: bool
    n_proposed: int
    n_accepted: int
    seed: int
    digest: str
    acceptance_exact: float = 1.0

    def proportion(self, key: str, name: str = "") -> stats.Estimate:
        if self.exact:
            return stats.exact(self.values[key], name, self.digest)
        return stats.proportion(self.values[key], self.seed, self.digest, name)

    def mean(self, key: str, name: str = "") -> stats.Estimate:
        if self.exact:
            return stats.exact(self.values[key], name, self.digest)
        return stats.mean(self.values[key], self.seed, self.digest, name)

    def acceptance(self, name: str = "acceptance") -> stats.Estimate:
        if self.exact:
            return stats.exact(self.acceptance_exact, name, self.digest)
        k, n = self.n_accepted, self.n_proposed
        p = k / n if n else float("nan")
        se = math.sqrt(p * (1 - p) / n) if n else float("nan")
        return stats.Estimate(p, se, stats.wilson(k, n), n, k, self.seed, self.digest, name)


def collect(p: ModelParams, s: SamplerSpec, fns: dict, n_samples: int = DEFAULT_SAMPLES,
            clamp: Clamp = NO_CLAMP, condition=None, exact: bool = False,
            floor: float = 1e-5, boundary=None, cutoff: int = ENUMERATION_CUTOFF,
            tag: str = "") -> Sampled:
    """Evaluate ``fns[name](spins_block, window)`` on samples of the proxy measure.

    With ``condition`` the samples are drawn by rejection; with ``exact`` the
    conditional expectations are computed by enumeration instead.
    """
    w = s.window(p.lattice)
    cond = None if condition is None else as_event(condition)
    digest = s.digest(p, tag=tag, n_samples=n_samples, exact=exact,
                      clamp=[sorted(clamp.sites), clamp.value],
                      condition=None if cond is None else _text(cond),
                      boundary=None if boundary is None else repr(boundary))
    if exact:
        g = ClampedGibbs(w, p, boundary, {x: clamp.value for x in clamp.sites}, cutoff)
        num = dict.fromkeys(fns, 0.0)
        den = tot = 0.0
        for b, pr in g.chunks():
            tot += pr.sum()
            if cond is not None:
                m = np.asarray(cond.evaluate(b, w), dtype=bool)
                b, pr = b[m], pr[m]
            if not len(pr):
                continue
            den += pr.sum()
            for k, f in fns.items():
                num[k] += float((pr * np.asarray(f(b, w), dtype=np.float64)).sum())
        if den == 0:
            raise ZeroDivisionError("conditioning event has probability zero")
        return Sampled({k: v / den for k, v in num.items()}, True, 0, 0, s.seed, digest,
                       den / tot)
    out = {k: [] for k in fns}
    if cond is None:
        blocks = stream_chunks(s, p, n_samples, clamp, boundary=boundary)
        stream = None
    else:
        stream = ConditionedStream(s, p, clamp, cond, n_samples, floor, boundary=boundary)
        blocks = iter(stream)
    for b in blocks:
        for k, f in fns.items():
            out[k].append(np.asarray(f(b, w)))
    vals = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in out.items()}
    if stream is None:
        return Sampled(vals, False, n_samples, n_samples, s.seed, digest)
    return Sampled(vals, False, stream.n_proposed, stream.n_accepted, s.seed, digest)


def _ev(event: Event):
    return lambda b, w: event.evaluate(b, w)


def reach_event(n: int, s: SamplerSpec, origin=None) -> Connect:
    """``A ↝ S^c(n)`` for ``A = origin`` (default ``{O}``).

    When ``S(n)`` is the whole window the plus boundary sits on ``∂S(n)``,
    so reaching the inner ring ``∂S(n-1)`` is the same event.
    """
    a = Box(0) if origin is None else origin
    if n + 1 <= s.radius:
        return Connect(a, Boundary(n))
    if n == s.radius and n >= 1:
        return Connect(a, Boundary(n - 1))
    raise ValueError("window interior smaller than n")


def _check_interior(r: int, s: SamplerSpec):
    if r > s.box_size:
        raise ValueError("window interior smaller than the event")


def _floor_check(est: stats.Estimate, floor: float):
    if est.n_samples and est.ci95[1] < floor:
        raise RareEventError("conditioning event too rare at this scale")


# --------------------------------------------------------------------------
# connection probabilities


def estimate_one_arm(R: int, n: int, p: ModelParams, s: SamplerSpec,
                     n_samples: int = DEFAULT_SAMPLES, exact: bool = False,
                     cutoff: int = ENUMERATION_CUTOFF,
                     clamp: Clamp = NO_CLAMP, floor: float = 1e-5) -> stats.Estimate:
    """``P(S(R) ↝ S^c(n))``; ``R = 0`` is the one-arm probability ``π(n)``."""
    if not 0 <= R < n:
        raise ValueError("need 0 <= R < n")
    _check_interior(n, s)
    ev = reach_event(n, s, Box(R))
    d = collect(p, s, {"hit": _ev(ev)}, n_samples, clamp, exact=exact, cutoff=cutoff,
                tag=f"one_arm:{R}:{n}")
    est = d.proportion("hit", f"one_arm[R={R},n={n}]")
    _floor_check(est, floor)
    return est


def one_arm_profile(ns, p: ModelParams, s: SamplerSpec, R: int = 0,
                    n_samples: int = DEFAULT_SAMPLES, exact: bool = False,
                    cutoff: int = ENUMERATION_CUTOFF, clamp: Clamp = NO_CLAMP) -> list:
    """``(n, P(S(R) ↝ S^c(n)))`` for several ``n`` from one sample stream."""
    ns = sorted(int(n) for n in ns)
    _check_interior(ns[-1], s)
    fns = {str(n): _ev(reach_event(n, s, Box(R))) for n in ns}
    d = collect(p, s, fns, n_samples, clamp, exact=exact, cutoff=cutoff,
                tag=f"one_arm_profile:{R}:{ns}")
    return [(n, d.proportion(str(n), f"one_arm[R={R},n={n}]")) for n in ns]


def one_arm_fit(ns, p: ModelParams, s: SamplerSpec,
                n_samples: int = DEFAULT_SAMPLES) -> stats.ScalingFit:
    return stats.fit_power_law(one_arm_profile(ns, p, s, 0, n_samples))


def crossing_rectangle(k: int, n: int, horizontal: bool = True) -> Rectangle:
    """A ``kn × n`` rectangle (``n × kn`` when vertical) centred on the origin."""
    if k < 1 or n < 1:
        raise ValueError("need k >= 1 and n >= 1")
    L = k * n
    x0, y0 = -(L // 2), -(n // 2)
    if horizontal:
        return Rectangle(x0, y0, x0 + L, y0 + n)
    return Rectangle(y0, x0, y0 + n, x0 + L)


def _rect_radius(r: Rectangle) -> int:
    return max(abs(r.x0), abs(r.x1), abs(r.y0), abs(r.y1))


def estimate_crossing(k: int, n: int, p: ModelParams, s: SamplerSpec,
                      direction: str = "horizontal", n_samples: int = DEFAULT_SAMPLES,
                      exact: bool = False, cutoff: int = ENUMERATION_CUTOFF,
                      clamp: Clamp = NO_CLAMP) -> stats.Estimate:
    """Probability of a plus crossing of a ``kn × n`` rectangle the long way."""
    horizontal = direction == "horizontal"
    if direction not in ("horizontal", "vertical"):
        raise ValueError("direction must be 'horizontal' or 'vertical'")
    rect = crossing_rectangle(k, n, horizontal)
    _check_interior(_rect_radius(rect), s)
    ev = Crossing(rect, horizontal)
    d = collect(p, s, {"hit": _ev(ev)}, n_samples, clamp, exact=exact, cutoff=cutoff,
                tag=f"crossing:{k}:{n}:{direction}")
    return d.proportion("hit", f"crossing[k={k},n={n}]")


def estimate_alpha(i, sched: AnnulusSchedule | None, p: ModelParams, s: SamplerSpec,
                   n_samples: int = DEFAULT_SAMPLES, exact: bool = False,
                   cutoff: int = ENUMERATION_CUTOFF, clamp: Clamp = NO_CLAMP) -> stats.Estimate:
    """Probability of a plus circuit in ``A(i)`` surrounding its hole.

    ``i`` may also be a :class:`CircuitQuery` (then ``sched`` is ignored).
    """
    q = _query(i, sched)
    _check_interior(q.outer, s)
    d = collect(p, s, {"hit": _ev(circuit_event(q))}, n_samples, clamp, exact=exact, cutoff=cutoff,
                tag=f"alpha:{q}")
    return d.proportion("hit", f"alpha[i={i}]")


def _circuit_clamp(C: Circuit, extra: Clamp = NO_CLAMP) -> Clamp:
    if extra.sites and extra.value != 1:
        raise ValueError("extra clamp must be plus")
    return Clamp(frozenset(C.sites) | extra.sites, 1)


def estimate_gamma(C: Circuit, n: int, p: ModelParams, s: SamplerSpec,
                   n_samples: int = DEFAULT_SAMPLES, exact: bool = False,
                   cutoff: int = ENUMERATION_CUTOFF,
                   clamp: Clamp = NO_CLAMP) -> stats.Estimate:
    """``γ(C, n) = P(C ↝ S^c(n) | C plus)``, with the circuit clamped to +1."""
    if C.radius() >= n:
        raise ValueError("n must exceed the circuit radius")
    _check_interior(n, s)
    ev = reach_event(n, s, Explicit(C.sites))
    d = collect(p, s, {"hit": _ev(ev)}, n_samples, _circuit_clamp(C, clamp), exact=exact,
                cutoff=cutoff,
                tag=f"gamma:{C.canonical()}:{n}")
    return d.proportion("hit", f"gamma[n={n}]")


# --------------------------------------------------------------------------
# circuit kernels M(C, D, j) and the cross-ratio


def _query(j, sched: AnnulusSchedule | None) -> CircuitQuery:
    if isinstance(j, CircuitQuery):
        return j
    return CircuitQuery.from_schedule(sched or AnnulusSchedule(), int(j))


def _check_pair(C: Circuit, D: Circuit, q: CircuitQuery):
    if not all(q.in_hole(x) for x in C.sites):
        raise ValueError("clamped circuit must lie inside the hole of annulus j")
    if not all(q.contains(x) for x in D.sites):
        raise ValueError("circuit not in annulus")


def _m_indicator(C: Circuit, D: Circuit, q: CircuitQuery):
    conn = Connect(Explicit(C.sites), Explicit(D.sites))

    def f(b, w):
        return innermost_is(b, w, q, D) & np.asarray(conn.evaluate(b, w), dtype=bool)
    return f


def _m_sampled(C: Circuit, Ds, q: CircuitQuery, p, s, n_samples, exact, tag="M",
               cutoff: int = ENUMERATION_CUTOFF) -> Sampled:
    for D in Ds:
        _check_pair(C, D, q)
    _check_interior(q.outer, s)
    fns = {str(k): _m_indicator(C, D, q) for k, D in enumerate(Ds)}
    return collect(p, s, fns, n_samples, _circuit_clamp(C), exact=exact, cutoff=cutoff,
                   tag=f"{tag}:{C.canonical()}:{[D.canonical() for D in Ds]}:{q}")


def estimate_M(C: Circuit, D: Circuit, j, p: ModelParams, s: SamplerSpec,
               sched: AnnulusSchedule | None = None, n_samples: int = DEFAULT_SAMPLES,
               exact: bool = False, cutoff: int = ENUMERATION_CUTOFF) -> stats.Estimate:
    """``M(C, D, j) = P(D is the innermost circuit of annulus j, C ↝ D | C plus)``.

    ``j`` is an annulus index of ``sched`` or a :class:`CircuitQuery`.
    """
    q = _query(j, sched)
    return _m_sampled(C, [D], q, p, s, n_samples, exact, cutoff=cutoff).proportion("0", "M")


def _log_ratio_terms(x, y):
    mx, my = x.mean(), y.mean()
    return math.log(mx) - math.log(my), x / mx - y / my


def kappa_probe(D1: Circuit, D2: Circuit, E1: Circuit, E2: Circuit, j, p: ModelParams,
                s: SamplerSpec, sched: AnnulusSchedule | None = None,
                n_samples: int = DEFAULT_SAMPLES, exact: bool = False,
                cutoff: int = ENUMERATION_CUTOFF) -> stats.Estimate:
    """``M(D1,E1) M(D2,E2) / (M(D1,E2) M(D2,E1))`` with a delta-method interval
    on the log scale.

    Each ``D`` gets its own clamped stream and both ``E`` indicators are read
    from it, so equal arguments cancel exactly.
    """
    q = _query(j, sched)
    same_e = E1 == E2
    Es = [E1] if same_e else [E1, E2]
    k2 = "0" if same_e else "1"
    d1 = _m_sampled(D1, Es, q, p, s, n_samples, exact, "kappa", cutoff)
    d2 = d1 if D2 == D1 else _m_sampled(D2, Es, q, p, s.replace(seed=derive_seed(s.seed, 2)),
                                       n_samples, exact, "kappa", cutoff)
    digest = stats.digest([d1.digest, d2.digest])
    if exact:
        a, b = d1.values["0"], d1.values[k2]
        c, d = d2.values[k2], d2.values["0"]
        if b == 0 or d == 0:
            raise ValueError("cross-ratio undefined at this sample size")
        return stats.exact(a * c / (b * d), "kappa", digest)
    x1, y1 = d1.values["0"].astype(float), d1.values[k2].astype(float)
    x2, y2 = d2.values[k2].astype(float), d2.values["0"].astype(float)
    n = len(x1) + (0 if d2 is d1 else len(x2))
    hits = int(min(y1.sum(), y2.sum()))
    if y1.sum() == 0 or y2.sum() == 0:
        raise ValueError("cross-ratio undefined at this sample size")
    if x1.sum() == 0 or x2.sum() == 0:
        return stats.Estimate(0.0, float("inf"), (0.0, float("inf")), n, hits, s.seed, digest,
                              "kappa")
    L1, z1 = _log_ratio_terms(x1, y1)
    L2, z2 = _log_ratio_terms(x2, y2)
    if d2 is d1:
        var = stats.mean(z1 + z2).stderr ** 2
    else:
        var = stats.mean(z1).stderr ** 2 + stats.mean(z2).stderr ** 2
    L, se = L1 + L2, math.sqrt(var)
    v = math.exp(L)
    return stats.Estimate(v, v * se, (math.exp(L - stats.Z95 * se), math.exp(L + stats.Z95 * se)),
                          n, hits, s.seed, digest, "kappa")


# --------------------------------------------------------------------------
# gluing events


@dataclass(frozen=True)
class GluingRecord:
    """Probabilities of the three gluing events, their intersection, and the
    crossing-based floor ``δ3^8 δ14 / 2`` with the implied cross-ratio cap."""
    t: int
    g1: stats.Estimate
    g2: stats.Estimate
    g3: stats.Estimate
    g: stats.Estimate
    delta3: stats.Estimate
    delta14: stats.Estimate
    c3_bound: float
    kappa_hat: float

    @property
    def product(self) -> float:
        return self.g1.value * self.g2.value * self.g3.value

    def fkg_holds(self, k: float = 3.0) -> bool:
        return self.g.value >= self.product - k * self.g.stderr

    def to_dict(self) -> dict:
        d = {k: getattr(self, k).to_dict() for k in ("g1", "g2", "g3", "g", "delta3", "delta14")}
        d.update(t=self.t, c3_bound=self.c3_bound, kappa_hat=self.kappa_hat)
        return d


def kappa_cap(c3: float) -> float:
    """``max(3/2, 4/C3)``; infinite when the floor is zero."""
    return max(1.5, 4.0 / c3) if c3 > 0 else float("inf")


def gluing_events(t: int, s: SamplerSpec) -> dict:
    if t < 3 or t % 3:
        raise ValueError("t must be a positive multiple of 3")
    u, w = t // 3, 9 * t
    g1 = CircuitExists(u, t)
    g2 = CircuitExists(3 * t, w)
    g3 = reach_event(w, s, Boundary(u))
    return {"g1": g1, "g2": g2, "g3": g3, "g": g1 & g2 & g3,
            "delta3": Crossing(crossing_rectangle(3, u), True),
            "delta14": Crossing(crossing_rectangle(14, u), True)}


def gluing_probe(t: int, p: ModelParams, s: SamplerSpec, n_samples: int = DEFAULT_SAMPLES,
                 exact: bool = False, cutoff: int = ENUMERATION_CUTOFF,
                 clamp: Clamp = NO_CLAMP) -> GluingRecord:
    """All gluing quantities at ``u = t/3``, ``w = 9t`` from one sample stream."""
    _check_interior(9 * t, s)
    evs = gluing_events(t, s)
    d = collect(p, s, {k: _ev(e) for k, e in evs.items()}, n_samples, clamp, exact=exact,
                cutoff=cutoff,
                tag=f"gluing:{t}")
    e = {k: d.proportion(k, f"gluing[{k},t={t}]") for k in evs}
    c3 = e["delta3"].value ** 8 * e["delta14"].value / 2
    return GluingRecord(t, e["g1"], e["g2"], e["g3"], e["g"], e["delta3"], e["delta14"],
                        c3, kappa_cap(c3))


# --------------------------------------------------------------------------
# mixing


def mixing_battery(l: int) -> list:
    """Increasing events on ``S(l)``: a spin, a box crossing and a one-arm event."""
    if l < 1:
        raise ValueError("l must be at least 1")
    return [SpinIs(0, 0, 1), Crossing(Rectangle(-l, -l, l, l), True),
            Connect(Box(0), Boundary(l - 1))]


def mixing_window(l: int, d: int) -> SamplerSpec:
    """The window ``S(l+d-1)``, so the boundary ring sits at distance ``d`` from ``S(l)``."""
    return SamplerSpec(box_size=l + d - 1, margin=0)


def mixing_gap(l: int, d: int, p: ModelParams, s: SamplerSpec, n_samples: int = DEFAULT_SAMPLES,
               exact: bool = False, cutoff: int = ENUMERATION_CUTOFF) -> stats.Estimate:
    """``Δ(d) = max_A |P_+(A) − P_−(A)|`` over the battery.

    Monte Carlo uses a monotone coupling of the two extremal boundaries, so
    for increasing ``A`` the difference is the probability that the top copy
    is in ``A`` and the bottom copy is not.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    ws = mixing_window(l, d).replace(seed=s.seed, burn_in_sweeps=s.burn_in_sweeps,
                                     sweeps_between_samples=s.sweeps_between_samples)
    win = ws.window(p.lattice)
    battery = mixing_battery(l)
    digest = ws.digest(p, tag=f"mixing:{l}:{d}", n_samples=n_samples, exact=exact)
    if exact:
        top = ClampedGibbs(win, p, 1, None, cutoff)
        bottom = ClampedGibbs(win, p, -1, None, cutoff)
        gaps = [abs(top.prob(A) - bottom.prob(A)) for A in battery]
        return stats.exact(max(gaps), f"mixing[l={l},d={d}]", digest)
    pair = CoupledPair(win, p, 1, -1, seed=ws.seed, chain_index=d)
    pair.sweep(ws.burn_in_sweeps)
    tops = np.empty((n_samples, win.n), dtype=np.int8)
    bots = np.empty_like(tops)
    for k in range(n_samples):
        pair.sweep(ws.sweeps_between_samples)
        tops[k], bots[k] = pair.top, pair.bottom
    ests = []
    for A in battery:
        diff = A.evaluate(tops, win).astype(np.int8) - A.evaluate(bots, win).astype(np.int8)
        ests.append(stats.proportion(diff > 0, ws.seed, digest, f"mixing[l={l},d={d}]"))
    return max(ests, key=lambda e: e.value)


def estimate_mixing_decay(l: int, distances, p: ModelParams, s: SamplerSpec | None = None,
                          n_samples: int = DEFAULT_SAMPLES, exact: bool = False,
                          cutoff: int = ENUMERATION_CUTOFF) -> stats.ScalingFit:
    """Log-linear fit of ``Δ(d)``; ``decay_rate`` of the result is ``α̂``.

    Points whose gap is within two standard errors of zero are dropped.
    """
    ds = [int(d) for d in distances]
    if any(b <= a for a, b in zip(ds, ds[1:])):
        raise ValueError("distances must be increasing")
    s = s or SamplerSpec()
    pts = []
    for d in ds:
        e = mixing_gap(l, d, p, s, n_samples, exact, cutoff)
        resolved = e.value > 1e-14 if exact else e.value > 2 * e.stderr
        if resolved:
            pts.append((d, e))
    if len(pts) < 3:
        raise ValueError("mixing gap below statistical resolution: fewer than 3 usable points")
    return stats.fit_power_law(pts, log_x=False)


# --------------------------------------------------------------------------
# critical points


def _crossing_drift(p: ModelParams, s: SamplerSpec, n: int, n_samples: int, key: int):
    """``δ(2n) − δ(n)`` for square crossings."""
    out = []
    for m in (n, 2 * n):
        sm = s.replace(box_size=m, seed=derive_seed(s.seed, key, m))
        out.append(estimate_crossing(1, m, p, sm, n_samples=n_samples))
    return out[1].value - out[0].value


def find_hc(beta: float, p_template: ModelParams, s: SamplerSpec, bracket=(0.0, 1.0),
            n: int = 8, n_samples: int = 400, iters: int = 8) -> stats.Estimate:
    """Bisection in ``h`` on the sign of the size drift of square crossings.

    Above the critical field crossings grow with size and below they shrink;
    the returned interval is the final bracket.
    """
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise ValueError("bracket must satisfy lo < hi")
    base = p_template.with_beta(beta)
    if _crossing_drift(base.with_h(lo), s, n, n_samples, 0) > 0 or \
            _crossing_drift(base.with_h(hi), s, n, n_samples, 1) < 0:
        raise ValueError("initial interval does not bracket the critical field")
    for k in range(iters):
        mid = 0.5 * (lo + hi)
        if _crossing_drift(base.with_h(mid), s, n, n_samples, k + 2) > 0:
            hi = mid
        else:
            lo = mid
    mid = 0.5 * (lo + hi)
    return stats.Estimate(mid, (hi - lo) / 2, (lo, hi), n_samples, 0, s.seed,
                          s.digest(base, tag="find_hc", bracket=list(bracket), n=n, iters=iters),
                          f"h_c[beta={beta}]")


def independence_hc(beta: float, p_site: float) -> float:
    """Field whose single-site plus probability is ``p_site`` when spins are independent."""
    return math.atanh(2 * p_site - 1) / beta


def binder_cumulant(p: ModelParams, L: int, n_samples: int = 2000, seed: int = 0,
                    burn_in: int = 200) -> float:
    """``1 − <m⁴>/(3<m²>²)`` on ``S(L)`` with free boundary (cluster updates)."""
    ch = Chain(box_window(L, p.lattice), p, Scheme.CLUSTER_GHOST, boundary=0, seed=seed)
    m = ch.draw(n_samples, 1, burn_in).mean(axis=1, dtype=np.float64)
    m2, m4 = (m ** 2).mean(), (m ** 4).mean()
    return 1.0 - m4 / (3 * m2 * m2)


# wide enough to hold the crossing, narrow enough that the ordered side
# is not so saturated that the cumulant difference drowns in noise
_BETA_BRACKET = {LatticeKind.SQUARE: (0.3, 0.6), LatticeKind.TRIANGULAR: (0.15, 0.4)}


def estimate_beta_c(kind, sizes=(4, 8), bracket=None, n_samples: int = 4000, iters: int = 8,
                    seed: int = 0) -> stats.Estimate:
    """Bisection on the sign of the Binder cumulant difference at ``h = 0``.

    Below the critical point the cumulant falls with size and above it rises.
    """
    kind = as_kind(kind)
    lo, hi = bracket or _BETA_BRACKET[kind]
    L1, L2 = sizes

    def drift(beta, key):
        p = ModelParams(kind, beta, 0.0)
        return (binder_cumulant(p, L2, n_samples, derive_seed(seed, key, L2))
                - binder_cumulant(p, L1, n_samples, derive_seed(seed, key, L1)))

    if drift(lo, 0) > 0 or drift(hi, 1) < 0:
        raise ValueError("initial interval does not bracket the critical point")
    for k in range(iters):
        mid = 0.5 * (lo + hi)
        if drift(mid, k + 2) > 0:
            hi = mid
        else:
            lo = mid
    mid = 0.5 * (lo + hi)
    return stats.Estimate(mid, (hi - lo) / 2, (lo, hi), n_samples, 0, seed,
                          stats.digest(["beta_c", kind.value, list(sizes), n_samples, iters, seed]),
                          f"beta_c[{kind.value}]")


# --------------------------------------------------------------------------
# incipient-infinite-cluster routes


@dataclass(frozen=True)
class RouteResult:
    """A sequence of conditional estimates with a stabilisation diagnostic:
    the spread of the last three values against the combined 95% width of
    the two values that realise it."""
    points: tuple
    acceptance: tuple
    proxy_sensitivity: stats.Estimate | None = None

    def _tail(self):
        return [e for _, e in self.points[-3:]]

    @property
    def spread(self) -> float:
        v = [e.value for e in self._tail()]
        return max(v) - min(v)

    @property
    def combined_width(self) -> float:
        tail = self._tail()
        a = max(tail, key=lambda e: e.value)
        b = min(tail, key=lambda e: e.value)
        return 2 * stats.Z95 * math.hypot(a.stderr, b.stderr)

    @property
    def stable(self) -> bool:
        return self.spread <= self.combined_width

    @property
    def terminal(self) -> stats.Estimate:
        return self.points[-1][1]

    def to_dict(self) -> dict:
        return {"points": [[x, e.to_dict()] for x, e in self.points],
                "acceptance": [[x, e.to_dict()] for x, e in self.acceptance],
                "proxy_sensitivity": None if self.proxy_sensitivity is None
                else self.proxy_sensitivity.to_dict(),
                "spread": self.spread, "combined_width": self.combined_width,
                "stable": self.stable}


def _conditional(E: Event, n: int, p: ModelParams, s: SamplerSpec, n_samples: int,
                 exact: bool, floor: float, cutoff: int, name: str):
    d = collect(p, s, {"E": _ev(E)}, n_samples, condition=reach_event(n, s), exact=exact,
                floor=floor, cutoff=cutoff, tag=f"iic:{_text(E)}:{n}")
    return d.proportion("E", name), d.acceptance(f"acceptance[{name}]")


def iic_route_n(E, scales, p_at_hc: ModelParams, s: SamplerSpec,
                n_samples: int = DEFAULT_SAMPLES, exact: bool = False, floor: float = 1e-5,
                cutoff: int = ENUMERATION_CUTOFF) -> RouteResult:
    """``P(E | O ↝ S^c(n))`` for increasing ``n``, each on the box ``S(n)``
    with its own derived seed."""
    E = as_event(E)
    scales = [int(n) for n in scales]
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be increasing")
    if 2 * E.radius() > scales[0]:
        raise ValueError("event window must lie inside half the smallest scale")
    pts, acc = [], []
    for n in scales:
        sn = s.replace(box_size=n, seed=derive_seed(s.seed, n))
        e, a = _conditional(E, n, p_at_hc, sn, n_samples, exact, floor, cutoff, f"iic_n[n={n}]")
        pts.append((n, e))
        acc.append((n, a))
    return RouteResult(tuple(pts), tuple(acc))


def iic_route_h(E, fields, p: ModelParams, s: SamplerSpec, n_samples: int = DEFAULT_SAMPLES,
                exact: bool = False, floor: float = 1e-5, sensitivity: bool = True,
                cutoff: int = ENUMERATION_CUTOFF) -> RouteResult:
    """``P_h(E | O ↝ S^c(N))`` for fields decreasing toward the critical one,
    with ``N = s.box_size`` standing in for an infinite cluster.

    The proxy sensitivity is the terminal value at ``2N`` minus the one at ``N``.
    """
    E = as_event(E)
    fields = [float(h) for h in fields]
    if any(b >= a for a, b in zip(fields, fields[1:])):
        raise ValueError("fields must be strictly decreasing")
    N = s.box_size
    if 2 * E.radius() > N:
        raise ValueError("event window must lie inside half the proxy scale")
    pts, acc = [], []
    for k, h in enumerate(fields):
        sk = s.replace(seed=derive_seed(s.seed, k))
        e, a = _conditional(E, N, p.with_h(h), sk, n_samples, exact, floor, cutoff,
                            f"iic_h[h={h:.6g}]")
        pts.append((h, e))
        acc.append((h, a))
    sens = None
    if sensitivity:
        s2 = s.replace(box_size=2 * N, seed=derive_seed(s.seed, len(fields), 2))
        e2, _ = _conditional(E, 2 * N, p.with_h(fields[-1]), s2, n_samples, exact, floor,
                             cutoff, "iic_h[2N]")
        sens = stats.difference(e2, pts[-1][1]).named("proxy_sensitivity")
    return RouteResult(tuple(pts), tuple(acc), sens)


# --------------------------------------------------------------------------
# moments of the restricted cluster


@dataclass(frozen=True)
class MomentRecord:
    t_exp: int
    n: int
    N: int
    moment: stats.Estimate
    one_arm: stats.Estimate
    reference: float
    ratio: float

    def to_dict(self) -> dict:
        return {"t_exp": self.t_exp, "n": self.n, "N": self.N, "moment": self.moment.to_dict(),
                "one_arm": self.one_arm.to_dict(), "reference": self.reference,
                "ratio": self.ratio}


def _cluster_size(n: int):
    def f(b, w):
        return _kernels.cluster_size_batch(b, w.nbr, w.idx((0, 0)), w.mask(Box(n)))
    return f


def moment_grid(t_exps, ns, N: int, p_at_hc: ModelParams, s: SamplerSpec,
                n_samples: int = DEFAULT_SAMPLES, exact: bool = False, floor: float = 1e-5,
                cutoff: int = ENUMERATION_CUTOFF, clamp: Clamp = NO_CLAMP) -> list:
    """Moment records for every ``(t, n)``, sharing the conditioned samples on
    ``O ↝ S^c(N)`` and the unconditioned one-arm samples."""
    ns = sorted(int(n) for n in ns)
    t_exps = [int(t) for t in t_exps]
    if min(t_exps) < 1:
        raise ValueError("t_exp must be at least 1")
    if ns[-1] >= N:
        raise ValueError("need n < N")
    sN = s.replace(box_size=N) if s.box_size < N else s
    def power(f, t):
        return lambda b, w: f(b, w).astype(np.float64) ** t

    fns = {f"{t}:{n}": power(_cluster_size(n), t) for t in t_exps for n in ns}
    d = collect(p_at_hc, sN, fns, n_samples, clamp, condition=reach_event(N, sN), exact=exact,
                floor=floor, cutoff=cutoff, tag=f"moments:{t_exps}:{ns}:{N}")
    arms = dict(one_arm_profile(ns, p_at_hc, sN.replace(seed=derive_seed(sN.seed, 1)), 0,
                                n_samples, exact, cutoff, clamp))
    out = []
    for t in t_exps:
        for n in ns:
            m = d.mean(f"{t}:{n}", f"moment[t={t},n={n},N={N}]")
            ref = (n * n * arms[n].value) ** t
            ratio = m.value / ref if ref > 0 else float("inf")
            out.append(MomentRecord(t, n, N, m, arms[n], ref, ratio))
    return out


def estimate_moments(t_exp: int, n: int, N: int, p_at_hc: ModelParams, s: SamplerSpec,
                     n_samples: int = DEFAULT_SAMPLES, exact: bool = False, floor: float = 1e-5,
                     cutoff: int = ENUMERATION_CUTOFF, clamp: Clamp = NO_CLAMP) -> MomentRecord:
    """``E[#(C_0^+ ∩ S(n))^t | O ↝ S^c(N)]`` against ``(n² π(n))^t``."""
    return moment_grid([t_exp], [n], N, p_at_hc, s, n_samples, exact, floor, cutoff, clamp)[0]


def ratio_band(records) -> dict:
    """Per exponent, the ratio of the largest to the smallest moment ratio across ``n``."""
    out = {}
    for r in records:
        out.setdefault(r.t_exp, []).append(r.ratio)
    return {t: max(v) / min(v) for t, v in out.items()}


# --------------------------------------------------------------------------
# circuit decomposition


def markov_decomposition(E, C: Circuit, q: CircuitQuery, n: int, p: ModelParams,
                         s: SamplerSpec, cutoff: int = ENUMERATION_CUTOFF) -> tuple[float, float]:
    """Exact ``(P(E ∩ F(C) ∩ O ↝ S^c(n) | C plus),
    P(E ∩ F(C) ∩ O ↝ C | C plus) · γ(C, n))``.

    With the circuit pinned the inside and the outside are independent, so
    the two numbers agree up to rounding.
    """
    E = as_event(E)
    w = s.window(p.lattice)
    g = ClampedGibbs(w, p, None, {x: 1 for x in C.sites}, cutoff)
    reach = reach_event(n, s)
    to_c = Connect(Box(0), Explicit(C.sites))
    from_c = reach_event(n, s, Explicit(C.sites))

    def local(b):
        return E.evaluate(b, w) & innermost_is(b, w, q, C)

    lhs = g.expect(lambda b: (local(b) & reach.evaluate(b, w)).astype(float))
    inner = g.expect(lambda b: (local(b) & to_c.evaluate(b, w)).astype(float))
    gamma = g.prob(from_c)
    return lhs, inner * gamma


@dataclass(frozen=True)
class ResidualRecord:
    """Defect of the circuit decomposition against ``(1 − α) π(n)``."""
    defect: stats.Estimate
    alpha: stats.Estimate
    one_arm: stats.Estimate
    bound: float

    def holds(self, k: float = 3.0) -> bool:
        return abs(self.defect.value) <= self.bound + k * self.defect.stderr

    def to_dict(self) -> dict:
        return {"defect": self.defect.to_dict(), "alpha": self.alpha.to_dict(),
                "one_arm": self.one_arm.to_dict(), "bound": self.bound}


def _row_connects(row: np.ndarray, w, a: np.ndarray, b: np.ndarray) -> bool:
    allowed = np.ones(w.n, dtype=bool)
    return bool(_kernels.connects_batch(row[None, :], w.nbr, allowed, a, b)[0])


def residual_bounds_probe(i, n: int, E, p: ModelParams, s: SamplerSpec,
                          sched: AnnulusSchedule | None = None, n_samples: int = DEFAULT_SAMPLES,
                          exact: bool = False, refresh_sweeps: int = 5,
                          cutoff: int = ENUMERATION_CUTOFF,
                          clamp: Clamp = NO_CLAMP) -> ResidualRecord:
    """``P(E ∩ O ↝ S^c(n)) − Σ_C P(E ∩ F(C) ∩ O ↝ C) γ(C, n)``, path by path.

    Each sample names its innermost circuit ``C``.  The factor ``γ(C, n)`` is
    read from a copy whose sites outside ``C`` and its interior are refreshed
    by heat-bath sweeps, an independent draw from the law given ``C`` plus.
    """
    E = as_event(E)
    q = _query(i, sched)
    if (isinstance(q.inner, int) and E.radius() > q.inner) or not q.outer < n:
        raise ValueError("scales must be nested: event window < annulus < S(n)")
    _check_interior(n, s)
    w = s.window(p.lattice)
    reach = reach_event(n, s)
    o_mask = w.mask(Box(0))
    far = w.mask(reach.b)
    digest = s.digest(p, tag=f"residual:{q}:{n}:{_text(E)}", n_samples=n_samples, exact=exact,
                      refresh=refresh_sweeps)
    if exact:
        return _residual_exact(E, q, n, p, s, w, reach, o_mask, cutoff, clamp, digest)
    bfield = w.boundary_field(w.plus_boundary())
    clamp_mask = clamp.mask(w)
    rng = make_rng(derive_seed(s.seed, 3))
    xs, fs, rs = [], [], []
    for blk in stream_chunks(s, p, n_samples, clamp):
        ev = np.asarray(E.evaluate(blk, w), dtype=bool)
        rch = np.asarray(reach.evaluate(blk, w), dtype=bool)
        inner = innermost_batch(blk, w, q)
        for row, e, r, c in zip(blk, ev, rch, inner):
            term = 0.0
            if c is not None and e:
                c_mask = w.mask(Explicit(c.sites))
                if _row_connects(row, w, o_mask, c_mask):
                    closed = w.mask(Explicit(enclosed_sites(c)))
                    order = np.nonzero(~closed & ~clamp_mask)[0]
                    fresh = row.copy()
                    for _ in range(refresh_sweeps):
                        _kernels.heat_bath_sweep(fresh, w.nbr, bfield, order, p.beta, p.h,
                                                 rng.random(len(order)))
                    term = float(_row_connects(fresh, w, c_mask, far))
            xs.append(float(e and r) - term)
            fs.append(c is not None)
            rs.append(r)
    defect = stats.mean(xs, s.seed, digest, f"residual_defect[n={n}]")
    alpha = stats.proportion(fs, s.seed, digest, "alpha")
    arm = stats.proportion(rs, s.seed, digest, f"one_arm[R=0,n={n}]")
    return ResidualRecord(defect, alpha, arm, (1 - alpha.value) * arm.value)


def _residual_exact(E, q, n, p, s, w, reach, o_mask, cutoff, clamp, digest) -> ResidualRecord:
    g = ClampedGibbs(w, p, None, {x: clamp.value for x in clamp.sites}, cutoff)
    pa = pf = pr = 0.0
    per_c: dict = {}
    for blk, pw in g.chunks():
        ev = np.asarray(E.evaluate(blk, w), dtype=bool)
        rch = np.asarray(reach.evaluate(blk, w), dtype=bool)
        pa += pw[ev & rch].sum()
        pr += pw[rch].sum()
        inner = innermost_batch(blk, w, q)
        for k, c in enumerate(inner):
            if c is None:
                continue
            pf += pw[k]
            if ev[k] and _row_connects(blk[k], w, o_mask, w.mask(Explicit(c.sites))):
                per_c[c] = per_c.get(c, 0.0) + pw[k]
    total = 0.0
    for c, mass in per_c.items():
        pinned = {x: clamp.value for x in clamp.sites}
        pinned.update({x: 1 for x in c.sites})
        gam = ClampedGibbs(w, p, None, pinned, cutoff).prob(reach_event(n, s, Explicit(c.sites)))
        total += mass * gam
    return ResidualRecord(stats.exact(pa - total, f"residual_defect[n={n}]", digest),
                          stats.exact(pf, "alpha", digest),
                          stats.exact(pr, f"one_arm[R=0,n={n}]", digest),
                          (1 - pf) * pr)
