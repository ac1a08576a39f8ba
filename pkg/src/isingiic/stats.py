"""Point estimates, intervals and power-law fits."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps

Z95 = 1.959963984540054


def wilson(k: float, n: float, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        return (0.0, 1.0)
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k <= 0 else max(0.0, centre - half)
    hi = 1.0 if k >= n else min(1.0, centre + half)
    return (lo, hi)


def digest(obj) -> str:
    """Stable checksum of a JSON-serialisable description."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    ci95: tuple[float, float]
    n_samples: int
    n_hits: int = 0
    seed: int = 0
    spec_digest: str = ""
    name: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Estimate":
        d = dict(d)
        d["ci95"] = tuple(d["ci95"])
        return cls(**d)

    def named(self, name: str) -> "Estimate":
        return Estimate(self.value, self.stderr, self.ci95, self.n_samples, self.n_hits,
                        self.seed, self.spec_digest, name)

    @property
    def ci_width(self) -> float:
        return self.ci95[1] - self.ci95[0]

    def excludes_zero(self) -> bool:
        return self.ci95[0] > 0 or self.ci95[1] < 0


def _batch_se(x: np.ndarray, batches: int) -> float:
    n = len(x)
    b = min(batches, n // 2)
    if b < 2:
        return 0.0
    size = n // b
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(b))


def proportion(hits, seed: int = 0, spec_digest: str = "", name: str = "",
               batches: int = 20) -> Estimate:
    """Binomial estimate from a (possibly autocorrelated) 0/1 sequence.

    The standard error is the larger of the binomial and batch-means values;
    the Wilson interval uses the matching effective sample size.
    """
    x = np.asarray(hits, dtype=np.float64)
    n = len(x)
    if n == 0:
        return Estimate(float("nan"), float("nan"), (0.0, 1.0), 0, 0, seed, spec_digest, name)
    k = int(x.sum())
    p = k / n
    se_bin = math.sqrt(p * (1 - p) / n)
    se = max(se_bin, _batch_se(x, batches))
    n_eff = n if se_bin == 0 or se == se_bin else n * (se_bin / se) ** 2
    lo, hi = wilson(p * n_eff, n_eff)
    return Estimate(p, se, (lo, hi), n, k, seed, spec_digest, name)


def mean(values, seed: int = 0, spec_digest: str = "", name: str = "",
         batches: int = 20) -> Estimate:
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if n == 0:
        nan = float("nan")
        return Estimate(nan, nan, (nan, nan), 0, 0, seed, spec_digest, name)
    m = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    se = max(se, _batch_se(x, batches))
    return Estimate(m, se, (m - Z95 * se, m + Z95 * se), n, 0, seed, spec_digest, name)


def exact(value: float, name: str = "", spec_digest: str = "") -> Estimate:
    return Estimate(float(value), 0.0, (float(value), float(value)), 0, 0, 0, spec_digest, name)


def pooled(estimates) -> Estimate:
    """Precision-weighted mean of independent estimates of one quantity."""
    est = list(estimates)
    w = np.array([1 / e.stderr ** 2 for e in est])
    v = np.array([e.value for e in est])
    m = float((w * v).sum() / w.sum())
    se = float(1 / math.sqrt(w.sum()))
    return Estimate(m, se, (m - Z95 * se, m + Z95 * se), sum(e.n_samples for e in est),
                    sum(e.n_hits for e in est), est[0].seed, est[0].spec_digest, est[0].name)


def difference(a: Estimate, b: Estimate) -> Estimate:
    d = a.value - b.value
    se = math.hypot(a.stderr, b.stderr)
    return Estimate(d, se, (d - Z95 * se, d + Z95 * se), min(a.n_samples, b.n_samples))


def agree(a: Estimate, b: Estimate) -> bool:
    """Whether two independent estimates agree within their combined 95% CI."""
    return abs(a.value - b.value) <= Z95 * math.hypot(a.stderr, b.stderr)


def log_ratio(num: list[Estimate], den: list[Estimate], cov_log: float = 0.0) -> Estimate:
    """``Π num / Π den`` with delta-method error on the log scale.

    ``cov_log`` is the summed covariance correction between the log terms
    (zero when the factors come from independent samples).
    """
    terms = list(num) + list(den)
    if any(e.value <= 0 for e in terms):
        raise ValueError("cross-ratio undefined at this sample size")
    lv = sum(math.log(e.value) for e in num) - sum(math.log(e.value) for e in den)
    var = sum((e.stderr / e.value) ** 2 for e in terms) + cov_log
    se_log = math.sqrt(max(var, 0.0))
    val = math.exp(lv)
    return Estimate(val, val * se_log, (math.exp(lv - Z95 * se_log), math.exp(lv + Z95 * se_log)),
                    min(e.n_samples for e in terms))


@dataclass(frozen=True)
class ScalingFit:
    """Weighted least-squares fit of ``log value = a + exponent * log scale``
    (or ``* scale`` when ``log_x`` is false, for exponential decay)."""
    points: tuple
    exponent: float
    exponent_ci: tuple[float, float]
    exponent_se: float
    intercept: float
    fit_kind: str = "log-log least squares"

    def to_dict(self) -> dict:
        return {
            "points": [[n, e.to_dict()] for n, e in self.points],
            "exponent": self.exponent,
            "exponent_ci": list(self.exponent_ci),
            "exponent_se": self.exponent_se,
            "intercept": self.intercept,
            "fit_kind": self.fit_kind,
        }

    @property
    def decay_rate(self) -> float:
        """``-exponent``: the rate of an exponential (log-linear) decay."""
        return -self.exponent

    @property
    def decay_ci(self) -> tuple[float, float]:
        return (-self.exponent_ci[1], -self.exponent_ci[0])

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingFit":
        pts = tuple((n, Estimate.from_dict(e)) for n, e in d["points"])
        return cls(pts, d["exponent"], tuple(d["exponent_ci"]), d["exponent_se"],
                   d["intercept"], d["fit_kind"])


def fit_power_law(points, log_x: bool = True) -> ScalingFit:
    pts = tuple(sorted(((int(n) if float(n).is_integer() else float(n)), e) for n, e in points))
    if len(pts) < 3:
        raise ValueError("scaling fit needs at least 3 points")
    xs = [p[0] for p in pts]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError("scales must be strictly increasing")
    vals = np.array([e.value for _, e in pts])
    if np.any(vals <= 0):
        raise ValueError("power-law fit needs positive values")
    x = np.log(xs) if log_x else np.asarray(xs, dtype=float)
    y = np.log(vals)
    se = np.array([e.stderr / e.value if e.stderr > 0 else 0.0 for _, e in pts])
    if np.all(se > 0):
        w = 1 / se ** 2
    else:
        w = np.ones_like(y)
    X = np.stack([np.ones_like(x), x], axis=1)
    W = np.diag(w)
    cov = np.linalg.inv(X.T @ W @ X)
    beta = cov @ X.T @ W @ y
    resid = y - X @ beta
    dof = len(y) - 2
    if dof > 0:
        s2 = float(resid @ W @ resid) / dof
        # scale up when the scatter exceeds the quoted errors; with unit
        # weights this is the ordinary regression error
        scale = max(1.0, s2) if np.all(se > 0) else s2
        cov = cov * scale
        t = sps.t.ppf(0.975, dof)
    else:
        t = Z95
    slope_se = float(math.sqrt(max(cov[1, 1], 0.0)))
    slope = float(beta[1])
    kind = "log-log least squares" if log_x else "log-linear least squares"
    return ScalingFit(pts, slope, (slope - t * slope_se, slope + t * slope_se), slope_se,
                      float(beta[0]), kind)
