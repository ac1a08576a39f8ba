"""Experiment driver: ``run``, ``report``, ``validate`` and ``oracle``.

A config is a YAML tree with ``model``, ``sampler``, ``experiment``,
``output_dir`` and ``master_seed``.  Each run appends one JSON line to
``<output_dir>/records.jsonl`` and writes ``<output_dir>/<digest>.json``
holding the estimates alone, which is byte-identical across reruns.

Exit codes: 0 success, 2 invalid config or empty results, 3 rare-event abort.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__, experiments as ex, stats
from .circuits import CircuitQuery
from .events import EventError, parse_event
from .lattice import AnnulusSchedule, Circuit, Explicit
from .model import ENUMERATION_CUTOFF, ModelParams
from .sampler import RareEventError, SamplerSpec, Scheme

OUTPUT_ENV = "ISINGIIC_OUTPUT_DIR"
CSV_COLUMNS = ("name", "value", "stderr", "ci_lo", "ci_hi", "n_samples", "n_hits", "seed", "digest")

EXIT_OK, EXIT_INVALID, EXIT_RARE = 0, 2, 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration

# required and optional parameters of each experiment kind
KINDS = {
    "event": ({"event"}, {}),
    "one_arm": ({"R", "n"}, {}),
    "one_arm_fit": ({"ns"}, {}),
    "crossing": ({"k", "n"}, {"direction": "horizontal"}),
    "alpha": ({"i"}, {"scales": [1, 2, 3, 4, 5]}),
    "gamma": ({"circuit", "n"}, {}),
    "M": ({"C", "D", "j"}, {"scales": [1, 2, 3, 4, 5]}),
    "kappa": ({"D1", "D2", "E1", "E2", "j"}, {"scales": [1, 2, 3, 4, 5]}),
    "gluing": ({"t"}, {}),
    "mixing": ({"l", "distances"}, {}),
    "find_hc": ({"beta"}, {"lo": 0.0, "hi": 1.0, "n": 8, "iters": 8}),
    "iic_n": ({"event", "scales"}, {}),
    "iic_h": ({"event", "fields"}, {}),
    "moments": ({"t_exp", "n", "N"}, {}),
    "residual": ({"i", "n", "event"}, {"scales": [1, 2, 3, 4, 5]}),
}
COMMON = {"n_samples": ex.DEFAULT_SAMPLES, "exact": False, "cutoff": ENUMERATION_CUTOFF,
          "floor": 1e-5, "sequence_condition": None}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams = field(default_factory=ModelParams)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    experiment: dict = field(default_factory=lambda: {"kind": "event", "event": "true"})
    output_dir: str = ""
    master_seed: int = 0

    def to_dict(self) -> dict:
        return {
            "model": {"lattice": self.model.lattice.value, "beta": self.model.beta,
                      "h": self.model.h},
            "sampler": self.sampler.to_dict(),
            "experiment": _plain(self.experiment),
            "output_dir": self.output_dir,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(d) - {"model", "sampler", "experiment", "output_dir", "master_seed"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            model = ModelParams(**(d.get("model") or {}))
            sampler = SamplerSpec(**(d.get("sampler") or {}))
            seed = int(d.get("master_seed", 0))
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        exp = _plain(d.get("experiment") or {"kind": "event", "event": "true"})
        return cls(model, sampler, exp, str(d.get("output_dir") or ""), seed)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"unparseable config: {e}") from None
        return cls.from_dict(d)

    @property
    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return stats.digest(d)

    def seeded_sampler(self) -> SamplerSpec:
        """The sampler with its seed taken from ``master_seed``."""
        return self.sampler.replace(seed=self.master_seed)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV, "results"))


def _plain(obj):
    """Lists instead of tuples, so configs compare equal after a round trip."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return ExperimentConfig.from_yaml(text)


def experiment_params(cfg: ExperimentConfig) -> dict:
    e = dict(cfg.experiment)
    kind = e.pop("kind", None)
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    req, opt = KINDS[kind]
    missing = req - set(e)
    if missing:
        raise ConfigError(f"experiment {kind} missing {sorted(missing)}")
    extra = set(e) - req - set(opt) - set(COMMON)
    if extra:
        raise ConfigError(f"experiment {kind} has unknown keys {sorted(extra)}")
    return {"kind": kind, **COMMON, **opt, **e}


def _circuit(pts, kind) -> Circuit:
    try:
        return Circuit([tuple(map(int, q)) for q in pts], kind)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad circuit: {e}") from None


def _query(params, key) -> CircuitQuery:
    """An annulus index of the schedule, or an explicit ``{hole, outer}``."""
    j = params[key]
    if isinstance(j, dict):
        inner = j["hole"]
        inner = Explicit([tuple(q) for q in inner]) if isinstance(inner, list) else int(inner)
        return CircuitQuery(inner, int(j["outer"]))
    return CircuitQuery.from_schedule(AnnulusSchedule(tuple(params["scales"])), int(j))


def _event(text):
    try:
        return parse_event(str(text))
    except EventError as e:
        raise ConfigError(str(e)) from None


def validate(cfg: ExperimentConfig) -> list[str]:
    """Raise :class:`ConfigError` on an invalid config; return warnings."""
    prm = experiment_params(cfg)
    kind, s, m = prm["kind"], cfg.sampler, cfg.model
    notes = []
    if s.scheme is Scheme.CLUSTER_GHOST and m.h < 0 and kind not in ("iic_h",):
        raise ConfigError("ghost construction requires h ≥ 0")
    if int(prm["n_samples"]) < 1:
        raise ConfigError("n_samples must be positive")

    def fits(r, what="event"):
        if r > s.box_size:
            raise ConfigError(f"{what} radius {r} exceeds box_size {s.box_size}")

    def increasing(xs, what):
        if len(xs) < 1 or any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError(f"{what} must be strictly increasing")

    try:
        if kind == "event":
            fits(_event(prm["event"]).radius())
        elif kind == "one_arm":
            if not 0 <= prm["R"] < prm["n"]:
                raise ConfigError("need 0 <= R < n")
            fits(prm["n"])
        elif kind == "one_arm_fit":
            increasing(prm["ns"], "ns")
            if len(prm["ns"]) < 3:
                raise ConfigError("scaling fit needs at least 3 scales")
            fits(prm["ns"][-1])
        elif kind == "crossing":
            fits(ex._rect_radius(ex.crossing_rectangle(prm["k"], prm["n"])))
        elif kind in ("alpha", "M", "kappa", "residual"):
            increasing(prm["scales"], "scales")
            key = {"alpha": "i", "M": "j", "kappa": "j", "residual": "i"}[kind]
            q = _query(prm, key)
            fits(q.outer, "annulus")
            if kind == "M":
                ex._check_pair(_circuit(prm["C"], m.lattice), _circuit(prm["D"], m.lattice), q)
            if kind == "kappa":
                for d in ("D1", "D2"):
                    for e in ("E1", "E2"):
                        ex._check_pair(_circuit(prm[d], m.lattice), _circuit(prm[e], m.lattice), q)
            if kind == "residual":
                if not q.outer < prm["n"]:
                    raise ConfigError("scales must be nested: annulus < S(n)")
                if isinstance(q.inner, int) and _event(prm["event"]).radius() > q.inner:
                    raise ConfigError("scales must be nested: event window < annulus")
                fits(prm["n"])
        elif kind == "gamma":
            c = _circuit(prm["circuit"], m.lattice)
            if c.radius() >= prm["n"]:
                raise ConfigError("n must exceed the circuit radius")
            fits(prm["n"])
        elif kind == "gluing":
            if prm["t"] < 3 or prm["t"] % 3:
                raise ConfigError("t must be a positive multiple of 3")
            fits(9 * prm["t"])
        elif kind == "mixing":
            increasing(prm["distances"], "distances")
        elif kind == "find_hc":
            if not prm["lo"] < prm["hi"]:
                raise ConfigError("bracket must satisfy lo < hi")
        elif kind == "iic_n":
            increasing(prm["scales"], "scales")
            if 2 * _event(prm["event"]).radius() > prm["scales"][0]:
                raise ConfigError("event window must lie inside half the smallest scale")
        elif kind == "iic_h":
            fs = prm["fields"]
            if any(b >= a for a, b in zip(fs, fs[1:])):
                raise ConfigError("fields must be strictly decreasing")
            if s.scheme is Scheme.CLUSTER_GHOST and min(fs) < 0:
                raise ConfigError("ghost construction requires h ≥ 0")
            if 2 * _event(prm["event"]).radius() > s.box_size:
                raise ConfigError("event window must lie inside half the proxy scale")
        elif kind == "moments":
            if prm["t_exp"] < 1:
                raise ConfigError("t_exp must be at least 1")
            if not prm["n"] < prm["N"]:
                raise ConfigError("need n < N")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    cond = prm.get("sequence_condition")
    if cond:
        notes += sequence_condition_warnings(**cond)
    return notes


def sequence_condition(C: float, C1: float, alpha: float, t: float, min_plus: float):
    """``(lhs, rhs)`` of ``(C/C1)(2t)^4 e^{-2αt} < min_D P(D plus) / 2``."""
    lhs = C / C1 * (2 * t) ** 4 * math.exp(-2 * alpha * t)
    return lhs, 0.5 * min_plus


def sequence_condition_warnings(C, C1, alpha, t, min_plus) -> list[str]:
    lhs, rhs = sequence_condition(C, C1, alpha, t, min_plus)
    if lhs < rhs:
        return []
    msg = f"sequence condition fails at t={t}: {lhs:.3g} >= {rhs:.3g}"
    warnings.warn(msg)
    return [msg]


# --------------------------------------------------------------------------
# running


def execute(cfg: ExperimentConfig, force_exact: bool = False) -> dict:
    """Run the configured experiment and return its results payload."""
    prm = experiment_params(cfg)
    kind = prm["kind"]
    p, s = cfg.model, cfg.seeded_sampler()
    n, exact, cutoff = int(prm["n_samples"]), bool(prm["exact"] or force_exact), int(prm["cutoff"])
    kw = dict(n_samples=n, exact=exact, cutoff=cutoff)
    fits, extra = [], {}
    if kind == "event":
        ev = _event(prm["event"])
        d = ex.collect(p, s, {"hit": ex._ev(ev)}, n, exact=exact, cutoff=cutoff,
                       tag=f"event:{prm['event']}")
        est = [d.proportion("hit", f"P[{prm['event']}]")]
    elif kind == "one_arm":
        est = [ex.estimate_one_arm(prm["R"], prm["n"], p, s, floor=prm["floor"], **kw)]
    elif kind == "one_arm_fit":
        pts = ex.one_arm_profile(prm["ns"], p, s, 0, **kw)
        est = [e for _, e in pts]
        fits.append(stats.fit_power_law(pts))
    elif kind == "crossing":
        est = [ex.estimate_crossing(prm["k"], prm["n"], p, s, prm["direction"], **kw)]
    elif kind == "alpha":
        est = [ex.estimate_alpha(_query(prm, "i"), None, p, s, **kw)]
    elif kind == "gamma":
        est = [ex.estimate_gamma(_circuit(prm["circuit"], p.lattice), prm["n"], p, s, **kw)]
    elif kind == "M":
        est = [ex.estimate_M(_circuit(prm["C"], p.lattice), _circuit(prm["D"], p.lattice),
                             _query(prm, "j"), p, s, **kw)]
    elif kind == "kappa":
        c = {k: _circuit(prm[k], p.lattice) for k in ("D1", "D2", "E1", "E2")}
        est = [ex.kappa_probe(c["D1"], c["D2"], c["E1"], c["E2"], _query(prm, "j"), p, s, **kw)]
    elif kind == "gluing":
        g = ex.gluing_probe(prm["t"], p, s, **kw)
        est = [g.g1, g.g2, g.g3, g.g, g.delta3, g.delta14]
        extra = {"c3_bound": g.c3_bound, "kappa_hat": g.kappa_hat, "fkg_holds": g.fkg_holds()}
    elif kind == "mixing":
        f = ex.estimate_mixing_decay(prm["l"], prm["distances"], p, s, **kw)
        est = [e for _, e in f.points]
        fits.append(f)
        extra = {"decay_rate": f.decay_rate, "decay_ci": list(f.decay_ci)}
    elif kind == "find_hc":
        est = [ex.find_hc(prm["beta"], p, s, (prm["lo"], prm["hi"]), prm["n"], n, prm["iters"])]
    elif kind in ("iic_n", "iic_h"):
        ev = _event(prm["event"])
        if kind == "iic_n":
            r = ex.iic_route_n(ev, prm["scales"], p, s, floor=prm["floor"], **kw)
        else:
            r = ex.iic_route_h(ev, prm["fields"], p, s, floor=prm["floor"], **kw)
        est = [e for _, e in r.points] + [e for _, e in r.acceptance]
        if r.proxy_sensitivity is not None:
            est.append(r.proxy_sensitivity)
        extra = {"spread": r.spread, "combined_width": r.combined_width, "stable": r.stable}
    elif kind == "moments":
        m = ex.estimate_moments(prm["t_exp"], prm["n"], prm["N"], p, s, floor=prm["floor"], **kw)
        est = [m.moment, m.one_arm]
        extra = {"reference": m.reference, "ratio": m.ratio}
    elif kind == "residual":
        r = ex.residual_bounds_probe(_query(prm, "i"), prm["n"], _event(prm["event"]), p, s, **kw)
        est = [r.defect, r.alpha, r.one_arm]
        extra = {"bound": r.bound, "holds": r.holds()}
    return {"kind": kind, "config_digest": cfg.digest, "exact": exact,
            "estimates": [e.to_dict() for e in est],
            "fits": [f.to_dict() for f in fits], "extra": extra}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def chain_seeds(master_seed: int, n_chains: int = 1) -> list[int]:
    """First state word of each chain's seed sequence."""
    return [int(np.random.SeedSequence(master_seed, spawn_key=(j,)).generate_state(1)[0])
            for j in range(n_chains)]


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


class RecordWriter:
    """Single writer for a results directory; records are only ever appended."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.path = self.out / "records.jsonl"

    def append(self, record: dict):
        with open(self.path, "a") as f:
            f.write(_dumps(record) + "\n")

    def payload(self, digest: str, payload: dict) -> Path:
        p = self.out / f"{digest}.json"
        p.write_text(_dumps(payload) + "\n")
        return p


def run(config_path, force_exact: bool = False) -> int:
    try:
        cfg = load_config(config_path)
        notes = validate(cfg)
    except ConfigError as e:
        _fail_record(config_path, "invalid", str(e))
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID
    writer = RecordWriter(cfg.resolved_output_dir())
    start = _now()
    record = {"config_digest": cfg.digest, "config": cfg.to_dict(), "start": start,
              "master_seed": cfg.master_seed, "chain_seeds": chain_seeds(cfg.master_seed),
              "version": __version__, "mode": "oracle" if force_exact else "run",
              "warnings": notes}
    try:
        payload = execute(cfg, force_exact)
    except RareEventError as e:
        writer.append({**record, "end": _now(), "status": "rare_event", "error": str(e)})
        print(f"aborted: {e}", file=sys.stderr)
        return EXIT_RARE
    except (ConfigError, ValueError) as e:
        writer.append({**record, "end": _now(), "status": "invalid", "error": str(e)})
        print(f"invalid experiment: {e}", file=sys.stderr)
        return EXIT_INVALID
    name = cfg.digest + ("-oracle" if force_exact else "")
    writer.payload(name, payload)
    writer.append({**record, "end": _now(), "status": "ok", "results": payload})
    print(f"{name}: {len(payload['estimates'])} estimates")
    return EXIT_OK


def _fail_record(config_path, status, msg):
    out = Path(os.environ.get(OUTPUT_ENV, "results"))
    try:
        cfg_text = Path(config_path).read_text()
        d = yaml.safe_load(cfg_text)
        if isinstance(d, dict) and d.get("output_dir"):
            out = Path(d["output_dir"])
    except Exception:
        pass
    try:
        RecordWriter(out).append({"config_path": str(config_path), "start": _now(),
                                  "end": _now(), "status": status, "error": msg})
    except OSError:
        pass


# --------------------------------------------------------------------------
# reporting


def read_records(results_dir) -> list[dict]:
    out = []
    for path in sorted(Path(results_dir).rglob("records.jsonl")):
        for line in path.read_text().splitlines():
            if line.strip():
                out.append(json.loads(line))
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def csv_row(e: stats.Estimate) -> list[str]:
    return [e.name, _fmt(float(e.value)), _fmt(float(e.stderr)), _fmt(float(e.ci95[0])),
            _fmt(float(e.ci95[1])), str(e.n_samples), str(e.n_hits), str(e.seed), e.spec_digest]


def pooled_rows(records) -> list[stats.Estimate]:
    """Precision-weighted pools of estimates that differ only in the master seed."""
    groups: dict = {}
    for r in records:
        cfg = dict(r["config"])
        cfg.pop("master_seed", None)
        cfg.pop("output_dir", None)
        cfg["sampler"] = {k: v for k, v in cfg["sampler"].items() if k != "seed"}
        key = stats.digest(cfg)
        for e in r["results"]["estimates"]:
            groups.setdefault((key, e["name"]), {})[r["master_seed"]] = stats.Estimate.from_dict(e)
    out = []
    for (key, name), by_seed in sorted(groups.items()):
        ests = [by_seed[k] for k in sorted(by_seed)]
        if len(ests) > 1 and all(e.stderr > 0 for e in ests):
            pe = stats.pooled(ests)
            out.append(stats.Estimate(pe.value, pe.stderr, pe.ci95, pe.n_samples, pe.n_hits,
                                      0, key, f"pooled:{name}"))
    return out


def plot_fit(fit: stats.ScalingFit, path: Path, title: str = ""):
    import matplotlib
    matplotlib.use("svg")
    from matplotlib import pyplot as plt
    xs = np.array([n for n, _ in fit.points], dtype=float)
    ys = np.array([e.value for _, e in fit.points])
    err = np.array([e.stderr for _, e in fit.points])
    log_x = fit.fit_kind.startswith("log-log")
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(xs, ys, yerr=err, fmt="o", capsize=3)
    grid = np.linspace(xs.min(), xs.max(), 100)
    line = np.exp(fit.intercept + fit.exponent * (np.log(grid) if log_x else grid))
    lo, hi = fit.exponent_ci
    ax.plot(grid, line, "-", label=f"slope {fit.exponent:.4f} [{lo:.4f}, {hi:.4f}]")
    if log_x:
        ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("scale")
    ax.set_ylabel("estimate")
    ax.set_title(title or fit.fit_kind)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def report(results_dir) -> int:
    d = Path(results_dir)
    records = [r for r in read_records(d) if r.get("status") == "ok"] if d.is_dir() else []
    if not records:
        print(f"no completed runs in {results_dir}", file=sys.stderr)
        return EXIT_INVALID
    rows = []
    n_plots = 0
    for r in records:
        res = r["results"]
        for e in res["estimates"]:
            rows.append(stats.Estimate.from_dict(e))
        for k, f in enumerate(res["fits"]):
            fit = stats.ScalingFit.from_dict(f)
            plot_fit(fit, d / f"fit-{r['config_digest']}-{k}.svg",
                     f"{res['kind']} ({fit.fit_kind})")
            n_plots += 1
    rows += pooled_rows(records)
    with open(d / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for e in rows:
            w.writerow(csv_row(e))
    print(f"{len(rows)} rows, {n_plots} plots")
    return EXIT_OK


def validate_cmd(config_path) -> int:
    try:
        notes = validate(load_config(config_path))
    except ConfigError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID
    for n in notes:
        print(f"warning: {n}")
    print("ok")
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="isingiic", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, help_ in (("run", "run an experiment config"),
                        ("oracle", "run a config on the exact-enumeration path"),
                        ("validate", "check a config without running it")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
    sp = sub.add_parser("report", help="summarise a results directory")
    sp.add_argument("results_dir")
    a = ap.parse_args(argv)
    if a.cmd == "run":
        return run(a.config)
    if a.cmd == "oracle":
        return run(a.config, force_exact=True)
    if a.cmd == "validate":
        return validate_cmd(a.config)
    return report(a.results_dir)


if __name__ == "__main__":
    sys.exit(main())
