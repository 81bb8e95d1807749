"""Seeded Monte Carlo experiments, bound comparisons and result files.

An experiment is described by a JSON config. Replications are split into
chunks of ``batch`` records; chunk j draws from RngStream(seed, j), so
results do not depend on how many workers ran them or in which order.
"""

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    BudgetExhaustedError,
    ConfigurationError,
    CostSpec,
    RejectedInputError,
    RngStream,
    empirical_bound,
    small_delta,
    talagrand_bound,
)
from .dist1d import Empirical, Gaussian, norm_ppf
from .ot1d import ot_cost_1d
from .reductions import (
    apply_reduction,
    cube_gauss_reduction,
    cube_halfspace,
    gaussian_inner,
    outside_ball_inner,
    sphere_gauss_reduction,
    sphere_set_transport_cost_bound,
)
from .seqsampler import HalfSpace, oracle_from_json
from .transporter import transporter_from_config

COLUMNS = [
    "experiment",
    "n",
    "k",
    "p",
    "epsilon",
    "replications",
    "seed",
    "mean_cost",
    "stderr",
    "ci_lo",
    "ci_hi",
    "bound_delta",
    "bound_small_delta",
    "membership_queries_mean",
    "sampler_calls_mean",
    "wallclock_ms",
]

KINDS = ("transport_cost", "set_transport", "concentration", "empirical_scaling", "oracle_suite", "reduction")


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    replications: int = 100
    name: str = ""
    transporter: dict = None
    fixture: object = None
    params: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    confidence: float = 0.99
    batch: int = 100
    record_wallclock: bool = False
    out: str = None

    def __post_init__(self):
        if self.experiment not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.experiment!r}")
        if self.seed is None:
            raise ConfigurationError("an explicit seed is required")
        self.seed = int(self.seed)
        if self.experiment != "oracle_suite" and int(self.replications) < 2:
            raise ConfigurationError("replications must be at least 2")
        self.replications = int(self.replications)
        if not 0 < self.confidence < 1:
            raise ConfigurationError("confidence must lie in (0, 1)")
        if int(self.batch) < 1:
            raise ConfigurationError("batch must be positive")
        self.batch = int(self.batch)
        if self.experiment == "transport_cost" and self.transporter is None:
            raise ConfigurationError("transport_cost needs a transporter config")
        if self.experiment == "oracle_suite" and self.fixture is None:
            raise ConfigurationError("oracle_suite needs a fixture")
        self.name = self.name or self.experiment

    def to_json(self):
        out = {
            "experiment": self.experiment,
            "name": self.name,
            "seed": self.seed,
            "replications": self.replications,
            "confidence": self.confidence,
            "batch": self.batch,
            "params": self.params,
            "bounds": self.bounds,
            "record_wallclock": self.record_wallclock,
        }
        if self.transporter is not None:
            out["transporter"] = self.transporter
        if self.fixture is not None:
            out["fixture"] = self.fixture
        return out

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj.get("config"), dict):
            # a result file carries its config
            obj = obj["config"]
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None


def load_config(path, seed=None):
    obj = json.loads(Path(path).read_text())
    if seed is not None:
        obj = dict(obj.get("config", obj))
        obj["seed"] = seed
    return ExperimentConfig.from_json(obj)


@dataclass
class ExperimentResult:
    experiment: str
    n: int = None
    k: int = None
    p: float = None
    epsilon: float = None
    replications: int = None
    seed: int = None
    totals: list = None
    mean_cost: float = None
    stderr: float = None
    ci_lo: float = None
    ci_hi: float = None
    bound_delta: float = None
    bound_small_delta: float = None
    membership_queries_mean: float = None
    sampler_calls_mean: float = None
    wallclock_ms: float = None
    informational: bool = False
    partial: bool = False
    error: str = None
    extra: dict = field(default_factory=dict)
    children: list = field(default_factory=list)
    config: dict = None

    def row(self):
        return {c: getattr(self, c) for c in COLUMNS}

    def rows(self):
        return [c.row() for c in self.children] if self.children else [self.row()]

    def to_json(self):
        out = {c: getattr(self, c) for c in COLUMNS}
        out.update(
            totals=self.totals,
            informational=self.informational,
            partial=self.partial,
            error=self.error,
            extra=self.extra,
            children=[c.to_json() for c in self.children],
        )
        if self.config is not None:
            out["config"] = self.config
        return out


def summarize(totals, confidence):
    """Mean, standard error and normal-approximation interval."""
    totals = np.asarray(totals, dtype=float)
    mean = float(totals.mean())
    se = float(totals.std(ddof=1) / math.sqrt(totals.size)) if totals.size > 1 else float("nan")
    z = float(norm_ppf(0.5 + confidence / 2.0))
    return mean, se, mean - z * se, mean + z * se


# ---------------------------------------------------------------------------
# Work units (module level so worker processes can run them)


def _sample_inputs(t, m, rng):
    if t.direction == "forward":
        return np.column_stack([d.sample(rng, m) for d in t.source])
    y = np.empty((m, t.n))
    for i in range(t.n):
        y[:, i] = t.target.next_batch(y[:, :i], rng)
    return y


def _chunk_transport(spec, j, m):
    t = transporter_from_config(spec["transporter"])
    rng = RngStream(spec["seed"], j)
    X = _sample_inputs(t, m, rng)
    res = t.run_batch(X, rng)
    extra = {}
    if spec.get("set") is not None:
        S = oracle_from_json(spec["set"])
        extra["in_set"] = int(S.contains_many(res.outputs).sum())
    return {
        "totals": res.totals.tolist(),
        "distances": (res.totals ** (1.0 / t.cost.p)).tolist(),
        "membership": int(res.ledger.membership_queries),
        "calls": int(res.ledger.calls_per_round.sum()),
        **extra,
    }


def _chunk_empirical(spec, j, m):
    rng = RngStream(spec["seed"], (spec.get("offset", 0) << 32) + j)
    c = CostSpec.lp(spec["p"]).coordinate(0)
    mu = Gaussian()
    vals = []
    for r in range(m):
        X = mu.sample(rng, spec["k"])
        vals.append(ot_cost_1d(Empirical(X), mu, c))
    return {"totals": vals}


def _chunk_reduction(spec, j, m):
    rng = RngStream(spec["seed"], j)
    n, eps, k = spec["n"], spec["epsilon"], spec["k"]
    cost = CostSpec.lp(2.0)
    if spec["kind"] == "cube":
        red = cube_gauss_reduction(n)
        S = cube_halfspace(n, eps)
        inner = gaussian_inner(n, cost, k)
    else:
        red = sphere_gauss_reduction(n)
        S = HalfSpace.gaussian(n, eps)
        inner = outside_ball_inner(n, cost, k)
    X = red.sample_source(rng, m)
    Y, res = apply_reduction(red, inner, S, X, rng, eps)
    d2 = ((Y - X) ** 2).sum(axis=1)
    return {
        "totals": d2.tolist(),
        "distances": np.sqrt(d2).tolist(),
        "membership": int(res.ledger.membership_queries),
        "calls": int(res.ledger.calls_per_round.sum()),
        "in_set": int(S.contains_many(Y).sum()),
    }


_WORK = {"transport": _chunk_transport, "empirical": _chunk_empirical, "reduction": _chunk_reduction}


def _run_chunk(args):
    kind, spec, j, m = args
    try:
        return _WORK[kind](spec, j, m)
    except BudgetExhaustedError as exc:
        return {"error": str(exc), "trials": exc.trials}


def _fan_out(kind, spec, replications, batch, workers):
    jobs = []
    for j, start in enumerate(range(0, replications, batch)):
        jobs.append((kind, spec, j, min(batch, replications - start)))
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, jobs))
    else:
        chunks = [_run_chunk(job) for job in jobs]
    done = [c for c in chunks if "error" not in c]
    failed = [c for c in chunks if "error" in c]
    return done, failed


def _gather(chunks, key):
    out = []
    for c in chunks:
        out.extend(c.get(key, []))
    return out


# ---------------------------------------------------------------------------
# Experiments


def _fill_stats(result, chunks, failed, cfg):
    totals = _gather(chunks, "totals")
    result.totals = totals
    result.replications = len(totals)
    if len(totals) >= 2:
        result.mean_cost, result.stderr, result.ci_lo, result.ci_hi = summarize(totals, cfg.confidence)
    elif totals:
        result.mean_cost = float(totals[0])
    if chunks and "membership" in chunks[0] and totals:
        result.membership_queries_mean = sum(c["membership"] for c in chunks) / len(totals)
        result.sampler_calls_mean = sum(c["calls"] for c in chunks) / len(totals)
    if failed:
        result.partial = True
        result.error = failed[0]["error"]
        result.extra["failed_chunks"] = len(failed)


def _transport_cost(cfg, workers):
    t = transporter_from_config(cfg.transporter)
    spec = {"transporter": cfg.transporter, "seed": cfg.seed}
    if cfg.transporter.get("target", {}).get("kind") == "conditioned":
        spec["set"] = cfg.transporter["target"]["set"]
    chunks, failed = _fan_out("transport", spec, cfg.replications, cfg.batch, workers)
    res = ExperimentResult(cfg.name, n=t.n, k=t.k, p=t.cost.p, seed=cfg.seed)
    res.epsilon = cfg.transporter.get("epsilon_hint")
    _fill_stats(res, chunks, failed, cfg)
    if "delta" in cfg.bounds:
        res.bound_delta = float(cfg.bounds["delta"])
    if cfg.bounds.get("empirical"):
        scale = float(cfg.bounds.get("scale", 1.0))
        res.bound_small_delta = small_delta(t.cost.p, t.n, t.k, scale)
    if "in_set" in (chunks[0] if chunks else {}):
        res.extra["fraction_in_set"] = sum(c["in_set"] for c in chunks) / max(res.replications, 1)
    return res, chunks


def _gaussian_set_config(cfg):
    prm = cfg.params
    n, k, eps = int(prm["n"]), int(prm["k"]), float(prm["epsilon"])
    p = float(prm.get("p", 2.0))
    S = {"kind": "halfspace", "n": n, "epsilon": eps}
    if "normal" in prm:
        S["normal"] = prm["normal"]
    return {
        "n": n,
        "k": k,
        "p": p,
        "cost": CostSpec.lp(p).to_json(),
        "source_marginals": [Gaussian().to_json()] * n,
        "target": {"kind": "conditioned", "set": S, "epsilon_hint": eps},
        "shortcut": prm.get("shortcut", {}),
        "epsilon_hint": eps,
    }


def _set_transport(cfg, workers):
    tcfg = _gaussian_set_config(cfg)
    inner = ExperimentConfig(
        "transport_cost", cfg.seed, cfg.replications, cfg.name, tcfg, batch=cfg.batch, confidence=cfg.confidence
    )
    res, chunks = _transport_cost(inner, workers)
    n, k, p, eps = tcfg["n"], tcfg["k"], tcfg["p"], tcfg["epsilon_hint"]
    if 1 <= p <= 2:
        res.bound_delta = talagrand_bound(p, n, math.log(1.0 / eps))
    res.bound_small_delta = small_delta(p, n, k)
    res.extra["kn_over_eps"] = k * n / eps
    return res, chunks


def _concentration(cfg, workers):
    res, chunks = _set_transport(cfg, workers)
    delta = float(cfg.params.get("delta", 0.2))
    d = np.asarray(_gather(chunks, "distances"))
    n, p, eps = int(cfg.params["n"]), float(cfg.params.get("p", 2.0)), float(cfg.params["epsilon"])
    base = n ** (1.0 / p - 0.5) * math.sqrt(2.0 * math.log(1.0 / eps))
    gamma = res.bound_small_delta / base
    radius = (1.0 + gamma) * base / delta
    measured_radius = float(d.mean()) / delta if d.size else None
    res.extra.update(
        delta=delta,
        gamma=gamma,
        radius=radius,
        measured_radius=measured_radius,
        fraction_within_radius=float(np.mean(d <= radius)) if d.size else None,
        fraction_within_measured_radius=float(np.mean(d <= measured_radius)) if d.size else None,
    )
    return res, chunks


def _empirical_scaling(cfg, workers):
    p = float(cfg.params.get("p", 2.0))
    parent = ExperimentResult(cfg.name, n=1, p=p, seed=cfg.seed)
    for idx, k in enumerate(cfg.params["ks"]):
        # each k gets its own block of stream ids
        spec = {"seed": cfg.seed, "k": int(k), "p": p, "offset": idx}
        chunks, failed = _fan_out("empirical", spec, cfg.replications, cfg.batch, workers)
        child = ExperimentResult(cfg.name, n=1, k=int(k), p=p, seed=cfg.seed)
        _fill_stats(child, chunks, failed, cfg)
        child.bound_delta = 0.0
        child.bound_small_delta = empirical_bound(p, int(k)) ** (1.0 / p)
        child.extra["empirical_bound"] = empirical_bound(p, int(k))
        parent.children.append(child)
    ms = [c.mean_cost for c in parent.children]
    parent.extra["ratios"] = [b / a for a, b in zip(ms, ms[1:])]
    parent.replications = cfg.replications
    return parent, []


def _oracle_suite(cfg, workers):
    report = oracle_report(cfg.fixture)
    res = ExperimentResult(cfg.name, n=report["n"], seed=cfg.seed, replications=1)
    res.epsilon = report.get("epsilon")
    res.mean_cost = report["exact_ot"]
    res.stderr = 0.0
    res.ci_lo = res.ci_hi = report["exact_ot"]
    res.bound_delta = report.get("delta")
    res.informational = True
    res.extra.update(report)
    return res, []


def _reduction(cfg, workers):
    prm = cfg.params
    kind = prm.get("kind", "cube")
    if kind not in ("cube", "sphere"):
        raise ConfigurationError(f"unknown reduction {kind!r}")
    n, k, eps = int(prm["n"]), int(prm["k"]), float(prm["epsilon"])
    spec = {"seed": cfg.seed, "kind": kind, "n": n, "k": k, "epsilon": eps}
    chunks, failed = _fan_out("reduction", spec, cfg.replications, cfg.batch, workers)
    res = ExperimentResult(cfg.name, n=n, k=k, p=2.0, epsilon=eps, seed=cfg.seed)
    _fill_stats(res, chunks, failed, cfg)
    if kind == "cube":
        res.bound_delta = 2.0 * math.log(1.0 / eps)
        res.bound_small_delta = small_delta(2.0, n, k)
    else:
        res.bound_delta = sphere_set_transport_cost_bound(eps) ** 2
        res.informational = True
    if chunks:
        d = np.asarray(_gather(chunks, "distances"))
        res.extra["mean_l2"] = float(d.mean())
        res.extra["fraction_in_set"] = sum(c["in_set"] for c in chunks) / max(res.replications, 1)
    return res, chunks


_RUNNERS = {
    "transport_cost": _transport_cost,
    "set_transport": _set_transport,
    "concentration": _concentration,
    "empirical_scaling": _empirical_scaling,
    "oracle_suite": _oracle_suite,
    "reduction": _reduction,
}


def run(config, workers=1, out=None, fmt=None):
    """Run an experiment; writes the result file if ``out`` (or the config's
    ``out``) is set. Budget exhaustion yields a result flagged ``partial``."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_json(config)
    start = time.perf_counter()
    result, _ = _RUNNERS[cfg.experiment](cfg, workers)
    if cfg.record_wallclock:
        result.wallclock_ms = round((time.perf_counter() - start) * 1000.0, 3)
    result.config = cfg.to_json()
    out = out or cfg.out
    if out is not None:
        emit(result, out, fmt)
    return result


# ---------------------------------------------------------------------------
# Bounds and output


@dataclass
class Verdict:
    status: str
    lhs: float
    rhs: float
    slack: float
    details: list = field(default_factory=list)

    def __str__(self):
        return f"{self.status} lhs={self.lhs:.6g} rhs={self.rhs:.6g} slack={self.slack:.6g}"


def _verdict_one(r):
    if r.bound_delta is None or r.mean_cost is None or (r.bound_small_delta is None and not r.informational):
        raise RejectedInputError("result lacks bound fields")
    p = r.p or 1.0
    lhs = max(r.mean_cost, 0.0) ** (1.0 / p)
    se = r.stderr if r.stderr is not None and math.isfinite(r.stderr) else 0.0
    # delta method for the p-th root of the mean
    se_root = se / p * r.mean_cost ** (1.0 / p - 1.0) if r.mean_cost > 0 else se ** (1.0 / p)
    rhs = max(r.bound_delta, 0.0) ** (1.0 / p) + (r.bound_small_delta or 0.0) + 3.0 * se_root
    status = "PASS" if lhs <= rhs else "FAIL"
    if r.informational:
        status = "INFO"
    return Verdict(status, lhs, rhs, rhs - lhs)


def compare_bounds(result):
    """PASS when mean^(1/p) <= Delta^(1/p) + delta + 3 propagated standard
    errors; Delta is stored in cost units and delta in l_p units."""
    if result.children:
        parts = [_verdict_one(c) for c in result.children]
        status = "FAIL" if any(v.status == "FAIL" for v in parts) else "PASS"
        worst = min(parts, key=lambda v: v.slack)
        return Verdict(status, worst.lhs, worst.rhs, worst.slack, parts)
    return _verdict_one(result)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if not math.isfinite(v):
            return ""
        return repr(v)
    return str(v)


def to_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in result.rows():
        w.writerow([_cell(row[c]) for c in COLUMNS])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def to_json_text(result):
    return json.dumps(_clean(result.to_json()), indent=2, sort_keys=True) + "\n"


def emit(result, path, fmt=None):
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt not in ("csv", "json"):
        raise ConfigurationError(f"unknown format {fmt!r}")
    text = to_csv(result) if fmt == "csv" else to_json_text(result)
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# Oracle fixtures


def load_fixture(ref):
    """Fixture by name (``claim42``, ``claim42:n``, ``claim42:n:eps``,
    ``remark40``, ``remark41``) or JSON path."""
    from .oracle_exact import claim42_instance, fixture_from_json, remark40_instance, remark41_instance
    from .core import CostSpec as _Cost

    if isinstance(ref, dict):
        return fixture_from_json(ref), {}
    ref = str(ref)
    if ref.startswith("claim42"):
        parts = ref.split(":")
        n = int(parts[1]) if len(parts) > 1 else 3
        eps = float(parts[2]) if len(parts) > 2 else 2.0**-n
        mu, nu = claim42_instance(n, eps)
        return (mu, nu, _Cost.hamming()), {"epsilon": eps}
    if ref == "remark40":
        return remark40_instance(), {}
    if ref == "remark41":
        return remark41_instance(), {}
    path = Path(ref)
    if not path.exists():
        raise ConfigurationError(f"unknown fixture {ref!r}")
    return fixture_from_json(json.loads(path.read_text())), {}


def oracle_report(ref):
    from .oracle_exact import (
        delta_function,
        exact_ot,
        greedy_coupling,
        online_coupling_optimum,
        online_transport_optimum,
    )

    (mu, nu, cost), meta = load_fixture(ref)
    report = {"n": mu.n, **meta}
    report["exact_ot"] = exact_ot(mu, nu, cost)[0]
    report["greedy"] = greedy_coupling(mu, nu, cost)[0]
    if mu.is_product():
        report["delta"] = delta_function(mu, nu, cost)
    small = mu.n <= 3 and mu.size * nu.size <= 4096
    if small:
        report["online_coupling"] = online_coupling_optimum(mu, nu, cost)
        report["online_transport"] = online_transport_optimum(mu, nu, cost)
        report["online_transport_reverse"] = online_transport_optimum(nu, mu, cost.transposed())
    return report
