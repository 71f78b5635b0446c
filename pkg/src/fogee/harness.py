"""Monte-Carlo campaigns: paired drops, per-drop rows, aggregates and traces.

Every (user count, error variance, drop) triple owns one topology and one
frame sequence, and all requested algorithms run on that same realization.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from importlib import metadata
from multiprocessing import Pool
from pathlib import Path

import numpy as np
import yaml

from .alsolver import AlOptions, run_al
from .baselines import ref_ee, ref_sr
from .errors import ConfigError, InvariantViolation
from .heuristic import DropReport, associate_users, frame_metrics, merge_residuals, run_heuristic
from .netmodel import RngSeed, ScenarioConfig, generate_frames, generate_topology
from .power import PowerParams

log = logging.getLogger(__name__)

ALGORITHMS = ("al", "heuristic", "ref_ee", "ref_sr")
SCENARIOS = ("small", "large")

DROP_FIELDS = ["scenario", "users", "sigma_e2", "drop", "algorithm", "ee_mbit_per_j", "sum_rate_bps",
               "n_active", "feasible", "max_power_violation", "max_fronthaul_violation",
               "association_violations", "iterations", "flags", "error"]
SUMMARY_FIELDS = ["scenario", "users", "sigma_e2", "algorithm", "drops", "completed", "partial",
                  "mean_ee_mbit_per_j", "std_ee_mbit_per_j", "mean_sum_rate_bps", "mean_n_active",
                  "infeasible"]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "small"
    users: tuple = (5,)
    sigma_e2: tuple = (0.0,)
    algorithms: tuple = ("heuristic", "ref_ee")
    drops: int = 100
    frames: int = 10
    seed: int = 0
    power: dict = field(default_factory=dict)
    out: str = "results"
    workers: int = 1
    force: bool = False

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(int(u) for u in _as_list(self.users)))
        object.__setattr__(self, "sigma_e2", tuple(float(s) for s in _as_list(self.sigma_e2)))
        object.__setattr__(self, "algorithms", tuple(_as_list(self.algorithms)))
        object.__setattr__(self, "power", dict(self.power or {}))
        self.validate()

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.drops < 1:
            raise ConfigError("drops must be >= 1")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.users or min(self.users) < 1:
            raise ConfigError("user counts must be >= 1")
        if not self.sigma_e2 or min(self.sigma_e2) < 0:
            raise ConfigError("error variances must be >= 0")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ConfigError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if "al" in self.algorithms and self.scenario == "large" and not self.force:
            raise ConfigError("the AL solver is restricted to the small scenario; pass --force to override")
        self.power_params()

    def power_params(self) -> PowerParams:
        try:
            return PowerParams.from_dict(self.power)
        except TypeError as e:
            raise ConfigError(f"bad power override: {e}") from None

    def scenario_config(self, n_users: int) -> ScenarioConfig:
        return ScenarioConfig.small(n_users) if self.scenario == "small" else ScenarioConfig.large(n_users)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        data = {k.replace("-", "_"): v for k, v in (data or {}).items()}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        # YAML is a superset of JSON, so one loader covers both
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("users", "sigma_e2", "algorithms"):
            d[k] = list(d[k])
        return d

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _as_list(x):
    if isinstance(x, str):
        return [s.strip() for s in x.split(",") if s.strip()]
    if np.isscalar(x):
        return [x]
    return list(x)


@dataclass
class DropOutcome:
    users: int
    sigma_e2: float
    drop: int
    reports: dict
    errors: dict
    al_trace: list | None = None
    heuristic_trace: dict | None = None


def _al_report(res, frame, topo, params) -> DropReport:
    rates, p, _, rep = frame_metrics(res.beamformer, res.active, frame, topo, params)
    residuals, feasible = merge_residuals([rep])
    flags = list(res.flags)
    if not feasible and "infeasible" not in flags:
        flags.append("infeasible")
    tau = float(rates.sum())
    return DropReport("al", params.bandwidth * tau / p, params.bandwidth * tau, rates,
                      len(res.active.active), residuals, feasible, flags, res.outer_iterations,
                      res.wall_time, {"active_counts": [len(res.active.active)],
                                      "inner_iterations": res.inner_iterations})


def run_drop(config: ExperimentConfig, n_users: int, sigma_e2: float, drop: int) -> DropOutcome:
    """All requested algorithms on one shared realization."""
    params = config.power_params()
    seed = RngSeed(config.seed, drop)
    topo = generate_topology(config.scenario_config(n_users), seed)
    frames = generate_frames(topo, sigma_e2, seed, config.frames, params.bandwidth)
    out = DropOutcome(n_users, sigma_e2, drop, {}, {})
    assoc = None
    for algo in config.algorithms:
        try:
            if algo == "al":
                res = run_al(frames[0], topo, params, AlOptions())
                out.reports[algo] = _al_report(res, frames[0], topo, params)
                out.al_trace = res.trace
            elif algo in ("heuristic", "ref_sr"):
                if assoc is None:
                    assoc = associate_users(frames[0], topo, params)
                if algo == "heuristic":
                    res = run_heuristic(frames, topo, params, association=assoc)
                    out.heuristic_trace = res.trace()
                else:
                    res = ref_sr(frames, topo, params, association=assoc)
                out.reports[algo] = res.report
            else:
                out.reports[algo] = ref_ee(frames, topo, params).report
        except InvariantViolation as e:
            out.errors[algo] = f"invariant: {e}"
        except Exception as e:  # recorded per row; the campaign goes on
            log.exception("drop %d (%s) failed", drop, algo)
            out.errors[algo] = f"{type(e).__name__}: {e}"
    return out


def _task(args):
    config, n_users, sigma_e2, drop = args
    return run_drop(config, n_users, sigma_e2, drop)


@dataclass
class CampaignResult:
    config: ExperimentConfig
    outcomes: list
    rows: list
    violations: list
    out_dir: Path | None = None

    def reports(self, algorithm: str, users: int | None = None, sigma_e2: float | None = None) -> list:
        return [o.reports[algorithm] for o in self.outcomes
                if algorithm in o.reports
                and (users is None or o.users == users)
                and (sigma_e2 is None or o.sigma_e2 == sigma_e2)]

    def mean(self, attr: str, algorithm: str, users=None, sigma_e2=None) -> float:
        vals = [getattr(r, attr) for r in self.reports(algorithm, users, sigma_e2)]
        return float(np.mean(vals)) if vals else float("nan")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def drop_rows(config: ExperimentConfig, outcomes: list) -> list:
    rows = []
    for o in outcomes:
        for algo in config.algorithms:
            row = {"scenario": config.scenario, "users": o.users, "sigma_e2": o.sigma_e2,
                   "drop": o.drop, "algorithm": algo}
            rep = o.reports.get(algo)
            if rep is None:
                row.update({k: "" for k in DROP_FIELDS if k not in row})
                row["error"] = o.errors.get(algo, "missing")
            else:
                row.update({
                    "ee_mbit_per_j": rep.ee_mbit_per_j, "sum_rate_bps": rep.sum_rate,
                    "n_active": rep.n_active, "feasible": rep.feasible,
                    "max_power_violation": rep.residuals["max_power_violation"],
                    "max_fronthaul_violation": rep.residuals["max_fronthaul_violation"],
                    "association_violations": rep.residuals["association_violations"],
                    "iterations": rep.iterations, "flags": ";".join(rep.flags), "error": "",
                })
            rows.append(row)
    return rows


def check_invariants(outcomes: list) -> list:
    """Return a description of every broken invariant (empty when all hold)."""
    bad = []
    for o in outcomes:
        tag = f"users={o.users} sigma_e2={o.sigma_e2} drop={o.drop}"
        for algo, err in o.errors.items():
            if err.startswith("invariant"):
                bad.append(f"{tag} {algo}: {err}")
        for algo, rep in o.reports.items():
            if not rep.feasible and "infeasible" not in rep.flags:
                bad.append(f"{tag} {algo}: infeasible solution without a flag")
            if algo != "al" and rep.residuals["association_violations"] != 0:
                bad.append(f"{tag} {algo}: local-processing constraint violated")
            if not np.isfinite(rep.ee) or rep.ee < 0:
                bad.append(f"{tag} {algo}: energy efficiency {rep.ee}")
    return bad


def summarize(config: ExperimentConfig, rows: list) -> list:
    """Aggregate per (users, error variance, algorithm) from the per-drop rows alone."""
    out = []
    for n in config.users:
        for s in config.sigma_e2:
            for algo in config.algorithms:
                sel = [r for r in rows if r["users"] == n and r["sigma_e2"] == s and r["algorithm"] == algo]
                done = [r for r in sel if r["error"] == ""]
                ee = np.array([float(r["ee_mbit_per_j"]) for r in done])
                out.append({
                    "scenario": config.scenario, "users": n, "sigma_e2": s, "algorithm": algo,
                    "drops": config.drops, "completed": len(done),
                    "partial": len(done) < config.drops,
                    "mean_ee_mbit_per_j": float(ee.mean()) if done else float("nan"),
                    "std_ee_mbit_per_j": float(ee.std()) if done else float("nan"),
                    "mean_sum_rate_bps": float(np.mean([float(r["sum_rate_bps"]) for r in done])) if done else float("nan"),
                    "mean_n_active": float(np.mean([float(r["n_active"]) for r in done])) if done else float("nan"),
                    "infeasible": sum(1 for r in done if r["feasible"] is False),
                })
    return out


def aggregate_cdf(values) -> list:
    """Empirical CDF as ``(value, k/N)`` pairs, sorted ascending."""
    v = np.sort(np.asarray(list(values), dtype=float))
    n = v.size
    return [(float(x), (i + 1) / n) for i, x in enumerate(v)]


def cdf_percentile(cdf: list, q: float) -> float:
    """Smallest value whose cumulative probability reaches ``q`` (ceiling rule)."""
    if not cdf:
        raise ValueError("empty CDF")
    if not 0 < q <= 1:
        raise ValueError("q must be in (0, 1]")
    idx = max(math.ceil(q * len(cdf) - 1e-12) - 1, 0)
    return cdf[idx][0]


def active_fap_histogram(reports) -> dict:
    """Normalized histogram of active F-AP counts; accepts reports or ``{algo: reports}``."""
    if isinstance(reports, dict):
        return {a: active_fap_histogram(r) for a, r in reports.items()}
    counts = []
    for rep in reports:
        counts.extend(rep.extra.get("active_counts", [rep.n_active]))
    if not counts:
        return {}
    keys, freq = np.unique(np.asarray(counts, dtype=int), return_counts=True)
    return {int(k): f / len(counts) for k, f in zip(keys, freq)}


def _write_csv(path: Path, fields: list, rows: list) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in fields})
    path.write_text(buf.getvalue())


def _version() -> str:
    try:
        return metadata.version("fogee")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, frozenset, set)):
        seq = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in seq]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_outputs(result: CampaignResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    _write_csv(out / "drops.csv", DROP_FIELDS, result.rows)
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, summarize(cfg, result.rows))

    rate_rows = []
    for o in result.outcomes:
        for algo, rep in o.reports.items():
            for k, r in enumerate(rep.user_rates):
                rate_rows.append({"users": o.users, "sigma_e2": o.sigma_e2, "drop": o.drop,
                                  "algorithm": algo, "user": k, "rate_bps": cfg.power_params().bandwidth * float(r)})
    _write_csv(out / "user_rates.csv", ["users", "sigma_e2", "drop", "algorithm", "user", "rate_bps"], rate_rows)

    hist_rows = []
    for n in cfg.users:
        for s in cfg.sigma_e2:
            for algo in cfg.algorithms:
                for count, freq in active_fap_histogram(result.reports(algo, n, s)).items():
                    hist_rows.append({"users": n, "sigma_e2": s, "algorithm": algo,
                                      "active_faps": count, "frequency": freq})
    _write_csv(out / "active_faps.csv", ["users", "sigma_e2", "algorithm", "active_faps", "frequency"], hist_rows)

    # wall times vary run to run, so they live apart from the deterministic tables
    _write_csv(out / "timings.csv", ["users", "sigma_e2", "drop", "algorithm", "wall_time_s"],
               [{"users": o.users, "sigma_e2": o.sigma_e2, "drop": o.drop, "algorithm": a,
                 "wall_time_s": rep.wall_time} for o in result.outcomes for a, rep in o.reports.items()])

    with open(out / "al_trace.jsonl", "w") as f:
        for o in result.outcomes:
            if o.al_trace is not None:
                f.write(json.dumps({"users": o.users, "sigma_e2": o.sigma_e2, "drop": o.drop,
                                    "trace": _jsonable(o.al_trace)}) + "\n")
    with open(out / "heuristic_trace.jsonl", "w") as f:
        for o in result.outcomes:
            if o.heuristic_trace is not None:
                f.write(json.dumps({"users": o.users, "sigma_e2": o.sigma_e2, "drop": o.drop,
                                    "decisions": _jsonable(o.heuristic_trace)}) + "\n")

    sidecar = {"config": cfg.to_dict(), "seed": cfg.seed, "version": _version(),
               "power_params": asdict(cfg.power_params()),
               "files": ["drops.csv", "summary.csv", "user_rates.csv", "active_faps.csv"],
               "invariant_violations": result.violations}
    (out / "config.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return out


def run_campaign(config: ExperimentConfig, out_dir=None, progress=None) -> CampaignResult:
    tasks = [(config, n, s, d) for n in config.users for s in config.sigma_e2 for d in range(config.drops)]
    t0 = time.perf_counter()
    if config.workers > 1:
        with Pool(config.workers) as pool:
            outcomes = list(pool.imap(_task, tasks, chunksize=1))
    else:
        outcomes = []
        for i, t in enumerate(tasks):
            outcomes.append(_task(t))
            if progress:
                progress(i + 1, len(tasks))
    # single-writer merge in a fixed order, independent of worker scheduling
    outcomes.sort(key=lambda o: (config.users.index(o.users), config.sigma_e2.index(o.sigma_e2), o.drop))
    log.info("campaign of %d drops took %.1fs", len(tasks), time.perf_counter() - t0)
    result = CampaignResult(config, outcomes, drop_rows(config, outcomes), check_invariants(outcomes))
    if out_dir is not None:
        result.out_dir = write_outputs(result, out_dir)
    return result


_ROW_TYPES = {"users": int, "sigma_e2": float, "drop": int, "ee_mbit_per_j": float, "sum_rate_bps": float,
              "n_active": float, "max_power_violation": float, "max_fronthaul_violation": float,
              "association_violations": int, "iterations": int}


def _parse_row(row: dict) -> dict:
    out = dict(row)
    for k, typ in _ROW_TYPES.items():
        if out.get(k, "") != "":
            out[k] = typ(out[k])
    if out.get("feasible", "") != "":
        out["feasible"] = out["feasible"] == "true"
    return out


def load_rows(in_dir) -> list:
    """Per-drop rows from a campaign directory, with numeric fields restored."""
    with open(Path(in_dir) / "drops.csv", newline="") as f:
        return [_parse_row(r) for r in csv.DictReader(f)]


def load_config(in_dir) -> ExperimentConfig:
    data = json.loads((Path(in_dir) / "config.json").read_text())
    return ExperimentConfig.from_dict(data["config"])
