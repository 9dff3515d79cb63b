"""Experiment orchestration: build -> prune -> insert skips -> train -> analyze.

Each run is written to ``<out>/<name>/<method>-d<density>-s<seed>/`` and the
experiment as a whole is summarized in ``<out>/<name>/manifest.json``.
"""

from dataclasses import asdict, dataclass, field, fields, replace
import json
import math
import os
from pathlib import Path

import numpy as np

from n2nskip import checkpoint
from n2nskip import connectivity as conn
from n2nskip.data import gen_blobs, load_csv
from n2nskip.errors import ConfigError, IncomparableError
from n2nskip.net import NetworkSpec, build_network
from n2nskip.pruning import csp_prune, random_prune
from n2nskip.skipgen import SkipBudget, apply_masks, density, insert_n2nskip
from n2nskip.trainer import History, HyperParams, evaluate, train

METHODS = ("baseline", "rp", "csp", "n2nskip-rp", "n2nskip-csp")
CALIBRATION_DIMS = (100, 64, 32, 16, 4)
CALIBRATION_DATA = {"kind": "blobs", "classes": 4, "dim": 100, "per_class": 250, "spread": 0.35, "seed": 0}
OUT_ENV = "N2NSKIP_OUT"


@dataclass(frozen=True)
class AnalysisConfig:
    t: float = conn.DEFAULT_T
    K: int = None
    K_percent: float = 0.5
    t_grid: tuple = None
    threshold: float = conn.DEFAULT_THRESHOLD
    weighted: bool = True
    post_training: bool = True

    def resolve_K(self, n):
        return self.K if self.K is not None else conn.k_from_percent(self.K_percent, n)

    def grid(self):
        return list(self.t_grid) if self.t_grid is not None else conn.default_t_grid()


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    layer_dims: tuple = CALIBRATION_DIMS
    method: str = "baseline"
    density: float = 1.0
    split_ratio: float = 0.5
    k: int = 2
    seeds: tuple = (0,)
    hyperparams: HyperParams = field(default_factory=HyperParams)
    dataset: dict = field(default_factory=lambda: dict(CALIBRATION_DATA))
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    csp_batch: int = 128
    # sweep axes; a single run uses ``method``/``density``
    methods: tuple = None
    densities: tuple = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        for m in self.methods or ():
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r} in sweep")
        for d in (self.density, *(self.densities or ())):
            if not (0.0 < d <= 1.0):
                raise ConfigError(f"density must lie in (0, 1], got {d}")
        if self.method.startswith("n2nskip") and not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"{self.method} needs split_ratio in (0, 1), got {self.split_ratio}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.csp_batch < 1:
            raise ConfigError("csp_batch must be positive")
        try:
            NetworkSpec(self.layer_dims, self.k, 0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "hyperparams" in doc:
                doc["hyperparams"] = HyperParams(**doc["hyperparams"])
            if "analysis" in doc:
                an = dict(doc["analysis"])
                if an.get("t_grid") is not None:
                    an["t_grid"] = tuple(float(t) for t in an["t_grid"])
                doc["analysis"] = AnalysisConfig(**an)
        except TypeError as exc:
            raise ConfigError(f"bad config section: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for key in ("layer_dims", "seeds", "methods", "densities"):
            if doc.get(key) is not None:
                doc[key] = tuple(doc[key])
        if doc.get("method") == "baseline" or (doc.get("method") is None and "density" not in doc):
            doc["density"] = 1.0
        return cls(**doc)

    def to_dict(self):
        out = asdict(self)
        for key in ("layer_dims", "seeds", "methods", "densities"):
            if out[key] is not None:
                out[key] = list(out[key])
        if out["analysis"]["t_grid"] is not None:
            out["analysis"]["t_grid"] = list(out["analysis"]["t_grid"])
        return out

    def cells(self):
        """``(method, density)`` pairs covered by this config."""
        methods = self.methods or (self.method,)
        densities = self.densities or (self.density,)
        out = []
        for m in methods:
            if m == "baseline":
                out.append((m, 1.0))
            else:
                out.extend((m, float(d)) for d in densities)
        seen, uniq = set(), []
        for c in out:
            if c not in seen:
                seen.add(c)
                uniq.append(c)
        return uniq


def load_dataset(desc):
    kind = desc.get("kind")
    try:
        if kind == "blobs":
            return gen_blobs(desc["classes"], desc["dim"], desc["per_class"], desc["spread"], desc["seed"])
        if kind == "csv":
            return load_csv(desc["path"], desc["classes"])
    except KeyError as exc:
        raise ConfigError(f"dataset descriptor is missing {exc}") from None
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


@dataclass
class Connectivity:
    signature: conn.HeatSignature
    spectrum: conn.Spectrum
    K: int
    curve: list
    saturation: float

    @property
    def components(self):
        return conn.count_near_zero(self.spectrum)


def analyze_network(net, analysis):
    W = conn.to_adjacency(net, weighted=analysis.weighted)
    spec = conn.eig_sym(conn.graph_laplacian(W))
    H = conn.heat_matrix(spec, analysis.t)
    sig = conn.heat_signature(H, conn.input_sources(net.layer_dims), analysis.t)
    K = analysis.resolve_K(spec.n)
    curve = conn.scree_curve(spec, K, analysis.grid())
    return Connectivity(sig, spec, K, curve, conn.saturation_time(curve, analysis.threshold))


@dataclass
class RunResult:
    method: str
    density: float
    seed: int
    metrics: dict
    history: History = None
    net: object = None
    curve: list = None

    @property
    def dirname(self):
        return run_dirname(self.method, self.density, self.seed)


def run_dirname(method, d, seed):
    return f"{method}-d{d:g}-s{seed}"


@dataclass
class ExperimentReport:
    name: str
    config: dict
    runs: list
    out_dir: str = None

    def select(self, method=None, d=None):
        return [
            r for r in self.runs
            if (method is None or r.method == method) and (d is None or math.isclose(r.density, d))
        ]

    def aggregates(self):
        groups = {}
        for r in self.runs:
            groups.setdefault((r.method, r.density), []).append(r)
        out = {}
        for (m, d), runs in groups.items():
            acc = [r.metrics["test_acc"] for r in runs]
            dist = [r.metrics["F"] for r in runs]
            out[f"{m}@{d:g}"] = {
                "method": m,
                "density": d,
                "n_seeds": len(runs),
                "test_acc_mean": float(np.mean(acc)),
                # sample std over seeds; 0 for a single seed
                "test_acc_std": float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0,
                "F_mean": float(np.mean(dist)),
                "saturated_runs": sum(r.metrics["saturated"] for r in runs),
            }
        return out

    def manifest(self):
        return {
            "name": self.name,
            "config": self.config,
            "dataset": self.config["dataset"],
            "aggregation": "mean and sample standard deviation over seeds",
            "runs": [
                {
                    "method": r.method,
                    "density": r.density,
                    "seed": r.seed,
                    "dir": r.dirname,
                    "metrics": r.metrics,
                }
                for r in self.runs
            ],
            "aggregates": self.aggregates(),
        }


def dump_json(doc):
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


class Pipeline:
    """Runs cells of one experiment, caching the trained reference per seed."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.data = load_dataset(cfg.dataset)
        if self.data.feature_dim != cfg.layer_dims[0] or self.data.classes != cfg.layer_dims[-1]:
            raise ConfigError(
                f"dataset has {self.data.feature_dim} features / {self.data.classes} classes but "
                f"layer_dims is {list(cfg.layer_dims)}"
            )
        self._refs = {}

    def spec(self, seed):
        return NetworkSpec(self.cfg.layer_dims, self.cfg.k, seed)

    def reference(self, seed):
        if seed not in self._refs:
            init = build_network(self.spec(seed))
            trained = init.copy()
            hist = train(trained, self.data, self.cfg.hyperparams, seed)
            subject = trained if self.cfg.analysis.post_training else init
            self._refs[seed] = (init, trained, hist, analyze_network(subject, self.cfg.analysis))
        return self._refs[seed]

    def build(self, method, d, seed):
        """Untrained network for one cell, plus its sequential-only density."""
        init = build_network(self.spec(seed))
        if method == "baseline":
            return init, 1.0
        base = method.removeprefix("n2nskip-")
        if base == "rp":
            masks = random_prune(init, d, seed)
        else:
            n = min(self.cfg.csp_batch, self.data.n_train)
            masks = csp_prune(init, self.data.x_train[:n], self.data.y_train[:n], d)
        pruned_density = masks.nnz() / init.reference_params
        if method.startswith("n2nskip"):
            budget = SkipBudget(d, self.cfg.split_ratio, self.cfg.k)
            return insert_n2nskip(init, masks, budget, seed), pruned_density
        return apply_masks(init, masks), pruned_density

    def run(self, method, d, seed):
        cfg = self.cfg
        _, ref_net, ref_hist, ref_conn = self.reference(seed)
        if method == "baseline":
            net, hist, an = ref_net, ref_hist, ref_conn
            pruned_density = 1.0
        else:
            net, pruned_density = self.build(method, d, seed)
            pre = net.copy() if not cfg.analysis.post_training else None
            hist = train(net, self.data, cfg.hyperparams, seed)
            an = analyze_network(pre if pre is not None else net, cfg.analysis)
        F = conn.signature_distance(ref_conn.signature, an.signature)
        metrics = {
            "method": method,
            "target_density": d,
            "seed": seed,
            "pruned_density": pruned_density,
            "achieved_density": density(net),
            "seq_nnz": net.seq_nnz(),
            "skip_nnz": net.skip_nnz(),
            "test_acc": evaluate(net, self.data.x_test, self.data.y_test),
            "train_acc": hist.train_acc[-1] if len(hist) else evaluate(net, self.data.x_train, self.data.y_train),
            "final_train_loss": hist.train_loss[-1] if len(hist) else None,
            "F": F,
            "t": cfg.analysis.t,
            "K": an.K,
            "threshold": cfg.analysis.threshold,
            "weighted": cfg.analysis.weighted,
            "post_training": cfg.analysis.post_training,
            "saturation_time": _finite_or_none(an.saturation),
            "saturated": math.isfinite(an.saturation),
            "reference_saturation_time": _finite_or_none(ref_conn.saturation),
            "reference_test_acc": evaluate(ref_net, self.data.x_test, self.data.y_test),
            "components": an.components,
            "jacobi_sweeps": an.spectrum.sweeps,
        }
        return RunResult(method, d, seed, metrics, hist, net, an.curve)


def output_root(out=None):
    return Path(out or os.environ.get(OUT_ENV) or "out")


def write_run(run, run_dir):
    run_dir.mkdir(parents=True, exist_ok=True)
    checkpoint.save(run.net, run_dir / "checkpoint.json")
    (run_dir / "history.csv").write_text(run.history.to_csv(), encoding="utf-8")
    (run_dir / "scree.csv").write_text(conn.scree_csv(run.curve), encoding="utf-8")
    (run_dir / "metrics.json").write_text(dump_json(run.metrics), encoding="utf-8")


def run_experiment(cfg, out=None, write=True, log=None):
    """Run every (method, density, seed) cell of ``cfg`` and write artifacts."""
    pipe = Pipeline(cfg)
    runs = []
    exp_dir = output_root(out) / cfg.name
    for method, d in cfg.cells():
        for seed in cfg.seeds:
            run = pipe.run(method, d, seed)
            if log:
                log(f"{run.dirname}: test_acc={run.metrics['test_acc']:.4f} F={run.metrics['F']:.4g}")
            if write:
                write_run(run, exp_dir / run.dirname)
            runs.append(run)
    report = ExperimentReport(cfg.name, cfg.to_dict(), runs, str(exp_dir) if write else None)
    if write:
        (exp_dir / "manifest.json").write_text(dump_json(report.manifest()), encoding="utf-8")
    return report


def load_report(path):
    """Rebuild a report (metrics only) from a manifest file or experiment directory."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    doc = json.loads(path.read_text(encoding="utf-8"))
    runs = [RunResult(r["method"], r["density"], r["seed"], r["metrics"]) for r in doc["runs"]]
    return ExperimentReport(doc["name"], doc["config"], runs, str(path.parent))


@dataclass
class ComparisonSummary:
    seeds: list
    acc_delta: list
    F_delta: list
    saturation_delta: list
    acc_wins: int
    F_wins: int
    saturation_wins: int
    saturation_no_worse: int
    F_ratio: list

    def to_dict(self):
        return asdict(self)


def _sat_delta(a, b):
    # None encodes "never saturated on the grid"
    if a is None and b is None:
        return 0.0
    if a is None or b is None:
        return None
    return a - b


def compare(report_a, report_b, select_a=(None, None), select_b=(None, None)):
    """Paired per-seed deltas ``a - b``; a wins on higher accuracy, lower F and
    earlier saturation."""
    if report_a.config["dataset"] != report_b.config["dataset"] or list(
        report_a.config["layer_dims"]
    ) != list(report_b.config["layer_dims"]):
        raise IncomparableError("reports use different datasets or reference networks")
    runs_a = {r.seed: r for r in report_a.select(*select_a)}
    runs_b = {r.seed: r for r in report_b.select(*select_b)}
    if len(runs_a) != len(report_a.select(*select_a)) or len(runs_b) != len(report_b.select(*select_b)):
        raise IncomparableError("selection matches more than one run per seed; pick a method and density")
    seeds = sorted(set(runs_a) & set(runs_b))
    if not seeds:
        raise IncomparableError("reports share no seeds")
    acc, F, sat, ratio = [], [], [], []
    acc_w = F_w = sat_w = sat_nw = 0
    for s in seeds:
        ma, mb = runs_a[s].metrics, runs_b[s].metrics
        acc.append(ma["test_acc"] - mb["test_acc"])
        F.append(ma["F"] - mb["F"])
        ratio.append(ma["F"] / mb["F"] if mb["F"] > 0 else (1.0 if ma["F"] == 0 else None))
        sa, sb = ma["saturation_time"], mb["saturation_time"]
        sat.append(_sat_delta(sa, sb))
        acc_w += ma["test_acc"] > mb["test_acc"]
        F_w += ma["F"] < mb["F"]
        a_inf, b_inf = sa is None, sb is None
        sat_w += (not a_inf) and (b_inf or sa < sb)
        sat_nw += b_inf or ((not a_inf) and sa <= sb)
    return ComparisonSummary(seeds, acc, F, sat, acc_w, F_w, sat_w, sat_nw, ratio)


def with_overrides(doc, overrides):
    """Apply dotted-key overrides such as ``{"analysis.t": 2.0}`` to a config dict."""
    doc = json.loads(json.dumps(doc))
    for key, value in overrides.items():
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {key}: {p} is not a section")
        node[parts[-1]] = value
    return doc


def calibration_config(**changes):
    return replace(ExperimentConfig(name="calibration", seeds=(0, 1, 2, 3, 4)), **changes)
