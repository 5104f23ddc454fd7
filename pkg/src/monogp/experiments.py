"""Experiment harness: the six synthetic benchmarks, the two
differential-equation applications, end-to-end runs and machine-readable
artifacts."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .applications import ConvDiffConfig, SirConfig, solve_convdiff, solve_sir
from .constrained import (
    VirtualDesign,
    build_problem,
    predict_constrained,
    sample_relu_gibbs,
    sample_relu_nuts,
    sample_rlrto,
    sample_truncated_gibbs,
    sample_truncated_nuts,
)
from .design import DomainBox, latin_hypercube, sobol_points
from .diagnostics import MetricsReport, ci_width, ess_per_second, mean_iat, mse
from .gp_core import Dataset, GpModel, fit_hyperparameters, posterior_value
from .kernels import KernelParams, psd_factor
from .sampling import RngStream

METHODS = ("unconstrained", "truncated-gibbs", "truncated-nuts",
           "relu-gibbs", "relu-nuts", "rlrto")
VIRTUAL_COUNTS = (4, 8, 16, 32, 64, 128)

CSV_HEADER = "experiment,method,n_virtual,mse,ci_width,iat,ess_per_sec,runtime_s,seed"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# experiment definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentDef:
    exp_id: str
    box: DomainBox
    n_obs: int
    noise_sd: float
    truth: Callable[[np.ndarray], np.ndarray]
    constraint_dims: tuple       # cycled over virtual points
    grid_shape: tuple
    data_design: str = "lhs"     # lhs | uniform | fixed
    fixed_inputs: Optional[np.ndarray] = None

    def grid(self) -> np.ndarray:
        axes = [np.linspace(self.box.lower[j], self.box.upper[j], s)
                for j, s in enumerate(self.grid_shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _f_1d2(t):
    return np.where(t < -3, t + 3, np.where(t < 3, 0.0, t - 3))


def _sir_truth(X):
    X = np.atleast_2d(X)
    out = np.empty(X.shape[0])
    for r0 in np.unique(X[:, 1]):
        idx = X[:, 1] == r0
        out[idx] = solve_sir(float(r0), X[idx, 0])
    return out


def _convdiff_truth(X):
    # coordinates are (beta, x, t) with beta = -b so the solution is
    # nondecreasing in every coordinate
    X = np.atleast_2d(X)
    out = np.empty(X.shape[0])
    for beta in np.unique(X[:, 0]):
        idx = X[:, 0] == beta
        out[idx] = solve_convdiff(-float(beta), X[idx, 1:])
    return out


def _registry() -> dict:
    box1 = DomainBox([-5.0], [5.0])
    box2 = DomainBox([-5.0, -5.0], [5.0, 5.0])
    defs = [
        ExperimentDef("1d-1", box1, 4, 1e-1,
                      lambda X: np.log(X[:, 0] + 5.1),
                      (0,), (200,), "fixed",
                      np.array([[-4.5], [-2.0], [1.0], [4.0]])),
        ExperimentDef("1d-2", box1, 64, 1e-1,
                      lambda X: _f_1d2(X[:, 0]), (0,), (200,)),
        ExperimentDef("1d-3", box1, 50, 3e-1,
                      lambda X: 4.0 / (1.0 + np.exp(4.0 - X[:, 0])), (0,), (200,)),
        ExperimentDef("2d-1", box2, 16, 1e-3,
                      lambda X: np.sin(X[:, 1]), (0,), (50, 50)),
        ExperimentDef("2d-2", box2, 16, 1e-3,
                      lambda X: np.log(X[:, 0] + 6.0) * (1.0 - np.cos(X[:, 1])),
                      (0,), (50, 50)),
        ExperimentDef("2d-3", box2, 64, 1e-3,
                      lambda X: X[:, 0] * np.cos(X[:, 1]) ** 2, (0,), (50, 50)),
        ExperimentDef("sir", DomainBox([0.0, 0.01], [10.0, 5.0]), 64, 0.0,
                      _sir_truth, (0, 1), (50, 50), "uniform"),
        ExperimentDef("convdiff", DomainBox([0.0, 0.0, 0.0], [1.0, 1.0, 1.5]),
                      64, 0.0, _convdiff_truth, (0, 1, 2), (15, 15, 15), "uniform"),
    ]
    return {d.exp_id: d for d in defs}


REGISTRY = _registry()
SYNTHETIC_IDS = ("1d-1", "1d-2", "1d-3", "2d-1", "2d-2", "2d-3")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    method: str
    n_virtual: int = 32
    n_samples: int = 50000
    burn_in: int = 1000
    seed: int = 0
    out_dir: Optional[str] = None
    fit_lr: float = 0.01
    fit_max_iter: int = 20000

    def __post_init__(self):
        if self.experiment not in REGISTRY:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.experiment in SYNTHETIC_IDS and self.method != "unconstrained" \
                and self.n_virtual not in VIRTUAL_COUNTS:
            raise ConfigError(
                f"n_virtual must be one of {VIRTUAL_COUNTS} for synthetic runs")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be positive")
        if self.method == "rlrto" and self.burn_in != 0:
            object.__setattr__(self, "burn_in", 0)
        if self.burn_in < 0 or self.n_samples < self.burn_in:
            raise ConfigError("need n_samples >= burn_in >= 0")


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def generate_dataset(exp: ExperimentDef, seed: int,
                     noise_sd: Optional[float] = None) -> Dataset:
    rng = RngStream(seed, 10)
    if exp.data_design == "fixed":
        X = exp.fixed_inputs.copy()
    elif exp.data_design == "uniform":
        g = rng.generator()
        X = exp.box.lower + g.random((exp.n_obs, exp.box.dim)) * (exp.box.upper - exp.box.lower)
    else:
        X = latin_hypercube(exp.n_obs, exp.box, rng)
    y = exp.truth(X)
    sd = exp.noise_sd if noise_sd is None else noise_sd
    if sd > 0:
        y = y + sd * RngStream(seed, 11).generator().standard_normal(y.shape[0])
    return Dataset(X, y, sd)


_HYPER_CACHE: dict = {}


def _init_params(data: Dataset) -> KernelParams:
    var = float(np.var(data.values))
    if var <= 0:
        var = 1.0
    rng_j = data.inputs.max(axis=0) - data.inputs.min(axis=0)
    ls = np.where(rng_j > 0, rng_j / 4.0, 1.0)
    return KernelParams(var, ls)


def get_hyperparameters(cfg: ExperimentConfig) -> KernelParams:
    """Fit once per (experiment, seed); shared by all methods.  Persisted to
    the output directory when one is configured."""
    key = (cfg.experiment, cfg.seed, cfg.fit_lr, cfg.fit_max_iter)
    if key in _HYPER_CACHE:
        return _HYPER_CACHE[key]
    path = None
    if cfg.out_dir:
        path = Path(cfg.out_dir) / f"hyperparams_{cfg.experiment}_seed{cfg.seed}.json"
        if path.exists():
            doc = json.loads(path.read_text())
            params = KernelParams(float.fromhex(doc["variance"]),
                                  np.array([float.fromhex(v) for v in doc["lengthscales"]]))
            _HYPER_CACHE[key] = params
            return params
    exp = REGISTRY[cfg.experiment]
    data = generate_dataset(exp, cfg.seed)
    centered = Dataset(data.inputs, data.values - data.values.mean(), data.noise_sd)
    params = fit_hyperparameters(centered, _init_params(centered),
                                 lr=cfg.fit_lr, max_iter=cfg.fit_max_iter)
    _HYPER_CACHE[key] = params
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({
            "variance": float(params.variance).hex(),
            "lengthscales": [float(v).hex() for v in params.lengthscales],
        }, indent=2))
    return params


def virtual_design(exp: ExperimentDef, n_virtual: int, seed: int) -> VirtualDesign:
    scramble = RngStream(seed, 12).kernel_seed()
    pts = sobol_points(n_virtual, exp.box, scramble)
    dims = np.array([exp.constraint_dims[i % len(exp.constraint_dims)]
                     for i in range(n_virtual)])
    return VirtualDesign(pts, dims)


_SAMPLERS = {
    "truncated-gibbs": sample_truncated_gibbs,
    "truncated-nuts": sample_truncated_nuts,
    "relu-gibbs": sample_relu_gibbs,
    "relu-nuts": sample_relu_nuts,
}


@dataclass
class RunResult:
    config: ExperimentConfig
    report: MetricsReport
    grid: np.ndarray
    pred_mean: np.ndarray
    pred_lower: np.ndarray
    pred_upper: np.ndarray
    batch_extras: dict = field(default_factory=dict)


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    exp = REGISTRY[cfg.experiment]
    stage = "data"
    try:
        data = generate_dataset(exp, cfg.seed)
        ybar = float(data.values.mean())
        centered = Dataset(data.inputs, data.values - ybar, data.noise_sd)
        stage = "fit"
        params = get_hyperparameters(cfg)
        model = GpModel(params, centered)
        U = exp.grid()
        truth_u = exp.truth(U)
        pred_rng = RngStream(cfg.seed, 40 + METHODS.index(cfg.method))

        if cfg.method == "unconstrained":
            stage = "predict"
            t0 = time.perf_counter()
            pred = posterior_value(model, U)
            F = psd_factor(pred.cov, params.variance)
            g = pred_rng.generator()
            Z = g.standard_normal((F.shape[1], cfg.n_samples))
            samples = ybar + pred.mean + (F @ Z).T
            runtime = time.perf_counter() - t0
            report = MetricsReport(
                mse=mse(samples, truth_u),
                mean_ci_width=ci_width(samples),
                mean_iat=None, ess_per_second=None,
                n_samples=cfg.n_samples, runtime_seconds=runtime)
            lower = np.quantile(samples, 0.025, axis=0)
            upper = np.quantile(samples, 0.975, axis=0)
            return RunResult(cfg, report, U, samples.mean(axis=0), lower, upper)

        stage = "sampling"
        design = virtual_design(exp, cfg.n_virtual, cfg.seed)
        prob = build_problem(model, design)
        samp_rng = RngStream(cfg.seed, 20 + METHODS.index(cfg.method))
        f_t = centered.values
        if cfg.method == "rlrto":
            batch = sample_rlrto(prob, f_t, cfg.n_samples, samp_rng)
        else:
            batch = _SAMPLERS[cfg.method](prob, f_t, cfg.n_samples, cfg.burn_in, samp_rng)

        stage = "predict"
        cpred = predict_constrained(prob, f_t, batch, U, pred_rng)
        samples = cpred.samples + ybar
        stage = "metrics"
        # IAT of the constrained derivative chain (ReLU image for the
        # relu-likelihood methods, raw draws otherwise)
        chain = np.maximum(batch.draws, 0.0) if cfg.method.startswith("relu") \
            else batch.draws
        iat_val = mean_iat(chain)
        report = MetricsReport(
            mse=mse(samples, truth_u),
            mean_ci_width=ci_width(samples),
            mean_iat=iat_val,
            ess_per_second=ess_per_second(batch.n, iat_val, batch.seconds),
            n_samples=batch.n, runtime_seconds=batch.seconds)
        return RunResult(cfg, report, U, cpred.mean + ybar, cpred.lower + ybar,
                         cpred.upper + ybar, dict(batch.extras, degraded=batch.degraded))
    except (ConfigError,):
        raise
    except Exception as e:
        raise RuntimeError(f"experiment {cfg.experiment}/{cfg.method} failed "
                           f"during stage {stage!r}: {e}") from e


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

PREDICTIONS_SCHEMA = {
    "type": "object",
    "required": ["experiment", "method", "n_virtual", "seed", "grid",
                 "mean", "lower", "upper"],
    "properties": {
        "experiment": {"type": "string"},
        "method": {"type": "string"},
        "n_virtual": {"type": "integer"},
        "seed": {"type": "integer"},
        "grid": {"type": "array", "items": {"type": "array",
                                            "items": {"type": "number"}}},
        "mean": {"type": "array", "items": {"type": "number"}},
        "lower": {"type": "array", "items": {"type": "number"}},
        "upper": {"type": "array", "items": {"type": "number"}},
    },
    "additionalProperties": False,
}


def validate_predictions(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, PREDICTIONS_SCHEMA)


def metrics_row(res: RunResult) -> str:
    cfg, rep = res.config, res.report
    nv = cfg.n_virtual if cfg.method != "unconstrained" else 0
    iat_s = "NA" if rep.mean_iat is None else f"{rep.mean_iat:.6g}"
    ess_s = "NA" if rep.ess_per_second is None else f"{rep.ess_per_second:.6g}"
    return (f"{cfg.experiment},{cfg.method},{nv},{rep.mse:.10g},"
            f"{rep.mean_ci_width:.10g},{iat_s},{ess_s},"
            f"{rep.runtime_seconds:.6g},{cfg.seed}")


def run_id(cfg: ExperimentConfig) -> str:
    nv = cfg.n_virtual if cfg.method != "unconstrained" else 0
    return f"{cfg.experiment}_{cfg.method}_v{nv}_s{cfg.seed}"


def emit_artifacts(res: RunResult, out_dir) -> Path:
    out = Path(out_dir) / run_id(res.config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(CSV_HEADER + "\n" + metrics_row(res) + "\n")

    cfg = res.config
    doc = {
        "experiment": cfg.experiment,
        "method": cfg.method,
        "n_virtual": cfg.n_virtual if cfg.method != "unconstrained" else 0,
        "seed": cfg.seed,
        "grid": [[float(v) for v in row] for row in res.grid],
        "mean": [float(v) for v in res.pred_mean],
        "lower": [float(v) for v in res.pred_lower],
        "upper": [float(v) for v in res.pred_upper],
    }
    validate_predictions(doc)
    (out / "predictions.json").write_text(json.dumps(doc))

    import scipy

    from .accel import ACTIVE_BACKEND

    manifest = {
        "config": {k: getattr(cfg, k) for k in
                   ("experiment", "method", "n_virtual", "n_samples",
                    "burn_in", "seed", "fit_lr", "fit_max_iter")},
        "versions": {"monogp": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "backend": ACTIVE_BACKEND},
        "wall_clock_seconds": res.report.runtime_seconds,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "extras": {k: (float(v) if isinstance(v, (int, float, np.floating)) else str(v))
                   for k, v in res.batch_extras.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out


# ---------------------------------------------------------------------------
# suite
# ---------------------------------------------------------------------------

def run_suite(base: ExperimentConfig, experiments=None, methods=None,
              virtual_counts=None, out_dir=None, progress=None):
    """Run the (experiment, method, n_virtual) grid; unconstrained runs once
    per experiment.  Failures are recorded and the suite continues.

    Returns (rows, failures): CSV rows sorted by (experiment, method,
    n_virtual), and a list of (run id, error message).
    """
    experiments = list(experiments or SYNTHETIC_IDS)
    methods = list(methods or METHODS)
    virtual_counts = list(virtual_counts or VIRTUAL_COUNTS)
    jobs = []
    for e in experiments:
        for m in methods:
            if m == "unconstrained":
                jobs.append((e, m, 0))
            else:
                jobs.extend((e, m, v) for v in virtual_counts)
    rows, failures = [], []
    for e, m, v in jobs:
        cfg = replace(base, experiment=e, method=m,
                      n_virtual=(v if v else base.n_virtual),
                      burn_in=0 if m == "rlrto" else base.burn_in,
                      out_dir=out_dir or base.out_dir)
        if progress:
            progress(f"running {run_id(cfg)}")
        try:
            res = run_experiment(cfg)
            rows.append(metrics_row(res))
            if cfg.out_dir:
                emit_artifacts(res, cfg.out_dir)
        except Exception as exc:  # noqa: BLE001 - suite must survive row failures
            failures.append((run_id(cfg), str(exc)))
    rows.sort(key=lambda r: (r.split(",")[0], r.split(",")[1], int(r.split(",")[2])))
    if out_dir or base.out_dir:
        d = Path(out_dir or base.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "suite_metrics.csv").write_text(CSV_HEADER + "\n" + "\n".join(rows) + "\n")
        if failures:
            (d / "suite_failures.csv").write_text(
                "run,error\n" + "\n".join(f"{r},{msg.replace(chr(10), ' ')}"
                                          for r, msg in failures) + "\n")
    return rows, failures


def collect_report(in_dir, fmt: str = "csv") -> str:
    """Merge all per-run metrics under a directory into one table."""
    rows = []
    for path in sorted(Path(in_dir).rglob("metrics.csv")):
        lines = path.read_text().strip().splitlines()
        rows.extend(lines[1:])
    rows.sort(key=lambda r: (r.split(",")[0], r.split(",")[1], int(r.split(",")[2])))
    if fmt == "csv":
        return CSV_HEADER + "\n" + "\n".join(rows) + "\n"
    header = CSV_HEADER.split(",")
    docs = []
    for r in rows:
        vals = next(csv.reader(io.StringIO(r)))
        docs.append(dict(zip(header, vals)))
    return json.dumps(docs, indent=2)
