"""Seeded experiment runner with CSV output.

Implements the desk-scale studies: acceptance ratios of plain vs transformed
sampling under the two-sigma rule, posterior-sampling RMSE against the true
function for every bound-using variant, bound-misspecification sweeps, the
sample-count sweep, and sequential-optimization regret traces.

Every experiment is a pure function of (config, base seed): repetition ``r``
owns the seed ``base_seed + r``, repetitions run in a worker pool, and rows
are assembled in a fixed order, so outputs are reproducible byte for byte
(regret traces additionally carry measured wall time in a trailing column).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .benchmarks import make, misspecify, true_bounds
from .bo import BoConfig, run_bo
from .gp import Dataset, fit_gp
from .optimize import sobol_points
from .rff import draw_basis, draw_samples, eval_samples_at, summarize_samples
from .transform import SIGMOID, SINUSOIDAL, TransformSpec, fit_srgp, to_h_space
from .weighting import (
    ApproxBounds,
    LemmaReport,
    accept,
    attach_weights,
    rank_select,
    verify_variance_lemmas,
)

__all__ = [
    "ExperimentConfig",
    "HarnessResult",
    "run_accept_ratio",
    "run_sampling_rmse",
    "run_misspec_sweep",
    "run_m_sweep",
    "run_bo_regret",
    "write_csv",
    "RMSE_VARIANTS",
]

ENV_WORKERS = "BOUNDEDGP_WORKERS"
ENV_OUT_DIR = "BOUNDEDGP_OUT_DIR"

RMSE_VARIANTS = ("gp", "w-gp-plus", "w-gp-both", "w-srgp-plus", "w-srgp-both",
                 "sinusoidal", "sigmoid")

TEST_GRID_SIZE = 2048


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared configuration for all experiment kinds.

    ``eta_schedule`` means per-dimension band multipliers for accept-ratio
    runs (eta = mult * d, in standard deviations) and displacement variances
    for misspecification sweeps.  ``n_train_per_dim`` multiplies the
    function dimension.
    """

    kind: str
    functions: tuple[str, ...] = ("forrester",)
    n_train_per_dim: tuple[int, ...] = (5,)
    M: int = 200
    m_select: int = 100
    eta_schedule: tuple[float, ...] = ()
    m_schedule: tuple[int, ...] = (20, 50, 200, 300, 500)
    acquisitions: tuple[str, ...] = ("bes",)
    T: int | None = None
    repetitions: int = 30
    base_seed: int = 0
    eta_plus_sq: float | None = None   # None: 0.02 d
    eta_minus_sq: float | None = None  # None: 0.5 d
    l: int = 100
    misspec_target: str = "sampling"   # misspec-sweep only: sampling | bo
    workers: int | None = None

    def __post_init__(self):
        if self.kind not in ("accept-ratio", "sampling-rmse", "bo-regret",
                             "misspec-sweep", "m-sweep"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.m_select > self.M:
            raise ValueError("m_select must not exceed M")
        if not self.functions:
            raise ValueError("need at least one function")
        if self.kind in ("accept-ratio", "misspec-sweep") and not self.eta_schedule:
            raise ValueError("eta_schedule must be nonempty for this kind")

    def hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def n_workers(self) -> int:
        if self.workers is not None:
            return max(1, self.workers)
        env = os.environ.get(ENV_WORKERS)
        if env:
            return max(1, int(env))
        return max(1, os.cpu_count() or 1)


@dataclass
class HarnessResult:
    config: ExperimentConfig
    fieldnames: list[str]
    rows: list[dict]
    header_lines: list[str]
    extras: dict = field(default_factory=dict)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        for line in self.header_lines:
            buf.write(f"# {line}\n")
        writer = csv.DictWriter(buf, fieldnames=self.fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return buf.getvalue()


def _header(config: ExperimentConfig) -> list[str]:
    return [
        f"config_hash: {config.hash()}",
        f"code_version: boundedgp {__version__}",
        "kernel: squared-exponential, isotropic lengthscale, hyperparameters by "
        "log marginal likelihood (8 Nelder-Mead restarts on log10 parameters)",
        "gsobol_coefficients: a_i = (i-1)/2",
        f"kind: {config.kind}",
        f"repetitions: {config.repetitions} (seed of repetition r = base_seed + r)",
        f"base_seed: {config.base_seed}",
    ]


def write_csv(result: HarnessResult, out_path: str) -> str:
    """Write the CSV plus a JSON sidecar with the full configuration."""
    out_dir = os.environ.get(ENV_OUT_DIR)
    if out_dir and not os.path.isabs(out_path):
        out_path = os.path.join(out_dir, out_path)
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    with open(out_path, "w") as fh:
        fh.write(result.to_csv_text())
    sidecar = {"config": asdict(result.config), "config_hash": result.config.hash(),
               "code_version": f"boundedgp {__version__}"}
    with open(os.path.splitext(out_path)[0] + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True, default=str)
    return out_path


def _parallel(config: ExperimentConfig, jobs):
    n = config.n_workers()
    if n == 1:
        return [fn(*args) for fn, args in jobs]
    return Parallel(n_jobs=n)(delayed(fn)(*args) for fn, args in jobs)


def _looseness(config: ExperimentConfig, d: int) -> tuple[float, float]:
    eta_p = 0.02 * d if config.eta_plus_sq is None else config.eta_plus_sq
    eta_m = 0.5 * d if config.eta_minus_sq is None else config.eta_minus_sq
    return max(eta_p, 1e-12), max(eta_m, 1e-12)


def _training_data(fn_name: str, n_train: int, seed: int):
    fn = make(fn_name)
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n_train, fn.d))
    y = fn.evaluate_batch(X)
    return fn, rng, Dataset.from_unit(X, y)


# ---------------------------------------------------------------------------
# acceptance ratios (two-sigma rule), plain vs transformed sampling
# ---------------------------------------------------------------------------


def _accept_ratio_rep(fn_name: str, n_train: int, eta_mult: float, M: int,
                      l: int, seed: int):
    fn, rng, ds = _training_data(fn_name, n_train, seed)
    f_max_std, f_min_std = true_bounds(fn, ds.y_mean, ds.y_std)
    eta = eta_mult * fn.d
    bounds = ApproxBounds(f_plus=f_max_std, eta_plus_sq=eta**2,
                          f_minus=f_min_std, eta_minus_sq=eta**2)

    gp = fit_gp(ds, optimize_hypers=True, rng=rng)
    summ_gp = summarize_samples(draw_samples(gp, draw_basis(gp, l, rng), M, rng))
    acc_gp = [s for s in summ_gp if accept(bounds, s)]

    srgp, _ = fit_srgp(ds, bounds, optimize_hypers=True, rng=rng)
    summ_sr = summarize_samples(draw_samples(srgp, draw_basis(srgp, l, rng), M, rng))
    acc_sr = [s for s in summ_sr if accept(bounds, s)]

    report = verify_variance_lemmas(summ_gp, acc_gp, acc_sr)
    return len(acc_gp) / M, len(acc_sr) / M, report


def run_accept_ratio(config: ExperimentConfig) -> HarnessResult:
    """Fraction of samples inside the two-sigma band, per function and band
    width, for the plain and the transformed sampler on shared training data."""
    if config.kind != "accept-ratio":
        raise ValueError("config kind must be accept-ratio")
    rows, lemma_reports = [], []
    for fn_name in config.functions:
        d = make(fn_name).d
        n_train = config.n_train_per_dim[0] * d
        for eta_mult in config.eta_schedule:
            jobs = [(_accept_ratio_rep,
                     (fn_name, n_train, eta_mult, config.M, config.l,
                      config.base_seed + r))
                    for r in range(config.repetitions)]
            results = _parallel(config, jobs)
            frac_gp = np.array([r[0] for r in results])
            frac_sr = np.array([r[1] for r in results])
            lemma_reports.append({"function": fn_name, "eta_mult": eta_mult,
                                  "reports": [r[2] for r in results]})
            for sampler, frac in (("gp", frac_gp), ("srgp", frac_sr)):
                rows.append({
                    "function": fn_name, "d": d, "n_train": n_train,
                    "eta": f"{eta_mult}d", "sampler": sampler,
                    "mean_accept": f"{frac.mean():.6f}",
                    "std_accept": f"{frac.std(ddof=1) if len(frac) > 1 else 0.0:.6f}",
                    "reps": config.repetitions, "M": config.M,
                    "seed_base": config.base_seed,
                })
    fields = ["function", "d", "n_train", "eta", "sampler", "mean_accept",
              "std_accept", "reps", "M", "seed_base"]
    return HarnessResult(config, fields, rows, _header(config),
                         extras={"lemma": lemma_reports})


# ---------------------------------------------------------------------------
# posterior-sampling RMSE against the true function
# ---------------------------------------------------------------------------


def _rmse_of(samples, selected_idx, grid, f_true_std):
    vals = eval_samples_at([samples[i] for i in selected_idx], grid)
    return float(np.sqrt(np.mean((vals - f_true_std[:, None]) ** 2)))


def _sampling_rmse_rep(fn_name: str, n_train: int, M: int, m_select: int, l: int,
                       seed: int, eta_plus_sq: float, eta_minus_sq: float,
                       displacement: float, variants: tuple[str, ...]):
    """One repetition of the sampling study; returns variant -> RMSE.

    ``displacement`` shifts each bound value by +-displacement (fair coin,
    drawn after the training data from the same stream), carrying the same
    looseness; zero means exact bounds with the supplied looseness.
    """
    fn, rng, ds = _training_data(fn_name, n_train, seed)
    f_max_std, f_min_std = true_bounds(fn, ds.y_mean, ds.y_std)
    if displacement > 0:
        signs = np.where(rng.random(2) < 0.5, -1.0, 1.0)
    else:
        signs = rng.random(2) * 0.0  # keep the stream aligned across settings
    f_plus = f_max_std + (signs[0] if displacement else 0.0) * displacement
    f_minus = f_min_std + (signs[1] if displacement else 0.0) * displacement
    if not f_plus > f_minus:
        f_plus = f_minus + 1e-6
    bounds = ApproxBounds(f_plus=f_plus, eta_plus_sq=eta_plus_sq,
                          f_minus=f_minus, eta_minus_sq=eta_minus_sq)

    grid = sobol_points(TEST_GRID_SIZE, fn.d)
    f_true_std = (fn.evaluate_batch(grid) - ds.y_mean) / ds.y_std
    m_sel = min(m_select, M)
    out = {}

    def ranked(summaries, b):
        attach_weights(b, summaries)
        return rank_select(summaries, m_sel)

    need_gp = any(v.startswith(("gp", "w-gp")) for v in variants)
    if need_gp:
        gp = fit_gp(ds, optimize_hypers=True, rng=rng)
        samples = draw_samples(gp, draw_basis(gp, l, rng), M, rng)
        summaries = None
        if "gp" in variants:  # no ranking signal: the first m_select samples
            out["gp"] = _rmse_of(samples, list(range(m_sel)), grid, f_true_std)
        if "w-gp-plus" in variants or "w-gp-both" in variants:
            summaries = summarize_samples(samples)
        if "w-gp-plus" in variants:
            out["w-gp-plus"] = _rmse_of(samples, ranked(summaries, bounds.without_minus()),
                                        grid, f_true_std)
        if "w-gp-both" in variants:
            out["w-gp-both"] = _rmse_of(samples, ranked(summaries, bounds), grid, f_true_std)

    if "w-srgp-plus" in variants or "w-srgp-both" in variants:
        srgp, _ = fit_srgp(ds, bounds, optimize_hypers=True, rng=rng)
        samples = draw_samples(srgp, draw_basis(srgp, l, rng), M, rng)
        summaries = summarize_samples(samples)
        if "w-srgp-plus" in variants:
            out["w-srgp-plus"] = _rmse_of(samples, ranked(summaries, bounds.without_minus()),
                                          grid, f_true_std)
        if "w-srgp-both" in variants:
            out["w-srgp-both"] = _rmse_of(samples, ranked(summaries, bounds),
                                          grid, f_true_std)

    for kind, name in ((SINUSOIDAL, "sinusoidal"), (SIGMOID, "sigmoid")):
        if name not in variants:
            continue
        spec = TransformSpec(kind, f_plus=bounds.f_plus, f_minus=bounds.f_minus)
        ds_h, _ = to_h_space(ds, spec)
        gp_h = fit_gp(ds_h, optimize_hypers=True, rng=rng, space_tag="h-space")
        from dataclasses import replace

        gp_h = replace(gp_h, transform=spec)
        samples = draw_samples(gp_h, draw_basis(gp_h, l, rng), M, rng)
        summaries = summarize_samples(samples)
        out[name] = _rmse_of(samples, ranked(summaries, bounds), grid, f_true_std)
    return out


def _aggregate_rmse_rows(config, cells, key_fields):
    """cells: list of (key_dict, variant, per-rep values)."""
    rows = []
    for key, variant, vals in cells:
        vals = np.asarray(vals)
        std = vals.std(ddof=1) if len(vals) > 1 else 0.0
        row = dict(key)
        row.update({
            "variant": variant,
            "mean_rmse": f"{vals.mean():.8f}",
            "std_rmse": f"{std:.8f}",
            "stderr_rmse": f"{std / np.sqrt(len(vals)):.8f}",
            "reps": config.repetitions,
            "M": config.M, "m_select": min(config.m_select, config.M),
            "seed_base": config.base_seed,
        })
        rows.append(row)
    fields = key_fields + ["variant", "mean_rmse", "std_rmse", "stderr_rmse",
                           "reps", "M", "m_select", "seed_base"]
    return rows, fields


def run_sampling_rmse(config: ExperimentConfig) -> HarnessResult:
    """RMSE of the selected posterior samples against the true function on a
    fixed quasi-random grid, per sampler variant and training-set size."""
    if config.kind != "sampling-rmse":
        raise ValueError("config kind must be sampling-rmse")
    cells = []
    for fn_name in config.functions:
        d = make(fn_name).d
        eta_p, eta_m = _looseness(config, d)
        for n_mult in config.n_train_per_dim:
            jobs = [(_sampling_rmse_rep,
                     (fn_name, n_mult * d, config.M, config.m_select, config.l,
                      config.base_seed + r, eta_p, eta_m, 0.0, RMSE_VARIANTS))
                    for r in range(config.repetitions)]
            results = _parallel(config, jobs)
            for variant in RMSE_VARIANTS:
                key = {"function": fn_name, "d": d, "n_train": n_mult * d}
                cells.append((key, variant, [res[variant] for res in results]))
    rows, fields = _aggregate_rmse_rows(config, cells, ["function", "d", "n_train"])
    return HarnessResult(config, fields, rows, _header(config))


# ---------------------------------------------------------------------------
# misspecification and sample-count sweeps
# ---------------------------------------------------------------------------

SWEEP_VARIANTS = ("gp", "w-gp-both", "w-srgp-both")


def run_misspec_sweep(config: ExperimentConfig) -> HarnessResult:
    """Sweep the bound-misspecification level.

    Sampling target: displacement and looseness are both the scheduled value
    (exact bounds at zero, with a tiny ranking floor).  Optimization target:
    displacement is the scheduled value while looseness keeps the run
    defaults, so the zero row is the exact-bound run bit for bit.
    """
    if config.kind != "misspec-sweep":
        raise ValueError("config kind must be misspec-sweep")
    if config.misspec_target == "bo":
        return _misspec_sweep_bo(config)
    cells = []
    for fn_name in config.functions:
        d = make(fn_name).d
        for n_mult in config.n_train_per_dim:
            for eta_sq in config.eta_schedule:
                loose = max(eta_sq, 1e-12)
                jobs = [(_sampling_rmse_rep,
                         (fn_name, n_mult * d, config.M, config.m_select, config.l,
                          config.base_seed + r, loose, loose, eta_sq, SWEEP_VARIANTS))
                        for r in range(config.repetitions)]
                results = _parallel(config, jobs)
                for variant in SWEEP_VARIANTS:
                    key = {"function": fn_name, "d": d, "n_train": n_mult * d,
                           "eta_sq": f"{eta_sq:g}"}
                    cells.append((key, variant, [res[variant] for res in results]))
    rows, fields = _aggregate_rmse_rows(config, cells,
                                        ["function", "d", "n_train", "eta_sq"])
    return HarnessResult(config, fields, rows, _header(config))


def run_m_sweep(config: ExperimentConfig) -> HarnessResult:
    """Sweep the number of posterior samples at fixed selection size."""
    if config.kind != "m-sweep":
        raise ValueError("config kind must be m-sweep")
    variants = ("w-gp-both", "w-srgp-both")
    cells = []
    for fn_name in config.functions:
        d = make(fn_name).d
        eta_p, eta_m = _looseness(config, d)
        for n_mult in config.n_train_per_dim:
            for M in config.m_schedule:
                jobs = [(_sampling_rmse_rep,
                         (fn_name, n_mult * d, M, min(config.m_select, M), config.l,
                          config.base_seed + r, eta_p, eta_m, 0.0, variants))
                        for r in range(config.repetitions)]
                results = _parallel(config, jobs)
                for variant in variants:
                    key = {"function": fn_name, "d": d, "n_train": n_mult * d, "M": M}
                    cells.append((key, variant, [res[variant] for res in results]))
    rows, fields = [], []
    for key, variant, vals in cells:
        vals = np.asarray(vals)
        std = vals.std(ddof=1) if len(vals) > 1 else 0.0
        row = dict(key)
        row.update({"variant": variant, "mean_rmse": f"{vals.mean():.8f}",
                    "std_rmse": f"{std:.8f}",
                    "stderr_rmse": f"{std / np.sqrt(len(vals)):.8f}",
                    "reps": config.repetitions,
                    "m_select": min(config.m_select, key["M"]),
                    "seed_base": config.base_seed})
        rows.append(row)
    fields = ["function", "d", "n_train", "M", "variant", "mean_rmse", "std_rmse",
              "stderr_rmse", "reps", "m_select", "seed_base"]
    return HarnessResult(config, fields, rows, _header(config))


# ---------------------------------------------------------------------------
# optimization regret traces
# ---------------------------------------------------------------------------


def _bo_rep(fn_name: str, acq: str, seed: int, M: int, l: int, T: int | None,
            misspec_eta_sq: float, eta_plus_sq: float | None,
            eta_minus_sq: float | None):
    bounds_mode = "both" if acq in ("bes", "bes-nw") else "none"
    cfg = BoConfig(function=fn_name, acquisition=acq, bounds_mode=bounds_mode,
                   eta_plus_sq=eta_plus_sq, eta_minus_sq=eta_minus_sq,
                   misspec_eta_sq=misspec_eta_sq, T=T, M=M, l=l, seed=seed)
    return run_bo(cfg)


def _bo_rows(config: ExperimentConfig, traces, extra_key: dict | None = None):
    rows = []
    chash = config.hash()
    for fn_name, acq, seed, trace in traces:
        for rec in trace.row_dicts():
            row = {"function": fn_name, "acq": acq, "seed": seed,
                   "config_hash": chash}
            if extra_key:
                row.update(extra_key)
            row.update(rec)
            rows.append(row)
    return rows


def run_bo_regret(config: ExperimentConfig) -> HarnessResult:
    """Per-iteration regret traces for each (function, acquisition, seed)."""
    if config.kind != "bo-regret":
        raise ValueError("config kind must be bo-regret")
    traces = []
    for fn_name in config.functions:
        for acq in config.acquisitions:
            jobs = [(_bo_rep, (fn_name, acq, config.base_seed + r, config.M,
                               config.l, config.T, 0.0, config.eta_plus_sq,
                               config.eta_minus_sq))
                    for r in range(config.repetitions)]
            results = _parallel(config, jobs)
            traces.extend((fn_name, acq, config.base_seed + r, tr)
                          for r, tr in enumerate(results))
    rows = _bo_rows(config, traces)
    fields = ["function", "acq", "seed", "config_hash", "t", "x", "y_raw",
              "acq_used", "n_accepted", "best_raw", "regret", "inferred_x",
              "inferred_f_raw", "wall_time"]
    return HarnessResult(config, fields, rows, _header(config),
                         extras={"traces": traces})


def _misspec_sweep_bo(config: ExperimentConfig) -> HarnessResult:
    traces, keyed = [], []
    for fn_name in config.functions:
        for eta_sq in config.eta_schedule:
            for acq in config.acquisitions:
                jobs = [(_bo_rep, (fn_name, acq, config.base_seed + r, config.M,
                                   config.l, config.T, eta_sq, config.eta_plus_sq,
                                   config.eta_minus_sq))
                        for r in range(config.repetitions)]
                results = _parallel(config, jobs)
                for r, tr in enumerate(results):
                    keyed.append((fn_name, acq, config.base_seed + r, tr, eta_sq))
    rows = []
    chash = config.hash()
    for fn_name, acq, seed, trace, eta_sq in keyed:
        for rec in trace.row_dicts():
            row = {"function": fn_name, "acq": acq, "eta_sq": f"{eta_sq:g}",
                   "seed": seed, "config_hash": chash}
            row.update(rec)
            rows.append(row)
    fields = ["function", "acq", "eta_sq", "seed", "config_hash", "t", "x",
              "y_raw", "acq_used", "n_accepted", "best_raw", "regret",
              "inferred_x", "inferred_f_raw", "wall_time"]
    return HarnessResult(config, fields, rows, _header(config),
                         extras={"traces": keyed})
