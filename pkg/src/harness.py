"""
Experiment orchestration.

Builds instances z = x + s + eta from seeded generators, runs ASAP and/or SAP
over grids of cells in a joblib worker pool and writes per-trial and summary
CSVs. Every trial seed derives from (base seed, cell index, trial index), so
the non-timing columns do not depend on the number of workers.
"""

import json
import logging
import math
import os
import re
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed, parallel_config

from src.asap import (
    DEFAULT_EPSILON,
    DEFAULT_GAMMA,
    DEFAULT_MAX_ITER,
    RecoveryParams,
    RecoveryResult,
    SparseEstimate,
    asap_recover,
    default_params,
)
from src.baselines import sap_recover
from src.errors import InvalidSpecError, RecoveryError
from src.hankel_core import ComplexSignal
from src.signal_io import (
    ensure_writable,
    read_signal,
    write_report,
    write_signal,
    write_sparse,
    write_trials,
)
from src.simgen import (
    NOISELESS,
    CorruptionSpec,
    NoiseSpec,
    SpectralModel,
    add_noise,
    derive_seed,
    gen_corruptions,
    gen_signal,
    make_rng,
    output_snr,
    relative_error,
)
from src.spectral_estimation import esprit_model, match_components, power_spectrum


# ================================
# CONFIGURATION CONSTANTS
# ================================

SUCCESS_TOL = 1e-3            # trial succeeds when ||x_hat - x|| / ||x|| <= SUCCESS_TOL
DEFAULT_BASE_SEED = 2020
IMPULSE_SCALE = 10.0
IMPULSE_PAIRS = [(0.2, 0.6), (0.3, 0.7), (0.4, 0.8), (0.5, 0.9)]

KINDS = ("phase_transition", "efficiency", "noise", "impulse", "recover")
ALGORITHMS = ("asap", "sap", "both")
RECOVERERS = {"asap": asap_recover, "sap": sap_recover}

_PER_N = re.compile(r"^\s*([0-9.eE+-]+)\s*/\s*n\s*$")


# ================================
# CONFIGURATION
# ================================

@dataclass
class ExperimentConfig:
    """
    Declarative description of an experiment (one YAML file).

    Grid axes are lists; the kind decides which ones are swept and which only
    contribute their first value. Corruptions are given either as counts ``m``
    or as rates ``alpha``.
    """
    kind: str
    n: List[int] = field(default_factory=lambda: [125])
    r: List[int] = field(default_factory=lambda: [5])
    m: Optional[List[int]] = None
    alpha: Optional[List[float]] = None
    c: List[float] = field(default_factory=lambda: [1.0])
    gamma: List[float] = field(default_factory=lambda: [DEFAULT_GAMMA])
    snr_db: List[float] = field(default_factory=lambda: [NOISELESS])
    pairs: Optional[List[Tuple[float, float]]] = None
    trials: int = 1
    seed: int = DEFAULT_BASE_SEED
    algorithm: str = "asap"
    out: str = "results"
    threads: int = 1
    epsilon: float = DEFAULT_EPSILON
    max_iter: int = DEFAULT_MAX_ITER
    separation: Optional[Any] = None
    damped: bool = False
    input: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            InvalidSpecError: Unknown kind/algorithm, empty axes, trials < 1.
        """
        if self.kind not in KINDS:
            raise InvalidSpecError(f"Unknown experiment kind '{self.kind}' (expected one of {KINDS})")
        if self.algorithm not in ALGORITHMS:
            raise InvalidSpecError(f"Unknown algorithm '{self.algorithm}' (expected one of {ALGORITHMS})")
        for name in ("n", "r", "c", "gamma", "snr_db"):
            if not getattr(self, name):
                raise InvalidSpecError(f"Grid axis '{name}' must be non-empty")
        for name in ("m", "alpha", "pairs"):
            value = getattr(self, name)
            if value is not None and len(value) == 0:
                raise InvalidSpecError(f"Grid axis '{name}' must be non-empty when given")
        if self.trials < 1:
            raise InvalidSpecError(f"trials must be >= 1, got {self.trials}")
        if self.threads < 1:
            raise InvalidSpecError(f"threads must be >= 1, got {self.threads}")

    @property
    def corruption_axis(self) -> List[Tuple[Optional[int], Optional[float]]]:
        """(count, rate) pairs; exactly one of the two is set per entry."""
        if self.m is not None:
            return [(int(m), None) for m in self.m]
        if self.alpha is not None:
            return [(None, float(a)) for a in self.alpha]
        return [(0, None)]

    def separation_for(self, n: int) -> Optional[float]:
        """Resolve ``separation``: null, a number, or 'k/n'."""
        if self.separation is None:
            return None
        if isinstance(self.separation, str):
            match = _PER_N.match(self.separation)
            if not match:
                raise InvalidSpecError(f"separation must be a number or 'k/n', got '{self.separation}'")
            return float(match.group(1)) / n
        return float(self.separation)

    @property
    def methods(self) -> List[str]:
        return ["asap", "sap"] if self.algorithm == "both" else [self.algorithm]

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with non-None overrides applied (flags over file values)."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidSpecError(f"Unknown config keys: {unknown}")
        values = dict(data)
        if values.get("kind") == "impulse" and values.get("c") is None:
            values["c"] = [IMPULSE_SCALE]
        for axis in ("n", "r", "m", "alpha", "c", "gamma", "snr_db"):
            if axis in values and values[axis] is not None and not isinstance(values[axis], list):
                values[axis] = [values[axis]]
        if "snr_db" in values:
            values["snr_db"] = [_as_snr(v) for v in values["snr_db"]]
        if values.get("pairs") is not None:
            values["pairs"] = [tuple(float(v) for v in p) for p in values["pairs"]]
        return cls(**values)

    @classmethod
    def from_yaml(cls, path: str) -> "ExperimentConfig":
        """
        Raises:
            InvalidSpecError: If the file is not a YAML mapping or has bad keys.
        """
        with open(path, encoding="utf-8") as f:
            try:
                data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise InvalidSpecError(f"Cannot parse config {path}: {e}") from e
        if not isinstance(data, dict):
            raise InvalidSpecError(f"Config {path} must be a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


def _as_snr(value) -> float:
    """YAML has no infinity literal everyone agrees on; accept 'inf'."""
    if value is None:
        return NOISELESS
    return float(value)


# ================================
# TRIALS
# ================================

@dataclass(frozen=True)
class TrialCell:
    """One grid point; every trial in the cell shares these values."""
    index: int
    n: int
    r: int
    m: int
    alpha: float
    c: float
    gamma: float
    snr_db: float = NOISELESS


@dataclass
class TrialRecord:
    """One (instance, method) outcome. success <=> rel_error <= SUCCESS_TOL."""
    kind: str
    method: str
    cell: int
    trial: int
    seed: int
    n: int
    r: int
    m: int
    alpha: float
    c: float
    gamma: float
    snr_db: float
    success: bool
    rel_error: float
    iterations: int
    converged: bool
    output_snr: float
    freq_error: float
    method_gap: float
    wall_time: float
    init_time: float
    time_per_iteration: float

    def to_dict(self) -> dict:
        return asdict(self)


TIMING_COLUMNS = ("wall_time", "init_time", "time_per_iteration")


class Instance(NamedTuple):
    x: ComplexSignal
    model: Optional[SpectralModel]
    s: SparseEstimate
    eta: ComplexSignal
    z: ComplexSignal


def frequency_error(model: Optional[SpectralModel], x_hat: ComplexSignal, r: int) -> float:
    """
    Largest wrap-around distance between the true frequencies and ESPRIT's
    estimates on x_hat. NaN without a ground-truth model, inf when ESPRIT fails.
    """
    if model is None:
        return math.nan
    try:
        return float(np.max(match_components(model, esprit_model(x_hat, r))))
    except RecoveryError as e:
        logging.debug(f"Frequency error unavailable: {e}")
        return math.inf


def make_instance(
    n: int,
    r: int,
    m: int,
    c: float,
    snr_db: float = NOISELESS,
    seed: Optional[int] = None,
    separation: Optional[float] = None,
    damped: bool = False,
    x: Optional[ComplexSignal] = None,
) -> Instance:
    """
    Draw x (unless given), then the corruption s, then the noise eta, all from
    one Philox stream seeded with ``seed``.
    """
    rng = make_rng(seed)
    model = None
    if x is None:
        x, model = gen_signal(n, r, separation=separation, damped=damped, seed=rng)
    s = gen_corruptions(x, CorruptionSpec(scale=c, count=m), rng=rng)
    if math.isinf(snr_db) and snr_db > 0:
        eta = np.zeros_like(x)
    else:
        eta, _ = add_noise(x, NoiseSpec(snr_db=snr_db), rng=rng)
    return Instance(x=x, model=model, s=s, eta=eta, z=x + s.to_dense() + eta)


def _solve(z: ComplexSignal, cell: TrialCell, method: str, epsilon: float, max_iter: int) -> RecoveryResult:
    params = default_params(z, cell.r, gamma=cell.gamma, epsilon=epsilon, max_iter=max_iter)
    return RECOVERERS[method](z, params)


def run_trial(
    kind: str,
    cell: TrialCell,
    trial: int,
    base_seed: int,
    methods: List[str],
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_MAX_ITER,
    separation: Optional[float] = None,
    damped: bool = False,
    x: Optional[ComplexSignal] = None,
) -> List[TrialRecord]:
    """
    Generate one instance and recover it with each method.

    Numerical failures inside a recovery are logged and recorded as a failed
    trial (rel_error = inf) instead of aborting the sweep.
    """
    seed = derive_seed(base_seed, cell.index, trial)
    inst = make_instance(cell.n, cell.r, cell.m, cell.c, cell.snr_db, seed, separation, damped, x=x)

    outcomes = {}
    for method in methods:
        try:
            outcomes[method] = _solve(inst.z, cell, method, epsilon, max_iter)
        except RecoveryError as e:
            logging.warning(f"[{kind}] cell={cell.index} trial={trial} {method} failed: {e}")
            outcomes[method] = None

    gap = 0.0
    if len(methods) == 2 and all(outcomes[m] is not None for m in methods):
        a, b = (outcomes[m].x_hat for m in methods)
        gap = float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))

    records = []
    for method in methods:
        result = outcomes[method]
        if result is None:
            rel, iters, conv, snr, wall, init, per = math.inf, 0, False, -math.inf, 0.0, 0.0, 0.0
            freq = math.inf if inst.model is not None else math.nan
        else:
            rel = relative_error(inst.x, result.x_hat)
            iters, conv = result.iterations, result.converged
            snr = output_snr(inst.x, result.x_hat)
            freq = frequency_error(inst.model, result.x_hat, cell.r)
            wall, init, per = result.wall_time, result.init_time, result.time_per_iteration
        records.append(TrialRecord(
            kind=kind, method=method, cell=cell.index, trial=trial, seed=seed,
            n=cell.n, r=cell.r, m=cell.m, alpha=cell.alpha, c=cell.c, gamma=cell.gamma, snr_db=cell.snr_db,
            success=bool(rel <= SUCCESS_TOL), rel_error=rel, iterations=iters, converged=conv,
            output_snr=snr, freq_error=freq, method_gap=gap, wall_time=wall, init_time=init, time_per_iteration=per,
        ))
    return records


def _run_cells(config: ExperimentConfig, cells: List[TrialCell], x: Optional[ComplexSignal] = None) -> List[TrialRecord]:
    """Fan (cell, trial) pairs out to the pool; results come back in submission order."""
    jobs = [
        delayed(run_trial)(
            config.kind, cell, trial, config.seed, config.methods,
            config.epsilon, config.max_iter, config.separation_for(cell.n), config.damped, x,
        )
        for cell in cells
        for trial in range(config.trials)
    ]
    logging.info(f"[{config.kind}] {len(cells)} cells x {config.trials} trials on {config.threads} worker(s)")
    start = time.perf_counter()
    # Each trial stays single-threaded so per-iteration timings stay comparable.
    with parallel_config(backend="loky", inner_max_num_threads=1):
        batches = Parallel(n_jobs=config.threads)(jobs)
    logging.info(f"[{config.kind}] finished in {time.perf_counter() - start:.1f}s")
    return [record for batch in batches for record in batch]


def _cell(index: int, n: int, r: int, corruption, c: float, gamma: float, snr_db: float = NOISELESS) -> TrialCell:
    count, rate = corruption
    m = CorruptionSpec(scale=c, count=count, rate=rate).resolve_count(n)
    alpha = float(rate) if rate is not None else m / n
    return TrialCell(index=index, n=int(n), r=int(r), m=m, alpha=alpha, c=float(c), gamma=float(gamma), snr_db=float(snr_db))


def _output_paths(config: ExperimentConfig, *names: str) -> List[str]:
    """Resolve and check output files before any trial runs."""
    return [ensure_writable(os.path.join(config.out, f"{config.kind}_{name}.csv")) for name in names]


def _require(config: ExperimentConfig, kind: str) -> None:
    if config.kind != kind:
        raise InvalidSpecError(f"Expected a '{kind}' config, got '{config.kind}'")


# ================================
# SUMMARIES
# ================================

class ExperimentOutput(NamedTuple):
    records: List[TrialRecord]
    table: pd.DataFrame
    paths: List[str]


def summarize_trials(records: List[TrialRecord], by: Tuple[str, ...] = ("method", "cell")) -> pd.DataFrame:
    """
    Aggregate trial records per cell: success rate, mean/median wall time,
    mean per-iteration time, mean iterations, mean output SNR and the worst
    frequency error (NaN for user-supplied signals).
    """
    df = pd.DataFrame([r.to_dict() for r in records])
    coords = ["n", "r", "m", "alpha", "c", "gamma", "snr_db"]
    keys = list(by) + [c for c in coords if c not in by]
    summary = df.groupby(keys, sort=True).agg(
        trials=("trial", "size"),
        success_rate=("success", "mean"),
        mean_rel_error=("rel_error", "mean"),
        mean_iterations=("iterations", "mean"),
        mean_time=("wall_time", "mean"),
        median_time=("wall_time", "median"),
        mean_time_per_iteration=("time_per_iteration", "mean"),
        mean_output_snr=("output_snr", "mean"),
        max_freq_error=("freq_error", "max"),
        mean_method_gap=("method_gap", "mean"),
    )
    return summary.reset_index()


# ================================
# EXPERIMENTS
# ================================

def run_phase_transition(config: ExperimentConfig) -> ExperimentOutput:
    """
    Success rate over the (r, m) grid at fixed n, c and gamma.

    Writes ``phase_transition_trials.csv`` and ``phase_transition_success.csv``
    (rows m, columns r; one matrix per method stacked with a method column).
    """
    _require(config, "phase_transition")
    trials_path, success_path = _output_paths(config, "trials", "success")
    n, c, gamma = config.n[0], config.c[0], config.gamma[0]
    cells = [
        _cell(i, n, r, corruption, c, gamma)
        for i, (corruption, r) in enumerate((cor, r) for cor in config.corruption_axis for r in config.r)
    ]
    records = _run_cells(config, cells)
    write_trials(trials_path, records)

    summary = summarize_trials(records)
    matrix = summary.pivot_table(index=["method", "m"], columns="r", values="success_rate").reset_index()
    matrix.columns = [str(col) for col in matrix.columns]
    matrix.to_csv(success_path, index=False, float_format="%.17g")
    for method in config.methods:
        rate = summary.loc[summary["method"] == method, "success_rate"].mean()
        logging.info(f"[phase_transition] {method}: mean success rate {rate:.3f}")
    return ExperimentOutput(records=records, table=matrix, paths=[trials_path, success_path])


def run_efficiency(config: ExperimentConfig) -> ExperimentOutput:
    """Total and per-iteration time of each method across the n axis."""
    _require(config, "efficiency")
    trials_path, table_path = _output_paths(config, "trials", "runtime")
    r, c, gamma = config.r[0], config.c[0], config.gamma[0]
    corruption = config.corruption_axis[0]
    cells = [_cell(i, n, r, corruption, c, gamma) for i, n in enumerate(config.n)]
    records = _run_cells(config, cells)
    write_trials(trials_path, records)

    table = summarize_trials(records, by=("method", "n"))
    table.to_csv(table_path, index=False, float_format="%.17g")
    for row in table.itertuples():
        logging.info(f"[efficiency] {row.method} n={row.n}: {row.mean_time:.3f}s total, "
                     f"{row.mean_time_per_iteration * 1e3:.2f}ms/iter")
    return ExperimentOutput(records=records, table=table, paths=[trials_path, table_path])


def run_noise(config: ExperimentConfig) -> ExperimentOutput:
    """Output SNR over the (snr_db, corruption, c) grid."""
    _require(config, "noise")
    trials_path, table_path = _output_paths(config, "trials", "snr")
    n, r, gamma = config.n[0], config.r[0], config.gamma[0]
    cells = []
    for snr in config.snr_db:
        for corruption in config.corruption_axis:
            for c in config.c:
                cells.append(_cell(len(cells), n, r, corruption, c, gamma, snr))
    records = _run_cells(config, cells)
    write_trials(trials_path, records)

    table = summarize_trials(records)
    table.to_csv(table_path, index=False, float_format="%.17g")
    return ExperimentOutput(records=records, table=table, paths=[trials_path, table_path])


def run_impulse(config: ExperimentConfig) -> ExperimentOutput:
    """
    Large impulsive corruptions (c = 10 unless configured) at the (alpha, gamma)
    pairs, ASAP against SAP on the same instances.

    The clean signal is read from ``config.input`` when given, generated
    otherwise. Besides the timing table, the power spectra of the clean,
    corrupted and recovered signals of the first trial of each cell are written
    to ``impulse_spectra_<cell>.csv``.
    """
    _require(config, "impulse")
    config = replace(config, algorithm="both")
    trials_path, table_path = _output_paths(config, "trials", "timing")
    pairs = config.pairs or IMPULSE_PAIRS
    c = config.c[0]
    r = config.r[0]

    x = read_signal(config.input) if config.input else None
    n = x.size if x is not None else config.n[0]
    cells = [_cell(i, n, r, (None, alpha), c, gamma) for i, (alpha, gamma) in enumerate(pairs)]
    spectra_paths = _output_paths(config, *[f"spectra_{cell.index}" for cell in cells])

    records = _run_cells(config, cells, x=x)
    write_trials(trials_path, records)
    table = summarize_trials(records)
    table.to_csv(table_path, index=False, float_format="%.17g")

    for cell, path in zip(cells, spectra_paths):
        seed = derive_seed(config.seed, cell.index, 0)
        inst = make_instance(cell.n, cell.r, cell.m, cell.c, cell.snr_db, seed,
                             config.separation_for(cell.n), config.damped, x=x)
        freqs, clean = power_spectrum(inst.x)
        columns = {"freq": freqs, "clean": clean, "corrupted": power_spectrum(inst.z)[1]}
        for method in config.methods:
            try:
                columns[method] = power_spectrum(_solve(inst.z, cell, method, config.epsilon, config.max_iter).x_hat)[1]
            except RecoveryError as e:
                logging.warning(f"[impulse] spectrum for {method} in cell {cell.index} skipped: {e}")
        pd.DataFrame(columns).to_csv(path, index=False, float_format="%.17g")

    for row in table.itertuples():
        logging.info(f"[impulse] {row.method} alpha={row.alpha} gamma={row.gamma}: "
                     f"{row.mean_time:.3f}s, success {row.success_rate:.2f}")
    return ExperimentOutput(records=records, table=table, paths=[trials_path, table_path] + spectra_paths)


def recover_file(
    input_path: str,
    out_dir: str,
    r: int,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_MAX_ITER,
    **overrides,
) -> Tuple[RecoveryResult, RecoveryParams]:
    """
    Recover a signal stored as a `re,im` CSV.

    Writes ``x_hat.csv``, ``s_hat.csv`` and ``report.json`` to ``out_dir``,
    also when the run did not converge.

    Args:
        overrides: beta / beta_init / beta_rule / x_inf_bound.

    Raises:
        OutputPathError: If out_dir is not writable (checked first).
        SignalFileError: If the input does not parse.
    """
    paths = [ensure_writable(os.path.join(out_dir, name)) for name in ("x_hat.csv", "s_hat.csv", "report.json")]
    z = read_signal(input_path)
    rule = {k: overrides.pop(k) for k in ("beta_rule", "x_inf_bound") if overrides.get(k) is not None}
    params = default_params(z, r, gamma=gamma, epsilon=epsilon, max_iter=max_iter, **rule)
    params = params.with_overrides(**overrides)
    result = asap_recover(z, params)

    write_signal(paths[0], result.x_hat)
    write_sparse(paths[1], result.s_hat)
    write_report(paths[2], result.to_report(params))
    logging.info(f"[recover] {input_path}: {result.iterations} iterations, converged={result.converged}, "
                 f"|supp(s)|={result.s_hat.size}")
    return result, params


def write_instance(inst: Instance, out_dir: str) -> List[str]:
    """Write x.csv, s.csv, z.csv and model.json of a generated instance."""
    paths = [ensure_writable(os.path.join(out_dir, name)) for name in ("x.csv", "s.csv", "z.csv", "model.json")]
    write_signal(paths[0], inst.x)
    write_sparse(paths[1], inst.s)
    write_signal(paths[2], inst.z)
    if inst.model is not None:
        with open(paths[3], "w", encoding="utf-8") as f:
            json.dump(inst.model.to_dict(), f, indent=2)
    return paths


RUNNERS = {
    "phase_transition": run_phase_transition,
    "efficiency": run_efficiency,
    "noise": run_noise,
    "impulse": run_impulse,
}


def run_experiment(config: ExperimentConfig) -> ExperimentOutput:
    """Dispatch on config.kind."""
    if config.kind not in RUNNERS:
        raise InvalidSpecError(f"Kind '{config.kind}' is not a sweep; use recover_file")
    return RUNNERS[config.kind](config)
