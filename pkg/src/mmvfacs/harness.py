"""Seeded Monte-Carlo sweeps, SRER/ASRER metrics and CSV/JSON reporting.

Every trial draws its own (A, X, W) from ``mix_seed(seed, axis_index,
trial_index)``, so the trials are independent work units. They may run in a
process pool (size from ``MMVFACS_THREADS``, 0 = one per CPU); results are
always reduced in (axis_index, trial_index) order, which keeps the output
files byte-identical between runs.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigInvalid, DimensionMismatch, MalformedCsv, MMVError, TrialFailed, ZeroSignal
from .fusion import fuse
from .linalg import top_k_rows
from .model import SignalKind, gen_matrix, make_instance, mix_seed, parse_smnr, realized_smnr_db
from .solvers import SolverConfig, SolverId, run_solver

log = logging.getLogger(__name__)

CSV_COLUMNS = ("axis_name", "axis_value", "method", "n_trials", "asrer_db",
               "mean_precision", "mean_recall")
AXES = {"M_list": "M", "L_list": "L", "smnr_list": "smnr_db"}
EXCLUDING_FLAGS = ("nonconvergence", "solver_error", "participant_failed")
ERROR_FLOOR = 1e-30


def srer(X, X_hat) -> float:
    """``||X||_F^2 / ||X - X_hat||_F^2``; ``inf`` when the error energy is below 1e-30."""
    X = np.asarray(X, dtype=np.float64)
    sig = float(np.sum(X * X))
    if sig == 0.0:
        raise ZeroSignal("SRER is undefined for a zero signal")
    E = X - np.asarray(X_hat, dtype=np.float64)
    err = float(np.sum(E * E))
    return math.inf if err < ERROR_FLOOR else sig / err


def asrer_db(signal_energies: Sequence[float], error_energies: Sequence[float]) -> float:
    """Aggregate SRER in dB: ratio of the summed energies, never a mean of ratios."""
    sig = math.fsum(signal_energies)
    err = math.fsum(error_energies)
    if err < ERROR_FLOOR:
        return math.inf
    if sig == 0.0:
        return -math.inf
    return 10.0 * math.log10(sig / err)


def fusion_id(combo: Sequence[str]) -> str:
    return "FACS(" + "+".join(SolverId(s).value for s in combo) + ")"


@dataclass
class ExperimentConfig:
    N: int
    K: int
    n_trials: int
    seed: int
    solvers: list
    fusion_combos: list = field(default_factory=list)
    L: int | None = None
    M: int | None = None
    smnr_db: float | None = None
    M_list: list = field(default_factory=list)
    L_list: list = field(default_factory=list)
    smnr_list: list = field(default_factory=list)
    signal_kind: str = "gaussian"
    output_path: str = "results"
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    prune_union: bool = False
    strict: bool = True
    full: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        try:
            d["solver_config"] = SolverConfig.from_dict(d.get("solver_config"))
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad solver_config: {exc}") from exc
        if "smnr_db" in d:
            d["smnr_db"] = parse_smnr(d["smnr_db"])
        if "smnr_list" in d:
            d["smnr_list"] = [parse_smnr(x) for x in d["smnr_list"]]
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from exc

    @property
    def axis(self) -> tuple[str, list]:
        active = [(AXES[k], getattr(self, k)) for k in AXES if getattr(self, k)]
        if len(active) != 1:
            raise ConfigInvalid("exactly one of M_list, L_list, smnr_list must be non-empty")
        return active[0]

    def point(self, axis_value) -> tuple[int, int, float]:
        """``(M, L, smnr_db)`` at one value of the sweep axis."""
        name, _ = self.axis
        M = int(axis_value) if name == "M" else self.M
        L = int(axis_value) if name == "L" else self.L
        smnr = float(axis_value) if name == "smnr_db" else self.smnr_db
        return M, L, (math.inf if smnr is None else smnr)

    @property
    def methods(self) -> list[str]:
        return [SolverId(s).value for s in self.solvers] + [fusion_id(c) for c in self.fusion_combos]

    def validate(self) -> None:
        name, values = self.axis
        try:
            ids = [SolverId(s) for s in self.solvers]
            combos = [[SolverId(s) for s in c] for c in self.fusion_combos]
            SignalKind(self.signal_kind)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc
        if not ids:
            raise ConfigInvalid("at least one solver is required")
        if self.n_trials < 1 or self.N < 1 or self.K < 0:
            raise ConfigInvalid("need n_trials >= 1, N >= 1, K >= 0")
        for c in combos:
            if len(c) < 2:
                raise ConfigInvalid(f"fusion combo {c} needs at least two participants")
            missing = [s.value for s in c if s not in ids]
            if missing:
                raise ConfigInvalid(f"fusion participants {missing} are not in solvers")
        if name != "M" and self.M is None:
            raise ConfigInvalid("M is required unless M is the sweep axis")
        if name != "L" and self.L is None:
            raise ConfigInvalid("L is required unless L is the sweep axis")
        for v in values:
            M, L, _ = self.point(v)
            if not self.K <= M <= self.N:
                raise ConfigInvalid(f"need K <= M <= N, got K={self.K}, M={M}, N={self.N}")
            if L < 1:
                raise ConfigInvalid("L must be >= 1")
            if SolverId.MSP in ids and 2 * self.K > M:
                raise ConfigInvalid(f"MSP needs 2K <= M, got K={self.K}, M={M}")
            for c in combos:
                if len(c) * self.K > M and not self.prune_union:
                    raise ConfigInvalid(
                        f"{fusion_id(c)}: P*K = {len(c) * self.K} > M = {M}; enable prune_union")


@dataclass
class TrialRecord:
    axis_name: str
    axis_index: int
    axis_value: float
    trial_index: int
    method: str
    signal_energy: float
    error_energy: float
    support_precision: float
    support_recall: float
    residual_fro: float
    realized_smnr_db: float
    flags: list = field(default_factory=list)
    union_recall: float | None = None

    @property
    def excluded(self) -> bool:
        return any(f.split(":")[0] in EXCLUDING_FLAGS for f in self.flags)

    def to_dict(self) -> dict:
        return {f.name: _json_float(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        out = dict(d)
        for key in ("axis_value", "signal_energy", "error_energy", "support_precision",
                    "support_recall", "residual_fro", "realized_smnr_db"):
            out[key] = float(out[key])
        return cls(**out)


def _json_float(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


@dataclass
class SweepResult:
    axis_name: str
    axis_value: float
    n_trials: dict
    asrer_db: dict
    mean_precision: dict
    mean_recall: dict

    @property
    def methods(self) -> list[str]:
        return list(self.asrer_db)


def _overlap(a: np.ndarray, b: np.ndarray) -> int:
    return int(np.intersect1d(a, b).size)


def _run_trial(cfg: ExperimentConfig, job: tuple[int, float, int], fixed_X=None) -> list[TrialRecord]:
    axis_index, axis_value, trial_index = job
    axis_name, _ = cfg.axis
    M, L, smnr = cfg.point(axis_value)
    K = cfg.K
    child = mix_seed(cfg.seed, axis_index, trial_index)
    if fixed_X is None:
        inst = make_instance(M, cfg.N, K, L, cfg.signal_kind, smnr, child)
        A, X, W, B, T = inst.A, inst.X, inst.W, inst.B, inst.support
    else:
        A = gen_matrix(M, cfg.N, mix_seed(child, 0)).A
        X = fixed_X
        W = np.zeros((M, X.shape[1]))
        B = A @ X
        T = top_k_rows(X, K)
    sig_energy = float(np.sum(X * X))
    realized = realized_smnr_db(X, W)

    def record(method, X_hat, support, residual, flags, union_recall=None):
        E = X - X_hat
        hits = _overlap(support, T)
        return TrialRecord(axis_name, axis_index, float(axis_value), trial_index, method,
                           sig_energy, float(np.sum(E * E)),
                           hits / K if K else 1.0, hits / T.size if T.size else 1.0,
                           residual, realized, flags, union_recall)

    def failed(method, flag):
        nan = math.nan
        return TrialRecord(axis_name, axis_index, float(axis_value), trial_index, method,
                           sig_energy, nan, nan, nan, nan, realized, [flag])

    records = []
    outputs = {}
    for sid in cfg.solvers:
        sid = SolverId(sid)
        try:
            out = run_solver(sid, A, B, K, cfg.solver_config, true_support=T)
        except MMVError as exc:
            if cfg.strict:
                raise TrialFailed(f"{sid.value} failed at {axis_name}={axis_value}, "
                                  f"trial {trial_index}: {exc}") from exc
            records.append(failed(sid.value, f"solver_error:{type(exc).__name__}"))
            continue
        flags = []
        if not out.converged:
            if cfg.strict:
                raise TrialFailed(f"{sid.value} did not converge at {axis_name}={axis_value}, "
                                  f"trial {trial_index}")
            flags.append("nonconvergence")
        outputs[sid] = out
        records.append(record(sid.value, out.X_hat, out.support, out.residual_fro, flags))

    for combo in cfg.fusion_combos:
        name = fusion_id(combo)
        parts = [outputs.get(SolverId(s)) for s in combo]
        if any(p is None or not p.converged for p in parts):
            records.append(failed(name, "participant_failed"))
            continue
        try:
            fo = fuse(A, B, K, [p.support for p in parts], prune_union=cfg.prune_union)
        except MMVError as exc:
            if cfg.strict:
                raise TrialFailed(f"{name} failed at {axis_name}={axis_value}, "
                                  f"trial {trial_index}: {exc}") from exc
            records.append(failed(name, f"solver_error:{type(exc).__name__}"))
            continue
        residual = float(np.linalg.norm(B - A @ fo.X_hat))
        union_recall = _overlap(fo.gamma, T) / T.size if T.size else 1.0
        records.append(record(name, fo.X_hat, fo.support, residual, list(fo.flags), union_recall))
    return records


def worker_count() -> int:
    raw = os.environ.get("MMVFACS_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigInvalid(f"MMVFACS_THREADS must be an integer, got {raw!r}") from None
    return n if n > 0 else (os.cpu_count() or 1)


def _execute(cfg: ExperimentConfig, jobs: list, fixed_X=None) -> list[TrialRecord]:
    fn = partial(_run_trial, cfg, fixed_X=fixed_X)
    n = min(worker_count(), len(jobs))
    if n <= 1:
        chunks = map(fn, jobs)
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            chunks = list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * n))))
    return [r for chunk in chunks for r in chunk]


def aggregate(records: Sequence[TrialRecord], methods: Sequence[str]) -> list[SweepResult]:
    """Group by axis point and reduce each method with the ratio-of-sums rule."""
    by_axis: dict[int, list[TrialRecord]] = {}
    for r in records:
        by_axis.setdefault(r.axis_index, []).append(r)
    results = []
    for axis_index in sorted(by_axis):
        group = by_axis[axis_index]
        res = SweepResult(group[0].axis_name, group[0].axis_value, {}, {}, {}, {})
        for m in methods:
            kept = [r for r in group if r.method == m and not r.excluded]
            res.n_trials[m] = len(kept)
            if kept:
                res.asrer_db[m] = asrer_db([r.signal_energy for r in kept],
                                           [r.error_energy for r in kept])
                res.mean_precision[m] = math.fsum(r.support_precision for r in kept) / len(kept)
                res.mean_recall[m] = math.fsum(r.support_recall for r in kept) / len(kept)
            else:
                res.asrer_db[m] = res.mean_precision[m] = res.mean_recall[m] = math.nan
        results.append(res)
    return results


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.12g}"


def results_csv_text(results: Sequence[SweepResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for res in results:
        for m in res.methods:
            w.writerow([res.axis_name, _fmt(res.axis_value), m, res.n_trials[m],
                        f"{res.asrer_db[m]:.12g}", f"{res.mean_precision[m]:.12g}",
                        f"{res.mean_recall[m]:.12g}"])
    return buf.getvalue()


def read_results_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["axis_value"] = float(row["axis_value"])
        row["n_trials"] = int(row["n_trials"])
        for key in ("asrer_db", "mean_precision", "mean_recall"):
            row[key] = float(row[key])
    return rows


def records_json_text(records: Sequence[TrialRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], indent=1, allow_nan=False) + "\n"


def read_records_json(path) -> list[TrialRecord]:
    return [TrialRecord.from_dict(d) for d in json.loads(Path(path).read_text())]


def _write_outputs(out_dir, results, records, full) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "results.csv"}
    with open(paths["csv"], "w", encoding="utf-8", newline="") as fh:
        fh.write(results_csv_text(results))
    if full:
        paths["json"] = out / "trials.json"
        with open(paths["json"], "w", encoding="utf-8", newline="") as fh:
            fh.write(records_json_text(records))
    return paths


@dataclass
class SweepRun:
    results: list
    records: list
    paths: dict


def run_sweep(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> SweepRun:
    """Run every (axis value, trial) pair, aggregate and write ``results.csv``
    (plus ``trials.json`` when ``cfg.full``) under ``out_dir`` or
    ``cfg.output_path``."""
    cfg.validate()
    _, values = cfg.axis
    jobs = [(i, v, t) for i, v in enumerate(values) for t in range(cfg.n_trials)]
    log.info("running %d trials over %d axis points", len(jobs), len(values))
    records = _execute(cfg, jobs)
    results = aggregate(records, cfg.methods)
    paths = _write_outputs(out_dir or cfg.output_path, results, records, cfg.full) if write else {}
    return SweepRun(results, records, paths)


def load_signal_csv(path) -> np.ndarray:
    """Load a time x channels CSV (optional header row) as an N x L matrix."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedCsv(f"{path}: {exc}") from exc
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise MalformedCsv(f"{path}: no data rows")
    width = len(rows[0])
    try:
        data = np.array([[float(c) for c in r] for r in rows if len(r) == width], dtype=np.float64)
    except ValueError as exc:
        raise MalformedCsv(f"{path}: {exc}") from exc
    if data.shape[0] != len(rows):
        raise MalformedCsv(f"{path}: rows have differing column counts")
    if not np.all(np.isfinite(data)):
        raise MalformedCsv(f"{path}: non-finite values")
    return data


def run_real(signal_csv, M_list: Sequence[int], K: int, n_trials: int, seed: int,
             solvers=("MOMP", "MSP", "Oracle"), fusion_combos=(("MOMP", "MSP"),),
             out_dir=None, full: bool = False, strict: bool = True, prune_union: bool = False,
             solver_config: SolverConfig | None = None) -> SweepRun:
    """Sense a real (compressible) signal with fresh Gaussian matrices and sweep M.

    The loaded window is the ground truth X; support metrics and the oracle
    refer to its K largest rows. No noise is added.
    """
    X = load_signal_csv(signal_csv)
    N, L = X.shape
    cfg = ExperimentConfig(N=N, K=K, L=L, n_trials=n_trials, seed=seed, solvers=list(solvers),
                           fusion_combos=[list(c) for c in fusion_combos], M_list=list(M_list),
                           smnr_db=math.inf, signal_kind="arbitrary",
                           output_path=str(out_dir or "results"), full=full, strict=strict,
                           prune_union=prune_union, solver_config=solver_config or SolverConfig())
    try:
        cfg.validate()
    except ConfigInvalid as exc:
        if "K <= M <= N" in str(exc):
            raise DimensionMismatch(f"signal has N={N} rows; {exc}") from exc
        raise
    jobs = [(i, v, t) for i, v in enumerate(cfg.M_list) for t in range(n_trials)]
    records = _execute(cfg, jobs, fixed_X=X)
    results = aggregate(records, cfg.methods)
    paths = _write_outputs(out_dir, results, records, full) if out_dir is not None else {}
    return SweepRun(results, records, paths)
