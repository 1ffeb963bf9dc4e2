"""Synthetic MMV problem instances: ``B = A X + W``.

Random numbers come from numpy's PCG64 bit generator
(``np.random.Generator(np.random.PCG64(seed))``). Sub-seeds for trials and
for the separate A / X / W streams are derived with :func:`mix_seed`, a
SplitMix64 chain, so every trial is reproducible on its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch
from .linalg import as_mat, index_set

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(master: int, *parts: int) -> int:
    """Derive a 64-bit child seed: ``h = sm(master); h = sm(h ^ part)`` per part.

    ``sm`` is the SplitMix64 output function. Negative inputs are reduced
    modulo 2**64.
    """
    h = _splitmix64(master & _MASK64)
    for p in parts:
        h = _splitmix64(h ^ (p & _MASK64))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & _MASK64))


class SignalKind(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    ARBITRARY = "arbitrary"


@dataclass(frozen=True)
class MeasurementMatrix:
    A: np.ndarray

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class JointSparseSignal:
    X: np.ndarray
    support: np.ndarray
    kind: SignalKind = SignalKind.GAUSSIAN

    @property
    def K(self) -> int:
        return int(self.support.size)


@dataclass(frozen=True)
class Observation:
    B: np.ndarray
    W: np.ndarray
    smnr_db: float = math.inf


def gaussian_matrix(M: int, N: int, seed: int) -> np.ndarray:
    """The un-normalized draw behind :func:`gen_matrix`: i.i.d. N(0, 1/M) entries."""
    return make_rng(seed).normal(0.0, 1.0 / math.sqrt(M), size=(M, N))


def gen_matrix(M: int, N: int, seed: int) -> MeasurementMatrix:
    """Gaussian N(0, 1/M) entries, then every column scaled to unit l2 norm."""
    if not 1 <= M <= N:
        raise ValueError(f"need 1 <= M <= N, got M={M}, N={N}")
    A = gaussian_matrix(M, N, seed)
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms < 1e-14):
        raise ValueError("degenerate column drawn (norm below 1e-14)")
    return MeasurementMatrix(A / norms)


def gen_signal(N: int, K: int, L: int, kind: SignalKind | str, seed: int) -> JointSparseSignal:
    kind = SignalKind(kind)
    if not 0 <= K <= N or L < 1:
        raise ValueError(f"need 0 <= K <= N and L >= 1, got N={N}, K={K}, L={L}")
    rng = make_rng(seed)
    support = index_set(rng.choice(N, size=K, replace=False))
    X = np.zeros((N, L))
    if kind is SignalKind.GAUSSIAN:
        X[support] = rng.standard_normal((K, L))
    elif kind is SignalKind.RADEMACHER:
        X[support] = rng.choice(np.array([-1.0, 1.0]), size=(K, L))
    else:
        raise ValueError("arbitrary signals are not generated; wrap your own X instead")
    return JointSparseSignal(X, support, kind)


def noise_variance(K: int, M: int, smnr_db: float) -> float:
    """Per-entry noise variance giving the target SMNR in expectation.

    Expected column energy of a K-sparse unit-variance signal is K, so
    ``sigma^2 = K / (M * 10**(smnr_db / 10))``.
    """
    if math.isinf(smnr_db) and smnr_db > 0:
        return 0.0
    return K / (M * 10.0 ** (smnr_db / 10.0))


def observe(A: MeasurementMatrix, X: JointSparseSignal, smnr_db: float, seed: int) -> Observation:
    if A.N != X.X.shape[0]:
        raise DimensionMismatch(f"A has {A.N} columns but X has {X.X.shape[0]} rows")
    M, L = A.M, X.X.shape[1]
    var = noise_variance(X.K, M, smnr_db)
    if var == 0.0:
        W = np.zeros((M, L))
    else:
        W = make_rng(seed).normal(0.0, math.sqrt(var), size=(M, L))
    return Observation(A.A @ X.X + W, W, float(smnr_db))


def realized_smnr_db(X: np.ndarray, W: np.ndarray) -> float:
    """Mean over columns of ``||x||^2 / ||w||^2``, in dB (``inf`` when W = 0)."""
    xe = np.sum(X * X, axis=0)
    we = np.sum(W * W, axis=0)
    if np.all(we == 0.0):
        return math.inf
    with np.errstate(divide="ignore"):
        ratio = float(np.mean(xe / we))
    return 10.0 * math.log10(ratio) if ratio > 0 else -math.inf


@dataclass
class Instance:
    """One (A, X, W, B) draw plus the parameters that produced it."""

    A: np.ndarray
    X: np.ndarray
    W: np.ndarray
    B: np.ndarray
    support: np.ndarray
    params: dict = field(default_factory=dict)


def make_instance(M: int, N: int, K: int, L: int, kind="gaussian",
                  smnr_db: float = math.inf, seed: int = 0) -> Instance:
    """Generate a full instance from one seed (A, X and W use derived streams)."""
    A = gen_matrix(M, N, mix_seed(seed, 0))
    sig = gen_signal(N, K, L, kind, mix_seed(seed, 1))
    obs = observe(A, sig, smnr_db, mix_seed(seed, 2))
    params = {"M": M, "N": N, "K": K, "L": L, "kind": SignalKind(kind).value,
              "smnr_db": _float_out(smnr_db), "seed": seed}
    return Instance(A.A, sig.X, obs.W, obs.B, sig.support, params)


def _float_out(x: float):
    return x if math.isfinite(x) else repr(float(x))


def parse_smnr(x) -> float:
    """SMNR in dB from config/JSON; ``None`` and ``"inf"`` mean noiseless."""
    return math.inf if x is None else float(x)


_MATRICES = ("A", "X", "W", "B")


def save_instance_csv(inst: Instance, directory) -> list[Path]:
    """One CSV per matrix plus ``support.csv`` and ``params.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in _MATRICES:
        p = d / f"{name}.csv"
        np.savetxt(p, getattr(inst, name), delimiter=",", fmt="%.17g")
        paths.append(p)
    p = d / "support.csv"
    p.write_text(",".join(str(int(i)) for i in inst.support) + "\n")
    paths.append(p)
    p = d / "params.json"
    p.write_text(json.dumps(inst.params, indent=2, sort_keys=True) + "\n")
    paths.append(p)
    return paths


def load_instance_csv(directory) -> Instance:
    d = Path(directory)
    mats = {name: np.atleast_2d(np.loadtxt(d / f"{name}.csv", delimiter=",", ndmin=2))
            for name in _MATRICES}
    text = (d / "support.csv").read_text().strip()
    support = index_set(int(t) for t in text.split(",")) if text else index_set()
    params = json.loads((d / "params.json").read_text()) if (d / "params.json").exists() else {}
    return Instance(support=support, params=params, **mats)


def instance_to_json(inst: Instance) -> str:
    env = {name: getattr(inst, name).tolist() for name in _MATRICES}
    env["support"] = [int(i) for i in inst.support]
    env["params"] = inst.params
    return json.dumps(env, sort_keys=True)


def instance_from_json(text: str) -> Instance:
    env = json.loads(text)
    mats = {name: as_mat(np.array(env[name], dtype=np.float64), name) for name in _MATRICES}
    return Instance(support=index_set(env["support"]), params=env.get("params", {}), **mats)
