"""Monte Carlo estimation of barrier-crossing probabilities on a time grid.

CRUDE declares a crossing only when a sampled grid value breaches a barrier.
CORRECTED additionally flips, for every step whose endpoints both lie inside,
a coin with success probability exp(-I / eps^q), where I is the bridge exit
rate of the step and q the bridge speed exponent.

Paths are generated from per-path random streams (normals first, then one
uniform per step), so CRUDE and CORRECTED runs with the same seed see the same
paths and the result does not depend on how paths are split across workers.
"""
from __future__ import annotations

import csv
import enum
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from .asymptotics import speed_exponents, step_asymptotics
from .errors import InvalidStartError, ParameterError, UnsupportedFamilyError
from .exit_rates import StepRates
from .kernels import Family, KernelSpec
from .simulate import PathSampler, path_rng

Z95 = 1.96  # two-sided 95% normal quantile, rounded
CSV_COLUMNS = ("method", "step", "H", "estimate", "ci_low", "ci_high", "n_paths", "seconds")


class Method(str, enum.Enum):
    CRUDE = "crude"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class Barrier:
    """Piecewise-constant barrier: ``levels[i]`` applies on [breakpoints[i-1], breakpoints[i])."""

    levels: tuple
    breakpoints: tuple = ()

    def __post_init__(self):
        levels = tuple(float(v) for v in np.atleast_1d(self.levels))
        bps = tuple(float(b) for b in self.breakpoints)
        if len(levels) != len(bps) + 1:
            raise ParameterError("a barrier needs exactly one more level than breakpoints")
        if any(b <= a for a, b in zip(bps, bps[1:])):
            raise ParameterError("barrier breakpoints must increase")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def constant(cls, level: float) -> "Barrier":
        return cls((level,))

    @classmethod
    def parse(cls, text: Union[str, float, int]) -> "Barrier":
        """Parse ``"1.0"`` or a schedule ``"1.0;0.5:1.2"`` (level 1.2 from t=0.5 on)."""
        if isinstance(text, (int, float)):
            return cls.constant(float(text))
        parts = [p.strip() for p in str(text).split(";") if p.strip()]
        try:
            levels = [float(parts[0])]
            bps = []
            for p in parts[1:]:
                t, v = p.split(":")
                bps.append(float(t))
                levels.append(float(v))
        except (ValueError, IndexError) as exc:
            raise ParameterError(f"cannot parse barrier {text!r}") from exc
        return cls(tuple(levels), tuple(bps))

    def format(self) -> str:
        out = repr(self.levels[0])
        for t, v in zip(self.breakpoints, self.levels[1:]):
            out += f";{t!r}:{v!r}"
        return out

    def value(self, t):
        idx = np.searchsorted(np.asarray(self.breakpoints), t, side="right")
        return np.asarray(self.levels)[idx]


@dataclass(frozen=True)
class McRun:
    """One crossing-probability experiment.

    Args:
        spec: process family.
        step: grid step eps; horizon / step must be an integer.
        horizon: final time.
        upper, lower: barriers (floats are taken as constant levels).
        start: value at time 0 (the process is shifted by it).
        n_paths: number of paths.
        seed: root seed.
        method: CRUDE or CORRECTED.
        workers: number of processes.
        chunk_size: paths per work unit.
    """

    spec: KernelSpec
    step: float
    horizon: float = 1.0
    upper: Optional[Barrier] = None
    lower: Optional[Barrier] = None
    start: float = 0.0
    n_paths: int = 1000
    seed: int = 0
    method: Method = Method.CRUDE
    workers: int = 1
    chunk_size: int = 2000

    def __post_init__(self):
        for name in ("upper", "lower"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, Barrier):
                object.__setattr__(self, name, Barrier.parse(v))
        object.__setattr__(self, "method", Method(self.method))
        if not self.step > 0 or not self.horizon > 0:
            raise ParameterError("step and horizon must be positive")
        ratio = self.horizon / self.step
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ParameterError(f"horizon/step = {ratio} is not a positive integer")
        if self.n_paths < 1 or self.workers < 1 or self.chunk_size < 1:
            raise ParameterError("n_paths, workers and chunk_size must be positive")
        if self.upper is None and self.lower is None:
            raise ParameterError("at least one barrier is required")
        grid = self.grid
        for b in (self.upper, self.lower):
            if b is not None:
                off = [t for t in b.breakpoints if np.min(np.abs(grid - t)) > 1e-9 * self.horizon]
                if off:
                    raise ParameterError(f"barrier breakpoints {off} are not grid times")
        if self.upper is not None and not self.start < self.upper.value(0.0):
            raise InvalidStartError("start is not below the upper barrier")
        if self.lower is not None and not self.start > self.lower.value(0.0):
            raise InvalidStartError("start is not above the lower barrier")
        if self.method is Method.CORRECTED and self.spec.family is Family.MFOLD_IBM and self.spec.m >= 2:
            raise UnsupportedFamilyError("the corrected walk is not available for m-fold integration with m >= 2")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))

    @property
    def grid(self) -> np.ndarray:
        K = self.n_steps
        return self.horizon * np.arange(1, K + 1) / K


@dataclass
class McResult:
    estimate: float
    ci_low: float
    ci_high: float
    n_paths: int
    method: Method
    step: float
    wall_time: float
    H: Optional[float] = None
    crossings: int = 0

    @classmethod
    def from_count(cls, count: int, run: McRun, wall_time: float) -> "McResult":
        n = run.n_paths
        p = count / n
        half = Z95 * math.sqrt(p * (1 - p) / n)
        return cls(p, p - half, p + half, n, run.method, run.step, wall_time, run.spec.H, int(count))

    def to_row(self) -> dict:
        return {
            "method": self.method.value,
            "step": repr(float(self.step)),
            "H": "" if self.H is None else repr(float(self.H)),
            "estimate": f"{self.estimate:.6f}",
            "ci_low": f"{self.ci_low:.6f}",
            "ci_high": f"{self.ci_high:.6f}",
            "n_paths": str(self.n_paths),
            "seconds": f"{self.wall_time:.3f}",
        }


class _Engine:
    """Per-process state for one run: the path factor and the step-rate evaluator."""

    def __init__(self, run: McRun):
        self.run = run
        grid = run.grid
        self.sampler = PathSampler(run.spec, grid, seed=run.seed)
        inf = np.inf
        starts = np.concatenate([[0.0], grid[:-1]])
        self.U_end = run.upper.value(grid) if run.upper else np.full(grid.size, inf)
        self.L_end = run.lower.value(grid) if run.lower else np.full(grid.size, -inf)
        self.U_start = run.upper.value(starts) if run.upper else np.full(grid.size, inf)
        self.L_start = run.lower.value(starts) if run.lower else np.full(grid.size, -inf)
        self.rates = None
        if run.method is Method.CORRECTED:
            self.rates = StepRates(step_asymptotics(run.spec))
            self.q = speed_exponents(run.spec).bridge_exp
            # the first step of an integrated process starts from a degenerate state
            self.first = 1 if run.spec.is_integrated else 0

    def draws(self, lo: int, hi: int):
        K = self.run.n_steps
        Z = np.empty((hi - lo, K))
        Uu = np.empty((hi - lo, K))
        for i, pid in enumerate(range(lo, hi)):
            g = path_rng(self.run.seed, pid)
            Z[i] = g.standard_normal(K)
            Uu[i] = g.random(K)
        return Z, Uu

    def crossed(self, lo: int, hi: int) -> np.ndarray:
        """Per-path crossing indicators for paths lo..hi-1."""
        run = self.run
        Z, Uu = self.draws(lo, hi)
        X = run.start + self.sampler.transform(Z)
        breach = (X >= self.U_end) | (X <= self.L_end)
        hit = breach.any(axis=1)
        if run.method is Method.CRUDE:
            return hit
        prev = np.concatenate([np.full((X.shape[0], 1), run.start), X[:, :-1]], axis=1)
        cand = ~breach & (prev < self.U_start) & (prev > self.L_start)
        cand[:, : self.first] = False
        rows, cols = np.nonzero(cand)
        x0, x1 = prev[rows, cols], X[rows, cols]
        U, L = self.U_start[cols], self.L_start[cols]
        eps_q = run.step**self.q
        with np.errstate(divide="ignore"):
            thr = -np.log(Uu[rows, cols]) * eps_q
        if run.upper is not None and run.lower is not None:
            p = np.ones(rows.size)
            inside = (x1 < U) & (x1 > L)
            IU = self.rates.rates(U[inside] - x0[inside], U[inside] - x1[inside])
            IL = self.rates.rates(x0[inside] - L[inside], x1[inside] - L[inside])
            p[inside] = 1.0 - (1.0 - np.exp(-IU / eps_q)) * (1.0 - np.exp(-IL / eps_q))
            step_hit = Uu[rows, cols] < p
        else:
            if run.upper is not None:
                A, B = U - x0, U - x1
            else:
                A, B = x0 - L, x1 - L
            step_hit = np.ones(rows.size, dtype=bool)
            ok = B > 0
            step_hit[ok] = self.rates.below(A[ok], B[ok], thr[ok])
        extra = np.zeros(X.shape[0], dtype=bool)
        extra[rows[step_hit]] = True
        return hit | extra


_ENGINES: dict = {}


def _engine(run: McRun) -> _Engine:
    key = (run.spec, run.step, run.horizon, run.upper, run.lower, run.start, run.seed, run.method)
    eng = _ENGINES.get(key)
    if eng is None:
        _ENGINES.clear()
        eng = _ENGINES[key] = _Engine(run)
    return eng


def _count(run: McRun, lo: int, hi: int) -> int:
    return int(_engine(run).crossed(lo, hi).sum())


def _chunks(run: McRun):
    return [(i, min(i + run.chunk_size, run.n_paths)) for i in range(0, run.n_paths, run.chunk_size)]


def estimate_crossing(run: McRun) -> McResult:
    """Crossing probability of the barrier(s) before the horizon, with a 95% CI."""
    t0 = time.perf_counter()
    chunks = _chunks(run)
    if run.workers == 1 or len(chunks) == 1:
        count = sum(_count(run, lo, hi) for lo, hi in chunks)
    else:
        with ProcessPoolExecutor(max_workers=run.workers) as ex:
            count = sum(ex.map(_count, [run] * len(chunks), [c[0] for c in chunks], [c[1] for c in chunks]))
    return McResult.from_count(count, run, time.perf_counter() - t0)


def crossing_indicators(run: McRun, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
    """Per-path crossing indicators (single process), for path-wise comparisons."""
    hi = run.n_paths if hi is None else hi
    return _engine(run).crossed(lo, hi)


TABLE1_HURST = (0.3, 0.5, 0.7)
TABLE1_CELLS = ((Method.CORRECTED, 0.01), (Method.CORRECTED, 0.002),
                (Method.CRUDE, 0.01), (Method.CRUDE, 0.002), (Method.CRUDE, 0.001))


def table1_harness(seed: int, n_paths: int, workers: int = 1, hurst: Sequence[float] = TABLE1_HURST,
                   progress=None) -> List[McResult]:
    """Upper barrier U=1 from 0 up to time 1 for fBm, over the fixed (H, method, step) layout."""
    results = []
    for H in hurst:
        for method, step in TABLE1_CELLS:
            run = McRun(KernelSpec.fbm(H), step, upper=Barrier.constant(1.0), n_paths=n_paths,
                        seed=seed, method=method, workers=workers)
            res = estimate_crossing(run)
            if progress is not None:
                progress(res)
            results.append(res)
    return results


def write_csv(results: Iterable[McResult], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow(r.to_row())
