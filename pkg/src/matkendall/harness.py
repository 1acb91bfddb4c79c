"""Experiment drivers behind the CLI: Monte-Carlo replications, single-dataset
estimation, rank reports, rolling validation and timing."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import mrts
from .elliptical_sim import (
    LOADINGS, ScenarioSpec, draw_loadings, generate_scenario, replication_seed, stream,
)
from .errors import MatKendallError, ParameterError
from .kendall import kendall_sides
from .metrics import RollingReport, loading_variation, mse_common, pricing_errors, subspace_distance
from .tensor_io import MatrixSeries

log = logging.getLogger(__name__)

# stream key for loadings shared by every replication (--fixed-loadings)
_SHARED_LOADINGS_KEY = 2**32 - 1


class ReplicationError(MatKendallError):
    """A single Monte-Carlo replication failed; carries its seed for triage."""

    def __init__(self, rep: int, seed: int, cause: Exception):
        super().__init__(f"replication {rep} (seed={seed}) failed: {cause}")
        self.rep, self.seed, self.cause = rep, seed, cause
        self.exit_code = getattr(cause, "exit_code", 1)


@dataclass(frozen=True)
class SimulationConfig:
    scenario: str = "A"
    dist: str = "normal"
    T: int = 50
    p1: int = 50
    p2: int = 50
    k1: int = 3
    k2: int = 3
    reps: int = 100
    methods: tuple[str, ...] = ("mrts", "apca")
    kmax: int = mrts.DEFAULT_KMAX
    ridge_c: float = 0.0
    epsilon: float = mrts.DEFAULT_EPSILON
    fixed_loadings: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ParameterError("reps must be at least 1")
        bad = [m for m in self.methods if m not in mrts.METHODS]
        if bad or not self.methods:
            raise ParameterError(f"unknown methods {bad}; choose from {mrts.METHODS}")
        # validates dimensions, ranks and distribution name
        self.spec(0)

    def spec(self, seed: int) -> ScenarioSpec:
        return ScenarioSpec.scenario(self.scenario, self.dist, self.T, self.p1, self.p2, self.k1, self.k2, seed)


def run_replication(cfg: SimulationConfig, rep: int, loadings=None) -> list[dict]:
    """Simulate one dataset and fit every configured method on it."""
    seed = replication_seed(cfg.seed, rep)
    spec = cfg.spec(seed)
    try:
        X, truth = generate_scenario(spec, loadings=loadings)
        rows = []
        for method in cfg.methods:
            if method == "mrts":
                row_eig, col_eig = mrts.kendall_spectra(X)
                can_rank = cfg.kmax + 1 <= min(cfg.p1, cfg.p2)
                ranks = mrts.mker_ranks_from(row_eig, col_eig, cfg.T, cfg.kmax, cfg.ridge_c, cfg.epsilon) \
                    if can_rank else None
            else:
                row_eig, col_eig = mrts.second_moment_spectra(X)
                can_rank = cfg.kmax + 1 <= min(cfg.p1, cfg.p2)
                ranks = mrts.apca_ranks_from(row_eig, col_eig, cfg.kmax) if can_rank else None
            load = mrts.loadings_from_spectra(row_eig, col_eig, cfg.k1, cfg.k2, method)
            fit = mrts.mrts_factors(X, load)
            rows.append({
                "rep": rep,
                "method": method,
                "dist": spec.label,
                "T": cfg.T,
                "p1": cfg.p1,
                "p2": cfg.p2,
                "D_R": subspace_distance(load.R_hat, truth.R),
                "D_C": subspace_distance(load.C_hat, truth.C),
                "MSE": mse_common(fit.common, truth.S),
                "khat1": ranks[0].k_hat if ranks else None,
                "khat2": ranks[1].k_hat if ranks else None,
                "seed": seed,
            })
        return rows
    except MatKendallError as exc:
        raise ReplicationError(rep, seed, exc) from exc
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise ReplicationError(rep, seed, exc) from exc


def run_simulation(cfg: SimulationConfig, threads: int = 1) -> list[dict]:
    """All replications, rows ordered by (rep, method) whatever the thread count."""
    loadings = None
    if cfg.fixed_loadings:
        loadings = draw_loadings(cfg.p1, cfg.p2, cfg.k1, cfg.k2, stream(cfg.seed, _SHARED_LOADINGS_KEY, LOADINGS))

    def one(rep: int) -> list[dict]:
        return run_replication(cfg, rep, loadings)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(one, range(cfg.reps)))
    else:
        chunks = [one(r) for r in range(cfg.reps)]
    return [row for chunk in chunks for row in chunk]


def cell(mean: float, sd: float, digits: int = 4) -> str:
    """Table cell in the ``mean(sd)`` style."""
    return f"{mean:.{digits}f}({sd:.{digits}f})"


def aggregate(rows: Sequence[dict], k1: int, k2: int) -> list[dict]:
    """Per-method summary of replication rows.

    For each metric: mean, sample standard deviation (``_sd``), standard error
    of the mean (``_se``) and a ``mean(sd)`` cell. Rank columns give the
    frequency of exact recovery and of underestimation of the pair.
    """
    out = []
    methods = list(dict.fromkeys(r["method"] for r in rows))
    for method in methods:
        sub = [r for r in rows if r["method"] == method]
        n = len(sub)
        rec: dict = {
            "method": method, "dist": sub[0]["dist"], "T": sub[0]["T"], "p1": sub[0]["p1"],
            "p2": sub[0]["p2"], "reps": n,
        }
        for key in ("D_R", "D_C", "MSE"):
            vals = np.array([float(r[key]) for r in sub])
            mean = float(np.mean(vals))
            sd = float(np.std(vals, ddof=1)) if n > 1 else 0.0
            rec[f"{key}_mean"] = mean
            rec[f"{key}_sd"] = sd
            rec[f"{key}_se"] = sd / math.sqrt(n)
            rec[f"{key}_cell"] = cell(mean, sd)
        ranked = [r for r in sub if r["khat1"] not in (None, "")]
        if ranked:
            k_hat = np.array([[int(r["khat1"]), int(r["khat2"])] for r in ranked])
            rec["k1_exact"] = float(np.mean(k_hat[:, 0] == k1))
            rec["k2_exact"] = float(np.mean(k_hat[:, 1] == k2))
            rec["k_exact"] = float(np.mean((k_hat[:, 0] == k1) & (k_hat[:, 1] == k2)))
            rec["k_under"] = float(np.mean((k_hat[:, 0] < k1) | (k_hat[:, 1] < k2)))
        else:
            rec.update(k1_exact=None, k2_exact=None, k_exact=None, k_under=None)
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# single dataset
# ---------------------------------------------------------------------------

@dataclass
class Estimate:
    fit: mrts.FactorFit
    metadata: dict


def estimate(series: MatrixSeries, method: str = "mrts", k1: int | None = None, k2: int | None = None,
             kmax: int = mrts.DEFAULT_KMAX, c: float = 0.0, epsilon: float = mrts.DEFAULT_EPSILON,
             threads: int = 1) -> Estimate:
    """Fit loadings and factors; ranks missing from ``(k1, k2)`` come from MKER."""
    if method not in mrts.METHODS:
        raise ParameterError(f"unknown method {method!r}")
    meta: dict = {"method": method, "T": series.T, "p1": series.p1, "p2": series.p2}
    if k1 is None or k2 is None:
        sel_row, sel_col = mrts.mker_ranks(series, kmax=kmax, c=c, epsilon=epsilon, threads=threads)
        k1 = sel_row.k_hat if k1 is None else k1
        k2 = sel_col.k_hat if k2 is None else k2
        meta["rank_source"] = "mker"
        meta["rank_selection"] = {
            side: {"k_hat": s.k_hat, "ratios": s.ratios.tolist(), "delta": s.delta, "c": s.c,
                   "epsilon": s.epsilon, "kmax": s.kmax}
            for side, s in (("row", sel_row), ("column", sel_col))
        }
    else:
        meta["rank_source"] = "given"
    if method == "mrts":
        load = mrts.mrts_loadings(series, k1, k2, threads=threads)
    else:
        load = mrts.apca_loadings(series, k1, k2)
    fit = mrts.mrts_factors(series, load)
    meta.update(
        k1=k1, k2=k2,
        row_eigenvalues=load.row_eigenvalues.tolist(),
        col_eigenvalues=load.col_eigenvalues.tolist(),
        warnings=list(load.warnings),
    )
    return Estimate(fit=fit, metadata=meta)


def rank_table(series: MatrixSeries, methods: Sequence[str] = ("mker", "apca"), kmax: int = mrts.DEFAULT_KMAX,
               c: float = 0.0, epsilon: float = mrts.DEFAULT_EPSILON, threads: int = 1) -> list[dict]:
    """One row per (method, side, j) with the eigenvalue, the ratio and the selection."""
    rows = []
    for method in methods:
        if method == "mker":
            sels = mrts.mker_ranks(series, kmax=kmax, c=c, epsilon=epsilon, threads=threads)
        elif method == "apca":
            sels = mrts.apca_ranks(series, kmax=kmax)
        else:
            raise ParameterError(f"unknown rank method {method!r}; expected 'mker' or 'apca'")
        for side, sel in zip(("row", "column"), sels):
            for j, ratio in enumerate(sel.ratios, start=1):
                rows.append({
                    "method": method, "side": side, "j": j,
                    "eigenvalue": float(sel.eigenvalues[j - 1]), "ratio": float(ratio),
                    "k_hat": sel.k_hat, "selected": j == sel.k_hat,
                    "c": sel.c, "delta": sel.delta, "epsilon": sel.epsilon if sel.epsilon is not None else "",
                    "kmax": sel.kmax,
                })
    return rows


# ---------------------------------------------------------------------------
# rolling validation
# ---------------------------------------------------------------------------

Fitter = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _project_fit(test: np.ndarray, R_hat: np.ndarray, C_hat: np.ndarray) -> np.ndarray:
    F = mrts.project_factors(test, R_hat, C_hat)
    return mrts.reconstruct(F, R_hat, C_hat)


def rolling(series: MatrixSeries, window: int, block: int, k1: int, k2: int, method: str = "mrts",
            threads: int = 1, fitter: Fitter | None = None) -> RollingReport:
    """Refit loadings on the ``window`` observations before each test block.

    Test blocks of length ``block`` start at ``window``, ``window + block``, ...
    and must fit entirely inside the series. ``fitter(test, R_hat, C_hat)``
    replaces the default projection fit (a hook for tests).
    """
    if window < 2 or block < 1:
        raise ParameterError("need window >= 2 and block >= 1")
    if window + block > series.T:
        raise ParameterError(f"window ({window}) + block ({block}) exceeds the series length ({series.T})")
    if method not in mrts.METHODS:
        raise ParameterError(f"unknown method {method!r}")
    fitter = fitter or _project_fit
    report = RollingReport(window=window, block=block, k1=k1, k2=k2, method=method)
    prev = None
    w = 0
    for start in range(window, series.T - block + 1, block):
        train = MatrixSeries(series.data[start - window:start])
        test = series.data[start:start + block]
        if method == "mrts":
            load = mrts.mrts_loadings(train, k1, k2, threads=threads)
        else:
            load = mrts.apca_loadings(train, k1, k2)
        fitted = fitter(test, load.R_hat, load.C_hat)
        mse, rho = pricing_errors(test, fitted)
        v = None if prev is None else loading_variation(prev[0], prev[1], load.R_hat, load.C_hat)
        report.records.append({
            "window": w, "train_start": start - window, "test_start": start, "test_end": start + block,
            "MSE": mse, "rho": rho, "v": v,
        })
        prev = (load.R_hat, load.C_hat)
        w += 1
    return report


def rolling_rows(report: RollingReport) -> list[dict]:
    rows = [dict(r) for r in report.records]
    means = report.means()
    rows.append({"window": "mean", "train_start": None, "test_start": None, "test_end": None,
                 "MSE": means["MSE"], "rho": means["rho"], "v": means["v"]})
    return rows


# ---------------------------------------------------------------------------
# timing
# ---------------------------------------------------------------------------

def _best_time(fn: Callable[[], object], repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(T_grid: Sequence[int], p_grid: Sequence[int], repeats: int = 3, seed: int = 0,
          k: int = 1) -> list[dict]:
    """Best-of-``repeats`` wall times of the Kendall pass and of a full MRTS fit.

    ``slope_T`` is the least-squares slope of log(kendall time) on log(T) over
    the rows sharing ``p``; it is empty when the grid has a single ``T``.
    """
    if repeats < 1 or not T_grid or not p_grid:
        raise ParameterError("bench needs a non-empty grid and repeats >= 1")
    rows = []
    for p in p_grid:
        for T in T_grid:
            if T < 2 or p < 1:
                raise ParameterError(f"invalid grid cell T={T}, p={p}")
            data = stream(seed, T, p).standard_normal((T, p, p))
            X = MatrixSeries(data)
            kk = min(k, p)
            t_kendall = _best_time(lambda: kendall_sides(X, ("row", "column")), repeats)
            t_mrts = _best_time(lambda: mrts.mrts_factors(X, mrts.mrts_loadings(X, kk, kk)), repeats)
            rows.append({"T": T, "p1": p, "p2": p, "kendall_seconds": t_kendall, "mrts_seconds": t_mrts,
                         "slope_T": None})
    for p in p_grid:
        sub = [r for r in rows if r["p1"] == p]
        if len({r["T"] for r in sub}) > 1:
            x = np.log([r["T"] for r in sub])
            y = np.log([r["kendall_seconds"] for r in sub])
            slope = float(np.polyfit(x, y, 1)[0])
            for r in sub:
                r["slope_T"] = slope
    return rows
