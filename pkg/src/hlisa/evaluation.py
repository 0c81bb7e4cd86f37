"""Sum-rate auditing, the Monte-Carlo engine and channel-gain histograms."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .baselines import (BaselineFailure, bd_candidates, build_path_codebooks,
                        dpc_sum_capacity, run_2smuhpa, run_bd)
from .channel import run_rng, sample_scenario
from .config import ScenarioConfig
from .numerics import NumericalError
from .precoding import (PathModel, PrecodingSolution, run_h_lisa, run_lc_h_lisa,
                        run_lc_lisa, run_lisa)

__all__ = [
    "logdet_sum_rate",
    "solution_rate",
    "RunRecord",
    "CurvePoint",
    "GainHistogram",
    "Scenario",
    "make_scenario",
    "evaluate_run",
    "run_monte_carlo",
    "gain_histogram",
    "db_to_power",
    "benchmark",
    "aggregate",
]


def db_to_power(snr_db: float) -> float:
    """Transmit power for a given SNR in dB (unit noise power)."""
    return float(10.0 ** (snr_db / 10.0))


def logdet_sum_rate(precoders: Sequence[np.ndarray], equalizers: Sequence[np.ndarray],
                 channels) -> float:
    """Sum rate of linear precoders/equalizers with per-user log-det decoding.

    For user ``k`` with equalizer ``G_k`` the rate is the log-det ratio of
    ``G^H G + G^H H_k C H_k^H G`` with ``C`` the total transmit covariance,
    over the same expression with ``C`` lacking the user's own signal.
    Users without streams contribute nothing.
    """
    H = np.asarray(channels, dtype=complex)
    K = H.shape[0]
    if len(precoders) != K or len(equalizers) != K:
        raise ValueError("need one precoder and one equalizer per user")
    n_bs = H.shape[2]
    cols = [np.asarray(P, dtype=complex).reshape(n_bs, -1) for P in precoders]
    P_all = np.hstack(cols) if cols else np.zeros((n_bs, 0))
    owner = np.concatenate([np.full(c.shape[1], k) for k, c in enumerate(cols)]) if cols else np.zeros(0)
    total = 0.0
    for k in range(K):
        G = np.asarray(equalizers[k], dtype=complex)
        G = G.reshape(H.shape[1], -1)
        if G.shape[1] == 0:
            continue
        A = G.conj().T @ H[k] @ P_all
        other = A[:, owner != k]
        noise = G.conj().T @ G
        num = noise + A @ A.conj().T
        den = noise + other @ other.conj().T
        s_num, ld_num = np.linalg.slogdet(num)
        s_den, ld_den = np.linalg.slogdet(den)
        if s_num.real <= 0 or s_den.real <= 0:
            raise NumericalError(f"singular covariance in rate of user {k}")
        total += (ld_num - ld_den) / math.log(2.0)
    return float(total)


def solution_rate(solution: PrecodingSolution, channels) -> float:
    return logdet_sum_rate(solution.precoders, solution.equalizers, channels)


@dataclass(frozen=True)
class Scenario:
    """One channel draw with everything the algorithms consume."""

    path_sets: list
    model: PathModel

    @property
    def channels(self) -> np.ndarray:
        return self.model.channels


def make_scenario(config: ScenarioConfig, run_index: int) -> Scenario:
    rng = run_rng(config.seed, run_index)
    path_sets = sample_scenario(rng, config.K, config.L)
    return Scenario(path_sets, PathModel.from_path_sets(path_sets, config.bs_geometry, config.ms_geometry))


@dataclass
class RunRecord:
    """Outcome of one algorithm on one channel draw at one SNR."""

    algorithm: str
    snr_db: float
    rate: Optional[float]              # audited rate; None on failure
    internal_rate: Optional[float] = None
    gains: np.ndarray = field(default_factory=lambda: np.zeros(0))
    streams: int = 0
    error: Optional[str] = None
    solution: Optional[PrecodingSolution] = field(default=None, repr=False)


def _solve(alg: str, config: ScenarioConfig, sc: Scenario, P: float, cache: dict):
    H = sc.channels
    if alg == "LISA":
        return run_lisa(H, config.n_rf, P)
    if alg == "H-LISA":
        return run_h_lisa(H, config.n_rf, P)
    if alg == "LC-LISA":
        return run_lc_lisa(sc.model, config.n_rf, P)
    if alg == "LC-H-LISA":
        return run_lc_h_lisa(sc.model, config.n_rf, P)
    if alg == "H-LISA-AMS":
        return run_h_lisa(H, config.n_rf, P, n_rf_ms=config.n_rf_ms or config.n_ms)
    if alg == "LC-H-LISA-AMS":
        return run_lc_h_lisa(sc.model, config.n_rf, P, n_rf_ms=config.n_rf_ms or config.n_ms)
    if alg in ("2SMUHPA", "2SMUHPA-WF"):
        if "codebooks" not in cache:
            cache["codebooks"] = build_path_codebooks(sc.path_sets, config.bs_geometry, config.ms_geometry)
        mode = "waterfilling" if alg.endswith("WF") else "equal"
        return run_2smuhpa(H, cache["codebooks"], P, mode)
    if alg == "BD":
        if "bd" not in cache:
            cache["bd"] = bd_candidates(H, config.n_rf)
        return run_bd(H, P, config.n_rf, cache["bd"])
    raise ValueError(f"unknown algorithm {alg!r}")


def evaluate_run(config: ScenarioConfig, run_index: int, keep_solutions: bool = False) -> list[RunRecord]:
    """All configured algorithms on the draw for ``run_index``, at every SNR.

    Every algorithm sees the same channels. Rates are audited with
    :func:`logdet_sum_rate`; numerical failures are recorded, not raised.
    """
    sc = make_scenario(config, run_index)
    cache: dict = {}
    records = []
    for snr in config.snr_db:
        P = db_to_power(snr)
        for alg in config.algorithms:
            if alg == "capacity":
                cap = dpc_sum_capacity(sc.channels, P, config.dpc_tol, config.dpc_max_iters)
                records.append(RunRecord(alg, snr, cap.capacity, cap.capacity,
                                         error=None if cap.converged else "not converged"))
                continue
            try:
                sol = _solve(alg, config, sc, P, cache)
                rate = solution_rate(sol, sc.channels)
            except (NumericalError, BaselineFailure) as exc:
                records.append(RunRecord(alg, snr, None, error=f"{type(exc).__name__}: {exc}"))
                continue
            records.append(RunRecord(alg, snr, rate, sol.sum_rate, sol.gains.copy(), sol.num_streams,
                                     solution=sol if keep_solutions else None))
    return records


@dataclass
class CurvePoint:
    """Per-algorithm statistics at one SNR."""

    snr_db: float
    means: dict = field(default_factory=dict)
    std_errors: dict = field(default_factory=dict)
    runs_used: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def rows(self, algorithms: Iterable[str]):
        for alg in algorithms:
            yield (self.snr_db, alg, self.means[alg], self.std_errors[alg],
                   self.runs_used[alg], self.failures[alg])


def _map_runs(config: ScenarioConfig, workers: int):
    indices = range(config.runs)
    if workers <= 1:
        return [evaluate_run(config, i) for i in indices]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so aggregation is schedule-independent
        return list(pool.map(evaluate_run, [config] * config.runs, indices, chunksize=8))


def aggregate(config: ScenarioConfig, per_run: list[list[RunRecord]]) -> list[CurvePoint]:
    points = []
    for snr in config.snr_db:
        pt = CurvePoint(snr)
        for alg in config.algorithms:
            rates = np.array([r.rate for recs in per_run for r in recs
                              if r.algorithm == alg and r.snr_db == snr and r.rate is not None])
            n = rates.size
            pt.runs_used[alg] = int(n)
            pt.failures[alg] = int(len(per_run) - n)
            pt.means[alg] = float(rates.mean()) if n else float("nan")
            pt.std_errors[alg] = float(rates.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        points.append(pt)
    return points


def run_monte_carlo(config: ScenarioConfig, workers: int = 1) -> list[CurvePoint]:
    """Average audited sum rate per SNR and algorithm over ``config.runs`` draws.

    Run ``i`` always uses the random stream derived from ``(config.seed, i)``,
    so results do not depend on ``workers``.
    """
    return aggregate(config, _map_runs(config, workers))


@dataclass
class GainHistogram:
    edges: np.ndarray
    counts: dict
    gains: dict = field(repr=False, default_factory=dict)


def gain_histogram(config: ScenarioConfig, snr_db: float, algorithms: Sequence[str],
                   bin_width: Optional[float] = None) -> GainHistogram:
    """Histogram of the per-stream subchannel gains over all runs.

    Bins have fixed width and start at 0; the last edge covers the largest
    gain seen by any algorithm.
    """
    if not algorithms:
        raise ValueError("need at least one algorithm")
    width = config.bin_width if bin_width is None else bin_width
    if width <= 0:
        raise ValueError("bin width must be positive")
    cfg = config.with_overrides(snr_db=(snr_db,), algorithms=tuple(algorithms))
    collected = {a: [] for a in algorithms}
    for i in range(cfg.runs):
        for rec in evaluate_run(cfg, i):
            if rec.rate is not None and rec.algorithm in collected:
                collected[rec.algorithm].append(rec.gains)
    gains = {a: np.concatenate(v) if v else np.zeros(0) for a, v in collected.items()}
    top = max((float(g.max()) for g in gains.values() if g.size), default=width)
    nbins = max(1, int(math.ceil(top / width)))
    if nbins * width <= top:
        nbins += 1
    edges = np.arange(nbins + 1) * width
    counts = {a: np.histogram(g, bins=edges)[0] for a, g in gains.items()}
    return GainHistogram(edges, counts, gains)


def benchmark(config: ScenarioConfig, snr_db: float = 0.0, runs: int = 20) -> dict[str, np.ndarray]:
    """Wall-clock seconds of each configured algorithm on ``runs`` draws.

    Channel synthesis is excluded from the timing; per-draw precomputations
    (codebooks, BD eigenmodes) are included. Failed runs are still timed.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    P = db_to_power(snr_db)
    times = {a: np.empty(runs) for a in config.algorithms}
    for i in range(runs):
        sc = make_scenario(config, i)
        for alg in config.algorithms:
            t0 = time.perf_counter()
            try:
                if alg == "capacity":
                    dpc_sum_capacity(sc.channels, P, config.dpc_tol, config.dpc_max_iters)
                else:
                    _solve(alg, config, sc, P, {})
            except NumericalError:
                pass
            times[alg][i] = time.perf_counter() - t0
    return times
