"""
Monte-Carlo experiments: martingale / inverse-moment bounds, epsilon scaling of the filter gap, self-distance
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from ..errors import DegeneracyError, DomainError
from ..manifold.backward import DEFAULT_TOL
from ..models import MartingaleReport
from ..noise.paths import STREAM_PARTICLES, STREAM_REFERENCE, STREAM_TRUTH, cells_in, sample_path, stream_key, substream
from ..simulation.integrator import StateLike, SystemModel, integrate_full
from .metrics import TestDictionary, distance_d
from .observation import ObservationModel, ObservationPath, generate_observation
from .particles import accumulate_log_weights, run_filter, simulate_particles

logger = logging.getLogger(__name__)


def inverse_moment_bound(p: float, c_h: float, horizon: float) -> float:
    """exp((p^2/2 + p/2) C_h^2 T)"""
    return math.exp((p * p / 2 + p / 2) * c_h * c_h * horizon)


def reference_observation(dim3: int, step: float, n_steps: int, coarsen: int, seed: int, stream_id: int, index: int) -> ObservationPath:
    """Observation path under the reference measure: a plain Brownian motion independent of the signal"""
    increments = substream(seed, stream_id, index).standard_normal((n_steps, dim3)) * math.sqrt(step)
    times = step * np.arange(n_steps + 1)
    return ObservationPath(times, increments, step, coarsen, f"{seed}:{stream_id}:{index}|reference")


def verify_martingale_bounds(
    model: SystemModel,
    obs: ObservationModel,
    z0: Tuple[StateLike, StateLike],
    horizon: float,
    p: float = 3.0,
    n_mc: int = 10_000,
    mc_inner: int = 100,
    seed: int = 0,
    mode: str = "full",
    coarsen: int = 1,
    replication: int = 0,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
) -> MartingaleReport:
    """E[Gamma_T] = 1 and E|rho_T(1)|^-p <= exp((p^2/2 + p/2) C_h^2 T).

    Samples are grouped: each outer group shares one reference observation path and averages
    Gamma over mc_inner signal copies to estimate rho_T(1) for that path.
    """
    if p <= 0:
        raise DomainError(f"moment order p must be positive, got {p}")
    n_outer = n_mc // mc_inner
    if n_outer < 2:
        raise DomainError(f"need at least two outer groups: n_mc={n_mc}, mc_inner={mc_inner}")
    step = model.dt * coarsen
    n_steps = cells_in(horizon, step)
    signal_stream = stream_key(replication, STREAM_PARTICLES)
    reference_stream = stream_key(replication, STREAM_REFERENCE)
    logger.info(f"Martingale check ({mode}): {n_outer} x {mc_inner} samples, p={p:g}, T={horizon:g}")

    def group(g: int) -> float:
        r = reference_observation(obs.dim3, step, n_steps, coarsen, seed, reference_stream, g)
        traj = simulate_particles(model, z0, mode, horizon, seed, signal_stream, g * mc_inner, mc_inner, tol)
        lw = accumulate_log_weights(obs, traj, r)[-1]
        return float(logsumexp(lw) - math.log(mc_inner))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            log_rho = np.array(list(pool.map(group, range(n_outer))))
    else:
        log_rho = np.array([group(g) for g in range(n_outer)])

    rho = np.exp(log_rho)
    inverse = np.exp(-p * log_rho)
    gamma_mean, gamma_se = float(np.mean(rho)), float(np.std(rho, ddof=1) / math.sqrt(n_outer))
    inv_mean, inv_se = float(np.mean(inverse)), float(np.std(inverse, ddof=1) / math.sqrt(n_outer))
    bound = inverse_moment_bound(p, obs.c_h, horizon)
    martingale_ok = abs(gamma_mean - 1.0) <= 3 * gamma_se + 1e-12
    moment_ok = inv_mean <= bound * (1 + 3 * inv_se / max(inv_mean, 1e-300))
    if not martingale_ok:
        logger.warning(f"E[Gamma_T] = {gamma_mean:.4f} +- {gamma_se:.4f} is more than 3 SE from 1")
    return MartingaleReport(
        passed=martingale_ok and moment_ok,
        mode=mode,
        p=p,
        horizon=horizon,
        samples=n_outer * mc_inner,
        gamma_mean=gamma_mean,
        gamma_se=gamma_se,
        inverse_moment=inv_mean,
        inverse_moment_se=inv_se,
        inverse_moment_bound=bound,
    )


@dataclass
class ScalingResult:
    table: pd.DataFrame
    runs: pd.DataFrame
    exponent: Optional[float]
    envelope_c: Optional[float]
    envelope_r2: Optional[float]
    excluded: int
    # filter time series of the first kept replication, keyed by (epsilon, mode)
    series: Dict[Tuple[float, str], pd.DataFrame] = field(default_factory=dict, repr=False)

    def summary(self) -> Dict[str, Any]:
        return {
            "exponent": self.exponent,
            "envelope_c": self.envelope_c,
            "envelope_r2": self.envelope_r2,
            "excluded": self.excluded,
            "rows": self.table.to_dict(orient="records"),
        }


def moment_envelope(epsilon: np.ndarray, t: float, mu: float, p: float) -> np.ndarray:
    """(e^{-4 mu t p / eps} + eps / (4 mu p))^{1/4}"""
    return (np.exp(-4 * mu * t * p / epsilon) + epsilon / (4 * mu * p)) ** 0.25


def _fit_envelope(epsilon: np.ndarray, moment: np.ndarray, t: float, mu: float, p: float) -> Tuple[Optional[float], Optional[float]]:
    keep = moment > 0
    if np.count_nonzero(keep) < 2:
        return None, None
    log_m = np.log(moment[keep])
    log_env = np.log(moment_envelope(epsilon[keep], t, mu, p))
    log_c = float(np.mean(log_m - log_env))
    residual = log_m - (log_c + log_env)
    total = float(np.sum((log_m - log_m.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual**2)) / total if total > 0 else 1.0
    return math.exp(log_c), r2


def epsilon_scaling_experiment(
    model: SystemModel,
    obs: ObservationModel,
    z0: Tuple[StateLike, StateLike],
    epsilons: Sequence[float],
    times: Sequence[float],
    dictionary: TestDictionary,
    p: float = 3.0,
    n_particles: int = 2000,
    replications: int = 1,
    seed: int = 0,
    coarsen: int = 5,
    chunk_size: int = 256,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
) -> ScalingResult:
    """Full vs reduced filter on a common truth and common particle substreams, per (epsilon, t)"""
    times = sorted(float(t) for t in times)
    t_end = times[-1]
    records: List[Dict[str, Any]] = []
    excluded = 0
    series: Dict[Tuple[float, str], pd.DataFrame] = {}
    for eps in epsilons:
        scaled = model.with_epsilon(eps)
        scaled.ensure_admissible()
        for rep in range(replications):
            truth_path = sample_path(scaled.cov1, scaled.cov2, obs.dim3, scaled.grid(t_end), seed, stream_key(rep, STREAM_TRUTH))
            truth = integrate_full(scaled, z0, truth_path, 0.0, t_end)
            r = generate_observation(truth, obs, truth_path, coarsen)
            try:
                full = run_filter(scaled, obs, r, "full", n_particles, seed, z0, dictionary, times, rep, chunk_size, threads, tol)
                reduced = run_filter(scaled, obs, r, "reduced", n_particles, seed, z0, dictionary, times, rep, chunk_size, threads, tol)
            except DegeneracyError as e:
                excluded += 1
                logger.warning(f"Excluding replication {rep} at eps={eps:g}: {e}")
                continue
            if not any(key[0] == eps for key in series):
                series[(eps, "full")], series[(eps, "reduced")] = full.to_frame(), reduced.to_frame()
            for t in times:
                a, b = full.at(t), reduced.at(t)
                row = {"epsilon": eps, "replication": rep, "t": t, "d": distance_d(a, b, dictionary)}
                row.update({f"moment_{i + 1}": float(v) for i, v in enumerate(np.abs(a.pi - b.pi) ** p)})
                records.append(row)
        logger.info(f"Scaling experiment: eps={eps:g} done")
    runs = pd.DataFrame(records)
    if runs.empty:
        raise DegeneracyError("every replication degenerated", 0.0)
    grouped = runs.groupby(["epsilon", "t"])
    table = grouped.agg(
        runs=("d", "size"),
        mean_d=("d", "mean"),
        se_d=("d", lambda v: float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")),
        moment_1=("moment_1", "mean"),
        se_moment_1=("moment_1", lambda v: float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")),
    ).reset_index()
    table.insert(2, "p", p)
    table["excluded"] = excluded

    last = table[table["t"] == t_end].sort_values("epsilon")
    exponent = None
    if len(last) >= 2 and np.all(last["mean_d"] > 0):
        exponent = float(np.polyfit(np.log(last["epsilon"]), np.log(last["mean_d"]), 1)[0])
    c, r2 = _fit_envelope(last["epsilon"].to_numpy(), last["moment_1"].to_numpy(), t_end, model.params.mu, p)
    table["exponent"] = exponent
    logger.info(f"Scaling exponent at t={t_end:g}: {exponent}, envelope c={c}, R^2={r2}")
    return ScalingResult(table, runs, exponent, c, r2, excluded, series)


def self_distance_ratio(
    model: SystemModel,
    obs: ObservationModel,
    r: ObservationPath,
    z0: Tuple[StateLike, StateLike],
    n_particles: int,
    t: float,
    dictionary: TestDictionary,
    mode: str = "full",
    pairs: int = 16,
    seed: int = 0,
    first_replication: int = 1000,
    chunk_size: int = 256,
    threads: int = 1,
) -> Dict[str, Any]:
    """Mean d between independent filter runs on the same observation at N and at 4N; the ratio should be near 2.

    The ratio of two sample means is noisy; fewer than about 16 pairs per size puts it outside [1.5, 2.7] too often.
    """

    def mean_distance(n: int, base: int) -> float:
        values = []
        for k in range(pairs):
            estimates = []
            for j in range(2):
                stream = stream_key(base + 2 * k + j, STREAM_PARTICLES)
                run = run_filter(model, obs, r, mode, n, seed, z0, dictionary, [t], chunk_size=chunk_size, threads=threads, stream_id=stream)
                estimates.append(run.at(t))
            values.append(distance_d(estimates[0], estimates[1], dictionary))
        return float(np.mean(values))

    small = mean_distance(n_particles, first_replication)
    large = mean_distance(4 * n_particles, first_replication + 2 * pairs)
    ratio = small / large if large > 0 else math.inf
    return {"n": n_particles, "d_small": small, "d_large": large, "ratio": ratio, "passed": 1.5 <= ratio <= 2.7}
