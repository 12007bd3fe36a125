"""
Independent-copy Monte-Carlo filters in Kallianpur-Striebel form (full and reduced signal)
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from ..errors import DegeneracyError, DomainError, StructuralError
from ..manifold.backward import DEFAULT_TOL, BackwardSolver
from ..noise.paths import STREAM_PARTICLES, sample_path, stream_key
from ..simulation.integrator import StateLike, SystemModel, Trajectory, integrate_full, integrate_reduced
from .metrics import TestDictionary
from .observation import ObservationModel, ObservationPath, ks_log_weight_step

logger = logging.getLogger(__name__)

MODES = ("full", "reduced")

# Runs whose effective sample size falls below this share of N are aborted
DEGENERACY_SHARE = 0.01


@dataclass(frozen=True)
class FilterEstimate:
    t: float
    mode: str
    pi: np.ndarray
    se: np.ndarray
    rho_one: float
    log_rho_one: float
    ess: float
    n_particles: int
    dictionary_key: Tuple[str, ...]


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    """Particle states at time t with their running log Gamma"""

    x: np.ndarray
    y: np.ndarray
    log_weights: np.ndarray
    t: float

    def __post_init__(self) -> None:
        if self.log_weights.ndim != 1 or self.log_weights.shape[0] < 2:
            raise StructuralError("an ensemble needs a flat array of at least two log weights")
        if not np.all(np.isfinite(self.log_weights)):
            raise DomainError(f"non-finite log weights at t={self.t:g}")

    @property
    def size(self) -> int:
        return int(self.log_weights.shape[0])

    @property
    def log_normalizer(self) -> float:
        return float(logsumexp(self.log_weights))

    @property
    def normalized_weights(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_normalizer)

    @property
    def ess(self) -> float:
        """(sum w)^2 / sum w^2 in log space"""
        lw = self.log_weights
        return float(np.exp(2 * logsumexp(lw) - logsumexp(2 * lw)))

    def estimate(self, dictionary: TestDictionary, mode: str) -> FilterEstimate:
        """pi(phi_i) = rho(phi_i) / rho(1), with delta-method standard errors"""
        w = self.normalized_weights
        phi = dictionary.evaluate(self.x)
        pi = w @ phi
        se = np.sqrt((w**2) @ (phi - pi) ** 2)
        log_rho = self.log_normalizer - math.log(self.size)
        return FilterEstimate(
            t=self.t,
            mode=mode,
            pi=pi,
            se=se,
            rho_one=math.exp(log_rho),
            log_rho_one=log_rho,
            ess=self.ess,
            n_particles=self.size,
            dictionary_key=dictionary.key,
        )


@dataclass
class FilterRun:
    mode: str
    estimates: List[FilterEstimate]
    dictionary: TestDictionary
    n_particles: int
    observation_ref: str = ""
    ensembles: List[WeightedEnsemble] = field(default_factory=list, repr=False)

    def at(self, t: float) -> FilterEstimate:
        for est in self.estimates:
            if abs(est.t - t) <= 1e-9 * max(1.0, abs(t)):
                return est
        raise DomainError(f"no filter estimate at t={t}")

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for est in self.estimates:
            row = {"t": est.t}
            row.update({f"pi_{i + 1}": v for i, v in enumerate(est.pi)})
            row.update({"rho_1": est.rho_one, "ess": est.ess})
            rows.append(row)
        return pd.DataFrame(rows)


def simulate_particles(
    model: SystemModel,
    z0: Tuple[StateLike, StateLike],
    mode: str,
    t_end: float,
    seed: int,
    stream_id: int,
    offset: int,
    count: int,
    tol: float = DEFAULT_TOL,
) -> Trajectory:
    """Signal copies on [0, t_end] driven by particle substreams offset..offset+count"""
    if mode not in MODES:
        raise StructuralError(f"filter mode must be one of {MODES}, got {mode}")
    back = 2 * model.back_cells(tol) * model.dt if mode == "reduced" else 0.0
    path = sample_path(model.cov1, model.cov2, 0, model.grid(t_end, back), seed, stream_id, particles=count, particle_offset=offset)
    if mode == "full":
        return integrate_full(model, z0, path, 0.0, t_end)
    return integrate_reduced(model, z0[0], BackwardSolver(model, tol), path, 0.0, t_end)


def accumulate_log_weights(obs: ObservationModel, traj: Trajectory, r: Optional[ObservationPath]) -> np.ndarray:
    """Running log Gamma on the observation grid, shape (steps + 1, *batch); zero without observations"""
    batch = traj.batch_shape
    if r is None or obs.is_zero:
        n = len(traj.times) - 1 if r is None else len(r.increments)
        return np.zeros((n + 1,) + batch)
    if abs(traj.dt * r.coarsen - r.step) > 1e-9 * r.step or abs(float(traj.times[0] - r.times[0])) > 1e-12:
        raise StructuralError("observation grid is not a coarsening of the particle grid")
    k = min(len(r.increments), (len(traj.times) - 1) // r.coarsen)
    idx = np.arange(k) * r.coarsen
    h = obs(traj.x[idx], traj.y[idx])
    dr = r.increments[:k].reshape((k,) + (1,) * len(batch) + (r.dim3,))
    steps = ks_log_weight_step(h, dr, r.step)
    return np.concatenate([np.zeros((1,) + batch), np.cumsum(steps, axis=0)], axis=0)


def chunk_bounds(n: int, chunk_size: int) -> List[Tuple[int, int]]:
    return [(start, min(chunk_size, n - start)) for start in range(0, n, chunk_size)]


def run_filter(
    model: SystemModel,
    obs: ObservationModel,
    r: Optional[ObservationPath],
    mode: str,
    n_particles: int,
    seed: int,
    z0: Tuple[StateLike, StateLike],
    dictionary: TestDictionary,
    times: Optional[Sequence[float]] = None,
    replication: int = 0,
    chunk_size: int = 256,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
    stream_id: Optional[int] = None,
) -> FilterRun:
    """pi_t(phi) over the dictionary at the requested times.

    Particles are simulated in fixed chunks (possibly on several threads) and reduced once in
    particle order, so the result does not depend on chunk scheduling.
    """
    if n_particles < 2:
        raise DomainError("need at least two particles")
    if times is None:
        if r is None:
            raise DomainError("times are required when no observation path is given")
        times = [r.t_end]
    times = sorted(float(t) for t in times)
    step = model.dt if r is None else r.step
    coarsen = 1 if r is None else r.coarsen
    k_obs = [int(round(t / step)) for t in times]
    for t, k in zip(times, k_obs):
        if k <= 0 or abs(k * step - t) > 1e-9 * max(1.0, t) or (r is not None and k > len(r.increments)):
            raise DomainError(f"filter time {t} is not a positive point of the observation grid")
    t_end = k_obs[-1] * step
    stream = stream_key(replication, STREAM_PARTICLES) if stream_id is None else stream_id
    logger.info(f"Running {mode} filter: N={n_particles}, eps={model.epsilon:g}, times={times}")

    def work(chunk: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        offset, count = chunk
        traj = simulate_particles(model, z0, mode, t_end, seed, stream, offset, count, tol)
        lw = accumulate_log_weights(obs, traj, r)
        fine = [k * coarsen for k in k_obs]
        return lw[k_obs], traj.x[fine], traj.y[fine]

    chunks = chunk_bounds(n_particles, chunk_size)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    log_w = np.concatenate([res[0] for res in results], axis=1)
    xs = np.concatenate([res[1] for res in results], axis=1)
    ys = np.concatenate([res[2] for res in results], axis=1)

    run = FilterRun(mode, [], dictionary, n_particles, "" if r is None else r.truth_ref)
    for i, t in enumerate(times):
        ensemble = WeightedEnsemble(xs[i], ys[i], log_w[i], t)
        est = ensemble.estimate(dictionary, mode)
        if est.ess < DEGENERACY_SHARE * n_particles:
            logger.error(f"{mode} filter degenerated at t={t:g}")
            raise DegeneracyError(f"{mode} filter weights collapsed at t={t:g}", est.ess)
        run.estimates.append(est)
        run.ensembles.append(ensemble)
    logger.info(f"{mode} filter done: ESS at t={times[-1]:g} is {run.estimates[-1].ess:.1f} of {n_particles}")
    return run
