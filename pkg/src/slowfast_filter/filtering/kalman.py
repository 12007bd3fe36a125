"""
Kalman-Bucy reference filter for the linear-Gaussian sub-case
"""
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..errors import DomainError, StructuralError
from ..simulation.integrator import StateLike, SystemModel, coerce_state
from .observation import BoundedLinear, ObservationModel, ObservationPath

logger = logging.getLogger(__name__)


class KalmanBucyFilter:
    """
    Discretized continuous-time filter for dx = M x dt + dW (rate Q), dr = H x dt + dV.
    """

    def __init__(self, drift: np.ndarray, diffusion: np.ndarray, obs_matrix: np.ndarray, mean: np.ndarray, cov: np.ndarray):
        self.M = drift  # state drift matrix
        self.Q = diffusion  # process noise covariance rate
        self.H = obs_matrix  # observation matrix
        self.x = mean  # state mean
        self.P = cov  # state covariance
        self.I = np.eye(self.P.shape[0])

    def transition(self, dt: float) -> Tuple[np.ndarray, np.ndarray]:
        """Exact (Phi, Q_d) over dt by Van Loan's block exponential"""
        n = self.M.shape[0]
        block = np.zeros((2 * n, 2 * n))
        block[:n, :n] = -self.M
        block[:n, n:] = self.Q
        block[n:, n:] = self.M.T
        e = scipy.linalg.expm(block * dt)
        phi = e[n:, n:].T
        q = phi @ e[:n, n:]
        return phi, 0.5 * (q + q.T)

    def predict(self, dt: float) -> None:
        """
        Time update over dt.
        """
        phi, q = self.transition(dt)
        self.x = phi @ self.x
        self.P = phi @ self.P @ phi.T + q

    def update(self, dr: np.ndarray, dt: float) -> None:
        """
        Measurement update with the observation increment dr over dt, read as z = dr/dt with noise I/dt.
        """
        z = dr / dt
        R = np.eye(self.H.shape[0]) / dt
        y = z - self.H @ self.x
        S = self.H @ self.P @ self.H.T + R
        K = np.linalg.solve(S, self.H @ self.P).T
        self.x = self.x + K @ y
        I_KH = self.I - K @ self.H
        self.P = I_KH @ self.P @ I_KH.T + K @ R @ K.T

    def run(self, r: ObservationPath, times: Sequence[float]) -> List[Dict[str, np.ndarray]]:
        """Means and covariances at the requested times, conditioning on increments before each time"""
        wanted = {r.steps_until(t): float(t) for t in times}
        out = []
        for k in range(max(wanted) if wanted else 0):
            self.update(r.increments[k], r.step)
            self.predict(r.step)
            if k + 1 in wanted:
                out.append({"t": wanted[k + 1], "mean": self.x.copy(), "cov": self.P.copy()})
        return out

    @classmethod
    def from_model(cls, model: SystemModel, obs: ObservationModel, x0: StateLike) -> "KalmanBucyFilter":
        """Slow-only linear reference: F must be linear in x and h bounded-linear (clip assumed inactive)"""
        if not isinstance(obs, BoundedLinear):
            raise StructuralError("the Kalman-Bucy reference needs a bounded-linear observation")
        d1, d2 = model.slow_dim, model.fast_dim
        rng = np.random.default_rng(0)
        eye = np.eye(d1)
        if model.f.is_zero:
            jac = np.zeros((d1, d1))
        else:
            if np.any(model.f(np.zeros((4, d1)), rng.standard_normal((4, d2))) != 0):
                raise StructuralError("the Kalman-Bucy reference needs F to ignore the fast variable")
            jac = model.f(eye, np.zeros((d1, d2))).T
            probe = rng.standard_normal((4, d1))
            if not np.allclose(model.f(probe, np.zeros((4, d2))), probe @ jac.T, atol=1e-12):
                raise StructuralError("the Kalman-Bucy reference needs F linear in x")
        drift = model.a.dense() + jac
        diffusion = model.params.sigma1**2 * np.diag(model.cov1.per_mode_variance)
        gain = float(obs.params["gain"])
        h = np.zeros((obs.dim3, d1))
        h[np.arange(obs.dim3), obs.coordinates] = gain
        mean = coerce_state(x0, d1, ())
        if not np.all(np.isfinite(drift)):
            raise DomainError("non-finite drift matrix")
        logger.debug(f"Kalman-Bucy reference with {d1} states and {obs.dim3} observations")
        return cls(drift, diffusion, h, mean, np.zeros((d1, d1)))
