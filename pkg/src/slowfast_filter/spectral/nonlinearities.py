"""
Nonlinearity registry - Lipschitz couplings F (into the slow space) and G (into the fast space)
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Type

import numpy as np

from ..errors import DomainError, StructuralError
from .operators import SpaceSpec

logger = logging.getLogger(__name__)

TARGETS = ("slow", "fast")


class Nonlinearity(ABC):
    """Base class for all registered couplings. Maps (x, y) batches to the target space."""

    kind = ""

    def __init__(
        self,
        slow_space: SpaceSpec,
        fast_space: SpaceSpec,
        target: str,
        params: Optional[Dict[str, Any]] = None,
        declared_lipschitz: Optional[float] = None,
    ):
        if target not in TARGETS:
            raise StructuralError(f"Nonlinearity target must be one of {TARGETS}, got {target}")
        self.slow_space = slow_space
        self.fast_space = fast_space
        self.target = target
        self.out_space = slow_space if target == "slow" else fast_space
        self.params = dict(params or {})
        self._configure()
        natural = self.natural_lipschitz()
        self.declared_lipschitz = float(natural if declared_lipschitz is None else declared_lipschitz)
        if self.declared_lipschitz < 0:
            raise DomainError(f"{self.kind}: declared Lipschitz constant must be >= 0")
        if self.declared_lipschitz < natural * (1 - 1e-12):
            logger.warning(f"{self.kind} on {self.target}: declared L={self.declared_lipschitz:g} below the known constant {natural:g}")

    def _configure(self) -> None:
        """Validate and normalize params; subclasses override"""

    @abstractmethod
    def natural_lipschitz(self) -> float:
        """Lipschitz constant in the (||x|| + ||y||) norm implied by the parameters"""

    @abstractmethod
    def _evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        pass

    @property
    def is_zero(self) -> bool:
        return False

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.slow_space.check(x)
        self.fast_space.check(y)
        return self._evaluate(x, y)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "target": self.target, "params": self.params, "lipschitz": self.declared_lipschitz}

    def _zeros(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        batch = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        return np.zeros(batch + (self.out_space.dim,))


class _Injection(Nonlinearity):
    """Shared plumbing for couplings acting on the leading coefficients of one source"""

    def _configure(self) -> None:
        source = self.params.setdefault("source", "y" if self.target == "slow" else "x")
        if source not in ("x", "y"):
            raise StructuralError(f"{self.kind}: source must be 'x' or 'y', got {source}")
        src_dim = self.slow_space.dim if source == "x" else self.fast_space.dim
        count = int(self.params.setdefault("count", min(src_dim, self.out_space.dim)))
        if not 0 < count <= min(src_dim, self.out_space.dim):
            raise StructuralError(f"{self.kind}: count {count} exceeds source/target dimension")
        self.params["count"] = count

    def _inject(self, x: np.ndarray, y: np.ndarray, values_of: Any) -> np.ndarray:
        src = x if self.params["source"] == "x" else y
        n = self.params["count"]
        out = self._zeros(x, y)
        out[..., :n] = values_of(src[..., :n])
        return out


class ZeroNonlinearity(Nonlinearity):
    kind = "zero"

    def natural_lipschitz(self) -> float:
        return 0.0

    @property
    def is_zero(self) -> bool:
        return True

    def _evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self._zeros(x, y)


class LinearCoupling(_Injection):
    """gain * (leading source coefficients injected into the target space)"""

    kind = "linear-coupling"

    def natural_lipschitz(self) -> float:
        return abs(float(self.params.get("gain", 0.0)))

    def _evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        gain = float(self.params.get("gain", 0.0))
        return self._inject(x, y, lambda s: gain * s)


class SineSaturating(_Injection):
    """amplitude * sin(.) applied componentwise to the injected source coefficients"""

    kind = "sine-saturating"

    def natural_lipschitz(self) -> float:
        return abs(float(self.params.get("amplitude", 0.0)))

    def _evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        a = float(self.params.get("amplitude", 0.0))
        return self._inject(x, y, lambda s: a * np.sin(s))


class UserTable(_Injection):
    """Piecewise-linear scalar map from (knots, values), applied componentwise"""

    kind = "user-table"

    def _configure(self) -> None:
        super()._configure()
        knots = np.asarray(self.params.get("knots", []), dtype=float)
        values = np.asarray(self.params.get("values", []), dtype=float)
        if knots.ndim != 1 or knots.size < 2 or knots.shape != values.shape:
            raise StructuralError("user-table needs matching 1-D 'knots' and 'values' with at least two entries")
        if np.any(np.diff(knots) <= 0):
            raise StructuralError("user-table knots must be strictly increasing")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise DomainError("user-table knots and values must be finite")
        if float(np.interp(0.0, knots, values)) != 0.0:
            raise DomainError("user-table must map 0 to 0")
        self._knots = knots
        self._values = values

    def natural_lipschitz(self) -> float:
        return float(np.max(np.abs(np.diff(self._values) / np.diff(self._knots))))

    def _evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self._inject(x, y, lambda s: np.interp(s, self._knots, self._values))


class ThermoelasticCoupling(Nonlinearity):
    """amplitude * sin(v_k + v_t,k + theta_k) per shared mode k.

    The slow space holds energy coordinates (sqrt(lambda_k) v_k, v_t,k); the slow target writes into the
    velocity slot of each block, the fast target into theta_k.
    """

    kind = "thermoelastic-coupling"

    def _configure(self) -> None:
        if any(b != 2 for b in self.slow_space.block_layout):
            raise StructuralError("thermoelastic-coupling needs a slow space of 2x2 wave blocks")
        modes = min(self.slow_space.n_blocks, self.fast_space.dim)
        eigenvalues = self.params.get("eigenvalues")
        if eigenvalues is None:
            eigenvalues = [float((k + 1) ** 2) for k in range(self.slow_space.n_blocks)]
        lam = np.asarray(eigenvalues, dtype=float)
        if lam.size < modes or np.any(lam[:modes] <= 0):
            raise DomainError("thermoelastic-coupling needs one positive eigenvalue per shared mode")
        self.params["eigenvalues"] = [float(v) for v in lam]
        self._modes = modes
        self._inv_sqrt = 1.0 / np.sqrt(lam[:modes])

    def natural_lipschitz(self) -> float:
        a = abs(float(self.params.get("amplitude", 0.0)))
        return a * max(1.0, float(np.max(np.sqrt(1.0 + self._inv_sqrt**2))))

    def _evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        a = float(self.params.get("amplitude", 0.0))
        n = self._modes
        arg = x[..., 0 : 2 * n : 2] * self._inv_sqrt + x[..., 1 : 2 * n : 2] + y[..., :n]
        out = self._zeros(x, y)
        if self.target == "slow":
            out[..., 1 : 2 * n : 2] = a * np.sin(arg)
        else:
            out[..., :n] = a * np.sin(arg)
        return out


# Nonlinearity type registry
NONLINEARITY_TYPES: Dict[str, Type[Nonlinearity]] = {
    "zero": ZeroNonlinearity,
    "linear-coupling": LinearCoupling,
    "sine-saturating": SineSaturating,
    "user-table": UserTable,
    "thermoelastic-coupling": ThermoelasticCoupling,
}


def build_nonlinearity(
    kind: str,
    slow_space: SpaceSpec,
    fast_space: SpaceSpec,
    target: str,
    params: Optional[Dict[str, Any]] = None,
    declared_lipschitz: Optional[float] = None,
) -> Nonlinearity:
    """Instantiate a registered nonlinearity"""
    cls = NONLINEARITY_TYPES.get(kind)
    if cls is None:
        raise StructuralError(f"Unknown nonlinearity kind: {kind} (known: {', '.join(NONLINEARITY_TYPES)})")
    return cls(slow_space, fast_space, target, params, declared_lipschitz)


def lipschitz_probe(
    fn: Any,
    slow_space: SpaceSpec,
    fast_space: SpaceSpec,
    probes: int = 10_000,
    radius: float = 10.0,
    seed: int = 0,
) -> Dict[str, float]:
    """Largest observed ||fn(z1) - fn(z2)|| / (||x1 - x2|| + ||y1 - y2||) and ||fn(z)|| / (||x|| + ||y||).

    Half the pairs are far apart inside the ball, half are close (local slopes).
    """
    rng = np.random.default_rng(seed)
    d1, d2 = slow_space.dim, fast_space.dim

    def ball(n: int) -> np.ndarray:
        g = rng.standard_normal((n, d1 + d2))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * radius * rng.random((n, 1)) ** (1.0 / (d1 + d2))

    n_far = probes // 2
    z1 = ball(probes)
    z2 = np.concatenate([ball(n_far), z1[n_far:] + 1e-4 * rng.standard_normal((probes - n_far, d1 + d2))])
    x1, y1 = z1[:, :d1], z1[:, d1:]
    x2, y2 = z2[:, :d1], z2[:, d1:]
    f1, f2 = fn(x1, y1), fn(x2, y2)
    dist = np.linalg.norm(x1 - x2, axis=1) + np.linalg.norm(y1 - y2, axis=1)
    ratios = np.linalg.norm(f1 - f2, axis=1) / np.maximum(dist, 1e-300)
    size = np.linalg.norm(x1, axis=1) + np.linalg.norm(y1, axis=1)
    growth = np.linalg.norm(f1, axis=1) / np.maximum(size, 1e-300)
    return {
        "max_ratio": float(np.max(ratios)),
        "max_growth": float(np.max(growth)),
        "max_norm": float(np.max(np.linalg.norm(f1, axis=1))),
        "probes": float(probes),
    }


def zero_anchor_holds(nl: Nonlinearity) -> bool:
    out = nl(np.zeros(nl.slow_space.dim), np.zeros(nl.fast_space.dim))
    return bool(np.all(out == 0.0))
