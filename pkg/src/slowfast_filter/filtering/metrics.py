"""
Test-function dictionary and the weighted distance d between filter estimates
"""
import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DomainError, StructuralError
from ..spectral.operators import SpaceSpec

logger = logging.getLogger(__name__)

MIN_DICTIONARY_SIZE = 8


@dataclass(frozen=True)
class TestFunction:
    __test__ = False

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    lipschitz: float

    @property
    def norm(self) -> float:
        """sup |phi| + Lip(phi)"""
        return self.sup_bound + self.lipschitz


class TestDictionary:
    """Ordered test functions phi_1..phi_m with weights 2^-i, i = 1..m"""

    __test__ = False

    def __init__(self, name: str, functions: Sequence[TestFunction], min_size: int = MIN_DICTIONARY_SIZE):
        if len(functions) < min_size:
            raise StructuralError(f"dictionary {name} needs at least {min_size} functions, got {len(functions)}")
        self.name = name
        self.functions: List[TestFunction] = list(functions)

    @property
    def size(self) -> int:
        return len(self.functions)

    @property
    def key(self) -> Tuple[str, ...]:
        return (self.name,) + tuple(f.name for f in self.functions)

    @property
    def weights(self) -> np.ndarray:
        return 0.5 ** np.arange(1, self.size + 1)

    @property
    def sup_bounds(self) -> np.ndarray:
        return np.array([f.sup_bound for f in self.functions])

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.sup_bounds)))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """phi_i(x) stacked on a new last axis, shape (..., m)"""
        return np.stack([f.fn(x) for f in self.functions], axis=-1)

    def distance_bound(self) -> float:
        """sum_i 2^-i * 2 sup|phi_i|"""
        return float(np.sum(self.weights * 2 * self.sup_bounds))

    def tail_bound(self) -> float:
        """Mass of the omitted terms i > m for functions bounded by 1"""
        return 2.0 ** (1 - self.size)

    def __len__(self) -> int:
        return self.size


def build_default_dictionary(space: SpaceSpec, size: int = 16, scales: Optional[Sequence[float]] = None, base: int = 6) -> TestDictionary:
    """tanh(x_j / c_j) on the leading coordinates, then their pairwise products, up to `size` functions"""
    n = min(base, space.dim)
    c = np.ones(n) if scales is None else np.asarray(scales, dtype=float)[:n]
    if c.shape != (n,) or np.any(c <= 0):
        raise DomainError(f"dictionary needs {n} positive coordinate scales")
    functions: List[TestFunction] = []
    for j in range(n):
        functions.append(TestFunction(f"tanh(x{j})", lambda x, j=j: np.tanh(x[..., j] / c[j]), 1.0, 1.0 / c[j]))
    for a, b in combinations(range(n), 2):
        if len(functions) >= size:
            break
        functions.append(
            TestFunction(
                f"tanh(x{a})*tanh(x{b})",
                lambda x, a=a, b=b: np.tanh(x[..., a] / c[a]) * np.tanh(x[..., b] / c[b]),
                1.0,
                math.hypot(1.0 / c[a], 1.0 / c[b]),
            )
        )
    if len(functions) < size:
        raise StructuralError(f"space {space.name} supports only {len(functions)} default test functions, asked for {size}")
    return TestDictionary("tanh", functions[:size])


def build_coordinate_dictionary(space: SpaceSpec, size: int = MIN_DICTIONARY_SIZE) -> TestDictionary:
    """Raw coordinates x_0..x_{size-1} (unbounded); filter means for the Kalman comparison"""
    if size > space.dim:
        raise StructuralError(f"space {space.name} has only {space.dim} coordinates")
    functions = [TestFunction(f"x{j}", lambda x, j=j: x[..., j], math.inf, 1.0) for j in range(size)]
    return TestDictionary("coordinates", functions)


def distance_d(a, b, dictionary: TestDictionary) -> float:
    """sum_i |a(phi_i) - b(phi_i)| / 2^i over the dictionary"""
    for est in (a, b):
        if est.dictionary_key != dictionary.key:
            raise StructuralError(f"estimate at t={est.t:g} was evaluated on a different dictionary")
    return float(np.sum(dictionary.weights * np.abs(np.asarray(a.pi) - np.asarray(b.pi))))
