"""
Truncated Hilbert spaces and block-diagonal generators with exact semigroups
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from ..errors import DomainError, StructuralError

logger = logging.getLogger(__name__)

# Terms of the phi_1 power series used for small 2x2 blocks
PHI_SERIES_TERMS = 20

# Below this |disc * t^2| the 2x2 closed form switches to its Taylor expansion
_SMALL_DISC = 1e-8


@dataclass(frozen=True)
class SpaceSpec:
    """A truncated Hilbert space: a coefficient vector split into 1x1 and 2x2 mode blocks"""

    name: str
    dim: int
    block_layout: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "block_layout", tuple(int(b) for b in self.block_layout))
        if self.dim <= 0:
            raise StructuralError(f"Space {self.name} must have positive dimension, got {self.dim}")
        if any(b not in (1, 2) for b in self.block_layout):
            raise StructuralError(f"Space {self.name}: block sizes must be 1 or 2, got {self.block_layout}")
        if sum(self.block_layout) != self.dim:
            raise StructuralError(f"Space {self.name}: blocks sum to {sum(self.block_layout)}, dim is {self.dim}")

    @classmethod
    def scalar(cls, name: str, dim: int) -> "SpaceSpec":
        return cls(name, dim, (1,) * dim)

    @classmethod
    def paired(cls, name: str, modes: int) -> "SpaceSpec":
        return cls(name, 2 * modes, (2,) * modes)

    @cached_property
    def block_starts(self) -> Tuple[int, ...]:
        starts = np.concatenate([[0], np.cumsum(self.block_layout)[:-1]]).astype(int)
        return tuple(int(s) for s in starts)

    @cached_property
    def scalar_index(self) -> np.ndarray:
        return np.array([s for s, b in zip(self.block_starts, self.block_layout) if b == 1], dtype=int)

    @cached_property
    def pair_index(self) -> np.ndarray:
        pairs = [(s, s + 1) for s, b in zip(self.block_starts, self.block_layout) if b == 2]
        return np.array(pairs, dtype=int).reshape(-1, 2)

    @property
    def n_blocks(self) -> int:
        return len(self.block_layout)

    def check(self, coeffs: np.ndarray) -> None:
        """Raise if the trailing axis does not hold this space's coefficients"""
        if coeffs.ndim == 0 or coeffs.shape[-1] != self.dim:
            raise StructuralError(f"Expected trailing dimension {self.dim} for space {self.name}, got shape {coeffs.shape}")


@dataclass(frozen=True, eq=False)
class HVector:
    """Coefficients of an element of a truncated space; leading axes are ensemble axes"""

    space: SpaceSpec
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=float)
        self.space.check(coeffs)
        if not np.all(np.isfinite(coeffs)):
            raise DomainError(f"HVector in {self.space.name} has non-finite coefficients")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, space: SpaceSpec, batch: Tuple[int, ...] = ()) -> "HVector":
        return cls(space, np.zeros(batch + (space.dim,)))

    def norm(self) -> Union[float, np.ndarray]:
        n = np.linalg.norm(self.coeffs, axis=-1)
        return float(n) if np.ndim(n) == 0 else n


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    """Block-diagonal linear map laid out like a SpaceSpec: one scalar per 1x1 block, one 2x2 matrix per pair"""

    space: SpaceSpec
    scalars: np.ndarray
    pairs: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply to the trailing axis of v (any number of leading ensemble axes)"""
        space = self.space
        if v.shape[-1] != space.dim:
            raise StructuralError(f"Cannot apply {space.name} block map to trailing dimension {v.shape[-1]}")
        n_pairs = len(self.pairs)
        if n_pairs == 0:
            return v * self.scalars
        if n_pairs * 2 == space.dim:
            vp = v.reshape(v.shape[:-1] + (n_pairs, 2))
            return np.einsum("kij,...kj->...ki", self.pairs, vp).reshape(v.shape)
        out = np.empty(v.shape, dtype=float)
        si = space.scalar_index
        if si.size:
            out[..., si] = v[..., si] * self.scalars
        pi = space.pair_index
        out[..., pi] = np.einsum("kij,...kj->...ki", self.pairs, v[..., pi])
        return out

    def compose(self, other: "BlockMatrix") -> "BlockMatrix":
        """self after other"""
        if other.space != self.space:
            raise StructuralError("Cannot compose block maps on different spaces")
        return BlockMatrix(self.space, self.scalars * other.scalars, np.matmul(self.pairs, other.pairs))

    def scaled(self, c: float) -> "BlockMatrix":
        return BlockMatrix(self.space, self.scalars * c, self.pairs * c)

    def norm(self) -> float:
        """Euclidean operator norm: max over blocks"""
        parts = [0.0]
        if self.scalars.size:
            parts.append(float(np.max(np.abs(self.scalars))))
        if self.pairs.size:
            parts.append(float(np.max(np.linalg.norm(self.pairs, ord=2, axis=(1, 2)))))
        return max(parts)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.space.dim, self.space.dim))
        for i, s in zip(self.space.scalar_index, self.scalars):
            out[i, i] = s
        for (i, j), m in zip(self.space.pair_index, self.pairs):
            out[np.ix_([i, j], [i, j])] = m
        return out


def _pair_exp(pairs: np.ndarray, t: float) -> np.ndarray:
    """Closed-form exp(M t) for a stack of 2x2 matrices"""
    if pairs.size == 0:
        return pairs.copy()
    tau = pairs[:, 0, 0] + pairs[:, 1, 1]
    det = pairs[:, 0, 0] * pairs[:, 1, 1] - pairs[:, 0, 1] * pairs[:, 1, 0]
    disc = tau * tau / 4.0 - det
    q = disc * t * t
    r = np.sqrt(np.abs(q))
    small = np.abs(q) < _SMALL_DISC
    r_safe = np.where(small, 1.0, r)
    with np.errstate(over="ignore", invalid="ignore"):
        c = np.where(q > 0, np.cosh(r), np.cos(r))
        s_over_r = np.where(q > 0, np.sinh(r) / r_safe, np.sin(r) / r_safe)
    c = np.where(small, 1.0 + q / 2.0, c)
    s_over_r = np.where(small, 1.0 + q / 6.0, s_over_r)
    eye = np.eye(2)
    shifted = pairs - (tau / 2.0)[:, None, None] * eye
    scale = np.exp(tau * t / 2.0)
    return scale[:, None, None] * (c[:, None, None] * eye + (t * s_over_r)[:, None, None] * shifted)


def _pair_phi1(m: np.ndarray) -> np.ndarray:
    """phi_1(m) = m^{-1}(e^m - I) for one 2x2 matrix, with series and augmented-exponential fallbacks"""
    eye = np.eye(2)
    nrm = float(np.linalg.norm(m, 2))
    if nrm < 1.0:
        term = eye.copy()
        total = eye.copy()
        for j in range(1, PHI_SERIES_TERMS):
            term = term @ m / (j + 1)
            total = total + term
        return total
    det = float(np.linalg.det(m))
    if abs(det) > 1e-8 * nrm * nrm:
        return np.linalg.solve(m, _pair_exp(m[None], 1.0)[0] - eye)
    augmented = np.zeros((4, 4))
    augmented[:2, :2] = m
    augmented[:2, 2:] = eye
    return scipy.linalg.expm(augmented)[:2, 2:]


def _scalar_phi1(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-10
    z_safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(z) / z_safe)


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Block-diagonal generator in an orthonormal mode basis, one 1x1 or 2x2 block per mode"""

    space: SpaceSpec
    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        blocks = tuple(np.asarray(b, dtype=float) for b in self.blocks)
        if len(blocks) != self.space.n_blocks:
            raise StructuralError(f"{self.space.name}: {len(blocks)} blocks given for {self.space.n_blocks} layout slots")
        for k, (b, size) in enumerate(zip(blocks, self.space.block_layout)):
            if b.shape not in ((size, size),) and not (size == 1 and b.shape in ((), (1,))):
                raise StructuralError(f"{self.space.name}: block {k} has shape {b.shape}, layout expects {size}x{size}")
            if not np.all(np.isfinite(b)):
                raise DomainError(f"{self.space.name}: block {k} has non-finite entries")
        object.__setattr__(self, "blocks", tuple(b.reshape(size, size) for b, size in zip(blocks, self.space.block_layout)))

    @classmethod
    def diagonal(cls, name: str, entries: Sequence[float]) -> "SpectralOperator":
        space = SpaceSpec.scalar(name, len(entries))
        return cls(space, tuple(np.array([[e]], dtype=float) for e in entries))

    @classmethod
    def wave(cls, name: str, eigenvalues: Sequence[float], damping: float) -> "SpectralOperator":
        """Damped wave operator in energy coordinates (sqrt(lambda) v, v_t): blocks [[0, w], [-w, -damping]]"""
        space = SpaceSpec.paired(name, len(eigenvalues))
        blocks = []
        for lam in eigenvalues:
            if lam <= 0:
                raise DomainError(f"Wave eigenvalues must be positive, got {lam}")
            w = math.sqrt(lam)
            blocks.append(np.array([[0.0, w], [-w, -damping]]))
        return cls(space, tuple(blocks))

    @cached_property
    def generator(self) -> BlockMatrix:
        scalars = np.array([b[0, 0] for b, size in zip(self.blocks, self.space.block_layout) if size == 1])
        pairs = np.array([b for b, size in zip(self.blocks, self.space.block_layout) if size == 2]).reshape(-1, 2, 2)
        return BlockMatrix(self.space, scalars, pairs)

    def scaled(self, c: float) -> "SpectralOperator":
        return SpectralOperator(self.space, tuple(b * c for b in self.blocks))

    def dense(self) -> np.ndarray:
        return self.generator.dense()

    @property
    def is_diagonal(self) -> bool:
        return all(size == 1 for size in self.space.block_layout)

    @property
    def diagonal_entries(self) -> np.ndarray:
        if not self.is_diagonal:
            raise StructuralError(f"Operator on {self.space.name} is not diagonal")
        return self.generator.scalars.copy()

    def log_norm(self) -> float:
        """Largest eigenvalue of the symmetric part, max over blocks"""
        g = self.generator
        parts = []
        if g.scalars.size:
            parts.append(float(np.max(g.scalars)))
        if g.pairs.size:
            sym = 0.5 * (g.pairs + np.transpose(g.pairs, (0, 2, 1)))
            parts.append(float(np.max(np.linalg.eigvalsh(sym)[:, -1])))
        return max(parts)

    def exp(self, t: float) -> BlockMatrix:
        """e^{op t}, exact per block"""
        if not math.isfinite(t):
            raise DomainError(f"Semigroup time must be finite, got {t}")
        g = self.generator
        return BlockMatrix(self.space, np.exp(g.scalars * t), _pair_exp(g.pairs, t))

    def phi1(self, t: float) -> BlockMatrix:
        """phi_1(op t) = (op t)^{-1}(e^{op t} - I), so that dt * phi_1(op dt) integrates a frozen forcing over one step"""
        if not math.isfinite(t):
            raise DomainError(f"phi_1 time must be finite, got {t}")
        g = self.generator
        pairs = np.array([_pair_phi1(m * t) for m in g.pairs]).reshape(-1, 2, 2)
        return BlockMatrix(self.space, _scalar_phi1(g.scalars * t), pairs)

    def noise_filter(self, dt: float) -> BlockMatrix:
        """Map from raw Wiener increments over one step to the exactly filtered stochastic convolution increment.

        1x1 blocks carry the exact OU variance factor; 2x2 blocks use the left-point rule e^{M dt} dW.
        """
        g = self.generator
        u = -g.scalars * dt
        small = np.abs(u) < 1e-12
        u_safe = np.where(small, 1.0, u)
        factor = np.where(small, 1.0 - u, -np.expm1(-2.0 * u) / (2.0 * u_safe))
        return BlockMatrix(self.space, np.sqrt(factor), _pair_exp(g.pairs, dt))


def semigroup_apply(op: SpectralOperator, t: float, v: HVector) -> HVector:
    """e^{op t} v, exact per block; negative t allowed"""
    if v.space != op.space:
        raise StructuralError(f"Vector lives in {v.space.name}, operator acts on {op.space.name}")
    return HVector(op.space, op.exp(t).apply(v.coeffs))
