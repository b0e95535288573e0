"""Block structure and weighted norms shared by the rest of the library.

Variables are flat float64 arrays split into ``m`` contiguous blocks. A
:class:`BlockPartition` records the block sizes and start offsets, and a
:class:`DiagonalMetric` holds one positive weight per block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class DimensionError(ValidationError):
    """Raised when array or partition sizes do not line up."""


@dataclass(frozen=True)
class BlockPartition:
    """Partition of ``range(N)`` into ``m`` contiguous blocks.

    Parameters
    ----------
    dims : sequence of int
        Size of each block, all positive.
    permutation : array, optional
        When blocks were given as arbitrary index groups, ``permutation[j]``
        is the original coordinate stored at blocked position ``j``.
    """

    dims: tuple
    offsets: tuple = field(init=False)
    permutation: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 0:
            raise ValidationError("a partition needs at least one block")
        if min(dims) <= 0:
            raise ValidationError("block dimensions must be positive")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "offsets", tuple(int(o) for o in np.concatenate(([0], np.cumsum(dims)[:-1]))))
        if self.permutation is not None:
            perm = np.asarray(self.permutation, dtype=np.int64)
            if perm.shape != (sum(dims),) or not np.array_equal(np.sort(perm), np.arange(sum(dims))):
                raise ValidationError("permutation must be a rearrangement of range(N)")
            object.__setattr__(self, "permutation", perm)

    @classmethod
    def scalar(cls, m: int) -> "BlockPartition":
        """``m`` blocks of dimension one."""
        return cls(dims=(1,) * int(m))

    @classmethod
    def from_index_groups(cls, groups: Sequence[Sequence[int]]) -> "BlockPartition":
        """Build a partition from possibly non-contiguous coordinate groups.

        The groups must cover ``range(N)`` exactly once. Use
        :meth:`to_blocked` and :meth:`from_blocked` to move between the
        original coordinate order and the contiguous blocked order.
        """
        groups = [list(g) for g in groups]
        perm = np.array([j for g in groups for j in g], dtype=np.int64)
        return cls(dims=tuple(len(g) for g in groups), permutation=perm)

    @property
    def m(self) -> int:
        return len(self.dims)

    @property
    def n_total(self) -> int:
        return self.offsets[-1] + self.dims[-1]

    @property
    def is_scalar(self) -> bool:
        return self.n_total == self.m

    def block_slice(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i] + self.dims[i])

    def coords(self, blocks) -> np.ndarray:
        """Flat coordinate indices of the given blocks, in the given order."""
        blocks = np.asarray(blocks, dtype=np.int64)
        if self.is_scalar:
            return blocks
        if blocks.size == 0:
            return blocks
        return np.concatenate([np.arange(self.offsets[i], self.offsets[i] + self.dims[i]) for i in blocks])

    def expand(self, per_block) -> np.ndarray:
        """Repeat one value per block into one value per coordinate."""
        per_block = np.asarray(per_block, dtype=np.float64)
        if per_block.shape != (self.m,):
            raise DimensionError(f"expected {self.m} per-block values, got shape {per_block.shape}")
        return per_block if self.is_scalar else np.repeat(per_block, self.dims)

    def block_sq_norms(self, data: np.ndarray) -> np.ndarray:
        """Vector of ``||x_i||^2`` for every block."""
        sq = np.asarray(data, dtype=np.float64) ** 2
        if self.is_scalar:
            return sq
        return np.add.reduceat(sq, np.asarray(self.offsets))

    def to_blocked(self, original: np.ndarray) -> np.ndarray:
        original = np.asarray(original, dtype=np.float64)
        return original if self.permutation is None else original[self.permutation]

    def from_blocked(self, blocked: np.ndarray) -> np.ndarray:
        blocked = np.asarray(blocked, dtype=np.float64)
        if self.permutation is None:
            return blocked
        out = np.empty_like(blocked)
        out[self.permutation] = blocked
        return out


@dataclass
class BlockVector:
    """A flat float64 array viewed through a :class:`BlockPartition`."""

    data: np.ndarray
    partition: BlockPartition

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.partition.n_total,):
            raise DimensionError(
                f"data has shape {self.data.shape}, partition expects ({self.partition.n_total},)"
            )

    @classmethod
    def zeros(cls, partition: BlockPartition) -> "BlockVector":
        return cls(np.zeros(partition.n_total), partition)

    def block(self, i: int) -> np.ndarray:
        return self.data[self.partition.block_slice(i)]

    def copy(self) -> "BlockVector":
        return BlockVector(self.data.copy(), self.partition)


class MetricKind(str, Enum):
    GAMMA_INV = "GammaInv"
    W = "W"
    LAMBDA = "Lambda"
    IDENTITY = "Identity"


@dataclass(frozen=True)
class DiagonalMetric:
    """Block-diagonal metric with one positive weight per block."""

    weights: np.ndarray
    kind: MetricKind = MetricKind.IDENTITY

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise DimensionError("metric weights must be a nonempty vector")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValidationError("metric weights must be positive and finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "kind", MetricKind(self.kind))

    @classmethod
    def identity(cls, m: int) -> "DiagonalMetric":
        return cls(np.ones(m), MetricKind.IDENTITY)

    @classmethod
    def gamma_inv(cls, gamma) -> "DiagonalMetric":
        return cls(1.0 / np.asarray(gamma, dtype=np.float64), MetricKind.GAMMA_INV)

    @classmethod
    def w_metric(cls, gamma, probs) -> "DiagonalMetric":
        gamma = np.asarray(gamma, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        return cls(1.0 / (gamma * probs), MetricKind.W)

    @classmethod
    def lipschitz(cls, lipschitz) -> "DiagonalMetric":
        return cls(np.asarray(lipschitz, dtype=np.float64), MetricKind.LAMBDA)

    @property
    def m(self) -> int:
        return self.weights.size


def weighted_norm_sq(x: BlockVector, metric: DiagonalMetric) -> float:
    """Return ``sum_i w_i ||x_i||^2``."""
    if x.partition.m != metric.m:
        raise DimensionError(f"vector has {x.partition.m} blocks, metric has {metric.m} weights")
    return float(np.dot(metric.weights, x.partition.block_sq_norms(x.data)))


def masked_update(x: BlockVector, mask, candidate: BlockVector) -> BlockVector:
    """Take the candidate's block wherever ``mask`` is true, else keep ``x``."""
    if x.partition != candidate.partition:
        raise DimensionError("x and candidate use different partitions")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (x.partition.m,):
        raise DimensionError(f"mask has shape {mask.shape}, expected ({x.partition.m},)")
    coord_mask = mask if x.partition.is_scalar else np.repeat(mask, x.partition.dims)
    return BlockVector(np.where(coord_mask, candidate.data, x.data), x.partition)
