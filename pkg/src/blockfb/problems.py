"""Smooth oracles, separable proximal terms, and the built-in problems.

The solver only talks to a :class:`CompositeProblem`: a smooth oracle, a
separable prox family, the block partition, and the separability structure
used to certify step sizes.

Smooth oracles keep a cache next to the iterate so a block update costs
time proportional to the data touched by that block. Both built-in
quadratic oracles keep their cache exact up to rounding and recompute it
from scratch every ``refresh_every`` block updates.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .core import BlockPartition, DimensionError, ValidationError
from .smoothness import SeparabilityStructure

FEASIBILITY_TOL = 1e-12
DEFAULT_REFRESH = 10_000
DENSE_LIMIT = 2**21


class ProxError(RuntimeError):
    """A proximal step produced a non-finite value."""

    def __init__(self, block: int, message: str = "non-finite prox output"):
        super().__init__(f"block {block}: {message}")
        self.block = block


def soft_threshold(t, kappa):
    """``sign(t) * max(0, |t| - kappa)``, with sign(0) = 0."""
    if np.any(np.asarray(kappa) < 0):
        raise ValidationError("threshold must be nonnegative")
    return _soft(t, kappa)


def _soft(t, kappa):
    # t - clip(t, -kappa, kappa) equals sign(t) max(|t| - kappa, 0) exactly.
    return t - np.minimum(np.maximum(t, -kappa), kappa)


# ---------------------------------------------------------------- caches


@dataclass
class OracleCache:
    """Iterate plus oracle-specific auxiliary vector.

    ``x`` is owned by the cache: the solver reads and writes the iterate
    only through it.
    """

    x: np.ndarray
    aux: Optional[np.ndarray] = None
    updates_since_refresh: int = 0

    def copy(self) -> "OracleCache":
        return OracleCache(self.x.copy(), None if self.aux is None else self.aux.copy(), self.updates_since_refresh)


class SmoothOracle:
    """Base class for the smooth part of a composite problem.

    Subclasses implement :meth:`value` and :meth:`full_gradient`. The
    default cache simply stores the iterate and recomputes a full gradient
    when partial gradients are requested; override the cache methods for
    cheaper block updates.
    """

    partition: BlockPartition

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def partial_gradient(self, x: np.ndarray, i: int) -> np.ndarray:
        return self.full_gradient(x)[self.partition.block_slice(i)]

    def init_cache(self, x: np.ndarray) -> OracleCache:
        return OracleCache(np.array(x, dtype=np.float64))

    def refresh_cache(self, cache: OracleCache) -> None:
        cache.updates_since_refresh = 0

    def gradients(self, cache: OracleCache, coords: np.ndarray) -> np.ndarray:
        """Partial derivatives at the cached iterate for the given coordinates."""
        return self.full_gradient(cache.x)[coords]

    def partial_gradient_from_cache(self, cache: OracleCache, i: int) -> np.ndarray:
        return self.gradients(cache, self.partition.coords([i]))

    def value_from_cache(self, cache: OracleCache) -> float:
        return self.value(cache.x)

    def value_change(self, cache, coords, new_values, grad) -> float:
        """``f(x') - f(x)`` where ``x'`` overwrites ``coords`` with ``new_values``."""
        trial = cache.x.copy()
        trial[coords] = new_values
        return self.value(trial) - self.value(cache.x)

    def assign(self, cache: OracleCache, coords: np.ndarray, new_values: np.ndarray) -> None:
        """Overwrite coordinates of the cached iterate and update the cache."""
        cache.x[coords] = new_values
        cache.updates_since_refresh += len(coords)

    def apply_block_delta(self, cache: OracleCache, i: int, delta: np.ndarray) -> None:
        coords = self.partition.coords([i])
        self.assign(cache, coords, cache.x[coords] + delta)


class FactoredQuadratic(SmoothOracle):
    """``f(x) = 0.5 ||M x - c||^2 + 0.5 sum_j rho_j x_j^2 - <d, x>``.

    The cache keeps ``r = M x - c``. A coordinate update touches only the
    nonzeros of the matching column of ``M``.

    Parameters
    ----------
    M : array or sparse matrix, shape (p, N)
    c : array, shape (p,), optional
    d : array, shape (N,), optional
    rho : float or array, shape (N,), optional
    partition : BlockPartition, optional
        Defaults to scalar blocks.
    """

    def __init__(
        self, M, c=None, d=None, rho=None, partition=None, refresh_every=DEFAULT_REFRESH, dense_limit=DENSE_LIMIT
    ):
        self.M = sp.csc_matrix(M, dtype=np.float64)
        self.M.sort_indices()
        p, n = self.M.shape
        self.partition = partition if partition is not None else BlockPartition.scalar(n)
        if self.partition.n_total != n:
            raise DimensionError(f"matrix has {n} columns, partition has {self.partition.n_total} coordinates")
        self.c = np.zeros(p) if c is None else np.asarray(c, dtype=np.float64)
        self.d = np.zeros(n) if d is None else np.asarray(d, dtype=np.float64)
        self.rho = np.zeros(n) if rho is None else np.broadcast_to(np.asarray(rho, dtype=np.float64), (n,)).copy()
        if self.c.shape != (p,) or self.d.shape != (n,):
            raise DimensionError("offset vectors do not match the matrix shape")
        self._has_rho, self._has_d = bool(np.any(self.rho)), bool(np.any(self.d))
        self.MT = self.M.T.tocsr()
        self._col_len = np.diff(self.M.indptr)
        # Small matrices: a dense row-major copy of M^T makes block gathers
        # a single fancy-index, much cheaper than segment arithmetic.
        self._dense_T = self.MT.toarray() if p * n <= dense_limit else None
        self.column_sq_norms = np.asarray(self.M.multiply(self.M).sum(axis=0)).ravel()
        self.refresh_every = refresh_every

    def value(self, x):
        r = self.M @ x - self.c
        return float(0.5 * r @ r + 0.5 * np.dot(self.rho, x * x) - self.d @ x)

    def full_gradient(self, x):
        return self.MT @ (self.M @ x - self.c) + self.rho * x - self.d

    def init_cache(self, x):
        x = np.array(x, dtype=np.float64)
        return OracleCache(x, self.M @ x - self.c)

    def refresh_cache(self, cache):
        cache.aux = self.M @ cache.x - self.c
        cache.updates_since_refresh = 0

    def gradients(self, cache, coords):
        r = cache.aux
        if len(coords) == self.partition.n_total:
            g = self.MT @ r
        elif self._dense_T is not None:
            g = self._dense_T[coords] @ r
        else:
            pos, seg = self._gather(coords)
            g = np.bincount(seg, self.M.data[pos] * r[self.M.indices[pos]], minlength=len(coords))
        if self._has_rho:
            g += self.rho[coords] * cache.x[coords]
        if self._has_d:
            g -= self.d[coords]
        return g

    def _gather(self, coords):
        """Positions of the selected columns' nonzeros and their column slot."""
        lengths = self._col_len[coords]
        seg = np.repeat(np.arange(len(coords)), lengths)
        starts = self.M.indptr[coords] - np.concatenate(([0], np.cumsum(lengths)[:-1]))
        return np.arange(seg.size) + starts[seg], seg

    def value_from_cache(self, cache):
        r, x = cache.aux, cache.x
        return float(0.5 * r @ r + 0.5 * np.dot(self.rho, x * x) - self.d @ x)

    def _image(self, coords, delta):
        if len(coords) == self.partition.n_total:
            return self.M @ delta
        if self._dense_T is not None:
            return delta @ self._dense_T[coords]
        pos, seg = self._gather(coords)
        return np.bincount(self.M.indices[pos], delta[seg] * self.M.data[pos], minlength=self.M.shape[0])

    def value_change(self, cache, coords, new_values, grad):
        delta = new_values - cache.x[coords]
        image = self._image(coords, delta)
        return float(grad @ delta + 0.5 * image @ image + 0.5 * np.dot(self.rho[coords], delta * delta))

    def assign(self, cache, coords, new_values):
        delta = new_values - cache.x[coords]
        cache.x[coords] = new_values
        if len(coords) == self.partition.n_total:
            cache.aux += self.M @ delta
        elif self._dense_T is not None:
            cache.aux += delta @ self._dense_T[coords]
        else:
            live = delta != 0.0
            if live.any():
                pos, seg = self._gather(coords[live])
                np.add.at(cache.aux, self.M.indices[pos], delta[live][seg] * self.M.data[pos])
        cache.updates_since_refresh += len(coords)
        if cache.updates_since_refresh >= self.refresh_every:
            self.refresh_cache(cache)


class GramQuadratic(SmoothOracle):
    """``f(u) = 0.5 u^T K u + 0.5 sum_i rho_i u_i^2 - <d, u>`` with dense ``K``.

    The cache keeps ``K u``.
    """

    def __init__(self, K, d=None, rho=None, partition=None, refresh_every=DEFAULT_REFRESH):
        self.K = np.array(K.toarray() if sp.issparse(K) else K, dtype=np.float64)
        n = self.K.shape[0]
        if self.K.shape != (n, n):
            raise DimensionError("Gram matrix must be square")
        self.partition = partition if partition is not None else BlockPartition.scalar(n)
        if self.partition.n_total != n:
            raise DimensionError("partition does not match the Gram matrix")
        self.d = np.zeros(n) if d is None else np.asarray(d, dtype=np.float64)
        self.rho = np.zeros(n) if rho is None else np.broadcast_to(np.asarray(rho, dtype=np.float64), (n,)).copy()
        self.refresh_every = refresh_every

    def value(self, x):
        return float(0.5 * x @ (self.K @ x) + 0.5 * np.dot(self.rho, x * x) - self.d @ x)

    def full_gradient(self, x):
        return self.K @ x + self.rho * x - self.d

    def init_cache(self, x):
        x = np.array(x, dtype=np.float64)
        return OracleCache(x, self.K @ x)

    def refresh_cache(self, cache):
        cache.aux = self.K @ cache.x
        cache.updates_since_refresh = 0

    def gradients(self, cache, coords):
        return cache.aux[coords] + self.rho[coords] * cache.x[coords] - self.d[coords]

    def value_from_cache(self, cache):
        x = cache.x
        return float(0.5 * x @ cache.aux + 0.5 * np.dot(self.rho, x * x) - self.d @ x)

    def value_change(self, cache, coords, new_values, grad):
        delta = new_values - cache.x[coords]
        quad = delta @ (self.K[np.ix_(coords, coords)] @ delta)
        return float(grad @ delta + 0.5 * quad + 0.5 * np.dot(self.rho[coords], delta * delta))

    def assign(self, cache, coords, new_values):
        delta = new_values - cache.x[coords]
        cache.x[coords] = new_values
        cache.aux += self.K[:, coords] @ delta
        cache.updates_since_refresh += len(coords)
        if cache.updates_since_refresh >= self.refresh_every:
            self.refresh_cache(cache)


# ---------------------------------------------------------------- proxes


class SeparableProx:
    """Base class for ``g(x) = sum_i h_i(x_i)``.

    Elementwise families override :meth:`prox_coords` and
    :meth:`value_coords`; block-coupled families override
    :meth:`prox_block` and :meth:`value_block` instead.
    """

    strong_convexity = 0.0
    elementwise = True

    def __init__(self, partition: BlockPartition):
        self.partition = partition

    def prox_coords(self, coords, z, steps):
        raise NotImplementedError

    def value_coords(self, coords, x) -> float:
        raise NotImplementedError

    def prox_block(self, i, z, step):
        coords = self.partition.coords([i])
        return self.prox_coords(coords, np.asarray(z, dtype=np.float64), np.full(coords.size, step))

    def value_block(self, i, xi) -> float:
        return self.value_coords(self.partition.coords([i]), np.asarray(xi, dtype=np.float64))

    def value_change(self, coords, old, new) -> float:
        """``g(new) - g(old)`` on ``coords``; override to difference termwise."""
        return self.value_coords(coords, new) - self.value_coords(coords, old)

    def prox_selected(self, blocks, coords, z, steps):
        """Prox of every selected block; ``z`` and ``steps`` are per coordinate."""
        if self.elementwise:
            out = self.prox_coords(coords, z, steps)
        else:
            out = np.empty_like(z)
            pos = 0
            for i in blocks.tolist():
                d = self.partition.dims[i]
                out[pos:pos + d] = self.prox_block(i, z[pos:pos + d], steps[pos])
                pos += d
        if not math.isfinite(out.sum()) and not np.all(np.isfinite(out)):
            bad = int(np.flatnonzero(~np.isfinite(out))[0])
            block = int(np.searchsorted(self.partition.offsets, coords[bad], side="right") - 1)
            raise ProxError(block)
        return out

    def value(self, x) -> float:
        return self.value_coords(np.arange(self.partition.n_total), x)

    def project(self, x) -> np.ndarray:
        """Nearest point of the domain; identity for finite-valued terms."""
        return np.asarray(x, dtype=np.float64)


class ZeroProx(SeparableProx):
    """``h_i = 0``: the prox is the identity."""

    def prox_coords(self, coords, z, steps):
        return np.array(z, dtype=np.float64)

    def value_coords(self, coords, x):
        return 0.0

    def value_change(self, coords, old, new):
        return 0.0


class L1Prox(SeparableProx):
    """``h_i(x_i) = lam * ||x_i||_1``."""

    def __init__(self, partition, lam):
        super().__init__(partition)
        if lam < 0:
            raise ValidationError("l1 weight must be nonnegative")
        self.lam = float(lam)

    def prox_coords(self, coords, z, steps):
        return _soft(z, steps * self.lam)

    def value_coords(self, coords, x):
        return self.lam * float(np.abs(x).sum())

    def value_change(self, coords, old, new):
        # termwise differences avoid cancelling two large sums
        return self.lam * float((np.abs(new) - np.abs(old)).sum())


class IntervalProx(SeparableProx):
    """Indicator of a per-coordinate interval ``[lower_j, upper_j]``."""

    def __init__(self, partition, lower, upper):
        super().__init__(partition)
        n = partition.n_total
        self.lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValidationError("interval lower bound exceeds upper bound")

    def prox_coords(self, coords, z, steps):
        return np.clip(z, self.lower[coords], self.upper[coords])

    def value_coords(self, coords, x):
        x = np.asarray(x)
        ok = (x >= self.lower[coords] - FEASIBILITY_TOL) & (x <= self.upper[coords] + FEASIBILITY_TOL)
        return 0.0 if np.all(ok) else math.inf

    def project(self, x):
        return np.clip(x, self.lower, self.upper)


# ---------------------------------------------------------------- problems


@dataclass
class CompositeProblem:
    """``F(x) = f(x) + sum_i h_i(x_i)`` with everything the solver needs.

    ``operator_norms`` holds per-block values for the full-displacement
    certificate. ``metadata`` carries problem-specific constants such as
    strong convexity moduli or a known optimal value. Dual problems set
    ``primal_value`` to map a cache to the matching primal objective.
    """

    smooth: SmoothOracle
    prox: SeparableProx
    structure: SeparabilityStructure
    name: str = "custom"
    operator_norms: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)
    primal_value: Optional[Callable[[OracleCache], float]] = None
    primal_point: Optional[Callable[[OracleCache], np.ndarray]] = None

    def __post_init__(self):
        if self.smooth.partition != self.prox.partition:
            raise DimensionError("smooth part and prox use different partitions")
        if self.structure.m != self.smooth.partition.m:
            raise DimensionError("structure block count does not match the partition")

    @property
    def partition(self) -> BlockPartition:
        return self.smooth.partition

    @property
    def m(self) -> int:
        return self.partition.m

    def objective(self, x) -> float:
        return self.smooth.value(x) + self.prox.value(x)

    def objective_from_cache(self, cache: OracleCache) -> float:
        return self.smooth.value_from_cache(cache) + self.prox.value(cache.x)


def _row_supports(csr: sp.csr_matrix):
    return [csr.indices[csr.indptr[k]:csr.indptr[k + 1]] for k in range(csr.shape[0]) if csr.indptr[k + 1] > csr.indptr[k]]


def _least_squares_structure(M: sp.csc_matrix, rho=None):
    """Structure of ``0.5 ||M x - c||^2 (+ 0.5 sum rho x^2)`` with scalar blocks.

    Each nonzero row of ``M`` is a component touching the coordinates in
    its support; a positive ``rho_j`` adds a singleton component.
    """
    csr = M.tocsr()
    csr.eliminate_zeros()
    keep = np.flatnonzero(np.diff(csr.indptr) > 0)
    kept = csr[keep]
    sets = _row_supports(kept)
    row_sq = np.asarray(kept.multiply(kept).sum(axis=1)).ravel()
    table = kept.multiply(kept).T.tocsc()
    L = np.asarray(M.multiply(M).sum(axis=0)).ravel()
    if rho is not None and np.any(rho > 0):
        n = M.shape[1]
        idx = np.flatnonzero(rho > 0)
        sets = sets + [np.array([j]) for j in idx]
        row_sq = np.concatenate([row_sq, rho[idx]])
        extra = sp.csc_matrix((rho[idx], (idx, np.arange(idx.size))), shape=(n, idx.size))
        table = sp.hstack([table, extra]).tocsc()
        L = L + rho
    structure = SeparabilityStructure(sets, L, row_sq, table)
    norms = np.asarray(structure.incidence @ row_sq).ravel()
    return structure, norms


def make_lasso(A, b, lam: float, refresh_every: int = DEFAULT_REFRESH) -> CompositeProblem:
    """``0.5 ||A x - b||^2 + lam ||x||_1`` with one block per column of ``A``."""
    A = sp.csc_matrix(A, dtype=np.float64)
    if A.shape[0] == 0 or A.shape[1] == 0 or A.nnz == 0:
        raise ValidationError("design matrix must be nonempty and nonzero")
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    smooth = FactoredQuadratic(A, c=b, refresh_every=refresh_every)
    structure, norms = _least_squares_structure(smooth.M)
    prox = L1Prox(smooth.partition, lam)
    return CompositeProblem(smooth, prox, structure, "lasso", norms, {"lambda": float(lam)})


def make_min_norm_dual(A, b, refresh_every: int = DEFAULT_REFRESH) -> CompositeProblem:
    """Dual of the minimal-norm solution of ``A x = b``.

    Minimizes ``0.5 ||A^T u||^2 - <u, b>`` over one block per row of ``A``.
    The cache holds the primal iterate ``x = A^T u``, available through
    ``primal_point``.
    """
    A = sp.csr_matrix(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.nnz == 0:
        raise ValidationError("matrix must be nonzero")
    zero_rows = np.flatnonzero(np.diff(A.indptr) == 0)
    if np.any(b[zero_rows] != 0):
        raise ValidationError(f"rows {zero_rows.tolist()} are zero but have nonzero right-hand side")
    smooth = FactoredQuadratic(A.T, d=b, refresh_every=refresh_every)
    structure, norms = _least_squares_structure(smooth.M)
    prox = ZeroProx(smooth.partition)
    problem = CompositeProblem(smooth, prox, structure, "min_norm", norms)
    problem.primal_point = lambda cache: cache.aux
    return problem


def _check_gram(K):
    K = np.array(K.toarray() if sp.issparse(K) else K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValidationError("Gram matrix must be square")
    if not np.allclose(K, K.T, rtol=0, atol=1e-10 * max(1.0, np.abs(K).max())):
        raise ValidationError("Gram matrix must be symmetric")
    return K


def _gram_structure(K, rho):
    """Single fully coupled component plus one singleton per positive ``rho``."""
    m = K.shape[0]
    diag = np.diag(K).copy()
    sets = [np.arange(m)]
    table_cols = [diag]
    group = [float(np.linalg.eigvalsh(K)[-1])]
    if np.any(rho > 0):
        for j in np.flatnonzero(rho > 0):
            sets.append(np.array([j]))
            col = np.zeros(m)
            col[j] = rho[j]
            table_cols.append(col)
            group.append(float(rho[j]))
    table = sp.csc_matrix(np.column_stack(table_cols))
    structure = SeparabilityStructure(sets, diag + rho, group, table)
    return structure, np.full(m, group[0]) + rho


def _dual_smooth(K, X, d, rho, refresh_every):
    m = K.shape[0]
    if X is None:
        smooth = GramQuadratic(K, d=d, rho=rho, refresh_every=refresh_every)
        structure, norms = _gram_structure(K, rho)
        kernel_times = lambda cache: cache.aux
        primal_point = None
    else:
        X = sp.csr_matrix(X, dtype=np.float64)
        if X.shape[0] != m:
            raise DimensionError("feature matrix needs one row per example")
        smooth = FactoredQuadratic(X.T, d=d, rho=rho, refresh_every=refresh_every)
        structure, norms = _least_squares_structure(smooth.M, rho)
        kernel_times = lambda cache: X @ cache.aux
        primal_point = lambda cache: cache.aux
    return smooth, structure, norms, kernel_times, primal_point


def make_ridge_dual(K, y, lam: float, X=None, refresh_every: int = DEFAULT_REFRESH) -> CompositeProblem:
    """Dual of ridge regression: ``0.5 u^T (K + lam m I) u - y^T u``.

    The matching primal is
    ``P(w) = (1/(lam m)) sum_i 0.5 (y_i - <w, x_i>)^2 + 0.5 ||w||^2`` with
    ``w = X^T u``; it is evaluated from ``K u`` so ``X`` is optional. When
    ``X`` is given the cache holds ``w`` itself.
    """
    K = _check_gram(K)
    y = np.asarray(y, dtype=np.float64)
    m = K.shape[0]
    if y.shape != (m,):
        raise DimensionError("need one target per example")
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    lm = lam * m
    rho = np.full(m, lm)
    smooth, structure, norms, kernel_times, primal_point = _dual_smooth(K, X, y, rho, refresh_every)
    u_bar = np.linalg.solve(K + lm * np.eye(m), y)
    d_star = float(0.5 * u_bar @ ((K + lm * np.eye(m)) @ u_bar) - y @ u_bar)

    def primal_value(cache):
        Ku = kernel_times(cache)
        return float(0.5 * np.sum((y - Ku) ** 2) / lm + 0.5 * cache.x @ Ku)

    meta = {
        "lambda": float(lam),
        "strong_convexity": lm,
        "kernel_norm": float(np.linalg.eigvalsh(K)[-1]),
        "F_star": d_star,
        "solution": u_bar,
    }
    problem = CompositeProblem(smooth, ZeroProx(smooth.partition), structure, "ridge", norms, meta)
    problem.primal_value = primal_value
    problem.primal_point = primal_point
    return problem


def make_svm_dual(K, y, lam: float, X=None, refresh_every: int = DEFAULT_REFRESH) -> CompositeProblem:
    """Dual of the hinge-loss SVM: ``0.5 u^T K u - y^T u`` with box constraints.

    Feasible points satisfy ``y_i u_i in [0, 1/(lam m)]``. The matching
    primal is ``P(w) = (1/(lam m)) sum_i (1 - y_i <w, x_i>)_+ + 0.5 ||w||^2``.
    """
    K = _check_gram(K)
    y = np.asarray(y, dtype=np.float64)
    m = K.shape[0]
    if y.shape != (m,) or not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValidationError("labels must be -1 or +1, one per example")
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    lm = lam * m
    smooth, structure, norms, kernel_times, primal_point = _dual_smooth(K, X, y, np.zeros(m), refresh_every)
    prox = IntervalProx(smooth.partition, np.where(y > 0, 0.0, -1.0 / lm), np.where(y > 0, 1.0 / lm, 0.0))

    def primal_value(cache):
        Ku = kernel_times(cache)
        return float(np.maximum(0.0, 1.0 - y * Ku).sum() / lm + 0.5 * cache.x @ Ku)

    meta = {
        "lambda": float(lam),
        "kernel_norm": float(np.linalg.eigvalsh(K)[-1]),
        "gap_lipschitz": math.sqrt(m) / lm,
    }
    problem = CompositeProblem(smooth, prox, structure, "svm", norms, meta)
    problem.primal_value = primal_value
    problem.primal_point = primal_point
    return problem


# ---------------------------------------------------------------- file io


def read_matrix(path):
    """Matrix Market (``.mtx``) as CSC, or a dense comma-separated file."""
    path = str(path)
    if path.endswith(".mtx") or path.endswith(".mm"):
        return sp.csc_matrix(scipy.io.mmread(path), dtype=np.float64)
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))


def read_vector(path) -> np.ndarray:
    """Single-column CSV."""
    return np.atleast_1d(np.loadtxt(str(path), delimiter=",", dtype=np.float64))


def write_matrix_market(path, A) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), precision=17)


def write_vector(path, v) -> None:
    np.savetxt(str(path), np.asarray(v, dtype=np.float64), fmt="%.17g")


def project_start(problem: CompositeProblem, x0) -> np.ndarray:
    """Move a starting point into the domain of the prox term, warning if it moved."""
    x0 = np.asarray(x0, dtype=np.float64)
    projected = problem.prox.project(x0)
    if not np.array_equal(projected, x0):
        warnings.warn("starting point outside the domain of g; projected onto it", RuntimeWarning, stacklevel=3)
    return projected
