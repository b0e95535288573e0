"""Random block selectors, their marginals, and the beta constants.

A :class:`SamplingScheme` describes the law of the random mask that picks
which blocks are updated in an iteration. :class:`Sampler` draws masks from
a scheme with a seeded numpy generator. The beta constants turn block
Lipschitz constants into step-size safe smoothness parameters; they are
available in closed form for uniform schemes and by exhaustive enumeration
of the support for everything small enough.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .core import ValidationError

ATOM_SUM_TOL = 1e-12
NULL_ATOM_PROB = 1e-15
ENUMERATION_LIMIT = 10**6
DENSE_ENUMERATION_CELLS = 2**20


class SchemeKind(str, Enum):
    SERIAL_NONUNIFORM = "serial_nonuniform"
    TAU_NICE = "tau_nice"
    FULLY_PARALLEL = "fully_parallel"
    EXPLICIT_ATOMS = "explicit_atoms"


@dataclass(frozen=True)
class SamplingScheme:
    """Law of the block selector.

    Build instances with the ``serial``, ``tau_nice``, ``fully_parallel`` and
    ``explicit_atoms`` constructors rather than directly.
    """

    kind: SchemeKind
    m: int
    tau: Optional[int] = None
    probs: Optional[tuple] = None
    atoms: Optional[tuple] = None
    marginals: np.ndarray = field(init=False, compare=False, repr=False)
    tau_max: int = field(init=False)

    def __post_init__(self):
        m = self.m
        if m < 1:
            raise ValidationError("number of blocks must be positive")
        if self.kind is SchemeKind.SERIAL_NONUNIFORM:
            p = np.asarray(self.probs, dtype=np.float64)
            if p.shape != (m,):
                raise ValidationError(f"serial scheme needs {m} probabilities")
            if np.any(p <= 0):
                raise ValidationError("every block must have positive probability")
            if abs(p.sum() - 1.0) > ATOM_SUM_TOL:
                raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")
            marg, tau_max = p.copy(), 1
        elif self.kind is SchemeKind.TAU_NICE:
            if not 1 <= self.tau <= m:
                raise ValidationError(f"tau must lie in [1, {m}], got {self.tau}")
            marg, tau_max = np.full(m, self.tau / m), self.tau
        elif self.kind is SchemeKind.FULLY_PARALLEL:
            marg, tau_max = np.ones(m), m
        else:
            marg = np.zeros(m)
            total, tau_max = 0.0, 0
            for support, prob in self.atoms:
                if len(support) == 0:
                    raise ValidationError("atoms must have nonempty support")
                if prob <= 0:
                    raise ValidationError("atom probabilities must be positive")
                if min(support) < 0 or max(support) >= m or len(set(support)) != len(support):
                    raise ValidationError(f"invalid atom support {support}")
                marg[list(support)] += prob
                total += prob
                tau_max = max(tau_max, len(support))
            if abs(total - 1.0) > ATOM_SUM_TOL:
                raise ValidationError(f"atom probabilities sum to {total!r}, not 1")
            if np.any(marg <= 0):
                missing = np.flatnonzero(marg <= 0).tolist()
                raise ValidationError(f"blocks {missing} are never selected")
        marg.setflags(write=False)
        object.__setattr__(self, "marginals", marg)
        object.__setattr__(self, "tau_max", int(tau_max))

    @classmethod
    def serial(cls, m: int, probs: Optional[Sequence[float]] = None) -> "SamplingScheme":
        probs = np.full(m, 1.0 / m) if probs is None else np.asarray(probs, dtype=np.float64)
        return cls(SchemeKind.SERIAL_NONUNIFORM, m, probs=tuple(float(q) for q in probs))

    @classmethod
    def tau_nice(cls, m: int, tau: int) -> "SamplingScheme":
        return cls(SchemeKind.TAU_NICE, m, tau=int(tau))

    @classmethod
    def fully_parallel(cls, m: int) -> "SamplingScheme":
        return cls(SchemeKind.FULLY_PARALLEL, m)

    @classmethod
    def explicit_atoms(cls, m: int, atoms) -> "SamplingScheme":
        norm = tuple((tuple(sorted(int(j) for j in s)), float(q)) for s, q in atoms)
        return cls(SchemeKind.EXPLICIT_ATOMS, m, atoms=norm)

    @property
    def p_min(self) -> float:
        return float(self.marginals.min())

    @property
    def expected_size(self) -> float:
        """Mean number of selected blocks, exact for the uniform kinds."""
        if self.kind is SchemeKind.TAU_NICE:
            return float(self.tau)
        if self.kind is SchemeKind.FULLY_PARALLEL:
            return float(self.m)
        if self.kind is SchemeKind.SERIAL_NONUNIFORM:
            return 1.0
        return float(sum(len(s) * q for s, q in self.atoms))

    def to_config(self) -> dict:
        if self.kind is SchemeKind.TAU_NICE:
            return {"kind": "tau_nice", "tau": self.tau}
        if self.kind is SchemeKind.FULLY_PARALLEL:
            return {"kind": "fully_parallel"}
        if self.kind is SchemeKind.SERIAL_NONUNIFORM:
            return {"kind": "serial_nonuniform", "probs": list(self.probs)}
        return {"kind": "explicit_atoms", "atoms": [{"support": list(s), "prob": q} for s, q in self.atoms]}


def scheme_from_config(cfg: dict, m: int) -> SamplingScheme:
    """Build a scheme from its JSON form, e.g. ``{"kind": "tau_nice", "tau": 50}``."""
    kind = cfg.get("kind")
    if kind == "tau_nice":
        return SamplingScheme.tau_nice(m, int(cfg["tau"]))
    if kind == "serial":
        return SamplingScheme.serial(m)
    if kind == "serial_nonuniform":
        return SamplingScheme.serial(m, cfg["probs"])
    if kind == "fully_parallel":
        return SamplingScheme.fully_parallel(m)
    if kind == "explicit_atoms":
        return SamplingScheme.explicit_atoms(m, [(a["support"], a["prob"]) for a in cfg["atoms"]])
    raise ValidationError(f"unknown sampling kind {kind!r}")


def marginals(scheme: SamplingScheme) -> np.ndarray:
    """Exact selection probabilities of every block."""
    return scheme.marginals.copy()


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator seeded through a SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def spawn_rngs(seed: int, count: int) -> list:
    """Independent child generators split off one master seed."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(count)]


class Sampler:
    """Draws selected block indices from a scheme.

    Keeps a scratch permutation between draws so a tau-nice draw (partial
    Fisher-Yates shuffle) costs O(tau) after the first one.
    """

    def __init__(self, scheme: SamplingScheme, rng: np.random.Generator):
        self.scheme = scheme
        self.rng = rng
        m = scheme.m
        if scheme.kind is SchemeKind.TAU_NICE:
            self._perm = list(range(m))
            self._spans = np.arange(m, m - scheme.tau, -1, dtype=np.uint64)
        elif scheme.kind is SchemeKind.SERIAL_NONUNIFORM:
            self._cdf = np.cumsum(scheme.probs)
        elif scheme.kind is SchemeKind.EXPLICIT_ATOMS:
            self._cdf = np.cumsum([q for _, q in scheme.atoms])
            self._supports = [np.array(s, dtype=np.int64) for s, _ in scheme.atoms]
        self._all = np.arange(m)

    def _inverse_cdf(self) -> int:
        k = int(np.searchsorted(self._cdf, self.rng.random(), side="right"))
        return min(k, self._cdf.size - 1)

    def draw_indices(self) -> np.ndarray:
        """Sorted indices of the selected blocks; never empty."""
        kind = self.scheme.kind
        if kind is SchemeKind.TAU_NICE:
            tau, m = self.scheme.tau, self.scheme.m
            if tau == m:
                return self._all
            perm = self._perm
            # 64-bit draws reduced modulo the span: bias below m / 2**64.
            offsets = self.rng.bit_generator.random_raw(tau) % self._spans
            for k, j in enumerate(offsets.tolist()):
                j += k
                perm[k], perm[j] = perm[j], perm[k]
            return np.array(sorted(perm[:tau]), dtype=np.int64)
        if kind is SchemeKind.FULLY_PARALLEL:
            return self._all
        if kind is SchemeKind.SERIAL_NONUNIFORM:
            return np.array([self._inverse_cdf()], dtype=np.int64)
        return self._supports[self._inverse_cdf()]

    def draw(self) -> np.ndarray:
        mask = np.zeros(self.scheme.m, dtype=bool)
        mask[self.draw_indices()] = True
        return mask


def draw(scheme: SamplingScheme, rng: np.random.Generator) -> np.ndarray:
    """One boolean mask drawn from ``scheme``."""
    return Sampler(scheme, rng).draw()


def enumerate_support(scheme: SamplingScheme, limit: int = ENUMERATION_LIMIT):
    """All atoms of the scheme as a sparse 0/1 matrix and a probability vector.

    Returns
    -------
    atoms : scipy.sparse.csr_matrix, shape (n_atoms, m)
    probs : ndarray, shape (n_atoms,)
    """
    m = scheme.m
    if scheme.kind is SchemeKind.TAU_NICE:
        count = math.comb(m, scheme.tau)
        if count > limit:
            raise ValidationError(
                f"tau-nice support has {count} atoms (limit {limit}); use the closed-form beta constants"
            )
        cols = np.fromiter(
            itertools.chain.from_iterable(itertools.combinations(range(m), scheme.tau)),
            dtype=np.int64,
            count=count * scheme.tau,
        )
        indptr = np.arange(0, count * scheme.tau + 1, scheme.tau)
        probs = np.full(count, 1.0 / count)
    elif scheme.kind is SchemeKind.FULLY_PARALLEL:
        cols, indptr, probs = np.arange(m), np.array([0, m]), np.ones(1)
    elif scheme.kind is SchemeKind.SERIAL_NONUNIFORM:
        cols, indptr, probs = np.arange(m), np.arange(m + 1), np.asarray(scheme.probs)
    else:
        if len(scheme.atoms) > limit:
            raise ValidationError(f"scheme has {len(scheme.atoms)} atoms (limit {limit})")
        cols = np.array([j for s, _ in scheme.atoms for j in s], dtype=np.int64)
        indptr = np.concatenate(([0], np.cumsum([len(s) for s, _ in scheme.atoms])))
        probs = np.array([q for _, q in scheme.atoms])
    atoms = sp.csr_matrix((np.ones(cols.size), cols, indptr), shape=(probs.size, m))
    return atoms, probs


class BetaMethod(str, Enum):
    CLOSED_FORM_TAU_NICE = "ClosedFormTauNice"
    CLOSED_FORM_DOUBLY_UNIFORM = "ClosedFormDoublyUniform"
    ENUMERATION = "Enumeration"


@dataclass(frozen=True)
class BetaConstants:
    """Per-block beta_1 (operative value), the scalar beta_2, and their origin.

    For enumerated constants ``beta1_conditional`` and ``beta1_refined`` keep
    both per-block candidates; ``beta1`` is their elementwise minimum.
    """

    beta1: np.ndarray
    beta2: float
    method: BetaMethod
    beta1_conditional: Optional[np.ndarray] = None
    beta1_refined: Optional[np.ndarray] = None

    def check(self, eta: int, tau_max: int, tol: float = 1e-12) -> None:
        """Raise unless ``1 <= beta1_i <= beta2 <= min(eta, tau_max)``."""
        b1 = np.asarray(self.beta1)
        if np.any(b1 < 1 - tol) or np.any(b1 > self.beta2 + tol) or self.beta2 > min(eta, tau_max) + tol:
            raise ValidationError(
                f"beta ordering violated: beta1 in [{b1.min()}, {b1.max()}], beta2={self.beta2}, "
                f"eta={eta}, tau_max={tau_max}"
            )


def beta_tau_nice(m: int, eta: int, tau: int) -> float:
    """Closed-form beta_1 for tau-nice sampling: ``1 + (eta-1)(tau-1)/(m-1)``."""
    if m < 2:
        raise ValidationError("closed form needs m >= 2; a single block has beta_1 = 1")
    if not (1 <= eta <= m and 1 <= tau <= m):
        raise ValidationError(f"need 1 <= eta, tau <= m; got eta={eta}, tau={tau}, m={m}")
    return 1.0 + (eta - 1) * (tau - 1) / (m - 1)


def beta_doubly_uniform(m: int, eta: int, first_moment: float, second_moment: float) -> float:
    """Closed-form beta_1 for samplings whose law depends only on subset size.

    ``first_moment`` and ``second_moment`` are E[|S|] and E[|S|^2].
    """
    if m < 2:
        raise ValidationError("closed form needs m >= 2")
    if first_moment <= 0:
        raise ValidationError("first moment must be positive")
    if second_moment < first_moment:
        raise ValidationError("second moment must be at least the first moment")
    return 1.0 + (eta - 1) / (m - 1) * (second_moment / first_moment - 1.0)


def tau_nice_betas(m: int, eta: int, tau: int) -> BetaConstants:
    """Closed-form constants for tau-nice sampling, with beta_2 = min(eta, tau)."""
    b1 = 1.0 if m == 1 else beta_tau_nice(m, eta, tau)
    return BetaConstants(np.full(m, b1), float(min(eta, tau)), BetaMethod.CLOSED_FORM_TAU_NICE)


def _betas_dense(atoms, probs, inc, pm, eta, live):
    loads = np.rint(atoms @ inc)
    peak = loads.max(axis=1)
    conditional = atoms.T @ (probs * peak) / pm
    weighted = atoms * probs[:, None]
    refined = np.zeros(atoms.shape[1])
    # t = 0 contributes nothing, so only positive loads are visited
    for t in range(1, eta + 1):
        joint = (weighted.T @ (loads == t)) * inc
        refined += t * joint.max(axis=1) / pm
    return conditional, refined, float(peak[live].max())


def _betas_sparse(atoms, probs, inc, pm, eta, live):
    loads = (atoms @ inc).tocsc()
    loads.data = np.rint(loads.data)
    peak = np.asarray(loads.max(axis=1).todense()).ravel()
    conditional = np.asarray(atoms.T @ (probs * peak)).ravel() / pm
    weighted = sp.csr_matrix(atoms.multiply(probs[:, None]))
    refined = np.zeros(atoms.shape[1])
    for t in range(1, eta + 1):
        hit = loads.copy()
        hit.data = (hit.data == t).astype(np.float64)
        hit.eliminate_zeros()
        if hit.nnz == 0:
            continue
        joint = sp.csr_matrix((weighted.T @ hit).multiply(inc))
        refined += t * np.asarray(joint.max(axis=1).todense()).ravel() / pm
    return conditional, refined, float(peak[live].max())


def beta_by_enumeration(scheme: SamplingScheme, structure, limit: int = ENUMERATION_LIMIT) -> BetaConstants:
    """Exact beta constants by summing over every atom of the scheme.

    ``structure`` must expose ``incidence`` (sparse m x p block/group
    membership) and ``index_sets``.

    Two per-block beta_1 values are computed: the conditional expectation
    of the largest group load given that the block is selected, and the
    refined per-group variant ``sum_t t * max_k P(load_k = t | block
    selected)`` over the groups containing the block. The operative value is
    their minimum. Blocks in no group keep the conditional value, floored
    at 1. beta_2 is the largest group load over atoms of non-negligible
    probability.
    """
    atoms, probs = enumerate_support(scheme, limit)
    m = scheme.m
    inc = sp.csc_matrix(structure.incidence, dtype=np.float64)
    eta = max(len(s) for s in structure.index_sets)
    pm = scheme.marginals
    covered = np.asarray(inc.sum(axis=1)).ravel() > 0
    live = probs >= NULL_ATOM_PROB
    if atoms.shape[0] * max(m, inc.shape[1]) <= DENSE_ENUMERATION_CELLS:
        conditional, refined, beta2 = _betas_dense(atoms.toarray(), probs, inc.toarray(), pm, eta, live)
    else:
        conditional, refined, beta2 = _betas_sparse(atoms, probs, inc, pm, eta, live)
    refined[~covered] = np.inf
    operative = np.minimum(conditional, refined)
    operative[~covered] = np.maximum(conditional[~covered], 1.0)
    return BetaConstants(operative, beta2, BetaMethod.ENUMERATION, conditional, refined)
