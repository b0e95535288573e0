"""Partial-separability structure and smoothness certificates.

A :class:`SeparabilityStructure` lists which blocks each component of the
smooth term touches, together with block Lipschitz constants. From it and a
sampling scheme this module builds :class:`SmoothnessCertificate` objects,
the per-block parameters ``nu_i`` from which step sizes ``delta / nu_i`` are
formed. Three strengths are distinguished:

* ``S1``: the separable overapproximation holds in expectation over the mask.
* ``S2``: it holds for every mask in the support.
* ``S3``: it holds for the full (unmasked) displacement.

Each stronger condition implies the weaker ones. The ``verify_eso_*``
functions check a certificate by brute force over an enumerable support.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .core import ValidationError
from .sampling import (
    BetaConstants,
    SamplingScheme,
    beta_by_enumeration,
    enumerate_support,
    SchemeKind,
)

DEFAULT_GAMMA_MAX = 1e6
ESO_TOLERANCE = -1e-10


class Condition(str, Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"

    @property
    def strength(self) -> int:
        return int(self.value[1])


@dataclass(frozen=True)
class SeparabilityStructure:
    """Which blocks each smooth component couples, plus Lipschitz data.

    Parameters
    ----------
    index_sets : sequence of sequences of int
        One block-index set per component.
    block_lipschitz : array, shape (m,)
        Block Lipschitz constants of the partial gradients.
    group_lipschitz : array, shape (p,), optional
        Lipschitz constant of each component's gradient.
    per_group_block_lipschitz : sparse matrix, shape (m, p), optional
        Entry (i, k) bounds the contribution of component k to block i.
    """

    index_sets: tuple
    block_lipschitz: np.ndarray
    group_lipschitz: Optional[np.ndarray] = None
    per_group_block_lipschitz: Optional[sp.csc_matrix] = None
    m: int = field(init=False)
    eta: int = field(init=False)
    incidence: sp.csc_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        L = np.array(self.block_lipschitz, dtype=np.float64)
        m = L.size
        sets = tuple(np.unique(np.asarray(s, dtype=np.int64)) for s in self.index_sets)
        if not sets or all(s.size == 0 for s in sets):
            raise ValidationError("at least one component must touch some block")
        for s in sets:
            if s.size and (s[0] < 0 or s[-1] >= m):
                raise ValidationError(f"index set {s.tolist()} out of range for {m} blocks")
        if np.any(L < 0) or not np.all(np.isfinite(L)):
            raise ValidationError("block Lipschitz constants must be finite and nonnegative")
        rows = np.concatenate(sets)
        cols = np.repeat(np.arange(len(sets)), [s.size for s in sets])
        inc = sp.csc_matrix((np.ones(rows.size), (rows, cols)), shape=(m, len(sets)))
        covered = np.asarray(inc.sum(axis=1)).ravel() > 0
        if np.any(L[covered] <= 0):
            raise ValidationError("every block that appears in some index set needs a positive Lipschitz constant")
        L.setflags(write=False)
        object.__setattr__(self, "index_sets", sets)
        object.__setattr__(self, "block_lipschitz", L)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "eta", int(max(s.size for s in sets)))
        object.__setattr__(self, "incidence", inc)
        if self.group_lipschitz is not None:
            g = np.array(self.group_lipschitz, dtype=np.float64)
            if g.shape != (len(sets),):
                raise ValidationError("need one group Lipschitz constant per index set")
            object.__setattr__(self, "group_lipschitz", g)
        if self.per_group_block_lipschitz is not None:
            t = sp.csc_matrix(self.per_group_block_lipschitz, dtype=np.float64)
            if t.shape != (m, len(sets)):
                raise ValidationError(f"per-group table must have shape ({m}, {len(sets)})")
            object.__setattr__(self, "per_group_block_lipschitz", t)

    @property
    def p(self) -> int:
        return len(self.index_sets)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.index_sets])

    @property
    def covered(self) -> np.ndarray:
        return np.asarray(self.incidence.sum(axis=1)).ravel() > 0

    def scaled(self, c: float) -> "SeparabilityStructure":
        """Same structure with every Lipschitz constant multiplied by ``c``."""
        return SeparabilityStructure(
            self.index_sets,
            self.block_lipschitz * c,
            None if self.group_lipschitz is None else self.group_lipschitz * c,
            None if self.per_group_block_lipschitz is None else self.per_group_block_lipschitz * c,
        )

    def to_json(self) -> dict:
        out = {
            "index_sets": [s.tolist() for s in self.index_sets],
            "block_lipschitz": self.block_lipschitz.tolist(),
        }
        if self.group_lipschitz is not None:
            out["group_lipschitz"] = self.group_lipschitz.tolist()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "SeparabilityStructure":
        if "index_sets" not in data or "block_lipschitz" not in data:
            raise ValidationError("structure JSON needs 'index_sets' and 'block_lipschitz'")
        return cls(data["index_sets"], data["block_lipschitz"], data.get("group_lipschitz"))

    def digest(self) -> str:
        return hashlib.sha1(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class SmoothnessCertificate:
    """Per-block smoothness parameters and the condition they certify.

    ``nu_i`` may be zero only for blocks that no component touches; the
    step size of such blocks is capped by ``gamma_max``.
    """

    nu: np.ndarray
    condition: Condition
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nu = np.array(self.nu, dtype=np.float64)
        if np.any(nu < 0) or not np.all(np.isfinite(nu)):
            raise ValidationError("smoothness parameters must be finite and nonnegative")
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "condition", Condition(self.condition))

    def certifies(self, condition) -> bool:
        return self.condition.strength >= Condition(condition).strength

    def stepsizes(self, delta: float, gamma_max: float = DEFAULT_GAMMA_MAX) -> np.ndarray:
        """``delta / nu_i``, capped at ``gamma_max`` (also where ``nu_i = 0``)."""
        if not 0 < delta < 2:
            raise ValidationError(f"delta must lie in (0, 2), got {delta}")
        with np.errstate(divide="ignore"):
            gamma = np.where(self.nu > 0, delta / np.where(self.nu > 0, self.nu, 1.0), np.inf)
        return np.minimum(gamma, gamma_max)


def nu_s1(structure: SeparabilityStructure, betas: BetaConstants) -> SmoothnessCertificate:
    """``nu_i = beta1_i * L_i``."""
    b1 = np.asarray(betas.beta1, dtype=np.float64)
    if b1.shape != (structure.m,):
        raise ValidationError("beta1 must have one entry per block")
    return SmoothnessCertificate(
        b1 * structure.block_lipschitz,
        Condition.S1,
        {"formula": "beta1*L", "beta_method": betas.method.value, "structure": structure.digest()},
    )


def nu_s1_refined(structure: SeparabilityStructure, m: int, tau: int) -> SmoothnessCertificate:
    """Per-group weighted sum for tau-nice sampling.

    ``nu_i = sum_{k : i in I_k} (1 + (tau-1)(|I_k|-1)/(m-1)) L^(k)_i``.
    """
    table = structure.per_group_block_lipschitz
    if table is None:
        raise ValidationError("the refined formula needs per-group block Lipschitz constants")
    if m == 1:
        weights = np.ones(structure.p)
    else:
        weights = 1.0 + (tau - 1) * (structure.group_sizes - 1) / (m - 1)
    nu = np.asarray(table @ weights).ravel()
    return SmoothnessCertificate(
        nu, Condition.S1, {"formula": "per-group tau-nice", "tau": tau, "structure": structure.digest()}
    )


def nu_s2(
    structure: SeparabilityStructure, scheme: SamplingScheme, enumerate_limit: int = 10**6
) -> SmoothnessCertificate:
    """Almost-sure parameters: the elementwise minimum of every applicable formula.

    Candidates are ``beta2 * L_i`` with beta2 enumerated when the support is
    small enough, ``min(eta, tau_max) * L_i`` otherwise, and the per-group
    sum ``sum_{k : i in I_k} min(|I_k|, tau_max) L^(k)_i`` when the table
    is available.
    """
    L = structure.block_lipschitz
    fallback = float(min(structure.eta, scheme.tau_max))
    if scheme.kind is SchemeKind.TAU_NICE:
        beta2, source = float(min(structure.eta, scheme.tau)), "closed form"
    else:
        try:
            beta2, source = beta_by_enumeration(scheme, structure, enumerate_limit).beta2, "enumeration"
        except ValidationError:
            beta2, source = fallback, "min(eta, tau_max)"
    nu = beta2 * L
    used = [source]
    table = structure.per_group_block_lipschitz
    if table is not None:
        per_group = np.asarray(table @ np.minimum(structure.group_sizes, scheme.tau_max)).ravel()
        nu = np.minimum(nu, per_group)
        used.append("per-group")
    return SmoothnessCertificate(
        nu, Condition.S2, {"formula": "min(" + ", ".join(used) + ")", "beta2": beta2, "structure": structure.digest()}
    )


def nu_s3(
    structure: SeparabilityStructure, operator_column_norms: Optional[Sequence[float]] = None
) -> SmoothnessCertificate:
    """Full-displacement parameters from per-block operator norms.

    Without explicit norms, the embedding case is used: ``nu_i`` is the sum
    of the group Lipschitz constants over the groups containing ``i``.
    """
    if operator_column_norms is None:
        if structure.group_lipschitz is None:
            raise ValidationError("need per-block operator norms or group Lipschitz constants")
        nu = np.asarray(structure.incidence @ structure.group_lipschitz).ravel()
        formula = "sum of group constants"
    else:
        nu = np.asarray(operator_column_norms, dtype=np.float64)
        if nu.shape != (structure.m,):
            raise ValidationError("need one operator norm per block")
        formula = "operator column norms"
    return SmoothnessCertificate(nu, Condition.S3, {"formula": formula, "structure": structure.digest()})


@dataclass(frozen=True)
class LipschitzBounds:
    L_identity: float
    L_gamma_inv: float
    L_lambda: float


def global_lipschitz_bounds(structure: SeparabilityStructure, gamma: Sequence[float]) -> LipschitzBounds:
    """Lipschitz constants of the full gradient in three block metrics.

    The plain metric gives the largest per-group sum of ``L_i``; the
    inverse-step metric weighs each term by ``gamma_i``; in the metric
    weighted by the ``L_i`` the constant is ``eta``.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    L = structure.block_lipschitz
    return LipschitzBounds(
        L_identity=float(max(L[s].sum() for s in structure.index_sets)),
        L_gamma_inv=float(max((gamma[s] * L[s]).sum() for s in structure.index_sets)),
        L_lambda=float(structure.eta),
    )


@dataclass
class EsoReport:
    min_slack: float
    slacks: np.ndarray

    @property
    def valid(self) -> bool:
        return self.min_slack >= ESO_TOLERANCE


def _smooth_and_partition(problem):
    smooth = getattr(problem, "smooth", problem)
    return smooth, smooth.partition


def _random_probe(rng, n, radius):
    z = rng.standard_normal(n)
    return z * (radius * rng.random() / np.linalg.norm(z))


def _eso_slacks(problem, scheme, certificate, trials, rng, radius, almost_sure):
    smooth, part = _smooth_and_partition(problem)
    atoms, probs = enumerate_support(scheme)
    masks = atoms.toarray().astype(bool)
    coord_masks = masks if part.is_scalar else np.repeat(masks, part.dims, axis=1)
    nu = certificate.nu
    pm = scheme.marginals
    slacks = np.empty((trials, probs.size if almost_sure else 1))
    for t in range(trials):
        x = _random_probe(rng, part.n_total, radius)
        v = _random_probe(rng, part.n_total, radius)
        fx = smooth.value(x)
        grad = smooth.full_gradient(x)
        gv = grad * v
        block_lin = np.add.reduceat(gv, np.asarray(part.offsets)) if not part.is_scalar else gv
        block_sq = part.block_sq_norms(v)
        if almost_sure:
            for a in range(probs.size):
                sel = coord_masks[a]
                lhs = smooth.value(np.where(sel, x + v, x))
                rhs = fx + block_lin[masks[a]].sum() + 0.5 * (nu * block_sq)[masks[a]].sum()
                slacks[t, a] = rhs - lhs
        else:
            lhs = sum(q * smooth.value(np.where(sel, x + v, x)) for q, sel in zip(probs, coord_masks))
            rhs = fx + np.dot(pm, block_lin) + 0.5 * np.dot(pm * nu, block_sq)
            slacks[t, 0] = rhs - lhs
    return slacks


def verify_eso_s1(problem, scheme, certificate, trials: int, rng, radius: float = 10.0) -> EsoReport:
    """Check the in-expectation overapproximation on random probes.

    Each probe draws ``x`` and ``v`` with norms at most ``radius`` and
    computes the expectation over the mask exactly from the enumerated
    support. ``min_slack`` is the smallest right-minus-left difference.
    """
    s = _eso_slacks(problem, scheme, certificate, trials, rng, radius, almost_sure=False)
    return EsoReport(float(s.min()), s)


def verify_eso_s2(problem, scheme, certificate, trials: int, rng, radius: float = 10.0) -> EsoReport:
    """Like :func:`verify_eso_s1` but checks the inequality for every atom."""
    s = _eso_slacks(problem, scheme, certificate, trials, rng, radius, almost_sure=True)
    return EsoReport(float(s.min()), s)
