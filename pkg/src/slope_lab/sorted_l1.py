"""Sorted-L1 norm, its dual norm, and the SLOPE proximal operator.

The prox is computed by the classic reduction: sort |u| in decreasing
order, subtract the scaled weight ladder, project onto the nonincreasing
cone with pool-adjacent-violators, clip at zero, and undo the sort.  The
PAVA blocks are exactly the tie groups of the solution, so the group
structure comes out for free and never relies on floating-point equality
tests after the fact.

Everything in this module is a pure function of its inputs and safe to
call from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import pava_blocks, pava_expand, prox_eta

__all__ = [
    "WeightVector",
    "ProxResult",
    "as_weights",
    "sorted_l1_norm",
    "dual_sorted_l1_norm",
    "isotonic_regression_nonincreasing",
    "prox_sorted_l1",
    "prox_sorted_l1_value",
    "project_dual_ball",
    "prox_gamma_derivative",
]


@dataclass(frozen=True)
class WeightVector:
    """Nonincreasing, nonnegative weight sequence for the sorted-L1 norm.

    Construction rejects any negative entry or increasing adjacent pair.
    Scaling the weights by t > 0 composes with gamma -> gamma / t leaving
    the penalty gamma * ||.||_w unchanged.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a nonempty 1-D vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if w[-1] < 0.0:
            raise ValueError("weights must be nonnegative")
        if np.any(np.diff(w) > 0.0):
            raise ValueError("weights must be nonincreasing")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def p(self) -> int:
        return self.weights.size

    def normalized(self) -> "WeightVector":
        """Rescale so the largest weight equals one."""
        top = self.weights[0]
        if top <= 0.0:
            raise ValueError("cannot normalize an all-zero weight vector")
        return WeightVector(self.weights / top)

    def __len__(self) -> int:
        return self.weights.size


def as_weights(lam) -> WeightVector:
    """Coerce an array-like or WeightVector into a validated WeightVector."""
    if isinstance(lam, WeightVector):
        return lam
    return WeightVector(np.asarray(lam, dtype=np.float64))


@dataclass(frozen=True)
class ProxResult:
    """Prox output together with its tie-group structure.

    `groups` partitions range(p) (original coordinates) by equal |eta|
    value, ordered by decreasing magnitude; every zero coordinate lands in
    the single trailing zero group.  `active_groups` is the sub-list of
    groups with nonzero value.  `permutation` is the stable decreasing
    sort order of |u| used internally.
    """

    eta: np.ndarray
    groups: list = field(default_factory=list)
    active_groups: list = field(default_factory=list)
    permutation: np.ndarray = None


def _check_pair(v: np.ndarray, lam: WeightVector) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-D vector")
    if v.size != lam.p:
        raise ValueError(f"dimension mismatch: vector has {v.size}, weights have {lam.p}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def sorted_l1_norm(v, lam) -> float:
    """Weighted sum of the decreasingly sorted absolute values of `v`."""
    lam = as_weights(lam)
    v = _check_pair(v, lam)
    mags = np.sort(np.abs(v))[::-1]
    return float(mags @ lam.weights)


def dual_sorted_l1_norm(v, lam) -> float:
    """Dual norm: max over prefixes j of cum|v|_(j) / cum(weights)_(j).

    A prefix with zero weight sum acts as the constraint "prefix sum of
    |v| must be zero"; if violated the dual norm is +inf.
    """
    lam = as_weights(lam)
    v = _check_pair(v, lam)
    cw = np.cumsum(lam.weights)
    if cw[-1] <= 0.0:
        raise ValueError("weights must not be identically zero")
    cv = np.cumsum(np.sort(np.abs(v))[::-1])
    out = 0.0
    for j in range(v.size):
        if cw[j] > 0.0:
            out = max(out, cv[j] / cw[j])
        elif cv[j] > 0.0:
            return float("inf")
    return float(out)


def isotonic_regression_nonincreasing(a) -> np.ndarray:
    """L2 projection of `a` onto the nonincreasing cone (PAVA).

    Each output block value is the mean of its pooled inputs; linear time
    via a stack of blocks.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size < 1:
        raise ValueError("expected a nonempty 1-D vector")
    if not np.all(np.isfinite(a)):
        raise ValueError("entries must be finite")
    return pava_expand(a)


def prox_sorted_l1(u, gamma: float, lam) -> ProxResult:
    """Minimizer of 0.5*||u - x||^2 + gamma * ||x||_w with tie groups.

    Ties in |u| are broken by a stable sort on the original index; the
    resulting eta does not depend on that choice.
    """
    lam = as_weights(lam)
    u = _check_pair(u, lam)
    if not np.isfinite(gamma) or gamma < 0.0:
        raise ValueError("gamma must be finite and nonnegative")
    p = u.size
    uabs = np.abs(u)
    order = np.argsort(-uabs, kind="stable")
    z = uabs[order] - gamma * lam.weights
    vals = np.empty(p)
    cnts = np.empty(p, np.int64)
    m = pava_blocks(z, vals, cnts)

    eta = np.zeros(p)
    groups: list = []
    active: list = []
    pos = 0
    for b in range(m):
        size = int(cnts[b])
        idx = order[pos : pos + size]
        if vals[b] > 0.0:
            eta[idx] = np.where(u[idx] >= 0.0, vals[b], -vals[b])
            groups.append(idx)
            active.append(idx)
        else:
            # all remaining blocks clip to zero: one zero group
            idx = order[pos:]
            groups.append(idx)
            pos = p
            break
        pos += size
    if gamma == 0.0:
        eta = u.copy()
    return ProxResult(eta=eta, groups=groups, active_groups=active, permutation=order)


def prox_sorted_l1_value(u, gamma: float, lam) -> np.ndarray:
    """Prox value only, skipping group bookkeeping (solver fast path)."""
    lam = as_weights(lam)
    u = _check_pair(u, lam)
    if not np.isfinite(gamma) or gamma < 0.0:
        raise ValueError("gamma must be finite and nonnegative")
    if gamma == 0.0:
        return u.copy()
    return prox_eta(u, gamma * lam.weights)


def project_dual_ball(u, gamma: float, lam) -> np.ndarray:
    """Euclidean projection of `u` onto the dual-norm ball of radius gamma.

    Computed through the prox identity: the projection is u - eta(u).
    """
    res = prox_sorted_l1(u, gamma, lam)
    return np.asarray(u, dtype=np.float64) - res.eta


def prox_gamma_derivative(u, gamma: float, lam) -> np.ndarray:
    """Derivative of the prox with respect to gamma.

    Zero coordinates get 0; a coordinate in an active tie group gets
    -sign(eta) times the mean weight over the group's sorted positions.
    At the measure-zero set of degenerate gammas this is the right-limit
    derivative (the equal-value pooling in PAVA realizes that convention).
    """
    if not np.isfinite(gamma) or gamma <= 0.0:
        raise ValueError("gamma must be finite and positive")
    lam = as_weights(lam)
    res = prox_sorted_l1(u, gamma, lam)
    deriv = np.zeros(lam.p)
    pos = 0
    active_ids = {id(g) for g in res.active_groups}
    for grp in res.groups:
        size = grp.size
        if id(grp) in active_ids:
            mean_w = float(np.mean(lam.weights[pos : pos + size]))
            deriv[grp] = -np.sign(res.eta[grp]) * mean_w
        pos += size
    return deriv
