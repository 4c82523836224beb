"""Seeded synthetic generators for designs, signals, noise, and weights.

All generators are pure functions of (spec, seed): identical seeds give
bit-identical output (Philox streams, see `slope_lab.rng`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special

from .rng import make_rng
from .sorted_l1 import WeightVector

__all__ = [
    "DesignSpec",
    "SignalSpec",
    "WeightSpec",
    "gen_design",
    "gen_signal",
    "gen_noise",
    "gen_weights",
    "norm_quantile",
]

DESIGN_KINDS = ("iid-gaussian", "correlated", "heavy-tail", "correlated-heavy-tail")
SIGNAL_KINDS = ("uniform-nonzero", "constant-nonzero", "bernoulli-scaled")
WEIGHT_KINDS = ("constant", "linear-uniform", "bh", "max2", "equispaced", "custom")


@dataclass(frozen=True)
class DesignSpec:
    kind: str
    n: int
    p: int
    rho: float = 0.0
    df: int = 3

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if "heavy-tail" in self.kind and self.df <= 2:
            raise ValueError("heavy-tail design needs df > 2 (finite variance)")


@dataclass(frozen=True)
class SignalSpec:
    kind: str
    p: int
    epsilon: float
    amplitude: float = 5.0

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.p < 1:
            raise ValueError("p must be positive")
        if round(self.epsilon * self.p) < 1:
            raise ValueError("epsilon * p rounds to zero nonzeros")

    @property
    def k(self) -> int:
        return int(round(self.epsilon * self.p))


@dataclass(frozen=True)
class WeightSpec:
    kind: str
    p: int
    q_bh: float = 0.5
    values: tuple = None  # only for kind == "custom"

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.kind == "bh" and not 0.0 < self.q_bh < 1.0:
            raise ValueError("q_bh must lie in (0, 1)")
        if self.kind == "custom" and self.values is None:
            raise ValueError("custom weights need explicit values")


# Acklam's rational approximation to the standard normal quantile, refined
# with one Halley step on erfc.  The raw approximation is good to ~1.15e-9
# relative; the refinement takes it to machine precision.
_QA = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
       1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_QB = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
       6.680131188771972e+01, -1.328068155288572e+01)
_QC = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
       -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_QD = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
       3.754408661907416e+00)


def norm_quantile(prob: float) -> float:
    """Inverse standard normal cdf, accurate to full double precision."""
    if not 0.0 < prob < 1.0:
        raise ValueError("probability must lie strictly inside (0, 1)")
    p_low, p_high = 0.02425, 1.0 - 0.02425
    if prob < p_low:
        q = np.sqrt(-2.0 * np.log(prob))
        x = ((((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q + _QC[4]) * q + _QC[5])
             / ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0))
    elif prob <= p_high:
        q = prob - 0.5
        r = q * q
        x = ((((((_QA[0] * r + _QA[1]) * r + _QA[2]) * r + _QA[3]) * r + _QA[4]) * r + _QA[5]) * q
             / (((((_QB[0] * r + _QB[1]) * r + _QB[2]) * r + _QB[3]) * r + _QB[4]) * r + 1.0))
    else:
        q = np.sqrt(-2.0 * np.log1p(-prob))
        x = -((((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q + _QC[4]) * q + _QC[5])
              / ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0))
    # one Halley step on e = Phi(x) - prob; use the complementary tail on
    # the upper half so neither side loses precision to cancellation
    if prob < 0.5:
        e = 0.5 * scipy.special.erfc(-x / np.sqrt(2.0)) - prob
    else:
        e = (1.0 - prob) - 0.5 * scipy.special.erfc(x / np.sqrt(2.0))
    u = e * np.sqrt(2.0 * np.pi) * np.exp(x * x / 2.0)
    return float(x - u / (1.0 + x * u / 2.0))


def _ar1_sqrt(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    cov = rho ** np.abs(idx[:, None] - idx[None, :])
    return scipy.linalg.cholesky(cov, lower=True)


def gen_design(spec: DesignSpec, seed: int = 0) -> np.ndarray:
    """Design matrix with entries scaled to variance 1/n.

    Heavy-tail entries are iid t(df) divided by sqrt(n * df / (df - 2));
    correlated kinds right-multiply by the Cholesky factor of the
    rho^|i-j| correlation matrix.
    """
    rng = make_rng(seed, "design")
    n, p = spec.n, spec.p
    if "heavy-tail" in spec.kind:
        raw = rng.standard_t(spec.df, size=(n, p))
        base = raw / np.sqrt(spec.df / (spec.df - 2.0)) / np.sqrt(n)
    else:
        base = rng.standard_normal((n, p)) / np.sqrt(n)
    if spec.kind.startswith("correlated") and spec.rho != 0.0:
        base = base @ _ar1_sqrt(p, spec.rho).T
    return base


def gen_signal(spec: SignalSpec, seed: int = 0) -> np.ndarray:
    """Sparse signal with exactly round(epsilon * p) nonzeros.

    Supports are uniform without replacement; nonzero values are
    Unif[0, amplitude] for "uniform-nonzero" and exactly `amplitude`
    (tied on purpose) for the other two kinds.
    """
    rng = make_rng(seed, "signal")
    x = np.zeros(spec.p)
    support = rng.choice(spec.p, size=spec.k, replace=False)
    if spec.kind == "uniform-nonzero":
        x[support] = rng.uniform(0.0, spec.amplitude, size=spec.k)
    else:
        x[support] = spec.amplitude
    return x


def gen_noise(n: int, sigma_z: float, seed: int = 0) -> np.ndarray:
    """Gaussian noise vector with standard deviation sigma_z."""
    if sigma_z < 0:
        raise ValueError("sigma_z must be nonnegative")
    if sigma_z == 0.0:
        return np.zeros(n)
    return sigma_z * make_rng(seed, "noise").standard_normal(n)


def gen_weights(spec: WeightSpec) -> WeightVector:
    """Deterministic weight sequences used throughout the experiments."""
    p = spec.p
    if spec.kind == "constant":
        w = np.ones(p)
    elif spec.kind == "linear-uniform":
        w = 1.0 - 0.99 * np.arange(p) / p
    elif spec.kind == "bh":
        top = norm_quantile(1.0 - spec.q_bh / (2.0 * p))
        w = np.array([norm_quantile(1.0 - i * spec.q_bh / (2.0 * p)) for i in range(1, p + 1)])
        w = w / top
    elif spec.kind == "max2":
        w = np.zeros(p)
        w[: min(2, p)] = 1.0
    elif spec.kind == "equispaced":
        w = np.linspace(1.0, 0.01, p) if p > 1 else np.ones(1)
    else:  # custom
        w = np.asarray(spec.values, dtype=np.float64)
        if w.size != p:
            raise ValueError("custom values length does not match p")
    return WeightVector(w)
