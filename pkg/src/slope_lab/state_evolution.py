"""Monte-Carlo evaluation and fixed-point solution of the state evolution.

The coupled scalar system in (sigma, chi)

    sigma^2 = sigma_z^2 + risk(sigma, chi) / delta
    gamma   = sigma * chi * (1 - inner(sigma, chi) / (delta * sigma))

predicts the mean square error of the sorted-L1 estimator. `risk` and
`inner` are Gaussian expectations of the prox evaluated by Monte Carlo on
one frozen panel per solve (common random numbers), which makes every
residual a smooth deterministic function of the parameters and keeps the
bracketed root-finding well posed.

The module also computes the phase-transition threshold of a weight
sequence, the low-noise sensitivity constant, and the optimally tuned
risk through the scalar decreasing function G(sigma) whose unique root
G(sigma) = 1 identifies the best achievable error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._kernels import presorted_stats, sort_panel
from .rng import make_rng
from .sorted_l1 import WeightVector, as_weights

__all__ = [
    "SEProblem",
    "SEState",
    "MCRisk",
    "MLambdaEstimate",
    "BridgeAsymptote",
    "mc_risk",
    "solve_se",
    "optimal_risk",
    "m_lambda",
    "m_lambda_at_chi",
    "noise_sensitivity",
    "bridge_large_noise_asymptote",
]

CHI_BRACKET = (1e-6, 1e4)
ALPHA_BRACKET = (1e-4, 1e3)


@dataclass(eq=False)
class SEProblem:
    """Signal, weights, and sampling ratio for one state-evolution solve.

    `mc_samples` Gaussian panels are drawn once per problem from a Philox
    stream keyed by `seed` and reused for every (sigma, chi) evaluation.
    """

    x: np.ndarray
    weights: WeightVector
    delta: float
    sigma_z: float
    seed: int = 0
    mc_samples: int = 2000
    _panel: np.ndarray = field(default=None, init=False, repr=False)
    _sorted_cache: tuple = field(default=None, init=False, repr=False)
    _noise_sorted: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.weights = as_weights(self.weights)
        if self.x.ndim != 1 or self.x.size != self.weights.p:
            raise ValueError("signal and weights must share the same length")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("signal must be bounded")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.sigma_z < 0:
            raise ValueError("sigma_z must be nonnegative")
        if self.mc_samples < 2:
            raise ValueError("need at least 2 Monte-Carlo samples")

    @property
    def p(self) -> int:
        return self.x.size

    def panel(self) -> np.ndarray:
        if self._panel is None:
            rng = make_rng(self.seed, "se-panel")
            self._panel = rng.standard_normal((self.mc_samples, self.p))
        return self._panel

    def noise_slope(self, chi: float) -> float:
        """(1/p) E||eta(h; chi)||^2 over the panel: the large-sigma slope
        of the risk map, used for feasibility tests and bracket caps."""
        if self._noise_sorted is None:
            zeros = np.zeros(self.p)
            self._noise_sorted = sort_panel(zeros, self.panel(), 1.0)
        US, XP, HP = self._noise_sorted
        risk_s = presorted_stats(US, XP, HP, chi * self.weights.weights)[0]
        return float(np.mean(risk_s)) / self.p


@dataclass(frozen=True)
class SEState:
    sigma_star: float
    chi_star: float
    gamma: float
    predicted_mse: float
    mc_samples: int
    mc_std_err: float

    def __post_init__(self):
        if self.sigma_star < 0 or self.predicted_mse < -1e-12:
            raise ValueError("inconsistent state-evolution solution")


@dataclass(frozen=True)
class MCRisk:
    risk: float
    inner: float
    risk_stderr: float
    inner_stderr: float
    ngroups_mean: float = 0.0


@dataclass(frozen=True)
class MLambdaEstimate:
    value: float
    stderr: float
    alpha_star: float


@dataclass(frozen=True)
class BridgeAsymptote:
    """Leading large-noise term of the optimally tuned bridge risk.

    Only the first-order term ||x||^2 / p is available here; the
    second-order correction is O(1/sigma_z^2) with a negative sign whose
    constant depends only on q, so `second_order_sign` records the
    expected ordering without claiming a numeric value.
    """

    leading_term: float
    second_order_sign: int = -1


def _sorted_panel(prob: SEProblem, sigma: float):
    cached = prob._sorted_cache
    if cached is None or cached[0] != sigma:
        US, XP, HP = sort_panel(prob.x, prob.panel(), sigma)
        prob._sorted_cache = (sigma, US, XP, HP)
    return prob._sorted_cache[1:]


def _stats(prob: SEProblem, sigma: float, chi: float):
    US, XP, HP = _sorted_panel(prob, sigma)
    risk_s, inner_s, ngrp_s = presorted_stats(US, XP, HP,
                                              sigma * chi * prob.weights.weights)
    p = prob.p
    S = risk_s.size
    return (
        float(np.mean(risk_s)) / p,
        float(np.mean(inner_s)) / p,
        float(np.std(risk_s, ddof=1) / np.sqrt(S)) / p,
        float(np.std(inner_s, ddof=1) / np.sqrt(S)) / p,
        float(np.mean(ngrp_s)),
    )


def mc_risk(prob: SEProblem, sigma: float, chi: float) -> MCRisk:
    """Monte-Carlo estimate of the two prox expectations.

    Returns (1/p) E||eta(x + sigma h; sigma chi) - x||^2 and
    (1/p) E<eta(x + sigma h; sigma chi), h> with their standard errors,
    over the problem's frozen Gaussian panel.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if chi < 0:
        raise ValueError("chi must be nonnegative")
    risk, inner, rse, ise, ngrp = _stats(prob, sigma, chi)
    return MCRisk(risk=risk, inner=inner, risk_stderr=rse, inner_stderr=ise,
                  ngroups_mean=ngrp)


def _solve_sigma(prob: SEProblem, chi: float, hint: float = None):
    """Root of sigma^2 = sigma_z^2 + risk(sigma, chi)/delta, or None.

    The map T(v) = sigma_z^2 + risk(sqrt(v), chi)/delta in v = sigma^2
    crosses the identity exactly once from above (risk/sigma^2 decreases
    in sigma), so the root is driven by a safeguarded secant on
    g(v) = T(v) - v, warm-started from `hint`, with bisection inside the
    bracket when the secant stalls.  Returns None when the equation has
    no solution, which happens exactly when the large-sigma slope of the
    risk map reaches delta; that slope also caps the bracket:
    risk(v) <= ||x||^2/p + slope * v pins the root below
    (sigma_z^2 + ||x||^2/(delta p)) / (1 - slope/delta).
    """
    sz = prob.sigma_z
    delta = prob.delta
    vz = sz * sz
    slope = prob.noise_slope(chi)
    if slope >= delta * (1.0 - 1e-12):
        return None
    xsq = float(prob.x @ prob.x) / prob.p
    vmax = (vz + xsq / delta) / (1.0 - slope / delta) * (1.0 + 1e-9) + 1e-300
    vlo = vz  # g(vz+) > 0 always; g(vmax) <= 0 by the slope bound

    def g(v):
        risk = _stats(prob, float(np.sqrt(v)), chi)[0]
        return vz + risk / delta - v

    v0 = hint * hint if hint is not None and hint > sz else 0.5 * (vz + vmax)
    v0 = min(max(v0, vz + 1e-6 * (vmax - vz)), vmax)
    g0 = g(v0)
    vhi = vmax
    if g0 > 0:
        vlo = v0
    else:
        vhi = v0
    v1 = min(max(v0 + g0, vlo + 1e-3 * (vhi - vlo)), vhi - 1e-3 * (vhi - vlo))
    g1 = g(v1)
    for _ in range(200):
        if abs(v1 - v0) <= 1e-9 * v1 and abs(g1) <= 1e-9 * max(v1, vz):
            return float(np.sqrt(v1))
        if g1 > 0:
            vlo = v1
        else:
            vhi = v1
        if vhi - vlo <= 1e-12 * vhi:
            return float(np.sqrt(0.5 * (vlo + vhi)))
        if g1 == g0:
            vn = 0.5 * (vlo + vhi)
        else:
            vn = v1 - g1 * (v1 - v0) / (g1 - g0)
        if not (vlo < vn < vhi) or abs(vn - v1) > 0.75 * (vhi - vlo):
            vn = 0.5 * (vlo + vhi)
        v0, g0 = v1, g1
        v1 = vn
        g1 = g(v1)
    return None


def solve_se(prob: SEProblem, gamma: float, chi_hint: float = None) -> SEState:
    """Solve the two-equation system at a fixed regularization level.

    Outer bracketed root-find on chi in [1e-6, 1e4]: for each chi the
    sigma-equation is solved first (its left side over sigma^2 is
    monotone), then the implied gamma(chi) residual is driven to zero.
    `chi_hint` (for example the solution at a nearby gamma) narrows the
    initial residual scan.  Raises with diagnostics when no bracket
    exists or when the residual changes sign more than once on the scan
    grid (the calibration is only guaranteed positive at solutions).
    """
    if gamma <= 0 or not np.isfinite(gamma):
        raise ValueError("gamma must be positive")
    if prob.sigma_z <= 0:
        raise ValueError("solve_se requires sigma_z > 0; probe limits at 1e-3")
    delta = prob.delta
    cache: dict = {}

    def eval_chi(chi):
        if chi not in cache:
            sigma = _solve_sigma(prob, chi, hint=cache.get("last_sigma"))
            if sigma is None:
                cache[chi] = (None, None)
            else:
                cache["last_sigma"] = sigma
                inner = _stats(prob, sigma, chi)[1]
                implied = sigma * chi * (1.0 - inner / (delta * sigma))
                cache[chi] = (sigma, implied - gamma)
        return cache[chi]

    def scan(grid, full: bool):
        feas = [(c, eval_chi(c)[1]) for c in grid]
        feas = [(c, r) for c, r in feas if r is not None]
        if not feas:
            if full:
                raise RuntimeError(
                    "state-evolution solve failed: sigma-equation has no solution "
                    f"anywhere on the chi bracket {CHI_BRACKET}")
            return None
        signs = np.sign([r for _, r in feas])
        flips = np.nonzero(np.diff(signs) != 0)[0]
        if flips.size == 0:
            if full:
                raise RuntimeError(
                    "state-evolution solve failed: gamma residual does not change "
                    f"sign on chi in {CHI_BRACKET}; residual range "
                    f"[{feas[0][1]:.3e}, {feas[-1][1]:.3e}] for gamma={gamma}")
            return None
        if full and flips.size > 1:
            raise RuntimeError(
                "state-evolution solve failed: gamma residual changes sign more "
                f"than once on the scan grid (at chi near "
                f"{[feas[i][0] for i in flips]}); the calibration is not monotone "
                "here")
        return feas[flips[0]][0], feas[flips[0] + 1][0]

    bracket = None
    if chi_hint is not None and CHI_BRACKET[0] < chi_hint < CHI_BRACKET[1]:
        lo = max(CHI_BRACKET[0], chi_hint / 4.0)
        hi = min(CHI_BRACKET[1], chi_hint * 4.0)
        bracket = scan(np.geomspace(lo, hi, 7), full=False)
    if bracket is None:
        bracket = scan(np.geomspace(CHI_BRACKET[0], CHI_BRACKET[1], 25), full=True)
    from scipy.optimize import brentq

    chi_star = float(brentq(lambda c: eval_chi(c)[1], bracket[0], bracket[1],
                            rtol=1e-9, maxiter=200))
    sigma_star = eval_chi(chi_star)[0]
    st = mc_risk(prob, sigma_star, chi_star)
    predicted = delta * (sigma_star**2 - prob.sigma_z**2)
    return SEState(sigma_star=sigma_star, chi_star=chi_star, gamma=gamma,
                   predicted_mse=max(predicted, 0.0), mc_samples=prob.mc_samples,
                   mc_std_err=st.risk_stderr)


def _golden_log_min(f, lo: float, hi: float, coarse: int = 17, xtol: float = 1e-3,
                    max_widen: int = 3):
    """Minimize f over [lo, hi] on a log axis: coarse 3-point bracketing,
    then golden section.  Widens the bracket tenfold up to `max_widen`
    times when the coarse minimum lands on a boundary; a minimum that
    stays pinned to the left edge is treated as a boundary infimum (the
    objectives here are continuous as the argument goes to zero)."""
    for _ in range(max_widen + 1):
        ts = np.linspace(np.log(lo), np.log(hi), coarse)
        vals = np.array([f(float(np.exp(t))) for t in ts])
        i = int(np.argmin(vals))
        if 0 < i < coarse - 1:
            a, b = ts[i - 1], ts[i + 1]
            break
        if i == 0:
            lo /= 10.0
        else:
            hi *= 10.0
    else:
        if i == 0:
            return float(np.exp(ts[0])), float(vals[0])
        raise RuntimeError(f"no interior minimizer bracket in [{lo}, {hi}]")
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(float(np.exp(c))), f(float(np.exp(d)))
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(float(np.exp(c)))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(float(np.exp(d)))
    t = c if fc <= fd else d
    return float(np.exp(t)), float(min(fc, fd))


def optimal_risk(prob: SEProblem):
    """Best achievable predicted MSE over all regularization levels.

    Bisection on sigma for G(sigma) = 1, where
    G(sigma) = (sigma_z^2 + inf_chi risk(sigma, chi)/delta) / sigma^2
    is continuous and strictly decreasing; the inner infimum is a
    golden-section search on log chi.  Returns (e_star, gamma_star, state).
    """
    if prob.sigma_z <= 0:
        raise ValueError("optimal_risk requires sigma_z > 0; use the phase "
                         "threshold operations for the noiseless limit")
    delta = prob.delta
    sz = prob.sigma_z
    chi_hint = [None]

    def inf_chi(sigma):
        lo, hi = CHI_BRACKET
        coarse = 17
        if chi_hint[0] is not None:
            lo = max(lo, chi_hint[0] / 30.0)
            hi = min(hi, chi_hint[0] * 30.0)
            coarse = 9
        chi, val = _golden_log_min(lambda c: _stats(prob, sigma, c)[0], lo, hi,
                                   coarse=coarse)
        chi_hint[0] = chi
        return chi, val

    def G(sigma):
        _, val = inf_chi(sigma)
        return (sz * sz + val / delta) / (sigma * sigma)

    xsq = float(prob.x @ prob.x) / prob.p
    lo = sz * (1.0 + 1e-12)
    hi = np.sqrt(sz * sz + xsq / delta) * (1.0 + 1e-9) + 1e-12
    for _ in range(4):
        if G(hi) < 1.0:
            break
        hi *= 2.0
    else:
        raise RuntimeError("could not bracket G(sigma) = 1 from above")
    while (hi - lo) > 2e-6 * lo:
        mid = 0.5 * (lo + hi)
        if G(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    sigma_star = 0.5 * (lo + hi)
    chi_star, _ = inf_chi(sigma_star)
    risk, inner, rse, _, ngrp = _stats(prob, sigma_star, chi_star)
    # one fixed-point polish: the reported sigma then satisfies the
    # sigma-equation exactly against the panel risk at (sigma, chi)
    sigma_star = float(np.sqrt(sz * sz + risk / delta))
    e_star = delta * (sigma_star**2 - sz * sz)
    gamma_star = sigma_star * chi_star * (1.0 - ngrp / (delta * prob.p))
    state = SEState(sigma_star=sigma_star, chi_star=chi_star, gamma=gamma_star,
                    predicted_mse=max(e_star, 0.0), mc_samples=prob.mc_samples,
                    mc_std_err=rse)
    return e_star, gamma_star, state


def _tail_norm_panel(lam: WeightVector, k: int, mc_samples: int, seed: int):
    tail = WeightVector(lam.weights[k:])
    rng = make_rng(seed, "phase-panel")
    H = rng.standard_normal((mc_samples, lam.p - k))
    zeros = np.zeros(lam.p - k)
    US, XP, HP = sort_panel(zeros, H, 1.0)
    return tail, (US, XP, HP)


def m_lambda(k: int, lam, mc_samples: int = 2000, seed: int = 0) -> MLambdaEstimate:
    """Phase-transition threshold of a weight sequence at sparsity k.

    One-dimensional minimization over alpha of the strictly convex map
    alpha -> (k + alpha^2 * sum of the k largest squared weights
              + E||prox of a (p-k)-dim Gaussian at level alpha||^2) / p
    with a common-random-number panel across all alpha evaluations.
    """
    lam = as_weights(lam)
    if not 0 < k < lam.p:
        raise ValueError("need 0 < k < p")
    tail, (US, XP, HP) = _tail_norm_panel(lam, k, mc_samples, seed)
    head_sq = float(np.sum(lam.weights[:k] ** 2))
    p = lam.p

    def objective(alpha):
        risk_s = presorted_stats(US, XP, HP, alpha * tail.weights)[0]
        return (k + alpha * alpha * head_sq + float(np.mean(risk_s))) / p

    alpha_star, val = _golden_log_min(objective, *ALPHA_BRACKET)
    risk_s = presorted_stats(US, XP, HP, alpha_star * tail.weights)[0]
    stderr = float(np.std(risk_s, ddof=1) / np.sqrt(mc_samples)) / p
    return MLambdaEstimate(value=val, stderr=stderr, alpha_star=alpha_star)


def m_lambda_at_chi(k: int, lam, chi: float, mc_samples: int = 2000,
                    seed: int = 0) -> MLambdaEstimate:
    """Fixed-level threshold: the m_lambda objective at alpha = chi.

    This is the small-sigma limit of (1/p) E||eta(x/sigma + h; chi) -
    x/sigma||^2 for signals without tied nonzero components.
    """
    lam = as_weights(lam)
    if not 0 < k < lam.p:
        raise ValueError("need 0 < k < p")
    if chi < 0:
        raise ValueError("chi must be nonnegative")
    tail, (US, XP, HP) = _tail_norm_panel(lam, k, mc_samples, seed)
    head_sq = float(np.sum(lam.weights[:k] ** 2))
    risk_s = presorted_stats(US, XP, HP, chi * tail.weights)[0]
    val = (k + chi * chi * head_sq + float(np.mean(risk_s))) / lam.p
    stderr = float(np.std(risk_s, ddof=1) / np.sqrt(mc_samples)) / lam.p
    return MLambdaEstimate(value=val, stderr=stderr, alpha_star=chi)


def noise_sensitivity(delta: float, m_lambda_value: float) -> float:
    """Low-noise constant delta*M/(delta - M); +inf at or below threshold."""
    if m_lambda_value <= 0:
        raise ValueError("threshold value must be positive")
    if delta < m_lambda_value:
        return float("inf")
    if delta == m_lambda_value:
        warnings.warn("delta equals the threshold: sensitivity undefined, "
                      "returning +inf", RuntimeWarning)
        return float("inf")
    return delta * m_lambda_value / (delta - m_lambda_value)


def bridge_large_noise_asymptote(q: float, x_norm2_sq_over_p: float,
                                 sigma_z: float) -> BridgeAsymptote:
    """Leading term of the optimally tuned bridge risk as noise grows.

    Only the first-order term is computable here; the second-order term is
    negative with a q-dependent constant, recorded as a sign so the
    experiment harness can label the expected ordering.
    """
    if not np.isfinite(q) or q <= 1.0:
        raise ValueError("q must lie in the open interval (1, inf)")
    if x_norm2_sq_over_p < 0 or sigma_z < 0:
        raise ValueError("norms and noise levels must be nonnegative")
    return BridgeAsymptote(leading_term=float(x_norm2_sq_over_p))
