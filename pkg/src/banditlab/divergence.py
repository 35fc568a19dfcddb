"""Minimum-divergence computations for the four distribution families.

The divergences here share one convention: they measure how far an empirical
distribution is from the set of family members whose mean exceeds a threshold
``mu``, and they are exactly zero whenever ``mu`` does not exceed the
empirical mean.

* SPEF families have closed-form kl between mean parameters.
* Bounded support reduces to a one-dimensional concave maximization in
  lambda over ``[0, 1/(B - mu)]`` (solved by golden section).
* Gaussian with unknown variance has a closed form plus an indicator check
  on the squared gap and the variance against sqrt(n).
* h-moment families need a two-dimensional concave dual over a cone of
  feasible multipliers; feasibility of a pair is certified by minimizing the
  constraint function over the real line (``constraint_min``).

All solvers consume (value, weight) aggregations of the observations, so
repeated values cost nothing extra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .core import EmpiricalDistribution, MomentSpec, family_membership
from .errors import DegenerateSample, DomainError, NonConvergence

__all__ = [
    "SolverTol",
    "DualPoint",
    "DivergenceSpec",
    "GaussianDivergence",
    "kl_spef",
    "kinf_bounded",
    "kinf_bounded_discrete",
    "kinf_gaussian",
    "d_pi_gaussian",
    "constraint_min",
    "kinf_hmoment",
    "lambda_star",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SolverTol:
    """Repo-wide solver tolerances; acceptance tests pin these defaults."""

    lambda_tol: float = 1e-10      # absolute interval width, 1-D golden section
    max_iter: int = 200            # golden-section iteration cap
    outer_rel_tol: float = 1e-9    # relative interval width, outer lambda2 search
    bisect_iter: int = 80          # feasibility-boundary bisection iterations
    feasibility_slack: float = 1e-9


DEFAULT_TOL = SolverTol()


@dataclass(frozen=True)
class DualPoint:
    """Optimizer coordinates and attained value of a dual divergence program."""

    lambda1: float
    lambda2: float
    value: float
    feasible: bool
    in_family: Optional[bool] = None
    mean_range_warning: bool = False


class GaussianDivergence(NamedTuple):
    value: float
    indicator: bool
    degenerate: bool


# ---------------------------------------------------------------------------
# SPEF closed forms
# ---------------------------------------------------------------------------

_SPEF_KINDS = ("bernoulli", "poisson", "gaussian")


def kl_spef(kind: str, mu1: float, mu2: float, *, var0: float = 1.0) -> float:
    """Closed-form kl between mean parameters, zero when ``mu2 <= mu1``.

    ``kind`` is one of bernoulli / poisson / gaussian (known variance
    ``var0``).  Raises :class:`DomainError` when a mean is outside the
    family's mean domain.
    """
    if kind not in _SPEF_KINDS:
        raise DomainError(f"unknown SPEF kind {kind!r}")
    if kind == "bernoulli":
        if not (0.0 <= mu1 <= 1.0 and 0.0 <= mu2 <= 1.0):
            raise DomainError("Bernoulli means must lie in [0, 1]")
        if mu2 <= mu1:
            return 0.0
        if mu2 >= 1.0:
            return math.inf
        a = 0.0 if mu1 <= 0.0 else mu1 * math.log(mu1 / mu2)
        b = 0.0 if mu1 >= 1.0 else (1.0 - mu1) * math.log((1.0 - mu1) / (1.0 - mu2))
        return max(a + b, 0.0)  # clamp roundoff for nearly equal means
    if kind == "poisson":
        if mu1 < 0.0 or mu2 < 0.0:
            raise DomainError("Poisson means must be nonnegative")
        if mu2 <= mu1:
            return 0.0
        if mu1 == 0.0:
            return mu2
        return max(mu2 - mu1 + mu1 * math.log(mu1 / mu2), 0.0)
    if not (var0 > 0.0):
        raise DomainError("known variance must be positive")
    if mu2 <= mu1:
        return 0.0
    return (mu2 - mu1) ** 2 / (2.0 * var0)


# ---------------------------------------------------------------------------
# Bounded support: one-dimensional dual
# ---------------------------------------------------------------------------


def _golden_max(f, lo: float, hi: float, tol: float, max_iter: int) -> Tuple[float, float]:
    """Maximize a unimodal f on [lo, hi]; returns (argmax, max)."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    best_x, best_v = lo, f(lo)
    for x, v in ((c, fc), (d, fd), ((a + b) / 2.0, f((a + b) / 2.0)), (hi, f(hi))):
        if v > best_v:
            best_x, best_v = x, v
    return best_x, best_v


def kinf_bounded_discrete(values, probs, mu: float, B: float,
                          tol: SolverTol = DEFAULT_TOL) -> DualPoint:
    """Bounded-support divergence from a (value, weight) aggregation."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if np.any(values > B + 1e-12):
        raise DomainError("an observation exceeds the declared upper bound B")
    if mu >= B:
        if mu > B or np.any(values < B):
            # no family member bounded by B has mean above mu: infinite divergence
            return DualPoint(math.inf, 0.0, math.inf, feasible=True)
        return DualPoint(0.0, 0.0, 0.0, feasible=True)
    mean = float(probs @ values)
    if mu <= mean:
        return DualPoint(0.0, 0.0, 0.0, feasible=True)
    lam_hi = 1.0 / (B - mu)
    shifted = values - mu

    def objective(lam: float) -> float:
        d = 1.0 - lam * shifted
        if np.any(d <= 0.0):
            return -math.inf
        return float(probs @ np.log(d))

    lam, val = _golden_max(objective, 0.0, lam_hi, tol.lambda_tol, tol.max_iter)
    return DualPoint(lam, 0.0, max(val, 0.0), feasible=True)


def kinf_bounded(F: EmpiricalDistribution, mu: float, B: float,
                 tol: SolverTol = DEFAULT_TOL) -> DualPoint:
    """Maximize ``E_F[log(1 - lam (X - mu))]`` over ``lam in [0, 1/(B - mu)]``.

    Returns the maximizing lambda and the value; the value is zero when
    ``mu <= mean(F)`` and an infinite sentinel when ``mu >= B`` (no feasible
    target), which MED maps to a zero sampling weight.
    """
    support, weights = F.aggregate()
    return kinf_bounded_discrete(support, weights, mu, B, tol)


# ---------------------------------------------------------------------------
# Gaussian with unknown variance
# ---------------------------------------------------------------------------


def kinf_gaussian(muF: float, sigma2F: float, mu: float) -> float:
    """``0.5 log(1 + (mu - muF)^2 / sigma2F)`` for ``mu >= muF``, else 0."""
    if not (sigma2F > 0.0):
        raise DomainError("variance must be positive")
    if mu <= muF:
        return 0.0
    return 0.5 * math.log1p((mu - muF) ** 2 / sigma2F)


def d_pi_gaussian(F: EmpiricalDistribution, mu: float) -> GaussianDivergence:
    """Empirical Gaussian divergence with the sqrt(n) sanity indicator.

    The closed form is evaluated at the sample mean and the unbiased sample
    variance, then multiplied by the indicator of ``(mu - mean)^2 <= sqrt(n)``
    and ``variance <= sqrt(n)``.  A zero-variance sample yields value 0 with
    the ``degenerate`` flag set instead of an exception.
    """
    if F.n < 2:
        raise DegenerateSample("need n >= 2 observations for a sample variance")
    var = F.variance(ddof=1)
    if var == 0.0:
        return GaussianDivergence(0.0, False, True)
    root_n = math.sqrt(F.n)
    indicator = ((mu - F.mean) ** 2 <= root_n) and (var <= root_n)
    if not indicator:
        return GaussianDivergence(0.0, False, False)
    return GaussianDivergence(kinf_gaussian(F.mean, var, mu), True, False)


# ---------------------------------------------------------------------------
# h-moment families: two-dimensional dual
# ---------------------------------------------------------------------------


def _hprime_inv(spec: MomentSpec, ratio: float) -> float:
    """Solve h'(u) = ratio on u >= 0 (h' nondecreasing)."""
    if ratio <= 0.0:
        return 0.0
    if spec.h_prime_inv is not None:
        return float(spec.h_prime_inv(ratio))
    if float(spec.h_prime(0.0)) >= ratio:
        return 0.0
    hi = 1.0
    for _ in range(200):
        if float(spec.h_prime(hi)) >= ratio:
            break
        hi *= 2.0
    else:
        raise NonConvergence("h' never reached the requested slope")
    lo = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if float(spec.h_prime(mid)) < ratio:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def constraint_min(spec: MomentSpec, mu: float, eta: float, lambda1: float, lambda2: float,
                   *, gamma: Optional[float] = None) -> Tuple[float, float]:
    """Global minimizer and minimum of the dual feasibility function.

    ``g(x) = 1 - lambda1 (x + eta - mu) - lambda2 (B + gamma - h(|x - c|))``
    with center ``c = mu`` (centered spec) or ``c = 0`` (uncentered).  For
    ``lambda2 > 0`` the minimizer solves ``lambda1 = lambda2 h'(x - c)`` on the
    right branch; for ``lambda2 = 0 < lambda1`` the infimum is ``-inf``
    (reported as a sentinel); for ``lambda1 = lambda2 = 0``, g is constant 1.
    """
    if lambda1 < 0.0 or lambda2 < 0.0:
        raise DomainError("dual multipliers must be nonnegative")
    g = spec.gamma if gamma is None else gamma
    center = mu if spec.centered else 0.0
    if lambda2 == 0.0:
        if lambda1 == 0.0:
            return center, 1.0
        return math.inf, -math.inf
    u = _hprime_inv(spec, lambda1 / lambda2)
    x = center + u
    g_star = 1.0 - lambda1 * (x + eta - mu) - lambda2 * (spec.B + g - float(spec.h(u)))
    return x, g_star


def _lambda1_max(spec: MomentSpec, mu: float, eta: float, gamma: float, lam2: float,
                 tol: SolverTol) -> float:
    """Largest lambda1 >= 0 keeping (lambda1, lam2) feasible.

    The feasibility margin is concave in lambda1 and nonnegative at 0 for any
    ``lam2 <= 1/(B + gamma)``, and tends to -inf, so the boundary is the upper
    root, located by doubling plus bisection.
    """

    def margin(l1: float) -> float:
        return constraint_min(spec, mu, eta, l1, lam2, gamma=gamma)[1]

    if margin(0.0) < -tol.feasibility_slack:
        return 0.0
    hi = 1.0
    for _ in range(200):
        if margin(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise NonConvergence("feasible lambda1 range appears unbounded")
    lo = 0.0
    for _ in range(tol.bisect_iter):
        mid = 0.5 * (lo + hi)
        if margin(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def _dual_max(values: np.ndarray, probs: np.ndarray, mu: float, spec: MomentSpec,
              eta: float, gamma: float, tol: SolverTol) -> DualPoint:
    """Maximize the h-moment dual objective over the (eta, gamma)-inflated cone.

    Nested search: the partial maximum over lambda1 at fixed lambda2 is a
    concave function of lambda2, so an outer golden section over lambda2 with
    an inner golden section over ``[0, lambda1_max(lambda2)]`` finds the
    global optimum of the jointly concave program.
    """
    mean = float(probs @ values)
    if mu <= mean:
        return DualPoint(0.0, 0.0, 0.0, feasible=True)
    center = mu if spec.centered else 0.0
    hvals = np.asarray(spec.h(np.abs(values - center)), dtype=float)
    xm = values - mu
    zm = spec.B - hvals
    lam2_hi = 1.0 / (spec.B + gamma)
    if lam2_hi <= 0.0 or not math.isfinite(lam2_hi):
        return DualPoint(0.0, 0.0, 0.0, feasible=True)

    def objective(l1: float, l2: float) -> float:
        d = 1.0 - l1 * xm - l2 * zm
        if np.any(d <= 0.0):
            return -math.inf
        return float(probs @ np.log(d))

    cache: dict = {}

    def best_given_lam2(l2: float) -> Tuple[float, float]:
        if l2 <= 0.0:
            return 0.0, 0.0
        key = l2
        if key not in cache:
            l1_hi = _lambda1_max(spec, mu, eta, gamma, l2, tol)
            if l1_hi <= 0.0:
                cache[key] = (objective(0.0, l2), 0.0)
            else:
                l1, val = _golden_max(lambda l1: objective(l1, l2), 0.0, l1_hi,
                                      tol.lambda_tol * max(1.0, l1_hi), tol.max_iter)
                cache[key] = (val, l1)
        return cache[key]

    lam2, _ = _golden_max(lambda l2: best_given_lam2(l2)[0], 0.0, lam2_hi,
                          tol.outer_rel_tol * lam2_hi, tol.max_iter)
    val, lam1 = best_given_lam2(lam2)
    if val < 0.0:
        lam1, lam2, val = 0.0, 0.0, 0.0
    _, g_star = constraint_min(spec, mu, eta, lam1, lam2, gamma=gamma)
    feasible = g_star >= -tol.feasibility_slack
    if not feasible:
        raise NonConvergence(
            f"dual point ({lam1:.6g}, {lam2:.6g}) failed the feasibility certificate "
            f"(margin {g_star:.3g})")
    return DualPoint(lam1, lam2, val, feasible=True)


def kinf_hmoment(F: EmpiricalDistribution, mu: float, spec: MomentSpec,
                 tol: SolverTol = DEFAULT_TOL) -> DualPoint:
    """h-moment divergence ``max E_F[log(1 - l1 (X-mu) - l2 (B - Z_X))]``.

    ``Z_X`` is ``h(|X - mu|)`` in centered mode (the centered problem reduces
    exactly to the uncentered one on observations shifted by ``-mu``) and
    ``h(|X|)`` otherwise.  The returned value carries the family-membership
    indicator: it is multiplied by ``1(F in family)``, with the raw membership
    exposed through ``in_family``.  Thresholds beyond the uncentered family's
    attainable means (``mu > h^{-1}(B)``) only set ``mean_range_warning``.
    """
    support, weights = F.aggregate()
    point = _dual_max(support, weights, mu, spec, 0.0, 0.0, tol)
    member = family_membership(F, spec)
    warn = (not spec.centered) and mu > float(spec.h_inv(spec.B))
    value = point.value if member else 0.0
    return DualPoint(point.lambda1, point.lambda2, value, point.feasible,
                     in_family=member, mean_range_warning=warn)


def lambda_star(F: EmpiricalDistribution, mu: float, spec: MomentSpec, eta: float,
                tol: SolverTol = DEFAULT_TOL) -> DualPoint:
    """Dual value over the (eta, gamma)-inflated feasibility region.

    With ``eta = 0`` and ``spec.gamma = 0`` this coincides with the raw
    (membership-free) h-moment divergence; inflating either parameter shrinks
    the feasible cone, so the value is nonincreasing in both.
    """
    if eta < 0.0:
        raise DomainError("eta must be nonnegative")
    support, weights = F.aggregate()
    return _dual_max(support, weights, mu, spec, eta, spec.gamma, tol)


# ---------------------------------------------------------------------------
# Family selector
# ---------------------------------------------------------------------------

_FAMILIES = ("bernoulli", "poisson", "gaussian-known", "bounded", "gaussian",
             "hmoment", "maillard")


@dataclass(frozen=True)
class DivergenceSpec:
    """Selects which divergence a policy or reference computation uses.

    ``maillard`` is the squared-gap preset ``(mu - mean)^2 / 2`` usable as a
    MED D-function for bounded rewards.
    """

    family: str
    B: Optional[float] = None
    var0: float = 1.0
    moment: Optional[MomentSpec] = None
    tol: SolverTol = field(default=DEFAULT_TOL)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise DomainError(f"unknown divergence family {self.family!r}")
        if self.family == "bounded" and not (self.B and self.B > 0.0):
            raise DomainError("bounded family needs B > 0")
        if self.family == "hmoment" and self.moment is None:
            raise DomainError("hmoment family needs a MomentSpec")
        if self.family == "gaussian-known" and not (self.var0 > 0.0):
            raise DomainError("gaussian-known family needs var0 > 0")

    def d_value(self, F: EmpiricalDistribution, mu: float) -> float:
        """D(F, mu) for this family (includes the family's indicator terms)."""
        if self.family in ("bernoulli", "poisson"):
            return kl_spef(self.family, F.mean, mu)
        if self.family == "gaussian-known":
            return kl_spef("gaussian", F.mean, mu, var0=self.var0)
        if self.family == "bounded":
            return kinf_bounded(F, mu, self.B, self.tol).value
        if self.family == "gaussian":
            return d_pi_gaussian(F, mu).value
        if self.family == "maillard":
            gap = mu - F.mean
            return 0.5 * gap * gap if gap > 0.0 else 0.0
        return kinf_hmoment(F, mu, self.moment, self.tol).value
