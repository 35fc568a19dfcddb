"""Randomized bandit policies: MED, TS-dagger samplers, and h-NPTS.

The TS variant implemented here ("TS-dagger") never samples for the
empirically best arm: candidates are the empirical best arms plus every
suboptimal arm whose sampled mean reaches the best empirical mean, and the
pull is uniform over the candidate set.  Consequently a suboptimal arm's
sampling probability is sandwiched between BCP/K and BCP, where BCP is the
probability that its sampled mean crosses the boundary.

Policy state is owned by a single episode; the step functions never mutate
it (the simulator applies updates), so concurrent episodes share nothing.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import EmpiricalDistribution, MomentSpec
from .divergence import (DivergenceSpec, kinf_bounded_discrete, kinf_hmoment,
                         kl_spef)
from .errors import ConfigError, DegenerateWeight, DomainError

__all__ = [
    "ArmStats",
    "PolicyConfig",
    "PolicyState",
    "SamplingDecision",
    "a_zero",
    "a_spef",
    "exponential_weights",
    "med_probabilities",
    "med_step",
    "ts_dagger_step",
    "sample_spef_conjugate",
    "sample_gaussian_ig",
    "gaussian_check",
    "sample_npts_bounded",
    "hnpts_check",
    "hnpts_step",
    "policy_step",
]


def a_zero(n: int) -> float:
    return 0.0


def a_spef(n: int) -> float:
    """The 4/n schedule used for SPEF and Gaussian families."""
    return 4.0 / n


_A_SCHEDULES = {"0": a_zero, "4/n": a_spef}


# ---------------------------------------------------------------------------
# Per-arm running statistics
# ---------------------------------------------------------------------------


class ArmStats:
    """Mutable accumulator for one arm's observations.

    Tracks count, mean, Welford M2, a value->count aggregation, the raw
    observation list, and the truncated-mean estimator at level u_n = n
    (an observation enters the truncated sum permanently once its magnitude
    falls under the growing threshold, so updates are amortized O(log n)).
    """

    __slots__ = ("n", "mean", "_m2", "counts", "xs", "_trunc_sum", "_excluded")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self._m2 = 0.0
        self.counts: Dict[float, int] = {}
        self.xs: List[float] = []
        self._trunc_sum = 0.0
        self._excluded: List[Tuple[float, float]] = []

    def update(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self._m2 += delta * (x - self.mean)
        self.counts[x] = self.counts.get(x, 0) + 1
        self.xs.append(x)
        u = float(self.n)
        while self._excluded and self._excluded[0][0] <= u:
            self._trunc_sum += heapq.heappop(self._excluded)[1]
        if abs(x) <= u:
            self._trunc_sum += x
        else:
            heapq.heappush(self._excluded, (abs(x), x))

    @property
    def truncated_mean(self) -> float:
        return self._trunc_sum / self.n

    def variance(self, ddof: int = 1) -> float:
        if self.n <= ddof:
            raise DomainError("not enough observations for the sample variance")
        return self._m2 / (self.n - ddof)

    def estimate(self, truncated: bool) -> float:
        return self.truncated_mean if truncated else self.mean

    def aggregate(self) -> Tuple[np.ndarray, np.ndarray]:
        support = np.fromiter(self.counts.keys(), dtype=float, count=len(self.counts))
        counts = np.fromiter(self.counts.values(), dtype=float, count=len(self.counts))
        order = np.argsort(support)
        return support[order], counts[order]

    def to_empirical(self) -> EmpiricalDistribution:
        return EmpiricalDistribution(self.xs)


# ---------------------------------------------------------------------------
# Policy configuration and state
# ---------------------------------------------------------------------------

_KINDS = ("med", "ts-spef", "ts-gaussian-ig", "ts-npts", "hnpts", "ts-classic",
          "uniform", "oracle")


@dataclass(frozen=True)
class PolicyConfig:
    """Everything a policy needs beyond the per-arm statistics."""

    kind: str
    divergence: Optional[DivergenceSpec] = None          # med
    a_sched: Union[str, Callable[[int], float], None] = None
    spef_kind: str = "bernoulli"                          # ts-spef / ts-classic
    var0: float = 1.0
    clip: Tuple[float, float] = (0.0, 1.0)                # ts-spef clipping range
    alpha: float = -1.0                                   # ts-gaussian-ig shape
    B: Optional[float] = None                             # ts-npts bonus
    moment: Optional[MomentSpec] = None                   # hnpts
    use_truncated_mean: bool = False
    oracle_arm: Optional[int] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if self.kind == "med" and self.divergence is None:
            raise ConfigError("med needs a DivergenceSpec")
        if self.kind == "ts-npts" and not (self.B and self.B > 0.0):
            raise ConfigError("ts-npts needs an upper bound B > 0")
        if self.kind == "hnpts" and self.moment is None:
            raise ConfigError("hnpts needs a MomentSpec")
        if self.kind == "ts-gaussian-ig" and not (self.alpha < 0.0):
            raise ConfigError("ts-gaussian-ig needs a shape parameter alpha < 0")

    def a_fn(self) -> Callable[[int], float]:
        if callable(self.a_sched):
            return self.a_sched
        if isinstance(self.a_sched, str):
            try:
                return _A_SCHEDULES[self.a_sched]
            except KeyError:
                raise ConfigError(f"unknown a_n schedule {self.a_sched!r}") from None
        if self.kind == "med" and self.divergence.family in (
                "bernoulli", "poisson", "gaussian-known", "gaussian"):
            return a_spef
        return a_zero

    def init_pulls(self) -> int:
        if self.kind == "ts-gaussian-ig":
            return max(2, 3 - math.ceil(2.0 * self.alpha))
        if self.kind == "med" and self.divergence.family == "gaussian":
            return 2  # the empirical Gaussian divergence needs a sample variance
        return 1

    @property
    def policy_id(self) -> str:
        if self.label:
            return self.label
        if self.kind == "med":
            return f"med-{self.divergence.family}"
        return self.kind


class PolicyState:
    """Per-arm statistics plus the policy configuration."""

    def __init__(self, config: PolicyConfig, n_arms: int):
        if n_arms < 1:
            raise ConfigError("need at least one arm")
        self.config = config
        self.arms = [ArmStats() for _ in range(n_arms)]
        self.total_steps = 0

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def update(self, arm: int, x: float) -> None:
        self.arms[arm].update(x)
        self.total_steps += 1

    def empirical_best(self) -> Tuple[float, List[int]]:
        """Best estimate and the indices of all arms attaining it."""
        truncated = self.config.use_truncated_mean
        ests = [a.estimate(truncated) for a in self.arms]
        mu_star = max(ests)
        return mu_star, [k for k, e in enumerate(ests) if e == mu_star]


@dataclass(frozen=True)
class SamplingDecision:
    candidate_set: Tuple[int, ...]
    chosen: int
    probabilities: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)


def _choose_uniform(candidates: Sequence[int], gen: np.random.Generator) -> int:
    if len(candidates) == 1:
        return candidates[0]
    return candidates[int(gen.random() * len(candidates)) % len(candidates)]


# ---------------------------------------------------------------------------
# MED
# ---------------------------------------------------------------------------


def exponential_weights(exponents: Sequence[float]) -> np.ndarray:
    """Normalized ``exp(-e_k)`` computed in log domain with min-subtraction.

    Adding a common constant to every exponent leaves the output unchanged,
    and infinite exponents map to exactly zero weight.
    """
    e = np.asarray(exponents, dtype=float)
    lo = np.min(e)
    w = np.exp(-(e - lo))
    w[np.isinf(e)] = 0.0
    total = w.sum()
    return w / total


def med_probabilities(D_vals: Sequence[float], counts: Sequence[int],
                      a_sched: Callable[[int], float]) -> np.ndarray:
    """Sampling probabilities ``p_k propto exp(-N_k D_k / (1 + a_{N_k}))``.

    At least one D must be zero (the empirical best arm); otherwise the caller
    computed D against the wrong threshold, which is a bug worth surfacing.
    """
    D = list(D_vals)
    N = list(counts)
    if len(D) != len(N) or not D:
        raise DomainError("D_vals and counts must be nonempty and aligned")
    if min(D) > 0.0:
        raise DomainError("no empirical best arm: every D value is positive")
    if any(d < 0.0 for d in D) or any(n < 1 for n in N):
        raise DomainError("D values must be nonnegative and counts >= 1")
    exps = [n * d / (1.0 + a_sched(n)) if math.isfinite(d) else math.inf
            for d, n in zip(D, N)]
    return exponential_weights(exps)


def _med_d_values(state: PolicyState, mu_star: float) -> List[float]:
    dspec = state.config.divergence
    fam = dspec.family
    truncated = state.config.use_truncated_mean
    out = []
    for a in state.arms:
        if a.estimate(truncated) >= mu_star:
            # empirically best arm: the divergence is zero by definition, and
            # using the same estimate avoids roundoff between mean paths
            out.append(0.0)
        elif fam in ("bernoulli", "poisson"):
            out.append(kl_spef(fam, a.mean, mu_star))
        elif fam == "gaussian-known":
            out.append(kl_spef("gaussian", a.mean, mu_star, var0=dspec.var0))
        elif fam == "maillard":
            gap = mu_star - a.mean
            out.append(0.5 * gap * gap if gap > 0.0 else 0.0)
        elif fam == "gaussian":
            var = a.variance(ddof=1)
            if var <= 0.0:
                out.append(0.0)
            else:
                rn = math.sqrt(a.n)
                gap2 = (mu_star - a.mean) ** 2
                ok = gap2 <= rn and var <= rn and mu_star > a.mean
                out.append(0.5 * math.log1p(gap2 / var) if ok else 0.0)
        elif fam == "bounded":
            support, cnt = a.aggregate()
            out.append(kinf_bounded_discrete(support, cnt / cnt.sum(), mu_star,
                                             dspec.B, dspec.tol).value)
        else:  # hmoment
            out.append(kinf_hmoment(a.to_empirical(), mu_star, dspec.moment,
                                    dspec.tol).value)
    return out


def med_step(state: PolicyState, gen: np.random.Generator) -> SamplingDecision:
    mu_star, _ = state.empirical_best()
    D = _med_d_values(state, mu_star)
    probs = med_probabilities(D, [a.n for a in state.arms], state.config.a_fn())
    u = gen.random()
    acc = 0.0
    chosen = state.n_arms - 1
    for k, p in enumerate(probs):
        acc += p
        if u < acc:
            chosen = k
            break
    return SamplingDecision(tuple(range(state.n_arms)), chosen, probabilities=probs,
                            diagnostics={"D": D, "mu_star": mu_star})


# ---------------------------------------------------------------------------
# Mean samplers
# ---------------------------------------------------------------------------


def _mean_of(F) -> float:
    return F.mean if hasattr(F, "mean") else float(F)


def sample_spef_conjugate(F, n: int, kind: str, clip: Tuple[float, float],
                          gen: np.random.Generator, *, var0: float = 1.0,
                          grid_points: int = 2048, size=None):
    """Posterior mean draw for a SPEF arm with a uniform prior on the clip range.

    The empirical mean is clipped into ``[clip[0], clip[1]]`` first.  Bernoulli
    uses the exact Beta(R+1, N-R+1) posterior; the Gaussian-known-variance and
    Poisson kinds draw by inverse CDF from ``exp(-n kl(mean, .))`` tabulated on
    a ``grid_points``-point grid over the clip range.
    """
    lo, hi = clip
    if not (lo < hi):
        raise DomainError("clip range must satisfy lo < hi")
    mean = min(max(_mean_of(F), lo), hi)
    if kind == "bernoulli":
        if not (0.0 <= lo and hi <= 1.0):
            raise DomainError("Bernoulli clip range must lie inside [0, 1]")
        a = n * mean + 1.0
        b = n * (1.0 - mean) + 1.0
        return gen.beta(a, b, size)
    if kind not in ("gaussian", "poisson"):
        raise DomainError(f"unknown SPEF kind {kind!r}")
    if kind == "poisson" and lo <= 0.0:
        raise DomainError("Poisson clip range must be positive")
    grid = np.linspace(lo, hi, grid_points)
    if kind == "gaussian":
        logw = -n * (grid - mean) ** 2 / (2.0 * var0)
    else:
        logw = -n * (grid - mean + mean * np.log(mean / grid)) if mean > 0 else -n * grid
    w = np.exp(logw - logw.max())
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (w[1:] + w[:-1]))))
    cdf /= cdf[-1]
    u = gen.random(size)
    return np.interp(u, cdf, grid) if size is not None else float(np.interp(u, cdf, grid))


def sample_gaussian_ig(mean: float, var: float, n: int, alpha: float,
                       gen: np.random.Generator, size=None):
    """Draw from the inverse-gamma-prior Gaussian posterior of the mean.

    The posterior density is proportional to
    ``(1 + (x - mean)^2 / var)^(-n/2 - alpha)``, which is the location-scale
    Student law ``mean + sqrt(var) T / sqrt(nu)`` with ``nu = n + 2 alpha - 1``
    degrees of freedom.
    """
    if var <= 0.0:
        raise DomainError("variance must be positive")
    nu = n + 2.0 * alpha - 1.0
    if nu <= 0.0 or n < max(2, 3 - math.ceil(2.0 * alpha)):
        raise DomainError("sample size too small for the inverse-gamma posterior")
    t = gen.standard_t(nu, size)
    return mean + math.sqrt(var) * t / math.sqrt(nu)


def gaussian_check(mean_k: float, best_mean: float, var_k: float, n_k: int) -> bool:
    """Force-add predicate of Gaussian TS: large gap or large deviation.

    True when ``(mean_k - best_mean)^2 >= sqrt(n_k)`` or the sample standard
    deviation reaches ``sqrt(n_k)``; such arms join the candidate set without
    a sampling step.
    """
    rn = math.sqrt(n_k)
    return (mean_k - best_mean) ** 2 >= rn or math.sqrt(max(var_k, 0.0)) >= rn


def _support_counts(F) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(F, EmpiricalDistribution):
        support, weights = F.aggregate()
        return support, weights * F.n
    if isinstance(F, ArmStats):
        return F.aggregate()
    support, counts = np.unique(np.asarray(F, dtype=float), return_counts=True)
    return support, counts.astype(float)


def sample_npts_bounded(F, B: float, gen: np.random.Generator, size=None):
    """Dirichlet re-weighted mean of the observations plus one bonus atom at B.

    Weights are uniform Dirichlet over the n+1 atoms, realized as normalized
    unit exponentials; repeated values are grouped, so a group's total weight
    is a single Gamma(count) draw.  When the support is contained in {0, B}
    the value reduces to B times a Beta marginal.
    """
    if isinstance(F, ArmStats) and len(F.counts) <= 2 and all(
            k == 0.0 or k == B for k in F.counts):
        c_hi = 1.0 + F.counts.get(B, 0)
        c_lo = F.counts.get(0.0, 0)
        if c_lo == 0:
            return float(B) if size is None else np.full(size, float(B))
        return B * gen.beta(c_hi, c_lo, size)
    support, counts = _support_counts(F)
    if support.max() > B + 1e-12:
        raise DomainError("an observation exceeds the bonus bound B")
    in_01 = all(v == 0.0 or v == B for v in support)
    if in_01:
        c_hi = 1.0 + sum(c for v, c in zip(support, counts) if v == B)
        c_lo = sum(c for v, c in zip(support, counts) if v == 0.0)
        if c_lo == 0.0:
            return float(B) if size is None else np.full(size, float(B))
        return B * gen.beta(c_hi, c_lo, size)
    g = gen.gamma(shape=counts, size=None if size is None else (size, counts.size))
    gb = gen.standard_exponential(size)
    num = g @ support + gb * B
    den = g.sum(axis=-1) + gb
    return num / den if size is not None else float(num / den)


# ---------------------------------------------------------------------------
# h-NPTS
# ---------------------------------------------------------------------------


def _hnpts_threshold_ok(S, Q, v, mu_star: float, spec: MomentSpec):
    """Closed-form acceptance from the sufficient statistics of the weights.

    ``S = sum_i w_i (mu_star - X_i)``, ``Q = sum_i w_i (B - Z_i)`` and ``v``
    is the bonus weight; only ratios enter, so unnormalized weights work too.
    In centered mode the comparison is ``h((S/v)^+) <= B + gamma + Q/v``; the
    uncentered equivalence places the bonus at ``max(mu_star + (S/v)^+, 0)``.
    """
    lhs_arg = np.maximum(S, 0.0) / v
    if not spec.centered:
        lhs_arg = np.maximum(mu_star + lhs_arg, 0.0)
    return np.asarray(spec.h(lhs_arg)) <= spec.B + spec.gamma + Q / v


def hnpts_check(w, X, mu_star: float, spec: MomentSpec) -> bool:
    """Closed-form h-NPTS acceptance for explicit weights over n+1 atoms.

    ``w`` holds n observation weights plus the bonus weight in the last
    coordinate; equivalent to the existence of an exploration bonus
    ``x >= mu_star`` making the re-weighted distribution a family member
    with mean at least ``mu_star``.
    """
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    if w.size != X.size + 1:
        raise DomainError("need exactly one more weight than observations")
    v = float(w[-1])
    if v <= 0.0:
        raise DegenerateWeight("bonus weight must be strictly positive")
    center = mu_star if spec.centered else 0.0
    z = np.asarray(spec.h(np.abs(X - center)), dtype=float)
    S = float(w[:-1] @ (mu_star - X))
    Q = float(w[:-1] @ (spec.B - z))
    return bool(_hnpts_threshold_ok(S, Q, v, mu_star, spec))


def _hnpts_accept_grouped(stats: ArmStats, mu_star: float, spec: MomentSpec,
                          gen: np.random.Generator) -> bool:
    support, counts = stats.aggregate()
    center = mu_star if spec.centered else 0.0
    z = np.asarray(spec.h(np.abs(support - center)), dtype=float)
    g = gen.gamma(shape=counts)
    v = gen.standard_exponential()
    S = float(g @ (mu_star - support))
    Q = float(g @ (spec.B - z))
    return bool(_hnpts_threshold_ok(S, Q, v, mu_star, spec))


def _in_family(stats: ArmStats, spec: MomentSpec) -> bool:
    support, counts = stats.aggregate()
    if spec.centered:
        m = float(counts @ np.asarray(spec.h(np.abs(support - stats.mean)), dtype=float))
        return (m / stats.n < spec.B) and (stats.mean >= spec.mu_minus)
    m = float(counts @ np.asarray(spec.h(np.abs(support)), dtype=float))
    return m / stats.n < spec.B


def hnpts_step(state: PolicyState, gen: np.random.Generator) -> SamplingDecision:
    """One h-NPTS decision: family check, Dirichlet draw, closed-form test."""
    spec = state.config.moment
    mu_star, best = state.empirical_best()
    candidates = list(best)
    accepted = {}
    for k, stats in enumerate(state.arms):
        if k in best:
            continue
        if not _in_family(stats, spec):
            candidates.append(k)
            accepted[k] = "not-in-family"
        elif _hnpts_accept_grouped(stats, mu_star, spec, gen):
            candidates.append(k)
            accepted[k] = "check-passed"
    candidates.sort()
    chosen = _choose_uniform(candidates, gen)
    return SamplingDecision(tuple(candidates), chosen,
                            diagnostics={"mu_star": mu_star, "accepted": accepted})


# ---------------------------------------------------------------------------
# TS-dagger skeleton and the dispatcher
# ---------------------------------------------------------------------------


def ts_dagger_step(state: PolicyState, sampler: Callable[[ArmStats, np.random.Generator], float],
                   gen: np.random.Generator,
                   force_add: Optional[Callable[[ArmStats, float], bool]] = None
                   ) -> SamplingDecision:
    """Generic TS-dagger decision around a mean-sampler contract.

    The candidate set always contains every empirically best arm; a
    suboptimal arm joins when its sampled mean reaches the best empirical
    mean (or when the optional ``force_add`` predicate fires, in which case
    no sample is drawn for it).  The pull is uniform over the candidates.
    """
    mu_star, best = state.empirical_best()
    candidates = list(best)
    sampled = {}
    for k, stats in enumerate(state.arms):
        if k in best:
            continue
        if force_add is not None and force_add(stats, mu_star):
            candidates.append(k)
            sampled[k] = math.inf
            continue
        mu_tilde = sampler(stats, gen)
        sampled[k] = mu_tilde
        if mu_tilde >= mu_star:
            candidates.append(k)
    candidates.sort()
    chosen = _choose_uniform(candidates, gen)
    return SamplingDecision(tuple(candidates), chosen,
                            diagnostics={"mu_star": mu_star, "sampled": sampled})


def _make_sampler(config: PolicyConfig) -> Callable[[ArmStats, np.random.Generator], float]:
    if config.kind == "ts-spef":
        def sampler(stats: ArmStats, gen):
            return float(sample_spef_conjugate(stats.mean, stats.n, config.spef_kind,
                                               config.clip, gen, var0=config.var0))
        return sampler
    if config.kind == "ts-gaussian-ig":
        def sampler(stats: ArmStats, gen):
            return float(sample_gaussian_ig(stats.mean, stats.variance(ddof=1), stats.n,
                                            config.alpha, gen))
        return sampler
    if config.kind == "ts-npts":
        def sampler(stats: ArmStats, gen):
            return float(sample_npts_bounded(stats, config.B, gen))
        return sampler
    raise ConfigError(f"no mean sampler for policy kind {config.kind!r}")


def policy_step(state: PolicyState, gen: np.random.Generator) -> SamplingDecision:
    """Uniform dispatcher used by the simulator; never mutates the state."""
    kind = state.config.kind
    if state.n_arms == 1:
        return SamplingDecision((0,), 0)
    if kind == "med":
        return med_step(state, gen)
    if kind == "hnpts":
        return hnpts_step(state, gen)
    if kind in ("ts-spef", "ts-npts"):
        return ts_dagger_step(state, _make_sampler(state.config), gen)
    if kind == "ts-gaussian-ig":
        def force(stats: ArmStats, mu_star: float) -> bool:
            return gaussian_check(stats.mean, mu_star, stats.variance(ddof=1), stats.n)
        return ts_dagger_step(state, _make_sampler(state.config), gen, force_add=force)
    if kind == "ts-classic":
        # index-policy baseline: sample every arm, pull the argmax
        best = 0
        best_val = -math.inf
        sampled = {}
        for k, stats in enumerate(state.arms):
            val = float(sample_spef_conjugate(stats.mean, stats.n, state.config.spef_kind,
                                              state.config.clip, gen, var0=state.config.var0))
            sampled[k] = val
            if val > best_val:
                best, best_val = k, val
        return SamplingDecision((best,), best, diagnostics={"sampled": sampled})
    if kind == "uniform":
        return SamplingDecision(tuple(range(state.n_arms)),
                                int(gen.random() * state.n_arms) % state.n_arms)
    if kind == "oracle":
        if state.config.oracle_arm is None:
            raise ConfigError("oracle policy was never told the best arm")
        return SamplingDecision((state.config.oracle_arm,), state.config.oracle_arm)
    raise ConfigError(f"unknown policy kind {kind!r}")
