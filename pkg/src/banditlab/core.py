"""Observation containers, moment specifications, arm models and RNG streams.

Everything in this module is immutable after construction and safe to share
across threads.  Randomness is counter-based (Philox): a generator is a pure
function of ``(seed, replication, step, purpose)``, so parallel consumers can
derive independent streams without coordination.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DomainError, EmptySample

__all__ = [
    "EmpiricalDistribution",
    "empirical_from_samples",
    "MomentSpec",
    "empirical_moment",
    "family_membership",
    "truncated_mean",
    "ArmModel",
    "BernoulliArm",
    "GaussianKnownVarArm",
    "GaussianArm",
    "PoissonArm",
    "BoundedDiscreteArm",
    "HeavyTailArm",
    "draw_reward",
    "RngStream",
]


# ---------------------------------------------------------------------------
# Empirical distributions
# ---------------------------------------------------------------------------


class EmpiricalDistribution:
    """A multiset of real observations with cached summary functionals.

    Observations are kept in insertion order; a sorted view and a
    (support, weights) aggregation of repeated values are computed lazily and
    cached.  Instances are immutable: derive new ones with :meth:`shifted`.
    """

    __slots__ = ("_values", "_mean", "_sorted", "_support", "_weights")

    def __init__(self, values: Sequence[float]):
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise EmptySample("an empirical distribution needs at least one observation")
        if not np.all(np.isfinite(arr)):
            raise DomainError("observations must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        self._values = arr
        self._mean = float(arr.mean())
        self._sorted: Optional[np.ndarray] = None
        self._support: Optional[np.ndarray] = None
        self._weights: Optional[np.ndarray] = None

    @property
    def observations(self) -> np.ndarray:
        return self._values

    @property
    def n(self) -> int:
        return int(self._values.size)

    @property
    def mean(self) -> float:
        return self._mean

    def sorted_values(self) -> np.ndarray:
        if self._sorted is None:
            s = np.sort(self._values)
            s.flags.writeable = False
            self._sorted = s
        return self._sorted

    def aggregate(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct support points and their empirical weights (sum to 1)."""
        if self._support is None:
            support, counts = np.unique(self._values, return_counts=True)
            weights = counts / self.n
            support.flags.writeable = False
            weights.flags.writeable = False
            self._support = support
            self._weights = weights
        return self._support, self._weights

    def variance(self, ddof: int = 0) -> float:
        if self.n <= ddof:
            raise DomainError(f"variance with ddof={ddof} needs more than {ddof} observations")
        return float(self._values.var(ddof=ddof))

    def shifted(self, offset: float) -> "EmpiricalDistribution":
        return EmpiricalDistribution(self._values + offset)

    def __len__(self) -> int:  # pragma: no cover - convenience
        return self.n

    def __repr__(self) -> str:  # pragma: no cover - convenience
        return f"EmpiricalDistribution(n={self.n}, mean={self._mean:.6g})"


def empirical_from_samples(xs: Sequence[float]) -> EmpiricalDistribution:
    """Wrap raw observations; raises :class:`EmptySample` on empty input."""
    return EmpiricalDistribution(xs)


def truncated_mean(xs: Sequence[float], u: float) -> float:
    """Mean of the observations with every ``|x| > u`` zeroed out.

    The robust estimator used for heavy-tailed arms: ``(1/n) sum x_i 1(|x_i| <= u)``.
    """
    arr = np.asarray(xs, dtype=float)
    if arr.size == 0:
        raise EmptySample("truncated_mean needs at least one observation")
    if u < 0:
        raise DomainError("truncation level must be nonnegative")
    return float(np.where(np.abs(arr) <= u, arr, 0.0).mean())


# ---------------------------------------------------------------------------
# Moment specifications
# ---------------------------------------------------------------------------


def _power_h(p: float, x):
    return np.abs(x) ** p


def _power_hprime(p: float, x):
    return p * np.abs(x) ** (p - 1.0)


def _power_hinv(p: float, y):
    return np.asarray(y) ** (1.0 / p) if np.ndim(y) else y ** (1.0 / p)


def _power_hprime_inv(p: float, s):
    # h'(x) = p x^(p-1) on x >= 0; inverse is (s/p)^(1/(p-1)).
    return (s / p) ** (1.0 / (p - 1.0))


def _subgauss_h(s: float, x):
    return np.expm1(np.square(x) / s)


def _subgauss_hprime(s: float, x):
    return (2.0 * np.abs(x) / s) * np.exp(np.square(x) / s)


def _subgauss_hinv(s: float, y):
    return np.sqrt(s * np.log1p(y))


_PROBE_GRID = np.geomspace(1e-3, 1e3, 256)
_TAIL_GRID = _PROBE_GRID[-64:]


@dataclass(frozen=True)
class MomentSpec:
    """Description of an h-moment family: moment bound B on a convex h.

    ``h`` must be convex and superlinear on the positive axis with ``h(0)=0``;
    these properties are spot-checked numerically on a fixed log-spaced grid at
    construction (the declared margin ``eta`` controls the superlinearity
    probe).  ``centered`` selects the condition ``E h(|X - mean|) < B`` with a
    known mean floor ``mu_minus``; otherwise ``E h(|X|) < B``.  ``gamma`` is
    the exploration-bonus slack used by the h-NPTS acceptance check.
    """

    h: Callable[[np.ndarray], np.ndarray]
    h_prime: Callable[[np.ndarray], np.ndarray]
    h_inv: Callable[[float], float]
    B: float
    centered: bool = True
    gamma: float = 0.0
    mu_minus: float = -math.inf
    eta: float = 0.5
    h_prime_inv: Optional[Callable[[float], float]] = None
    name: str = "custom"
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        if not (self.B > 0.0):
            raise DomainError("moment bound B must be positive")
        if self.gamma < 0.0:
            raise DomainError("gamma must be nonnegative")
        if not (self.eta > 0.0):
            raise DomainError("declared superlinearity margin eta must be positive")
        if self.validate:
            self._numeric_checks()

    @np.errstate(over="ignore", invalid="ignore")
    def _numeric_checks(self) -> None:
        h0 = float(self.h(0.0))
        if abs(h0) > 1e-12:
            raise DomainError(f"h(0) must be 0, got {h0!r}")
        vals = np.asarray(self.h(_PROBE_GRID), dtype=float)
        if np.any(vals < -1e-12):
            raise DomainError("h must be nonnegative on the probe grid")
        if np.any(np.diff(vals) < -1e-12):
            raise DomainError("h must be nondecreasing on the probe grid")
        # superlinearity: h(x) / x^(1+eta) increasing on the tail grid
        with np.errstate(over="ignore"):
            tail = np.asarray(self.h(_TAIL_GRID), dtype=float) / _TAIL_GRID ** (1.0 + self.eta)
        finite = np.isfinite(tail)
        if np.any(np.diff(tail[finite]) <= 0):
            raise DomainError("h(x)/x^(1+eta) must be increasing on the tail grid")
        # round trip of the declared inverse
        probe = _PROBE_GRID[(vals > 0) & np.isfinite(vals)]
        hv = np.asarray(self.h(probe), dtype=float)
        back = np.asarray([self.h_inv(float(y)) for y in hv])
        rel = np.abs(back - probe) / np.maximum(np.abs(probe), 1.0)
        if np.any(rel > 1e-9):
            raise DomainError("h_inv(h(x)) deviates from x beyond 1e-9 on the probe grid")

    # -- presets ----------------------------------------------------------

    @staticmethod
    def power(p: float, B: float, *, centered: bool = True, gamma: float = 0.0,
              mu_minus: float = -math.inf) -> "MomentSpec":
        """h(x) = x**p with p > 1 (e.g. p=2 bounds the variance)."""
        if not (p > 1.0):
            raise DomainError("power preset needs p > 1")
        return MomentSpec(
            h=partial(_power_h, p),
            h_prime=partial(_power_hprime, p),
            h_inv=partial(_power_hinv, p),
            h_prime_inv=partial(_power_hprime_inv, p),
            B=B,
            centered=centered,
            gamma=gamma,
            mu_minus=mu_minus,
            eta=(p - 1.0) / 2.0,
            name=f"power({p:g})",
        )

    @staticmethod
    def subgauss(s: float, B: float = 1.0, *, centered: bool = True, gamma: float = 0.0,
                 mu_minus: float = -math.inf) -> "MomentSpec":
        """h(x) = exp(x^2/s) - 1, shifted so h(0)=0.

        With s = 8*sigma^2 every sigma-sub-Gaussian law satisfies the centered
        condition with B = 1, which is the default calibration.
        """
        if not (s > 0.0):
            raise DomainError("subgauss preset needs s > 0")
        return MomentSpec(
            h=partial(_subgauss_h, s),
            h_prime=partial(_subgauss_hprime, s),
            h_inv=partial(_subgauss_hinv, s),
            B=B,
            centered=centered,
            gamma=gamma,
            mu_minus=mu_minus,
            eta=1.0,
            name=f"subgauss({s:g})",
        )

    def with_gamma(self, gamma: float) -> "MomentSpec":
        return replace(self, gamma=gamma, validate=False)

    def as_uncentered(self) -> "MomentSpec":
        return self if not self.centered else replace(self, centered=False, validate=False)


def empirical_moment(F: EmpiricalDistribution, spec: MomentSpec, center: float) -> float:
    """``(1/n) sum h(|X_i - center|)``; pass center=0 for the uncentered moment."""
    vals = np.asarray(spec.h(np.abs(F.observations - center)), dtype=float)
    return float(vals.mean())


def family_membership(F: EmpiricalDistribution, spec: MomentSpec) -> bool:
    """Strict empirical membership check of F in the h-moment family.

    Centered mode requires ``(1/n) sum h(|X_i - mean|) < B`` and
    ``mean >= mu_minus``; uncentered mode requires ``(1/n) sum h(|X_i|) < B``.
    """
    if spec.centered:
        return (empirical_moment(F, spec, F.mean) < spec.B) and (F.mean >= spec.mu_minus)
    return empirical_moment(F, spec, 0.0) < spec.B


# ---------------------------------------------------------------------------
# Arm models
# ---------------------------------------------------------------------------


class ArmModel:
    """Base reward model; subclasses define the law and its analytic mean."""

    true_mean: float
    #: smallest b with support contained in (-inf, b], or None if unbounded
    support_upper: Optional[float] = None

    def sample(self, gen: np.random.Generator, size=None):
        raise NotImplementedError

    def spef_kind(self) -> Optional[str]:
        """SPEF family this arm belongs to, if any (for closed-form kl)."""
        return None


@dataclass(frozen=True)
class BernoulliArm(ArmModel):
    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise DomainError("Bernoulli parameter must lie in [0, 1]")
        object.__setattr__(self, "true_mean", self.p)
        object.__setattr__(self, "support_upper", 1.0)

    def sample(self, gen, size=None):
        if size is None:
            return 1.0 if gen.random() < self.p else 0.0
        return (gen.random(size) < self.p).astype(float)

    def spef_kind(self):
        return "bernoulli"


@dataclass(frozen=True)
class GaussianKnownVarArm(ArmModel):
    mu: float
    var0: float

    def __post_init__(self):
        if not (self.var0 > 0.0):
            raise DomainError("known variance must be positive")
        object.__setattr__(self, "true_mean", self.mu)

    def sample(self, gen, size=None):
        return self.mu + math.sqrt(self.var0) * gen.standard_normal(size)

    def spef_kind(self):
        return "gaussian"


@dataclass(frozen=True)
class GaussianArm(ArmModel):
    mu: float
    var: float

    def __post_init__(self):
        if not (self.var > 0.0):
            raise DomainError("variance must be positive")
        object.__setattr__(self, "true_mean", self.mu)

    def sample(self, gen, size=None):
        return self.mu + math.sqrt(self.var) * gen.standard_normal(size)


@dataclass(frozen=True)
class PoissonArm(ArmModel):
    lam: float

    def __post_init__(self):
        if not (self.lam >= 0.0):
            raise DomainError("Poisson rate must be nonnegative")
        object.__setattr__(self, "true_mean", self.lam)

    def sample(self, gen, size=None):
        out = gen.poisson(self.lam, size)
        return float(out) if size is None else out.astype(float)

    def spef_kind(self):
        return "poisson"


@dataclass(frozen=True)
class BoundedDiscreteArm(ArmModel):
    support: tuple
    probs: tuple
    B: float

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=float)
        pr = np.asarray(self.probs, dtype=float)
        if sup.size == 0 or sup.size != pr.size:
            raise DomainError("support and probs must be nonempty and of equal length")
        if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-9:
            raise DomainError("probs must form a probability vector")
        if np.any(sup < 0.0) or np.any(sup > self.B):
            raise DomainError("support must lie in [0, B]")
        object.__setattr__(self, "support", tuple(float(v) for v in sup))
        object.__setattr__(self, "probs", tuple(float(v) for v in pr))
        object.__setattr__(self, "true_mean", float(sup @ pr))
        object.__setattr__(self, "support_upper", float(self.B))

    def sample(self, gen, size=None):
        sup = np.asarray(self.support)
        idx = gen.choice(sup.size, size=size, p=np.asarray(self.probs))
        return float(sup[idx]) if size is None else sup[idx]


@dataclass(frozen=True)
class HeavyTailArm(ArmModel):
    """Shifted Pareto rewards: mu + scale*(P - E[P]) with P ~ Pareto(shape).

    Absolute centered moments of order m are finite exactly for m < shape, so
    declaring an h-moment family with exponent m needs shape > 2m (plus slack)
    to keep the extra integrability condition satisfied by construction.
    """

    mu: float
    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 1.0):
            raise DomainError("Pareto shape must exceed 1 for a finite mean")
        if not (self.scale > 0.0):
            raise DomainError("scale must be positive")
        object.__setattr__(self, "true_mean", self.mu)

    def _pareto_mean(self) -> float:
        return self.shape / (self.shape - 1.0)

    def sample(self, gen, size=None):
        # gen.pareto returns P - 1 for the unit-minimum Pareto(shape)
        p = gen.pareto(self.shape, size) + 1.0
        return self.mu + self.scale * (p - self._pareto_mean())

    def centered_abs_moment(self, m: float, grid: int = 200_001) -> float:
        """E|X - mu|^m by quadrature over the Pareto density (m < shape).

        Substituting w = 1/p turns the tail integral into
        a * int_0^1 w^(a-m-1) |1 - pm w|^m dw, which has no singularity for
        m < a, so a dense trapezoid rule is accurate.
        """
        if m >= self.shape:
            raise DomainError("moment order must be below the Pareto shape")
        a = self.shape
        pm = self._pareto_mean()
        w = np.linspace(0.0, 1.0, grid)
        vals = w ** (a - m - 1.0) * np.abs(1.0 - pm * w) ** m
        if a - m - 1.0 < 0.0:
            vals[0] = 0.0  # endpoint excluded; integrable singularity
            w = w[1:]
            vals = vals[1:]
        return float(self.scale ** m * a * np.trapezoid(vals, w))


def draw_reward(arm: ArmModel, rng: Union["RngStream", np.random.Generator], size=None):
    """Draw from the arm's law; accepts a generator or a derived stream."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return arm.sample(gen, size)


# ---------------------------------------------------------------------------
# Deterministic randomness
# ---------------------------------------------------------------------------


def _purpose_id(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf8"))


_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream: pure function of (seed, stream id).

    ``derive`` fixes the (replication, step, purpose) triple;  ``generator``
    returns a fresh numpy Generator whose draw sequence depends only on the
    seed and the triple, never on call order or parallel scheduling.  The
    triple is hashed into the Philox *key* (not the counter), so distinct
    stream ids select statistically independent streams rather than offsets
    of a single sequence.
    """

    seed: int
    replication: int = 0
    step: int = 0
    purpose: str = "root"

    def derive(self, *, replication: Optional[int] = None, step: Optional[int] = None,
               purpose: Optional[str] = None) -> "RngStream":
        return RngStream(
            seed=self.seed,
            replication=self.replication if replication is None else int(replication),
            step=self.step if step is None else int(step),
            purpose=self.purpose if purpose is None else purpose,
        )

    def generator(self) -> np.random.Generator:
        h = _splitmix64(self.seed & _MASK64)
        for part in (self.replication, self.step, _purpose_id(self.purpose)):
            h = _splitmix64(h ^ ((part & _MASK64) * _GOLDEN & _MASK64))
        key = np.array([np.uint64(self.seed & _MASK64), np.uint64(h)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))
