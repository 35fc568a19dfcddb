"""Self-contained property suites behind the `verify` CLI subcommand.

Each suite replays one of the package's numeric guarantees on freshly drawn
random instances and reports (passed, total).  The existence-form search used
by the check-equivalence suite is deliberately independent of the closed-form
implementation it validates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from .bcp import (chernoff_joint_upper, exact_dirichlet_exceedance, mc_bcp_joint,
                  simple_truncation_lower)
from .core import EmpiricalDistribution, MomentSpec, RngStream
from .policies import a_zero, exponential_weights, hnpts_check, med_probabilities

__all__ = ["SuiteResult", "run_suites", "available_suites", "existence_form_check"]


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: int
    total: int
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.passed == self.total


def existence_form_check(w, X, mu_star: float, spec: MomentSpec,
                         refine: float = 1e-6) -> bool:
    """Decide by search whether some bonus x >= mu_star satisfies both constraints.

    The constraint violation, as a function of x on [mu_star, hi], is a
    maximum of a decreasing function (mean shortfall) and a V-shaped one
    (bonus moment), hence quasi-convex; zooming on the violation minimizer
    down to the requested refinement therefore decides feasibility globally.
    """
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    v = float(w[-1])
    z = np.asarray(spec.h(np.abs(X - mu_star) if spec.centered else np.abs(X)), dtype=float)
    mom_base = float(w[:-1] @ z)
    mean_base = float(w[:-1] @ X)

    def violation(xs: np.ndarray) -> np.ndarray:
        zx = np.abs(xs - mu_star) if spec.centered else np.abs(xs)
        mom = mom_base + v * (np.asarray(spec.h(zx), dtype=float) - spec.gamma) - spec.B
        mean_gap = mu_star - (mean_base + v * xs)
        return np.maximum(mean_gap, np.maximum(mom, 0.0))

    room = (spec.B - mom_base) / v + spec.gamma
    if room < 0.0:
        return False  # no bonus can satisfy the moment constraint
    center = mu_star if spec.centered else 0.0
    hi = center + float(spec.h_inv(room)) + 1e-12
    lo = mu_star
    if hi <= lo:
        hi = lo + max(abs(lo), 1.0) * 1e-9  # degenerate window: test x ~= mu_star only
    width = hi - lo
    while True:
        xs = np.linspace(lo, lo + width, 4001)
        viol = violation(xs)
        best = int(np.argmin(viol))
        if viol[best] <= 0.0:
            return True
        cell = width / 4000.0
        if cell <= refine:
            return False
        lo = max(mu_star, float(xs[best]) - cell)
        width = 2.0 * cell


def _random_check_instance(gen: np.random.Generator):
    n = int(gen.integers(1, 12))
    X = gen.normal(0.0, 1.0, n) * gen.uniform(0.5, 2.0)
    w = gen.dirichlet(np.ones(n + 1))
    if w[-1] < 1e-9:
        w = np.full(n + 1, 1.0 / (n + 1))
    mu_star = float(gen.uniform(-1.0, 1.5))
    p = float(gen.uniform(1.5, 3.0))
    spec = MomentSpec.power(p, float(gen.uniform(0.3, 3.0)),
                            centered=bool(gen.integers(0, 2)),
                            gamma=float(gen.uniform(0.0, 0.3)))
    return w, X, mu_star, spec


def suite_check_equivalence(seed: int, trials: int = 1000) -> SuiteResult:
    gen = RngStream(seed).derive(purpose="verify-equiv").generator()
    passed = 0
    for _ in range(trials):
        w, X, mu_star, spec = _random_check_instance(gen)
        if hnpts_check(w, X, mu_star, spec) == existence_form_check(w, X, mu_star, spec):
            passed += 1
    return SuiteResult("check-equivalence", passed, trials)


def suite_dirichlet_exact(seed: int, trials: int = 5, m: int = 200_000) -> SuiteResult:
    stream = RngStream(seed)
    gen = stream.derive(purpose="verify-dirichlet").generator()
    vacuous = MomentSpec.power(2.0, 1e12, centered=True)
    passed = 0
    for i in range(trials):
        k = int(gen.integers(3, 8))
        X = np.sort(gen.uniform(0.0, 1.0, k))
        while np.min(np.diff(X)) <= 1e-6:
            X = np.sort(gen.uniform(0.0, 1.0, k))
        mu = float(gen.uniform(X.min(), X.max()))
        p = exact_dirichlet_exceedance(X, mu)
        est = mc_bcp_joint(X[:-1], mu, vacuous, m,
                           stream.derive(replication=i, purpose="vd"), bonus=float(X[-1]))
        if abs(est.p_hat - p) <= 4.0 * math.sqrt(max(p * (1 - p), 1e-12) / m):
            passed += 1
    return SuiteResult("dirichlet-exact-vs-mc", passed, trials)


def suite_chernoff_dominance(seed: int, trials: int = 12, m: int = 50_000) -> SuiteResult:
    stream = RngStream(seed)
    gen = stream.derive(purpose="verify-chernoff").generator()
    passed = 0
    for i in range(trials):
        n = int(gen.integers(5, 40))
        X = gen.uniform(-1.0, 1.0, n)
        spec = MomentSpec.power(2.0, float(gen.uniform(1.0, 3.0)), centered=False)
        F = EmpiricalDistribution(X)
        mu = float(F.mean + gen.uniform(0.05, 0.5))
        bound = chernoff_joint_upper(F, mu, spec)
        est = mc_bcp_joint(X, mu, spec, m, stream.derive(replication=i, purpose="vc"),
                           bonus="none")
        if est.p_hat <= bound + 4.0 * est.ci_half_width:
            passed += 1
    return SuiteResult("chernoff-dominance", passed, trials)


def suite_truncation_dominance(seed: int, trials: int = 50) -> SuiteResult:
    gen = RngStream(seed).derive(purpose="verify-trunc").generator()
    passed = 0
    for _ in range(trials):
        n = int(gen.integers(2, 7))
        X = np.sort(gen.uniform(0.0, 1.0, n))
        while np.min(np.diff(X)) <= 1e-6:
            X = np.sort(gen.uniform(0.0, 1.0, n))
        mu = float(gen.uniform(X.max() + 0.01, X.max() + 0.5))
        x_extra = mu + float(gen.uniform(0.05, 1.0))
        lower = simple_truncation_lower(X, x_extra, mu)
        exact = exact_dirichlet_exceedance(np.append(X, x_extra), mu)
        if lower <= exact + 1e-12:
            passed += 1
    return SuiteResult("truncation-dominance", passed, trials)


def suite_med_invariance(seed: int, trials: int = 200) -> SuiteResult:
    gen = RngStream(seed).derive(purpose="verify-med").generator()
    passed = 0
    for _ in range(trials):
        k = int(gen.integers(2, 8))
        exps = gen.uniform(0.0, 8.0, k)
        shift = float(gen.uniform(-5.0, 5.0))
        a = exponential_weights(exps)
        b = exponential_weights(exps + shift)
        ok = bool(np.max(np.abs(a - b)) < 1e-12)
        D = np.append(gen.uniform(0.1, 2.0, k - 1), 0.0)
        N = gen.integers(1, 50, k)
        probs = med_probabilities(D, N, a_zero)
        ok = ok and abs(float(probs.sum()) - 1.0) < 1e-12 and bool(np.all(probs >= 0))
        passed += int(ok)
    return SuiteResult("med-invariance", passed, trials)


def suite_reproducibility(seed: int) -> SuiteResult:
    spec = MomentSpec.power(2.0, 1.0, centered=True, gamma=0.05)
    X = np.zeros(30)
    a = mc_bcp_joint(X, 0.5, spec, 20_000, RngStream(seed))
    b = mc_bcp_joint(X, 0.5, spec, 20_000, RngStream(seed))
    return SuiteResult("reproducibility", int(a == b), 1)


_SUITES: Dict[str, Callable[[int], SuiteResult]] = {
    "check-equivalence": suite_check_equivalence,
    "dirichlet-exact-vs-mc": suite_dirichlet_exact,
    "chernoff-dominance": suite_chernoff_dominance,
    "truncation-dominance": suite_truncation_dominance,
    "med-invariance": suite_med_invariance,
    "reproducibility": suite_reproducibility,
}


def available_suites() -> List[str]:
    return list(_SUITES)


def run_suites(names: List[str], seed: int) -> List[SuiteResult]:
    out = []
    for name in names:
        if name not in _SUITES:
            raise KeyError(name)
        out.append(_SUITES[name](seed))
    return out
