"""Bandit environment, episode runner, replications, and regret accounting.

Pseudo-regret (gap-weighted pull counts) is recorded rather than realized
reward regret; checkpoints live on a geometric time grid so traces stay
O(log T).  Replications are embarrassingly parallel: every episode derives
its own counter-based generator from (base_seed, replication), and
aggregation runs in fixed replication order, so results are byte-identical
regardless of scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import (ArmModel, BernoulliArm, BoundedDiscreteArm, GaussianArm,
                   GaussianKnownVarArm, PoissonArm, RngStream)
from .divergence import (DivergenceSpec, _dual_max, kinf_bounded_discrete,
                         kinf_gaussian, kl_spef)
from .errors import ConfigError, DomainError
from .policies import PolicyConfig, PolicyState, policy_step

__all__ = [
    "BanditEnv",
    "RegretTrace",
    "AggregatedStats",
    "checkpoint_grid",
    "run_episode",
    "run_replications",
    "lower_bound_reference",
    "default_workers",
]


@dataclass(frozen=True)
class BanditEnv:
    """A fixed set of arms with derived gap information."""

    arms: Tuple[ArmModel, ...]

    def __post_init__(self):
        if not self.arms:
            raise ConfigError("environment needs at least one arm")
        object.__setattr__(self, "arms", tuple(self.arms))

    @property
    def mu_star(self) -> float:
        return max(a.true_mean for a in self.arms)

    @property
    def gaps(self) -> Tuple[float, ...]:
        m = self.mu_star
        return tuple(m - a.true_mean for a in self.arms)

    @property
    def best_arm(self) -> int:
        return max(range(len(self.arms)), key=lambda k: self.arms[k].true_mean)


@dataclass(frozen=True)
class RegretTrace:
    """Checkpointed pseudo-regret and pull counts for one replication."""

    policy_id: str
    seed: int
    replication: int
    T: int
    checkpoints: Tuple[Tuple[int, float, Tuple[int, ...]], ...]


@dataclass(frozen=True)
class AggregatedStats:
    policy_id: str
    T: int
    R: int
    base_seed: int
    ts: Tuple[int, ...]
    regret_mean: np.ndarray
    regret_stderr: np.ndarray
    pulls_mean: np.ndarray      # shape (len(ts), K)
    final_regrets: np.ndarray   # shape (R,)
    final_pulls: np.ndarray     # shape (R, K)


def checkpoint_grid(T: int) -> Tuple[int, ...]:
    """Geometric grid {ceil(1.5^j)} united with {T}, clipped to [1, T]."""
    pts = set()
    v = 1.0
    while True:
        t = math.ceil(v)
        if t > T:
            break
        pts.add(t)
        v *= 1.5
    pts.add(T)
    return tuple(sorted(pts))


def _check_compat(env: BanditEnv, config: PolicyConfig) -> None:
    kind = config.kind
    arms = env.arms
    if kind == "ts-npts":
        for a in arms:
            if a.support_upper is None or a.support_upper > config.B + 1e-12:
                raise ConfigError("ts-npts needs every arm bounded above by B")
    if kind == "ts-spef":
        want = {"bernoulli": BernoulliArm, "poisson": PoissonArm}.get(config.spef_kind)
        if want is not None and not all(isinstance(a, want) for a in arms):
            raise ConfigError(f"ts-spef({config.spef_kind}) needs matching arm models")
    if kind == "ts-gaussian-ig":
        if not all(isinstance(a, (GaussianArm, GaussianKnownVarArm)) for a in arms):
            raise ConfigError("ts-gaussian-ig is defined for Gaussian arms")
    if kind == "med":
        fam = config.divergence.family
        if fam == "bernoulli" and not all(isinstance(a, BernoulliArm) for a in arms):
            raise ConfigError("med with Bernoulli kl needs Bernoulli arms")
        if fam == "poisson" and not all(isinstance(a, PoissonArm) for a in arms):
            raise ConfigError("med with Poisson kl needs Poisson arms")
        if fam == "bounded":
            for a in arms:
                if a.support_upper is None or a.support_upper > config.divergence.B + 1e-12:
                    raise ConfigError("med-bounded needs every arm bounded above by B")


def run_episode(env: BanditEnv, config: PolicyConfig, T: int, seed: int,
                replication: int = 0) -> RegretTrace:
    """Play one episode of T steps and checkpoint the pseudo-regret."""
    if config.kind == "oracle" and config.oracle_arm is None:
        config = replace(config, oracle_arm=env.best_arm)
    _check_compat(env, config)
    K = len(env.arms)
    init = config.init_pulls()
    if T < K * init:
        raise ConfigError(f"horizon {T} cannot cover {init} initial pulls of {K} arms")
    gen = RngStream(seed).derive(replication=replication, purpose="episode").generator()
    state = PolicyState(config, K)
    gaps = env.gaps
    arms = env.arms
    cps = checkpoint_grid(T)
    cp_set = frozenset(cps)
    records = []
    regret = 0.0
    warmup = K * init
    for t in range(1, T + 1):
        arm = (t - 1) % K if t <= warmup else policy_step(state, gen).chosen
        x = arms[arm].sample(gen)
        state.update(arm, x)
        regret += gaps[arm]
        if t in cp_set:
            records.append((t, regret, tuple(a.n for a in state.arms)))
    return RegretTrace(config.policy_id, seed, replication, T, tuple(records))


def default_workers() -> int:
    env = os.environ.get("BANDITLAB_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("BANDITLAB_WORKERS must be an integer") from None
    return os.cpu_count() or 1


def _episode_args(arg):
    env, config, T, base_seed, r = arg
    return run_episode(env, config, T, base_seed, replication=r)


def run_replications(env: BanditEnv, config: PolicyConfig, T: int, R: int,
                     base_seed: int, workers: Optional[int] = None) -> AggregatedStats:
    """Run R independent replications and aggregate at the common checkpoints.

    Replication r draws from the stream (base_seed, r); traces are merged in
    replication order, so the aggregate does not depend on scheduling.
    """
    if R < 1:
        raise ConfigError("need at least one replication")
    jobs = [(env, config, T, base_seed, r) for r in range(R)]
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or R == 1:
        traces = [_episode_args(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, R)) as pool:
            traces = list(pool.map(_episode_args, jobs, chunksize=max(1, R // (4 * workers))))
    ts = tuple(t for t, _, _ in traces[0].checkpoints)
    K = len(env.arms)
    regret = np.array([[c[1] for c in tr.checkpoints] for tr in traces])
    pulls = np.array([[c[2] for c in tr.checkpoints] for tr in traces], dtype=float)
    if R > 1:
        stderr = regret.std(axis=0, ddof=1) / math.sqrt(R)
    else:
        stderr = np.zeros(len(ts))
    return AggregatedStats(
        policy_id=config.policy_id, T=T, R=R, base_seed=base_seed, ts=ts,
        regret_mean=regret.mean(axis=0), regret_stderr=stderr,
        pulls_mean=pulls.mean(axis=0),
        final_regrets=regret[:, -1].copy(),
        final_pulls=pulls[:, -1, :].reshape(R, K).copy(),
    )


# ---------------------------------------------------------------------------
# Lower-bound reference
# ---------------------------------------------------------------------------


def _true_law_kinf(arm: ArmModel, mu: float, dspec: DivergenceSpec) -> float:
    fam = dspec.family
    if fam in ("bernoulli", "poisson"):
        return kl_spef(fam, arm.true_mean, mu)
    if fam == "gaussian-known":
        var0 = getattr(arm, "var0", dspec.var0)
        return kl_spef("gaussian", arm.true_mean, mu, var0=var0)
    if fam == "gaussian":
        var = getattr(arm, "var", getattr(arm, "var0", None))
        if var is None:
            raise DomainError("gaussian reference needs arms with a variance")
        return kinf_gaussian(arm.true_mean, var, mu)
    if fam == "bounded":
        support, probs = _finite_law(arm)
        return kinf_bounded_discrete(support, probs, mu, dspec.B, dspec.tol).value
    if fam == "hmoment":
        support, probs = _finite_law(arm)
        return _dual_max(support, probs, mu, dspec.moment, 0.0, 0.0, dspec.tol).value
    raise DomainError(f"no true-law divergence for family {fam!r}")


def _finite_law(arm: ArmModel) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(arm, BernoulliArm):
        return np.array([0.0, 1.0]), np.array([1.0 - arm.p, arm.p])
    if isinstance(arm, BoundedDiscreteArm):
        return np.asarray(arm.support, dtype=float), np.asarray(arm.probs, dtype=float)
    raise DomainError("this reference family needs arms with finite support")


def lower_bound_reference(env: BanditEnv, dspec: DivergenceSpec,
                          t_grid: Sequence[int]) -> np.ndarray:
    """Reference regret sum_k gap_k log(t) / kinf(F_k, mu_star) on the grid.

    Uses the true arm laws; raises :class:`DomainError` when a suboptimal arm
    sits at the boundary kinf = 0 (the reference constant would be infinite).
    """
    mu_star = env.mu_star
    const = 0.0
    for arm, gap in zip(env.arms, env.gaps):
        if gap <= 0.0:
            continue
        k = _true_law_kinf(arm, mu_star, dspec)
        if k <= 0.0:
            raise DomainError("a suboptimal arm has zero divergence to the boundary")
        const += gap / k
    t = np.asarray(t_grid, dtype=float)
    return const * np.log(t)
