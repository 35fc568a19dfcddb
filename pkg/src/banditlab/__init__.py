"""banditlab: randomized multi-armed bandit policies built on
minimum-divergence exploration, with the Monte Carlo machinery to verify
the boundary-crossing bounds that drive their regret guarantees."""

__version__ = "0.1.0"

from .core import (ArmModel, BernoulliArm, BoundedDiscreteArm, EmpiricalDistribution,
                   GaussianArm, GaussianKnownVarArm, HeavyTailArm, MomentSpec,
                   PoissonArm, RngStream, draw_reward, empirical_from_samples,
                   empirical_moment, family_membership, truncated_mean)
from .divergence import (DivergenceSpec, DualPoint, SolverTol, constraint_min,
                         d_pi_gaussian, kinf_bounded, kinf_gaussian, kinf_hmoment,
                         kl_spef, lambda_star)
from .policies import (PolicyConfig, PolicyState, SamplingDecision, hnpts_check,
                       hnpts_step, med_probabilities, med_step, policy_step,
                       sample_gaussian_ig, sample_npts_bounded, sample_spef_conjugate,
                       ts_dagger_step)
from .bcp import (BcpEstimate, bcp_rate_profile, chernoff_joint_upper,
                  exact_dirichlet_exceedance, gaussian_kinf_tail_check, mc_bcp_joint,
                  simple_truncation_lower, spef_bcp_rate_check)
from .sim import (AggregatedStats, BanditEnv, RegretTrace, lower_bound_reference,
                  run_episode, run_replications)
