"""Risk-constrained policy search for finite MDPs.

Constrained cost minimization where the constraint bounds either the tail
mean (CVaR) or the violation probability (chance constraint) of the
cumulative constraint cost. Provides a trajectory-batch policy gradient
method, incremental actor-critic methods on the budget-augmented state space,
exact enumeration/dynamic-programming oracles for verification, and an
optimal-stopping benchmark harness.
"""

from .augmented import (
    AugmentedMdp,
    AugmentedTrajectory,
    AugState,
    augmented_step,
    augmented_trajectory_cost,
    sample_augmented_occupation,
    simulate_augmented_episode,
)
from .actor_critic import (
    AcConfig,
    AcResult,
    CriticWeights,
    TdTransition,
    actor_lambda_step,
    cc_episode_update,
    critic_update,
    observe_transition,
    run_ac,
    semi_trajectory_nu_step,
    spsa_nu_step,
    td_error,
)
from .errors import (
    BudgetExceeded,
    ConfigInvalid,
    DimensionMismatch,
    EmptyBatch,
    HorizonExceeded,
    InvalidDiscount,
    NoConvergence,
    NotTerminal,
    RiskgradError,
    TerminalStep,
)
from .harness import (
    ExperimentConfig,
    RunReport,
    SummaryRow,
    run_experiment,
    summarize,
)
from .mdp import (
    FiniteMdp,
    Trajectory,
    enumerate_trajectories,
    load_mdp,
    sample_occupation_state,
    sample_occupation_states,
    sample_trajectory,
    sample_trajectory_batch,
)
from .oracle import (
    DiscretizedAugmentation,
    discretize,
    exact_gradients,
    exact_lagrangian,
    grad_lambda_dp,
    occupation_measure_base,
    value_iteration,
)
from .pg import (
    LagrangianState,
    PgConfig,
    PgResult,
    cc_pg_step,
    estimate_gradients,
    nu_box,
    pg_step,
    run_pg,
)
from .policies import (
    BoltzmannPolicy,
    FourierFeatures,
    PolicyParams,
    RbfFeatures,
    TabularFeatures,
    action_probabilities,
    attach_scores,
    grad_log_policy,
)
from .risk import SampleBatch, cvar_alpha, h_alpha, var_alpha
from .schedules import StepSchedule
from .stopping import StoppingEnvConfig, build_stopping_mdp

__version__ = "0.1.0"
