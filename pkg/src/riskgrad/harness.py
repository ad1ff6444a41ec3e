"""Experiment driver: tuning phase, converged-run evaluation, and reports.

A run picks one algorithm, tunes it on the stopping environment, then
evaluates the converged policy on fresh episodes and writes four artifacts to
the output directory: the resolved config, iteration telemetry, the raw
per-episode discounted costs, a histogram, and a JSON summary with
``{mean, std, var, cvar}`` of the evaluation costs. Every randomized stage
draws from a seed tree rooted at the config seed — evaluation episodes get
their own spawned streams — so a fixed seed reproduces every output file
byte for byte.

Chance-constrained algorithms reuse the confidence/tolerance pair of the
CVaR ones: the cost threshold is ``beta`` and the admissible violation
probability is ``1 - alpha``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actor_critic import AcConfig, AcResult, run_ac
from .augmented import AugmentedMdp, simulate_augmented_episode
from .errors import ConfigInvalid, EmptyBatch
from .mdp import FiniteMdp, sample_trajectory
from .pg import PgConfig, PgResult, run_pg
from .policies import BoltzmannPolicy, PolicyParams, RbfFeatures, TabularFeatures
from .risk import SampleBatch, cvar_alpha, h_alpha, var_alpha
from .schedules import StepSchedule
from .stopping import StoppingEnvConfig, build_stopping_mdp, node_coordinates
from .telemetry import AC_COLUMNS, PG_COLUMNS, TelemetryWriter

PG_ALGORITHMS = ("PG", "PG-CVaR", "PG-CC")
AC_ALGORITHMS = ("AC", "AC-CVaR", "AC-CVaR-SPSA", "AC-VaR")
ALGORITHMS = PG_ALGORITHMS + AC_ALGORITHMS


@dataclass
class ExperimentConfig:
    algorithm: str = "PG"
    env: StoppingEnvConfig = field(default_factory=StoppingEnvConfig)
    alpha: float = 0.95
    beta: float = 3.0
    n_batch: int = 2_000
    eval_trajectories: int = 10_000
    seed: int = 0
    policy_box: float = 20.0
    lam_max0: float = 50.0
    max_inner: int = 300
    max_outer: int = 6
    ac_steps_inner: int = 150_000
    rbf_counts: tuple[int, int, int] = (5, 4, 5)  # (log-price, time, budget) grid
    pg_c1: float = 1.0
    pg_c2: float = 40.0
    pg_c3: float = 2.0
    ac_c1: float = 0.02
    ac_c2: float = 1.0
    ac_c3: float = 0.5
    ac_c4: float = 1.0
    ac_c_delta: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigInvalid(f"unknown algorithm {self.algorithm!r}")
        if self.eval_trajectories < 1:
            raise ConfigInvalid("eval_trajectories must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigInvalid("alpha must lie in (0, 1)")
        self.env.validate()

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["rbf_counts"] = list(self.rbf_counts)
        return doc

    @classmethod
    def from_dict(cls, doc: dict, preset: str | None = None) -> "ExperimentConfig":
        base = dict(PRESETS[preset]) if preset else {}
        env_doc = dict(base.pop("env", {}))
        doc = dict(doc)
        env_doc.update(doc.pop("env", {}))
        base.update(doc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(base) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        env_known = {f.name for f in dataclasses.fields(StoppingEnvConfig)}
        env_unknown = set(env_doc) - env_known
        if env_unknown:
            raise ConfigInvalid(f"unknown env keys: {sorted(env_unknown)}")
        base["env"] = StoppingEnvConfig(**env_doc)
        if "rbf_counts" in base:
            base["rbf_counts"] = tuple(base["rbf_counts"])
        return cls(**base)


# The paper-scale settings are a reference point, not a CI target; the desk
# preset shrinks the horizon and batch sizes to tuning budgets that finish in
# minutes while preserving the mean-versus-tail tradeoff.
PRESETS: dict[str, dict] = {
    "paper": {
        "env": {"horizon": 20},
        "n_batch": 500_000,
        "eval_trajectories": 10_000,
        "lam_max0": 5_000.0,
        "max_inner": 2_000,
        "ac_steps_inner": 2_000_000,
    },
    "desk": {
        "env": {"horizon": 8},
        "n_batch": 2_000,
        "eval_trajectories": 10_000,
        "lam_max0": 50.0,
        "max_inner": 300,
        "ac_steps_inner": 150_000,
    },
}


@dataclass(frozen=True)
class SummaryRow:
    mean: float
    std: float
    cvar: float
    var: float


def summarize(returns: SampleBatch, alpha: float) -> SummaryRow:
    """Population mean/std plus the two tail statistics of a cost batch."""
    w = returns.effective_weights()
    mean = float(np.dot(w, returns.values))
    variance = float(np.dot(w, (returns.values - mean) ** 2))
    return SummaryRow(
        mean=mean,
        std=math.sqrt(variance),
        cvar=cvar_alpha(returns, alpha),
        var=var_alpha(returns, alpha),
    )


# ---------------------------------------------------------------------------
# feature encoders for the stopping environment
# ---------------------------------------------------------------------------


class StoppingEncoder:
    """RBF features over (log price, time[, budget]) for augmented states.

    The target state is encoded one time slot past the final period so it
    stays separated from lattice nodes while keeping the budget coordinate,
    which the critic needs to represent the terminal cost.
    """

    kind = "rbf"

    def __init__(self, env: StoppingEnvConfig, counts, include_budget: bool, s_range: tuple[float, float]):
        T = env.horizon
        log_hi = T * math.log(env.f_u)
        log_lo = T * math.log(env.f_d)
        ranges = [(log_lo + math.log(env.initial_cost), log_hi + math.log(env.initial_cost)),
                  (0.0, float(T + 1))]
        use_counts = list(counts[:2])
        if include_budget:
            ranges.append(s_range)
            use_counts.append(counts[2])
        self.env = env
        self.include_budget = include_budget
        self.rbf = RbfFeatures(ranges, use_counts)
        self.dimension = self.rbf.dimension
        self._coords: dict[int, tuple[int, float]] = {}

    def _node(self, x: int) -> tuple[int, float]:
        if x not in self._coords:
            self._coords[x] = node_coordinates(self.env, x)
        return self._coords[x]

    def __call__(self, state) -> np.ndarray:
        x, s = state
        n_target = (self.env.horizon + 1) * (self.env.horizon + 2) // 2
        if x == n_target:
            z = [math.log(self.env.initial_cost), float(self.env.horizon + 1)]
        else:
            k, price = self._node(int(x))
            z = [math.log(price), float(k)]
        if self.include_budget:
            z.append(float(s))
        return self.rbf(np.asarray(z))


class BaseStateAdapter:
    """Presents an (x, s) encoder as a plain base-state feature map."""

    def __init__(self, encoder):
        self.encoder = encoder
        self.dimension = encoder.dimension
        self.kind = encoder.kind

    def __call__(self, x) -> np.ndarray:
        return self.encoder((int(x), 0.0))


# ---------------------------------------------------------------------------
# run driver
# ---------------------------------------------------------------------------


@dataclass
class RunReport:
    config: ExperimentConfig
    status: str
    summary: dict
    returns: np.ndarray
    out_dir: Path | None


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> RunReport:
    """Tune the configured algorithm, evaluate the converged policy, report."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    mdp = build_stopping_mdp(config.env)
    root = np.random.SeedSequence(config.seed)
    tune_ss, eval_ss = root.spawn(2)

    telemetry = None
    columns = PG_COLUMNS if config.algorithm in PG_ALGORITHMS else AC_COLUMNS
    if out is not None:
        telemetry = TelemetryWriter(out / "telemetry.csv", columns)
    try:
        if config.algorithm in PG_ALGORITHMS:
            result, eval_fn = _tune_pg(config, mdp, tune_ss, telemetry)
        else:
            result, eval_fn = _tune_ac(config, mdp, tune_ss, telemetry)
    finally:
        if telemetry is not None:
            telemetry.close()

    returns = _evaluate(eval_fn, config.eval_trajectories, eval_ss)
    batch = SampleBatch(returns)
    row = summarize(batch, config.alpha)
    state = result.state
    summary = {
        "algorithm": config.algorithm,
        "seed": config.seed,
        "status": result.status,
        "outer_rounds": result.outer_rounds,
        "iterations": result.iterations if isinstance(result, PgResult) else result.steps,
        "nu": state.nu,
        "lambda": state.lam,
        "lambda_max": state.lam_max,
        "eval_trajectories": config.eval_trajectories,
        "alpha": config.alpha,
        "beta": config.beta,
        "mean": row.mean,
        "std": row.std,
        "var": row.var,
        "cvar": row.cvar,
        "prob_g_ge_beta": float(np.mean(returns >= config.beta)),
        "h_alpha_at_nu": h_alpha(batch, state.nu, config.alpha),
    }
    if out is not None:
        _write_reports(out, config, summary, returns)
    return RunReport(
        config=config, status=result.status, summary=summary, returns=returns, out_dir=out
    )


def _pg_mode(algorithm: str) -> str:
    return {"PG": "neutral", "PG-CVaR": "cvar", "PG-CC": "chance"}[algorithm]


def _tune_pg(config, mdp, ss, telemetry):
    rng = np.random.default_rng(ss)
    policy = BoltzmannPolicy(
        TabularFeatures(mdp.n_states),
        PolicyParams.zeros(mdp.n_actions, mdp.n_states, box_bound=config.policy_box),
    )
    mode = _pg_mode(config.algorithm)
    pg_config = PgConfig(
        mode=mode,
        alpha=config.alpha,
        beta=(1.0 - config.alpha) if mode == "chance" else config.beta,
        threshold=config.beta,
        n_batch=config.n_batch,
        max_inner=config.max_inner,
        max_outer=config.max_outer,
        lam_max0=config.lam_max0,
    )
    schedule = StepSchedule(c1=config.pg_c1, c2=config.pg_c2, c3=config.pg_c3)
    result = run_pg(mdp, policy, pg_config, schedule, rng, telemetry=telemetry)
    policy.params = result.state.theta

    def eval_episode(rng_i: np.random.Generator) -> float:
        return sample_trajectory(mdp, policy, rng_i).g_total

    return result, eval_episode


def _tune_ac(config, mdp, ss, telemetry):
    rng = np.random.default_rng(ss)
    risk_neutral = config.algorithm == "AC"
    variant = "chance" if config.algorithm == "AC-VaR" else "cvar"
    # budget excursions are bounded by the worst undiscounted episode cost
    # stretched by the final 1/gamma^T rescaling
    j_max = config.env.cost_cap + config.env.p_h * config.env.horizon
    stretch = config.env.gamma ** -(config.env.horizon + 1)
    s_lo = -(j_max + 1.0) * stretch
    s_hi = (config.env.cost_cap + 1.0) * stretch
    encoder = StoppingEncoder(
        config.env,
        config.rbf_counts,
        include_budget=not risk_neutral,
        s_range=(s_lo, s_hi),
    )
    policy = BoltzmannPolicy(
        encoder,
        PolicyParams.zeros(mdp.n_actions, encoder.dimension, box_bound=config.policy_box),
    )
    aug = AugmentedMdp(
        base=mdp,
        variant=variant,
        alpha=config.alpha if variant == "cvar" else None,
        initial_s=config.beta,
    )
    ac_config = AcConfig(
        variant=variant,
        nu_mode="spsa" if config.algorithm == "AC-CVaR-SPSA" else "semi",
        sampling="occupation",
        risk_neutral=risk_neutral,
        alpha=config.alpha,
        beta=(1.0 - config.alpha) if variant == "chance" else config.beta,
        threshold=config.beta,
        steps_inner=config.ac_steps_inner,
        max_outer=config.max_outer,
        lam_max0=config.lam_max0,
        nu0=config.beta if variant == "cvar" else 0.0,
    )
    schedule = StepSchedule(
        c1=config.ac_c1, c2=config.ac_c2, c3=config.ac_c3, c4=config.ac_c4,
        c_delta=config.ac_c_delta,
    )
    result = run_ac(aug, policy, encoder, ac_config, schedule, rng, telemetry=telemetry)
    policy.params = result.state.theta
    s0 = result.state.nu if variant == "cvar" and not risk_neutral else config.beta

    def eval_episode(rng_i: np.random.Generator) -> float:
        return simulate_augmented_episode(aug, policy, rng_i, s0=s0).g_total

    return result, eval_episode


def _evaluate(eval_episode, n: int, ss: np.random.SeedSequence) -> np.ndarray:
    """Converged-run evaluation with one spawned RNG stream per episode."""
    if n < 1:
        raise EmptyBatch("evaluation needs at least one episode")
    children = ss.spawn(n)
    return np.asarray([eval_episode(np.random.default_rng(c)) for c in children])


def _write_reports(out: Path, config: ExperimentConfig, summary: dict, returns: np.ndarray) -> None:
    with open(out / "config.json", "w") as fh:
        json.dump(config.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(out / "returns.csv", "w", newline="") as fh:
        fh.write("episode,g\n")
        for i, g in enumerate(returns):
            fh.write(f"{i},{g!r}\n")
    counts, edges = np.histogram(returns, bins=50)
    with open(out / "histogram.csv", "w", newline="") as fh:
        fh.write("bin_left,bin_right,count\n")
        for i, c in enumerate(counts):
            fh.write(f"{edges[i]!r},{edges[i + 1]!r},{int(c)}\n")


def load_returns_csv(path: str | Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        col = header.index("g")
        for line in fh:
            if line.strip():
                rows.append(float(line.strip().split(",")[col]))
    return np.asarray(rows)
