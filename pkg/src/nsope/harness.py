"""End-to-end nonstationary OPE experiments, metrics and Monte Carlo oracles.

One run walks the intervals k = 0..K: it samples D_k with the uniform
behavior policy and, for k >= 1, evaluates every configured estimator on its
window, builds its CI and records the one-step forecast of J_k made from the
estimates of intervals 1..k-1. Sampling streams are seeded from
(master seed, run, interval) only, so adding estimators or workers never
changes the data.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .bandit_estimators import (
    PopTotalMode,
    cv_ridge_lambda,
    diff_estimate,
    dm_estimate,
    dr_estimate,
    fit_reg_coefficients,
    is_estimate,
    pool_window,
    reg_estimate,
    wis_estimate,
)
from .core import (
    IntervalDataset,
    Policy,
    Population,
    ValidationError,
    sample_interval,
    true_value,
)
from .environments import (
    SineBanditConfig,
    TabularBanditEnv,
    StationarySchedule,
    TreeMDPConfig,
    env_from_dump,
    make_sine_bandit,
    make_synthetic_ratings,
    make_tree_mdp,
    parse_multilabel,
    supervised_to_bandit,
    tree_target_policy,
)
from .forecast import DEFAULT_BASIS_DIM, fit_forecast
from .reward_models import FeatureConfig, FeatureKind, FeatureMap, build_features, fit_reward_model
from .rl_ope import (
    FiniteMDP,
    TrajectoryDataset,
    exact_value,
    fqe,
    pdis,
    reg_fqe,
    sample_trajectories,
    trajectory_is,
    trajectory_wis,
    var_pdis,
    var_trajectory_is,
)
from .smalllinalg import SingularDesign
from .variance_ci import (
    EstimateReport,
    Sided,
    var_diff,
    var_dm_model_based,
    var_dr,
    var_is,
    var_reg,
    var_wis,
    syg_variance,
)

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("run", "interval", "estimator", "estimate", "var_hat", "ci_lo", "ci_hi",
                  "forecast", "true_value")
SUMMARY_COLUMNS = ("estimator", "rmse_current", "rmse_forecast", "coverage", "mean_width")

BANDIT_KINDS = ("is", "wis", "dm", "diff", "dr", "reg")
RL_KINDS = ("traj_is", "traj_wis", "pdis", "fqe", "reg_fqe")


class ConfigError(ValueError):
    """Invalid experiment or environment configuration."""


class ResultFileError(ValueError):
    """A results file that cannot be read back."""


# --- fixtures -----------------------------------------------------------------


def fixture_a() -> tuple[Population, Policy, Policy, np.ndarray]:
    """Two contexts, two actions: (population, target, behavior, rewards).

    J = 0.825 and the IS estimator has exact variance 0.471875 / n.
    """
    pop = Population(np.array([0.5, 0.5]), np.array([[0.0], [1.0]]), 2)
    target = Policy(np.array([[0.8, 0.2], [0.3, 0.7]]))
    behavior = Policy.uniform(2, 2)
    rewards = np.array([[1.0, 0.0], [0.5, 1.0]])
    return pop, target, behavior, rewards


# --- configuration --------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator column of an experiment.

    ``kind`` is one of BANDIT_KINDS or RL_KINDS. ``window`` is B: IS, WIS and
    DM pool D_{k-B..k}; Diff, DR, Reg and FQE fit their reward model or Q table
    on D_{k-B..k-1} (B = 0 leaves Reg with the constant feature). Windows are
    clipped at interval 0.
    """

    id: str
    kind: str
    window: int = 0
    features: str = "reg"
    mode: str = "known"
    g_weighted: bool = True
    ridge_lambda: float | str = 0.0
    reward_ridge: float = 0.0
    sided: str = "two"

    def __post_init__(self) -> None:
        if not self.id:
            raise ConfigError("estimator id must be nonempty")
        if self.kind not in BANDIT_KINDS + RL_KINDS:
            raise ConfigError(f"unknown estimator kind {self.kind!r}")
        if self.window < 0:
            raise ConfigError("window must be >= 0")
        if self.mode not in ("known", "same_sample", "independent"):
            raise ConfigError(f"unknown population-total mode {self.mode!r}")
        try:
            FeatureKind(self.features)
            Sided(self.sided)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, obj: Mapping) -> "EstimatorSpec":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown estimator fields {sorted(extra)}")
        return cls(**obj)


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment = env spec + estimators + sampling and CI settings.

    n_k = ``n_per_interval`` when given, else round(sample_alpha * |S|).
    """

    env: Mapping
    estimators: tuple[EstimatorSpec, ...]
    num_runs: int = 30
    n_per_interval: int | None = None
    sample_alpha: float = 1.0
    ci_alpha: float = 0.05
    forecast_dim: int = DEFAULT_BASIS_DIM
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "estimators", tuple(
            e if isinstance(e, EstimatorSpec) else EstimatorSpec.from_json(e)
            for e in self.estimators))
        if self.num_runs < 1:
            raise ConfigError("num_runs must be >= 1")
        ids = [e.id for e in self.estimators]
        if len(set(ids)) != len(ids):
            raise ConfigError("estimator ids must be unique")
        if not ids:
            raise ConfigError("at least one estimator is required")
        if not 0 < self.ci_alpha < 1:
            raise ConfigError("ci_alpha must lie in (0, 1)")
        if self.n_per_interval is not None and self.n_per_interval < 2:
            raise ConfigError("n_per_interval must be >= 2")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")

    @classmethod
    def from_json(cls, obj: Mapping) -> "ExperimentConfig":
        """Read the CLI layout {"env": ..., "experiment": ..., "estimators": [...]}."""
        if "env" not in obj or "estimators" not in obj:
            raise ConfigError("config needs 'env' and 'estimators' sections")
        exp = dict(obj.get("experiment", {}))
        known = {f.name for f in fields(cls)} - {"env", "estimators"}
        extra = set(exp) - known
        if extra:
            raise ConfigError(f"unknown experiment fields {sorted(extra)}")
        try:
            return cls(env=obj["env"], estimators=tuple(obj["estimators"]), **exp)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self) -> dict:
        exp = {f.name: getattr(self, f.name) for f in fields(self)
               if f.name not in ("env", "estimators")}
        return {"env": dict(self.env), "experiment": exp,
                "estimators": [asdict(e) for e in self.estimators]}


# --- environment construction -------------------------------------------------


@dataclass(frozen=True, eq=False)
class BanditSetup:
    env: TabularBanditEnv
    target: Policy
    behavior: Policy

    is_rl = False

    @property
    def num_intervals(self) -> int:
        return self.env.num_intervals

    @property
    def size(self) -> int:
        return self.env.population.num_contexts


@dataclass(frozen=True, eq=False)
class MDPSetup:
    mdp: FiniteMDP
    target: Policy
    behavior: Policy

    is_rl = True

    @property
    def num_intervals(self) -> int:
        return self.mdp.num_intervals

    @property
    def size(self) -> int:
        return self.mdp.num_states


def _config_from(cls, params: Mapping):
    known = {f.name for f in fields(cls)}
    extra = set(params) - known
    if extra:
        raise ConfigError(f"unknown {cls.__name__} fields {sorted(extra)}")
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    return cls(**params)


def build_env(spec: Mapping) -> BanditSetup | MDPSetup:
    """Construct an environment from its JSON spec (``kind`` + parameters)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "sine_bandit":
            env = make_sine_bandit(_config_from(SineBanditConfig, spec))
        elif kind == "synthetic_ratings":
            env = make_synthetic_ratings(**spec)
        elif kind == "fixture_a":
            K = int(spec.pop("num_intervals", 1))
            if spec:
                raise ConfigError(f"unknown fixture_a fields {sorted(spec)}")
            pop, target, _, rewards = fixture_a()
            env = TabularBanditEnv(pop, K, StationarySchedule(rewards), target, name="fixture_a")
        elif kind == "replay":
            with open(spec["path"]) as fh:
                env = env_from_dump(json.load(fh))
        elif kind == "multilabel":
            path = spec.pop("path")
            num_actions = int(spec.pop("num_actions"))
            conv = {k: spec.pop(k) for k in ("target_subset_frac", "feature_dim", "temperature")
                    if k in spec}
            cfg = _config_from(SineBanditConfig, spec)
            with open(path) as fh:
                records = parse_multilabel(fh)
            base = supervised_to_bandit(records, num_actions, seed=cfg.seed, **conv)
            env = make_sine_bandit(cfg, base)
        elif kind == "tree_mdp":
            mdp = make_tree_mdp(_config_from(TreeMDPConfig, spec))
            target = tree_target_policy(mdp, TreeMDPConfig(**spec).target_temperature)
            return MDPSetup(mdp, target, Policy.uniform(mdp.num_states, mdp.num_actions))
        else:
            raise ConfigError(f"unknown env kind {kind!r}")
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad {kind} env spec: {exc}") from None
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    if env.target is None:
        raise ConfigError("environment has no target policy")
    pop = env.population
    return BanditSetup(env, env.target, Policy.uniform(pop.num_contexts, pop.num_actions))


# --- per-interval estimation ----------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    run: int
    interval: int
    estimator: str
    estimate: float
    var_hat: float
    ci_lo: float
    ci_hi: float
    forecast: float
    true_value: float


def _mode(spec: EstimatorSpec, past: list[IntervalDataset]) -> PopTotalMode:
    if spec.mode == "known":
        return PopTotalMode.known()
    if spec.mode == "same_sample":
        return PopTotalMode.same_sample()
    if not past:
        raise ValidationError("independent population total needs past data")
    return PopTotalMode.independent(past)


def _bandit_estimate(spec: EstimatorSpec, setup: BanditSetup, data: dict[int, IntervalDataset],
                     k: int) -> tuple[float, float]:
    pop, target = setup.env.population, setup.target
    B = min(spec.window, k)
    current = data[k]
    past = [data[t] for t in range(k - B, k)]
    if spec.kind in ("is", "wis"):
        pooled = pool_window(data, k, B)
        if spec.kind == "is":
            return is_estimate(pooled, target), var_is(pooled, target)
        return wis_estimate(pooled, target), var_wis(pooled, target)
    if spec.kind == "dm":
        pooled = pool_window(data, k, B)
        model = fit_reward_model(pop, [pooled], ridge=spec.reward_ridge)
        est = dm_estimate(current, target, model, pop)
        try:
            var = var_dm_model_based(pooled, target, _per_action_design(pop), pop)
        except (SingularDesign, ValidationError):
            var = math.nan
        return est, var
    if spec.kind in ("diff", "dr"):
        if not past:
            raise ValidationError(f"{spec.kind} needs a window >= 1")
        table = fit_reward_model(pop, past, ridge=spec.reward_ridge).table(pop)
        if spec.kind == "diff":
            return diff_estimate(current, pop, target, table), var_diff(current, target, table)
        return dr_estimate(current, target, table), var_dr(current, target, table)
    # reg
    kind = FeatureKind(spec.features)
    if B == 0 and kind in (FeatureKind.REG, FeatureKind.REG_AR):
        kind = FeatureKind.CONSTANT
    if kind in (FeatureKind.REG_AR, FeatureKind.REG_AR_PLUS_FEATURE):
        models = [fit_reward_model(pop, [d], ridge=spec.reward_ridge) for d in past]
    elif kind in (FeatureKind.REG, FeatureKind.REG_PLUS_FEATURE):
        if not past:
            raise ValidationError("reward-model features need a window >= 1")
        models = [fit_reward_model(pop, past, ridge=spec.reward_ridge)]
    else:
        models = []
    features = build_features(FeatureConfig(kind, max(B, len(models)), spec.ridge_lambda),
                              pop, models)
    lam = spec.ridge_lambda
    if lam == "cv":
        lam = cv_ridge_lambda(current, target, features)
    mode = _mode(spec, past)
    coeffs = fit_reg_coefficients(current, target, features, float(lam))
    est = reg_estimate(current, pop, target, features, mode, coeffs=coeffs)
    var = var_reg(current, target, features, coeffs, spec.g_weighted, mode, pop)
    return est, var


def _per_action_design(pop: Population) -> FeatureMap:
    """Block design e_a (x) (1, x_s) behind the per-action linear reward model."""
    S, A, d = pop.num_contexts, pop.num_actions, pop.feature_dim + 1
    x = np.hstack([np.ones((S, 1)), pop.context_features])
    table = np.zeros((S, A, A * d))
    for a in range(A):
        table[:, a, a * d:(a + 1) * d] = x
    return FeatureMap(table, FeatureKind.REG_FEATURE)


def _rl_estimate(spec: EstimatorSpec, setup: MDPSetup, data: dict[int, TrajectoryDataset],
                 k: int) -> tuple[float, float]:
    mdp, target = setup.mdp, setup.target
    B = min(spec.window, k)
    current = data[k]
    past = [data[t] for t in range(k - B, k)]
    if spec.kind in ("traj_is", "traj_wis", "pdis"):
        pooled = _pool_trajectories([data[t] for t in range(k - B, k + 1)], k)
        if spec.kind == "traj_is":
            return trajectory_is(pooled, target), var_trajectory_is(pooled, target)
        if spec.kind == "pdis":
            return pdis(pooled, target), var_pdis(pooled, target)
        w = pooled.trajectory_weights(target)
        est = trajectory_wis(pooled, target)
        return est, syg_variance(w * (pooled.returns - est))
    qtable = fqe(past, target, mdp) if past else None
    if spec.kind == "fqe":
        if qtable is None:
            raise ValidationError("fqe needs a window >= 1")
        return float(mdp.initial_dist @ qtable.value(target, 0)), math.nan
    mode = _mode(spec, [])
    if spec.mode == "independent":
        if not past:
            raise ValidationError("independent population total needs past data")
        mode = PopTotalMode(mode.kind, tuple(int(s) for d in past for s in d.initial_states))
    lam = 0.0 if spec.ridge_lambda == "cv" else float(spec.ridge_lambda)
    res = reg_fqe(current, mdp, target, qtable, mode, lam, spec.g_weighted)
    return res.estimate, res.var_hat


def _pool_trajectories(parts: list[TrajectoryDataset], k: int) -> TrajectoryDataset:
    if len(parts) == 1:
        return parts[0]
    return TrajectoryDataset(k, *(np.concatenate([getattr(d, c) for d in parts])
                                  for c in ("states", "actions", "rewards", "behavior_probs")))


def interval_rng(master_seed: int, run: int, k: int) -> np.random.Generator:
    """Independent stream per (master seed, run, interval) via SeedSequence hashing."""
    return np.random.default_rng([int(master_seed), int(run), int(k)])


def run_single(config: ExperimentConfig, setup: BanditSetup | MDPSetup, run: int) -> list[ResultRow]:
    K = setup.num_intervals
    n = config.n_per_interval or max(2, int(round(config.sample_alpha * setup.size)))
    for spec in config.estimators:
        if (spec.kind in RL_KINDS) != setup.is_rl:
            raise ConfigError(f"estimator {spec.id!r} ({spec.kind}) does not fit this environment")
    data: dict = {}
    history: dict[str, list[tuple[int, float]]] = {e.id: [] for e in config.estimators}
    rows = []
    for k in range(K + 1):
        rng = interval_rng(config.seed, run, k)
        if setup.is_rl:
            data[k] = sample_trajectories(setup.mdp, k, setup.behavior, n, rng)
            truth = exact_value(setup.mdp, k, setup.target)
        else:
            data[k] = setup.env.sample(k, setup.behavior, n, rng)
            truth = true_value(setup.env.population, setup.target, setup.env.reward_at(k))
        if k == 0:
            continue
        for spec in config.estimators:
            hist = history[spec.id]
            forecast = math.nan
            if hist:
                model = fit_forecast(hist, config.forecast_dim, float(K))
                forecast = model.predict(k)
            try:
                if setup.is_rl:
                    est, var = _rl_estimate(spec, setup, data, k)
                else:
                    est, var = _bandit_estimate(spec, setup, data, k)
                report = EstimateReport.from_estimate(spec.id, k, est, var, config.ci_alpha,
                                                      spec.sided)
            except (SingularDesign, ValidationError, ArithmeticError, ValueError) as exc:
                log.debug("run %d interval %d %s failed: %s", run, k, spec.id, exc)
                report = EstimateReport(spec.id, k, math.nan, math.nan, math.nan, math.nan,
                                        config.ci_alpha, str(exc))
            if math.isfinite(report.estimate):
                hist.append((k, report.estimate))
            rows.append(ResultRow(run, k, spec.id, report.estimate, report.var_hat,
                                  report.ci_lo, report.ci_hi, forecast, truth))
    return rows


def _run_worker(args) -> list[ResultRow]:
    config, setup, run = args
    return run_single(config, setup, run)


def run_experiment(config: ExperimentConfig, workers: int = 1,
                   setup: BanditSetup | MDPSetup | None = None) -> list[ResultRow]:
    """All runs of the experiment, rows ordered by (run, interval, estimator order)."""
    setup = setup or build_env(config.env)
    jobs = [(config, setup, run) for run in range(config.num_runs)]
    if workers <= 1 or config.num_runs == 1:
        per_run = [_run_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_run = list(pool.map(_run_worker, jobs))
    return [row for rows in per_run for row in rows]


# --- metrics --------------------------------------------------------------------


def _cells(rows: Iterable[ResultRow], estimator: str) -> list[ResultRow]:
    return sorted((r for r in rows if r.estimator == estimator),
                  key=lambda r: (r.run, r.interval))


def _rmse(rows: Iterable[ResultRow], estimator: str, column: str, start: int) -> tuple[float, int]:
    by_run: dict[int, list[float]] = {}
    missing = 0
    for r in _cells(rows, estimator):
        if r.interval < start:
            continue
        val = getattr(r, column)
        if not math.isfinite(val):
            missing += 1
            continue
        by_run.setdefault(r.run, []).append((val - r.true_value) ** 2)
    mses = [float(np.mean(v)) for _, v in sorted(by_run.items())]
    if not mses:
        return math.nan, missing
    return math.sqrt(float(np.mean(mses))), missing


def rmse_current(rows: Iterable[ResultRow], estimator: str) -> float:
    """Root of the run-average of per-run mean squared errors over k = 1..K."""
    return _rmse(rows, estimator, "estimate", 1)[0]


def rmse_forecast(rows: Iterable[ResultRow], estimator: str) -> float:
    """Same as ``rmse_current`` for the one-step forecasts over k = 2..K."""
    return _rmse(rows, estimator, "forecast", 2)[0]


def missing_cells(rows: Iterable[ResultRow], estimator: str) -> int:
    return sum(1 for r in _cells(rows, estimator) if not math.isfinite(r.estimate))


def coverage_and_width(rows: Iterable[ResultRow], estimator: str) -> tuple[float, float]:
    """Fraction of rounds whose CI contains J_k, and the mean CI width.

    Cells without a CI are skipped. One-sided intervals have infinite width,
    reported as NaN.
    """
    covered, widths = [], []
    for r in _cells(rows, estimator):
        if math.isnan(r.ci_lo) or math.isnan(r.ci_hi):
            continue
        covered.append(r.ci_lo <= r.true_value <= r.ci_hi)
        widths.append(r.ci_hi - r.ci_lo)
    if not covered:
        return math.nan, math.nan
    w = np.array(widths)
    width = float(w.mean()) if np.all(np.isfinite(w)) else math.nan
    return float(np.mean(covered)), width


@dataclass(frozen=True)
class SummaryRow:
    estimator: str
    rmse_current: float
    rmse_forecast: float
    coverage: float
    mean_width: float
    missing: int = 0


def summarize(rows: Sequence[ResultRow]) -> list[SummaryRow]:
    order = list(dict.fromkeys(r.estimator for r in rows))
    out = []
    for est in order:
        cov, width = coverage_and_width(rows, est)
        out.append(SummaryRow(est, rmse_current(rows, est), rmse_forecast(rows, est), cov, width,
                              missing_cells(rows, est)))
    return out


# --- Monte Carlo oracle -----------------------------------------------------------


def mc_oracle(
    pop: Population,
    target: Policy,
    behavior: Policy,
    estimator: Callable[[IntervalDataset], float] | Mapping[str, Callable],
    n: int,
    reps: int,
    seed: int = 0,
    rewards: np.ndarray | None = None,
    noise: Callable | None = None,
):
    """Empirical mean and variance of an estimator over ``reps`` fresh datasets.

    ``estimator`` may be a mapping of named closures, in which case all of
    them see the same datasets and a dict of (mean, variance) is returned.
    ``rewards`` defaults to the FIXTURE-A table.
    """
    if reps < 2:
        raise ValueError("need at least two replications")
    if rewards is None:
        rewards = fixture_a()[3]
    closures = estimator if isinstance(estimator, Mapping) else {"_": estimator}
    rng = np.random.default_rng(seed)
    values = {name: np.empty(reps) for name in closures}
    for i in range(reps):
        data = sample_interval(pop, behavior, rewards, n, rng, noise=noise)
        for name, fn in closures.items():
            values[name][i] = fn(data)
    out = {name: (float(v.mean()), float(v.var(ddof=1))) for name, v in values.items()}
    return out if isinstance(estimator, Mapping) else out["_"]


# --- files ------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def results_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def summary_csv(summary: Iterable[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for s in summary:
        w.writerow([_fmt(getattr(s, c)) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def _json_float(x):
    return x if not isinstance(x, float) or math.isfinite(x) else str(x)


def rows_to_json(rows: Iterable) -> list[dict]:
    return [{k: _json_float(v) for k, v in asdict(r).items()} for r in rows]


def read_results_csv(path_or_text: str | Path, is_text: bool = False) -> list[ResultRow]:
    text = path_or_text if is_text else Path(path_or_text).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != RESULT_COLUMNS:
        raise ResultFileError(f"unexpected header {header}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(RESULT_COLUMNS):
            raise ResultFileError(f"line {lineno}: expected {len(RESULT_COLUMNS)} fields")
        try:
            rows.append(ResultRow(int(rec[0]), int(rec[1]), rec[2],
                                  *(float(x) for x in rec[3:])))
        except ValueError as exc:
            raise ResultFileError(f"line {lineno}: {exc}") from None
    return rows


def write_outputs(out_dir: str | Path, rows: Sequence[ResultRow], config: ExperimentConfig | None = None) -> list[SummaryRow]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(rows)
    (out / "results.csv").write_text(results_csv(rows))
    (out / "summary.csv").write_text(summary_csv(summary))
    payload = {"results": rows_to_json(rows), "summary": rows_to_json(summary)}
    if config is not None:
        payload["config"] = config.to_json()
    (out / "results.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return summary
