"""Cost-adjusted multi-fidelity Bayesian optimisation campaigns.

The loop: a Latin-hypercube design of experiments over the joint
design-fidelity box, then iterations of {refit objective and cost GPs,
maximise the cost-adjusted acquisition, evaluate, record}, a budget-reserve
stopping rule, and a guaranteed final highest-fidelity evaluation so the
returned incumbent was actually simulated, never just predicted.

Sign convention (single site): the composite objective f is minimised, but
the acquisition is written as a maximisation with an optimistic numerator.
We therefore model f directly and use the negated lower confidence bound,

    numerator(x) = -mu_f(x, z_max) + sqrt(beta) * sigma_f(x, z_max),

which is the upper confidence bound of -f.  The denominator multiplies the
predicted evaluation cost by a fidelity-correlation discount
sqrt(1 - k((x,z),(x,z_max))^2), floored at epsilon_gamma because the
discount vanishes exactly at z = z_max.

Everything is deterministic for a fixed seed: every random draw derives its
stream from (seed, purpose, iteration), so an interrupted campaign resumed
from its checkpoint reproduces the uninterrupted run byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .flow import (
    COIL_PATH,
    CROSS_SECTION,
    FIDELITY_BOUNDS,
    NominalCoil,
    SolverError,
    SurrogateConfig,
    SurrogateEvaluator,
)
from .geometry import GeometryError
from .gp import GPModel, fit_hyperparameters, gp_posterior, kernel_correlation
from .rtd import DEFAULT_ALPHA, EmptyTraceError, RTDCurve, composite_objective, normalize_rtd

# Purpose tags for derived random streams.
_TAG_DOE = 1
_TAG_FIT_OBJ = 2
_TAG_FIT_COST = 3
_TAG_ACQ = 4
_TAG_STOP = 5
_TAG_FINAL = 6
_TAG_EVAL = 7

EVALUATION_ERRORS = (GeometryError, SolverError, EmptyTraceError)


class CampaignError(RuntimeError):
    """Campaign aborted (persistent evaluator failures or a broken stage)."""


def _derive_seed(base: int, *path: int) -> int:
    return int(np.random.SeedSequence([int(base), *path]).generate_state(1)[0])


@dataclass(frozen=True)
class DesignSpace:
    """Joint design-fidelity box with per-dimension labels."""

    x_bounds: np.ndarray
    x_labels: tuple[str, ...]
    z_bounds: np.ndarray = FIDELITY_BOUNDS
    z_labels: tuple[str, ...] = ("axial", "radial")

    def __post_init__(self):
        xb = np.asarray(self.x_bounds, dtype=float).reshape(-1, 2)
        zb = np.asarray(self.z_bounds, dtype=float).reshape(-1, 2)
        for b, what in ((xb, "x"), (zb, "z")):
            if not np.all(np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
                raise ValueError(f"{what} bounds must be finite with low < high")
        labels = tuple(self.x_labels) + tuple(self.z_labels)
        if len(set(labels)) != len(labels):
            raise ValueError("dimension labels must be unique")
        if len(self.x_labels) != xb.shape[0] or len(self.z_labels) != zb.shape[0]:
            raise ValueError("label count must match bound count")
        object.__setattr__(self, "x_bounds", xb)
        object.__setattr__(self, "x_labels", tuple(self.x_labels))
        object.__setattr__(self, "z_bounds", zb)
        object.__setattr__(self, "z_labels", tuple(self.z_labels))

    @property
    def dim_x(self) -> int:
        return self.x_bounds.shape[0]

    @property
    def dim_z(self) -> int:
        return self.z_bounds.shape[0]

    @property
    def joint_bounds(self) -> np.ndarray:
        return np.vstack([self.x_bounds, self.z_bounds])

    @property
    def z_star(self) -> np.ndarray:
        """Element-wise vector of highest fidelities."""
        return self.z_bounds[:, 1].copy()

    @property
    def z_star_rounded(self) -> tuple[int, ...]:
        return tuple(int(round(v)) for v in self.z_star)

    @classmethod
    def from_evaluator(cls, evaluator) -> "DesignSpace":
        return cls(x_bounds=np.asarray(evaluator.x_bounds, dtype=float),
                   x_labels=tuple(evaluator.x_labels),
                   z_bounds=np.asarray(evaluator.z_bounds, dtype=float))


@dataclass
class Evaluation:
    """One recorded evaluation; ``z`` is the rounded fidelity actually run."""

    x: np.ndarray
    z: tuple[int, ...]
    f: float | None
    cost: float
    n_star: float | None = None
    mse: float | None = None
    rtd: RTDCurve | None = None
    seed: int = 0
    clock: float = 0.0          # cumulative simulated cost when this finished
    failed: bool = False
    error: str | None = None
    raw: tuple | None = None    # optional (times, concentrations) when kept

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).ravel()
        self.z = tuple(int(v) for v in self.z)
        if not self.failed:
            if self.f is None or not math.isfinite(self.f):
                raise ValueError("successful evaluations need a finite objective")
            if self.cost <= 0:
                raise ValueError("successful evaluations must report positive cost")


@dataclass(frozen=True)
class CampaignConfig:
    """Loop hyper-parameters.

    ``beta`` scales exploration in the acquisition numerator (entering as
    its square root); ``p_c`` multiplies the predicted cost of one
    highest-fidelity evaluation in the budget-reserve stopping rule;
    ``epsilon_gamma`` floors the fidelity-correlation discount.
    ``max_iterations`` is a desk-scale safety cap: with a wide fidelity cost
    ratio a pure budget rule could admit tens of thousands of cheap
    evaluations, which cubic-cost GP refits cannot sustain.
    """

    beta: float = 1.5
    p_c: float = 2.0
    epsilon_gamma: float = 1e-2
    doe_size: int | None = None          # default max(10, dim_x + 2)
    max_iterations: int = 200
    gp_restarts: int = 2
    acq_starts: int = 32
    acq_sweeps: int = 2
    acq_grid: int = 9
    stop_check_starts: int = 16
    keep_raw: bool = False
    min_consecutive_failures: int = 4


@dataclass
class CampaignState:
    """Full optimisation history plus everything needed to resume it."""

    space: DesignSpace
    parameterisation: str
    config: CampaignConfig
    budget_total: float
    rng_seed: int
    n_doe: int
    history: list = field(default_factory=list)
    gp_snapshots: list = field(default_factory=list)
    incumbent_index: int | None = None
    complete: bool = False
    warnings: list = field(default_factory=list)
    predecessor: dict | None = None

    @property
    def budget_spent(self) -> float:
        return float(sum(e.cost for e in self.history))

    @property
    def budget_remaining(self) -> float:
        return self.budget_total - self.budget_spent

    @property
    def iterations(self) -> int:
        return len(self.gp_snapshots)

    @property
    def incumbent(self) -> Evaluation | None:
        if self.incumbent_index is None:
            return None
        return self.history[self.incumbent_index]

    def successful(self) -> list[Evaluation]:
        return [e for e in self.history if not e.failed]

    def best_so_far(self) -> np.ndarray:
        """Monotone non-increasing trace of the best objective seen."""
        best = math.inf
        out = []
        for e in self.history:
            if not e.failed and e.f < best:
                best = e.f
            out.append(best)
        return np.asarray(out)


@dataclass
class ObjectiveOutcome:
    """What a campaign-level evaluator returns for one evaluation."""

    f: float
    cost: float
    fidelity_used: tuple[int, ...]
    seed: int
    n_star: float | None = None
    mse: float | None = None
    rtd: RTDCurve | None = None
    raw: tuple | None = None


class ObjectiveEvaluator:
    """Adapter: flow evaluator (outlet series) -> composite objective.

    Normalises the outlet series into a dimensionless RTD, fits the
    tanks-in-series model, and reports f = alpha * mse - N* together with
    the evaluation cost.
    """

    def __init__(self, flow_evaluator, alpha: float = DEFAULT_ALPHA,
                 keep_raw: bool = False):
        self.flow = flow_evaluator
        self.alpha = alpha
        self.keep_raw = keep_raw

    @property
    def x_bounds(self):
        return self.flow.x_bounds

    @property
    def x_labels(self):
        return self.flow.x_labels

    @property
    def z_bounds(self):
        return self.flow.z_bounds

    def evaluate(self, x, z, seed: int = 0) -> ObjectiveOutcome:
        sim = self.flow.evaluate(x, z, seed)
        curve = normalize_rtd(sim.times, sim.concentrations)
        fit = composite_objective(curve, self.alpha)
        raw = (sim.times, sim.concentrations) if self.keep_raw else None
        return ObjectiveOutcome(
            f=fit.f, cost=sim.cost, fidelity_used=tuple(sim.fidelity_used),
            seed=seed, n_star=fit.n_star, mse=fit.mse, rtd=curve, raw=raw,
        )


def surrogate_objective_evaluator(parameterisation: str = CROSS_SECTION,
                                  nominal: NominalCoil = NominalCoil(), *,
                                  n_c: int | None = None, n_l: int | None = None,
                                  frozen_path=None,
                                  config: SurrogateConfig = SurrogateConfig(),
                                  alpha: float = DEFAULT_ALPHA,
                                  keep_raw: bool = False) -> ObjectiveEvaluator:
    """Built-in surrogate wrapped into the campaign evaluator contract."""
    flow = SurrogateEvaluator(parameterisation, nominal, n_c=n_c, n_l=n_l,
                              frozen_path=frozen_path, config=config)
    return ObjectiveEvaluator(flow, alpha=alpha, keep_raw=keep_raw)


def doe_sample(space: DesignSpace, n: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Latin-hypercube sample over the joint design-fidelity box.

    Sampling x and z jointly makes the initial set span the cost spectrum.
    Deterministic for a given seed.
    """
    if n < 2:
        raise ValueError("design of experiments needs n >= 2")
    d = space.dim_x + space.dim_z
    sampler = qmc.LatinHypercube(d=d, seed=np.random.default_rng([seed, _TAG_DOE]))
    unit = sampler.random(n)
    bounds = space.joint_bounds
    pts = bounds[:, 0] + unit * (bounds[:, 1] - bounds[:, 0])
    dx = space.dim_x
    return [(pts[i, :dx].copy(), pts[i, dx:].copy()) for i in range(n)]


def default_doe_size(space: DesignSpace) -> int:
    return max(10, space.dim_x + 2)


def _training_arrays(history, with_cost=False):
    xs, ys = [], []
    for e in history:
        if e.failed:
            continue
        xs.append(np.concatenate([e.x, np.asarray(e.z, dtype=float)]))
        ys.append(math.log(e.cost) if with_cost else e.f)
    return np.asarray(xs), np.asarray(ys)


def fit_objective_gp(space: DesignSpace, history, seed: int = 0,
                     config: CampaignConfig = CampaignConfig(),
                     initial=None) -> GPModel:
    """ARD GP over (x, z) on the objective, normalised to the space box."""
    xs, ys = _training_arrays(history)
    if xs.shape[0] < 2:
        raise ValueError("need at least 2 successful evaluations to fit")
    return fit_hyperparameters(xs, ys, seed=seed, n_restarts=config.gp_restarts,
                               input_bounds=space.joint_bounds,
                               initial_log_hypers=initial)


def fit_cost_gp(space: DesignSpace, history, seed: int = 0,
                config: CampaignConfig = CampaignConfig(),
                initial=None) -> GPModel:
    """ARD GP over (x, z) on log cost; exponentiation keeps predictions positive."""
    xs, ys = _training_arrays(history, with_cost=True)
    if xs.shape[0] < 2:
        raise ValueError("need at least 2 successful evaluations to fit")
    return fit_hyperparameters(xs, ys, seed=seed, n_restarts=config.gp_restarts,
                               input_bounds=space.joint_bounds,
                               initial_log_hypers=initial)


def predicted_cost(cost_gp: GPModel, x, z) -> np.ndarray:
    xz = np.hstack([np.atleast_2d(x), np.atleast_2d(z)])
    mu, _ = gp_posterior(cost_gp, xz)
    return np.exp(mu)


def acquisition(x, z, objective_gp: GPModel, cost_gp: GPModel, space: DesignSpace,
                beta: float = 1.5, epsilon_gamma: float = 1e-2) -> np.ndarray:
    """Cost-adjusted acquisition value for candidate rows (x_i, z_i).

    numerator  : optimistic bound on -f at (x, z_max) (see module docstring)
    denominator: predicted cost at (x, z) times the floored fidelity
                 correlation discount sqrt(1 - k((x,z),(x,z_max))^2)
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    k = x.shape[0]
    xz = np.hstack([x, z])
    xz_star = np.hstack([x, np.tile(space.z_star, (k, 1))])
    mu_f, sigma_f = gp_posterior(objective_gp, xz_star)
    numerator = -mu_f + math.sqrt(beta) * sigma_f
    mu_cost = np.exp(gp_posterior(cost_gp, xz)[0])
    corr = kernel_correlation(objective_gp.kernel, xz, xz_star)
    discount = np.maximum(epsilon_gamma, np.sqrt(np.maximum(1.0 - corr**2, 0.0)))
    return numerator / (mu_cost * discount)


def _coordinate_maximize(fn, bounds: np.ndarray, starts: np.ndarray,
                         sweeps: int, grid: int) -> tuple[np.ndarray, float, np.ndarray]:
    """Batched coordinate-descent ascent from multiple starts.

    Returns (best point, best value, per-start start values).  The line
    search grid always contains the current coordinate, so values never
    decrease and the final best dominates every starting point.
    """
    pts = starts.copy()
    n, d = pts.shape
    vals = fn(pts)
    start_vals = vals.copy()
    for _ in range(sweeps):
        for dim in range(d):
            levels = np.linspace(bounds[dim, 0], bounds[dim, 1], grid)
            cand = np.repeat(pts[:, None, :], grid, axis=1)
            cand[:, :, dim] = levels[None, :]
            cand_vals = fn(cand.reshape(-1, d)).reshape(n, grid)
            best = np.argmax(cand_vals, axis=1)
            better = cand_vals[np.arange(n), best] > vals
            pts[better, dim] = levels[best[better]]
            vals[better] = cand_vals[np.arange(n), best][better]
    i = int(np.argmax(vals))
    return pts[i].copy(), float(vals[i]), start_vals


def maximize_acquisition(objective_gp: GPModel, cost_gp: GPModel, space: DesignSpace,
                         seed: int = 0, config: CampaignConfig = CampaignConfig()
                         ) -> tuple[np.ndarray, np.ndarray, float]:
    """Multi-start bounded search over the continuous joint box.

    Returns (x, z, value) with z continuous; the evaluator rounds it.
    Deterministic per seed, and the returned value dominates the
    acquisition at every start.
    """
    bounds = space.joint_bounds
    d = bounds.shape[0]
    sampler = qmc.LatinHypercube(d=d, seed=np.random.default_rng([seed, _TAG_ACQ]))
    starts = bounds[:, 0] + sampler.random(config.acq_starts) * (bounds[:, 1] - bounds[:, 0])

    def fn(pts):
        return acquisition(pts[:, :space.dim_x], pts[:, space.dim_x:],
                           objective_gp, cost_gp, space,
                           beta=config.beta, epsilon_gamma=config.epsilon_gamma)

    best, value, _ = _coordinate_maximize(fn, bounds, starts,
                                          config.acq_sweeps, config.acq_grid)
    return best[:space.dim_x], best[space.dim_x:], value


def posterior_best_x(objective_gp: GPModel, space: DesignSpace, seed: int = 0,
                     n_starts: int = 16, sweeps: int = 2, grid: int = 9) -> np.ndarray:
    """Minimiser of the posterior mean objective over X at z = z_max."""
    bounds = space.x_bounds
    sampler = qmc.LatinHypercube(d=space.dim_x,
                                 seed=np.random.default_rng([seed, _TAG_STOP]))
    starts = bounds[:, 0] + sampler.random(n_starts) * (bounds[:, 1] - bounds[:, 0])

    def fn(pts):
        xz = np.hstack([pts, np.tile(space.z_star, (pts.shape[0], 1))])
        return -gp_posterior(objective_gp, xz)[0]

    best, _, _ = _coordinate_maximize(fn, bounds, starts, sweeps, grid)
    return best


@dataclass
class StopDecision:
    stop: bool
    reason: str
    predicted_final_cost: float | None = None
    x_best: np.ndarray | None = None


def should_stop(state: CampaignState, objective_gp: GPModel, cost_gp: GPModel,
                seed: int = 0) -> StopDecision:
    """Budget-reserve rule: stop when the remaining budget cannot cover
    p_c times the predicted cost of one highest-fidelity evaluation at the
    predicted-best design, so the guaranteed final run still fits."""
    remaining = state.budget_remaining
    if remaining <= 0:
        return StopDecision(True, "budget-exhausted")
    x_best = posterior_best_x(objective_gp, state.space, seed=seed,
                              n_starts=state.config.stop_check_starts)
    pred = float(predicted_cost(cost_gp, x_best, state.space.z_star)[0])
    if remaining < state.config.p_c * pred:
        return StopDecision(True, "budget-reserve", pred, x_best)
    return StopDecision(False, "continue", pred, x_best)


def _evaluate_and_record(state: CampaignState, evaluator, x, z,
                         checkpoint_path=None) -> Evaluation:
    idx = len(state.history)
    eval_seed = _derive_seed(state.rng_seed, _TAG_EVAL, idx)
    z_arr = np.asarray(z, dtype=float).ravel()
    try:
        out = evaluator.evaluate(np.asarray(x, dtype=float), z_arr, eval_seed)
        ev = Evaluation(
            x=x, z=tuple(out.fidelity_used), f=float(out.f), cost=float(out.cost),
            n_star=out.n_star, mse=out.mse, rtd=out.rtd, seed=eval_seed,
            clock=state.budget_spent + float(out.cost),
            raw=out.raw if state.config.keep_raw else None,
        )
    except EVALUATION_ERRORS as err:
        ev = Evaluation(
            x=x, z=tuple(int(round(v)) for v in z_arr), f=None, cost=0.0,
            seed=eval_seed, clock=state.budget_spent, failed=True, error=str(err),
        )
    state.history.append(ev)
    _check_failure_streak(state)
    _checkpoint(state, checkpoint_path)
    return ev


def _check_failure_streak(state: CampaignState) -> None:
    streak = 0
    for e in reversed(state.history):
        if not e.failed:
            break
        streak += 1
    if streak >= state.config.min_consecutive_failures and streak > 0.5 * len(state.history):
        raise CampaignError(
            f"{streak} consecutive evaluator failures out of {len(state.history)} "
            f"attempts; last error: {state.history[-1].error}"
        )


def _checkpoint(state: CampaignState, path) -> None:
    if path is None:
        return
    from . import persist

    persist.save_checkpoint(state, path)
    persist.write_iteration_csv(state, str(path) + ".iterations.csv")


def _snapshot(iteration: int, objective_gp: GPModel, cost_gp: GPModel) -> dict:
    def gp_part(model):
        return {
            "lengthscales": list(model.meta.get("normalized_lengthscales", [])),
            "signal_variance": float(model.kernel.signal_variance),
            "noise_variance": float(model.noise_variance),
            "prior_mean": float(model.prior_mean),
            "log_marginal_likelihood": float(model.meta.get("log_marginal_likelihood", 0.0)),
            "log_hypers": [float(v) for v in model.meta.get("log_hypers", [])],
        }

    return {"iteration": iteration, "objective": gp_part(objective_gp),
            "cost": gp_part(cost_gp)}


def finalize(state: CampaignState, evaluator, objective_gp: GPModel | None,
             cost_gp: GPModel | None, checkpoint_path=None) -> CampaignState:
    """Guarantee an actually-evaluated highest-fidelity incumbent.

    Evaluates the posterior-mean minimiser at z_max unless an existing
    highest-fidelity evaluation already has an equal or better predicted
    value; the incumbent is then the best observed highest-fidelity
    evaluation.  Falls back to the best prior one if the final evaluation
    fails; with none available the campaign is flagged incomplete.
    """
    z_star = state.space.z_star
    z_star_rounded = state.space.z_star_rounded

    def high_fidelity_indices():
        return [i for i, e in enumerate(state.history)
                if not e.failed and e.z == z_star_rounded]

    if objective_gp is not None:
        seed = _derive_seed(state.rng_seed, _TAG_FINAL, len(state.history))
        x_hat = posterior_best_x(objective_gp, state.space, seed=seed)
        mu_hat = float(gp_posterior(
            objective_gp, np.concatenate([x_hat, z_star])[None, :])[0][0])
        existing = high_fidelity_indices()
        need_eval = True
        if existing:
            xs = np.vstack([np.concatenate([state.history[i].x, z_star]) for i in existing])
            mu_existing = gp_posterior(objective_gp, xs)[0]
            if float(np.min(mu_existing)) <= mu_hat + 1e-12:
                need_eval = False
        if need_eval and state.budget_remaining > 0:
            _evaluate_and_record(state, evaluator, x_hat, z_star, checkpoint_path)
        elif need_eval:
            state.warnings.append("no budget left for the final highest-fidelity run")

    candidates = high_fidelity_indices()
    if candidates:
        state.incumbent_index = min(candidates, key=lambda i: state.history[i].f)
        state.complete = True
    else:
        state.warnings.append("campaign incomplete: no highest-fidelity evaluation")
        state.incumbent_index = None
        state.complete = False
    _checkpoint(state, checkpoint_path)
    return state


def run_campaign(space: DesignSpace, evaluator, budget: float,
                 config: CampaignConfig | None = None, seed: int = 0,
                 parameterisation: str = "custom",
                 checkpoint_path=None, predecessor: dict | None = None) -> CampaignState:
    """Run a full campaign; see the module docstring for the loop."""
    config = config or CampaignConfig()
    n_doe = config.doe_size if config.doe_size is not None else default_doe_size(space)
    state = CampaignState(space=space, parameterisation=parameterisation,
                          config=config, budget_total=float(budget),
                          rng_seed=int(seed), n_doe=n_doe, predecessor=predecessor)
    return _continue_campaign(state, evaluator, checkpoint_path)


def resume_campaign(checkpoint_path, evaluator) -> CampaignState:
    """Continue a checkpointed campaign to completion (idempotent)."""
    from . import persist

    state = persist.load_checkpoint(checkpoint_path)
    if state.complete:
        return state
    return _continue_campaign(state, evaluator, checkpoint_path)


def _continue_campaign(state: CampaignState, evaluator, checkpoint_path) -> CampaignState:
    space = state.space
    config = state.config
    seed = state.rng_seed

    doe_points = doe_sample(space, state.n_doe, seed)
    while len(state.history) < state.n_doe:
        x, z = doe_points[len(state.history)]
        _evaluate_and_record(state, evaluator, x, z, checkpoint_path)

    objective_gp = cost_gp = None
    while True:
        t = state.iterations
        if len(state.successful()) < 2:
            state.warnings.append("too few successful evaluations to model")
            break
        prev = state.gp_snapshots[-1] if state.gp_snapshots else None
        objective_gp = fit_objective_gp(
            space, state.history, seed=_derive_seed(seed, _TAG_FIT_OBJ, t),
            config=config,
            initial=prev["objective"]["log_hypers"] if prev else None,
        )
        cost_gp = fit_cost_gp(
            space, state.history, seed=_derive_seed(seed, _TAG_FIT_COST, t),
            config=config,
            initial=prev["cost"]["log_hypers"] if prev else None,
        )
        decision = should_stop(state, objective_gp, cost_gp,
                               seed=_derive_seed(seed, _TAG_STOP, t))
        if decision.stop:
            break
        if t >= config.max_iterations:
            state.warnings.append("iteration-cap")
            break
        state.gp_snapshots.append(_snapshot(t, objective_gp, cost_gp))
        x, z, _ = maximize_acquisition(objective_gp, cost_gp, space,
                                       seed=_derive_seed(seed, _TAG_ACQ, t),
                                       config=config)
        _evaluate_and_record(state, evaluator, x, z, checkpoint_path)

    return finalize(state, evaluator, objective_gp, cost_gp, checkpoint_path)


def run_sequential_joint(path_space: DesignSpace, cross_space: DesignSpace,
                         make_evaluator, budgets: tuple[float, float],
                         seed: int = 0, config: CampaignConfig | None = None,
                         checkpoint_paths: tuple | None = None) -> CampaignState:
    """Two-stage strategy: optimise the coil path, freeze it, then optimise
    the cross-section on the frozen path.

    ``make_evaluator(parameterisation, frozen_path_vector_or_None)`` builds
    the stage evaluators.  The returned state is the second campaign's, with
    a reference to the first stage under ``predecessor``.  No ordering
    between the two stages' objectives is implied: the spaces differ.
    """
    cp1, cp2 = checkpoint_paths if checkpoint_paths else (None, None)
    stage1 = run_campaign(path_space, make_evaluator(COIL_PATH, None), budgets[0],
                          config=config, seed=seed, parameterisation=COIL_PATH,
                          checkpoint_path=cp1)
    if not stage1.complete or stage1.incumbent is None:
        raise CampaignError(
            f"path stage incomplete (warnings: {stage1.warnings})"
        )
    frozen = stage1.incumbent.x.copy()
    stage2 = run_campaign(
        cross_space, make_evaluator(CROSS_SECTION, frozen), budgets[1],
        config=config, seed=seed + 1, parameterisation="joint-sequential",
        checkpoint_path=cp2,
        predecessor={
            "parameterisation": COIL_PATH,
            "incumbent_x": [float(v) for v in frozen],
            "incumbent_f": float(stage1.incumbent.f),
            "checkpoint": str(cp1) if cp1 else None,
        },
    )
    return stage2


def default_sequential_factory(nominal: NominalCoil = NominalCoil(), *,
                               n_c: int | None = None, n_l: int | None = None,
                               config: SurrogateConfig = SurrogateConfig()):
    """make_evaluator for :func:`run_sequential_joint` on the built-in surrogate."""

    def make(parameterisation, frozen_path):
        return surrogate_objective_evaluator(
            parameterisation, nominal, n_c=n_c, n_l=n_l,
            frozen_path=frozen_path, config=config,
        )

    return make
