"""Experiment harness: named benchmark tasks, vectorized multi-run
simulation of the learners, measurement records, aggregation and file
emission.

Runs are batched per hyperparameter cell: every run owns its own seed
stream, so results are independent of how runs are batched, and adding an
algorithm to a config never perturbs the streams of the others.
"""

import enum
import json
import zlib
from dataclasses import dataclass

import numpy as np

from .analysis import exact_solution, projection
from .emphasis import EmphasisKind
from .learners import Algorithm, AlgoConfig, DecayingAlpha
from .mrp import FeatureMap, MarkovRewardProcess, make_boyan_chain, \
    make_feature_map, make_noisy_chain, make_random_walk

CURVE_COLUMNS = ("task", "algorithm", "lambda", "alpha", "emphasis_kind",
                 "seed", "step", "mspbe")
AGGREGATE_COLUMNS = ("task", "algorithm", "lambda", "alpha", "emphasis_kind",
                     "step", "mean_mspbe", "std_mspbe", "n_runs")

# Sweep grids used when the CLI is not given explicit ones.
DEFAULT_ALPHA_GRID = tuple(2.0 ** -k for k in range(7, -1, -1))
DEFAULT_LAMBDA_GRID = (0.0, 0.4, 0.8, 0.9, 0.95, 1.0)


def resolve_task(name: str):
    """Map a task name to its environment; NOISY10 takes an optional
    reward level suffix, e.g. ``NOISY10:-1``."""
    key = str(name).strip().upper()
    if key.startswith("NOISY10"):
        level = 0.0
        if ":" in key:
            level = float(key.split(":", 1)[1])
        return make_noisy_chain(level)
    if key in ("RW5_LEFT", "RW5_MIDDLE", "RW5_RIGHT"):
        return make_random_walk(5, key.split("_")[1].lower())
    if key == "RW5_TABULAR":
        return make_random_walk(5, "middle")
    if key in ("RW5_INVERTED", "RW5_DEPENDENT"):
        mrp, _ = make_random_walk(5, "middle")
        return mrp, make_feature_map(key.split("_")[1].lower(), 5)
    if key == "BOYAN13":
        return make_boyan_chain()
    raise ValueError(f"unknown task {name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    algorithms: tuple
    runs: int
    steps: int
    eval_every: int
    base_seed: int

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not self.algorithms:
            raise ValueError("need at least one algorithm")
        if self.runs < 1 or self.steps < 1 or self.eval_every < 1:
            raise ValueError("runs, steps and eval_every must be positive")
        if self.steps % self.eval_every != 0:
            raise ValueError("eval_every must divide steps")
        if self.base_seed < 0:
            raise ValueError("base_seed must be nonnegative")


@dataclass(frozen=True)
class CurveRecord:
    task: str
    algorithm: str
    lam: float
    alpha: float
    emphasis_kind: str
    seed: int
    step: int
    mspbe: float

    def __post_init__(self):
        if not self.mspbe >= 0.0:
            raise ValueError("mspbe must be nonnegative")


@dataclass(frozen=True)
class AggregateRecord:
    task: str
    algorithm: str
    lam: float
    alpha: float
    emphasis_kind: str
    step: int
    mean_mspbe: float
    std_mspbe: float
    n_runs: int

    def __post_init__(self):
        if not self.std_mspbe >= 0.0:
            raise ValueError("std_mspbe must be nonnegative")


@dataclass
class SimulationOutput:
    """Result of one batched cell simulation."""

    eval_steps: np.ndarray
    curves: np.ndarray         # (n_runs, n_eval_points)
    final_theta: np.ndarray    # (n_runs, n_features)
    theta_history: np.ndarray | None = None


def emphasis_label(config: AlgoConfig) -> str:
    """Emphasis recorded per cell: TD and ETD take no emphasis input."""
    if config.algorithm in (Algorithm.TD, Algorithm.ETD):
        return "none"
    return config.emphasis.kind.value


def cell_key(task: str, config: AlgoConfig) -> int:
    """Stable 32-bit identifier of a hyperparameter cell for seed spawning."""
    alpha = config.alpha
    alpha_text = repr(alpha) if isinstance(alpha, DecayingAlpha) \
        else repr(float(alpha))
    text = "|".join([
        str(task), config.algorithm.value, repr(float(config.lam)), alpha_text,
        emphasis_label(config), repr(float(config.emphasis.epsilon_floor)),
    ])
    return zlib.crc32(text.encode("utf-8"))


def run_seed_sequences(task: str, config: AlgoConfig, base_seed: int,
                       n_runs: int):
    key = cell_key(task, config)
    return [np.random.SeedSequence(entropy=base_seed + run, spawn_key=(key,))
            for run in range(n_runs)]


def _static_emphasis_values(config: AlgoConfig, mrp: MarkovRewardProcess):
    from .emphasis import init_emphasis_state
    return init_emphasis_state(config.emphasis, mrp).values


def simulate_curves(mrp: MarkovRewardProcess, feature_map: FeatureMap,
                    config: AlgoConfig, seed_seqs, steps: int,
                    eval_every: int = 0,
                    record_theta: bool = False) -> SimulationOutput:
    """Simulate a continuing episodic stream for every seed in parallel.

    Episodes restart from the initial distribution whenever the chain exits;
    the step budget counts transitions across episodes.  Each seed stream
    draws one uniform for the initial state and then, per step, one
    transition uniform, one restart uniform and one noise normal, so a run's
    trajectory depends only on its own seed.  Non-finite error measurements
    (diverged cells) are recorded as +inf.
    """
    n_runs = len(seed_seqs)
    n = mrp.n_states
    k = feature_map.n_features
    u_init = np.empty(n_runs)
    u_trans = np.empty((n_runs, steps))
    u_restart = np.empty((n_runs, steps))
    z_noise = np.empty((n_runs, steps))
    for i, seq in enumerate(seed_seqs):
        rng = np.random.default_rng(seq)
        u_init[i] = rng.random()
        u_trans[i] = rng.random(steps)
        u_restart[i] = rng.random(steps)
        z_noise[i] = rng.standard_normal(steps)

    gamma = mrp.discount
    lam = config.lam
    glam = gamma * lam
    p = mrp.transition
    cum_p = np.cumsum(p, axis=1)
    cum_init = np.cumsum(mrp.initial_dist)
    phi = feature_map.phi
    phi_pad = np.vstack([phi, np.zeros((1, k))])
    phi_t = phi.T
    p_t = p.T
    r_pi = mrp.expected_reward
    sigma = mrp.reward_noise_std
    has_noise = bool(sigma.any())
    if mrp.transition_reward is not None:
        base_pad = np.hstack([mrp.transition_reward,
                              mrp.terminal_reward[:, None]])
    else:
        base_pad = None

    if eval_every > 0:
        sol = exact_solution(mrp)
        d = sol.d_pi
        proj_t = projection(feature_map, d).T

    algo = config.algorithm
    eps = config.emphasis.epsilon_floor
    needs_weight = algo in (Algorithm.DTD, Algorithm.PTD, Algorithm.TDW)
    kind = config.emphasis.kind
    count_mode = needs_weight and kind is EmphasisKind.COUNT_INVERSE
    adaptive_mode = needs_weight and kind is EmphasisKind.ABS_EXPECTED_TD_ERROR
    static_w = None
    if needs_weight and not (count_mode or adaptive_mode):
        static_w = _static_emphasis_values(config, mrp)
    counts = np.zeros((n_runs, n)) if count_mode else None

    if isinstance(config.alpha, DecayingAlpha):
        alphas = config.alpha.value(np.arange(steps, dtype=np.float64))
    else:
        alphas = None
        alpha_const = float(config.alpha)

    if eval_every > 0:
        eval_steps = np.arange(eval_every, steps + 1, eval_every)
    else:
        eval_steps = np.empty(0, dtype=np.int64)
    curves = np.full((n_runs, len(eval_steps)), np.inf)
    theta_hist = np.empty((steps, n_runs, k)) if record_theta else None

    rows = np.arange(n_runs)
    s = np.minimum((u_init[:, None] >= cum_init[None, :]).sum(axis=1), n - 1)
    theta = np.zeros((n_runs, k))
    trace = np.zeros((n_runs, k))
    followon = np.zeros(n_runs)
    eval_idx = 0

    with np.errstate(all="ignore"):
        for t in range(steps):
            if count_mode:
                counts[rows, s] += 1.0
                imputed = np.where(counts > 0.0, counts, 1.0)
                share = imputed / imputed.sum(axis=1, keepdims=True)
                raw = 1.0 / share
                scaled = raw / raw.max(axis=1, keepdims=True)
                w = np.maximum(np.sqrt(scaled), eps)[rows, s]
            elif adaptive_mode:
                v_all = theta @ phi_t
                raw = np.abs(r_pi[None, :] + gamma * (v_all @ p_t) - v_all)
                peak = raw.max(axis=1, keepdims=True)
                vals = np.where(peak > 0.0,
                                np.maximum(np.sqrt(raw / peak), eps), 1.0)
                w = vals[rows, s]
            elif needs_weight:
                w = static_w[s]

            nxt = (u_trans[:, t][:, None] >= cum_p[s]).sum(axis=1)
            term = nxt == n
            if base_pad is not None:
                reward = base_pad[s, nxt]
            else:
                reward = r_pi[s]
            if has_noise:
                reward = reward + sigma[s] * z_noise[:, t]
            phi_s = phi[s]
            phi_n = phi_pad[nxt]
            delta = reward + gamma * np.einsum("bk,bk->b", phi_n, theta) \
                - np.einsum("bk,bk->b", phi_s, theta)
            alpha = alpha_const if alphas is None else alphas[t]

            if algo is Algorithm.TD:
                trace = glam * trace + phi_s
                theta = theta + (alpha * delta)[:, None] * trace
            elif algo is Algorithm.DTD:
                trace = glam * trace + w[:, None] * phi_s
                theta = theta + ((alpha * delta) * w)[:, None] * trace
            elif algo is Algorithm.ETD:
                followon = gamma * followon + 1.0
                m = lam + (1.0 - lam) * followon
                trace = glam * trace + m[:, None] * phi_s
                theta = theta + (alpha * delta)[:, None] * trace
            elif algo is Algorithm.PTD:
                trace = (glam * (1.0 - w))[:, None] * trace \
                    + w[:, None] * phi_s
                theta = theta + (alpha * delta)[:, None] * trace
            else:  # TDW
                trace = glam * trace + w[:, None] * phi_s
                theta = theta + (alpha * delta)[:, None] * trace

            if record_theta:
                theta_hist[t] = theta

            if term.any():
                restart = np.minimum(
                    (u_restart[:, t][:, None] >= cum_init[None, :]).sum(axis=1),
                    n - 1)
                s = np.where(term, restart, nxt)
                trace[term] = 0.0
                followon[term] = 0.0
            else:
                s = nxt

            if eval_idx < len(eval_steps) and t + 1 == eval_steps[eval_idx]:
                v_all = theta @ phi_t
                tv = r_pi[None, :] + gamma * (v_all @ p_t)
                err = v_all - tv @ proj_t
                vals = np.sqrt(np.einsum("bn,n,bn->b", err, d, err))
                curves[:, eval_idx] = np.where(np.isfinite(vals), vals, np.inf)
                eval_idx += 1

    return SimulationOutput(eval_steps=eval_steps, curves=curves,
                            final_theta=theta.copy(),
                            theta_history=theta_hist)


def run_experiment(config: ExperimentConfig, environment=None):
    """Simulate every configured cell and return the measurement records.

    ``environment`` overrides the named task with an explicit
    (mrp, feature_map) pair; the task string still labels the records.
    Deterministic for a fixed config and base seed.
    """
    mrp, fm = environment if environment is not None else resolve_task(config.task)
    records = []
    for algo in config.algorithms:
        if isinstance(algo.alpha, DecayingAlpha):
            raise ValueError("experiment records require constant step sizes")
        seqs = run_seed_sequences(config.task, algo, config.base_seed,
                                  config.runs)
        out = simulate_curves(mrp, fm, algo, seqs, config.steps,
                              config.eval_every)
        label = emphasis_label(algo)
        for run in range(config.runs):
            seed = config.base_seed + run
            for j, step in enumerate(out.eval_steps):
                records.append(CurveRecord(
                    task=config.task, algorithm=algo.algorithm.value,
                    lam=float(algo.lam), alpha=float(algo.alpha),
                    emphasis_kind=label, seed=seed, step=int(step),
                    mspbe=float(out.curves[run, j])))
    return records


# ---------------------------------------------------------------------------
# Selection and aggregation
# ---------------------------------------------------------------------------


class SelectionCriterion(str, enum.Enum):
    FINAL_MSPBE = "final_mspbe"
    AUC = "auc"


@dataclass(frozen=True)
class BestCell:
    task: str
    algorithm: str
    lam: float
    alpha: float
    emphasis_kind: str
    score: float


def _cell_of(record) -> tuple:
    return (record.task, record.algorithm, record.lam, record.alpha,
            record.emphasis_kind)


def select_best(records, criterion=SelectionCriterion.FINAL_MSPBE):
    """Best hyperparameter cell per (task, algorithm): smallest mean score,
    ties broken by smaller alpha then smaller lambda."""
    records = list(records)
    if not records:
        raise ValueError("no records to select from")
    criterion = SelectionCriterion(criterion)
    by_cell = {}
    for rec in records:
        by_cell.setdefault(_cell_of(rec), {}).setdefault(rec.step, []).append(
            rec.mspbe)
    best = {}
    for cell, by_step in by_cell.items():
        if criterion is SelectionCriterion.FINAL_MSPBE:
            score = float(np.mean(by_step[max(by_step)]))
        else:
            score = float(np.mean([np.mean(v) for v in by_step.values()]))
        if not np.isfinite(score):
            score = float("inf")
        task, algorithm, lam, alpha, kind = cell
        key = (task, algorithm)
        order = (score, alpha, lam)
        if key not in best or order < best[key][0]:
            best[key] = (order, BestCell(task, algorithm, lam, alpha, kind,
                                         score))
    return {key: value[1] for key, value in best.items()}


def aggregate(records):
    """Mean and sample standard deviation across runs, per step, for records
    that all belong to one hyperparameter cell."""
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    cells = {_cell_of(rec) for rec in records}
    if len(cells) > 1:
        raise ValueError("records span multiple hyperparameter cells")
    task, algorithm, lam, alpha, kind = cells.pop()
    by_step = {}
    for rec in records:
        by_step.setdefault(rec.step, []).append(rec.mspbe)
    out = []
    for step in sorted(by_step):
        values = np.asarray(by_step[step])
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        if not np.isfinite(std):
            std = float("inf")
        out.append(AggregateRecord(
            task=task, algorithm=algorithm, lam=lam, alpha=alpha,
            emphasis_kind=kind, step=step, mean_mspbe=float(np.mean(values)),
            std_mspbe=std, n_runs=len(values)))
    return out


def aggregate_all(records):
    """Aggregate each hyperparameter cell separately, preserving the order
    in which cells first appear."""
    groups = {}
    for rec in records:
        groups.setdefault(_cell_of(rec), []).append(rec)
    out = []
    for group in groups.values():
        out.extend(aggregate(group))
    return out


# ---------------------------------------------------------------------------
# File emission
# ---------------------------------------------------------------------------


def _curve_row(rec: CurveRecord):
    return [rec.task, rec.algorithm, rec.lam, rec.alpha, rec.emphasis_kind,
            rec.seed, rec.step, rec.mspbe]


def _aggregate_row(rec: AggregateRecord):
    return [rec.task, rec.algorithm, rec.lam, rec.alpha, rec.emphasis_kind,
            rec.step, rec.mean_mspbe, rec.std_mspbe, rec.n_runs]


def _format_field(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit(rows, path, fmt: str = "csv", kind: str | None = None) -> None:
    """Write records to ``path`` as CSV (fixed column order, one header row,
    line-feed endings) or as a JSON array of flat objects."""
    rows = list(rows)
    if kind is None:
        kind = "aggregate" if rows and isinstance(rows[0], AggregateRecord) \
            else "curve"
    if kind not in ("curve", "aggregate"):
        raise ValueError(f"unknown record kind {kind!r}")
    columns = CURVE_COLUMNS if kind == "curve" else AGGREGATE_COLUMNS
    to_row = _curve_row if kind == "curve" else _aggregate_row
    fmt = str(fmt).lower()
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(",".join(columns) + "\n")
            for rec in rows:
                handle.write(",".join(_format_field(v) for v in to_row(rec))
                             + "\n")
    elif fmt == "json":
        payload = [dict(zip(columns, to_row(rec))) for rec in rows]
        with open(path, "w", encoding="utf-8", newline="") as handle:
            json.dump(payload, handle, indent=1)
            handle.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _rows_from_file(path, fmt):
    if fmt is None:
        fmt = "json" if str(path).endswith(".json") else "csv"
    if fmt == "json":
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def load_records(path, fmt: str | None = None):
    """Parse a curve file produced by :func:`emit`."""
    out = []
    for row in _rows_from_file(path, fmt):
        out.append(CurveRecord(
            task=row["task"], algorithm=row["algorithm"],
            lam=float(row["lambda"]), alpha=float(row["alpha"]),
            emphasis_kind=row["emphasis_kind"], seed=int(row["seed"]),
            step=int(row["step"]), mspbe=float(row["mspbe"])))
    return out


def load_aggregates(path, fmt: str | None = None):
    """Parse an aggregate file produced by :func:`emit`."""
    out = []
    for row in _rows_from_file(path, fmt):
        out.append(AggregateRecord(
            task=row["task"], algorithm=row["algorithm"],
            lam=float(row["lambda"]), alpha=float(row["alpha"]),
            emphasis_kind=row["emphasis_kind"], step=int(row["step"]),
            mean_mspbe=float(row["mean_mspbe"]),
            std_mspbe=float(row["std_mspbe"]), n_runs=int(row["n_runs"])))
    return out
