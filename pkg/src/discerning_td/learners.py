"""Online linear prediction algorithms over a shared eligibility-trace core.

All updates share the one-step error delta = R + gamma * v(S') - v(S) with
v(TERMINAL) = 0 and differ only in how the trace is built and whether the
update is re-weighted at the visited state.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .emphasis import EmphasisKind, EmphasisSpec, EmphasisState, \
    init_emphasis_state, refresh_adaptive, update_counts
from .mrp import TERMINAL, FeatureMap, MarkovRewardProcess, \
    sample_initial_state, sample_transition


class Algorithm(str, enum.Enum):
    TD = "TD"
    DTD = "DTD"
    ETD = "ETD"
    PTD = "PTD"
    TDW = "TDW"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class DecayingAlpha:
    """Step sizes a / (1 + t/b): square-summable but not summable."""

    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0.0 or self.b <= 0.0:
            raise ValueError("schedule parameters must be positive")

    def value(self, step: int) -> float:
        return self.a / (1.0 + step / self.b)


@dataclass(frozen=True)
class AlgoConfig:
    algorithm: Algorithm
    lam: float
    alpha: object  # float or DecayingAlpha
    emphasis: EmphasisSpec = field(
        default_factory=lambda: EmphasisSpec(EmphasisKind.CONSTANT))

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if isinstance(self.alpha, DecayingAlpha):
            return
        alpha = float(self.alpha)
        if alpha <= 0.0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "alpha", alpha)

    def alpha_at(self, step: int) -> float:
        if isinstance(self.alpha, DecayingAlpha):
            return self.alpha.value(step)
        return self.alpha


@dataclass
class LearnerState:
    """Weights, eligibility trace and per-episode scalars for one run."""

    theta: np.ndarray
    trace: np.ndarray
    followon: float = 0.0
    step_count: int = 0


def init_learner_state(n_features: int) -> LearnerState:
    return LearnerState(theta=np.zeros(n_features), trace=np.zeros(n_features))


def reset_episode(learner: LearnerState) -> None:
    """Clear the trace and follow-on accumulator at an episode start."""
    learner.trace = np.zeros_like(learner.trace)
    learner.followon = 0.0


def _phi(feature_map: FeatureMap, state: int) -> np.ndarray:
    if state == TERMINAL:
        return np.zeros(feature_map.n_features)
    return feature_map.phi[state]


def _delta(reward, gamma, phi_s, phi_next, theta) -> float:
    if not math.isfinite(reward):
        raise ValueError("non-finite reward")
    return reward + gamma * float(phi_next @ theta) - float(phi_s @ theta)


def td_lambda_step(state, reward, next_state, learner: LearnerState,
                   config: AlgoConfig, mrp: MarkovRewardProcess,
                   feature_map: FeatureMap) -> LearnerState:
    """Accumulating trace: e = gamma*lam*e + phi; theta += alpha*delta*e."""
    gamma = mrp.discount
    phi_s = _phi(feature_map, state)
    phi_n = _phi(feature_map, next_state)
    delta = _delta(reward, gamma, phi_s, phi_n, learner.theta)
    alpha = config.alpha_at(learner.step_count)
    learner.trace = (gamma * config.lam) * learner.trace + phi_s
    learner.theta = learner.theta + (alpha * delta) * learner.trace
    learner.step_count += 1
    return learner


def dtd_step(state, reward, next_state, f_value: float, learner: LearnerState,
             config: AlgoConfig, mrp: MarkovRewardProcess,
             feature_map: FeatureMap) -> LearnerState:
    """Emphasis-weighted trace and update:
    e = gamma*lam*e + f*phi; theta += alpha*delta*e*f."""
    if not (math.isfinite(f_value) and f_value > 0.0):
        raise ValueError("emphasis value must be positive and finite")
    gamma = mrp.discount
    phi_s = _phi(feature_map, state)
    phi_n = _phi(feature_map, next_state)
    delta = _delta(reward, gamma, phi_s, phi_n, learner.theta)
    alpha = config.alpha_at(learner.step_count)
    learner.trace = (gamma * config.lam) * learner.trace + f_value * phi_s
    learner.theta = learner.theta + (alpha * delta * f_value) * learner.trace
    learner.step_count += 1
    return learner


def etd_step(state, reward, next_state, learner: LearnerState,
             config: AlgoConfig, mrp: MarkovRewardProcess,
             feature_map: FeatureMap) -> LearnerState:
    """Follow-on weighted trace with unit interest:
    F = gamma*F + 1; M = lam + (1-lam)*F; e = gamma*lam*e + M*phi."""
    gamma = mrp.discount
    phi_s = _phi(feature_map, state)
    phi_n = _phi(feature_map, next_state)
    delta = _delta(reward, gamma, phi_s, phi_n, learner.theta)
    alpha = config.alpha_at(learner.step_count)
    learner.followon = gamma * learner.followon + 1.0
    m = config.lam + (1.0 - config.lam) * learner.followon
    learner.trace = (gamma * config.lam) * learner.trace + m * phi_s
    learner.theta = learner.theta + (alpha * delta) * learner.trace
    learner.step_count += 1
    return learner


def ptd_step(state, reward, next_state, beta_value: float,
             learner: LearnerState, config: AlgoConfig,
             mrp: MarkovRewardProcess, feature_map: FeatureMap) -> LearnerState:
    """Preference-gated trace: e = gamma*lam*(1-beta)*e + beta*phi."""
    if not (math.isfinite(beta_value) and 0.0 <= beta_value <= 1.0):
        raise ValueError("preference value must lie in [0, 1]")
    gamma = mrp.discount
    phi_s = _phi(feature_map, state)
    phi_n = _phi(feature_map, next_state)
    delta = _delta(reward, gamma, phi_s, phi_n, learner.theta)
    alpha = config.alpha_at(learner.step_count)
    learner.trace = (gamma * config.lam * (1.0 - beta_value)) * learner.trace \
        + beta_value * phi_s
    learner.theta = learner.theta + (alpha * delta) * learner.trace
    learner.step_count += 1
    return learner


def tdw_step(state, reward, next_state, w_value: float, learner: LearnerState,
             config: AlgoConfig, mrp: MarkovRewardProcess,
             feature_map: FeatureMap) -> LearnerState:
    """Selective trace without the update re-weighting:
    e = gamma*lam*e + w*phi; theta += alpha*delta*e."""
    if not (math.isfinite(w_value) and w_value >= 0.0):
        raise ValueError("trace weight must be nonnegative and finite")
    gamma = mrp.discount
    phi_s = _phi(feature_map, state)
    phi_n = _phi(feature_map, next_state)
    delta = _delta(reward, gamma, phi_s, phi_n, learner.theta)
    alpha = config.alpha_at(learner.step_count)
    learner.trace = (gamma * config.lam) * learner.trace + w_value * phi_s
    learner.theta = learner.theta + (alpha * delta) * learner.trace
    learner.step_count += 1
    return learner


def _apply_step(state, reward, next_state, weight, learner, config, mrp,
                feature_map):
    algo = config.algorithm
    if algo is Algorithm.TD:
        return td_lambda_step(state, reward, next_state, learner, config,
                              mrp, feature_map)
    if algo is Algorithm.DTD:
        return dtd_step(state, reward, next_state, weight, learner, config,
                        mrp, feature_map)
    if algo is Algorithm.ETD:
        return etd_step(state, reward, next_state, learner, config, mrp,
                        feature_map)
    if algo is Algorithm.PTD:
        return ptd_step(state, reward, next_state, weight, learner, config,
                        mrp, feature_map)
    return tdw_step(state, reward, next_state, weight, learner, config, mrp,
                    feature_map)


def run_episode(mrp: MarkovRewardProcess, feature_map: FeatureMap,
                config: AlgoConfig, emphasis_state: EmphasisState,
                learner: LearnerState, rng, step_budget: int):
    """Run the configured algorithm for one episode.

    The trace resets at the episode start, count-based emphasis records each
    visit and adaptive emphasis is refreshed from the current weights before
    every update.  Stops at the terminal sink or once ``step_budget``
    transitions have been taken, whichever comes first.

    Returns ``(learner, emphasis_state, steps_used)``.
    """
    if step_budget < 0:
        raise ValueError("step_budget must be nonnegative")
    if step_budget == 0:
        return learner, emphasis_state, 0
    reset_episode(learner)
    state = sample_initial_state(mrp, rng)
    steps_used = 0
    while steps_used < step_budget:
        if emphasis_state.kind is EmphasisKind.COUNT_INVERSE:
            update_counts(state, emphasis_state)
        elif emphasis_state.kind is EmphasisKind.ABS_EXPECTED_TD_ERROR:
            refresh_adaptive(emphasis_state, mrp, feature_map, learner.theta)
        weight = float(emphasis_state.values[state])
        reward, next_state = sample_transition(mrp, state, rng)
        _apply_step(state, reward, next_state, weight, learner, config, mrp,
                    feature_map)
        steps_used += 1
        if next_state == TERMINAL:
            break
        state = next_state
    return learner, emphasis_state, steps_used


def new_run(mrp: MarkovRewardProcess, feature_map: FeatureMap,
            config: AlgoConfig):
    """Fresh learner and emphasis state for one run of ``config``."""
    return (init_learner_state(feature_map.n_features),
            init_emphasis_state(config.emphasis, mrp))
