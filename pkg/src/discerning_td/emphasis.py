"""Emphasis functions: positive state weights that shape both the size of a
state's own updates and how strongly its prediction error propagates back.

All normalized constructions share one pipeline: scale the raw positive
score into (0, 1] by its maximum, take the square root, and floor at a small
epsilon so the weight stays strictly positive.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .mrp import FeatureMap, MarkovRewardProcess, stationary_distribution

DEFAULT_EPSILON_FLOOR = 1e-3


class EmphasisKind(str, enum.Enum):
    CONSTANT = "constant"
    TABLE = "table"
    COUNT_INVERSE = "count_inverse"
    NOISE_PRIOR = "noise_prior"
    ABS_EXPECTED_TD_ERROR = "abs_expected_td"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class EmphasisSpec:
    """Declarative choice of emphasis; per-run state lives in EmphasisState."""

    kind: EmphasisKind
    constant: float = 1.0
    table: np.ndarray | None = None
    epsilon_floor: float = DEFAULT_EPSILON_FLOOR

    def __post_init__(self):
        kind = EmphasisKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not 0.0 < self.epsilon_floor < 1.0:
            raise ValueError("epsilon_floor must lie in (0, 1)")
        if kind is EmphasisKind.CONSTANT and not self.constant > 0.0:
            raise ValueError("constant emphasis must be positive")
        if kind is EmphasisKind.TABLE:
            if self.table is None:
                raise ValueError("table emphasis requires a table")
            table = np.asarray(self.table, dtype=np.float64)
            if table.ndim != 1 or np.any(table <= 0.0):
                raise ValueError("table entries must be positive")
            table = table.copy()
            table.flags.writeable = False
            object.__setattr__(self, "table", table)


@dataclass
class EmphasisState:
    """Mutable per-run emphasis values (plus visit counts when adaptive by
    visitation)."""

    kind: EmphasisKind
    values: np.ndarray
    epsilon_floor: float = DEFAULT_EPSILON_FLOOR
    visit_counts: np.ndarray | None = None


def _scale_sqrt_floor(raw: np.ndarray, epsilon_floor: float) -> np.ndarray:
    """Shared normalization: scale by the max, square-root, floor."""
    peak = raw.max()
    if peak == 0.0:
        return np.ones_like(raw)
    return np.maximum(np.sqrt(raw / peak), epsilon_floor)


def emphasis_from_counts(counts, epsilon_floor: float = DEFAULT_EPSILON_FLOOR):
    """Inverse normalized visitation counts, scaled and square-rooted.

    States never visited are imputed a count of one before normalizing so
    they receive maximal attention.  All-zero counts yield uniform weight 1.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("counts must be a nonempty vector")
    if np.any(counts < 0.0):
        raise ValueError("counts must be nonnegative")
    if not counts.any():
        return np.ones_like(counts)
    imputed = np.where(counts > 0.0, counts, 1.0)
    share = imputed / imputed.sum()
    return _scale_sqrt_floor(1.0 / share, epsilon_floor)


def emphasis_from_noise(sigma, epsilon_floor: float = DEFAULT_EPSILON_FLOOR):
    """Negative exponential of per-state noise levels, scaled and
    square-rooted: noisier states receive less weight."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0.0):
        raise ValueError("noise levels must be nonnegative")
    return _scale_sqrt_floor(np.exp(-sigma), epsilon_floor)


def emphasis_abs_expected_td(mrp: MarkovRewardProcess, feature_map: FeatureMap,
                             theta: np.ndarray,
                             epsilon_floor: float = DEFAULT_EPSILON_FLOOR):
    """Absolute expected one-step error under the true dynamics at ``theta``,
    normalized through the shared pipeline.

    When the current estimate is exactly self-consistent everywhere the raw
    score vanishes and the emphasis is uniform 1.
    """
    v = feature_map.phi @ np.asarray(theta, dtype=np.float64)
    raw = np.abs(mrp.expected_reward + mrp.discount * (mrp.transition @ v) - v)
    return _scale_sqrt_floor(raw, epsilon_floor)


def long_run_count_inverse(mrp: MarkovRewardProcess,
                           epsilon_floor: float = DEFAULT_EPSILON_FLOOR):
    """Limit of the count-inverse emphasis: visitation shares converge to the
    stationary distribution of the restart chain."""
    share = stationary_distribution(mrp)
    return _scale_sqrt_floor(1.0 / share, epsilon_floor)


def init_emphasis_state(spec: EmphasisSpec, mrp: MarkovRewardProcess) -> EmphasisState:
    n = mrp.n_states
    eps = spec.epsilon_floor
    if spec.kind is EmphasisKind.CONSTANT:
        return EmphasisState(spec.kind, np.full(n, spec.constant), eps)
    if spec.kind is EmphasisKind.TABLE:
        if spec.table.shape != (n,):
            raise ValueError(f"table length {spec.table.shape[0]} does not "
                             f"match {n} states")
        return EmphasisState(spec.kind, spec.table.copy(), eps)
    if spec.kind is EmphasisKind.COUNT_INVERSE:
        return EmphasisState(spec.kind, np.ones(n), eps,
                             visit_counts=np.zeros(n, dtype=np.int64))
    if spec.kind is EmphasisKind.NOISE_PRIOR:
        return EmphasisState(spec.kind,
                             emphasis_from_noise(mrp.reward_noise_std, eps), eps)
    # Adaptive emphasis starts uniform; it is refreshed from the current
    # weights before every update.
    return EmphasisState(spec.kind, np.ones(n), eps)


def update_counts(state_index: int, state: EmphasisState) -> EmphasisState:
    """Record a visit and refresh the count-inverse values in place."""
    if state.kind is not EmphasisKind.COUNT_INVERSE:
        raise ValueError("update_counts applies to count_inverse emphasis only")
    state.visit_counts[state_index] += 1
    state.values = emphasis_from_counts(state.visit_counts, state.epsilon_floor)
    return state


def refresh_adaptive(state: EmphasisState, mrp: MarkovRewardProcess,
                     feature_map: FeatureMap, theta: np.ndarray) -> EmphasisState:
    """Recompute adaptive emphasis values from the current weights."""
    if state.kind is EmphasisKind.ABS_EXPECTED_TD_ERROR:
        state.values = emphasis_abs_expected_td(mrp, feature_map, theta,
                                                state.epsilon_floor)
    return state
