"""Forward-view targets: n-step returns, the lambda-return, its
emphasis-weighted generalization in both its interpolation and
error-sum forms, and the matching advantage estimator.

Conventions for finite trajectories: the value of TERMINAL is zero, rewards
and emphasis weights are zero beyond the final transition, and truncated
trajectories bootstrap from the value of their last observed state.
"""

from dataclasses import dataclass

import numpy as np

from .mrp import TERMINAL, FeatureMap, MarkovRewardProcess, sample_transition

__all__ = [
    "Trajectory", "ReturnParams", "simulate_trajectory", "n_step_return",
    "lambda_return", "identity_check", "discerning_return_interp",
    "discerning_return_tdsum", "dae",
]


@dataclass(frozen=True)
class Trajectory:
    """A rollout: visited states (the last entry may be TERMINAL) and one
    reward per transition."""

    states: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        rewards = np.asarray(self.rewards, dtype=np.float64)
        if states.ndim != 1 or rewards.ndim != 1:
            raise ValueError("states and rewards must be vectors")
        if len(states) != len(rewards) + 1:
            raise ValueError("need exactly one more state than rewards")
        if len(rewards) < 1:
            raise ValueError("trajectory needs at least one transition")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards contain non-finite entries")
        if np.any(states[:-1] < 0):
            raise ValueError("TERMINAL may appear only as the final state")
        states = states.copy()
        rewards = rewards.copy()
        states.flags.writeable = False
        rewards.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "rewards", rewards)

    @property
    def num_transitions(self) -> int:
        return len(self.rewards)

    @property
    def ends_terminal(self) -> bool:
        return int(self.states[-1]) == TERMINAL


@dataclass(frozen=True)
class ReturnParams:
    """Mixing rate, discount and the per-step positive emphasis values
    (one per transition, aligned with the visited states)."""

    lam: float
    gamma: float
    f_values: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        f = np.asarray(self.f_values, dtype=np.float64)
        if f.ndim != 1 or np.any(~np.isfinite(f)) or np.any(f <= 0.0):
            raise ValueError("f_values must be positive and finite")
        f = f.copy()
        f.flags.writeable = False
        object.__setattr__(self, "f_values", f)

    @classmethod
    def from_state_values(cls, f_state, traj: Trajectory, lam: float,
                          gamma: float) -> "ReturnParams":
        """Align a per-state emphasis vector with a trajectory."""
        f_state = np.asarray(f_state, dtype=np.float64)
        return cls(lam=lam, gamma=gamma,
                   f_values=f_state[traj.states[:-1]])


def simulate_trajectory(mrp: MarkovRewardProcess, rng,
                        max_steps: int = 100_000) -> Trajectory:
    """Roll out one episode (or a truncated rollout of ``max_steps``)."""
    cum = np.cumsum(mrp.initial_dist)
    state = min(int(np.searchsorted(cum, rng.random(), side="right")),
                mrp.n_states - 1)
    states = [state]
    rewards = []
    for _ in range(max_steps):
        reward, nxt = sample_transition(mrp, state, rng)
        rewards.append(reward)
        states.append(nxt)
        if nxt == TERMINAL:
            break
        state = nxt
    return Trajectory(np.array(states), np.array(rewards))


def _check_f(params: ReturnParams, traj: Trajectory) -> np.ndarray:
    f = params.f_values
    if len(f) != traj.num_transitions:
        raise ValueError("f_values must supply one weight per transition")
    return f


def _value(feature_map: FeatureMap, theta: np.ndarray, state: int) -> float:
    if state == TERMINAL:
        return 0.0
    return float(feature_map.phi[state] @ theta)


def n_step_return(traj: Trajectory, t: int, n: int, theta, feature_map: FeatureMap,
                  gamma: float) -> float:
    """Discounted n-step return from position ``t``, bootstrapping from the
    estimated value of the state reached (zero at or beyond TERMINAL)."""
    horizon = traj.num_transitions - t
    if not 0 <= t < traj.num_transitions:
        raise IndexError(f"t={t} outside trajectory")
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > horizon:
        if not traj.ends_terminal:
            raise IndexError("n-step horizon exceeds the truncated trajectory")
        n = horizon
    total = 0.0
    scale = 1.0
    for k in range(n):
        total += scale * traj.rewards[t + k]
        scale *= gamma
    total += scale * _value(feature_map, theta, int(traj.states[t + n]))
    return total


def lambda_return(traj: Trajectory, t: int, theta, feature_map: FeatureMap,
                  gamma: float, lam: float) -> float:
    """Exponentially mixed n-step returns; the final return absorbs the
    residual geometric weight."""
    horizon = traj.num_transitions - t
    if not 0 <= t < traj.num_transitions:
        raise IndexError(f"t={t} outside trajectory")
    reward_part = 0.0
    disc = 1.0
    lam_pow = 1.0
    total = 0.0
    for n in range(1, horizon + 1):
        reward_part += disc * traj.rewards[t + n - 1]
        disc *= gamma
        g_n = reward_part + disc * _value(feature_map, theta,
                                          int(traj.states[t + n]))
        if n < horizon:
            total += (1.0 - lam) * lam_pow * g_n
            lam_pow *= lam
        else:
            total += lam_pow * g_n
    return total


def identity_check(f_seq, lam: float) -> float:
    """Numerically evaluate the telescoping series whose weights generalize
    the (1 - lam) multiplier; the result must equal the first element.

    The sequence is constant-extended past its end, so the geometric tail
    sums to lam**(L-1) times the final value.  Requires lam < 1.
    """
    f = np.asarray(f_seq, dtype=np.float64)
    if f.ndim != 1 or f.size == 0 or np.any(f <= 0.0) or np.any(~np.isfinite(f)):
        raise ValueError("f_seq must be a nonempty positive vector")
    if not 0.0 <= lam < 1.0:
        raise ValueError("lam must lie in [0, 1)")
    total = 0.0
    lam_pow = 1.0
    for n in range(len(f) - 1):
        total += lam_pow * (f[n] - lam * f[n + 1])
        lam_pow *= lam
    return total + lam_pow * f[-1]


def discerning_return_interp(traj: Trajectory, t: int, params: ReturnParams,
                             theta, feature_map: FeatureMap) -> float:
    """Emphasis-weighted mixture of n-step returns, normalized by the weight
    at the starting state.

    The mixture coefficient on the n-step return is
    lam**(n-1) * (f[t+n-1] - lam * f[t+n]); all residual weight collapses
    onto the final (full-horizon) return.
    """
    f = _check_f(params, traj)
    if not 0 <= t < traj.num_transitions:
        raise IndexError(f"t={t} outside trajectory")
    f_t = f[t]
    if f_t <= 0.0:
        raise ValueError("emphasis at the start position must be positive")
    lam, gamma = params.lam, params.gamma
    horizon = traj.num_transitions - t
    reward_part = 0.0
    disc = 1.0
    lam_pow = 1.0
    total = 0.0
    for n in range(1, horizon + 1):
        reward_part += disc * traj.rewards[t + n - 1]
        disc *= gamma
        g_n = reward_part + disc * _value(feature_map, theta,
                                          int(traj.states[t + n]))
        if n < horizon:
            total += lam_pow * (f[t + n - 1] - lam * f[t + n]) * g_n
            lam_pow *= lam
        else:
            total += lam_pow * f[t + n - 1] * g_n
    return total / f_t


def discerning_return_tdsum(traj: Trajectory, t: int, params: ReturnParams,
                            theta, feature_map: FeatureMap) -> float:
    """Same target written as the start value plus the discounted sum of
    emphasis-weighted one-step errors (weights frozen at ``theta``)."""
    f = _check_f(params, traj)
    if not 0 <= t < traj.num_transitions:
        raise IndexError(f"t={t} outside trajectory")
    f_t = f[t]
    if f_t <= 0.0:
        raise ValueError("emphasis at the start position must be positive")
    lam, gamma = params.lam, params.gamma
    v_here = _value(feature_map, theta, int(traj.states[t]))
    total = 0.0
    scale = 1.0
    v_k = v_here
    for k in range(t, traj.num_transitions):
        v_next = _value(feature_map, theta, int(traj.states[k + 1]))
        delta = traj.rewards[k] + gamma * v_next - v_k
        total += scale * delta * f[k]
        scale *= gamma * lam
        v_k = v_next
    return v_here + total / f_t


def dae(traj: Trajectory, params: ReturnParams, theta,
        feature_map: FeatureMap) -> np.ndarray:
    """Advantage estimates for every position in one backward pass.

    The unnormalized tail obeys tail[t] = delta[t]*f[t] + gamma*lam*tail[t+1];
    each advantage divides the tail by its own emphasis weight.
    """
    f = _check_f(params, traj)
    lam, gamma = params.lam, params.gamma
    T = traj.num_transitions
    values = np.array([_value(feature_map, theta, int(s)) for s in traj.states])
    deltas = traj.rewards + gamma * values[1:] - values[:-1]
    out = np.empty(T)
    tail = 0.0
    for k in range(T - 1, -1, -1):
        tail = deltas[k] * f[k] + gamma * lam * tail
        out[k] = tail / f[k]
    return out
