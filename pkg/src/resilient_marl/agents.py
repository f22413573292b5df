"""Per-agent local computations: softmax policy, linear critic, updates.

Policies are softmax over linear logits with one-hot (state, local action)
features, so the score function has a closed form. Critics are linear in a
joint-action feature map: tabular one-hot by default, or a seeded random
projection when a compressed parameter vector is wanted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from resilient_marl.mdp import decode_joint_action, encode_joint_action

_LOGIT_CLIP = 50.0  # applied after max-subtraction; prevents exp underflow blowups


class LocalFeatures:
    """One-hot features over (state, local action) pairs for the policy."""

    def __init__(self, n_states: int, n_actions: int):
        self.n_states = n_states
        self.n_actions = n_actions
        self.dim = n_states * n_actions

    def index(self, s: int, a: int) -> int:
        return s * self.n_actions + a

    def vector(self, s: int, a: int) -> np.ndarray:
        v = np.zeros(self.dim)
        v[self.index(s, a)] = 1.0
        return v

    def matrix(self, s: int) -> np.ndarray:
        """(n_actions, dim) feature rows for every local action at state s."""
        m = np.zeros((self.n_actions, self.dim))
        for a in range(self.n_actions):
            m[a, self.index(s, a)] = 1.0
        return m

    def logits(self, theta: np.ndarray, s: int) -> np.ndarray:
        return theta[s * self.n_actions : (s + 1) * self.n_actions]


class TabularJointFeatures:
    """Exact one-hot map over (state, joint action); dim = |S| * |A|."""

    def __init__(self, n_states: int, n_joint_actions: int):
        self.n_states = n_states
        self.n_joint_actions = n_joint_actions
        self.dim = n_states * n_joint_actions

    def index(self, s: int, a: int) -> int:
        return s * self.n_joint_actions + a

    def vector(self, s: int, a: int) -> np.ndarray:
        v = np.zeros(self.dim)
        v[self.index(s, a)] = 1.0
        return v

    def q(self, omega: np.ndarray, s: int, a: int) -> float:
        return float(omega[self.index(s, a)])


class ProjectionJointFeatures:
    """Seeded Gaussian random projection with dim < |S| * |A|."""

    def __init__(self, n_states: int, n_joint_actions: int, dim: int, seed: int = 0):
        if dim < 1:
            raise ValueError("feature dimension must be positive")
        self.n_states = n_states
        self.n_joint_actions = n_joint_actions
        self.dim = dim
        rng = np.random.default_rng(seed)
        self._rows = rng.standard_normal((n_states * n_joint_actions, dim)) / np.sqrt(dim)

    def index(self, s: int, a: int) -> int:
        return s * self.n_joint_actions + a

    def vector(self, s: int, a: int) -> np.ndarray:
        return self._rows[self.index(s, a)]

    def q(self, omega: np.ndarray, s: int, a: int) -> float:
        return float(np.dot(self._rows[self.index(s, a)], omega))


@dataclass
class ActorParams:
    """Softmax policy weights plus the local feature layout."""

    theta: np.ndarray
    features: LocalFeatures

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "ActorParams":
        feats = LocalFeatures(n_states, n_actions)
        return cls(np.zeros(feats.dim), feats)

    def prob_table(self) -> np.ndarray:
        """(n_states, n_actions) probability table for the current weights."""
        z = self.theta.reshape(self.features.n_states, self.features.n_actions)
        z = z - z.max(axis=1, keepdims=True)
        z = np.clip(z, -_LOGIT_CLIP, _LOGIT_CLIP)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def policy_probs(actor: ActorParams, s: int) -> np.ndarray:
    """Action distribution at state s: softmax of the local logits.

    Max-subtraction plus clipping keeps the exponentials bounded without
    breaking shift invariance; probabilities are strictly positive for any
    finite weights.
    """
    z = actor.features.logits(actor.theta, s)
    z = z - z.max()
    z = np.clip(z, -_LOGIT_CLIP, _LOGIT_CLIP)
    e = np.exp(z)
    return e / e.sum()


def score(actor: ActorParams, s: int, a: int) -> np.ndarray:
    """Gradient of log pi(s, a) wrt theta for the softmax parameterization.

    Equals the chosen action's features minus the probability-weighted
    average of all action features at s.
    """
    probs = policy_probs(actor, s)
    m = actor.features.matrix(s)
    return m[a] - probs @ m


def q_value(omega: np.ndarray, features, s: int, a: int) -> float:
    """Linear action value: features(s, a) dot omega."""
    return features.q(omega, s, a)


def td_error(r: float, mu: float, q_next: float, q_curr: float) -> float:
    """Average-reward temporal difference: r - mu + q_next - q_curr."""
    return r - mu + q_next - q_curr


def critic_local_step(omega: np.ndarray, beta: float, delta: float, grad: np.ndarray) -> np.ndarray:
    """Staged critic value omega + beta * delta * grad; omega is untouched."""
    if beta < 0:
        raise ValueError("step size must be nonnegative")
    return omega + beta * delta * grad


def advantage(
    omega: np.ndarray,
    actor: ActorParams,
    features,
    action_counts,
    agent_index: int,
    s: int,
    joint_action: int,
) -> float:
    """Action value minus the policy-weighted baseline over own actions.

    The other agents' slots of the joint action are held fixed while the
    agent's own slot ranges over its action set.
    """
    locals_ = decode_joint_action(joint_action, action_counts)
    own_action = locals_[agent_index]
    probs = policy_probs(actor, s)
    n_own = action_counts[agent_index]
    qs = np.empty(n_own)
    for b in range(n_own):
        locals_[agent_index] = b
        qs[b] = features.q(omega, s, encode_joint_action(locals_, action_counts))
    return float(qs[own_action] - np.dot(probs, qs))


def actor_step(theta: np.ndarray, beta: float, adv: float, psi: np.ndarray) -> np.ndarray:
    """Policy-gradient ascent step theta + beta * adv * psi."""
    if beta < 0:
        raise ValueError("step size must be nonnegative")
    return theta + beta * adv * psi


def avg_reward_update(mu: float, beta: float, r: float) -> float:
    """Running-reward tracker: convex combination (1 - beta) * mu + beta * r."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("reward-tracking step size must lie in [0, 1]")
    return (1.0 - beta) * mu + beta * r


def select_action(actor: ActorParams, s: int, rng: np.random.Generator) -> int:
    """Sample a local action from the softmax policy with one uniform draw."""
    probs = policy_probs(actor, s)
    a = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(a, probs.size - 1)


@dataclass
class AgentState:
    """Everything one agent owns: policy, critic, reward tracker, role.

    ``omega_staged`` holds the post-critic-step value that gets sent to
    neighbors; the consensus step overwrites ``omega``. ``strategy`` is
    None for regular agents and an adversary strategy otherwise.
    """

    agent_id: int
    actor: ActorParams
    omega: np.ndarray
    omega_staged: np.ndarray
    avg_reward: float = 0.0
    strategy: object = None

    @property
    def is_regular(self) -> bool:
        return self.strategy is None
