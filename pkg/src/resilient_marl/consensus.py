"""Trim-and-mix consensus step plus pluggable adversary message strategies.

Trimming is coordinate-wise: at each coordinate the f largest and f
smallest received values are discarded independently, the standard vector
extension of scalar trimmed consensus. The receiving agent's own value is
never trimmed and always participates, which keeps every combined
coordinate inside the convex hull of {own value} U {retained values}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConsensusError(RuntimeError):
    """Malformed mixing weights or a violated combination contract."""


@dataclass(frozen=True)
class ParameterMessage:
    """One neighbor's broadcast: critic payload plus the sender's degree.

    The degree rides along so the receiver can form Metropolis weights
    without any global knowledge.
    """

    sender: int
    payload: np.ndarray
    sender_degree: int

    def __post_init__(self):
        payload = np.asarray(self.payload, dtype=np.float64)
        object.__setattr__(self, "payload", payload)
        if payload.ndim != 1:
            raise ValueError("payload must be a flat vector")


@dataclass(frozen=True)
class TrimResult:
    """Outcome of one trim: message stack, survival mask, trim parameter.

    ``values`` stacks the payloads ordered by ascending sender id;
    ``mask[j, k]`` says whether sender j's value survived at coordinate k.
    """

    senders: tuple[int, ...]
    values: np.ndarray
    mask: np.ndarray
    f: int

    def fully_trimmed_senders(self) -> tuple[int, ...]:
        """Senders whose message was discarded at every coordinate."""
        if len(self.senders) == 0:
            return ()
        dropped = ~self.mask.any(axis=1)
        return tuple(s for s, d in zip(self.senders, dropped) if d)


def trim(own: np.ndarray, msgs: list[ParameterMessage], f: int) -> TrimResult:
    """Coordinate-wise removal of the f highest and f lowest received values.

    A message survives at coordinate k only if its value there is neither
    among the f largest nor the f smallest of the received values at k
    (ties broken by ascending sender id). With 2f or fewer messages nothing
    survives and the agent falls back on its own value alone.
    """
    if f < 0:
        raise ValueError("trim parameter must be nonnegative")
    own = np.asarray(own, dtype=np.float64)
    ordered = sorted(msgs, key=lambda m: m.sender)
    senders = tuple(m.sender for m in ordered)
    k = len(ordered)
    if k == 0:
        return TrimResult((), np.empty((0, own.size)), np.empty((0, own.size), dtype=bool), f)
    values = np.stack([m.payload for m in ordered])
    if values.shape[1] != own.size:
        raise ValueError("payload length does not match own parameter length")
    if k <= 2 * f:
        return TrimResult(senders, values, np.zeros_like(values, dtype=bool), f)
    if f == 0:
        return TrimResult(senders, values, np.ones_like(values, dtype=bool), f)
    order = np.argsort(values, axis=0, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(k)[:, None], axis=0)
    mask = (ranks >= f) & (ranks < k - f)
    return TrimResult(senders, values, mask, f)


def consensus_combine(
    own: np.ndarray, trimmed: TrimResult, pair_weights: np.ndarray
) -> np.ndarray:
    """Convex combination of the own value with the surviving neighbor values.

    ``pair_weights[j]`` is the Metropolis weight for sender j (full-graph
    degrees). Per coordinate, the self-weight absorbs the mass of whatever
    was trimmed there, so each output coordinate is a proper convex
    combination of {own} U {survivors at that coordinate}.
    """
    own = np.asarray(own, dtype=np.float64)
    pair_weights = np.asarray(pair_weights, dtype=np.float64)
    if pair_weights.shape != (len(trimmed.senders),):
        raise ConsensusError("need exactly one pairwise weight per message")
    if (pair_weights < 0).any():
        raise ConsensusError("pairwise weights must be nonnegative")
    weighted_mask = pair_weights[:, None] * trimmed.mask
    neighbor_weight = weighted_mask.sum(axis=0)
    if (neighbor_weight > 1.0 + 1e-9).any():
        raise ConsensusError(
            "pairwise weights of the survivors exceed 1; rows would not be stochastic"
        )
    self_weight = 1.0 - neighbor_weight
    return self_weight * own + (weighted_mask * trimmed.values).sum(axis=0)


# -- adversary strategies ---------------------------------------------


@dataclass(frozen=True)
class ConstantStrategy:
    """Broadcast a fixed vector every round regardless of local state."""

    value: float | tuple

    def message(self, agent, t: int, dim: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.value, dtype=np.float64), (dim,)).copy()


@dataclass(frozen=True)
class DriftStrategy:
    """Broadcast start + rate * t per coordinate, creeping away each round."""

    start: float | tuple
    rate: float

    def message(self, agent, t: int, dim: int) -> np.ndarray:
        base = np.broadcast_to(np.asarray(self.start, dtype=np.float64), (dim,))
        return base + self.rate * t


@dataclass(frozen=True)
class NoiseStrategy:
    """Broadcast seeded i.i.d. Gaussian noise; stateless, so reproducible."""

    scale: float
    seed: int = 0

    def message(self, agent, t: int, dim: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, agent.agent_id, t])
        return self.scale * rng.standard_normal(dim)


@dataclass(frozen=True)
class SelfishStrategy:
    """Run the local critic honestly but never mix anyone else's parameters."""

    def message(self, agent, t: int, dim: int) -> np.ndarray:
        return agent.omega_staged


STRATEGY_NAMES = {
    "constant": ConstantStrategy,
    "drift": DriftStrategy,
    "noise": NoiseStrategy,
    "selfish": SelfishStrategy,
}


def adversary_message(strategy, agent, t: int, dim: int) -> np.ndarray:
    """Payload an adversarial agent sends at round t."""
    if agent is not None and agent.is_regular:
        raise ValueError("adversary_message called for a regular agent")
    return strategy.message(agent, t, dim)
