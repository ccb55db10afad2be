"""Inter-agent message schema.

Agents exchange only consensus rows, multipliers, trade volumes and prices.
Every payload field is tagged with one of those kinds; constructing a message
with any other field raises :class:`PrivacyViolation`.  The runtime sends all
cross-agent data through a :class:`MessageBus`, so the recorded log is a
complete account of what each agent revealed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

ALLOWED_KINDS = frozenset({"consensus", "multiplier", "volume", "price"})

# field name -> kind, per message topic
SCHEMA = MappingProxyType({
    "consensus": MappingProxyType({"dP": "consensus", "dG": "consensus", "p_dis": "consensus",
                                   "g_dis": "consensus", "theta": "multiplier"}),
    "trade": MappingProxyType({"volume": "volume", "theta": "multiplier"}),
    "price": MappingProxyType({"price": "price", "theta": "multiplier"}),
})


class PrivacyViolation(ValueError):
    """A message carried a field outside the shared schema."""


@dataclass(frozen=True)
class Message:
    topic: str
    sender: str
    receiver: str
    iteration: int
    payload: MappingProxyType = field(repr=False)

    def __post_init__(self):
        fields = SCHEMA.get(self.topic)
        if fields is None:
            raise PrivacyViolation(f"unknown topic {self.topic!r}")
        extra = set(self.payload) - set(fields)
        if extra:
            raise PrivacyViolation(f"{self.topic} message carries undeclared fields {sorted(extra)}")
        for name, value in self.payload.items():
            arr = np.asarray(value)
            if arr.dtype.kind not in "fiu":
                raise PrivacyViolation(f"{self.topic}.{name} is not numeric")

    def kinds(self) -> set[str]:
        return {SCHEMA[self.topic][k] for k in self.payload}


def make_message(topic: str, sender: str, receiver: str, iteration: int, **payload) -> Message:
    frozen = {}
    for k, v in payload.items():
        try:
            frozen[k] = np.array(v, dtype=float, copy=True)
        except (TypeError, ValueError):
            raise PrivacyViolation(f"{topic}.{k} is not numeric") from None
    for arr in frozen.values():
        arr.setflags(write=False)
    return Message(topic, sender, receiver, iteration, MappingProxyType(frozen))


@dataclass
class MessageBus:
    """Delivers messages and keeps the full log when ``record`` is set."""

    record: bool = True
    log: list[Message] = field(default_factory=list)

    def send(self, message: Message) -> Message:
        if self.record:
            self.log.append(message)
        return message

    def topics(self) -> set[str]:
        return {m.topic for m in self.log}


def consensus_message(sender: str, receiver: str, iteration: int, X: np.ndarray, theta: np.ndarray) -> Message:
    """``X`` and ``theta`` are (4, T) arrays in the order dP, dG, p_dis, g_dis."""
    X = np.asarray(X, dtype=float)
    return make_message("consensus", sender, receiver, iteration, dP=X[0], dG=X[1], p_dis=X[2], g_dis=X[3],
                        theta=theta)


def consensus_row(message: Message) -> np.ndarray:
    p = message.payload
    return np.stack([p["dP"], p["dG"], p["p_dis"], p["g_dis"]])
