"""Robust broadcast gossip averaging of ``[v_avg, i_avg]`` estimates."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# two little-endian float64 + uint8 sender id, 136 bits
PACKET_FORMAT = "<ddB"
PACKET_SIZE = struct.calcsize(PACKET_FORMAT)


@dataclass(frozen=True)
class AgentState:
    estimate: tuple[float, float]
    beta: float

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError(f"consensus weight {self.beta} outside (0, 1]")

    @classmethod
    def initial(cls, measurement, vsc_count: int) -> AgentState:
        return cls(tuple(float(x) for x in measurement), 1.0 / vsc_count)


def fallback_vector(measurement, alpha: float, vsc_count: int) -> tuple[float, float]:
    """Local stand-in for the neighbour average when nothing was received."""
    return 0.0, measurement[1] / (alpha * vsc_count)


def gossip_update(
    state: AgentState,
    measurement,
    received: Sequence,
    alpha: float,
    vsc_count: int,
) -> AgentState:
    """Mix the local measurement with the mean of the received estimates.

    With no packet received the mix uses :func:`fallback_vector` instead.
    """
    if vsc_count < 1 or alpha <= 0:
        raise ValueError("need vsc_count >= 1 and alpha > 0")
    b = state.beta
    m = np.asarray(measurement, dtype=float)
    if len(received):
        other = np.mean(np.asarray(received, dtype=float), axis=0)
    else:
        other = np.asarray(fallback_vector(m, alpha, vsc_count))
    new = b * m + (1.0 - b) * other
    return AgentState((float(new[0]), float(new[1])), b)


def encode_packet(sender: int, estimate) -> bytes:
    return struct.pack(PACKET_FORMAT, float(estimate[0]), float(estimate[1]), sender)


def decode_packet(data: bytes) -> tuple[int, tuple[float, float]]:
    v, i, sender = struct.unpack(PACKET_FORMAT, data)
    return sender, (v, i)
