"""Joint trajectory profiles and uniform articulation-state sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

POWER = "power"
SIGMOID = "sigmoid"


def sigmoid(x: float) -> float:
    """Ease-in/ease-out curve on [0, 1]; not renormalized, so sigmoid(0) ~ 2.47e-3."""
    return 1.0 / (1.0 + math.exp(6.0 - 12.0 * x))


@dataclass(frozen=True)
class TrajectoryProfile:
    kind: str
    q0: float
    qf: float
    T: float = 1.0
    a: float = 1.0
    inverted: bool = False

    def __post_init__(self):
        if self.kind not in (POWER, SIGMOID):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not self.T > 0:
            raise ValueError("duration T must be positive")
        if self.kind == POWER and not self.a > 0:
            raise ValueError("power exponent a must be positive")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "q0": self.q0, "qf": self.qf, "T": self.T,
                "a": self.a, "inverted": self.inverted}

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryProfile":
        return cls(d["kind"], d["q0"], d["qf"], d["T"], d["a"], d["inverted"])


def eval(profile: TrajectoryProfile, t: float) -> float:  # noqa: A001
    T = profile.T
    if not 0.0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    if profile.inverted:
        t = T - t
    s = t / T
    if profile.kind == POWER:
        w = s ** profile.a
    else:
        w = sigmoid(s)
    return profile.q0 + (profile.qf - profile.q0) * w


def sample_times(T: float, n: int) -> np.ndarray:
    if n < 2:
        raise ValueError(f"need at least 2 states, got {n}")
    return np.array([i * T / (n - 1) for i in range(n)])


def sample_states(profiles: Sequence[TrajectoryProfile], n: int) -> list[np.ndarray]:
    """``n`` joint configurations uniformly spaced in time, endpoints included."""
    if not profiles:
        raise ValueError("no profiles given")
    T = profiles[0].T
    if any(p.T != T for p in profiles):
        raise ValueError("all profiles must share the same duration T")
    times = sample_times(T, n)
    # i*T/(n-1) can overshoot T by an ulp; the last sample is exactly T.
    times[-1] = T
    return [np.array([eval(p, t) for p in profiles]) for t in times]
