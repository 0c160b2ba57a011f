"""Entanglement-based secure ranging: CHSH test on polarization-entangled
pairs plus a time-of-flight range estimate.

Pairs are in (|HH> + |VV>)/sqrt(2). One photon is measured at the source at
0 or 45 degrees; its twin makes the round trip to the object and is measured
at +22.5 or -22.5 degrees. Measurement angles here are raw signed degrees,
not normalized bases, because the sign of -22.5 matters for which port is +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .polar_core import aligned_probability
from .protocol_sim import STREAM_PAIRS, uniform_draws

SPEED_OF_LIGHT = 299_792_458.0

ALICE_THETAS = (0.0, 45.0)
BOB_THETAS = (22.5, -22.5)
SETTINGS = tuple(product(ALICE_THETAS, BOB_THETAS))

_U_SAME = 0
_U_SIGN = 1
_U_JAMMER = 0
_U_ALICE = 1
_U_BOB = 2


@dataclass(frozen=True)
class PairBases:
    alice_thetas: tuple[float, float] = ALICE_THETAS
    bob_thetas: tuple[float, float] = BOB_THETAS

    def __post_init__(self) -> None:
        if len(self.alice_thetas) != 2 or len(self.bob_thetas) != 2:
            raise ValueError("exactly two measurement angles per side")

    @property
    def settings(self) -> list[tuple[float, float]]:
        return list(product(self.alice_thetas, self.bob_thetas))


@dataclass(frozen=True)
class HonestPath:
    range_m: float = 150.0


@dataclass(frozen=True)
class InterceptResendPath:
    """Jammer measures the returning photon at ``theta_e`` and resends it.

    ``range_m`` is the range the resent photon reports (a spoofed delay).
    """

    theta_e: float
    range_m: float = 150.0


PairChannel = HonestPath | InterceptResendPath


@dataclass(frozen=True)
class RangeEstimate:
    round_trip_time: float
    distance: float


@dataclass(frozen=True)
class ChshRecord:
    tallies: dict  # (alice, bob) -> {"++": n, "+-": n, "-+": n, "--": n}
    E: dict  # (alice, bob) -> correlation
    S: float
    sigma: float
    secure: bool


def round_trip_time(range_m: float) -> float:
    return 2.0 * range_m / SPEED_OF_LIGHT


def sample_pairs(alice_theta: float, bob_theta: float, channel: PairChannel,
                 u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Joint +/-1 outcomes for pairs, from an ``(n, 3)`` array of unit uniforms."""
    u = np.atleast_2d(u)
    if isinstance(channel, HonestPath):
        same = u[:, _U_SAME] < aligned_probability(alice_theta, bob_theta)
        a = np.where(u[:, _U_SIGN] < 0.5, 1, -1)
        b = np.where(same, a, -a)
        return a, b
    if isinstance(channel, InterceptResendPath):
        # the jammer's click is 50/50 and projects both photons onto the clicked axis
        axis = np.where(u[:, _U_JAMMER] < 0.5, channel.theta_e, channel.theta_e + 90.0) % 180.0
        a = np.where(u[:, _U_ALICE] < aligned_probability(axis, alice_theta), 1, -1)
        b = np.where(u[:, _U_BOB] < aligned_probability(axis, bob_theta), 1, -1)
        return a, b
    raise TypeError(f"unknown pair channel {channel!r}")


def sample_pair(alice_theta: float, bob_theta: float, channel: PairChannel,
                u: tuple[float, float, float], emission_time: float = 0.0
                ) -> tuple[int, int, float]:
    """One pair: ``(alice_outcome, bob_outcome, arrival_time)``."""
    a, b = sample_pairs(alice_theta, bob_theta, channel, np.asarray(u, dtype=float))
    return int(a[0]), int(b[0]), emission_time + round_trip_time(channel.range_m)


def tally(a: np.ndarray, b: np.ndarray) -> dict[str, int]:
    return {
        "++": int(((a == 1) & (b == 1)).sum()),
        "+-": int(((a == 1) & (b == -1)).sum()),
        "-+": int(((a == -1) & (b == 1)).sum()),
        "--": int(((a == -1) & (b == -1)).sum()),
    }


def correlation(t: dict[str, int]) -> float:
    total = t["++"] + t["+-"] + t["-+"] + t["--"]
    if total <= 0:
        raise ValueError("cannot compute a correlation from an empty tally")
    return (t["++"] + t["--"] - t["+-"] - t["-+"]) / total


def chsh_s(E: dict) -> float:
    """S = E(a,b) + E(a,b') + E(a',b) - E(a',b') for a=0, a'=45, b=22.5, b'=-22.5."""
    (a, a2), (b, b2) = ALICE_THETAS, BOB_THETAS
    return E[(a, b)] + E[(a, b2)] + E[(a2, b)] - E[(a2, b2)]


def estimate_range(emission_time, arrival_time) -> RangeEstimate:
    dt = np.asarray(arrival_time, dtype=float) - np.asarray(emission_time, dtype=float)
    if np.any(dt < 0):
        raise ValueError("arrival precedes emission")
    dt = float(np.mean(dt))
    return RangeEstimate(round_trip_time=dt, distance=SPEED_OF_LIGHT * dt / 2.0)


def run_chsh(pairs_per_setting: int, channel: PairChannel, seed: int,
             pulse_period: float = 1e-6) -> tuple[ChshRecord, RangeEstimate]:
    """Run the four-setting CHSH test; trial ``i`` uses setting ``i % 4``.

    Emission of trial ``i`` happens at ``i * pulse_period``. Timing is noiseless.
    """
    if pairs_per_setting < 1:
        raise ValueError("need at least one pair per setting")
    n = 4 * pairs_per_setting
    u = uniform_draws(seed, 0, n, stream=STREAM_PAIRS)
    setting = np.arange(n) % 4
    emission = np.arange(n) * pulse_period
    arrival = emission + round_trip_time(channel.range_m)

    tallies, E = {}, {}
    var = 0.0
    for k, (alpha, beta) in enumerate(SETTINGS):
        sel = setting == k
        a, b = sample_pairs(alpha, beta, channel, u[sel, :3])
        tallies[(alpha, beta)] = tally(a, b)
        E[(alpha, beta)] = correlation(tallies[(alpha, beta)])
        var += (1.0 - E[(alpha, beta)] ** 2) / sel.sum()
    S = chsh_s(E)
    record = ChshRecord(tallies=tallies, E=E, S=S, sigma=math.sqrt(var), secure=abs(S) > 2.0)
    return record, estimate_range(emission, arrival)
