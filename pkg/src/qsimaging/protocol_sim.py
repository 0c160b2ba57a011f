"""Frame-by-frame simulation of the secure imaging protocol.

A pulse carries one of H/V/D/A and a Poisson photon number, floods the object
plane at a uniformly chosen pixel, passes through the channel (honest object,
intercept-resend jammer or photon-number-splitting jammer) and is measured in
the basis it was prepared in. Events are processed as columnar numpy batches.

Every frame owns a fixed slice of a Philox stream keyed by the master seed,
so a frame's random draws depend only on ``(seed, frame_index)``. Blocks of
frames can therefore be simulated in any order by any number of workers and
still produce the same record.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .polar_core import (
    DA,
    HV,
    PROTOCOL_STATES,
    STATE_NAMES,
    Axis,
    MeasurementBasis,
    Outcome,
    PolarizationState,
    collapse,
)
from .scene import ObjectMask, PixelCoord, sample_positions

log = logging.getLogger(__name__)

# Per-frame uniform slots. Twelve words = three Philox counter increments.
SLOT_STATE = 0
SLOT_COUNT = 1
SLOT_X = 2
SLOT_Y = 3
SLOT_JAMMER = 4
SLOT_SPOOF = 5
SLOT_MEASURE = 6
SLOT_FLIP = 7
SLOT_EFFICIENCY = 8
N_SLOTS = 12
_WORDS_PER_COUNTER = 4

STREAM_IMAGING = 0
STREAM_PAIRS = 1

BLOCK_SIZE = 8192

_STATE_ANGLES = np.array([s.angle for s in PROTOCOL_STATES])
_BASIS_OF_STATE = np.array([0, 0, 1, 1])
_BASIS_ANGLES = np.array([HV.theta, DA.theta])
PORT_NAMES = STATE_NAMES


def uniform_draws(seed: int, start: int, stop: int, stream: int = STREAM_IMAGING) -> np.ndarray:
    """Unit uniforms of shape ``(stop - start, N_SLOTS)`` for frames ``[start, stop)``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    counter = start * (N_SLOTS // _WORDS_PER_COUNTER)
    bitgen = np.random.Philox(key=[seed, stream], counter=[counter, 0, 0, 0])
    raw = bitgen.random_raw((stop - start) * N_SLOTS)
    return ((raw >> np.uint64(11)) * 2.0**-53).reshape(stop - start, N_SLOTS)


@dataclass(frozen=True)
class SourceConfig:
    mean_photons_per_pulse: float = 1.0

    def __post_init__(self) -> None:
        if not self.mean_photons_per_pulse > 0:
            raise ValueError("mean photon number must be positive")


@dataclass(frozen=True)
class DetectorConfig:
    """``pbs_extinction`` is the chance a photon leaves the wrong PBS port."""

    pbs_extinction: float = 0.0084
    detection_efficiency: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.pbs_extinction <= 0.5:
            raise ValueError("pbs_extinction must be in [0, 0.5]")
        if not 0.0 < self.detection_efficiency <= 1.0:
            raise ValueError("detection_efficiency must be in (0, 1]")


def _check_spoof(mask: ObjectMask) -> None:
    if mask.reflective_count == 0:
        raise ValueError("spoof mask has no reflective pixels to paint")


@dataclass(frozen=True)
class Honest:
    mask: ObjectMask


@dataclass(frozen=True)
class InterceptResend:
    """Measure at ``eavesdrop_theta`` and resend at a spoof pixel.

    ``resend_state`` of None resends the collapsed state (eavesdrop-basis
    policy); otherwise every photon is resent in that fixed state.
    """

    eavesdrop_theta: float
    spoof_mask: ObjectMask
    resend_state: PolarizationState | None = None

    def __post_init__(self) -> None:
        MeasurementBasis(self.eavesdrop_theta)
        _check_spoof(self.spoof_mask)


@dataclass(frozen=True)
class PhotonNumberSplitting:
    """Keep a photon from multi-photon pulses; single photons get intercept-resend."""

    mask: ObjectMask
    spoof_mask: ObjectMask
    fallback_theta: float = 22.5

    def __post_init__(self) -> None:
        MeasurementBasis(self.fallback_theta)
        _check_spoof(self.spoof_mask)


ChannelModel = Honest | InterceptResend | PhotonNumberSplitting


class ChannelAction(enum.IntEnum):
    PASSED = 0
    ABSORBED = 1
    INTERCEPTED_RESENT = 2
    SPLIT = 3


@dataclass(frozen=True)
class PhotonEvent:
    frame_index: int
    sent_state: PolarizationState
    sent_basis: MeasurementBasis
    true_pixel: PixelCoord
    photon_count: int
    channel_action: ChannelAction
    arriving_state: PolarizationState | None
    reported_pixel: PixelCoord | None
    jammer_outcome: Outcome | None
    detected_outcome: Outcome | None
    is_error: bool | None


def _outcome(basis_deg: float, bit: int) -> Outcome:
    axis = Axis(bit)
    return Outcome(axis, PolarizationState(basis_deg + 90.0 * bit))


@dataclass(frozen=True)
class EventBatch:
    """Columnar photon events. Missing values: NaN angles, -1 pixels/axes/ports."""

    frame: np.ndarray
    sent: np.ndarray  # index into H, V, D, A
    photon_count: np.ndarray
    true_x: np.ndarray
    true_y: np.ndarray
    action: np.ndarray
    arriving: np.ndarray
    reported_x: np.ndarray
    reported_y: np.ndarray
    jammer_theta: np.ndarray
    jammer_axis: np.ndarray
    port: np.ndarray
    is_error: np.ndarray

    def __len__(self) -> int:
        return len(self.frame)

    @classmethod
    def new(cls, frame, sent, photon_count, true_x, true_y) -> EventBatch:
        frame = np.asarray(frame, dtype=np.int64)
        n = len(frame)
        return cls(
            frame=frame,
            sent=np.asarray(sent, dtype=np.int8),
            photon_count=np.asarray(photon_count, dtype=np.int64),
            true_x=np.asarray(true_x, dtype=np.int64),
            true_y=np.asarray(true_y, dtype=np.int64),
            action=np.full(n, ChannelAction.PASSED, dtype=np.int8),
            arriving=np.full(n, np.nan),
            reported_x=np.full(n, -1, dtype=np.int64),
            reported_y=np.full(n, -1, dtype=np.int64),
            jammer_theta=np.full(n, np.nan),
            jammer_axis=np.full(n, -1, dtype=np.int8),
            port=np.full(n, -1, dtype=np.int8),
            is_error=np.full(n, -1, dtype=np.int8),
        )

    @classmethod
    def single(cls, sent_state: PolarizationState, photon_count: int = 1,
               true_pixel: PixelCoord = PixelCoord(0, 0), frame: int = 0) -> EventBatch:
        idx = PROTOCOL_STATES.index(sent_state)
        return cls.new([frame], [idx], [photon_count], [true_pixel.x], [true_pixel.y])

    @classmethod
    def concat(cls, batches: list[EventBatch]) -> EventBatch:
        if not batches:
            return cls.new([], [], [], [], [])
        return cls(**{
            f.name: np.concatenate([getattr(b, f.name) for b in batches])
            for f in dataclasses.fields(cls)
        })

    def take(self, index) -> EventBatch:
        return EventBatch(**{
            f.name: getattr(self, f.name)[index] for f in dataclasses.fields(self)
        })

    @property
    def sent_basis_index(self) -> np.ndarray:
        return _BASIS_OF_STATE[self.sent]

    @property
    def detected(self) -> np.ndarray:
        return self.port >= 0

    def event(self, i: int) -> PhotonEvent:
        sent = int(self.sent[i])
        basis = (HV, DA)[_BASIS_OF_STATE[sent]]
        arriving = None if np.isnan(self.arriving[i]) else PolarizationState(self.arriving[i])
        reported = None
        if self.reported_x[i] >= 0:
            reported = PixelCoord(int(self.reported_x[i]), int(self.reported_y[i]))
        jammer = None
        if self.jammer_axis[i] >= 0:
            jammer = _outcome(float(self.jammer_theta[i]), int(self.jammer_axis[i]))
        detected = None
        if self.port[i] >= 0:
            detected = _outcome(basis.theta, int(self.port[i]) % 2)
        return PhotonEvent(
            frame_index=int(self.frame[i]),
            sent_state=PROTOCOL_STATES[sent],
            sent_basis=basis,
            true_pixel=PixelCoord(int(self.true_x[i]), int(self.true_y[i])),
            photon_count=int(self.photon_count[i]),
            channel_action=ChannelAction(int(self.action[i])),
            arriving_state=arriving,
            reported_pixel=reported,
            jammer_outcome=jammer,
            detected_outcome=detected,
            is_error=None if self.is_error[i] < 0 else bool(self.is_error[i]),
        )

    def events(self):
        return (self.event(i) for i in range(len(self)))


def _poisson_cdf(mu: float) -> np.ndarray:
    kmax = int(mu + 12.0 * math.sqrt(mu) + 30.0)
    k = np.arange(kmax + 1)
    log_pmf = k * math.log(mu) - mu - np.array([math.lgamma(i + 1.0) for i in k])
    return np.cumsum(np.exp(log_pmf))


def generate_pulses(cfg: SourceConfig, draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sent-state indices (uniform over H, V, D, A) and Poisson photon numbers."""
    sent = np.minimum((draws[:, SLOT_STATE] * 4).astype(np.int8), 3)
    counts = np.searchsorted(_poisson_cdf(cfg.mean_photons_per_pulse),
                             draws[:, SLOT_COUNT], side="right")
    return sent, counts.astype(np.int64)


def generate_pulse(cfg: SourceConfig, u_state: float, u_count: float
                   ) -> tuple[PolarizationState, MeasurementBasis, int]:
    draws = np.zeros((1, N_SLOTS))
    draws[0, SLOT_STATE] = u_state
    draws[0, SLOT_COUNT] = u_count
    sent, counts = generate_pulses(cfg, draws)
    idx = int(sent[0])
    return PROTOCOL_STATES[idx], (HV, DA)[_BASIS_OF_STATE[idx]], int(counts[0])


def _spoof_pixels(mask: ObjectMask, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    support = mask.reflective_pixels()
    pick = np.minimum((u * len(support)).astype(np.int64), len(support) - 1)
    flat = support[pick]
    return flat % mask.width, flat // mask.width


def _intercept(batch: EventBatch, sel: np.ndarray, draws: np.ndarray, theta: float,
               resend_state: PolarizationState | None, spoof: ObjectMask) -> dict:
    cols = {name: getattr(batch, name).copy() for name in
            ("action", "arriving", "reported_x", "reported_y", "jammer_theta", "jammer_axis")}
    orth, collapsed = collapse(_STATE_ANGLES[batch.sent[sel]], theta, draws[sel, SLOT_JAMMER])
    cols["action"][sel] = ChannelAction.INTERCEPTED_RESENT
    cols["jammer_theta"][sel] = theta
    cols["jammer_axis"][sel] = orth
    cols["arriving"][sel] = collapsed if resend_state is None else resend_state.angle
    x, y = _spoof_pixels(spoof, draws[sel, SLOT_SPOOF])
    cols["reported_x"][sel] = x
    cols["reported_y"][sel] = y
    return cols


def apply_channel(model: ChannelModel, batch: EventBatch, draws: np.ndarray) -> EventBatch:
    """Send each pulse through the object or jammer; returns an updated batch."""
    present = batch.photon_count >= 1
    if isinstance(model, Honest):
        reflective = model.mask.pixels[batch.true_y, batch.true_x] == 1
        passed = present & reflective
        return dataclasses.replace(
            batch,
            action=np.where(present & ~reflective, ChannelAction.ABSORBED,
                            ChannelAction.PASSED).astype(np.int8),
            arriving=np.where(passed, _STATE_ANGLES[batch.sent], np.nan),
            reported_x=np.where(passed, batch.true_x, -1),
            reported_y=np.where(passed, batch.true_y, -1),
        )
    if isinstance(model, InterceptResend):
        cols = _intercept(batch, present, draws, model.eavesdrop_theta,
                          model.resend_state, model.spoof_mask)
        return dataclasses.replace(batch, **cols)
    if isinstance(model, PhotonNumberSplitting):
        single = batch.photon_count == 1
        cols = _intercept(batch, single, draws, model.fallback_theta, None, model.spoof_mask)
        multi = batch.photon_count >= 2
        # both-basis measurement identifies the state exactly; resend a perfect copy
        cols["action"][multi] = ChannelAction.SPLIT
        cols["arriving"][multi] = _STATE_ANGLES[batch.sent[multi]]
        x, y = _spoof_pixels(model.spoof_mask, draws[multi, SLOT_SPOOF])
        cols["reported_x"][multi] = x
        cols["reported_y"][multi] = y
        return dataclasses.replace(batch, **cols)
    raise TypeError(f"unknown channel model {model!r}")


def detect(batch: EventBatch, det: DetectorConfig, draws: np.ndarray) -> EventBatch:
    """Matched-basis measurement with PBS port flips and detector loss.

    Measurement happens in the sent basis, so no sifting is needed; an error
    is a click on the port orthogonal to the sent state.
    """
    arriving = ~np.isnan(batch.arriving)
    clicked = arriving & (draws[:, SLOT_EFFICIENCY] < det.detection_efficiency)
    basis_idx = batch.sent_basis_index
    orth, _ = collapse(np.where(arriving, batch.arriving, 0.0), _BASIS_ANGLES[basis_idx],
                       draws[:, SLOT_MEASURE])
    flip = draws[:, SLOT_FLIP] < det.pbs_extinction
    bit = (orth ^ flip).astype(np.int8)
    port = np.where(clicked, 2 * basis_idx + bit, -1).astype(np.int8)
    is_error = np.where(clicked, bit != batch.sent % 2, -1).astype(np.int8)
    return dataclasses.replace(batch, port=port, is_error=is_error)


@dataclass
class RunRecord:
    """Emitted (detected) frames of a run plus the per-port count grids."""

    events: EventBatch
    grids: dict[str, np.ndarray]
    pulses: int
    lost: dict[str, int]
    seed: int
    frame_budget: int
    config: dict = field(default_factory=dict)

    @property
    def frames(self) -> int:
        return len(self.events)


def _simulate_block(scene: ObjectMask, source: SourceConfig, detector: DetectorConfig,
                    channel: ChannelModel, seed: int, start: int, stop: int) -> EventBatch:
    draws = uniform_draws(seed, start, stop)
    sent, counts = generate_pulses(source, draws)
    x, y = sample_positions(scene, draws[:, SLOT_X], draws[:, SLOT_Y])
    batch = EventBatch.new(np.arange(start, stop), sent, counts, x, y)
    return detect(apply_channel(channel, batch, draws), detector, draws)


def _channel_masks(channel: ChannelModel) -> list[ObjectMask]:
    return [getattr(channel, name) for name in ("mask", "spoof_mask") if hasattr(channel, name)]


def count_grids(events: EventBatch, width: int, height: int) -> dict[str, np.ndarray]:
    grids = {}
    for p, name in enumerate(PORT_NAMES):
        g = np.zeros((height, width), dtype=np.int64)
        sel = events.port == p
        np.add.at(g, (events.reported_y[sel], events.reported_x[sel]), 1)
        grids[name] = g
    return grids


def run_simulation(scene: ObjectMask, source: SourceConfig, detector: DetectorConfig,
                   channel: ChannelModel, seed: int, frame_budget: int, *,
                   workers: int = 1, max_pulses: int | None = None) -> RunRecord:
    """Fire pulses until ``frame_budget`` frames have registered a detection.

    Lost pulses (empty, absorbed, undetected) are discarded. The result is a
    pure function of the configs and seed, whatever ``workers`` is.
    ``max_pulses`` caps the attempt (default ``1000 * frame_budget``) so a
    non-reflecting object cannot loop forever.
    """
    if frame_budget < 0:
        raise ValueError("frame_budget must be >= 0")
    for m in _channel_masks(channel):
        if (m.width, m.height) != (scene.width, scene.height):
            raise ValueError("channel masks must match the scene dimensions")
    if max_pulses is None:
        max_pulses = 1000 * max(frame_budget, 1)

    blocks: list[EventBatch] = []
    n_detected = 0
    next_block = 0
    n_blocks = math.ceil(max_pulses / BLOCK_SIZE)
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        while n_detected < frame_budget and next_block < n_blocks:
            round_ids = range(next_block, min(next_block + max(workers, 1), n_blocks))
            futures = [
                pool.submit(_simulate_block, scene, source, detector, channel, seed,
                            b * BLOCK_SIZE, min((b + 1) * BLOCK_SIZE, max_pulses))
                for b in round_ids
            ]
            for fut in futures:
                batch = fut.result()
                blocks.append(batch)
                n_detected += int(batch.detected.sum())
            next_block = round_ids.stop

    everything = EventBatch.concat(blocks)
    det_idx = np.flatnonzero(everything.detected)
    if len(det_idx) >= frame_budget:
        det_idx = det_idx[:frame_budget]
        pulses = int(det_idx[-1]) + 1 if frame_budget else 0
    else:
        log.warning("pulse cap %d reached after %d of %d frames", max_pulses,
                    len(det_idx), frame_budget)
        pulses = len(everything)
    consumed = everything.take(slice(0, pulses))
    emitted = everything.take(det_idx)
    lost = {
        "empty": int((consumed.photon_count == 0).sum()),
        "absorbed": int((consumed.action == ChannelAction.ABSORBED).sum()),
        "undetected": int((~np.isnan(consumed.arriving) & ~consumed.detected).sum()),
    }
    return RunRecord(
        events=emitted,
        grids=count_grids(emitted, scene.width, scene.height),
        pulses=pulses,
        lost=lost,
        seed=seed,
        frame_budget=frame_budget,
    )
