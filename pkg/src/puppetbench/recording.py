"""Demonstration capture: kinesthetic teaching over the simulated bus and
end-effector recording through the evolutionary IK solver.
"""
from __future__ import annotations

import json
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from . import bus as busmod
from .actions import ActionSequence, CommandVocabulary, Event
from .bus import BusTimeout, SimBus
from .ik import IkConfig, IkObjective, solve
from .robot import RobotModel

PUPPET_FORMAT_VERSION = 1


class PuppetSource(ABC):
    """Per-tick provider of externally imposed joint positions."""

    @abstractmethod
    def joint_positions(self, t: float) -> Mapping[int, float]:
        """Positions (radians) keyed by joint id at time t; absent joints hold."""


class ScriptedPuppet(PuppetSource):
    """Waveform-per-joint puppet: const, sine or ramp channels."""

    def __init__(self, channels: Mapping[int, Callable[[float], float]]):
        self.channels = dict(channels)

    def joint_positions(self, t: float) -> dict[int, float]:
        return {jid: fn(t) for jid, fn in self.channels.items()}

    @classmethod
    def from_spec(cls, doc: dict, model: RobotModel) -> "ScriptedPuppet":
        if doc.get("format_version", PUPPET_FORMAT_VERSION) != PUPPET_FORMAT_VERSION:
            raise ValueError("unsupported puppet script version")
        channels: dict[int, Callable[[float], float]] = {}
        for rec in doc["channels"]:
            joint = rec["joint"]
            spec = model.joint(joint) if isinstance(joint, int) else model.joint_named(joint)
            channels[spec.id] = make_waveform(rec["waveform"], rec.get("params", {}))
        return cls(channels)


def make_waveform(kind: str, params: dict) -> Callable[[float], float]:
    if kind == "const":
        value = float(params["value"])
        return lambda t: value
    if kind == "sine":
        center = float(params.get("center", 0.0))
        amp = float(params["amplitude"])
        freq = float(params["frequency_hz"])
        phase = float(params.get("phase", 0.0))
        return lambda t: center + amp * math.sin(2.0 * math.pi * freq * t + phase)
    if kind == "ramp":
        start = float(params.get("start", 0.0))
        end = float(params["end"])
        duration = float(params["duration"])
        return lambda t: start + (end - start) * min(max(t / duration, 0.0), 1.0)
    raise ValueError(f"unknown waveform {kind!r}")


def load_puppet_script(path, model: RobotModel) -> ScriptedPuppet:
    with open(path) as fh:
        return ScriptedPuppet.from_spec(json.load(fh), model)


class SequencePuppet(PuppetSource):
    """Replays a recorded sequence as the puppet (nearest frame at time t)."""

    def __init__(self, seq: ActionSequence, model: RobotModel):
        self.frames = seq.frames
        self.rate_hz = seq.rate_hz
        self.ids = [j.id for j in model.joints]

    def joint_positions(self, t: float) -> dict[int, float]:
        idx = min(round(t * self.rate_hz), len(self.frames) - 1)
        return dict(zip(self.ids, self.frames[max(idx, 0)]))


class LivePuppet(PuppetSource):
    """Thread-safe latest-value slot for an external frame stream."""

    def __init__(self):
        self._lock = threading.Lock()
        self._latest: dict[int, float] = {}

    def push(self, positions: Mapping[int, float]) -> None:
        with self._lock:
            self._latest.update(positions)

    def joint_positions(self, t: float) -> dict[int, float]:
        with self._lock:
            return dict(self._latest)


@dataclass(frozen=True)
class RecordingConfig:
    rate_hz: float = 50.0
    duration: float = 2.0
    joints: Optional[tuple[int, ...]] = None  # puppet-driven subset; None = all

    def __post_init__(self):
        if self.rate_hz <= 0 or self.duration <= 0:
            raise ValueError("rate_hz and duration must be > 0")

    @property
    def n_frames(self) -> int:
        return round(self.rate_hz * self.duration)


def kinesthetic_record(
    bus: SimBus, puppet: PuppetSource, cfg: RecordingConfig, name: str = "recording"
) -> ActionSequence:
    """Torque-off encoder polling while the puppet moves the joints.

    Broadcasts TORQUE 0, then per tick imposes the puppet positions and reads
    every servo back through the wire (so frames carry the signed-millirad
    quantization).  Prior torque state is restored afterwards, with goals
    rewritten to the final positions so nothing jumps on re-enable.  A bus
    timeout discards the partial recording.
    """
    ids = list(bus.servos.keys())
    driven = set(cfg.joints) if cfg.joints is not None else set(ids)
    torque_before = {jid: bus.servos[jid][1].torque_enabled for jid in ids}
    busmod.set_torque(bus, False)
    frames = []
    try:
        for i in range(cfg.n_frames):
            t = i / cfg.rate_hz
            for jid, angle in puppet.joint_positions(t).items():
                if jid in driven and jid in bus.servos:
                    bus.impose_position(jid, angle)
            frames.append([busmod.read_position(bus, jid) for jid in ids])
            bus.advance(1.0 / cfg.rate_hz)
    except BusTimeout:
        frames.clear()
        raise
    finally:
        # restore only servos still on the bus; goals first so nothing jumps
        present = list(bus.servos.keys())
        busmod.sync_write(bus, {jid: bus.servos[jid][1].position for jid in present})
        if all(torque_before.get(jid, True) for jid in present):
            busmod.set_torque(bus, True)
        else:
            for jid in present:
                busmod.set_torque(bus, torque_before.get(jid, True), jid)
    return ActionSequence(name=name, rate_hz=cfg.rate_hz, frames=np.array(frames))


class TimedTarget(NamedTuple):
    time: float
    position: tuple[float, float, float]
    orientation: Optional[tuple[float, float, float, float]] = None


def endeffector_record(
    model: RobotModel,
    chain: str,
    targets: Sequence[TimedTarget],
    ik_cfg: IkConfig,
    cfg: RecordingConfig,
    name: str = "recording",
    displacement_weight: float = 0.001,
    orientation_weight: float = 0.5,
) -> ActionSequence:
    """Record by tracking a timed pose stream with warm-started IK.

    Each tick solves for the most recent target at that time, seeded from the
    previous tick's solution; non-chain joints stay at zero.  Unreachable
    targets record the best-effort solution.  The displacement weight only
    has to break ties between IK branches; large values bias tracking.
    """
    if not targets:
        raise ValueError("target stream is empty")
    targets = sorted((TimedTarget(*t) for t in targets), key=lambda t: t.time)
    chain_ids = model.chains[chain] if chain in model.chains else None
    if chain_ids is None:
        raise KeyError(f"unknown chain {chain!r}")
    col = {j.id: k for k, j in enumerate(model.joints)}
    joints = model.chain_joints(chain)
    seed = np.zeros(len(joints))

    frames = np.zeros((cfg.n_frames, len(model)))
    tick_cfg = ik_cfg
    for i in range(cfg.n_frames):
        t = i / cfg.rate_hz
        current = targets[0]
        for tgt in targets:
            if tgt.time <= t:
                current = tgt
            else:
                break
        objectives = [
            IkObjective.position(current.position),
            IkObjective.displacement(displacement_weight),
        ]
        if current.orientation is not None:
            objectives.append(IkObjective.orientation(current.orientation, orientation_weight))
        solution = solve(model, chain, objectives, seed, tick_cfg)
        seed = solution.angles
        for jid, angle in zip(chain_ids, solution.angles):
            frames[i, col[jid]] = angle
    return ActionSequence(name=name, rate_hz=cfg.rate_hz, frames=frames)


def annotate(
    seq: ActionSequence,
    events: Sequence[tuple[float, str, str]],
    vocab: CommandVocabulary,
) -> ActionSequence:
    """Merge (time_s, kind, command_name) marks into the sequence as frame events."""
    facial: list[Event] = list(seq.facial_events)
    audio: list[Event] = list(seq.audio_events)
    for time_s, kind, cmd in events:
        if kind not in ("facial", "audio"):
            raise ValueError(f"unknown event kind {kind!r}")
        if not 0.0 <= time_s <= seq.duration:
            raise ValueError(f"event time {time_s} outside 0..{seq.duration:.3f}s")
        idx = vocab.index_of(kind, cmd)
        frame = min(round(time_s * seq.rate_hz), len(seq) - 1)
        (facial if kind == "facial" else audio).append((frame, idx))
    facial.sort(key=lambda e: e[0])
    audio.sort(key=lambda e: e[0])
    return ActionSequence(
        name=seq.name,
        rate_hz=seq.rate_hz,
        frames=seq.frames,
        facial_events=facial,
        audio_events=audio,
    )
