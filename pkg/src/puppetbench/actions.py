"""Demonstration data model: joint trajectories with synced facial/audio
command events, one-hot encoding and [-1, 1] normalization.

Command channels use -1/+1 one-hot coding (symmetric for tanh dynamics) and
step-function semantics: a command stays active until the next event of the
same kind; index 0 (the resting command) is active before any event.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .robot import RobotModel

ACTION_FORMAT_VERSION = 1
DATASET_FORMAT_VERSION = 1

Event = tuple[int, int]  # (frame_index, command_index)


@dataclass(frozen=True)
class CommandVocabulary:
    """Ordered facial and audio command names; index 0 is the resting command."""

    facial: tuple[str, ...]
    audio: tuple[str, ...]

    def __post_init__(self):
        for kind, names in (("facial", self.facial), ("audio", self.audio)):
            if len(names) == 0:
                raise ValueError(f"{kind} vocabulary needs at least the reserved index 0")
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate {kind} command name")

    def index_of(self, kind: str, name: str) -> int:
        names = self.facial if kind == "facial" else self.audio
        try:
            return names.index(name)
        except ValueError:
            raise KeyError(f"unknown {kind} command {name!r}") from None


def default_vocabulary() -> CommandVocabulary:
    return CommandVocabulary(
        facial=("neutral", "smile", "angry", "sad", "surprised", "troubled"),
        audio=("silent", "greet", "laugh", "sigh", "hum", "yes"),
    )


class ChannelLayout(NamedTuple):
    """Block layout of a normalized vector: joints, then facial, then audio."""

    n_joints: int
    n_facial: int
    n_audio: int

    @property
    def dim(self) -> int:
        return self.n_joints + self.n_facial + self.n_audio

    @property
    def joints(self) -> slice:
        return slice(0, self.n_joints)

    @property
    def facial(self) -> slice:
        return slice(self.n_joints, self.n_joints + self.n_facial)

    @property
    def audio(self) -> slice:
        return slice(self.n_joints + self.n_facial, self.dim)

    @classmethod
    def of(cls, model: RobotModel, vocab: CommandVocabulary) -> "ChannelLayout":
        return cls(len(model), len(vocab.facial), len(vocab.audio))


def _check_events(events: Sequence[Event], n_frames: int, what: str) -> list[Event]:
    events = [(int(f), int(c)) for f, c in events]
    last = -1
    for f, c in events:
        if not 0 <= f < n_frames:
            raise ValueError(f"{what} event at frame {f} outside 0..{n_frames - 1}")
        if c < 0:
            raise ValueError(f"{what} event at frame {f} has negative command index")
        if f < last:
            raise ValueError(f"{what} events not sorted by frame index")
        last = f
    return events


@dataclass(frozen=True)
class ActionSequence:
    """One demonstration: frames of joint radians plus command events."""

    name: str
    rate_hz: float
    frames: np.ndarray  # (T, n_joints)
    facial_events: list[Event] = field(default_factory=list)
    audio_events: list[Event] = field(default_factory=list)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim != 2:
            raise ValueError("frames must be a (T, n_joints) array")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be > 0")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(
            self, "facial_events", _check_events(self.facial_events, len(frames), "facial")
        )
        object.__setattr__(
            self, "audio_events", _check_events(self.audio_events, len(frames), "audio")
        )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        return len(self.frames) / self.rate_hz


@dataclass(frozen=True)
class NormalizedSequence:
    """Per-step vectors in [-1, 1]: scaled joints + one-hot command blocks."""

    name: str
    vectors: np.ndarray  # (T, D)
    rate_hz: Optional[float] = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a (T, D) array")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("vectors must be finite")
        if np.any(np.abs(vectors) > 1.0 + 1e-12):
            raise ValueError("vector components must lie in [-1, 1]")
        object.__setattr__(self, "vectors", vectors)

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class Dataset:
    vocabulary: CommandVocabulary
    sequences: list[NormalizedSequence]
    source_model: str

    def __post_init__(self):
        dims = {s.dim for s in self.sequences}
        if len(dims) > 1:
            raise ValueError(f"sequences disagree on vector dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.sequences[0].dim


def validate_sequence(seq: ActionSequence, model: RobotModel, vocab: CommandVocabulary) -> None:
    lo, hi = model.limits()
    if seq.frames.shape[1] != len(model):
        raise ValueError(
            f"sequence {seq.name!r} has {seq.frames.shape[1]} joints, model has {len(model)}"
        )
    if np.any(seq.frames < lo - 1e-12) or np.any(seq.frames > hi + 1e-12):
        raise ValueError(f"sequence {seq.name!r} has joint values outside model limits")
    for events, names, kind in (
        (seq.facial_events, vocab.facial, "facial"),
        (seq.audio_events, vocab.audio, "audio"),
    ):
        for f, c in events:
            if c >= len(names):
                raise ValueError(f"{kind} event at frame {f}: unknown command index {c}")


def _active_indices(events: Sequence[Event], n_frames: int) -> np.ndarray:
    """Step-function command track: most recent event wins, index 0 before any."""
    active = np.zeros(n_frames, dtype=int)
    for f, c in events:
        active[f:] = c
    return active


def _one_hot(active: np.ndarray, width: int) -> np.ndarray:
    block = -np.ones((len(active), width))
    block[np.arange(len(active)), active] = 1.0
    return block


def normalize(
    seq: ActionSequence, model: RobotModel, vocab: CommandVocabulary
) -> NormalizedSequence:
    """Encode a demonstration as per-step vectors in [-1, 1]."""
    validate_sequence(seq, model, vocab)
    lo, hi = model.limits()
    joints = 2.0 * (seq.frames - lo) / (hi - lo) - 1.0
    facial = _one_hot(_active_indices(seq.facial_events, len(seq)), len(vocab.facial))
    audio = _one_hot(_active_indices(seq.audio_events, len(seq)), len(vocab.audio))
    return NormalizedSequence(
        name=seq.name,
        vectors=np.hstack([joints, facial, audio]),
        rate_hz=seq.rate_hz,
    )


def _events_from_block(block: np.ndarray) -> list[Event]:
    """Argmax decode: an event exactly where the active command changes.

    An implicit resting command (index 0) precedes the first step, so a
    sequence starting on another command yields an event at frame 0.
    """
    active = np.argmax(block, axis=1)
    events: list[Event] = []
    prev = 0
    for t, idx in enumerate(active):
        if idx != prev:
            events.append((t, int(idx)))
            prev = idx
    return events


def denormalize(
    nseq: NormalizedSequence,
    model: RobotModel,
    vocab: CommandVocabulary,
    rate_hz: Optional[float] = None,
) -> ActionSequence:
    """Inverse of normalize; joint values are clipped to the model's limits."""
    layout = ChannelLayout.of(model, vocab)
    if nseq.dim != layout.dim:
        raise ValueError(f"vector dimension {nseq.dim} does not match layout {layout.dim}")
    lo, hi = model.limits()
    joints = lo + (nseq.vectors[:, layout.joints] + 1.0) * 0.5 * (hi - lo)
    joints = np.clip(joints, lo, hi)
    rate = rate_hz if rate_hz is not None else (nseq.rate_hz or 50.0)
    return ActionSequence(
        name=nseq.name,
        rate_hz=rate,
        frames=joints,
        facial_events=_events_from_block(nseq.vectors[:, layout.facial]),
        audio_events=_events_from_block(nseq.vectors[:, layout.audio]),
    )


# File codecs (JSON).  Floats round-trip exactly via repr.

def action_to_dict(seq: ActionSequence, model: RobotModel) -> dict:
    return {
        "format_version": ACTION_FORMAT_VERSION,
        "name": seq.name,
        "rate_hz": seq.rate_hz,
        "joint_names": [j.name for j in model.joints],
        "frames": seq.frames.tolist(),
        "facial_events": [list(e) for e in seq.facial_events],
        "audio_events": [list(e) for e in seq.audio_events],
    }


def action_from_dict(doc: dict) -> ActionSequence:
    if doc.get("format_version") != ACTION_FORMAT_VERSION:
        raise ValueError(f"unsupported action format_version {doc.get('format_version')!r}")
    try:
        frames = np.array(doc["frames"], dtype=float)
        if frames.ndim != 2 or frames.shape[1] != len(doc["joint_names"]):
            raise ValueError("frames do not match joint_names")
        return ActionSequence(
            name=doc["name"],
            rate_hz=doc["rate_hz"],
            frames=frames,
            facial_events=[tuple(e) for e in doc["facial_events"]],
            audio_events=[tuple(e) for e in doc["audio_events"]],
        )
    except KeyError as exc:
        raise ValueError(f"action file missing field {exc}") from exc


def save_action(seq: ActionSequence, model: RobotModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(action_to_dict(seq, model), fh)
        fh.write("\n")


def load_action(path) -> ActionSequence:
    with open(path) as fh:
        return action_from_dict(json.load(fh))


def dataset_to_dict(ds: Dataset) -> dict:
    return {
        "format_version": DATASET_FORMAT_VERSION,
        "vocabulary": {"facial": list(ds.vocabulary.facial), "audio": list(ds.vocabulary.audio)},
        "source_model": ds.source_model,
        "sequences": [
            {"name": s.name, "rate_hz": s.rate_hz, "vectors": s.vectors.tolist()}
            for s in ds.sequences
        ],
    }


def dataset_from_dict(doc: dict) -> Dataset:
    if doc.get("format_version") != DATASET_FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format_version {doc.get('format_version')!r}")
    try:
        vocab = CommandVocabulary(
            facial=tuple(doc["vocabulary"]["facial"]),
            audio=tuple(doc["vocabulary"]["audio"]),
        )
        sequences = [
            NormalizedSequence(
                name=rec["name"],
                vectors=np.array(rec["vectors"], dtype=float),
                rate_hz=rec.get("rate_hz"),
            )
            for rec in doc["sequences"]
        ]
        return Dataset(vocabulary=vocab, sequences=sequences, source_model=doc["source_model"])
    except KeyError as exc:
        raise ValueError(f"dataset file missing field {exc}") from exc


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        json.dump(dataset_to_dict(ds), fh)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        return dataset_from_dict(json.load(fh))
