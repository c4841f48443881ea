"""Simulated 17-DoF expressive humanoid: joint specs, chains, servo dynamics.

The canonical build ("hatsuki_mk1") has 3 head joints, two 5-joint arms,
one tendon channel per hand and 2 ear joints.  Toy models with fewer joints
are allowed everywhere; only the canonical model pins the count at 17.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .geometry import IDENTITY_QUAT, quat_from_axis_angle, quat_mul, quat_rotate

JOINT_GROUPS = frozenset(
    {"head", "arm_left", "arm_right", "finger_left", "finger_right", "ear"}
)

# First-order servo lag rate; exposes tracking error without full dynamics.
SERVO_LAG_RATE = 20.0  # 1/s
# Current feedback model: proportional to tracking error, clipped at stall.
CURRENT_PER_RAD = 0.5  # A/rad
STALL_AMP_PER_NM = 0.55  # maps stall torque to a stall current bound

MODEL_FORMAT_VERSION = 1


def rpm_to_rad_s(rpm: float) -> float:
    return rpm * 2.0 * math.pi / 60.0


@dataclass(frozen=True)
class JointSpec:
    """One servo-driven joint: bus id, limits, speed/torque class, link geometry."""

    id: int
    name: str
    group: str
    min_angle: float
    max_angle: float
    max_speed: float  # rad/s
    stall_torque: float  # Nm
    axis: tuple[float, float, float]
    offset: tuple[float, float, float]  # link from this joint to the next, meters
    parent: Optional[int] = None

    def __post_init__(self):
        if not 1 <= self.id <= 253:
            raise ValueError(f"joint {self.name}: bus id {self.id} outside 1..253")
        if self.group not in JOINT_GROUPS:
            raise ValueError(f"joint {self.name}: unknown group {self.group!r}")
        if not self.min_angle < self.max_angle:
            raise ValueError(f"joint {self.name}: min_angle must be < max_angle")
        if self.max_speed <= 0 or self.stall_torque <= 0:
            raise ValueError(f"joint {self.name}: speed and stall torque must be > 0")
        norm = math.sqrt(sum(a * a for a in self.axis))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"joint {self.name}: axis must be unit length")

    @property
    def stall_current(self) -> float:
        return STALL_AMP_PER_NM * self.stall_torque


@dataclass(frozen=True)
class RobotModel:
    """Immutable joint list plus named kinematic chains rooted at the torso."""

    name: str
    joints: tuple[JointSpec, ...]
    chains: dict[str, tuple[int, ...]]

    def __post_init__(self):
        ids = [j.id for j in self.joints]
        if len(set(ids)) != len(ids):
            raise ValueError("joint ids must be unique")
        known = set(ids)
        for cname, chain in self.chains.items():
            if len(set(chain)) != len(chain):
                raise ValueError(f"chain {cname!r} repeats a joint id")
            for jid in chain:
                if jid not in known:
                    raise ValueError(f"chain {cname!r} references unknown joint {jid}")
        by_id = {j.id: j for j in self.joints}
        for j in self.joints:
            if j.parent is not None and j.parent not in known:
                raise ValueError(f"joint {j.name}: unknown parent {j.parent}")
            # parent links must not form a cycle
            seen = {j.id}
            cur = j.parent
            while cur is not None:
                if cur in seen:
                    raise ValueError(f"joint {j.name}: parent cycle")
                seen.add(cur)
                cur = by_id[cur].parent

    def __len__(self) -> int:
        return len(self.joints)

    def joint(self, jid: int) -> JointSpec:
        for j in self.joints:
            if j.id == jid:
                return j
        raise KeyError(f"no joint with id {jid}")

    def joint_named(self, name: str) -> JointSpec:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(f"no joint named {name!r}")

    def chain_joints(self, chain: str) -> list[JointSpec]:
        if chain not in self.chains:
            raise KeyError(f"unknown chain {chain!r}")
        return [self.joint(jid) for jid in self.chains[chain]]

    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) limit arrays in joint order."""
        lo = np.array([j.min_angle for j in self.joints])
        hi = np.array([j.max_angle for j in self.joints])
        return lo, hi


@dataclass
class ServoState:
    """Mutable per-servo simulation state; owned by one bus at a time."""

    position: float = 0.0
    goal: float = 0.0
    torque_enabled: bool = True
    current_estimate: float = 0.0  # amperes


class Pose(NamedTuple):
    position: np.ndarray  # 3-vector, torso frame
    orientation: np.ndarray  # unit quaternion [w, x, y, z]


def step_servo(spec: JointSpec, state: ServoState, dt: float) -> ServoState:
    """Advance one servo by dt seconds.

    Torque on: first-order lag toward the goal, clipped to max_speed*dt and
    the joint limits; current estimate proportional to the remaining error.
    Torque off: position is held (only external puppeting moves it), zero current.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not state.torque_enabled:
        return replace(state, current_estimate=0.0)
    goal = min(max(state.goal, spec.min_angle), spec.max_angle)
    step = (goal - state.position) * (1.0 - math.exp(-SERVO_LAG_RATE * dt))
    max_step = spec.max_speed * dt
    step = min(max(step, -max_step), max_step)
    position = min(max(state.position + step, spec.min_angle), spec.max_angle)
    current = min(CURRENT_PER_RAD * abs(goal - position), spec.stall_current)
    return ServoState(position, state.goal, True, current)


def forward_kinematics(model: RobotModel, chain: str, angles: Sequence[float]) -> Pose:
    """Chain-tip pose in the torso frame.

    Each joint contributes (rotate about its axis by the angle) followed by
    (translate along its offset); the chain composes these left to right.
    """
    joints = model.chain_joints(chain)
    if len(angles) != len(joints):
        raise ValueError(f"chain {chain!r} has {len(joints)} joints, got {len(angles)} angles")
    pos = np.zeros(3)
    ori = IDENTITY_QUAT.copy()
    for spec, angle in zip(joints, angles):
        if not spec.min_angle <= angle <= spec.max_angle:
            raise ValueError(f"angle {angle} outside limits of joint {spec.name}")
        ori = quat_mul(ori, quat_from_axis_angle(spec.axis, angle))
        pos = pos + quat_rotate(ori, spec.offset)
    return Pose(pos, ori)


def _xm430(jid, name, group, lo, hi, axis, offset, parent=None) -> JointSpec:
    return JointSpec(jid, name, group, lo, hi, rpm_to_rad_s(46.0), 4.1, axis, offset, parent)


def default_model() -> RobotModel:
    """The built-in hatsuki_mk1 model: 17 joints, specs per the servo classes.

    Head and arms use the 46 RPM / 4.1 Nm class, shoulders the 30 RPM /
    10.6 Nm class, hand tendons the 100 RPM / 0.17 Nm class and ears the
    55 RPM / 0.2 Nm class.  Arm links are 0.18 m / 0.16 m.
    """
    z, y, x = (0.0, 0.0, 1.0), (0.0, 1.0, 0.0), (1.0, 0.0, 0.0)
    xm540_speed = rpm_to_rad_s(30.0)
    s3114_speed = rpm_to_rad_s(100.0)
    hk15148_speed = rpm_to_rad_s(55.0)

    joints = [
        _xm430(1, "head_yaw", "head", -1.5, 1.5, z, (0.0, 0.0, 0.06)),
        _xm430(2, "head_pitch", "head", -0.7, 0.7, y, (0.0, 0.0, 0.05), parent=1),
        _xm430(3, "head_roll", "head", -0.5, 0.5, x, (0.0, 0.0, 0.09), parent=2),
    ]
    for side, sign, base in (("l", 1.0, 4), ("r", -1.0, 9)):
        group = "arm_left" if side == "l" else "arm_right"
        joints += [
            JointSpec(base, f"{side}_shoulder_pitch", group, -2.6, 2.6,
                      xm540_speed, 10.6, y, (0.0, sign * 0.05, 0.0)),
            _xm430(base + 1, f"{side}_shoulder_roll", group,
                   -0.4 if sign > 0 else -2.8, 2.8 if sign > 0 else 0.4,
                   x, (0.0, sign * 0.03, 0.0), parent=base),
            _xm430(base + 2, f"{side}_upper_arm_yaw", group, -1.6, 1.6,
                   z, (0.0, 0.0, -0.18), parent=base + 1),
            _xm430(base + 3, f"{side}_elbow_pitch", group, -2.3, 0.3,
                   y, (0.0, 0.0, -0.16), parent=base + 2),
            _xm430(base + 4, f"{side}_wrist_yaw", group, -1.8, 1.8,
                   z, (0.0, 0.0, -0.05), parent=base + 3),
        ]
    joints += [
        JointSpec(14, "l_hand_tendon", "finger_left", 0.0, 1.6,
                  s3114_speed, 0.17, y, (0.0, 0.0, -0.03), parent=8),
        JointSpec(15, "r_hand_tendon", "finger_right", 0.0, 1.6,
                  s3114_speed, 0.17, y, (0.0, 0.0, -0.03), parent=13),
        JointSpec(16, "ear_left", "ear", -0.9, 0.9,
                  hk15148_speed, 0.2, x, (0.0, 0.02, 0.02), parent=3),
        JointSpec(17, "ear_right", "ear", -0.9, 0.9,
                  hk15148_speed, 0.2, x, (0.0, -0.02, 0.02), parent=3),
    ]
    chains = {
        "head": (1, 2, 3),
        "arm_left": (4, 5, 6, 7, 8),
        "arm_right": (9, 10, 11, 12, 13),
    }
    model = RobotModel("hatsuki_mk1", tuple(joints), chains)
    assert len(model) == 17
    return model


def model_to_dict(model: RobotModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "name": model.name,
        "joints": [
            {
                "id": j.id,
                "name": j.name,
                "group": j.group,
                "min_angle": j.min_angle,
                "max_angle": j.max_angle,
                "max_speed": j.max_speed,
                "stall_torque": j.stall_torque,
                "axis": list(j.axis),
                "offset": list(j.offset),
                "parent": j.parent,
            }
            for j in model.joints
        ],
        "chains": {name: list(chain) for name, chain in model.chains.items()},
    }


def model_from_dict(doc: dict) -> RobotModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    try:
        joints = tuple(
            JointSpec(
                id=rec["id"],
                name=rec["name"],
                group=rec["group"],
                min_angle=rec["min_angle"],
                max_angle=rec["max_angle"],
                max_speed=rec["max_speed"],
                stall_torque=rec["stall_torque"],
                axis=tuple(rec["axis"]),
                offset=tuple(rec["offset"]),
                parent=rec.get("parent"),
            )
            for rec in doc["joints"]
        )
        chains = {name: tuple(chain) for name, chain in doc["chains"].items()}
        return RobotModel(doc["name"], joints, chains)
    except KeyError as exc:
        raise ValueError(f"model file missing field {exc}") from exc


def save_model(model: RobotModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> RobotModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
