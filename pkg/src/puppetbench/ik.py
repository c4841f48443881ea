"""Evolutionary multi-objective inverse kinematics for model chains.

A (mu+lambda)-style loop with elitism: candidates are joint vectors, fitness
is a weighted sum of quadratic objectives, children come from uniform
crossover plus Gaussian mutation with annealed sigma.  Selection is purely
comparison-based, so scaling all weights by a positive constant does not
change the search trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .robot import JointSpec, RobotModel

OBJECTIVE_KINDS = ("position", "orientation", "joint_limit_margin", "displacement")


@dataclass(frozen=True)
class IkObjective:
    kind: str
    weight: float = 1.0
    target_position: Optional[tuple[float, float, float]] = None
    target_orientation: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise ValueError("objective weight must be finite and nonnegative")
        if self.kind == "position" and self.target_position is None:
            raise ValueError("position objective needs target_position")
        if self.kind == "orientation" and self.target_orientation is None:
            raise ValueError("orientation objective needs target_orientation")

    @classmethod
    def position(cls, target, weight: float = 1.0) -> "IkObjective":
        return cls("position", weight, target_position=tuple(target))

    @classmethod
    def orientation(cls, target, weight: float = 1.0) -> "IkObjective":
        return cls("orientation", weight, target_orientation=tuple(target))

    @classmethod
    def limit_margin(cls, weight: float = 1.0) -> "IkObjective":
        return cls("joint_limit_margin", weight)

    @classmethod
    def displacement(cls, weight: float = 1.0) -> "IkObjective":
        return cls("displacement", weight)


@dataclass(frozen=True)
class IkConfig:
    population: int = 64
    elites: int = 4
    generations: int = 100
    mutation_sigma: float = 0.05  # radians
    sigma_decay: float = 0.97  # per generation
    seed: int = 0
    tolerance: float = 1e-3  # meters

    def __post_init__(self):
        if not 0 < self.elites < self.population:
            raise ValueError("need 0 < elites < population")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")


@dataclass(frozen=True)
class IkSolution:
    angles: np.ndarray
    fitness: float
    tip_error: float
    converged: bool


# Batched quaternion kinematics over a population of joint vectors.

def _batch_quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bw, bx, by, bz = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=1,
    )


def _batch_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    w = q[:, :1]
    u = q[:, 1:]
    uv = np.cross(u, v[None, :])
    return v[None, :] + 2.0 * w * uv + 2.0 * np.cross(u, uv)


def batch_fk(joints: Sequence[JointSpec], angles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tip positions (P, 3) and orientations (P, 4) for P candidate joint vectors."""
    n = angles.shape[0]
    pos = np.zeros((n, 3))
    ori = np.zeros((n, 4))
    ori[:, 0] = 1.0
    for k, spec in enumerate(joints):
        half = 0.5 * angles[:, k]
        s = np.sin(half)
        q = np.empty((n, 4))
        q[:, 0] = np.cos(half)
        q[:, 1:] = s[:, None] * np.asarray(spec.axis)
        ori = _batch_quat_mul(ori, q)
        pos = pos + _batch_rotate(ori, np.asarray(spec.offset))
    return pos, ori


def _fitness(
    objectives: Sequence[IkObjective],
    joints: Sequence[JointSpec],
    pop: np.ndarray,
    seed_pose: np.ndarray,
    tips: np.ndarray,
    oris: np.ndarray,
) -> np.ndarray:
    total = np.zeros(len(pop))
    lo = np.array([j.min_angle for j in joints])
    hi = np.array([j.max_angle for j in joints])
    center = 0.5 * (lo + hi)
    soft = 0.45 * (hi - lo)  # 90% of the half-range
    for obj in objectives:
        if obj.kind == "position":
            d = tips - np.asarray(obj.target_position)
            value = np.sum(d * d, axis=1)
        elif obj.kind == "orientation":
            target = np.asarray(obj.target_orientation)
            dot = np.abs(oris @ target)
            value = (2.0 * np.arccos(np.minimum(1.0, dot))) ** 2
        elif obj.kind == "joint_limit_margin":
            excess = np.maximum(0.0, np.abs(pop - center) - soft)
            value = np.sum(excess * excess, axis=1)
        else:  # displacement
            d = pop - seed_pose
            value = np.sum(d * d, axis=1)
        total += obj.weight * value
    return total


def _tip_errors(objectives: Sequence[IkObjective], tips: np.ndarray) -> np.ndarray:
    for obj in objectives:
        if obj.kind == "position":
            return np.linalg.norm(tips - np.asarray(obj.target_position), axis=1)
    return np.zeros(len(tips))


def solve(
    model: RobotModel,
    chain: str,
    objectives: Sequence[IkObjective],
    seed_pose: Sequence[float],
    cfg: IkConfig = IkConfig(),
) -> IkSolution:
    """Evolve a joint vector for the chain; deterministic for a fixed cfg.seed."""
    if not objectives:
        raise ValueError("at least one objective is required")
    joints = model.chain_joints(chain)
    lo = np.array([j.min_angle for j in joints])
    hi = np.array([j.max_angle for j in joints])
    seed_pose = np.asarray(seed_pose, dtype=float)
    if seed_pose.shape != (len(joints),):
        raise ValueError(f"seed pose must have {len(joints)} angles")
    if np.any(seed_pose < lo) or np.any(seed_pose > hi):
        raise ValueError("seed pose outside joint limits")
    has_position = any(o.kind == "position" for o in objectives)

    rng = np.random.default_rng(cfg.seed)
    pop = seed_pose + rng.normal(0.0, cfg.mutation_sigma, (cfg.population, len(joints)))
    pop[0] = seed_pose  # keep the exact seed in the initial population
    pop = np.clip(pop, lo, hi)

    def evaluate(candidates):
        tips, oris = batch_fk(joints, candidates)
        fit = _fitness(objectives, joints, candidates, seed_pose, tips, oris)
        return fit, _tip_errors(objectives, tips)

    fitness, tip_err = evaluate(pop)
    sigma = cfg.mutation_sigma
    converged = False
    for _ in range(cfg.generations):
        order = np.argsort(fitness, kind="stable")
        pop, fitness, tip_err = pop[order], fitness[order], tip_err[order]
        if has_position and tip_err[0] < cfg.tolerance:
            converged = True
            break
        n_children = cfg.population - cfg.elites
        # 2-way tournament parent selection (comparison-based)
        picks = rng.integers(0, cfg.population, size=(2, n_children, 2))
        parents_a = np.where(
            (fitness[picks[0, :, 0]] <= fitness[picks[0, :, 1]])[:, None],
            pop[picks[0, :, 0]],
            pop[picks[0, :, 1]],
        )
        parents_b = np.where(
            (fitness[picks[1, :, 0]] <= fitness[picks[1, :, 1]])[:, None],
            pop[picks[1, :, 0]],
            pop[picks[1, :, 1]],
        )
        mask = rng.random((n_children, len(joints))) < 0.5
        children = np.where(mask, parents_a, parents_b)
        children = children + rng.normal(0.0, sigma, children.shape)
        children = np.clip(children, lo, hi)
        child_fit, child_err = evaluate(children)
        pop = np.vstack([pop[: cfg.elites], children])
        fitness = np.concatenate([fitness[: cfg.elites], child_fit])
        tip_err = np.concatenate([tip_err[: cfg.elites], child_err])
        sigma *= cfg.sigma_decay

    best = int(np.argmin(fitness))
    if has_position and tip_err[best] < cfg.tolerance:
        converged = True
    return IkSolution(
        angles=pop[best].copy(),
        fitness=float(fitness[best]),
        tip_error=float(tip_err[best]),
        converged=converged,
    )
