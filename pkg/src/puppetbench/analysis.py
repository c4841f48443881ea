"""Post-hoc analysis of trained policies: PCA of slow-context trajectories,
cluster separation, and trajectory reconstruction error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .actions import ChannelLayout, NormalizedSequence


@dataclass(frozen=True)
class PcaResult:
    mean: np.ndarray  # (n,)
    components: np.ndarray  # (k, n), orthonormal rows
    explained_variance: np.ndarray  # (k,) ratios, non-increasing
    projections: list[np.ndarray]  # per sequence, (T_s, k)


def pca(cs_matrices: Sequence[np.ndarray], k: int) -> PcaResult:
    """Pooled-rows PCA across all sequences with a deterministic sign convention
    (largest-magnitude entry of each component is positive)."""
    mats = [np.asarray(m, dtype=float) for m in cs_matrices]
    if not mats:
        raise ValueError("no matrices given")
    n = mats[0].shape[1]
    if any(m.ndim != 2 or m.shape[1] != n for m in mats):
        raise ValueError("all matrices must be 2-D with a common column count")
    if k > n:
        raise ValueError(f"k={k} exceeds dimensionality {n}")
    pooled = np.vstack(mats)
    if len(pooled) < k + 1:
        raise ValueError(f"need at least {k + 1} rows, have {len(pooled)}")
    mean = pooled.mean(axis=0)
    centered = pooled - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    total = float(np.sum(svals**2))
    # below float noise relative to the data scale, the input is degenerate
    floor = np.finfo(float).eps ** 2 * max(1.0, float(np.sum(pooled * pooled)))
    ratios = (svals[:k] ** 2 / total) if total > floor else np.zeros(k)
    projections = [(m - mean) @ components.T for m in mats]
    return PcaResult(mean=mean, components=components,
                     explained_variance=np.asarray(ratios), projections=projections)


def separation_score(projections: Sequence[np.ndarray]) -> float:
    """Mean silhouette of the projected points in the first two components,
    with sequence identity as the cluster label."""
    if len(projections) < 2:
        raise ValueError("need at least 2 sequences to score separation")
    points = np.vstack([np.asarray(p)[:, :2] for p in projections])
    labels = np.concatenate([np.full(len(p), i) for i, p in enumerate(projections)])
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    scores = np.zeros(len(points))
    cluster_ids = np.unique(labels)
    sums = {c: dist[:, labels == c].sum(axis=1) for c in cluster_ids}
    counts = {c: int(np.sum(labels == c)) for c in cluster_ids}
    for i, own in enumerate(labels):
        if counts[own] <= 1:
            continue  # singleton cluster scores 0
        a = sums[own][i] / (counts[own] - 1)
        b = min(sums[c][i] / counts[c] for c in cluster_ids if c != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def trajectory_rmse(
    generated: NormalizedSequence, teacher: NormalizedSequence, layout: ChannelLayout
) -> dict[str, float]:
    """RMSE over the joint, facial and audio blocks plus overall."""
    if len(generated) != len(teacher):
        raise ValueError(f"length mismatch: {len(generated)} vs {len(teacher)}")
    if generated.dim != teacher.dim or generated.dim != layout.dim:
        raise ValueError("dimension mismatch")
    d = generated.vectors - teacher.vectors
    return {
        "joints": float(np.sqrt(np.mean(d[:, layout.joints] ** 2))),
        "facial": float(np.sqrt(np.mean(d[:, layout.facial] ** 2))),
        "audio": float(np.sqrt(np.mean(d[:, layout.audio] ** 2))),
        "overall": float(np.sqrt(np.mean(d**2))),
    }


def write_pca_csv(result: PcaResult, names: Sequence[str], path) -> None:
    k = result.components.shape[0]
    with open(path, "w") as fh:
        fh.write("sequence_id," + "t," + ",".join(f"pc{i + 1}" for i in range(k)) + "\n")
        for name, proj in zip(names, result.projections):
            for t, row in enumerate(proj):
                fh.write(f"{name},{t}," + ",".join(repr(v) for v in row) + "\n")


def write_variance_csv(result: PcaResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("component,explained_variance_ratio\n")
        for i, r in enumerate(result.explained_variance):
            fh.write(f"pc{i + 1},{r!r}\n")


def write_rmse_csv(rows: Sequence[tuple[str, dict[str, float]]], path) -> None:
    with open(path, "w") as fh:
        fh.write("sequence_id,joints,facial,audio,overall\n")
        for name, rep in rows:
            fh.write(
                f"{name},{rep['joints']!r},{rep['facial']!r},{rep['audio']!r},{rep['overall']!r}\n"
            )
