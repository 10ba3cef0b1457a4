"""Isolation forest for log-record feature vectors.

Each tree is grown on an independent subsample of size psi: splits pick a
uniformly random dimension (among those with spread) and a uniform split
value within that dimension's subsample range, stopping at height limit
ceil(log2 psi) or when a node isolates a single point. The anomaly score is

    s(x) = 2 ** (-E[h(x)] / c(psi))

where h(x) is the path depth plus c(leaf_size) for truncated leaves, and
c(n) = 2 * H(n - 1) - 2 * (n - 1) / n with H(i) = ln(i) + Euler's constant.
Higher scores mean easier isolation, i.e. more anomalous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InsufficientData

EULER_GAMMA = 0.5772156649


def average_path_length(n: int) -> float:
    """c(n), the expected search depth of an unsuccessful BST lookup among n points."""
    if n <= 1:
        return 0.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


@dataclass
class IsoTree:
    """One isolation tree, flattened to parallel arrays for fast traversal.

    Node i is internal iff left[i] >= 0; leaves carry the training-point count
    that reached them in size[i].
    """

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    size: list[int]

    def path_length(self, x) -> float:
        i = 0
        depth = 0
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        while left[i] >= 0:
            i = left[i] if x[feature[i]] < threshold[i] else right[i]
            depth += 1
        return depth + average_path_length(self.size[i])

    @property
    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.left[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "size": self.size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> IsoTree:
        return cls(
            feature=[int(v) for v in d["feature"]],
            threshold=[float(v) for v in d["threshold"]],
            left=[int(v) for v in d["left"]],
            right=[int(v) for v in d["right"]],
            size=[int(v) for v in d["size"]],
        )

    @classmethod
    def from_nested(cls, node: dict) -> IsoTree:
        """Build from a hand-written nested dict: {dim, value, left, right} or {size}."""
        tree = cls([], [], [], [], [])

        def add(n: dict) -> int:
            i = len(tree.feature)
            if "size" in n:
                tree.feature.append(-1)
                tree.threshold.append(0.0)
                tree.left.append(-1)
                tree.right.append(-1)
                tree.size.append(int(n["size"]))
                return i
            tree.feature.append(int(n["dim"]))
            tree.threshold.append(float(n["value"]))
            tree.left.append(-2)  # patched below
            tree.right.append(-2)
            tree.size.append(int(n.get("node_size", 0)))
            tree.left[i] = add(n["left"])
            tree.right[i] = add(n["right"])
            return i

        add(node)
        return tree


@dataclass
class IsolationForestModel:
    trees: list[IsoTree]
    subsample_size: int
    n_trees: int
    height_limit: int
    dim: int

    def to_dict(self) -> dict:
        return {
            "kind": "isolation_forest",
            "version": 1,
            "subsample_size": self.subsample_size,
            "n_trees": self.n_trees,
            "height_limit": self.height_limit,
            "dim": self.dim,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> IsolationForestModel:
        return cls(
            trees=[IsoTree.from_dict(t) for t in d["trees"]],
            subsample_size=int(d["subsample_size"]),
            n_trees=int(d["n_trees"]),
            height_limit=int(d["height_limit"]),
            dim=int(d["dim"]),
        )


def _grow(tree: IsoTree, points: np.ndarray, depth: int, height_limit: int,
          rng: np.random.Generator) -> int:
    i = len(tree.feature)
    n = points.shape[0]
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    splittable = np.flatnonzero(lo < hi)
    if depth >= height_limit or n <= 1 or splittable.size == 0:
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.size.append(n)
        return i

    dim = int(splittable[rng.integers(splittable.size)])
    split = float(rng.uniform(lo[dim], hi[dim]))
    tree.feature.append(dim)
    tree.threshold.append(split)
    tree.left.append(-2)
    tree.right.append(-2)
    tree.size.append(n)

    mask = points[:, dim] < split
    tree.left[i] = _grow(tree, points[mask], depth + 1, height_limit, rng)
    tree.right[i] = _grow(tree, points[~mask], depth + 1, height_limit, rng)
    return i


def iforest_fit(data, psi: int, t: int, rng: np.random.Generator) -> IsolationForestModel:
    """Grow t isolation trees over independent psi-subsamples of data."""
    points = np.asarray(data, dtype=float)
    if points.ndim != 2 or points.shape[0] < 2:
        raise InsufficientData(f"need at least 2 training vectors, got shape {points.shape}")
    n = points.shape[0]
    psi_eff = min(psi, n)
    if psi_eff < 2:
        raise InsufficientData(f"subsample size must be >= 2, got {psi_eff}")
    height_limit = math.ceil(math.log2(psi_eff))

    trees = []
    for _ in range(t):
        idx = rng.choice(n, size=psi_eff, replace=False)
        tree = IsoTree([], [], [], [], [])
        _grow(tree, points[idx], 0, height_limit, rng)
        trees.append(tree)
    return IsolationForestModel(
        trees=trees, subsample_size=psi_eff, n_trees=t,
        height_limit=height_limit, dim=points.shape[1],
    )


def iforest_score_detail(model: IsolationForestModel, x) -> tuple[float, np.ndarray]:
    """Anomaly score in (0,1) plus the per-tree single-tree scores.

    The per-tree spread feeds the log agent's confidence heuristic.
    """
    vec = np.asarray(x, dtype=float)
    if vec.shape != (model.dim,):
        raise DimensionError(f"expected dim {model.dim}, got shape {vec.shape}")
    c_psi = average_path_length(model.subsample_size)
    lengths = np.array([tree.path_length(vec) for tree in model.trees])
    score = float(2.0 ** (-(lengths.mean() / c_psi)))
    per_tree = 2.0 ** (-(lengths / c_psi))
    return score, per_tree


def iforest_score(model: IsolationForestModel, x) -> float:
    """s(x) = 2 ** (-E[h(x)] / c(psi)); higher is more anomalous."""
    return iforest_score_detail(model, x)[0]
