"""Seeded region growing: BFS label propagation gated by geometric cues."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .geom import PointCloud, SpatialIndex, knn_query, fdn_query
from .labels import LabelMap, Provenance, UNLABELED

MODES = ("normal_angle", "color_distance", "knn_ball", "fdn_ball")


@dataclass(frozen=True)
class GrowConfig:
    mode: str = "normal_angle"
    connectivity: str = "knn"        # 'knn' or 'fdn'
    knn_k: int = 8
    fdn_radius: float = 0.1
    angle_threshold: float = 8.0     # degrees, normal_angle mode
    color_threshold: float = 0.1     # RGB Euclidean distance, color_distance mode
    max_region_fraction: float = 0.05

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidParameterError(f"unknown grow mode {self.mode!r}")
        if self.connectivity not in ("knn", "fdn"):
            raise InvalidParameterError(f"unknown connectivity {self.connectivity!r}")
        if self.connectivity == "knn" and self.knn_k < 1:
            raise InvalidParameterError("knn_k must be >= 1")
        if self.connectivity == "fdn" and self.fdn_radius <= 0:
            raise InvalidParameterError("fdn_radius must be > 0")
        if self.angle_threshold <= 0 or self.color_threshold <= 0:
            raise InvalidParameterError("thresholds must be > 0")
        if not 0 < self.max_region_fraction <= 1:
            raise InvalidParameterError("max_region_fraction must be in (0, 1]")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "connectivity": self.connectivity,
                "knn_k": self.knn_k, "fdn_radius": self.fdn_radius,
                "angle_threshold": self.angle_threshold,
                "color_threshold": self.color_threshold,
                "max_region_fraction": self.max_region_fraction}

    @classmethod
    def from_dict(cls, d: dict) -> "GrowConfig":
        return cls(**d)


def _check_attributes(cloud: PointCloud, config: GrowConfig):
    if config.mode == "normal_angle" and cloud.normals is None:
        raise InvalidParameterError("normal_angle growing requires cloud normals")
    if config.mode == "color_distance" and cloud.colors is None:
        raise InvalidParameterError("color_distance growing requires cloud colors")


def _neighbors(index: SpatialIndex, pid: int, config: GrowConfig) -> np.ndarray:
    if config.connectivity == "knn":
        return knn_query(index, pid, config.knn_k)
    return fdn_query(index, pid, config.fdn_radius)


def _criterion(cloud: PointCloud, config: GrowConfig, i: int, j: int) -> bool:
    """Does frontier point j look like its graph-parent i?"""
    if config.mode == "normal_angle":
        cos = abs(float(np.dot(cloud.normals[i], cloud.normals[j])))
        return cos >= math.cos(math.radians(config.angle_threshold)) - 1e-12
    if config.mode == "color_distance":
        return float(np.linalg.norm(cloud.colors[i] - cloud.colors[j])) <= config.color_threshold
    return True  # knn_ball / fdn_ball: pure proximity


def grow_regions(cloud: PointCloud, seeds: LabelMap, config: GrowConfig,
                 index: SpatialIndex) -> LabelMap:
    """Flood seed labels over the neighbor graph; fills UNLABELED points only.

    Global BFS queue seeded in ascending point id; contested points keep the
    first label assigned. Growth per seed stops at max_region_fraction * N.
    """
    _check_attributes(cloud, config)
    n = len(cloud)
    seed_ids = np.nonzero(seeds.provenance == Provenance.SEED)[0]
    if seed_ids.size == 0:
        raise InvalidParameterError("grow_regions requires at least one Seed entry")

    out = seeds.copy()
    cap = math.ceil(config.max_region_fraction * n)
    region_of = np.full(n, -1, dtype=np.int64)
    grown_count = {int(s): 0 for s in seed_ids}
    queue = deque()
    for s in seed_ids:
        region_of[s] = s
        queue.append(int(s))
    while queue:
        i = queue.popleft()
        root = int(region_of[i])
        for j in _neighbors(index, i, config):
            j = int(j)
            if out.labels[j] != UNLABELED:
                continue
            if grown_count[root] >= cap:
                break
            if _criterion(cloud, config, i, j):
                out.labels[j] = out.labels[i]
                out.provenance[j] = Provenance.GROWN
                region_of[j] = root
                grown_count[root] += 1
                queue.append(j)
    return out


def grow_from_point(cloud: PointCloud, labels: LabelMap, start_id: int, class_id: int,
                    config: GrowConfig, index: SpatialIndex) -> int:
    """Local expansion around one corrected point, used by correction clicks.

    Overwrites only lower-authority labels (UNLABELED, Predicted); existing
    Grown/Seed/Corrected points are left alone. Returns the number of points
    relabeled (excluding start_id itself).
    """
    _check_attributes(cloud, config)
    n = len(cloud)
    cap = math.ceil(config.max_region_fraction * n)
    count = 0
    queue = deque([start_id])
    visited = {start_id}
    while queue and count < cap:
        i = queue.popleft()
        for j in _neighbors(index, i, config):
            j = int(j)
            if j in visited or count >= cap:
                continue
            if labels.provenance[j] >= Provenance.GROWN:
                continue
            if _criterion(cloud, config, i, j):
                labels.labels[j] = class_id
                labels.provenance[j] = Provenance.GROWN
                visited.add(j)
                count += 1
                queue.append(j)
    return count
