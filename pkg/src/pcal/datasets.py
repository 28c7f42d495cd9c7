"""Synthetic labeled parametric shapes (chairs, tables, lamps, plants) used
for pretraining and for the simulated-annotator experiments, plus dataset
file I/O (<name>.ply + <name>.labels + manifest.json)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError
from .geom import PointCloud, load_ply, normalize_cloud, save_ply
from .labels import LabelMap, Provenance, load_labels, save_labels

FAMILIES = ("chair", "table", "lamp", "two_class_plant")


@dataclass(frozen=True)
class ShapeSpec:
    family: str
    part_count: int = 3
    points_n: int = 1024
    noise_sigma: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown family {self.family!r}")
        if self.points_n < 64:
            raise InvalidParameterError("points_n must be >= 64")
        if self.noise_sigma < 0:
            raise InvalidParameterError("noise_sigma must be >= 0")
        valid = {"chair": (2, 3), "table": (2, 3), "lamp": (2, 3),
                 "two_class_plant": (2,)}[self.family]
        if self.part_count not in valid:
            raise InvalidParameterError(
                f"family {self.family!r} supports part_count in {valid}, "
                f"got {self.part_count}")


# ---------------------------------------------------------------------------
# Primitive surface samplers
# ---------------------------------------------------------------------------

def _box_surface(center, size, n, rng):
    cx, cy, cz = center
    sx, sy, sz = size
    areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=n)
    v = rng.uniform(-0.5, 0.5, size=n)
    pts = np.empty((n, 3))
    for f in range(6):
        m = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        p = np.empty((m.sum(), 3))
        p[:, axis] = sign * 0.5
        other = [a for a in range(3) if a != axis]
        p[:, other[0]] = u[m]
        p[:, other[1]] = v[m]
        pts[m] = p
    return pts * np.array(size) + np.array(center)


def _cylinder(center_bottom, radius, height, n, rng):
    theta = rng.uniform(0, 2 * np.pi, size=n)
    z = rng.uniform(0, height, size=n)
    return np.stack([radius * np.cos(theta), radius * np.sin(theta), z],
                    axis=1) + np.array(center_bottom)


def _disk(center, radius, n, rng):
    theta = rng.uniform(0, 2 * np.pi, size=n)
    r = radius * np.sqrt(rng.uniform(0, 1, size=n))
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), np.zeros(n)], axis=1)
    return pts + np.array(center)


def _sphere(center, radius, n, rng):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius + np.array(center)


def _allocate(weights, total):
    """Deterministic proportional allocation with a per-part floor of 8."""
    w = np.asarray(weights, dtype=np.float64)
    counts = np.maximum(8, np.floor(w / w.sum() * total).astype(int))
    while counts.sum() > total:
        counts[counts.argmax()] -= 1
    counts[counts.argmax()] += total - counts.sum()
    return counts


# ---------------------------------------------------------------------------
# Families. Each returns (points, part ids, part metadata) in canonical frame.
# ---------------------------------------------------------------------------

def _sample_chair(n, rng):
    w = rng.uniform(0.8, 1.2)
    d = rng.uniform(0.8, 1.2)
    leg_h = rng.uniform(0.4, 0.6)
    back_h = rng.uniform(0.8, 1.2)
    t = 0.1
    leg_r = 0.05
    seat = dict(kind="box", center=(0, 0, leg_h + t / 2), size=(w, d, t))
    back = dict(kind="box", center=(0, -d / 2 + t / 2, leg_h + t + back_h / 2),
                size=(w, t, back_h))
    legs = [dict(kind="cylinder", bottom=(sx * (w / 2 - 0.1), sy * (d / 2 - 0.1), 0),
                 radius=leg_r, height=leg_h)
            for sx in (-1, 1) for sy in (-1, 1)]
    prims = [(seat, 0), (back, 1)] + [(leg, 2) for leg in legs]
    return prims


def _sample_table(n, rng):
    w = rng.uniform(1.0, 1.6)
    d = rng.uniform(0.8, 1.2)
    leg_h = rng.uniform(0.6, 0.8)
    t = 0.08
    top = dict(kind="box", center=(0, 0, leg_h + t / 2), size=(w, d, t))
    legs = [dict(kind="cylinder", bottom=(sx * (w / 2 - 0.1), sy * (d / 2 - 0.1), 0),
                 radius=0.05, height=leg_h)
            for sx in (-1, 1) for sy in (-1, 1)]
    bars = [dict(kind="box", center=(0, sy * (d / 2 - 0.1), leg_h / 2),
                 size=(w - 0.2, 0.05, 0.05)) for sy in (-1, 1)]
    return [(top, 0)] + [(leg, 1) for leg in legs] + [(bar, 2) for bar in bars]


def _sample_lamp(n, rng):
    base_r = rng.uniform(0.3, 0.45)
    pole_h = rng.uniform(0.8, 1.2)
    shade_r = rng.uniform(0.25, 0.35)
    base = dict(kind="disk", center=(0, 0, 0.02), radius=base_r)
    pole = dict(kind="cylinder", bottom=(0, 0, 0.02), radius=0.03, height=pole_h)
    shade = dict(kind="cylinder", bottom=(0, 0, pole_h - 0.1), radius=shade_r,
                 height=0.3)
    return [(base, 0), (pole, 1), (shade, 2)]


def _sample_plant(n, rng):
    pot_r = rng.uniform(0.25, 0.35)
    pot_h = rng.uniform(0.3, 0.4)
    fol_r = rng.uniform(0.35, 0.5)
    pot = dict(kind="cylinder", bottom=(0, 0, 0), radius=pot_r, height=pot_h)
    foliage = dict(kind="sphere", center=(0, 0, pot_h + fol_r * 0.8), radius=fol_r)
    return [(pot, 0), (foliage, 1)]


_SAMPLERS = {"chair": _sample_chair, "table": _sample_table,
             "lamp": _sample_lamp, "two_class_plant": _sample_plant}

# Which part ids merge when annotating at coarser granularity (3 -> 2 classes).
_MERGE_2CLASS = {"chair": {0: 0, 1: 0, 2: 1},       # seat+back vs legs
                 "table": {0: 0, 1: 1, 2: 1},       # top vs legs+bars
                 "lamp": {0: 0, 1: 0, 2: 1},        # base+pole vs shade
                 "two_class_plant": {0: 0, 1: 1}}


def _prim_area(prim):
    if prim["kind"] == "box":
        sx, sy, sz = prim["size"]
        return 2 * (sx * sy + sy * sz + sx * sz)
    if prim["kind"] == "cylinder":
        return 2 * np.pi * prim["radius"] * prim["height"]
    if prim["kind"] == "disk":
        return np.pi * prim["radius"] ** 2
    return 4 * np.pi * prim["radius"] ** 2


def _prim_sample(prim, n, rng):
    if prim["kind"] == "box":
        return _box_surface(prim["center"], prim["size"], n, rng)
    if prim["kind"] == "cylinder":
        return _cylinder(prim["bottom"], prim["radius"], prim["height"], n, rng)
    if prim["kind"] == "disk":
        return _disk(prim["center"], prim["radius"], n, rng)
    return _sphere(prim["center"], prim["radius"], n, rng)


def sample_canonical(spec: ShapeSpec, rng: np.random.Generator):
    """Noise-free points, part labels, and primitive metadata in the shape's
    canonical (unrotated, unnormalized) frame."""
    prims = _SAMPLERS[spec.family](spec.points_n, rng)
    areas = [_prim_area(p) for p, _ in prims]
    counts = _allocate(areas, spec.points_n)
    pts, parts, meta = [], [], []
    for (prim, part), cnt in zip(prims, counts):
        pts.append(_prim_sample(prim, cnt, rng))
        parts.append(np.full(cnt, part, dtype=np.int32))
        meta.append((prim, part, cnt))
    points = np.concatenate(pts)
    part_ids = np.concatenate(parts)
    if spec.part_count == 2:
        merge = _MERGE_2CLASS[spec.family]
        labels = np.array([merge[p] for p in part_ids], dtype=np.int32)
    else:
        labels = part_ids.copy()
    return points, labels, meta


def generate_shape(spec: ShapeSpec):
    """One labeled shape: jittered, rotated about the vertical axis, normalized."""
    rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
    points, labels, _ = sample_canonical(spec, rng)
    if spec.noise_sigma > 0:
        points = points + rng.normal(0, spec.noise_sigma, size=points.shape)
    theta = rng.uniform(0, 2 * np.pi)
    ct, st = np.cos(theta), np.sin(theta)
    rot = np.array([[ct, -st, 0], [st, ct, 0], [0, 0, 1]])
    points = points @ rot.T
    cloud = normalize_cloud(PointCloud(positions=points,
                                       id=f"{spec.family}-{spec.rng_seed}"))
    num_classes = int(labels.max()) + 1
    lmap = LabelMap(labels, np.full(len(labels), Provenance.SEED, dtype=np.int8),
                    num_classes)
    return cloud, lmap


def generate_dataset(family: str, count: int, part_count: int, rng_seed: int,
                     points_n: int = 1024, noise_sigma: float = 0.01):
    """count shapes with per-shape derived seeds (rng_seed + index)."""
    if count < 1:
        raise InvalidParameterError("count must be >= 1")
    return [generate_shape(ShapeSpec(family=family, part_count=part_count,
                                     points_n=points_n, noise_sigma=noise_sigma,
                                     rng_seed=rng_seed + i))
            for i in range(count)]


def save_dataset(out_dir, items, prefix: str = "shape"):
    """Write <prefix>_<i>.ply / .labels pairs plus manifest.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"classes": items[0][1].num_classes, "items": []}
    for i, (cloud, lmap) in enumerate(items):
        name = f"{prefix}_{i:04d}"
        (out_dir / f"{name}.ply").write_bytes(save_ply(cloud))
        (out_dir / f"{name}.labels").write_text(save_labels(lmap))
        manifest["items"].append({"ply": f"{name}.ply", "labels": f"{name}.labels"})
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out_dir / "manifest.json"


def load_dataset(manifest_path):
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    items = []
    for entry in manifest["items"]:
        cloud = load_ply((manifest_path.parent / entry["ply"]).read_bytes())
        lmap = load_labels((manifest_path.parent / entry["labels"]).read_text())
        items.append((cloud, lmap))
    return items
