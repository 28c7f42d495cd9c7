"""Point-cloud container, PLY I/O, kd-tree neighbor queries, normal estimation."""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from . import accel
from .errors import InvalidParameterError, PlyParseError


@dataclass(frozen=True)
class PointCloud:
    """N points in 3-D with optional per-point colors (in [0,1]) and unit normals.

    Arrays are treated as immutable after construction; queries never mutate.
    """

    positions: np.ndarray
    colors: np.ndarray | None = None
    normals: np.ndarray | None = None
    id: str = ""

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise InvalidParameterError(f"positions must be N x 3 with N >= 1, got {pos.shape}")
        if not np.isfinite(pos).all():
            raise InvalidParameterError("positions contain non-finite values")
        object.__setattr__(self, "positions", pos)
        for name in ("colors", "normals"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=np.float64)
                if arr.shape != pos.shape:
                    raise InvalidParameterError(f"{name} shape {arr.shape} != positions shape {pos.shape}")
                object.__setattr__(self, name, arr)
        if self.normals is not None:
            norms = np.linalg.norm(self.normals, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-4):
                raise InvalidParameterError("normals must be unit length within 1e-4")
        for name in ("positions", "colors", "normals"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self):
        return self.positions.shape[0]


def normalize_cloud(cloud: PointCloud) -> PointCloud:
    """Center at the origin and scale so the farthest point has norm 1.

    Idempotent; a no-op scale is used when all points coincide.
    """
    pos = cloud.positions - cloud.positions.mean(axis=0)
    scale = np.linalg.norm(pos, axis=1).max()
    if scale > 1e-12:
        pos = pos / scale
    return replace(cloud, positions=pos)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

def load_ply(data: bytes) -> PointCloud:
    """Parse an ASCII PLY with x,y,z floats and optional red,green,blue uchar."""
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as e:
        raise PlyParseError(f"not ASCII: {e}")
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyParseError("missing 'ply' magic", line=1)

    n_vertices = None
    props = []
    in_vertex_element = False
    body_start = None
    for ln, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1:3] != ["ascii", "1.0"]:
                raise PlyParseError(f"unsupported format {raw.strip()!r}", line=ln)
        elif tok[0] == "element":
            if tok[1] == "vertex":
                try:
                    n_vertices = int(tok[2])
                except (IndexError, ValueError):
                    raise PlyParseError("bad vertex element declaration", line=ln)
                in_vertex_element = True
            else:
                in_vertex_element = False
        elif tok[0] == "property" and in_vertex_element:
            if len(tok) != 3:
                raise PlyParseError("bad property declaration", line=ln)
            props.append(tok[2])
        elif tok[0] == "end_header":
            body_start = ln
            break
        elif tok[0] == "comment":
            continue
    if body_start is None:
        raise PlyParseError("missing end_header")
    if n_vertices is None:
        raise PlyParseError("no vertex element declared")
    for need in ("x", "y", "z"):
        if need not in props:
            raise PlyParseError(f"missing property {need}")

    body = [(ln, raw) for ln, raw in enumerate(lines[body_start:], start=body_start + 1)
            if raw.strip()]
    if len(body) < n_vertices:
        raise PlyParseError(f"declared {n_vertices} vertices but found {len(body)}",
                            line=body[-1][0] if body else body_start)

    pos = np.empty((n_vertices, 3), dtype=np.float64)
    has_color = all(c in props for c in ("red", "green", "blue"))
    col = np.empty((n_vertices, 3), dtype=np.float64) if has_color else None
    ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
    if has_color:
        ir, ig, ib = props.index("red"), props.index("green"), props.index("blue")
    for vi in range(n_vertices):
        ln, raw = body[vi]
        tok = raw.split()
        if len(tok) < len(props):
            raise PlyParseError(f"expected {len(props)} values, got {len(tok)}", line=ln)
        try:
            pos[vi] = float(tok[ix]), float(tok[iy]), float(tok[iz])
            if has_color:
                col[vi] = int(tok[ir]) / 255.0, int(tok[ig]) / 255.0, int(tok[ib]) / 255.0
        except ValueError:
            raise PlyParseError(f"non-numeric vertex value in {raw.strip()!r}", line=ln)
        if not np.isfinite(pos[vi]).all():
            raise PlyParseError("non-finite coordinate", line=ln)
    return PointCloud(positions=pos, colors=col)


def save_ply(cloud: PointCloud) -> bytes:
    """Write the ASCII PLY format produced by this package (6 significant digits)."""
    n = len(cloud)
    out = io.StringIO()
    out.write("ply\nformat ascii 1.0\n")
    out.write(f"element vertex {n}\n")
    out.write("property float x\nproperty float y\nproperty float z\n")
    if cloud.colors is not None:
        out.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
    out.write("end_header\n")
    for i in range(n):
        x, y, z = cloud.positions[i]
        row = f"{x:.6g} {y:.6g} {z:.6g}"
        if cloud.colors is not None:
            r, g, b = np.clip(np.round(cloud.colors[i] * 255), 0, 255).astype(int)
            row += f" {r} {g} {b}"
        out.write(row + "\n")
    return out.getvalue().encode("ascii")


# ---------------------------------------------------------------------------
# Spatial index
# ---------------------------------------------------------------------------

_LEAF_SIZE = 16


@dataclass
class SpatialIndex:
    """3-D kd-tree (median split, leaf size 16) over one cloud's positions.

    Queries are exact: identical to a brute-force scan, distance ties broken
    by ascending point index.
    """

    points: np.ndarray
    perm: np.ndarray = field(repr=False, default=None)
    split_dim: np.ndarray = field(repr=False, default=None)
    split_val: np.ndarray = field(repr=False, default=None)
    left: np.ndarray = field(repr=False, default=None)
    right: np.ndarray = field(repr=False, default=None)
    start: np.ndarray = field(repr=False, default=None)
    end: np.ndarray = field(repr=False, default=None)


def build_index(cloud: PointCloud) -> SpatialIndex:
    pts = np.ascontiguousarray(cloud.positions, dtype=np.float64)
    n = pts.shape[0]
    perm = np.arange(n, dtype=np.int64)
    split_dim, split_val, left, right, start, end = [], [], [], [], [], []

    def build(lo, hi, depth):
        node = len(split_dim)
        split_dim.append(-1)
        split_val.append(0.0)
        left.append(-1)
        right.append(-1)
        start.append(lo)
        end.append(hi)
        if hi - lo <= _LEAF_SIZE:
            return node
        axis = depth % 3
        seg = perm[lo:hi]
        order = np.argsort(pts[seg, axis], kind="stable")
        perm[lo:hi] = seg[order]
        mid = (lo + hi) // 2
        split_dim[node] = axis
        split_val[node] = pts[perm[mid], axis]
        left[node] = build(lo, mid, depth + 1)
        right[node] = build(mid, hi, depth + 1)
        return node

    build(0, n, 0)
    return SpatialIndex(
        points=pts,
        perm=perm,
        split_dim=np.asarray(split_dim, dtype=np.int64),
        split_val=np.asarray(split_val, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        start=np.asarray(start, dtype=np.int64),
        end=np.asarray(end, dtype=np.int64),
    )


def _resolve_query(index: SpatialIndex, query):
    """Return (query point, excluded id). Integer queries exclude themselves."""
    if isinstance(query, (int, np.integer)):
        qid = int(query)
        if not 0 <= qid < index.points.shape[0]:
            raise InvalidParameterError(f"point id {qid} out of range")
        return index.points[qid], qid
    q = np.asarray(query, dtype=np.float64).reshape(3)
    return q, -1


def knn_query(index: SpatialIndex, query, k: int) -> np.ndarray:
    """ids of the k nearest points, ascending by (distance, id)."""
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    q, excl = _resolve_query(index, query)
    if accel.HAVE_NUMBA:
        out_ids = np.empty((1, k), dtype=np.int64)
        out_counts = np.empty(1, dtype=np.int64)
        accel._knn_kernel(index.points, index.perm, index.split_dim, index.split_val,
                          index.left, index.right, index.start, index.end,
                          q.reshape(1, 3), np.array([excl], dtype=np.int64), k,
                          out_ids, out_counts)
        return out_ids[0, :out_counts[0]].copy()
    return accel.knn_numpy(index.points, q, k, excl)


def knn_query_batch(index: SpatialIndex, k: int) -> np.ndarray:
    """k nearest neighbors of every indexed point (self excluded); (N, k') ids."""
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    n = index.points.shape[0]
    k = min(k, n - 1)
    if accel.HAVE_NUMBA:
        out_ids = np.empty((n, k), dtype=np.int64)
        out_counts = np.empty(n, dtype=np.int64)
        accel._knn_kernel(index.points, index.perm, index.split_dim, index.split_val,
                          index.left, index.right, index.start, index.end,
                          index.points, np.arange(n, dtype=np.int64), k,
                          out_ids, out_counts)
        return out_ids
    rows = [accel.knn_numpy(index.points, index.points[i], k, i) for i in range(n)]
    return np.stack(rows)


def fdn_query(index: SpatialIndex, query, radius: float) -> np.ndarray:
    """ids of all points within radius, ascending by (distance, id)."""
    if radius <= 0:
        raise InvalidParameterError("radius must be > 0")
    q, excl = _resolve_query(index, query)
    if accel.HAVE_NUMBA:
        n = index.points.shape[0]
        tmp_ids = np.empty(n, dtype=np.int64)
        tmp_d2 = np.empty(n, dtype=np.float64)
        return accel._fdn_kernel(index.points, index.perm, index.split_dim,
                                 index.split_val, index.left, index.right,
                                 index.start, index.end, q, excl, radius,
                                 tmp_ids, tmp_d2).copy()
    return accel.fdn_numpy(index.points, q, radius, excl)


def neighbor_query(index: SpatialIndex, query, mode: str, k: int = None,
                   radius: float = None) -> np.ndarray:
    """Unified KNN/FDN entry point. mode is 'knn' or 'fdn'."""
    if mode == "knn":
        if k is None or k < 1:
            raise InvalidParameterError("knn mode requires k >= 1")
        return knn_query(index, query, k)
    if mode == "fdn":
        if radius is None or radius <= 0:
            raise InvalidParameterError("fdn mode requires radius > 0")
        return fdn_query(index, query, radius)
    raise InvalidParameterError(f"unknown query mode {mode!r}")


# ---------------------------------------------------------------------------
# Normal estimation
# ---------------------------------------------------------------------------

def estimate_normals(cloud: PointCloud, k: int) -> PointCloud:
    """Per-point normals from PCA over the k nearest neighbors plus self.

    The normal is the smallest-eigenvalue eigenvector of the neighborhood
    covariance. Sign is unconstrained; consumers must fold angles to <= 90 deg.
    """
    n = len(cloud)
    if k < 3:
        raise InvalidParameterError("k must be >= 3 for normal estimation")
    if n <= k:
        raise InvalidParameterError(f"need more than k={k} points, got {n}")
    index = build_index(cloud)
    nbrs = knn_query_batch(index, k)  # (N, k)
    groups = np.concatenate([np.arange(n)[:, None], nbrs], axis=1)  # include self
    pts = cloud.positions[groups]  # (N, k+1, 3)
    centered = pts - pts.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)
    _, vecs = np.linalg.eigh(cov)  # ascending eigenvalues
    normals = vecs[:, :, 0]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return replace(cloud, normals=normals)
