"""Point-wise segmentation network (simplified PointNet) and its loss terms.

Architecture: a tiny T-Net produces a 3x3 input transform, a shared per-point
MLP (3->64->64->128) feeds a global max-pooled 128-d feature, and a head maps
the concatenated [per-point 64-d, global 128-d] to C logits. All gradients are
hand-written reverse mode; training runs in float32, float64 is available for
finite-difference checks.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import CheckpointFormatError, InvalidParameterError
from .geom import PointCloud
from .labels import LabelMap, UNLABELED

CHECKPOINT_MAGIC = b"PCALNET1"

# (name, shape); C stands for num_classes. Order is the checkpoint layout.
_LAYER_SPECS = [
    ("tnet.W1", (3, 32)), ("tnet.b1", (32,)),
    ("tnet.W2", (32, 9)), ("tnet.b2", (9,)),
    ("bb.W1", (3, 64)), ("bb.b1", (64,)),
    ("bb.W2", (64, 64)), ("bb.b2", (64,)),
    ("bb.W3", (64, 128)), ("bb.b3", (128,)),
    ("head.W1", (192, 128)), ("head.b1", (128,)),
    ("head.W2", (128, "C")), ("head.b2", ("C",)),
]
HEAD_NAMES = ("head.W1", "head.b1", "head.W2", "head.b2")
PARAM_ORDER = [name for name, _ in _LAYER_SPECS]


@dataclass
class ModelParams:
    """All network tensors, keyed by layer name; float32 snapshots."""

    params: dict
    num_classes: int
    rng_seed: int

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.params.items()},
                           self.num_classes, self.rng_seed)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: v.astype(dtype) for k, v in self.params.items()},
                           self.num_classes, self.rng_seed)


@dataclass
class LossWeights:
    """alpha scales the transform regularizer, beta the smoothness term."""

    alpha: float = 0.001
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidParameterError("loss weights must be >= 0")


def _shapes(num_classes: int):
    return [(name, tuple(num_classes if d == "C" else d for d in shape))
            for name, shape in _LAYER_SPECS]


def _glorot(rng, shape, dtype=np.float32):
    if len(shape) == 2:
        a = np.sqrt(6.0 / (shape[0] + shape[1]))
        return rng.uniform(-a, a, size=shape).astype(dtype)
    return np.zeros(shape, dtype=dtype)


def init_or_resize_head(params: ModelParams | None, num_classes: int,
                        rng_seed: int) -> ModelParams:
    """Fresh network, or bit-exact copy of tnet+backbone. The head is copied
    too when the class count matches and reinitialized when it differs."""
    if num_classes < 2:
        raise InvalidParameterError("num_classes must be >= 2")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    new = {}
    for name, shape in _shapes(num_classes):
        if params is not None and (name not in HEAD_NAMES
                                   or params.num_classes == num_classes):
            new[name] = params.params[name].copy()
        else:
            new[name] = _glorot(rng, shape)
    return ModelParams(new, num_classes, rng_seed)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def forward(params: ModelParams, cloud_or_positions, return_cache: bool = False):
    """Run the network; returns (logits, A) or (logits, A, cache)."""
    p = params.params
    dtype = p["bb.W1"].dtype
    if isinstance(cloud_or_positions, PointCloud):
        x = cloud_or_positions.positions
    else:
        x = cloud_or_positions
    x = np.ascontiguousarray(x, dtype=dtype)
    if not np.isfinite(x).all():
        raise InvalidParameterError("non-finite network input")
    eye = np.eye(3, dtype=dtype)

    t1p = x @ p["tnet.W1"] + p["tnet.b1"]
    t1 = np.maximum(t1p, 0)
    targ = t1.argmax(axis=0)
    tg = t1[targ, np.arange(t1.shape[1])]
    a = tg @ p["tnet.W2"] + p["tnet.b2"]
    A = a.reshape(3, 3) + eye

    xt = x @ A
    h1p = xt @ p["bb.W1"] + p["bb.b1"]
    h1 = np.maximum(h1p, 0)
    h2p = h1 @ p["bb.W2"] + p["bb.b2"]
    h2 = np.maximum(h2p, 0)
    h3p = h2 @ p["bb.W3"] + p["bb.b3"]
    h3 = np.maximum(h3p, 0)
    garg = h3.argmax(axis=0)
    g = h3[garg, np.arange(h3.shape[1])]
    f = np.concatenate([h2, np.broadcast_to(g, (x.shape[0], g.shape[0]))], axis=1)
    u1p = f @ p["head.W1"] + p["head.b1"]
    u = np.maximum(u1p, 0)
    logits = u @ p["head.W2"] + p["head.b2"]

    if not return_cache:
        return logits, A
    cache = dict(x=x, t1p=t1p, targ=targ, tg=tg, A=A, xt=xt, h1p=h1p, h1=h1,
                 h2p=h2p, h2=h2, h3p=h3p, h3=h3, garg=garg, f=f, u1p=u1p, u=u,
                 params=p, dtype=dtype)
    return logits, A, cache


def backward(cache: dict, dlogits: np.ndarray, dA_extra: np.ndarray | None = None) -> dict:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/dlogits and
    an optional direct dL/dA contribution (from the transform regularizer)."""
    p = cache["params"]
    x, xt, f, u = cache["x"], cache["xt"], cache["f"], cache["u"]
    n = x.shape[0]
    grads = {}

    grads["head.W2"] = u.T @ dlogits
    grads["head.b2"] = dlogits.sum(axis=0)
    du = (dlogits @ p["head.W2"].T) * (cache["u1p"] > 0)
    grads["head.W1"] = f.T @ du
    grads["head.b1"] = du.sum(axis=0)
    df = du @ p["head.W1"].T

    dh2_direct = df[:, :64]
    dg = df[:, 64:].sum(axis=0)
    dh3 = np.zeros_like(cache["h3"])
    dh3[cache["garg"], np.arange(dh3.shape[1])] = dg
    dh3 *= cache["h3p"] > 0
    grads["bb.W3"] = cache["h2"].T @ dh3
    grads["bb.b3"] = dh3.sum(axis=0)
    dh2 = (dh2_direct + dh3 @ p["bb.W3"].T) * (cache["h2p"] > 0)
    grads["bb.W2"] = cache["h1"].T @ dh2
    grads["bb.b2"] = dh2.sum(axis=0)
    dh1 = (dh2 @ p["bb.W2"].T) * (cache["h1p"] > 0)
    grads["bb.W1"] = xt.T @ dh1
    grads["bb.b1"] = dh1.sum(axis=0)
    dxt = dh1 @ p["bb.W1"].T

    dA = x.T @ dxt
    if dA_extra is not None:
        dA = dA + dA_extra
    da = dA.reshape(9)
    grads["tnet.W2"] = np.outer(cache["tg"], da)
    grads["tnet.b2"] = da
    dtg = p["tnet.W2"] @ da
    dt1 = np.zeros((n, 32), dtype=cache["dtype"])
    dt1[cache["targ"], np.arange(32)] = dtg
    dt1 *= cache["t1p"] > 0
    grads["tnet.W1"] = x.T @ dt1
    grads["tnet.b1"] = dt1.sum(axis=0)
    return grads


# ---------------------------------------------------------------------------
# Loss terms
# ---------------------------------------------------------------------------

def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def segment_loss(logits: np.ndarray, labels: LabelMap, with_grad: bool = False):
    """Mean cross entropy over labeled points; UNLABELED points are excluded."""
    mask = labels.labels != UNLABELED
    rows = np.nonzero(mask)[0]
    if rows.size == 0:
        raise InvalidParameterError("segment_loss requires at least one labeled point")
    cls = labels.labels[rows]
    logp = log_softmax(logits)
    loss = float(-logp[rows, cls].mean())
    if not with_grad:
        return loss
    dlogits = np.zeros_like(logits)
    probs = np.exp(logp[rows])
    probs[np.arange(rows.size), cls] -= 1.0
    dlogits[rows] = probs / rows.size
    return loss, dlogits


def transform_reg(A: np.ndarray, with_grad: bool = False):
    """|| I - A A^T ||_F^2, the orthogonality regularizer on the input transform."""
    eye = np.eye(3, dtype=A.dtype)
    m = eye - A @ A.T
    loss = float((m * m).sum())
    if not with_grad:
        return loss
    return loss, -4.0 * (m @ A)


SIGMA_MIN = 1e-4


def estimate_sigma(cloud: PointCloud, sample_pairs: int = 20000,
                   rng_seed: int = 0) -> float:
    """Variance of pairwise point distances (density scale of the smoothness
    loss), exact when N(N-1)/2 <= sample_pairs, else pair-sampled. Clamped
    below by SIGMA_MIN."""
    n = len(cloud)
    if n < 2:
        raise InvalidParameterError("estimate_sigma requires N >= 2")
    if sample_pairs < 1:
        raise InvalidParameterError("sample_pairs must be >= 1")
    total = n * (n - 1) // 2
    if total <= sample_pairs:
        var = accel.pairwise_distance_variance(cloud.positions)
    else:
        rng = np.random.Generator(np.random.PCG64(rng_seed))
        i = rng.integers(0, n, size=sample_pairs)
        j = (i + 1 + rng.integers(0, n - 1, size=sample_pairs)) % n
        d = np.linalg.norm(cloud.positions[i] - cloud.positions[j], axis=1)
        var = float(np.var(d))
    return max(var, SIGMA_MIN)


def smoothness_loss(logits: np.ndarray, positions: np.ndarray, sigma: float,
                    pairs: np.ndarray, with_grad: bool = False):
    """Mean over pairs of KL(p_i || p_j) * exp(-||pos_i - pos_j|| / sigma).

    Distances use the raw (untransformed) cloud positions. Self pairs are
    allowed and contribute exactly zero.
    """
    if sigma <= 0:
        raise InvalidParameterError("sigma must be > 0")
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.size == 0:
        raise InvalidParameterError("smoothness_loss requires at least one pair")
    i, j = pairs[:, 0], pairs[:, 1]
    logp = log_softmax(logits)
    p = np.exp(logp)
    kl = (p[i] * (logp[i] - logp[j])).sum(axis=1)
    d = np.linalg.norm(positions[i] - positions[j], axis=1)
    w = np.exp(-d / sigma).astype(logits.dtype)
    loss = float((kl * w).mean())
    if not with_grad:
        return loss
    scale = (w / pairs.shape[0]).astype(logits.dtype)
    # dKL/dz_i = p_i * ((logp_i - logp_j) - KL); dKL/dz_j = p_j - p_i
    di = p[i] * ((logp[i] - logp[j]) - kl[:, None]) * scale[:, None]
    dj = (p[j] - p[i]) * scale[:, None]
    dlogits = np.zeros_like(logits)
    np.add.at(dlogits, i, di)
    np.add.at(dlogits, j, dj)
    return loss, dlogits


def smoothness_loss_exact(logits: np.ndarray, positions: np.ndarray,
                          sigma: float) -> float:
    """Exact mean over all ordered pairs j >= i (O(N^2) oracle)."""
    if sigma <= 0:
        raise InvalidParameterError("sigma must be > 0")
    logp = log_softmax(np.asarray(logits, dtype=np.float64))
    return accel.smoothness_exact_mean(np.exp(logp), logp, positions, sigma)


def total_loss(params: ModelParams, cloud_or_positions, labels: LabelMap,
               weights: LossWeights, sigma: float = 1.0,
               pairs: np.ndarray | None = None):
    """L = L_segment + alpha * L_transform + beta * L_smooth, with gradients
    for every parameter. Returns (loss, grads, logits)."""
    logits, A, cache = forward(params, cloud_or_positions, return_cache=True)
    positions = (cloud_or_positions.positions
                 if isinstance(cloud_or_positions, PointCloud) else cloud_or_positions)

    loss, dlogits = segment_loss(logits, labels, with_grad=True)
    dA_extra = None
    if weights.alpha > 0:
        reg, dA = transform_reg(A, with_grad=True)
        loss += weights.alpha * reg
        dA_extra = (weights.alpha * dA).astype(A.dtype)
    if weights.beta > 0 and pairs is not None and len(pairs) > 0:
        sm, dsm = smoothness_loss(logits, positions.astype(logits.dtype), sigma,
                                  pairs, with_grad=True)
        loss += weights.beta * sm
        dlogits = dlogits + np.asarray(weights.beta, dtype=logits.dtype) * dsm
    grads = backward(cache, dlogits, dA_extra)
    return loss, grads, logits


# ---------------------------------------------------------------------------
# Checkpoint format: 8-byte magic, u32 length-prefixed JSON header, raw f32 LE
# ---------------------------------------------------------------------------

def save_checkpoint(mp: ModelParams) -> bytes:
    header = {
        "layers": [{"name": n, "shape": list(mp.params[n].shape)} for n in PARAM_ORDER],
        "num_classes": mp.num_classes,
        "rng_seed": mp.rng_seed,
    }
    hj = json.dumps(header, separators=(",", ":")).encode("utf-8")
    blobs = [mp.params[n].astype("<f4", copy=False).tobytes() for n in PARAM_ORDER]
    return CHECKPOINT_MAGIC + struct.pack("<I", len(hj)) + hj + b"".join(blobs)


def load_checkpoint(data: bytes) -> ModelParams:
    if len(data) < 12 or data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad magic")
    (hlen,) = struct.unpack_from("<I", data, 8)
    if len(data) < 12 + hlen:
        raise CheckpointFormatError("truncated header")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"bad header: {e}")
    num_classes = header.get("num_classes")
    layers = header.get("layers", [])
    if [l["name"] for l in layers] != PARAM_ORDER:
        raise CheckpointFormatError("unexpected layer list")
    expected = dict(_shapes(num_classes))
    params = {}
    off = 12 + hlen
    for layer in layers:
        name, shape = layer["name"], tuple(layer["shape"])
        if shape != expected[name]:
            raise CheckpointFormatError(
                f"layer {name}: shape {shape} inconsistent with num_classes={num_classes}")
        nbytes = int(np.prod(shape)) * 4
        if off + nbytes > len(data):
            raise CheckpointFormatError(f"truncated payload at layer {name}")
        params[name] = np.frombuffer(data[off:off + nbytes], dtype="<f4").reshape(shape).copy()
        off += nbytes
    if off != len(data):
        raise CheckpointFormatError("trailing bytes after payload")
    return ModelParams(params, num_classes, header.get("rng_seed", 0))
