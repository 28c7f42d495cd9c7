"""Optimization schedules: synthetic pretraining, per-round fine-tuning, and
the final full-cloud retrain. Adam optimizer, full-cloud batch per step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .geom import PointCloud, build_index, knn_query_batch
from .labels import LabelMap, Provenance, UNLABELED
from .nnet import (ModelParams, LossWeights, PARAM_ORDER, estimate_sigma,
                   forward, init_or_resize_head, load_checkpoint,
                   save_checkpoint, total_loss)

SUPERVISION_PROVENANCE = (Provenance.SEED, Provenance.GROWN, Provenance.CORRECTED)

_PAIR_KNN = 8      # smoothness pairs: each point with its 8 nearest neighbors
_PAIR_RANDOM = 4   # plus 4 uniformly random partners per step


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs_per_round: int = 60
    pretrain_epochs: int = 30
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    alpha: float = 0.001
    beta_schedule: tuple = (1.0, 0.0)
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidParameterError("learning_rate must be > 0")
        if self.epochs_per_round < 1 or self.pretrain_epochs < 1:
            raise InvalidParameterError("epoch counts must be >= 1")
        if any(b < 0 for b in self.beta_schedule):
            raise InvalidParameterError("beta_schedule values must be >= 0")
        object.__setattr__(self, "beta_schedule", tuple(self.beta_schedule))

    def beta_for_round(self, round_: int) -> float:
        sched = self.beta_schedule
        return sched[min(round_, len(sched) - 1)]

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate,
                "epochs_per_round": self.epochs_per_round,
                "pretrain_epochs": self.pretrain_epochs,
                "adam_beta1": self.adam_beta1, "adam_beta2": self.adam_beta2,
                "adam_eps": self.adam_eps, "alpha": self.alpha,
                "beta_schedule": list(self.beta_schedule),
                "rng_seed": self.rng_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


class _Adam:
    def __init__(self, config: TrainConfig, params: dict):
        self.cfg = config
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict):
        cfg = self.cfg
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        lr_t = cfg.learning_rate * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for name in PARAM_ORDER:
            g = grads[name].astype(params[name].dtype, copy=False)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            params[name] -= (lr_t * self.m[name]
                             / (np.sqrt(self.v[name]) + cfg.adam_eps)).astype(params[name].dtype)


def _smoothness_pairs(knn: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Each point paired with its k nearest neighbors plus random partners."""
    n = knn.shape[0]
    i_knn = np.repeat(np.arange(n), knn.shape[1])
    pairs = [np.stack([i_knn, knn.ravel()], axis=1)]
    i_rnd = np.repeat(np.arange(n), _PAIR_RANDOM)
    j_rnd = rng.integers(0, n, size=i_rnd.shape[0])
    pairs.append(np.stack([i_rnd, j_rnd], axis=1))
    return np.concatenate(pairs).astype(np.int64)


def accuracy(logits: np.ndarray, labels: LabelMap) -> float:
    mask = labels.labels != UNLABELED
    if not mask.any():
        return 0.0
    pred = logits.argmax(axis=1)
    return float((pred[mask] == labels.labels[mask]).mean())


def pretrain(dataset: list, config: TrainConfig):
    """Fully supervised training over (cloud, full LabelMap) pairs.

    Returns (ModelParams, final mean training accuracy).
    """
    if not dataset:
        raise InvalidParameterError("pretrain requires a non-empty dataset")
    classes = {lm.num_classes for _, lm in dataset}
    if len(classes) != 1:
        raise InvalidParameterError(f"inconsistent class counts across dataset: {classes}")
    c = classes.pop()
    for _, lm in dataset:
        if not lm.is_full:
            raise InvalidParameterError("pretrain requires fully labeled clouds")
    params = init_or_resize_head(None, c, config.rng_seed)
    opt = _Adam(config, params.params)
    weights = LossWeights(alpha=config.alpha, beta=0.0)
    rng = np.random.Generator(np.random.PCG64(config.rng_seed))
    for _ in range(config.pretrain_epochs):
        for idx in rng.permutation(len(dataset)):
            cloud, lmap = dataset[idx]
            _, grads, _ = total_loss(params, cloud, lmap, weights)
            opt.step(params.params, grads)
    accs = [accuracy(forward(params, cloud)[0], lmap) for cloud, lmap in dataset]
    return params, float(np.mean(accs))


def _supervision_view(labels: LabelMap) -> LabelMap:
    """Labels restricted to Seed/Grown/Corrected provenance; Predicted is
    never used as supervision."""
    mask = np.isin(labels.provenance, SUPERVISION_PROVENANCE)
    lab = np.where(mask, labels.labels, UNLABELED).astype(np.int32)
    prov = np.where(mask, labels.provenance, np.int8(Provenance.NONE))
    return LabelMap(lab, prov, labels.num_classes)


def finetune_round(params: ModelParams, cloud: PointCloud, labels: LabelMap,
                   round_: int, config: TrainConfig, on_epoch=None) -> ModelParams:
    """epochs_per_round Adam steps on one cloud; functional (input untouched)."""
    sup = _supervision_view(labels)
    if not sup.labeled_mask.any():
        raise InvalidParameterError("finetune_round requires at least one supervised point")
    if params.num_classes != labels.num_classes:
        raise InvalidParameterError("model and labels disagree on num_classes")
    out = params.copy()
    opt = _Adam(config, out.params)
    beta = config.beta_for_round(round_)
    weights = LossWeights(alpha=config.alpha, beta=beta)
    sigma = None
    knn = None
    rng = np.random.Generator(np.random.PCG64(config.rng_seed * 1000003 + round_))
    if beta > 0:
        sigma = estimate_sigma(cloud, rng_seed=config.rng_seed)
        knn = knn_query_batch(build_index(cloud), _PAIR_KNN)
    for epoch in range(config.epochs_per_round):
        pairs = _smoothness_pairs(knn, rng) if beta > 0 else None
        loss, grads, _ = total_loss(out, cloud, sup, weights, sigma or 1.0, pairs)
        opt.step(out.params, grads)
        if on_epoch is not None:
            on_epoch(epoch, float(loss))
    return out


def final_retrain(params: ModelParams, cloud: PointCloud, labels: LabelMap,
                  config: TrainConfig, on_epoch=None) -> ModelParams:
    """Full-supervision retrain (2x epochs, beta=0) once every point is labeled."""
    if not labels.is_full:
        raise InvalidParameterError("final_retrain requires a fully labeled cloud")
    out = params.copy()
    opt = _Adam(config, out.params)
    weights = LossWeights(alpha=config.alpha, beta=0.0)
    for epoch in range(config.epochs_per_round * 2):
        loss, grads, _ = total_loss(out, cloud, labels, weights)
        opt.step(out.params, grads)
        if on_epoch is not None:
            on_epoch(epoch, float(loss))
    return out


def checkpoint_roundtrip(params: ModelParams) -> ModelParams:
    """Save to the checkpoint format and load back; result is bitwise equal."""
    return load_checkpoint(save_checkpoint(params))
