"""Simulated annotator: seed/correction selection policies driven by ground
truth, the nearest-neighbor painting baseline, and evaluation metrics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InvalidParameterError
from .geom import PointCloud, build_index, knn_query_batch
from .labels import LabelMap, UNLABELED
from .nnet import ModelParams
from .region_grow import GrowConfig
from .session import (Correction, Phase, create_session, finalize,
                      submit_corrections, submit_seeds, train_and_predict)
from .trainer import TrainConfig

MAX_ROUNDS = 50


@dataclass(frozen=True)
class OraclePolicy:
    seeds_per_class: int = 1
    corrections_per_round: int = 10
    completion_threshold: float = 1.0
    grow_corrections: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.seeds_per_class < 1 or self.corrections_per_round < 1:
            raise InvalidParameterError("seed and correction budgets must be >= 1")
        if not 0 < self.completion_threshold <= 1:
            raise InvalidParameterError("completion_threshold must be in (0, 1]")

    def to_dict(self) -> dict:
        return {"seeds_per_class": self.seeds_per_class,
                "corrections_per_round": self.corrections_per_round,
                "completion_threshold": self.completion_threshold,
                "grow_corrections": self.grow_corrections,
                "rng_seed": self.rng_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "OraclePolicy":
        return cls(**d)


@dataclass
class EvalReport:
    cloud_id: str
    rounds: list = field(default_factory=list)  # dicts: round, clicks_cumulative, accuracy, miou
    total_clicks: int = 0
    rounds_to_completion: int = 0
    final_accuracy: float = 0.0
    final_miou: float = 0.0

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["round", "clicks_cumulative", "accuracy", "miou"])
        for r in self.rounds:
            w.writerow([r["round"], r["clicks_cumulative"],
                        f"{r['accuracy']:.6f}", f"{r['miou']:.6f}"])
        return out.getvalue()

    def to_json(self) -> str:
        return json.dumps({"cloud_id": self.cloud_id,
                           "total_clicks": self.total_clicks,
                           "rounds_to_completion": self.rounds_to_completion,
                           "final_accuracy": self.final_accuracy,
                           "final_miou": self.final_miou,
                           "rounds": self.rounds}, indent=2)


def evaluate(predicted: LabelMap, ground_truth: LabelMap):
    """(accuracy, mean IoU over classes present in the ground truth)."""
    if len(predicted) != len(ground_truth):
        raise InvalidParameterError("label map length mismatch")
    if predicted.num_classes != ground_truth.num_classes:
        raise InvalidParameterError("num_classes mismatch")
    if not predicted.is_full or not ground_truth.is_full:
        raise InvalidParameterError("evaluate requires fully labeled maps")
    p, g = predicted.labels, ground_truth.labels
    acc = float((p == g).mean())
    ious = []
    for c in range(ground_truth.num_classes):
        gt_c = g == c
        if not gt_c.any():
            continue
        pred_c = p == c
        inter = (gt_c & pred_c).sum()
        union = (gt_c | pred_c).sum()
        ious.append(inter / union)
    return acc, float(np.mean(ious))


def _medoid(positions: np.ndarray, ids: np.ndarray) -> int:
    """Member minimizing summed distance to the others; ties by lowest id."""
    pts = positions[ids]
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)).sum(axis=1)
    return int(ids[np.argmin(d)])  # argmin takes the first (lowest id) on ties


def select_seeds(cloud: PointCloud, ground_truth: LabelMap,
                 policy: OraclePolicy) -> list:
    """Per class: the medoid, then farthest-point-sampled extras; deterministic."""
    seeds = []
    pos = cloud.positions
    for c in range(ground_truth.num_classes):
        ids = np.nonzero(ground_truth.labels == c)[0]
        if ids.size == 0:
            raise InvalidParameterError(f"class {c} absent from ground truth")
        chosen = [_medoid(pos, ids)]
        for _ in range(policy.seeds_per_class - 1):
            d = np.min(np.sqrt(((pos[ids][:, None, :]
                                 - pos[chosen][None, :, :]) ** 2).sum(-1)), axis=1)
            far = int(ids[np.argmax(d)])
            if far in chosen:
                break
            chosen.append(far)
        seeds.extend((pid, c) for pid in chosen)
    return seeds


def select_corrections(predicted: LabelMap, ground_truth: LabelMap,
                       cloud: PointCloud, policy: OraclePolicy,
                       knn: np.ndarray | None = None) -> list:
    """Medoids of the largest mispredicted blobs (KNN(8) graph, same GT class,
    both endpoints wrong), up to the per-round budget. Empty once agreement
    reaches the completion threshold."""
    acc, _ = evaluate(predicted, ground_truth)
    if acc >= policy.completion_threshold:
        return []
    wrong = np.nonzero(predicted.labels != ground_truth.labels)[0]
    if knn is None:
        knn = knn_query_batch(build_index(cloud), 8)
    wrong_set = set(int(w) for w in wrong)
    # connected components over the symmetrized KNN graph restricted to wrong
    # points sharing a GT class
    visited = set()
    blobs = []
    adj = {}
    for i in wrong:
        i = int(i)
        for j in knn[i]:
            j = int(j)
            if j in wrong_set and ground_truth.labels[i] == ground_truth.labels[j]:
                adj.setdefault(i, []).append(j)
                adj.setdefault(j, []).append(i)
    for i in wrong:
        i = int(i)
        if i in visited:
            continue
        comp = [i]
        visited.add(i)
        stack = [i]
        while stack:
            u = stack.pop()
            for v in adj.get(u, ()):
                if v not in visited:
                    visited.add(v)
                    comp.append(v)
                    stack.append(v)
        blobs.append(sorted(comp))
    blobs.sort(key=lambda b: (-len(b), b[0]))
    out = []
    for blob in blobs[:policy.corrections_per_round]:
        pid = _medoid(cloud.positions, np.array(blob))
        out.append((pid, int(ground_truth.labels[pid])))
    return out


def run_simulated_session(cloud: PointCloud, ground_truth: LabelMap,
                          base_model: ModelParams | None, policy: OraclePolicy,
                          grow_config: GrowConfig | None = None,
                          train_config: TrainConfig | None = None):
    """Drive a full annotation session from ground truth.

    Returns (EvalReport, finalized SessionState). Raises ConvergenceError if
    the completion threshold is not reached within MAX_ROUNDS.
    """
    if not ground_truth.is_full:
        raise InvalidParameterError("ground truth must be fully labeled")
    state = create_session(cloud, ground_truth.num_classes, base_model,
                           grow_config, train_config)
    knn = knn_query_batch(state.index, 8)
    submit_seeds(state, select_seeds(cloud, ground_truth, policy))
    report = EvalReport(cloud_id=cloud.id)
    done = False
    while state.round < MAX_ROUNDS:
        train_and_predict(state)
        acc, miou = evaluate(state.labels, ground_truth)
        report.rounds.append({"round": state.round,
                              "clicks_cumulative": state.clicks_total,
                              "accuracy": acc, "miou": miou})
        if acc >= policy.completion_threshold:
            done = True
            break
        corrections = select_corrections(state.labels, ground_truth, cloud,
                                         policy, knn=knn)
        submit_corrections(state, [Correction(p, c, policy.grow_corrections)
                                   for p, c in corrections])
    if not done:
        acc, _ = evaluate(state.labels, ground_truth)
        raise ConvergenceError(
            f"cloud {cloud.id!r}: agreement {acc:.4f} below threshold "
            f"{policy.completion_threshold} after {state.round} rounds "
            f"({state.clicks_total} clicks)")
    # below-1.0 thresholds leave disagreements; fix them (one click each) and
    # run the mandatory training pass to re-enter Reviewing before finalize
    wrong = np.nonzero(state.labels.labels != ground_truth.labels)[0]
    if wrong.size:
        submit_corrections(state, [Correction(int(i), int(ground_truth.labels[i]), False)
                                   for i in wrong])
        train_and_predict(state)
        acc, miou = evaluate(state.labels, ground_truth)
        report.rounds.append({"round": state.round,
                              "clicks_cumulative": state.clicks_total,
                              "accuracy": acc, "miou": miou})
    finalize(state)
    report.total_clicks = state.clicks_total
    report.rounds_to_completion = state.round
    report.final_accuracy, report.final_miou = evaluate(state.labels, ground_truth)
    return report, state


def manual_baseline_clicks(cloud: PointCloud, ground_truth: LabelMap,
                           brush: str = "knn", k: int = 16,
                           radius: float = 0.1) -> int:
    """Clicks a perfect nearest-neighbor painter needs to label every point.

    Repeatedly clicks the lowest-id incorrect point, painting it and every
    brush neighbor that shares its ground-truth class.
    """
    if not ground_truth.is_full:
        raise InvalidParameterError("ground truth must be fully labeled")
    n = len(cloud)
    index = build_index(cloud)
    gt = ground_truth.labels
    painted = np.full(n, UNLABELED, dtype=np.int32)
    if brush == "knn":
        nbrs = knn_query_batch(index, min(k, n - 1))
    clicks = 0
    cursor = 0
    while True:
        while cursor < n and painted[cursor] == gt[cursor]:
            cursor += 1
        if cursor >= n:
            return clicks
        pid = cursor
        clicks += 1
        painted[pid] = gt[pid]
        if brush == "knn":
            neigh = nbrs[pid]
        else:
            from .geom import fdn_query
            neigh = fdn_query(index, pid, radius)
        same = neigh[gt[neigh] == gt[pid]]
        painted[same] = gt[same]
