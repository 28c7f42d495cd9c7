"""Per-cloud annotation session: the Seeding -> Training -> Reviewing ->
(Correcting -> Training)* -> Finalized state machine, the single write path
for labels and clicks, and a replayable event log."""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidParameterError, PhaseError
from .geom import PointCloud, SpatialIndex, build_index, estimate_normals
from .labels import LabelMap, Provenance, UNLABELED
from .nnet import ModelParams, forward, init_or_resize_head
from .region_grow import GrowConfig, grow_from_point, grow_regions
from .trainer import TrainConfig, final_retrain, finetune_round


# fraction of carried (warm-start) weights kept when blending toward a fresh
# initialization in create_session
WARM_KEEP = 0.4


class Phase(str, Enum):
    SEEDING = "seeding"
    TRAINING = "training"      # training-eligible (or in progress, server-side)
    REVIEWING = "reviewing"
    FINALIZED = "finalized"


@dataclass
class ClickEntry:
    kind: str                  # 'seed' or 'correction'
    point_id: int
    class_id: int
    round: int
    timestamp: float


@dataclass
class Correction:
    point_id: int
    class_id: int
    grow: bool = False


@dataclass
class SessionState:
    session_id: str
    cloud: PointCloud
    labels: LabelMap
    model: ModelParams
    phase: Phase
    round: int
    click_log: list
    grow_config: GrowConfig
    train_config: TrainConfig
    index: SpatialIndex = field(repr=False, default=None)
    events: list = field(default_factory=list)
    # model as of the last review loop, before the fully supervised final
    # retrain specializes it to this cloud; used to warm-start later sessions
    loop_model: ModelParams = None

    @property
    def clicks_total(self) -> int:
        return len(self.click_log)

    def _record(self, op: str, **payload):
        self.events.append({"op": op, **payload})


def create_session(cloud: PointCloud, num_classes: int,
                   base_model: ModelParams | None,
                   grow_config: GrowConfig | None = None,
                   train_config: TrainConfig | None = None,
                   session_id: str | None = None) -> SessionState:
    """Start a session in Seeding; the base model's head is resized when its
    class count differs from this session's.

    Warm starts are blended toward a fresh initialization (shrink-and-perturb,
    keeping WARM_KEEP of the carried weights): models carried across many
    sessions otherwise lose plasticity and fine-tune worse on new clouds.
    """
    if num_classes < 2:
        raise InvalidParameterError("num_classes must be >= 2")
    grow_config = grow_config or GrowConfig()
    train_config = train_config or TrainConfig()
    if grow_config.mode == "normal_angle" and cloud.normals is None:
        cloud = estimate_normals(cloud, k=8)
    model = init_or_resize_head(base_model, num_classes, train_config.rng_seed)
    if base_model is not None:
        fresh = init_or_resize_head(None, num_classes, train_config.rng_seed)
        for k in model.params:
            model.params[k] = (WARM_KEEP * model.params[k]
                               + (1.0 - WARM_KEEP) * fresh.params[k])
    state = SessionState(
        session_id=session_id or uuid.uuid4().hex[:12],
        cloud=cloud,
        labels=LabelMap.empty(len(cloud), num_classes),
        model=model,
        phase=Phase.SEEDING,
        round=0,
        click_log=[],
        grow_config=grow_config,
        train_config=train_config,
        index=build_index(cloud),
    )
    state._record("create", num_classes=num_classes,
                  grow_config=grow_config.to_dict(),
                  train_config=train_config.to_dict(),
                  had_base_model=base_model is not None)
    return state


def submit_seeds(state: SessionState, seeds: list) -> SessionState:
    """Record one SeedClick per (point_id, class_id), then grow regions.

    Every class must receive at least one seed; growing adds zero clicks.
    """
    if state.phase != Phase.SEEDING:
        raise PhaseError(f"cannot seed in phase {state.phase.value}")
    c = state.labels.num_classes
    n = len(state.cloud)
    seen_points = {}
    covered = set()
    for pid, cls in seeds:
        pid, cls = int(pid), int(cls)
        if not 0 <= pid < n:
            raise InvalidParameterError(f"seed point id {pid} out of range")
        if not 0 <= cls < c:
            raise InvalidParameterError(f"seed class id {cls} out of range")
        if pid in seen_points and seen_points[pid] != cls:
            raise InvalidParameterError(f"point {pid} seeded with two classes")
        seen_points[pid] = cls
        covered.add(cls)
    missing = set(range(c)) - covered
    if missing:
        raise InvalidParameterError(f"classes without seeds: {sorted(missing)}")

    now = time.time()
    for pid, cls in seeds:
        state.labels.set_label(int(pid), int(cls), Provenance.SEED)
        state.click_log.append(ClickEntry("seed", int(pid), int(cls), state.round, now))
    state.labels = grow_regions(state.cloud, state.labels, state.grow_config, state.index)
    state.phase = Phase.TRAINING
    state._record("seeds", seeds=[[int(p), int(cl)] for p, cl in seeds])
    return state


def train_and_predict(state: SessionState, on_epoch=None) -> SessionState:
    """Fine-tune for one round, then predict: every point without Seed or
    Corrected provenance gets the argmax class with Predicted provenance."""
    if state.phase not in (Phase.TRAINING, Phase.REVIEWING):
        raise PhaseError(f"cannot train in phase {state.phase.value}")
    if not state.labels.labeled_mask.any():
        raise InvalidParameterError("no labeled points to train on")
    state.model = finetune_round(state.model, state.cloud, state.labels,
                                 state.round, state.train_config, on_epoch=on_epoch)
    logits, _ = forward(state.model, state.cloud)
    pred = logits.argmax(axis=1).astype(np.int32)
    keep = np.isin(state.labels.provenance, (Provenance.SEED, Provenance.CORRECTED))
    state.labels.labels = np.where(keep, state.labels.labels, pred)
    state.labels.provenance = np.where(keep, state.labels.provenance,
                                       np.int8(Provenance.PREDICTED))
    state.round += 1
    state.phase = Phase.REVIEWING
    state._record("train")
    return state


def submit_corrections(state: SessionState, corrections: list) -> SessionState:
    """Apply CorrectionClicks. A correction overrides Predicted/Grown labels,
    never a differing Seed; an optional grow flag expands the corrected label
    locally at no extra click cost."""
    if state.phase != Phase.REVIEWING:
        raise PhaseError(f"cannot correct in phase {state.phase.value}")
    if not corrections:
        raise InvalidParameterError("corrections must be non-empty; use finalize instead")
    items = [c if isinstance(c, Correction) else Correction(*c) for c in corrections]
    n = len(state.cloud)
    c = state.labels.num_classes
    for it in items:
        if not 0 <= it.point_id < n:
            raise InvalidParameterError(f"correction point id {it.point_id} out of range")
        if not 0 <= it.class_id < c:
            raise InvalidParameterError(f"correction class id {it.class_id} out of range")
        if (state.labels.provenance[it.point_id] == Provenance.SEED
                and state.labels.labels[it.point_id] != it.class_id):
            raise InvalidParameterError(
                f"correction would override Seed label at point {it.point_id}")

    now = time.time()
    for it in items:
        state.labels.labels[it.point_id] = it.class_id
        state.labels.provenance[it.point_id] = Provenance.CORRECTED
        state.click_log.append(ClickEntry("correction", it.point_id, it.class_id,
                                          state.round, now))
        if it.grow:
            grow_from_point(state.cloud, state.labels, it.point_id, it.class_id,
                            state.grow_config, state.index)
    state.phase = Phase.TRAINING
    state._record("corrections",
                  items=[[it.point_id, it.class_id, bool(it.grow)] for it in items])
    return state


def finalize(state: SessionState) -> SessionState:
    """Run the full-cloud retrain and mark the session Finalized. `loop_model`
    keeps the pre-retrain weights as the warm start for subsequent sessions."""
    if state.phase != Phase.REVIEWING:
        raise PhaseError(f"cannot finalize in phase {state.phase.value}")
    if not state.labels.is_full:
        raise PhaseError("cannot finalize with UNLABELED points remaining")
    state.loop_model = state.model.copy()
    state.model = final_retrain(state.model, state.cloud, state.labels,
                                state.train_config)
    state.phase = Phase.FINALIZED
    state._record("finalize")
    return state


# ---------------------------------------------------------------------------
# Event log persistence and replay
# ---------------------------------------------------------------------------

def dump_events(state: SessionState) -> str:
    """Newline-delimited JSON, one record per accepted operation."""
    return "\n".join(json.dumps(e, separators=(",", ":")) for e in state.events) + "\n"


def replay_events(cloud: PointCloud, text: str,
                  base_model: ModelParams | None = None) -> SessionState:
    """Rebuild a session by re-running its event log; with the same rng seeds
    this reproduces the final LabelMap exactly."""
    events = [json.loads(ln) for ln in text.splitlines() if ln.strip()]
    if not events or events[0]["op"] != "create":
        raise InvalidParameterError("event log must start with a create record")
    head = events[0]
    state = create_session(cloud, head["num_classes"], base_model,
                           GrowConfig.from_dict(head["grow_config"]),
                           TrainConfig.from_dict(head["train_config"]))
    for ev in events[1:]:
        op = ev["op"]
        if op == "seeds":
            submit_seeds(state, [tuple(s) for s in ev["seeds"]])
        elif op == "train":
            train_and_predict(state)
        elif op == "corrections":
            submit_corrections(state, [Correction(p, c, g) for p, c, g in ev["items"]])
        elif op == "finalize":
            finalize(state)
        else:
            raise InvalidParameterError(f"unknown event op {op!r}")
    return state
