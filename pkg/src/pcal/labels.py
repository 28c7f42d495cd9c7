"""Per-point label map with provenance tracking and sidecar file I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import InvalidParameterError

UNLABELED = -1


class Provenance(IntEnum):
    """Origin of a point's label; numeric value doubles as overwrite authority."""

    NONE = 0
    PREDICTED = 1
    GROWN = 2
    SEED = 3
    CORRECTED = 4


@dataclass
class LabelMap:
    """Class assignment in {UNLABELED} | {0..C-1} plus provenance per point."""

    labels: np.ndarray
    provenance: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)
        self.provenance = np.asarray(self.provenance, dtype=np.int8)
        if self.labels.shape != self.provenance.shape or self.labels.ndim != 1:
            raise InvalidParameterError("labels and provenance must be equal-length 1-D arrays")
        if self.num_classes < 2:
            raise InvalidParameterError("num_classes must be >= 2")
        lab = self.labels
        labeled = lab != UNLABELED
        if labeled.any() and (lab[labeled].min() < 0 or lab[labeled].max() >= self.num_classes):
            raise InvalidParameterError("class id out of range")
        strong = np.isin(self.provenance, (Provenance.SEED, Provenance.CORRECTED))
        if (lab[strong] == UNLABELED).any():
            raise InvalidParameterError("Seed/Corrected entries must be labeled")

    @classmethod
    def empty(cls, n: int, num_classes: int) -> "LabelMap":
        return cls(np.full(n, UNLABELED, dtype=np.int32),
                   np.zeros(n, dtype=np.int8), num_classes)

    def copy(self) -> "LabelMap":
        return LabelMap(self.labels.copy(), self.provenance.copy(), self.num_classes)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED

    @property
    def is_full(self) -> bool:
        return bool((self.labels != UNLABELED).all())

    def set_label(self, point_id: int, class_id: int, provenance: Provenance):
        """Write one label, enforcing authority ordering (never downgrade)."""
        if not 0 <= point_id < len(self):
            raise InvalidParameterError(f"point id {point_id} out of range")
        if not 0 <= class_id < self.num_classes:
            raise InvalidParameterError(f"class id {class_id} out of range")
        if self.provenance[point_id] > provenance:
            raise InvalidParameterError(
                f"point {point_id} has higher-authority provenance "
                f"{Provenance(self.provenance[point_id]).name}")
        self.labels[point_id] = class_id
        self.provenance[point_id] = provenance


def save_labels(lmap: LabelMap) -> str:
    """Sidecar text format: 'classes=<C>' then one label per line, -1 unlabeled."""
    lines = [f"classes={lmap.num_classes}"]
    lines.extend(str(int(v)) for v in lmap.labels)
    return "\n".join(lines) + "\n"


def load_labels(text: str) -> LabelMap:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("classes="):
        raise InvalidParameterError("label file must start with 'classes=<C>'")
    try:
        c = int(lines[0].split("=", 1)[1])
    except ValueError:
        raise InvalidParameterError("bad classes= header")
    labels = np.array([int(v) for v in lines[1:]], dtype=np.int32)
    prov = np.where(labels != UNLABELED, np.int8(Provenance.SEED), np.int8(Provenance.NONE))
    return LabelMap(labels, prov, c)
