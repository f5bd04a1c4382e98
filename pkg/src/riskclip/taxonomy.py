"""Class taxonomies for incident labels and the coarsening maps between them.

The three label sets (4 / 7 / 16 classes) and the 16->7 / 16->4 coarsening
maps are shipped as versioned data in ``resources/taxonomy.json`` because
downstream results depend on the exact mapping.  Level 1 is the coarsest
(4 classes), level 3 the finest (16 classes); the last label of every level
is "Normal".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

LEVEL_SIZES = {1: 4, 2: 7, 3: 16}


@dataclass(frozen=True)
class ClassTaxonomy:
    """One taxonomy level: its labels and the map from 16-class ids into it."""

    level: int
    labels: tuple[str, ...]
    coarsen_map: tuple[int, ...]  # 16-class id -> id at this level

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def normal_id(self) -> int:
        return len(self.labels) - 1

    def label_of(self, class_id: int) -> str:
        if not 0 <= class_id < self.size:
            raise ValueError(f"class id {class_id} out of range [0, {self.size})")
        return self.labels[class_id]

    def id_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unknown class label {label!r} at level {self.level}") from None


def _load_table() -> dict:
    text = resources.files("riskclip.resources").joinpath("taxonomy.json").read_text("utf-8")
    return json.loads(text)


_TABLE = _load_table()

TAXONOMY_VERSION: int = _TABLE["version"]

_LEVELS: dict[int, ClassTaxonomy] = {
    1: ClassTaxonomy(1, tuple(_TABLE["labels_4"]), tuple(_TABLE["map_16_to_4"])),
    2: ClassTaxonomy(2, tuple(_TABLE["labels_7"]), tuple(_TABLE["map_16_to_7"])),
    3: ClassTaxonomy(3, tuple(_TABLE["labels_16"]), tuple(range(16))),
}


def taxonomy(level: int) -> ClassTaxonomy:
    """Return the taxonomy at ``level`` (1, 2, or 3)."""
    if level not in _LEVELS:
        raise ValueError(f"taxonomy level must be 1, 2, or 3, got {level}")
    return _LEVELS[level]


def taxonomy_size(level: int) -> int:
    """Number of classes at ``level``: 4, 7, or 16."""
    return taxonomy(level).size


def map_class(class16: int, level: int) -> int:
    """Coarsen a 16-class id to the given level; level 3 is the identity."""
    tax = taxonomy(level)
    if not 0 <= class16 < 16:
        raise ValueError(f"16-class id {class16} out of range [0, 16)")
    return tax.coarsen_map[class16]


NORMAL_CLASS16: int = taxonomy(3).id_of("Normal")
