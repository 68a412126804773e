"""Length-based vehicle classification.

Six classes partition (0, inf) meters of detected bounding-box length.
Intervals are half-open [lower, upper) so every positive length maps to
exactly one class. Each class also carries the FHWA class labels it
covers (empty for pedestrians).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

from .errors import NonpositiveLengthError, SchemaError


@dataclass(frozen=True)
class VehicleClass:
    """One length band: [lower, upper) meters."""

    id: int
    label: str
    lower: float
    upper: float
    fhwa: frozenset[str]


@dataclass(frozen=True)
class ClassTable:
    """An ordered set of classes partitioning (0, inf)."""

    classes: tuple[VehicleClass, ...]

    def __post_init__(self):
        if not self.classes:
            raise SchemaError("class table must not be empty")
        prev_upper = 0.0
        for i, c in enumerate(self.classes):
            if c.id != i + 1:
                raise SchemaError(f"class ids must be 1..n consecutive, got {c.id}")
            if c.lower != prev_upper:
                raise SchemaError(
                    f"class {c.id} lower bound {c.lower} leaves a gap/overlap "
                    f"after {prev_upper}"
                )
            if not c.upper > c.lower:
                raise SchemaError(f"class {c.id} has empty interval")
            prev_upper = c.upper
        if not math.isinf(prev_upper):
            raise SchemaError("last class must extend to infinity")
        object.__setattr__(self, "_bounds", tuple(c.lower for c in self.classes))

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def classify(self, length: float) -> VehicleClass:
        return classify_by_length(length, self)

    def by_id(self, class_id: int) -> VehicleClass:
        return self.classes[class_id - 1]


_DEFAULT_CLASSES = (
    VehicleClass(1, "Pedestrians", 0.0, 1.0, frozenset()),
    VehicleClass(2, "Bicycles, scooters, motorbikes", 1.0, 2.2, frozenset({"1"})),
    VehicleClass(
        3, "Hatchbacks, sedans, small-medium SUVs", 2.2, 5.0,
        frozenset({"2 (No Trailer)"}),
    ),
    VehicleClass(
        4, "Large SUVs, vans, pickup trucks", 5.0, 7.0,
        frozenset({"2 (Trailer)", "3"}),
    ),
    VehicleClass(5, "Trucks, buses", 7.0, 12.0, frozenset({"4", "5", "6", "7"})),
    VehicleClass(
        6, "Trailers, combination trucks", 12.0, math.inf,
        frozenset({"8", "9", "10"}),
    ),
)

DEFAULT_CLASS_TABLE = ClassTable(_DEFAULT_CLASSES)


def classify_by_length(
    length: float, table: ClassTable = DEFAULT_CLASS_TABLE
) -> VehicleClass:
    """Map a bounding-box length to its vehicle class."""
    length = float(length)
    if not math.isfinite(length) or length <= 0:
        raise NonpositiveLengthError(f"length must be positive and finite, got {length!r}")
    idx = bisect_right(table._bounds, length) - 1
    return table.classes[idx]


def fhwa_classes(c: VehicleClass) -> frozenset[str]:
    """The FHWA class labels grouped under this length class."""
    return c.fhwa


def class_table_from_obj(obj) -> ClassTable:
    """Build a class table from decoded JSON (``upper: null`` means inf)."""
    if not isinstance(obj, list):
        raise SchemaError("class table must be a list of class objects")
    classes = []
    for entry in obj:
        try:
            upper = entry["upper"]
            classes.append(
                VehicleClass(
                    id=int(entry["id"]),
                    label=str(entry["label"]),
                    lower=float(entry["lower"]),
                    upper=math.inf if upper is None else float(upper),
                    fhwa=frozenset(str(v) for v in entry.get("fhwa", [])),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad class table entry {entry!r}: {exc}") from None
    return ClassTable(tuple(classes))


def class_table_to_obj(table: ClassTable) -> list[dict]:
    return [
        {
            "id": c.id,
            "label": c.label,
            "lower": c.lower,
            "upper": None if math.isinf(c.upper) else c.upper,
            "fhwa": sorted(c.fhwa),
        }
        for c in table.classes
    ]
