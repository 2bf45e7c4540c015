"""Domain schema: informable slots with value inventories, plus requestable slots.

Every informable slot tracks a distribution over its declared values plus two
engine-level sentinels: ``dontcare`` ("any value is fine") and ``none`` ("not
yet expressed"). The sentinels are never ontology entries themselves; the
loader rejects value strings that would collide with them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import OntologyError, UnknownValueError

DONTCARE = "dontcare"
NONE = "none"

_RESERVED = (DONTCARE, NONE)


@dataclass(frozen=True)
class Slot:
    """One informable slot.

    Index layout of the slot's distribution: declared values occupy indices
    ``0 .. len(values)-1``, dontcare sits at ``len(values)`` and none at
    ``len(values)+1``.
    """

    name: str
    values: tuple[str, ...]
    _lookup: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lookup = {v: i for i, v in enumerate(self.values)}
        lookup[DONTCARE] = len(self.values)
        lookup[NONE] = len(self.values) + 1
        object.__setattr__(self, "_lookup", lookup)

    @property
    def dimension(self) -> int:
        return len(self.values) + 2

    @property
    def dontcare_index(self) -> int:
        return len(self.values)

    @property
    def none_index(self) -> int:
        return len(self.values) + 1

    @property
    def candidate_labels(self) -> tuple[str, ...]:
        """Labels the decoder scores individually: declared values + dontcare."""
        return self.values + (DONTCARE,)

    def value_index(self, label: str) -> int:
        try:
            return self._lookup[label.lower()]
        except KeyError:
            raise UnknownValueError(
                f"slot {self.name!r} has no value {label!r}"
            ) from None

    def label_at(self, index: int) -> str:
        if index == self.dontcare_index:
            return DONTCARE
        if index == self.none_index:
            return NONE
        if 0 <= index < len(self.values):
            return self.values[index]
        raise UnknownValueError(f"slot {self.name!r} has no index {index}")


def value_index(slot: Slot, label: str) -> int:
    return slot.value_index(label)


@dataclass(frozen=True)
class Ontology:
    informable_slots: tuple[Slot, ...]
    requestable_slots: tuple[str, ...]
    _by_name: dict[str, Slot] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_by_name", {s.name: s for s in self.informable_slots}
        )

    def slot(self, name: str) -> Slot:
        try:
            return self._by_name[name.lower()]
        except KeyError:
            raise UnknownValueError(f"no informable slot named {name!r}") from None

    def has_slot(self, name: str) -> bool:
        return name.lower() in self._by_name

    def to_dict(self) -> dict:
        """The on-disk shape; round-trips through :func:`load_ontology`."""
        return {
            "informable": {s.name: list(s.values) for s in self.informable_slots},
            "requestable": list(self.requestable_slots),
        }

    def sha256(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_json(text: str) -> dict:
    def reject_duplicates(pairs):
        obj = {}
        for key, value in pairs:
            if key in obj:
                raise OntologyError(f"duplicate key {key!r} in ontology file")
            obj[key] = value
        return obj

    try:
        return json.loads(text, object_pairs_hook=reject_duplicates)
    except json.JSONDecodeError as exc:
        raise OntologyError(
            f"ontology is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc


def load_ontology(source) -> Ontology:
    """Parse an ontology from bytes, text, or a readable binary/text stream.

    Expected shape: ``{"informable": {slot: [values...]}, "requestable": [...]}``.
    Slot and value names are lowercased; duplicates (after normalization) and
    empty value inventories are rejected.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    doc = _parse_json(source)
    if not isinstance(doc, dict):
        raise OntologyError("ontology root must be a JSON object")
    informable = doc.get("informable")
    if not isinstance(informable, dict):
        raise OntologyError('ontology must contain an "informable" object')
    requestable = doc.get("requestable", [])
    if not isinstance(requestable, list) or any(
        not isinstance(r, str) for r in requestable
    ):
        raise OntologyError('"requestable" must be an array of slot names')

    slots = []
    seen_slots = set()
    for raw_name, raw_values in informable.items():
        name = raw_name.strip().lower()
        if not name:
            raise OntologyError("empty slot name")
        if name in seen_slots:
            raise OntologyError(f"duplicate slot {name!r} after case normalization")
        seen_slots.add(name)
        if not isinstance(raw_values, list) or not raw_values:
            raise OntologyError(f"slot {name!r} has an empty value list")
        values = []
        seen_values = set()
        for raw in raw_values:
            if not isinstance(raw, str) or not raw.strip():
                raise OntologyError(f"slot {name!r} contains a non-string or empty value")
            value = raw.strip().lower()
            if value in _RESERVED:
                raise OntologyError(
                    f"slot {name!r} declares reserved value {value!r}; "
                    f"dontcare/none are engine sentinels, not ontology entries"
                )
            if value in seen_values:
                raise OntologyError(f"slot {name!r} has duplicate value {value!r}")
            seen_values.add(value)
            values.append(value)
        slots.append(Slot(name=name, values=tuple(values)))

    requestables = []
    seen_req = set()
    for raw in requestable:
        name = raw.strip().lower()
        if not name:
            raise OntologyError("empty requestable slot name")
        if name in seen_req:
            raise OntologyError(f"duplicate requestable slot {name!r}")
        seen_req.add(name)
        requestables.append(name)

    return Ontology(
        informable_slots=tuple(slots), requestable_slots=tuple(requestables)
    )
