"""Clinical feature schema: variable kinds, left/right mirror pairs, expert subset.

Every variable recorded at an examination is described by a :class:`FeatureSpec`.
The schema is the single source of truth for categorical vocabularies, ordinal
level order, side pairing and expert-set membership; ingestion, preprocessing
and the synthetic generator all validate against it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterable, Optional, Sequence

KINDS = ("binary", "ordinal", "nominal", "continuous")
SIDES = ("left", "right", "none")

UNKNOWN_CATEGORY = "__unknown__"


class Label(int, Enum):
    """Binary target: absence / presence of TMJ involvement."""

    TMJ0 = 0
    TMJ1 = 1

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.name


class SchemaError(ValueError):
    """Raised when a schema (or a value checked against it) is malformed."""


@dataclass(frozen=True)
class FeatureSpec:
    """Declarative description of one clinical variable.

    kind: "binary" | "ordinal" (values 0..levels-1) | "nominal" (token in
    categories) | "continuous" (real, unit).  Sided features carry the name of
    their mirror partner in ``mirror_of``.
    """

    name: str
    kind: str
    side: str = "none"
    expert: bool = False
    mirror_of: Optional[str] = None
    levels: Optional[int] = None
    categories: Optional[tuple[str, ...]] = None
    unit: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.side not in SIDES:
            raise SchemaError(f"feature {self.name!r}: unknown side {self.side!r}")
        if self.kind == "ordinal" and (self.levels is None or self.levels < 2):
            raise SchemaError(f"ordinal feature {self.name!r} needs levels >= 2")
        if self.kind == "nominal" and not self.categories:
            raise SchemaError(f"nominal feature {self.name!r} needs categories")
        if self.kind == "nominal" and self.side != "none":
            # "highest value" merging is undefined for unordered categories
            raise SchemaError(f"nominal feature {self.name!r} cannot be sided")
        if (self.side == "none") != (self.mirror_of is None):
            raise SchemaError(
                f"feature {self.name!r}: mirror_of must be set iff side is left/right"
            )

    def validate_value(self, value: object) -> None:
        """Check one raw value against this spec; raise SchemaError if invalid."""
        if self.kind == "binary":
            if value not in (0, 1):
                raise SchemaError(f"{self.name}: binary value must be 0/1, got {value!r}")
        elif self.kind == "ordinal":
            if not isinstance(value, int) or not 0 <= value < int(self.levels or 0):
                raise SchemaError(
                    f"{self.name}: ordinal value must be in 0..{int(self.levels or 0) - 1}, got {value!r}"
                )
        elif self.kind == "nominal":
            if value != UNKNOWN_CATEGORY and value not in (self.categories or ()):
                raise SchemaError(f"{self.name}: unknown category {value!r}")
        else:  # continuous
            try:
                v = float(value)  # type: ignore[arg-type]
            except (TypeError, ValueError):
                raise SchemaError(f"{self.name}: continuous value must be real, got {value!r}")
            if v != v or v in (float("inf"), float("-inf")):
                raise SchemaError(f"{self.name}: continuous value must be finite")

    def to_dict(self) -> dict:
        d: dict = {
            "name": self.name,
            "kind": self.kind,
            "side": self.side,
            "expert": self.expert,
            "mirror_of": self.mirror_of,
        }
        if self.kind == "ordinal":
            d["levels"] = self.levels
        if self.kind == "nominal":
            d["categories"] = list(self.categories or ())
        if self.kind == "continuous":
            d["unit"] = self.unit
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(
            name=d["name"],
            kind=d["kind"],
            side=d.get("side", "none"),
            expert=bool(d.get("expert", False)),
            mirror_of=d.get("mirror_of"),
            levels=d.get("levels"),
            categories=tuple(d["categories"]) if d.get("categories") else None,
            unit=d.get("unit"),
        )


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered collection of FeatureSpec entries with validated mirror pairing."""

    entries: tuple[FeatureSpec, ...]
    _by_name: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_name: dict[str, FeatureSpec] = {}
        for spec in self.entries:
            if spec.name in by_name:
                raise SchemaError(f"duplicate feature name {spec.name!r}")
            by_name[spec.name] = spec
        for spec in self.entries:
            if spec.side == "none":
                continue
            partner = by_name.get(spec.mirror_of or "")
            if partner is None:
                raise SchemaError(f"{spec.name}: mirror partner {spec.mirror_of!r} missing")
            expected_side = "right" if spec.side == "left" else "left"
            if partner.side != expected_side or partner.mirror_of != spec.name:
                raise SchemaError(f"{spec.name}: mirror pairing with {partner.name} inconsistent")
            if (partner.kind, partner.levels, partner.categories) != (
                spec.kind,
                spec.levels,
                spec.categories,
            ):
                raise SchemaError(f"{spec.name}: mirror pair kinds differ")
        object.__setattr__(self, "_by_name", by_name)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> FeatureSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def get(self, name: str) -> Optional[FeatureSpec]:
        return self._by_name.get(name)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.entries]

    @property
    def expert_names(self) -> list[str]:
        return [s.name for s in self.entries if s.expert]

    def mirror_pairs(self, names: Optional[Iterable[str]] = None) -> list[tuple[str, str]]:
        """(left, right) pairs, in schema order of the left member, restricted
        to ``names`` when given (both sides must be present to form a pair)."""
        allowed = set(names) if names is not None else None
        pairs = []
        for spec in self.entries:
            if spec.side != "left":
                continue
            if allowed is not None and (spec.name not in allowed or spec.mirror_of not in allowed):
                continue
            pairs.append((spec.name, spec.mirror_of or ""))
        return pairs

    def subset(self, names: Sequence[str]) -> list[FeatureSpec]:
        return [self[n] for n in names]

    def to_json(self) -> str:
        return json.dumps([s.to_dict() for s in self.entries], indent=2)

    def content_hash(self) -> str:
        canon = json.dumps([s.to_dict() for s in self.entries], sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        data = json.loads(text)
        if not isinstance(data, list):
            raise SchemaError("schema file must be a JSON list of feature specs")
        return cls(entries=tuple(FeatureSpec.from_dict(d) for d in data))


def load_schema(path: str) -> FeatureSchema:
    with open(path, "r", encoding="utf-8") as fh:
        return FeatureSchema.from_json(fh.read())


def save_schema(schema: FeatureSchema, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(schema.to_json())
        fh.write("\n")


def load_drug_map() -> dict[str, str]:
    """The shipped medication-token -> drug-class mapping."""
    text = resources.files("tmjcds.data").joinpath("drug_map.json").read_text("utf-8")
    return json.loads(text)


# --- shipped default schema -------------------------------------------------
#
# 95 variables, 26 of them expert-chosen.  Sided variables are declared in
# left/right pairs; ordinal levels are 0-based grades; nominal vocabularies
# are fixed here.  `involvementstatus` is part of the recorded schema but is
# excluded from design matrices (see sampling.resolve_feature_subset).

_EXPERT = {
    "asybasis", "asyoccl", "asypupilline", "chewingfunction", "deepbite", "drug",
    "krepitationleft", "krepitationright", "laterotrusionleftmm", "laterotrusionrightmm",
    "laterpalpleft", "laterpalpright", "lowerface", "openbite", "opening", "openingmm",
    "overbite", "overjet", "painmoveleft", "painmoveright", "profile", "protrusion",
    "protrusionmm", "retrognathism", "translationleft", "translationright",
}

# (base name, kind, extra) for sided pairs; full names are base+left/base+right,
# except continuous mm pairs which interpose the side before the unit suffix.
_SIDED_BINARY = [
    "asymmetrymasseter", "clickclosing", "clicklateroleft", "clicklateroright",
    "clickopening", "clickprotrusion", "crepitation", "hypermobility", "krepitation",
    "laterpalp", "lock", "masseter", "pain", "postpalp", "rotation", "sterno",
    "swollenjoint", "swollen", "temporalis", "tempsen", "tenderpalpation",
    "traction", "translation",
]
_SIDED_ORDINAL3 = ["muscularpain", "painmove", "sagittalrelation"]
_SIDED_CONT_MM = ["laterotrusion"]

_PLAIN_BINARY = [
    "abrasion", "aplasia", "backbending", "bruxism", "deepbite", "dualbite",
    "forwardbending", "headache", "incisaloverjet", "involvementstatus",
    "micrognathism", "morningstiffness", "neckpain", "neckpalpation",
    "neckstiffness", "openbite", "ptext", "ptint", "retrognathism", "transversal",
]
_PLAIN_ORDINAL3 = [
    "arthritislevel", "asybasis", "asymenton", "asyoccl", "asypupilline",
    "asyupmid", "lowerface", "opening", "openingfunction", "overbite", "overjet",
    "protrusion",
]
_NOMINAL = {
    "chewingfunction": ("normal", "unilateral", "impaired"),
    "lips": ("competent", "incompetent", "strained"),
    "profile": ("straight", "convex", "concave"),
    "respiration": ("nasal", "mixed", "oral"),
    "spacerelationship": ("spaced", "normal", "crowded"),
    "tongue": ("normal", "scalloped", "enlarged"),
}
_CONT_MM = ["openingmm", "protrusionmm"]

# Table-style listing order of the shipped schema (first occurrence wins).
_ORDER = [
    "abrasion", "aplasia", "arthritislevel", "asybasis", "asymenton", "asyoccl",
    "asypupilline", "asyupmid", "asymmetrymasseterright", "asymmetrymasseterleft",
    "backbending", "bruxism", "chewingfunction", "clickclosingright", "clickclosingleft",
    "clicklateroleftright", "clicklateroleftleft", "clicklaterorightright",
    "clicklaterorightleft", "clickopeningright", "clickopeningleft",
    "clickprotrusionright", "clickprotrusionleft", "crepitationleft", "crepitationright",
    "deepbite", "drug", "dualbite", "forwardbending", "headache", "hypermobilityleft",
    "hypermobilityright", "incisaloverjet", "involvementstatus", "krepitationleft",
    "krepitationright", "laterpalpleft", "laterpalpright", "laterotrusionleftmm",
    "laterotrusionrightmm", "lockleft", "lockright", "lips", "lowerface", "masseterleft",
    "masseterright", "micrognathism", "morningstiffness", "muscularpainleft",
    "muscularpainright", "neckpain", "neckpalpation", "neckstiffness", "openbite",
    "opening", "openingfunction", "openingmm", "overbite", "overjet", "painleft",
    "painright", "painmoveright", "painmoveleft", "ptext", "ptint", "profile",
    "protrusion", "protrusionmm", "respiration", "retrognathism", "rotationleft",
    "rotationright", "sagittalrelationleft", "sagittalrelationright", "spacerelationship",
    "sternoleft", "sternoright", "swollenjointright", "swollenjointleft", "swollenleft",
    "swollenright", "temporalisleft", "temporalisright", "tempsenleft", "tempsenright",
    "tenderpalpationleft", "tenderpalpationright", "tongue", "tractionleft",
    "tractionright", "transversal", "translationleft", "translationright",
    "postpalpright", "postpalpleft",
]


def _spec_for(name: str, drug_categories: tuple[str, ...]) -> FeatureSpec:
    expert = name in _EXPERT
    if name == "drug":
        return FeatureSpec(name, "nominal", expert=expert, categories=drug_categories)
    if name in _NOMINAL:
        return FeatureSpec(name, "nominal", expert=expert, categories=_NOMINAL[name])
    if name in _PLAIN_BINARY:
        return FeatureSpec(name, "binary", expert=expert)
    if name in _PLAIN_ORDINAL3:
        return FeatureSpec(name, "ordinal", expert=expert, levels=3)
    if name in _CONT_MM:
        return FeatureSpec(name, "continuous", expert=expert, unit="mm")
    for side in ("left", "right"):
        other = "right" if side == "left" else "left"
        if name.endswith(side + "mm"):
            base = name[: -len(side) - 2]
            if base in _SIDED_CONT_MM:
                return FeatureSpec(
                    name, "continuous", side=side, expert=expert,
                    mirror_of=f"{base}{other}mm", unit="mm",
                )
        if name.endswith(side):
            base = name[: -len(side)]
            if base in _SIDED_BINARY:
                return FeatureSpec(name, "binary", side=side, expert=expert,
                                   mirror_of=base + other)
            if base in _SIDED_ORDINAL3:
                return FeatureSpec(name, "ordinal", side=side, expert=expert,
                                   mirror_of=base + other, levels=3)
    raise SchemaError(f"no kind assignment for feature {name!r}")


def default_schema() -> FeatureSchema:
    """The shipped 95-variable schema (26 expert-chosen)."""
    drug_categories = tuple(sorted(load_drug_map().keys()))
    return FeatureSchema(entries=tuple(_spec_for(n, drug_categories) for n in _ORDER))
