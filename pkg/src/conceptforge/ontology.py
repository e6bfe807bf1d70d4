"""Hierarchical concept ontology: superordinates > concepts > parts > affordances.

The ontology is a strict four-level hierarchy. Concepts belong to exactly one
superordinate and decompose into parts; both concepts and parts carry
affordance links. Concept-level and part-level affordance sets are stored
separately so that distance metrics can treat them as separate operands.

Instances are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

from .errors import (
    DanglingReference,
    DuplicateName,
    ParseError,
    UnknownAffordance,
    UnknownConcept,
)

_ID_RE = re.compile(r"^[a-z0-9-]+$")


def slugify(name: str) -> str:
    """Derive a stable id from a display name (lowercase, hyphenated)."""
    slug = re.sub(r"[^a-z0-9]+", "-", name.strip().lower()).strip("-")
    if not slug:
        raise ValueError(f"name {name!r} yields an empty slug")
    return slug


@dataclass(frozen=True)
class Part:
    id: str
    name: str
    affordances: tuple[str, ...]


@dataclass(frozen=True)
class Concept:
    id: str
    name: str
    superordinate: str
    parts: tuple[str, ...]
    affordances: tuple[str, ...]


@dataclass(frozen=True)
class Ontology:
    """Fully linked ontology; every referenced id resolves."""

    superordinates: Mapping[str, str]  # id -> name
    concepts: Mapping[str, Concept]
    parts: Mapping[str, Part]
    affordances: Mapping[str, str]  # id -> name
    version: str = "1"

    def concept_affordances(self, concept_id: str) -> set[str]:
        """Concept-level affordance ids (excludes part-level links)."""
        return set(self._concept(concept_id).affordances)

    def part_affordance_union(self, concept_id: str) -> set[str]:
        """Union of affordance ids over the concept's parts; empty if no parts."""
        c = self._concept(concept_id)
        out: set[str] = set()
        for pid in c.parts:
            out.update(self.parts[pid].affordances)
        return out

    def all_affordances_of(self, concept_id: str) -> set[str]:
        """Concept-level plus part-level affordances."""
        return self.concept_affordances(concept_id) | self.part_affordance_union(concept_id)

    def concepts_with_affordance(self, affordance_id: str) -> list[str]:
        """Every concept holding the affordance directly or via a part, sorted by id."""
        if affordance_id not in self.affordances:
            raise UnknownAffordance(f"unknown affordance id {affordance_id!r}")
        hits = [
            cid
            for cid, c in self.concepts.items()
            if affordance_id in c.affordances
            or any(affordance_id in self.parts[pid].affordances for pid in c.parts)
        ]
        return sorted(hits)

    def negative_constraints(
        self, targets: Iterable[str], mode: str = "any"
    ) -> list[str]:
        """Concepts that already possess the target affordances.

        mode="any" keeps concepts holding at least one target (the default:
        a negative exemplar needs only partial overlap with the positives);
        mode="all" requires every target. Sorted by concept id.
        """
        target_set = set(targets)
        if not target_set:
            raise ValueError("targets must be non-empty")
        for a in target_set:
            if a not in self.affordances:
                raise UnknownAffordance(f"unknown affordance id {a!r}")
        if mode not in ("any", "all"):
            raise ValueError(f"mode must be 'any' or 'all', got {mode!r}")
        out = []
        for cid in self.concepts:
            held = self.all_affordances_of(cid)
            ok = bool(held & target_set) if mode == "any" else target_set <= held
            if ok:
                out.append(cid)
        return sorted(out)

    def concept_by_name(self, name: str) -> Concept:
        for c in self.concepts.values():
            if c.name == name:
                return c
        raise UnknownConcept(f"no concept named {name!r}")

    def affordance_name(self, affordance_id: str) -> str:
        try:
            return self.affordances[affordance_id]
        except KeyError:
            raise UnknownAffordance(f"unknown affordance id {affordance_id!r}") from None

    def _concept(self, concept_id: str) -> Concept:
        try:
            return self.concepts[concept_id]
        except KeyError:
            raise UnknownConcept(f"unknown concept id {concept_id!r}") from None


@dataclass
class ValidationReport:
    errors: list[tuple[str, str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str, str]] = field(default_factory=list)
    stats: dict[str, int] = field(default_factory=dict)

    @property
    def is_valid(self) -> bool:
        return not self.errors

    def codes(self) -> set[str]:
        return {code for code, _, _ in self.errors} | {code for code, _, _ in self.warnings}


# ---------------------------------------------------------------------------
# loading / serialization
# ---------------------------------------------------------------------------

def load_ontology(source: IO[bytes] | bytes | str) -> Ontology:
    """Parse an ontology document from a byte stream (or raw bytes/str).

    Raises ParseError on malformed documents, DanglingReference on unresolved
    ids, DuplicateName on concept-name collisions. Affordance entries sharing
    one name are merged into a single id (the first declared wins); the
    ontology keeps one global affordance vocabulary.
    """
    if isinstance(source, (bytes, str)):
        raw = source
    else:
        raw = source.read()
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ParseError(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("top level must be a JSON object")
    return ontology_from_dict(doc)


def load_ontology_file(path) -> Ontology:
    with open(path, "rb") as fh:
        return load_ontology(fh)


def ontology_from_dict(doc: dict) -> Ontology:
    """Link a parsed ontology document into an Ontology."""
    for key in ("superordinates", "affordances", "parts", "concepts"):
        if key not in doc:
            raise ParseError(f"missing top-level key {key!r}")
        if not isinstance(doc[key], list):
            raise ParseError(f"{key!r} must be an array")
    if not doc["concepts"]:
        raise ParseError("concepts section is empty")
    if not doc["affordances"]:
        raise ParseError("affordances section is empty")

    version = str(doc.get("version", "1"))

    supers: dict[str, str] = {}
    for entry in doc["superordinates"]:
        sid = _require_id(entry, "superordinate")
        supers[sid] = _require_name(entry, "superordinate", sid)

    # Affordances with duplicate names collapse onto the first-declared id.
    affordances: dict[str, str] = {}
    alias: dict[str, str] = {}
    canonical_by_name: dict[str, str] = {}
    for entry in doc["affordances"]:
        aid = _require_id(entry, "affordance")
        name = _require_name(entry, "affordance", aid)
        if name in canonical_by_name:
            alias[aid] = canonical_by_name[name]
            continue
        if aid in affordances:
            raise ParseError(f"affordance id {aid!r} declared twice")
        affordances[aid] = name
        canonical_by_name[name] = aid

    def resolve_aff(aid: str, owner: str) -> str:
        aid = alias.get(aid, aid)
        if aid not in affordances:
            raise DanglingReference(f"{owner} references unknown affordance {aid!r}")
        return aid

    parts: dict[str, Part] = {}
    for entry in doc["parts"]:
        pid = _require_id(entry, "part")
        if pid in parts:
            raise ParseError(f"part id {pid!r} declared twice")
        name = _require_name(entry, "part", pid)
        affs = _dedupe(resolve_aff(a, f"part {pid!r}") for a in entry.get("affordances", []))
        if not affs:
            raise ParseError(f"part {pid!r} has no affordances")
        parts[pid] = Part(id=pid, name=name, affordances=affs)

    concepts: dict[str, Concept] = {}
    names_seen: dict[str, str] = {}
    for entry in doc["concepts"]:
        cid = _require_id(entry, "concept")
        if cid in concepts:
            raise ParseError(f"concept id {cid!r} declared twice")
        name = _require_name(entry, "concept", cid)
        if name in names_seen:
            raise DuplicateName(
                f"concept name {name!r} used by both {names_seen[name]!r} and {cid!r}"
            )
        names_seen[name] = cid
        sup = entry.get("superordinate")
        if sup not in supers:
            raise DanglingReference(f"concept {cid!r} references unknown superordinate {sup!r}")
        part_ids = _dedupe(iter(entry.get("parts", [])))
        for pid in part_ids:
            if pid not in parts:
                raise DanglingReference(f"concept {cid!r} references unknown part {pid!r}")
        affs = _dedupe(resolve_aff(a, f"concept {cid!r}") for a in entry.get("affordances", []))
        if not affs:
            raise ParseError(f"concept {cid!r} has no affordances")
        concepts[cid] = Concept(
            id=cid, name=name, superordinate=sup, parts=part_ids, affordances=affs
        )

    return Ontology(
        superordinates=supers,
        concepts=concepts,
        parts=parts,
        affordances=affordances,
        version=version,
    )


def serialize(o: Ontology) -> bytes:
    """Render the ontology back to its document format (round-trips load)."""
    doc = {
        "version": o.version,
        "superordinates": [{"id": i, "name": n} for i, n in o.superordinates.items()],
        "affordances": [{"id": i, "name": n} for i, n in o.affordances.items()],
        "parts": [
            {"id": p.id, "name": p.name, "affordances": list(p.affordances)}
            for p in o.parts.values()
        ],
        "concepts": [
            {
                "id": c.id,
                "name": c.name,
                "superordinate": c.superordinate,
                "parts": list(c.parts),
                "affordances": list(c.affordances),
            }
            for c in o.concepts.values()
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=False, ensure_ascii=False).encode("utf-8")


def validate(o: Ontology) -> ValidationReport:
    """Check every structural invariant; violations are data, not exceptions.

    Orphan parts and affordances (declared but referenced by nothing) are
    warnings: downstream computation excludes them explicitly. Everything
    else is an error.
    """
    rep = ValidationReport()
    rep.stats = {
        "superordinates": len(o.superordinates),
        "concepts": len(o.concepts),
        "parts": len(o.parts),
        "affordances": len(o.affordances),
    }

    used_parts: set[str] = set()
    used_affs: set[str] = set()
    names: dict[str, str] = {}
    for c in o.concepts.values():
        if c.superordinate not in o.superordinates:
            rep.errors.append(("DanglingReference", "unknown superordinate", c.id))
        if not c.affordances:
            rep.errors.append(("EmptyAffordances", "concept has no affordances", c.id))
        if not c.name:
            rep.errors.append(("EmptyName", "concept has empty name", c.id))
        elif c.name in names:
            rep.errors.append(("DuplicateName", f"name also used by {names[c.name]}", c.id))
        else:
            names[c.name] = c.id
        for pid in c.parts:
            if pid in o.parts:
                used_parts.add(pid)
            else:
                rep.errors.append(("DanglingReference", "unknown part", f"{c.id}->{pid}"))
        for aid in c.affordances:
            if aid in o.affordances:
                used_affs.add(aid)
            else:
                rep.errors.append(("DanglingReference", "unknown affordance", f"{c.id}->{aid}"))

    for p in o.parts.values():
        if not p.affordances:
            rep.errors.append(("EmptyAffordances", "part has no affordances", p.id))
        for aid in p.affordances:
            if aid in o.affordances:
                if p.id in used_parts:
                    used_affs.add(aid)
            else:
                rep.errors.append(("DanglingReference", "unknown affordance", f"{p.id}->{aid}"))
        if p.id not in used_parts:
            rep.warnings.append(("OrphanPart", "part referenced by no concept", p.id))

    for aid in o.affordances:
        if aid not in used_affs:
            rep.warnings.append(("OrphanAffordance", "affordance attached to nothing", aid))

    return rep


def _require_id(entry: dict, kind: str) -> str:
    ident = entry.get("id")
    if not isinstance(ident, str) or not _ID_RE.match(ident):
        raise ParseError(f"{kind} entry has bad id {ident!r} (want [a-z0-9-]+)")
    return ident


def _require_name(entry: dict, kind: str, ident: str) -> str:
    name = entry.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ParseError(f"{kind} {ident!r} has empty name")
    return name.strip()


def _dedupe(items) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for it in items:
        if not isinstance(it, str):
            raise ParseError(f"expected string id, got {it!r}")
        seen.setdefault(it, None)
    return tuple(seen.keys())
