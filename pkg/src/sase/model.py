"""Attribute schema, system states, cases and the knowledge base.

States are plain ``dict`` objects mapping attribute name to value (``float``
for numeric attributes, ``str`` for categorical ones). A *solution* is a dict
restricted to the controllable attributes.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Mapping

from .errors import (
    ConfigurationError,
    ContractViolation,
    FingerprintError,
    KBFormatError,
    KBVersionError,
)

IDENTIFIER = re.compile(r"[a-z][a-z0-9_]*\Z")
KB_VERSION = 1


def _is_real(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class AttributeSchema:
    """One attribute of the managed system.

    ``kind`` is ``"numeric"`` (bounded by ``min``/``max``) or
    ``"categorical"`` (one of ``allowed``). ``similarity_weight=None`` means
    the default: 0 for controllable attributes, 1 otherwise.
    """

    name: str
    kind: str = "numeric"
    min: float | None = None
    max: float | None = None
    integer_valued: bool = False
    unit: str = ""
    allowed: tuple[str, ...] = ()
    controllable: bool = False
    similarity_weight: float | None = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not IDENTIFIER.match(self.name):
            raise ConfigurationError(f"invalid attribute name {self.name!r}")
        if self.kind == "numeric":
            if not (_is_real(self.min) and _is_real(self.max)):
                raise ConfigurationError(f"{self.name}: numeric attribute needs real min and max")
            if not (math.isfinite(self.min) and math.isfinite(self.max)) or not self.min < self.max:
                raise ConfigurationError(f"{self.name}: requires finite min < max")
            object.__setattr__(self, "min", float(self.min))
            object.__setattr__(self, "max", float(self.max))
            if self.allowed:
                raise ConfigurationError(f"{self.name}: numeric attribute cannot list allowed labels")
        elif self.kind == "categorical":
            allowed = tuple(self.allowed)
            if not allowed:
                raise ConfigurationError(f"{self.name}: categorical attribute needs allowed labels")
            if len(set(allowed)) != len(allowed):
                raise ConfigurationError(f"{self.name}: duplicate allowed labels")
            if not all(isinstance(a, str) for a in allowed):
                raise ConfigurationError(f"{self.name}: allowed labels must be strings")
            object.__setattr__(self, "allowed", allowed)
            if self.min is not None or self.max is not None or self.integer_valued:
                raise ConfigurationError(f"{self.name}: categorical attribute cannot have bounds")
        else:
            raise ConfigurationError(f"{self.name}: unknown kind {self.kind!r}")
        if self.similarity_weight is not None:
            w = self.similarity_weight
            if not _is_real(w) or not math.isfinite(w) or w < 0:
                raise ConfigurationError(f"{self.name}: similarity_weight must be a real >= 0")
            object.__setattr__(self, "similarity_weight", float(w))

    @classmethod
    def numeric(cls, name, lo, hi, *, integer_valued=False, unit="", controllable=False,
                similarity_weight=None):
        return cls(name, "numeric", lo, hi, integer_valued=integer_valued, unit=unit,
                   controllable=controllable, similarity_weight=similarity_weight)

    @classmethod
    def categorical(cls, name, allowed, *, controllable=False, similarity_weight=None):
        return cls(name, "categorical", allowed=tuple(allowed), controllable=controllable,
                   similarity_weight=similarity_weight)

    @property
    def is_numeric(self) -> bool:
        return self.kind == "numeric"

    @property
    def span(self) -> float:
        return self.max - self.min

    @property
    def weight(self) -> float:
        """Similarity weight with the controllable/context default applied."""
        if self.similarity_weight is not None:
            return self.similarity_weight
        return 0.0 if self.controllable else 1.0

    def violation(self, value) -> str | None:
        """Return a description of why ``value`` does not conform, or None."""
        if self.is_numeric:
            if not _is_real(value) or not math.isfinite(value):
                return f"{self.name} is not a finite real: {value!r}"
            if not self.min <= value <= self.max:
                return f"{self.name} out of range [{self.min:g}, {self.max:g}]: {value!r}"
            if self.integer_valued and value != int(value):
                return f"{self.name} is not integer-valued: {value!r}"
            return None
        if value not in self.allowed:
            return f"{self.name} label not allowed: {value!r}"
        return None

    def coerce(self, value):
        """Normalize a conforming value to its canonical Python type."""
        return float(value) if self.is_numeric else value

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "controllable": self.controllable}
        if self.is_numeric:
            d.update(min=self.min, max=self.max, integer_valued=self.integer_valued, unit=self.unit)
        else:
            d["allowed"] = list(self.allowed)
        d["similarity_weight"] = self.weight
        return d


class Schema:
    """An ordered, name-unique set of attribute schemas."""

    def __init__(self, attributes: Iterable[AttributeSchema]):
        self.attributes = tuple(attributes)
        self._by_name = {}
        for a in self.attributes:
            if a.name in self._by_name:
                raise ConfigurationError(f"duplicate attribute name {a.name}")
            self._by_name[a.name] = a
        if not self.attributes:
            raise ConfigurationError("schema has no attributes")

    def __iter__(self) -> Iterator[AttributeSchema]:
        return iter(self.attributes)

    def __len__(self):
        return len(self.attributes)

    def __getitem__(self, name: str) -> AttributeSchema:
        return self._by_name[name]

    def __contains__(self, name):
        return name in self._by_name

    def __eq__(self, other):
        return isinstance(other, Schema) and self.attributes == other.attributes

    def __repr__(self):
        return f"Schema({[a.name for a in self.attributes]})"

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def controllables(self) -> list[AttributeSchema]:
        return [a for a in self.attributes if a.controllable]

    @property
    def environment(self) -> list[AttributeSchema]:
        return [a for a in self.attributes if not a.controllable]

    @property
    def fingerprint(self) -> str:
        # Sorted by name so declaration order does not matter.
        canon = sorted((a.to_dict() for a in self.attributes), key=lambda d: d["name"])
        text = json.dumps(canon, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def validate_state(schema: Schema, state: Mapping) -> list[str]:
    """List every way ``state`` fails to be a valid SystemState; empty means ok."""
    violations = []
    for a in schema:
        if a.name not in state:
            violations.append(f"missing attribute {a.name}")
            continue
        problem = a.violation(state[a.name])
        if problem:
            violations.append(problem)
    for name in state:
        if name not in schema:
            violations.append(f"unknown attribute {name}")
    return violations


def validate_solution(schema: Schema, solution: Mapping) -> list[str]:
    violations = []
    for a in schema.controllables:
        if a.name not in solution:
            violations.append(f"solution misses controllable {a.name}")
        else:
            problem = a.violation(solution[a.name])
            if problem:
                violations.append(problem)
    for name in solution:
        if name not in schema:
            violations.append(f"unknown attribute {name}")
        elif not schema[name].controllable:
            violations.append(f"solution assigns non-controllable attribute {name}")
    return violations


def ensure_state(schema: Schema, state: Mapping) -> dict:
    violations = validate_state(schema, state)
    if violations:
        raise ContractViolation("invalid state: " + "; ".join(violations))
    return {a.name: a.coerce(state[a.name]) for a in schema}


def controllables_of(schema: Schema, state: Mapping) -> dict:
    return {a.name: state[a.name] for a in schema.controllables}


def merge_solution(schema: Schema, state: Mapping, solution: Mapping) -> dict:
    """Return ``state`` with its controllable values replaced by ``solution``."""
    for name in solution:
        if name not in schema or not schema[name].controllable:
            raise ContractViolation(f"solution assigns non-controllable attribute {name}")
    merged = {}
    for a in schema:
        merged[a.name] = a.coerce(solution[a.name]) if a.name in solution else state[a.name]
    return merged


class Status(str, Enum):
    UNTESTED = "untested"
    CONFIRMED = "confirmed"
    FAILED = "failed"


class Source(str, Enum):
    CONSTRUCTED = "constructed"
    SEEDED = "seeded"


@dataclass
class Outcome:
    status: Status = Status.UNTESTED
    realized_utility: float | None = None


@dataclass
class Case:
    """A problem snapshot paired with the controllable assignment that answered it."""

    problem: dict
    solution: dict
    predicted_utility: float
    outcome: Outcome = field(default_factory=Outcome)
    source: Source = Source.CONSTRUCTED
    use_count: int = 0
    id: int | None = None

    def to_dict(self) -> dict:
        outcome = {"status": Status(self.outcome.status).value}
        if self.outcome.realized_utility is not None:
            outcome["realized_utility"] = float(self.outcome.realized_utility)
        return {
            "id": self.id,
            "problem": _render_values(self.problem),
            "solution": _render_values(self.solution),
            "predicted_utility": float(self.predicted_utility),
            "outcome": outcome,
            "source": Source(self.source).value,
            "use_count": self.use_count,
        }


def _render_values(values: Mapping) -> dict:
    return {k: (float(v) if _is_real(v) else v) for k, v in values.items()}


def check_case(schema: Schema, case: Case) -> list[str]:
    problems = [f"problem: {v}" for v in validate_state(schema, case.problem)]
    problems += [f"solution: {v}" for v in validate_solution(schema, case.solution)]
    if not _is_real(case.predicted_utility) or not 0.0 <= case.predicted_utility <= 1.0:
        problems.append(f"predicted_utility outside [0, 1]: {case.predicted_utility!r}")
    ru = case.outcome.realized_utility
    if ru is not None and (not _is_real(ru) or not 0.0 <= ru <= 1.0):
        problems.append(f"realized_utility outside [0, 1]: {ru!r}")
    if not isinstance(case.use_count, int) or case.use_count < 0:
        problems.append(f"use_count must be a nonnegative integer: {case.use_count!r}")
    return problems


@dataclass(frozen=True)
class AdaptationRequest:
    state: dict
    trigger_utility: float
    tick: int = 0


@dataclass(frozen=True)
class Provenance:
    kind: str  # "reused" | "constructed"
    case_id: int

    def to_dict(self):
        return {"kind": self.kind, "case_id": self.case_id}


@dataclass(frozen=True)
class AdaptationResponse:
    solution: dict
    predicted_utility: float
    provenance: Provenance
    threshold_met: bool
    eval_count: int
    elapsed: float = 0.0  # seconds

    def to_dict(self) -> dict:
        return {
            "solution": _render_values(self.solution),
            "predicted_utility": float(self.predicted_utility),
            "provenance": self.provenance.to_dict(),
            "threshold_met": self.threshold_met,
            "eval_count": self.eval_count,
        }


class KnowledgeBase:
    """Deduplicated, id-ordered case store bound to one schema fingerprint.

    Single writer: mutation needs exclusive access, concurrent reads are fine.
    """

    def __init__(self, schema_fingerprint: str, cases: Iterable[Case] = (), next_id: int = 0):
        self.schema_fingerprint = schema_fingerprint
        self._cases: dict[int, Case] = {}
        for c in sorted(cases, key=lambda c: c.id):
            if c.id in self._cases:
                raise KBFormatError(f"duplicate case id {c.id}")
            self._cases[c.id] = c
        if self._cases and max(self._cases) >= next_id:
            raise KBFormatError(f"case id {max(self._cases)} not below next_id {next_id}")
        self.next_id = next_id

    @classmethod
    def empty(cls, schema: Schema) -> "KnowledgeBase":
        return cls(schema.fingerprint)

    def __len__(self):
        return len(self._cases)

    def __iter__(self) -> Iterator[Case]:
        return iter(self._cases.values())

    def __eq__(self, other):
        return (
            isinstance(other, KnowledgeBase)
            and self.schema_fingerprint == other.schema_fingerprint
            and self.next_id == other.next_id
            and list(self) == list(other)
        )

    def __repr__(self):
        return f"KnowledgeBase(size={len(self)}, next_id={self.next_id})"

    @property
    def cases(self) -> list[Case]:
        return list(self._cases.values())

    def copy(self) -> "KnowledgeBase":
        return copy.deepcopy(self)

    def check_schema(self, schema: Schema):
        if schema.fingerprint != self.schema_fingerprint:
            raise FingerprintError(
                f"knowledge base fingerprint {self.schema_fingerprint[:12]} does not match "
                f"schema fingerprint {schema.fingerprint[:12]}"
            )

    def insert(self, case: Case, schema: Schema) -> int:
        """Store a copy of ``case`` under the next id and return that id."""
        self.check_schema(schema)
        problems = check_case(schema, case)
        if problems:
            raise ContractViolation("case does not conform to schema: " + "; ".join(problems))
        new_id = self.next_id
        stored = replace(
            case,
            id=new_id,
            problem=ensure_state(schema, case.problem),
            solution={k: schema[k].coerce(v) for k, v in case.solution.items()},
            outcome=replace(case.outcome),
        )
        self._cases[new_id] = stored
        self.next_id += 1
        return new_id

    def get(self, case_id: int) -> Case | None:
        return self._cases.get(case_id)

    def to_document(self) -> dict:
        return {
            "version": KB_VERSION,
            "schema_fingerprint": self.schema_fingerprint,
            "next_id": self.next_id,
            "cases": [c.to_dict() for c in self],
        }

    def serialize(self) -> bytes:
        text = json.dumps(self.to_document(), sort_keys=True, indent=2,
                          ensure_ascii=False, allow_nan=False)
        return (text + "\n").encode("utf-8")

    @classmethod
    def deserialize(cls, data: bytes | str, schema: Schema | None = None) -> "KnowledgeBase":
        """Parse a KB document; with ``schema`` also check fingerprint and conformity."""
        try:
            if isinstance(data, bytes):
                data = data.decode("utf-8")
            doc = json.loads(data)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise KBFormatError(f"not a KB document: {exc}") from None
        if not isinstance(doc, dict):
            raise KBFormatError("KB document must be an object")
        if doc.get("version") != KB_VERSION:
            raise KBVersionError(f"unsupported KB version {doc.get('version')!r}")
        expected = {"version", "schema_fingerprint", "next_id", "cases"}
        if set(doc) != expected:
            raise KBFormatError(f"KB document keys must be {sorted(expected)}, got {sorted(doc)}")
        fp, next_id, raw_cases = doc["schema_fingerprint"], doc["next_id"], doc["cases"]
        if not isinstance(fp, str) or not isinstance(next_id, int) or not isinstance(raw_cases, list):
            raise KBFormatError("bad types for schema_fingerprint/next_id/cases")
        if schema is not None and fp != schema.fingerprint:
            raise FingerprintError("KB was built for a different schema")
        cases = [_case_from_dict(d) for d in raw_cases]
        kb = cls(fp, cases, next_id)
        if [c.id for c in kb] != [c.id for c in cases]:
            raise KBFormatError("cases are not in ascending id order")
        if schema is not None:
            for c in kb:
                problems = check_case(schema, c)
                if problems:
                    raise KBFormatError(f"case {c.id}: " + "; ".join(problems))
        return kb


_CASE_KEYS = {"id", "problem", "solution", "predicted_utility", "outcome", "source", "use_count"}


def _case_from_dict(d) -> Case:
    if not isinstance(d, dict) or set(d) != _CASE_KEYS:
        raise KBFormatError(f"malformed case entry: {d!r}")
    outcome = d["outcome"]
    if not isinstance(outcome, dict) or "status" not in outcome or \
            not set(outcome) <= {"status", "realized_utility"}:
        raise KBFormatError(f"malformed outcome: {outcome!r}")
    try:
        status = Status(outcome["status"])
        source = Source(d["source"])
    except ValueError as exc:
        raise KBFormatError(str(exc)) from None
    cid, use_count = d["id"], d["use_count"]
    for label, v in (("id", cid), ("use_count", use_count)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise KBFormatError(f"{label} must be a nonnegative integer: {v!r}")
    if not isinstance(d["problem"], dict) or not isinstance(d["solution"], dict):
        raise KBFormatError("problem and solution must be objects")
    pu, ru = d["predicted_utility"], outcome.get("realized_utility")
    if not _is_real(pu) or (ru is not None and not _is_real(ru)):
        raise KBFormatError("utilities must be real numbers")
    return Case(
        id=cid,
        problem=_render_values(d["problem"]),
        solution=_render_values(d["solution"]),
        predicted_utility=float(pu),
        outcome=Outcome(status, None if ru is None else float(ru)),
        source=source,
        use_count=use_count,
    )
