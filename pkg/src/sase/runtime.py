"""Scenario-driven managed-system simulator and the adaptation mediator loop."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .engine import Engine, EngineConfig
from .errors import ConfigurationError, SaseError, ScenarioError
from .expr import ExpressionError, parse_expression, references
from .model import (
    IDENTIFIER,
    AdaptationRequest,
    AttributeSchema,
    KnowledgeBase,
    Schema,
    ensure_state,
    validate_solution,
)
from .quality import (
    Classification,
    UtilitySpec,
    UtilityTerm,
    make_curve,
    threshold_check,
    utility,
)
from .uncertainty import UncertaintyDescriptor, UncertaintyModel, expected_utility

_SEED_MASK = (1 << 64) - 1


class LoopError(SaseError):
    def __init__(self, tick, cause):
        self.tick = tick
        super().__init__(f"tick {tick}: {cause}")


@dataclass(frozen=True)
class DerivedMetric:
    name: str
    expression: str
    node: object = field(compare=False, repr=False)


@dataclass(frozen=True)
class Noise:
    attribute: str
    amplitude: float


@dataclass(frozen=True)
class Segment:
    from_tick: int
    assignments: dict
    noise: tuple[Noise, ...] = ()


@dataclass
class Scenario:
    name: str
    schema: Schema
    derived: tuple[DerivedMetric, ...]
    utility_spec: UtilitySpec
    uncertainty: UncertaintyModel
    environment: tuple[Segment, ...]
    initial_controllables: dict
    engine_config: EngineConfig = field(default_factory=EngineConfig)
    seed: int = 0

    def compute_metrics(self, state: Mapping) -> dict:
        return compute_metrics(self, state)

    def engine(self, clock: Callable[[], float] = time.perf_counter) -> Engine:
        return Engine(self.schema, self.utility_spec, self.compute_metrics, self.uncertainty,
                      self.engine_config, clock=clock)

    def segment_at(self, tick: int) -> Segment:
        active = None
        for seg in self.environment:
            if seg.from_tick <= tick:
                active = seg
        if active is None:
            raise ScenarioError(f"no environment segment covers tick {tick}")
        return active


def compute_metrics(scenario: Scenario, state: Mapping) -> dict:
    """Raw state extended with every derived metric, in declaration order."""
    extended = dict(state)
    for metric in scenario.derived:
        extended[metric.name] = metric.node.evaluate(extended)
    return extended


def sim_step(scenario: Scenario, tick: int, controllables: Mapping) -> dict:
    """Observed state at ``tick``; noise is a pure function of (seed, tick)."""
    if tick < 0:
        raise ValueError("tick must be nonnegative")
    segment = scenario.segment_at(tick)
    state = {}
    for a in scenario.schema:
        state[a.name] = controllables[a.name] if a.controllable else segment.assignments[a.name]
    if segment.noise:
        rng = np.random.default_rng([scenario.seed & _SEED_MASK, tick])
        for n in segment.noise:
            attr = scenario.schema[n.attribute]
            value = state[n.attribute] + rng.uniform(-n.amplitude, n.amplitude)
            value = min(attr.max, max(attr.min, value))
            if attr.integer_valued:
                value = float(round(value))
            state[n.attribute] = float(value)
    return ensure_state(scenario.schema, state)


@dataclass
class TickRecord:
    tick: int
    state: dict
    derived: dict
    utility: float
    expected_utility: float
    classification: Classification
    triggered: bool = False
    provenance: str | None = None
    case_id: int | None = None
    threshold_met: bool | None = None
    eval_count: int | None = None
    elapsed: float | None = None
    kb_size: int = 0


def run_loop(scenario: Scenario, kb: KnowledgeBase | None, ticks: int,
             clock: Callable[[], float] = time.perf_counter):
    """Monitor, decide and act for ``ticks`` ticks.

    A response issued at tick t takes effect from tick t+1, and the case it
    came from is revised with the utility observed at t+1.
    Returns ``(records, kb)``.
    """
    schema, spec = scenario.schema, scenario.utility_spec
    engine = scenario.engine(clock)
    if kb is None:
        kb = KnowledgeBase.empty(schema)
    kb.check_schema(schema)
    controllables = dict(scenario.initial_controllables)
    pending = None
    records = []
    for tick in range(ticks):
        try:
            state = sim_step(scenario, tick, controllables)
            extended = compute_metrics(scenario, state)
            u = utility(spec, extended)
            eu = expected_utility(spec, scenario.compute_metrics, state, scenario.uncertainty,
                                  schema)
            if pending is not None:
                engine.revise(kb, pending, u)
                pending = None
            cls = threshold_check(eu, spec.threshold, spec.approach_margin)
            rec = TickRecord(tick, state, {m.name: extended[m.name] for m in scenario.derived},
                             u, eu, cls)
            if cls.triggers:
                response = engine.adapt(kb, AdaptationRequest(state, eu, tick))
                controllables = dict(response.solution)
                pending = response.provenance.case_id
                rec.triggered = True
                rec.provenance = response.provenance.kind
                rec.case_id = response.provenance.case_id
                rec.threshold_met = response.threshold_met
                rec.eval_count = response.eval_count
                rec.elapsed = response.elapsed
            rec.kb_size = len(kb)
        except (SaseError, ArithmeticError, ValueError) as exc:
            raise LoopError(tick, exc) from exc
        records.append(rec)
    return records, kb


# Scenario documents

_TOP_KEYS = {"name", "seed", "attributes", "derived", "utility", "uncertainty", "environment",
             "initial_controllables", "engine"}
_REQUIRED = {"name", "attributes", "utility", "environment", "initial_controllables"}
_ATTR_KEYS = {"name", "kind", "min", "max", "integer_valued", "unit", "allowed", "controllable",
              "similarity_weight"}


def _unknown(where, d, allowed, out):
    if not isinstance(d, dict):
        out.append(f"{where}: expected an object")
        return False
    for key in sorted(set(d) - allowed):
        out.append(f"{where}: unknown key {key!r}")
    return True


def scenario_from_dict(doc: Mapping) -> Scenario:
    """Build a Scenario, collecting every violation before raising ScenarioError."""
    errors: list[str] = []
    if not _unknown("scenario", doc, _TOP_KEYS, errors):
        raise ScenarioError(errors)
    for key in sorted(_REQUIRED - set(doc)):
        errors.append(f"scenario: missing section {key!r}")

    name = doc.get("name", "")
    if not isinstance(name, str) or not name:
        errors.append("scenario: name must be a nonempty string")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        errors.append("scenario: seed must be an integer")
        seed = 0

    schema = _load_schema(doc.get("attributes", []), errors)
    derived = _load_derived(doc.get("derived", []), schema, errors)
    known = (schema.names if schema else []) + [m.name for m in derived]
    spec = _load_utility(doc.get("utility", {}), known, errors)
    uncertainty = _load_uncertainty(doc.get("uncertainty", {}), schema, seed, errors)
    environment = _load_environment(doc.get("environment", []), schema, errors)
    initial = _load_initial(doc.get("initial_controllables", {}), schema, errors)
    engine_config = _load_engine(doc.get("engine", {}), errors)

    if errors:
        raise ScenarioError(errors)
    return Scenario(name, schema, tuple(derived), spec, uncertainty, tuple(environment), initial,
                    engine_config, seed)


def _load_schema(items, errors) -> Schema | None:
    if not isinstance(items, list) or not items:
        errors.append("attributes: expected a nonempty list")
        return None
    attrs, seen = [], set()
    for i, item in enumerate(items):
        where = f"attributes[{i}]"
        if not _unknown(where, item, _ATTR_KEYS, errors):
            continue
        label = item.get("name", "?")
        if label in seen:
            errors.append(f"{where}: duplicate attribute name {label}")
            continue
        seen.add(label)
        kwargs = dict(item)
        if "allowed" in kwargs:
            kwargs["allowed"] = tuple(kwargs["allowed"]) if isinstance(kwargs["allowed"], list) \
                else kwargs["allowed"]
        try:
            attrs.append(AttributeSchema(**kwargs))
        except (ConfigurationError, TypeError) as exc:
            errors.append(f"{where} ({label}): {exc}")
    if len(attrs) != len(items):
        return None
    schema = Schema(attrs)
    if not schema.controllables:
        errors.append("attributes: at least one attribute must be controllable")
    if sum(a.weight for a in schema) <= 0:
        errors.append("attributes: similarity weights must include a positive weight")
    return schema


def _load_derived(items, schema, errors) -> list[DerivedMetric]:
    if not isinstance(items, list):
        errors.append("derived: expected a list")
        return []
    out = []
    visible = {a.name for a in schema if a.is_numeric} if schema else set()
    categorical = {a.name for a in schema if not a.is_numeric} if schema else set()
    for i, item in enumerate(items):
        where = f"derived[{i}]"
        if not _unknown(where, item, {"name", "expression"}, errors):
            continue
        name, text = item.get("name"), item.get("expression")
        if not isinstance(name, str) or not IDENTIFIER.match(name):
            errors.append(f"{where}: invalid metric name {name!r}")
            continue
        if (schema and name in schema) or name in {m.name for m in out}:
            errors.append(f"{where}: metric name {name} clashes with an earlier name")
            continue
        if not isinstance(text, str):
            errors.append(f"{where} ({name}): expression must be a string")
            continue
        try:
            node = parse_expression(text)
        except ExpressionError as exc:
            errors.append(f"{where} ({name}): {exc}")
            continue
        for ref in references(node):
            if ref in categorical:
                errors.append(f"{where} ({name}): references categorical attribute {ref}")
            elif ref not in visible:
                errors.append(f"{where} ({name}): references unknown or later name {ref}")
        visible.add(name)
        out.append(DerivedMetric(name, text, node))
    return out


def _load_utility(d, known, errors) -> UtilitySpec | None:
    if not _unknown("utility", d, {"terms", "threshold", "approach_margin"}, errors):
        return None
    terms = []
    raw_terms = d.get("terms")
    if not isinstance(raw_terms, list) or not raw_terms:
        errors.append("utility: terms must be a nonempty list")
        raw_terms = []
    for i, t in enumerate(raw_terms):
        where = f"utility.terms[{i}]"
        if not _unknown(where, t, {"attribute", "curve", "weight"}, errors):
            continue
        attr = t.get("attribute")
        if attr not in known:
            errors.append(f"{where}: references unknown name {attr}")
        weight = t.get("weight", 1.0)
        if not isinstance(weight, (int, float)) or isinstance(weight, bool) \
                or not math.isfinite(weight) or weight <= 0:
            errors.append(f"{where}: weight must be a finite real > 0")
            continue
        try:
            curve = make_curve(t.get("curve", {}))
        except (ConfigurationError, TypeError) as exc:
            errors.append(f"{where}: {exc}")
            continue
        terms.append(UtilityTerm(attr, curve, float(weight)))
    try:
        return UtilitySpec(tuple(terms), d.get("threshold", 0.7), d.get("approach_margin", 0.05))
    except (ConfigurationError, TypeError) as exc:
        if terms:
            errors.append(f"utility: {exc}")
        return None


def _load_uncertainty(d, schema, seed, errors) -> UncertaintyModel:
    allowed = {"descriptors", "sample_count", "lok_grid_points", "seed"}
    if not _unknown("uncertainty", d, allowed, errors):
        return UncertaintyModel()
    descriptors = []
    for i, item in enumerate(d.get("descriptors", [])):
        where = f"uncertainty.descriptors[{i}]"
        if not _unknown(where, item, {"attribute", "location", "level", "nature"}, errors):
            continue
        try:
            descriptors.append(UncertaintyDescriptor(**item))
        except (ConfigurationError, TypeError, ValueError) as exc:
            errors.append(f"{where}: {exc}")
    try:
        model = UncertaintyModel.of(
            descriptors,
            sample_count=d.get("sample_count", 64),
            lok_grid_points=d.get("lok_grid_points", 3),
            seed=d.get("seed", seed),
        )
    except (ConfigurationError, TypeError) as exc:
        errors.append(f"uncertainty: {exc}")
        return UncertaintyModel()
    if schema:
        errors.extend(f"uncertainty: {v}" for v in model.violations(schema))
    return model


def _load_environment(items, schema, errors) -> list[Segment]:
    if not isinstance(items, list) or not items:
        errors.append("environment: expected a nonempty list of segments")
        return []
    segments = []
    for i, item in enumerate(items):
        where = f"environment[{i}]"
        if not _unknown(where, item, {"from_tick", "assignments", "noise"}, errors):
            continue
        start = item.get("from_tick")
        if not isinstance(start, int) or isinstance(start, bool) or start < 0:
            errors.append(f"{where}: from_tick must be a nonnegative integer")
            continue
        if segments and start <= segments[-1].from_tick:
            errors.append(f"{where}: from_tick must increase strictly")
        assignments = item.get("assignments", {})
        noise = []
        for j, n in enumerate(item.get("noise", [])):
            nwhere = f"{where}.noise[{j}]"
            if not _unknown(nwhere, n, {"attribute", "amplitude"}, errors):
                continue
            amp = n.get("amplitude")
            if not isinstance(amp, (int, float)) or isinstance(amp, bool) or amp < 0:
                errors.append(f"{nwhere}: amplitude must be a real >= 0")
                continue
            noise.append(Noise(n.get("attribute"), float(amp)))
        if schema:
            env = schema.environment
            for a in env:
                if a.name not in assignments:
                    errors.append(f"{where}: missing assignment for {a.name}")
                else:
                    problem = a.violation(assignments[a.name])
                    if problem:
                        errors.append(f"{where}: {problem}")
            for key in assignments:
                if key not in schema:
                    errors.append(f"{where}: unknown attribute {key}")
                elif schema[key].controllable:
                    errors.append(f"{where}: cannot assign controllable attribute {key}")
            for n in noise:
                if n.attribute not in schema or schema[n.attribute].controllable \
                        or not schema[n.attribute].is_numeric:
                    errors.append(f"{where}: noise needs a numeric environment attribute, "
                                  f"got {n.attribute}")
            assignments = {k: (schema[k].coerce(v) if k in schema else v)
                           for k, v in assignments.items()}
        segments.append(Segment(start, dict(assignments), tuple(noise)))
    if segments and segments[0].from_tick != 0:
        errors.append("environment: no segment covers tick 0")
    return segments


def _load_initial(d, schema, errors) -> dict:
    if not isinstance(d, dict):
        errors.append("initial_controllables: expected an object")
        return {}
    if schema:
        errors.extend(f"initial_controllables: {v}" for v in validate_solution(schema, d))
        return {k: schema[k].coerce(v) for k, v in d.items() if k in schema}
    return dict(d)


def _load_engine(d, errors) -> EngineConfig:
    allowed = {"beta", "alpha", "gamma", "grid_points_per_numeric", "max_passes", "satisficing",
               "exclude_failed"}
    if not _unknown("engine", d, allowed, errors):
        return EngineConfig()
    try:
        return EngineConfig(**d)
    except (ConfigurationError, TypeError) as exc:
        errors.append(f"engine: {exc}")
        return EngineConfig()


def load_scenario(path, seed: int | None = None) -> Scenario:
    """Load a scenario file; ``seed`` overrides the document's seed."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON: {exc}") from None
    if seed is not None and isinstance(doc, dict):
        doc = dict(doc, seed=seed)
    return scenario_from_dict(doc)


def builtin_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``"webservice-v1"``."""
    path = resources.files("sase") / "scenarios" / f"{name}.json"
    return Path(str(path))
