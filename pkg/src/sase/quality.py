"""Similarity between states, utility of states, and threshold classification."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence, Union

from .errors import ConfigurationError, ContractViolation
from .model import AttributeSchema, Schema


def local_similarity(attribute: AttributeSchema, v1, v2) -> float:
    for v in (v1, v2):
        problem = attribute.violation(v)
        if problem:
            raise ContractViolation(problem)
    if attribute.is_numeric:
        return min(1.0, max(0.0, 1.0 - abs(v1 - v2) / attribute.span))
    return 1.0 if v1 == v2 else 0.0


class SimilarityConfig:
    """Normalized similarity weights taken from the schema."""

    def __init__(self, schema: Schema):
        total = sum(a.weight for a in schema)
        if total <= 0:
            raise ConfigurationError("similarity needs at least one positively weighted attribute")
        self.schema = schema
        self.total = total
        self.raw = {a.name: a.weight for a in schema if a.weight > 0}
        self.weights = {name: w / total for name, w in self.raw.items()}

    def __repr__(self):
        return f"SimilarityConfig({self.weights})"


def similarity(config: SimilarityConfig, a: Mapping, b: Mapping) -> float:
    # Divide once at the end so identical states score exactly 1.0.
    acc = 0.0
    for name, w in config.raw.items():
        acc += w * local_similarity(config.schema[name], a[name], b[name])
    return min(1.0, max(0.0, acc / config.total))


# Utility curves. Each is a callable mapping a finite real to [0, 1].

@dataclass(frozen=True)
class LinearInc:
    lo: float
    hi: float
    kind = "linear_inc"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError(f"{self.kind} requires lo < hi")

    def __call__(self, x: float) -> float:
        if x <= self.lo:
            return 0.0
        if x >= self.hi:
            return 1.0
        return (x - self.lo) / (self.hi - self.lo)

    def params(self):
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class LinearDec(LinearInc):
    kind = "linear_dec"

    def __call__(self, x: float) -> float:
        if x <= self.lo:
            return 1.0
        if x >= self.hi:
            return 0.0
        return (self.hi - x) / (self.hi - self.lo)


@dataclass(frozen=True)
class Target:
    peak: float
    tolerance: float
    kind = "target"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigurationError("target requires tolerance > 0")

    def __call__(self, x: float) -> float:
        return max(0.0, 1.0 - abs(x - self.peak) / self.tolerance)

    def params(self):
        return {"peak": self.peak, "tolerance": self.tolerance}


@dataclass(frozen=True)
class Step:
    threshold: float
    high_side: str = "above"
    kind = "step"

    def __post_init__(self):
        if self.high_side not in ("above", "below"):
            raise ConfigurationError("step high_side must be 'above' or 'below'")

    def __call__(self, x: float) -> float:
        if self.high_side == "above":
            return 1.0 if x >= self.threshold else 0.0
        return 1.0 if x <= self.threshold else 0.0

    def params(self):
        return {"threshold": self.threshold, "high_side": self.high_side}


UtilityCurve = Union[LinearInc, LinearDec, Target, Step]
CURVES = {c.kind: c for c in (LinearInc, LinearDec, Target, Step)}


def make_curve(spec: Mapping) -> UtilityCurve:
    """Build a curve from ``{"kind": ..., **params}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in CURVES:
        raise ConfigurationError(f"unknown curve kind {kind!r}")
    try:
        return CURVES[kind](**spec)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {kind} curve: {exc}") from None


def curve_eval(curve: UtilityCurve, x: float) -> float:
    return curve(x)


@dataclass(frozen=True)
class UtilityTerm:
    attribute: str
    curve: UtilityCurve
    weight: float


@dataclass(frozen=True)
class UtilitySpec:
    """Weighted sum of per-attribute utility curves plus the threshold UT.

    ``approach_margin`` is the band above the threshold that already counts
    as approaching it.
    """

    terms: tuple[UtilityTerm, ...]
    threshold: float
    approach_margin: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ConfigurationError("utility spec has no terms")
        if any(not (t.weight > 0 and math.isfinite(t.weight)) for t in self.terms):
            raise ConfigurationError("utility term weights must be finite and > 0")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigurationError("utility threshold must lie in (0, 1)")
        if not self.approach_margin >= 0:
            raise ConfigurationError("approach margin must be >= 0")

    @property
    def weights(self) -> list[float]:
        total = sum(t.weight for t in self.terms)
        return [t.weight / total for t in self.terms]

    @property
    def referenced(self) -> list[str]:
        return [t.attribute for t in self.terms]


def utility(spec: UtilitySpec, extended_state: Mapping) -> float:
    acc = total = 0.0
    for term in spec.terms:
        try:
            x = extended_state[term.attribute]
        except KeyError:
            raise ContractViolation(f"utility references unbound name {term.attribute}") from None
        acc += term.weight * term.curve(x)
        total += term.weight
    return min(1.0, max(0.0, acc / total))


class Classification(str, Enum):
    OK = "ok"
    APPROACHING = "approaching"
    BREACHED = "breached"

    @property
    def triggers(self) -> bool:
        return self is not Classification.OK


def threshold_check(u: float, threshold: float, margin: float) -> Classification:
    if u < threshold:
        return Classification.BREACHED
    if u < threshold + margin:
        return Classification.APPROACHING
    return Classification.OK


def check_references(spec: UtilitySpec, names: Sequence[str]) -> list[str]:
    known = set(names)
    return [f"utility references unknown name {n}" for n in spec.referenced if n not in known]
