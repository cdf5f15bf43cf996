"""Run-time uncertainty: per-attribute descriptors and expected utility.

An attribute's uncertainty has a *location* (recorded only), a *level* in
[0, 1] that widens a perturbation interval around the observed value, and a
*nature*. Variability is averaged over seeded uniform samples; lack of
knowledge is treated pessimistically as the minimum over a small grid.
"""
from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, InsufficientData, UnsupportedAttribute
from .model import AttributeSchema, Schema
from .quality import UtilitySpec, utility

_SEED_MASK = (1 << 64) - 1


class Location(str, Enum):
    MONITORING = "monitoring"
    ENVIRONMENT = "environment"
    INTERNAL_MODEL = "internal_model"


class Nature(str, Enum):
    VARIABILITY = "variability"
    LACK_OF_KNOWLEDGE = "lack_of_knowledge"


@dataclass(frozen=True)
class UncertaintyDescriptor:
    attribute: str
    location: Location = Location.ENVIRONMENT
    level: float = 0.0
    nature: Nature = Nature.VARIABILITY

    def __post_init__(self):
        object.__setattr__(self, "location", Location(self.location))
        object.__setattr__(self, "nature", Nature(self.nature))
        if not 0.0 <= self.level <= 1.0:
            raise ConfigurationError(f"{self.attribute}: uncertainty level must lie in [0, 1]")


@dataclass(frozen=True)
class UncertaintyModel:
    descriptors: Mapping[str, UncertaintyDescriptor] = field(default_factory=dict)
    sample_count: int = 64
    lok_grid_points: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ConfigurationError("sample_count must be >= 1")
        if self.lok_grid_points < 2:
            raise ConfigurationError("lok_grid_points must be >= 2")
        for name, d in self.descriptors.items():
            if d.attribute != name:
                raise ConfigurationError(f"descriptor for {d.attribute} filed under {name}")

    @classmethod
    def of(cls, descriptors: Iterable[UncertaintyDescriptor], **kwargs) -> "UncertaintyModel":
        by_name = {}
        for d in descriptors:
            if d.attribute in by_name:
                raise ConfigurationError(f"more than one descriptor for {d.attribute}")
            by_name[d.attribute] = d
        return cls(by_name, **kwargs)

    def violations(self, schema: Schema) -> list[str]:
        out = []
        for name in self.descriptors:
            if name not in schema:
                out.append(f"uncertainty descriptor for unknown attribute {name}")
            elif not schema[name].is_numeric:
                out.append(f"uncertainty descriptor for categorical attribute {name}")
        return out


def perturbation_interval(descriptor: UncertaintyDescriptor, attribute: AttributeSchema,
                          value: float) -> tuple[float, float]:
    if not attribute.is_numeric:
        raise UnsupportedAttribute(f"{attribute.name}: categorical uncertainty is not supported")
    half = descriptor.level * attribute.span / 2.0
    return max(attribute.min, value - half), min(attribute.max, value + half)


def expected_utility(spec: UtilitySpec, metric_fn: Callable[[dict], Mapping], state: Mapping,
                     model: UncertaintyModel, schema: Schema) -> float:
    """Utility of ``state`` aggregated over the uncertainty model.

    Zero-width intervals are dropped, so a model whose levels are all zero
    returns exactly ``utility(spec, metric_fn(state))``.
    """
    variability, lok = [], []
    for index, attr in enumerate(schema):
        d = model.descriptors.get(attr.name)
        if d is None:
            continue
        lo, hi = perturbation_interval(d, attr, state[attr.name])
        if lo == hi:
            continue
        entry = (index, attr.name, lo, hi)
        (lok if d.nature is Nature.LACK_OF_KNOWLEDGE else variability).append(entry)

    if not variability and not lok:
        return utility(spec, metric_fn(dict(state)))

    axes = [np.linspace(lo, hi, model.lok_grid_points) for _, _, lo, hi in lok]
    worst = math.inf
    for grid_index, point in enumerate(itertools.product(*axes)):
        base = dict(state)
        for (_, name, _, _), x in zip(lok, point):
            base[name] = float(x)
        worst = min(worst, _mean_over_samples(spec, metric_fn, base, variability, model, grid_index))
    return worst


def _mean_over_samples(spec, metric_fn, base, variability: Sequence, model: UncertaintyModel,
                       grid_index: int) -> float:
    if not variability:
        return utility(spec, metric_fn(base))
    seed = model.seed & _SEED_MASK
    # One stream per attribute so adding or removing a descriptor leaves the
    # other attributes' samples unchanged.
    columns = [
        np.random.default_rng([seed, grid_index, index]).uniform(lo, hi, model.sample_count)
        for index, _, lo, hi in variability
    ]
    values = []
    for k in range(model.sample_count):
        s = dict(base)
        for (_, name, _, _), col in zip(variability, columns):
            s[name] = float(col[k])
        values.append(utility(spec, metric_fn(s)))
    return math.fsum(values) / model.sample_count


def quantify_level_from_trace(observations: Sequence[float], attribute: AttributeSchema) -> float:
    """Estimate an uncertainty level from a window of recent observations."""
    if len(observations) < 2:
        raise InsufficientData("need at least two observations to quantify a level")
    if not attribute.is_numeric:
        raise UnsupportedAttribute(f"{attribute.name}: categorical uncertainty is not supported")
    spread = statistics.pstdev(float(x) for x in observations)
    return min(1.0, max(0.0, 4.0 * spread / attribute.span))
