import random

import pytest

from sase.errors import InsufficientData, UnsupportedAttribute
from sase.model import AttributeSchema, Schema
from sase.quality import LinearDec, LinearInc, Step, Target, UtilitySpec, UtilityTerm, utility
from sase.uncertainty import (
    Nature,
    UncertaintyDescriptor,
    UncertaintyModel,
    expected_utility,
    perturbation_interval,
    quantify_level_from_trace,
)

PCT = AttributeSchema.numeric("load", 0, 100)
X = AttributeSchema.numeric("x", 0, 20)
X_SCHEMA = Schema([X, AttributeSchema.numeric("k", 0, 1, controllable=True)])
TENT = UtilitySpec((UtilityTerm("x", Target(10, 5), 1.0),), 0.5)


def desc(name, level, nature="variability", location="environment"):
    return UncertaintyDescriptor(name, location, level, nature)


def tent_integral(peak, tol, lo, hi):
    """Closed-form mean of max(0, 1 - |x - peak| / tol) over [lo, hi] inside the support."""
    def antiderivative(x):
        u = x - peak
        return x - (u * abs(u)) / (2 * tol)
    return (antiderivative(hi) - antiderivative(lo)) / (hi - lo)


@pytest.mark.parametrize("value, level, expected", [
    (50, 0.2, (40, 60)),
    (50, 0.0, (50, 50)),
    (5, 0.2, (0, 15)),
])
def test_perturbation_interval(value, level, expected):
    assert perturbation_interval(desc("load", level), PCT, value) == expected


def test_perturbation_interval_categorical():
    mode = AttributeSchema.categorical("mode", ["a", "b"])
    with pytest.raises(UnsupportedAttribute):
        perturbation_interval(desc("mode", 0.1), mode, "a")


def test_empty_model_is_exact():
    state = {"x": 9.3, "k": 0.5}
    assert expected_utility(TENT, dict, state, UncertaintyModel(), X_SCHEMA) == utility(TENT, state)


def test_zero_levels_are_exact():
    state = {"x": 9.3, "k": 0.5}
    model = UncertaintyModel.of([desc("x", 0.0), desc("k", 0.0, "lack_of_knowledge")])
    assert expected_utility(TENT, dict, state, model, X_SCHEMA) == utility(TENT, state)


def test_tent_analytic_mean():
    assert tent_integral(10, 5, 8, 12) == pytest.approx(0.8)
    model = UncertaintyModel.of([desc("x", 0.2)], sample_count=64, seed=11)
    eu = expected_utility(TENT, dict, {"x": 10.0, "k": 0.0}, model, X_SCHEMA)
    assert abs(eu - 0.8) <= 0.02


def test_deterministic_for_same_seed():
    model = UncertaintyModel.of([desc("x", 0.3)], seed=99)
    a = expected_utility(TENT, dict, {"x": 11.0, "k": 0.0}, model, X_SCHEMA)
    b = expected_utility(TENT, dict, {"x": 11.0, "k": 0.0}, model, X_SCHEMA)
    assert a == b


def test_lack_of_knowledge_takes_worst_grid_point():
    model = UncertaintyModel.of([desc("x", 0.2, "lack_of_knowledge")], lok_grid_points=3)
    # grid {8, 10, 12} on the tent: min is 0.6 at either edge
    eu = expected_utility(TENT, dict, {"x": 10.0, "k": 0.0}, model, X_SCHEMA)
    assert eu == pytest.approx(0.6)


def test_location_does_not_change_computation():
    state = {"x": 10.5, "k": 0.0}
    values = {
        loc: expected_utility(TENT, dict, state,
                              UncertaintyModel.of([desc("x", 0.2, location=loc)], seed=3),
                              X_SCHEMA)
        for loc in ("monitoring", "environment", "internal_model")
    }
    assert len(set(values.values())) == 1


def test_level_monotone_at_tent_peak():
    state = {"x": 10.0, "k": 0.0}
    previous = 1.0
    for step in range(11):
        level = step * 0.05
        eu = expected_utility(TENT, dict, state, UncertaintyModel.of([desc("x", level)], seed=5),
                              X_SCHEMA)
        assert eu <= previous + 0.02
        previous = eu


def test_jensen_on_concave_tent():
    rng = random.Random(2024)
    for _ in range(30):
        peak = rng.uniform(6, 14)
        tol = rng.uniform(3, 6)
        x = rng.uniform(peak - tol / 3, peak + tol / 3)
        # keep the interval inside the tent support and the attribute range
        max_half = min(peak + tol - x, x - (peak - tol), x, 20 - x) * 0.95
        level = rng.uniform(0.01, max_half / 10)
        spec = UtilitySpec((UtilityTerm("x", Target(peak, tol), 1.0),), 0.5)
        model = UncertaintyModel.of([desc("x", level)], seed=rng.randrange(2**32))
        state = {"x": x, "k": 0.0}
        assert expected_utility(spec, dict, state, model, X_SCHEMA) <= utility(spec, state) + 0.02


def random_fixture(rng):
    """Three numeric attributes, one separable utility term each, all variability."""
    attrs, terms, state, descriptors = [], [], {}, []
    for i in range(3):
        lo = rng.uniform(-50, 50)
        hi = lo + rng.uniform(1, 100)
        name = f"a{i}"
        attrs.append(AttributeSchema.numeric(name, lo, hi))
        span = hi - lo
        kind = rng.choice(["inc", "dec", "target", "step"])
        a, b = sorted(rng.uniform(lo, hi) for _ in range(2))
        b = max(b, a + 1e-3)
        curve = {
            "inc": LinearInc(a, b),
            "dec": LinearDec(a, b),
            "target": Target(rng.uniform(lo, hi), rng.uniform(0.05, 0.6) * span),
            "step": Step(rng.uniform(lo, hi), rng.choice(["above", "below"])),
        }[kind]
        terms.append(UtilityTerm(name, curve, rng.uniform(0.1, 1.0)))
        state[name] = rng.uniform(lo, hi)
        descriptors.append(desc(name, rng.uniform(0.0, 0.3)))
    attrs.append(AttributeSchema.numeric("knob", 0, 1, controllable=True))
    state["knob"] = 0.5
    return Schema(attrs), UtilitySpec(tuple(terms), 0.5), state, descriptors


def pessimism_gap(seed):
    rng = random.Random(seed)
    schema, spec, state, descriptors = random_fixture(rng)
    model_seed = rng.randrange(2**63)
    var = UncertaintyModel.of(descriptors, seed=model_seed)
    j = rng.randrange(len(descriptors))
    converted = list(descriptors)
    converted[j] = UncertaintyDescriptor(descriptors[j].attribute, descriptors[j].location,
                                         descriptors[j].level, Nature.LACK_OF_KNOWLEDGE)
    lok = UncertaintyModel.of(converted, seed=model_seed)
    return (expected_utility(spec, dict, state, lok, schema)
            - expected_utility(spec, dict, state, var, schema))


@pytest.mark.parametrize("seed", range(50))
def test_nature_pessimism(seed):
    assert pessimism_gap(seed) <= 0.02


def test_quantify_level_examples():
    assert quantify_level_from_trace([5, 5, 5], PCT) == 0.0
    assert quantify_level_from_trace([40, 60, 40, 60], PCT) == pytest.approx(0.4)
    assert quantify_level_from_trace([0, 100, 0, 100], PCT) == 1.0
    with pytest.raises(InsufficientData):
        quantify_level_from_trace([1.0], PCT)
