# How uncertainty about the environment lowers expected utility.
import numpy as np

from sase.model import AttributeSchema, Schema
from sase.quality import Target, UtilitySpec, UtilityTerm, utility
from sase.uncertainty import (
    UncertaintyDescriptor,
    UncertaintyModel,
    expected_utility,
    quantify_level_from_trace,
)

x = AttributeSchema.numeric("x", 0, 20)
schema = Schema([x, AttributeSchema.numeric("knob", 0, 1, controllable=True)])
tent = UtilitySpec((UtilityTerm("x", Target(10, 5), 1.0),), threshold=0.5)
state = {"x": 10.0, "knob": 0.5}

print("no uncertainty:", utility(tent, state))
for nature in ("variability", "lack_of_knowledge"):
    for level in (0.0, 0.1, 0.2, 0.4):
        model = UncertaintyModel.of(
            [UncertaintyDescriptor("x", "environment", level, nature)], seed=1)
        eu = expected_utility(tent, dict, state, model, schema)
        print(f"{nature:18s} level={level:.1f}  EU={eu:.4f}")

# estimate a level from an observed trace
rng = np.random.default_rng(3)
trace = 10 + rng.normal(0, 1.0, size=200)
print("estimated level from trace:", round(quantify_level_from_trace(trace.tolist(), x), 3))
