# One adaptation request answered twice: constructed first, then recalled.
from sase.model import AdaptationRequest, KnowledgeBase
from sase.runtime import builtin_scenario, load_scenario

scenario = load_scenario(builtin_scenario("webservice-v1"))
engine = scenario.engine()
kb = KnowledgeBase.empty(scenario.schema)

request = AdaptationRequest({"threads": 8.0, "cache_mb": 256.0, "arrival_rate": 800.0},
                            trigger_utility=0.56)

for attempt in (1, 2):
    resp = engine.adapt(kb, request)
    print(f"attempt {attempt}: {resp.provenance.kind} case {resp.provenance.case_id}, "
          f"solution {resp.solution}, EU {resp.predicted_utility:.4f}, "
          f"evaluations {resp.eval_count}")

# a nearby request (similar arrival rate) also reuses the case
near = AdaptationRequest({"threads": 8.0, "cache_mb": 256.0, "arrival_rate": 780.0}, 0.56)
resp = engine.adapt(kb, near)
print("nearby request:", resp.provenance.kind, resp.provenance.case_id)

print(kb.serialize().decode())
