# Similarity between states and the utility of a configuration.
from sase.quality import SimilarityConfig, similarity, utility
from sase.runtime import builtin_scenario, load_scenario

scenario = load_scenario(builtin_scenario("webservice-v1"))
schema = scenario.schema

for attr in schema:
    print(attr.name, attr.min, attr.max, "controllable" if attr.controllable else "")

# controllables carry weight 0, so only arrival_rate counts
cfg = SimilarityConfig(schema)
a = {"threads": 8.0, "cache_mb": 256.0, "arrival_rate": 800.0}
b = {"threads": 64.0, "cache_mb": 0.0, "arrival_rate": 700.0}
print("sim(a, b) =", similarity(cfg, a, b))
print("sim(a, a) =", similarity(cfg, a, a))

print()
print("threads  cache   resp_time  cost   utility")
for threads in (8, 16, 32, 64):
    for cache in (0, 512):
        state = {"threads": float(threads), "cache_mb": float(cache), "arrival_rate": 800.0}
        ext = scenario.compute_metrics(state)
        u = utility(scenario.utility_spec, ext)
        print(f"{threads:7d} {cache:6d} {ext['resp_time']:10.3f} {ext['cost']:6.3f}   {u:.4f}")
