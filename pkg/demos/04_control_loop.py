# The monitor/adapt loop over the arrival-rate step at tick 50.
from sase.runtime import builtin_scenario, load_scenario, run_loop

scenario = load_scenario(builtin_scenario("webservice-v1"))
records, kb = run_loop(scenario, None, 101)

for r in records[47:56]:
    flag = f"-> {r.provenance} case {r.case_id} ({r.eval_count} evals)" if r.triggered else ""
    print(f"tick {r.tick:3d}  rate {r.state['arrival_rate']:5.0f}  threads {r.state['threads']:4.0f}"
          f"  U {r.utility:.3f}  {r.classification.value:11s} {flag}")

print("cases after first run:", len(kb), [c.outcome.status.value for c in kb])

# same scenario again, starting from what was learned
records, kb = run_loop(scenario, kb, 101)
(hit,) = [r for r in records if r.triggered]
print(f"second run: tick {hit.tick} {hit.provenance} case {hit.case_id}, {hit.eval_count} eval")
