"""Case-based adaptation engine.

``Engine.adapt`` retrieves ranked cases, keeps those whose similarity is at
least ``beta`` (the qualified adaptation frame), and answers with the most
expedient one. With an empty frame it builds a new solution by coordinate
ascent on expected utility and retains it in the knowledge base.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .errors import CaseNotFound, ConfigurationError, ContractViolation
from .model import (
    AdaptationRequest,
    AdaptationResponse,
    Case,
    KnowledgeBase,
    Outcome,
    Provenance,
    Schema,
    Source,
    Status,
    controllables_of,
    ensure_state,
    merge_solution,
    validate_solution,
)
from .quality import SimilarityConfig, UtilitySpec, similarity
from .uncertainty import UncertaintyModel, expected_utility


@dataclass(frozen=True)
class EngineConfig:
    beta: float = 0.8
    alpha: float = 0.5
    gamma: float = 0.98
    grid_points_per_numeric: int = 17
    max_passes: int = 10
    satisficing: bool = True
    exclude_failed: bool = True

    def __post_init__(self):
        for name in ("beta", "alpha", "gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"engine {name} must lie in [0, 1]")
        for name in ("grid_points_per_numeric", "max_passes"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigurationError(f"engine {name} must be an integer >= 1")


@dataclass(frozen=True)
class RankedCase:
    case: Case
    sim: float


class Retained(NamedTuple):
    merged: bool
    case_id: int


def build_qaf(ranked: list[RankedCase], beta: float) -> list[RankedCase]:
    """Cases whose similarity lies in the closed interval [beta, 1]."""
    return [r for r in ranked if r.sim >= beta]


def blend(alpha: float, sim: float, eu: float) -> float:
    return min(1.0, max(0.0, alpha * sim + (1.0 - alpha) * eu))


class Engine:
    """Adaptation engine bound to one schema, utility spec and metric function.

    ``metric_fn`` maps a full state to the extended state (raw attributes plus
    derived metrics) that the utility spec is evaluated on.
    """

    def __init__(self, schema: Schema, utility_spec: UtilitySpec,
                 metric_fn: Callable[[dict], Mapping] | None = None,
                 uncertainty: UncertaintyModel | None = None,
                 config: EngineConfig | None = None,
                 clock: Callable[[], float] = time.perf_counter):
        if not schema.controllables:
            raise ConfigurationError("schema has no controllable attributes")
        self.schema = schema
        self.utility_spec = utility_spec
        self.metric_fn = metric_fn or dict
        self.uncertainty = uncertainty or UncertaintyModel()
        self.config = config or EngineConfig()
        self.similarity_config = SimilarityConfig(schema)
        self.clock = clock
        self._grids = {a.name: self._grid(a) for a in schema.controllables}

    def _grid(self, attribute) -> list:
        if not attribute.is_numeric:
            return list(attribute.allowed)
        points = np.linspace(attribute.min, attribute.max, self.config.grid_points_per_numeric)
        if attribute.integer_valued:
            points = np.rint(points)
        grid = []
        for p in points.tolist():
            if p not in grid:
                grid.append(float(p))
        return grid

    @property
    def satisfice_level(self) -> float:
        return self.utility_spec.threshold + self.utility_spec.approach_margin

    def solution_utility(self, state: Mapping, solution: Mapping) -> float:
        """Expected utility of ``state`` after applying ``solution``."""
        merged = merge_solution(self.schema, state, solution)
        return expected_utility(self.utility_spec, self.metric_fn, merged, self.uncertainty,
                                self.schema)

    def retrieve(self, kb: KnowledgeBase, request: AdaptationRequest) -> list[RankedCase]:
        kb.check_schema(self.schema)
        ranked = [
            RankedCase(c, similarity(self.similarity_config, request.state, c.problem))
            for c in kb
            if not (self.config.exclude_failed and c.outcome.status is Status.FAILED)
        ]
        ranked.sort(key=lambda r: (-r.sim, r.case.id))
        return ranked

    def case_expediency(self, ranked_case: RankedCase, request: AdaptationRequest) -> float:
        eu = self.solution_utility(request.state, ranked_case.case.solution)
        return blend(self.config.alpha, ranked_case.sim, eu)

    def select_response(self, qaf: list[RankedCase], request: AdaptationRequest,
                        started: float | None = None) -> AdaptationResponse:
        if not qaf:
            raise ContractViolation("select_response needs a nonempty qualified adaptation frame")
        best = None
        for r in qaf:
            eu = self.solution_utility(request.state, r.case.solution)
            ce = blend(self.config.alpha, r.sim, eu)
            key = (ce, -r.case.id)
            if best is None or key > best[0]:
                best = (key, r, eu)
        _, chosen, eu = best
        chosen.case.use_count += 1
        return AdaptationResponse(
            solution=dict(chosen.case.solution),
            predicted_utility=eu,
            provenance=Provenance("reused", chosen.case.id),
            threshold_met=eu > self.utility_spec.threshold,
            eval_count=len(qaf),
            elapsed=self._since(started),
        )

    def constructive_adapt(self, request: AdaptationRequest, ranked: list[RankedCase]):
        """Coordinate ascent over the controllable grids.

        Returns ``(solution, expected_utility, eval_count)``. Ties keep the
        current value, so a pass without strict improvement ends the search.
        """
        controllables = self.schema.controllables
        if ranked:
            current = dict(ranked[0].case.solution)
        else:
            current = controllables_of(self.schema, request.state)
        memo = {}

        def score(candidate):
            key = tuple(candidate[a.name] for a in controllables)
            if key not in memo:
                memo[key] = self.solution_utility(request.state, candidate)
            return memo[key]

        best = score(current)
        satisficing = self.config.satisficing
        if satisficing and best > self.satisfice_level:
            return current, best, len(memo)

        for _ in range(self.config.max_passes):
            changed = False
            for attr in controllables:
                best_value = current[attr.name]
                for value in self._grids[attr.name]:
                    u = score({**current, attr.name: value})
                    if u > best:
                        best, best_value = u, value
                        if satisficing and best > self.satisfice_level:
                            current[attr.name] = best_value
                            return current, best, len(memo)
                if best_value != current[attr.name]:
                    current[attr.name] = best_value
                    changed = True
            if not changed:
                break
        return current, best, len(memo)

    def retain(self, kb: KnowledgeBase, request: AdaptationRequest, solution: Mapping,
               predicted_utility: float) -> Retained:
        kb.check_schema(self.schema)
        problems = validate_solution(self.schema, solution)
        if problems:
            raise ContractViolation("; ".join(problems))
        nearest, nearest_sim = None, -1.0
        for c in kb:
            s = similarity(self.similarity_config, request.state, c.problem)
            if s > nearest_sim:
                nearest, nearest_sim = c, s
        if nearest is not None and nearest_sim >= self.config.gamma \
                and nearest.solution == dict(solution):
            nearest.use_count += 1
            return Retained(True, nearest.id)
        new_id = kb.insert(
            Case(
                problem=dict(request.state),
                solution=dict(solution),
                predicted_utility=predicted_utility,
                outcome=Outcome(),
                source=Source.CONSTRUCTED,
            ),
            self.schema,
        )
        return Retained(False, new_id)

    def revise(self, kb: KnowledgeBase, case_id: int, realized_utility: float) -> Outcome:
        case = kb.get(case_id)
        if case is None:
            raise CaseNotFound(case_id)
        if not 0.0 <= realized_utility <= 1.0:
            raise ContractViolation(f"realized utility outside [0, 1]: {realized_utility}")
        confirmed = realized_utility > self.utility_spec.threshold
        case.outcome = Outcome(Status.CONFIRMED if confirmed else Status.FAILED,
                               float(realized_utility))
        return case.outcome

    def adapt(self, kb: KnowledgeBase, request: AdaptationRequest) -> AdaptationResponse:
        started = self.clock()
        kb.check_schema(self.schema)
        request = AdaptationRequest(ensure_state(self.schema, request.state),
                                    request.trigger_utility, request.tick)
        ranked = self.retrieve(kb, request)
        qaf = build_qaf(ranked, self.config.beta)
        if qaf:
            return self.select_response(qaf, request, started)
        solution, eu, evals = self.constructive_adapt(request, ranked)
        _, case_id = self.retain(kb, request, solution, eu)
        return AdaptationResponse(
            solution=solution,
            predicted_utility=eu,
            provenance=Provenance("constructed", case_id),
            threshold_met=eu > self.utility_spec.threshold,
            eval_count=evals,
            elapsed=self._since(started),
        )

    def _since(self, started):
        return 0.0 if started is None else self.clock() - started
