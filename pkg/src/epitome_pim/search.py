"""Evolutionary layer-wise epitome design under a crossbar budget."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import EvaluationError, SearchSpaceTooLarge

Combination = tuple[int, ...]


@dataclass(frozen=True)
class Evaluation:
    latency: float
    energy: float
    crossbars: int

    def objective(self, which: str) -> float:
        if which == "latency":
            return self.latency
        if which == "energy":
            return self.energy
        raise ValueError(f"objective must be 'latency' or 'energy', got {which!r}")


Evaluator = Callable[[Combination], Evaluation]


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 16
    max_iterations: int = 50
    parent_count: int | None = None
    mutation_rate: float = 0.2
    seed: int = 0
    objective: str = "latency"
    budget: int = 0

    def __post_init__(self):
        parents = self.parents
        if not self.population_size >= parents >= 1:
            raise ValueError("need population_size >= parent_count >= 1")
        if not 0 < self.mutation_rate <= 1:
            raise ValueError("mutation_rate must lie in (0, 1]")
        if self.objective not in ("latency", "energy"):
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def parents(self) -> int:
        return self.parent_count if self.parent_count is not None else max(1, self.population_size // 2)


def reward(combo: Combination, evaluator: Evaluator, budget: int, objective: str = "latency") -> float:
    ev = evaluator(combo)
    return reward_of(ev, budget, objective)


def reward_of(ev: Evaluation, budget: int, objective: str) -> float:
    value = ev.objective(objective)
    if value <= 0:
        raise EvaluationError(f"objective {objective} must be positive, got {value}")
    gate = 0.0 if ev.crossbars > budget else 1.0
    return gate / value


class Memo:
    """Caches evaluator results per combination."""

    def __init__(self, evaluator: Evaluator):
        self.evaluator = evaluator
        self.cache: dict[Combination, Evaluation] = {}

    def __call__(self, combo: Combination) -> Evaluation:
        combo = tuple(combo)
        if combo not in self.cache:
            self.cache[combo] = self.evaluator(combo)
        return self.cache[combo]


@dataclass(frozen=True)
class Scored:
    combo: Combination
    evaluation: Evaluation
    reward: float

    def rank_key(self):
        # descending reward, then fewer crossbars, then lexicographic combination
        return (-self.reward, self.evaluation.crossbars, self.combo)


@dataclass
class SearchResult:
    best: Scored | None
    history: list[dict] = field(default_factory=list)
    evaluations: int = 0

    @property
    def feasible(self) -> bool:
        return self.best is not None


def _score(combo, memo, config) -> Scored:
    ev = memo(combo)
    return Scored(tuple(combo), ev, reward_of(ev, config.budget, config.objective))


def _check_candidates(candidates: Sequence[Sequence]) -> list[int]:
    sizes = [len(c) for c in candidates]
    if not sizes or min(sizes) < 1:
        raise ValueError("every layer needs at least one candidate")
    return sizes


def evolve(config: SearchConfig, candidates: Sequence[Sequence], evaluator: Evaluator) -> SearchResult:
    sizes = _check_candidates(candidates)
    rng = random.Random(config.seed)
    memo = evaluator if isinstance(evaluator, Memo) else Memo(evaluator)

    def sample() -> Combination:
        return tuple(rng.randrange(n) for n in sizes)

    def mutate(parent: Combination) -> Combination:
        return tuple(rng.randrange(n) if rng.random() < config.mutation_rate else g
                     for g, n in zip(parent, sizes))

    space = math.prod(sizes)

    def novel(draw, population, attempts=20) -> Combination:
        # redraw combinations already in the population or already evaluated;
        # a mutation that keeps colliding falls back to a fresh sample
        combo = draw()
        if len(memo.cache) >= space:
            return combo
        taken = set(population)
        for i in range(2 * attempts):
            if combo not in taken and combo not in memo.cache:
                break
            combo = draw() if i < attempts else sample()
        return combo

    population = [sample() for _ in range(config.population_size)]
    best: Scored | None = None
    history = []
    for generation in range(config.max_iterations):
        scored = [_score(c, memo, config) for c in population]
        feasible = [s for s in scored if s.reward > 0]
        unique = {s.combo: s for s in feasible}
        ranked = sorted(unique.values(), key=Scored.rank_key)
        if ranked and (best is None or ranked[0].rank_key() < best.rank_key()):
            best = ranked[0]
        history.append({
            "generation": generation,
            "best_reward": best.reward if best else 0.0,
            "best_crossbars": best.evaluation.crossbars if best else "",
            "best_objective_value": best.evaluation.objective(config.objective) if best else "",
            "population_feasible_count": len(feasible),
        })
        parents = [s.combo for s in ranked[:config.parents]]
        population = list(parents)
        for p in parents:
            population.append(novel(lambda: mutate(p), population))
        # refill with fresh samples when too few feasible parents survive
        while len(population) < config.population_size:
            population.append(novel(sample, population))
    return SearchResult(best, history, len(memo.cache))


def exhaustive_best(candidates: Sequence[Sequence], evaluator: Evaluator, budget: int,
                    objective: str = "latency", cap: int = 10 ** 6) -> SearchResult:
    sizes = _check_candidates(candidates)
    space = math.prod(sizes)
    if space > cap:
        raise SearchSpaceTooLarge(f"{space} combinations exceed the enumeration cap {cap}")
    memo = evaluator if isinstance(evaluator, Memo) else Memo(evaluator)
    config = SearchConfig(population_size=1, objective=objective, budget=budget)
    best = None
    for combo in itertools.product(*(range(n) for n in sizes)):
        s = _score(combo, memo, config)
        if s.reward > 0 and (best is None or s.rank_key() < best.rank_key()):
            best = s
    return SearchResult(best, [], len(memo.cache))


class AdditiveEvaluator:
    """Evaluator for networks whose latency, energy and crossbars add up over
    layers; per-(layer, choice) costs are computed once by ``layer_cost``."""

    def __init__(self, layer_cost: Callable[[int, int], Evaluation]):
        self.layer_cost = layer_cost
        self.cache: dict[tuple[int, int], Evaluation] = {}

    def cost(self, layer: int, choice: int) -> Evaluation:
        key = (layer, choice)
        if key not in self.cache:
            self.cache[key] = self.layer_cost(layer, choice)
        return self.cache[key]

    def __call__(self, combo: Combination) -> Evaluation:
        parts = [self.cost(i, c) for i, c in enumerate(combo)]
        return Evaluation(sum(p.latency for p in parts), sum(p.energy for p in parts),
                          sum(p.crossbars for p in parts))
