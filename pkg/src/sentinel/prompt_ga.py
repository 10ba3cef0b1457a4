"""Genetic search over prompt templates: few-shot slots and section order.

Tournament selection (size 2), single-point crossover on the slot list, and
per-gene mutation that either swaps an example or permutes the section order.
One elite genome carries over unchanged, so best-ever fitness never drops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import MODALITY_ORDER
from .detectors import InsufficientData
from .reasoner import DEFAULT_PREAMBLE, PromptTemplate

MUTATION_RATE = 0.05
TOURNAMENT_SIZE = 2


@dataclass
class GaResult:
    best: PromptTemplate
    best_fitness: float
    history: list[float]  # best-ever fitness per generation


def _random_template(ids: list[str], n_shot: int, rng: np.random.Generator, tag: int) -> PromptTemplate:
    n_slots = int(rng.integers(1, n_shot + 1))
    slots = tuple(ids[int(i)] for i in rng.integers(0, len(ids), size=n_slots))
    order = tuple(MODALITY_ORDER[int(i)] for i in rng.permutation(3))
    return PromptTemplate(
        preamble=DEFAULT_PREAMBLE,
        example_slots=slots,
        section_order=order,
        genome_id=f"g0-{tag}",
    )


def _crossover(a: PromptTemplate, b: PromptTemplate, n_shot: int,
               rng: np.random.Generator, tag: str) -> PromptTemplate:
    cut_a = int(rng.integers(0, len(a.example_slots) + 1))
    cut_b = int(rng.integers(0, len(b.example_slots) + 1))
    slots = (a.example_slots[:cut_a] + b.example_slots[cut_b:])[:n_shot]
    if not slots:
        slots = a.example_slots[:1] or b.example_slots[:1]
    order = a.section_order if rng.uniform() < 0.5 else b.section_order
    return PromptTemplate(
        preamble=a.preamble, example_slots=slots, section_order=order, genome_id=tag
    )


def _mutate(t: PromptTemplate, ids: list[str], rng: np.random.Generator) -> PromptTemplate:
    slots = list(t.example_slots)
    for i in range(len(slots)):
        if rng.uniform() < MUTATION_RATE:
            slots[i] = ids[int(rng.integers(len(ids)))]
    order = t.section_order
    if rng.uniform() < MUTATION_RATE:
        order = tuple(MODALITY_ORDER[int(i)] for i in rng.permutation(3))
    return PromptTemplate(
        preamble=t.preamble,
        example_slots=tuple(slots),
        section_order=order,
        genome_id=t.genome_id,
    )


def _tournament(pop: list[PromptTemplate], fits: list[float],
                rng: np.random.Generator) -> PromptTemplate:
    picks = rng.integers(0, len(pop), size=TOURNAMENT_SIZE)
    best = max(picks, key=lambda i: (fits[int(i)], -int(i)))
    return pop[int(best)]


def ga_optimize_templates(
    library: dict[str, str],
    fitness_fn: Callable[[PromptTemplate], float],
    generations: int = 20,
    pop_size: int = 16,
    rng: np.random.Generator | None = None,
    n_shot: int = 4,
) -> GaResult:
    """Evolve templates against fitness_fn; returns the best-ever genome."""
    if not library:
        raise InsufficientData("example library is empty")
    if pop_size < 2:
        raise InsufficientData("population size must be >= 2")
    rng = rng or np.random.default_rng(0)
    ids = sorted(library)

    pop = [_random_template(ids, n_shot, rng, i) for i in range(pop_size)]
    fits = [fitness_fn(t) for t in pop]
    best_i = int(np.argmax(fits))
    best, best_fit = pop[best_i], fits[best_i]
    history = [best_fit]

    for gen in range(1, generations + 1):
        next_pop = [best]  # elite carry-over
        while len(next_pop) < pop_size:
            pa = _tournament(pop, fits, rng)
            pb = _tournament(pop, fits, rng)
            child = _crossover(pa, pb, n_shot, rng, f"g{gen}-{len(next_pop)}")
            next_pop.append(_mutate(child, ids, rng))
        pop = next_pop
        fits = [fitness_fn(t) for t in pop]
        gen_best = int(np.argmax(fits))
        if fits[gen_best] > best_fit:
            best, best_fit = pop[gen_best], fits[gen_best]
        history.append(best_fit)
    return GaResult(best=best, best_fitness=best_fit, history=history)
