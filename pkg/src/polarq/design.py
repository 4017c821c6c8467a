"""Information-set selection: density-evolution design, a genetic search,
and the joint threshold/bit design for the mixed-stage scheme."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alphabet import LMsd, LlrAlgebra
from .density_evolution import DiscreteDist, de_profile, discretize_gaussian_llr, union_bound
from .polarcode import PolarCode


def design_de(channel_dist: DiscreteDist, algebra: LlrAlgebra, m: int, k: int) -> tuple[int, ...]:
    """Indices of the k most reliable synthetic channels under the algebra.

    Ties in the per-bit error probability break toward the larger index (the
    conventionally more polarized position).
    """
    n = 1 << m
    if k > n:
        raise ValueError("k exceeds the block length")
    profile = de_profile(channel_dist, PolarCode(m, tuple(range(n))), algebra)
    order = np.lexsort((-np.arange(n), profile.error_probs))
    return tuple(sorted(int(i) for i in order[:k]))


@dataclass
class GaConfig:
    """Knobs of the genetic search; defaults follow the population/selection
    scheme the reference experiments used."""

    population: int = 200
    survivor_fraction: float = 0.2
    selection_exponent: float = 3.0
    swap_range: tuple[int, int] = (1, 10)
    generations: int = 100
    master_seed: int = 0
    fer_floor: float = 1e-9
    target_fer: float | None = None  # early stop once the best dips below

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if not 0.0 < self.survivor_fraction < 1.0:
            raise ValueError("survivor fraction must be in (0, 1)")


def _mutate(info: frozenset, m: int, swaps: int, rng) -> frozenset:
    n = 1 << m
    info_list = sorted(info)
    frozen_list = [i for i in range(n) if i not in info]
    s = min(swaps, len(info_list), len(frozen_list))
    out = set(info)
    for i in rng.choice(len(info_list), size=s, replace=False):
        out.discard(info_list[int(i)])
    for j in rng.choice(len(frozen_list), size=s, replace=False):
        out.add(frozen_list[int(j)])
    return frozenset(out)


def _recombine(a: frozenset, b: frozenset, k: int, rng) -> frozenset:
    keep = a & b
    pool = sorted((a | b) - keep)
    need = k - len(keep)
    picked = rng.choice(len(pool), size=need, replace=False)
    return frozenset(keep | {pool[int(i)] for i in picked})


def design_ga(m: int, k: int, cfg: GaConfig, evaluator) -> tuple[tuple[int, ...], list]:
    """Genetic search over k-subsets scored by a fixed-budget FER evaluator.

    ``evaluator(info_set, seed)`` returns an FER estimate; the seed is shared
    by all individuals of a generation (common random numbers).  The best
    survivor fraction carries its recorded fitness forward; refills alternate
    mutation (swap 1..10 bit pairs) and recombination (keep the intersection,
    fill from the symmetric difference), and previously seen individuals are
    rejected.  Returns the best individual and the best-of-generation
    history.
    """
    n = 1 << m
    if k > n:
        raise ValueError("k exceeds the block length")
    rng = np.random.default_rng(cfg.master_seed)
    if k == n:
        info = tuple(range(n))
        return info, [evaluator(info, int(rng.integers(2**63)))]

    seen: set = set()
    population: list = []
    while len(population) < cfg.population:
        ind = frozenset(int(i) for i in rng.choice(n, size=k, replace=False))
        if ind not in seen:
            seen.add(ind)
            population.append(ind)

    def run_generation(gen: int, individuals):
        seed = int(rng.integers(2**63))
        return [evaluator(tuple(sorted(ind)), seed) for ind in individuals]

    fitness = run_generation(0, population)
    history = []
    best_pair = min(zip(fitness, map(sorted, population)), key=lambda t: (t[0], t[1]))
    history.append(best_pair[0])

    n_survive = max(1, round(cfg.survivor_fraction * cfg.population))
    for gen in range(1, cfg.generations + 1):
        if cfg.target_fer is not None and best_pair[0] <= cfg.target_fer:
            break
        order = np.argsort(fitness, kind="stable")
        survivors = [population[i] for i in order[:n_survive]]
        surv_fit = [fitness[i] for i in order[:n_survive]]
        weights = np.array([max(f, cfg.fer_floor) for f in surv_fit])
        weights = weights ** (-cfg.selection_exponent)
        weights /= weights.sum()

        children = []
        mutate_turn = True
        attempts = 0
        while len(children) < cfg.population - n_survive:
            attempts += 1
            if attempts > 50 * cfg.population:
                break  # search space exhausted at these parameters
            if mutate_turn:
                parent = survivors[int(rng.choice(n_survive, p=weights))]
                swaps = int(rng.integers(cfg.swap_range[0], cfg.swap_range[1] + 1))
                child = _mutate(parent, m, swaps, rng)
            else:
                pa, pb = rng.choice(n_survive, size=2, p=weights)
                child = _recombine(survivors[int(pa)], survivors[int(pb)], k, rng)
            mutate_turn = not mutate_turn
            if len(child) == k and child not in seen:
                seen.add(child)
                children.append(child)

        child_fit = run_generation(gen, children)
        population = survivors + children
        fitness = surv_fit + child_fit
        gen_best = min(zip(fitness, map(sorted, population)), key=lambda t: (t[0], t[1]))
        if gen_best[0] < best_pair[0]:
            best_pair = gen_best
        history.append(best_pair[0])

    return tuple(best_pair[1]), history


def design_msd(
    m: int,
    k: int,
    sigma2: float,
    grid: np.ndarray | None = None,
) -> tuple[tuple[int, ...], float, float]:
    """Joint grid design of the two first-layer thresholds and the info set.

    For every (delta_cn, delta_vn) pair the mixed-stage alphabet is run
    through density evolution, the k best bits are picked, and the union
    bound scores the pair; ties go to the lexicographically smaller pair.
    """
    if grid is None:
        grid = np.round(np.arange(0.2, 4.01, 0.2), 10)
    chan = discretize_gaussian_llr(sigma2)
    best = None
    for d_cn in grid:
        for d_vn in grid:
            algebra = LMsd(float(d_cn), float(d_vn))
            tagged = DiscreteDist(
                np.column_stack([chan.labels[:, 0], np.zeros(len(chan.probs))]),
                chan.probs.copy(),
            )
            profile = de_profile(tagged, PolarCode(m, tuple(range(1 << m))), algebra)
            order = np.lexsort((-np.arange(1 << m), profile.error_probs))
            info = tuple(sorted(int(i) for i in order[:k]))
            bound = float(profile.error_probs[list(info)].sum())
            cand = (bound, float(d_cn), float(d_vn), info)
            if best is None or cand[:3] < best[:3]:
                best = cand
    bound, d_cn, d_vn, info = best
    return info, d_cn, d_vn
