"""Seeded test instances: random reversible chains, fixed small chains, diffusions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain_model import (
    FiniteChain,
    TargetSet,
    build_birth_death,
    chain_from_conductances,
)


@dataclass(frozen=True, eq=False)
class Instance:
    instance_id: str
    chain: FiniteChain
    targets: tuple


def two_state() -> FiniteChain:
    """Q = [[-1, 1], [2, -2]]: gap 3, pi = (2/3, 1/3), alpha_star({0}) = 2."""
    return FiniteChain([[-1.0, 1.0], [2.0, -2.0]])


def random_reversible_chain(n: int, rng: np.random.Generator, edge_prob: float = 0.3) -> FiniteChain:
    """Random conductances on a random connected graph, random stationary weights.

    A random recursive tree guarantees irreducibility; extra edges appear
    with probability ``edge_prob``.  Reversibility holds by construction.
    """
    C = np.zeros((n, n))
    for i in range(1, n):
        j = int(rng.integers(0, i))
        C[i, j] = C[j, i] = rng.lognormal(0.0, 1.0)
    extra = np.triu(rng.random((n, n)) < edge_prob, 1)
    vals = np.triu(rng.lognormal(0.0, 1.0, size=(n, n)), 1)
    C += (extra * vals) + (extra * vals).T
    weights = rng.lognormal(0.0, 1.0, size=n)
    return chain_from_conductances(C, weights)


def random_target(n: int, rng: np.random.Generator) -> TargetSet:
    size = int(rng.integers(1, n))
    return TargetSet(tuple(rng.choice(n, size=size, replace=False)), n)


def random_corpus(count: int = 200, targets_per_chain: int = 5, n_max: int = 50, seed: int = 0) -> list:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    out = []
    for k in range(count):
        n = int(rng.integers(2, n_max + 1))
        chain = random_reversible_chain(n, rng)
        Ks = tuple(random_target(n, rng) for _ in range(targets_per_chain))
        out.append(Instance(f"rand{seed}-{k:03d}-n{n}", chain, Ks))
    return out


def birth_death_uniform(n: int, rate: float = 1.0) -> FiniteChain:
    return build_birth_death(n, [rate] * (n - 1), [rate] * (n - 1))


def birth_death_20() -> FiniteChain:
    """20-state chain with a drift towards 0 (up 1, down 1.5)."""
    return build_birth_death(20, [1.0] * 19, [1.5] * 19)
