from __future__ import annotations

import numpy as np
import pytest

from nsope.core import IntervalDataset, Policy, Population
from nsope.harness import fixture_a


@pytest.fixture
def fix_a():
    return fixture_a()


def dataset(rows, interval=0):
    """IntervalDataset from (context, action, reward, behavior_prob) tuples."""
    s, a, r, p = zip(*rows)
    return IntervalDataset(interval, np.array(s), np.array(a), np.array(r, float), np.array(p, float))


def random_policy(rng, S, A, floor=0.0):
    p = rng.dirichlet(np.ones(A), size=S) + floor
    p /= p.sum(axis=1, keepdims=True)
    p[:, -1] = 1.0 - p[:, :-1].sum(axis=1)
    return Policy(p)


def random_problem(seed, n=None):
    """Random population, target, behavior and logged dataset for fuzz checks."""
    rng = np.random.default_rng(seed)
    S, A = int(rng.integers(2, 8)), int(rng.integers(2, 5))
    n = n if n is not None else int(rng.integers(2, 501))
    pop = Population(rng.dirichlet(np.ones(S)), rng.normal(size=(S, 3)), A)
    target = random_policy(rng, S, A)
    behavior = random_policy(rng, S, A, floor=0.05)
    s = rng.choice(S, size=n, p=pop.context_dist)
    a = np.array([rng.choice(A, p=behavior.probs[c]) for c in s])
    r = rng.uniform(-1, 2, size=n)
    data = IntervalDataset(0, s, a, r, behavior.probs[s, a])
    proxy = rng.uniform(-1, 2, size=(S, A))
    return pop, target, behavior, data, proxy
