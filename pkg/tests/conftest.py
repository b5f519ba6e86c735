"""Shared helpers for the test suite."""

from __future__ import annotations

import math

import numpy as np

from bmdetect import discrete
from bmdetect.lowerbound import StoppingLaw


def random_discrete(rng: np.random.Generator, min_mean: float = 0.0,
                    max_atoms: int = 8):
    """Random finite law on [0,1] with mean above ``min_mean``."""
    for _ in range(500):
        n = int(rng.integers(2, max_atoms + 1))
        xs = np.sort(rng.uniform(0.0, 1.0, n))
        ws = rng.dirichlet(np.ones(n))
        d = discrete(list(zip(xs.tolist(), (ws / ws.sum()).tolist())))
        if d.mean > min_mean:
            return d
    raise RuntimeError("could not draw a law above the requested mean")


def random_stopping_law(rng: np.random.Generator) -> StoppingLaw:
    """Random alarm-time law, half the time with a geometric tail."""
    n = int(rng.integers(1, 10))
    times = np.sort(rng.choice(np.arange(1, 60), size=n, replace=False))
    probs = rng.dirichlet(np.ones(n))
    tail_mass = float(rng.uniform(0.05, 0.5)) if rng.random() < 0.5 else 0.0
    probs = probs * (1.0 - tail_mass)
    atoms = [(int(t), float(p)) for t, p in zip(times, probs)]
    correction = 1.0 - tail_mass - math.fsum(p for _, p in atoms)
    atoms[-1] = (atoms[-1][0], atoms[-1][1] + correction)
    if tail_mass > 0.0:
        return StoppingLaw(atoms=tuple(atoms),
                           tail_start=int(times.max()) + int(rng.integers(1, 20)),
                           tail_mass=tail_mass,
                           tail_ratio=float(rng.uniform(0.5, 0.99)))
    return StoppingLaw(atoms=tuple(atoms))
