"""Bounded distributions on [0,1], reproducible sampling, changepoint streams.

Every law here is sampleable with a counter-based (Philox) generator keyed by
a ``SeedSpec``, so independent replications never need to coordinate.  Means
are exact: analytic for Bernoulli and beta laws, atom sums for discrete laws,
convex combinations for mixtures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

_WEIGHT_ATOL = 1e-12

INFINITE = math.inf


@dataclass(frozen=True)
class SeedSpec:
    """Key for a counter-based RNG substream.

    Distinct ``(master_seed, stream_id)`` pairs yield statistically
    independent Philox substreams; identical pairs reproduce the exact same
    sample sequence, bit for bit.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        if int(self.stream_id) < 0:
            raise ValueError("stream_id must be nonnegative")

    def generator(self, *tags: int) -> np.random.Generator:
        """Philox generator keyed by (master_seed, stream_id, *tags)."""
        entropy = (int(self.master_seed), int(self.stream_id)) + tuple(int(t) for t in tags)
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class BoundedDistribution:
    """A sampleable probability law supported on [0,1] with an exact mean.

    Kinds: ``bernoulli`` (params = (p,)), ``discrete`` (atoms), ``beta``
    (params = (a, b)) and ``mixture`` (weighted components).  Construct via
    the module-level factories; invalid parameters fail at construction time,
    never at sampling time.
    """

    kind: str
    mean: float
    atoms: tuple[tuple[float, float], ...] | None = None
    params: tuple[float, ...] = ()
    components: tuple[tuple[float, "BoundedDistribution"], ...] | None = None

    @property
    def is_discrete(self) -> bool:
        if self.kind in ("bernoulli", "discrete"):
            return True
        if self.kind == "mixture":
            return all(c.is_discrete for _, c in self.components)
        return False

    def atom_list(self) -> list[tuple[float, float]]:
        """Flattened (value, weight) atoms; only valid for discrete laws."""
        if self.kind in ("bernoulli", "discrete"):
            return list(self.atoms)
        if self.kind == "mixture" and self.is_discrete:
            out: list[tuple[float, float]] = []
            for w, comp in self.components:
                out.extend((x, w * q) for x, q in comp.atom_list())
            return out
        raise ValueError(f"{self.kind} law has no finite atom decomposition")

    def mass_at_zero(self) -> float:
        """Q({0}); drives the behavior of log betting factors at lambda=1."""
        if self.kind in ("bernoulli", "discrete"):
            return sum(q for x, q in self.atoms if x == 0.0)
        if self.kind == "beta":
            return 0.0
        return sum(w * comp.mass_at_zero() for w, comp in self.components)

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        """n samples from this law using (and advancing) ``gen``."""
        if n < 0:
            raise ValueError("sample count must be nonnegative")
        if n == 0:
            return np.empty(0, dtype=np.float64)
        if self.kind == "bernoulli":
            p = self.params[0]
            out = (gen.random(n) < p).astype(np.float64)
        elif self.kind == "discrete":
            xs = np.array([x for x, _ in self.atoms])
            cum = np.cumsum([q for _, q in self.atoms])
            idx = np.searchsorted(cum, gen.random(n), side="right")
            out = xs[np.minimum(idx, len(xs) - 1)]
        elif self.kind == "beta":
            a, b = self.params
            out = gen.beta(a, b, size=n)
        elif self.kind == "mixture":
            cum = np.cumsum([w for w, _ in self.components])
            idx = np.searchsorted(cum, gen.random(n), side="right")
            idx = np.minimum(idx, len(self.components) - 1)
            out = np.empty(n, dtype=np.float64)
            for j, (_, comp) in enumerate(self.components):
                mask = idx == j
                cnt = int(mask.sum())
                if cnt:
                    out[mask] = comp.draw(gen, cnt)
        else:  # pragma: no cover - factories prevent unknown kinds
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        assert np.all(out >= 0.0) and np.all(out <= 1.0)
        return out


def bernoulli(p: float) -> BoundedDistribution:
    """Two-point law on {0, 1} with success probability p."""
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise ValueError("bernoulli parameter must lie in [0,1]")
    atoms = tuple(
        (x, q) for x, q in ((0.0, 1.0 - p), (1.0, p)) if q > 0.0
    )
    return BoundedDistribution(kind="bernoulli", mean=p, atoms=atoms, params=(p,))


def point(x: float) -> BoundedDistribution:
    """Degenerate law putting all mass on x."""
    return discrete([(x, 1.0)])


def discrete(atoms: Sequence[tuple[float, float]]) -> BoundedDistribution:
    """Finite law from (value, weight) pairs; weights must sum to 1."""
    if not atoms:
        raise ValueError("discrete law needs at least one atom")
    clean = []
    for x, q in atoms:
        x, q = float(x), float(q)
        if not (0.0 <= x <= 1.0):
            raise ValueError(f"atom {x} outside [0,1]")
        if q <= 0.0:
            raise ValueError("atom weights must be positive")
        clean.append((x, q))
    total = math.fsum(q for _, q in clean)
    if abs(total - 1.0) > _WEIGHT_ATOL:
        raise ValueError(f"atom weights sum to {total}, expected 1")
    mean = math.fsum(x * q for x, q in clean)
    return BoundedDistribution(kind="discrete", mean=mean, atoms=tuple(clean))


def beta(a: float, b: float) -> BoundedDistribution:
    """Beta(a, b) law; mean is a/(a+b) exactly."""
    a, b = float(a), float(b)
    if a <= 0.0 or b <= 0.0:
        raise ValueError("beta shape parameters must be positive")
    return BoundedDistribution(kind="beta", mean=a / (a + b), params=(a, b))


def mixture(components: Sequence[tuple[float, BoundedDistribution]]) -> BoundedDistribution:
    """Finite mixture of bounded laws; weights must be positive and sum to 1."""
    if not components:
        raise ValueError("mixture needs at least one component")
    comps = []
    for w, comp in components:
        w = float(w)
        if w <= 0.0:
            raise ValueError("mixture weights must be positive")
        if not isinstance(comp, BoundedDistribution):
            raise ValueError("mixture components must be BoundedDistribution")
        comps.append((w, comp))
    total = math.fsum(w for w, _ in comps)
    if abs(total - 1.0) > _WEIGHT_ATOL:
        raise ValueError(f"mixture weights sum to {total}, expected 1")
    mean = math.fsum(w * c.mean for w, c in comps)
    return BoundedDistribution(kind="mixture", mean=mean, components=tuple(comps))


def _beta_logpdf(x: float, a: float, b: float) -> float:
    lb = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - lb


def expectation(dist: BoundedDistribution, fn: Callable[[float], float],
                epsabs: float = 1e-10) -> float:
    """E[fn(X)] under ``dist``.

    Exact atom sums for discrete laws (a -inf term makes the whole
    expectation -inf), adaptive quadrature for beta laws, linearity for
    mixtures.
    """
    if dist.kind in ("bernoulli", "discrete"):
        terms = [q * fn(x) for x, q in dist.atoms]
        if any(t == -math.inf for t in terms):
            return -math.inf
        return math.fsum(terms)
    if dist.kind == "beta":
        a, b = dist.params

        def integrand(x: float) -> float:
            if x <= 0.0 or x >= 1.0:
                return 0.0
            return fn(x) * math.exp(_beta_logpdf(x, a, b))

        val = integrate.quad(integrand, 0.0, 1.0, epsabs=epsabs, limit=200,
                             full_output=1)[0]
        return float(val)
    if dist.kind == "mixture":
        parts = [w * expectation(c, fn, epsabs) for w, c in dist.components]
        if any(p == -math.inf for p in parts):
            return -math.inf
        return math.fsum(parts)
    raise ValueError(f"unknown distribution kind {dist.kind!r}")  # pragma: no cover


@dataclass(frozen=True)
class ChangepointScenario:
    """Pre-change law, post-change law, change time k and stream horizon.

    Observations 1..k-1 are i.i.d. from ``pre`` and observations k..horizon
    are i.i.d. from ``post``; ``change_time = math.inf`` encodes the
    no-change stream.
    """

    pre: BoundedDistribution
    post: BoundedDistribution
    change_time: float
    horizon: int

    def __post_init__(self) -> None:
        k = self.change_time
        if not (k == math.inf or (float(k).is_integer() and k >= 1)):
            raise ValueError("change_time must be an integer >= 1 or math.inf")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be a positive integer")


def sample(dist: BoundedDistribution, seed: SeedSpec, n: int) -> np.ndarray:
    """Length-n sample from ``dist``, deterministic given ``seed``."""
    return dist.draw(seed.generator(), n)


def generate_changepoint_stream(sc: ChangepointScenario, seed: SeedSpec) -> np.ndarray:
    """Realize a changepoint stream of length ``sc.horizon``.

    The prefix (before the change) and suffix draw from independent
    substreams, so the prefix law never depends on the post-change law.
    """
    horizon = int(sc.horizon)
    if sc.change_time == math.inf:
        n_pre = horizon
    else:
        n_pre = min(int(sc.change_time) - 1, horizon)
    pre = sc.pre.draw(seed.generator(0), n_pre)
    post = sc.post.draw(seed.generator(1), horizon - n_pre)
    return np.concatenate([pre, post])


def rescale_affine(x, a: float, b: float):
    """Map x in [a,b] to (x-a)/(b-a) in [0,1]; endpoints map exactly."""
    a, b = float(a), float(b)
    if a >= b:
        raise ValueError("rescale interval requires a < b")
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < a) or np.any(arr > b):
        raise ValueError(f"value outside [{a}, {b}]")
    out = np.clip((arr - a) / (b - a), 0.0, 1.0)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def rescale_baseline(m: float, a: float, b: float) -> float:
    """Map a baseline mean m in (a,b) to the unit-interval baseline."""
    m = float(m)
    if not (a < m < b):
        raise ValueError("baseline must lie strictly inside (a, b)")
    return float(rescale_affine(m, a, b))


def dist_to_json(dist: BoundedDistribution) -> dict:
    """JSON-ready literal for a distribution (see dist_from_json)."""
    if dist.kind == "bernoulli":
        return {"kind": "bernoulli", "p": dist.params[0]}
    if dist.kind == "discrete":
        return {"kind": "discrete", "atoms": [[x, q] for x, q in dist.atoms]}
    if dist.kind == "beta":
        return {"kind": "beta", "a": dist.params[0], "b": dist.params[1]}
    if dist.kind == "mixture":
        return {"kind": "mixture",
                "components": [[w, dist_to_json(c)] for w, c in dist.components]}
    raise ValueError(f"unknown distribution kind {dist.kind!r}")  # pragma: no cover


def dist_from_json(obj: dict) -> BoundedDistribution:
    """Parse a distribution literal.

    Accepted forms:
      {"kind": "bernoulli", "p": 0.75}
      {"kind": "discrete", "atoms": [[0.0, 0.25], [1.0, 0.75]]}
      {"kind": "point", "x": 0.5}
      {"kind": "beta", "a": 2, "b": 2}
      {"kind": "mixture", "components": [[0.5, {...}], [0.5, {...}]]}
    """
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("distribution literal must be an object with a 'kind'")
    kind = obj["kind"]
    try:
        if kind == "bernoulli":
            return bernoulli(obj["p"])
        if kind == "discrete":
            return discrete([(x, q) for x, q in obj["atoms"]])
        if kind == "point":
            return point(obj["x"])
        if kind == "beta":
            return beta(obj["a"], obj["b"])
        if kind in ("mixture", "truncated-mixture"):
            return mixture([(w, dist_from_json(c)) for w, c in obj["components"]])
    except KeyError as exc:
        raise ValueError(f"distribution literal missing field {exc}") from exc
    raise ValueError(f"unknown distribution kind {kind!r}")
