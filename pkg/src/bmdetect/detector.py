"""Mixture Shiryaev-Roberts e-detector for bounded-mean shifts.

The detector bets against the baseline mean m with the one-parameter family
L_lambda(x) = (1 - lambda) + (lambda / m) x, runs one Shiryaev-Roberts
recursion R_n = (1 + R_{n-1}) L_lambda(X_n) per grid point, and alarms the
first time the weighted mixture M_n = sum_j w_j R_j crosses the threshold
gamma.  Thresholding the mixture at gamma keeps the expected time to false
alarm at least gamma under every pre-change law with mean at most m.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

SATURATION = 1e300
MAX_GRID_SIZE = 4096

_MAGIC = b"BMSR"
_VERSION = 1
_HEADER = struct.Struct("<4sHBQQI")


class StateDecodeError(ValueError):
    """Raised when a serialized detector state cannot be decoded."""


def effective_threshold(gamma: float) -> float:
    """Alarm comparison value for a nominal threshold gamma.

    The alarm rule is the closed inequality M_n >= gamma.  Mixture weights
    like 1/63 are not exactly representable, so a statistic that equals
    gamma in exact arithmetic can land a few ulp below it in floating point;
    the comparison absorbs rounding of order 1e-9 * (1 + gamma) so that
    exact-arithmetic ties still fire on time.
    """
    return gamma - 1e-9 * (1.0 + gamma)


def betting_factor(lam: float, m: float, x):
    """One-step e-value (1 - lam) + (lam / m) x for x in [0,1].

    Equals 1 when lam = 0 or x = m, stays within [1 - lam, 1/m] on the
    domain, and is nonnegative everywhere on it.
    """
    lam = float(lam)
    m = float(m)
    if not (0.0 <= lam <= 1.0):
        raise ValueError("lambda must lie in [0,1]")
    if not (0.0 < m < 1.0):
        raise ValueError("baseline mean must lie strictly inside (0,1)")
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("observation outside [0,1]; rescale first")
    out = (1.0 - lam) + (lam / m) * arr
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


class LambdaGrid:
    """Finite grid of betting fractions in (0,1) with positive weights.

    Weights must sum to at most 1 (the default dyadic grid sums to exactly
    1); the grid must be strictly increasing.
    """

    def __init__(self, lambdas, weights):
        lam = np.asarray(lambdas, dtype=np.float64).copy()
        w = np.asarray(weights, dtype=np.float64).copy()
        if lam.ndim != 1 or w.shape != lam.shape or lam.size == 0:
            raise ValueError("lambdas and weights must be matching 1-D sequences")
        if lam.size > MAX_GRID_SIZE:
            raise ValueError(f"grid size {lam.size} exceeds maximum {MAX_GRID_SIZE}")
        if np.any(lam <= 0.0) or np.any(lam >= 1.0):
            raise ValueError("grid points must lie strictly inside (0,1)")
        if np.any(np.diff(lam) <= 0.0):
            raise ValueError("grid points must be strictly increasing")
        if np.any(w <= 0.0):
            raise ValueError("grid weights must be positive")
        if w.sum() > 1.0 + 1e-9:
            raise ValueError("grid weights must sum to at most 1")
        lam.setflags(write=False)
        w.setflags(write=False)
        self.lambdas = lam
        self.weights = w

    def __len__(self) -> int:
        return self.lambdas.size

    def __eq__(self, other) -> bool:
        return (isinstance(other, LambdaGrid)
                and np.array_equal(self.lambdas, other.lambdas)
                and np.array_equal(self.weights, other.weights))

    def __repr__(self) -> str:
        return f"LambdaGrid({self.lambdas.size} points in [{self.lambdas[0]}, {self.lambdas[-1]}])"


def dyadic_grid(depth: int) -> LambdaGrid:
    """Dyadic rationals j / 2^depth, j = 1..2^depth - 1, uniform weights."""
    depth = int(depth)
    if depth < 1:
        raise ValueError("depth must be at least 1")
    n = 2 ** depth - 1
    if n > MAX_GRID_SIZE:
        raise ValueError(f"depth {depth} gives {n} points, exceeding {MAX_GRID_SIZE}")
    lam = np.arange(1, n + 1, dtype=np.float64) / (2.0 ** depth)
    w = np.full(n, 1.0 / n)
    return LambdaGrid(lam, w)


class UniformGridSchedule(NamedTuple):
    """Construction constants behind ``design_uniform_grid``."""
    lambda_lower: float
    mesh: float
    intervals: int
    snap_depth: int


def uniform_grid_schedule(delta: float, epsilon: float, m: float) -> UniformGridSchedule:
    """Mesh parameters for a grid covering every mean shift of at least delta.

    With eps' = epsilon/2, any post-change law with mean >= m + delta has a
    near-optimal betting fraction no smaller than
    lambda_lower = (1 - eps') * 2 delta^2 / (1/m - 1), so a mesh of size
    eps' * lambda_lower / 4 guarantees a grid point within the multiplicative
    window that keeps (1 - epsilon) of the optimal log growth.
    """
    delta = float(delta)
    epsilon = float(epsilon)
    m = float(m)
    if not (0.0 < m < 1.0):
        raise ValueError("baseline mean must lie strictly inside (0,1)")
    if not (0.0 < delta < 1.0 - m):
        raise ValueError("separation must lie in (0, 1 - m)")
    if not (0.0 < epsilon < 0.5):
        raise ValueError("epsilon must lie in (0, 1/2)")
    eps_prime = epsilon / 2.0
    lam_lower = (1.0 - eps_prime) * 2.0 * delta * delta / (1.0 / m - 1.0)
    mesh = eps_prime * lam_lower / 4.0
    if mesh >= 1.0:
        raise ValueError("degenerate mesh: spacing must be below 1")
    # Tolerate float rounding so a mesh of nominally 1/J yields J intervals.
    intervals = int(math.floor(1.0 / mesh + 1e-9))
    # Snap spacing strictly below half the mesh so each half-open interval
    # (j*mesh - mesh/2, j*mesh] contains a dyadic rational of this depth.
    snap_depth = max(1, math.ceil(math.log2(2.0 / mesh))) + 1
    return UniformGridSchedule(lam_lower, mesh, intervals, snap_depth)


def design_uniform_grid(delta: float, epsilon: float, m: float) -> LambdaGrid:
    """Finite dyadic grid whose best point nearly maximizes the log growth
    for every post-change law separated from m by at least delta.

    One dyadic point is chosen inside each interval (j*mesh - mesh/2, j*mesh]
    for j = 1..floor(1/mesh), plus one point just below 1; weights are
    uniform.
    """
    sched = uniform_grid_schedule(delta, epsilon, m)
    mesh, depth = sched.mesh, sched.snap_depth
    scale = 2.0 ** depth
    points = []
    for j in range(1, sched.intervals + 1):
        target = j * mesh
        lam = math.floor(target * scale) / scale
        if lam >= 1.0:
            lam = (scale - 1.0) / scale
        points.append(lam)
    # Extra point near 1, one level deeper so it stays above every snapped point.
    points.append(1.0 - 0.5 / scale)
    lam = np.array(points)
    w = np.full(lam.size, 1.0 / lam.size)
    return LambdaGrid(lam, w)


@dataclass(frozen=True)
class DetectorConfig:
    """Baseline mean m, betting grid and alarm threshold gamma."""

    m: float
    grid: LambdaGrid
    gamma: float

    def __post_init__(self) -> None:
        if not (0.0 < self.m < 1.0):
            raise ValueError("baseline mean must lie strictly inside (0,1)")
        if not self.gamma > 0.0:
            raise ValueError("threshold gamma must be positive")
        if not isinstance(self.grid, LambdaGrid):
            raise ValueError("grid must be a LambdaGrid")


@dataclass
class MixtureState:
    """Resumable per-stream detector state.

    Holds the per-lambda Shiryaev-Roberts values, the mixture statistic, the
    number of processed observations and the (sticky) alarm step.  A state is
    a single-stream object: it is mutated only by its owner.
    """

    n: int
    r: np.ndarray
    M: float
    alarmed_at: int | None = None
    saturated: bool = False

    def copy(self) -> "MixtureState":
        return MixtureState(self.n, self.r.copy(), self.M, self.alarmed_at,
                            self.saturated)

    def __eq__(self, other) -> bool:
        return (isinstance(other, MixtureState)
                and self.n == other.n
                and np.array_equal(self.r, other.r)
                and self.M == other.M
                and self.alarmed_at == other.alarmed_at
                and self.saturated == other.saturated)


def fresh_state(config: DetectorConfig) -> MixtureState:
    """State before any observation: every R starts at 0."""
    return MixtureState(n=0, r=np.zeros(len(config.grid)), M=0.0)


def sr_update(state: MixtureState, config: DetectorConfig, x: float) -> MixtureState:
    """Advance the detector by one observation.

    Applies R <- (1 + R) * L_lambda(x) to every grid point, recomputes the
    mixture and records the alarm step the first time it reaches gamma.
    Values are clamped at 1e300 once they dwarf any sane threshold, so the
    recursion never overflows; the ``saturated`` flag records that event.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("observation must be finite")
    if not (0.0 <= x <= 1.0):
        raise ValueError("observation outside [0,1]; rescale first")
    grid = config.grid
    factors = (1.0 - grid.lambdas) + (grid.lambdas / config.m) * x
    state.r = (1.0 + state.r) * factors
    if np.any(state.r > SATURATION):
        np.minimum(state.r, SATURATION, out=state.r)
        state.saturated = True
    state.M = float(state.r @ grid.weights)
    state.n += 1
    if state.alarmed_at is None and state.M >= effective_threshold(config.gamma):
        state.alarmed_at = state.n
    return state


class AlarmResult(NamedTuple):
    alarm_time: int | None
    final_state: MixtureState


def run_until_alarm(config: DetectorConfig, stream: Iterable[float],
                    max_horizon: int, state: MixtureState | None = None) -> AlarmResult:
    """Feed observations until the first alarm or ``max_horizon`` steps.

    Returns the alarm step (None if the run is censored at the horizon).
    The stream must supply at least ``max_horizon`` values unless an alarm
    stops consumption earlier.  Pass a previously deserialized ``state`` to
    resume a stream.
    """
    if int(max_horizon) < 1:
        raise ValueError("max_horizon must be at least 1")
    if state is None:
        state = fresh_state(config)
    if state.alarmed_at is not None:
        return AlarmResult(state.alarmed_at, state)
    it = iter(stream)
    consumed = 0
    while consumed < max_horizon:
        try:
            x = next(it)
        except StopIteration:
            raise ValueError(
                f"stream ended after {consumed} observations, "
                f"expected {max_horizon}") from None
        consumed += 1
        sr_update(state, config, x)
        if state.alarmed_at is not None:
            return AlarmResult(state.alarmed_at, state)
    return AlarmResult(None, state)


def serialize_state(state: MixtureState) -> bytes:
    """Versioned binary snapshot; round-trips bit-exactly."""
    flags = (1 if state.saturated else 0) | (2 if state.alarmed_at is not None else 0)
    alarmed = state.alarmed_at if state.alarmed_at is not None else 0
    r = np.ascontiguousarray(state.r, dtype="<f8")
    header = _HEADER.pack(_MAGIC, _VERSION, flags, state.n, alarmed, r.size)
    return header + r.tobytes() + struct.pack("<d", state.M)


def deserialize_state(buf: bytes) -> MixtureState:
    """Inverse of ``serialize_state``; rejects malformed or foreign input."""
    if len(buf) < _HEADER.size:
        raise StateDecodeError("snapshot truncated before header")
    magic, version, flags, n, alarmed, count = _HEADER.unpack_from(buf)
    if magic != _MAGIC:
        raise StateDecodeError("bad magic; not a detector state snapshot")
    if version != _VERSION:
        raise StateDecodeError(f"unsupported snapshot version {version}")
    expected = _HEADER.size + 8 * count + 8
    if len(buf) != expected:
        raise StateDecodeError(
            f"snapshot length {len(buf)} does not match declared {expected}")
    r = np.frombuffer(buf, dtype="<f8", count=count, offset=_HEADER.size).copy()
    (m_val,) = struct.unpack_from("<d", buf, _HEADER.size + 8 * count)
    return MixtureState(
        n=int(n),
        r=r,
        M=float(m_val),
        alarmed_at=int(alarmed) if flags & 2 else None,
        saturated=bool(flags & 1),
    )
