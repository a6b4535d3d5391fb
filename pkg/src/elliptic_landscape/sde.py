"""Path samplers: Brownian motion, Euler-Maruyama diffusions, Brownian
bridges, epsilon-ball hitting-time walks, and Girsanov log-weights.

All samplers are pure functions of their ``RngStream``/``Generator``
argument: a given stream identity always reproduces the same path,
independent of what other streams are consumed elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

from .network import DomainError, ShapeError
from .rng import RngStream, as_generator


@dataclass
class Path:
    """A time grid and one state per grid time."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if self.times.ndim != 1 or len(self.times) != len(self.states):
            raise ShapeError("times and states must have one entry per grid point")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0.0):
            raise DomainError("times must be strictly increasing")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.states))):
            raise DomainError("path contains non-finite entries")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class BridgeSpec:
    """Endpoints, diffusion and step count of a bridge on [0, 1]."""

    start: np.ndarray
    end: np.ndarray
    sigma: float
    n_steps: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", np.atleast_1d(np.asarray(self.start, dtype=np.float64)))
        object.__setattr__(self, "end", np.atleast_1d(np.asarray(self.end, dtype=np.float64)))
        if self.start.shape != self.end.shape or self.start.ndim != 1:
            raise ShapeError("bridge endpoints must be vectors of equal dimension")
        if self.sigma < 0.0:
            raise DomainError("bridge sigma must be >= 0")
        if self.n_steps < 1:
            raise DomainError("bridge needs at least one step")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; the bounded stand-in for the data domain."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, dtype=np.float64)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, dtype=np.float64)))
        if self.lo.shape != self.hi.shape:
            raise ShapeError("box corners must have equal dimension")
        if np.any(self.lo > self.hi):
            raise DomainError("box has lo > hi on some axis")

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)


def data_box(points: np.ndarray, margin: float = 0.1) -> Box:
    """Bounding box of the rows of ``points`` expanded by ``margin`` per side.

    Degenerate axes (zero range) are padded by the absolute margin so the
    box always has positive thickness.
    """
    pts = np.asarray(points, dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = hi - lo
    pad = np.where(span > 0.0, margin * span, margin)
    return Box(lo - pad, hi + pad)


class HitOutcome(Enum):
    HIT_CENTER = "hit_center"
    HIT_DOMAIN_BOUNDARY = "hit_domain_boundary"
    TIMEOUT = "timeout"


@dataclass
class HitResult:
    path: Path
    outcome: HitOutcome
    tau: float
    center_index: int | None = None


def sample_brownian_path(
    dim: int,
    n_steps: int,
    dt: float,
    sigma: float,
    rng: RngStream | np.random.Generator,
) -> Path:
    """Brownian motion started at the origin, increments N(0, sigma^2 dt I)."""
    if n_steps < 1 or dt <= 0.0 or sigma < 0.0:
        raise DomainError("need n_steps >= 1, dt > 0 and sigma >= 0")
    gen = as_generator(rng)
    incr = sigma * np.sqrt(dt) * gen.standard_normal((n_steps, dim))
    states = np.vstack([np.zeros((1, dim)), np.cumsum(incr, axis=0)])
    times = np.arange(n_steps + 1) * dt
    return Path(times, states)


def sample_brownian_bridge(spec: BridgeSpec, rng: RngStream | np.random.Generator) -> Path:
    """Bridge pinned at both endpoints, diffusion ``spec.sigma`` in between.

    Construction: integrate scaled Gaussian increments into a Brownian path
    W anchored at the start point, then subtract t * (W_1 - end) so the
    terminal state is pinned.  Endpoints are set exactly.
    """
    gen = as_generator(rng)
    m = spec.n_steps
    dim = spec.start.shape[0]
    dt = 1.0 / m
    times = np.arange(m + 1) / m
    w = np.vstack(
        [
            np.zeros((1, dim)),
            np.cumsum(spec.sigma * np.sqrt(dt) * gen.standard_normal((m, dim)), axis=0),
        ]
    )
    anchored = w + spec.start
    states = anchored - times[:, None] * (anchored[-1] - spec.end)
    states[0] = spec.start
    states[-1] = spec.end
    return Path(times, states)


def euler_maruyama(
    drift,
    sigma: float,
    x0: np.ndarray,
    t_end: float,
    n_steps: int,
    rng: RngStream | np.random.Generator,
) -> Path:
    """X_{i+1} = X_i + drift(X_i) dt + sigma sqrt(dt) xi_i."""
    if n_steps < 1 or t_end <= 0.0 or sigma < 0.0:
        raise DomainError("need n_steps >= 1, t_end > 0 and sigma >= 0")
    gen = as_generator(rng)
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    dt = t_end / n_steps
    noise = sigma * np.sqrt(dt) * gen.standard_normal((n_steps, x0.shape[0]))
    states = np.empty((n_steps + 1, x0.shape[0]))
    states[0] = x0
    for i in range(n_steps):
        b = np.asarray(drift(states[i]), dtype=np.float64)
        if not np.all(np.isfinite(b)):
            raise DomainError(f"drift returned non-finite values at state {states[i]}")
        states[i + 1] = states[i] + b * dt + noise[i]
    return Path(np.arange(n_steps + 1) * dt, states)


def girsanov_log_weight(path: Path, mu) -> float:
    """Left-endpoint discretization of the exponential-martingale exponent.

    Returns  sum_i mu(Z_i) . (Z_{i+1} - Z_i)  -  1/2 sum_i |mu(Z_i)|^2 dt_i.
    """
    if len(path) < 2:
        raise DomainError("log-weight needs a path with at least two states")
    z = path.states
    dts = np.diff(path.times)
    mu_vals = np.array([np.atleast_1d(mu(z[i])) for i in range(len(z) - 1)], dtype=np.float64)
    dz = np.diff(z, axis=0)
    stoch = float(np.sum(mu_vals * dz))
    quad = 0.5 * float(np.sum(np.sum(mu_vals * mu_vals, axis=1) * dts))
    return stoch - quad


def hitting_time_walk(
    start: np.ndarray,
    sigma: float,
    centers: np.ndarray,
    eps: float,
    domain_box: Box,
    dt: float,
    t_max: float,
    rng: RngStream | np.random.Generator,
    chunk: int = 4096,
) -> HitResult:
    """Walk dz = sigma dW until an epsilon-ball, the box boundary, or t_max.

    The stopping set is checked at grid points only.  Entering several balls
    in one step resolves to the nearest center (index order on exact ties);
    a step that both enters a ball and leaves the box counts as a ball hit.
    Box exits are clamped onto the exit face.  Timeout is an outcome, not an
    error.
    """
    if eps <= 0.0 or sigma <= 0.0 or dt <= 0.0 or t_max < 0.0:
        raise DomainError("need eps > 0, sigma > 0, dt > 0 and t_max >= 0")
    start = np.atleast_1d(np.asarray(start, dtype=np.float64))
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, start.shape[0])
    if not domain_box.contains(start):
        raise DomainError("walk must start inside the domain box")

    def nearest_center(state: np.ndarray) -> int:
        d = np.linalg.norm(centers - state, axis=1)
        return int(np.argmin(d))

    # The infimum over t > 0 is attained immediately when the start already
    # sits inside a ball.
    if centers.size and np.min(np.linalg.norm(centers - start, axis=1)) < eps:
        return HitResult(
            Path(np.zeros(1), start[None, :]),
            HitOutcome.HIT_CENTER,
            0.0,
            nearest_center(start),
        )

    n_max = int(np.floor(t_max / dt + 1e-12))
    if n_max == 0:
        return HitResult(Path(np.zeros(1), start[None, :]), HitOutcome.TIMEOUT, 0.0)

    gen = as_generator(rng)
    scale = sigma * np.sqrt(dt)
    pieces = [start[None, :]]
    state = start
    done = 0
    while done < n_max:
        k = min(chunk, n_max - done)
        steps = state + np.cumsum(scale * gen.standard_normal((k, start.shape[0])), axis=0)
        if centers.size:
            in_ball = (cdist(steps, centers) < eps).any(axis=1)
        else:
            in_ball = np.zeros(k, dtype=bool)
        out_box = ((steps < domain_box.lo) | (steps > domain_box.hi)).any(axis=1)
        event = in_ball | out_box
        if event.any():
            j = int(np.argmax(event))
            tau = min((done + j + 1) * dt, t_max)
            if in_ball[j]:
                outcome, center = HitOutcome.HIT_CENTER, nearest_center(steps[j])
            else:
                outcome, center = HitOutcome.HIT_DOMAIN_BOUNDARY, None
                steps[j] = domain_box.clamp(steps[j])
            pieces.append(steps[: j + 1])
            states = np.concatenate(pieces, axis=0)
            return HitResult(
                Path(np.arange(len(states)) * dt, states), outcome, tau, center
            )
        pieces.append(steps)
        state = steps[-1]
        done += k
    states = np.concatenate(pieces, axis=0)
    return HitResult(
        Path(np.arange(len(states)) * dt, states), HitOutcome.TIMEOUT, min(n_max * dt, t_max)
    )
