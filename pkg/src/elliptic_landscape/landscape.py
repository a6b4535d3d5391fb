"""Monte Carlo estimation of the expected-loss landscape and executable
checks of its structural properties (boundary extremes, generator residuals,
curvature bounds, hitting-time statistics).

The landscape value at a query point is the expected loss at the first
data point whose epsilon-ball a diffusion from the query enters.  Paths
that exit the domain box are continued to the nearest data point (reported
separately so the continuation can be audited); paths that exhaust the time
budget are censored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .network import DomainError, MlpModel, ShapeError
from .rng import RngStream, as_generator
from .sde import Box, HitOutcome, data_box, hitting_time_walk


@dataclass
class LandscapeEstimate:
    """Monte Carlo landscape value at one query point."""

    mean: float
    stderr: float
    n_hit: int
    n_timeout: int
    n_boundary: int

    @property
    def n_recorded(self) -> int:
        return self.n_hit + self.n_boundary

    @property
    def valid(self) -> bool:
        return self.n_recorded > 0


def _summarize(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard error; exact for constant samples."""
    if values.size == 0:
        return float("nan"), float("nan")
    if values.size == 1 or np.ptp(values) == 0.0:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(np.std(values, ddof=1) / np.sqrt(values.size))


def estimate_landscape_values(
    centers,
    values,
    queries,
    *,
    eps: float,
    sigma: float,
    box: Box,
    n_paths: int,
    dt: float,
    t_max: float,
    rng: RngStream,
) -> list[LandscapeEstimate]:
    """Estimate the landscape from raw (center, boundary value) pairs.

    One walk per (query, path index) substream; the estimate at each query
    averages the boundary values recorded by its absorbed walks.
    """
    centers = np.asarray(centers, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if centers.ndim != 2 or queries.ndim != 2 or centers.shape[1] != queries.shape[1]:
        raise ShapeError("centers and queries must be matrices over the same space")
    if vals.shape != (centers.shape[0],):
        raise ShapeError("need exactly one boundary value per center")
    if eps <= 0.0 or n_paths < 1:
        raise DomainError("need eps > 0 and n_paths >= 1")
    for q in queries:
        if not box.contains(q):
            raise DomainError(f"query {q} lies outside the domain box")

    estimates = []
    for qi, q in enumerate(queries):
        recorded = np.empty(n_paths)
        n_hit = n_boundary = n_timeout = 0
        for pi in range(n_paths):
            res = hitting_time_walk(
                q, sigma, centers, eps, box, dt, t_max, rng.child(qi, pi)
            )
            if res.outcome == HitOutcome.HIT_CENTER:
                recorded[n_hit + n_boundary] = vals[res.center_index]
                n_hit += 1
            elif res.outcome == HitOutcome.HIT_DOMAIN_BOUNDARY:
                exit_state = res.path.states[-1]
                nearest = int(np.argmin(np.linalg.norm(centers - exit_state, axis=1)))
                recorded[n_hit + n_boundary] = vals[nearest]
                n_boundary += 1
            else:
                n_timeout += 1
        mean, stderr = _summarize(recorded[: n_hit + n_boundary])
        estimates.append(LandscapeEstimate(mean, stderr, n_hit, n_timeout, n_boundary))
    return estimates


def estimate_landscape(
    model: MlpModel,
    dataset,
    queries,
    *,
    kind: str,
    eps: float,
    sigma: float,
    n_paths: int,
    dt: float,
    t_max: float,
    rng: RngStream,
    box: Box | None = None,
    margin: float = 0.1,
) -> list[LandscapeEstimate]:
    """Estimate the loss landscape of a model over the joint (X, y) space.

    Queries are points in the joint space (feature columns then target
    columns).  Boundary data are the model's per-sample losses at the
    dataset's points.
    """
    x = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.targets, dtype=np.float64)
    centers = np.hstack([x, y])
    values = network.per_sample_losses(kind, model, x, y)
    if box is None:
        box = data_box(centers, margin)
    return estimate_landscape_values(
        centers,
        values,
        queries,
        eps=eps,
        sigma=sigma,
        box=box,
        n_paths=n_paths,
        dt=dt,
        t_max=t_max,
        rng=rng,
    )


@dataclass
class MaxPrincipleReport:
    """Interior-vs-boundary extreme comparison with a relative slack."""

    min_boundary: float
    max_boundary: float
    min_interior: float
    max_interior: float
    slack: float
    satisfied: bool


def max_principle_report(
    boundary_losses, interior: list[LandscapeEstimate], slack: float
) -> MaxPrincipleReport:
    """Check that interior estimates stay inside the boundary extremes.

    Satisfied iff  max_interior <= max_boundary * (1 + slack)  and
    min_interior >= min_boundary * (1 - slack) - slack.
    """
    b = np.asarray(boundary_losses, dtype=np.float64)
    means = np.array([e.mean for e in interior if e.valid])
    if b.size == 0 or means.size == 0:
        raise DomainError("need boundary losses and at least one valid interior estimate")
    lo_b, hi_b = float(b.min()), float(b.max())
    lo_i, hi_i = float(means.min()), float(means.max())
    ok = hi_i <= hi_b * (1.0 + slack) and lo_i >= lo_b * (1.0 - slack) - slack
    return MaxPrincipleReport(lo_b, hi_b, lo_i, hi_i, slack, bool(ok))


def dynkin_residual(
    test_fn,
    laplacian,
    x0,
    sigma: float,
    stop,
    n_paths: int,
    dt: float,
    rng: RngStream | np.random.Generator,
    t_max: float = 100.0,
):
    """Martingale residual of a test function along stopped diffusions.

    Returns (residual, stderr) of
    ``E[g(X_tau)] - g(x0) - E[integral_0^tau (sigma^2 / 2) lap_g(X_s) ds]``
    with a left-endpoint quadrature.  ``stop`` is either a fixed horizon
    (float) or a vectorized predicate ``(B, m) -> (B,) bool``; ``test_fn``
    and ``laplacian`` must likewise accept batches of states.
    """
    if n_paths < 1 or dt <= 0.0 or sigma < 0.0:
        raise DomainError("need n_paths >= 1, dt > 0 and sigma >= 0")
    gen = as_generator(rng)
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    m = x0.shape[0]
    states = np.tile(x0, (n_paths, 1))
    integral = np.zeros(n_paths)
    g0 = float(np.asarray(test_fn(x0[None, :])).reshape(-1)[0])

    if callable(stop):
        stopped = np.asarray(stop(states), dtype=bool)
        final = np.where(stopped[:, None], states, 0.0)
        n_steps = int(np.floor(t_max / dt + 1e-12))
        alive = ~stopped
        for _ in range(n_steps):
            if not alive.any():
                break
            live = states[alive]
            integral[alive] += 0.5 * sigma * sigma * np.asarray(laplacian(live)) * dt
            live = live + sigma * np.sqrt(dt) * gen.standard_normal(live.shape)
            states[alive] = live
            now_stopped = np.asarray(stop(live), dtype=bool)
            idx = np.flatnonzero(alive)[now_stopped]
            final[idx] = live[now_stopped]
            alive[idx] = False
        final[alive] = states[alive]
    else:
        n_steps = int(round(float(stop) / dt))
        for _ in range(n_steps):
            integral += 0.5 * sigma * sigma * np.asarray(laplacian(states)) * dt
            states = states + sigma * np.sqrt(dt) * gen.standard_normal(states.shape)
        final = states

    residuals = np.asarray(test_fn(final)) - g0 - integral
    return float(np.mean(residuals)), float(np.std(residuals, ddof=1) / np.sqrt(n_paths))


def two_layer_laplacian_bound(w0, w1) -> float:
    """Curvature cap 2 (W1 W0)(W1 W0)^T of a two-layer ReLU net's squared error."""
    w0 = np.asarray(w0, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    if w0.ndim != 2 or w1.ndim != 2 or w1.shape != (1, w0.shape[0]):
        raise ShapeError("expected w0 with shape (K, d) and w1 with shape (1, K)")
    v = (w1 @ w0).ravel()
    return float(2.0 * np.dot(v, v))


def two_layer_forward(w0, w1, x) -> float:
    """Scalar output of the two-layer ReLU net at a single input point."""
    w0 = np.asarray(w0, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return float((w1 @ np.maximum(w0 @ x, 0.0))[0])


def affine_shift_bound(w0, w1, a_t, b_t, x, y, c: float, tau_t: float) -> float:
    """Landscape cap after the affine input shift x -> A x + b.

    Evaluates  2 (W1 W0)(W1 W0)^T tau + C |delta| (|delta| + 2 e)  with
    delta the shift displacement and e the absolute residual at x.
    """
    if tau_t < 0.0 or c < 0.0:
        raise DomainError("tau_t and c must be >= 0")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    a_t = np.asarray(a_t, dtype=np.float64)
    b_t = np.atleast_1d(np.asarray(b_t, dtype=np.float64))
    if a_t.shape != (x.size, x.size) or b_t.shape != x.shape:
        raise ShapeError("affine map must match the input dimension")
    resid = abs(two_layer_forward(w0, w1, x) - float(np.asarray(y).reshape(-1)[0]))
    delta = float(np.linalg.norm(a_t @ x + b_t - x))
    return two_layer_laplacian_bound(w0, w1) * tau_t + c * delta * (delta + 2.0 * resid)


@dataclass
class HittingTimeEstimate:
    """Absorption-time statistics of epsilon-ball / boundary walks."""

    mean: float
    stderr: float
    censor_rate: float
    n_absorbed: int

    @property
    def valid(self) -> bool:
        return self.n_absorbed > 0


def estimate_hitting_time(
    start,
    sigma: float,
    centers,
    eps: float,
    box: Box,
    dt: float,
    t_max: float,
    n_paths: int,
    rng: RngStream,
) -> HittingTimeEstimate:
    """Mean time to absorption (ball entry or box exit), censoring timeouts."""
    if n_paths < 1:
        raise DomainError("need n_paths >= 1")
    centers = np.asarray(centers, dtype=np.float64)
    taus = np.empty(n_paths)
    n_absorbed = 0
    for pi in range(n_paths):
        res = hitting_time_walk(start, sigma, centers, eps, box, dt, t_max, rng.child(pi))
        if res.outcome != HitOutcome.TIMEOUT:
            taus[n_absorbed] = res.tau
            n_absorbed += 1
    mean, stderr = _summarize(taus[:n_absorbed])
    return HittingTimeEstimate(mean, stderr, 1.0 - n_absorbed / n_paths, n_absorbed)
