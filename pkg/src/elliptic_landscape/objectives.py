"""Training objectives: plain empirical risk, mixup, and the Brownian-bridge
objective with optional gradient-magnitude importance weighting.

The bridge objective draws, for every anchor sample, ``n_bridges`` partner
points (inverse-distance or uniform law) and a pinned bridge through the
joint (input, target) space per partner, then averages the loss over a
uniform time grid that always contains both endpoints.  Bridge samples are
constants with respect to the model parameters: gradients flow through the
network only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import network
from .network import DomainError, Gradients, MlpModel, ShapeError
from .rng import RngStream, as_generator

VARIANTS = ("path_average", "source_term")
ENDPOINT_MODES = ("inverse_distance", "uniform")


@dataclass(frozen=True)
class EllipticConfig:
    """Knobs of the bridge objective.

    ``n_time`` counts grid points including both endpoints, so ``n_time``
    of 10 means two endpoints plus eight diffusion steps.  ``grad_weight``
    is the strength of the importance weighting; ``t_end`` rescales the
    bridge time range (the diffusion scale is the free knob, so this is
    usually left at 1).
    """

    n_bridges: int = 20
    n_time: int = 5
    sigma: float = 0.05
    grad_weight: float = 1.0
    variant: str = "path_average"
    endpoint_mode: str = "inverse_distance"
    simplex_project: bool = False
    t_end: float = 1.0

    def __post_init__(self) -> None:
        if self.n_bridges < 1:
            raise DomainError("n_bridges must be >= 1")
        if self.n_time < 2:
            raise DomainError("n_time must be >= 2 (both endpoints are on the grid)")
        if self.sigma < 0.0 or self.grad_weight < 0.0:
            raise DomainError("sigma and grad_weight must be >= 0")
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}")
        if self.endpoint_mode not in ENDPOINT_MODES:
            raise DomainError(f"unknown endpoint mode {self.endpoint_mode!r}")
        if self.t_end <= 0.0:
            raise DomainError("t_end must be > 0")


def pairwise_distances(points) -> np.ndarray:
    """Euclidean distance matrix; symmetric with an exactly zero diagonal."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ShapeError("need a 2-D array with at least two rows")
    return cdist(x, x)


@dataclass
class EndpointSampler:
    """Discrete partner law for bridge endpoints.

    With a distance matrix present, partner ``j`` of anchor ``i`` is drawn
    with mass proportional to ``1 / max(d(i, j), floor)``; without one the
    law is uniform over the other indices.
    """

    n: int
    distances: np.ndarray | None = None
    floor: float = 1e-12

    def __post_init__(self) -> None:
        if self.n < 2:
            raise DomainError("endpoint sampling needs a batch of at least 2")
        if self.floor <= 0.0:
            raise DomainError("distance floor must be > 0")
        if self.distances is not None:
            d = np.asarray(self.distances, dtype=np.float64)
            if d.shape != (self.n, self.n):
                raise ShapeError("distance matrix shape must be (n, n)")
            if np.any(d < 0.0) or np.any(np.diagonal(d) != 0.0) or not np.array_equal(d, d.T):
                raise DomainError("distances must be symmetric, nonnegative, zero diagonal")
            self.distances = d

    @classmethod
    def inverse_distance(cls, points, floor: float = 1e-12) -> "EndpointSampler":
        d = pairwise_distances(points)
        return cls(d.shape[0], d, floor)

    @classmethod
    def uniform(cls, n: int) -> "EndpointSampler":
        return cls(n, None)

    def partner_probs(self, anchor_index: int) -> np.ndarray:
        i = int(anchor_index)
        if not 0 <= i < self.n:
            raise DomainError(f"anchor index {i} outside batch of {self.n}")
        if self.distances is None:
            p = np.full(self.n, 1.0 / (self.n - 1))
        else:
            p = 1.0 / np.maximum(self.distances[i], self.floor)
        p[i] = 0.0
        return p / p.sum()


def sample_endpoint(
    anchor_index: int, sampler: EndpointSampler, rng: RngStream | np.random.Generator
) -> int:
    """Draw one partner index (never the anchor itself)."""
    gen = as_generator(rng)
    return int(gen.choice(sampler.n, p=sampler.partner_probs(anchor_index)))


def simplex_project(y) -> np.ndarray:
    """Absolute value then normalize; an all-zero vector maps to uniform."""
    v = np.abs(np.asarray(y, dtype=np.float64))
    s = v.sum()
    if s > 0.0:
        return v / s
    return np.full(v.shape, 1.0 / v.size)


def _project_rows(y: np.ndarray) -> np.ndarray:
    v = np.abs(y)
    s = v.sum(axis=1, keepdims=True)
    uniform = np.full_like(y, 1.0 / y.shape[1])
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s > 0.0, v / np.where(s > 0.0, s, 1.0), uniform)
    return out


def erm_objective(model: MlpModel, inputs, targets, kind: str):
    """Mean per-sample loss and its parameter gradients."""
    losses = network.per_sample_losses(kind, model, inputs, targets)
    grads = network.backward_params(kind, model, inputs, targets)
    return float(np.mean(losses)), grads


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha <= 0.0:
            raise DomainError("mixup alpha must be > 0")


def mixup_lambda(mix: MixupConfig, rng: RngStream | np.random.Generator) -> float:
    """One Beta(alpha, alpha) mixing coefficient."""
    return float(as_generator(rng).beta(mix.alpha, mix.alpha))


def mixup_objective(
    model: MlpModel,
    inputs,
    targets,
    kind: str,
    mix: MixupConfig,
    rng: RngStream | np.random.Generator,
    force_lam: float | None = None,
):
    """Loss on convex combinations with shuffled partners, one lambda per batch.

    ``force_lam`` pins the mixing coefficient (diagnostic/testing hook).
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape[0] < 2:
        raise DomainError("mixup needs a batch of at least 2 samples")
    gen = as_generator(rng)
    lam = mixup_lambda(mix, gen) if force_lam is None else float(force_lam)
    perm = gen.permutation(x.shape[0])
    xm = lam * x + (1.0 - lam) * x[perm]
    ym = lam * y + (1.0 - lam) * y[perm]
    losses = network.per_sample_losses(kind, model, xm, ym)
    grads = network.backward_params(kind, model, xm, ym)
    return float(np.mean(losses)), grads


def _draw_bridge_batch(z0, ends, sigma, n_steps, gen):
    """Pinned bridges from one start to many ends; (B, n_steps + 1, m) states.

    Same construction as ``sde.sample_brownian_bridge``, vectorized over the
    batch of end points.
    """
    b, m = ends.shape
    dt = 1.0 / n_steps
    times = np.arange(n_steps + 1) / n_steps
    w = np.concatenate(
        [
            np.zeros((b, 1, m)),
            np.cumsum(sigma * np.sqrt(dt) * gen.standard_normal((b, n_steps, m)), axis=1),
        ],
        axis=1,
    )
    anchored = w + z0
    states = anchored - times[None, :, None] * (anchored[:, -1:, :] - ends[:, None, :])
    states[:, 0] = z0
    states[:, -1] = ends
    return states


def _bridge_value_and_grads(
    model, inputs, targets, kind, cfg, sampler, rng, xi, force_self_partner
):
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError("batch inputs and targets must be matrices with equal rows")
    n, d = x.shape
    if n < 2:
        raise DomainError("bridge objective needs a batch of at least 2 samples")
    if not isinstance(rng, RngStream):
        raise DomainError("bridge objectives need an RngStream (per-anchor substreams)")
    z = np.hstack([x, y])
    n_steps = cfg.n_time - 1
    sigma_eff = cfg.sigma * np.sqrt(cfg.t_end)

    # One substream per anchor: partner indices first, then bridge noise.
    points = []
    for i in range(n):
        gen = rng.child(i).generator()
        if force_self_partner:
            partners = np.full(cfg.n_bridges, i)
        else:
            probs = sampler.partner_probs(i)
            partners = gen.choice(n, size=cfg.n_bridges, p=probs)
        states = _draw_bridge_batch(z[i], z[partners], sigma_eff, n_steps, gen)
        points.append(states.reshape(-1, d + y.shape[1]))
    pts = np.concatenate(points, axis=0)
    bx, by = pts[:, :d], pts[:, d:]
    if cfg.simplex_project:
        by = _project_rows(by)

    n_points = pts.shape[0]
    if cfg.variant == "source_term":
        ys = _project_rows(y) if cfg.simplex_project else y
        eval_x = np.vstack([bx, x])
        eval_y = np.vstack([by, ys])
        weights = np.concatenate([np.full(n_points, 1.0 / n_points), np.full(n, 1.0 / n)])
    else:
        eval_x, eval_y = bx, by
        weights = np.full(n_points, 1.0 / n_points)

    if xi == 0.0:
        losses = network.per_sample_losses(kind, model, eval_x, eval_y)
        value = float(np.dot(weights, losses))
        grads = network.backward_params(kind, model, eval_x, eval_y, sample_weights=weights)
        return value, grads
    # Importance weighting: each point contributes loss + xi * |grad_z loss|.
    # The gradient-magnitude bonus acts as a constant per-point multiplier on
    # the parameter gradient (no second-order terms through the input grad).
    losses, grad_z = network.loss_with_input_grad(kind, model, eval_x, eval_y)
    gnorm = np.linalg.norm(grad_z, axis=1)
    value = float(np.dot(weights, losses)) + xi * float(np.dot(weights, gnorm))
    grads = network.backward_params(
        kind, model, eval_x, eval_y, sample_weights=weights * (1.0 + xi * gnorm)
    )
    return value, grads


def bridge_objective(
    model: MlpModel,
    inputs,
    targets,
    kind: str,
    cfg: EllipticConfig,
    sampler: EndpointSampler | None,
    rng: RngStream,
    force_self_partner: bool = False,
):
    """Bridge objective without importance weighting (``grad_weight`` ignored).

    ``force_self_partner`` pins every partner to its anchor (diagnostic mode;
    with zero diffusion this reduces the objective to plain empirical risk).
    """
    return _bridge_value_and_grads(
        model, inputs, targets, kind, cfg, sampler, rng, 0.0, force_self_partner
    )


def importance_weighted_objective(
    model: MlpModel,
    inputs,
    targets,
    kind: str,
    cfg: EllipticConfig,
    sampler: EndpointSampler | None,
    rng: RngStream,
    force_self_partner: bool = False,
):
    """Bridge objective with per-point loss bonus ``grad_weight * |grad_z loss|``."""
    return _bridge_value_and_grads(
        model, inputs, targets, kind, cfg, sampler, rng, cfg.grad_weight, force_self_partner
    )
