"""Minimal dense-network engine in float64 numpy.

Supports exactly what the training objectives and the landscape verifier
need: forward evaluation, per-sample losses, analytic gradients with respect
to parameters *and* with respect to the joint (input, target) point, plus
SGD/Adam updates and a text checkpoint format.

Conventions: matrices are row-major with one sample per row; layer ``l``
maps activations ``h`` to ``h @ weights[l] + biases[l]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream, as_generator

HIDDEN_ACTIVATIONS = ("relu", "leaky_relu")
OUTPUT_HEADS = ("linear", "softmax")
LOSS_KINDS = ("mse", "cross_entropy")

# Targets may sit slightly off the simplex (e.g. finite-difference probes);
# anything beyond this is treated as a genuine domain violation.
SIMPLEX_TOL = 1e-4


class ShapeError(ValueError):
    """Array dimensions do not match the model or each other."""


class DomainError(ValueError):
    """Values are outside the mathematical domain of an operation."""


def _check_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")


def _as_matrix(name: str, a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D (rows = samples), got shape {a.shape}")
    _check_finite(name, a)
    return a


@dataclass
class MlpModel:
    """Layered dense network: sizes, weights, biases, activation, head."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    slope: float = 0.1
    head: str = "linear"

    def __post_init__(self) -> None:
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ShapeError("layer_sizes needs at least an input and an output size")
        if self.activation not in HIDDEN_ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise DomainError("leaky_relu slope must lie in (0, 1)")
        if self.head not in OUTPUT_HEADS:
            raise DomainError(f"unknown output head {self.head!r}")
        if len(self.weights) != self.n_layers or len(self.biases) != self.n_layers:
            raise ShapeError("one weight matrix and one bias vector per layer required")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_sizes[l], self.layer_sizes[l + 1])
            if w.shape != want:
                raise ShapeError(f"weights[{l}] has shape {w.shape}, expected {want}")
            if b.shape != (want[1],):
                raise ShapeError(f"biases[{l}] has shape {b.shape}, expected {(want[1],)}")
            _check_finite(f"weights[{l}]", w)
            _check_finite(f"biases[{l}]", b)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.slope,
            self.head,
        )


def init_mlp(
    layer_sizes,
    rng: RngStream | np.random.Generator,
    activation: str = "relu",
    slope: float = 0.1,
    head: str = "linear",
) -> MlpModel:
    """He-style random weights (std sqrt(2/fan_in)), zero biases."""
    gen = as_generator(rng)
    sizes = tuple(int(s) for s in layer_sizes)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(gen.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases, activation, slope, head)


@dataclass
class Gradients:
    """Per-parameter gradients mirroring an MlpModel's weights/biases."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.weights + self.biases)


def _activate(model: MlpModel, z: np.ndarray) -> np.ndarray:
    if model.activation == "relu":
        return np.maximum(z, 0.0)
    return np.where(z > 0.0, z, model.slope * z)


def _activate_grad(model: MlpModel, z: np.ndarray) -> np.ndarray:
    # Subgradient at the kink is taken on the non-positive branch.
    if model.activation == "relu":
        return (z > 0.0).astype(np.float64)
    return np.where(z > 0.0, 1.0, model.slope)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward_cached(model: MlpModel, inputs: np.ndarray):
    """Run the layer recurrence, keeping layer inputs and pre-activations."""
    layer_inputs = [inputs]
    pre_acts = []
    h = inputs
    for l in range(model.n_layers):
        z = h @ model.weights[l] + model.biases[l]
        pre_acts.append(z)
        if l < model.n_layers - 1:
            h = _activate(model, z)
            layer_inputs.append(h)
    logits = pre_acts[-1]
    out = _softmax(logits) if model.head == "softmax" else logits
    return out, layer_inputs, pre_acts


def forward(model: MlpModel, inputs) -> np.ndarray:
    """Evaluate the network on a batch; rows are samples."""
    x = _as_matrix("inputs", inputs)
    if x.shape[1] != model.in_dim:
        raise ShapeError(f"inputs have {x.shape[1]} columns, model expects {model.in_dim}")
    out, _, _ = _forward_cached(model, x)
    return out


def _validate_targets(kind: str, model: MlpModel, targets: np.ndarray) -> None:
    if kind not in LOSS_KINDS:
        raise DomainError(f"unknown loss kind {kind!r}")
    if targets.shape[1] != model.out_dim:
        raise ShapeError(
            f"targets have {targets.shape[1]} columns, model outputs {model.out_dim}"
        )
    if kind == "cross_entropy":
        if model.head != "softmax":
            raise DomainError("cross_entropy requires a softmax output head")
        sums = targets.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL) or np.any(targets < -SIMPLEX_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise DomainError(
                f"cross_entropy target row {bad} is not on the probability simplex"
            )


def _per_sample_losses_and_output_grads(kind, model, logits_or_out, targets):
    """Losses plus d(loss)/d(logits) and d(loss)/d(targets), all per sample."""
    if kind == "mse":
        out = _softmax(logits_or_out) if model.head == "softmax" else logits_or_out
        resid = out - targets
        losses = np.sum(resid * resid, axis=1)
        d_out = 2.0 * resid
        if model.head == "softmax":
            # Pull the gradient back through the softmax Jacobian.
            p = out
            d_logits = p * (d_out - np.sum(d_out * p, axis=1, keepdims=True))
        else:
            d_logits = d_out
        d_targets = -2.0 * resid
        return losses, d_logits, d_targets
    # cross entropy on a softmax head, log-sum-exp stabilized
    logp = _log_softmax(logits_or_out)
    losses = -np.sum(targets * logp, axis=1)
    d_logits = np.exp(logp) - targets
    d_targets = -logp
    return losses, d_logits, d_targets


def per_sample_losses(kind: str, model: MlpModel, inputs, targets) -> np.ndarray:
    """Vector of per-sample losses, no gradients."""
    x = _as_matrix("inputs", inputs)
    y = _as_matrix("targets", targets)
    if x.shape[0] != y.shape[0]:
        raise ShapeError("inputs and targets disagree on the number of rows")
    if x.shape[1] != model.in_dim:
        raise ShapeError(f"inputs have {x.shape[1]} columns, model expects {model.in_dim}")
    _validate_targets(kind, model, y)
    _, _, pre_acts = _forward_cached(model, x)
    losses, _, _ = _per_sample_losses_and_output_grads(kind, model, pre_acts[-1], y)
    return losses


def _backprop(model, layer_inputs, pre_acts, d_logits):
    """Backpropagate d(loss)/d(logits) to parameter and input gradients."""
    grads_w = [None] * model.n_layers
    grads_b = [None] * model.n_layers
    delta = d_logits
    for l in range(model.n_layers - 1, -1, -1):
        grads_w[l] = layer_inputs[l].T @ delta
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ model.weights[l].T) * _activate_grad(model, pre_acts[l - 1])
    d_inputs = delta @ model.weights[0].T
    return Gradients(grads_w, grads_b), d_inputs


def loss_with_input_grad(kind: str, model: MlpModel, inputs, targets):
    """Per-sample losses and the loss gradient at each joint (input, target) point.

    Row ``i`` of the returned gradient matrix is d loss_i / d (X_i, y_i),
    the concatenated input/target gradient of that sample's own loss.
    """
    x = _as_matrix("inputs", inputs)
    y = _as_matrix("targets", targets)
    if x.shape[0] != y.shape[0]:
        raise ShapeError("inputs and targets disagree on the number of rows")
    if x.shape[1] != model.in_dim:
        raise ShapeError(f"inputs have {x.shape[1]} columns, model expects {model.in_dim}")
    _validate_targets(kind, model, y)
    _, layer_inputs, pre_acts = _forward_cached(model, x)
    losses, d_logits, d_targets = _per_sample_losses_and_output_grads(
        kind, model, pre_acts[-1], y
    )
    # Unweighted deltas give each row's own-sample gradient because samples
    # do not interact anywhere in the forward pass.
    _, d_inputs = _backprop(model, layer_inputs, pre_acts, d_logits)
    return losses, np.hstack([d_inputs, d_targets])


def backward_params(
    kind: str,
    model: MlpModel,
    inputs,
    targets,
    sample_weights: np.ndarray | None = None,
) -> Gradients:
    """Gradients of the mean per-sample loss with respect to every parameter.

    With ``sample_weights`` given, differentiates ``sum_i w_i * loss_i``
    instead of the plain mean.
    """
    x = _as_matrix("inputs", inputs)
    y = _as_matrix("targets", targets)
    if x.shape[0] != y.shape[0]:
        raise ShapeError("inputs and targets disagree on the number of rows")
    if x.shape[1] != model.in_dim:
        raise ShapeError(f"inputs have {x.shape[1]} columns, model expects {model.in_dim}")
    _validate_targets(kind, model, y)
    n = x.shape[0]
    if sample_weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(sample_weights, dtype=np.float64)
        if w.shape != (n,):
            raise ShapeError("sample_weights must have one entry per sample")
    _, layer_inputs, pre_acts = _forward_cached(model, x)
    _, d_logits, _ = _per_sample_losses_and_output_grads(kind, model, pre_acts[-1], y)
    grads, _ = _backprop(model, layer_inputs, pre_acts, d_logits * w[:, None])
    return grads


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class OptimState:
    """SGD-with-momentum or Adam state; buffers mirror the model parameters."""

    kind: str
    momentum: float = 0.0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)


def sgd_state(model: MlpModel, momentum: float = 0.0, weight_decay: float = 0.0) -> OptimState:
    if momentum < 0.0 or weight_decay < 0.0:
        raise DomainError("momentum and weight_decay must be >= 0")
    return OptimState(
        "sgd",
        momentum=momentum,
        weight_decay=weight_decay,
        m_w=[np.zeros_like(w) for w in model.weights],
        m_b=[np.zeros_like(b) for b in model.biases],
    )


def adam_state(
    model: MlpModel, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8
) -> OptimState:
    return OptimState(
        "adam",
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        m_w=[np.zeros_like(w) for w in model.weights],
        m_b=[np.zeros_like(b) for b in model.biases],
        v_w=[np.zeros_like(w) for w in model.weights],
        v_b=[np.zeros_like(b) for b in model.biases],
    )


def optimizer_step(
    state: OptimState, model: MlpModel, grads: Gradients, learning_rate: float
):
    """Apply one deterministic update in place; returns (model, state)."""
    if not grads.all_finite():
        raise DomainError(
            f"non-finite gradient at optimizer step {state.step + 1}; "
            "the objective likely diverged"
        )
    state.step += 1
    params = list(zip(model.weights, model.biases))
    for l, (w, b) in enumerate(params):
        gw, gb = grads.weights[l], grads.biases[l]
        if state.kind == "sgd":
            if state.weight_decay > 0.0:
                gw = gw + state.weight_decay * w
                gb = gb + state.weight_decay * b
            if state.momentum > 0.0:
                state.m_w[l] = state.momentum * state.m_w[l] + gw
                state.m_b[l] = state.momentum * state.m_b[l] + gb
                gw, gb = state.m_w[l], state.m_b[l]
            w -= learning_rate * gw
            b -= learning_rate * gb
        elif state.kind == "adam":
            b1, b2 = state.beta1, state.beta2
            t = state.step
            for buf_m, buf_v, g, p in (
                (state.m_w, state.v_w, gw, w),
                (state.m_b, state.v_b, gb, b),
            ):
                buf_m[l] = b1 * buf_m[l] + (1.0 - b1) * g
                buf_v[l] = b2 * buf_v[l] + (1.0 - b2) * g * g
                m_hat = buf_m[l] / (1.0 - b1**t)
                v_hat = buf_v[l] / (1.0 - b2**t)
                p -= learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        else:
            raise DomainError(f"unknown optimizer kind {state.kind!r}")
    return model, state


# ---------------------------------------------------------------------------
# checkpoint serialization: flat text, 17 significant digits round-trips
# float64 bit-exactly


def save_checkpoint(model: MlpModel, path) -> None:
    lines = ["mlp-checkpoint 1"]
    lines.append("layer_sizes " + " ".join(str(s) for s in model.layer_sizes))
    if model.activation == "leaky_relu":
        lines.append(f"activation leaky_relu {model.slope:.17g}")
    else:
        lines.append("activation relu")
    lines.append(f"head {model.head}")
    for l in range(model.n_layers):
        w, b = model.weights[l], model.biases[l]
        lines.append(f"weights {l} {w.shape[0]} {w.shape[1]}")
        for row in w:
            lines.append(" ".join(f"{v:.17g}" for v in row))
        lines.append(f"biases {l} {b.shape[0]}")
        lines.append(" ".join(f"{v:.17g}" for v in b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> MlpModel:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0].split() != ["mlp-checkpoint", "1"]:
        raise DomainError(f"{path} is not a recognized checkpoint file")
    it = iter(lines[1:])

    def expect(tag):
        tok = next(it).split()
        if tok[0] != tag:
            raise DomainError(f"checkpoint parse error: expected {tag!r}, got {tok[0]!r}")
        return tok[1:]

    sizes = tuple(int(s) for s in expect("layer_sizes"))
    act = expect("activation")
    activation, slope = act[0], float(act[1]) if len(act) > 1 else 0.1
    head = expect("head")[0]
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        _, rows, cols = (int(v) for v in expect("weights"))
        w = np.array(
            [[float(v) for v in next(it).split()] for _ in range(rows)], dtype=np.float64
        )
        if w.shape != (rows, cols):
            raise DomainError(f"checkpoint weights {l} block is ragged")
        _, nb = (int(v) for v in expect("biases"))
        b = np.array([float(v) for v in next(it).split()], dtype=np.float64)
        if b.shape != (nb,):
            raise DomainError(f"checkpoint biases {l} block is ragged")
        weights.append(w)
        biases.append(b)
    return MlpModel(sizes, weights, biases, activation, slope, head)
