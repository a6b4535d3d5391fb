"""Shared oracles: brute-force re-implementations kept independent of the
library code paths they check."""

import numpy as np
import pytest

import elliptic_landscape as el


def scalar_loop_forward(model, inputs):
    """Straight-line re-evaluation of the layer recurrence, scalar loops only."""
    n = inputs.shape[0]
    outputs = np.zeros((n, model.layer_sizes[-1]))
    for s in range(n):
        h = [float(v) for v in inputs[s]]
        for l in range(model.n_layers):
            w, b = model.weights[l], model.biases[l]
            nxt = []
            for j in range(w.shape[1]):
                acc = b[j]
                for i in range(w.shape[0]):
                    acc += h[i] * w[i, j]
                nxt.append(acc)
            if l < model.n_layers - 1:
                if model.activation == "relu":
                    h = [max(v, 0.0) for v in nxt]
                else:
                    h = [v if v > 0.0 else model.slope * v for v in nxt]
            else:
                h = nxt
        if model.head == "softmax":
            mx = max(h)
            e = [np.exp(v - mx) for v in h]
            tot = sum(e)
            h = [v / tot for v in e]
        outputs[s] = h
    return outputs


def mean_loss(kind, model, x, y):
    return float(np.mean(el.per_sample_losses(kind, model, x, y)))


def fd_param_grads(kind, model, x, y, h=1e-5):
    """Central finite differences of the mean loss over every parameter."""
    grads_w, grads_b = [], []
    for arrs, grads in ((model.weights, grads_w), (model.biases, grads_b)):
        for a in arrs:
            g = np.zeros_like(a)
            flat = a.reshape(-1)
            gflat = g.reshape(-1)
            for idx in range(flat.size):
                keep = flat[idx]
                flat[idx] = keep + h
                up = mean_loss(kind, model, x, y)
                flat[idx] = keep - h
                dn = mean_loss(kind, model, x, y)
                flat[idx] = keep
                gflat[idx] = (up - dn) / (2.0 * h)
            grads.append(g)
    return grads_w, grads_b


def fd_input_grads(kind, model, x, y, h=1e-5):
    """Central finite differences of each sample's own loss over (x_i, y_i)."""
    n, d = x.shape
    k = y.shape[1]
    out = np.zeros((n, d + k))
    for s in range(n):
        for j in range(d):
            xp, xm = x.copy(), x.copy()
            xp[s, j] += h
            xm[s, j] -= h
            up = el.per_sample_losses(kind, model, xp, y)[s]
            dn = el.per_sample_losses(kind, model, xm, y)[s]
            out[s, j] = (up - dn) / (2.0 * h)
        for j in range(k):
            yp, ym = y.copy(), y.copy()
            yp[s, j] += h
            ym[s, j] -= h
            up = el.per_sample_losses(kind, model, x, yp)[s]
            dn = el.per_sample_losses(kind, model, x, ym)[s]
            out[s, d + j] = (up - dn) / (2.0 * h)
    return out


def max_rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def random_model(rng, depth=None, width_cap=32, head=None, activation=None, in_dim=None, out_dim=None):
    """A random small MLP with varied depth/width/activation/head."""
    gen = rng.generator() if isinstance(rng, el.RngStream) else rng
    depth = depth if depth is not None else int(gen.integers(1, 4))
    in_dim = in_dim if in_dim is not None else int(gen.integers(1, 6))
    out_dim = out_dim if out_dim is not None else int(gen.integers(1, 4))
    sizes = [in_dim] + [int(gen.integers(2, width_cap + 1)) for _ in range(depth - 1)] + [out_dim]
    activation = activation or ("relu" if gen.random() < 0.5 else "leaky_relu")
    head = head or ("linear" if gen.random() < 0.5 else "softmax")
    return el.init_mlp(sizes, gen, activation=activation, slope=0.1, head=head)


def random_batch(gen, model, kind, n=6):
    x = gen.standard_normal((n, model.in_dim))
    if kind == "cross_entropy":
        raw = gen.random((n, model.out_dim)) + 0.05
        y = raw / raw.sum(axis=1, keepdims=True)
    else:
        y = gen.standard_normal((n, model.out_dim))
    return x, y


@pytest.fixture
def rng():
    return el.RngStream(20260809)
