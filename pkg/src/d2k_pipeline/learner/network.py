"""Stacked gated recurrent network (long short-term memory cells) in numpy.

Weight layout per recurrent layer: ``wx`` (4H x D), ``wh`` (4H x H), ``b``
(4H,) with the gate blocks ordered input, forget, cell, output; a linear
readout ``wy`` (n_out x H), ``by`` (n_out,) maps the top hidden state to
the outputs.  Everything is float64 and fully deterministic.

The backward pass is hand-derived backprop-through-time; its gradients are
pinned against central finite differences by the test suite.  Parameter
groups are ordered bottom-up ``[layer 0, ..., layer L-1, readout]`` and
the backward pass descends only as far as the lowest unfrozen group, so a
readout-only fine-tune never touches the recurrence.
"""

from __future__ import annotations

import numpy as np


class LearnerError(ValueError):
    pass


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_weights(n_layers: int, hidden_size: int, input_dim: int, output_dim: int,
                 rng: np.random.Generator) -> list[dict]:
    """Uniform +-1/sqrt(fan_in) initialization for every tensor.

    Biases use the bound of their layer's recurrent fan-in (the hidden
    size), mirroring the usual recurrent-network initialization.
    """
    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    weights = []
    dim = input_dim
    for _ in range(n_layers):
        weights.append({
            "wx": uniform((4 * hidden_size, dim), dim),
            "wh": uniform((4 * hidden_size, hidden_size), hidden_size),
            "b": uniform((4 * hidden_size,), hidden_size),
        })
        dim = hidden_size
    weights.append({
        "wy": uniform((output_dim, hidden_size), hidden_size),
        "by": uniform((output_dim,), hidden_size),
    })
    return weights


def weight_shapes(weights: list[dict]) -> list[dict]:
    return [{k: v.shape for k, v in group.items()} for group in weights]


def n_layer_groups(weights: list[dict]) -> int:
    return len(weights)  # recurrent layers + readout


def clone_weights(weights: list[dict]) -> list[dict]:
    return [{k: v.copy() for k, v in group.items()} for group in weights]


def forward(weights: list[dict], x: np.ndarray, keep_cache: bool = False,
            keep_top: bool = False):
    """Run the network over a batch of sequences.

    x: (batch, time, input_dim) -> y: (batch, time, output_dim), both in the
    network's own (normalized) units.  State starts at zero for every call.
    Returns y, (y, top) with keep_top, or (y, top, cache) with keep_cache.
    """
    if x.ndim != 3:
        raise LearnerError(f"input must be (batch, time, features), got {x.shape}")
    n_layers = len(weights) - 1
    hidden = weights[0]["wh"].shape[1]
    batch, time, _ = x.shape
    if x.shape[2] != weights[0]["wx"].shape[1]:
        raise LearnerError(
            f"feature dim {x.shape[2]} does not match wx {weights[0]['wx'].shape}")
    if not np.all(np.isfinite(x)):
        raise LearnerError("input contains non-finite values")

    h = [np.zeros((batch, hidden)) for _ in range(n_layers)]
    c = [np.zeros((batch, hidden)) for _ in range(n_layers)]
    top = np.empty((batch, time, hidden))
    cache = None
    if keep_cache:
        cache = {
            # inputs per layer differ in width; everything else is (L,T,B,H)
            "inp": [np.empty((time, batch, weights[l]["wx"].shape[1]))
                    for l in range(n_layers)],
            "h_prev": np.empty((n_layers, time, batch, hidden)),
            "c_prev": np.empty((n_layers, time, batch, hidden)),
            "gi": np.empty((n_layers, time, batch, hidden)),
            "gf": np.empty((n_layers, time, batch, hidden)),
            "gg": np.empty((n_layers, time, batch, hidden)),
            "go": np.empty((n_layers, time, batch, hidden)),
            "tanh_c": np.empty((n_layers, time, batch, hidden)),
        }
    for t in range(time):
        inp = x[:, t, :]
        for l in range(n_layers):
            layer = weights[l]
            z = inp @ layer["wx"].T + h[l] @ layer["wh"].T + layer["b"]
            gi = sigmoid(z[:, :hidden])
            gf = sigmoid(z[:, hidden:2 * hidden])
            gg = np.tanh(z[:, 2 * hidden:3 * hidden])
            go = sigmoid(z[:, 3 * hidden:])
            c_new = gf * c[l] + gi * gg
            tanh_c = np.tanh(c_new)
            h_new = go * tanh_c
            if keep_cache:
                cache["inp"][l][t] = inp
                cache["h_prev"][l, t] = h[l]
                cache["c_prev"][l, t] = c[l]
                cache["gi"][l, t] = gi
                cache["gf"][l, t] = gf
                cache["gg"][l, t] = gg
                cache["go"][l, t] = go
                cache["tanh_c"][l, t] = tanh_c
            h[l], c[l] = h_new, c_new
            inp = h_new
        top[:, t, :] = inp
    readout = weights[-1]
    y = top @ readout["wy"].T + readout["by"]
    if keep_cache:
        return y, top, cache
    if keep_top:
        return y, top
    return y


def zero_gradients_like(weights: list[dict]) -> list[dict]:
    return [{k: np.zeros_like(v) for k, v in group.items()} for group in weights]


def mae_loss_and_gradients(weights: list[dict], x: np.ndarray, y_true: np.ndarray,
                           unfrozen_groups: set[int] | None = None):
    """Mean absolute error plus gradients for the unfrozen parameter groups.

    Returns (loss, grads) where grads matches the weights structure; frozen
    groups keep zero gradients.  ``unfrozen_groups`` indexes the bottom-up
    group order; None means everything is trainable.
    """
    n_layers = len(weights) - 1
    groups = set(range(n_layers + 1)) if unfrozen_groups is None else set(unfrozen_groups)
    lowest = min(groups)
    readout_only = lowest >= n_layers
    # readout-only updates never walk back through time: skip the gate cache
    if readout_only:
        y_pred, top = forward(weights, x, keep_top=True)
        cache = None
    else:
        y_pred, top, cache = forward(weights, x, keep_cache=True)
    batch, time, out_dim = y_pred.shape
    count = batch * time * out_dim
    diff = y_pred - y_true
    loss = float(np.abs(diff).sum() / count)
    dy = np.sign(diff) / count

    grads = zero_gradients_like(weights)
    readout = weights[-1]
    if n_layers in groups:
        grads[-1]["wy"] = np.einsum("bto,bth->oh", dy, top)
        grads[-1]["by"] = dy.sum(axis=(0, 1))

    if readout_only:
        return loss, grads

    hidden = weights[0]["wh"].shape[1]
    # gradient flowing down from the layer above, (time, batch, width)
    d_from_above = np.ascontiguousarray((dy @ readout["wy"]).transpose(1, 0, 2))
    dz = np.empty((batch, 4 * hidden))
    for l in range(n_layers - 1, lowest - 1, -1):
        layer = weights[l]
        want_grads = l in groups
        gi, gf = cache["gi"][l], cache["gf"][l]
        gg, go = cache["gg"][l], cache["go"][l]
        tanh_c, c_prev = cache["tanh_c"][l], cache["c_prev"][l]
        h_prev, inp = cache["h_prev"][l], cache["inp"][l]
        d_below = (np.empty((time, batch, layer["wx"].shape[1]))
                   if l > lowest else None)
        dh_next = np.zeros((batch, hidden))
        dc_next = np.zeros((batch, hidden))
        for t in range(time - 1, -1, -1):
            dh = d_from_above[t] + dh_next
            dc = dc_next + dh * go[t] * (1.0 - tanh_c[t] ** 2)
            dz[:, :hidden] = dc * gg[t] * gi[t] * (1.0 - gi[t])
            dz[:, hidden:2 * hidden] = dc * c_prev[t] * gf[t] * (1.0 - gf[t])
            dz[:, 2 * hidden:3 * hidden] = dc * gi[t] * (1.0 - gg[t] ** 2)
            dz[:, 3 * hidden:] = dh * tanh_c[t] * go[t] * (1.0 - go[t])
            if want_grads:
                grads[l]["wx"] += dz.T @ inp[t]
                grads[l]["wh"] += dz.T @ h_prev[t]
                grads[l]["b"] += dz.sum(axis=0)
            dh_next = dz @ layer["wh"]
            dc_next = dc * gf[t]
            if l > lowest:
                d_below[t] = dz @ layer["wx"]
        d_from_above = d_below
    return loss, grads


class AdamOptimizer:
    """Adaptive-moment optimizer with global gradient-norm clipping."""

    def __init__(self, weights: list[dict], learning_rate: float,
                 unfrozen_groups: set[int] | None = None,
                 betas=(0.9, 0.999), eps: float = 1e-8, clip_norm: float = 1.0):
        self.lr = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.groups = (set(range(len(weights))) if unfrozen_groups is None
                       else set(unfrozen_groups))
        self.step_count = 0
        self.m = zero_gradients_like(weights)
        self.v = zero_gradients_like(weights)

    def step(self, weights: list[dict], grads: list[dict]) -> None:
        if self.clip_norm is not None:
            sq = 0.0
            for g in self.groups:
                for arr in grads[g].values():
                    sq += float((arr * arr).sum())
            norm = np.sqrt(sq)
            if norm > self.clip_norm:
                scale = self.clip_norm / norm
                for g in self.groups:
                    for key in grads[g]:
                        grads[g][key] = grads[g][key] * scale
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for g in self.groups:
            for key, grad in grads[g].items():
                self.m[g][key] = self.beta1 * self.m[g][key] + (1 - self.beta1) * grad
                self.v[g][key] = self.beta2 * self.v[g][key] + (1 - self.beta2) * grad**2
                m_hat = self.m[g][key] / correction1
                v_hat = self.v[g][key] / correction2
                weights[g][key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
