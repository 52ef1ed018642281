"""Differentiable building blocks with hand-derived backward passes.

Every layer keeps float64 parameters in per-name dictionaries and
accumulates gradients of the same shapes. forward() caches whatever the
matching backward() needs; layers are therefore single-use per step and
not thread-safe across concurrent passes.

Conventions: batches lead (B, T, F) for sequences, (B, F) for vectors;
weight matrices map inputs on the left, y = x @ W + b.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    exp_x = np.exp(x[~pos])
    out[~pos] = exp_x / (1.0 + exp_x)
    return out


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Layer:
    """Base: parameter/gradient bookkeeping shared by every layer."""

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grads(self) -> None:
        for name, value in self.params.items():
            self.grads[name] = np.zeros_like(value)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))


GATE_ORDER = ("i", "f", "g", "o")


class LSTM(Layer):
    """Single recurrent layer, canonical gating.

    Per step: i, f, o are sigmoid gates, g is the tanh candidate,
    c_t = f * c_{t-1} + i * g and h_t = o * tanh(c_t). The forget-gate
    bias starts at 1 so fresh cells default to remembering.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator,
                 return_sequence: bool = True, forget_bias: float = 1.0) -> None:
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.return_sequence = return_sequence
        for gate in GATE_ORDER:
            self.params[f"W_{gate}"] = xavier_uniform(rng, input_size, hidden_size)
            self.params[f"U_{gate}"] = xavier_uniform(rng, hidden_size, hidden_size)
            bias = np.zeros(hidden_size)
            if gate == "f":
                bias[:] = forget_bias
            self.params[f"b_{gate}"] = bias
        self.zero_grads()
        self._cache: dict | None = None

    def _stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.concatenate([self.params[f"W_{g}"] for g in GATE_ORDER], axis=1)
        u = np.concatenate([self.params[f"U_{g}"] for g in GATE_ORDER], axis=1)
        b = np.concatenate([self.params[f"b_{g}"] for g in GATE_ORDER])
        return w, u, b

    def step(self, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
        """One cell update; used directly by the unrolled-forward tests."""
        w, u, b = self._stacked()
        z = x_t @ w + h_prev @ u + b
        hs = self.hidden_size
        i = sigmoid(z[:, :hs])
        f = sigmoid(z[:, hs:2 * hs])
        g = np.tanh(z[:, 2 * hs:3 * hs])
        o = sigmoid(z[:, 3 * hs:])
        c_t = f * c_prev + i * g
        h_t = o * np.tanh(c_t)
        return h_t, c_t

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeMismatch(
                f"LSTM expects (B, T, {self.input_size}), got {x.shape}"
            )
        batch, steps, _ = x.shape
        hs = self.hidden_size
        w, u, b = self._stacked()
        h = np.zeros((batch, hs))
        c = np.zeros((batch, hs))
        h_seq = np.empty((batch, steps, hs))
        cache = {"x": x, "gates": [], "c_prev": [], "h_prev": [], "tanh_c": []}
        for t in range(steps):
            cache["h_prev"].append(h)
            cache["c_prev"].append(c)
            z = x[:, t] @ w + h @ u + b
            i = sigmoid(z[:, :hs])
            f = sigmoid(z[:, hs:2 * hs])
            g = np.tanh(z[:, 2 * hs:3 * hs])
            o = sigmoid(z[:, 3 * hs:])
            c = f * c + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            h_seq[:, t] = h
            cache["gates"].append((i, f, g, o))
            cache["tanh_c"].append(tanh_c)
        cache["w"], cache["u"] = w, u
        self._cache = cache
        return h_seq if self.return_sequence else h

    def backward(self, dout: np.ndarray) -> np.ndarray:
        cache = self._cache
        x = cache["x"]
        batch, steps, _ = x.shape
        hs = self.hidden_size
        w, u = cache["w"], cache["u"]

        if self.return_sequence:
            dh_seq = dout
        else:
            dh_seq = np.zeros((batch, steps, hs))
            dh_seq[:, -1] = dout

        dw = np.zeros_like(w)
        du = np.zeros_like(u)
        db = np.zeros(4 * hs)
        dx = np.zeros_like(x)
        dh_next = np.zeros((batch, hs))
        dc_next = np.zeros((batch, hs))
        for t in range(steps - 1, -1, -1):
            i, f, g, o = cache["gates"][t]
            tanh_c = cache["tanh_c"][t]
            c_prev = cache["c_prev"][t]
            h_prev = cache["h_prev"][t]

            dh = dh_seq[:, t] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c**2) + dc_next
            df = dc * c_prev
            di = dc * g
            dg = dc * i

            dz = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g**2), do * o * (1.0 - o)],
                axis=1,
            )
            dw += x[:, t].T @ dz
            du += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t] = dz @ w.T
            dh_next = dz @ u.T
            dc_next = dc * f

        for idx, gate in enumerate(GATE_ORDER):
            self.grads[f"W_{gate}"] += dw[:, idx * hs:(idx + 1) * hs]
            self.grads[f"U_{gate}"] += du[:, idx * hs:(idx + 1) * hs]
            self.grads[f"b_{gate}"] += db[idx * hs:(idx + 1) * hs]
        return dx


class Dense(Layer):
    """Affine map with optional rectification."""

    def __init__(self, input_size: int, output_size: int, rng: np.random.Generator,
                 relu: bool = False) -> None:
        super().__init__()
        self.relu = relu
        self.params["W"] = xavier_uniform(rng, input_size, output_size)
        self.params["b"] = np.zeros(output_size)
        self.zero_grads()
        self._cache: tuple | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.params["W"].shape[0]:
            raise ShapeMismatch(
                f"Dense expects width {self.params['W'].shape[0]}, got {x.shape}"
            )
        z = x @ self.params["W"] + self.params["b"]
        out = np.maximum(z, 0.0) if self.relu else z
        self._cache = (x, z)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, z = self._cache
        dz = dout * (z > 0.0) if self.relu else dout
        self.grads["W"] += x.T @ dz
        self.grads["b"] += dz.sum(axis=0)
        return dz @ self.params["W"].T

    def active_pattern(self) -> np.ndarray | None:
        """Sign pattern of the last pre-activation (rectified layers only)."""
        if not self.relu or self._cache is None:
            return None
        return self._cache[1] > 0.0


class Dropout:
    """Inverted dropout; identity at rate 0 and outside training."""

    def __init__(self, rate: float, rng: np.random.Generator) -> None:
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return dout
        return dout * self._mask


def _softmax_last(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


class ScaledDotAttention:
    """softmax(Q K^T / sqrt(D)) V, single head, no projections.

    Queries, keys, and values are used as given; any learning happens
    in the recurrent layers that produce them. The most recent weight
    matrix is kept on the instance for inspection.
    """

    def __init__(self) -> None:
        self._cache: tuple | None = None
        self.last_weights: np.ndarray | None = None

    def forward(self, q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
        if q.shape[-1] != k.shape[-1] or k.shape[:-1] != v.shape[:-1]:
            raise ShapeMismatch(f"attention shapes {q.shape}, {k.shape}, {v.shape}")
        scale = 1.0 / np.sqrt(q.shape[-1])
        scores = q @ np.swapaxes(k, -1, -2) * scale
        weights = _softmax_last(scores)
        out = weights @ v
        self._cache = (q, k, v, weights, scale)
        self.last_weights = weights
        return out

    def backward(self, dout: np.ndarray):
        q, k, v, weights, scale = self._cache
        dweights = dout @ np.swapaxes(v, -1, -2)
        dv = np.swapaxes(weights, -1, -2) @ dout
        dscores = weights * (dweights - (dweights * weights).sum(axis=-1, keepdims=True))
        dq = dscores @ k * scale
        dk = np.swapaxes(dscores, -1, -2) @ q * scale
        return dq, dk, dv


def scaled_dot_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Functional single-instance attention for (Tq, D) inputs."""
    attn = ScaledDotAttention()
    return attn.forward(q[None], k[None], v[None])[0]


def self_attention(sequence: np.ndarray) -> np.ndarray:
    """Each position attends over the same sequence."""
    return scaled_dot_attention(sequence, sequence, sequence)


def cross_attention(query_sequence: np.ndarray, context_sequence: np.ndarray) -> np.ndarray:
    """Query positions attend over the other stream."""
    return scaled_dot_attention(query_sequence, context_sequence, context_sequence)


class GatedFusion(Layer):
    """Sigmoid-gated convex blend of two equal-width vectors.

    g = sigmoid([a; b] @ W + bias), output g * a + (1 - g) * b. With
    zero parameters the gate is exactly 0.5 and the output the exact
    mean of the inputs.
    """

    def __init__(self, width: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.width = width
        self.params["W"] = xavier_uniform(rng, 2 * width, width)
        self.params["b"] = np.zeros(width)
        self.zero_grads()
        self._cache: tuple | None = None
        self.last_gate: np.ndarray | None = None

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.shape != b.shape or a.shape[-1] != self.width:
            raise ShapeMismatch(f"gated fusion widths {a.shape} vs {b.shape}")
        u = np.concatenate([a, b], axis=-1)
        gate = sigmoid(u @ self.params["W"] + self.params["b"])
        self._cache = (a, b, u, gate)
        self.last_gate = gate
        return gate * a + (1.0 - gate) * b

    def backward(self, dout: np.ndarray):
        a, b, u, gate = self._cache
        dgate = dout * (a - b)
        dz = dgate * gate * (1.0 - gate)
        self.grads["W"] += u.T @ dz
        self.grads["b"] += dz.sum(axis=0)
        du = dz @ self.params["W"].T
        da = dout * gate + du[:, : self.width]
        db = dout * (1.0 - gate) + du[:, self.width:]
        return da, db


def residual_fuse(attended: np.ndarray, original: np.ndarray) -> np.ndarray:
    """Element-wise sum of the attended and original representations."""
    return attended + original


class MeanPool:
    """Average over the time axis of a (B, T, D) sequence."""

    def __init__(self) -> None:
        self._steps: int | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._steps = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return np.repeat(dout[:, None, :], self._steps, axis=1) / self._steps
