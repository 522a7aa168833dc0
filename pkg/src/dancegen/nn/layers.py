"""The five layer types the dance model is built from.

Each layer owns ``params`` and matching ``grads`` dicts of float arrays.
``forward`` caches what ``backward`` needs; ``backward`` takes the
upstream gradient, *accumulates* into ``grads`` and returns the gradient
with respect to the input.  Call :meth:`Layer.zero_grad` between updates.
"""
from __future__ import annotations

import numpy as np

from ..exceptions import InvalidInputError, ShapeError, StateError


def _uniform(rng, bound, shape, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

    def zero_grad(self):
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)

    def forward_step(self, x):
        """Forward pass that hands the cache back instead of keeping it."""
        out = self.forward(x)
        cache, self._cache = self._cache, None
        return out, cache

    def backward_step(self, dout, cache):
        self._cache = cache
        return self.backward(dout)

    def _pop_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a cached forward pass")
        cache, self._cache = self._cache, None
        return cache


class Conv2D(Layer):
    """Valid (unpadded) stride-1 cross-correlation over channels-last (N, W, H, C) inputs.

    The weight has shape (kw, kh, in_channels, out_channels).  ``bias=False``
    drops the additive bias, which is redundant in front of batch normalization.
    """

    def __init__(self, in_channels, out_channels, kernel=(3, 2), rng=None, dtype=np.float64,
                 bias=True):
        super().__init__()
        rng = np.random.default_rng(rng)
        kw, kh = kernel
        self.kernel = (int(kw), int(kh))
        bound = 1.0 / np.sqrt(in_channels * kw * kh)
        self.params["weight"] = _uniform(rng, bound, (kw, kh, in_channels, out_channels), dtype)
        if bias:
            self.params["bias"] = np.zeros(out_channels, dtype=dtype)
        self.zero_grad()

    def output_shape(self, w, h):
        kw, kh = self.kernel
        return w - kw + 1, h - kh + 1

    def _columns(self, x, wo, ho):
        """(N * wo * ho, kw * kh * C) matrix of input patches."""
        kw, kh = self.kernel
        win = np.lib.stride_tricks.sliding_window_view(x, (kw, kh), axis=(1, 2))
        return win.transpose(0, 1, 2, 4, 5, 3).reshape(x.shape[0] * wo * ho, -1)

    def forward(self, x):
        K = self.params["weight"]
        if x.ndim != 4 or x.shape[3] != K.shape[2]:
            raise ShapeError(f"conv expects (N, W, H, {K.shape[2]}), got {x.shape}")
        wo, ho = self.output_shape(x.shape[1], x.shape[2])
        if wo < 1 or ho < 1:
            raise ShapeError(f"kernel {self.kernel} larger than input {x.shape[1:3]}")
        cols = self._columns(x, wo, ho)
        out = cols @ K.reshape(-1, K.shape[3])
        if "bias" in self.params:
            out += self.params["bias"]
        self._cache = (x.shape, cols)
        return out.reshape(x.shape[0], wo, ho, K.shape[3])

    def backward(self, dout):
        (N, W, H, C), cols = self._pop_cache()
        K = self.params["weight"]
        kw, kh = self.kernel
        wo, ho = dout.shape[1], dout.shape[2]
        d = dout.reshape(N * wo * ho, -1)
        self.grads["weight"] += (cols.T @ d).reshape(K.shape)
        if "bias" in self.params:
            self.grads["bias"] += d.sum(axis=0)
        dx = np.zeros((N, W, H, C), dtype=cols.dtype)
        for i in range(kw):
            for j in range(kh):
                dx[:, i:i + wo, j:j + ho] += (d @ K[i, j].T).reshape(N, wo, ho, C)
        return dx


class BatchNorm(Layer):
    """Per-channel batch normalization over the last axis of (N, C) or (N, W, H, C) inputs.

    ``mode`` is ``"train"`` (batch statistics, running stats updated) or
    ``"infer"`` (running statistics only).
    """

    def __init__(self, channels, eps=1e-5, momentum=0.9, dtype=np.float64):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.mode = "train"
        self.track_running_stats = True
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)
        self.zero_grad()

    @staticmethod
    def _axes_shape(x):
        axes = tuple(range(x.ndim - 1))
        shape = (1,) * (x.ndim - 1) + (-1,)
        return axes, shape

    def forward(self, x):
        axes, shape = self._axes_shape(x)
        gamma = self.params["gamma"].reshape(shape)
        beta = self.params["beta"].reshape(shape)
        if self.mode == "train":
            if x.shape[0] < 2:
                raise InvalidInputError("batch norm in train mode needs a batch of at least 2")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if self.track_running_stats:
                m = self.momentum
                self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mean
                self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
        elif self.mode == "infer":
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        else:
            raise StateError(f"unknown batch norm mode {self.mode!r}")
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        self._cache = (self.mode, xhat, inv_std, axes, shape)
        return gamma * xhat + beta

    def backward(self, dout):
        mode, xhat, inv_std, axes, shape = self._pop_cache()
        gamma = self.params["gamma"].reshape(shape)
        self.grads["gamma"] += np.sum(dout * xhat, axis=axes)
        self.grads["beta"] += np.sum(dout, axis=axes)
        dxhat = dout * gamma
        if mode == "infer":
            return dxhat * inv_std.reshape(shape)
        count = dout.size // dout.shape[-1]
        s1 = np.sum(dxhat, axis=axes).reshape(shape)
        s2 = np.sum(dxhat * xhat, axis=axes).reshape(shape)
        return inv_std.reshape(shape) * (dxhat - s1 / count - xhat * s2 / count)


class ELU(Layer):
    def __init__(self, alpha=1.0):
        super().__init__()
        self.alpha = alpha

    def forward(self, x):
        out = np.where(x > 0, x, self.alpha * np.expm1(np.minimum(x, 0)))
        self._cache = out
        return out

    def backward(self, dout):
        out = self._pop_cache()
        # out > 0 exactly where x > 0; below, d out / dx = out + alpha
        return np.where(out > 0, dout, dout * (out + self.alpha))


def elu(x, alpha=1.0):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0)))


class Linear(Layer):
    def __init__(self, in_features, out_features, rng=None, dtype=np.float64):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.params["weight"] = _uniform(rng, 1.0 / np.sqrt(in_features), (in_features, out_features), dtype)
        self.params["bias"] = np.zeros(out_features, dtype=dtype)
        self.zero_grad()

    def forward(self, x):
        W = self.params["weight"]
        if x.shape[-1] != W.shape[0]:
            raise ShapeError(f"linear expects {W.shape[0]} input features, got {x.shape[-1]}")
        self._cache = x
        return x @ W + self.params["bias"]

    def backward(self, dout):
        x = self._pop_cache()
        W = self.params["weight"]
        x2 = x.reshape(-1, x.shape[-1])
        d2 = dout.reshape(-1, dout.shape[-1])
        self.grads["weight"] += x2.T @ d2
        self.grads["bias"] += d2.sum(axis=0)
        return dout @ W.T


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LSTM(Layer):
    """Single LSTM layer; gate blocks in the weight columns are ordered i, f, o, g.

    Use :meth:`forward_sequence` / :meth:`backward_sequence` when the whole
    input sequence is known up front, or :meth:`step` /
    :meth:`step_backward` when inputs are produced on the fly (the caller
    keeps the per-step caches).
    """

    def __init__(self, in_features, hidden, forget_bias=1.0, rng=None, dtype=np.float64):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.in_features = in_features
        self.hidden = hidden
        self.params["Wx"] = _uniform(rng, 1.0 / np.sqrt(in_features), (in_features, 4 * hidden), dtype)
        self.params["Wh"] = _uniform(rng, 1.0 / np.sqrt(hidden), (hidden, 4 * hidden), dtype)
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden:2 * hidden] = forget_bias
        self.params["b"] = b
        self.zero_grad()

    def initial_state(self, batch, dtype=np.float64):
        return np.zeros((batch, self.hidden), dtype=dtype), np.zeros((batch, self.hidden), dtype=dtype)

    def _gates(self, zx, h, c):
        H = self.hidden
        z = zx + h @ self.params["Wh"] + self.params["b"]
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        o = sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        return h_new, c_new, (h, c, i, f, o, g, tc)

    def _gates_backward(self, dh, dc, cache):
        # returns d(pre-activation) and grads wrt previous h, c
        h, c, i, f, o, g, tc = cache
        dc = dc + dh * o * (1.0 - tc * tc)
        do = dh * tc
        di = dc * g
        dg = dc * i
        df = dc * c
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g * g),
        ], axis=1)
        self.grads["Wh"] += h.T @ dz
        self.grads["b"] += dz.sum(axis=0)
        return dz, dz @ self.params["Wh"].T, dc * f

    def step(self, x, h, c):
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"LSTM expects {self.in_features} inputs, got {x.shape[-1]}")
        if h.shape[-1] != self.hidden or c.shape[-1] != self.hidden:
            raise ShapeError(f"LSTM state must have width {self.hidden}")
        h_new, c_new, gate_cache = self._gates(x @ self.params["Wx"], h, c)
        return h_new, c_new, (x, gate_cache)

    def step_backward(self, dh, dc, cache):
        if cache is None:
            raise StateError("LSTM.step_backward needs the cache returned by step()")
        x, gate_cache = cache
        dz, dh_prev, dc_prev = self._gates_backward(dh, dc, gate_cache)
        self.grads["Wx"] += x.T @ dz
        return dz @ self.params["Wx"].T, dh_prev, dc_prev

    def forward_sequence(self, X, h0=None, c0=None):
        """X: (T, B, D) -> hidden outputs (T, B, hidden) and the final (h, c)."""
        T, B, D = X.shape
        if D != self.in_features:
            raise ShapeError(f"LSTM expects {self.in_features} inputs, got {D}")
        h, c = self.initial_state(B, X.dtype)
        if h0 is not None:
            h = h0
        if c0 is not None:
            c = c0
        ZX = (X.reshape(T * B, D) @ self.params["Wx"]).reshape(T, B, -1)
        out = np.empty((T, B, self.hidden), dtype=X.dtype)
        caches = []
        for t in range(T):
            h, c, gc = self._gates(ZX[t], h, c)
            out[t] = h
            caches.append(gc)
        self._cache = (X, caches)
        return out, (h, c)

    def backward_sequence(self, dH, dh_last=None, dc_last=None):
        """Backprop through time; returns dX and the gradient for (h0, c0)."""
        X, caches = self._pop_cache()
        T, B, D = X.shape
        dh = np.zeros((B, self.hidden), dtype=X.dtype) if dh_last is None else dh_last
        dc = np.zeros((B, self.hidden), dtype=X.dtype) if dc_last is None else dc_last
        dZ = np.empty((T, B, 4 * self.hidden), dtype=X.dtype)
        for t in range(T - 1, -1, -1):
            dz, dh, dc = self._gates_backward(dh + dH[t], dc, caches[t])
            dZ[t] = dz
        dZ2 = dZ.reshape(T * B, -1)
        self.grads["Wx"] += X.reshape(T * B, D).T @ dZ2
        return (dZ2 @ self.params["Wx"].T).reshape(T, B, D), dh, dc

    def forward(self, X):
        return self.forward_sequence(X)[0]

    def backward(self, dH):
        return self.backward_sequence(dH)[0]
