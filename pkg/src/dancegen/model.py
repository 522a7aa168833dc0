"""Audio-to-motion sequence model.

Encoder: four valid convolutions (each followed by batch norm and ELU)
over a 1 x bins x frames power block, three stacked LSTMs and an
ELU-activated projection to the encoder feature ``g_t``.

Decoder: three stacked LSTMs fed ``[g_t, y'_t]`` and an ELU-activated
projection to the next motion frame ``m_{t+1}``.  In the default
auto-conditioned mode ``y'_0`` is the ground-truth first frame during
training (zeros at generation time) and ``y'_t = m_t`` afterwards, so
training sees the same feedback it will see when generating.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_blocks
from .exceptions import InvalidInputError, ShapeError, StateError
from .nn.layers import ELU, LSTM, BatchNorm, Conv2D, Linear

FEEDBACK_MODES = ("auto", "teacher", "none")


@dataclass
class ModelConfig:
    n_bins: int = 81
    n_frames: int = 5
    conv_channels: tuple[int, ...] = (16, 32, 64, 65)
    conv_kernel: tuple[int, int] = (3, 2)
    lstm_width: int = 500
    enc_layers: int = 3
    dec_layers: int = 3
    enc_out: int = 65
    motion_dim: int = 71
    feedback: str = "auto"

    def __post_init__(self):
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        self.conv_kernel = tuple(int(k) for k in self.conv_kernel)
        for name in ("n_bins", "n_frames", "lstm_width", "enc_layers", "dec_layers",
                     "enc_out", "motion_dim"):
            if int(getattr(self, name)) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if any(c <= 0 for c in self.conv_channels) or any(k <= 0 for k in self.conv_kernel):
            raise InvalidInputError("conv channels and kernel sizes must be positive")
        if self.feedback not in FEEDBACK_MODES:
            raise InvalidInputError(f"feedback must be one of {FEEDBACK_MODES}, got {self.feedback!r}")
        w, h = self.conv_output_shape
        if w < 1 or h < 1:
            raise ShapeError(f"conv stack does not fit a {self.n_bins}x{self.n_frames} block")

    @property
    def dec_in(self) -> int:
        return self.enc_out + self.motion_dim

    @property
    def conv_output_shape(self) -> tuple[int, int]:
        n = len(self.conv_channels)
        return (self.n_bins - n * (self.conv_kernel[0] - 1),
                self.n_frames - n * (self.conv_kernel[1] - 1))

    @property
    def flat_dim(self) -> int:
        w, h = self.conv_output_shape
        return self.conv_channels[-1] * w * h

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["conv_kernel"] = list(self.conv_kernel)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class Batch:
    """Aligned training windows.

    blocks: (B, T, bins, frames); motion: (B, T + 1, dim) ground truth
    where step ``t`` predicts ``motion[:, t + 1]``; labels: (B, T - 1) weak
    labels for the transition between steps ``t`` and ``t + 1`` (-1 where
    no label exists).
    """

    blocks: np.ndarray
    motion: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        B, T = self.blocks.shape[:2]
        if self.motion.shape[:2] != (B, T + 1):
            raise ShapeError(f"motion window {self.motion.shape[:2]} does not match blocks {(B, T)} + 1")
        if self.labels.shape != (B, T - 1):
            raise ShapeError(f"labels shape {self.labels.shape}, expected {(B, T - 1)}")


@dataclass
class LossTerms:
    mse: float
    contrastive: float
    total: float


@dataclass
class DecoderState:
    h: list[np.ndarray]
    c: list[np.ndarray]
    last_output: np.ndarray
    t: int = 0


@dataclass
class EncoderState:
    h: list[np.ndarray]
    c: list[np.ndarray]


@dataclass
class Generation:
    motion: np.ndarray
    latencies_ms: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def latency_report(self) -> dict:
        lat = self.latencies_ms
        return {"frames": int(lat.shape[0]),
                "mean_ms": float(lat.mean()) if lat.size else 0.0,
                "max_ms": float(lat.max()) if lat.size else 0.0}


def mse_loss(y, m) -> float:
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if y.shape != m.shape:
        raise ShapeError(f"mse shapes differ: {y.shape} vs {m.shape}")
    if y.size == 0:
        raise InvalidInputError("mse of an empty batch")
    return float(np.mean((y - m) ** 2))


def feature_distance(g_t, g_next) -> np.ndarray:
    """Squared Euclidean distance between consecutive encoder features."""
    diff = np.asarray(g_next, dtype=np.float64) - np.asarray(g_t, dtype=np.float64)
    return np.sum(diff * diff, axis=-1)


def contrastive_terms(dist, labels) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    d = np.asarray(labels, dtype=np.float64)
    return 0.5 * (d * dist ** 2 + (1.0 - d) * np.maximum(1.0 - dist, 0.0) ** 2)


def contrastive_loss(g_t, g_next, label) -> float:
    """Pull features together when the label is 1, push them to distance >= 1 when it is 0."""
    if label not in (0, 1):
        raise InvalidInputError(f"weak label must be 0 or 1, got {label}")
    return float(contrastive_terms(feature_distance(g_t, g_next), label))


def combined_loss(mse: float, contrastive: float, use_contrastive: bool = True) -> float:
    if not use_contrastive:
        return float(mse)
    return float(mse + max(contrastive, 0.0))


class DanceNet:
    """Encoder/decoder network with explicit forward and backward passes."""

    def __init__(self, config: ModelConfig | None = None, seed=None, dtype=np.float64):
        self.config = config = config or ModelConfig()
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.layers: dict = {}
        in_ch = 1
        for i, ch in enumerate(config.conv_channels, start=1):
            self.layers[f"conv{i}"] = Conv2D(in_ch, ch, config.conv_kernel, rng, dtype, bias=False)
            self.layers[f"bn{i}"] = BatchNorm(ch, dtype=dtype)
            in_ch = ch
        width = config.flat_dim
        for i in range(1, config.enc_layers + 1):
            self.layers[f"enc_lstm{i}"] = LSTM(width, config.lstm_width, rng=rng, dtype=dtype)
            width = config.lstm_width
        self.layers["fc01"] = Linear(width, config.enc_out, rng, dtype)
        width = config.dec_in
        for i in range(1, config.dec_layers + 1):
            self.layers[f"dec_lstm{i}"] = LSTM(width, config.lstm_width, rng=rng, dtype=dtype)
            width = config.lstm_width
        self.layers["out"] = Linear(width, config.motion_dim, rng, dtype)
        n_conv = len(config.conv_channels)
        self._conv_names = [(f"conv{i}", f"bn{i}") for i in range(1, n_conv + 1)]
        self._conv_act = [ELU() for _ in range(n_conv)]
        self._enc_names = [f"enc_lstm{i}" for i in range(1, config.enc_layers + 1)]
        self._dec_names = [f"dec_lstm{i}" for i in range(1, config.dec_layers + 1)]
        self._fc_act = ELU()
        self._out_act = ELU()
        self._tape = None
        self._dec_tape = None

    # -- parameter access -------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": p for ln, layer in self.layers.items() for pn, p in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": g for ln, layer in self.layers.items() for pn, g in layer.grads.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{bn}": b for ln, layer in self.layers.items() for bn, b in layer.buffers.items()}

    def load_state(self, params: dict, buffers: dict | None = None):
        """Copy arrays into the network, checking every name and shape."""
        own = self.parameters()
        missing = set(own) - set(params)
        if missing:
            raise StateError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for name, p in own.items():
            src = np.asarray(params[name])
            if src.shape != p.shape:
                raise ShapeError(f"parameter {name}: checkpoint shape {src.shape}, model expects {p.shape}")
            p[...] = src
        for name, b in (buffers or {}).items():
            ln, bn = name.split(".", 1)
            if ln not in self.layers or bn not in self.layers[ln].buffers:
                raise StateError(f"unknown buffer {name}")
            if np.shape(b) != self.layers[ln].buffers[bn].shape:
                raise ShapeError(f"buffer {name} has the wrong shape")
            self.layers[ln].buffers[bn] = np.array(b, dtype=self.dtype)

    def zero_grad(self):
        for layer in self.layers.values():
            layer.zero_grad()

    def set_mode(self, mode: str):
        for conv_name, bn_name in self._conv_names:
            self.layers[bn_name].mode = mode

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    # -- encoder ----------------------------------------------------------

    def _conv_stack(self, x):
        for (cn, bn), act in zip(self._conv_names, self._conv_act):
            x = act.forward(self.layers[bn].forward(self.layers[cn].forward(x)))
        return x

    def _conv_stack_backward(self, dx):
        for (cn, bn), act in zip(reversed(self._conv_names), reversed(self._conv_act)):
            dx = self.layers[cn].backward(self.layers[bn].backward(act.backward(dx)))
        return dx

    def encode(self, blocks):
        """blocks (B, T, bins, frames) -> encoder features (T, B, enc_out), cached for backward."""
        cfg = self.config
        B, T = blocks.shape[:2]
        if blocks.shape[2:] != (cfg.n_bins, cfg.n_frames):
            raise ShapeError(f"blocks must be {cfg.n_bins}x{cfg.n_frames}, got {blocks.shape[2:]}")
        x = self._conv_stack(blocks.reshape(B * T, cfg.n_bins, cfg.n_frames, 1).astype(self.dtype))
        h = x.reshape(B, T, -1).transpose(1, 0, 2)
        for name in self._enc_names:
            h, _ = self.layers[name].forward_sequence(np.ascontiguousarray(h))
        return self._fc_act.forward(self.layers["fc01"].forward(h))

    def encode_backward(self, dg):
        cfg = self.config
        T, B = dg.shape[:2]
        dh = self.layers["fc01"].backward(self._fc_act.backward(dg))
        for name in reversed(self._enc_names):
            dh, _, _ = self.layers[name].backward_sequence(dh)
        w, h = cfg.conv_output_shape
        dx = dh.transpose(1, 0, 2).reshape(B * T, w, h, cfg.conv_channels[-1])
        return self._conv_stack_backward(np.ascontiguousarray(dx))

    # -- decoder ----------------------------------------------------------

    def _decoder_cell(self, g, y_prev, h, c):
        """One decoder step; returns output, new states and the step cache."""
        inp = np.concatenate([g, y_prev], axis=1)
        caches = []
        x = inp
        h_new, c_new = [], []
        for li, name in enumerate(self._dec_names):
            hl, cl, cache = self.layers[name].step(x, h[li], c[li])
            h_new.append(hl)
            c_new.append(cl)
            caches.append(cache)
            x = hl
        z, lin_cache = self.layers["out"].forward_step(x)
        m, act_cache = self._out_act.forward_step(z)
        return m, h_new, c_new, (caches, lin_cache, act_cache)

    def decode(self, g, y0=None, teacher=None):
        """Run the decoder over encoder features g (T, B, E); returns motion (T, B, D).

        ``y0`` is the motion fed at the first step (zeros when None).
        ``teacher`` (T + 1, B, D) is only consulted in ``feedback="teacher"``
        mode, where ground truth replaces the fed-back output at every step.
        """
        cfg = self.config
        T, B = g.shape[:2]
        H = cfg.lstm_width
        h = [np.zeros((B, H), dtype=self.dtype) for _ in self._dec_names]
        c = [np.zeros((B, H), dtype=self.dtype) for _ in self._dec_names]
        y_prev = np.zeros((B, cfg.motion_dim), dtype=self.dtype)
        if y0 is not None and cfg.feedback != "none":
            y_prev = np.asarray(y0, dtype=self.dtype)
        out = np.empty((T, B, cfg.motion_dim), dtype=self.dtype)
        steps = []
        for t in range(T):
            m, h, c, cache = self._decoder_cell(g[t], y_prev, h, c)
            out[t] = m
            steps.append(cache)
            if cfg.feedback == "auto":
                y_prev = m
            elif cfg.feedback == "teacher":
                y_prev = teacher[t + 1] if teacher is not None else m
        self._dec_tape = steps
        return out

    def decode_backward(self, dm):
        cfg = self.config
        steps = self._dec_tape
        if steps is None:
            raise StateError("decode_backward called without a cached decode")
        self._dec_tape = None
        T, B = dm.shape[:2]
        H = cfg.lstm_width
        E = cfg.enc_out
        L = len(self._dec_names)
        dh = [np.zeros((B, H), dtype=self.dtype) for _ in range(L)]
        dc = [np.zeros((B, H), dtype=self.dtype) for _ in range(L)]
        dg = np.empty((T, B, E), dtype=self.dtype)
        carry = np.zeros((B, cfg.motion_dim), dtype=self.dtype)
        for t in range(T - 1, -1, -1):
            caches, lin_cache, act_cache = steps[t]
            dz = self._out_act.backward_step(dm[t] + carry, act_cache)
            dx = self.layers["out"].backward_step(dz, lin_cache)
            for li in range(L - 1, -1, -1):
                dx, dh[li], dc[li] = self.layers[self._dec_names[li]].step_backward(
                    dx + dh[li], dc[li], caches[li])
            dg[t] = dx[:, :E]
            carry = dx[:, E:] if cfg.feedback == "auto" else np.zeros_like(carry)
        return dg

    # -- training objective -----------------------------------------------

    def forward_loss(self, batch: Batch, use_contrastive: bool = True) -> LossTerms:
        blocks = np.asarray(batch.blocks, dtype=self.dtype)
        motion = np.asarray(batch.motion, dtype=self.dtype)
        cfg = self.config
        if motion.shape[2] != cfg.motion_dim:
            raise ShapeError(f"motion has {motion.shape[2]} components, model expects {cfg.motion_dim}")
        g = self.encode(blocks)
        Y = motion.transpose(1, 0, 2)  # (T + 1, B, D)
        m = self.decode(g, y0=Y[0], teacher=Y)
        target = Y[1:]
        diff = m - target
        mse = float(np.mean(diff * diff))

        labels = np.asarray(batch.labels).T  # (T - 1, B)
        valid = labels >= 0
        n_valid = int(valid.sum())
        gdiff = g[1:] - g[:-1]
        dist = np.sum(gdiff * gdiff, axis=-1)
        d = np.where(valid, labels, 0).astype(self.dtype)
        if n_valid:
            terms = np.where(valid, contrastive_terms(dist, d), 0.0)
            contrastive = float(terms.sum() / n_valid)
        else:
            contrastive = 0.0
        total = combined_loss(mse, contrastive, use_contrastive)
        self._tape = (g, m, target, gdiff, dist, d, valid, n_valid, use_contrastive)
        return LossTerms(mse, contrastive, total)

    def backward(self):
        """Accumulate gradients of the last :meth:`forward_loss` total into ``grads``."""
        if self._tape is None:
            raise StateError("backward called without forward_loss")
        g, m, target, gdiff, dist, d, valid, n_valid, use_contrastive = self._tape
        self._tape = None
        dm = 2.0 * (m - target) / m.size
        dg = self.decode_backward(dm)
        if use_contrastive and n_valid:
            # d/d dist of 0.5*(d*dist^2 + (1-d)*max(1-dist,0)^2)
            ddist = d * dist - (1.0 - d) * np.maximum(1.0 - dist, 0.0)
            ddist = np.where(valid, ddist, 0.0) / n_valid
            step = 2.0 * gdiff * ddist[..., None]
            dg[1:] += step
            dg[:-1] -= step
        self.encode_backward(dg)

    # -- streaming inference ----------------------------------------------

    def init_encoder_state(self, batch: int = 1) -> EncoderState:
        H = self.config.lstm_width
        n = len(self._enc_names)
        return EncoderState([np.zeros((batch, H), self.dtype) for _ in range(n)],
                            [np.zeros((batch, H), self.dtype) for _ in range(n)])

    def init_decoder_state(self, batch: int = 1) -> DecoderState:
        H = self.config.lstm_width
        n = len(self._dec_names)
        return DecoderState([np.zeros((batch, H), self.dtype) for _ in range(n)],
                            [np.zeros((batch, H), self.dtype) for _ in range(n)],
                            np.zeros((batch, self.config.motion_dim), self.dtype))

    def encode_step(self, block, state: EncoderState):
        """Encode one (bins, frames) block, or a (B, bins, frames) stack, with frozen batch-norm stats."""
        cfg = self.config
        x = np.asarray(block, dtype=self.dtype)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[1:] != (cfg.n_bins, cfg.n_frames):
            raise ShapeError(f"block must be {cfg.n_bins}x{cfg.n_frames}, got {x.shape[1:]}")
        modes = [self.layers[bn].mode for _, bn in self._conv_names]
        self.set_mode("infer")
        try:
            z = x[..., None]
            for (cn, bn), act in zip(self._conv_names, self._conv_act):
                z, _ = self.layers[cn].forward_step(z)
                z, _ = self.layers[bn].forward_step(z)
                z, _ = act.forward_step(z)
        finally:
            for (_, bn), mode in zip(self._conv_names, modes):
                self.layers[bn].mode = mode
        h = z.reshape(z.shape[0], -1)
        hs, cs = [], []
        for li, name in enumerate(self._enc_names):
            h, c, _ = self.layers[name].step(h, state.h[li], state.c[li])
            hs.append(h)
            cs.append(c)
        g, _ = self.layers["fc01"].forward_step(h)
        g, _ = self._fc_act.forward_step(g)
        return (g[0] if single else g), EncoderState(hs, cs)

    def decode_step(self, g, state: DecoderState, teacher=None):
        """Produce the next motion frame from encoder feature ``g``.

        ``teacher`` is accepted only at the first step; afterwards the
        previous output is fed back (zeros throughout in ``"none"`` mode).
        """
        cfg = self.config
        g = np.asarray(g, dtype=self.dtype)
        single = g.ndim == 1
        if single:
            g = g[None]
        if g.shape[1] != cfg.enc_out:
            raise ShapeError(f"encoder feature must have {cfg.enc_out} entries, got {g.shape[1]}")
        if teacher is not None and state.t > 0 and cfg.feedback == "auto":
            raise StateError("ground truth can only be fed at the first decoder step")
        if teacher is not None:
            y_prev = np.asarray(teacher, dtype=self.dtype).reshape(g.shape[0], cfg.motion_dim)
        else:
            y_prev = state.last_output
        if cfg.feedback == "none":
            y_prev = np.zeros_like(state.last_output)
        m, h, c, _ = self._decoder_cell(g, y_prev, state.h, state.c)
        new_state = DecoderState(h, c, m, state.t + 1)
        return (m[0] if single else m), new_state

    def generate(self, blocks, record_latency: bool = True) -> Generation:
        """Free-run generation: zero initial motion, then the model's own output."""
        cfg = self.config
        blocks = check_blocks(blocks, cfg.n_bins, cfg.n_frames)
        enc = self.init_encoder_state()
        dec = self.init_decoder_state()
        out = np.empty((blocks.shape[0], cfg.motion_dim), dtype=self.dtype)
        lat = np.empty(blocks.shape[0])
        for t in range(blocks.shape[0]):
            t0 = time.perf_counter()
            g, enc = self.encode_step(blocks[t], enc)
            m, dec = self.decode_step(g, dec)
            lat[t] = (time.perf_counter() - t0) * 1e3
            out[t] = m
        return Generation(out, lat if record_latency else np.empty(0))
