"""Mini-batch training: window sampling, Adam with annealed gradient noise,
epoch loop and resumable checkpoints."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from ._validation import check_blocks, check_motion
from .exceptions import CheckpointError, InvalidInputError, NumericError, ShapeError
from .model import Batch, DanceNet, ModelConfig
from .motion import weak_labels
from .nn.container import read_arrays, write_arrays

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "dancegen-checkpoint"


@dataclass
class TrainingConfig:
    batch_size: int = 50
    seq_len: int = 150
    epochs: int = 10
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_noise: float = 0.01
    noise_decay: float = 0.55
    use_contrastive: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidInputError("batch_size must be >= 1 and epochs >= 0")
        if self.seq_len < 2:
            raise InvalidInputError("seq_len must be >= 2 so there is at least one transition")
        if self.learning_rate < 0 or self.grad_noise < 0 or self.eps <= 0:
            raise InvalidInputError("learning_rate and grad_noise must be >= 0, eps > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidInputError("Adam betas must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Track:
    """One training file: aligned spectral blocks and normalized motion.

    ``labels[i]`` is the weak label of motion frame ``i`` (-1 for frames
    0 and 1, which have no label).
    """

    blocks: np.ndarray
    motion: np.ndarray
    name: str = ""
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        self.blocks = check_blocks(self.blocks)
        self.motion = check_motion(self.motion, dim=None)
        n = min(self.blocks.shape[0], self.motion.shape[0])
        self.blocks = self.blocks[:n]
        self.motion = self.motion[:n]
        if self.labels is None:
            full = np.full(n, -1, dtype=np.int8)
            if n >= 3:
                full[2:] = weak_labels(self.motion)
            self.labels = full

    def __len__(self):
        return self.blocks.shape[0]

    def n_offsets(self, seq_len: int) -> int:
        return max(0, len(self) - seq_len)

    def window(self, offset: int, seq_len: int):
        o = offset
        return (self.blocks[o:o + seq_len],
                self.motion[o:o + seq_len + 1],
                self.labels[o + 1:o + seq_len])


def make_batches(tracks: list[Track], cfg: TrainingConfig, rng) -> Iterator[Batch]:
    """One epoch of batches of random windows.

    The epoch holds ``ceil(P / k)`` batches where ``P`` is the number of
    non-overlapping windows the data could be cut into (at least one per
    usable track).  Every usable track is drawn at least once; the
    remaining picks are proportional to track length.  Offsets are
    uniform over each track's valid range.
    """
    if not tracks:
        raise InvalidInputError("empty dataset")
    L = cfg.seq_len
    usable = []
    for i, tr in enumerate(tracks):
        if tr.n_offsets(L) < 1:
            logger.warning("skipping track %s: %d frames < %d needed", tr.name or i, len(tr), L + 1)
        else:
            usable.append(i)
    if not usable:
        raise InvalidInputError(f"no track has the {L + 1} frames a window needs")
    weights = np.array([max(1, len(tracks[i]) // L) for i in usable])
    n_picks = int(weights.sum())
    k = cfg.batch_size
    n_picks = max(k, math.ceil(n_picks / k) * k)
    extra = n_picks - len(usable)
    p = weights / weights.sum()
    picks = np.concatenate([np.array(usable), rng.choice(np.array(usable), size=extra, p=p)])
    rng.shuffle(picks)
    offsets = np.array([rng.integers(0, tracks[i].n_offsets(L)) for i in picks])
    for start in range(0, n_picks, k):
        parts = [tracks[i].window(o, L) for i, o in zip(picks[start:start + k], offsets[start:start + k])]
        yield Batch(np.stack([b for b, _, _ in parts]),
                    np.stack([m for _, m, _ in parts]),
                    np.stack([d for _, _, d in parts]))


class Adam:
    """Bias-corrected Adam with Gaussian gradient noise added before the moment updates.

    The noise variance at update ``t`` (0-based) is
    ``grad_noise**2 / (1 + t)**noise_decay``; ``grad_noise=0`` disables it.
    """

    def __init__(self, params: dict[str, np.ndarray], cfg: TrainingConfig, rng=None):
        self.cfg = cfg
        self.rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t = 0

    def noise_std(self, step: int) -> float:
        return self.cfg.grad_noise / (1.0 + step) ** (self.cfg.noise_decay / 2.0)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        cfg = self.cfg
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
                raise NumericError(f"non-finite gradient in {k} ({bad} entries) at update {self.t}")
        sigma = self.noise_std(self.t)
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        lr_t = cfg.learning_rate / (1.0 - b1 ** self.t)
        bc2 = 1.0 - b2 ** self.t
        for k in sorted(params):
            g = grads[k]
            if sigma > 0:
                g = g + sigma * self.rng.standard_normal(g.shape)
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            params[k] -= lr_t * m / (np.sqrt(v / bc2) + cfg.eps)

    def state(self) -> dict:
        return {"t": self.t}


def adam_step(params, grads, state: Adam):
    """Functional alias for :meth:`Adam.step`."""
    state.step(params, grads)
    return params, state


@dataclass
class EpochReport:
    epoch: int
    mse: float
    contrastive: float
    total: float
    batches: int
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class Trainer:
    """Owns the network, optimizer and RNG so training can be checkpointed and resumed."""

    def __init__(self, net: DanceNet, cfg: TrainingConfig):
        self.net = net
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.opt = Adam(net.parameters(), cfg, self.rng)
        self.epoch = 0
        self.history: list[EpochReport] = []
        self.extra: dict = {}  # JSON-able provenance stored alongside checkpoints

    def train_step(self, batch: Batch):
        net = self.net
        net.set_mode("train")
        net.zero_grad()
        terms = net.forward_loss(batch, self.cfg.use_contrastive)
        if not np.isfinite(terms.total):
            raise NumericError(f"loss diverged at update {self.opt.t}: {terms}")
        net.backward()
        self.opt.step(net.parameters(), net.gradients())
        return terms

    def train_epoch(self, tracks: list[Track]) -> EpochReport:
        t0 = time.perf_counter()
        sums = np.zeros(3)
        n = 0
        for batch in make_batches(tracks, self.cfg, self.rng):
            terms = self.train_step(batch)
            sums += (terms.mse, terms.contrastive, terms.total)
            n += 1
        self.epoch += 1
        mse, con, tot = sums / max(n, 1)
        report = EpochReport(self.epoch, float(mse), float(con), float(tot), n,
                             time.perf_counter() - t0)
        self.history.append(report)
        logger.info("epoch %d: mse %.5f contrastive %.5f", report.epoch, mse, con)
        return report

    def fit(self, tracks: list[Track], epochs: int | None = None, checkpoint_dir=None,
            log_file=None) -> list[EpochReport]:
        epochs = self.cfg.epochs if epochs is None else epochs
        out = []
        for _ in range(epochs):
            report = self.train_epoch(tracks)
            out.append(report)
            if log_file is not None:
                with open(log_file, "a") as fh:
                    fh.write(report.to_json() + "\n")
            if checkpoint_dir is not None:
                save_checkpoint(Path(checkpoint_dir) / f"epoch_{report.epoch:03d}.ckpt", self)
        return out


def train_epoch(trainer: Trainer, tracks: list[Track]) -> EpochReport:
    return trainer.train_epoch(tracks)


def save_checkpoint(path, trainer: Trainer) -> Path:
    """Write parameters, batch-norm stats, Adam moments, configs and RNG state."""
    net = trainer.net
    arrays = {}
    for k, p in net.parameters().items():
        arrays[f"param/{k}"] = p
    for k, b in net.buffers().items():
        arrays[f"buffer/{k}"] = b
    for k in sorted(trainer.opt.m):
        arrays[f"adam_m/{k}"] = trainer.opt.m[k]
        arrays[f"adam_v/{k}"] = trainer.opt.v[k]
    meta = {
        "kind": CHECKPOINT_KIND,
        "model_config": net.config.to_dict(),
        "dtype": np.dtype(net.dtype).name,
        "training_config": trainer.cfg.to_dict(),
        "adam_t": trainer.opt.t,
        "epoch": trainer.epoch,
        "rng_state": trainer.rng.bit_generator.state,
        # wall time stays in the JSON log so reruns give byte-identical checkpoints
        "history": [{k: v for k, v in asdict(h).items() if k != "wall_time"} for h in trainer.history],
        "extra": trainer.extra,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return write_arrays(path, arrays, meta)


def load_checkpoint(path, model_config: ModelConfig | None = None) -> Trainer:
    """Rebuild a :class:`Trainer` from ``path``.

    When ``model_config`` is given it must match the stored topology,
    otherwise a :class:`ShapeError` names the first mismatching field.
    """
    arrays, meta = read_arrays(path)
    if meta.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path} is not a training checkpoint")
    stored = ModelConfig.from_dict(meta["model_config"])
    if model_config is not None and model_config != stored:
        diff = [k for k, v in model_config.to_dict().items() if stored.to_dict()[k] != v]
        raise ShapeError(f"checkpoint topology differs from requested config in {diff}")
    cfg = TrainingConfig(**meta["training_config"])
    net = DanceNet(stored, seed=0, dtype=np.dtype(meta.get("dtype", "float64")))
    net.load_state({k[6:]: v for k, v in arrays.items() if k.startswith("param/")},
                   {k[7:]: v for k, v in arrays.items() if k.startswith("buffer/")})
    trainer = Trainer(net, cfg)
    for k in trainer.opt.m:
        try:
            trainer.opt.m[k][...] = arrays[f"adam_m/{k}"]
            trainer.opt.v[k][...] = arrays[f"adam_v/{k}"]
        except KeyError as exc:
            raise CheckpointError(f"{path}: optimizer state for {k} missing") from exc
    trainer.opt.t = int(meta["adam_t"])
    trainer.epoch = int(meta["epoch"])
    trainer.rng.bit_generator.state = meta["rng_state"]
    trainer.history = [EpochReport(**h) for h in meta.get("history", [])]
    trainer.extra = dict(meta.get("extra", {}))
    return trainer


def load_model(path) -> DanceNet:
    return load_checkpoint(path).net
