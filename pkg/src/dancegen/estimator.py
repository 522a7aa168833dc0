"""Scikit-learn style wrapper around the network and its trainer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_sequence_list, check_blocks, check_motion
from .beats import aggregate, evaluate_track
from .exceptions import InvalidInputError, ShapeError
from .model import DanceNet, ModelConfig
from .training import Trainer, Track, TrainingConfig


class DanceGenerator(BaseEstimator):
    """Audio-feature to dance-motion sequence model.

    ``X`` is a list of (n_blocks, bins, frames) spectral block stacks and
    ``y`` the matching list of normalized (n_frames, dim) motion tracks.
    :meth:`predict` free-runs the decoder from a zero first frame.

    Parameters
    ----------
    lstm_width, enc_out, conv_channels, conv_kernel, enc_layers, dec_layers : network size
    feedback : {"auto", "teacher", "none"}
        What the decoder is fed at step ``t > 0`` while training.
    use_contrastive : bool
        Add the weak-label contrastive term to the MSE objective.
    epochs, batch_size, seq_len, learning_rate, beta1, beta2, eps, grad_noise : training
    dtype : {"float64", "float32"}
        Working precision of the network.
    random_state : int
        Seeds weight init, window sampling and gradient noise.
    """

    def __init__(self, lstm_width=500, enc_out=65, conv_channels=(16, 32, 64, 65),
                 conv_kernel=(3, 2), enc_layers=3, dec_layers=3, feedback="auto",
                 use_contrastive=True, epochs=10, batch_size=50, seq_len=150,
                 learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, grad_noise=0.01,
                 dtype="float64", random_state=0):
        self.lstm_width = lstm_width
        self.enc_out = enc_out
        self.conv_channels = conv_channels
        self.conv_kernel = conv_kernel
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.feedback = feedback
        self.use_contrastive = use_contrastive
        self.epochs = epochs
        self.batch_size = batch_size
        self.seq_len = seq_len
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.grad_noise = grad_noise
        self.dtype = dtype
        self.random_state = random_state

    def _configs(self, n_bins, n_frames, motion_dim):
        model = ModelConfig(n_bins=n_bins, n_frames=n_frames, conv_channels=tuple(self.conv_channels),
                            conv_kernel=tuple(self.conv_kernel), lstm_width=self.lstm_width,
                            enc_layers=self.enc_layers, dec_layers=self.dec_layers,
                            enc_out=self.enc_out, motion_dim=motion_dim, feedback=self.feedback)
        train = TrainingConfig(batch_size=self.batch_size, seq_len=self.seq_len, epochs=self.epochs,
                               learning_rate=self.learning_rate, beta1=self.beta1, beta2=self.beta2,
                               eps=self.eps, grad_noise=self.grad_noise,
                               use_contrastive=self.use_contrastive, seed=int(self.random_state))
        return model, train

    def fit(self, X, y):
        blocks, _ = as_sequence_list(X, check_blocks)
        motion, _ = as_sequence_list(y, lambda m: check_motion(m, dim=None))
        if len(blocks) != len(motion):
            raise InvalidInputError(f"{len(blocks)} feature tracks but {len(motion)} motion tracks")
        if len({b.shape[1:] for b in blocks}) != 1 or len({m.shape[1] for m in motion}) != 1:
            raise ShapeError("all tracks must share block shape and motion dimension")
        n_bins, n_frames = blocks[0].shape[1:]
        model_cfg, train_cfg = self._configs(n_bins, n_frames, motion[0].shape[1])
        tracks = [Track(b, m, name=f"track{i}") for i, (b, m) in enumerate(zip(blocks, motion))]
        net = DanceNet(model_cfg, seed=train_cfg.seed, dtype=np.dtype(self.dtype))
        self.trainer_ = Trainer(net, train_cfg)
        self.history_ = self.trainer_.fit(tracks)
        self.net_ = net
        self.n_features_in_ = n_bins * n_frames
        return self

    @classmethod
    def from_trainer(cls, trainer: Trainer) -> "DanceGenerator":
        """Wrap an already trained (e.g. checkpoint-loaded) trainer."""
        mc, tc = trainer.net.config, trainer.cfg
        est = cls(lstm_width=mc.lstm_width, enc_out=mc.enc_out, conv_channels=mc.conv_channels,
                  conv_kernel=mc.conv_kernel, enc_layers=mc.enc_layers, dec_layers=mc.dec_layers,
                  feedback=mc.feedback, use_contrastive=tc.use_contrastive, epochs=tc.epochs,
                  batch_size=tc.batch_size, seq_len=tc.seq_len, learning_rate=tc.learning_rate,
                  beta1=tc.beta1, beta2=tc.beta2, eps=tc.eps, grad_noise=tc.grad_noise,
                  dtype=np.dtype(trainer.net.dtype).name, random_state=tc.seed)
        est.trainer_ = trainer
        est.net_ = trainer.net
        est.history_ = list(trainer.history)
        est.n_features_in_ = mc.n_bins * mc.n_frames
        return est

    def predict(self, X):
        """Generated normalized motion, one frame per block."""
        check_is_fitted(self, "net_")
        cfg = self.net_.config
        blocks, single = as_sequence_list(X, lambda b: check_blocks(b, cfg.n_bins, cfg.n_frames))
        out = [self.net_.generate(b, record_latency=False).motion.astype(np.float64) for b in blocks]
        return out[0] if single else out

    def generate(self, blocks):
        """Like :meth:`predict` on one track but also returns per-frame latencies."""
        check_is_fitted(self, "net_")
        return self.net_.generate(blocks)

    def score(self, X, beats):
        """Pooled motion-beat F-score of the generated motion against beat annotations."""
        pred = self.predict(X)
        if isinstance(pred, np.ndarray):
            pred, beats = [pred], [beats]
        return aggregate([evaluate_track(m, b) for m, b in zip(pred, beats)])["f_score"]
