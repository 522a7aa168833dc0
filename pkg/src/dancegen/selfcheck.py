"""Finite-difference self-check of every layer and of the full training graph."""
from __future__ import annotations

import numpy as np

from .model import Batch, DanceNet, ModelConfig
from .nn.gradcheck import EPS, GradCheckReport, check_gradients, grad_check
from .nn.layers import ELU, LSTM, BatchNorm, Conv2D, Linear

TOLERANCE = 1e-4

# small enough for finite differences over every parameter in a few seconds
SMALL_CONFIG = dict(n_bins=6, n_frames=3, conv_channels=(2, 3), conv_kernel=(2, 2),
                    lstm_width=8, enc_layers=2, dec_layers=2, enc_out=2, motion_dim=4)


def layer_checks(seed: int = 0, tolerance: float = TOLERANCE) -> list[GradCheckReport]:
    rng = np.random.default_rng(seed)
    reports = [
        grad_check(Conv2D(2, 3, (3, 2), rng), rng.standard_normal((2, 6, 4, 2)),
                   tolerance=tolerance, rng=rng, name="conv2d"),
        grad_check(Conv2D(1, 2, (3, 2), rng, bias=False), rng.standard_normal((3, 5, 3, 1)),
                   tolerance=tolerance, rng=rng, name="conv2d_nobias"),
    ]
    bn = BatchNorm(3)
    bn.track_running_stats = False
    bn.params["gamma"][...] = rng.uniform(0.5, 1.5, 3)
    bn.params["beta"][...] = rng.standard_normal(3)
    reports.append(grad_check(bn, rng.standard_normal((4, 5, 2, 3)), tolerance=tolerance,
                              rng=rng, name="batchnorm_train"))
    bn = BatchNorm(3)
    bn.mode = "infer"
    bn.buffers["running_mean"] = rng.standard_normal(3)
    bn.buffers["running_var"] = rng.uniform(0.5, 2.0, 3)
    reports.append(grad_check(bn, rng.standard_normal((4, 5, 2, 3)), tolerance=tolerance,
                              rng=rng, name="batchnorm_infer"))
    x = rng.standard_normal((5, 7))
    x[np.abs(x) < 0.05] += 0.2  # keep away from the kink at 0
    reports.append(grad_check(ELU(), x, tolerance=tolerance, rng=rng, name="elu"))
    reports.append(grad_check(Linear(7, 4, rng), rng.standard_normal((5, 7)),
                              tolerance=tolerance, rng=rng, name="linear"))
    reports.append(grad_check(LSTM(4, 5, rng=rng), rng.standard_normal((3, 2, 4)),
                              tolerance=tolerance, rng=rng, name="lstm_bptt"))
    return reports


def small_network(feedback: str = "auto", seed: int = 0) -> tuple[DanceNet, Batch]:
    """A tiny network with N(0, 0.5^2) weights and a random 2 x 3-step batch.

    The wide random weights keep every gradient entry well above
    finite-difference roundoff, which small uniform initial weights do not.
    """
    cfg = ModelConfig(feedback=feedback, **SMALL_CONFIG)
    net = DanceNet(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    for name, p in net.parameters().items():
        if name.startswith("bn"):
            continue
        p[...] = 0.5 * rng.standard_normal(p.shape)
    for i in range(1, len(cfg.conv_channels) + 1):
        net.layers[f"bn{i}"].track_running_stats = False
    B, T = 2, 3
    batch = Batch(rng.uniform(-0.9, 0.9, (B, T, cfg.n_bins, cfg.n_frames)),
                  rng.uniform(-0.9, 0.9, (B, T + 1, cfg.motion_dim)),
                  rng.integers(0, 2, (B, T - 1)))
    return net, batch


def network_check(feedback: str = "auto", use_contrastive: bool = True, seed: int = 0,
                  tolerance: float = TOLERANCE, eps: float = EPS) -> GradCheckReport:
    """Full encoder/decoder BPTT graph over 3 steps, every parameter."""
    net, batch = small_network(feedback, seed)
    net.set_mode("train")
    net.zero_grad()
    net.forward_loss(batch, use_contrastive)
    net.backward()
    analytic = {k: g.copy() for k, g in net.gradients().items()}

    def loss():
        total = net.forward_loss(batch, use_contrastive).total
        net._tape = None
        return total

    name = f"network[{feedback}{'' if use_contrastive else ', mse only'}]"
    return check_gradients(loss, analytic, net.parameters(), name, eps, tolerance)


def run_all(tolerance: float = TOLERANCE, seed: int = 0) -> list[GradCheckReport]:
    reports = layer_checks(seed, tolerance)
    for fb in ("auto", "teacher", "none"):
        reports.append(network_check(fb, True, seed, tolerance))
    reports.append(network_check("auto", False, seed, tolerance))
    return reports
