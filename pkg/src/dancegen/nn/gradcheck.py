"""Central finite-difference checks for analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

EPS = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``.

    ``floor`` is 1% of the array's largest numeric entry, so entries that
    are tiny next to the rest of the gradient (where central differences
    are dominated by roundoff) are judged on the array's scale.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    floor = max(1e-8, 1e-2 * float(np.max(np.abs(n))))
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_gradient(f: Callable[[], float], x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"], op_flags=["readwrite"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx].copy()
        x[idx] = orig + eps
        fp = f()
        x[idx] = orig - eps
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * eps)
    return grad


@dataclass
class GradCheckReport:
    name: str
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error)) and self.max_error <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = max(self.errors, key=self.errors.get) if self.errors else "-"
        return f"{status} {self.name}: max rel err {self.max_error:.3e} (worst: {worst}, tol {self.tolerance:g})"


def check_gradients(loss: Callable[[], float], analytic: dict[str, np.ndarray],
                    arrays: dict[str, np.ndarray], name: str = "graph",
                    eps: float = EPS, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare ``analytic[k]`` with finite differences of ``loss`` over ``arrays[k]``.

    ``loss`` must recompute the scalar from the current contents of the
    arrays, which are perturbed in place and restored.
    """
    report = GradCheckReport(name, tolerance=tolerance)
    for key, arr in arrays.items():
        num = numeric_gradient(loss, arr, eps)
        report.errors[key] = relative_error(analytic[key], num)
    return report


def grad_check(layer, x: np.ndarray, eps: float = EPS, tolerance: float = 1e-4,
               rng=None, name: str | None = None) -> GradCheckReport:
    """Check a single layer's backward pass on input ``x``.

    The scalar probed is ``sum(R * layer.forward(x))`` for a fixed random
    ``R``, so every output element receives a distinct upstream gradient.
    Layers with running statistics should have them frozen by the caller.
    """
    rng = np.random.default_rng(rng)
    x = np.array(x, dtype=np.float64)
    out = layer.forward(x)
    R = rng.standard_normal(out.shape)
    layer.zero_grad()
    dx = layer.backward(R)
    analytic = {f"param:{k}": g.copy() for k, g in layer.grads.items()}
    analytic["input"] = dx

    def loss():
        y = layer.forward(x)
        layer._cache = None
        return float(np.sum(R * y))

    arrays = {f"param:{k}": p for k, p in layer.params.items()}
    arrays["input"] = x
    return check_gradients(loss, analytic, arrays, name or type(layer).__name__, eps, tolerance)
