"""Central finite differences, used as the independent oracle for autodiff."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def _scalar(v) -> float:
    return v.item() if isinstance(v, Tensor) else float(v)


def finite_diff_grad(f: Callable[[Tensor], object], x: Tensor, h: float = 1e-5, indices=None) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x.data`` is perturbed in place and restored afterwards. When ``indices``
    (flat positions) is given only those entries are estimated; the rest stay 0.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    flat = x.data.reshape(-1)
    out = np.zeros(flat.shape)
    positions = range(flat.size) if indices is None else indices
    for i in positions:
        orig = flat[i]
        flat[i] = orig + h
        fp = _scalar(f(x))
        flat[i] = orig - h
        fm = _scalar(f(x))
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(x.shape)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b|| / max(||a||, ||b||)``; 0 when both are 0."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def gradient_pairs(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Autodiff and finite-difference gradients of ``loss_fn()`` per parameter.

    ``loss_fn`` must rebuild the graph from the current values of ``params``.
    With ``max_entries`` set, at most that many randomly chosen entries of each
    parameter are probed and both sides are restricted to those entries.
    """
    for p in params:
        p.grad = None
        p.requires_grad = True
    loss_fn().backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None

    rng = rng or np.random.default_rng(0)
    out = {}
    for k, (p, g) in enumerate(zip(params, analytic)):
        idx = None
        if max_entries is not None and p.size > max_entries:
            idx = np.sort(rng.choice(p.size, size=max_entries, replace=False))
        numeric = finite_diff_grad(lambda _: loss_fn(), p, h=h, indices=idx)
        if idx is not None:
            g, numeric = g.reshape(-1)[idx], numeric.reshape(-1)[idx]
        out[p.name or f"arg{k}"] = (g.reshape(-1), numeric.reshape(-1))
    return out


def check_gradients(loss_fn, params, h=1e-5, max_entries=None, rng=None) -> dict[str, float]:
    """One relative error per parameter; see :func:`gradient_pairs`."""
    pairs = gradient_pairs(loss_fn, params, h, max_entries, rng)
    return {name: relative_error(a, n) for name, (a, n) in pairs.items()}
