"""Named, group-tagged parameter storage and the update rules applied to it."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .tensor import Tensor

STYLE_ENCODER = "style_encoder"
OTHER = "other"
GROUPS = (STYLE_ENCODER, OTHER)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator keyed by ``(seed, stream)``.

    numpy guarantees the PCG64 bit stream for a given SeedSequence across
    platforms, which is what the reproducibility contract relies on.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, stream])))


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Ordered map ``name -> (Tensor, group)``.

    Registration order is preserved, which keeps snapshots and the update loop
    deterministic.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._groups: dict[str, str] = {}

    def add(self, name: str, value, group: str = OTHER) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        if group not in GROUPS:
            raise ValueError(f"unknown group {group!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        self._groups[name] = group
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def group(self, name: str) -> str:
        return self._groups[name]

    def items(self, groups: Iterable[str] | None = None) -> Iterator[tuple[str, Tensor]]:
        sel = None if groups is None else set(groups)
        for name, t in self._params.items():
            if sel is None or self._groups[name] in sel:
                yield name, t

    def count(self, groups: Iterable[str] | None = None) -> int:
        """Total number of scalar parameters."""
        return sum(t.size for _, t in self.items(groups))

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        if set(snap) != set(self._params):
            raise KeyError("snapshot names do not match the store")
        for name, t in self._params.items():
            if snap[name].shape != t.shape:
                raise ValueError(f"shape mismatch for {name}: {snap[name].shape} vs {t.shape}")
            t.data = snap[name].copy()

    def clone(self) -> "ParamStore":
        out = ParamStore()
        for name, t in self._params.items():
            out.add(name, t.data.copy(), self._groups[name])
        return out

    def blend_toward(self, other: "ParamStore", eta: float) -> None:
        """In place ``theta <- theta + eta * (omega - theta)``.

        In this form omega == theta and eta == 0 both leave theta bitwise
        unchanged (eta == 0 is short-circuited so that -0.0 entries survive).
        """
        if eta == 0:
            return
        for name, t in self._params.items():
            t.data = t.data + eta * (other[name].data - t.data)

    def equal(self, other: "ParamStore", groups: Iterable[str] | None = None) -> bool:
        """Bitwise equality over the selected groups."""
        for name, t in self.items(groups):
            if name not in other or other.group(name) != self._groups[name]:
                return False
            if t.data.tobytes() != other[name].data.tobytes():
                return False
        return True


def sgd_step(store: ParamStore, lr: float, groups: Iterable[str] = GROUPS) -> None:
    """``p <- p - lr * grad`` on every parameter of the selected groups."""
    selected = list(store.items(groups))
    missing = [name for name, t in selected if t.grad is None]
    if missing:
        raise RuntimeError(f"no gradient for {len(missing)} parameter(s), e.g. {missing[0]!r}")
    for _, t in selected:
        t.data = t.data - lr * t.grad


@dataclass
class Adam:
    """Adam over a ParamStore; state is keyed by parameter name."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step_direction(self, name: str, grad: np.ndarray) -> np.ndarray:
        m = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * grad
        v = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * grad * grad
        self.m[name], self.v[name] = m, v
        mhat = m / (1 - self.beta1**self.t)
        vhat = v / (1 - self.beta2**self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def step(self, store: ParamStore, groups: Iterable[str] = GROUPS) -> None:
        self.t += 1
        for name, p in store.items(groups):
            if p.grad is None:
                raise RuntimeError(f"no gradient for {name!r}")
            p.data = p.data - self.step_direction(name, p.grad)
