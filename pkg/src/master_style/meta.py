"""Reptile meta training over styles, with style-encoder fast adaptation on top."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .backbone import LossNetwork
from .features import FeatureMap
from .model import MasterModel
from .objectives import LossRecord, LossWeights, content_loss, style_loss, total_loss
from .params import GROUPS, STYLE_ENCODER, Adam, ParamStore, make_rng, sgd_step
from .tensor import Tensor, no_grad

META_STREAM = 2
ADAPT_STREAM = 3

LOG_HEADER = ("iter", "phase", "L", "loss_content", "loss_style", "loss_total")


@dataclass(frozen=True)
class MetaConfig:
    inner_lr: float = 1e-4
    outer_lr: float = 1e-4
    k: int = 2
    max_layers: int = 4
    iterations: int = 100
    batch_size: int = 4
    seed: int = 0
    style_weight: float = 10.0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.inner_lr < 0 or self.outer_lr < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_layers < 1:
            raise ValueError("max_layers must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class AdaptConfig:
    steps: int = 100
    lr: float = 1e-4
    layers: int = 1
    batch_size: int = 4
    seed: int = 0
    style_weight: float = 10.0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class LogRow:
    iter: int
    phase: str
    L: int
    loss_content: float
    loss_style: float
    loss_total: float

    def as_tuple(self) -> tuple:
        return (self.iter, self.phase, self.L, self.loss_content, self.loss_style, self.loss_total)


# ---------------------------------------------------------------------------
# losses over the full pipeline
# ---------------------------------------------------------------------------


class StyleObjective:
    """Forward pass plus content/style losses for one (content batch, style) pair.

    Loss-network features of the (fixed) content and style images are cached
    per image.  Each image is always encoded on its own, so a cached pyramid
    does not depend on which batch first requested it.
    """

    CACHE_LIMIT = 4096

    def __init__(self, model: MasterModel, lossnet: LossNetwork, style_weight: float = 10.0):
        self.model = model
        self.lossnet = lossnet
        self.weights = LossWeights(style_weight)
        self._cache: dict[bytes, dict] = {}

    def _image_features(self, img: np.ndarray) -> dict:
        key = hashlib.blake2b(repr(img.shape).encode() + img.tobytes(), digest_size=16).digest()
        hit = self._cache.get(key)
        if hit is None:
            if len(self._cache) >= self.CACHE_LIMIT:
                self._cache.clear()
            with no_grad():
                pyr = self.lossnet(img[None])
            hit = self._cache[key] = {x: (f.tokens.data, f.height, f.width) for x, f in pyr.items()}
        return hit

    def target_features(self, images) -> dict[int, FeatureMap]:
        """Loss-network pyramid of a batch of fixed images (no graph)."""
        images = np.ascontiguousarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        per = [self._image_features(img) for img in images]
        return {x: FeatureMap(Tensor(np.concatenate([p[x][0] for p in per])), h, w)
                for x, (_, h, w) in per[0].items()}

    def losses(self, store: ParamStore, contents, style, layers: int) -> tuple[Tensor, Tensor, Tensor]:
        pc = self.target_features(contents)
        ps = self.target_features(style)
        out = self.model.stylize(store, contents, style, layers)
        po = self.lossnet(out)
        lc = content_loss(pc, po)
        ls = style_loss(ps, po)
        return lc, ls, total_loss(lc, ls, self.weights)

    def evaluate(self, store: ParamStore, contents, style, layers: int) -> LossRecord:
        with no_grad():
            lc, ls, lt = self.losses(store, contents, style, layers)
        return LossRecord(lc.item(), ls.item(), lt.item())


def inner_update(
    objective: StyleObjective,
    store: ParamStore,
    contents,
    style,
    layers: int,
    lr: float,
    groups: Iterable[str] = GROUPS,
    optimizer: Adam | None = None,
) -> LossRecord:
    """One forward/backward/update; returns the losses before the update."""
    groups = tuple(groups)
    store.zero_grad()
    lc, ls, lt = objective.losses(store, contents, style, layers)
    lt.backward()
    if optimizer is None:
        sgd_step(store, lr, groups)
    else:
        optimizer.step(store, groups)
    return LossRecord(lc.item(), ls.item(), lt.item())


# ---------------------------------------------------------------------------
# Reptile
# ---------------------------------------------------------------------------


def reptile_step(
    theta: ParamStore,
    tasks: Sequence,
    inner: Callable[[ParamStore, object], object],
    outer_lr: float,
    outer_opt: Adam | None = None,
) -> tuple[ParamStore, list]:
    """Copy theta into fast weights, run ``inner(omega, task)`` per task, then
    move theta toward the fast weights.

    With ``outer_opt`` the difference ``theta - omega`` is fed to Adam as a
    pseudo-gradient instead of the plain blend.
    """
    omega = theta.clone()
    results = [inner(omega, task) for task in tasks]
    if outer_opt is None:
        theta.blend_toward(omega, outer_lr)
    else:
        for name, t in theta.items():
            t.grad = t.data - omega[name].data
        outer_opt.step(theta)
        theta.zero_grad()
    return omega, results


def _content_batch(rng: np.random.Generator, pool: np.ndarray, size: int) -> np.ndarray:
    idx = rng.choice(len(pool), size=size, replace=len(pool) < size)
    return pool[np.sort(idx)]


def meta_train(
    objective: StyleObjective,
    theta: ParamStore,
    cfg: MetaConfig,
    contents: np.ndarray,
    styles: np.ndarray,
    on_iteration: Callable[[int, list[LogRow]], None] | None = None,
) -> list[LogRow]:
    """Meta-train ``theta`` in place; returns one log row per inner step."""
    if len(contents) == 0 or len(styles) == 0:
        raise ValueError("content and style pools must be non-empty")
    rng = make_rng(cfg.seed, META_STREAM)
    outer_opt = Adam(cfg.outer_lr) if cfg.optimizer == "adam" else None
    log: list[LogRow] = []
    for it in range(cfg.iterations):
        s = int(rng.integers(len(styles)))
        style = styles[s : s + 1]
        tasks = []
        for _ in range(cfg.k):
            batch = _content_batch(rng, contents, cfg.batch_size)
            tasks.append((batch, int(rng.integers(1, cfg.max_layers + 1))))
        inner_opt = Adam(cfg.inner_lr) if cfg.optimizer == "adam" else None

        def inner(omega, task):
            batch, layers = task
            return layers, inner_update(objective, omega, batch, style, layers, cfg.inner_lr, GROUPS, inner_opt)

        _, results = reptile_step(theta, tasks, inner, cfg.outer_lr, outer_opt)
        rows = [LogRow(it, "meta", L, r.content, r.style, r.total) for L, r in results]
        log.extend(rows)
        if on_iteration is not None:
            on_iteration(it, rows)
    return log


def fast_adapt(
    objective: StyleObjective,
    theta: ParamStore,
    style: np.ndarray,
    cfg: AdaptConfig,
    contents: np.ndarray,
    eval_batch: np.ndarray | None = None,
    eval_at: Iterable[int] = (),
) -> tuple[ParamStore, list[LogRow], dict[int, LossRecord]]:
    """Adapt a copy of ``theta`` to one style, updating only the style encoder.

    Returns the adapted store, the per-step log and, for each step number in
    ``eval_at``, the losses on ``eval_batch`` after that many updates.
    """
    style = style if style.ndim == 4 else style[None]
    rng = make_rng(cfg.seed, ADAPT_STREAM)
    omega = theta.clone()
    opt = Adam(cfg.lr) if cfg.optimizer == "adam" else None
    eval_at = set(eval_at)
    evals: dict[int, LossRecord] = {}
    log: list[LogRow] = []
    for step in range(cfg.steps + 1):
        if step in eval_at:
            evals[step] = objective.evaluate(omega, eval_batch, style, cfg.layers)
        if step == cfg.steps:
            break
        batch = _content_batch(rng, contents, cfg.batch_size)
        r = inner_update(objective, omega, batch, style, cfg.layers, cfg.lr, (STYLE_ENCODER,), opt)
        log.append(LogRow(step, "adapt", cfg.layers, r.content, r.style, r.total))
    omega.zero_grad()
    return omega, log, evals


@dataclass
class KSweepRow:
    k: int
    style_loss: float
    per_style: list[float] = field(default_factory=list)


def k_sweep(
    objective: StyleObjective,
    init: Callable[[], ParamStore],
    cfg: MetaConfig,
    adapt: AdaptConfig,
    ks: Sequence[int],
    contents: np.ndarray,
    styles: np.ndarray,
    held_out: np.ndarray,
    eval_batch: np.ndarray,
    eval_step: int = 10,
) -> list[KSweepRow]:
    """Meta-train once per k from the same initialization and report the mean
    style loss on held-out styles after ``eval_step`` adaptation steps."""
    rows = []
    adapt = replace(adapt, steps=eval_step)
    for k in ks:
        theta = init()
        meta_train(objective, theta, replace(cfg, k=k), contents, styles)
        losses = []
        for i in range(len(held_out)):
            _, _, ev = fast_adapt(objective, theta, held_out[i : i + 1], adapt, contents, eval_batch, (eval_step,))
            losses.append(ev[eval_step].style)
        rows.append(KSweepRow(k, float(np.mean(losses)), losses))
    return rows


def smooth(values: Sequence[float], window: int = 50) -> np.ndarray:
    """Trailing moving average; entry i averages values[max(0, i-window+1) : i+1]."""
    v = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(len(v))
    lo = np.maximum(0, idx - window + 1)
    return (c[idx + 1] - c[lo]) / (idx + 1 - lo)


def iteration_totals(log: Sequence[LogRow], phase: str = "meta") -> np.ndarray:
    """Mean total loss per outer iteration."""
    by_iter: dict[int, list[float]] = {}
    for r in log:
        if r.phase == phase:
            by_iter.setdefault(r.iter, []).append(r.loss_total)
    return np.array([np.mean(by_iter[i]) for i in sorted(by_iter)])
