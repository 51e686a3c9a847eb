"""The small synthetic training protocol used by the CLI and the acceptance suite.

Everything here is built from an :class:`ExperimentConfig`, so a run is fully
determined by its config (and therefore by its seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .backbone import LossNetwork
from .config import ExperimentConfig
from .data import gen_synthetic
from .meta import KSweepRow, LogRow, StyleObjective, fast_adapt, iteration_totals, k_sweep, meta_train, smooth
from .model import MasterModel
from .params import ParamStore
from .tensor import no_grad

# Offsets that keep held-out and evaluation images disjoint from the training pools.
HELDOUT_OFFSET = 100_003
EVAL_OFFSET = 200_003
PAIRS_OFFSET = 300_007

SMOOTH_WINDOW = 50

TOY = ExperimentConfig(
    d_model=16,
    max_layers=4,
    k=2,
    image_size=64,
    iterations=300,
    optimizer="adam",
    inner_lr=1e-3,
    outer_lr=1e-3,
    adapt_steps=50,
    adapt_lr=1e-3,
    adapt_layers=1,
    eval_step=10,
    content_count=64,
    style_count=32,
    heldout_count=4,
)


def toy_config(seed: int, **overrides) -> ExperimentConfig:
    return TOY.replace(seed=seed, data_seed=seed, **overrides)


@dataclass
class Dataset:
    contents: np.ndarray
    styles: np.ndarray
    held_out: np.ndarray
    eval_batch: np.ndarray

    @classmethod
    def build(cls, cfg: ExperimentConfig) -> "Dataset":
        s, size = cfg.data_seed, cfg.image_size
        return cls(
            contents=gen_synthetic("content", cfg.content_count, s, size),
            styles=gen_synthetic("style", cfg.style_count, s, size),
            held_out=gen_synthetic("style", cfg.heldout_count, s + HELDOUT_OFFSET, size),
            eval_batch=gen_synthetic("content", cfg.batch_size, s + EVAL_OFFSET, size),
        )


def held_out_pairs(cfg: ExperimentConfig, n: int = 20) -> tuple[np.ndarray, np.ndarray]:
    s, size = cfg.data_seed + PAIRS_OFFSET, cfg.image_size
    return gen_synthetic("content", n, s, size), gen_synthetic("style", n, s, size)


class Experiment:
    """Everything one config needs to train and evaluate."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.model = MasterModel(cfg.model())
        self.objective = StyleObjective(self.model, LossNetwork(cfg.loss_seed), cfg.style_weight)
        self._data: Dataset | None = None

    @property
    def data(self) -> Dataset:
        if self._data is None:
            self._data = Dataset.build(self.cfg)
        return self._data

    def init_params(self) -> ParamStore:
        return self.model.init_params(self.cfg.seed)

    def train(self, theta: ParamStore | None = None, on_iteration=None) -> tuple[ParamStore, list[LogRow]]:
        theta = self.init_params() if theta is None else theta
        log = meta_train(self.objective, theta, self.cfg.meta(), self.data.contents, self.data.styles, on_iteration)
        return theta, log

    def adapt(self, theta: ParamStore, style: np.ndarray, eval_at=()):
        return fast_adapt(self.objective, theta, style, self.cfg.adapt(), self.data.contents, self.data.eval_batch,
                          eval_at)

    def layer_medians(self, theta: ParamStore, layer_counts=(1, 4), n_pairs: int = 20) -> dict[int, float]:
        """Median per-pair style loss of the unadapted model for each layer count."""
        contents, styles = held_out_pairs(self.cfg, n_pairs)
        out = {}
        with no_grad():
            for L in layer_counts:
                losses = [self.objective.evaluate(theta, contents[i : i + 1], styles[i], L).style
                          for i in range(n_pairs)]
                out[L] = float(np.median(losses))
        return out

    def adapted_style_loss(self, theta: ParamStore, step: int | None = None) -> float:
        """Mean style loss on the eval batch over held-out styles after ``step`` adaptation steps."""
        step = self.cfg.eval_step if step is None else step
        cfg = replace(self.cfg.adapt(), steps=step)
        losses = []
        for i in range(len(self.data.held_out)):
            _, _, ev = fast_adapt(self.objective, theta, self.data.held_out[i], cfg, self.data.contents,
                                  self.data.eval_batch, (step,))
            losses.append(ev[step].style)
        return float(np.mean(losses))

    def k_sweep(self, ks) -> list[KSweepRow]:
        d = self.data
        return k_sweep(self.objective, self.init_params, self.cfg.meta(), self.cfg.adapt(), ks, d.contents, d.styles,
                       d.held_out, d.eval_batch, self.cfg.eval_step)


@dataclass
class ToyRun:
    """Summary of one seed of the toy protocol."""

    seed: int
    smoothed_at_50: float
    smoothed_end: float
    adapt_style_0: float
    adapt_style_50: float
    median_style: dict[int, float]
    adapted_eval: float
    theta: ParamStore = field(repr=False)
    log: list[LogRow] = field(repr=False)

    @property
    def training_improved(self) -> bool:
        return self.smoothed_end < self.smoothed_at_50

    @property
    def adaptation_improved(self) -> bool:
        return self.adapt_style_50 < self.adapt_style_0


def run_toy(seed: int, adapt_steps: int = 50) -> ToyRun:
    exp = Experiment(toy_config(seed))
    theta, log = exp.train()
    sm = smooth(iteration_totals(log), SMOOTH_WINDOW)
    _, _, ev = exp.adapt(theta, exp.data.held_out[0], eval_at=(0, adapt_steps))
    return ToyRun(
        seed=seed,
        smoothed_at_50=float(sm[SMOOTH_WINDOW - 1]),
        smoothed_end=float(sm[-1]),
        adapt_style_0=ev[0].style,
        adapt_style_50=ev[adapt_steps].style,
        median_style=exp.layer_medians(theta),
        adapted_eval=exp.adapted_style_loss(theta),
        theta=theta,
        log=log,
    )


def count_inversions(values) -> int:
    """Number of consecutive increases in a sequence meant to be non-increasing."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(v[1:] > v[:-1]))
