"""Finite-difference gradient suite covering every differentiable building block.

Each case rebuilds its graph from leaf tensors so that finite differences
can perturb them in place.  Run through :func:`run_gradient_suite` or the ``gradcheck``
CLI subcommand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attention import AttentionWeights, WindowPlan, multi_head_attention
from .backbone import LossNetwork
from .features import FeatureMap, channel_stats, instance_norm
from .gradcheck import gradient_pairs, relative_error
from .meta import StyleObjective
from .model import MasterModel, ModelConfig
from .objectives import content_loss, similarity_metric, style_loss
from .params import OTHER, ParamStore, make_rng
from .style_transformer import StyleCode, StyleTransformer
from .tensor import Tensor, matmul, softmax_rows

GRAD_TOL = 1e-4
CHECK_STREAM = 21


@dataclass
class GradResult:
    """``error`` is norm-wise over every probed entry of every tensor in the case;
    ``per_param`` keeps the per-tensor errors for diagnosis."""

    name: str
    error: float
    per_param: dict[str, float]

    @property
    def passed(self) -> bool:
        return self.error < GRAD_TOL


def _leaf(rng, *shape, scale=1.0, name=None) -> Tensor:
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True, name=name)


def _case_matmul(rng):
    a, b = _leaf(rng, 2, 3, 4, name="a"), _leaf(rng, 4, 5, name="b")
    w = Tensor(rng.normal(size=(2, 3, 5)))
    return [a, b], lambda: (matmul(a, b) * w).sum()


def _case_softmax(rng):
    x = _leaf(rng, 4, 6, scale=2.0, name="x")
    w = Tensor(rng.normal(size=(4, 6)))
    return [x], lambda: (softmax_rows(x) * w).sum()


def _case_instance_norm(rng):
    x = _leaf(rng, 2, 9, 3, name="x")
    w = Tensor(rng.normal(size=(2, 9, 3)))
    return [x], lambda: (instance_norm(FeatureMap(x, 3, 3)).tokens * w).sum()


def _case_channel_stats(rng):
    x = _leaf(rng, 2, 7, 3, name="x")
    wm, ws = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(2, 3)))

    def loss():
        m, s = channel_stats(FeatureMap(x))
        return (m * wm).sum() + (s * ws).sum()

    return [x], loss


def _attention_setup(rng, d=8, heads=2):
    store = ParamStore()
    w = AttentionWeights.create(store, "a", d, heads, rng, OTHER)
    for n, t in store.items():
        t.name = n
    return store, w


def _case_attention_window(rng):
    store, w = _attention_setup(rng)
    x = _leaf(rng, 2, 16, 8, name="x")
    plan = WindowPlan(4, 4, 2, 1)
    proj = Tensor(rng.normal(size=(2, 16, 8)))

    def loss():
        f = FeatureMap(x, 4, 4)
        out, _ = multi_head_attention(f, f, f, w, plan)
        return (out.tokens * proj).sum()

    return [x] + [t for _, t in store.items()], loss


def _case_attention_global(rng):
    store, w = _attention_setup(rng)
    q, kv = _leaf(rng, 2, 5, 8, name="q"), _leaf(rng, 1, 3, 8, name="kv")
    proj = Tensor(rng.normal(size=(2, 5, 8)))

    def loss():
        out, _ = multi_head_attention(FeatureMap(q), FeatureMap(kv), FeatureMap(kv), w)
        return (out.tokens * proj).sum()

    return [q, kv] + [t for _, t in store.items()], loss


def _transformer_setup(rng, d=8, heads=2):
    st = StyleTransformer(d_model=d, heads=heads, window=2, shift=1, mlp_ratio=2)
    store = ParamStore()
    st.init_params(store, rng)
    for n, t in store.items():
        t.name = n
    return st, store


def _case_encoder_layer(rng):
    st, store = _transformer_setup(rng)
    k, s, m = (_leaf(rng, 1, 16, 8, scale=0.5, name=n) for n in ("k", "sigma", "mu"))
    proj = [Tensor(rng.normal(size=(1, 16, 8))) for _ in range(3)]

    def loss():
        code = StyleCode(FeatureMap(k, 4, 4), FeatureMap(s, 4, 4), FeatureMap(m, 4, 4))
        new, _ = st.encoder_layer(store, code)
        return sum(((getattr(new, n).tokens * p).sum() for n, p in zip(("k", "sigma", "mu"), proj)), Tensor(0.0))

    params = [k, s, m] + [t for n, t in store.items() if n.startswith("st.enc.")]
    return params, loss


def _case_decoder_layer(rng):
    st, store = _transformer_setup(rng)
    fcs = _leaf(rng, 2, 16, 8, scale=0.5, name="fcs")
    k, s, m = (_leaf(rng, 1, 9, 8, scale=0.5, name=n) for n in ("k", "sigma", "mu"))
    proj = Tensor(rng.normal(size=(2, 16, 8)))

    def loss():
        code = StyleCode(FeatureMap(k, 3, 3), FeatureMap(s, 3, 3), FeatureMap(m, 3, 3))
        out, _ = st.decoder_layer(store, FeatureMap(fcs, 4, 4), code)
        return (out.tokens * proj).sum()

    params = [fcs, k, s, m] + [t for n, t in store.items() if n.startswith("st.dec.")]
    return params, loss


def _pyramid(rng, prefix, batch, shapes):
    return {lvl: _leaf(rng, batch, n, c, name=f"{prefix}{lvl}") for lvl, (n, c) in shapes.items()}


def _case_content_style_losses(rng):
    shapes = {2: (6, 3), 3: (4, 2)}
    a, b = _pyramid(rng, "f", 2, shapes), _pyramid(rng, "g", 2, shapes)
    s = _pyramid(rng, "s", 1, shapes)

    def loss():
        fa = {k: FeatureMap(v) for k, v in a.items()}
        fb = {k: FeatureMap(v) for k, v in b.items()}
        fs = {k: FeatureMap(v) for k, v in s.items()}
        return content_loss(fa, fb) + style_loss(fs, fb) * 10.0

    return list(a.values()) + list(b.values()) + list(s.values()), loss


def _case_similarity(rng):
    shapes = {3: (5, 3), 4: (4, 3)}
    a, b = _pyramid(rng, "c", 2, shapes), _pyramid(rng, "cs", 2, shapes)

    def loss():
        return similarity_metric({k: FeatureMap(v) for k, v in a.items()}, {k: FeatureMap(v) for k, v in b.items()})

    return list(a.values()) + list(b.values()), loss


def _case_pipeline(rng):
    """The whole pipeline with a 2-layer transformer plus the total loss, at d_model=8 on 16x16 images."""
    model = MasterModel(ModelConfig(d_model=8, heads=2, window=2, shift=1, mlp_ratio=2))
    store = model.init_params(int(rng.integers(1 << 30)))
    for n, t in store.items():
        t.name = n
    objective = StyleObjective(model, LossNetwork(3))
    contents = rng.uniform(size=(2, 16, 16, 3))
    style = rng.uniform(size=(1, 16, 16, 3))

    def loss():
        return objective.losses(store, contents, style, 2)[2]

    return [t for _, t in store.items()], loss


CASES: dict[str, Callable] = {
    "matmul": _case_matmul,
    "softmax": _case_softmax,
    "instance_norm": _case_instance_norm,
    "channel_stats": _case_channel_stats,
    "attention_windowed": _case_attention_window,
    "attention_global": _case_attention_global,
    "encoder_layer": _case_encoder_layer,
    "decoder_layer": _case_decoder_layer,
    "content_style_losses": _case_content_style_losses,
    "similarity_metric": _case_similarity,
    "pipeline_2layer": _case_pipeline,
}


def run_gradient_suite(seed: int = 0, names=None, max_entries: int = 4, h: float = 1e-6) -> list[GradResult]:
    """Run the selected cases (all by default); at most ``max_entries`` entries per tensor are probed.

    The small default step keeps perturbations from crossing ReLU kinks in the
    loss network, where central differences are not meaningful.
    """
    results = []
    for name in names or CASES:
        if name not in CASES:
            raise KeyError(f"unknown gradient case {name!r}")
        rng = make_rng(seed, CHECK_STREAM)
        params, loss = CASES[name](rng)
        pairs = gradient_pairs(loss, params, h=h, max_entries=max_entries, rng=rng)
        a = np.concatenate([p[0] for p in pairs.values()])
        n = np.concatenate([p[1] for p in pairs.values()])
        per = {k: relative_error(*v) for k, v in pairs.items()}
        results.append(GradResult(name, relative_error(a, n), per))
    return results
