"""Training losses and the self-similarity metric.

Also holds the two-vector demonstration of residual-fusion distortion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import scaled_dot_attention
from .features import FeatureMap, channel_stats, instance_norm
from .tensor import Tensor, matmul

COS_EPS = 1e-8
SIM_LEVELS = (3, 4)

Pyramid = dict[int, FeatureMap]


@dataclass(frozen=True)
class LossWeights:
    style_weight: float = 10.0

    def __post_init__(self):
        if self.style_weight < 0:
            raise ValueError("style weight must be nonnegative")


def _per_sample_norm(x: Tensor) -> Tensor:
    """Frobenius norm over all but the batch axis, averaged over the batch."""
    axes = tuple(range(1, x.ndim))
    return (x * x).sum(axis=axes).sqrt().mean()


def content_loss(fc: Pyramid, fcs: Pyramid) -> Tensor:
    """Sum over levels of ``||IN(F_c) - IN(F_cs)||``."""
    total = Tensor(0.0)
    for x in sorted(fc):
        a, b = fc[x], fcs[x]
        if a.shape[1:] != b.shape[1:]:
            raise ValueError(f"level {x}: shape mismatch {a.shape} vs {b.shape}")
        total = total + _per_sample_norm(instance_norm(a).tokens - instance_norm(b).tokens)
    return total


def style_loss(fs: Pyramid, fcs: Pyramid) -> Tensor:
    """Sum over levels of ``||mu_s - mu_cs|| + ||sigma_s - sigma_cs||``."""
    total = Tensor(0.0)
    for x in sorted(fs):
        a, b = fs[x], fcs[x]
        if a.channels != b.channels:
            raise ValueError(f"level {x}: channel mismatch {a.channels} vs {b.channels}")
        mu_a, sd_a = channel_stats(a)
        mu_b, sd_b = channel_stats(b)
        total = total + _per_sample_norm(mu_a - mu_b) + _per_sample_norm(sd_a - sd_b)
    return total


def total_loss(content, style, w: LossWeights = LossWeights()):
    return content + style * w.style_weight


def _column_normalized_distance(f: Tensor) -> Tensor:
    """``D_ij / sum_k D_kj`` with ``D = 1 - cos`` and ``cos = <f_i, f_j> / (|f_i||f_j| + eps)``.

    f is (batch, n, C).  With unit rows ``u`` the distance is rewritten exactly as
    ``|u_i - u_j|^2 / 2 + <u_i, u_j> * eps / (|f_i||f_j| + eps)``, which has no
    cancellation for (nearly) parallel rows.  There D is of order eps and is then
    divided by an eps-sized column sum, so the naive ``1 - cos`` would lose about
    half the significant digits.  All-zero rows have cos = 0, hence D = 1.
    """
    B, n, C = f.shape
    norms = (f * f).sum(axis=2, keepdims=True).sqrt()
    zero = (norms.data == 0.0).astype(np.float64)
    u = f / (norms + Tensor(zero))
    diff = u.reshape(B, n, 1, C) - u.reshape(B, 1, n, C)
    zero_pair = 0.5 * (zero + zero.transpose(0, 2, 1))
    one_minus_dot = (diff * diff).sum(axis=3) * 0.5 + Tensor(zero_pair)
    shrink = COS_EPS / (matmul(norms, norms.swap_last()) + COS_EPS)
    d = one_minus_dot + matmul(u, u.swap_last()) * shrink
    return d / (d.sum(axis=1, keepdims=True) + COS_EPS)


def similarity_metric(fc: Pyramid, fcs: Pyramid, levels=SIM_LEVELS) -> Tensor:
    """Self-similarity preservation error over ``levels`` (batch mean)."""
    total = Tensor(0.0)
    for x in levels:
        a, b = fc[x], fcs[x]
        if a.n_tokens == 0:
            raise ValueError(f"level {x} has no tokens")
        if a.shape[1:] != b.shape[1:]:
            raise ValueError(f"level {x}: shape mismatch {a.shape} vs {b.shape}")
        n = a.n_tokens
        diff = (_column_normalized_distance(a.tokens) - _column_normalized_distance(b.tokens)).abs()
        total = total + diff.sum(axis=(1, 2)).mean() * (1.0 / n**2)
    return total


@dataclass
class LossRecord:
    content: float
    style: float
    total: float


# ---------------------------------------------------------------------------
# 2-D distortion example
# ---------------------------------------------------------------------------

CONTENT_2D = ((0.5, 1.0), (4.0, 1.5))
STYLE_2D = ((3.5, 0.0), (-5.0, -5.0))
GAMMAS = (1.0, 4.0, 10.0, 100.0)


def cosine(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


@dataclass
class DistortionReport:
    cos_before: float
    cos_after_residual: float
    cos_after_attention: float
    attention_to_s1: list[float]
    gammas: list[float] = field(default_factory=list)
    cos_after_scaled: list[float] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [
            f"cos_before={self.cos_before:.6f}",
            f"cos_after_residual={self.cos_after_residual:.6f}",
            f"cos_after_attention={self.cos_after_attention:.6f}",
            "attention_to_s1=" + ",".join(f"{w:.6f}" for w in self.attention_to_s1),
        ]
        out += [f"cos_after_scaled[gamma={g:g}]={c:.6f}" for g, c in zip(self.gammas, self.cos_after_scaled)]
        return out


def distortion_demo(gammas=GAMMAS) -> DistortionReport:
    """Two content vectors pulled toward the same dominant style vector.

    ``cos_after_residual`` adds s1 to both contents (attention fully on s1);
    ``cos_after_attention`` uses the actual softmax attention of each content
    row over both style rows; the scaled variant adds s1 to ``gamma * c``.
    """
    c = np.array(CONTENT_2D)
    s = np.array(STYLE_2D)
    cs_ideal = c + s[0]
    out, weights = scaled_dot_attention(Tensor(c), Tensor(s), Tensor(s))
    cs_attn = c + out.data
    scaled = [cosine(g * c[0] + s[0], g * c[1] + s[0]) for g in gammas]
    return DistortionReport(
        cos_before=cosine(c[0], c[1]),
        cos_after_residual=cosine(cs_ideal[0], cs_ideal[1]),
        cos_after_attention=cosine(cs_attn[0], cs_attn[1]),
        attention_to_s1=[float(w) for w in weights.data[:, 0]],
        gammas=[float(g) for g in gammas],
        cos_after_scaled=scaled,
    )


def is_monotone_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))

