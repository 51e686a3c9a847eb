"""Meta-learned arbitrary style transfer on a small numpy autodiff engine.

The pieces, bottom up: :mod:`.tensor` (reverse-mode autodiff), :mod:`.attention`
and :mod:`.style_transformer` (shared-parameter encoder/decoder layers),
:mod:`.backbone` (image encoder/decoder and the frozen loss network),
:mod:`.objectives` (losses), :mod:`.meta` (Reptile meta training and fast
adaptation) and :mod:`.cli` (experiment runner).
"""

from .config import ExperimentConfig, load_config, parse_config
from .features import FeatureMap, channel_stats, instance_norm
from .meta import AdaptConfig, MetaConfig, fast_adapt, k_sweep, meta_train, reptile_step
from .model import MasterModel, ModelConfig
from .params import OTHER, STYLE_ENCODER, ParamStore
from .style_transformer import StyleTransformer, interpolate_outputs, merge_styles
from .tensor import Tensor, no_grad

__all__ = [
    "AdaptConfig", "ExperimentConfig", "FeatureMap", "MasterModel", "MetaConfig", "ModelConfig", "OTHER",
    "ParamStore", "STYLE_ENCODER", "StyleTransformer", "Tensor", "channel_stats", "fast_adapt", "instance_norm",
    "interpolate_outputs", "k_sweep", "load_config", "merge_styles", "meta_train", "no_grad", "parse_config",
    "reptile_step",
]
