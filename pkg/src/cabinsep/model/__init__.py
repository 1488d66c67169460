"""Mask-estimation network: config, weights, forward pass, MAC accounting."""

from .config import ModelConfig, VARIANT_PRESETS, variant_config
from .macs import MacReport, count_macs
from .network import (
    MaskPair,
    StreamingMaskNet,
    encode,
    forward,
    full_band_lstm,
    subband_conformer,
    tac_forward,
    time_skip_merge,
    time_skip_select,
)
from .weights import ModelWeights, count_params, init_random, required_shapes

__all__ = [
    "ModelConfig",
    "VARIANT_PRESETS",
    "variant_config",
    "MacReport",
    "count_macs",
    "count_params",
    "MaskPair",
    "StreamingMaskNet",
    "encode",
    "forward",
    "full_band_lstm",
    "subband_conformer",
    "tac_forward",
    "time_skip_merge",
    "time_skip_select",
    "ModelWeights",
    "init_random",
    "required_shapes",
]
