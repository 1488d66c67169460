"""Analytic multiply-accumulate accounting for the mask network.

Counts multiply-accumulates of the dense layers only; elementwise work
(activations, layer norms, softmax denominators) is excluded, which is the
usual convention for GMACs figures. Attention cost is data-length
dependent: each frame attends to min(t+1, lookback) cached frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .config import ModelConfig
from .weights import count_params

_CONV_KERNEL = 3


@dataclass
class MacReport:
    """Per-layer MAC breakdown for processing `seconds` of audio."""

    seconds: float
    frames: int
    items: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return sum(self.items.values())

    @property
    def gmacs_per_second(self) -> float:
        return self.total / self.seconds / 1e9

    def tac_total(self) -> float:
        return sum(v for k, v in self.items.items() if ".tac" in k)

    def to_dict(self) -> dict:
        return {
            "seconds": self.seconds,
            "frames": self.frames,
            "total_macs": self.total,
            "gmacs_per_second": self.gmacs_per_second,
            "items": dict(self.items),
        }


def count_macs(cfg: ModelConfig, seconds: float = 1.0, start: int = 0) -> MacReport:
    """Itemized MAC count of one forward pass over `seconds` of audio."""
    fps = 1.0 / cfg.hop_seconds
    frames = int(math.ceil(seconds * fps))
    f = cfg.bins
    positions = frames * f

    z = cfg.zones
    c = cfg.embed_channels
    enc = cfg.encoder_channels
    fbh = cfg.fullband_hidden
    h = cfg.subband_hidden
    ff = cfg.ff_dim
    comp = c // cfg.tac_compression
    k2 = _CONV_KERNEL * _CONV_KERNEL

    report = MacReport(seconds=seconds, frames=frames)
    items = report.items

    for name, in_ch in (("spec", 2 * z), ("lps", z), ("ipd", 2)):
        items[f"enc_{name}.conv1"] = positions * k2 * in_ch * enc
        items[f"enc_{name}.conv2"] = positions * k2 * enc * enc
    items["merge"] = positions * 3 * enc * c

    tac_frames = math.ceil((frames - start) / 2) if cfg.time_skip else frames
    tac_positions = tac_frames * f

    lookback = cfg.lookback_frames
    span_sum = _attention_span_sum(frames, lookback)

    for i in range(cfg.n_full_sub):
        p = f"block{i}"
        items[f"{p}.fullband.in_proj"] = frames * fbh * (c * f)
        items[f"{p}.fullband.lstm"] = frames * 4 * fbh * (fbh + fbh)
        items[f"{p}.fullband.out_proj"] = frames * (c * f) * fbh

        items[f"{p}.tac.linear_a"] = tac_positions * c * comp
        items[f"{p}.tac.linear_b"] = tac_positions * c * comp
        items[f"{p}.tac.linear_c"] = tac_positions * 2 * comp * c

        items[f"{p}.subband.conv_in"] = positions * c * h
        per_layer_fixed = (
            2 * ff * h          # ff1
            + 4 * h * h         # q, k, v, o projections
            + 2 * h * h         # conv pointwise 1 (to 2H)
            + _CONV_KERNEL * h  # depthwise
            + h * h             # conv pointwise 2
            + 2 * ff * h        # ff2
        )
        items[f"{p}.subband.layers"] = cfg.conformer_layers * positions * per_layer_fixed
        items[f"{p}.subband.attention"] = cfg.conformer_layers * f * 2 * h * span_sum
        items[f"{p}.subband.proj_out"] = positions * h * c

    items["decoder"] = positions * k2 * c * z
    items["head_speech"] = positions * z * z
    items["head_noise"] = positions * z * z
    return report


def _attention_span_sum(frames: int, lookback: int | None) -> int:
    """Sum over frames of the attended span min(t+1, lookback)."""
    if lookback is None or lookback >= frames:
        return frames * (frames + 1) // 2
    full = lookback * (lookback + 1) // 2
    return full + (frames - lookback) * lookback


__all__ = ["MacReport", "count_macs", "count_params"]
