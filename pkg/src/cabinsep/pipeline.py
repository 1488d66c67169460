"""End-to-end separation: STFT -> mask network -> streaming MVDR -> iSTFT.

Every stage is causal in time, so a truncated input reproduces a bit-exact
prefix of the full run's output (up to the frames that are complete in
both runs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import StftConfig, analyze, as_multichannel, synthesize
from .errors import InvalidInput
from .model import ModelConfig, ModelWeights, forward
from .model.network import MaskPair
from .mvdr import MvdrConfig, separate_stream


@dataclass
class SeparationResult:
    zones: np.ndarray            # (Z, samples) per-zone waveforms
    masks: MaskPair | None       # None when the mask network was bypassed (Z = 1)
    spectrogram: np.ndarray      # (Z, T, F) beamformed output spectrogram


def separate_waveform(
    wave: np.ndarray,
    weights: ModelWeights | None,
    model_cfg: ModelConfig,
    stft_cfg: StftConfig = StftConfig(),
    mvdr_cfg: MvdrConfig = MvdrConfig(),
    start: int = 0,
) -> SeparationResult:
    """Separate a Z-channel mixture into per-zone waveforms.

    For Z = 1 the beamformer is an exact passthrough and the mask network
    is bypassed (weights may be None).
    """
    wave = as_multichannel(wave)
    n_chan, n_samples = wave.shape
    if n_samples == 0:
        raise InvalidInput("empty input waveform")
    if n_chan != model_cfg.zones:
        raise InvalidInput(
            f"input has {n_chan} channels but the configuration expects {model_cfg.zones}"
        )
    if stft_cfg.bins != model_cfg.bins:
        raise InvalidInput(
            f"STFT bins ({stft_cfg.bins}) disagree with the model ({model_cfg.bins})"
        )

    spec = analyze(wave, stft_cfg)
    if n_chan == 1:
        out_spec = spec.copy()
        return SeparationResult(zones=wave.copy(), masks=None, spectrogram=out_spec)

    if weights is None:
        raise InvalidInput("multichannel separation requires model weights")
    masks = forward(spec, weights, model_cfg, start=start)
    out_spec = separate_stream(spec, masks, mvdr_cfg)
    zones = synthesize(out_spec, stft_cfg, length=n_samples)
    return SeparationResult(zones=zones, masks=masks, spectrogram=out_spec)
