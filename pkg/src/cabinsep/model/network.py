"""Forward-only mask-estimation network.

The network is built from stateful per-frame layers and always runs frame
by frame, so batch processing, prefix truncation, and stateful streaming
are the same code path and agree bit-exactly. Everything is causal: no
layer reads input frames beyond the current one.

Stage order per frame:
    features (stacked re/im, LPS, IPD) -> three 2-conv encoders -> 1x1 merge
    -> N x (full-band recurrence -> time-skip TAC -> sub-band conformer)
    -> causal deconvolution back to Z channels -> two sigmoid mask heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import features
from ..errors import InvalidInput
from .config import ModelConfig
from .weights import ModelWeights

_LN_EPS = 1e-5


@dataclass
class MaskPair:
    """Speech and noise masks, each (zones, frames, bins) in [0, 1]."""

    speech: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        if self.speech.shape != self.noise.shape:
            raise InvalidInput("speech and noise masks must have equal shapes")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.speech.shape


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _swish(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * gain + bias


class _CausalConv2d:
    """3x3 convolution over (time, freq): 2 past time taps, same-padded freq."""

    def __init__(self, w: np.ndarray, b: np.ndarray):
        out_ch, in_ch, kt, kf = w.shape
        self.kt, self.kf = kt, kf
        self.in_ch = in_ch
        # (out, in, kt, kf) -> (out, kt*kf*in) matching the patch layout below
        self.w_mat = np.ascontiguousarray(
            w.astype(np.float64).transpose(0, 2, 3, 1).reshape(out_ch, -1)
        )
        self.b = b.astype(np.float64)[:, None]
        self.history: list[np.ndarray] = []

    def step(self, frame: np.ndarray) -> np.ndarray:
        n_bins = frame.shape[-1]
        zeros = np.zeros_like(frame)
        frames = self.history[-(self.kt - 1):]
        frames = [zeros] * (self.kt - 1 - len(frames)) + frames + [frame]
        pad = self.kf // 2
        patches = np.empty((self.kt, self.kf, self.in_ch, n_bins))
        for dt in range(self.kt):
            padded = np.pad(frames[dt], ((0, 0), (pad, pad)))
            for df in range(self.kf):
                patches[dt, df] = padded[:, df : df + n_bins]
        out = self.w_mat @ patches.reshape(-1, n_bins) + self.b
        self.history.append(frame)
        if len(self.history) > self.kt - 1:
            self.history = self.history[-(self.kt - 1):]
        return out


class _LstmCell:
    def __init__(self, w_ih, w_hh, b_ih, b_hh):
        self.w_ih = w_ih.astype(np.float64)
        self.w_hh = w_hh.astype(np.float64)
        self.b = (b_ih + b_hh).astype(np.float64)
        hidden = w_hh.shape[1]
        self.h = np.zeros(hidden)
        self.c = np.zeros(hidden)
        self.hidden = hidden

    def step(self, x: np.ndarray) -> np.ndarray:
        gates = self.w_ih @ x + self.w_hh @ self.h + self.b
        n = self.hidden
        i = _sigmoid(gates[:n])
        f = _sigmoid(gates[n : 2 * n])
        g = np.tanh(gates[2 * n : 3 * n])
        o = _sigmoid(gates[3 * n :])
        self.c = f * self.c + i * g
        self.h = o * np.tanh(self.c)
        return self.h


class _FullBand:
    """Per-frame recurrence over the flattened (C, F) feature, residual added."""

    def __init__(self, weights: ModelWeights, prefix: str):
        self.w_in = weights[f"{prefix}.in_proj.w"].astype(np.float64)
        self.b_in = weights[f"{prefix}.in_proj.b"].astype(np.float64)
        self.lstm = _LstmCell(
            weights[f"{prefix}.lstm.w_ih"], weights[f"{prefix}.lstm.w_hh"],
            weights[f"{prefix}.lstm.b_ih"], weights[f"{prefix}.lstm.b_hh"],
        )
        self.w_out = weights[f"{prefix}.out_proj.w"].astype(np.float64)
        self.b_out = weights[f"{prefix}.out_proj.b"].astype(np.float64)

    def step(self, x: np.ndarray) -> np.ndarray:
        flat = x.reshape(-1)
        h = self.lstm.step(self.w_in @ flat + self.b_in)
        return x + (self.w_out @ h + self.b_out).reshape(x.shape)


class _Tac:
    """Channel compress / average / concatenate / restore, pointwise in (t, f)."""

    def __init__(self, weights: ModelWeights, prefix: str):
        self.wa = weights[f"{prefix}.linear_a.w"].astype(np.float64)
        self.ba = weights[f"{prefix}.linear_a.b"].astype(np.float64)[:, None]
        self.wb = weights[f"{prefix}.linear_b.w"].astype(np.float64)
        self.bb = weights[f"{prefix}.linear_b.b"].astype(np.float64)[:, None]
        self.wc = weights[f"{prefix}.linear_c.w"].astype(np.float64)
        self.bc = weights[f"{prefix}.linear_c.b"].astype(np.float64)[:, None]

    def step(self, x: np.ndarray) -> np.ndarray:
        a = np.maximum(self.wa @ x + self.ba, 0.0)
        b = np.maximum(self.wb @ x + self.bb, 0.0)
        pooled = np.broadcast_to(b.mean(axis=0, keepdims=True), a.shape)
        cat = np.concatenate([a, pooled], axis=0)
        return self.wc @ cat + self.bc


class _KvCache:
    """Append-only (frames, bins, heads, head_dim) buffer with a lookback window."""

    def __init__(self, n_bins: int, heads: int, head_dim: int, lookback: int | None):
        self.buf = np.zeros((16, n_bins, heads, head_dim))
        self.n = 0
        self.lookback = lookback

    def append(self, frame: np.ndarray) -> None:
        if self.n == self.buf.shape[0]:
            grown = np.zeros((2 * self.n,) + self.buf.shape[1:])
            grown[: self.n] = self.buf
            self.buf = grown
        self.buf[self.n] = frame
        self.n += 1

    def view(self) -> np.ndarray:
        start = 0 if self.lookback is None else max(0, self.n - self.lookback)
        return self.buf[start : self.n]


class _ConformerLayer:
    """Causal conformer block on per-bin sequences; weights shared across bins."""

    def __init__(self, weights: ModelWeights, prefix: str, cfg: ModelConfig):
        get = lambda leaf: weights[f"{prefix}.{leaf}"].astype(np.float64)
        self.ln = {name: (get(f"{name}.g"), get(f"{name}.b"))
                   for name in ("ln_ff1", "ln_att", "ln_conv", "ln_ff2", "ln_out")}
        self.ff1 = (get("ff1.w1"), get("ff1.b1"), get("ff1.w2"), get("ff1.b2"))
        self.ff2 = (get("ff2.w1"), get("ff2.b1"), get("ff2.w2"), get("ff2.b2"))
        self.wq, self.bq = get("att.wq"), get("att.bq")
        self.wk, self.bk = get("att.wk"), get("att.bk")
        self.wv, self.bv = get("att.wv"), get("att.bv")
        self.wo, self.bo = get("att.wo"), get("att.bo")
        self.pw1 = (get("conv.pw1.w"), get("conv.pw1.b"))
        self.dw = (get("conv.dw.w"), get("conv.dw.b"))
        self.pw2 = (get("conv.pw2.w"), get("conv.pw2.b"))

        self.heads = cfg.attn_heads
        self.head_dim = cfg.subband_hidden // cfg.attn_heads
        self.scale = 1.0 / np.sqrt(self.head_dim)
        self.k_cache = _KvCache(cfg.bins, self.heads, self.head_dim, cfg.lookback_frames)
        self.v_cache = _KvCache(cfg.bins, self.heads, self.head_dim, cfg.lookback_frames)
        kt = self.dw[0].shape[1]
        self.conv_history: list[np.ndarray] = [np.zeros((cfg.bins, cfg.subband_hidden))
                                               for _ in range(kt - 1)]

    def _ff(self, x, params):
        w1, b1, w2, b2 = params
        return _swish(x @ w1.T + b1) @ w2.T + b2

    def _attend(self, x: np.ndarray) -> np.ndarray:
        n_bins = x.shape[0]
        u = _layer_norm(x, *self.ln["ln_att"])
        q = (u @ self.wq.T + self.bq).reshape(n_bins, self.heads, self.head_dim)
        k = (u @ self.wk.T + self.bk).reshape(n_bins, self.heads, self.head_dim)
        v = (u @ self.wv.T + self.bv).reshape(n_bins, self.heads, self.head_dim)
        self.k_cache.append(k)
        self.v_cache.append(v)
        keys = self.k_cache.view()      # (S, F, heads, dh)
        values = self.v_cache.view()
        scores = np.einsum("fhd,sfhd->fhs", q, keys) * self.scale
        scores -= scores.max(axis=-1, keepdims=True)
        att = np.exp(scores)
        att /= att.sum(axis=-1, keepdims=True)
        ctx = np.einsum("fhs,sfhd->fhd", att, values).reshape(n_bins, -1)
        return ctx @ self.wo.T + self.bo

    def _conv_module(self, x: np.ndarray) -> np.ndarray:
        u = _layer_norm(x, *self.ln["ln_conv"])
        w1, b1 = self.pw1
        gates = u @ w1.T + b1
        half = gates.shape[-1] // 2
        glu = gates[:, :half] * _sigmoid(gates[:, half:])
        dw_w, dw_b = self.dw
        taps = self.conv_history + [glu]
        conv = sum(taps[k] * dw_w[:, k] for k in range(dw_w.shape[1])) + dw_b
        self.conv_history = taps[1:]
        w2, b2 = self.pw2
        return _swish(conv) @ w2.T + b2

    def step(self, x: np.ndarray) -> np.ndarray:
        x = x + 0.5 * self._ff(_layer_norm(x, *self.ln["ln_ff1"]), self.ff1)
        x = x + self._attend(x)
        x = x + self._conv_module(x)
        x = x + 0.5 * self._ff(_layer_norm(x, *self.ln["ln_ff2"]), self.ff2)
        return _layer_norm(x, *self.ln["ln_out"])


class _SubBand:
    """Per-bin conformer stack between channel projections, residual added."""

    def __init__(self, weights: ModelWeights, prefix: str, cfg: ModelConfig):
        self.w_in = weights[f"{prefix}.conv_in.w"].astype(np.float64)
        self.b_in = weights[f"{prefix}.conv_in.b"].astype(np.float64)
        self.layers = [
            _ConformerLayer(weights, f"{prefix}.layer{j}", cfg)
            for j in range(cfg.conformer_layers)
        ]
        self.w_out = weights[f"{prefix}.proj_out.w"].astype(np.float64)
        self.b_out = weights[f"{prefix}.proj_out.b"].astype(np.float64)

    def step(self, x: np.ndarray) -> np.ndarray:
        z = x.T @ self.w_in.T + self.b_in  # (F, H)
        for layer in self.layers:
            z = layer.step(z)
        return x + (z @ self.w_out.T + self.b_out).T


class _EncoderStage:
    """Three two-conv encoders plus the 1x1 merge convolution."""

    def __init__(self, weights: ModelWeights, cfg: ModelConfig):
        conv = lambda p: _CausalConv2d(weights[f"{p}.w"].astype(np.float64),
                                       weights[f"{p}.b"].astype(np.float64))
        self.convs = {name: (conv(f"enc_{name}.conv1"), conv(f"enc_{name}.conv2"))
                      for name in ("spec", "lps", "ipd")}
        merge_w = weights["merge.w"].astype(np.float64)
        self.merge_w = merge_w[:, :, 0, 0]
        self.merge_b = weights["merge.b"].astype(np.float64)[:, None]

    def step(self, spec_feat: np.ndarray, lps: np.ndarray, ipd: np.ndarray) -> np.ndarray:
        outs = []
        for name, frame in (("spec", spec_feat), ("lps", lps), ("ipd", ipd)):
            conv1, conv2 = self.convs[name]
            hidden = np.maximum(conv1.step(frame), 0.0)
            outs.append(np.maximum(conv2.step(hidden), 0.0))
        return self.merge_w @ np.concatenate(outs, axis=0) + self.merge_b


class StreamingMaskNet:
    """Stateful frame-by-frame mask estimator.

    One instance serves one audio stream. Weights are read-only and can be
    shared across concurrently running instances.
    """

    def __init__(self, weights: ModelWeights, cfg: ModelConfig, start: int = 0):
        if start not in (0, 1):
            raise InvalidInput("time-skip start index must be 0 or 1")
        if cfg.zones < 2:
            raise InvalidInput("mask network needs at least 2 zones (IPD pair)")
        weights.validate(cfg)
        self.cfg = cfg
        self.start = start
        self.encoder = _EncoderStage(weights, cfg)
        self.blocks = [
            (
                _FullBand(weights, f"block{i}.fullband"),
                _Tac(weights, f"block{i}.tac"),
                _SubBand(weights, f"block{i}.subband", cfg),
            )
            for i in range(cfg.n_full_sub)
        ]
        self.decoder = _CausalConv2d(weights["decoder.w"].astype(np.float64),
                                     weights["decoder.b"].astype(np.float64))
        self.w_speech = weights["head_speech.w"].astype(np.float64)
        self.b_speech = weights["head_speech.b"].astype(np.float64)[:, None]
        self.w_noise = weights["head_noise.w"].astype(np.float64)
        self.b_noise = weights["head_noise.b"].astype(np.float64)[:, None]
        self.frame_index = 0

    def step(self, snapshot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Consume one (Z, F) complex STFT frame; return (speech, noise) masks (Z, F)."""
        snapshot = np.asarray(snapshot)
        if snapshot.shape != (self.cfg.zones, self.cfg.bins):
            raise InvalidInput(
                f"expected frame of shape {(self.cfg.zones, self.cfg.bins)}, "
                f"got {snapshot.shape}"
            )
        spec_feat = features.stack_real_imag(snapshot)
        lps = features.compute_lps(snapshot, self.cfg.lps_floor)
        ipd = features.compute_ipd(snapshot, *self.cfg.ipd_pair)

        x = self.encoder.step(spec_feat, lps, ipd)
        t = self.frame_index
        selected = t >= self.start and (t - self.start) % 2 == 0
        for fullband, tac, subband in self.blocks:
            x = fullband.step(x)
            if selected:
                x = tac.step(x)
            x = subband.step(x)
        decoded = self.decoder.step(x)
        speech = _sigmoid(self.w_speech @ decoded + self.b_speech)
        noise = _sigmoid(self.w_noise @ decoded + self.b_noise)
        self.frame_index += 1
        return speech, noise


def forward(spec: np.ndarray, weights: ModelWeights, cfg: ModelConfig,
            start: int = 0) -> MaskPair:
    """Run the mask network over a whole (Z, T, F) spectrogram.

    Processes frames in order through `StreamingMaskNet`, so the result is
    bit-identical to stateful streaming and to any prefix run.
    """
    spec = np.asarray(spec)
    if spec.ndim != 3:
        raise InvalidInput(f"spectrogram must be (Z, T, F), got ndim={spec.ndim}")
    net = StreamingMaskNet(weights, cfg, start=start)
    n_frames = spec.shape[1]
    speech = np.empty((cfg.zones, n_frames, cfg.bins))
    noise = np.empty_like(speech)
    for t in range(n_frames):
        speech[:, t, :], noise[:, t, :] = net.step(spec[:, t, :])
    return MaskPair(speech, noise)


# ---------------------------------------------------------------------------
# Standalone stage operations (for inspection and testing)
# ---------------------------------------------------------------------------

def encode(spec: np.ndarray, lps: np.ndarray, ipd: np.ndarray,
           weights: ModelWeights, cfg: ModelConfig) -> np.ndarray:
    """Encoder stage only: (Z,T,F) complex + features -> (C, T, F) embedding."""
    spec = np.asarray(spec)
    if spec.shape[0] != cfg.zones or lps.shape[0] != cfg.zones or ipd.shape[0] != 2:
        raise InvalidInput("encode: channel counts do not match the configuration")
    if not (spec.shape[1:] == lps.shape[1:] == ipd.shape[1:]):
        raise InvalidInput("encode: feature tensors disagree on (T, F)")
    weights.validate(cfg)
    stage = _EncoderStage(weights, cfg)
    n_frames = spec.shape[1]
    out = np.empty((cfg.embed_channels, n_frames, cfg.bins))
    for t in range(n_frames):
        out[:, t, :] = stage.step(
            features.stack_real_imag(spec[:, t, :]), lps[:, t, :], ipd[:, t, :]
        )
    return out


def time_skip_select(emb: np.ndarray, start: int) -> np.ndarray:
    """Frames start, start+2, ... of a (C, T, F) tensor (stride-2 subsampling)."""
    if start not in (0, 1):
        raise InvalidInput("start must be 0 or 1")
    return emb[:, start::2, :]


def time_skip_merge(processed: np.ndarray, original: np.ndarray, start: int) -> np.ndarray:
    """Place processed frames back at their stride-2 positions."""
    if start not in (0, 1):
        raise InvalidInput("start must be 0 or 1")
    expected = original[:, start::2, :].shape[1]
    if processed.shape[1] != expected:
        raise InvalidInput(
            f"processed frame count {processed.shape[1]} != selected count {expected}"
        )
    out = original.copy()
    out[:, start::2, :] = processed
    return out


def tac_forward(emb: np.ndarray, weights: ModelWeights, cfg: ModelConfig,
                block: int = 0) -> np.ndarray:
    """Apply one block's TAC to every frame of a (C, T', F) tensor."""
    tac = _Tac(weights, f"block{block}.tac")
    out = np.empty_like(emb)
    for t in range(emb.shape[1]):
        out[:, t, :] = tac.step(emb[:, t, :])
    return out


def full_band_lstm(emb: np.ndarray, weights: ModelWeights, cfg: ModelConfig,
                   block: int = 0) -> np.ndarray:
    """Apply one block's full-band recurrence over a (C, T, F) tensor."""
    stage = _FullBand(weights, f"block{block}.fullband")
    out = np.empty_like(emb)
    for t in range(emb.shape[1]):
        out[:, t, :] = stage.step(emb[:, t, :])
    return out


def subband_conformer(emb: np.ndarray, weights: ModelWeights, cfg: ModelConfig,
                      block: int = 0) -> np.ndarray:
    """Apply one block's sub-band conformer over a (C, T, F) tensor."""
    stage = _SubBand(weights, f"block{block}.subband", cfg)
    out = np.empty_like(emb)
    for t in range(emb.shape[1]):
        out[:, t, :] = stage.step(emb[:, t, :])
    return out
