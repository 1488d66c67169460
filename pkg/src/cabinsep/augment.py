"""Cabin scene synthesis: reverberant speech images, noise at target SNRs, labels.

A scene is described by a `SceneManifest` (JSON-serializable). Rendering is
deterministic given the manifest; randomness (SNR draws, IR strategies) is
confined to the sampling helpers, which take a seeded generator.

Conventions: the additive decomposition is exact -- the mixture equals the
sum of per-zone speech images plus the noise label at every microphone.
The per-zone speech label is the zone's reverberant image at its own
(reference) microphone; SNR is measured between the summed speech images
and the noise at microphone 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, convolve, read_wav
from .errors import InvalidInput, InvalidManifest
from .irlab import ImpulseResponse, read_ir

BACKGROUND_SNR_RANGE = (-20.0, 25.0)
TRANSIENT_SNR_RANGE = (-5.0, 5.0)


@dataclass(frozen=True)
class SpeakerEntry:
    zone: int
    speech: str              # path to a mono clean-speech WAV
    irs: tuple[str, ...]     # Z impulse-response WAVs, one per microphone
    gain: float = 1.0


@dataclass(frozen=True)
class NoiseEntry:
    file: str
    snr_db: float
    onset_seconds: float = 0.0


@dataclass
class SceneManifest:
    zones: int = 4
    sample_rate: int = DEFAULT_SAMPLE_RATE
    speakers: list[SpeakerEntry] = field(default_factory=list)
    background: NoiseEntry | None = None
    transients: list[NoiseEntry] = field(default_factory=list)
    seed: int | None = None

    def validate(self, check_snr_ranges: bool = True,
                 ir_override_zones: set[int] | frozenset = frozenset()) -> None:
        if not (1 <= len(self.speakers) <= self.zones):
            raise InvalidManifest(
                f"need between 1 and {self.zones} speakers, got {len(self.speakers)}"
            )
        zones_taken = [s.zone for s in self.speakers]
        if len(set(zones_taken)) != len(zones_taken):
            raise InvalidManifest(f"zone collision in manifest: {zones_taken}")
        for s in self.speakers:
            if not (0 <= s.zone < self.zones):
                raise InvalidManifest(f"speaker zone {s.zone} out of range")
            if s.zone not in ir_override_zones and len(s.irs) != self.zones:
                raise InvalidManifest(
                    f"speaker in zone {s.zone} has {len(s.irs)} IRs, expected {self.zones}"
                )
        if check_snr_ranges:
            if self.background is not None:
                lo, hi = BACKGROUND_SNR_RANGE
                if not (lo <= self.background.snr_db <= hi):
                    raise InvalidManifest(
                        f"background SNR {self.background.snr_db} outside [{lo}, {hi}] dB"
                    )
            for t in self.transients:
                lo, hi = TRANSIENT_SNR_RANGE
                if not (lo <= t.snr_db <= hi):
                    raise InvalidManifest(f"transient SNR {t.snr_db} outside [{lo}, {hi}] dB")

    def to_json(self) -> str:
        doc = {
            "zones": self.zones,
            "sample_rate": self.sample_rate,
            "seed": self.seed,
            "speakers": [
                {"zone": s.zone, "speech": s.speech, "irs": list(s.irs), "gain": s.gain}
                for s in self.speakers
            ],
            "background": None if self.background is None else {
                "file": self.background.file, "snr_db": self.background.snr_db,
            },
            "transients": [
                {"file": t.file, "snr_db": t.snr_db, "onset_seconds": t.onset_seconds}
                for t in self.transients
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SceneManifest":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidManifest(f"manifest is not valid JSON: {exc}") from exc
        try:
            speakers = [
                SpeakerEntry(zone=int(s["zone"]), speech=s["speech"],
                             irs=tuple(s["irs"]), gain=float(s.get("gain", 1.0)))
                for s in doc.get("speakers", [])
            ]
            background = doc.get("background")
            if background is not None:
                background = NoiseEntry(file=background["file"],
                                        snr_db=float(background["snr_db"]))
            transients = [
                NoiseEntry(file=t["file"], snr_db=float(t["snr_db"]),
                           onset_seconds=float(t.get("onset_seconds", 0.0)))
                for t in doc.get("transients", [])
            ]
        except (KeyError, TypeError) as exc:
            raise InvalidManifest(f"manifest is missing required fields: {exc}") from exc
        return cls(
            zones=int(doc.get("zones", 4)),
            sample_rate=int(doc.get("sample_rate", DEFAULT_SAMPLE_RATE)),
            speakers=speakers,
            background=background,
            transients=transients,
            seed=doc.get("seed"),
        )


@dataclass
class SceneRender:
    """Rendered scene: mixture, per-zone labels, and the exact decomposition."""

    mixture: np.ndarray        # (Z, L)
    speech_labels: np.ndarray  # (Z, L): zone z's image at microphone z (zeros if empty)
    noise_label: np.ndarray    # (Z, L): total noise at each microphone
    zone_images: np.ndarray    # (Z_zone, Z_mic, L): full per-zone multichannel images

    @property
    def occupied_zones(self) -> list[int]:
        return [z for z in range(self.zone_images.shape[0])
                if np.any(self.zone_images[z])]


def render_reverberant(speech: np.ndarray, irs: list[ImpulseResponse]) -> np.ndarray:
    """Convolve one utterance with per-microphone IRs -> (Z, L) image.

    Channels are zero-padded to the longest convolution so the lengths agree.
    """
    speech = np.asarray(speech, dtype=np.float64)
    if speech.ndim != 1 or speech.size == 0:
        raise InvalidInput("speech must be a non-empty mono waveform")
    if not irs:
        raise InvalidInput("at least one impulse response is required")
    out_len = speech.shape[0] + max(ir.taps.shape[0] for ir in irs) - 1
    image = np.zeros((len(irs), out_len))
    for m, ir in enumerate(irs):
        conv = convolve(speech, ir.taps)
        image[m, : conv.shape[0]] = conv
    return image


def snr_scale(signal: np.ndarray, noise: np.ndarray, target_snr_db: float) -> np.ndarray:
    """Scale `noise` so that 10 log10(P_signal / P_noise) equals the target.

    Powers are mean squares over each full waveform.
    """
    signal = np.asarray(signal, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    p_signal = float(np.mean(signal**2))
    p_noise = float(np.mean(noise**2))
    if p_signal <= 0.0:
        raise InvalidInput("signal is silent; SNR undefined")
    if p_noise <= 0.0:
        raise InvalidInput("noise is silent; cannot scale")
    factor = np.sqrt(p_signal / (p_noise * 10.0 ** (target_snr_db / 10.0)))
    return noise * factor


def _fit_noise(noise: np.ndarray, zones: int, length: int) -> np.ndarray:
    """Tile/trim a mono or multichannel noise recording to (zones, length)."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim == 1:
        noise = noise[None, :]
    if noise.shape[0] == 1:
        noise = np.broadcast_to(noise, (zones, noise.shape[1])).copy()
    if noise.shape[0] != zones:
        raise InvalidInput(f"noise has {noise.shape[0]} channels, expected 1 or {zones}")
    if noise.shape[1] == 0:
        raise InvalidInput("noise recording is empty")
    reps = int(np.ceil(length / noise.shape[1]))
    return np.tile(noise, (1, reps))[:, :length]


def mix_scene_signals(
    speakers: list[tuple[int, np.ndarray, list[ImpulseResponse], float]],
    zones: int,
    background: np.ndarray | None = None,
    background_snr_db: float | None = None,
    transients: list[tuple[np.ndarray, int, float]] | None = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> SceneRender:
    """Render a scene from in-memory signals.

    Args:
        speakers: (zone, mono speech, per-mic IRs, gain) per speaker.
        background: optional noise waveform, mono or (Z, n); scaled to
            `background_snr_db` against the speech sum at microphone 1.
        transients: optional (waveform, onset_samples, snr_db) events.

    Returns:
        SceneRender with exact additivity: mixture == sum(zone images) + noise.
    """
    if not speakers:
        raise InvalidInput("a scene needs at least one speaker")
    seen = set()
    for zone, _, irs, _ in speakers:
        if zone in seen:
            raise InvalidManifest(f"two speakers assigned to zone {zone}")
        seen.add(zone)
        if len(irs) != zones:
            raise InvalidInput(f"speaker in zone {zone}: expected {zones} IRs, got {len(irs)}")

    images = []
    for zone, speech, irs, gain in speakers:
        images.append((zone, gain * render_reverberant(speech, irs)))
    length = max(img.shape[1] for _, img in images)

    zone_images = np.zeros((zones, zones, length))
    for zone, img in images:
        zone_images[zone, :, : img.shape[1]] = img
    speech_sum = zone_images.sum(axis=0)

    noise_total = np.zeros((zones, length))
    reference = speech_sum[0]
    if background is not None:
        if background_snr_db is None:
            raise InvalidInput("background noise requires a target SNR")
        fitted = _fit_noise(background, zones, length)
        # one common factor for all channels, chosen on the reference mic
        p_ref = float(np.mean(fitted[0] ** 2))
        p_sig = float(np.mean(reference**2))
        if p_ref <= 0.0:
            raise InvalidInput("background noise is silent at the reference microphone")
        factor = np.sqrt(p_sig / (p_ref * 10.0 ** (background_snr_db / 10.0)))
        noise_total += factor * fitted
    for event in transients or []:
        waveform, onset, snr_db = event
        waveform = np.asarray(waveform, dtype=np.float64)
        if waveform.ndim != 1:
            raise InvalidInput("transient events must be mono")
        if not (0 <= onset < length):
            raise InvalidInput(f"transient onset {onset} outside the scene")
        scaled = snr_scale(reference, waveform, snr_db)
        end = min(length, onset + scaled.shape[0])
        noise_total[:, onset:end] += scaled[: end - onset]

    mixture = speech_sum + noise_total
    speech_labels = np.zeros((zones, length))
    for zone, _ in images:
        speech_labels[zone] = zone_images[zone, zone]
    return SceneRender(
        mixture=mixture,
        speech_labels=speech_labels,
        noise_label=noise_total,
        zone_images=zone_images,
    )


def mix_scene(manifest: SceneManifest, base_dir=".",
              irs_by_zone: dict[int, list[ImpulseResponse]] | None = None) -> SceneRender:
    """Load the manifest's files and render the scene.

    `irs_by_zone` optionally overrides each speaker's IR assignment (e.g. an
    assignment drawn with `mix_ir_sets`); manifest IR paths are ignored for
    zones present in the mapping.
    """
    manifest.validate(ir_override_zones=set(irs_by_zone or {}))
    base = Path(base_dir)

    def _resolve(name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else base / p

    speakers = []
    for entry in manifest.speakers:
        speech, rate = read_wav(_resolve(entry.speech))
        if rate != manifest.sample_rate:
            raise InvalidInput(
                f"{entry.speech}: sample rate {rate} != manifest rate {manifest.sample_rate}"
            )
        if irs_by_zone is not None and entry.zone in irs_by_zone:
            irs = irs_by_zone[entry.zone]
        else:
            irs = [read_ir(_resolve(p)) for p in entry.irs]
        speakers.append((entry.zone, speech[0], irs, entry.gain))

    background = None
    background_snr = None
    if manifest.background is not None:
        background, _ = read_wav(_resolve(manifest.background.file))
        background_snr = manifest.background.snr_db

    transients = []
    for t in manifest.transients:
        wave, _ = read_wav(_resolve(t.file))
        onset = int(round(t.onset_seconds * manifest.sample_rate))
        transients.append((wave[0], onset, t.snr_db))

    return mix_scene_signals(
        speakers, manifest.zones,
        background=background, background_snr_db=background_snr,
        transients=transients, sample_rate=manifest.sample_rate,
    )


def sample_background_snr(rng: np.random.Generator) -> float:
    """Uniform draw from the default background-noise SNR range."""
    return float(rng.uniform(*BACKGROUND_SNR_RANGE))


def sample_transient_snr(rng: np.random.Generator) -> float:
    """Uniform draw from the default transient-noise SNR range."""
    return float(rng.uniform(*TRANSIENT_SNR_RANGE))


def sample_transient_onset(rng: np.random.Generator, scene_samples: int,
                           event_samples: int) -> int:
    """Random onset such that the event fits inside the scene."""
    if event_samples > scene_samples:
        raise InvalidInput("transient event is longer than the scene")
    return int(rng.integers(0, scene_samples - event_samples + 1))


def oracle_masks(render: SceneRender, stft_cfg=None):
    """Ideal-ratio speech masks and noise masks from a rendered scene.

    The speech mask for zone z is the power ratio |X|^2 / (|X|^2 + |Y - X|^2)
    at the zone's reference microphone, where X is the zone's reverberant
    image; the noise mask is |V|^2 / |Y|^2 clipped to [0, 1]. Empty zones get
    an exactly zero speech mask.

    Returns:
        (mixture spectrogram (Z, T, F), MaskPair) -- ready for the beamformer.
    """
    from .dsp import StftConfig, analyze
    from .model.network import MaskPair

    cfg = stft_cfg or StftConfig()
    mixture_spec = analyze(render.mixture, cfg)
    noise_spec = analyze(render.noise_label, cfg)
    zones = render.mixture.shape[0]
    eps = 1e-12
    speech = np.zeros(mixture_spec.shape)
    noise = np.zeros(mixture_spec.shape)
    for z in range(zones):
        image = analyze(render.zone_images[z], cfg)[z]
        target_power = image.real**2 + image.imag**2
        residual = mixture_spec[z] - image
        residual_power = residual.real**2 + residual.imag**2
        speech[z] = target_power / (target_power + residual_power + eps)
        mix_power = mixture_spec[z].real**2 + mixture_spec[z].imag**2
        noise_power = noise_spec[z].real**2 + noise_spec[z].imag**2
        noise[z] = np.clip(noise_power / (mix_power + eps), 0.0, 1.0)
    return mixture_spec, MaskPair(speech, noise)


# ---------------------------------------------------------------------------
# Seeded cabin-scene sampling (experiment scaffolding)
# ---------------------------------------------------------------------------

def synthetic_utterance(rng: np.random.Generator, num_samples: int,
                        sample_rate: int = DEFAULT_SAMPLE_RATE,
                        pause_probability: float = 0.35) -> np.ndarray:
    """Speech-shaped test signal: low-pass-tilted noise under a bursty envelope.

    The envelope interpolates ~4 Hz random nodes, a fraction of which are
    forced to zero so utterances have real pauses (sparser overlap).
    """
    if num_samples < 2:
        raise InvalidInput("utterance needs at least 2 samples")
    from scipy.signal import lfilter

    noise = rng.standard_normal(num_samples)
    tilted = lfilter([1.0], [1.0, -0.92], noise)
    n_nodes = max(int(num_samples / sample_rate * 4), 2)  # ~4 Hz syllable rate
    nodes = rng.uniform(0.0, 1.0, size=n_nodes)
    nodes[rng.random(n_nodes) < pause_probability] = 0.0
    if not np.any(nodes):
        nodes[rng.integers(n_nodes)] = 1.0
    envelope = np.interp(np.linspace(0, n_nodes - 1, num_samples),
                         np.arange(n_nodes), nodes)
    out = tilted * envelope
    return 0.5 * out / np.max(np.abs(out))


def sample_cabin_scene(
    rng: np.random.Generator,
    speaker_zones: list[int],
    duration_seconds: float = 6.0,
    background_snr_db: float = 5.0,
    reflection: float = 0.35,
    max_order: int = 3,
    ir_length: int = 1024,
    source_positions: dict[int, tuple[float, float, float]] | None = None,
    noise_position: tuple[float, float, float] = (0.9, 0.12, 0.45),
    posture_jitter: float = 0.05,
    pause_probability: float = 0.5,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> SceneRender:
    """Simulate a seeded cabin scene end to end (sources, IRs, noise).

    Each speaker gets a synthetic utterance rendered through image-source
    IRs from its (jittered) seat, or from an explicit position in
    `source_positions` (e.g. a zone boundary). The background is a noise
    point source rendered through its own IRs and scaled to the target SNR.
    """
    from .irlab import CABIN_MICS, cabin_room, seat_position, simulate_ism_all

    num_samples = int(duration_seconds * sample_rate)
    zones = len(CABIN_MICS)
    speakers = []
    for zone in speaker_zones:
        if source_positions and zone in source_positions:
            position = source_positions[zone]
        else:
            position = seat_position(zone, rng, jitter=posture_jitter)
        room = cabin_room(position, reflection=reflection, max_order=max_order,
                          ir_length=ir_length)
        irs = simulate_ism_all(room)
        speech = synthetic_utterance(rng, num_samples, sample_rate,
                                     pause_probability=pause_probability)
        speakers.append((zone, speech, irs, 1.0))

    noise_room = cabin_room(noise_position, reflection=reflection,
                            max_order=max_order, ir_length=ir_length)
    noise_irs = simulate_ism_all(noise_room)
    noise = render_reverberant(rng.standard_normal(num_samples), noise_irs)

    return mix_scene_signals(
        speakers, zones,
        background=noise, background_snr_db=background_snr_db,
        sample_rate=sample_rate,
    )
