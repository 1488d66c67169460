import json

import numpy as np
import pytest

from cabinsep.augment import (
    BACKGROUND_SNR_RANGE,
    NoiseEntry,
    SceneManifest,
    SpeakerEntry,
    TRANSIENT_SNR_RANGE,
    mix_scene,
    mix_scene_signals,
    oracle_masks,
    render_reverberant,
    sample_background_snr,
    sample_cabin_scene,
    sample_transient_snr,
    snr_scale,
    synthetic_utterance,
)
from cabinsep.dsp import convolve, write_wav
from cabinsep.errors import InvalidInput, InvalidManifest
from cabinsep.irlab import ImpulseResponse, write_ir

FS = 16000


def unit_impulse(k=0, length=8):
    taps = np.zeros(length)
    taps[k] = 1.0
    return ImpulseResponse(taps)


def measured_snr_db(signal, noise):
    return 10 * np.log10(np.mean(signal**2) / np.mean(noise**2))


class TestRenderReverberant:
    def test_unit_impulses_copy_signal(self, rng):
        s = rng.standard_normal(200)
        image = render_reverberant(s, [unit_impulse() for _ in range(4)])
        assert image.shape == (4, 207)
        for ch in image:
            np.testing.assert_allclose(ch[:200], s, atol=1e-12)

    def test_shifted_impulses_delay_per_channel(self, rng):
        s = rng.standard_normal(100)
        image = render_reverberant(s, [unit_impulse(k) for k in (0, 3)])
        np.testing.assert_allclose(image[1, 3:103], s, atol=1e-12)
        assert np.max(np.abs(image[1, :3])) < 1e-12

    def test_matches_convolve_oracle(self, rng):
        s = rng.standard_normal(256)
        irs = [ImpulseResponse(rng.standard_normal(32)) for _ in range(3)]
        image = render_reverberant(s, irs)
        for ch, ir in zip(image, irs):
            np.testing.assert_allclose(ch, convolve(s, ir.taps), atol=1e-9)

    def test_requires_irs(self, rng):
        with pytest.raises(InvalidInput):
            render_reverberant(rng.standard_normal(10), [])


class TestSnrScale:
    def test_equal_power_target_zero(self, rng):
        signal = rng.standard_normal(1000)
        noise = rng.standard_normal(1000)
        noise *= np.sqrt(np.mean(signal**2) / np.mean(noise**2))
        scaled = snr_scale(signal, noise, 0.0)
        np.testing.assert_allclose(scaled, noise, rtol=1e-9)

    def test_plus_20_db_scales_power_by_hundredth(self, rng):
        signal = rng.standard_normal(1000)
        noise = rng.standard_normal(1000)
        at0 = snr_scale(signal, noise, 0.0)
        at20 = snr_scale(signal, noise, 20.0)
        np.testing.assert_allclose(np.mean(at20**2) / np.mean(at0**2), 0.01,
                                   rtol=1e-9)

    def test_realized_snr_matches_target(self, rng):
        for target in (-15.0, 0.0, 7.3, 24.0):
            signal = rng.standard_normal(2000) * rng.uniform(0.1, 3)
            noise = rng.standard_normal(2000) * rng.uniform(0.1, 3)
            scaled = snr_scale(signal, noise, target)
            assert abs(measured_snr_db(signal, scaled) - target) < 1e-3

    def test_silent_operands_rejected(self, rng):
        with pytest.raises(InvalidInput):
            snr_scale(np.zeros(10), rng.standard_normal(10), 0.0)
        with pytest.raises(InvalidInput):
            snr_scale(rng.standard_normal(10), np.zeros(10), 0.0)


class TestMixSceneSignals:
    def _speakers(self, rng, zones):
        return [
            (z, rng.standard_normal(400), [unit_impulse(k + z) for k in range(4)], 1.0)
            for z in zones
        ]

    def test_single_speaker_no_noise(self, rng):
        speakers = self._speakers(rng, [1])
        render = mix_scene_signals(speakers, 4)
        np.testing.assert_array_equal(render.mixture, render.zone_images[1])
        np.testing.assert_array_equal(render.speech_labels[1],
                                      render.mixture[1])
        assert render.occupied_zones == [1]
        np.testing.assert_array_equal(render.noise_label, 0.0)

    def test_two_speaker_additivity_exact(self, rng):
        render = mix_scene_signals(self._speakers(rng, [0, 2]), 4)
        total = render.zone_images.sum(axis=0) + render.noise_label
        np.testing.assert_array_equal(render.mixture, total)

    def test_background_snr_realized(self, rng):
        speakers = self._speakers(rng, [0, 2])
        noise = rng.standard_normal(700)
        render = mix_scene_signals(speakers, 4, background=noise,
                                   background_snr_db=0.0)
        speech_ref = render.zone_images.sum(axis=0)[0]
        assert abs(measured_snr_db(speech_ref, render.noise_label[0])) < 1e-3

    def test_transient_added_at_onset(self, rng):
        speakers = self._speakers(rng, [0])
        event = rng.standard_normal(50)
        render = mix_scene_signals(speakers, 4, transients=[(event, 100, 0.0)])
        assert np.all(render.noise_label[:, :100] == 0)
        assert np.any(render.noise_label[:, 100:150] != 0)

    def test_zone_collision_rejected(self, rng):
        speakers = self._speakers(rng, [1]) + self._speakers(rng, [1])
        with pytest.raises(InvalidManifest):
            mix_scene_signals(speakers, 4)

    def test_wrong_ir_count_rejected(self, rng):
        speakers = [(0, rng.standard_normal(100), [unit_impulse()], 1.0)]
        with pytest.raises(InvalidInput):
            mix_scene_signals(speakers, 4)

    def test_determinism(self, rng):
        speakers = self._speakers(rng, [0, 3])
        noise = rng.standard_normal(500)
        a = mix_scene_signals(speakers, 4, background=noise, background_snr_db=5.0)
        b = mix_scene_signals(speakers, 4, background=noise, background_snr_db=5.0)
        np.testing.assert_array_equal(a.mixture, b.mixture)
        np.testing.assert_array_equal(a.noise_label, b.noise_label)


class TestManifest:
    def _manifest(self, tmp_path, rng, snr=5.0):
        speech = rng.standard_normal(500) * 0.1
        write_wav(tmp_path / "speech.wav", speech, FS)
        write_wav(tmp_path / "noise.wav", rng.standard_normal(300) * 0.1, FS)
        for m in range(4):
            write_ir(tmp_path / f"ir{m}.wav", unit_impulse(m, 16))
        return SceneManifest(
            zones=4,
            speakers=[SpeakerEntry(zone=1, speech="speech.wav",
                                   irs=tuple(f"ir{m}.wav" for m in range(4)))],
            background=NoiseEntry(file="noise.wav", snr_db=snr),
        )

    def test_json_round_trip(self, tmp_path, rng):
        manifest = self._manifest(tmp_path, rng)
        back = SceneManifest.from_json(manifest.to_json())
        assert back == manifest

    def test_render_from_files(self, tmp_path, rng):
        manifest = self._manifest(tmp_path, rng)
        render = mix_scene(manifest, base_dir=tmp_path)
        assert render.mixture.shape[0] == 4
        assert render.occupied_zones == [1]
        total = render.zone_images.sum(axis=0) + render.noise_label
        np.testing.assert_allclose(render.mixture, total, atol=1e-12)

    def test_zone_collision_rejected(self, tmp_path, rng):
        manifest = self._manifest(tmp_path, rng)
        manifest.speakers.append(manifest.speakers[0])
        with pytest.raises(InvalidManifest):
            manifest.validate()

    def test_snr_out_of_range_rejected(self, tmp_path, rng):
        manifest = self._manifest(tmp_path, rng, snr=30.0)
        with pytest.raises(InvalidManifest):
            manifest.validate()
        manifest2 = self._manifest(tmp_path, rng)
        manifest2.transients.append(NoiseEntry(file="noise.wav", snr_db=9.0))
        with pytest.raises(InvalidManifest):
            manifest2.validate()

    def test_bad_json_rejected(self):
        with pytest.raises(InvalidManifest):
            SceneManifest.from_json("{not json")
        with pytest.raises(InvalidManifest):
            SceneManifest.from_json(json.dumps({"speakers": [{"zone": 0}]}))

    def test_sampled_snrs_respect_ranges(self, rng):
        for _ in range(200):
            bg = sample_background_snr(rng)
            tr = sample_transient_snr(rng)
            assert BACKGROUND_SNR_RANGE[0] <= bg <= BACKGROUND_SNR_RANGE[1]
            assert TRANSIENT_SNR_RANGE[0] <= tr <= TRANSIENT_SNR_RANGE[1]

    def test_sampled_onset_keeps_event_inside_scene(self, rng):
        from cabinsep.augment import sample_transient_onset
        for _ in range(200):
            onset = sample_transient_onset(rng, 1000, 100)
            assert 0 <= onset <= 900
        with pytest.raises(InvalidInput):
            sample_transient_onset(rng, 100, 200)


class TestSceneSampling:
    def test_synthetic_utterance_has_pauses_and_unit_peak(self, rng):
        utt = synthetic_utterance(rng, FS, pause_probability=0.5)
        assert utt.shape == (FS,)
        np.testing.assert_allclose(np.max(np.abs(utt)), 0.5, atol=1e-9)

    def test_sampled_scene_is_deterministic_given_seed(self):
        a = sample_cabin_scene(np.random.default_rng(11), [0, 2],
                               duration_seconds=0.5)
        b = sample_cabin_scene(np.random.default_rng(11), [0, 2],
                               duration_seconds=0.5)
        np.testing.assert_array_equal(a.mixture, b.mixture)

    def test_sampled_scene_additivity_and_snr(self, rng):
        render = sample_cabin_scene(rng, [1, 3], duration_seconds=0.5,
                                    background_snr_db=5.0)
        total = render.zone_images.sum(axis=0) + render.noise_label
        np.testing.assert_allclose(render.mixture, total, atol=1e-12)
        speech_ref = render.zone_images.sum(axis=0)[0]
        assert abs(measured_snr_db(speech_ref, render.noise_label[0]) - 5.0) < 1e-3

    def test_oracle_masks_bounded_and_zero_for_empty_zones(self, rng):
        render = sample_cabin_scene(rng, [2], duration_seconds=0.4)
        spec, masks = oracle_masks(render)
        assert masks.speech.shape == spec.shape
        assert np.all(masks.speech >= 0) and np.all(masks.speech <= 1)
        assert np.all(masks.noise >= 0) and np.all(masks.noise <= 1)
        for z in (0, 1, 3):
            np.testing.assert_array_equal(masks.speech[z], 0.0)
