import numpy as np
import pytest

from sepeval.audio import AudioBuffer, StftConfig, stft
from sepeval.errors import (
    BufferTooShort,
    GeometryMismatch,
    LengthMismatch,
    ZeroTarget,
)
from sepeval.spectral import MrStftConfig, mr_stft_loss, stft_loss_single

from conftest import make_noise

SR = 44100


def spec_of(samples, fft_size=256, hop=64):
    return stft(AudioBuffer(samples, SR), StftConfig(fft_size, hop))


class TestStftLossSingle:
    def test_identical_spectrograms(self):
        s = spec_of(make_noise(0.1, seed=1).samples)
        sc, logmag = stft_loss_single(s, s)
        assert sc == 0.0
        assert logmag == 0.0

    def test_half_amplitude_analytic(self):
        noise = make_noise(0.1, seed=2)
        target = spec_of(noise.samples)
        estimate = spec_of(0.5 * noise.samples)
        sc, logmag = stft_loss_single(estimate, target)
        assert sc == pytest.approx(0.5, abs=1e-9)
        assert logmag == pytest.approx(target.bin_count * np.log(2), rel=1e-9)

    def test_silent_estimate_floored_formula_oracle(self):
        noise = make_noise(0.1, seed=3)
        target = spec_of(noise.samples)
        estimate = spec_of(np.zeros(len(noise)))
        floor = 1e-8
        sc, logmag = stft_loss_single(estimate, target, floor=floor)
        target_mag = np.maximum(np.abs(target.bins), floor)
        est_mag = np.full_like(target_mag, floor)
        expected_sc = np.linalg.norm(target_mag - est_mag) / np.linalg.norm(target_mag)
        expected_logmag = (
            np.sum(np.abs(np.log(target_mag) - np.log(est_mag))) / target.frame_count
        )
        assert np.isfinite(sc) and np.isfinite(logmag)
        assert sc == pytest.approx(expected_sc, rel=1e-12)
        assert logmag == pytest.approx(expected_logmag, rel=1e-12)

    def test_weights_are_applied(self):
        noise = make_noise(0.1, seed=4)
        target = spec_of(noise.samples)
        estimate = spec_of(0.5 * noise.samples)
        weights = np.linspace(0.1, 1.0, target.bin_count)
        sc, _ = stft_loss_single(estimate, target, weights=weights)
        assert sc == pytest.approx(0.5, abs=1e-9)

    def test_per_element_normalization_mode(self):
        noise = make_noise(0.1, seed=5)
        target = spec_of(noise.samples)
        estimate = spec_of(0.5 * noise.samples)
        _, per_frame = stft_loss_single(estimate, target)
        _, per_element = stft_loss_single(
            estimate, target, logmag_normalization="elements"
        )
        assert per_element == pytest.approx(per_frame / target.bin_count, rel=1e-12)

    def test_geometry_mismatch(self):
        a = spec_of(make_noise(0.1, seed=6).samples, fft_size=256)
        b = spec_of(make_noise(0.1, seed=6).samples, fft_size=512, hop=128)
        with pytest.raises(GeometryMismatch):
            stft_loss_single(a, b)

    def test_zero_target(self):
        target = spec_of(np.zeros(1000))
        with pytest.raises(ZeroTarget):
            stft_loss_single(target, target)

    def test_argument_order_is_not_symmetric(self):
        noise = make_noise(0.1, seed=7)
        target = spec_of(noise.samples)
        estimate = spec_of(0.5 * noise.samples)
        forward, _ = stft_loss_single(estimate, target)
        backward, _ = stft_loss_single(target, estimate)
        assert forward == pytest.approx(0.5, abs=1e-9)
        assert backward == pytest.approx(1.0, abs=1e-9)  # denominator swapped


class TestMrStftLoss:
    def test_identical_signals(self):
        noise = make_noise(0.25, seed=8)
        assert mr_stft_loss(noise, noise).total == 0.0

    def test_polarity_flip_is_invisible(self):
        noise = make_noise(0.25, seed=9)
        flipped = AudioBuffer(-noise.samples, SR)
        breakdown = mr_stft_loss(flipped, noise)
        assert breakdown.total == 0.0
        assert all(r.sc_term == 0.0 for r in breakdown.per_resolution)

    def test_6db_attenuation_sc_terms(self):
        noise = make_noise(0.5, amplitude=0.5, seed=10)
        attenuated = noise.scaled(0.5)
        breakdown = mr_stft_loss(attenuated, noise)
        for res in breakdown.per_resolution:
            assert res.sc_term == pytest.approx(0.5, abs=1e-9)

    def test_total_is_mean_of_terms(self):
        noise = make_noise(0.5, seed=11)
        other = make_noise(0.5, seed=12)
        breakdown = mr_stft_loss(other, noise)
        expected = np.mean(
            [r.sc_term + r.logmag_term for r in breakdown.per_resolution]
        )
        assert breakdown.total == pytest.approx(expected, rel=1e-12)
        assert breakdown.total >= 0.0

    def test_default_resolutions_and_hops(self):
        config = MrStftConfig()
        assert config.fft_sizes == (256, 512, 1024, 2048, 4096)
        assert [config.hop_for(n) for n in config.fft_sizes] == [
            64, 128, 256, 512, 1024,
        ]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            mr_stft_loss(make_noise(0.5, seed=1), make_noise(0.6, seed=1))

    def test_too_short(self):
        short = make_noise(0.05, seed=2)  # 2205 samples < 4096
        with pytest.raises(BufferTooShort):
            mr_stft_loss(short, short)
