import struct
import subprocess
import sys

import numpy as np
import pytest

from emb_extractor import (
    ExtractorConfig,
    ModelUnavailable,
    extract,
    log_mel_frames,
    stub_encode,
)
from emb_extractor.audio_io import AudioDecodeError, load_wav_mono
from emb_extractor.cli import main as cli_main
from emb_extractor.stub_mel import LOG_FLOOR, N_BANDS

# the primary suite is the consumer of EMB1 files; its reader is the
# round-trip authority here
from sepeval.embedding import read_embeddings

SR = 44100


def write_wav_pcm16(path, samples, sample_rate=SR):
    ints = np.clip(np.rint(np.asarray(samples) * 32768.0), -32768, 32767)
    payload = ints.astype("<i2").tobytes()
    fmt = struct.pack("<HHIIHH", 1, 1, sample_rate, sample_rate * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


@pytest.fixture
def noise_wav(tmp_path):
    rng = np.random.default_rng(5)
    path = tmp_path / "noise.wav"
    write_wav_pcm16(path, 0.25 * rng.standard_normal(SR))
    return path


# --- independent log-mel reimplementation (direct DFT, explicit triangles) ---

def reference_log_mel(samples, sample_rate):
    window = int(round(0.025 * sample_rate))
    hop = int(round(0.010 * sample_rate))
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < window:
        samples = np.pad(samples, (0, window - samples.size))
    nfft = 1
    while nfft < window:
        nfft *= 2
    n = np.arange(window)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window)
    n_bins = nfft // 2 + 1
    # direct DFT, no FFT library
    angles = -2.0 * np.pi * np.outer(np.arange(n_bins), np.arange(nfft)) / nfft
    dft = np.exp(1j * angles)

    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_inv(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = mel_inv(np.linspace(mel(0.0), mel(sample_rate / 2.0), 66))
    bin_freqs = np.arange(n_bins) * sample_rate / nfft
    frames = []
    start = 0
    while start + window <= samples.size:
        padded = np.zeros(nfft)
        padded[:window] = samples[start : start + window] * hann
        spectrum = dft @ padded
        power = spectrum.real**2 + spectrum.imag**2
        energies = np.zeros(64)
        for band in range(64):
            lo, center, hi = edges[band], edges[band + 1], edges[band + 2]
            for k, f in enumerate(bin_freqs):
                if lo < f < hi:
                    weight = (f - lo) / (center - lo) if f <= center \
                        else (hi - f) / (hi - center)
                    energies[band] += weight * power[k]
                elif f == center:
                    energies[band] += power[k]
        frames.append(np.log(energies + 1e-10))
        start += hop
    return np.array(frames, dtype=np.float64)


class TestStubMel:
    def test_silence_hits_log_floor(self):
        frames = log_mel_frames(np.zeros(SR // 2), SR)
        expected = np.float32(np.log(LOG_FLOOR))
        assert np.all(frames == expected)

    def test_shape(self):
        frames = log_mel_frames(np.ones(SR), SR)
        window, hop = round(0.025 * SR), round(0.010 * SR)
        assert frames.shape == (1 + (SR - window) // hop, N_BANDS)

    def test_depends_only_on_samples(self):
        rng = np.random.default_rng(9)
        samples = rng.standard_normal(SR // 4)
        first = log_mel_frames(samples, SR)
        second = log_mel_frames(samples.copy(), SR)
        assert np.array_equal(first, second)

    def test_agrees_with_independent_reimplementation(self):
        rng = np.random.default_rng(13)
        samples = 0.3 * rng.standard_normal(int(0.3 * SR))
        fast = log_mel_frames(samples, SR).astype(np.float64)
        slow = reference_log_mel(samples, SR)
        assert fast.shape == slow.shape
        assert np.max(np.abs(fast - slow)) < 1e-5


class TestExtract:
    def test_stub_roundtrips_through_core_reader(self, noise_wav, tmp_path):
        out = tmp_path / "noise.emb1"
        stub_encode(noise_wav, out)
        seq = read_embeddings(out)
        assert seq.encoder_id == "stub-mel"
        assert seq.dimension == N_BANDS
        assert seq.frame_rate == pytest.approx(SR / round(0.010 * SR))
        samples, rate = load_wav_mono(noise_wav)
        np.testing.assert_array_equal(seq.frames, log_mel_frames(samples, rate))

    def test_repeat_runs_byte_identical(self, noise_wav, tmp_path):
        first = tmp_path / "a.emb1"
        second = tmp_path / "b.emb1"
        stub_encode(noise_wav, first)
        stub_encode(noise_wav, second)
        assert first.read_bytes() == second.read_bytes()

    def test_unknown_encoder(self):
        with pytest.raises(ModelUnavailable):
            ExtractorConfig(encoder="resnet-9000")

    def test_undecodable_audio(self, tmp_path):
        bad = tmp_path / "bad.wav"
        bad.write_bytes(b"not audio")
        with pytest.raises(AudioDecodeError):
            extract(bad, tmp_path / "out.emb1", ExtractorConfig())

    def test_attenuation_changes_embeddings(self, tmp_path):
        # end-to-end: -6 dB copy must differ under the core's embedding MSE
        from sepeval.embedding import embedding_mse

        rng = np.random.default_rng(17)
        samples = 0.4 * rng.standard_normal(SR // 2)
        loud, quiet = tmp_path / "loud.wav", tmp_path / "quiet.wav"
        write_wav_pcm16(loud, samples)
        write_wav_pcm16(quiet, 0.5 * samples)
        out_loud, out_quiet = tmp_path / "l.emb1", tmp_path / "q.emb1"
        stub_encode(loud, out_loud)
        stub_encode(quiet, out_quiet)
        mse = embedding_mse(read_embeddings(out_loud), read_embeddings(out_quiet))
        assert mse > 0.0


class TestCli:
    def test_extract_invocation(self, noise_wav, tmp_path):
        out = tmp_path / "cli.emb1"
        code = cli_main(["--encoder", "stub-mel", "--in", str(noise_wav),
                         "--out", str(out)])
        assert code == 0
        assert read_embeddings(out).encoder_id == "stub-mel"

    def test_unknown_encoder_error_json(self, noise_wav, tmp_path, capsys):
        code = cli_main(["--encoder", "nope", "--in", str(noise_wav),
                         "--out", str(tmp_path / "x.emb1")])
        assert code == 1
        assert "ModelUnavailable" in capsys.readouterr().err

    def test_console_script_subprocess(self, noise_wav, tmp_path):
        out = tmp_path / "sub.emb1"
        result = subprocess.run(
            [sys.executable, "-m", "emb_extractor.cli", "--encoder",
             "stub-mel", "--in", str(noise_wav), "--out", str(out)],
            capture_output=True,
        )
        assert result.returncode == 0
        assert out.exists()
