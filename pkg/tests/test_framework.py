import numpy as np
import pytest
from scipy.signal import butter, sosfilt

from spatial_se.beamforming import ideal_ratio_mask
from spatial_se.framework import (
    IdentitySeparator, IStftDecoder, MaskingSeparator, StftEncoder, run_pipeline,
)
from spatial_se.losses import si_snr
from spatial_se.stft import StftConfig, Waveform, stft


def test_identity_pipeline(rng):
    cfg = StftConfig(n_fft=256, hop=64)
    x = Waveform(rng.standard_normal(4000), 16000)
    (out,) = run_pipeline(x, StftEncoder(cfg), IdentitySeparator(), IStftDecoder(cfg))
    assert out.num_samples == x.num_samples
    np.testing.assert_allclose(out.samples, x.samples, atol=1e-6)


def test_zeroed_source(rng):
    cfg = StftConfig()
    x = Waveform(rng.standard_normal(3000), 16000)
    frames = stft(x, cfg).data.shape[:2]
    sep = MaskingSeparator([np.ones(frames), np.zeros(frames)])
    keep, drop = run_pipeline(x, StftEncoder(cfg), sep, IStftDecoder(cfg))
    np.testing.assert_allclose(keep.samples, x.samples, atol=1e-6)
    assert np.max(np.abs(drop.samples)) < 1e-12


def test_oracle_irm_separates_two_bands(rng):
    fs = 16000
    cfg = StftConfig()
    low = sosfilt(butter(8, 1500, "low", fs=fs, output="sos"), rng.standard_normal(2 * fs))
    high = sosfilt(butter(8, 3000, "high", fs=fs, output="sos"), rng.standard_normal(2 * fs))
    mix = Waveform(low + high, fs)
    s_low, s_high = stft(Waveform(low, fs), cfg), stft(Waveform(high, fs), cfg)
    masks = [ideal_ratio_mask(s_low, s_high).values, ideal_ratio_mask(s_high, s_low).values]
    outs = run_pipeline(mix, StftEncoder(cfg), MaskingSeparator(masks), IStftDecoder(cfg))
    for ref, out in zip((low, high), outs):
        assert out.num_samples == mix.num_samples
        assert si_snr(ref, out.channel(0)) > si_snr(ref, mix.channel(0))


def test_wrong_output_count_is_rejected(rng):
    class Liar:
        num_sources = 2

        def __call__(self, features):
            return [features]

    cfg = StftConfig()
    with pytest.raises(ValueError, match="declared 2"):
        run_pipeline(Waveform(rng.standard_normal(2000), 16000), StftEncoder(cfg), Liar(), IStftDecoder(cfg))


def test_mismatched_encoder_decoder():
    with pytest.raises(ValueError, match="differ"):
        run_pipeline(
            Waveform(np.zeros(1000), 16000), StftEncoder(StftConfig()), IdentitySeparator(),
            IStftDecoder(StftConfig(n_fft=256, hop=64)),
        )
