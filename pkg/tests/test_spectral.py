"""Tests for spectrum estimation, peak detection, and Mollow classification."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mollowsim.probe import TimeSeries
from mollowsim.spectral import (
    MollowClassification,
    MollowStructure,
    Peak,
    PeakSet,
    RabiScalingFit,
    WindowKind,
    classify_mollow,
    detect_peaks,
    fft_spectrum,
    fit_rabi_scaling,
    infer_bm,
    tone_amplitude,
)


def make_series(values, fs):
    n = len(values)
    return TimeSeries(np.arange(n) / fs, values, 1.0 / fs)


def tone_series(freqs_amps, fs, n, noise_rms=0.0, seed=0):
    t = np.arange(n) / fs
    s = np.zeros(n)
    for f, a in freqs_amps:
        s += a * np.cos(2 * np.pi * f * t)
    if noise_rms:
        s += noise_rms * np.random.default_rng(seed).standard_normal(n)
    return make_series(s, fs)


# ------------------------------------------------------------ fft_spectrum


def test_fft_argument_errors():
    series = tone_series([(10.0, 1.0)], fs=100.0, n=255)
    with pytest.raises(ValueError, match="256"):
        fft_spectrum(series)
    series = tone_series([(10.0, 1.0)], fs=100.0, n=512)
    with pytest.raises(ValueError, match="zero_pad_factor"):
        fft_spectrum(series, zero_pad_factor=3)
    series.times[5] += 1e-3  # corrupt uniformity after construction
    with pytest.raises(ValueError, match="uniform"):
        fft_spectrum(series)


def test_pure_tone_integer_periods_single_bin():
    # 50 Hz over exactly 1 s at fs=1000: all AC power lands in one bin
    series = tone_series([(50.0, 1.0)], fs=1000.0, n=1000)
    spec = fft_spectrum(series, window=WindowKind.RECT, zero_pad_factor=1)
    assert spec.df == pytest.approx(1.0)
    k = int(np.argmin(np.abs(spec.freqs - 50.0)))
    assert spec.power[k] / np.sum(spec.power) > 0.99


def test_zero_series_zero_spectrum():
    series = make_series(np.zeros(512), fs=100.0)
    spec = fft_spectrum(series)
    assert np.all(spec.power == 0.0)
    assert len(detect_peaks(spec)) == 0


def test_band_slice_isolates_carrier_region():
    # a strong low-frequency line would set the global prominence scale;
    # slicing to the carrier band restores detection of the weak doublet
    series = tone_series([(3.0, 1.0), (95.0, 1e-3), (105.0, 1e-3)], fs=1000.0, n=8000)
    spec = fft_spectrum(series, zero_pad_factor=4)
    assert len(detect_peaks(spec, prominence_rel=1e-2)) == 1
    cut = spec.band(50.0, 150.0)
    assert cut.df == spec.df and cut.enbw == spec.enbw and cut.nfft == spec.nfft
    assert cut.freqs[0] >= 50.0 and cut.freqs[-1] <= 150.0
    peaks = detect_peaks(cut, prominence_rel=1e-2)
    assert len(peaks) == 2
    np.testing.assert_allclose(peaks.frequencies(), [95.0, 105.0], atol=0.2 * spec.df)
    for p in peaks.peaks:
        assert p.amplitude == pytest.approx(1e-3, rel=0.02)
    with pytest.raises(ValueError, match="hi > lo"):
        spec.band(100.0, 100.0)
    with pytest.raises(ValueError, match="no spectrum bins"):
        spec.band(600.0, 700.0)


def test_product_signal_has_sidebands_but_no_carrier():
    # cos(2 pi L t) cos(2 pi W t) = [cos(L-W) + cos(L+W)]/2: lines at L+-W only
    f_l, f_w = 100.0, 5.0
    t = np.arange(4000) / 1000.0
    series = make_series(np.cos(2 * np.pi * f_l * t) * np.cos(2 * np.pi * f_w * t), fs=1000.0)
    spec = fft_spectrum(series, window=WindowKind.HANN, zero_pad_factor=4)
    peaks = detect_peaks(spec, prominence_rel=1e-3)
    freqs = peaks.frequencies()
    assert len(freqs) == 2
    assert abs(freqs[0] - (f_l - f_w)) < 0.2 * spec.df
    assert abs(freqs[1] - (f_l + f_w)) < 0.2 * spec.df
    carrier_bin = int(round(f_l / spec.df))
    assert spec.power[carrier_bin] < 1e-9 * np.max(spec.power)


def test_rect_parseval():
    rng = np.random.default_rng(42)
    vals = rng.standard_normal(1024)
    series = make_series(vals, fs=250.0)
    spec = fft_spectrum(series, window=WindowKind.RECT, zero_pad_factor=2)
    integrated = np.sum(spec.power) * spec.df
    ac_power = np.mean((vals - vals.mean()) ** 2)
    assert integrated == pytest.approx(ac_power, rel=0.01)


@pytest.mark.parametrize("window", [WindowKind.HANN, WindowKind.RECT])
def test_tone_amplitude_recovery_from_peak(window):
    # zero-padding exposes window-transform ripples (up to ~5e-2 relative
    # prominence for Rect), so the threshold here sits well above them
    series = tone_series([(64.0, 0.7)], fs=1024.0, n=2048)
    spec = fft_spectrum(series, window=window, zero_pad_factor=4)
    peaks = detect_peaks(spec, prominence_rel=0.2)
    assert len(peaks) == 1
    assert peaks.peaks[0].amplitude == pytest.approx(0.7, rel=0.01)
    assert peaks.peaks[0].freq == pytest.approx(64.0, abs=0.2 * spec.df)


# ------------------------------------------------------------ detect_peaks


def test_synthetic_triplet_detection():
    f_l, f_w = 1600.0, 48.0
    series = tone_series(
        [(f_l - f_w, 0.3), (f_l, 1.0), (f_l + f_w, 0.3)],
        fs=20000.0,
        n=40000,
        noise_rms=1e-3,
    )
    spec = fft_spectrum(series, zero_pad_factor=4)
    peaks = detect_peaks(spec, prominence_rel=1e-2)
    freqs = peaks.frequencies()
    assert len(freqs) == 3
    for truth, got in zip([f_l - f_w, f_l, f_l + f_w], freqs):
        assert abs(got - truth) < 0.2 * spec.df


def test_synthetic_quintuplet_detection_and_spacing():
    f_l, f_w = 1300.0, 48.0
    tones = [(f_l + k * f_w, a) for k, a in zip(range(-2, 3), [0.2, 0.5, 1.0, 0.5, 0.2])]
    series = tone_series(tones, fs=16000.0, n=64000, noise_rms=1e-3)
    spec = fft_spectrum(series, zero_pad_factor=4)
    peaks = detect_peaks(spec, prominence_rel=1e-2)
    freqs = peaks.frequencies()
    assert len(freqs) == 5
    spacings = np.diff(freqs)
    assert np.max(np.abs(spacings - f_w)) < 0.2 * spec.df


@settings(max_examples=40, deadline=None)
@given(freq=st.floats(min_value=50.0, max_value=400.0))
def test_interpolated_peak_error_bound(freq):
    # isolated tone at SNR >= 100: interpolated frequency within 0.2 bins
    series = tone_series([(freq, 1.0)], fs=1000.0, n=2048, noise_rms=1e-3, seed=7)
    spec = fft_spectrum(series, zero_pad_factor=4)
    peaks = detect_peaks(spec, prominence_rel=1e-2)
    assert len(peaks) >= 1
    best = min(peaks.peaks, key=lambda p: abs(p.freq - freq))
    assert abs(best.freq - freq) < 0.2 * spec.df


# --------------------------------------------------------- classification


def manual_peakset(freqs, df=0.5):
    return PeakSet([Peak(float(f), 1.0, 1.0) for f in sorted(freqs)], 0.0, df)


def test_classify_triplet_example():
    result = classify_mollow(manual_peakset([1552.0, 1600.0, 1648.0]), larmor_hint=1600.0)
    assert result.structure is MollowStructure.TRIPLET
    assert result.center == pytest.approx(1600.0)
    assert result.rabi_estimate == pytest.approx(48.0)


def test_classify_quintuplet_example():
    freqs = [1600.0 + k * 48.0 for k in range(-2, 3)]
    result = classify_mollow(manual_peakset(freqs), larmor_hint=1600.0)
    assert result.structure is MollowStructure.QUINTUPLET
    assert result.center == pytest.approx(1600.0)
    assert result.rabi_estimate == pytest.approx(48.0)


def test_classify_singlet_example():
    result = classify_mollow(manual_peakset([1600.0]), larmor_hint=1600.0)
    assert result.structure is MollowStructure.SINGLET
    assert result.center == pytest.approx(1600.0)
    assert result.rabi_estimate is None


def test_classify_other_on_bad_counts_and_residuals():
    result = classify_mollow(manual_peakset([1590.0, 1610.0]), larmor_hint=1600.0)
    assert result.structure is MollowStructure.OTHER
    assert result.diagnostics["n_band_peaks"] == 2

    # three peaks that do not fit an arithmetic template within df/2
    result = classify_mollow(manual_peakset([1550.0, 1600.0, 1660.0], df=1.0), 1600.0)
    assert result.structure is MollowStructure.OTHER
    assert result.diagnostics["residual_hz"] > 0.5


def test_classify_ignores_out_of_band_peaks():
    freqs = [3.0, 96.0, 1552.0, 1600.0, 1648.0, 3200.0]
    result = classify_mollow(manual_peakset(freqs), larmor_hint=1600.0)
    assert result.structure is MollowStructure.TRIPLET
    assert result.diagnostics["n_total_peaks"] == 6
    assert result.diagnostics["n_band_peaks"] == 3


def test_classification_scale_invariance():
    series = tone_series(
        [(1552.0, 0.3), (1600.0, 1.0), (1648.0, 0.3)], fs=20000.0, n=40000
    )
    spec = fft_spectrum(series, zero_pad_factor=4)
    first = classify_mollow(detect_peaks(spec, prominence_rel=1e-2), 1600.0)
    spec.power *= 1e6
    second = classify_mollow(detect_peaks(spec, prominence_rel=1e-2), 1600.0)
    assert first.structure is second.structure is MollowStructure.TRIPLET
    assert first.center == pytest.approx(second.center)
    assert first.rabi_estimate == pytest.approx(second.rabi_estimate)


def test_template_center_is_mean_of_outer_pair():
    f_l, f_w = 1300.0, 48.0
    tones = [(f_l + k * f_w, a) for k, a in zip(range(-2, 3), [0.2, 0.5, 1.0, 0.5, 0.2])]
    series = tone_series(tones, fs=16000.0, n=64000, noise_rms=1e-4)
    spec = fft_spectrum(series, zero_pad_factor=4)
    peaks = detect_peaks(spec, prominence_rel=1e-2)
    result = classify_mollow(peaks, f_l)
    assert result.structure is MollowStructure.QUINTUPLET
    freqs = peaks.frequencies()
    assert abs(result.center - 0.5 * (freqs[0] + freqs[-1])) < 0.1 * spec.df


# ----------------------------------------------------------- estimation


def test_infer_bm_examples():
    assert infer_bm(48.0, 3.2e-2) == pytest.approx(3000.0)
    assert infer_bm(0.016, 3.2e-2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        infer_bm(0.0, 3.2e-2)
    with pytest.raises(ValueError):
        infer_bm(48.0, -1.0)


def test_fit_rabi_scaling_exact_line():
    gamma = 3.2e-2
    points = [(bm, 0.5 * gamma * bm) for bm in (1000.0, 2000.0, 3000.0, 4500.0, 6000.0)]
    fit = fit_rabi_scaling(points)
    assert fit.slope == pytest.approx(1.6e-2, rel=1e-12)
    assert fit.intercept == pytest.approx(0.0, abs=1e-10)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_rabi_scaling_accepts_dicts():
    points = [{"bm": b, "rabi": 0.016 * b + 0.1} for b in (500.0, 1500.0, 2500.0)]
    fit = fit_rabi_scaling(points)
    assert fit.slope == pytest.approx(0.016)
    assert fit.intercept == pytest.approx(0.1)


def test_fit_rabi_scaling_errors():
    with pytest.raises(ValueError, match="3 points"):
        fit_rabi_scaling([(1000.0, 16.0), (2000.0, 32.0)])
    with pytest.raises(ValueError, match="degenerate"):
        fit_rabi_scaling([(1000.0, 16.0), (1000.0, 16.1), (1000.0, 15.9)])


def test_tone_amplitude_complex_value():
    fs, n = 2000.0, 4096
    t = np.arange(n) / fs
    a, phi, f = 0.35, 0.9, 123.456
    series = make_series(a * np.cos(2 * np.pi * f * t + phi), fs)
    amp = tone_amplitude(series, f)
    assert abs(amp - a * np.exp(1j * phi)) < 1e-3 * a


# ------------------------------------------------------------------- I/O


def test_spectrum_csv_and_peakset_json(tmp_path):
    series = tone_series([(50.0, 1.0)], fs=1000.0, n=1000)
    spec = fft_spectrum(series, zero_pad_factor=2)
    csv_path = tmp_path / "spec.csv"
    spec.to_csv(csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("# window=Hann nfft=2000")
    assert lines[1] == "freq_hz,power"
    data = np.loadtxt(csv_path, delimiter=",", skiprows=2)
    np.testing.assert_allclose(data[:, 0], spec.freqs)

    peaks = detect_peaks(spec, prominence_rel=1e-3)
    cls = classify_mollow(peaks, 50.0)
    json_path = tmp_path / "peaks.json"
    peaks.to_json(json_path, classification=cls)
    doc = json.loads(json_path.read_text())
    assert doc["classification"]["structure"] == "Singlet"
    assert doc["peaks"][0]["freq_hz"] == pytest.approx(50.0, abs=0.1)
    assert set(doc["peaks"][0]) == {"freq_hz", "amplitude", "prominence"}
