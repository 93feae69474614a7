"""Windowed FFT spectra, peak detection, and Mollow-structure analysis.

Conventions:

* Spectra are one-sided power spectral densities (signal^2/Hz) of the
  mean-removed, windowed series: P_k = 2 |X_k|^2 / (fs * sum(w^2)), with
  the factor 2 dropped at DC and Nyquist.  With the Rect window this makes
  integral(P df) equal the series AC power (Parseval).
* Peak frequencies are refined by three-point parabolic interpolation on
  log power; tone amplitudes are recovered via the window's equivalent
  noise bandwidth, A = sqrt(2 * P_peak * enbw), which normalizes window
  gain so amplitudes are comparable across windows.
* ``classify_mollow`` matches the detected peaks inside the Larmor band
  (|f - hint| < hint/2) to the template {center + k*rabi}, k = -K..K, by
  least squares over (center, rabi); the structure is decided by the peak
  count, and accepted only when the rms residual stays below half a bin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import find_peaks
from scipy.stats import linregress

from .probe import TimeSeries

__all__ = [
    "WindowKind",
    "Spectrum",
    "Peak",
    "PeakSet",
    "MollowStructure",
    "MollowClassification",
    "fft_spectrum",
    "detect_peaks",
    "classify_mollow",
    "infer_bm",
    "fit_rabi_scaling",
    "RabiScalingFit",
    "tone_amplitude",
]

MIN_SAMPLES = 256
ALLOWED_ZERO_PAD = (1, 2, 4, 8)


class WindowKind(str, Enum):
    HANN = "Hann"
    RECT = "Rect"


def _window_values(kind: WindowKind, n: int) -> np.ndarray:
    if kind is WindowKind.HANN:
        return np.hanning(n)
    return np.ones(n)


@dataclass
class Spectrum:
    """One-sided power spectral density with its window bookkeeping."""

    freqs: np.ndarray  # Hz, uniform 0..Nyquist
    power: np.ndarray  # signal^2/Hz
    window: WindowKind
    nfft: int
    df: float  # Hz per bin
    enbw: float  # equivalent noise bandwidth of the window (Hz)

    def band(self, lo: float, hi: float) -> "Spectrum":
        """Slice to the bins with lo <= freq <= hi.

        Peak detection thresholds scale with the largest feature in view, so
        analyses that target one carrier band should cut away out-of-band
        content (DC quadrupole beats, harmonics) before searching for peaks.
        """
        if not hi > lo:
            raise ValueError("band requires hi > lo")
        mask = (self.freqs >= lo) & (self.freqs <= hi)
        if not mask.any():
            raise ValueError(f"band [{lo}, {hi}] Hz contains no spectrum bins")
        return Spectrum(
            freqs=self.freqs[mask],
            power=self.power[mask],
            window=self.window,
            nfft=self.nfft,
            df=self.df,
            enbw=self.enbw,
        )

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(
                f"# window={self.window.value} nfft={self.nfft} df_hz={self.df!r} "
                f"enbw_hz={self.enbw!r}\n"
            )
            fh.write("freq_hz,power\n")
            for f, p in zip(self.freqs, self.power):
                fh.write(f"{float(f)!r},{float(p)!r}\n")


@dataclass(frozen=True)
class Peak:
    freq: float  # Hz, interpolated
    amplitude: float  # window-gain-normalized tone amplitude
    prominence: float  # PSD prominence from the raw grid


@dataclass
class PeakSet:
    peaks: list[Peak]  # sorted by frequency
    noise_floor: float  # median PSD
    df: float  # bin width of the source spectrum (Hz)

    def __len__(self) -> int:
        return len(self.peaks)

    def frequencies(self) -> np.ndarray:
        return np.array([p.freq for p in self.peaks])

    def in_band(self, center: float, half_width: float) -> "PeakSet":
        kept = [p for p in self.peaks if abs(p.freq - center) < half_width]
        return PeakSet(kept, self.noise_floor, self.df)

    def to_json(self, path, classification: "MollowClassification | None" = None) -> None:
        doc = {
            "noise_floor": self.noise_floor,
            "df_hz": self.df,
            "peaks": [
                {"freq_hz": p.freq, "amplitude": p.amplitude, "prominence": p.prominence}
                for p in self.peaks
            ],
        }
        if classification is not None:
            doc["classification"] = classification.as_dict()
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


class MollowStructure(str, Enum):
    SINGLET = "Singlet"
    TRIPLET = "Triplet"
    QUINTUPLET = "Quintuplet"
    OTHER = "Other"


@dataclass
class MollowClassification:
    structure: MollowStructure
    center: float | None = None  # Hz
    rabi_estimate: float | None = None  # Hz; absent for singlets
    residual: float | None = None  # rms template misfit (Hz)
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "structure": self.structure.value,
            "center_hz": self.center,
            "rabi_hz": self.rabi_estimate,
            "residual_hz": self.residual,
            "diagnostics": self.diagnostics,
        }


def fft_spectrum(series: TimeSeries, window=WindowKind.HANN, zero_pad_factor: int = 4) -> Spectrum:
    """One-sided PSD of the mean-removed, windowed series.

    Requires >= 256 samples and zero_pad_factor in {1, 2, 4, 8}; the padded
    length sets the bin width df = 1/(nfft*dt).
    """
    window = WindowKind(window)
    if zero_pad_factor not in ALLOWED_ZERO_PAD:
        raise ValueError(f"zero_pad_factor must be one of {ALLOWED_ZERO_PAD}, got {zero_pad_factor}")
    n = len(series)
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if len(series.times) >= 2:
        gaps = np.diff(series.times)
        if np.max(np.abs(gaps - series.dt)) > 1e-9 * series.dt:
            raise ValueError("series sampling is not uniform")
    fs = 1.0 / series.dt
    w = _window_values(window, n)
    x = (series.values - np.mean(series.values)) * w
    nfft = zero_pad_factor * n
    spec = np.fft.rfft(x, n=nfft)
    scale = 1.0 / (fs * np.sum(w**2))
    power = 2.0 * scale * np.abs(spec) ** 2
    power[0] *= 0.5
    if nfft % 2 == 0:
        power[-1] *= 0.5
    freqs = np.fft.rfftfreq(nfft, series.dt)
    enbw = fs * np.sum(w**2) / np.sum(w) ** 2
    return Spectrum(freqs, power, window, nfft, fs / nfft, enbw)


def _interpolate_peak(power: np.ndarray, idx: int) -> tuple[float, float]:
    """Sub-bin offset and interpolated PSD value from a log-parabola through
    the peak bin and its neighbors.  Falls back to the raw bin when the
    parabola degenerates (e.g. a zero-power neighbor)."""
    pa, pb, pc = power[idx - 1 : idx + 2]
    if pa <= 0.0 or pc <= 0.0 or pb <= 0.0:
        return 0.0, pb
    la, lb, lc = math.log(pa), math.log(pb), math.log(pc)
    denom = la - 2.0 * lb + lc
    if denom >= 0.0:
        return 0.0, pb
    shift = 0.5 * (la - lc) / denom
    if not -0.5 <= shift <= 0.5:
        return 0.0, pb
    value = lb - 0.25 * (la - lc) * shift
    return shift, math.exp(value)


def detect_peaks(spec: Spectrum, prominence_threshold: float | None = None,
                 prominence_rel: float = 1e-4) -> PeakSet:
    """Local maxima of the PSD above a prominence threshold.

    ``prominence_threshold`` is absolute (PSD units); when omitted it is
    ``prominence_rel`` times the spectrum maximum — peak selection is then
    invariant under amplitude rescaling.  Frequencies are refined by
    parabolic interpolation on log power; amplitudes are window-normalized
    tone amplitudes; the noise floor is the median PSD.
    """
    if len(spec.power) == 0:
        raise ValueError("empty spectrum")
    pmax = float(np.max(spec.power))
    noise_floor = float(np.median(spec.power))
    if pmax <= 0.0:
        return PeakSet([], noise_floor, spec.df)
    if prominence_threshold is None:
        prominence_threshold = prominence_rel * pmax
    idx, props = find_peaks(spec.power, prominence=prominence_threshold)
    peaks = []
    for i, prom in zip(idx, props["prominences"]):
        shift, pval = _interpolate_peak(spec.power, int(i))
        freq = spec.freqs[i] + shift * spec.df
        amplitude = math.sqrt(2.0 * pval * spec.enbw)
        peaks.append(Peak(float(freq), float(amplitude), float(prom)))
    peaks.sort(key=lambda p: p.freq)
    return PeakSet(peaks, noise_floor, spec.df)


_TEMPLATE_ORDERS = {1: MollowStructure.SINGLET, 3: MollowStructure.TRIPLET,
                    5: MollowStructure.QUINTUPLET}


def classify_mollow(peaks: PeakSet, larmor_hint: float) -> MollowClassification:
    """Decide Singlet/Triplet/Quintuplet from the peaks in the Larmor band.

    Peaks with |f - larmor_hint| >= larmor_hint/2 (low-frequency envelope
    content, double-Larmor products) are excluded before matching.  The
    surviving count selects the template {center + k*rabi}; the (center,
    rabi) least-squares fit must leave an rms residual < df/2, otherwise
    the result is Other with diagnostics.
    """
    if larmor_hint <= 0:
        raise ValueError("larmor_hint must be positive")
    band = peaks.in_band(larmor_hint, larmor_hint / 2)
    freqs = band.frequencies()
    n = len(freqs)
    diagnostics = {
        "band_peak_freqs_hz": [float(f) for f in freqs],
        "n_band_peaks": n,
        "n_total_peaks": len(peaks),
    }
    if n not in _TEMPLATE_ORDERS:
        return MollowClassification(MollowStructure.OTHER, diagnostics=diagnostics)
    if n == 1:
        return MollowClassification(
            MollowStructure.SINGLET, center=float(freqs[0]), residual=0.0,
            diagnostics=diagnostics,
        )
    k = np.arange(n) - n // 2  # -1..1 or -2..2
    center = float(np.mean(freqs))
    rabi = float(np.sum(k * freqs) / np.sum(k * k))
    residual = float(np.sqrt(np.mean((freqs - (center + k * rabi)) ** 2)))
    diagnostics["template_k"] = [int(x) for x in k]
    if residual >= 0.5 * peaks.df or rabi <= 0:
        diagnostics["fit_center_hz"] = center
        diagnostics["fit_rabi_hz"] = rabi
        diagnostics["residual_hz"] = residual
        return MollowClassification(MollowStructure.OTHER, diagnostics=diagnostics)
    return MollowClassification(
        _TEMPLATE_ORDERS[n], center=center, rabi_estimate=rabi,
        residual=residual, diagnostics=diagnostics,
    )


def infer_bm(rabi_estimate: float, gamma: float) -> float:
    """Oscillating-field amplitude from the Rabi splitting: B_M = 2*rabi/gamma."""
    if rabi_estimate <= 0:
        raise ValueError(f"rabi_estimate must be > 0 Hz, got {rabi_estimate}")
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0 Hz/nT, got {gamma}")
    return 2.0 * rabi_estimate / gamma


@dataclass(frozen=True)
class RabiScalingFit:
    slope: float  # Hz/nT
    intercept: float  # Hz
    r2: float


def fit_rabi_scaling(points) -> RabiScalingFit:
    """Ordinary least squares of rabi (Hz) against bm (nT).

    ``points`` is an iterable of (bm, rabi) pairs or {'bm':, 'rabi':} dicts;
    needs >= 3 points with non-degenerate bm values.  The physical slope is
    gamma/2.
    """
    bm, rabi = [], []
    for p in points:
        if isinstance(p, dict):
            bm.append(float(p["bm"]))
            rabi.append(float(p["rabi"]))
        else:
            bm.append(float(p[0]))
            rabi.append(float(p[1]))
    if len(bm) < 3:
        raise ValueError(f"need at least 3 points, got {len(bm)}")
    if np.ptp(bm) == 0:
        raise ValueError("bm values are degenerate (all equal)")
    fit = linregress(bm, rabi)
    return RabiScalingFit(float(fit.slope), float(fit.intercept), float(fit.rvalue) ** 2)


def tone_amplitude(series: TimeSeries, freq: float, window=WindowKind.HANN) -> complex:
    """Windowed Fourier coefficient at a single (possibly off-grid) frequency.

    For s(t) = A cos(2 pi freq t + phi) the return value approaches
    A*exp(i*phi); the complex phase supports signed amplitude comparisons
    between runs (e.g. the theta sweep referenced to its 45-degree point).
    """
    window = WindowKind(window)
    w = _window_values(window, len(series))
    phase = np.exp(-2j * np.pi * freq * series.times)
    return complex(2.0 * np.sum(w * series.values * phase) / np.sum(w))
