"""Scenario configuration and pipeline orchestration.

A Scenario bundles everything one simulated measurement needs: field
environment, pump/relaxation rates, exchange rates, probe selection, and
analysis settings.  ``run_scenario`` drives the full chain

    evolve -> mec_trajectory -> probe_dispatch -> fft_spectrum
           -> detect_peaks -> classify_mollow

and writes plot-ready CSV/JSON artifacts.  ``run_sweep`` repeats that over
one swept parameter (drive amplitude, drive frequency, or probe angle) and
attaches the aggregate fit appropriate to the sweep type.  Everything is
seed-free and deterministic: identical configs produce byte-identical
outputs, which is checked in the tests.

Configs are flat ``key = value`` text with strict unknown-key rejection;
see ``load_config``.  A catalog of ready-made configs ships inside the
package (``mollowsim/configs``): fig3_a1, fig3_a2, fig3_b1, fig3_b2,
fig4_sweep, fig5_amplitude, fig5_detuning, fig6_d0.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import linregress

from . import __version__
from .dynamics import DT_GUARD_FACTOR, GROUND, DensityState, FieldEnvironment, evolve
from .errors import AlignmentUnsupportedError, ConfigError, MollowsimError, PipelineError
from .mec import MecParams, mec_trajectory
from .probe import Polarization, ProbeConfig, ProbeLine, probe_dispatch
from .spectral import (
    MollowClassification,
    WindowKind,
    classify_mollow,
    detect_peaks,
    fft_spectrum,
    fit_rabi_scaling,
    tone_amplitude,
)

# A sideband scenario must hold the drive on long enough to resolve the
# Rabi splitting; 20 Rabi periods keeps the padded-FFT bin width well under
# the line spacing.
MIN_RABI_CYCLES = 20.0

DT_GUARD_RULE = (
    "resolution guard dt <= 1/(50*max(larmor, omega_m)) "
    f"(guard factor {DT_GUARD_FACTOR:g})"
)


class SweepParameter(str, Enum):
    BM_AMPLITUDE = "BmAmplitude"
    DRIVE_FREQUENCY = "DriveFrequency"
    THETA_ANGLE = "ThetaAngle"


# config key touched when a sweep point is applied, also used for artifact
# directory names
_SWEEP_KEY = {
    SweepParameter.BM_AMPLITUDE: "bm_nt",
    SweepParameter.DRIVE_FREQUENCY: "omega_m_hz",
    SweepParameter.THETA_ANGLE: "theta_deg",
}


@dataclass(frozen=True)
class Scenario:
    """One fully specified simulated measurement."""

    name: str
    env: FieldEnvironment
    mec: MecParams
    probe: ProbeConfig
    duration: float  # s
    dt: float  # s
    window: WindowKind = WindowKind.HANN
    zero_pad_factor: int = 4
    prominence_rel: float = 1e-2

    @property
    def meta_manifold(self):
        return self.probe.manifold

    @property
    def larmor(self) -> float:
        return self.env.larmor(GROUND)

    @property
    def rabi(self) -> float:
        return self.env.rabi(GROUND)

    @property
    def larmor_hint(self) -> float:
        """Band center for peak search: the drive frequency when driving,
        the Larmor frequency otherwise."""
        return self.env.omega_m if self.env.omega_m > 0 else self.larmor

    def validate(self) -> None:
        if self.duration <= 0:
            raise ConfigError("duration_s must be positive", field="duration_s")
        if self.dt <= 0:
            raise ConfigError("dt_s must be positive", field="dt_s")
        fmax = max(self.larmor, self.env.omega_m)
        if fmax > 0 and self.dt > 1.0 / (DT_GUARD_FACTOR * fmax):
            raise ConfigError(
                f"dt_s={self.dt!r} violates the {DT_GUARD_RULE}; "
                f"need dt <= {1.0 / (DT_GUARD_FACTOR * fmax):.3e} s",
                field="dt_s",
            )
        if self.env.bm > 0 and self.duration * self.rabi < MIN_RABI_CYCLES:
            raise ConfigError(
                f"sideband scenario needs duration*rabi >= {MIN_RABI_CYCLES:g} "
                f"Rabi cycles, got {self.duration * self.rabi:.2f}",
                field="duration_s",
            )
        if self.zero_pad_factor not in (1, 2, 4, 8):
            raise ConfigError("zero_pad_factor must be one of 1, 2, 4, 8",
                              field="zero_pad_factor")
        if not 0 < self.prominence_rel < 1:
            raise ConfigError("prominence_rel must be in (0, 1)",
                              field="prominence_rel")

    def with_value(self, parameter: SweepParameter, value: float) -> "Scenario":
        """The scenario with one swept field replaced."""
        if parameter is SweepParameter.BM_AMPLITUDE:
            env = dataclasses.replace(self.env, bm=value)
            return dataclasses.replace(self, env=env)
        if parameter is SweepParameter.DRIVE_FREQUENCY:
            env = dataclasses.replace(self.env, omega_m=value)
            return dataclasses.replace(self, env=env)
        probe = dataclasses.replace(self.probe, theta_deg=value)
        return dataclasses.replace(self, probe=probe)


@dataclass(frozen=True)
class SweepSpec:
    """A base scenario plus an ordered list of values for one parameter."""

    name: str
    parameter: SweepParameter
    values: tuple
    base: Scenario

    def validate(self) -> None:
        if len(self.values) == 0:
            raise ConfigError("sweep_values must be nonempty", field="sweep_values")
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ConfigError("sweep_values must be finite", field="sweep_values")
        diffs = np.diff(vals)
        if len(vals) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ConfigError("sweep_values must be strictly monotone",
                              field="sweep_values")
        self.base.validate()
        # every point must itself be a valid scenario
        for v in self.values:
            self.base.with_value(self.parameter, float(v)).validate()


# --------------------------------------------------------------------------
# config parsing


_SCENARIO_DEFAULTS = {
    "theta_deg": 45.0,
    "gamma1": 0.0,
    "gamma2": 0.0,
    "pump_rate": 0.0,
    "gamma_e2": 0.0,
    "meta_gamma1": 0.0,
    "meta_gamma2": 0.0,
    "window": "Hann",
    "zero_pad_factor": 4,
    "prominence_rel": 1e-2,
}

_REQUIRED_KEYS = (
    "kind", "b0_nt", "bm_nt", "omega_m_hz", "gamma_e1",
    "probe_line", "polarization", "duration_s", "dt_s",
)

_FLOAT_KEYS = (
    "b0_nt", "bm_nt", "omega_m_hz", "pump_rate", "gamma1", "gamma2",
    "gamma_e1", "gamma_e2", "meta_gamma1", "meta_gamma2", "theta_deg",
    "duration_s", "dt_s", "prominence_rel",
)

_KNOWN_KEYS = set(_REQUIRED_KEYS) | set(_SCENARIO_DEFAULTS) | set(_FLOAT_KEYS) | {
    "sweep_parameter", "sweep_values",
}


def _parse_float(key: str, raw: str, line: int) -> float:
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {raw!r}", field=key, line=line) from None
    if not math.isfinite(val):
        raise ConfigError(f"{key}: must be finite", field=key, line=line)
    return val


def _parse_enum(enum_cls, key: str, raw: str, line: int):
    try:
        return enum_cls(raw)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{key}: expected one of {allowed}, got {raw!r}",
                          field=key, line=line) from None


def parse_config_text(text: str, name: str) -> Scenario | SweepSpec:
    """Parse and validate flat ``key = value`` config text.

    Unknown keys are rejected with the key path; every value is typed; the
    resulting object has passed its own validation (dt guard, duration
    guard, monotone sweep values, ...).
    """
    entries: dict[str, tuple[str, int]] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        stripped = rawline.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", line=lineno)
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", field=key, line=lineno)
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", field=key, line=lineno)
        if not value:
            raise ConfigError(f"{key}: empty value", field=key, line=lineno)
        entries[key] = (value, lineno)

    for key in _REQUIRED_KEYS:
        if key not in entries:
            raise ConfigError(f"missing required key {key!r}", field=key)

    def take(key, default=None):
        if key in entries:
            return entries.pop(key)
        return (default, 0) if default is not None else None

    kind_raw, kind_line = entries.pop("kind")
    if kind_raw not in ("scenario", "sweep"):
        raise ConfigError(f"kind: expected 'scenario' or 'sweep', got {kind_raw!r}",
                          field="kind", line=kind_line)

    values: dict[str, float] = {}
    for key in _FLOAT_KEYS:
        raw = entries.pop(key, None)
        if raw is not None:
            values[key] = _parse_float(key, raw[0], raw[1])
        elif key in _SCENARIO_DEFAULTS:
            values[key] = _SCENARIO_DEFAULTS[key]

    line_raw = entries.pop("probe_line")
    probe_line = _parse_enum(ProbeLine, "probe_line", line_raw[0], line_raw[1])
    pol_raw = entries.pop("polarization")
    polarization = _parse_enum(Polarization, "polarization", pol_raw[0], pol_raw[1])
    win_raw = entries.pop("window", (_SCENARIO_DEFAULTS["window"], 0))
    window = _parse_enum(WindowKind, "window", win_raw[0], win_raw[1])
    pad_raw = entries.pop("zero_pad_factor", None)
    if pad_raw is not None:
        try:
            zero_pad = int(pad_raw[0])
        except ValueError:
            raise ConfigError(f"zero_pad_factor: not an integer: {pad_raw[0]!r}",
                              field="zero_pad_factor", line=pad_raw[1]) from None
    else:
        zero_pad = _SCENARIO_DEFAULTS["zero_pad_factor"]

    def build_field(key, ctor, **kwargs):
        # funnel dataclass __post_init__ ValueErrors into ConfigError with
        # the offending field path
        try:
            return ctor(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", field=key) from exc

    env = build_field(
        "b0_nt", FieldEnvironment,
        b0=values["b0_nt"], bm=values["bm_nt"], omega_m=values["omega_m_hz"],
        pump_rate=values["pump_rate"], gamma1=values["gamma1"], gamma2=values["gamma2"],
    )
    mec = build_field(
        "gamma_e1", MecParams,
        gamma_e1=values["gamma_e1"], gamma_e2=values["gamma_e2"],
        meta_gamma1=values["meta_gamma1"], meta_gamma2=values["meta_gamma2"],
    )
    probe = build_field(
        "probe_line", ProbeConfig,
        line=probe_line, polarization=polarization, theta_deg=values["theta_deg"],
    )

    scenario = Scenario(
        name=name, env=env, mec=mec, probe=probe,
        duration=values["duration_s"], dt=values["dt_s"],
        window=window, zero_pad_factor=zero_pad,
        prominence_rel=values["prominence_rel"],
    )

    sweep_param_raw = entries.pop("sweep_parameter", None)
    sweep_values_raw = entries.pop("sweep_values", None)
    assert not entries, f"unconsumed keys: {sorted(entries)}"

    if kind_raw == "scenario":
        if sweep_param_raw or sweep_values_raw:
            key = "sweep_parameter" if sweep_param_raw else "sweep_values"
            raise ConfigError("sweep keys are not allowed when kind = scenario",
                              field=key)
        scenario.validate()
        return scenario

    if sweep_param_raw is None:
        raise ConfigError("missing required key 'sweep_parameter'",
                          field="sweep_parameter")
    if sweep_values_raw is None:
        raise ConfigError("missing required key 'sweep_values'", field="sweep_values")
    parameter = _parse_enum(SweepParameter, "sweep_parameter",
                            sweep_param_raw[0], sweep_param_raw[1])
    vals = []
    for part in sweep_values_raw[0].split(","):
        part = part.strip()
        if part:
            vals.append(_parse_float("sweep_values", part, sweep_values_raw[1]))
    sweep = SweepSpec(name=name, parameter=parameter, values=tuple(vals), base=scenario)
    sweep.validate()
    return sweep


def shipped_config_path(name: str) -> Path | None:
    """Path of a catalog config by bare name ('fig3_b1'), or None."""
    stem = name[:-4] if name.endswith(".cfg") else name
    candidate = resources.files("mollowsim").joinpath("configs", f"{stem}.cfg")
    with resources.as_file(candidate) as path:
        return path if path.exists() else None


def load_config(path) -> Scenario | SweepSpec:
    """Load a config from a file path or a shipped catalog name."""
    p = Path(path)
    if not p.exists():
        shipped = shipped_config_path(str(path))
        if shipped is None:
            raise ConfigError(f"config not found: {path} "
                              "(not a file, not a shipped scenario name)")
        p = shipped
    return parse_config_text(p.read_text(), name=p.stem)


def canonical_config(obj: Scenario | SweepSpec) -> str:
    """Canonical key=value rendering used for the provenance hash."""
    scenario = obj.base if isinstance(obj, SweepSpec) else obj
    pairs = [
        ("kind", "sweep" if isinstance(obj, SweepSpec) else "scenario"),
        ("b0_nt", repr(scenario.env.b0)),
        ("bm_nt", repr(scenario.env.bm)),
        ("omega_m_hz", repr(scenario.env.omega_m)),
        ("pump_rate", repr(scenario.env.pump_rate)),
        ("gamma1", repr(scenario.env.gamma1)),
        ("gamma2", repr(scenario.env.gamma2)),
        ("gamma_e1", repr(scenario.mec.gamma_e1)),
        ("gamma_e2", repr(scenario.mec.gamma_e2)),
        ("meta_gamma1", repr(scenario.mec.meta_gamma1)),
        ("meta_gamma2", repr(scenario.mec.meta_gamma2)),
        ("probe_line", scenario.probe.line.value),
        ("polarization", scenario.probe.polarization.value),
        ("theta_deg", repr(scenario.probe.theta_deg)),
        ("duration_s", repr(scenario.duration)),
        ("dt_s", repr(scenario.dt)),
        ("window", scenario.window.value),
        ("zero_pad_factor", repr(scenario.zero_pad_factor)),
        ("prominence_rel", repr(scenario.prominence_rel)),
    ]
    if isinstance(obj, SweepSpec):
        pairs.append(("sweep_parameter", obj.parameter.value))
        pairs.append(("sweep_values", ", ".join(repr(float(v)) for v in obj.values)))
    return "".join(f"{k} = {v}\n" for k, v in pairs)


def _provenance(obj: Scenario | SweepSpec) -> dict:
    digest = hashlib.sha256(canonical_config(obj).encode()).hexdigest()
    return {"config_sha256": digest, "package": "mollowsim", "version": __version__}


# --------------------------------------------------------------------------
# pipeline


@dataclass
class RunReport:
    """Everything a run produced: outcome, artifact paths, aggregate fits."""

    kind: str  # "scenario" | "sweep"
    name: str
    outcome: str  # "Classified" | "NoAlignmentObservable"
    provenance: dict
    classification: MollowClassification | None = None
    files: dict = field(default_factory=dict)
    points: list = field(default_factory=list)
    aggregate: dict | None = None

    def as_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "name": self.name,
            "outcome": self.outcome,
            "provenance": self.provenance,
            "classification": self.classification.as_dict() if self.classification else None,
            "files": self.files,
        }
        if self.kind == "sweep":
            doc["points"] = self.points
            doc["aggregate"] = self.aggregate
        return doc

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _stage(name: str):
    """Decorator-free stage wrapper: re-raise module errors with the stage."""
    class _ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, MollowsimError):
                raise PipelineError(name, exc) from exc
            return False
    return _ctx()


def _analyze(scenario: Scenario, series):
    spec = fft_spectrum(series, window=scenario.window,
                        zero_pad_factor=scenario.zero_pad_factor)
    hint = scenario.larmor_hint
    band = spec.band(hint / 2, 1.5 * hint)
    peaks = detect_peaks(band, prominence_rel=scenario.prominence_rel)
    classification = classify_mollow(peaks, hint)
    return band, peaks, classification


def run_scenario(scenario: Scenario, out_dir=None) -> RunReport:
    """Run the full pipeline for one scenario.

    Writes ``spectrum.csv`` (analysis band), ``peaks.json``, and
    ``report.json`` into ``out_dir`` when given.  A linear probe on an
    f=1/2 line is reported as outcome ``NoAlignmentObservable`` rather
    than an error: that manifold has no rank-2 moment to read out.
    """
    scenario.validate()
    report = RunReport(kind="scenario", name=scenario.name, outcome="Classified",
                       provenance=_provenance(scenario))

    with _stage("dynamics"):
        ground = evolve(DensityState.stretched(GROUND), scenario.env,
                        duration=scenario.duration, dt=scenario.dt)
    with _stage("mec"):
        meta = mec_trajectory(ground, scenario.meta_manifold, scenario.mec)
    try:
        series = probe_dispatch(scenario.probe, meta)
    except AlignmentUnsupportedError as exc:
        report.outcome = "NoAlignmentObservable"
        report.files["note"] = str(exc)
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            report.to_json(out / "report.json")
        return report
    except MollowsimError as exc:
        raise PipelineError("probe", exc) from exc
    with _stage("spectral"):
        band, peaks, classification = _analyze(scenario, series)

    report.classification = classification
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        band.to_csv(out / "spectrum.csv")
        peaks.to_json(out / "peaks.json", classification=classification)
        report.files = {"spectrum": "spectrum.csv", "peaks": "peaks.json"}
        report.to_json(out / "report.json")
    return report


def second_sideband_amplitude(series, omega_m: float, rabi: float, larmor: float) -> float:
    """Mean tone amplitude at the second-order sidebands omega_m ± 2·Ω_eff.

    Ω_eff = hypot(rabi, detuning) is the generalized Rabi frequency.  A
    sideband whose frequency would be non-positive does not exist in the
    one-sided spectrum and is skipped.
    """
    detuning = omega_m - larmor
    omega_eff = math.hypot(rabi, detuning)
    freqs = [f for f in (omega_m - 2 * omega_eff, omega_m + 2 * omega_eff) if f > 0]
    if not freqs:
        return 0.0
    return float(np.mean([abs(tone_amplitude(series, f)) for f in freqs]))


def _run_point(args):
    """Worker for one sweep point; must stay picklable for process pools."""
    spec, value, out_root = args
    scenario = spec.base.with_value(spec.parameter, value)
    point_dir = None
    if out_root is not None:
        point_dir = Path(out_root) / f"point_{_SWEEP_KEY[spec.parameter]}_{value!r}"
    record = {"value": value, "outcome": None, "classification": None,
              "files": {}, "error": None}
    extras = {}
    try:
        scenario.validate()
        with _stage("dynamics"):
            ground = evolve(DensityState.stretched(GROUND), scenario.env,
                            duration=scenario.duration, dt=scenario.dt)
        with _stage("mec"):
            meta = mec_trajectory(ground, scenario.meta_manifold, scenario.mec)
        try:
            series = probe_dispatch(scenario.probe, meta)
        except AlignmentUnsupportedError as exc:
            record["outcome"] = "NoAlignmentObservable"
            record["error"] = None
            record["files"]["note"] = str(exc)
            return record, extras
        except MollowsimError as exc:
            raise PipelineError("probe", exc) from exc
        with _stage("spectral"):
            band, peaks, classification = _analyze(scenario, series)
        record["outcome"] = "Classified"
        record["classification"] = classification.as_dict()
        if spec.parameter is SweepParameter.THETA_ANGLE:
            amp = tone_amplitude(series, spec.base.larmor_hint)
            extras["tone"] = (float(amp.real), float(amp.imag))
        elif spec.parameter is SweepParameter.DRIVE_FREQUENCY:
            extras["amp2"] = second_sideband_amplitude(
                series, scenario.env.omega_m, spec.base.rabi, spec.base.larmor)
            extras["detuning_hz"] = scenario.env.omega_m - spec.base.larmor
        if point_dir is not None:
            point_dir.mkdir(parents=True, exist_ok=True)
            band.to_csv(point_dir / "spectrum.csv")
            peaks.to_json(point_dir / "peaks.json", classification=classification)
            record["files"] = {"spectrum": f"{point_dir.name}/spectrum.csv",
                               "peaks": f"{point_dir.name}/peaks.json"}
    except (MollowsimError, PipelineError) as exc:
        record["outcome"] = "Failed"
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record, extras


def _worker_count() -> int:
    raw = os.environ.get("MOLLOWSIM_WORKERS", "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(
                f"MOLLOWSIM_WORKERS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError("MOLLOWSIM_WORKERS must be >= 1")
        return n
    return os.cpu_count() or 1


def _sin2theta_fit(values, tones) -> dict:
    """Least squares of signed center-tone amplitude against sin(2θ).

    Tone amplitudes are complex with a common (deterministic) phase; the
    most-intense point serves as the phase reference so each point gets a
    signed real amplitude.  The fitted slope is the θ=45° amplitude.
    """
    amps = np.array([complex(re, im) for re, im in tones])
    ref = amps[int(np.argmax(np.abs(amps)))]
    if abs(ref) == 0.0:
        return {"skipped": "all center-tone amplitudes are zero"}
    signed = (amps * np.conj(ref)).real / abs(ref)
    target = np.sin(2.0 * np.radians(np.asarray(values, dtype=float)))
    fit = linregress(target, signed)
    slope, intercept = float(fit.slope), float(fit.intercept)
    if slope < 0:
        # the reference point may sit in a negative lobe of sin(2θ); fix the
        # overall sign so the fitted θ=45° amplitude is positive
        signed, slope, intercept = -signed, -slope, -intercept
    return {
        "kind": "sin2theta",
        "amplitude_45deg": slope,
        "intercept": intercept,
        "r2": float(fit.rvalue**2),
        "signed_amplitudes": [float(v) for v in signed],
    }


def run_sweep(spec: SweepSpec, out_dir=None) -> RunReport:
    """Run every sweep point (possibly in parallel) and aggregate.

    Points are independent; per-point failures are recorded and the sweep
    continues.  The aggregate fit is skipped when more than 20% of points
    failed.  Parallelism: MOLLOWSIM_WORKERS (default: available cores,
    1 = serial in-process).
    """
    spec.validate()
    out_root = None
    if out_dir is not None:
        out_root = Path(out_dir)
        out_root.mkdir(parents=True, exist_ok=True)

    jobs = [(spec, float(v), out_root) for v in spec.values]
    workers = min(_worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(job) for job in jobs]

    records = [rec for rec, _ in results]
    extras = [ext for _, ext in results]
    n_failed = sum(1 for rec in records if rec["outcome"] == "Failed")

    report = RunReport(kind="sweep", name=spec.name, outcome="Classified",
                       provenance=_provenance(spec), points=records)
    if n_failed > 0.2 * len(records):
        report.aggregate = {
            "skipped": f"{n_failed}/{len(records)} points failed (> 20%)"}
    elif spec.parameter is SweepParameter.BM_AMPLITUDE:
        pairs = [
            (rec["value"], rec["classification"]["rabi_hz"])
            for rec in records
            if rec["classification"] is not None
            and rec["classification"]["structure"] in ("Triplet", "Quintuplet")
            and rec["classification"]["rabi_hz"] is not None
        ]
        if len(pairs) < 3:
            report.aggregate = {
                "skipped": f"only {len(pairs)} classified points with a Rabi estimate"}
        else:
            fit = fit_rabi_scaling(pairs)
            report.aggregate = {
                "kind": "rabi_scaling",
                "slope_hz_per_nt": fit.slope,
                "intercept_hz": fit.intercept,
                "r2": fit.r2,
                "n_points": len(pairs),
            }
    elif spec.parameter is SweepParameter.THETA_ANGLE:
        usable = [(rec["value"], ext["tone"])
                  for rec, ext in zip(records, extras) if "tone" in ext]
        if len(usable) < 3:
            report.aggregate = {"skipped": "fewer than 3 usable theta points"}
        else:
            report.aggregate = _sin2theta_fit([v for v, _ in usable],
                                              [t for _, t in usable])
    else:  # DriveFrequency
        table = [
            {"omega_m_hz": rec["value"],
             "detuning_hz": ext.get("detuning_hz"),
             "second_sideband_amplitude": ext.get("amp2")}
            for rec, ext in zip(records, extras) if "amp2" in ext
        ]
        report.aggregate = {"kind": "second_sideband_table", "rows": table}

    if out_root is not None:
        report.to_json(out_root / "report.json")
    return report
