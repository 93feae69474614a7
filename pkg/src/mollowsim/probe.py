"""Probe signals: circular (orientation) and linear (alignment) readout.

Geometry: probe light propagates along x; the static field is along z and
the drive along y.  A circularly polarized probe reads the transverse
rank-1 component (orientation), s(t) = Re m1_{+1}(t).  A linearly polarized
probe with polarization angle theta in the y-z plane reads the alignment

    s(t; theta) = Tr( rho(t) * [3 (J.eps)^2 - J^2] ),
    eps = cos(theta) y + sin(theta) z,

which depends on rank-2 multipoles only (the operator is traceless and
purely rank 2).  Its cross term 3 sin(theta)cos(theta){Jy,Jz} carries the
whole q = +-1 content, so the Larmor-band amplitude factorizes exactly as
sin(2*theta) — the angular law tested against the theta sweep.

Signal units are arbitrary but consistent within a run; no optical matrix
elements are modeled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import AlignmentUnsupportedError
from .mec import MetaTrajectory
from .spin import (
    MANIFOLD_CATALOG,
    ManifoldLabel,
    SpinManifold,
    build_spin_operators,
    tensor_basis,
)

__all__ = [
    "ProbeLine",
    "Polarization",
    "ProbeConfig",
    "TimeSeries",
    "LINE_TO_MANIFOLD",
    "orientation_signal",
    "alignment_signal",
    "alignment_weights",
    "probe_dispatch",
]


class ProbeLine(str, Enum):
    C8 = "C8"
    C9 = "C9"
    D0 = "D0"


class Polarization(str, Enum):
    CIRCULAR_X = "CircularX"
    LINEAR_THETA = "LinearTheta"


LINE_TO_MANIFOLD = {
    ProbeLine.C8: MANIFOLD_CATALOG[ManifoldLabel.META_F12],
    ProbeLine.C9: MANIFOLD_CATALOG[ManifoldLabel.META_F32],
    ProbeLine.D0: MANIFOLD_CATALOG[ManifoldLabel.META_4HE],
}


@dataclass(frozen=True)
class ProbeConfig:
    """Probe line, polarization, and (for linear probes) the angle theta
    between the polarization axis and y, in degrees.

    theta is taken modulo the physical 180-degree period; 0 and 180 are the
    same polarization.  It is ignored for circular probes.
    """

    line: ProbeLine
    polarization: Polarization
    theta_deg: float = 45.0

    def __post_init__(self):
        object.__setattr__(self, "line", ProbeLine(self.line))
        object.__setattr__(self, "polarization", Polarization(self.polarization))
        if not 0.0 <= self.theta_deg <= 180.0:
            raise ValueError(f"theta_deg must lie in [0, 180], got {self.theta_deg}")

    @property
    def manifold(self) -> SpinManifold:
        return LINE_TO_MANIFOLD[self.line]


@dataclass
class TimeSeries:
    """Uniformly sampled real-valued probe signal."""

    times: np.ndarray
    values: np.ndarray
    dt: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series contains non-finite values")
        if len(self.times) >= 2:
            gaps = np.diff(self.times)
            if np.max(np.abs(gaps - self.dt)) > 1e-9 * max(self.dt, 1e-30):
                raise ValueError("series sampling is not uniform")

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self, path) -> None:
        meta = dict(self.metadata)
        meta.setdefault("dt_s", repr(float(self.dt)))
        pairs = " ".join(f"{k}={meta[k]}" for k in sorted(meta))
        with open(path, "w") as fh:
            fh.write(f"# {pairs}\n")
            fh.write("time_s,signal\n")
            for t, v in zip(self.times, self.values):
                fh.write(f"{float(t)!r},{float(v)!r}\n")


def orientation_signal(meta: MetaTrajectory) -> TimeSeries:
    """Circular-probe signal: the transverse rank-1 component Re m1_{+1}(t).

    Blind to alignment — any rank-2 content leaves it unchanged.
    """
    values = meta.m1[:, 2].real.copy()
    return TimeSeries(
        meta.times.copy(),
        values,
        meta.dt,
        metadata={"polarization": Polarization.CIRCULAR_X.value},
    )


def alignment_weights(manifold: SpinManifold, theta_deg: float) -> np.ndarray:
    """Expansion weights w_q = Tr(T^2_q O(theta)) of the alignment operator
    O = 3 (J.eps)^2 - J^2 on the rank-2 tensor basis, q = -2..+2."""
    if manifold.max_rank < 2:
        raise AlignmentUnsupportedError(
            f"no alignment observable on {manifold.label.value} (f={manifold.f}): "
            "rank-2 multipoles require f >= 1"
        )
    ops = build_spin_operators(manifold)
    theta = math.radians(theta_deg)
    j_eps = math.cos(theta) * ops["jy"] + math.sin(theta) * ops["jz"]
    f = manifold.f
    observable = 3.0 * (j_eps @ j_eps) - f * (f + 1) * np.eye(manifold.dim)
    basis = tensor_basis(manifold)
    return np.array([np.trace(basis[(2, q)] @ observable) for q in range(-2, 3)])


def alignment_signal(meta: MetaTrajectory, theta_deg: float) -> TimeSeries:
    """Linear-probe signal s(t; theta) = sum_q m2_q(t) w_q(theta).

    Uses rank-2 multipoles only; raises AlignmentUnsupportedError on f=1/2
    manifolds, where the observable does not exist.
    """
    if not 0.0 <= theta_deg <= 180.0:
        raise ValueError(f"theta_deg must lie in [0, 180], got {theta_deg}")
    weights = alignment_weights(meta.manifold, theta_deg)
    values = (meta.m2 @ weights).real
    return TimeSeries(
        meta.times.copy(),
        values,
        meta.dt,
        metadata={
            "polarization": Polarization.LINEAR_THETA.value,
            "theta_deg": repr(float(theta_deg)),
        },
    )


def probe_dispatch(config: ProbeConfig, meta: MetaTrajectory) -> TimeSeries:
    """Route a meta trajectory to the configured probe signal, with the
    probe identity recorded in the series metadata."""
    if meta.manifold.label is not config.manifold.label:
        raise ValueError(
            f"probe line {config.line.value} addresses {config.manifold.label.value}, "
            f"but the trajectory is on {meta.manifold.label.value}"
        )
    if config.polarization is Polarization.CIRCULAR_X:
        series = orientation_signal(meta)
    else:
        series = alignment_signal(meta, config.theta_deg)
    series.metadata["line"] = config.line.value
    return series
