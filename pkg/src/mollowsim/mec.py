"""Metastability-exchange transfer of ground-state multipoles.

Two phenomenological channels feed the metastable manifold from the driven
ground-state spin:

* a linear rank-1 channel,
      d m1_q / dt = gamma_e1 * (m1_q(ground) - m1_q) - meta_gamma1 * m1_q,
  which copies the ground orientation (and with it the Mollow triplet);

* a bilinear rank-2 channel,
      d m2_q / dt = gamma_e2 * sum_{q1+q2=q} C(1,1,2; q1, q2, q)
                                * m1_{q1}(ground) * m1_{q2}(ground)
                    - meta_gamma2 * m2_q,
  which builds alignment out of products of ground orientation components
  (the quintuplet mechanism).  Manifolds with f = 1/2 cannot carry rank 2;
  the channel is forced to zero there.

The metastable Larmor precession (MHz scale) is deliberately absent: the
observable signal rides at the ground-state Larmor frequency, so metastable
multipoles are treated as slaved envelopes in the ground rotating frame.
Rank-3 components on f = 3/2 are representable but never driven (no cubic
channel).

Stepping uses the same fixed-step RK4 as the ground engine, with the ground
multipoles held constant across each step (zero-order hold): ``mec_step``
receives one ground sample per step by contract, and the hold only rescales
line amplitudes by ~(2*pi*f*dt)^2/24 without moving line positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .dynamics import Trajectory
from .spin import (
    MANIFOLD_CATALOG,
    ManifoldLabel,
    MultipoleSet,
    SpinManifold,
    clebsch_gordan,
)

__all__ = [
    "MecParams",
    "MetaState",
    "MetaTrajectory",
    "mec_step",
    "mec_trajectory",
    "conjugation_audit",
]

META_LABELS = (ManifoldLabel.META_F12, ManifoldLabel.META_F32, ManifoldLabel.META_4HE)
CONJUGATION_TOL = 1e-10

# C(1,1,2; q1, q2, q1+q2), indices 0..2 for q = -1, 0, +1
_CG112 = np.array(
    [[clebsch_gordan(1, q1, 1, q2, 2, q1 + q2) for q2 in (-1, 0, 1)] for q1 in (-1, 0, 1)]
)


@dataclass(frozen=True)
class MecParams:
    """Exchange-transfer rates (all 1/s, all >= 0).

    gamma_e1     linear rank-1 exchange rate
    gamma_e2     bilinear rank-2 source coefficient (applied to dimensionless
                 multipole products); ignored on manifolds with 2f < 2
    meta_gamma1  metastable rank-1 relaxation rate
    meta_gamma2  metastable rank-2 relaxation rate
    """

    gamma_e1: float
    gamma_e2: float = 0.0
    meta_gamma1: float = 0.0
    meta_gamma2: float = 0.0

    def __post_init__(self):
        for name in ("gamma_e1", "gamma_e2", "meta_gamma1", "meta_gamma2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


def _check_meta_manifold(manifold: SpinManifold) -> None:
    if manifold.label not in META_LABELS:
        raise ValueError(
            f"{manifold.label.value} is not a metastable manifold "
            f"(expected one of {[m.value for m in META_LABELS]})"
        )


@dataclass(frozen=True)
class MetaState:
    """Multipoles of a metastable manifold, ranks 1..2f (rank 0 implicit)."""

    manifold: SpinManifold
    multipoles: MultipoleSet

    def __post_init__(self):
        _check_meta_manifold(self.manifold)
        if self.multipoles.f != self.manifold.f:
            raise ValueError(
                f"multipole f={self.multipoles.f} does not match manifold f={self.manifold.f}"
            )
        for (k, _q) in self.multipoles.components:
            if k == 0:
                raise ValueError("rank-0 component is carried implicitly; do not store it")

    @classmethod
    def zero(cls, manifold: SpinManifold) -> "MetaState":
        return cls(manifold, MultipoleSet(manifold.f, {}))

    @property
    def supports_rank2(self) -> bool:
        return self.manifold.max_rank >= 2

    def rank1(self) -> np.ndarray:
        return self.multipoles.rank(1)

    def rank2(self) -> np.ndarray:
        if not self.supports_rank2:
            return np.zeros(5, dtype=complex)
        return self.multipoles.rank(2)


@numba.njit(cache=True)
def _mec_kernel(g1, n_steps, dt, ge1, ge2, gm1, gm2, cg, m1_init, m2_init,
                has_rank2, out1, out2):
    m1 = m1_init.copy()
    m2 = m2_init.copy()
    out1[0] = m1
    out2[0] = m2
    src2 = np.zeros(5, dtype=np.complex128)
    for step in range(n_steps):
        # rank-1 linear channel; ground held constant across the step
        b1 = ge1 + gm1
        for qi in range(3):
            s = ge1 * g1[step, qi]
            y = m1[qi]
            k1 = s - b1 * y
            k2 = s - b1 * (y + 0.5 * dt * k1)
            k3 = s - b1 * (y + 0.5 * dt * k2)
            k4 = s - b1 * (y + dt * k3)
            m1[qi] = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if has_rank2:
            for qi in range(5):
                src2[qi] = 0.0j
            for q1 in range(3):
                for q2 in range(3):
                    src2[q1 + q2] += cg[q1, q2] * g1[step, q1] * g1[step, q2]
            for qi in range(5):
                s = ge2 * src2[qi]
                y = m2[qi]
                k1 = s - gm2 * y
                k2 = s - gm2 * (y + 0.5 * dt * k1)
                k3 = s - gm2 * (y + 0.5 * dt * k2)
                k4 = s - gm2 * (y + dt * k3)
                m2[qi] = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out1[step + 1] = m1
        out2[step + 1] = m2


def _ground_rank1(ground: MultipoleSet) -> np.ndarray:
    if ground.f != 0.5:
        raise ValueError(f"ground multipoles must be the spin-1/2 decomposition, got f={ground.f}")
    return ground.rank(1)


def mec_step(ground: MultipoleSet, meta: MetaState, params: MecParams, dt: float) -> MetaState:
    """Advance the metastable multipoles one step of size dt.

    ``ground`` is the ground-state rank-1 decomposition at the step start and
    is held constant across the step.  Raises ValueError for negative dt or
    a ground/meta manifold mismatch.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    g1 = _ground_rank1(ground)[None, :]
    has_rank2 = meta.supports_rank2
    out1 = np.empty((2, 3), dtype=complex)
    out2 = np.empty((2, 5), dtype=complex)
    _mec_kernel(
        np.ascontiguousarray(g1),
        1,
        float(dt),
        params.gamma_e1,
        params.gamma_e2 if has_rank2 else 0.0,
        params.meta_gamma1,
        params.meta_gamma2,
        _CG112,
        meta.rank1(),
        meta.rank2(),
        has_rank2,
        out1,
        out2,
    )
    comps = {}
    for qi, q in enumerate(range(-1, 2)):
        comps[(1, q)] = complex(out1[1, qi])
    if has_rank2:
        for qi, q in enumerate(range(-2, 3)):
            comps[(2, q)] = complex(out2[1, qi])
    return MetaState(meta.manifold, MultipoleSet(meta.manifold.f, comps))


@dataclass
class MetaTrajectory:
    """Metastable multipole history slaved to a ground trajectory.

    m1: (nt, 3) complex, q = -1..+1;  m2: (nt, 5) complex, q = -2..+2
    (identically zero when the manifold has f = 1/2).
    """

    manifold: SpinManifold
    times: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    dt: float

    def __len__(self) -> int:
        return len(self.times)

    def state_at(self, index: int) -> MetaState:
        comps = {}
        for qi, q in enumerate(range(-1, 2)):
            comps[(1, q)] = complex(self.m1[index, qi])
        if self.manifold.max_rank >= 2:
            for qi, q in enumerate(range(-2, 3)):
                comps[(2, q)] = complex(self.m2[index, qi])
        return MetaState(self.manifold, MultipoleSet(self.manifold.f, comps))

    def to_csv(self, path) -> None:
        names = []
        cols = []
        for qi, q in enumerate(range(-1, 2)):
            tag = f"m1_{'m' if q < 0 else ''}{abs(q)}"
            names += [f"re_{tag}", f"im_{tag}"]
            cols += [self.m1[:, qi].real, self.m1[:, qi].imag]
        if self.manifold.max_rank >= 2:
            for qi, q in enumerate(range(-2, 3)):
                tag = f"m2_{'m' if q < 0 else ''}{abs(q)}"
                names += [f"re_{tag}", f"im_{tag}"]
                cols += [self.m2[:, qi].real, self.m2[:, qi].imag]
        with open(path, "w") as fh:
            fh.write(
                f"# content=meta_multipoles manifold={self.manifold.label.value} dt_s={self.dt!r}\n"
            )
            fh.write("time_s," + ",".join(names) + "\n")
            for row in range(len(self.times)):
                vals = [repr(float(self.times[row]))]
                vals += [repr(float(c[row])) for c in cols]
                fh.write(",".join(vals) + "\n")


def mec_trajectory(
    ground: Trajectory,
    meta_manifold: SpinManifold | ManifoldLabel | str,
    params: MecParams,
    initial: MetaState | None = None,
) -> MetaTrajectory:
    """Integrate the exchange channels along a full ground trajectory.

    The ground rank-1 multipoles are sampled at every stored step; the meta
    state starts from ``initial`` (default: zero) and is stepped with the
    trajectory's dt.
    """
    if not isinstance(meta_manifold, SpinManifold):
        meta_manifold = MANIFOLD_CATALOG[ManifoldLabel(meta_manifold)]
    _check_meta_manifold(meta_manifold)
    if initial is None:
        initial = MetaState.zero(meta_manifold)
    elif initial.manifold is not meta_manifold:
        raise ValueError("initial state manifold does not match meta_manifold")
    g1 = np.ascontiguousarray(ground.multipole_series(1))
    n_steps = len(ground) - 1
    has_rank2 = meta_manifold.max_rank >= 2
    out1 = np.empty((n_steps + 1, 3), dtype=complex)
    out2 = np.empty((n_steps + 1, 5), dtype=complex)
    _mec_kernel(
        g1,
        n_steps,
        float(ground.dt),
        params.gamma_e1,
        params.gamma_e2 if has_rank2 else 0.0,
        params.meta_gamma1,
        params.meta_gamma2,
        _CG112,
        initial.rank1(),
        initial.rank2(),
        has_rank2,
        out1,
        out2,
    )
    if not has_rank2:
        out2[:] = 0.0
    return MetaTrajectory(meta_manifold, ground.times.copy(), out1, out2, ground.dt)


def conjugation_audit(meta: MetaState | MetaTrajectory) -> float:
    """Max |m^k_{-q} - (-1)^q conj(m^k_q)| over all components (and, for a
    trajectory, over all stored steps).  Physical states stay below 1e-10."""
    if isinstance(meta, MetaState):
        return meta.multipoles.conjugation_violation()
    worst = 0.0
    for series, k in ((meta.m1, 1), (meta.m2, 2)):
        nq = 2 * k + 1
        for qi in range(nq):
            q = qi - k
            lhs = series[:, k - q]  # index of -q
            rhs = (-1) ** q * np.conj(series[:, qi])
            worst = max(worst, float(np.max(np.abs(lhs - rhs))) if len(series) else 0.0)
    return worst
