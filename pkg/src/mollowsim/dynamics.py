"""Density-matrix evolution of the driven ground-state spin.

The engine integrates the full time-dependent Hamiltonian

    H(t)/h = gamma*b0*Jz + gamma*bm*cos(2*pi*omega_m*t)*Jy      [Hz]

with a rank-1 optical-pumping source toward the stretched state and rank-
and q-resolved relaxation:

    drho/dt = -2*pi*i [H/h, rho]
              + pump_rate * sum_q (m1_up_q - m1_q) T^1_q
              + sum_q ( -rate_q * m1_q T^1_q ),   rate_0 = gamma1,
                                                  rate_{+-1} = gamma2.

All frequencies are linear (Hz); the 2*pi factors live inside the
integrator only.  Fixed-step classical Runge-Kutta (RK4); the state is
re-hermitized and trace-renormalized whenever per-step drift exceeds
1e-12.  No rotating-wave approximation is made here — the RWA appears
only in ``closed_form_resonant``, which serves as the analytic oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigError, NumericalInvariantError
from .spin import (
    MANIFOLD_CATALOG,
    ManifoldLabel,
    SpinManifold,
    build_spin_operators,
    decompose,
    decompose_trajectory,
    spherical_tensor,
)

__all__ = [
    "FieldEnvironment",
    "DensityState",
    "Trajectory",
    "hamiltonian_at",
    "evolve",
    "closed_form_resonant",
]

GROUND = MANIFOLD_CATALOG[ManifoldLabel.GROUND_3HE]

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-9
STEP_FIX_TOL = 1e-12
DT_GUARD_FACTOR = 50.0


@dataclass(frozen=True)
class FieldEnvironment:
    """Static + oscillating field configuration and the incoherent rates.

    b0        static field along z (nT), > 0
    bm        oscillating field amplitude along y (nT), >= 0
    omega_m   drive frequency (Hz, linear), >= 0
    pump_rate rank-1 source rate toward the stretched state (1/s)
    gamma1    longitudinal (q=0) relaxation rate (1/s)
    gamma2    transverse (q=+-1) relaxation rate (1/s)
    """

    b0: float
    bm: float = 0.0
    omega_m: float = 0.0
    pump_rate: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0

    def __post_init__(self):
        if not self.b0 > 0:
            raise ValueError(f"b0 must be > 0 nT, got {self.b0}")
        if self.bm < 0:
            raise ValueError(f"bm must be >= 0 nT, got {self.bm}")
        if self.omega_m < 0:
            raise ValueError(f"omega_m must be >= 0 Hz, got {self.omega_m}")
        for name in ("pump_rate", "gamma1", "gamma2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    def larmor(self, manifold: SpinManifold = GROUND) -> float:
        """Precession frequency gamma*b0 (Hz)."""
        return manifold.gamma * self.b0

    def rabi(self, manifold: SpinManifold = GROUND) -> float:
        """Drive-induced splitting (1/2)*gamma*bm (Hz)."""
        return 0.5 * manifold.gamma * self.bm

    def detuning(self, manifold: SpinManifold = GROUND) -> float:
        """omega_m - larmor (Hz); zero on resonance."""
        return self.omega_m - self.larmor(manifold)


@dataclass(frozen=True)
class DensityState:
    """Hermitian, unit-trace, positive state on a spin manifold."""

    manifold: SpinManifold
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        object.__setattr__(self, "rho", rho)
        dim = self.manifold.dim
        if rho.shape != (dim, dim):
            raise ValueError(f"state shape {rho.shape} does not match dim {dim}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITICITY_TOL:
            raise ValueError("state is not Hermitian within 1e-10")
        if abs(np.trace(rho).real - 1.0) > TRACE_TOL or abs(np.trace(rho).imag) > TRACE_TOL:
            raise ValueError("state trace differs from 1 beyond 1e-10")
        if np.linalg.eigvalsh(rho).min() < EIGENVALUE_FLOOR:
            raise ValueError("state has an eigenvalue below -1e-9")

    @classmethod
    def stretched(cls, manifold: SpinManifold = GROUND) -> "DensityState":
        """Pure |f, +f><f, +f| (the pumped 'spin-up' state)."""
        rho = np.zeros((manifold.dim, manifold.dim), dtype=complex)
        rho[0, 0] = 1.0
        return cls(manifold, rho)

    @classmethod
    def maximally_mixed(cls, manifold: SpinManifold = GROUND) -> "DensityState":
        return cls(manifold, np.eye(manifold.dim, dtype=complex) / manifold.dim)

    @classmethod
    def transverse(cls, manifold: SpinManifold = GROUND) -> "DensityState":
        """Pure state polarized along +x (maximal transverse coherence)."""
        ops = build_spin_operators(manifold)
        vals, vecs = np.linalg.eigh(ops["jx"])
        psi = vecs[:, np.argmax(vals)]
        return cls(manifold, np.outer(psi, psi.conj()))

    def multipoles(self):
        return decompose(self.rho, self.manifold)


@dataclass
class Trajectory:
    """Uniformly sampled density-matrix history on one manifold."""

    manifold: SpinManifold
    times: np.ndarray  # (nt,) seconds
    rhos: np.ndarray  # (nt, dim, dim) complex
    dt: float  # sampling step (s) — integrator step times the store stride

    def __post_init__(self):
        if len(self.times) != len(self.rhos):
            raise ValueError("times and states length mismatch")
        if len(self.times) >= 2:
            gaps = np.diff(self.times)
            if np.max(np.abs(gaps - self.dt)) > 1e-9 * max(self.dt, 1e-30):
                raise ValueError("trajectory sampling is not uniform")

    def __len__(self) -> int:
        return len(self.times)

    def state_at(self, index: int) -> DensityState:
        return DensityState(self.manifold, self.rhos[index])

    def expectation(self, op: np.ndarray) -> np.ndarray:
        """<op>(t) = Tr(rho(t) op) sampled along the trajectory."""
        return np.einsum("tij,ji->t", self.rhos, np.asarray(op, dtype=complex))

    def bloch_components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ops = build_spin_operators(self.manifold)
        return (
            self.expectation(ops["jx"]).real,
            self.expectation(ops["jy"]).real,
            self.expectation(ops["jz"]).real,
        )

    def multipole_series(self, k: int) -> np.ndarray:
        """Rank-k multipoles, shape (nt, 2k+1), components ordered q=-k..+k."""
        return decompose_trajectory(self.rhos, self.manifold, k)

    def verify_invariants(self) -> None:
        """Raise NumericalInvariantError at the first stored step violating
        hermiticity (1e-10), unit trace (1e-10), or positivity (-1e-9)."""
        herm = np.abs(self.rhos - np.conj(np.swapaxes(self.rhos, 1, 2))).max(axis=(1, 2))
        bad = np.nonzero(herm > HERMITICITY_TOL)[0]
        if bad.size:
            raise NumericalInvariantError(
                f"hermiticity defect {herm[bad[0]]:.3e} exceeds {HERMITICITY_TOL}", step=int(bad[0])
            )
        traces = np.einsum("tii->t", self.rhos)
        tr_err = np.abs(traces - 1.0)
        bad = np.nonzero(tr_err > TRACE_TOL)[0]
        if bad.size:
            raise NumericalInvariantError(
                f"trace defect {tr_err[bad[0]]:.3e} exceeds {TRACE_TOL}", step=int(bad[0])
            )
        eigs = np.linalg.eigvalsh(self.rhos)
        bad = np.nonzero(eigs[:, 0] < EIGENVALUE_FLOOR)[0]
        if bad.size:
            raise NumericalInvariantError(
                f"eigenvalue {eigs[bad[0], 0]:.3e} below {EIGENVALUE_FLOOR}", step=int(bad[0])
            )

    def to_csv(self, path, content: str = "rho") -> None:
        """Write the trajectory as CSV.

        content='rho': columns time_s then re/im of the row-major upper
        triangle of rho.  content='multipoles': columns time_s then re/im
        of every m^k_q, k=0..2f, q=-k..+k.  A leading '# key=value' line
        records which layout follows.
        """
        dim = self.manifold.dim
        if content == "rho":
            pairs = [(i, j) for i in range(dim) for j in range(i, dim)]
            cols = []
            names = []
            for (i, j) in pairs:
                names.append(f"re_rho_{i}{j}")
                names.append(f"im_rho_{i}{j}")
                cols.append(self.rhos[:, i, j].real)
                cols.append(self.rhos[:, i, j].imag)
        elif content == "multipoles":
            cols = []
            names = []
            for k in range(0, self.manifold.max_rank + 1):
                series = self.multipole_series(k)
                for qi, q in enumerate(range(-k, k + 1)):
                    tag = f"m{k}_{'m' if q < 0 else ''}{abs(q)}"
                    names.append(f"re_{tag}")
                    names.append(f"im_{tag}")
                    cols.append(series[:, qi].real)
                    cols.append(series[:, qi].imag)
        else:
            raise ValueError(f"unknown trajectory content {content!r}")
        with open(path, "w") as fh:
            fh.write(
                f"# content={content} manifold={self.manifold.label.value} "
                f"dim={dim} dt_s={self.dt!r}\n"
            )
            fh.write("time_s," + ",".join(names) + "\n")
            for row in range(len(self.times)):
                vals = [repr(float(self.times[row]))]
                vals += [repr(float(c[row])) for c in cols]
                fh.write(",".join(vals) + "\n")


def hamiltonian_at(env: FieldEnvironment, manifold: SpinManifold, t: float) -> np.ndarray:
    """H(t)/h in Hz: gamma*b0*Jz + gamma*bm*cos(2 pi omega_m t)*Jy."""
    ops = build_spin_operators(manifold)
    drive = manifold.gamma * env.bm * math.cos(2.0 * math.pi * env.omega_m * t)
    return manifold.gamma * env.b0 * ops["jz"] + drive * ops["jy"]


@numba.njit(cache=True)
def _rhs(rho, t, gb0, gbm, omega_m, jz, jy, t1, m1_target, pump_rate, rates, has_rank1, out):
    dim = rho.shape[0]
    c = gbm * np.cos(2.0 * np.pi * omega_m * t)
    for i in range(dim):
        for j in range(dim):
            acc = 0.0j
            for l in range(dim):
                acc += (gb0 * jz[i, l] + c * jy[i, l]) * rho[l, j]
                acc -= rho[i, l] * (gb0 * jz[l, j] + c * jy[l, j])
            out[i, j] = -2.0j * np.pi * acc
    if has_rank1:
        for qi in range(3):
            m1 = 0.0j
            for i in range(dim):
                for j in range(dim):
                    m1 += np.conj(t1[qi, i, j]) * rho[i, j]
            coeff = pump_rate * (m1_target[qi] - m1) - rates[qi] * m1
            for i in range(dim):
                for j in range(dim):
                    out[i, j] += coeff * t1[qi, i, j]


@numba.njit(cache=True)
def _rk4_evolve(rho0, n_steps, dt, gb0, gbm, omega_m, jz, jy, t1, m1_target,
                pump_rate, rates, has_rank1, store_stride, out, fix_tol):
    dim = rho0.shape[0]
    rho = rho0.copy()
    k1 = np.empty((dim, dim), dtype=np.complex128)
    k2 = np.empty((dim, dim), dtype=np.complex128)
    k3 = np.empty((dim, dim), dtype=np.complex128)
    k4 = np.empty((dim, dim), dtype=np.complex128)
    tmp = np.empty((dim, dim), dtype=np.complex128)
    out[0] = rho
    idx = 1
    for step in range(n_steps):
        t = step * dt
        _rhs(rho, t, gb0, gbm, omega_m, jz, jy, t1, m1_target, pump_rate, rates, has_rank1, k1)
        for i in range(dim):
            for j in range(dim):
                tmp[i, j] = rho[i, j] + 0.5 * dt * k1[i, j]
        _rhs(tmp, t + 0.5 * dt, gb0, gbm, omega_m, jz, jy, t1, m1_target, pump_rate, rates, has_rank1, k2)
        for i in range(dim):
            for j in range(dim):
                tmp[i, j] = rho[i, j] + 0.5 * dt * k2[i, j]
        _rhs(tmp, t + 0.5 * dt, gb0, gbm, omega_m, jz, jy, t1, m1_target, pump_rate, rates, has_rank1, k3)
        for i in range(dim):
            for j in range(dim):
                tmp[i, j] = rho[i, j] + dt * k3[i, j]
        _rhs(tmp, t + dt, gb0, gbm, omega_m, jz, jy, t1, m1_target, pump_rate, rates, has_rank1, k4)
        for i in range(dim):
            for j in range(dim):
                rho[i, j] = rho[i, j] + (dt / 6.0) * (
                    k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j]
                )
        # cheap per-step drift repair: hermitize + renormalize when needed
        drift = 0.0
        tr = 0.0j
        for i in range(dim):
            tr += rho[i, i]
            for j in range(dim):
                d = abs(rho[i, j] - np.conj(rho[j, i]))
                if d > drift:
                    drift = d
        if drift > fix_tol or abs(tr - 1.0) > fix_tol:
            for i in range(dim):
                for j in range(i, dim):
                    avg = 0.5 * (rho[i, j] + np.conj(rho[j, i]))
                    rho[i, j] = avg
                    rho[j, i] = np.conj(avg)
            tr = 0.0j
            for i in range(dim):
                tr += rho[i, i]
            scale = 1.0 / tr.real
            for i in range(dim):
                for j in range(dim):
                    rho[i, j] *= scale
        if (step + 1) % store_stride == 0:
            out[idx] = rho
            idx += 1


def _rank1_basis(manifold: SpinManifold) -> np.ndarray:
    """T^1_q stacked q=-1,0,+1 as a (3, dim, dim) array."""
    return np.stack([spherical_tensor(manifold, 1, q) for q in (-1, 0, 1)])


def evolve(
    initial: DensityState,
    env: FieldEnvironment,
    duration: float,
    dt: float,
    store_stride: int = 1,
) -> Trajectory:
    """Integrate the master equation with fixed-step RK4.

    ``store_stride`` keeps every n-th step (plus the initial state) to bound
    memory on long runs; the integrator step is always ``dt``.  Raises
    ConfigError when dt violates the resolution guard
    dt <= 1/(50*max(larmor, omega_m)) and NumericalInvariantError (with the
    offending step index) if a stored state breaks trace/hermiticity/
    positivity tolerances.
    """
    if duration <= 0:
        raise ConfigError("duration must be > 0 s", field="duration")
    if dt <= 0:
        raise ConfigError("dt must be > 0 s", field="dt")
    manifold = initial.manifold
    f_fast = max(abs(env.larmor(manifold)), env.omega_m)
    if f_fast > 0 and dt > 1.0 / (DT_GUARD_FACTOR * f_fast):
        raise ConfigError(
            f"dt={dt!r} violates the resolution guard dt <= 1/({DT_GUARD_FACTOR:.0f}"
            f"*max(larmor, omega_m)) = {1.0 / (DT_GUARD_FACTOR * f_fast):.3e} s",
            field="dt",
        )
    if store_stride < 1:
        raise ConfigError("store_stride must be >= 1", field="store_stride")

    n_steps = int(round(duration / dt))
    if n_steps < 1:
        raise ConfigError("duration shorter than one step", field="duration")
    ops = build_spin_operators(manifold)
    t1 = _rank1_basis(manifold)
    target = DensityState.stretched(manifold).multipoles()
    m1_target = np.array([target.get(1, q) for q in (-1, 0, 1)], dtype=complex)
    rates = np.array([env.gamma2, env.gamma1, env.gamma2], dtype=float)
    has_rank1 = bool(env.pump_rate > 0 or np.any(rates > 0))

    n_stored = n_steps // store_stride + 1
    out = np.empty((n_stored, manifold.dim, manifold.dim), dtype=complex)
    _rk4_evolve(
        np.asarray(initial.rho, dtype=complex),
        n_steps,
        float(dt),
        manifold.gamma * env.b0,
        manifold.gamma * env.bm,
        float(env.omega_m),
        ops["jz"],
        ops["jy"],
        t1,
        m1_target,
        float(env.pump_rate),
        rates,
        has_rank1,
        int(store_stride),
        out,
        STEP_FIX_TOL,
    )
    times = np.arange(n_stored) * (dt * store_stride)
    traj = Trajectory(manifold, times, out, dt * store_stride)
    traj.verify_invariants()
    return traj


def closed_form_resonant(
    env: FieldEnvironment,
    times: np.ndarray,
    manifold: SpinManifold = GROUND,
) -> dict[str, np.ndarray]:
    """Rotating-wave solution for the resonantly driven, loss-free spin-1/2
    started in the stretched state.

        sz(t) = (1/2) cos(2 pi rabi t)
        sx(t) = (1/2) sin(2 pi rabi t) cos(2 pi larmor t)
        sy(t) = (1/2) sin(2 pi rabi t) sin(2 pi larmor t)

    The transverse phase (x leading into +y) matches the free-precession
    sense of the +z static field; the Rabi envelope phase is fixed by the
    y-axis drive.  Raises ValueError off resonance or with any incoherent
    rate nonzero — the closed form only exists under those conditions.
    """
    if manifold.f != 0.5:
        raise ValueError("closed form is the spin-1/2 dressed solution")
    larmor = env.larmor(manifold)
    if env.omega_m != larmor:
        raise ValueError(
            f"closed_form_resonant requires omega_m = larmor exactly "
            f"(omega_m={env.omega_m}, larmor={larmor})"
        )
    if env.pump_rate != 0 or env.gamma1 != 0 or env.gamma2 != 0:
        raise ValueError("closed_form_resonant requires all incoherent rates = 0")
    t = np.asarray(times, dtype=float)
    rabi = env.rabi(manifold)
    envelope = 0.5 * np.sin(2.0 * np.pi * rabi * t)
    return {
        "sx": envelope * np.cos(2.0 * np.pi * larmor * t),
        "sy": envelope * np.sin(2.0 * np.pi * larmor * t),
        "sz": 0.5 * np.cos(2.0 * np.pi * rabi * t),
    }
