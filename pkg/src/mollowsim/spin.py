"""Angular-momentum operators, irreducible tensor operators, and multipoles.

Conventions used throughout the package:

* Basis states |f, m> are ordered m = +f .. -f (index 0 is the stretched
  state m = +f).
* Operators are dimensionless (hbar = 1): Jz = diag(f, f-1, ..., -f),
  J+ |f,m> = sqrt(f(f+1) - m(m+1)) |f,m+1>, Jx = (J+ + J-)/2,
  Jy = (J+ - J-)/(2i).
* Tensor operators T^k_q are trace-orthonormal, Tr(T^k_q^dag T^k'_q') =
  delta_kk' delta_qq', built from Clebsch-Gordan coefficients as
  T^k_q = sqrt((2k+1)/(2f+1)) sum_m <f, m-q; k, q | f, m> |f,m><f,m-q|.
  With this convention T^0_0 = I/sqrt(2f+1), T^1_0 = Jz/||Jz||_F, and
  T^k_q^dag = (-1)^q T^k_{-q}.  Conversion to bare operator products:
  T^1_0 = Jz * sqrt(3/(f(f+1)(2f+1))) and
  T^2_{+-1} = -+ (Jz J_{+-} + J_{+-} Jz) * sqrt(5/6) / ||...||  (see
  ``tensor_to_product_factor`` for the exact per-(f,k,q) factors).
* A multipole m^k_q of a state rho is the coefficient
  m^k_q = Tr(T^k_q^dag rho); hermitian rho implies
  m^k_{-q} = (-1)^q conj(m^k_q).

Gyromagnetic catalog (1 G = 1e5 nT):

===========  =====  ==================  =========================
label        f      gamma (Hz/nT)       source
===========  =====  ==================  =========================
Ground3He    1/2    3.2e-2              3.2 kHz/G
MetaF12      1/2    38.0                3.8 MHz/G
MetaF32      3/2    19.0                1.9 MHz/G
Meta4He      1      28.0                2.8 MHz/G (g_J ~ 2 electronic
                                        moment; documented assumption)
===========  =====  ==================  =========================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

__all__ = [
    "ManifoldLabel",
    "SpinManifold",
    "MANIFOLD_CATALOG",
    "manifold",
    "build_spin_operators",
    "clebsch_gordan",
    "spherical_tensor",
    "tensor_basis",
    "MultipoleSet",
    "decompose",
    "reconstruct",
]

HERMITICITY_TOL = 1e-10


class ManifoldLabel(str, Enum):
    GROUND_3HE = "Ground3He"
    META_F12 = "MetaF12"
    META_F32 = "MetaF32"
    META_4HE = "Meta4He"


def _is_half_integer(f) -> bool:
    return f >= 0 and float(2 * f).is_integer()


@dataclass(frozen=True)
class SpinManifold:
    """An angular-momentum subspace: quantum number f, gyromagnetic ratio, label."""

    f: float
    gamma: float  # Hz per nT, signed
    label: ManifoldLabel

    def __post_init__(self):
        if not _is_half_integer(self.f):
            raise ValueError(f"f must be a nonnegative multiple of 1/2, got {self.f}")

    @property
    def dim(self) -> int:
        return round(2 * self.f) + 1

    @property
    def max_rank(self) -> int:
        return round(2 * self.f)


MANIFOLD_CATALOG = {
    ManifoldLabel.GROUND_3HE: SpinManifold(0.5, 3.2e-2, ManifoldLabel.GROUND_3HE),
    ManifoldLabel.META_F12: SpinManifold(0.5, 38.0, ManifoldLabel.META_F12),
    ManifoldLabel.META_F32: SpinManifold(1.5, 19.0, ManifoldLabel.META_F32),
    ManifoldLabel.META_4HE: SpinManifold(1.0, 28.0, ManifoldLabel.META_4HE),
}


def manifold(label) -> SpinManifold:
    """Look up a manifold by label (enum or its string value)."""
    return MANIFOLD_CATALOG[ManifoldLabel(label)]


@lru_cache(maxsize=None)
def _angular_momentum(two_f: int):
    f = two_f / 2
    dim = two_f + 1
    m = f - np.arange(dim)
    jz = np.diag(m).astype(complex)
    jplus = np.zeros((dim, dim), dtype=complex)
    for col in range(1, dim):
        mc = m[col]
        jplus[col - 1, col] = math.sqrt(f * (f + 1) - mc * (mc + 1))
    jminus = jplus.conj().T
    jx = (jplus + jminus) / 2
    jy = (jplus - jminus) / 2j
    return {"jx": jx, "jy": jy, "jz": jz, "jplus": jplus, "jminus": jminus}


def build_spin_operators(man: SpinManifold | float) -> dict[str, np.ndarray]:
    """Angular-momentum matrices {jx, jy, jz, jplus, jminus} for a manifold.

    Accepts a SpinManifold or a bare f value. Matrices are fresh copies in
    the |f, m> basis ordered m = +f .. -f.
    """
    f = man.f if isinstance(man, SpinManifold) else man
    if not _is_half_integer(f):
        raise ValueError(f"f must be a nonnegative multiple of 1/2, got {f}")
    ops = _angular_momentum(round(2 * f))
    return {name: mat.copy() for name, mat in ops.items()}


def _fact(x) -> int:
    """Factorial of a value that must be a nonnegative integer (within fp noise)."""
    n = round(x)
    if abs(x - n) > 1e-9 or n < 0:
        raise ValueError(f"expected nonnegative integer, got {x}")
    return math.factorial(n)


def clebsch_gordan(j1, m1, j2, m2, j, m) -> float:
    """Clebsch-Gordan coefficient <j1 m1; j2 m2 | j m> via the Racah sum.

    Exact finite-sum evaluation with integer factorials; suitable for the
    small angular momenta used here (no large-j asymptotics needed).
    """
    if m1 + m2 != m:
        return 0.0
    if not (abs(j1 - j2) <= j <= j1 + j2):
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m) > j:
        return 0.0
    if not float(j1 + j2 + j).is_integer():
        return 0.0
    pref = (2 * j + 1) * _fact(j1 + j2 - j) * _fact(j1 - j2 + j) * _fact(-j1 + j2 + j) / _fact(j1 + j2 + j + 1)
    pref *= (
        _fact(j + m) * _fact(j - m)
        * _fact(j1 - m1) * _fact(j1 + m1)
        * _fact(j2 - m2) * _fact(j2 + m2)
    )
    total = 0.0
    k_min = round(max(0.0, j2 - j - m1, j1 + m2 - j))
    k_max = round(min(j1 + j2 - j, j1 - m1, j2 + m2))
    for k in range(k_min, k_max + 1):
        denom = (
            _fact(k)
            * _fact(j1 + j2 - j - k)
            * _fact(j1 - m1 - k)
            * _fact(j2 + m2 - k)
            * _fact(j - j2 + m1 + k)
            * _fact(j - j1 - m2 + k)
        )
        total += (-1) ** k / denom
    return math.sqrt(pref) * total


@lru_cache(maxsize=None)
def _tensor_basis(two_f: int) -> dict[tuple[int, int], np.ndarray]:
    f = two_f / 2
    dim = two_f + 1
    m_values = [f - i for i in range(dim)]
    basis = {}
    for k in range(0, two_f + 1):
        norm = math.sqrt((2 * k + 1) / dim)
        for q in range(-k, k + 1):
            t = np.zeros((dim, dim), dtype=complex)
            for row, m_row in enumerate(m_values):
                m_col = m_row - q
                if abs(m_col) > f:
                    continue
                col = round(f - m_col)
                t[row, col] = norm * clebsch_gordan(f, m_col, k, q, f, m_row)
            basis[(k, q)] = t
    return basis


def tensor_basis(man: SpinManifold | float) -> dict[tuple[int, int], np.ndarray]:
    """The full trace-orthonormal tensor-operator basis {T^k_q} for a manifold."""
    f = man.f if isinstance(man, SpinManifold) else man
    if not _is_half_integer(f):
        raise ValueError(f"f must be a nonnegative multiple of 1/2, got {f}")
    return {kq: t.copy() for kq, t in _tensor_basis(round(2 * f)).items()}


def spherical_tensor(man: SpinManifold | float, k: int, q: int) -> np.ndarray:
    """Trace-orthonormal irreducible tensor operator T^k_q on a manifold.

    Raises ValueError for k > 2f (the manifold does not support the rank,
    e.g. rank 2 on spin 1/2) or |q| > k.
    """
    f = man.f if isinstance(man, SpinManifold) else man
    if not _is_half_integer(f):
        raise ValueError(f"f must be a nonnegative multiple of 1/2, got {f}")
    two_f = round(2 * f)
    if not 0 <= k <= two_f:
        raise ValueError(f"rank k={k} unsupported on f={f} (need 0 <= k <= {two_f})")
    if abs(q) > k:
        raise ValueError(f"component q={q} out of range for rank k={k}")
    return _tensor_basis(two_f)[(k, q)].copy()


def tensor_to_product_factor(man: SpinManifold | float, k: int, q: int) -> complex:
    """Factor c with T^k_q = c * P^k_q for the bare product operators

    P^1_0 = Jz, P^1_{+-1} = -+ J_{+-}, P^2_0 = 3Jz^2 - J^2,
    P^2_{+-1} = -+ (Jz J_{+-} + J_{+-} Jz), P^2_{+-2} = J_{+-}^2.

    Documents the normalization gap between the orthonormal basis used here
    and textbook operator products; only ranks 1 and 2 have a catalogued
    product form.
    """
    f = man.f if isinstance(man, SpinManifold) else man
    ops = build_spin_operators(f)
    jp, jm, jz = ops["jplus"], ops["jminus"], ops["jz"]
    eye = np.eye(round(2 * f) + 1)
    j2 = f * (f + 1) * eye
    products = {
        (1, 0): jz,
        (1, 1): -jp,
        (1, -1): jm,
        (2, 0): 3 * jz @ jz - j2,
        (2, 1): -(jz @ jp + jp @ jz),
        (2, -1): jz @ jm + jm @ jz,
        (2, 2): jp @ jp,
        (2, -2): jm @ jm,
    }
    if (k, q) not in products:
        raise ValueError(f"no catalogued product form for (k={k}, q={q})")
    p = products[(k, q)]
    t = spherical_tensor(f, k, q)
    num = np.vdot(p, t)
    den = np.vdot(p, p)
    if den == 0:
        raise ValueError(f"product operator for (k={k}, q={q}) vanishes on f={f}")
    c = num / den
    if np.linalg.norm(t - c * p) > 1e-12:
        raise ValueError(f"T^{k}_{q} is not proportional to its product form on f={f}")
    return complex(c)


@dataclass
class MultipoleSet:
    """Irreducible multipole components m^k_q of a state on a spin-f manifold.

    Components are stored sparsely; missing (k, q) entries are zero.
    """

    f: float
    components: dict[tuple[int, int], complex] = field(default_factory=dict)

    def __post_init__(self):
        if not _is_half_integer(self.f):
            raise ValueError(f"f must be a nonnegative multiple of 1/2, got {self.f}")
        max_rank = round(2 * self.f)
        for (k, q) in self.components:
            if not 0 <= k <= max_rank:
                raise ValueError(f"rank k={k} exceeds 2f={max_rank}")
            if abs(q) > k:
                raise ValueError(f"|q|={abs(q)} exceeds rank k={k}")

    def get(self, k: int, q: int) -> complex:
        return self.components.get((k, q), 0j)

    def rank(self, k: int) -> np.ndarray:
        """Components of rank k as an array ordered q = -k .. +k."""
        return np.array([self.get(k, q) for q in range(-k, k + 1)])

    def conjugation_violation(self) -> float:
        """Max |m^k_{-q} - (-1)^q conj(m^k_q)| over all stored components."""
        worst = 0.0
        for (k, q) in self.components:
            lhs = self.get(k, -q)
            rhs = (-1) ** q * np.conj(self.get(k, q))
            worst = max(worst, abs(lhs - rhs))
        return worst

    def scaled(self, factor: float) -> "MultipoleSet":
        return MultipoleSet(self.f, {kq: factor * v for kq, v in self.components.items()})


def _as_matrix(state, man=None):
    """Accept a DensityState-like object (``.rho``/``.manifold``) or a bare matrix."""
    if hasattr(state, "rho"):
        return np.asarray(state.rho), state.manifold
    return np.asarray(state), man


def decompose(state, man: SpinManifold | float | None = None) -> MultipoleSet:
    """Multipole decomposition m^k_q = Tr(T^k_q^dag rho) of a density matrix."""
    rho, m = _as_matrix(state, man)
    if m is None:
        f = (rho.shape[0] - 1) / 2
    else:
        f = m.f if isinstance(m, SpinManifold) else m
    basis = _tensor_basis(round(2 * f))
    dim = round(2 * f) + 1
    if rho.shape != (dim, dim):
        raise ValueError(f"state dimension {rho.shape} does not match manifold dim {dim}")
    comps = {kq: complex(np.vdot(t, rho)) for kq, t in basis.items()}
    return MultipoleSet(f, comps)


def reconstruct(multipoles: MultipoleSet, man: SpinManifold | float) -> np.ndarray:
    """Density matrix rho = sum_kq m^k_q T^k_q from a multipole set.

    Hermitian when the multipoles satisfy the conjugation rule; raises if a
    stored rank exceeds 2f for the target manifold.
    """
    f = man.f if isinstance(man, SpinManifold) else man
    if not _is_half_integer(f):
        raise ValueError(f"f must be a nonnegative multiple of 1/2, got {f}")
    two_f = round(2 * f)
    basis = _tensor_basis(two_f)
    dim = two_f + 1
    rho = np.zeros((dim, dim), dtype=complex)
    for (k, q), value in multipoles.components.items():
        if k > two_f:
            raise ValueError(f"rank k={k} exceeds 2f={two_f} of the target manifold")
        rho += value * basis[(k, q)]
    return rho


def decompose_trajectory(rhos: np.ndarray, man: SpinManifold | float, k: int) -> np.ndarray:
    """Rank-k multipoles of a stacked trajectory of density matrices.

    ``rhos`` has shape (nt, dim, dim); returns shape (nt, 2k+1) ordered
    q = -k .. +k.  Vectorized form of ``decompose`` restricted to one rank.
    """
    f = man.f if isinstance(man, SpinManifold) else man
    basis = _tensor_basis(round(2 * f))
    stack = np.stack([basis[(k, q)] for q in range(-k, k + 1)])
    return np.einsum("qij,tij->tq", stack.conj(), rhos)
