"""Shared builders for synthetic trajectories used across test modules,
plus the acceptance-criteria verdict summary."""

import numpy as np

from mollowsim.dynamics import FieldEnvironment, Trajectory
from mollowsim.mec import MetaTrajectory
from mollowsim.spin import manifold, tensor_basis

GAMMA_G = 3.2e-2  # Hz/nT, ground-state 3He
GROUND = manifold("Ground3He")


def resonant_env(f_larmor, rabi, **rates):
    """FieldEnvironment with given ground Larmor and Rabi frequencies (Hz)."""
    return FieldEnvironment(
        b0=f_larmor / GAMMA_G,
        bm=2 * rabi / GAMMA_G,
        omega_m=f_larmor,
        **rates,
    )


def ground_trajectory_from_m1(times, m1_series):
    """Ground Trajectory whose rank-1 multipoles follow m1_series (nt, 3).

    The series must obey the conjugation rule and stay small enough that
    rho = I/2 + sum_q m1_q T^1_q is positive.
    """
    basis = tensor_basis(GROUND)
    t_stack = np.stack([basis[(1, q)] for q in (-1, 0, 1)])
    rhos = np.repeat((np.eye(2, dtype=complex) / 2)[None], len(times), axis=0)
    rhos += np.einsum("tq,qij->tij", np.asarray(m1_series, dtype=complex), t_stack)
    dt = times[1] - times[0]
    return Trajectory(GROUND, times, rhos, dt)


def synthetic_meta(manifold_name, times, m1=None, m2=None):
    """MetaTrajectory with directly prescribed multipole series (nt,3)/(nt,5)."""
    man = manifold(manifold_name)
    nt = len(times)
    m1 = np.zeros((nt, 3), dtype=complex) if m1 is None else np.asarray(m1, dtype=complex)
    m2 = np.zeros((nt, 5), dtype=complex) if m2 is None else np.asarray(m2, dtype=complex)
    dt = times[1] - times[0] if nt >= 2 else 1.0
    return MetaTrajectory(man, np.asarray(times, dtype=float), m1, m2, dt)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per acceptance criterion (test_acceptance::test_aN_*)."""
    passed, touched = set(), {}
    for key in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_a" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            label = name.split("_")[1].upper()  # test_a1_... -> A1
            touched[label] = name
            if key == "passed" and getattr(rep, "when", "") == "call":
                passed.add(label)
            elif key != "passed":
                passed.discard(label)
                touched[label] = name + " (" + key + ")"
    if not touched:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(touched):
        verdict = "PASS" if label in passed else "FAIL"
        terminalreporter.write_line(f"{label} {verdict} — {touched[label]}")
