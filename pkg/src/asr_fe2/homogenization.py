"""Meso-to-macro transfer: averaged stress and virtual-test effective stiffness."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import SingularityError, StiffnessError
from .meso_solver import closure_fixed_point

VIRTUAL_STRAIN = 1e-4


class TestMode(enum.Enum):
    TENSION = "tension"
    COMPRESSION = "compression"


@dataclass
class EffectiveState:
    stress: np.ndarray  # 2x2, Pa
    stiffness: np.ndarray  # 3x3 Voigt, Pa
    test_mode: TestMode


def voigt_to_tensor(s):
    return np.array([[s[0], s[2]], [s[2], s[1]]])


def tensor_to_voigt(t):
    return np.array([t[0, 0], t[1, 1], 0.5 * (t[0, 1] + t[1, 0])])


def average_stress(rve, stress):
    """Area average of element stresses as a 2x2 tensor."""
    w = rve.assembler.areas
    return voigt_to_tensor(w @ stress / w.sum())


def boundary_average_stress(rve, sol, bc):
    """Average stress from boundary reactions, (1/area) sum_n r_n (x) x_n.

    Reactions are internal nodal forces minus applied forces, taken on the
    nodes of the rectangle boundary only.
    """
    mesh = rve.mesh
    r = rve.internal_forces(sol)
    if bc.forces is not None:
        r = r - bc.forces
    nodes = np.unique(np.concatenate([mesh.boundary_nodes(s) for s in
                                      ("left", "right", "bottom", "top")]))
    R = r.reshape(-1, 2)[nodes]
    X = mesh.nodes[nodes]
    return R.T @ X / (rve.area * rve.assembler.thickness)


def select_test_mode(sigma_M):
    """Tension when the in-plane hydrostatic stress is non-negative."""
    return TestMode.TENSION if np.trace(sigma_M) / 2.0 >= 0.0 else TestMode.COMPRESSION


def _unit_tests(delta, mode):
    s = 1.0 if mode is TestMode.TENSION else -1.0
    return [
        (np.array([[s * delta, 0.0], [0.0, 0.0]]), s * delta),
        (np.array([[0.0, 0.0], [0.0, s * delta]]), s * delta),
        # tensorial shear delta, i.e. engineering shear 2 delta
        (np.array([[0.0, delta], [delta, 0.0]]), 2.0 * delta),
    ]


def virtual_test_stiffness(rve, mode, delta=VIRTUAL_STRAIN):
    """Effective 3x3 secant stiffness from three periodic virtual tests.

    Damage is frozen; eigenstrains are left out so the tests probe the
    mechanical stiffness of the current state. Closure flags are resolved for
    every test and restored afterwards.
    """
    states = rve.states
    saved = states.closed.copy()
    C = np.zeros((3, 3))
    try:
        for col, (H, strain) in enumerate(_unit_tests(delta, mode)):
            bc = rve.periodic(np.eye(2) + H)
            sol, _ = closure_fixed_point(rve, bc, include_eigen=False)
            C[:, col] = tensor_to_voigt(average_stress(rve, sol.stress)) / strain
    except SingularityError as err:
        raise StiffnessError(f"virtual test failed: {err}") from err
    finally:
        states.closed = saved
    C = 0.5 * (C + C.T)
    if np.linalg.eigvalsh(C).min() <= 0:
        raise StiffnessError("effective stiffness is not positive definite")
    return C


def homogenize(rve, sol, delta=VIRTUAL_STRAIN):
    sigma = average_stress(rve, sol.stress)
    mode = select_test_mode(sigma)
    return EffectiveState(sigma, virtual_test_stiffness(rve, mode, delta), mode)
