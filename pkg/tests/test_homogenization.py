import numpy as np
import pytest

from asr_fe2.geometry import generate_specimen
from asr_fe2.homogenization import TestMode as Mode
from asr_fe2.homogenization import (average_stress, boundary_average_stress,
                                    homogenize, select_test_mode, tensor_to_voigt,
                                    virtual_test_stiffness, voigt_to_tensor)
from asr_fe2.materials import (D_MAX, AsrLaw, ElementStates, default_material_table, eigenstrain,
                               isotropic_stiffness)
from asr_fe2.meso_solver import RveProblem, sla_damage_loop

from conftest import homogeneous_rve

LAW = AsrLaw()


def damaged_rve(seed=1):
    mesh, _, phases, _ = generate_specimen(16, 16, 1.0, 1, 6, 0.45, 0.01, seed, seed + 1)
    states = ElementStates(phases, default_material_table(1.0), np.random.default_rng(seed))
    rve = RveProblem(mesh, phases, states)
    rve.set_eigenstrain(eigenstrain(150, LAW.T0, LAW))
    bc = rve.periodic(np.array([[1 + 2e-4, 3e-5], [-1e-5, 1 - 1e-4]]))
    sol = sla_damage_loop(rve, bc)
    assert states.cracked.any()
    return rve, sol, bc


def crack_band_rve(n=10):
    rve = homogeneous_rve(n)
    st = rve.states
    col = np.flatnonzero((rve.mesh.centroids[:, 0] > 4) & (rve.mesh.centroids[:, 0] < 5))
    st.initiate(col, np.zeros(len(col)))
    for _ in range(10):
        st.reduce(col)
    assert np.all(st.d[col] == D_MAX)
    rve.touch()
    return rve


def test_voigt_round_trip():
    s = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(tensor_to_voigt(voigt_to_tensor(s)), s)


def test_uniform_stress_average(rve):
    s0 = np.array([1e6, -2e6, 5e5])
    stress = np.tile(s0, (rve.mesh.n_elements, 1))
    np.testing.assert_allclose(average_stress(rve, stress), voigt_to_tensor(s0), rtol=1e-14)


def test_zero_load_zero_stress(rve):
    sol = rve.solve(rve.periodic(np.eye(2)))
    assert np.all(average_stress(rve, sol.stress) == 0)


def test_volume_and_boundary_forms_agree():
    rve, sol, bc = damaged_rve()
    s1 = average_stress(rve, sol.stress)
    s2 = boundary_average_stress(rve, sol, bc)
    assert np.abs(s1 - s2).max() <= 1e-8 * np.abs(s1).max()


def test_hill_mandel_on_heterogeneous_elastic_rve():
    mesh, _, phases, _ = generate_specimen(16, 16, 1.0, 1, 6, 0.45, 0.0, 2, 3)
    rve = RveProblem(mesh, phases, ElementStates(phases, default_material_table(1.0),
                                                 np.random.default_rng(0)))
    rng = np.random.default_rng(5)
    for _ in range(5):
        F = np.eye(2) + rng.normal(scale=1e-4, size=(2, 2))
        sol = rve.solve(rve.periodic(F), include_eigen=False)
        A = mesh.areas
        micro = A @ np.sum(sol.stress * sol.strain, axis=1) / A.sum()
        H = F - np.eye(2)
        eps = 0.5 * (H + H.T)
        macro = np.sum(average_stress(rve, sol.stress) * eps)
        assert abs(micro - macro) <= 1e-8 * abs(macro)


@pytest.mark.parametrize("sigma, mode", [
    (np.diag([1e6, -0.5e6]), Mode.TENSION),
    (np.diag([-3e6, 1e6]), Mode.COMPRESSION),
    (np.zeros((2, 2)), Mode.TENSION),
])
def test_mode_selection(sigma, mode):
    assert select_test_mode(sigma) is mode


@pytest.mark.parametrize("mode", list(Mode))
def test_homogeneous_rve_gives_isotropic_stiffness(rve, mode):
    C = virtual_test_stiffness(rve, mode)
    ref = isotropic_stiffness(default_material_table(1.0).mortar)
    assert np.abs(C - ref).max() <= 1e-8 * np.abs(ref).max()


def test_vertical_crack_band_anisotropy():
    rve = crack_band_rve()
    C0 = isotropic_stiffness(default_material_table(1.0).mortar)
    Ct = virtual_test_stiffness(rve, Mode.TENSION)
    Cc = virtual_test_stiffness(rve, Mode.COMPRESSION)
    assert Ct[0, 0] <= 0.5 * C0[0, 0]
    assert Ct[1, 1] >= 0.9 * C0[1, 1]
    assert Cc[0, 0] >= Ct[0, 0]


def test_compression_never_softer_than_tension():
    rve, _, _ = damaged_rve(3)
    Ct = virtual_test_stiffness(rve, Mode.TENSION)
    Cc = virtual_test_stiffness(rve, Mode.COMPRESSION)
    assert np.all(np.diag(Cc - Ct) >= -1e-9 * np.abs(Cc).max())


def test_stiffness_linear_in_probe_amplitude():
    rve = crack_band_rve()
    for mode in Mode:
        C1 = virtual_test_stiffness(rve, mode, 1e-4)
        C2 = virtual_test_stiffness(rve, mode, 2e-4)
        assert np.abs(C1 - C2).max() <= 1e-6 * np.abs(C1).max()


def test_virtual_tests_leave_state_untouched():
    rve, sol, _ = damaged_rve(4)
    before = rve.states.copy()
    eff = homogenize(rve, sol)
    assert rve.states == before
    np.testing.assert_array_equal(eff.stiffness, eff.stiffness.T)
    assert np.linalg.eigvalsh(eff.stiffness).min() > 0

