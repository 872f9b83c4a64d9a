import numpy as np
import pytest
from hypothesis import given, strategies as st

from asr_fe2.config import PROFILES, build_config, load_config, profile_config
from asr_fe2.errors import ParameterError
from asr_fe2.geometry import Phase, build_structured_mesh
from asr_fe2.homogenization import TestMode as Mode
from asr_fe2.materials import D_MAX
from asr_fe2.output import (HISTORY_HEADER, HistoryRecord, history_from_csv, history_to_csv,
                            read_history, write_history, write_vtk)
from asr_fe2.scenarios import (Fields, Vary, crack_area, crack_density, monte_carlo,
                               monte_carlo_seeds, orientation_histogram, relative_stiffness,
                               run_meso_scenario)

from conftest import homogeneous_rve


def tiny(**kw):
    base = dict(scenario="meso_free", width=12.0, height=12.0, element_size=1.0, d_max=6.0,
                packing=0.4, asr_site_ratio=0.02, t_end=120.0, dt=4.0, record_interval=5)
    base.update(kw)
    return profile_config("desk", **base)


def make_fields(mesh, damage, alpha, strain, phases=None):
    n = mesh.n_elements
    phases = np.zeros(n, dtype=np.int8) if phases is None else phases
    damage = np.asarray(damage, dtype=float)
    return Fields(mesh, phases, damage, np.asarray(alpha, dtype=float), damage > 0,
                  np.asarray(strain, dtype=float))


# --- metrics -----------------------------------------------------------------

def test_crack_area_rules():
    assert crack_area(0.125, [0.006, 0.004, 0.0], 0.0) == 0.0
    assert crack_area(0.125, [0.006, 0.004, 0.0], 0.5) == pytest.approx(0.00125)
    assert crack_area(0.125, [-0.006, 0.004, 0.0], 0.5) == 0.0


def test_crack_density_of_undamaged_fields_is_zero():
    mesh = build_structured_mesh(4, 4, 1)
    phases = np.zeros(mesh.n_elements, dtype=np.int8)
    phases[:8] = Phase.AGGREGATE
    f = make_fields(mesh, np.zeros(32), np.zeros(32), np.full((32, 3), 1e-3), phases)
    assert crack_density(f, Phase.MORTAR) == 0.0
    assert crack_density(f, Phase.AGGREGATE) == 0.0


def test_crack_density_value_and_empty_phase():
    mesh = build_structured_mesh(2, 2, 1)
    d = np.array([0.5, 0, 0, 0, 0, 0, 0, 0])
    strain = np.zeros((8, 3))
    strain[0] = [0.01, 0.0, 0.0]
    f = make_fields(mesh, d, np.zeros(8), strain)
    assert crack_density(f, Phase.MORTAR) == pytest.approx(0.5 * 0.01 / 4)
    with pytest.raises(ParameterError):
        crack_density(f, Phase.AGGREGATE)


def test_histogram_single_vertical_crack():
    mesh = build_structured_mesh(2, 2, 1)
    strain = np.tile([1e-3, 0, 0], (8, 1))
    f = make_fields(mesh, [0.5] + [0] * 7, np.zeros(8), strain)
    h = orientation_histogram(f, 6)
    assert h[0] == 1.0 and h[1:].sum() == 0.0


def test_histogram_needs_cracks():
    mesh = build_structured_mesh(2, 2, 1)
    f = make_fields(mesh, np.zeros(8), np.zeros(8), np.zeros((8, 3)))
    with pytest.raises(ParameterError):
        orientation_histogram(f)


def test_pristine_relative_stiffness_is_100():
    rve = homogeneous_rve(6)
    for axis in (0, 1):
        for mode in Mode:
            assert relative_stiffness(rve, axis, mode) == pytest.approx(100.0, rel=1e-12)


def test_tension_probe_softer_than_compression_probe():
    rve = homogeneous_rve(10)
    st = rve.states
    col = np.flatnonzero((rve.mesh.centroids[:, 0] > 4) & (rve.mesh.centroids[:, 0] < 5))
    st.initiate(col, np.zeros(len(col)))
    for _ in range(10):
        st.reduce(col)
    rve.touch()
    t = relative_stiffness(rve, 0, Mode.TENSION)
    c = relative_stiffness(rve, 0, Mode.COMPRESSION)
    assert t < 10 and t <= c
    assert relative_stiffness(rve, 1, Mode.TENSION) > 90
    assert np.all(st.d[col] == D_MAX) and not st.closed.any()


# --- scenarios ------------------------------------------------------------------

def test_no_expansion_no_strain():
    res = run_meso_scenario(tiny(eps_inf=0.0, t_end=20.0))
    assert [r.t_days for r in res.history] == [20.0]
    r = res.history[-1]
    assert r.strain_x == 0.0 and r.strain_y == 0.0 and r.n_damaged == 0


def test_loaded_step_strain_is_taken_out():
    res = run_meso_scenario(tiny(scenario="meso_loaded", eps_inf=0.0, t_end=8.0, dt=4.0,
                                 record_interval=1))
    for r in res.history:
        assert abs(r.strain_x) < 1e-15 and abs(r.strain_y) < 1e-15


def test_free_expansion_monotone_and_reproducible():
    a = run_meso_scenario(tiny())
    b = run_meso_scenario(tiny())
    assert a.history == b.history
    h = a.history
    t = [r.t_days for r in h]
    assert all(x < y for x, y in zip(t, t[1:]))
    for key in ("crack_density_mortar", "crack_density_aggregate", "n_damaged"):
        v = [getattr(r, key) for r in h]
        assert all(x <= y * (1 + 1e-9) for x, y in zip(v, v[1:])), key
    ex = [r.strain_x for r in h]
    assert ex[-1] > 0 and ex[0] < ex[-1]
    assert h[-1].rel_stiffness_x < 100


def test_scenario_guards():
    with pytest.raises(ParameterError):
        run_meso_scenario(tiny(scenario="fe2_free"))


@pytest.mark.slow
def test_free_cracks_isotropic_loaded_cracks_vertical(desk_runs):
    free = orientation_histogram([r.fields[0] for r in desk_runs["meso_free"]])
    assert free.max() <= 2.0 / len(free)
    loaded = orientation_histogram([r.fields[0] for r in desk_runs["meso_loaded"]])
    n = len(loaded)
    vertical = loaded[[0, 1, n - 2, n - 1]].sum()
    horizontal = loaded[n // 2 - 2:n // 2 + 2].sum()
    assert vertical > horizontal


def _final_strains(runs):
    return np.array([[r.history[-1].strain_x, r.history[-1].strain_y] for r in runs])


@pytest.mark.slow
def test_desk_free_expansion_examples(desk_runs):
    free = desk_runs["meso_free"]
    final = _final_strains(free)
    mx, my = final.mean(axis=0)
    assert 0.8 <= mx / my <= 1.25
    mean = final.mean(axis=1)
    assert mean.std() / mean.mean() < 0.5
    for res in free:
        h = res.history
        series = {"mean strain": [0.5 * (r.strain_x + r.strain_y) for r in h],
                  "mortar": [r.crack_density_mortar for r in h],
                  "aggregate": [r.crack_density_aggregate for r in h]}
        for key, v in series.items():
            v = np.asarray(v)
            assert np.all(np.diff(v) >= -1e-9 * np.abs(v).max()), key


@pytest.mark.slow
def test_desk_loaded_examples(desk_runs):
    for ex, ey in _final_strains(desk_runs["meso_loaded"]):
        assert 0 < ey < 0.25 * ex
    for res in desk_runs["meso_free"] + desk_runs["meso_loaded"]:
        h = res.history[-1]
        assert h.crack_density_mortar < 0.01 and h.crack_density_aggregate < 0.01


@pytest.mark.slow
def test_site_and_geometry_sweeps_overlap(desk_runs):
    cfg = profile_config("desk", seed_geometry=1)
    sites = monte_carlo(cfg, 5, Vary.SITES_ONLY)
    assert sites.n_failed == 0
    a = [np.mean([r.history[-1].strain_x, r.history[-1].strain_y]) for r in sites.runs]
    b = _final_strains(desk_runs["meso_free"]).mean(axis=1)
    assert max(min(a), min(b)) <= min(max(a), max(b))


# --- Monte Carlo -------------------------------------------------------------

def test_identical_seeds_have_zero_spread():
    cfg = tiny(t_end=40.0, record_interval=5)
    res = monte_carlo(cfg, 2, Vary.SITES_ONLY, seeds=[(1, 2, 3), (1, 2, 3)])
    assert res.n_failed == 0
    assert np.all(res.std == 0)


def test_seed_plans():
    cfg = tiny()
    sites = monte_carlo_seeds(cfg, 3, Vary.SITES_ONLY)
    geo = monte_carlo_seeds(cfg, 3, Vary.FULL_GEOMETRY)
    assert len({s[0] for s in sites}) == 1
    assert len({s[0] for s in geo}) == 3
    assert len({s[2] for s in sites}) == 3


def test_failed_runs_are_counted_not_averaged():
    cfg = tiny(t_end=40.0, sla_max_passes=1)
    res = monte_carlo(cfg, 2, Vary.FULL_GEOMETRY)
    assert res.n_failed == 2
    assert all("NonConvergenceError" in r.error for r in res.runs)


def test_monte_carlo_needs_two_runs():
    with pytest.raises(ParameterError):
        monte_carlo(tiny(), 1)


# --- config -----------------------------------------------------------------------

def test_profile_temperatures_in_kelvin():
    cfg = profile_config("desk")
    assert cfg.temperature == pytest.approx(311.15)
    assert cfg.asr_law().T0 == cfg.temperature


def test_config_file_round_trip(tmp_path):
    desk = PROFILES["desk"]
    lines = [f"{k} = {v}" for k, v in desk.items()] + ["scenario = meso_loaded  # comment"]
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(lines) + "\n")
    cfg = load_config(path)
    assert cfg == profile_config("desk", scenario="meso_loaded")
    assert cfg.loaded and isinstance(cfg.seed_sites, int) and cfg.regularize is True


@pytest.mark.parametrize("text, message", [
    ("scenario = meso_free\nbogus = 1\n", "unknown"),
    ("scenario = meso_free\n", "missing"),
    ("scenario meso_free\n", "key = value"),
    ("scenario = meso_free\nscenario = meso_free\n", "duplicate"),
])
def test_config_errors(tmp_path, text, message):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ParameterError, match=message):
        load_config(path)


def test_config_value_errors():
    with pytest.raises(ParameterError):
        profile_config("desk", scenario="somewhere")
    with pytest.raises(ParameterError):
        profile_config("desk", seed_sites="1.5")
    with pytest.raises(ParameterError):
        profile_config("desk", regularize="maybe")
    with pytest.raises(ParameterError):
        profile_config("desk", temperature=-300)
    with pytest.raises(ParameterError):
        build_config({}, profile="huge")


# --- output ----------------------------------------------------------------------

floats = st.floats(allow_nan=False, allow_infinity=True, width=64)
records = st.builds(HistoryRecord, floats, floats, floats, floats, floats, floats, floats,
                    st.integers(0, 10**9))


@given(st.lists(records, max_size=20))
def test_history_csv_round_trip(history):
    text = history_to_csv(history)
    assert text.splitlines()[0] == ",".join(HISTORY_HEADER)
    assert history_from_csv(text) == history


def test_history_file_and_bad_header(tmp_path):
    h = [HistoryRecord(0.5, 1e-4, 2e-4, 1e-5, 3e-5, 99.0, 98.5, 3)]
    write_history(tmp_path / "h.csv", h)
    assert read_history(tmp_path / "h.csv") == h
    with pytest.raises(ParameterError):
        history_from_csv("t,x\n1,2\n")


def test_vtk_layout(tmp_path):
    mesh = build_structured_mesh(2, 1, 1)
    write_vtk(tmp_path / "f.vtk", mesh, {"damage": np.array([0.0, 0.5, 0.0, 0.9999]),
                                         "phase": np.array([0, 1, 2, 0])})
    lines = (tmp_path / "f.vtk").read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII" and lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert "POINTS 6 double" in lines
    assert "CELLS 4 16" in lines and "CELL_TYPES 4" in lines
    assert lines.count("5") == 4
    i = lines.index("CELL_DATA 4")
    assert lines[i + 1] == "SCALARS damage double 1"
    assert lines[i + 3:i + 7] == ["0.0", "0.5", "0.0", "0.9999"]
    assert "SCALARS phase int 1" in lines
    with pytest.raises(ParameterError):
        write_vtk(tmp_path / "g.vtk", mesh, {"damage": np.zeros(3)})
