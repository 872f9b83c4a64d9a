import pytest

from asr_fe2.cli import EXIT_OK, EXIT_PARAMETER, EXIT_SOLVER, main
from asr_fe2.output import read_history


def write_cfg(path, **kw):
    base = dict(scenario="meso_free", width=10, height=10, d_max=5, packing=0.4,
                asr_site_ratio=0.02, t_end=40, dt=4, record_interval=5)
    base.update(kw)
    path.write_text("".join(f"{k} = {v}\n" for k, v in base.items()))
    return path


def test_run_writes_history_and_fields(tmp_path):
    cfg = write_cfg(tmp_path / "a.cfg")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--profile", "desk", "--out", str(out),
                 "--seed-geometry", "4", "--seed-sites", "5", "--seed-strength", "6"]) == EXIT_OK
    hist = read_history(out / "history.csv")
    assert [r.t_days for r in hist] == [20.0, 40.0]
    text = (out / "fields.vtk").read_text()
    for name in ("damage", "phase", "crack_area", "crack_angle"):
        assert f"SCALARS {name} " in text


def test_parameter_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("bogus = 3\n")
    assert main(["run", "--config", str(cfg), "--profile", "desk"]) == EXIT_PARAMETER
    assert "bogus" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == EXIT_PARAMETER


def test_solver_failure_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg", sla_max_passes=1, t_end=80)
    assert main(["run", "--config", str(cfg), "--profile", "desk",
                 "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert "diagnostics" in capsys.readouterr().err


def test_montecarlo_outputs(tmp_path):
    cfg = write_cfg(tmp_path / "d.cfg", t_end=20)
    out = tmp_path / "mc"
    assert main(["montecarlo", "--config", str(cfg), "--profile", "desk", "--runs", "2",
                 "--vary", "geometry", "--out", str(out)]) == EXIT_OK
    runs = (out / "runs.csv").read_text().splitlines()
    assert runs[0].startswith("run,seed_geometry,seed_strength,seed_sites,t_days")
    assert len(runs) == 3
    stats = (out / "stats.csv").read_text().splitlines()
    assert len(stats) == 2 and stats[0].startswith("t_days_mean")


def test_usage_error_exits_with_2():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2
