import csv
import json

import pytest

from tricoil.cli import main
from tricoil.schedule import TrajectorySpec

CONFIG = """
[library]
thetas_deg = [35.0, 45.0, 55.0]
xy_half = 0.01
spacing = 0.005
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.toml").write_text(CONFIG)
    assert main(["build-library", "--config", str(d / "cfg.toml"), "--out", str(d / "lib.bin")]) == 0
    traj = TrajectorySpec.from_json({"waypoints": [[0.3, 0, 0.03], [0.3, 0, 0.05]], "speeds": [1e-2]})
    (d / "traj.json").write_text(json.dumps(traj.to_json()))
    return d


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_no_args_usage(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_option_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["workspace", "--bogus"])
    assert exc.value.code == 2


def test_workspace(workdir):
    out = workdir / "ws"
    rc = main(["workspace", "--config", str(workdir / "cfg.toml"), "--lib", str(workdir / "lib.bin"),
               "--theta", "45", "--breq", "1.0", "--imax", "5", "--out-dir", str(out)])
    assert rc == 0
    rows = read_csv(out / "workspace_theta45.csv")
    assert rows[0] == ["x_m", "y_m", "z_m", "B_min_T", "feasible"]
    summary = json.loads((out / "workspace_theta45.json").read_text())
    assert summary["schema_version"] == 1 and summary["B_req_T"] == pytest.approx(1e-3)


def test_missing_theta_exit_1(workdir, capsys):
    rc = main(["workspace", "--lib", str(workdir / "lib.bin"), "--theta", "40", "--out-dir", str(workdir)])
    assert rc == 1
    assert "available" in capsys.readouterr().err


def test_corrupt_library_exit_1(workdir, capsys):
    data = bytearray((workdir / "lib.bin").read_bytes())
    data[-1] ^= 0xFF
    (workdir / "bad.bin").write_bytes(bytes(data))
    assert main(["workspace", "--lib", str(workdir / "bad.bin"), "--theta", "45"]) == 1
    assert "SHA-256" in capsys.readouterr().err


def test_mechanism_sweep(workdir):
    out = workdir / "mech.csv"
    assert main(["mechanism", "sweep", "--n", "11", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["s_m", "theta_deg", "E_x_m", "E_z_m", "z_limit_m"] and len(rows) == 12


def test_maps(workdir):
    g = workdir / "g.csv"
    f = workdir / "f.csv"
    lib = str(workdir / "lib.bin")
    assert main(["gradient-map", "--lib", lib, "--theta", "55", "--elevations", "0", "90", "--n-alpha", "12",
                 "--out", str(g)]) == 0
    assert main(["lift-map", "--lib", lib, "--theta", "55", "--out", str(f)]) == 0
    assert read_csv(g)[0] == ["z_m", "elevation_deg", "M_T_per_m"]
    assert read_csv(f)[0] == ["z_m", "F_z_N"]


def test_schedule_sim_and_compare(workdir):
    lib = str(workdir / "lib.bin")
    out = workdir / "sim"
    for mode in ("fixed:35", "fixed:45", "fixed:55", "auto"):
        assert main(["schedule-sim", "--lib", lib, "--mode", mode, "--traj", str(workdir / "traj.json"),
                     "--out-dir", str(out)]) == 0
    metrics = sorted(str(p) for p in out.glob("metrics_*.json"))
    assert len(metrics) == 4
    table = workdir / "cmp.csv"
    assert main(["compare", *metrics, "--out", str(table)]) == 0
    rows = read_csv(table)
    assert len(rows) == 5
    log = read_csv(out / "simlog_auto.csv")
    assert log[0][:4] == ["t_s", "x_m", "y_m", "z_m"]


def test_compare_rejects_mixed(workdir, tmp_path):
    a = {"schema_version": 1, "waypoint_hash": "a", "mode": "x"}
    b = {"schema_version": 1, "waypoint_hash": "b", "mode": "y"}
    (tmp_path / "a.json").write_text(json.dumps(a))
    (tmp_path / "b.json").write_text(json.dumps(b))
    assert main(["compare", str(tmp_path / "a.json"), str(tmp_path / "b.json"), "--out", str(tmp_path / "c.csv")]) == 1
