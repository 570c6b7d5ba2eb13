import json
import subprocess
import sys

import pytest

from algebroids.cli import ConfigError, apply_overrides, config_hash, main, parse_config

AREA_CFG = """
[chart plane]
coords = x y
bounds = -3 3; -3 3

[algebroid J]
kind = jacobi_extension
chart = plane
bivector = 0, 1; -1, 0

[algebroid CP]
kind = cotangent_poisson
chart = plane
bivector = 0, 1; -1, 0

[fibration F]
total = J
base = CP
pi = 0, 1, 0; 0, 0, 1
sigma = 0, 0; 1, 0; 0, 1
kernel_frame = 1, 0, 0

[cube sq]
algebroid = CP
source = tangent_lift_of
map = 0.9*t1, 0.9*t2
n = 2
N = 32

[task area]
kind = transgress
fibration = F
cube = sq
method = both
expect = 0.81
expect_tol = 1e-2
"""

BROKEN_SO3_CFG = """
[algebroid broken]
kind = lie_algebra
rank = 3
structure = 0 1: 0, 0, 1; 0 2: 0, -1, 0; 1 2: 1, 0, 0.25

[task check_broken]
kind = check
algebroid = broken
tol = 1e-8
"""

GROUP_CFG = """
[chart plane]
coords = x y
bounds = -3 3; -3 3

[algebroid J]
kind = jacobi_extension
chart = plane
bivector = 0, 1; -1, 0

[algebroid T]
kind = tangent
chart = plane

[cube s_small]
algebroid = T
source = tangent_lift_of
map = 0.6*t1, 0.6*t2
n = 2
N = 32

[cube s_big]
algebroid = T
source = tangent_lift_of
map = 1.2*t1, 0.6*t2
n = 2
N = 32

[task group]
kind = monodromy
algebroid = J
splitting = 0, 0; 0, 1; -1, 0
cubes = s_small s_big
labels = small big
expect = 0.36
expect_tol = 1e-3
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def load_report(out_dir, task):
    return json.loads((out_dir / f"{task}.json").read_text(encoding="utf-8"))


def test_run_writes_passing_report(tmp_path):
    cfg = write(tmp_path, AREA_CFG)
    out = tmp_path / "reports"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    report = load_report(out, "area")
    assert report["passed"] is True
    names = [c["name"] for c in report["checks"]]
    assert names == ["methods_agree", "expect"]
    assert all(c["passed"] for c in report["checks"])
    assert report["values"]["lift"]["N"] == 32
    assert len(report["config_hash"]) == 64
    assert report["wall_time_s"] >= 0.0


def test_describe_lists_entities_in_declaration_order(tmp_path, capsys):
    cfg = write(tmp_path, AREA_CFG)
    assert main(["describe", str(cfg)]) == 0
    lines = capsys.readouterr().out.splitlines()
    kinds = [line.split()[0] for line in lines[:-1]]
    assert kinds == ["chart", "algebroid", "algebroid", "fibration", "cube", "task"]
    assert "6 section(s), 1 task(s)" in lines[-1]


def test_describe_accepts_an_empty_config(tmp_path, capsys):
    cfg = write(tmp_path, "# nothing here\n")
    assert main(["describe", str(cfg)]) == 0
    assert "0 section(s), 0 task(s)" in capsys.readouterr().out


def test_parse_error_reports_the_line(tmp_path, capsys):
    cfg = write(tmp_path, "[chart c]\ncoords = x\nbounds = -1 1\nstray line\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "r")]) == 2
    assert "line 4" in capsys.readouterr().err


def test_undefined_reference_names_the_entity(tmp_path, capsys):
    cfg = write(tmp_path, "[task t]\nkind = check\nalgebroid = nowhere\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "r")]) == 2
    assert "undefined algebroid 'nowhere'" in capsys.readouterr().err


def test_failing_check_exits_one_and_keeps_the_witness(tmp_path):
    cfg = write(tmp_path, BROKEN_SO3_CFG)
    out = tmp_path / "reports"
    assert main(["run", str(cfg), "--out", str(out)]) == 1
    report = load_report(out, "check_broken")
    assert report["passed"] is False
    assert "jacobi defect" in report["values"]["witness"]


def test_overrides_apply_and_appear_in_the_echo(tmp_path):
    cfg = write(tmp_path, AREA_CFG)
    out = tmp_path / "reports"
    code = main(["run", str(cfg), "--set", "cube.sq.N=16", "--out", str(out)])
    assert code == 0
    report = load_report(out, "area")
    assert report["task"]["overrides"] == {"cube.sq.N": "16"}
    assert report["values"]["lift"]["N"] == 16


def test_override_of_unknown_key_fails_validation(tmp_path, capsys):
    cfg = write(tmp_path, AREA_CFG)
    code = main(["run", str(cfg), "--set", "task.area.bogus=1", "--out", str(tmp_path / "r")])
    assert code == 2
    assert "unknown key 'bogus'" in capsys.readouterr().err


def test_override_of_undefined_section_is_a_usage_error(tmp_path, capsys):
    cfg = write(tmp_path, AREA_CFG)
    code = main(["run", str(cfg), "--set", "cube.missing.N=16", "--out", str(tmp_path / "r")])
    assert code == 2
    assert "undefined cube 'missing'" in capsys.readouterr().err


def test_reports_are_deterministic_modulo_wall_time(tmp_path):
    cfg = write(tmp_path, AREA_CFG)
    texts = []
    for label in ("a", "b"):
        out = tmp_path / label
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        report = load_report(out, "area")
        report["wall_time_s"] = None
        texts.append(json.dumps(report, sort_keys=True))
    assert texts[0] == texts[1]


def test_monodromy_group_task_reports_the_generator(tmp_path):
    cfg = write(tmp_path, GROUP_CFG)
    out = tmp_path / "reports"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    report = load_report(out, "group")
    group = report["values"]["group"]
    assert group["labels"] == ["small", "big"]
    assert group["lattice_rank"] == 1
    assert group["discrete"] is True
    assert group["generator"] == pytest.approx(0.36, abs=1e-9)


def test_config_hash_tracks_overrides():
    sections = parse_config(AREA_CFG)
    plain = config_hash(sections, {})
    overrides = apply_overrides(sections, ["cube.sq.N=16"])
    assert config_hash(sections, overrides) != plain


def test_parser_rejects_duplicates():
    with pytest.raises(ConfigError, match="duplicate section"):
        parse_config("[chart c]\ncoords = x\n[chart c]\ncoords = y\n")
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config("[chart c]\ncoords = x\ncoords = y\n")


def test_module_entrypoint_runs(tmp_path):
    cfg = write(tmp_path, AREA_CFG)
    proc = subprocess.run(
        [sys.executable, "-m", "algebroids", "describe", str(cfg)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "fibration" in proc.stdout
