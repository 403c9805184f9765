import json

import pytest

from plaprobin.cli import ConfigError, main, parse_config
from plaprobin.geometry import mesh_polygon, unit_square, write_mesh


def run(tmp_path, command, text, *extra):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(text)
    out = tmp_path / "out"
    return main([command, "--config", str(cfg), "--out", str(out), *extra]), out


def test_parse_config_comments_and_values():
    cfg = parse_config("# header\np = 2, 3  # two values\n\nbeta=0.5\n")
    assert cfg == {"p": "2, 3", "beta": "0.5"}


@pytest.mark.parametrize("text", ["colour = red\n", "p = 2\np = 3\n", "no equals sign\n"])
def test_parse_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_solve_writes_files(tmp_path):
    code, out = run(tmp_path, "solve", "domain = square\np = 2\nf = 1\n", "--h", "0.1")
    assert code == 0
    for name in ("mesh.txt", "solution.txt", "stats.json"):
        assert (out / name).exists()
    assert json.loads((out / "stats.json").read_text())["stats"]["converged"]


def test_invalid_p_exit_1(tmp_path):
    code, _ = run(tmp_path, "solve", "domain = square\np = 0.5\n", "--h", "0.2")
    assert code == 1


def test_unknown_key_exit_1(tmp_path):
    code, _ = run(tmp_path, "solve", "domain = square\nshape = round\n", "--h", "0.2")
    assert code == 1


def test_forced_non_convergence_exit_2(tmp_path):
    code, out = run(tmp_path, "solve", "domain = square\np = 4\nmax_outer = 1\n", "--h", "0.1")
    assert code == 2
    assert (out / "solution.txt").exists()


def test_corrupted_mesh_exit_1(tmp_path):
    mesh_file = tmp_path / "bad_mesh.txt"
    write_mesh(mesh_polygon(unit_square(), 0.5), mesh_file)
    lines = mesh_file.read_text().splitlines()
    mesh_file.write_text("\n".join(lines[:-3]) + "\n")
    code, _ = run(tmp_path, "compare", f"mesh = {mesh_file}\ndomain = square\n", "--h", "0.5")
    assert code == 1


def test_compare_disk_symmetry_case(tmp_path):
    code, out = run(tmp_path, "compare", "domain = disk\np = 2\nbeta = 1\n", "--suite", "theorem1", "--h", "0.1")
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["header"]["suite"] == "theorem1"
    assert all(c["pass"] for r in doc["reports"] for c in r["checks"])


def test_compare_is_deterministic(tmp_path):
    text = "domain = square\np = 2, 3\nbeta = 1\n"
    reports = []
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        code, out = run(tmp_path / sub, "compare", text, "--suite", "all", "--h", "0.1")
        assert code == 0
        reports.append((out / "report.json").read_bytes())
    assert reports[0] == reports[1]
    assert (out / "square_p2_beta1_levels.csv").exists()


def test_compare_two_balls(tmp_path):
    code, out = run(tmp_path, "compare", "domain = two_balls\nr = 0.3\np = 2\nbeta = 0.5\nk_grid = 1\n",
                    "--suite", "theorem1")
    assert code == 0
    checks = json.loads((out / "report.json").read_text())["reports"][0]["checks"]
    assert len(checks) == 2 and all(c["margin"] > 0 for c in checks)


def test_eigen_disk(tmp_path):
    code, out = run(tmp_path, "eigen", "domain = disk\np = 2\nbeta = 1\n", "--h", "0.1")
    assert code == 0
    checks = json.loads((out / "eigen.json").read_text())["reports"][0]["checks"]
    assert abs(checks[0]["lhs"] - 1.577) < 1e-2
    assert (out / "eigenfunction.txt").exists()


def test_eigen_faber_krahn_refused_below_n(tmp_path, capsys):
    code, _ = run(tmp_path, "eigen", "domain = square\np = 1.5\nfaber_krahn = true\n", "--h", "0.2")
    assert code == 1
    assert "p >= n" in capsys.readouterr().err


def test_examples(tmp_path):
    code, out = run(tmp_path, "examples", "")
    assert code == 0
    names = [c["name"] for c in json.loads((out / "examples.json").read_text())["reports"][0]["checks"]]
    assert any(n.startswith("sup-norm") for n in names)
    assert any(n.startswith("lp gap") for n in names)
