import json

import pytest

from ltibound.cli import main
from ltibound.config import generator_to_dict

from conftest import appendix_system
from test_config import run_config_dict


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(run_config_dict()))
    return str(path)


def test_validate_run_config(config_path, capsys):
    assert main(["validate", "--config", config_path]) == 0
    out = capsys.readouterr().out
    assert "configuration ok" in out
    assert "rho(A_g)" in out


def test_validate_system_with_predictor(tmp_path, capsys):
    data = {
        "generator": generator_to_dict(appendix_system()),
        "predictor": {
            "A": [[0.1, 0.0], [0.0, 0.1]],
            "B": [[1.0], [0.0]],
            "C": [[1.0, 0.0]],
            "D": [[0.0]],
            "mode": "input-only",
        },
    }
    path = tmp_path / "system.json"
    path.write_text(json.dumps(data))
    assert main(["validate", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "system ok" in out
    assert "generalization loss" in out


def test_validate_unstable_generator(tmp_path, capsys):
    data = generator_to_dict(appendix_system())
    data["A_g"] = [[1.5, 0.0], [0.0, 0.1]]
    path = tmp_path / "bad_system.json"
    path.write_text(json.dumps(data))
    assert main(["validate", "--config", str(path)]) == 1


def test_validate_missing_and_malformed(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    assert main(["validate", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "error" in err


def test_certify_writes_artifacts(config_path, tmp_path, capsys):
    out_dir = tmp_path / "run"
    assert main(["certify", "--config", config_path, "--out-dir", str(out_dir)]) == 0
    out = capsys.readouterr().out
    assert "KL r_hat=" in out and "Renyi r_hat=" in out
    for name in ("bounds.csv", "certification.csv", "metadata.json"):
        assert (out_dir / name).is_file()
    assert any((out_dir / "chains").glob("*.csv"))
    meta = json.loads((out_dir / "metadata.json").read_text())
    assert meta["delta"] == 0.1


def test_certify_no_chains_single_mode(config_path, tmp_path, capsys):
    out_dir = tmp_path / "run2"
    code = main([
        "certify", "--config", config_path, "--out-dir", str(out_dir),
        "--mode", "input-only", "--no-chains",
    ])
    assert code == 0
    assert not (out_dir / "chains").exists()
    rows = (out_dir / "certification.csv").read_text().strip().splitlines()
    assert len(rows) == 3  # header + KL and Renyi rows for one mode x one N
    assert all(r.startswith("input-only,") for r in rows[1:])


def test_coverage_small_run(config_path, tmp_path, capsys):
    out_dir = tmp_path / "cov"
    code = main([
        "coverage", "--config", config_path, "--trials", "5", "--N", "50",
        "--seed", "3", "--mode", "input-only", "--out-dir", str(out_dir),
    ])
    out = capsys.readouterr().out
    assert "KL coverage" in out and "Renyi coverage" in out
    assert code in (0, 1)  # rate printed either way; tiny runs may miss nominal
    cov = (out_dir / "coverage_input-only.csv").read_text().strip().splitlines()
    assert len(cov) == 11  # header + 5 trials x {KL, Renyi}
    assert cov[0].startswith("trial,")


def test_reproduce_fig_with_custom_config(config_path, tmp_path, capsys):
    out_dir = tmp_path / "fig"
    code = main([
        "reproduce-fig1", "--config", config_path, "--out-dir", str(out_dir),
        "--mode", "input-only",
    ])
    assert code == 0
    lines = (out_dir / "fig1_data.csv").read_text().strip().splitlines()
    assert lines[0].startswith("mode,N,kl_posterior_empirical,")
    assert len(lines) == 2  # one mode x one N
    assert (out_dir / "plot_fig1.py").is_file()
    assert "figure data" in capsys.readouterr().out


def test_certify_rerun_is_byte_identical(config_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["certify", "--config", config_path, "--out-dir", str(a)]) == 0
    assert main(["certify", "--config", config_path, "--out-dir", str(b)]) == 0
    for name in ("bounds.csv", "certification.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    chains_a = sorted(p.name for p in (a / "chains").glob("*.csv"))
    assert chains_a == sorted(p.name for p in (b / "chains").glob("*.csv"))
    for name in chains_a:
        assert (a / "chains" / name).read_bytes() == (b / "chains" / name).read_bytes()
