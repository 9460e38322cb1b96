from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from helixtorque import __version__
from helixtorque.cli import app
from helixtorque.errors import EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_ORACLE
from helixtorque.lifshitz import TorqueCurve, phi_grid
from helixtorque.oracle import OracleReport

runner = CliRunner()

ENERGY_LINE = re.compile(r"E/A = (\S+) J/m\^2")


def _write_config(directory: Path, **overrides) -> Path:
    slab = {"d_tot_m": 1e-6, "pitch_m": 3e-7, "handedness": "right", "dielectric": "example"}
    document = {
        "slabs": [slab, slab],
        "separations_um": [5.0],
        "phi_points": 8,
        "fourier_orders": 2,
        "quadrature": {"n_eta": 8, "n_krho": 8},
        "thermal": {"rel_tol": 1e-5},
        "logging": {"log_dir": str(directory / "logs")},
    }
    document.update(overrides)
    path = directory / "run.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def _energy(output: str) -> float:
    match = ENERGY_LINE.search(output)
    assert match, output
    return float(match.group(1))


def _csv_rows(path: Path) -> tuple[list[str], list[str], list[list[float]]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    meta = [line for line in lines if line.startswith("#")]
    body = [line for line in lines if not line.startswith("#")]
    return meta, body[0].split(","), [[float(v) for v in row.split(",")] for row in body[1:]]


@pytest.fixture
def config_path(tmp_path: Path) -> Path:
    return _write_config(tmp_path)


def test_version() -> None:
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert result.output.strip() == __version__


def test_energy_is_deterministic_and_periodic(config_path: Path) -> None:
    first = runner.invoke(app, ["energy", "-c", str(config_path), "--phi", "0"])
    second = runner.invoke(app, ["energy", "-c", str(config_path), "--phi", "0"])
    shifted = runner.invoke(app, ["energy", "-c", str(config_path), "--phi", str(math.pi)])
    assert first.exit_code == 0, first.output
    assert first.output == second.output
    assert _energy(shifted.output) == pytest.approx(_energy(first.output), rel=1e-12)
    assert "Matsubara terms" in first.output
    assert "radial tail bound" in first.output


def test_energy_of_vacuum_slabs(tmp_path: Path) -> None:
    slab = {"d_tot_m": 1e-6, "pitch_m": 3e-7, "dielectric": "vacuum"}
    path = _write_config(
        tmp_path,
        slabs=[slab, slab],
        dielectrics={"vacuum": {"label": "vacuum", "debye_static_x": 1.0, "debye_static_y": 1.0}},
    )
    result = runner.invoke(app, ["energy", "-c", str(path)])
    assert result.exit_code == 0, result.output
    assert abs(_energy(result.output)) < 1e-25


def test_energy_json_artifact(config_path: Path, tmp_path: Path) -> None:
    out = tmp_path / "energy.json"
    result = runner.invoke(app, ["energy", "-c", str(config_path), "--out", str(out)])
    assert result.exit_code == 0, result.output
    document = json.loads(out.read_text(encoding="utf-8"))
    assert document["metadata"]["code_version"] == __version__
    assert len(document["metadata"]["config_sha256"]) == 64
    assert document["data"]["separation_m"] == pytest.approx(5e-6)
    quadrature = document["data"]["quadrature"]
    assert (quadrature["n_krho"], quadrature["n_eta"]) == (8, 8)
    assert 0 <= quadrature["last_term_ratio"] < 1e-4
    assert quadrature["radial_cut_bound"] == pytest.approx(61 * math.exp(-60))


def test_torque_curve_csv(config_path: Path, tmp_path: Path) -> None:
    out = tmp_path / "curve.csv"
    args = ["torque-curve", "-c", str(config_path), "--out", str(out), "--threads", "2"]
    result = runner.invoke(app, args)
    assert result.exit_code == 0, result.output
    meta, header, rows = _csv_rows(out)
    assert header == ["phi_rad", "energy_J_per_m2", "torque_J_per_m2_rad"]
    assert len(rows) == 8
    assert any(line.startswith("# config_sha256: ") for line in meta)
    assert any(line.startswith("# config: {") for line in meta)

    first_bytes = out.read_bytes()
    assert runner.invoke(app, args).exit_code == 0
    assert out.read_bytes() == first_bytes


def test_torque_curve_json_respects_phi_points(config_path: Path, tmp_path: Path) -> None:
    out = tmp_path / "curve.json"
    result = runner.invoke(
        app, ["torque-curve", "-c", str(config_path), "--out", str(out), "--format", "json", "--phi-points", "10"]
    )
    assert result.exit_code == 0, result.output
    document = json.loads(out.read_text(encoding="utf-8"))
    assert len(document["data"]) == 10
    assert document["metadata"]["config"]["phi_points"] == 10


def test_fourier_of_injected_sine(config_path: Path, tmp_path: Path, monkeypatch) -> None:
    def fake_torque_curve(config, **kwargs) -> TorqueCurve:
        grid = phi_grid(config.quadrature.phi_points)
        return TorqueCurve(
            phi_grid=grid,
            energy=0.5 * np.cos(2 * grid),
            torque=np.sin(2 * grid),
            separation=config.separation,
        )

    monkeypatch.setattr("helixtorque.cli.torque_curve", fake_torque_curve)
    out = tmp_path / "fourier.csv"
    result = runner.invoke(app, ["fourier", "-c", str(config_path), "--out", str(out), "--orders", "3"])
    assert result.exit_code == 0, result.output
    _, header, rows = _csv_rows(out)
    assert header == ["m", "a_m", "b_m", "a_m_over_b1", "b_m_over_b1"]
    assert [row[0] for row in rows] == [1, 2, 3]
    assert rows[0][4] == pytest.approx(1.0)
    assert all(abs(row[4]) < 1e-12 and abs(row[3]) < 1e-12 for row in rows[1:])


def test_fourier_refuses_aliasing(config_path: Path) -> None:
    result = runner.invoke(app, ["fourier", "-c", str(config_path), "--orders", "4"])
    assert result.exit_code == EXIT_CONFIG


@pytest.mark.parametrize(
    "overrides",
    [
        {"separations_um": [5.0, 2.0]},
        {"separations_um": [0.0]},
        {"phi_points": 7},
        {"slabs": [{"d_tot_m": 1e-6, "pitch_m": 2e-6}, {"d_tot_m": 1e-6, "pitch_m": 3e-7}]},
        {"slabs": [{"d_tot_m": 1e-6, "pitch_m": 3e-7, "dielectric": "missing.json"}] * 2},
    ],
)
def test_invalid_configs_exit_with_config_code(tmp_path: Path, overrides: dict) -> None:
    path = _write_config(tmp_path, **overrides)
    result = runner.invoke(app, ["energy", "-c", str(path)])
    assert result.exit_code == EXIT_CONFIG, result.output


@pytest.mark.parametrize(
    ("name", "text"),
    [
        ("run.json", '{"slabs": ['),
        ("run.toml", "separations_um = [1.0\n"),
        ("run.json", "\ufeff{}"),
    ],
)
def test_malformed_config_file_exits_with_config_code(tmp_path: Path, name: str, text: str) -> None:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    result = runner.invoke(app, ["energy", "-c", str(path)])
    assert result.exit_code == EXIT_CONFIG, result.output
    assert "Traceback" not in result.output


def test_undecodable_config_file_exits_with_config_code(tmp_path: Path) -> None:
    path = tmp_path / "run.toml"
    path.write_bytes(b"\xff\xfe separations_um = [1.0]")
    result = runner.invoke(app, ["energy", "-c", str(path)])
    assert result.exit_code == EXIT_CONFIG, result.output


def test_unknown_format_is_a_config_error(config_path: Path, tmp_path: Path) -> None:
    result = runner.invoke(app, ["torque-curve", "-c", str(config_path), "--format", "xml"])
    assert result.exit_code == EXIT_CONFIG


def test_relative_dielectric_path(tmp_path: Path) -> None:
    model = {"label": "file model", "debye_static_x": 2.0, "debye_static_y": 2.6}
    (tmp_path / "models").mkdir()
    (tmp_path / "models" / "m.json").write_text(json.dumps(model), encoding="utf-8")
    slab = {"d_tot_m": 1e-6, "pitch_m": 3e-7, "dielectric": "models/m.json"}
    path = _write_config(tmp_path, slabs=[slab, slab])
    out = tmp_path / "e.json"
    result = runner.invoke(app, ["energy", "-c", str(path), "--out", str(out)])
    assert result.exit_code == 0, result.output
    resolved = json.loads(out.read_text(encoding="utf-8"))["metadata"]["config"]["slabs"][0]["dielectric"]
    assert resolved["label"] == "file model"


def test_unconverged_sum_exits_with_convergence_code(tmp_path: Path) -> None:
    path = _write_config(tmp_path, thermal={"max_terms": 1})
    result = runner.invoke(app, ["energy", "-c", str(path)])
    assert result.exit_code == EXIT_CONVERGENCE


def test_sweep_json(tmp_path: Path) -> None:
    out = tmp_path / "sweep.json"
    path = _write_config(tmp_path, sweep={"d_tot_m": [1e-6], "pairings": ["homochiral", "heterochiral"]})
    result = runner.invoke(app, ["sweep", "-c", str(path), "--out", str(out), "--format", "json"])
    assert result.exit_code == 0, result.output
    cases = json.loads(out.read_text(encoding="utf-8"))["data"]
    assert [c["pairing"] for c in cases] == ["homochiral", "heterochiral"]
    assert all(len(c["spectrum"]) == 2 for c in cases)


def test_oracle_check_writes_report(tmp_path: Path) -> None:
    weak = {"label": "weak", "debye_static_x": 2.0, "debye_static_y": 2.002}
    slab = {"d_tot_m": 1e-6, "pitch_m": 5e-7, "dielectric": weak}
    path = _write_config(tmp_path, slabs=[slab, slab])
    out = tmp_path / "oracle.json"
    args = ["oracle-check", "-c", str(path), "--resolution", "50", "--resolution", "100", "--out", str(out)]
    result = runner.invoke(app, args)
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text(encoding="utf-8"))["data"]
    assert report["resolutions"] == [50, 100]
    assert "slope" in report
    assert report["zero_twist_error"] < 1e-10


def test_oracle_failure_exit_code(config_path: Path, tmp_path: Path, monkeypatch) -> None:
    failing = OracleReport(
        resolutions=(100, 300),
        max_errors=(1e-2, 5e-3),
        successive_differences=(4e-3,),
        slope=0.6,
        zero_twist_error=0.0,
        tolerance=1e-3,
        failures=["staircase deviation too large"],
    )
    monkeypatch.setattr("helixtorque.cli.oracle_check", lambda *args, **kwargs: failing)
    result = runner.invoke(app, ["oracle-check", "-c", str(config_path), "--out", str(tmp_path / "o.json")])
    assert result.exit_code == EXIT_ORACLE


def test_run_log_records_events(config_path: Path, tmp_path: Path) -> None:
    log_dir = tmp_path / "custom-logs"
    result = runner.invoke(app, ["energy", "-c", str(config_path), "--log-dir", str(log_dir)])
    assert result.exit_code == 0, result.output
    events = [json.loads(line) for line in (log_dir / "htorque.jsonl").read_text(encoding="utf-8").splitlines()]
    assert events[0]["event"] == "run_started"
    assert events[-1]["event"] == "run_finished"
    assert all("timestamp" in e for e in events)
