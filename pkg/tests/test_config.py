from __future__ import annotations

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from helixtorque.cholesteric import Handedness
from helixtorque.config import RunConfig, SlabConfig, load_config
from helixtorque.errors import ConfigError
from helixtorque.media import DielectricModel

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SLAB = {"d_tot_m": 2e-6, "pitch_m": 3e-7}


def _run_config(**overrides) -> RunConfig:
    return RunConfig.model_validate({"slabs": [SLAB, SLAB], **overrides})


@pytest.mark.parametrize("name", ["homochiral_1um.json", "homochiral_5um.json", "heterochiral_5um.json", "sweep.json", "oracle.toml"])
def test_shipped_configs_load(name: str) -> None:
    cfg = load_config(CONFIGS / name)
    assert all(isinstance(s.dielectric, DielectricModel) for s in cfg.slabs)
    interaction = cfg.to_interaction()
    assert interaction.separation == pytest.approx(cfg.separations_m[0])
    assert interaction.quadrature.phi_points == cfg.phi_points


def test_heterochiral_config_flips_second_slab() -> None:
    interaction = load_config(CONFIGS / "heterochiral_5um.json").to_interaction()
    assert interaction.slab2.handedness is interaction.slab1.handedness.flipped()


def test_toml_and_json_agree(tmp_path: Path) -> None:
    (tmp_path / "run.json").write_text(json.dumps({"slabs": [SLAB, SLAB], "separations_um": [1.5]}), encoding="utf-8")
    (tmp_path / "run.toml").write_text(
        "separations_um = [1.5]\n"
        "[[slabs]]\nd_tot_m = 2e-6\npitch_m = 3e-7\n"
        "[[slabs]]\nd_tot_m = 2e-6\npitch_m = 3e-7\n",
        encoding="utf-8",
    )
    assert load_config(tmp_path / "run.json").to_document() == load_config(tmp_path / "run.toml").to_document()


def test_unsupported_suffix(tmp_path: Path) -> None:
    path = tmp_path / "run.yaml"
    path.write_text("slabs: []\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_dielectric_references(tmp_path: Path) -> None:
    model = DielectricModel.constant(2.0, 2.5, label="from file")
    (tmp_path / "m.json").write_text(json.dumps(model.to_document()), encoding="utf-8")
    document = {
        "slabs": [{**SLAB, "dielectric": "m.json"}, {**SLAB, "dielectric": "named"}],
        "dielectrics": {"named": {"label": "named", "debye_static_x": 1.5, "debye_static_y": 1.8}},
    }
    (tmp_path / "run.json").write_text(json.dumps(document), encoding="utf-8")
    cfg = load_config(tmp_path / "run.json")
    assert cfg.slabs[0].dielectric.label == "from file"
    assert cfg.slabs[1].dielectric.debye_static_y == 1.8


def test_missing_dielectric_file(tmp_path: Path) -> None:
    cfg = _run_config()
    broken = cfg.slabs[0].model_copy(update={"dielectric": "nowhere.json"})
    with pytest.raises(ConfigError, match="not found"):
        cfg.model_copy(update={"slabs": (broken, broken)}).resolved(tmp_path)


def test_unresolved_slab_cannot_build() -> None:
    with pytest.raises(ConfigError):
        SlabConfig(d_tot_m=2e-6, pitch_m=3e-7, dielectric="elsewhere").to_slab()


@pytest.mark.parametrize(
    "overrides",
    [
        {"separations_um": [2.0, 1.0]},
        {"separations_um": [1.0, 1.0]},
        {"separations_um": []},
        {"phi_points": 6},
        {"phi_points": 33},
        {"phi_points": 8, "fourier_orders": 4},
        {"gap_eps": 0.5},
        {"oracle": {"resolutions": [100]}},
        {"output": {"format": "xlsx"}},
    ],
)
def test_rejected_settings(overrides: dict) -> None:
    with pytest.raises(ValidationError):
        _run_config(**overrides)


def test_overrides_revalidate() -> None:
    cfg = _run_config(phi_points=16, fourier_orders=3)
    assert cfg.with_overrides(phi_points=64).phi_points == 64
    with pytest.raises(ValidationError):
        cfg.with_overrides(fourier_orders=8)


def test_oracle_resolutions_are_sorted() -> None:
    assert _run_config(oracle={"resolutions": [1000, 100, 300]}).oracle.resolutions == (100, 300, 1000)


def test_sweep_cases_cover_the_grid() -> None:
    cfg = _run_config(separations_um=[1.0, 2.0, 5.0], sweep={"d_tot_m": [1e-6, 5e-6]}).resolved(Path("."))
    cases = cfg.sweep_cases()
    assert len(cases) == 3 * 2 * 2
    assert cases[0].separation == pytest.approx(1e-6)
    assert {c.pairing for c in cases} == {"homochiral", "heterochiral"}
    assert len({c.label for c in cases}) == len(cases)


def test_sweep_defaults_to_configured_thickness() -> None:
    cases = _run_config(sweep={"pairings": ["homochiral"]}).sweep_cases()
    assert [(c.d_tot, c.pairing) for c in cases] == [(2e-6, "homochiral")]


def test_pairing_and_handedness() -> None:
    slab = {**SLAB, "handedness": "left"}
    cfg = _run_config(slabs=[slab, slab], pairing="heterochiral").resolved(Path("."))
    interaction = cfg.to_interaction(separation_m=3e-6)
    assert interaction.slab1.handedness is Handedness.LEFT
    assert interaction.slab2.handedness is Handedness.RIGHT
    assert interaction.separation == 3e-6
