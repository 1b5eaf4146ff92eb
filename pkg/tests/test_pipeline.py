import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from wavecip.cli import main as cli_main
from wavecip.pipeline import (
    DEFAULT_CONFIG,
    config_hash,
    detector_grid,
    inversion_grids,
    load_config,
    resolve_scene,
    run_pipeline,
    scatter_geometry,
    stage_invert,
    stage_preprocess,
    stage_simulate,
)
from wavecip.validation import ValidationError

# A deliberately tiny world: physics quality is irrelevant here, only the
# plumbing (stage handoff, determinism, CLI) is under test.
TINY = {
    "seed": 7,
    "scene": "dielectric-cube",
    "scene_params": {"epsilon": 4.0, "side": 0.08},
    "acquisition": {
        "lateral_halfwidth": 0.2,
        "detector_halfwidth": 0.14,
        "spacing": 0.02,
        "detector_spacing": 0.02,
        "omega": 30.0,
        "bottom_z": -0.36,
    },
    "inversion": {
        "omega_box": [[-0.14, -0.14, -0.1], [0.14, 0.14, 0.04]],
        "sim_box": [[-0.2, -0.2, -0.16], [0.2, 0.2, 0.1]],
        "s_min": 9.8,
        "s_max": 10.0,
    },
}


def artifact_hashes(outdir):
    hashes = {}
    for path in sorted(Path(outdir).rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            hashes[str(path.relative_to(outdir))] = hashlib.sha256(
                path.read_bytes()
            ).hexdigest()
    return hashes


class TestConfig:
    def test_defaults_loaded(self):
        cfg = load_config()
        assert cfg["inversion"]["s_step"] == 0.05
        assert cfg["inversion"]["carleman_lambda"] == 20.0
        assert cfg["inversion"]["eta"] == 1e-6

    def test_yaml_merge(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"seed": 42, "inversion": {"mode": "test2"}}))
        cfg = load_config(path)
        assert cfg["seed"] == 42
        assert cfg["inversion"]["mode"] == "test2"
        assert cfg["inversion"]["s_min"] == 8.0  # untouched default

    def test_config_hash_stable_and_sensitive(self):
        a = load_config()
        b = load_config()
        assert config_hash(a) == config_hash(b)
        b["seed"] += 1
        assert config_hash(a) != config_hash(b)

    def test_unknown_scene_rejected(self):
        cfg = load_config(overrides={"scene": "flying-saucer"})
        with pytest.raises(ValidationError):
            resolve_scene(cfg)

    def test_geometry_corridor(self):
        cfg = load_config(overrides=TINY)
        geom = scatter_geometry(cfg)
        assert geom.direct_arrival == pytest.approx(0.1)
        # earliest echo: direct + 2 * (0.8 - 0.04) minus the margin
        assert geom.exclusion_end == pytest.approx(0.1 + 1.52 - 0.05)
        assert geom.latest_arrival == pytest.approx(
            0.1 + 2 * 0.9 + geom.pulse_period + 0.05
        )

    def test_detector_grid_spacing(self):
        cfg = load_config()
        det = detector_grid(cfg)
        assert det.spacing == (0.02, 0.02)
        assert det.counts == (51, 51)
        omega, sim = inversion_grids(cfg)
        assert omega.counts == (51, 51, 8)
        assert sim.counts == (57, 57, 14)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("tiny_run")
    cfg = load_config(overrides=TINY)
    run_pipeline("full", cfg, outdir)
    return outdir, cfg


class TestStages:
    def test_artifacts_exist(self, tiny_run):
        outdir, _ = tiny_run
        for rel in (
            "manifest.json",
            "simulate/target_raw.trcb",
            "simulate/incident.trcb",
            "simulate/epsilon_true.vtk",
            "simulate/scene.json",
            "preprocess/psi_prop.csv",
            "preprocess/gamma_t.csv",
            "preprocess/calibration.json",
            "preprocess/summary.json",
            "invert/epsilon_rec.vtk",
            "invert/norms.csv",
            "invert/summary.json",
            "invert/plots/d_first.csv",
        ):
            assert (outdir / rel).exists(), rel

    def test_manifest_complete(self, tiny_run):
        outdir, cfg = tiny_run
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert manifest["status"] == "complete"
        assert manifest["config_hash"] == config_hash(cfg)
        assert set(manifest["stages"]) == {"simulate", "preprocess", "invert"}

    def test_invert_rerun_is_bitwise_identical(self, tiny_run, tmp_path):
        outdir, cfg = tiny_run
        before = artifact_hashes(outdir / "invert")
        stage_invert(cfg, outdir)
        after = artifact_hashes(outdir / "invert")
        assert before == after

    def test_determinism_across_runs(self, tiny_run, tmp_path):
        outdir, cfg = tiny_run
        second = tmp_path / "again"
        run_pipeline("full", cfg, second)
        assert artifact_hashes(outdir) == artifact_hashes(second)

    def test_seed_changes_artifacts(self, tiny_run, tmp_path):
        outdir, cfg = tiny_run
        other = dict(cfg)
        other = json.loads(json.dumps(cfg))
        other["seed"] = 8
        second = tmp_path / "seeded"
        run_pipeline("full", other, second)
        raw = "simulate/target_raw.trcb"
        assert artifact_hashes(outdir)[raw] != artifact_hashes(second)[raw]


class TestCLI:
    def test_full_command(self, tmp_path):
        cfg_path = tmp_path / "tiny.yaml"
        cfg_path.write_text(yaml.safe_dump(TINY))
        out = tmp_path / "run"
        code = cli_main(["full", "--config", str(cfg_path), "--out", str(out)])
        assert code == 0
        assert (out / "invert" / "summary.json").exists()

    def test_bad_command_order_fails_cleanly(self, tmp_path):
        cfg_path = tmp_path / "tiny.yaml"
        cfg_path.write_text(yaml.safe_dump(TINY))
        out = tmp_path / "empty"
        code = cli_main(["invert", "--config", str(cfg_path), "--out", str(out)])
        assert code == 1  # nothing to invert: preprocess artifacts missing
