import json

import pytest
from click.testing import CliRunner

from stillsplat.cli import main
from stillsplat.config import ConfigError, load_config


FAST_CONFIG = """\
seed: 5
segmenter: oracle
features:
  provider: oracle
  dim: 16
  sigma: 0.05
  patch_size: 4
train:
  total_iterations: 60
  propagation_iteration: 40
  depth_loss_start: 10
  opacity_reset_interval: 0
  checkpoint_interval: 0
tmp:
  start_iteration: 5
tmr:
  memory: 10
"""


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = root / "config.yaml"
    cfg.write_text(FAST_CONFIG)
    runner = CliRunner()
    data = root / "data"
    res = runner.invoke(main, [
        "generate", "--spec", "transient", "--seed", "5", "--out", str(data),
        "--frames", "16", "--size", "32", "--test-every", "8",
    ])
    assert res.exit_code == 0, res.output
    return root, cfg, data, runner


class TestHelp:
    @pytest.mark.parametrize("cmd", ["generate", "train", "refine", "finalize", "eval", "export-viz"])
    def test_every_subcommand_has_help(self, cmd):
        res = CliRunner().invoke(main, [cmd, "--help"])
        assert res.exit_code == 0
        assert "--help" in res.output or "Usage" in res.output


class TestStages:
    def test_full_stage_chain(self, pipeline_dirs):
        root, cfg, data, runner = pipeline_dirs
        stage1 = root / "stage1"
        res = runner.invoke(main, ["train", "--data", str(data), "--config", str(cfg), "--out", str(stage1)])
        assert res.exit_code == 0, res.output
        assert (stage1 / "checkpoint.bin").exists()
        assert (stage1 / "tmp.bin").exists()
        assert (stage1 / "manifest.json").exists()
        assert list((stage1 / "tmp_masks").glob("*.png"))

        refined = root / "refined"
        res = runner.invoke(main, ["refine", "--data", str(data), "--stage1", str(stage1),
                                   "--config", str(cfg), "--out", str(refined)])
        assert res.exit_code == 0, res.output
        assert (refined / "final_masks").is_dir()
        assert (refined / "objects.txt").exists()

        final = root / "final"
        res = runner.invoke(main, ["finalize", "--data", str(data), "--masks", str(refined / "final_masks"),
                                   "--config", str(cfg), "--out", str(final)])
        assert res.exit_code == 0, res.output
        assert (final / "checkpoint.bin").exists()

        evald = root / "eval"
        res = runner.invoke(main, ["eval", "--data", str(data), "--checkpoint", str(final / "checkpoint.bin"),
                                   "--out", str(evald)])
        assert res.exit_code == 0, res.output
        report = json.loads((evald / "report.json").read_text())
        assert "psnr_mean" in report["image"]

        viz = root / "viz"
        res = runner.invoke(main, ["export-viz", "--data", str(data), "--masks", str(refined / "final_masks"),
                                   "--checkpoint", str(final / "checkpoint.bin"), "--out", str(viz)])
        assert res.exit_code == 0, res.output
        assert list((viz / "overlay").glob("*.png"))
        assert list((viz / "residual").glob("*.png"))

    def test_manifest_records_config_hash_and_outputs(self, pipeline_dirs):
        root, cfg, data, runner = pipeline_dirs
        manifest = json.loads((root / "stage1" / "manifest.json").read_text())
        assert manifest["stage"] == "train"
        assert manifest["config_hash"] == load_config(cfg).hash()
        assert "checkpoint.bin" in manifest["outputs"]

    def test_missing_upstream_artifact_names_stage(self, pipeline_dirs, tmp_path):
        root, cfg, data, runner = pipeline_dirs
        res = runner.invoke(main, ["refine", "--data", str(data), "--stage1", str(tmp_path / "nowhere"),
                                   "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert res.exit_code == 1
        assert "train" in res.output  # the absent stage is identified

    def test_eval_ground_truth_cloud_hits_cap(self, pipeline_dirs, tmp_path):
        root, cfg, data, runner = pipeline_dirs
        from stillsplat.harness import SceneSpec, generate_scene
        from stillsplat.splat import save_cloud

        meta, _ = generate_scene(SceneSpec("transient", n_frames=16, width=32, height=32,
                                           test_every=8), 5)
        ck = tmp_path / "gt.bin"
        save_cloud(meta.static_cloud, ck)
        out = tmp_path / "evalgt"
        res = runner.invoke(main, ["eval", "--data", str(data), "--checkpoint", str(ck), "--out", str(out)])
        assert res.exit_code == 0, res.output
        report = json.loads((out / "report.json").read_text())
        # float32 checkpoint + 8-bit frames bound it below the 99 dB cap
        assert report["image"]["psnr_mean"] > 45.0


class TestConfig:
    def test_unknown_keys_rejected(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("seed: 1\nbogus_section: {}\n")
        with pytest.raises(ConfigError, match="bogus_section"):
            load_config(bad)

    def test_unknown_nested_key_rejected(self, tmp_path):
        bad = tmp_path / "bad2.yaml"
        bad.write_text("train:\n  warp_speed: 9\n")
        with pytest.raises(ConfigError, match="warp_speed"):
            load_config(bad)

    def test_parse_error_cites_line(self, tmp_path):
        bad = tmp_path / "broken.yaml"
        bad.write_text("seed: 1\ntrain: [unclosed\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(bad)

    def test_files_provider_requires_consistency_off(self, tmp_path):
        bad = tmp_path / "files.yaml"
        bad.write_text("features:\n  provider: files\n  files_dir: /tmp/x\n")
        with pytest.raises(ConfigError, match="consistency"):
            load_config(bad)

    def test_defaults_load_from_empty(self, tmp_path):
        empty = tmp_path / "empty.yaml"
        empty.write_text("")
        cfg = load_config(empty)
        assert cfg.train.total_iterations == 30000
        assert cfg.train.propagation_iteration == 7000
        assert cfg.tmp.start_iteration == 500
        assert cfg.tmp.pause_after_reset == 250
        assert cfg.tmp.learning_rate == pytest.approx(1e-3)
        assert cfg.tmp.lambda_prior == pytest.approx(0.1)
        assert cfg.tmr.cov_ref == pytest.approx(0.7)
        assert cfg.tmr.cov_val == pytest.approx(0.7)
        assert cfg.tmr.memory == 10
        assert cfg.tmr.merge_iou == pytest.approx(0.9)
        assert cfg.tmr.sr_threshold == pytest.approx(0.08)
        assert cfg.tmr.dilation_iters == 5
        assert cfg.tmr.max_prompt_points == 10

    def test_hash_stable_and_sensitive(self, tmp_path):
        a = tmp_path / "a.yaml"
        a.write_text("seed: 1\n")
        b = tmp_path / "b.yaml"
        b.write_text("seed: 2\n")
        assert load_config(a).hash() == load_config(a).hash()
        assert load_config(a).hash() != load_config(b).hash()
