"""Pipeline CLI: generate / train / refine / finalize / eval / export-viz.

Each stage consumes the previous stage's artifacts by path and writes a
manifest (inputs, config hash, outputs, all content-hashed) so runs can be
reproduced and compared byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import harness, tmr
from .config import ConfigError, PipelineConfig, load_config
from .features import FileFeatureProvider, OracleFeatureProvider
from .imaging import BinaryMask, ImageBuffer, read_mask, write_image, write_mask
from .optimizer import TrainingDiverged, tmp_masks_for_frames, train
from .splat import load_cloud, render, save_cloud
from .tmp import TmpModel, residual_map, save_tmp


class MissingStageArtifact(FileNotFoundError):
    def __init__(self, stage: str, path):
        super().__init__(f"missing artifact from stage '{stage}': {path}")
        self.stage = stage


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_tree(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = _sha256(p)
    return out


def _write_manifest(out_dir: Path, stage: str, config_hash: str, inputs: dict) -> None:
    manifest = {
        "stage": stage,
        "config_hash": config_hash,
        "inputs": inputs,
        "outputs": {
            rel: digest
            for rel, digest in _hash_tree(out_dir).items()
            if rel != "manifest.json"
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingStageArtifact(stage, path)
    return path


def _load_pipeline_inputs(data_dir: Path, cfg: PipelineConfig):
    seq, aux = harness.load_dataset(data_dir)
    if cfg.features.provider == "oracle":
        provider = OracleFeatureProvider(
            n_classes=aux.n_classes, dim=cfg.features.dim, sigma=cfg.features.sigma,
            patch_size=cfg.features.patch_size, seed=cfg.seed,
        )
    else:
        files_dir = Path(cfg.features.files_dir)
        _require(files_dir, "feature export")
        provider = FileFeatureProvider(files_dir, cfg.features.patch_size)
    return seq, aux, provider


def _segmenter_for(cfg: PipelineConfig, seq):
    if cfg.segmenter == "identity":
        return tmr.IdentitySegmenter()
    maps = {}
    for slot, frame in enumerate(seq.train_frames()):
        if frame.instance_map is None:
            raise ConfigError("oracle segmenter needs id maps in the dataset")
        maps[slot] = frame.instance_map
    return tmr.OracleSegmenter(maps)


def _run(stage_fn, *args, **kwargs):
    try:
        stage_fn(*args, **kwargs)
    except (ConfigError, MissingStageArtifact, TrainingDiverged,
            harness.InvalidSceneSpec, FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@click.group()
def main():
    """Static-scene reconstruction pipeline over transient-polluted captures."""


@main.command()
@click.option("--spec", "archetype", required=True, type=click.Choice(harness.ARCHETYPES))
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--frames", default=60, show_default=True, type=int)
@click.option("--size", default=64, show_default=True, type=int, help="square frame edge in px")
@click.option("--test-every", default=8, show_default=True, type=int)
@click.option("--halt-start", default=26, show_default=True, type=int)
@click.option("--halt-len", default=8, show_default=True, type=int)
def generate(archetype, seed, out_dir, frames, size, test_every, halt_start, halt_len):
    """Write a synthetic dataset for one scene archetype."""

    def go():
        spec = harness.SceneSpec(
            archetype=archetype, n_frames=frames, width=size, height=size,
            test_every=test_every, halt_start=halt_start, halt_len=halt_len,
        )
        out_dir.mkdir(parents=True, exist_ok=True)
        meta, seq = harness.generate_scene(spec, seed)
        harness.save_dataset(meta, seq, out_dir)
        args_hash = hashlib.sha256(json.dumps(
            {"spec": spec.__dict__, "seed": seed}, sort_keys=True).encode()).hexdigest()
        _write_manifest(out_dir, "generate", args_hash, {})
        click.echo(f"dataset written to {out_dir}")

    _run(go)


@main.command(name="train")
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def train_cmd(data_dir, config_path, out_dir):
    """Stage 1: joint splat + mask-predictor training up to the propagation
    iteration; snapshots the cloud, the predictor, and its per-frame masks."""

    def go():
        cfg = load_config(config_path)
        _require(data_dir / "poses.txt", "generate")
        seq, aux, provider = _load_pipeline_inputs(data_dir, cfg)
        cloud = aux.load_init_cloud()
        out_dir.mkdir(parents=True, exist_ok=True)
        tmp_model = TmpModel.zeros(cfg.features.dim)
        train(
            seq, cloud, cfg.train,
            tmp_model=tmp_model, tmp_schedule=cfg.tmp, provider=provider,
            iterations=cfg.train.propagation_iteration,
            log_path=out_dir / "train_log.jsonl", checkpoint_dir=out_dir,
        )
        save_cloud(cloud, out_dir / "checkpoint.bin")
        save_tmp(tmp_model, out_dir / "tmp.bin")
        masks_dir = out_dir / "tmp_masks"
        masks_dir.mkdir(exist_ok=True)
        masks = tmp_masks_for_frames(tmp_model, provider, seq.train_frames(), cfg.tmp.dilate_patches)
        for idx, m in masks.items():
            write_mask(m, masks_dir / f"{idx:05d}.png")
        _write_manifest(out_dir, "train", cfg.hash(), {"dataset": _hash_tree(data_dir)})
        click.echo(f"stage-1 artifacts written to {out_dir}")

    _run(go)


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
@click.option("--stage1", "stage1_dir", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def refine(data_dir, stage1_dir, config_path, out_dir):
    """Refine and propagate the stage-1 masks into per-object video masks,
    filter unstable objects, and write the per-frame final masks."""

    def go():
        cfg = load_config(config_path)
        _require(data_dir / "poses.txt", "generate")
        checkpoint = _require(stage1_dir / "checkpoint.bin", "train")
        _require(stage1_dir / "tmp_masks", "train")
        seq, aux, _provider = _load_pipeline_inputs(data_dir, cfg)
        cloud = load_cloud(checkpoint)
        segmenter = _segmenter_for(cfg, seq)

        train_frames = seq.train_frames()
        tmp_masks = []
        residuals = []
        for frame in train_frames:
            mask_path = stage1_dir / "tmp_masks" / f"{frame.index:05d}.png"
            tmp_masks.append(read_mask(_require(mask_path, "train")))
            out = render(cloud, frame.camera)
            residuals.append(residual_map(frame.image, out.color))

        kept, objects, finals = tmr.refine_sequence(tmp_masks, residuals, segmenter, cfg.tmr)
        out_dir.mkdir(parents=True, exist_ok=True)
        slot_to_index = [f.index for f in train_frames]
        tmr.dump_tracked_objects(objects, out_dir, slot_to_index)
        finals_dir = out_dir / "final_masks"
        finals_dir.mkdir(exist_ok=True)
        for slot, mask in enumerate(finals):
            write_mask(mask, finals_dir / f"{slot_to_index[slot]:05d}.png")
        summary = {
            "objects": len(objects),
            "kept": sorted(o.label for o in kept),
            "filtered": sorted(o.label for o in objects if o.label not in {k.label for k in kept}),
        }
        (out_dir / "refine_summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
        _write_manifest(out_dir, "refine", cfg.hash(), {
            "dataset": _hash_tree(data_dir), "stage1": _hash_tree(stage1_dir),
        })
        click.echo(f"refined masks written to {out_dir}")

    _run(go)


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
@click.option("--masks", "masks_dir", required=True, type=click.Path(path_type=Path),
              help="directory of per-frame mask PNGs (refine output or stage-1 tmp_masks)")
@click.option("--config", "config_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def finalize(data_dir, masks_dir, config_path, out_dir):
    """Stage 2: fresh masked training from the initialization cloud using the
    supplied per-frame masks."""

    def go():
        cfg = load_config(config_path)
        _require(data_dir / "poses.txt", "generate")
        _require(masks_dir, "refine")
        seq, aux, _provider = _load_pipeline_inputs(data_dir, cfg)
        cloud = aux.load_init_cloud()
        masks = {}
        for frame in seq.train_frames():
            p = masks_dir / f"{frame.index:05d}.png"
            masks[frame.index] = read_mask(p) if p.exists() else BinaryMask.empty(
                frame.image.width, frame.image.height)
        out_dir.mkdir(parents=True, exist_ok=True)
        train(
            seq, cloud, cfg.train, masks=masks,
            log_path=out_dir / "train_log.jsonl", checkpoint_dir=out_dir,
        )
        save_cloud(cloud, out_dir / "checkpoint.bin")
        _write_manifest(out_dir, "finalize", cfg.hash(), {
            "dataset": _hash_tree(data_dir), "masks": _hash_tree(masks_dir),
        })
        click.echo(f"final checkpoint written to {out_dir}")

    _run(go)


@main.command(name="eval")
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(path_type=Path))
@click.option("--masks", "masks_dir", default=None, type=click.Path(path_type=Path),
              help="optional predicted-mask directory for mask metrics")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def eval_cmd(data_dir, checkpoint_path, masks_dir, out_dir):
    """Held-out view quality (PSNR/SSIM), plus mask metrics when masks are given."""

    def go():
        _require(data_dir / "poses.txt", "generate")
        cloud = load_cloud(_require(checkpoint_path, "finalize"))
        seq, _aux = harness.load_dataset(data_dir)
        report = {"image": harness.evaluate(cloud, seq)}
        if masks_dir is not None:
            preds = {}
            for frame in seq.train_frames():
                p = Path(masks_dir) / f"{frame.index:05d}.png"
                if p.exists():
                    preds[frame.index] = read_mask(p)
            report["masks"] = harness.mask_eval(preds, seq)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
        _write_manifest(out_dir, "eval", "-", {
            "dataset": _hash_tree(data_dir), "checkpoint": _sha256(checkpoint_path),
        })
        click.echo(f"mean PSNR {report['image']['psnr_mean']:.2f} dB, "
                   f"mean SSIM {report['image']['ssim_mean']:.4f}")

    _run(go)


@main.command(name="export-viz")
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
@click.option("--masks", "masks_dir", required=True, type=click.Path(path_type=Path))
@click.option("--checkpoint", "checkpoint_path", default=None, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def export_viz(data_dir, masks_dir, checkpoint_path, out_dir):
    """Mask overlays (transients tinted green) and, with a checkpoint,
    residual heatmaps."""

    def go():
        _require(data_dir / "poses.txt", "generate")
        _require(masks_dir, "refine")
        seq, _aux = harness.load_dataset(data_dir)
        cloud = load_cloud(checkpoint_path) if checkpoint_path else None
        out_dir.mkdir(parents=True, exist_ok=True)
        overlay_dir = out_dir / "overlay"
        overlay_dir.mkdir(exist_ok=True)
        residual_dir = out_dir / "residual"
        if cloud is not None:
            residual_dir.mkdir(exist_ok=True)
        for frame in seq.train_frames():
            p = Path(masks_dir) / f"{frame.index:05d}.png"
            if not p.exists():
                continue
            mask = read_mask(p)
            tinted = frame.image.data.copy()
            sel = mask.bits
            tinted[sel] = 0.45 * tinted[sel] + 0.55 * np.array([0.1, 0.9, 0.2])
            write_image(ImageBuffer(tinted), overlay_dir / f"{frame.index:05d}.png")
            if cloud is not None:
                out = render(cloud, frame.camera)
                r = residual_map(frame.image, out.color)
                heat = np.stack([r, 0.15 * r, 1.0 - r], axis=2)
                write_image(ImageBuffer(np.clip(heat, 0, 1)), residual_dir / f"{frame.index:05d}.png")
        _write_manifest(out_dir, "export-viz", "-", {
            "dataset": _hash_tree(data_dir), "masks": _hash_tree(Path(masks_dir)),
        })
        click.echo(f"visualizations written to {out_dir}")

    _run(go)


if __name__ == "__main__":
    main()
