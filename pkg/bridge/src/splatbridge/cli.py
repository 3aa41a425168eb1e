"""Export CLI: run a featurizer or segmenter over a frame directory."""
from __future__ import annotations

import sys
from pathlib import Path

import click

from .export import export_features, export_point_segmentations
from .models import ModelLoadError, load_featurizer, load_segmenter


@click.group()
def main():
    """Bridge pretrained vision models to the reconstruction pipeline's files."""


@main.command()
@click.option("--frames", "frames_dir", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--model", default="random-projection", show_default=True,
              type=click.Choice(["random-projection", "dinov2"]))
@click.option("--dim", default=64, show_default=True, help="random-projection output width")
def features(frames_dir, out_dir, model, dim):
    """Write one TFEA feature file per frame."""
    try:
        kw = {"dim": dim} if model == "random-projection" else {}
        manifest = export_features(frames_dir, out_dir, load_featurizer(model, **kw))
    except (ModelLoadError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"{len(manifest.records)} feature files written to {out_dir}")


@main.command()
@click.option("--frames", "frames_dir", required=True, type=click.Path(path_type=Path))
@click.option("--prompts", "prompts_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--model", default="region-grow", show_default=True,
              type=click.Choice(["region-grow", "sam"]))
@click.option("--sam-checkpoint", default=None, type=click.Path(path_type=Path))
def segment(frames_dir, prompts_path, out_dir, model, sam_checkpoint):
    """Write a mask PNG tree from (frame, points) prompt records."""
    try:
        if model == "sam":
            segmenter = load_segmenter("sam", checkpoint=str(sam_checkpoint))
        else:
            segmenter = load_segmenter("region-grow")
        manifest = export_point_segmentations(frames_dir, prompts_path, out_dir, segmenter)
    except (ModelLoadError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"{len(manifest.records)} masks written to {out_dir}")


if __name__ == "__main__":
    main()
