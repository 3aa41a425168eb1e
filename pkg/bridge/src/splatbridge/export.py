"""Batch exporters: frames directory in, TFEA files / mask PNG trees out."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .formats import load_frame, write_mask_png, write_tfea
from .models import PATCH_SIZE


@dataclass
class ExportManifest:
    model_id: str
    patch_size: int
    feature_dim: int
    records: list = field(default_factory=list)  # (kind, relative path, sha256)

    def add(self, kind: str, root: Path, path: Path) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.records.append((kind, str(path.relative_to(root)), digest))

    def write(self, path: Path) -> None:
        lines = [json.dumps({
            "model": self.model_id, "patch_size": self.patch_size, "dim": self.feature_dim,
        }, sort_keys=True)]
        for kind, rel, digest in self.records:
            lines.append(json.dumps({"kind": kind, "path": rel, "sha256": digest}, sort_keys=True))
        path.write_text("\n".join(lines) + "\n")

    @staticmethod
    def read(path: Path) -> "ExportManifest":
        lines = path.read_text().splitlines()
        head = json.loads(lines[0])
        manifest = ExportManifest(head["model"], head["patch_size"], head["dim"])
        for line in lines[1:]:
            rec = json.loads(line)
            manifest.records.append((rec["kind"], rec["path"], rec["sha256"]))
        return manifest


def list_frames(frames_dir: Path) -> list:
    frames = sorted(frames_dir.glob("*.png"))
    if not frames:
        raise FileNotFoundError(f"no PNG frames under {frames_dir}")
    return frames


def export_features(frames_dir, out_dir, featurizer) -> ExportManifest:
    """One TFEA file per frame, named after the frame's stem."""
    frames_dir, out_dir = Path(frames_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ExportManifest(featurizer.model_id, PATCH_SIZE, featurizer.dim)
    for frame_path in list_frames(frames_dir):
        image = load_frame(frame_path)
        values = featurizer.extract(image)
        out_path = out_dir / f"{frame_path.stem}.tfea"
        write_tfea(values, PATCH_SIZE, out_path)
        manifest.add("features", out_dir, out_path)
    manifest.write(out_dir / "manifest.jsonl")
    return manifest


def read_prompts(path) -> list:
    """Prompt records: JSONL of {"frame": idx, "points": [[row, col], ...]}."""
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        records.append((int(rec["frame"]), np.asarray(rec["points"], dtype=np.int64)))
    return records


def export_point_segmentations(frames_dir, prompts_path, out_dir, segmenter) -> ExportManifest:
    """One mask per prompt record under masks/<label>/<frame>.png."""
    frames_dir, out_dir = Path(frames_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(exist_ok=True)
    manifest = ExportManifest(segmenter.model_id, PATCH_SIZE, 0)
    for label, (frame_idx, points) in enumerate(read_prompts(prompts_path), start=1):
        frame_path = frames_dir / f"{frame_idx:05d}.png"
        if not frame_path.exists():
            raise FileNotFoundError(f"frame not found: {frame_path}")
        image = load_frame(frame_path)
        mask = segmenter.segment(image, points)
        label_dir = out_dir / "masks" / str(label)
        label_dir.mkdir(exist_ok=True)
        out_path = label_dir / f"{frame_idx:05d}.png"
        write_mask_png(mask, out_path)
        manifest.add("mask", out_dir, out_path)
    manifest.write(out_dir / "manifest.jsonl")
    return manifest
