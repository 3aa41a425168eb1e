"""Synthetic scenes: a textured wall+floor stage, scripted movers, posed
cameras, ground-truth transient masks, and instance/semantic id maps.

Archetypes
    transient          a mover looping through the scene every frame
    semi_transient     the mover halts for a stretch of frames mid-capture;
                       while halted its pixels take on a static semantic
                       class (a parked object reads as static scenery to a
                       semantics-only feature extractor)
    slow               sub-pixel per-frame motion
    adversarial_static the detail overlay of one static prop is dropped from
                       the initialization cloud, leaving a static region that
                       reconstructs poorly for a long stretch of training

Test frames are clean static renders (no movers) with empty ground-truth
masks, mirroring distractor-free evaluation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .imaging import BinaryMask, ImageBuffer, iou, psnr, read_image, read_mask, ssim, write_image, write_mask
from .splat import Camera, GaussianCloud, load_class_ids, load_cloud, logit, render, save_class_ids, save_cloud

# instance ids (statics use the same value as their semantic class)
WALL = 0
FLOOR = 1
PROP_A = 2   # static look-alike used by the semi-transient alias
PROP_B = 3   # the under-fitted region of adversarial_static
MOVER_BASE = 4

VOID_ID = -1
_VOID_U16 = 65535

ARCHETYPES = ("transient", "semi_transient", "slow", "adversarial_static")


class InvalidSceneSpec(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    archetype: str
    n_frames: int = 60
    width: int = 64
    height: int = 64
    test_every: int = 8
    n_movers: int = 1
    halt_start: int = 26
    halt_len: int = 8
    fov_y_deg: float = 55.0

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise InvalidSceneSpec(
                f"unknown archetype {self.archetype!r}; expected one of {ARCHETYPES}"
            )
        if self.n_frames < 4 or self.width < 16 or self.height < 16:
            raise InvalidSceneSpec("scene too small")
        if self.archetype == "semi_transient":
            if not (0 < self.halt_start and self.halt_start + self.halt_len < self.n_frames):
                raise InvalidSceneSpec("halt interval must fall inside the sequence")


@dataclass
class Frame:
    index: int
    image: ImageBuffer
    camera: Camera
    gt_mask: Optional[BinaryMask] = None
    instance_map: Optional[np.ndarray] = None
    class_of_instance: Optional[np.ndarray] = None


@dataclass
class FrameSequence:
    frames: list
    train_indices: list
    test_indices: list

    def train_frames(self):
        return [self.frames[i] for i in self.train_indices]

    def test_frames(self):
        return [self.frames[i] for i in self.test_indices]


@dataclass
class SyntheticSceneMeta:
    spec: SceneSpec
    seed: int
    static_cloud: GaussianCloud
    mover_bases: list
    mover_offsets: np.ndarray       # (n_movers, n_frames, 3)
    cameras: list
    class_tables: list              # per frame: instance -> class id
    n_classes: int
    underfit_instance: Optional[int] = None
    underfit_slice: Optional[tuple] = None  # static-cloud rows dropped from the init

    def movers_cloud(self, frame_idx: int) -> Optional[GaussianCloud]:
        if not self.mover_bases:
            return None
        parts = []
        for k, base in enumerate(self.mover_bases):
            moved = base.copy()
            moved.means = moved.means + self.mover_offsets[k, frame_idx]
            parts.append(moved)
        return GaussianCloud.concatenate(parts)

    def combined_cloud(self, frame_idx: int) -> GaussianCloud:
        movers = self.movers_cloud(frame_idx)
        if movers is None:
            return self.static_cloud
        return GaussianCloud.concatenate([self.static_cloud, movers])

    def init_cloud(self) -> GaussianCloud:
        """Degraded copy of the static cloud used to start training.

        Stands in for an SfM-style initialization: jittered positions, washed
        colors, uniform moderate opacity. In ``adversarial_static`` the
        checkered overlay of one prop is dropped (only its plain backing plate
        survives), leaving a persistent high-residual static region whose
        class ids still reach the rendered id map.
        """
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 77]))
        src = self.static_cloud
        keep = np.ones(src.n, dtype=bool)
        if self.underfit_instance is not None and self.underfit_slice is not None:
            keep[self.underfit_slice[0]:self.underfit_slice[1]] = False
        src = src.subset(np.nonzero(keep)[0])
        colors = 1.0 / (1.0 + np.exp(-src.color_logits))
        washed = np.clip(0.38 + 0.28 * colors + rng.normal(0, 0.04, colors.shape), 0.05, 0.95)
        quats = src.quats + rng.normal(0, 0.05, src.quats.shape)
        cloud = GaussianCloud(
            means=src.means + rng.normal(0, 0.02, src.means.shape),
            log_scales=src.log_scales + rng.normal(0, 0.08, src.log_scales.shape),
            quats=quats,
            opacity_logits=np.full(src.n, logit(0.25)),
            color_logits=logit(washed),
            class_ids=src.class_ids.copy(),
        )
        cloud.normalize_quats()
        return cloud


def _plane_gaussians(rng, u_axis, v_axis, normal, origin, nu, nv, extent_u, extent_v,
                     base_color, instance, thin=0.02):
    us = np.linspace(-extent_u, extent_u, nu)
    vs = np.linspace(-extent_v, extent_v, nv)
    uu, vv = np.meshgrid(us, vs)
    count = uu.size
    pos = (origin[None, :] + uu.reshape(-1, 1) * u_axis[None, :] + vv.reshape(-1, 1) * v_axis[None, :])
    pos = pos + rng.normal(0, 0.015, pos.shape)
    du = 2 * extent_u / (nu - 1)
    dv = 2 * extent_v / (nv - 1)
    scales = np.empty((count, 3))
    scales[:, 0] = du * 0.75
    scales[:, 1] = dv * 0.75
    scales[:, 2] = thin
    checker = ((np.arange(nu)[None, :] + np.arange(nv)[:, None]) % 2).reshape(-1, 1)
    color = np.clip(base_color[None, :] * (0.74 + 0.26 * checker) + rng.normal(0, 0.03, (count, 3)), 0.05, 0.95)
    # rotation mapping local axes (u, v, n) to world
    rot = np.stack([u_axis, v_axis, normal], axis=1)
    quat = _rot_to_quat(rot)
    return GaussianCloud(
        means=pos,
        log_scales=np.log(scales * np.exp(rng.normal(0, 0.05, scales.shape))),
        quats=np.tile(quat, (count, 1)),
        opacity_logits=np.full(count, logit(0.92)),
        color_logits=logit(color),
        class_ids=np.full(count, instance, dtype=np.int32),
    )


def _rot_to_quat(rot: np.ndarray) -> np.ndarray:
    t = np.trace(rot)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (rot[2, 1] - rot[1, 2]) / s
        y = (rot[0, 2] - rot[2, 0]) / s
        z = (rot[1, 0] - rot[0, 1]) / s
    else:
        i = int(np.argmax(np.diag(rot)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(rot[i, i] - rot[j, j] - rot[k, k] + 1.0) * 2
        q = np.empty(4)
        q[1 + i] = 0.25 * s
        q[0] = (rot[k, j] - rot[j, k]) / s
        q[1 + j] = (rot[j, i] + rot[i, j]) / s
        q[1 + k] = (rot[k, i] + rot[i, k]) / s
        w, x, y, z = q
    quat = np.array([w, x, y, z])
    return quat / np.linalg.norm(quat)


def _grid_panel(rng, center, size, cells, colors, instance, tightness, z_jitter=0.003,
                opacity=0.94):
    half = size / 2.0
    coords = np.linspace(-half, half, cells)
    uu, vv = np.meshgrid(coords, coords)
    n = uu.size
    pos = np.empty((n, 3))
    pos[:, 0] = center[0] + uu.reshape(-1)
    pos[:, 1] = center[1] + vv.reshape(-1)
    pos[:, 2] = center[2] + rng.normal(0, z_jitter, n)
    color = np.clip(colors + rng.normal(0, 0.02, (n, 3)), 0.05, 0.95)
    spacing = size / (cells - 1)
    scales = np.full((n, 3), spacing * tightness)
    scales[:, 2] = 0.01
    return GaussianCloud(
        means=pos,
        log_scales=np.log(scales * np.exp(rng.normal(0, 0.04, (n, 3)))),
        quats=np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1)),
        opacity_logits=np.full(n, logit(opacity)),
        color_logits=logit(color),
        class_ids=np.full(n, instance, dtype=np.int32),
    )


def _mosaic_panel(rng, center, size, cells, instance):
    """A fine random-color mosaic over a plain backing plate, one instance.

    The backing plate alone reconstructs trivially; the tight mosaic overlay
    carries per-splat color detail that several times fewer Gaussians cannot
    express at any setting. Dropping the overlay from an initialization
    leaves a persistent high-residual static region whose class still reaches
    rendered id maps through the plate.
    """
    corners = np.array([
        [0.94, 0.06, 0.06], [0.06, 0.94, 0.06], [0.06, 0.06, 0.94],
        [0.94, 0.94, 0.06], [0.94, 0.06, 0.94], [0.06, 0.94, 0.94],
        [0.94, 0.94, 0.94], [0.06, 0.06, 0.06],
    ])
    colors = corners[rng.integers(0, len(corners), cells * cells)]
    overlay = _grid_panel(rng, center, size, cells, colors, instance,
                          tightness=0.36, opacity=0.985)
    # a deliberately tiny backing: four huge splats block the parallax canvas
    # behind the panel and keep the class id in rendered id maps, yet carry
    # nowhere near the freedom needed to imitate the mosaic
    plate_center = center + np.array([0.0, 0.0, 0.05])
    plate = _grid_panel(rng, plate_center, size * 0.85, 2,
                        np.full((4, 3), (0.46, 0.47, 0.50)), instance,
                        tightness=1.15, opacity=0.97)
    return plate, overlay


def _ball_gaussians(rng, center, radius, n, color, instance, opacity=0.96):
    pos = center[None, :] + rng.normal(0, radius * 0.45, (n, 3))
    scales = np.full((n, 3), radius * 0.55) * np.exp(rng.normal(0, 0.1, (n, 3)))
    quats = rng.normal(size=(n, 4))
    col = np.clip(color[None, :] + rng.normal(0, 0.03, (n, 3)), 0.05, 0.95)
    cloud = GaussianCloud(
        means=pos,
        log_scales=np.log(scales),
        quats=quats,
        opacity_logits=np.full(n, logit(opacity)),
        color_logits=logit(col),
        class_ids=np.full(n, instance, dtype=np.int32),
    )
    cloud.normalize_quats()
    return cloud


def _mover_path(spec: SceneSpec) -> np.ndarray:
    """Per-frame mover center offsets, (n_frames, 3).

    The path weaves through x, y, and depth so consecutive positions overlap
    little and no scene locus is occupied in more than a few frames, which is
    what makes the object genuinely transient rather than a blurred semi-
    static tube. Halted frames repeat one position.
    """
    n = spec.n_frames
    if spec.archetype == "slow":
        t = np.linspace(0.0, 1.0, n)
    else:
        moving = np.ones(n, dtype=bool)
        if spec.archetype == "semi_transient":
            moving[spec.halt_start:spec.halt_start + spec.halt_len] = False
        steps = np.zeros(n)
        steps[1:] = moving[1:].astype(float)
        progress = np.cumsum(steps)
        t = progress / progress[-1]
    path = np.empty((n, 3))
    if spec.archetype == "slow":
        path[:, 0] = np.linspace(-0.09, 0.09, n)
        path[:, 1] = 0.16 + 0.01 * np.sin(2.0 * np.pi * t)
        path[:, 2] = -0.28
        return path
    # closed elliptical loop: every scene locus on the loop is occupied only a
    # small fraction of the frames no matter how long the capture runs. The
    # vertical bobbing is deliberately strong; no static placement can mimic
    # it under a horizontally orbiting camera, which keeps the object from
    # being absorbed into the reconstruction as a parallax-consistent floater.
    theta = 2.0 * np.pi * 1.9 * t
    path[:, 0] = 0.85 * np.cos(theta)
    path[:, 1] = 0.18 + 0.24 * np.sin(2.2 * theta + 0.5)
    path[:, 2] = -0.25 + 0.35 * np.sin(theta)
    return path


def mover_halted(spec: SceneSpec, frame_idx: int) -> bool:
    return (
        spec.archetype == "semi_transient"
        and spec.halt_start <= frame_idx < spec.halt_start + spec.halt_len
    )


def generate_scene(spec: SceneSpec, seed: int):
    """Build the scene, render every frame, and emit ground truth."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    # floating in front of the wall: no depth-interleaved wall splats to wash
    # out the mosaic detail
    plate, overlay = _mosaic_panel(rng, np.array([0.72, 0.48, 0.52]), 1.35, 8, PROP_B)
    parts = [
        _plane_gaussians(rng, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]),
                         np.array([0.0, 0.55, 0.9]), 22, 13, 1.7, 1.0,
                         np.array([0.58, 0.54, 0.50]), WALL),
        _plane_gaussians(rng, np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), np.array([0, 1.0, 0]),
                         np.array([0.0, -0.22, 0.2]), 22, 10, 1.7, 1.1,
                         np.array([0.36, 0.43, 0.36]), FLOOR),
        _ball_gaussians(rng, np.array([-0.55, 0.0, 0.35]), 0.17, 24,
                        np.array([0.10, 0.55, 0.62]), PROP_A),
        plate,
        overlay,
    ]
    static_cloud = GaussianCloud.concatenate(parts)
    overlay_start = static_cloud.n - overlay.n
    overlay_slice = (overlay_start, static_cloud.n)

    mover_bases = []
    for k in range(spec.n_movers):
        mover_bases.append(
            _ball_gaussians(rng, np.zeros(3), 0.26, 32,
                            np.array([0.93, 0.08, 0.10]), MOVER_BASE + k, opacity=0.97)
        )
    path = _mover_path(spec)
    offsets = np.zeros((spec.n_movers, spec.n_frames, 3))
    for k in range(spec.n_movers):
        offsets[k] = path
        if k % 2 == 1:
            offsets[k, :, 0] *= -1.0
        offsets[k, :, 2] += 0.12 * k

    center = np.array([0.0, 0.35, 0.15])
    cameras = []
    angles = np.linspace(-0.62, 0.62, spec.n_frames)
    for i, th in enumerate(angles):
        eye = center + np.array([2.6 * np.sin(th), 0.38 + 0.08 * np.sin(2.5 * th), -2.6 * np.cos(th)])
        cameras.append(Camera.look_at(eye, center, np.array([0.0, 1.0, 0.0]),
                                      spec.fov_y_deg, spec.width, spec.height, near=0.05))

    n_instances = MOVER_BASE + spec.n_movers
    n_classes = n_instances
    test_indices = list(range(spec.test_every // 2, spec.n_frames, spec.test_every))
    train_indices = [i for i in range(spec.n_frames) if i not in test_indices]

    adversarial = spec.archetype == "adversarial_static"
    meta = SyntheticSceneMeta(
        spec=spec, seed=seed, static_cloud=static_cloud, mover_bases=mover_bases,
        mover_offsets=offsets, cameras=cameras, class_tables=[], n_classes=n_classes,
        underfit_instance=PROP_B if adversarial else None,
        underfit_slice=overlay_slice if adversarial else None,
    )

    frames = []
    for i in range(spec.n_frames):
        cam = cameras[i]
        table = np.arange(n_instances, dtype=np.int32)
        if mover_halted(spec, i):
            # a parked object reads as static scenery to a semantics-only
            # feature extractor; alias its class while it is motionless
            for k in range(spec.n_movers):
                table[MOVER_BASE + k] = FLOOR
        meta.class_tables.append(table)
        if i in test_indices:
            out = render(meta.static_cloud, cam, with_ids=True)
            gt = BinaryMask.empty(spec.width, spec.height)
            inst_map = out.id_map.copy()
        else:
            out = render(meta.combined_cloud(i), cam, with_ids=True)
            movers_out = render(meta.movers_cloud(i), cam)
            gt = BinaryMask(movers_out.alpha.data[:, :, 0] > 0.5)
            # pixels a mover occludes belong to that mover in the instance
            # map, keeping id maps consistent with the stored masks
            inst_map = out.id_map.copy()
            if gt.bits.any():
                best_alpha = np.zeros((spec.height, spec.width))
                owner = np.full((spec.height, spec.width), -1, dtype=np.int32)
                for k, base in enumerate(meta.mover_bases):
                    single = base.copy()
                    single.means = single.means + offsets[k, i]
                    alpha_k = render(single, cam).alpha.data[:, :, 0]
                    better = alpha_k > best_alpha
                    best_alpha = np.where(better, alpha_k, best_alpha)
                    owner = np.where(better, MOVER_BASE + k, owner)
                inst_map = np.where(gt.bits, owner, inst_map)
        frames.append(Frame(
            index=i,
            image=ImageBuffer(np.clip(out.color.data, 0.0, 1.0)),
            camera=cam,
            gt_mask=gt,
            instance_map=inst_map,
            class_of_instance=table,
        ))
    seq = FrameSequence(frames=frames, train_indices=train_indices, test_indices=test_indices)
    return meta, seq


def underfit_region_masks(meta: SyntheticSceneMeta, seq: FrameSequence) -> dict:
    """Per-train-frame mask of the deliberately under-fitted static prop."""
    if meta.underfit_instance is None:
        return {}
    out = {}
    for frame in seq.train_frames():
        out[frame.index] = BinaryMask(frame.instance_map == meta.underfit_instance)
    return out


def evaluate(cloud: GaussianCloud, sequence: FrameSequence) -> dict:
    """PSNR/SSIM against the clean held-out views."""
    per_frame = []
    for frame in sequence.test_frames():
        out = render(cloud, frame.camera)
        img = ImageBuffer(np.clip(out.color.data, 0.0, 1.0))
        per_frame.append({
            "index": frame.index,
            "psnr": psnr(frame.image, img),
            "ssim": ssim(frame.image, img),
        })
    if not per_frame:
        raise ValueError("sequence has no test frames")
    return {
        "per_frame": per_frame,
        "psnr_mean": float(np.mean([f["psnr"] for f in per_frame])),
        "ssim_mean": float(np.mean([f["ssim"] for f in per_frame])),
    }


def mask_eval(pred_masks: dict, sequence: FrameSequence) -> dict:
    """IoU/precision/recall of predicted transient masks on training frames."""
    per_frame = []
    for frame in sequence.train_frames():
        if frame.gt_mask is None:
            raise ValueError(f"frame {frame.index} has no ground-truth mask")
        pred = pred_masks.get(frame.index, BinaryMask.empty(frame.image.width, frame.image.height))
        tp = int((pred.bits & frame.gt_mask.bits).sum())
        fp = int((pred.bits & ~frame.gt_mask.bits).sum())
        fn = int((~pred.bits & frame.gt_mask.bits).sum())
        per_frame.append({
            "index": frame.index,
            "iou": iou(pred, frame.gt_mask),
            "precision": tp / (tp + fp) if tp + fp else 1.0,
            "recall": tp / (tp + fn) if tp + fn else 1.0,
        })
    return {
        "per_frame": per_frame,
        "iou_mean": float(np.mean([f["iou"] for f in per_frame])),
        "precision_mean": float(np.mean([f["precision"] for f in per_frame])),
        "recall_mean": float(np.mean([f["recall"] for f in per_frame])),
    }


def save_dataset(meta: SyntheticSceneMeta, seq: FrameSequence, out_dir) -> None:
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "gt_masks").mkdir(exist_ok=True)
    (out / "idmaps").mkdir(exist_ok=True)
    pose_lines = []
    for frame in seq.frames:
        write_image(frame.image, out / "frames" / f"{frame.index:05d}.png")
        if frame.gt_mask is not None:
            write_mask(frame.gt_mask, out / "gt_masks" / f"{frame.index:05d}.png")
        if frame.instance_map is not None:
            raw = frame.instance_map.astype(np.int64)
            raw = np.where(raw < 0, _VOID_U16, raw).astype("<u2")
            (out / "idmaps" / f"{frame.index:05d}.bin").write_bytes(raw.tobytes())
        cam = frame.camera
        vals = list(np.column_stack([cam.rotation, cam.translation]).reshape(-1))
        vals += [cam.fx, cam.fy, cam.cx, cam.cy]
        pose_lines.append(
            f"{frame.index} " + " ".join(f"{v:.17g}" for v in vals)
            + f" {cam.width} {cam.height} {cam.near:.17g}"
        )
    (out / "poses.txt").write_text("\n".join(pose_lines) + "\n")
    split_lines = [f"{i} train" for i in seq.train_indices] + [f"{i} test" for i in seq.test_indices]
    (out / "split.txt").write_text("\n".join(sorted(split_lines, key=lambda s: int(s.split()[0]))) + "\n")
    tables = {}
    for i, table in enumerate(meta.class_tables):
        diffs = {str(inst): int(cls) for inst, cls in enumerate(table) if inst != cls}
        if diffs:
            tables[str(i)] = diffs
    (out / "materials.json").write_text(json.dumps({
        "n_classes": meta.n_classes,
        "n_instances": meta.n_classes,
        "frames": tables,
    }, sort_keys=True, indent=1) + "\n")
    init = meta.init_cloud()
    save_cloud(init, out / "init_cloud.bin")
    save_class_ids(init.class_ids, out / "init_ids.bin")


@dataclass
class DatasetAux:
    n_classes: int
    init_cloud_path: Optional[Path]
    init_ids_path: Optional[Path]

    def load_init_cloud(self) -> GaussianCloud:
        if self.init_cloud_path is None:
            raise FileNotFoundError("dataset carries no init cloud")
        cloud = load_cloud(self.init_cloud_path)
        if self.init_ids_path is not None and self.init_ids_path.exists():
            cloud.class_ids = load_class_ids(self.init_ids_path)
        return cloud


def load_dataset(in_dir):
    src = Path(in_dir)
    if not (src / "poses.txt").exists():
        raise FileNotFoundError(f"{src} is not a dataset directory (missing poses.txt)")
    split = {}
    for line in (src / "split.txt").read_text().splitlines():
        idx, kind = line.split()
        split[int(idx)] = kind
    materials = {"n_classes": 1, "frames": {}}
    if (src / "materials.json").exists():
        materials = json.loads((src / "materials.json").read_text())
    n_instances = materials.get("n_instances", materials["n_classes"])

    frames = []
    for line in (src / "poses.txt").read_text().splitlines():
        toks = line.split()
        idx = int(toks[0])
        vals = [float(t) for t in toks[1:13]]
        fx, fy, cx, cy = (float(t) for t in toks[13:17])
        width, height = int(toks[17]), int(toks[18])
        near = float(toks[19])
        mat = np.array(vals).reshape(3, 4)
        cam = Camera(mat[:, :3], mat[:, 3], fx, fy, cx, cy, width, height, near)
        image = read_image(src / "frames" / f"{idx:05d}.png")
        gt_path = src / "gt_masks" / f"{idx:05d}.png"
        gt = read_mask(gt_path) if gt_path.exists() else None
        id_path = src / "idmaps" / f"{idx:05d}.bin"
        inst = None
        if id_path.exists():
            raw = np.frombuffer(id_path.read_bytes(), dtype="<u2").reshape(height, width)
            raw = raw.astype(np.int32)
            inst = np.where(raw == _VOID_U16, VOID_ID, raw)
        table = np.arange(n_instances, dtype=np.int32)
        for inst_id, cls in materials.get("frames", {}).get(str(idx), {}).items():
            table[int(inst_id)] = cls
        frames.append(Frame(idx, image, cam, gt, inst, table))
    frames.sort(key=lambda f: f.index)
    seq = FrameSequence(
        frames=frames,
        train_indices=[f.index for f in frames if split.get(f.index) == "train"],
        test_indices=[f.index for f in frames if split.get(f.index) == "test"],
    )
    init_path = src / "init_cloud.bin"
    ids_path = src / "init_ids.bin"
    aux = DatasetAux(
        n_classes=materials["n_classes"],
        init_cloud_path=init_path if init_path.exists() else None,
        init_ids_path=ids_path if ids_path.exists() else None,
    )
    return seq, aux
