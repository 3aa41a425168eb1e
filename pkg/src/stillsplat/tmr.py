"""Transient mask refinement: promptable spatial refinement, three-pass
temporal propagation with a bounded memory window, IoU merging, and
stability-ratio filtration of false-positive objects."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .imaging import BinaryMask, ComponentRegion, connected_components, iou, write_mask


@dataclass(frozen=True)
class TmrConfig:
    cov_ref: float = 0.7        # local coverage needed to keep a refined mask
    cov_val: float = 0.7        # local coverage needed for a frame to count in SR
    memory: int = 10            # N_m: frames an object may go unobserved
    merge_iou: float = 0.9      # same-frame masks above this merge
    sr_threshold: float = 0.08  # objects below are discarded
    dilation_iters: int = 5     # N_e final mask dilation (consumed by training)
    max_prompt_points: int = 10
    match_iou: float = 0.5      # re-segmentation accepted as the same object

    def __post_init__(self):
        for name in ("cov_ref", "cov_val", "merge_iou", "sr_threshold", "match_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if min(self.memory, self.dilation_iters, self.max_prompt_points) < 1:
            raise ValueError("memory, dilation_iters and max_prompt_points must be >= 1")


class OracleSegmenter:
    """Ground-truth promptable segmenter over per-frame instance maps.

    Mimics a point-prompted segmenter's object bias: among the instances the
    prompts land on, instances hit by at least two points are preferred, and
    the smallest such instance (by frame area) wins. Backgrounds behind a
    loosely-prompted small object therefore do not swallow it.
    """

    def __init__(self, instance_maps: dict):
        self.instance_maps = instance_maps

    def segment(self, frame_index: int, points: np.ndarray, source_mask=None) -> BinaryMask:
        inst = self.instance_maps[frame_index]
        ids = inst[points[:, 0], points[:, 1]]
        ids = ids[ids >= 0]
        h, w = inst.shape
        if ids.size == 0:
            return BinaryMask(np.zeros((h, w), dtype=bool))
        uniq, counts = np.unique(ids, return_counts=True)
        cand = uniq[counts >= 2] if (counts >= 2).any() else uniq
        areas = [(int((inst == u).sum()), int(u)) for u in cand]
        areas.sort()
        return BinaryMask(inst == areas[0][1])


class IdentitySegmenter:
    """Returns the prompting component itself (no model in the loop)."""

    def segment(self, frame_index: int, points: np.ndarray, source_mask=None) -> BinaryMask:
        if source_mask is None:
            raise ValueError("identity segmenter needs the prompting mask")
        return BinaryMask(source_mask.bits.copy())


@dataclass
class TrackedObject:
    label: int
    masks: dict = field(default_factory=dict)   # frame slot -> BinaryMask (nonempty)
    sr: Optional[float] = None
    valid_frames: dict = field(default_factory=dict)

    @property
    def max_mask_size(self) -> int:
        return max(m.count for m in self.masks.values()) if self.masks else 0

    @property
    def first_frame(self) -> int:
        return min(self.masks)

    @property
    def last_frame(self) -> int:
        return max(self.masks)


def sample_prompts(component: ComponentRegion, k: int = 10, seed: int = 0) -> np.ndarray:
    """Spread up to ``k`` prompt pixels over a component by farthest-point
    sampling, anchored at the pixel nearest the centroid (the anchor itself is
    not selected). Deterministic; ties break in raster order."""
    pix = component.pixels.astype(np.float64)
    n = pix.shape[0]
    if n == 0:
        raise ValueError("cannot sample prompts from an empty component")
    if n <= k:
        return component.pixels.copy()
    centroid = pix.mean(axis=0)
    anchor = int(np.argmin(((pix - centroid) ** 2).sum(axis=1)))
    dist = ((pix - pix[anchor]) ** 2).sum(axis=1)
    chosen = [int(np.argmax(dist))]
    min_d = ((pix - pix[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(min_d))
        chosen.append(nxt)
        d = ((pix - pix[nxt]) ** 2).sum(axis=1)
        min_d = np.minimum(min_d, d)
    return component.pixels[np.array(chosen)]


def local_coverage(prompt_mask: BinaryMask, candidate: BinaryMask) -> float:
    """|P ∩ M'| / |M'|: how much of a candidate the prompting mask covers."""
    denom = candidate.count
    if denom == 0:
        return 0.0
    return int((prompt_mask.bits & candidate.bits).sum()) / denom


def spatial_refine(tmp_mask: BinaryMask, frame_index: int, segmenter, cfg: TmrConfig) -> list:
    """One segmenter candidate per connected component, coverage-filtered."""
    kept = []
    for comp in connected_components(tmp_mask):
        pts = sample_prompts(comp, cfg.max_prompt_points)
        cand = segmenter.segment(frame_index, pts,
                                 source_mask=comp.to_mask(tmp_mask.width, tmp_mask.height))
        if cand.count == 0:
            continue
        if local_coverage(tmp_mask, cand) > cfg.cov_ref:
            kept.append(cand)
    return kept


def _mask_component(mask: BinaryMask) -> ComponentRegion:
    rows, cols = np.nonzero(mask.bits)
    return ComponentRegion(np.column_stack([rows, cols]))


def _merge_frame(objects: dict, slot: int, cfg: TmrConfig) -> None:
    """Union same-frame masks with IoU above the merge threshold; the lower
    label absorbs the higher one's whole track. Runs to a fixed point."""
    changed = True
    while changed:
        changed = False
        labels = sorted(l for l, o in objects.items() if slot in o.masks)
        for i in range(len(labels)):
            for j in range(i + 1, len(labels)):
                lo, hi = labels[i], labels[j]
                if lo not in objects or hi not in objects:
                    continue
                a, b = objects[lo], objects[hi]
                if slot not in a.masks or slot not in b.masks:
                    continue
                if iou(a.masks[slot], b.masks[slot]) > cfg.merge_iou:
                    for f, m in b.masks.items():
                        a.masks[f] = a.masks[f].union(m) if f in a.masks else m
                    del objects[hi]
                    changed = True
            if changed:
                break


def _nearest_stored(obj: TrackedObject, slot: int, processed: set, memory: int) -> Optional[int]:
    best = None
    for f in obj.masks:
        if f == slot or f not in processed:
            continue
        if abs(f - slot) <= memory and (best is None or abs(f - slot) < abs(best - slot)
                                        or (abs(f - slot) == abs(best - slot) and f < best)):
            best = f
    return best


def propagate(refined: list, segmenter, cfg: TmrConfig) -> list:
    """Track refined masks through the sequence.

    Three passes: forward (seeds objects from the per-frame refined masks and
    from unmatched re-segmentations), backward (fills frames an object
    missed), and a final forward pass whose re-segmentations win conflicts.
    Objects unseen for more than ``memory`` frames lapse; a later sighting
    starts a fresh label.
    """
    n_frames = len(refined)
    objects: dict = {}
    next_label = 1

    def resegment(obj: TrackedObject, slot: int, src_slot: int):
        src = obj.masks[src_slot]
        pts = sample_prompts(_mask_component(src), cfg.max_prompt_points)
        return segmenter.segment(slot, pts, source_mask=src), src

    def run_pass(order, mode: str):
        nonlocal next_label
        processed = set()
        for slot in order:
            for label in sorted(objects):
                obj = objects[label]
                if mode != "final" and slot in obj.masks:
                    continue
                src_slot = _nearest_stored(obj, slot, processed, cfg.memory)
                if src_slot is None:
                    continue
                cand, src = resegment(obj, slot, src_slot)
                if cand.count == 0:
                    continue
                if iou(cand, src) >= cfg.match_iou:
                    obj.masks[slot] = cand
                elif mode == "forward":
                    objects[next_label] = TrackedObject(next_label, {slot: cand})
                    next_label += 1
            if mode == "forward":
                for mask in refined[slot]:
                    if mask.count == 0:
                        continue
                    target = None
                    for label in sorted(objects):
                        stored = objects[label].masks.get(slot)
                        if stored is not None and iou(mask, stored) > cfg.merge_iou:
                            target = label
                            break
                    if target is not None:
                        objects[target].masks[slot] = objects[target].masks[slot].union(mask)
                    else:
                        objects[next_label] = TrackedObject(next_label, {slot: mask})
                        next_label += 1
            _merge_frame(objects, slot, cfg)
            processed.add(slot)

    run_pass(range(n_frames), "forward")
    run_pass(range(n_frames - 1, -1, -1), "backward")
    run_pass(range(n_frames), "final")
    return [objects[label] for label in sorted(objects)]


def stability_ratio(obj: TrackedObject, prompt_masks: list, residuals: list, cfg: TmrConfig):
    """Mean of residual x global coverage over valid frames (sum, then divide).

    A frame is valid when the prompt mask covers the object's mask beyond the
    validation threshold. No valid frames means SR = 0: an object never
    corroborated by the transient predictor must not mask the scene.
    """
    m_max = obj.max_mask_size
    valid = {}
    total = 0.0
    n = 0
    for slot in sorted(obj.masks):
        mask = obj.masks[slot]
        inter = int((prompt_masks[slot].bits & mask.bits).sum())
        cs_local = inter / mask.count
        ok = cs_local > cfg.cov_val
        valid[slot] = ok
        if ok:
            cs_global = inter / m_max
            r_i = float(residuals[slot][mask.bits].mean())
            total += r_i * cs_global
            n += 1
    sr = total / n if n else 0.0
    return sr, valid


def filter_objects(objects: list, cfg: TmrConfig) -> list:
    for obj in objects:
        if obj.sr is None:
            raise ValueError(f"object {obj.label} has no stability ratio")
    return [o for o in objects if o.sr >= cfg.sr_threshold]


def final_masks(kept: list, n_frames: int, width: int, height: int) -> list:
    """Per-frame union of the kept objects' masks."""
    out = [BinaryMask.empty(width, height) for _ in range(n_frames)]
    for obj in kept:
        for slot, mask in obj.masks.items():
            out[slot] = out[slot].union(mask)
    return out


def refine_sequence(tmp_masks: list, residuals: list, segmenter, cfg: TmrConfig):
    """Full refiner: spatial refinement, propagation, SR scoring, filtration.

    ``tmp_masks``/``residuals`` are indexed by frame slot (capture order of
    the frames being refined). Returns (kept objects, all objects, final
    per-slot masks).
    """
    n = len(tmp_masks)
    refined = [spatial_refine(tmp_masks[i], i, segmenter, cfg) for i in range(n)]
    objects = propagate(refined, segmenter, cfg)
    for obj in objects:
        obj.sr, obj.valid_frames = stability_ratio(obj, tmp_masks, residuals, cfg)
    kept = filter_objects(objects, cfg)
    width, height = tmp_masks[0].width, tmp_masks[0].height
    return kept, objects, final_masks(kept, n, width, height)


def dump_tracked_objects(objects: list, out_dir, slot_to_index=None) -> None:
    """Write masks/<label>/<frame>.png plus a one-line-per-object manifest."""
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    lines = []
    for obj in sorted(objects, key=lambda o: o.label):
        d = out / "masks" / str(obj.label)
        d.mkdir(exist_ok=True)
        for slot in sorted(obj.masks):
            idx = slot if slot_to_index is None else slot_to_index[slot]
            write_mask(obj.masks[slot], d / f"{idx:05d}.png")
        first = obj.first_frame if slot_to_index is None else slot_to_index[obj.first_frame]
        last = obj.last_frame if slot_to_index is None else slot_to_index[obj.last_frame]
        lines.append(f"{obj.label} {obj.sr:.17g} {first} {last} {obj.max_mask_size}")
    (out / "objects.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
