import numpy as np
import pytest

from stillsplat.imaging import BinaryMask, ComponentRegion
from stillsplat.tmr import (
    IdentitySegmenter,
    OracleSegmenter,
    TmrConfig,
    TrackedObject,
    filter_objects,
    final_masks,
    local_coverage,
    propagate,
    refine_sequence,
    sample_prompts,
    spatial_refine,
    stability_ratio,
)


def box_mask(r0, c0, r1, c1, w=32, h=32):
    bits = np.zeros((h, w), dtype=bool)
    bits[r0:r1, c0:c1] = True
    return BinaryMask(bits)


def region_from(mask: BinaryMask) -> ComponentRegion:
    rows, cols = np.nonzero(mask.bits)
    return ComponentRegion(np.column_stack([rows, cols]))


class TestSamplePrompts:
    def test_small_component_returns_all(self):
        comp = ComponentRegion(np.array([[1, 1], [1, 2], [2, 1]]))
        pts = sample_prompts(comp, k=10)
        assert pts.shape == (3, 2)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        pix = np.column_stack([rng.integers(0, 20, 40), rng.integers(0, 20, 40)])
        comp = ComponentRegion(np.unique(pix, axis=0))
        a = sample_prompts(comp, k=5, seed=3)
        b = sample_prompts(comp, k=5, seed=3)
        assert np.array_equal(a, b)

    def test_line_endpoints_farthest_point_property(self):
        comp = ComponentRegion(np.column_stack([np.full(100, 7), np.arange(100)]))
        pts = sample_prompts(comp, k=2)
        cols = sorted(int(c) for _, c in pts)
        # brute force: the pair maximizing pairwise distance is (0, 99)
        best = max(
            ((a, b) for a in range(100) for b in range(a + 1, 100)),
            key=lambda ab: abs(ab[0] - ab[1]),
        )
        assert cols == sorted(best)

    def test_spread_beats_random_clumps(self):
        comp = ComponentRegion(
            np.array([[r, c] for r in range(10) for c in range(10)])
        )
        pts = sample_prompts(comp, k=4)
        d = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        assert d.min() >= 4.0  # farthest-point keeps prompts apart


class TestSpatialRefine:
    def test_kept_when_coverage_above_threshold(self):
        # prompting mask covers 80/100 of the oracle's instance
        inst = np.zeros((32, 32), dtype=np.int32)
        inst[10:20, 10:20] = 5  # 100-pixel instance
        seg = OracleSegmenter({0: inst})
        tmp_mask = box_mask(10, 10, 18, 20)  # 80 of those pixels
        kept = spatial_refine(tmp_mask, 0, seg, TmrConfig())
        assert len(kept) == 1
        assert kept[0].count == 100

    def test_dropped_when_coverage_low(self):
        inst = np.zeros((32, 32), dtype=np.int32)
        inst[10:20, 10:20] = 5
        seg = OracleSegmenter({0: inst})
        tmp_mask = box_mask(10, 10, 15, 20)  # covers 50 of 100
        kept = spatial_refine(tmp_mask, 0, seg, TmrConfig())
        assert kept == []

    def test_identity_segmenter_keeps_every_component(self):
        tmp_mask = BinaryMask(box_mask(2, 2, 6, 6).bits | box_mask(20, 20, 27, 25).bits)
        kept = spatial_refine(tmp_mask, 0, IdentitySegmenter(), TmrConfig())
        assert len(kept) == 2
        for m in kept:
            assert local_coverage(tmp_mask, m) == 1.0


def make_instance_video(n_frames, positions, size=6, w=32, h=32, obj_id=7):
    """Instance maps with a size x size object at the given per-frame corner
    positions (None = absent)."""
    maps = {}
    for i in range(n_frames):
        inst = np.zeros((h, w), dtype=np.int32)
        if positions[i] is not None:
            r, c = positions[i]
            inst[r:r + size, c:c + size] = obj_id
        maps[i] = inst
    return maps


class TestPropagate:
    def test_single_persistent_object_tracked_everywhere(self):
        n = 12
        positions = [(10, 2 + i) for i in range(n)]
        maps = make_instance_video(n, positions)
        seg = OracleSegmenter(maps)
        # refined masks only on a few frames; propagation must fill the rest
        refined = [[] for _ in range(n)]
        for i in (0, 5):
            refined[i] = [BinaryMask(maps[i] == 7)]
        objects = propagate(refined, seg, TmrConfig())
        tracked = [o for o in objects if len(o.masks) == n]
        assert len(tracked) == 1
        obj = tracked[0]
        for i in range(n):
            assert np.array_equal(obj.masks[i].bits, maps[i] == 7)

    def test_long_gap_creates_new_label(self):
        n = 26
        positions = []
        for i in range(n):
            if i < 5 or i >= 17:  # gone for 12 > N_m = 10
                positions.append((8, 8))
            else:
                positions.append(None)
        maps = make_instance_video(n, positions)
        seg = OracleSegmenter(maps)
        refined = [[] for _ in range(n)]
        refined[0] = [BinaryMask(maps[0] == 7)]
        refined[18] = [BinaryMask(maps[18] == 7)]
        objects = propagate(refined, seg, TmrConfig())

        def covers_object(o, frame):
            m = o.masks.get(frame)
            return m is not None and (m.bits & (maps[frame] == 7)).sum() > 0

        labels_early = {o.label for o in objects if any(covers_object(o, f) for f in range(5))}
        labels_late = {o.label for o in objects if any(covers_object(o, f) for f in range(17, n))}
        assert labels_early and labels_late
        assert labels_early.isdisjoint(labels_late)

    def test_short_gap_keeps_label(self):
        n = 14
        positions = []
        for i in range(n):
            if i < 5 or i >= 9:  # gone for 4 <= N_m
                positions.append((8, 8))
            else:
                positions.append(None)
        maps = make_instance_video(n, positions)
        seg = OracleSegmenter(maps)
        refined = [[] for _ in range(n)]
        refined[0] = [BinaryMask(maps[0] == 7)]
        objects = propagate(refined, seg, TmrConfig())
        on_object = [
            o for o in objects
            if any(m.bits[10, 10] and maps[f][10, 10] == 7 for f, m in o.masks.items())
        ]
        assert len(on_object) == 1
        present = set(range(0, 5)) | set(range(9, n))
        assert present.issubset(set(on_object[0].masks))

    def test_same_frame_merge_keeps_lower_label(self):
        n = 3
        maps = make_instance_video(n, [(8, 8)] * n)
        seg = OracleSegmenter(maps)
        base = BinaryMask(maps[0] == 7)
        nearly = base.bits.copy()
        nearly[8, 8] = False  # IoU 35/36 > 0.9
        refined = [[base, BinaryMask(nearly)], [], []]
        objects = propagate(refined, seg, TmrConfig())
        assert len([o for o in objects if o.masks]) == 1
        assert min(o.label for o in objects) == 1

    def test_merge_idempotent(self):
        from stillsplat.tmr import _merge_frame

        a = TrackedObject(1, {0: box_mask(2, 2, 10, 10)})
        b = TrackedObject(2, {0: box_mask(2, 2, 10, 9)})
        objects = {1: a, 2: b}
        _merge_frame(objects, 0, TmrConfig())
        snapshot = {l: {f: m.bits.copy() for f, m in o.masks.items()} for l, o in objects.items()}
        _merge_frame(objects, 0, TmrConfig())
        assert set(objects) == set(snapshot)
        for l, o in objects.items():
            for f, m in o.masks.items():
                assert np.array_equal(m.bits, snapshot[l][f])

    def test_labels_strictly_increasing(self):
        n = 6
        maps = make_instance_video(n, [(4, 4)] * 3 + [None] * 3)
        maps2 = make_instance_video(n, [None] * 3 + [(20, 20)] * 3, obj_id=9)
        merged = {i: np.where(maps[i] > 0, maps[i], maps2[i]) for i in range(n)}
        seg = OracleSegmenter(merged)
        refined = [[] for _ in range(n)]
        refined[0] = [BinaryMask(merged[0] == 7)]
        refined[3] = [BinaryMask(merged[3] == 9)]
        objects = propagate(refined, seg, TmrConfig())
        labels = [o.label for o in objects]
        assert labels == sorted(labels)


class TestStabilityRatio:
    def test_all_invalid_frames_give_zero(self):
        obj = TrackedObject(1, {0: box_mask(0, 0, 4, 4), 1: box_mask(0, 0, 4, 4)})
        prompts = [BinaryMask.empty(32, 32)] * 2  # no coverage anywhere
        residuals = [np.zeros((32, 32))] * 2
        sr, valid = stability_ratio(obj, prompts, residuals, TmrConfig())
        assert sr == 0.0
        assert not any(valid.values())

    def test_hand_computed_example(self):
        # 2 valid frames: R=(0.2, 0.4), CS_global=(1.0, 0.5) -> SR = 0.2
        m_big = box_mask(0, 0, 4, 4)    # 16 px
        m_small = box_mask(0, 0, 2, 4)  # 8 px
        obj = TrackedObject(1, {0: m_big, 1: m_small})
        prompts = [box_mask(0, 0, 4, 4), box_mask(0, 0, 2, 4)]
        residuals = [np.full((32, 32), 0.2), np.full((32, 32), 0.4)]
        sr, valid = stability_ratio(obj, prompts, residuals, TmrConfig())
        assert valid == {0: True, 1: True}
        assert sr == pytest.approx((0.2 * 1.0 + 0.4 * 0.5) / 2)

    def test_matches_bruteforce_exactly(self):
        rng = np.random.default_rng(23)
        cfg = TmrConfig()
        for _ in range(25):
            frames = sorted(rng.choice(10, size=rng.integers(1, 6), replace=False))
            masks = {}
            for f in frames:
                bits = rng.random((16, 16)) < rng.uniform(0.05, 0.5)
                if not bits.any():
                    bits[0, 0] = True
                masks[int(f)] = BinaryMask(bits)
            obj = TrackedObject(1, masks)
            prompts = [BinaryMask(rng.random((16, 16)) < 0.4) for _ in range(10)]
            residuals = [rng.random((16, 16)) for _ in range(10)]
            sr, valid = stability_ratio(obj, prompts, residuals, cfg)
            # brute force, same arithmetic order: sum then divide
            m_max = max(m.count for m in masks.values())
            total, n = 0.0, 0
            bf_valid = {}
            for f in sorted(masks):
                inter = int((prompts[f].bits & masks[f].bits).sum())
                cs_local = inter / masks[f].count
                ok = cs_local > cfg.cov_val
                bf_valid[f] = ok
                if ok:
                    total += float(residuals[f][masks[f].bits].mean()) * (inter / m_max)
                    n += 1
            expected = total / n if n else 0.0
            assert sr == expected
            assert valid == bf_valid


class TestFilterAndFinal:
    def test_threshold_boundary(self):
        cfg = TmrConfig()
        keep = TrackedObject(1, {0: box_mask(0, 0, 2, 2)})
        keep.sr = 0.2
        drop = TrackedObject(2, {0: box_mask(4, 4, 6, 6)})
        drop.sr = 0.05
        border = TrackedObject(3, {0: box_mask(8, 8, 10, 10)})
        border.sr = cfg.sr_threshold
        kept = filter_objects([keep, drop, border], cfg)
        assert [o.label for o in kept] == [1, 3]

    def test_final_masks_union(self):
        a = TrackedObject(1, {0: box_mask(0, 0, 4, 4), 1: box_mask(0, 0, 2, 2)})
        b = TrackedObject(2, {0: box_mask(8, 8, 12, 12)})
        finals = final_masks([a, b], 3, 32, 32)
        assert finals[0].count == 16 + 16
        assert finals[1].count == 4
        assert finals[2].count == 0

    def test_no_objects_all_empty(self):
        finals = final_masks([], 2, 16, 16)
        assert all(m.count == 0 for m in finals)

    def test_sr_required_before_filtering(self):
        with pytest.raises(ValueError):
            filter_objects([TrackedObject(1, {0: box_mask(0, 0, 2, 2)})], TmrConfig())


class TestRefineSequence:
    def test_background_objects_filtered_by_sr(self):
        # a TMP blob on a huge wall instance: the wall candidate gets tracked
        # but never covered by the prompts, so SR filters it
        n = 6
        h = w = 32
        inst = np.zeros((h, w), dtype=np.int32)  # instance 0 = wall everywhere
        inst[12:18, 12:18] = 7
        maps = {i: inst for i in range(n)}
        seg = OracleSegmenter(maps)
        tmp_masks = [box_mask(12, 12, 18, 18, w, h) for _ in range(n)]
        residuals = [np.full((h, w), 0.3) for _ in range(n)]
        kept, objects, finals = refine_sequence(tmp_masks, residuals, seg, TmrConfig())
        assert len(kept) == 1
        for i in range(n):
            assert np.array_equal(finals[i].bits, inst == 7)
