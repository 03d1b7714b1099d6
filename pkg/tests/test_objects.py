import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vobj.geometry import AABB
from vobj.objects import (
    AssociationConfig,
    Detection,
    ObjectMap,
    add_keyframe,
    associate,
    backproject,
    dilate_bbox,
    extract_detections,
    keyframe_due,
    rle_decode,
    rle_encode,
    sample_training_pixels,
    update_bounds,
)
from vobj.render import CameraIntrinsics

INTR = CameraIntrinsics(fx=100.0, fy=100.0, cx=40.0, cy=30.0, width=80, height=60)
CFG = AssociationConfig()


def box(lo, hi):
    return AABB(np.asarray(lo, float), np.asarray(hi, float))


def make_detection(aabb, cls=1, frame_id=0, n_pixels=500):
    return Detection(
        frame_id=frame_id,
        semantic_class=cls,
        bbox=(0, 0, 4, 4),
        n_pixels=n_pixels,
        mask=np.ones((4, 4), bool),
        aabb=aabb,
    )


class TestRle:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_random_masks(self, seed):
        rng = np.random.default_rng(seed)
        shape = (int(rng.integers(1, 24)), int(rng.integers(1, 24)))
        mask = rng.random(shape) < rng.uniform(0, 1)
        runs = rle_encode(mask)
        assert np.array_equal(rle_decode(runs, shape), mask)
        # Alternation invariant: first run counts False pixels (may be 0).
        if runs.size > 1:
            assert runs[1:].min() >= 1

    def test_all_true_and_all_false(self):
        t = np.ones((3, 5), bool)
        f = np.zeros((3, 5), bool)
        assert np.array_equal(rle_decode(rle_encode(t), (3, 5)), t)
        assert np.array_equal(rle_decode(rle_encode(f), (3, 5)), f)

    def test_wrong_total_rejected(self):
        with pytest.raises(ValueError):
            rle_decode(np.array([3, 2]), (2, 4))


class TestExtractDetections:
    def make_frame(self, specs):
        """specs: list of (mask_id, bbox(u0,v0,u1,v1), depth value)."""
        depth = np.zeros((INTR.height, INTR.width), np.float32)
        mask = np.zeros((INTR.height, INTR.width), np.int32)
        rgb = np.zeros((INTR.height, INTR.width, 3), np.float32)
        for mid, (u0, v0, u1, v1), z in specs:
            mask[v0:v1, u0:u1] = mid
            depth[v0:v1, u0:u1] = z
        return rgb, depth, mask

    def test_one_detection_per_nonzero_id(self):
        rgb, depth, mask = self.make_frame(
            [(3, (2, 2, 20, 20), 2.0), (7, (40, 30, 70, 55), 3.0)]
        )
        dets = extract_detections(rgb, depth, mask, 0, INTR, np.eye(4), {3: 1, 7: 2}, CFG)
        assert sorted(d.semantic_class for d in dets) == [1, 2]

    def test_small_instances_dropped(self):
        rgb, depth, mask = self.make_frame([(1, (0, 0, 9, 9), 2.0)])  # 81 px < 100
        assert extract_detections(rgb, depth, mask, 0, INTR, np.eye(4), {1: 1}, CFG) == []

    def test_invalid_depth_pixels_do_not_count(self):
        rgb, depth, mask = self.make_frame([(1, (0, 0, 20, 20), 2.0)])
        depth[0:20, 0:20][np.random.default_rng(0).random((20, 20)) < 0.8] = 0.0
        n_valid = int(((mask == 1) & (depth > 0)).sum())
        dets = extract_detections(rgb, depth, mask, 0, INTR, np.eye(4), {1: 1}, CFG)
        assert (len(dets) == 1) == (n_valid >= CFG.min_pixels)

    def test_missing_pose_rejected(self):
        rgb, depth, mask = self.make_frame([(1, (0, 0, 20, 20), 2.0)])
        with pytest.raises(ValueError):
            extract_detections(rgb, depth, mask, 0, INTR, None, {1: 1}, CFG)

    def test_aabb_encloses_back_projected_points_after_trim(self):
        rgb, depth, mask = self.make_frame([(1, (10, 10, 40, 40), 2.5)])
        dets = extract_detections(rgb, depth, mask, 0, INTR, np.eye(4), {1: 1}, CFG)
        (det,) = dets
        vs, us = np.nonzero((mask == 1) & (depth > 0))
        pts = backproject(us.astype(float), vs.astype(float), depth[vs, us], INTR, np.eye(4))
        inside = np.all((pts >= det.aabb.min) & (pts <= det.aabb.max), axis=1)
        assert inside.mean() >= 0.98

    def test_bbox_covers_whole_mask_and_crop_matches(self):
        rgb, depth, mask = self.make_frame([(1, (5, 7, 30, 25), 2.0)])
        (det,) = extract_detections(rgb, depth, mask, 0, INTR, np.eye(4), {1: 1}, CFG)
        assert det.bbox == (5, 7, 30, 25)
        assert det.mask.shape == (18, 25)
        assert det.mask.all()


class TestAssociate:
    def test_matches_same_class_overlapping_box(self):
        omap = ObjectMap()
        omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        det = make_detection(box([0.1, 0, 0], [1.1, 1, 1]), cls=1)
        assert associate([det], omap, CFG) == [1]

    def test_class_mismatch_blocks_match(self):
        omap = ObjectMap()
        omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        det = make_detection(box([0, 0, 0], [1, 1, 1]), cls=2)
        assert associate([det], omap, CFG) == [None]

    def test_low_iou_blocks_match(self):
        omap = ObjectMap()
        omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        det = make_detection(box([0.9, 0.9, 0.9], [1.9, 1.9, 1.9]), cls=1)
        assert associate([det], omap, CFG) == [None]

    def test_greedy_one_to_one_by_descending_iou(self):
        omap = ObjectMap()
        omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        d_good = make_detection(box([0.05, 0, 0], [1.05, 1, 1]), cls=1)
        d_weak = make_detection(box([0.5, 0, 0], [1.5, 1, 1]), cls=1)
        # The higher-IoU detection claims the object; the other gets None.
        assert associate([d_weak, d_good], omap, CFG) == [None, 1]

    def test_two_objects_two_detections(self):
        omap = ObjectMap()
        omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        omap.add_object(1, box([3, 0, 0], [4, 1, 1]), 10.0, 1)
        dets = [
            make_detection(box([3.05, 0, 0], [4.05, 1, 1]), cls=1),
            make_detection(box([0.05, 0, 0], [1.05, 1, 1]), cls=1),
        ]
        assert associate(dets, omap, CFG) == [2, 1]

    def test_background_never_matched(self):
        omap = ObjectMap()
        omap.add_background(box([-5, -5, -5], [5, 5, 5]), 15.0, 0)
        det = make_detection(box([-1, -1, -1], [1, 1, 1]), cls=0)
        assert associate([det], omap, CFG) == [None]

    def test_update_bounds_never_shrinks(self):
        omap = ObjectMap()
        inst = omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        update_bounds(inst, box([0.5, 0.5, 0.5], [0.8, 0.8, 0.8]))
        np.testing.assert_allclose(inst.aabb.min, [0, 0, 0])
        np.testing.assert_allclose(inst.aabb.max, [1, 1, 1])
        update_bounds(inst, box([-1, 0, 0], [0.5, 2, 1]))
        np.testing.assert_allclose(inst.aabb.min, [-1, 0, 0])
        np.testing.assert_allclose(inst.aabb.max, [1, 2, 1])


class TestKeyframes:
    def test_first_observation_and_every_stride_after(self):
        omap = ObjectMap()
        inst = omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        kept = []
        for i in range(80):
            inst.obs_count += 1
            if keyframe_due(inst, CFG):
                kept.append(i)
        assert kept == [0, 25, 50, 75]

    def test_background_uses_its_own_stride(self):
        omap = ObjectMap()
        bg = omap.add_background(box([-5, -5, -5], [5, 5, 5]), 15.0, 0)
        kept = []
        for i in range(120):
            bg.obs_count += 1
            if keyframe_due(bg, CFG):
                kept.append(i)
        assert kept == [0, 50, 100]

    def test_uncounted_observation_rejected(self):
        omap = ObjectMap()
        inst = omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        with pytest.raises(ValueError):
            keyframe_due(inst, CFG)

    def test_add_keyframe_crops_and_copies(self):
        omap = ObjectMap()
        inst = omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        rgb = np.random.default_rng(0).random((60, 80, 3)).astype(np.float32)
        depth = np.ones((60, 80), np.float32)
        mask = np.zeros((10, 12), bool)
        mask[2:8, 3:9] = True
        kf = add_keyframe(inst, 5, np.eye(4), (20, 10, 32, 20), mask, rgb, depth)
        assert kf.rgb.shape == (10, 12, 3)
        assert kf.depth.shape == (10, 12)
        np.testing.assert_allclose(kf.rgb, rgb[10:20, 20:32])
        rgb[10:20, 20:32] = 0.0
        assert kf.rgb.any()  # crop is a copy, not a view


class TestDilateBbox:
    def test_grows_by_margin_and_clips_to_image(self):
        mask = np.ones((4, 6), bool)
        bbox, grown = dilate_bbox((2, 3, 8, 7), mask, 10, (20, 30))
        assert bbox == (0, 0, 18, 17)
        assert grown.shape == (17, 18)
        assert grown.sum() == mask.sum()
        assert grown[3:7, 2:8].all()
        grown[3:7, 2:8] = False
        assert not grown.any()  # everything outside the original bbox is off-mask

    def test_zero_margin_is_identity(self):
        mask = np.zeros((4, 6), bool)
        mask[1, 2] = True
        bbox, grown = dilate_bbox((5, 5, 11, 9), mask, 0, (20, 30))
        assert bbox == (5, 5, 11, 9)
        assert np.array_equal(grown, mask)


class TestSampleTrainingPixels:
    def make_instance(self, bboxes, mask_fill=True):
        omap = ObjectMap()
        inst = omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        rgb = np.zeros((60, 80, 3), np.float32)
        depth = np.ones((60, 80), np.float32)
        for i, bb in enumerate(bboxes):
            u0, v0, u1, v1 = bb
            mask = np.full((v1 - v0, u1 - u0), mask_fill, bool)
            add_keyframe(inst, i, np.eye(4), bb, mask, rgb, depth)
        return inst

    def test_pixels_inside_bbox_and_mask_bit_consistent(self):
        inst = self.make_instance([(10, 5, 30, 25), (40, 30, 70, 55)])
        kf_idx, u, v, in_mask = sample_training_pixels(inst, seed=0, step=3, n_rays=500)
        for k in (0, 1):
            sel = kf_idx == k
            u0, v0, u1, v1 = inst.keyframes[k].bbox
            assert np.all((u[sel] >= u0) & (u[sel] < u1))
            assert np.all((v[sel] >= v0) & (v[sel] < v1))
        assert in_mask.all()

    def test_off_mask_bit_reflects_mask(self):
        inst = self.make_instance([(0, 0, 20, 20)], mask_fill=False)
        inst.keyframes[0].mask[5:10, 5:10] = True
        _, u, v, in_mask = sample_training_pixels(inst, seed=0, step=0, n_rays=400)
        expect = inst.keyframes[0].mask[v, u]
        assert np.array_equal(in_mask, expect)
        assert in_mask.any() and not in_mask.all()

    def test_deterministic_per_key_and_independent_across_objects(self):
        inst = self.make_instance([(10, 5, 30, 25)])
        a = sample_training_pixels(inst, seed=7, step=11, n_rays=64)
        b = sample_training_pixels(inst, seed=7, step=11, n_rays=64)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)
        c = sample_training_pixels(inst, seed=7, step=12, n_rays=64)
        assert not np.array_equal(a[1], c[1])

    def test_no_keyframes_rejected(self):
        omap = ObjectMap()
        inst = omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        with pytest.raises(ValueError):
            sample_training_pixels(inst, seed=0, step=0, n_rays=8)


class TestObjectMap:
    def test_ids_monotonic_and_background_separate(self):
        omap = ObjectMap()
        omap.add_background(box([-5, -5, -5], [5, 5, 5]), 15.0, 0)
        a = omap.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 1)
        b = omap.add_object(2, box([2, 2, 2], [3, 3, 3]), 10.0, 2)
        assert (a.object_id, b.object_id) == (1, 2)
        assert [i.object_id for i in omap.objects()] == [1, 2]
        assert omap.background.is_background

    def test_duplicate_background_rejected(self):
        omap = ObjectMap()
        omap.add_background(box([-5, -5, -5], [5, 5, 5]), 15.0, 0)
        with pytest.raises(ValueError):
            omap.add_background(box([-5, -5, -5], [5, 5, 5]), 15.0, 1)

    def test_restore_resumes_id_sequence(self):
        omap = ObjectMap()
        src = ObjectMap()
        inst = src.add_object(1, box([0, 0, 0], [1, 1, 1]), 10.0, 0)
        inst2 = src.add_object(1, box([2, 0, 0], [3, 1, 1]), 10.0, 1)
        omap.restore(inst2)
        with pytest.raises(ValueError):
            omap.restore(inst2)
        nxt = omap.add_object(1, box([5, 0, 0], [6, 1, 1]), 10.0, 2)
        assert nxt.object_id == inst2.object_id + 1
