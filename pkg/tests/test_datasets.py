import numpy as np
import pytest

from vobj.datasets import (
    Dataset,
    save_frame_images,
    write_intrinsics_file,
    write_pose_file,
)
from vobj.geometry import pose_from_quaternion
from vobj.meshing import nearest_distances, read_ply, sample_mesh_points, watertight_check
from vobj.render import CameraIntrinsics, camera_dirs
from vobj.synth import generate, mini_scene

INTR = CameraIntrinsics(fx=60.0, fy=60.0, cx=16.0, cy=12.0, width=32, height=24)


def make_dataset(root, n_frames=3, depth_scale=1000.0, manifest=None, classes=None):
    rng = np.random.default_rng(7)
    frames = []
    poses = []
    for i in range(n_frames):
        rgb = rng.integers(0, 256, (24, 32, 3), dtype=np.uint8)
        depth = rng.integers(0, 6000, (24, 32), dtype=np.uint16)
        mask = rng.integers(0, 3, (24, 32), dtype=np.uint16)
        save_frame_images(root, i, rgb, depth, mask)
        frames.append((rgb, depth, mask))
        pose = pose_from_quaternion(
            np.array([0.1 * i, -0.2, 1.5]), np.array([0.0, 0.0, np.sin(0.1 * i), np.cos(0.1 * i)])
        )
        poses.append(pose)
    write_pose_file(root, poses)
    write_intrinsics_file(root, INTR, depth_scale)
    if classes is not None:
        (root / "classes.txt").write_text("".join(f"{k} {v}\n" for k, v in classes.items()))
    if manifest is not None:
        import json

        (root / "manifest.json").write_text(json.dumps(manifest))
    return frames, poses


class TestRoundTrip:
    def test_images_round_trip_exactly(self, tmp_path):
        frames, _ = make_dataset(tmp_path, depth_scale=1000.0)
        ds = Dataset(tmp_path)
        assert len(ds) == 3
        for i, (rgb_u8, depth_u16, mask_u16) in enumerate(frames):
            fr = ds.frame(i)
            # 8-bit colour comes back exactly at its quantisation step.
            np.testing.assert_array_equal((fr.rgb * 255).round().astype(np.uint8), rgb_u8)
            # Depth is bit-exact: u16 / scale evaluated once, no re-rounding.
            np.testing.assert_array_equal(fr.depth, depth_u16.astype(np.float32) / 1000.0)
            np.testing.assert_array_equal(fr.mask, mask_u16.astype(np.int32))
            assert fr.frame_id == i

    def test_poses_round_trip(self, tmp_path):
        _, poses = make_dataset(tmp_path)
        ds = Dataset(tmp_path)
        for i, pose in enumerate(poses):
            np.testing.assert_allclose(ds.frame(i).pose, pose, atol=1e-7)
            r = ds.poses[i][:3, :3]
            np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-9)

    def test_intrinsics_and_scale(self, tmp_path):
        make_dataset(tmp_path, depth_scale=5000.0)
        ds = Dataset(tmp_path)
        assert ds.intrinsics == INTR
        assert ds.depth_scale == 5000.0

    def test_classes_and_manifest(self, tmp_path):
        make_dataset(
            tmp_path,
            classes={1: 4, 2: 9},
            manifest={"temporally_consistent_masks": False, "instances": {"1": {"mesh": "gt_mesh/a.ply"}}},
        )
        ds = Dataset(tmp_path)
        assert ds.classes == {1: 4, 2: 9}
        assert ds.temporally_consistent_masks is False
        assert ds.gt_mesh_paths() == {1: tmp_path / "gt_mesh" / "a.ply"}

    def test_defaults_without_optional_files(self, tmp_path):
        make_dataset(tmp_path)
        ds = Dataset(tmp_path)
        assert ds.classes == {}
        assert ds.temporally_consistent_masks is True
        assert ds.gt_mesh_paths() == {}

    def test_iteration_order(self, tmp_path):
        make_dataset(tmp_path, n_frames=4)
        ds = Dataset(tmp_path)
        assert [fr.frame_id for fr in ds] == [0, 1, 2, 3]

    def test_descriptor(self, tmp_path):
        make_dataset(tmp_path, classes={1: 2})
        d = Dataset(tmp_path).descriptor
        assert d.n_frames == 3 and d.root == tmp_path and d.classes == {1: 2}


class TestValidation:
    def test_missing_root(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            Dataset(tmp_path / "nope")

    def test_missing_intrinsics(self, tmp_path):
        make_dataset(tmp_path)
        (tmp_path / "intrinsics.txt").unlink()
        with pytest.raises(FileNotFoundError, match="intrinsics"):
            Dataset(tmp_path)

    def test_bad_intrinsics_field_count(self, tmp_path):
        make_dataset(tmp_path)
        (tmp_path / "intrinsics.txt").write_text("1 2 3\n")
        with pytest.raises(ValueError, match="7 values"):
            Dataset(tmp_path)

    def test_nonpositive_depth_scale(self, tmp_path):
        make_dataset(tmp_path)
        write_intrinsics_file(tmp_path, INTR, -1.0)
        with pytest.raises(ValueError, match="depth_scale"):
            Dataset(tmp_path)

    def test_pose_wrong_field_count(self, tmp_path):
        make_dataset(tmp_path)
        (tmp_path / "poses.txt").write_text("0 1 2 3\n")
        with pytest.raises(ValueError, match="poses.txt:1"):
            Dataset(tmp_path)

    def test_pose_out_of_order(self, tmp_path):
        make_dataset(tmp_path)
        lines = (tmp_path / "poses.txt").read_text().splitlines()
        (tmp_path / "poses.txt").write_text("\n".join([lines[0], lines[2]]) + "\n")
        with pytest.raises(ValueError, match="out of order"):
            Dataset(tmp_path)

    def test_missing_frame_image(self, tmp_path):
        make_dataset(tmp_path)
        (tmp_path / "depth" / "000001.png").unlink()
        with pytest.raises(FileNotFoundError, match="000001"):
            Dataset(tmp_path)

    def test_frame_index_out_of_range(self, tmp_path):
        make_dataset(tmp_path)
        ds = Dataset(tmp_path)
        with pytest.raises(IndexError):
            ds.frame(3)
        with pytest.raises(IndexError):
            ds.frame(-1)

    def test_image_shape_mismatch(self, tmp_path):
        make_dataset(tmp_path)
        wide = CameraIntrinsics(fx=60.0, fy=60.0, cx=32.0, cy=12.0, width=64, height=24)
        write_intrinsics_file(tmp_path, wide, 1000.0)
        ds = Dataset(tmp_path)
        with pytest.raises(ValueError, match="shape"):
            ds.frame(0)


@pytest.fixture(scope="module")
def mini_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini_ds")
    spec = mini_scene(n_frames=6)
    return spec, generate(spec, root, seed=3)


class TestGeneratedScene:
    def test_layout_and_metadata(self, mini_dataset):
        spec, ds = mini_dataset
        assert len(ds) == 6
        assert ds.temporally_consistent_masks is True
        # One class entry per primitive id (ids are 1-based; 0 is background).
        assert sorted(ds.classes) == list(range(1, len(spec.primitives) + 1))

    def test_ground_truth_meshes_closed(self, mini_dataset):
        _, ds = mini_dataset
        paths = ds.gt_mesh_paths()
        assert sorted(paths) == [1, 2]
        for p in paths.values():
            rep = watertight_check(read_ply(p))
            assert rep.is_closed and rep.boundary_edges == 0

    def test_depth_consistent_with_meshes(self, mini_dataset):
        # Backprojected in-mask depth pixels must land on the instance's
        # ground-truth surface (up to 1 mm quantisation + mesh faceting).
        _, ds = mini_dataset
        meshes = {k: read_ply(p) for k, p in ds.gt_mesh_paths().items()}
        rng = np.random.default_rng(0)
        for oid, mesh in meshes.items():
            fr = next(f for f in ds if (f.mask == oid).any())
            ys, xs = np.nonzero((fr.mask == oid) & (fr.depth > 0))
            assert ys.size > 0
            pick = rng.choice(ys.size, size=min(200, ys.size), replace=False)
            dirs = camera_dirs(np.stack([xs[pick], ys[pick]], 1), ds.intrinsics)
            scale = fr.depth[ys[pick], xs[pick]] / dirs[:, 2]
            pts_world = (fr.pose[:3, :3] @ (dirs * scale[:, None]).T).T + fr.pose[:3, 3]
            surf = sample_mesh_points(mesh, 20000, rng)
            assert nearest_distances(pts_world, surf).max() < 0.01

    def test_masks_match_rendered_ids(self, mini_dataset):
        _, ds = mini_dataset
        for fr in ds:
            ids = set(np.unique(fr.mask)) - {0}
            assert ids <= {1, 2}
            assert (fr.depth[fr.mask > 0] > 0).all()
