"""
Tests for synthetic scene generation, weak labels and the frame format
"""

import logging
from dataclasses import replace

import numpy as np
import pytest

from src.ignet_core.config import SceneConfig, default_classes
from src.ignet_core.errors import FrameFormatError, ShapeError
from src.ignet_core.geometry import fov_mask
from src.ignet_data.dataset import generate_dataset, load_dataset, write_dataset
from src.ignet_data.frame import NUM_POINT_FEATURES, SKY, point_features
from src.ignet_data.frame_io import decode_frame, encode_frame, read_frame, write_frame
from src.ignet_data.scene import build_scene, gen_scene, with_domain
from src.ignet_data.weak_labels import mark_labeled, sample_frames, scribble_sim
from src.ignet_eval.metrics import border_split
from tests.helpers import make_frame, ring_cloud


@pytest.fixture
def scene_cfg():
    """A coarse scan so generation stays fast"""
    return SceneConfig(azimuth_step_deg=3.0, rings=6)


def test_gen_scene_is_deterministic(scene_cfg):
    """Test that a seed fixes the whole frame"""
    a = gen_scene(7, scene_cfg)
    b = gen_scene(7, scene_cfg)
    np.testing.assert_array_equal(a.cloud.xyz, b.cloud.xyz)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.class_map, b.class_map)
    c = gen_scene(8, scene_cfg)
    assert a.num_points != c.num_points or not np.array_equal(a.cloud.xyz, c.cloud.xyz)


def test_generated_frame_is_well_formed(scene_cfg):
    """Test label range, image range and scan range of a generated frame"""
    frame = gen_scene(3, scene_cfg)
    assert frame.num_points > 0
    assert frame.labels.min() >= 0
    assert frame.labels.max() < scene_cfg.num_classes
    assert frame.weak_mask.all()
    assert frame.image.min() >= 0.0 and frame.image.max() <= 1.0
    ranges = np.linalg.norm(frame.cloud.xyz, axis=1)
    assert ranges.max() <= scene_cfg.max_range + 1e-9
    # ground is class 0 and the scan always reaches it
    assert (frame.labels == 0).any()


def test_camera_sees_sky_somewhere(scene_cfg):
    """Test that rendered class maps contain sky and valid classes only"""
    maps = [gen_scene(seed, scene_cfg).class_map for seed in range(3)]
    assert any((m == SKY).any() for m in maps)
    for m in maps:
        objects = m[m != SKY]
        assert objects.max() < scene_cfg.num_classes


def test_source_and_target_share_geometry(scene_cfg):
    """Test that the two domains differ in appearance only"""
    target = gen_scene(11, with_domain(scene_cfg, "target"))
    source = gen_scene(11, with_domain(scene_cfg, "source"))
    np.testing.assert_array_equal(target.cloud.xyz, source.cloud.xyz)
    np.testing.assert_array_equal(target.labels, source.labels)
    np.testing.assert_array_equal(target.class_map, source.class_map)
    assert not np.allclose(target.image, source.image)


def test_scribbles_hit_budget_and_avoid_borders(scene_cfg):
    """Test the scribble budget, border avoidance and determinism"""
    frame = gen_scene(5, scene_cfg)
    weak = scribble_sim(frame, 0.08, seed=1)
    border = border_split(frame.cloud, frame.labels)
    assert weak.weak_mask.sum() == int(round(0.08 * frame.num_points))
    assert not (weak.weak_mask & border).any()
    assert weak.frame_labeled
    again = scribble_sim(frame, 0.08, seed=1)
    np.testing.assert_array_equal(weak.weak_mask, again.weak_mask)


def test_unattainable_scribble_budget_labels_all_non_border(caplog):
    """Test the warning when too few non-border points exist"""
    # alternating classes on a ring: every point is a border point
    xyz = ring_cloud(40)
    frame = make_frame(xyz, np.arange(40) % 2, num_classes=2)
    with caplog.at_level(logging.WARNING):
        weak = scribble_sim(frame, 0.5, seed=0)
    assert not weak.weak_mask.any()
    assert "unattainable" in caplog.text


def test_scribble_budget_range():
    """Test that budgets outside (0, 1) are rejected"""
    frame = make_frame(ring_cloud(20), np.zeros(20, dtype=int))
    with pytest.raises(ValueError):
        scribble_sim(frame, 0.0, seed=0)
    with pytest.raises(ValueError):
        scribble_sim(frame, 1.0, seed=0)


def test_sample_frames_spacing():
    """Test uniform spacing of labeled frames"""
    frames = list(range(10))
    assert np.flatnonzero(sample_frames(frames, 0.2, seed=0)).tolist() == [0, 5]
    assert np.flatnonzero(sample_frames(frames, 0.25, seed=4)).tolist() == [1, 4, 7]
    assert sample_frames(frames, 1.0).all()
    with pytest.raises(ValueError):
        sample_frames(frames, 0.0)


def test_mark_labeled_clears_unlabeled_frames():
    """Test that unlabeled frames lose their weak labels"""
    frames = [make_frame(ring_cloud(20), np.zeros(20, dtype=int), seed=i) for i in range(3)]
    marked = mark_labeled(frames, np.array([True, False, True]))
    assert [f.frame_labeled for f in marked] == [True, False, True]
    assert not marked[1].weak_mask.any()
    assert marked[0].weak_mask.all()


def test_unlabeled_frame_rejects_weak_labels():
    """Test that an unlabeled frame cannot carry weak labels"""
    with pytest.raises(ShapeError):
        make_frame(ring_cloud(10), np.zeros(10, dtype=int), weak_mask=np.ones(10), frame_labeled=False)


def test_frame_file_roundtrip(tmp_path, scene_cfg):
    """Test writing and reading back a frame file"""
    frame = scribble_sim(gen_scene(2, scene_cfg), 0.1, seed=0)
    path = write_frame(tmp_path / "f.fdf", frame)
    back = read_frame(path)
    np.testing.assert_array_equal(back.cloud.xyz, frame.cloud.xyz)
    np.testing.assert_array_equal(back.labels, frame.labels)
    np.testing.assert_array_equal(back.weak_mask, frame.weak_mask)
    np.testing.assert_array_equal(back.image, frame.image)
    np.testing.assert_array_equal(back.class_map, frame.class_map)
    np.testing.assert_array_equal(back.cam.K, frame.cam.K)
    assert back.num_classes == frame.num_classes
    assert encode_frame(back) == encode_frame(frame)


def test_malformed_frame_files(tmp_path):
    """Test rejection of bad magic, truncation and trailing bytes"""
    blob = encode_frame(make_frame(ring_cloud(12), np.zeros(12, dtype=int)))
    with pytest.raises(FrameFormatError):
        decode_frame(b"XXXX" + blob[4:])
    with pytest.raises(FrameFormatError):
        decode_frame(blob[:-3])
    with pytest.raises(FrameFormatError):
        decode_frame(blob + b"\x00")
    with pytest.raises(FileNotFoundError):
        read_frame(tmp_path / "missing.fdf")


def test_written_datasets_are_byte_identical(tmp_path, scene_cfg):
    """Test that equal seeds write identical files"""
    kwargs = dict(scene=scene_cfg, scribble_budget=0.1, val_frames=1, source_frames=1)
    write_dataset(tmp_path / "a", generate_dataset(2, 9, **kwargs))
    write_dataset(tmp_path / "b", generate_dataset(2, 9, **kwargs))
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    assert len(files_a) == 5
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_semi_dataset_roundtrip(tmp_path, scene_cfg):
    """Test a semi-supervised dataset through disk"""
    data = generate_dataset(4, 1, scene=scene_cfg, semi_rate=0.5, val_frames=1, source_frames=1)
    assert data.semi
    assert data.manifest["mode"] == "semi"
    assert sum(f.frame_labeled for f in data.train) == 2
    loaded = load_dataset(write_dataset(tmp_path / "ds", data))
    assert loaded.semi
    assert [f.frame_labeled for f in loaded.train] == [f.frame_labeled for f in data.train]
    assert loaded.scene.num_classes == scene_cfg.num_classes
    assert loaded.scene.rings == scene_cfg.rings
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nothing")


def test_point_features_columns():
    """Test the per-point feature columns"""
    xyz = ring_cloud(30, radius=10.0, z=-1.0)
    feats = point_features(make_frame(xyz, np.zeros(30, dtype=int)).cloud, max_range=50.0)
    assert feats.shape == (30, NUM_POINT_FEATURES)
    np.testing.assert_allclose(feats[:, 3], 0.2)
    np.testing.assert_allclose(feats[:, 2], -1.0)
    np.testing.assert_allclose(feats[:, 4:], 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_point_labels_match_solid_membership(scene_cfg, seed):
    """Test every label against the analytic solids of its scene"""
    frame = gen_scene(seed, scene_cfg)
    scene = build_scene(seed, scene_cfg)
    xyz, labels = frame.cloud.xyz, frame.labels

    ground = labels == 0
    np.testing.assert_allclose(xyz[ground, 2], scene.ground_z, atol=1e-9)
    for c in np.unique(labels[~ground]):
        members = np.zeros(len(xyz), dtype=bool)
        for solid in scene.solids:
            if solid.class_id == c:
                members |= solid.contains(xyz, tol=1e-6)
        assert members[labels == c].all()
    # surface hits only: nothing lies strictly inside a solid
    for solid in scene.solids:
        assert not solid.contains(xyz, tol=-1e-6).any()


def test_scene_without_objects_is_all_ground(scene_cfg):
    """Test that zero object counts give a ground-only scan"""
    empty = replace(
        scene_cfg,
        classes=[replace(c, count_min=0, count_max=0) for c in default_classes()],
    )
    frame = gen_scene(4, empty)
    assert frame.num_points > 0
    assert (frame.labels == 0).all()
    assert build_scene(4, empty).solids == []


@pytest.mark.parametrize("seed", range(3))
def test_camera_sees_fewer_points_than_it_misses(scene_cfg, seed):
    """Test that the in-image point set is smaller than the out-of-image set"""
    frame = gen_scene(seed, scene_cfg)
    inside = int(fov_mask(frame.cloud, frame.cam).sum())
    assert 0 < inside < frame.num_points - inside


def test_rewriting_a_dataset_drops_stale_frames(tmp_path, scene_cfg):
    """Test that writing into an existing dataset directory replaces its frames"""
    kwargs = dict(scene=scene_cfg, val_frames=1, source_frames=1)
    write_dataset(tmp_path / "ds", generate_dataset(3, 0, **kwargs))
    write_dataset(tmp_path / "ds", generate_dataset(2, 1, **kwargs))
    loaded = load_dataset(tmp_path / "ds")
    assert len(loaded.train) == 2
    assert len(list((tmp_path / "ds" / "train").glob("*.fdf"))) == 2
    assert loaded.manifest["seed"] == 1
