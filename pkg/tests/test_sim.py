import json
import math

import numpy as np
import pytest

from evgrid.grid import GridSpec, Pose2D, read_grid, world_to_cell
from evgrid.rayism import RadarNoiseModel
from evgrid.sim import (
    SceneParams,
    Scene,
    SimConfig,
    accumulated_ground_truth,
    augment_arrays,
    corner_sensor_poses,
    detection_json,
    detections_from_jsonl,
    generate_scene,
    l_shape,
    lidar_ground_truth,
    load_manifest,
    occupied_fraction,
    points_in_polygon,
    polygon_area,
    polygon_edges,
    ray_hits,
    rect,
    simulate_radar,
    write_dataset,
    _scene_seed,
)

SPEC = GridSpec(side_cells=32, cell_size=0.5)


class TestGeometry:
    def test_rect_area(self):
        assert polygon_area(rect(0, 0, 2, 3)) == pytest.approx(6.0)

    def test_l_shape_area(self):
        assert polygon_area(l_shape(0, 0, 2.0, 1.5, 0.8, 0.5)) == pytest.approx(
            2.0 * 1.5 - 0.8 * 0.5
        )

    def test_points_in_polygon(self):
        poly = rect(0, 0, 2, 2)
        pts = np.array([[1.0, 1.0], [3.0, 1.0], [-0.1, 0.5]])
        assert points_in_polygon(pts, poly).tolist() == [True, False, False]

    def test_l_shape_notch_is_outside(self):
        poly = l_shape(0, 0, 2.0, 2.0, 1.0, 1.0)
        pts = np.array([[0.5, 0.5], [1.5, 1.5]])
        assert points_in_polygon(pts, poly).tolist() == [True, False]

    def test_ray_hit_distance(self):
        edges = polygon_edges([rect(3, -1, 4, 1)])
        origins = np.array([[0.0, 0.0], [0.0, 0.0]])
        dirs = np.array([[1.0, 0.0], [0.0, 1.0]])
        t = ray_hits(origins, dirs, edges)
        assert t[0] == pytest.approx(3.0)
        assert t[1] == math.inf

    def test_ray_from_inside_hits_far_side(self):
        edges = polygon_edges([rect(-1, -1, 1, 1)])
        t = ray_hits(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), edges)
        assert t[0] == pytest.approx(1.0)


class TestSceneGeneration:
    def test_deterministic(self):
        a = generate_scene(42)
        b = generate_scene(42)
        assert len(a.static_shapes) == len(b.static_shapes)
        for pa, pb in zip(a.static_shapes, b.static_shapes):
            assert np.array_equal(pa, pb)
        assert a.ego == b.ego

    def test_different_seeds_differ(self):
        a, b = generate_scene(1), generate_scene(2)
        same = len(a.static_shapes) == len(b.static_shapes) and all(
            np.array_equal(pa, pb) for pa, pb in zip(a.static_shapes, b.static_shapes)
        )
        assert not same or a.ego != b.ego

    def test_empty_scene(self):
        scene = generate_scene(0, SceneParams(n_shapes=0))
        assert scene.static_shapes == [] and scene.dynamic_objects == []

    def test_occupied_fraction_band(self):
        fracs = [occupied_fraction(generate_scene(s), SPEC) for s in range(40)]
        assert all(0.02 <= f <= 0.40 for f in fracs)

    def test_at_time_moves_dynamics_only(self):
        scene = Scene([rect(5, -1, 6, 1)], [(rect(0, 0, 1, 1), np.array([2.0, 0.0]))],
                      Pose2D(), rng_seed=0)
        later = scene.at_time(1.5)
        assert np.array_equal(later.static_shapes[0], scene.static_shapes[0])
        assert np.allclose(later.dynamic_objects[0][0], scene.dynamic_objects[0][0] + [3.0, 0.0])


class TestLidarGroundTruth:
    def _wall_scene(self):
        # one wall 5m ahead of an axis-aligned ego at the origin
        return Scene([rect(5.0, -4.0, 5.6, 4.0)], [], Pose2D(), rng_seed=0)

    def test_free_occupied_unknown_layout(self):
        target, visible = lidar_ground_truth(self._wall_scene(), SPEC)
        free_cell = world_to_cell(SPEC, (3.0, 0.0), Pose2D())
        wall_cell = world_to_cell(SPEC, (5.1, 0.0), Pose2D())
        behind_cell = world_to_cell(SPEC, (7.0, 0.0), Pose2D())
        assert target.data[(0,) + free_cell] == 1.0
        assert target.data[(1,) + wall_cell] == 1.0
        assert target.data[(2,) + behind_cell] == 1.0

    def test_visible_iff_not_unknown(self):
        for seed in (0, 3, 11):
            target, visible = lidar_ground_truth(generate_scene(seed), SPEC)
            assert np.array_equal(visible.data[0] > 0.5, target.data[2] < 0.5)

    def test_channels_partition(self):
        target, _ = lidar_ground_truth(generate_scene(5), SPEC)
        assert np.allclose(target.data.sum(axis=0), 1.0)

    def test_per_ray_oracle(self):
        scene = generate_scene(7)
        target, _ = lidar_ground_truth(scene, SPEC)
        edges = polygon_edges(list(scene.static_shapes))
        ego = scene.ego
        rng = np.random.default_rng(0)
        for ang in rng.uniform(-math.pi, math.pi, size=30):
            d = np.array([[math.cos(ang), math.sin(ang)]])
            t = ray_hits(np.array([[ego.x, ego.y]]), d, edges)[0]
            probe = min(t, SPEC.extent) * 0.5
            cell = world_to_cell(SPEC, (ego.x + d[0, 0] * probe, ego.y + d[0, 1] * probe), ego)
            if cell is not None:
                # the midpoint of the ray up to its first hit is never occupied
                assert target.data[(1,) + cell] == 0.0

    def test_dynamic_objects_absent_from_single_frame_truth(self):
        scene = Scene([], [(rect(3.0, -0.5, 5.0, 0.5), np.array([2.0, 0.0]))],
                      Pose2D(), rng_seed=0)
        target, _ = lidar_ground_truth(scene, SPEC)
        assert np.all(target.data[1] == 0.0)

    def test_accumulated_frames_produce_conflict(self):
        scene = Scene([], [(rect(3.0, -0.5, 5.0, 0.5), np.array([3.0, 0.0]))],
                      Pose2D(), rng_seed=0)
        target, _ = accumulated_ground_truth(scene, SPEC, SimConfig(frames=3))
        conflict = (target.data[0] == 0.5) & (target.data[1] == 0.5)
        assert conflict.any()

    def test_accumulated_mask_is_frame_zero_scan(self):
        scene = Scene([rect(3.0, -1.0, 3.6, 1.0), rect(7.0, -4.0, 7.6, 4.0)], [],
                      Pose2D(), rng_seed=0)
        cfg = SimConfig(frames=3, ego_step=2.0)
        target, visible = accumulated_ground_truth(scene, SPEC, cfg)
        single_target, single_visible = lidar_ground_truth(scene, SPEC, cfg)
        assert np.array_equal(visible.data, single_visible.data)
        # later scans map cells behind the near box, so some hidden cells
        # now carry a known target
        hidden_known = (visible.data[0] == 0.0) & (target.data[2] < 0.5)
        assert hidden_known.any()
        # frame-0 knowledge never gets lost by accumulation
        known_now = single_target.data[2] < 0.5
        assert np.all(target.data[2][known_now] < 0.5)


class TestRadar:
    def test_corner_sensor_geometry(self):
        poses = corner_sensor_poses(Pose2D())
        assert sorted(poses) == [0, 1, 2, 3]
        assert poses[0].x == pytest.approx(1.8) and poses[0].y == pytest.approx(0.8)
        rot = corner_sensor_poses(Pose2D(heading=math.pi / 2))
        assert rot[0].x == pytest.approx(-0.8) and rot[0].y == pytest.approx(1.8)

    def test_no_detections_when_disabled(self):
        scene = generate_scene(3)
        cfg = SimConfig(detection_prob=0.0, clutter_rate=0.0)
        _, dets, flags = simulate_radar(scene, SPEC, cfg)
        assert dets == [] and flags == []

    def test_detection_ranges_match_visibility_oracle(self):
        scene = generate_scene(9, SceneParams(p_dynamic=0.0))
        cfg = SimConfig(detection_prob=1.0, clutter_rate=0.0,
                        noise=RadarNoiseModel(sigma_r=1e-6, sigma_phi=1e-9),
                        vr_sigma=1e-9, max_detections=10_000)
        _, dets, flags = simulate_radar(scene, SPEC, cfg)
        assert len(dets) > 0
        edges = polygon_edges(list(scene.static_shapes))
        poses = corner_sensor_poses(scene.ego)
        for det in dets:
            pose = poses[det.sensor_id]
            ang = pose.heading + det.phi
            d = np.array([[math.cos(ang), math.sin(ang)]])
            t = ray_hits(np.array([[pose.x, pose.y]]), d, edges)[0]
            # every echo comes from the first surface along its bearing
            assert det.r == pytest.approx(t, abs=1e-3)

    def test_static_scene_velocities_near_zero(self):
        scene = generate_scene(9, SceneParams(p_dynamic=0.0))
        cfg = SimConfig(detection_prob=1.0, clutter_rate=0.0, vr_sigma=1e-6)
        _, dets, flags = simulate_radar(scene, SPEC, cfg)
        assert all(abs(d.v_r) < 1e-3 for d in dets)
        assert not any(flags)

    def test_moving_object_flagged_dynamic(self):
        scene = Scene([], [(rect(4.0, -0.5, 6.0, 0.5), np.array([3.0, 0.0]))],
                      Pose2D(), rng_seed=0)
        cfg = SimConfig(detection_prob=1.0, clutter_rate=0.0, vr_sigma=1e-6)
        _, dets, flags = simulate_radar(scene, SPEC, cfg)
        assert len(dets) > 0 and all(flags)

    def test_detection_cap(self):
        scene = generate_scene(4, SceneParams(p_dynamic=0.0))
        cfg = SimConfig(detection_prob=1.0, clutter_rate=0.0, max_detections=5)
        _, dets, _ = simulate_radar(scene, SPEC, cfg)
        per_sensor = {}
        for det in dets:
            per_sensor[det.sensor_id] = per_sensor.get(det.sensor_id, 0) + 1
        assert all(v <= 5 for v in per_sensor.values())

    def test_reproducible_with_rng(self):
        scene = generate_scene(6)
        a = simulate_radar(scene, SPEC, rng=np.random.default_rng(1))
        b = simulate_radar(scene, SPEC, rng=np.random.default_rng(1))
        assert np.array_equal(a[0].data, b[0].data)
        assert a[1] == b[1]


class TestDetectionsJsonl:
    def test_round_trip(self):
        from evgrid.rayism import Detection

        dets = [Detection(r=5.0, phi=0.1, v_r=-0.3, sensor_id=2, t=1.0),
                Detection(r=1.5, phi=-0.8, v_r=0.0, sensor_id=0)]
        text = "".join(detection_json(d) + "\n" for d in dets)
        assert detections_from_jsonl(text) == dets

    def test_line_is_compact_sorted_json(self):
        from evgrid.rayism import Detection

        line = detection_json(Detection(r=1.0, phi=0.0))
        assert json.loads(line) == {"t": 0.0, "sensor_id": 0, "r": 1.0, "phi": 0.0, "v_r": 0.0}
        assert " " not in line


class TestDataset:
    def test_write_is_deterministic(self, tmp_path):
        kw = dict(n_scenes=4, spec=GridSpec(16, 0.5), master_seed=7,
                  cfg=SimConfig(lidar_rays=90))
        m1 = write_dataset(out_dir=tmp_path / "a", **kw)
        m2 = write_dataset(out_dir=tmp_path / "b", **kw)
        assert m1 == m2
        for rel in ["manifest.json", "samples/00002/radar.grid",
                    "samples/00002/target.grid", "samples/00002/detections.jsonl"]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_splits_partition_samples(self, tmp_path):
        m = write_dataset(n_scenes=10, spec=GridSpec(16, 0.5), out_dir=tmp_path,
                          cfg=SimConfig(lidar_rays=90))
        ids = sorted(sid for ids in m["splits"].values() for sid in ids)
        assert ids == [f"{i:05d}" for i in range(10)]
        assert len(m["splits"]["train"]) == 7

    def test_manifest_loads_and_grids_read_back(self, tmp_path):
        write_dataset(n_scenes=2, spec=GridSpec(16, 0.5), out_dir=tmp_path,
                      cfg=SimConfig(lidar_rays=90))
        m = load_manifest(tmp_path)
        assert m["n_scenes"] == 2
        g = read_grid(tmp_path / "samples" / "00000" / "target.grid")
        assert g.data.shape == (3, 16, 16)
        assert np.allclose(g.data.sum(axis=0), 1.0, atol=1e-6)

    def test_scene_seeds_distinct(self):
        seeds = {_scene_seed(0, i) for i in range(1000)}
        assert len(seeds) == 1000
        assert _scene_seed(0, 0) != _scene_seed(1, 0)


class TestAugment:
    def test_same_transform_applied_to_all(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(size=(3, 8, 8))
        b = rng.uniform(size=(1, 8, 8))
        out_a, out_b = augment_arrays([a, b], k_rot=1, flip_h=True, flip_v=False)
        ref_a = np.rot90(a[:, :, ::-1], k=1, axes=(1, 2))
        ref_b = np.rot90(b[:, :, ::-1], k=1, axes=(1, 2))
        assert np.array_equal(out_a, ref_a) and np.array_equal(out_b, ref_b)

    def test_identity(self):
        a = np.arange(2 * 4 * 4, dtype=float).reshape(2, 4, 4)
        (out,) = augment_arrays([a], k_rot=0, flip_h=False, flip_v=False)
        assert np.array_equal(out, a)

    def test_double_flip_is_rot180(self):
        a = np.arange(16, dtype=float).reshape(1, 4, 4)
        (out,) = augment_arrays([a], k_rot=0, flip_h=True, flip_v=True)
        assert np.array_equal(out, np.rot90(a, k=2, axes=(1, 2)))

    def test_outputs_contiguous(self):
        a = np.zeros((1, 4, 4))
        (out,) = augment_arrays([a], k_rot=3, flip_h=True, flip_v=True)
        assert out.flags["C_CONTIGUOUS"]
