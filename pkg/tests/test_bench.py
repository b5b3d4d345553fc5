import math

import numpy as np
import pytest

from derender3d.bench import (
    CONFIG_PRESETS,
    ProtocolConfig,
    distance_log_error,
    evaluate_object,
    gen_synthetic_scene,
    orientation_similarity,
    reprojection_error_metric,
    run_benchmark,
    scale_error,
    staged_fit,
)
from derender3d.fitting import FitResult
from derender3d.geometry import Quaternion, YawAngle
from derender3d.raster import SilhouetteImage
from derender3d.scene import occlusion_masks


class TestOrientationSimilarity:
    def test_identical(self):
        assert orientation_similarity(YawAngle(1.3), YawAngle(1.3)) == 1.0

    def test_opposite(self):
        assert abs(orientation_similarity(YawAngle(0.0), YawAngle(math.pi))) < 1e-12

    def test_quarter(self):
        v = orientation_similarity(YawAngle(0.0), YawAngle(math.pi / 2))
        assert abs(v - 0.5) < 1e-12

    def test_symmetric_and_sign_invariant(self, rng):
        for _ in range(20):
            qa = Quaternion(*rng.normal(size=4))
            qb = Quaternion(*rng.normal(size=4))
            ab = orientation_similarity(qa, qb)
            assert abs(ab - orientation_similarity(qb, qa)) < 1e-12
            assert abs(ab - orientation_similarity(-qa, qb)) < 1e-12
            assert abs(ab - orientation_similarity(qa, -qb)) < 1e-12
            assert 0.0 <= ab <= 1.0


class TestDistanceScaleMetrics:
    def test_distance_zero(self):
        assert distance_log_error(7.0, 7.0) == 0.0

    def test_distance_e_fold(self):
        assert abs(distance_log_error(math.e * 3.0, 3.0) - 1.0) < 1e-12

    def test_distance_example(self):
        assert abs(distance_log_error(12.0, 10.0) - math.log(1.2)) < 1e-12

    def test_distance_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            distance_log_error(0.0, 1.0)

    def test_scale_zero(self):
        assert scale_error((1.0, 2.0, 3.0), (1.0, 2.0, 3.0)) == 0.0

    def test_scale_345(self):
        assert abs(scale_error((1.3, 1.0, 1.4), (1.0, 1.0, 1.0)) - 0.5) < 1e-12

    def test_scale_matches_loop_oracle(self, rng):
        for _ in range(50):
            a = rng.uniform(0.5, 3.0, size=3)
            b = rng.uniform(0.5, 3.0, size=3)
            expected = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
            assert abs(scale_error(a, b) - expected) < 1e-12


class TestReprojectionMetric:
    def test_identical(self, rng):
        m = SilhouetteImage((rng.random((16, 16)) > 0.5).astype(float))
        assert reprojection_error_metric(m, m) == 0.0

    def test_complementary(self):
        a = SilhouetteImage(np.zeros((8, 8)))
        b = SilhouetteImage(np.ones((8, 8)))
        assert reprojection_error_metric(a, b) == 1.0

    def test_exact_flip_fraction(self, rng):
        base = (rng.random((20, 20)) > 0.5).astype(float)
        flipped = base.copy()
        idx = rng.choice(400, size=20, replace=False)
        flipped.reshape(-1)[idx] = 1.0 - flipped.reshape(-1)[idx]
        got = reprojection_error_metric(SilhouetteImage(flipped), SilhouetteImage(base))
        assert got == 20 / 400

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            reprojection_error_metric(SilhouetteImage(np.zeros((8, 8))),
                                      SilhouetteImage(np.zeros((9, 8))))


class TestGenSyntheticScene:
    def test_deterministic(self, library):
        a = gen_synthetic_scene(5, "hard", library)
        b = gen_synthetic_scene(5, "hard", library)
        assert a.truth.object_ids() == b.truth.object_ids()
        for oid in a.targets:
            np.testing.assert_array_equal(a.targets[oid].values, b.targets[oid].values)
        for oid in a.truth.object_ids():
            assert a.truth.get(oid).scale == b.truth.get(oid).scale
            assert a.init.get(oid).yaw.theta == b.init.get(oid).yaw.theta

    def test_truth_scores_perfectly(self, library):
        sample = gen_synthetic_scene(6, "hard", library)
        cam = sample.truth.camera
        for oid, truth in sample.truth.objects:
            fake_fit = FitResult(truth, 0.0, [0.0], truth.mesh_index)
            m = evaluate_object(fake_fit, truth, sample.targets[oid], library, cam,
                                ProtocolConfig().raster)
            assert m.orientation_similarity == 1.0
            assert m.distance_log_error == 0.0
            assert m.scale_error == 0.0
            assert m.reprojection_error < 1e-6

    def test_perturbed_init_strictly_worse(self, library):
        for seed in (1, 2, 3):
            sample = gen_synthetic_scene(seed, "hard", library)
            cam = sample.truth.camera
            for oid, truth in sample.truth.objects:
                init = sample.init.get(oid)
                fake = FitResult(init, 0.0, [0.0], init.mesh_index)
                m = evaluate_object(fake, truth, sample.targets[oid], library, cam,
                                    ProtocolConfig().raster)
                assert m.orientation_similarity < 1.0
                assert m.distance_log_error > 0.0
                assert m.scale_error > 0.0

    def test_easy_leaves_scale(self, library):
        sample = gen_synthetic_scene(9, "easy", library)
        for oid, truth in sample.truth.objects:
            assert sample.init.get(oid).scale == truth.scale

    def test_difficulty_validated(self, library):
        with pytest.raises(ValueError):
            gen_synthetic_scene(0, "impossible", library)

    def test_objects_meet_min_pixels(self, library):
        sample = gen_synthetic_scene(11, "hard", library)
        for target in sample.targets.values():
            assert target.values.sum() >= 256


class TestRunBenchmark:
    def test_requires_full(self):
        with pytest.raises(ValueError, match="full"):
            run_benchmark(["single_mesh"], seeds=[0])

    def test_unknown_config(self):
        with pytest.raises(ValueError, match="unknown"):
            run_benchmark(["full", "bogus"], seeds=[0])

    def test_report_shapes_and_determinism(self, library):
        fast = ProtocolConfig(pose_iterations=6, joint_iterations=2,
                              selection_iterations=2)
        r1 = run_benchmark(["full", "single_mesh"], seeds=[3, 4], proto=fast)
        r2 = run_benchmark(["full", "single_mesh"], seeds=[3, 4], proto=fast,
                           workers=2)
        assert r1.to_json() == r2.to_json()
        assert r1.to_csv() == r2.to_csv()
        n_objects = sum(len(gen_synthetic_scene(s, "hard", library).truth.objects)
                        for s in (3, 4))
        per_config = [r for r in r1.records if r["config"] == "full"]
        assert len(per_config) == n_objects
        header, *rows = r1.to_csv().strip().splitlines()
        assert header == "config,orientation_similarity,distance_x1e2,scale,reproj_x1e3"
        assert len(rows) == 2

    def test_presets_exist(self):
        assert set(CONFIG_PRESETS) == {
            "full", "wo_yaw_constraint", "wo_normalized_distance", "single_mesh"
        }


class TestStagedFit:
    def test_trace_covers_both_phases(self, library):
        sample = gen_synthetic_scene(21, "hard", library)
        oid, truth = sample.truth.objects[0]
        masks = occlusion_masks(sample.truth)
        proto = ProtocolConfig(pose_iterations=5, joint_iterations=3)
        res = staged_fit(sample.targets[oid], masks[oid], sample.init.get(oid),
                         library, sample.truth.camera, proto)
        assert len(res.loss_trace) == 8
        assert res.final_loss == res.loss_trace[-1]
        assert res.completed

    def test_descent_endpoint_property(self, library):
        # endpoint-level: median final loss below median initial loss
        proto = ProtocolConfig()
        initial, final = [], []
        for seed in range(3):
            sample = gen_synthetic_scene(seed, "hard", library)
            masks = occlusion_masks(sample.truth)
            for oid, _ in sample.truth.objects:
                res = staged_fit(sample.targets[oid], masks[oid],
                                 sample.init.get(oid), library,
                                 sample.truth.camera, proto)
                initial.append(res.loss_trace[0])
                final.append(res.final_loss)
        assert np.median(final) < np.median(initial)
        assert np.mean([f < i for f, i in zip(final, initial)]) >= 0.95
