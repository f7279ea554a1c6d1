import numpy as np
import pytest

from stereofuse import PipelineConfig, RegionMask, ScalarField, epe, run_pipeline
from stereofuse.pipeline import per_iteration_epe
from stereofuse.synth import MonoModel, SceneSpec, generate_scene


@pytest.fixture(scope="module")
def scene():
    spec = SceneSpec(seed=3, width=320, height=256, layer_count=2,
                     disparity_range=(6.0, 22.0), texture_density=0.5,
                     textureless_fraction=0.2,
                     mono=MonoModel(affines=((0.05, 0.3),), noise_sigma=0.02))
    return generate_scene(spec)


@pytest.fixture(scope="module")
def config():
    return PipelineConfig(d_max=16)


class TestRunPipeline:
    def test_matching_only_mode(self, scene, config):
        result = run_pipeline(scene.left, scene.right, None, config)
        assert result.fusion is None
        assert result.registration is None
        assert np.array_equal(result.disparity.data, result.matching_disparity.data)
        assert result.disparity.shape == (256, 320)

    def test_fusion_improves_ill_posed_regions(self, scene, config):
        fused = run_pipeline(scene.left, scene.right, scene.mono_depth, config)
        matching = run_pipeline(scene.left, scene.right, None, config)
        bad = RegionMask("bad", scene.occlusion.mask
                         | scene.region_masks["textureless"].mask)
        good = RegionMask("good", ~scene.occlusion.mask
                          & ~scene.region_masks["textureless"].mask)
        gt = scene.gt_disp_left
        assert epe(fused.disparity, gt, bad) < epe(matching.disparity, gt, bad)
        assert epe(fused.disparity, gt, good) <= 1.1 * epe(matching.disparity, gt, good)

    def test_registration_recovers_scene_affine(self, scene, config):
        result = run_pipeline(scene.left, scene.right, scene.mono_depth, config)
        # mono = 0.05 * d_full + 0.3 and quarter disparities are d_full/4,
        # so the fit should be near a = 1/(4*0.05) = 5, b = -0.3 * 5 = -1.5
        assert result.registration is not None
        assert abs(result.registration.global_a - 5.0) / 5.0 < 0.2
        assert abs(result.registration.global_b + 1.5) < 0.75

    def test_gf_off_matches_matching_only(self, scene, config):
        cfg = PipelineConfig(d_max=16, gf=False)
        no_gf = run_pipeline(scene.left, scene.right, scene.mono_depth, cfg)
        assert no_gf.fusion is None

    def test_ilf_off_runs(self, scene):
        cfg = PipelineConfig(d_max=16, ilf=False)
        result = run_pipeline(scene.left, scene.right, scene.mono_depth, cfg)
        assert all(g is None for g in result.trace.guidance)
        assert result.fusion is not None

    def test_sigmoid_off_and_wide_windows_run(self, scene):
        for cfg in (PipelineConfig(d_max=16, use_sigmoid=False),
                    PipelineConfig(d_max=16, windows=(9, 7, 5, 3))):
            result = run_pipeline(scene.left, scene.right, scene.mono_depth, cfg)
            assert result.fusion is not None
            assert np.all(np.isfinite(result.disparity.data))

    def test_registration_off_fuses_raw_mono(self, scene):
        cfg = PipelineConfig(d_max=16, registration="off")
        result = run_pipeline(scene.left, scene.right, scene.mono_depth, cfg)
        assert result.registration.global_a == 1.0
        assert result.registration.global_b == 0.0
        assert result.fusion is not None

    def test_local_registration_mode(self, scene):
        cfg = PipelineConfig(d_max=16, registration="local", tile=16)
        result = run_pipeline(scene.left, scene.right, scene.mono_depth, cfg)
        assert result.registration.mode == "local"
        assert result.fusion is not None

    def test_degraded_on_constant_mono(self, scene, config):
        flat = ScalarField.full(256, 320, 1.0)
        result = run_pipeline(scene.left, scene.right, flat, config)
        assert result.degraded
        assert "variance" in result.degraded_reason
        assert np.array_equal(result.disparity.data, result.matching_disparity.data)

    def test_per_iteration_epe_monotone_tail(self, scene, config):
        result = run_pipeline(scene.left, scene.right, scene.mono_depth, config)
        values = per_iteration_epe(result, scene.gt_disp_left)
        assert len(values) == config.iterations
        assert all(np.isfinite(values))

    def test_deterministic_across_runs(self, scene, config):
        r1 = run_pipeline(scene.left, scene.right, scene.mono_depth, config)
        r2 = run_pipeline(scene.left, scene.right, scene.mono_depth, config)
        assert np.array_equal(r1.disparity.data, r2.disparity.data)

    def test_sample_mode_seeded(self, scene):
        cfg_a = PipelineConfig(d_max=16, sample_mode=True, seed=9)
        cfg_b = PipelineConfig(d_max=16, sample_mode=True, seed=9)
        cfg_c = PipelineConfig(d_max=16, sample_mode=True, seed=10)
        a = run_pipeline(scene.left, scene.right, scene.mono_depth, cfg_a)
        b = run_pipeline(scene.left, scene.right, scene.mono_depth, cfg_b)
        c = run_pipeline(scene.left, scene.right, scene.mono_depth, cfg_c)
        assert np.array_equal(a.disparity.data, b.disparity.data)
        assert not np.array_equal(a.disparity.data, c.disparity.data)
