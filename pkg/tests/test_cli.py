import json

import numpy as np
import pytest

from stereofuse import EmptyMaskError, ScalarField
from stereofuse.cli import main
from stereofuse.fileio import read_pfm, read_report, write_pfm, write_png
from stereofuse.grid import ImageBuffer
from stereofuse.viz import render_field


class TestViz:
    def test_constant_field_single_midpoint_color(self):
        field = ScalarField.full(4, 4, 3.0)
        img = render_field(field, cmap="turbo")
        flat = img.data.reshape(-1, 3)
        assert np.all(flat == flat[0])
        gray = render_field(field, cmap="gray")
        assert gray.data[0, 0, 0] == pytest.approx(0.5)

    def test_ramp_monotone_progression(self):
        data = np.tile(np.arange(16, dtype=np.float32), (2, 1))
        field = ScalarField.from_array(data)
        img = render_field(field, cmap="gray")
        row = img.data[0, :, 0]
        assert np.all(np.diff(row) >= 0)
        assert row[0] == 0.0 and row[-1] == 1.0

    def test_fixed_range_normalization_contract(self):
        # the render depends only on (data - vmin) / (vmax - vmin): a field and
        # its doubled copy with a doubled range produce the same image
        rng = np.random.default_rng(93)
        data = (rng.random((5, 6)) * 4).astype(np.float32)
        a = ScalarField.from_array(data)
        b = ScalarField.from_array(2.0 * data)
        img_a = render_field(a, cmap="turbo", vmin=0.0, vmax=4.0)
        img_b = render_field(b, cmap="turbo", vmin=0.0, vmax=8.0)
        np.testing.assert_allclose(img_a.data, img_b.data, atol=1e-6)

    def test_invalid_pixels_magenta(self):
        field = ScalarField(np.array([[1.0, 2.0]], dtype=np.float32),
                            np.array([[True, False]]))
        img = render_field(field, cmap="gray")
        np.testing.assert_array_equal(img.data[0, 1], [1.0, 0.0, 1.0])

    def test_all_invalid_rejected(self):
        field = ScalarField(np.zeros((2, 2), dtype=np.float32),
                            np.zeros((2, 2), dtype=bool))
        with pytest.raises(EmptyMaskError):
            render_field(field)


@pytest.fixture()
def scene_dir(tmp_path):
    out = tmp_path / "scene"
    spec = {
        "seed": 3, "width": 128, "height": 96, "layer_count": 2,
        "disparity_range": [6.0, 18.0], "texture_density": 0.5,
        "textureless_fraction": 0.15, "d_max": 64,
        "mono": {"affines": [[0.05, 0.3]], "noise_sigma": 0.02},
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    code = main(["synth", "--spec", str(spec_path), "--out", str(out)])
    assert code == 0
    return out


class TestCmdSynth:
    def test_default_spec_writes_six_files(self, tmp_path):
        out = tmp_path / "default"
        assert main(["synth", "--out", str(out)]) == 0
        files = sorted(p.name for p in out.iterdir())
        assert files == ["gt_disp_left.pfm", "gt_disp_right.pfm", "left.png",
                         "mono_depth.pfm", "right.png", "scene.json"]

    def test_bad_spec_exit_2_names_field(self, tmp_path, capsys):
        spec_path = tmp_path / "bad.json"
        spec_path.write_text(json.dumps({"texture_density": 3.0}))
        code = main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "x")])
        assert code == 2
        assert "texture_density" in capsys.readouterr().err

    def test_same_seed_byte_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert main(["synth", "--out", str(out)]) == 0
        for name in ("left.png", "right.png", "gt_disp_left.pfm",
                     "gt_disp_right.pfm", "mono_depth.pfm", "scene.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestCmdMatch:
    def test_fusion_beats_matching_on_occlusion(self, scene_dir, tmp_path):
        fused_dir = tmp_path / "fused"
        code = main(["match", str(scene_dir / "left.png"), str(scene_dir / "right.png"),
                     "--mono", str(scene_dir / "mono_depth.pfm"),
                     "--gt", str(scene_dir / "gt_disp_left.pfm"),
                     "--set", "d_max=16", "--out", str(fused_dir)])
        assert code == 0
        assert (fused_dir / "disparity.pfm").exists()
        assert (fused_dir / "config.ini").exists()
        report = read_report((fused_dir / "report.json").read_bytes())
        assert report.extra["mode"] == "fusion"
        assert len(report.extra["per_iteration_epe"]) == 8
        assert report.extra["loss"]["total"] > 0
        assert len(report.extra["loss"]["iteration_terms"]) == 8

    def test_matching_only_when_mono_absent(self, scene_dir, tmp_path):
        out = tmp_path / "plain"
        code = main(["match", str(scene_dir / "left.png"), str(scene_dir / "right.png"),
                     "--set", "d_max=16", "--out", str(out)])
        assert code == 0
        report = read_report((out / "report.json").read_bytes())
        assert report.extra["mode"] == "matching_only"

    def test_ablate_ilf_off(self, scene_dir, tmp_path):
        out = tmp_path / "ablate"
        code = main(["match", str(scene_dir / "left.png"), str(scene_dir / "right.png"),
                     "--mono", str(scene_dir / "mono_depth.pfm"),
                     "--set", "d_max=16", "--ablate", "ilf=off", "--out", str(out)])
        assert code == 0
        assert "ilf = false" in (out / "config.ini").read_text()

    def test_unreadable_input_exit_2(self, tmp_path):
        code = main(["match", str(tmp_path / "missing.png"),
                     str(tmp_path / "missing2.png"), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_degraded_registration_exit_3_with_fallback(self, scene_dir, tmp_path):
        flat = ScalarField.full(96, 128, 1.0)
        mono_path = tmp_path / "flat.pfm"
        mono_path.write_bytes(write_pfm(flat))
        out = tmp_path / "degraded"
        code = main(["match", str(scene_dir / "left.png"), str(scene_dir / "right.png"),
                     "--mono", str(mono_path), "--set", "d_max=16",
                     "--out", str(out)])
        assert code == 3
        assert (out / "disparity.pfm").exists()
        report = read_report((out / "report.json").read_bytes())
        assert report.extra["degraded"] is True

    def test_determinism_across_thread_counts_and_runs(self, scene_dir, tmp_path):
        payloads = []
        for i, threads in enumerate((1, 2, 8, 1)):
            out = tmp_path / f"run{i}"
            code = main(["match", str(scene_dir / "left.png"),
                         str(scene_dir / "right.png"),
                         "--mono", str(scene_dir / "mono_depth.pfm"),
                         "--set", "d_max=16", "--seed", "5",
                         "--threads", str(threads), "--out", str(out)])
            assert code == 0
            payloads.append((out / "disparity.pfm").read_bytes())
        assert all(p == payloads[0] for p in payloads)


class TestCmdEval:
    def test_pred_equals_gt_all_zero(self, scene_dir, tmp_path):
        report_path = tmp_path / "report.json"
        code = main(["eval", str(scene_dir / "gt_disp_left.pfm"),
                     "--gt", str(scene_dir / "gt_disp_left.pfm"),
                     "--out", str(report_path)])
        assert code == 0
        report = read_report(report_path.read_bytes())
        assert report.metrics["all"]["epe"] == 0.0
        assert report.metrics["all"]["bad2"] == 0.0

    def test_occ_split_and_custom_mask(self, scene_dir, tmp_path):
        mask_img = ImageBuffer(np.ones((96, 128, 1), dtype=np.float32))
        mask_path = tmp_path / "mask.png"
        mask_path.write_bytes(write_png(mask_img))
        report_path = tmp_path / "report.json"
        code = main(["eval", str(scene_dir / "gt_disp_left.pfm"),
                     "--gt", str(scene_dir / "gt_disp_left.pfm"),
                     "--gt-right", str(scene_dir / "gt_disp_right.pfm"),
                     "--mask", f"roi={mask_path}",
                     "--out", str(report_path)])
        assert code == 0
        report = read_report(report_path.read_bytes())
        assert set(report.metrics) == {"all", "occ", "nonocc", "roi"}

    def test_three_checkpoints_mean_std(self, scene_dir, tmp_path):
        gt = read_pfm((scene_dir / "gt_disp_left.pfm").read_bytes())
        paths = []
        for i, offset in enumerate((0.5, 1.0, 1.5)):
            pred = ScalarField(gt.data + np.float32(offset), gt.valid)
            p = tmp_path / f"pred{i}.pfm"
            p.write_bytes(write_pfm(pred))
            paths.append(str(p))
        report_path = tmp_path / "agg.json"
        code = main(["eval", *paths, "--gt", str(scene_dir / "gt_disp_left.pfm"),
                     "--out", str(report_path)])
        assert code == 0
        report = read_report(report_path.read_bytes())
        assert report.stats["all"]["epe"]["mean"] == pytest.approx(1.0, abs=1e-4)
        assert report.stats["all"]["epe"]["std"] == pytest.approx(
            np.sqrt(((0.5 - 1) ** 2 + 0 + (1.5 - 1) ** 2) / 3), abs=1e-4)

    def test_report_to_stdout_when_no_out(self, scene_dir, capsys):
        code = main(["eval", str(scene_dir / "gt_disp_left.pfm"),
                     "--gt", str(scene_dir / "gt_disp_left.pfm")])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["metrics"]["all"]["epe"] == 0.0

    def test_dim_mismatch_exit_2(self, scene_dir, tmp_path):
        small = ScalarField.full(4, 4, 1.0)
        p = tmp_path / "small.pfm"
        p.write_bytes(write_pfm(small))
        code = main(["eval", str(p), "--gt", str(scene_dir / "gt_disp_left.pfm")])
        assert code == 2

    def test_counting_oracle_on_4x4_pair(self, tmp_path):
        rng = np.random.default_rng(92)
        pred = (rng.random((4, 4)) * 5).astype(np.float32)
        gt = (rng.random((4, 4)) * 5).astype(np.float32)
        pp = tmp_path / "pred.pfm"
        gp = tmp_path / "gt.pfm"
        pp.write_bytes(write_pfm(ScalarField.from_array(pred)))
        gp.write_bytes(write_pfm(ScalarField.from_array(gt)))
        rp = tmp_path / "r.json"
        assert main(["eval", str(pp), "--gt", str(gp), "--bad", "2",
                     "--out", str(rp)]) == 0
        report = read_report(rp.read_bytes())
        err = np.abs(pred.astype(np.float64) - gt.astype(np.float64))
        assert report.metrics["all"]["epe"] == pytest.approx(err.mean(), rel=1e-4)
        assert report.metrics["all"]["bad2"] == pytest.approx(
            100.0 * (err >= 2.0).mean(), rel=1e-6)


class TestCmdViz:
    def test_render_field_to_png(self, scene_dir, tmp_path):
        out = tmp_path / "disp.png"
        code = main(["viz", str(scene_dir / "gt_disp_left.pfm"),
                     "--cmap", "turbo", "--out", str(out)])
        assert code == 0
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_fixed_range_identical_renders(self, tmp_path):
        rng = np.random.default_rng(94)
        data = (rng.random((8, 8)) * 3).astype(np.float32)
        pa, pb = tmp_path / "a.pfm", tmp_path / "b.pfm"
        pa.write_bytes(write_pfm(ScalarField.from_array(data)))
        pb.write_bytes(write_pfm(ScalarField.from_array(10.0 * data)))
        oa, ob = tmp_path / "a.png", tmp_path / "b.png"
        assert main(["viz", str(pa), "--range", "0,3", "--out", str(oa)]) == 0
        assert main(["viz", str(pb), "--range", "0,30", "--out", str(ob)]) == 0
        assert oa.read_bytes() == ob.read_bytes()


class TestAblationSweep:
    @pytest.mark.parametrize("overrides", [
        ["windows=1"],
        ["windows=3"],
        ["windows=9,7,5,3"],
        ["use_sigmoid=off"],
        ["amplitude=2"],
        ["amplitude=3"],
        ["ilf=off"],
        ["gf=off"],
        ["registration=off"],
        ["registration=local"],
        ["confidence=cost"],
        ["confidence=hybrid"],
        ["sample_mode=on"],
        ["loss_exponent=raft"],
    ])
    def test_every_knob_runs_end_to_end(self, scene_dir, tmp_path, overrides):
        out = tmp_path / "sweep"
        args = ["match", str(scene_dir / "left.png"), str(scene_dir / "right.png"),
                "--mono", str(scene_dir / "mono_depth.pfm"),
                "--gt", str(scene_dir / "gt_disp_left.pfm"),
                "--set", "d_max=16", "--out", str(out)]
        for pair in overrides:
            args.extend(["--ablate", pair])
        assert main(args) == 0
        disp = read_pfm((out / "disparity.pfm").read_bytes())
        assert np.all(np.isfinite(disp.data[disp.valid]))


class TestCmdVizErrors:
    def test_empty_valid_set_exit_2(self, tmp_path):
        field = ScalarField(np.zeros((3, 3), dtype=np.float32),
                            np.zeros((3, 3), dtype=bool))
        p = tmp_path / "empty.pfm"
        p.write_bytes(write_pfm(field))
        code = main(["viz", str(p), "--out", str(tmp_path / "x.png")])
        assert code == 2


class TestCmdRegister:
    def test_global_registration_outputs(self, tmp_path):
        rng = np.random.default_rng(90)
        mono = rng.uniform(1, 20, size=(64, 64)).astype(np.float32)
        disp = (2.0 * mono + 3.0).astype(np.float32)
        mono_path = tmp_path / "mono.pfm"
        disp_path = tmp_path / "disp.pfm"
        mono_path.write_bytes(write_pfm(ScalarField.from_array(mono)))
        disp_path.write_bytes(write_pfm(ScalarField.from_array(disp)))
        out = tmp_path / "reg"
        code = main(["register", "--mono", str(mono_path), "--disp", str(disp_path),
                     "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "registration.json").read_text())
        assert doc["a"] == pytest.approx(2.0, abs=1e-4)
        assert doc["b"] == pytest.approx(3.0, abs=1e-3)
        registered = read_pfm((out / "registered.pfm").read_bytes())
        np.testing.assert_allclose(registered.data, disp, atol=1e-2)

    def test_local_mode_writes_param_fields(self, tmp_path):
        rng = np.random.default_rng(91)
        mono = rng.uniform(1, 20, size=(64, 64)).astype(np.float32)
        disp = (1.5 * mono - 2.0).astype(np.float32)
        mono_path = tmp_path / "mono.pfm"
        disp_path = tmp_path / "disp.pfm"
        mono_path.write_bytes(write_pfm(ScalarField.from_array(mono)))
        disp_path.write_bytes(write_pfm(ScalarField.from_array(disp)))
        out = tmp_path / "reg_local"
        code = main(["register", "--mono", str(mono_path), "--disp", str(disp_path),
                     "--mode", "local", "--out", str(out)])
        assert code == 0
        assert (out / "scale.pfm").exists()
        assert (out / "shift.pfm").exists()
