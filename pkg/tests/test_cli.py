"""CLI subcommands: end-to-end runs, schema validation, exit codes,
determinism."""

from __future__ import annotations

import importlib.resources
import json

import jsonschema
import numpy as np
import pytest

from panodepth import fileio
from panodepth.camera import Intrinsics, pose_from_axis_angle
from panodepth.cli import dispatch
from panodepth.synthetic import CAR, SceneSpec, BoxSpec

SCHEMA_FILES = {
    "synth": "synth.schema.json",
    "pipeline": "pipeline.schema.json",
    "scale": "scale.schema.json",
    "losses": "losses.schema.json",
    "eval-pq": "eval_pq.schema.json",
    "eval-depth": "eval_depth.schema.json",
    "gradcheck": "gradcheck.schema.json",
}


def load_schema(command: str) -> dict:
    ref = importlib.resources.files("panodepth.schemas") / SCHEMA_FILES[command]
    return json.loads(ref.read_text())


def run_cli(capsys, args: list[str]) -> tuple[int, str]:
    capsys.readouterr()
    code = dispatch(args)
    out = capsys.readouterr()
    return code, out.out


def validate(command: str, report: dict) -> None:
    jsonschema.validate(report, load_schema(command))


@pytest.fixture
def scene_cfg(tmp_path):
    k = Intrinsics(fx=100.0, fy=100.0, cx=95.5, cy=63.5, width=192, height=128)
    spec = SceneSpec(
        intrinsics=k,
        camera_height_m=1.5,
        boxes=(
            BoxSpec(center=(-2.5, 1.0, 9.0), size=(2.0, 1.0, 3.0), class_id=CAR),
            BoxSpec(center=(2.5, 1.0, 12.0), size=(2.0, 1.0, 3.0), class_id=CAR),
        ),
    )
    cfg = spec.to_dict()
    cfg["encode_targets"] = True
    path = tmp_path / "scene.json"
    fileio.write_json(path, cfg)
    return path


class TestExitCodes:
    def test_unknown_subcommand_usage_error(self, capsys):
        assert dispatch(["frobnicate"]) == 2

    def test_no_arguments_usage_error(self, capsys):
        assert dispatch([]) == 2

    def test_missing_config_file_is_computation_error(self, capsys):
        code = dispatch(["scale", "--config", "/nonexistent/cfg.json"])
        assert code == 1
        err = capsys.readouterr().err
        assert err.count("\n") == 1  # single-line diagnostic

    def test_malformed_json_config(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert dispatch(["scale", "--config", str(bad)]) == 1

    def test_scale_unavailable_is_exit_one(self, capsys, tmp_path):
        # A sky-only scene has no road points: scale must fail loudly.
        from panodepth.synthetic import SKY, default_taxonomy

        out = tmp_path
        fileio.write_pfm(out / "depth.pfm", np.full((8, 8), 3.0))
        fileio.write_pgm16(out / "sem.pgm", np.full((8, 8), SKY, dtype=np.uint16))
        fileio.write_json(out / "tax.json", default_taxonomy().to_dict())
        fileio.write_json(
            out / "k.json",
            Intrinsics(fx=10, fy=10, cx=3.5, cy=3.5, width=8, height=8).to_dict(),
        )
        cfg = {
            "depth": str(out / "depth.pfm"),
            "semantic": str(out / "sem.pgm"),
            "taxonomy": str(out / "tax.json"),
            "intrinsics": str(out / "k.json"),
            "camera_height_m": 1.5,
        }
        fileio.write_json(out / "cfg.json", cfg)
        code = dispatch(["scale", "--config", str(out / "cfg.json")])
        assert code == 1
        assert "scale unavailable" in capsys.readouterr().err


class TestSynthPipeline:
    def test_synth_writes_files_and_validates(self, capsys, tmp_path, scene_cfg):
        out = tmp_path / "synth"
        code, stdout = run_cli(
            capsys, ["synth", "--config", str(scene_cfg), "--out", str(out), "--seed", "3"]
        )
        assert code == 0
        report = json.loads(stdout)
        validate("synth", report)
        for path in report["outputs"].values():
            assert (tmp_path / path).exists() or (out / path).exists() or path

    def test_synth_deterministic(self, capsys, tmp_path, scene_cfg):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            code, _ = run_cli(
                capsys, ["synth", "--config", str(scene_cfg), "--out", str(out), "--seed", "9"]
            )
            assert code == 0
        for name in ("image.pfm", "depth.pfm", "semantic.pgm", "instance.pgm", "target_heatmap.pfm"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_pipeline_on_oracle_inputs(self, capsys, tmp_path, scene_cfg):
        synth_out = tmp_path / "synth"
        run_cli(capsys, ["synth", "--config", str(scene_cfg), "--out", str(synth_out)])
        pipe_cfg = {
            "heatmap": str(synth_out / "target_heatmap.pfm"),
            "offsets": str(synth_out / "target_offsets.pfm"),
            "semantic": str(synth_out / "semantic.pgm"),
            "depth": str(synth_out / "depth.pfm"),
            "intrinsics": str(synth_out / "intrinsics.json"),
            "taxonomy": str(synth_out / "taxonomy.json"),
            "camera_height_m": 1.5,
        }
        fileio.write_json(tmp_path / "pipe.json", pipe_cfg)
        pipe_out = tmp_path / "pipe"
        code, stdout = run_cli(
            capsys, ["pipeline", "--config", str(tmp_path / "pipe.json"), "--out", str(pipe_out)]
        )
        assert code == 0
        report = json.loads(stdout)
        validate("pipeline", report)
        # float32 file storage of depth bounds the achievable exactness
        assert report["scale_factor"] == pytest.approx(1.0, abs=1e-6)
        assert report["num_instances"] == 2
        assert (pipe_out / "cloud.ply").exists()
        assert (pipe_out / "report.json").exists()

        # emitted panoptic prediction scores PQ = 1 against the oracle
        pq_cfg = {
            "pred": {
                "semantic": str(pipe_out / "fused_semantic.pgm"),
                "instance": str(pipe_out / "fused_instance.pgm"),
            },
            "gt": {
                "semantic": str(synth_out / "semantic.pgm"),
                "instance": str(synth_out / "instance.pgm"),
            },
            "taxonomy": str(synth_out / "taxonomy.json"),
        }
        fileio.write_json(tmp_path / "pq.json", pq_cfg)
        code, stdout = run_cli(capsys, ["eval-pq", "--config", str(tmp_path / "pq.json")])
        assert code == 0
        report = json.loads(stdout)
        validate("eval-pq", report)
        assert report["pq"] == 1.0

    def test_pipeline_pretty_reports_postprocess_time(self, capsys, tmp_path, scene_cfg):
        synth_out = tmp_path / "synth"
        run_cli(capsys, ["synth", "--config", str(scene_cfg), "--out", str(synth_out)])
        pipe_cfg = {
            "heatmap": str(synth_out / "target_heatmap.pfm"),
            "offsets": str(synth_out / "target_offsets.pfm"),
            "semantic": str(synth_out / "semantic.pgm"),
            "depth": str(synth_out / "depth.pfm"),
            "intrinsics": str(synth_out / "intrinsics.json"),
            "taxonomy": str(synth_out / "taxonomy.json"),
            "camera_height_m": 1.5,
        }
        fileio.write_json(tmp_path / "pipe.json", pipe_cfg)
        code, stdout = run_cli(
            capsys,
            ["pipeline", "--config", str(tmp_path / "pipe.json"), "--out", str(tmp_path / "p"), "--pretty"],
        )
        assert code == 0
        assert "timings_ms.total_postprocess" in stdout


class TestEvalAndLosses:
    def test_eval_depth_hand_case(self, capsys, tmp_path):
        fileio.write_pfm(tmp_path / "gt.pfm", np.full((4, 4), 4.0))
        fileio.write_pfm(tmp_path / "pred.pfm", np.full((4, 4), 5.0))
        cfg = {"pred": str(tmp_path / "pred.pfm"), "gt": str(tmp_path / "gt.pfm")}
        fileio.write_json(tmp_path / "cfg.json", cfg)
        code, stdout = run_cli(capsys, ["eval-depth", "--config", str(tmp_path / "cfg.json")])
        assert code == 0
        report = json.loads(stdout)
        validate("eval-depth", report)
        assert report["metrics"]["rmse"] == pytest.approx(1.0)
        assert report["metrics"]["delta1"] == 0.0
        assert report["metrics"]["delta2"] == 1.0

    def test_losses_report(self, capsys, tmp_path, scene_cfg):
        synth_out = tmp_path / "synth"
        cfg = fileio.read_json(scene_cfg)
        cfg["relative_pose"] = pose_from_axis_angle([0, 0, 0], [0, 0, 0.4]).to_dict()
        fileio.write_json(scene_cfg, cfg)
        run_cli(capsys, ["synth", "--config", str(scene_cfg), "--out", str(synth_out)])

        # build flat probability planes from the semantic map: each class
        # gets probability 0.85 on its own pixels, the rest spread evenly
        semantic = fileio.read_pgm(synth_out / "semantic.pgm").astype(int)
        classes = sorted(int(c) for c in np.unique(semantic))
        n = len(classes)
        prob_paths = []
        remap = {c: i for i, c in enumerate(classes)}
        idx = np.vectorize(remap.get)(semantic)
        for i, c in enumerate(classes):
            p = np.where(idx == i, 0.85, 0.15 / (n - 1))
            path = tmp_path / f"prob_{i}.pfm"
            fileio.write_pfm(path, p)
            prob_paths.append(str(path))
        # remap the GT semantic grid to the channel indices
        fileio.write_pgm16(tmp_path / "sem_idx.pgm", idx.astype(np.uint16))
        tax = fileio.read_json(synth_out / "taxonomy.json")
        tax["thing_ids"] = [remap[c] for c in tax["thing_ids"] if c in remap]
        tax["stuff_ids"] = [remap[c] for c in tax["stuff_ids"] if c in remap]
        for key in ("road_id", "sky_id", "ego_car_id", "void_id"):
            tax[key] = remap.get(tax[key])
        fileio.write_json(tmp_path / "tax_idx.json", tax)

        loss_cfg = {
            "taxonomy": str(tmp_path / "tax_idx.json"),
            "intrinsics": str(synth_out / "intrinsics.json"),
            "frames": {
                "target": str(synth_out / "image.pfm"),
                "prev": str(synth_out / "ctx_image.pfm"),
                "next": str(synth_out / "ctx_image.pfm"),
            },
            "depths": [str(synth_out / "depth.pfm")],
            "pose_prev": str(synth_out / "relative_pose.json"),
            "pose_next": str(synth_out / "relative_pose.json"),
            "panoptic_gt": {
                "semantic": str(tmp_path / "sem_idx.pgm"),
                "instance": str(synth_out / "instance.pgm"),
            },
            "pred": {
                "probabilities": prob_paths,
                "heatmap": str(synth_out / "target_heatmap.pfm"),
                "offsets": str(synth_out / "target_offsets.pfm"),
            },
            "uncertainty": {"s": [0.1, 0.0, -0.1, 0.2, 0.0]},
        }
        fileio.write_json(tmp_path / "losses.json", loss_cfg)
        code, stdout = run_cli(capsys, ["losses", "--config", str(tmp_path / "losses.json")])
        assert code == 0
        report = json.loads(stdout)
        validate("losses", report)
        L = report["losses"]
        assert L["mse"] == 0.0  # oracle heatmap vs itself
        assert L["l1"] == 0.0
        assert L["depth"] == pytest.approx(L["photometric"] + 0.001 * L["smoothness"])
        assert L["panoptic"] == pytest.approx(L["seg"] + 200 * L["mse"] + 0.01 * L["l1"])
        assert L["seg"] > 0

    def test_gradcheck_with_config(self, capsys, tmp_path):
        fileio.write_json(tmp_path / "g.json", {"trials": 3})
        code, stdout = run_cli(capsys, ["gradcheck", "--config", str(tmp_path / "g.json")])
        assert code == 0
        report = json.loads(stdout)
        validate("gradcheck", report)
        assert report["all_passed"] is True
        assert len(report["results"]) == 9
