import json

import numpy as np
import pytest

from graspmem import cli
from graspmem.geometry import FeatureCloud
from graspmem.io import read_fcld, write_fcld

from test_io import parse_ascii_ply


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


EXTERNAL_FLAGS = {
    "retrieve": ["--store", "--scene-cloud", "--task-embedding",
                 "--exclude-object", "--exclude-task"],
    "align": ["--memory-cloud", "--scene-cloud", "--euler-step-deg", "--wg", "--wf",
              "--keval", "--korient", "--pca-dim", "--geometric-only"],
    "transfer": ["--memory-grasp", "--alignment", "--candidates",
                 "--sigma", "--wtask", "--wgeo"],
    "eval": ["--store", "--scenes", "--split", "--out"],
    "viz-export": ["--cloud", "--out"],
    "pipeline": ["--store", "--scene-cloud", "--task-embedding", "--candidates",
                 "--geometric-only"],
    "ingest": ["--store", "--fragment", "--cloud", "--object", "--task",
               "--task-embedding", "--grasp"],
}

GLOBAL_FLAGS = ["--config", "--seed", "--threads", "--quiet"]


class TestHelp:
    @pytest.mark.parametrize("command", sorted(EXTERNAL_FLAGS))
    def test_help_lists_interface_flags(self, capsys, command):
        with pytest.raises(SystemExit) as exc:
            cli.main([command, "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for flag in EXTERNAL_FLAGS[command] + GLOBAL_FLAGS:
            assert flag in out, f"{command} --help missing {flag}"


class TestRetrieve:
    def test_returns_best_instance(self, capsys, fixtures_dir):
        code, out, _ = run_cli(
            capsys, "retrieve",
            "--store", str(fixtures_dir / "store"),
            "--scene-cloud", str(fixtures_dir / "scenes/scene0.fcld"),
            "--task-embedding", str(fixtures_dir / "scenes/scene0.emb"),
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["object_name"] == "tool0" and doc["task"] == "scoop"
        assert doc["instance_id"] == 0 and doc["score"] > 0.9

    def test_exclusion_changes_result(self, capsys, fixtures_dir):
        code, out, _ = run_cli(
            capsys, "retrieve",
            "--store", str(fixtures_dir / "store"),
            "--scene-cloud", str(fixtures_dir / "scenes/scene0.fcld"),
            "--task-embedding", str(fixtures_dir / "scenes/scene0.emb"),
            "--exclude-object", "tool0",
        )
        assert code == 0
        assert json.loads(out)["object_name"] != "tool0"

    def test_missing_store_is_retrieval_failure(self, capsys, tmp_path, fixtures_dir):
        code, _, err = run_cli(
            capsys, "retrieve",
            "--store", str(tmp_path / "absent"),
            "--scene-cloud", str(fixtures_dir / "scenes/scene0.fcld"),
            "--task-embedding", str(fixtures_dir / "scenes/scene0.emb"),
        )
        assert code == 3 and "retrieval" in err


class TestAlignTransferChain:
    def test_align_then_transfer(self, capsys, tmp_path, fixtures_dir):
        code, out, _ = run_cli(
            capsys, "align",
            "--memory-cloud", str(fixtures_dir / "store/clouds/000000.fcld"),
            "--scene-cloud", str(fixtures_dir / "scenes/scene0.fcld"),
            "--pca-dim", "8",
        )
        assert code == 0
        doc = json.loads(out)
        assert set(doc) == {"scale", "rotation", "translation",
                            "final_score", "candidates_evaluated"}
        align_path = tmp_path / "alignment.json"
        align_path.write_text(out)

        grasp_path = tmp_path / "grasp.json"
        manifest = json.loads((fixtures_dir / "store/manifest.json").read_text())
        grasp_path.write_text(json.dumps(manifest["entries"][0]["grasp"]))

        code, out, _ = run_cli(
            capsys, "transfer",
            "--memory-grasp", str(grasp_path),
            "--alignment", str(align_path),
            "--candidates", str(fixtures_dir / "scenes/scene0_candidates.json"),
        )
        assert code == 0
        ranking = json.loads(out)
        finals = [r["s_final"] for r in ranking]
        assert finals == sorted(finals, reverse=True)
        assert ranking[0]["index"] == 0  # the near-true candidate wins

    def test_align_writes_transformed_cloud(self, capsys, tmp_path, fixtures_dir):
        out_cloud = tmp_path / "moved.fcld"
        code, out, _ = run_cli(
            capsys, "align",
            "--memory-cloud", str(fixtures_dir / "store/clouds/000000.fcld"),
            "--scene-cloud", str(fixtures_dir / "scenes/scene0.fcld"),
            "--out-cloud", str(out_cloud),
        )
        assert code == 0 and out_cloud.exists()
        scene = read_fcld(fixtures_dir / "scenes/scene0.fcld")
        moved = read_fcld(out_cloud)
        rms = np.sqrt(((moved.points - scene.points) ** 2).sum(axis=1).mean())
        assert rms < 0.02


class TestPipeline:
    def _argv(self, fixtures_dir, scene="scene0", emb=None, extra=()):
        return [
            "pipeline",
            "--store", str(fixtures_dir / "store"),
            "--scene-cloud", str(fixtures_dir / f"scenes/{scene}.fcld"),
            "--task-embedding", str(emb or fixtures_dir / f"scenes/{scene}.emb"),
            "--candidates", str(fixtures_dir / f"scenes/{scene}_candidates.json"),
            "--pca-dim", "8",
            *extra,
        ]

    def test_closed_loop_on_memory_cloud(self, capsys, fixtures_dir):
        argv = [
            "pipeline",
            "--store", str(fixtures_dir / "store"),
            "--scene-cloud", str(fixtures_dir / "store/clouds/000000.fcld"),
            "--task-embedding", str(fixtures_dir / "emb/scoop.emb"),
            "--candidates", str(fixtures_dir / "scenes/scene0_candidates.json"),
            "--quiet",
        ]
        code = cli.main(argv)
        out = capsys.readouterr().out
        assert code == 0
        doc = json.loads(out)
        assert doc["retrieved_id"] == 0
        assert doc["joint_score"] == pytest.approx(1.0, abs=1e-9)
        t = doc["transform"]
        assert t["scale"] == pytest.approx(1.0, abs=1e-6)
        assert np.allclose(np.asarray(t["rotation"]).reshape(3, 3), np.eye(3), atol=1e-5)
        assert np.max(np.abs(t["translation"])) < 1e-5

    def test_geometric_only_diverges_on_symmetric_scene(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, *self._argv(fixtures_dir, "scene4"))
        assert code == 0
        feature_sel = json.loads(out)["selected_grasp"]["index"]
        code, out, _ = run_cli(capsys, *self._argv(fixtures_dir, "scene4",
                                                   extra=("--geometric-only",)))
        assert code == 0
        geometric_sel = json.loads(out)["selected_grasp"]["index"]
        assert feature_sel != geometric_sel

    def test_missing_candidates_exits_5_naming_transfer(self, capsys, fixtures_dir, tmp_path):
        argv = self._argv(fixtures_dir)
        argv[argv.index("--candidates") + 1] = str(tmp_path / "absent.json")
        code = cli.main(argv)
        err = capsys.readouterr().err
        assert code == 5 and "transfer" in err

    def test_degenerate_scene_exits_4_naming_alignment(self, capsys, fixtures_dir, tmp_path):
        single = tmp_path / "single.fcld"
        write_fcld(single, FeatureCloud([[0.0, 0.0, 0.0]], np.ones((1, 8))))
        argv = self._argv(fixtures_dir)
        argv[argv.index("--scene-cloud") + 1] = str(single)
        code = cli.main(argv)
        err = capsys.readouterr().err
        assert code == 4 and "alignment" in err

    def test_unknown_config_key_exits_2(self, capsys, fixtures_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"bogus_knob": 1}')
        code = cli.main(self._argv(fixtures_dir, extra=("--config", str(cfg))))
        err = capsys.readouterr().err
        assert code == 2 and "bogus_knob" in err

    def test_config_precedence_flags_over_file(self, capsys, fixtures_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"sigma": 0.25, "w_task": 0.5}')
        code, out, _ = run_cli(capsys, *self._argv(
            fixtures_dir, extra=("--config", str(cfg), "--sigma", "0.3")))
        assert code == 0
        echoed = json.loads(out)["config"]
        assert echoed["sigma"] == 0.3      # flag wins
        assert echoed["w_task"] == 0.5     # file beats default
        assert echoed["w_geo"] == 0.05     # default

    def test_stdout_identical_across_runs(self, capsys, fixtures_dir):
        outputs = []
        for _ in range(2):
            code, out, _ = run_cli(capsys, *self._argv(fixtures_dir, extra=("--quiet",)))
            assert code == 0
            outputs.append(out)
        assert outputs[0] == outputs[1]


class TestVizExport:
    def test_single_point_cloud(self, capsys, tmp_path):
        cloud_path = tmp_path / "one.fcld"
        write_fcld(cloud_path, FeatureCloud([[0.5, 1.0, -2.0]], np.ones((1, 8))))
        out_path = tmp_path / "one.ply"
        code, out, _ = run_cli(capsys, "viz-export", "--cloud", str(cloud_path),
                               "--out", str(out_path))
        assert code == 0
        xyz, rgb, _ = parse_ascii_ply(out_path)
        assert xyz.shape == (1, 3)
        assert list(rgb[0]) == [128, 128, 128]  # constant channels -> 0.5

    def test_round_trip_positions(self, capsys, rng, tmp_path, fixtures_dir):
        src = fixtures_dir / "scenes/scene1.fcld"
        out_path = tmp_path / "scene1.ply"
        code, _, _ = run_cli(capsys, "viz-export", "--cloud", str(src),
                             "--out", str(out_path))
        assert code == 0
        cloud = read_fcld(src)
        xyz, rgb, _ = parse_ascii_ply(out_path)
        assert np.array_equal(xyz.astype(np.float32),
                              cloud.points.astype(np.float32))
        assert rgb.min() >= 0 and rgb.max() <= 255


class TestEvalCli:
    def test_report_written(self, capsys, fixtures_dir, tmp_path):
        out_path = tmp_path / "report.json"
        code, out, _ = run_cli(
            capsys, "eval",
            "--store", str(fixtures_dir / "store"),
            "--scenes", str(fixtures_dir / "scenes.json"),
            "--split", "all",
            "--out", str(out_path),
            "--pca-dim", "8",
        )
        assert code == 0
        doc = json.loads(out_path.read_text())
        assert doc == json.loads(out)
        assert doc["split"] == "all" and len(doc["per_instance"]) == 5
        assert doc["mean_ap"] > 0.9
        assert doc["mean_ap"] - doc["random_baseline_mean_ap"] >= 0.2

    def test_held_out_objects_split(self, capsys, fixtures_dir):
        code, out, _ = run_cli(
            capsys, "eval",
            "--store", str(fixtures_dir / "store"),
            "--scenes", str(fixtures_dir / "scenes.json"),
            "--split", "held-out-objects",
            "--pca-dim", "8",
        )
        assert code == 0
        assert json.loads(out)["split"] == "held_out_objects"


class TestIngestCli:
    def test_single_instance_then_retrieve(self, capsys, fixtures_dir, tmp_path):
        store = tmp_path / "newstore"
        grasp = tmp_path / "grasp.json"
        manifest = json.loads((fixtures_dir / "store/manifest.json").read_text())
        grasp.write_text(json.dumps(manifest["entries"][0]["grasp"]))
        code, out, _ = run_cli(
            capsys, "ingest",
            "--store", str(store),
            "--cloud", str(fixtures_dir / "store/clouds/000000.fcld"),
            "--object", "tool0", "--task", "scoop",
            "--task-embedding", str(fixtures_dir / "emb/scoop.emb"),
            "--grasp", str(grasp),
        )
        assert code == 0
        assert json.loads(out)["ingested_ids"] == [0]
        code, out, _ = run_cli(
            capsys, "retrieve",
            "--store", str(store),
            "--scene-cloud", str(fixtures_dir / "scenes/scene0.fcld"),
            "--task-embedding", str(fixtures_dir / "emb/scoop.emb"),
        )
        assert code == 0 and json.loads(out)["object_name"] == "tool0"

    def test_fragment_mode(self, capsys, fixtures_dir, tmp_path):
        store = tmp_path / "fragstore"
        frag_dir = tmp_path / "frag"
        frag_dir.mkdir()
        import shutil
        shutil.copyfile(fixtures_dir / "store/clouds/000001.fcld", frag_dir / "obj.fcld")
        shutil.copyfile(fixtures_dir / "emb/grate.emb", frag_dir / "task.emb")
        manifest = json.loads((fixtures_dir / "store/manifest.json").read_text())
        fragment = {
            "entries": [{
                "object_name": "fragtool",
                "task": "grate",
                "task_embedding_path": "task.emb",
                "cloud_path": "obj.fcld",
                "grasp": manifest["entries"][1]["grasp"],
            }]
        }
        frag_path = frag_dir / "fragment.json"
        frag_path.write_text(json.dumps(fragment))
        code, out, _ = run_cli(capsys, "ingest", "--store", str(store),
                               "--fragment", str(frag_path))
        assert code == 0
        assert json.loads(out)["ingested_ids"] == [0]
