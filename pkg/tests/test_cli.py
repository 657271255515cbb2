import json

import numpy as np
import pytest

from affbench import load_manifest
from affbench.cli import main

from conftest import random_blob, write_dataset


@pytest.fixture()
def dataset(tmp_path, choc):
    rng = np.random.default_rng(80)
    pairs = []
    for _ in range(3):
        blob = random_blob(rng, height=48, width=64, min_pixels=100)
        gt = blob.astype(np.uint8)
        pred = np.roll(gt, 2, axis=1)
        pairs.append((gt, pred))
    manifest = write_dataset(tmp_path / "data", choc, pairs, model_id="m2f")
    return manifest


def run(argv):
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_console_script_installed(self):
        import subprocess

        proc = subprocess.run(
            ["affbench", "--help"], capture_output=True, text=True, timeout=60
        )
        assert proc.returncode == 0
        assert "evaluate" in proc.stdout

    def test_no_arguments_is_usage_error(self, capsys):
        assert run([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_missing_required_flag(self, capsys):
        assert run(["evaluate"]) == 1
        err = capsys.readouterr().err
        assert "--manifest" in err or "usage" in err

    def test_unknown_flag_rejected(self, capsys):
        assert run(["evaluate", "--bogus", "x"]) == 1

    def test_unknown_subcommand(self, capsys):
        assert run(["frobnicate"]) == 1

    def test_data_error_is_exit_two(self, tmp_path, capsys):
        assert (
            run(
                [
                    "evaluate",
                    "--manifest", tmp_path / "missing.jsonl",
                    "--taxonomy", "choc_aff",
                    "--model", "m",
                ]
            )
            == 2
        )
        assert "error" in capsys.readouterr().err


class TestEvaluate:
    def test_happy_path_writes_report(self, dataset, tmp_path, capsys):
        out = tmp_path / "r.json"
        code = run(
            [
                "evaluate",
                "--manifest", dataset,
                "--taxonomy", "choc_aff",
                "--model", "m2f",
                "--metrics", "jaccard,wfb",
                "--out", out,
            ]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["model"] == "m2f"
        assert doc["n_samples"] == 3
        assert len(doc["classes"]) == 3
        assert "graspable" in capsys.readouterr().err

    def test_jobs_do_not_change_bytes(self, dataset, tmp_path):
        outs = []
        for jobs in (1, 8):
            out = tmp_path / f"r{jobs}.json"
            assert (
                run(
                    [
                        "evaluate",
                        "--manifest", dataset,
                        "--taxonomy", "choc_aff",
                        "--model", "m2f",
                        "--metrics", "jaccard,wfb",
                        "--jobs", jobs,
                        "--out", out,
                    ]
                )
                == 0
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_stdout_when_no_out_flag(self, dataset, capsys):
        assert (
            run(
                [
                    "evaluate",
                    "--manifest", dataset,
                    "--taxonomy", "choc_aff",
                    "--model", "m2f",
                ]
            )
            == 0
        )
        out = capsys.readouterr().out
        assert json.loads(out)["model"] == "m2f"

    def test_config_file_supplies_flags(self, dataset, tmp_path):
        out = tmp_path / "r.json"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "manifest": str(dataset),
                    "taxonomy": "choc_aff",
                    "model": "m2f",
                    "out": str(out),
                }
            )
        )
        assert run(["evaluate", "--config", cfg]) == 0
        assert out.is_file()

    def test_cli_flags_override_config(self, dataset, tmp_path):
        cfg = tmp_path / "cfg.json"
        out_cfg = tmp_path / "from_config.json"
        out_cli = tmp_path / "from_cli.json"
        cfg.write_text(
            json.dumps(
                {
                    "manifest": str(dataset),
                    "taxonomy": "choc_aff",
                    "model": "m2f",
                    "out": str(out_cfg),
                }
            )
        )
        assert run(["evaluate", "--config", cfg, "--out", out_cli]) == 0
        assert out_cli.is_file() and not out_cfg.exists()

    def test_jobs_env_default(self, dataset, tmp_path, monkeypatch):
        monkeypatch.setenv("AFFBENCH_JOBS", "2")
        out = tmp_path / "r.json"
        assert (
            run(
                [
                    "evaluate",
                    "--manifest", dataset,
                    "--taxonomy", "choc_aff",
                    "--model", "m2f",
                    "--out", out,
                ]
            )
            == 0
        )


class TestCompare:
    def make_report(self, dataset, tmp_path, jaccard_pct):
        # build a tally-backed report file with a chosen graspable J
        from affbench.runner import build_report, export_report
        from affbench import ConfusionTally, builtin_taxonomy

        choc = builtin_taxonomy("choc_aff")
        conf = ConfusionTally.zero(choc)
        conf.images_seen = 1
        tp = int(round(jaccard_pct * 100))
        conf.tp[1], conf.fp[1], conf.fn[1] = tp, 10000 - tp, 0
        report = build_report("d", "m", choc, conf, None, ("jaccard",), None)
        path = tmp_path / "report.json"
        export_report(report, "json", path)
        return path

    def test_exact_match_passes(self, dataset, tmp_path):
        report = self.make_report(dataset, tmp_path, 74.37)
        ref = tmp_path / "ref.json"
        ref.write_text(json.dumps({"jaccard.graspable": {"value": 74.37, "source": "t"}}))
        assert run(["compare", "--report", report, "--reference", ref]) == 0

    def test_excess_delta_exits_three(self, dataset, tmp_path, capsys):
        report = self.make_report(dataset, tmp_path, 75.00)
        ref = tmp_path / "ref.json"
        ref.write_text(json.dumps({"jaccard.graspable": {"value": 74.37, "source": "t"}}))
        code = run(
            [
                "compare",
                "--report", report,
                "--reference", ref,
                "--tolerance", "0.5",
            ]
        )
        assert code == 3
        assert "FAIL" in capsys.readouterr().err

    def test_table_export(self, dataset, tmp_path):
        report = self.make_report(dataset, tmp_path, 74.37)
        ref = tmp_path / "ref.json"
        out = tmp_path / "table.csv"
        ref.write_text(json.dumps({"jaccard.graspable": 74.37}))
        assert (
            run(
                [
                    "compare",
                    "--report", report,
                    "--reference", ref,
                    "--out", out,
                    "--format", "csv",
                ]
            )
            == 0
        )
        assert out.read_text().startswith("metric,class,")

    def test_builtin_reference_name(self, dataset, tmp_path):
        report = self.make_report(dataset, tmp_path, 74.37)
        code = run(
            ["compare", "--report", report, "--reference", "umd_fwb_ours_drnatt"]
        )
        # UMD reference classes are absent from the choc report
        assert code == 2


class TestSweepPerturbOccupancy:
    def test_sweep_outputs(self, dataset, tmp_path):
        out = tmp_path / "sweep.json"
        csv_out = tmp_path / "sweep.csv"
        code = run(
            [
                "sweep",
                "--manifest", dataset,
                "--taxonomy", "choc_aff",
                "--model", "m2f",
                "--factors", "0.5,1",
                "--out", out,
                "--csv", csv_out,
            ]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["factors"] == [0.5, 1.0]
        assert csv_out.read_text().startswith("factor,class,")

    def test_fraction_factor_parsing(self, dataset, tmp_path):
        out = tmp_path / "sweep.json"
        assert (
            run(
                [
                    "sweep",
                    "--manifest", dataset,
                    "--taxonomy", "choc_aff",
                    "--model", "m2f",
                    "--factors", "2/3",
                    "--out", out,
                ]
            )
            == 0
        )
        assert json.loads(out.read_text())["factors"] == [2 / 3]

    def test_perturb_writes_dataset(self, dataset, tmp_path, capsys):
        out_dir = tmp_path / "zoomed"
        code = run(
            [
                "perturb",
                "--manifest", dataset,
                "--taxonomy", "choc_aff",
                "--factor", "0.5",
                "--out-dir", out_dir,
            ]
        )
        assert code == 0
        manifest_path = capsys.readouterr().out.strip()
        manifest = load_manifest(manifest_path)
        assert len(manifest.samples) == 3
        assert all(s.id.endswith("_x0.5") for s in manifest.samples)

    def test_occupancy_stats_csv(self, dataset, tmp_path):
        out = tmp_path / "occ.csv"
        code = run(
            [
                "occupancy",
                "--manifest", dataset,
                "--taxonomy", "choc_aff",
                "--factors", "0.5,1",
                "--out", out,
            ]
        )
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "factor,n,min,q1,median,q3,max"
        assert len(lines) == 3


class TestAugmentCommand:
    def test_augment_deterministic_files(self, dataset, tmp_path, choc):
        manifest = load_manifest(dataset)
        sample = manifest.samples[0]
        img_in = tmp_path / "in.png"
        from affbench import RgbImage, save_image

        rng = np.random.default_rng(81)
        save_image(RgbImage(rng.integers(0, 256, (48, 64, 3)).astype(np.uint8)), img_in)
        recipe = tmp_path / "recipe.json"
        recipe.write_text(
            json.dumps(
                {
                    "flip_probability": 0.5,
                    "scale_interval": [1.0, 1.5],
                    "gaussian_noise_variance_interval": [10, 100],
                    "crop": [48, 40],
                }
            )
        )
        outs = []
        for tag in ("a", "b"):
            oi = tmp_path / f"out_img_{tag}.png"
            om = tmp_path / f"out_msk_{tag}.png"
            code = run(
                [
                    "augment",
                    "--image", img_in,
                    "--mask", manifest.resolve(sample.annotation),
                    "--taxonomy", "choc_aff",
                    "--recipe", recipe,
                    "--seed", 7,
                    "--key", "img_0",
                    "--out-image", oi,
                    "--out-mask", om,
                ]
            )
            assert code == 0
            outs.append((oi.read_bytes(), om.read_bytes()))
        assert outs[0] == outs[1]


class TestPlotdata:
    def test_bars(self, dataset, tmp_path):
        report = tmp_path / "r.json"
        run(
            [
                "evaluate",
                "--manifest", dataset,
                "--taxonomy", "choc_aff",
                "--model", "m2f",
                "--out", report,
            ]
        )
        out = tmp_path / "bars.csv"
        code = run(
            ["plotdata", "--kind", "bars", "--report", report, "--metric", "jaccard",
             "--out", out]
        )
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "class,m2f"
        assert lines[-1].startswith("AVG,")
        assert len(lines) == 1 + 3 + 1

    def test_whiskers(self, dataset, tmp_path):
        out = tmp_path / "w.csv"
        code = run(
            [
                "plotdata",
                "--kind", "whiskers",
                "--manifest", dataset,
                "--taxonomy", "choc_aff",
                "--factors", "0.5,1,2",
                "--out", out,
            ]
        )
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "factor,n,min,q1,median,q3,max"
        assert len(lines) == 4

    def test_curve(self, dataset, tmp_path):
        sweep_path = tmp_path / "s.json"
        run(
            [
                "sweep",
                "--manifest", dataset,
                "--taxonomy", "choc_aff",
                "--model", "m2f",
                "--factors", "0.5,1",
                "--out", sweep_path,
            ]
        )
        out = tmp_path / "curve.csv"
        assert run(["plotdata", "--kind", "curve", "--sweep", sweep_path, "--out", out]) == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "factor,m2f"
        assert len(lines) == 3
