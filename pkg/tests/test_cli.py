import json
import subprocess
import sys

import numpy as np
import pytest

from activeseg.cli import gradcheck, run
from activeseg.dataset import load_manifest, load_predictions, read_weight_raster
from test_synth import _tree_equal

SYNTH = ["synth", "--seed", "42", "--clips", "4", "--out", "fx",
         "--predictions", "perfect", "--predictions", "leaky", "--predictions", "noisy:0.2"]


def pipeline(jobs):
    """synth -> label -> weights -> loss -> eval, all relative to the cwd."""
    j = ["--jobs", str(jobs)]
    assert run(SYNTH + j) == 0
    assert run(["label", "--manifest", "fx/manifest.json", "--out", "lab"] + j) == 0
    assert run(["weights", "--manifest", "fx/manifest.json", "--out", "w", "--viz"] + j) == 0
    assert run(["loss", "--manifest", "fx/manifest.json", "--pred", "fx/predictions_noisy.json",
                "--pseudo", "lab/pseudo_labels.json", "--weights", "w/weights.json",
                "--grad", "--out", "loss.json"] + j) == 0
    for mode in ("perfect", "leaky"):
        assert run(["eval", "--manifest", "fx/manifest.json", "--pred", f"fx/predictions_{mode}.json",
                    "--labels", "lab/pseudo_labels.json", "--out", f"eval_{mode}.json"] + j) == 0


@pytest.fixture(scope="module")
def serial_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("serial")
    with pytest.MonkeyPatch.context() as mp:
        mp.chdir(root)
        pipeline(1)
    return root


class TestPipeline:
    def test_perfect_eval(self, serial_run):
        doc = json.loads((serial_run / "eval_perfect.json").read_text())
        assert doc["acc"] == 1.0 and doc["p_miou"] == 1.0 and doc["n_miou"] == 0.0
        assert doc["provenance"]["labeling_config"]["contact_threshold"] == 0.5
        assert (serial_run / "eval_perfect.csv").exists()

    def test_leaky_eval_gated(self, serial_run):
        doc = json.loads((serial_run / "eval_leaky.json").read_text())
        # truth-aligned scores gate every negative away
        assert doc["n_miou"] == 0.0 and doc["p_miou"] == 1.0

    def test_weight_files(self, serial_run):
        idx = json.loads((serial_run / "w" / "weights.json").read_text())
        first = idx["clips"][0]["objects"][0]["frames"][0]
        raster = read_weight_raster(serial_run / "w" / first["weights"])
        assert raster.values.shape == (64, 64)
        assert sum(first["histogram"].values()) == 64 * 64
        legend = json.loads((serial_run / "w" / "viz" / "legend.json").read_text())
        assert [lv["gray"] for lv in legend["levels"]] == [0, 85, 170, 255]

    def test_loss_report(self, serial_run):
        doc = json.loads((serial_run / "loss.json").read_text())
        assert doc["aggregate"] > 0
        assert "grad_l2" in doc["clips"][0]["frames"][0]

    def test_noisy_predictions_load(self, serial_run):
        clips = load_manifest(serial_run / "fx" / "manifest.json")
        preds = load_predictions(serial_run / "fx" / "predictions_noisy.json", clips)
        arr = preds[0].rasters[1][0]
        assert arr.dtype == np.float32 and 0 < arr.mean() < 1

    def test_serial_equals_parallel(self, serial_run, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        pipeline(3)
        assert _tree_equal(serial_run, tmp_path)

    def test_jobs_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("ACTIVESEG_JOBS", "2")
        assert run(["synth", "--clips", "2", "--out", "env"]) == 0
        rc = json.loads((tmp_path / "env" / "manifest.json").read_text())["run_config"]
        assert "jobs" not in rc and rc["seed"] == 42


class TestExitCodes:
    def test_missing_manifest(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.json")
        assert run(["label", "--manifest", missing, "--out", str(tmp_path)]) == 1
        assert missing in capsys.readouterr().err

    def test_bad_threshold(self, serial_run, tmp_path):
        code = run(["label", "--manifest", str(serial_run / "fx" / "manifest.json"),
                    "--out", str(tmp_path), "--contact-threshold", "0"])
        assert code == 1

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["label"])
        assert exc.value.code == 2

    def test_gradcheck_pass_and_fail(self, tmp_path):
        out = tmp_path / "g.json"
        assert run(["gradcheck", "--trials", "5", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["passed"] is True
        assert run(["gradcheck", "--trials", "2", "--step", "0.04", "--tol", "1e-9"]) == 2

    def test_gradcheck_function(self):
        res = gradcheck(trials=100, seed=0, size=4)
        assert res["max_rel_error"] < 1e-6

    def test_prompt_needs_object(self):
        assert run(["prompt"]) == 1


class TestPromptAndStats:
    def test_single_prompt(self, capsys):
        assert run(["prompt", "--object", "knife", "--narration", "cut apple"]) == 0
        assert capsys.readouterr().out == "knife used in the action of cut apple\n"

    def test_batch_prompts(self, serial_run, capsys):
        assert run(["prompt", "--manifest", str(serial_run / "fx" / "manifest.json"),
                    "--style", "comma-action"]) == 0
        lines = capsys.readouterr().out.splitlines()
        clips = load_manifest(serial_run / "fx" / "manifest.json")
        assert len(lines) == sum(len(c.objects) for c in clips)
        cid, oid, text = lines[0].split("\t")
        assert text == f"{clips[0].objects[0].name}, {clips[0].narration}"

    def test_stats_same_split(self, serial_run, capsys):
        m = str(serial_run / "fx" / "manifest.json")
        assert run(["stats", "--train", m, "--val", m]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["unseen_actions"] == doc["unseen_verbs"] == doc["unseen_nouns"] == 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "activeseg", "eval", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "--decision-source" in res.stdout
