import json
import subprocess
import sys

import numpy as np
import pytest

from edgealign.cli import main
from edgealign.containers import load_multi_label, read_container, save_prob_map, write_container
from edgealign.grids import ProbMap


def run_cli(*args) -> int:
    return main(list(args))


def run_cli_capture(*args):
    return subprocess.run([sys.executable, "-m", "edgealign.cli", *args],
                          capture_output=True, text=True)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    code = run_cli("synth", "--out", str(out), "--images", "3", "--seed", "7",
                   "--classes", "2", "--height", "32", "--width", "32")
    assert code == 0
    return out


def test_synth_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run_cli("synth", "--out", str(tmp_path / sub), "--images", "2",
                       "--seed", "3", "--height", "24", "--width", "24") == 0
    for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_align_command_writes_labels_and_mapping(dataset, tmp_path):
    out_labels = tmp_path / "aligned.sebg"
    out_mapping = tmp_path / "mapping.json"
    code = run_cli("align", "--prob", str(dataset / "img0000_prob.sebg"),
                   "--labels", str(dataset / "img0000_labels.sebg"),
                   "--out-labels", str(out_labels), "--out-mapping", str(out_mapping),
                   "--mode", "bg-mrf")
    assert code == 0
    refined = load_multi_label(out_labels, 2)
    assert refined.field.shape == (32, 32)
    doc = json.loads(out_mapping.read_text())
    assert set(doc.keys()) == {"0", "1"}
    noisy = load_multi_label(dataset / "img0000_labels.sebg", 2)
    for k in ("0", "1"):
        pairs = doc[k]
        sources = [tuple(s) for s, _ in pairs]
        assert len(set(sources)) == len(sources)


def test_refine_then_eval_improves_f(dataset, tmp_path):
    refined_dir = tmp_path / "refined"
    assert run_cli("refine", "--manifest", str(dataset / "manifest.json"),
                   "--out", str(refined_dir)) == 0
    for tag, key in (("noisy", "labels"), ("refined", "labels_refined")):
        out = tmp_path / f"eval_{tag}"
        assert run_cli("eval", "--manifest", str(refined_dir / "manifest.json"),
                       "--out", str(out), "--mode", "thin", "--tolerance", "0.045",
                       "--thresholds", "0.5", "--border-ignore", "0",
                       "--pred-from-labels", key, "--gt-key", "labels_true") == 0
    noisy_mf = json.loads((tmp_path / "eval_noisy" / "summary.json").read_text())["mf_mean"]
    refined_mf = json.loads((tmp_path / "eval_refined" / "summary.json").read_text())["mf_mean"]
    assert refined_mf > noisy_mf
    csv = (tmp_path / "eval_refined" / "pr_curves.csv").read_text().splitlines()
    assert csv[0] == "class,threshold,precision,recall"
    assert (tmp_path / "eval_refined" / "pr_curves.png").exists()


def test_train_command(dataset, tmp_path):
    out = tmp_path / "trained"
    assert run_cli("train", "--manifest", str(dataset / "manifest.json"),
                   "--out", str(out), "--steps", "4", "--step-size", "1e-4",
                   "--seed", "2") == 0
    assert (out / "loss_log.csv").read_text().startswith("step,image,loss")
    assert (out / "img0000_prob.sebg").exists()
    assert (out / "manifest.json").exists()


def test_viz_command(dataset, tmp_path):
    out = tmp_path / "viz.png"
    assert run_cli("viz", "--prob", str(dataset / "img0000_prob.sebg"),
                   "--out", str(out), "--manifest", str(dataset / "manifest.json")) == 0
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_loss_command_json(dataset, tmp_path):
    grad_path = tmp_path / "grad.sebg"
    proc = run_cli_capture("loss", "--prob", str(dataset / "img0000_prob.sebg"),
                           "--labels", str(dataset / "img0000_labels.sebg"),
                           "--out-grad", str(grad_path))
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert doc["pixel_count"] == 32 * 32
    assert doc["total"] == pytest.approx(sum(doc["per_class"]), rel=1e-12)
    code, grad = read_container(grad_path)
    assert grad.shape == (2, 32, 32)


def test_oracle_command_exit_zero():
    assert run_cli("oracle", "--suite", "all", "--instances", "4", "--seed", "0") == 0


def test_exit_code_2_on_missing_file(tmp_path):
    proc = run_cli_capture("align", "--prob", str(tmp_path / "missing.sebg"),
                           "--labels", str(tmp_path / "missing.sebg"),
                           "--out-labels", str(tmp_path / "out.sebg"))
    assert proc.returncode == 2
    assert "cannot read container" in proc.stderr


def test_exit_code_2_on_bad_input(tmp_path):
    bad = tmp_path / "bad.sebg"
    bad.write_bytes(b"NOPE" + b"\x00" * 32)
    labels = tmp_path / "labels.sebg"
    write_container(labels, np.zeros((1, 4, 4), dtype=np.uint32), 1)
    proc = run_cli_capture("align", "--prob", str(bad), "--labels", str(labels),
                           "--out-labels", str(tmp_path / "out.sebg"))
    assert proc.returncode == 2
    assert "error" in proc.stderr


def test_exit_code_2_on_shape_mismatch(tmp_path):
    prob = tmp_path / "p.sebg"
    save_prob_map(prob, ProbMap(planes=np.full((1, 4, 4), 0.5, dtype=np.float32)))
    labels = tmp_path / "l.sebg"
    write_container(labels, np.zeros((1, 5, 5), dtype=np.uint32), 1)
    proc = run_cli_capture("align", "--prob", str(prob), "--labels", str(labels),
                           "--out-labels", str(tmp_path / "out.sebg"))
    assert proc.returncode == 2


def test_version_flag():
    proc = run_cli_capture("--version")
    assert proc.returncode == 0
    assert proc.stdout.startswith("edgealign ")


def test_exit_code_3_on_infeasible_alignment(monkeypatch, tmp_path, capsys):
    from edgealign import cli as cli_mod
    from edgealign.errors import InfeasibleAssignmentError

    def explode(args):
        raise InfeasibleAssignmentError([0, 1])

    monkeypatch.setattr(cli_mod, "cmd_oracle", explode)
    assert cli_mod.main(["oracle"]) == 3
    assert "deficient left set" in capsys.readouterr().err


def test_exit_code_4_on_internal_invariant(monkeypatch, capsys):
    from edgealign import cli as cli_mod
    from edgealign.errors import InternalInvariantError

    def explode(args):
        raise InternalInvariantError("postcondition broken")

    monkeypatch.setattr(cli_mod, "cmd_oracle", explode)
    assert cli_mod.main(["oracle"]) == 4
    assert "postcondition" in capsys.readouterr().err


def test_refine_jobs_parallel_matches_sequential(dataset, tmp_path):
    for jobs, sub in (("1", "seq"), ("3", "par")):
        assert run_cli("refine", "--manifest", str(dataset / "manifest.json"),
                       "--out", str(tmp_path / sub), "--jobs", jobs) == 0
    seq_files = sorted(p.name for p in (tmp_path / "seq").iterdir())
    par_files = sorted(p.name for p in (tmp_path / "par").iterdir())
    assert seq_files == par_files
    for name in seq_files:
        assert (tmp_path / "seq" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()
