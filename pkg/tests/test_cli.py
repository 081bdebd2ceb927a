import json
import shutil
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from metaeval import __version__
from metaeval.cli import main

from conftest import FIXTURES


def run_cli(*args):
    return main(["analyze", *map(str, args)])


@pytest.fixture
def beir(tmp_path):
    dst = tmp_path / "beir"
    shutil.copytree(FIXTURES / "beir", dst)
    return dst


def test_beir_end_to_end(tmp_path):
    svg, md, js = tmp_path / "f.svg", tmp_path / "r.md", tmp_path / "r.json"
    code = run_cli("--config", FIXTURES / "beir" / "manifest.json", "--out-svg", svg, "--out-md", md, "--out-json", js)
    assert code == 0
    root = ET.fromstring(svg.read_bytes())
    ns = {"s": "http://www.w3.org/2000/svg"}
    assert len(root.findall("s:g[@class='row']", ns)) + len(root.findall("s:g[@class='summary']", ns)) == 8
    report = json.loads(js.read_text())
    names = [d["task_id"] for d in report["diagnostics"]]
    assert names == ["trip", "dbpedia", "robust04", "nfcorpus", "podcast", "antique", "covid"]
    assert all(d["judged_control"] is not None for d in report["diagnostics"])
    text = md.read_text()
    positions = [text.index(f"| {n} |") for n in ["TripClick", "DBPedia Entity", "TREC Covid"]]
    assert positions == sorted(positions)


def test_glue_end_to_end(tmp_path):
    svg, md, js = tmp_path / "f.svg", tmp_path / "r.md", tmp_path / "r.json"
    code = run_cli("--config", FIXTURES / "glue" / "manifest.json", "--out-svg", svg, "--out-md", md, "--out-json", js)
    assert code == 0
    report = json.loads(js.read_text())
    shares = [t["weight_share"] for t in report["pooled"]["per_task"]]
    assert len(shares) == 7 and all(0 < s < 1 for s in shares)
    assert "Summary (random effects)" in md.read_text()


def test_effect_type_override(tmp_path):
    js = tmp_path / "r.json"
    code = run_cli("--config", FIXTURES / "beir" / "manifest.json", "--effect-type", "SMD", "--alpha", "0.1",
                   "--out-svg", tmp_path / "f.svg", "--out-md", tmp_path / "r.md", "--out-json", js)
    assert code == 0
    report = json.loads(js.read_text())
    assert report["manifest"]["effect_type"] == "SMD"
    assert report["manifest"]["alpha"] == 0.1


def test_unknown_effect_type_in_manifest(beir, tmp_path, capsys):
    m = json.loads((beir / "manifest.json").read_text())
    m["effect_type"] = "XYZ"
    (beir / "manifest.json").write_text(json.dumps(m))
    svg, md = tmp_path / "f.svg", tmp_path / "r.md"
    assert run_cli("--config", beir / "manifest.json", "--out-svg", svg, "--out-md", md) == 1
    assert "MD|SMD|CORR" in capsys.readouterr().err
    assert not svg.exists() and not md.exists()


def test_unknown_effect_type_flag(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("--config", FIXTURES / "beir" / "manifest.json", "--effect-type", "XYZ",
                "--out-svg", tmp_path / "f.svg", "--out-md", tmp_path / "r.md")
    assert exc.value.code == 1
    assert "MD|SMD|CORR" in capsys.readouterr().err


def test_missing_manifest(tmp_path):
    assert run_cli("--config", tmp_path / "nope.json", "--out-svg", tmp_path / "f.svg", "--out-md", tmp_path / "r.md") == 1


def test_parse_error_exit_2(beir, tmp_path, capsys):
    (beir / "covid" / "qrels.txt").write_text("q1 0 d1 high\n")
    svg, md = tmp_path / "f.svg", tmp_path / "r.md"
    assert run_cli("--config", beir / "manifest.json", "--out-svg", svg, "--out-md", md) == 2
    assert "line 1" in capsys.readouterr().err
    assert not svg.exists() and not md.exists()


def test_missing_input_file_exit_2(beir, tmp_path):
    (beir / "trip" / "control.run").unlink()
    assert run_cli("--config", beir / "manifest.json", "--out-svg", tmp_path / "f.svg", "--out-md", tmp_path / "r.md") == 2


def _identity_task(root, name, treatment, control):
    d = root / name
    d.mkdir(parents=True)
    (d / "t.tsv").write_text("".join(f"s{i}\t{v}\n" for i, v in enumerate(treatment)))
    (d / "c.tsv").write_text("".join(f"s{i}\t{v}\n" for i, v in enumerate(control)))
    return {"task_id": name, "display_name": name.upper(), "mode": "classification",
            "treatment_path": f"{name}/t.tsv", "control_path": f"{name}/c.tsv"}


def test_smd_degeneracy_exit_3_names_task(tmp_path, capsys):
    exps = [
        _identity_task(tmp_path, "ok", [0.5, 0.7, 0.2, 0.9], [0.4, 0.5, 0.3, 0.6]),
        _identity_task(tmp_path, "shifted", [1.1, 1.2, 1.3, 1.4], [1.0, 1.1, 1.2, 1.3]),
    ]
    (tmp_path / "m.json").write_text(json.dumps({"metric": "identity", "effect_type": "SMD", "alpha": 0.05, "experiments": exps}))
    svg, md = tmp_path / "f.svg", tmp_path / "r.md"
    assert run_cli("--config", tmp_path / "m.json", "--out-svg", svg, "--out-md", md) == 3
    assert "'shifted'" in capsys.readouterr().err
    assert not svg.exists() and not md.exists()


def test_correlation_records(tmp_path):
    exps = []
    for name, r, n in [("a", 0.5, 12), ("b", 0.3, 40), ("c", 0.7, 25)]:
        (tmp_path / f"{name}.tsv").write_text(f"{r}\t{n}\n")
        exps.append({"task_id": name, "display_name": name, "mode": "classification", "treatment_path": f"{name}.tsv"})
    (tmp_path / "m.json").write_text(json.dumps({"metric": "correlation", "effect_type": "CORR", "experiments": exps}))
    js = tmp_path / "r.json"
    assert run_cli("--config", tmp_path / "m.json", "--out-svg", tmp_path / "f.svg", "--out-md", tmp_path / "r.md", "--out-json", js) == 0
    per_task = json.loads(js.read_text())["pooled"]["per_task"]
    assert [t["display_value"] for t in per_task] == [0.5, 0.3, 0.7]
    assert "| a | 0.5000 |" in (tmp_path / "r.md").read_text()


def test_parallel_matches_serial(tmp_path):
    outs = []
    for jobs in ("1", "4"):
        svg, md = tmp_path / f"{jobs}.svg", tmp_path / f"{jobs}.md"
        assert main(["analyze", "--config", str(FIXTURES / "beir" / "manifest.json"), "--jobs", jobs,
                     "--out-svg", str(svg), "--out-md", str(md)]) == 0
        outs.append((svg.read_bytes(), md.read_bytes()))
    assert outs[0] == outs[1]


def test_version_and_module_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "metaeval", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert __version__ in out.stdout
    assert __version__.count(".") == 2
