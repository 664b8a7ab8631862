import json
import subprocess
import sys

import pytest

from metameval.cli import run
from metameval.ingest import load_dataset, parse_scores_tsv

ASSIGN = "segment\trater\ns1\tr1\ns1\tr2\ns2\tr1\ns2\tr3\ns3\tr2\ns3\tr4\ns4\tr3\ns4\tr4\n"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    assert run(["synth", "--segments", "15", "--systems", "4", "--noise", "0.2,2", "--seed", "3",
                "--out", str(out)]) == 0
    return out


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "rank" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "metameval.cli", "rank", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "--gold" in proc.stdout


def test_no_subcommand_is_usage_error(capsys):
    assert run([]) == 1


def test_missing_required_flag_is_usage_error(synth_dir, capsys):
    assert run(["rank", "--data", str(synth_dir), "--seed", "1"]) == 1
    assert "--gold" in capsys.readouterr().err


def test_unknown_flag_and_measure_are_usage_errors(synth_dir):
    assert run(["rank", "--bogus"]) == 1
    assert run(["rank", "--data", str(synth_dir), "--gold", "gold", "--seed", "1", "--measure", "bleu"]) == 1


def test_missing_input_is_data_error(tmp_path, capsys):
    assert run(["rank", "--data", str(tmp_path / "nope"), "--gold", "g", "--seed", "1"]) == 2
    assert "not found" in capsys.readouterr().err


def test_malformed_scores_is_data_error(tmp_path, capsys):
    bad = write(tmp_path / "s.tsv", "evaluator\tsystem\tsegment\tscore\nA\tx\ts1\tabc\n")
    assert run(["ingest", "--scores", bad, "--out", str(tmp_path / "d")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_ingest_round_trip(tmp_path):
    a = write(tmp_path / "a.tsv", "evaluator\tsystem\tsegment\tscore\nA\tx\ts1\t1.5\nA\ty\ts1\t2\n")
    b = write(tmp_path / "b.tsv", "evaluator\tsystem\tsegment\tscore\nB\tx\ts1\t-1\nB\ty\ts1\t0.25\n")
    out = tmp_path / "d"
    assert run(["ingest", "--scores", a, "--scores", b, "--out", str(out), "--langpair", "en-de"]) == 0
    ds = load_dataset(out)
    assert list(ds.evaluators) == ["A", "B"]
    assert ds.langpair == "en-de"
    assert ds.table("B").get("y", "s1") == 0.25


def test_ingest_rejects_evaluator_in_two_files(tmp_path):
    a = write(tmp_path / "a.tsv", "evaluator\tsystem\tsegment\tscore\nA\tx\ts1\t1\n")
    assert run(["ingest", "--scores", a, "--scores", a, "--out", str(tmp_path / "d")]) == 2


def test_partition_and_mqm_score(tmp_path):
    assign = write(tmp_path / "assign.tsv", ASSIGN)
    part = tmp_path / "partition.json"
    assert run(["partition", "--assign", assign, "--k", "2", "--out", str(part)]) == 0
    sol = json.loads(part.read_text())
    assert sorted(sol["retained_segments"]) == ["s1", "s2", "s3", "s4"]

    spans = ["rater\tsystem\tsegment\tstart\tend\tcategory\tseverity"]
    spans += ["r1\tA\ts1\t0\t3\taccuracy\tMajor", "r2\tA\ts1\t-1\t-1\tfluency\tMinor",
              "r4\tB\ts3\t2\t4\tstyle\tCritical"]
    ann = write(tmp_path / "spans.tsv", "\n".join(spans) + "\n")
    out = tmp_path / "mqm.tsv"
    assert run(["score", "--protocol", "MQM", "--annotations", ann, "--assign", assign,
                "--partition", str(part), "--out", str(out), "--systems", "A,B",
                "--weight", "Critical=25"]) == 0
    tables = {t.evaluator_id: t for t in parse_scores_tsv(out.read_text())}
    assert set(tables) == {"MQM-1", "MQM-2"}
    assert tables["MQM-1"].get("A", "s1") == -5.0
    assert tables["MQM-1"].get("B", "s3") == -25.0
    assert tables["MQM-2"].get("A", "s1") == -1.0
    assert tables["MQM-2"].get("B", "s2") == 0.0


def test_partition_solvers_agree(tmp_path):
    assign = write(tmp_path / "assign.tsv", ASSIGN)
    for solver in ("bnb", "brute"):
        assert run(["partition", "--assign", assign, "--k", "2", "--solver", solver,
                    "--out", str(tmp_path / f"{solver}.json")]) == 0
    assert (tmp_path / "bnb.json").read_text() == (tmp_path / "brute.json").read_text()


def test_partition_infeasible_k(tmp_path):
    assign = write(tmp_path / "assign.tsv", ASSIGN)
    assert run(["partition", "--assign", assign, "--k", "9", "--out", str(tmp_path / "p.json")]) == 2


def test_scalar_protocol_range_checked(tmp_path):
    assign = write(tmp_path / "assign.tsv", ASSIGN)
    part = tmp_path / "p.json"
    run(["partition", "--assign", assign, "--k", "2", "--out", str(part)])
    ann = write(tmp_path / "esa.tsv", "evaluator\tsystem\tsegment\tscore\nr1\tA\ts1\t140\n")
    assert run(["score", "--protocol", "ESA", "--annotations", ann, "--assign", assign,
                "--partition", str(part), "--out", str(tmp_path / "o.tsv")]) == 2


def test_rank_formats_and_report(synth_dir, tmp_path, capsys):
    common = ["rank", "--data", str(synth_dir), "--gold", "gold", "--human", "noise2",
              "--perm", "50", "--seed", "4", "--measure", "spa,acc-eq,pa"]
    js = tmp_path / "r.json"
    assert run(common + ["--format", "json", "--out", str(js)]) == 0
    assert run(common + ["--format", "tsv"]) == 0
    tsv = capsys.readouterr().out
    assert tsv.startswith("evaluator\thuman\tspa\tspa_rank")
    md = tmp_path / "r.md"
    assert run(common + ["--out", str(md)]) == 0
    assert run(["report", "--in", str(js), "--format", "markdown", "--out", str(tmp_path / "re.md")]) == 0
    assert (tmp_path / "re.md").read_text() == md.read_text()
    assert "**noise2**" in md.read_text()


def test_rank_gold_among_evaluators_is_data_error(synth_dir):
    assert run(["rank", "--data", str(synth_dir), "--gold", "gold", "--evaluators", "gold,noise2",
                "--seed", "1", "--perm", "10"]) == 2


def test_config_file_and_flag_precedence(synth_dir, tmp_path, capsys):
    cfg = write(tmp_path / "run.cfg", f"data = {synth_dir}\ngold = gold\nseed = 4\nperm = 50\nformat = tsv\n")
    assert run(["--config", cfg, "rank"]) == 0
    from_config = capsys.readouterr().out
    assert run(["rank", "--data", str(synth_dir), "--gold", "gold", "--seed", "4", "--perm", "50",
                "--format", "tsv"]) == 0
    assert capsys.readouterr().out == from_config
    assert run(["--config", cfg, "rank", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["gold_id"] == "gold"


def test_log_file(synth_dir, tmp_path):
    log = tmp_path / "run.log"
    assert run(["--log", str(log), "rank", "--data", str(synth_dir), "--gold", "gold", "--seed", "1",
                "--perm", "10", "--out", str(tmp_path / "o.md")]) == 0
    assert "ranking 2 evaluators on 15 segments" in log.read_text()
