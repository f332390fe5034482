import filecmp
import io
import json
import shutil

import pytest

from deprofile_forge import cli
from deprofile_forge.config import RunConfig


def run_cli(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out)
    return code, out.getvalue()


def run_dir(root, *overrides):
    return RunConfig.load(overrides=[f"output_root={root}", *overrides]).run_dir


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    code, out = run_cli("pipeline", "--set", f"output_root={root}")
    return code, out, run_dir(root)


def test_pipeline_completes(pipeline_run):
    code, out, rd = pipeline_run
    assert code == cli.EXIT_OK
    assert out.splitlines()[-7].split("\t")[0] == "variant"
    for rel in ("match/skeletons.jsonl", "expand/profiles.jsonl", "coc/index.json", "report/report.json",
                "report/summary.tsv", "report/summary.md", "report/figures/summary.png"):
        assert (rd / rel).is_file(), rel
    index = json.loads((rd / "coc/index.json").read_text())
    assert len(index["memories"]) == 12


def test_pipeline_report_content(pipeline_run):
    _, _, rd = pipeline_run
    rows = (rd / "report/summary.tsv").read_text().strip().split("\n")
    assert len(rows) == 7
    report = json.loads((rd / "eval/full/report.json").read_text())
    assert report["citation_audit"]["matched"] >= 1
    assert len(report["geval"]["per_transcript"]) == 12 and not report["geval"]["failures"]
    assert len(list((rd / "report/figures").glob("*.png"))) == 13


def test_memory_card_fields(pipeline_run):
    _, _, rd = pipeline_run
    for path in (rd / "coc/memory").glob("*.json"):
        for card in json.loads(path.read_text())["cards"]:
            assert set(card) == {"episode_id", "time_range", "card_cn"}


def test_tags_select_prompt_blocks(tmp_path):
    assert run_cli("ingest", "--set", f"output_root={tmp_path}")[0] == 0
    for stage in ("match", "expand", "coc"):
        assert run_cli(stage, "--set", f"output_root={tmp_path}")[0] == 0
    code, _ = run_cli("prompt", "--set", f"output_root={tmp_path}", "--tags", "B,R,P", "--tags", "B,R,P,S,T")
    assert code == 0
    rd = run_dir(tmp_path)
    basic = (rd / "prompts/basic/cns00+asm00.txt").read_text()
    st = (rd / "prompts/basic+ST/cns00+asm00.txt").read_text()
    assert "represent_time" not in basic and "represent_time" in st
    assert sorted(p.name for p in (rd / "prompts").iterdir()) == ["basic", "basic+ST"]


def test_stage_before_dependency_is_data_error(tmp_path, capsys):
    code, _ = run_cli("expand", "--set", f"output_root={tmp_path}")
    assert code == cli.EXIT_DATA
    assert "match/skeletons.jsonl" in capsys.readouterr().err


def test_unknown_override_is_usage_error(tmp_path):
    assert run_cli("ingest", "--set", "coc.nope=1")[0] == cli.EXIT_USAGE
    assert run_cli("ingest", "--tags", "B,Q")[0] == cli.EXIT_USAGE
    assert run_cli("ingest", "--backend", "missing")[0] == cli.EXIT_USAGE
    assert run_cli("frobnicate")[0] == cli.EXIT_USAGE


def test_dry_run_writes_nothing(tmp_path):
    code, out = run_cli("pipeline", "--dry-run", "--set", f"output_root={tmp_path}")
    assert code == 0 and "[dry-run]" in out
    assert list(tmp_path.iterdir()) == []


def test_help_lists_flags(capsys):
    assert run_cli("pipeline", "--help")[0] == 0
    text = capsys.readouterr().out
    for flag in ("--config", "--set", "--backend", "--dry-run", "--tags", "--verbose"):
        assert flag in text


def test_backend_flag_selects_by_kind(tmp_path):
    args = ["--set", f"output_root={tmp_path}", "--backend", "echo"]
    assert run_cli("ingest", *args)[0] == 0
    assert (run_dir(tmp_path, "select.chat=echo") / "config.json").is_file()


def test_reruns_are_byte_identical(tmp_path):
    args = ["pipeline", "--set", f"output_root={tmp_path / 'runs'}", "--tags", "basic", "--tags", "full"]
    rd = run_dir(tmp_path / "runs")
    assert run_cli(*args)[0] == 0
    first = shutil.copytree(rd, tmp_path / "first")
    shutil.rmtree(rd)
    assert run_cli(*args)[0] == 0

    def differing(c):
        bad = c.diff_files + c.left_only + c.right_only + c.funny_files
        for sub in c.subdirs.values():
            bad += differing(sub)
        return bad

    assert differing(filecmp.dircmp(first, rd)) == []


def test_interview_backend_failure_exit_code(tmp_path):
    # an empty answer table has no default, so every scripted turn fails
    answers = tmp_path / "answers.json"
    answers.write_text(json.dumps({"answers": {}}))
    base = ["--set", f"output_root={tmp_path}", "--set", f"backends.scripted.answers={answers}"]
    for stage in ("ingest", "match", "expand", "coc"):
        assert run_cli(stage, *base)[0] == 0
    assert run_cli("prompt", *base, "--tags", "basic")[0] == 0
    assert run_cli("interview", *base, "--tags", "basic")[0] == cli.EXIT_BACKEND
