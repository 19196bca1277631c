"""Workspace layout, run_meta.json snapshots, error records."""

import json

from tbforge import __version__
from tbforge.config import RunConfig
from tbforge.gateway import TokenLedger
from tbforge.workspace import (ERROR_FILE, META_FILE, MODEL_FILE, PLAN_FILE,
                               REFERENCE_FILE, STIMULUS_FILE, TESTBENCH_FILE,
                               Workspace, tool_versions, write_error,
                               write_run_meta)


class TestLayout:
    def test_problem_dir_created_and_idempotent(self, tmp_path):
        ws = Workspace(tmp_path / "runs")
        d1 = ws.problem_dir("p1")
        d2 = ws.problem_dir("p1")
        assert d1 == d2 == tmp_path / "runs" / "p1"
        assert d1.is_dir()

    def test_artifact_paths_use_stable_names(self, tmp_path):
        ws = Workspace(tmp_path)
        assert ws.plan_path("p").name == PLAN_FILE
        assert ws.stimulus_path("p").name == STIMULUS_FILE
        assert ws.reference_path("p").name == REFERENCE_FILE
        assert ws.model_path("p").name == MODEL_FILE
        assert ws.testbench_path("p").name == TESTBENCH_FILE
        assert ws.transcript_dir("p") == tmp_path / "p" / "transcripts"
        # all fixed-name artifacts live directly in the problem dir
        for path in (ws.plan_path("p"), ws.stimulus_path("p"),
                     ws.reference_path("p"), ws.model_path("p"),
                     ws.testbench_path("p")):
            assert path.parent == tmp_path / "p"


class TestToolVersions:
    def test_python_and_package_versions_present(self):
        versions = tool_versions()
        assert versions["tbforge"] == __version__
        major, minor = versions["python"].split(".")[:2]
        assert int(major) >= 3 and int(minor) >= 0


class TestRunMeta:
    def test_snapshot_contents(self, tmp_path):
        ledger = TokenLedger()
        ledger.add("stimulus", 100, 20)
        ledger.add("self_improve", 7, 3)
        path = write_run_meta(tmp_path / "out", RunConfig(), ledger,
                              extra={"command": "gen-tb"})
        assert path.name == META_FILE
        doc = json.loads(path.read_text(encoding="utf-8"))
        assert doc["config"]["stimulus_samples"] == 3
        assert doc["config"]["provider"]["kind"] == "fixture"
        assert doc["tokens"] == ledger.as_dict()
        assert doc["tokens"]["stimulus"] == {"prompt_tokens": 100,
                                             "completion_tokens": 20}
        assert doc["command"] == "gen-tb"
        assert doc["tools"]["tbforge"] == __version__

    def test_creates_directory_and_overwrites(self, tmp_path):
        target = tmp_path / "a" / "b"
        write_run_meta(target, RunConfig(), TokenLedger(),
                       extra={"command": "one"})
        path = write_run_meta(target, RunConfig(), TokenLedger(),
                              extra={"command": "two"})
        assert json.loads(path.read_text(encoding="utf-8"))["command"] == "two"


class TestErrorRecord:
    def test_write_error_shape(self, tmp_path):
        path = write_error(tmp_path / "new" / "dir", kind="BadProblem",
                           detail="missing spec.txt")
        assert path.name == ERROR_FILE
        doc = json.loads(path.read_text(encoding="utf-8"))
        assert doc == {"kind": "BadProblem", "detail": "missing spec.txt"}
