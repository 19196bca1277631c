"""CLI surface: exit codes, VERDICT line, flag plumbing, fixture tooling."""

import json
from pathlib import Path

import pytest

from doubles import QueueProvider, ScriptedGateway
from tbforge import cli
from tbforge.backend import FixtureBackend
from tbforge.config import RunConfig
from tbforge.evalharness import (CORRECT, INCORRECT, MutantCase,
                                 ProblemRecord, make_row, report_from_rows)
from tbforge.pipeline import generate_testbench
from tbforge.problem import Problem, load_problem
from tbforge.traces import stimulus_to_json
from tbforge.workspace import (MODEL_FILE, PLAN_FILE, REFERENCE_FILE,
                               STIMULUS_FILE, TESTBENCH_FILE)

ADDER_V = """\
module adder2(input [1:0] a, input [1:0] b, output [2:0] sum);
  assign sum = a + b;
endmodule
"""

PLAN_TEXT = "1. drive small operands\n2. saturate both inputs"
MODEL_SRC = "class Python_DUT: pass"

PASS_SIM = ("RESULT: PASS\n", 0)
FAIL_SIM = ("MISMATCH scenario=s0_x step=0 signal=sum "
            "expected=011 actual=100\nRESULT: FAIL failures=1\n", 1)


def fenced(body):
    return f"```python\n{body}\n```"


def judge_json(best, aligned, analysis="report"):
    return ("prose\n```json\n" +
            json.dumps({"best": best, "aligned": aligned,
                        "analysis": analysis}) + "\n```")


def cause_json(cause, rationale="because"):
    return ("thinking...\n```json\n" +
            json.dumps({"cause": cause, "rationale": rationale}) + "\n```")


@pytest.fixture
def provider_queue(monkeypatch):
    """Routes provider.kind=queue to an in-test provider double."""
    queue = QueueProvider()
    real = cli.make_provider

    def fake(cfg, record_dir=None):
        if cfg.kind == "queue":
            return queue
        return real(cfg, record_dir=record_dir)

    monkeypatch.setattr(cli, "make_provider", fake)
    return queue


@pytest.fixture
def cli_env(tmp_path, adder_iface, make_suite):
    """Problem dir on disk plus a recorded script backend for it."""
    problem_dir = tmp_path / "problems" / "adder2"
    problem_dir.mkdir(parents=True)
    (problem_dir / "spec.txt").write_text("A 2-bit adder: sum = a + b.")
    (problem_dir / "top.v").write_text(ADDER_V)

    suite = make_suite(adder_iface, {"s0_x": [{"a": 1, "b": 2}]})
    backend_dir = tmp_path / "bk"
    backend = FixtureBackend(backend_dir)
    stim_doc = [{"scenario": "x", "steps": [{"a": "01", "b": "10"}]}]
    backend.record_stimulus("SA", stim_doc)
    backend.record_stimulus("SB", stim_doc)
    backend.record_emulator(
        MODEL_SRC, stimulus_to_json(suite),
        [{"scenario": "s0_x",
          "steps": [{"inputs": {"a": "01", "b": "10"},
                     "outputs": {"sum": "011"}}]}])

    class Env:
        problem = problem_dir
        backend = backend_dir
        ws = tmp_path / "ws"
        out = tmp_path / "ws" / "adder2"

    return Env


def gen_argv(env, extra=()):
    return ["gen-tb", str(env.problem), "--out", str(env.ws),
            "--provider.kind", "queue",
            "--runtime.fixture_dir", str(env.backend),
            "--stimulus_samples", "2", "--emulator_samples", "1",
            "--improve_iterations", "1", *extra]


def script_full_run(queue):
    return (queue
            .reply("planning test scenarios", [PLAN_TEXT])
            .reply("stimulus generator", [fenced("SA"), fenced("SB")])
            .reply("functional model of", [fenced(MODEL_SRC)])
            .reply("verification judge", [judge_json(0, True, "ok")]))


def generate_artifacts(env):
    """Produce gen-tb artifacts through the API, for verify-only tests."""
    problem = load_problem(env.problem)
    gw = (ScriptedGateway()
          .reply("planning test scenarios", [PLAN_TEXT])
          .reply("stimulus generator", [fenced("SA"), fenced("SB")])
          .reply("functional model of", [fenced(MODEL_SRC)])
          .reply("verification judge", [judge_json(0, True, "ok")]))
    config = RunConfig(stimulus_samples=2, emulator_samples=1,
                       improve_iterations=1)
    generate_testbench(problem, config, gw, FixtureBackend(env.backend),
                       env.out)


class TestGenTb:
    def test_writes_artifacts_and_ledger(self, cli_env, provider_queue,
                                         capsys):
        script_full_run(provider_queue)
        assert cli.main(gen_argv(cli_env)) == 0
        for name in (PLAN_FILE, STIMULUS_FILE, MODEL_FILE, REFERENCE_FILE,
                     TESTBENCH_FILE):
            assert (cli_env.out / name).is_file(), name
        out = capsys.readouterr().out
        assert f"artifacts written to {cli_env.out}" in out
        assert "self_improve" in out  # ledger table printed
        meta = json.loads((cli_env.out / "run_meta.json").read_text())
        # 10/5 tokens per sample: plan 1 + scripts 2 on the stimulus stage
        assert meta["tokens"]["stimulus"] == {"prompt_tokens": 30,
                                              "completion_tokens": 15}
        assert meta["tokens"]["emulator"] == {"prompt_tokens": 10,
                                              "completion_tokens": 5}
        assert meta["tokens"]["self_improve"] == {"prompt_tokens": 10,
                                                  "completion_tokens": 5}
        assert meta["command"] == "gen-tb"
        transcripts = list((cli_env.out / "transcripts").glob("*.json"))
        assert len(transcripts) == 4

    def test_missing_problem_dir_exits_2_with_error_json(self, cli_env):
        argv = ["gen-tb", str(cli_env.problem.parent / "ghost"),
                "--out", str(cli_env.ws)]
        assert cli.main(argv) == 2
        doc = json.loads((cli_env.ws / "error.json").read_text())
        assert doc["kind"] == "BadProblem"
        assert "spec.txt" in doc["detail"]

    def test_no_runtime_configured_exits_3(self, cli_env):
        argv = ["gen-tb", str(cli_env.problem), "--out", str(cli_env.ws)]
        assert cli.main(argv) == 3
        doc = json.loads((cli_env.ws / "error.json").read_text())
        assert doc["kind"] == "Backend"

    def test_fixture_miss_exits_4(self, cli_env, tmp_path):
        empty = tmp_path / "no_fixtures"
        empty.mkdir()
        argv = ["gen-tb", str(cli_env.problem), "--out", str(cli_env.ws),
                "--provider.kind", "fixture",
                "--provider.fixture_dir", str(empty),
                "--runtime.fixture_dir", str(cli_env.backend)]
        assert cli.main(argv) == 4
        doc = json.loads((cli_env.ws / "error.json").read_text())
        assert doc["kind"] == "FixtureMiss"

    def test_bad_flag_value_exits_2(self, cli_env):
        argv = gen_argv(cli_env, extra=["--stimulus_samples", "0"])
        assert cli.main(argv) == 2
        doc = json.loads((cli_env.ws / "error.json").read_text())
        assert doc["kind"] == "Config"

    def test_flag_overrides_reach_the_provider(self, cli_env,
                                               provider_queue):
        script_full_run(provider_queue)
        argv = gen_argv(cli_env, extra=["--temperature", "0.9"])
        assert cli.main(argv) == 0
        script_calls = [s for s in provider_queue.samples_seen
                        if s[0] == "stimulus generator"]
        assert len(script_calls) == 2  # --stimulus_samples 2
        assert all(s[2] == 0.9 and s[3] == 2 for s in script_calls)

    def test_flag_beats_config_file(self, cli_env, provider_queue, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"stimulus_samples": 1,
                                   "temperature": 0.3}))
        script_full_run(provider_queue)
        argv = gen_argv(cli_env, extra=["--config", str(cfg)])
        assert cli.main(argv) == 0
        script_calls = [s for s in provider_queue.samples_seen
                        if s[0] == "stimulus generator"]
        assert len(script_calls) == 2

    def test_missing_config_file_exits_2(self, cli_env):
        argv = gen_argv(cli_env, extra=["--config", "/no/such/cfg.json"])
        assert cli.main(argv) == 2


class TestVerify:
    def verify_argv(self, env, extra=()):
        return ["verify", str(env.problem), "--out", str(env.ws),
                "--provider.kind", "queue",
                "--runtime.fixture_dir", str(env.backend), *extra]

    def test_pass_verdict_line_and_exit_0(self, cli_env, provider_queue,
                                          fake_builder, monkeypatch, capsys):
        generate_artifacts(cli_env)
        monkeypatch.setattr(cli, "VerilatorBuilder",
                            lambda timeout_s: fake_builder([PASS_SIM]))
        assert cli.main(self.verify_argv(cli_env)) == 0
        assert "VERDICT: PASS rounds=0" in capsys.readouterr().out
        meta = json.loads((cli_env.out / "run_meta.json").read_text())
        assert meta["command"] == "verify"

    def test_dut_fault_exits_1(self, cli_env, provider_queue, fake_builder,
                               monkeypatch, capsys):
        generate_artifacts(cli_env)
        provider_queue.reply("root-cause", [cause_json("DUT")])
        monkeypatch.setattr(cli, "VerilatorBuilder",
                            lambda timeout_s: fake_builder([FAIL_SIM]))
        assert cli.main(self.verify_argv(cli_env)) == 1
        assert "VERDICT: FAIL rounds=1" in capsys.readouterr().out

    def test_dut_override_is_what_gets_simulated(self, cli_env,
                                                 provider_queue, fake_builder,
                                                 monkeypatch, tmp_path):
        generate_artifacts(cli_env)
        mutant = tmp_path / "mutant.v"
        mutant.write_text(ADDER_V.replace("a + b", "a ^ b"))
        seen = []
        inner = fake_builder([PASS_SIM])

        def spy(workdir, dut_file, tb_file, module_name):
            seen.append((Path(workdir) / dut_file).read_text())
            return inner(workdir, dut_file, tb_file, module_name)

        monkeypatch.setattr(cli, "VerilatorBuilder", lambda timeout_s: spy)
        argv = self.verify_argv(cli_env, extra=["--dut", str(mutant)])
        assert cli.main(argv) == 0
        assert seen == [ADDER_V.replace("a + b", "a ^ b")]

    def test_missing_artifacts_exit_2(self, cli_env, provider_queue):
        assert cli.main(self.verify_argv(cli_env)) == 2
        doc = json.loads((cli_env.ws / "error.json").read_text())
        assert doc["kind"] == "BadProblem"
        assert "gen-tb" in doc["detail"]


class TestEval:
    @pytest.fixture
    def canned_report(self, adder_iface):
        problem = Problem(id="p0", spec_text="spec", interface=adder_iface,
                          circuit_type="CMB")
        record = ProblemRecord(problem, golden_dut="module p0;",
                               mutants=(MutantCase("m0", "src", CORRECT),
                                        MutantCase("m1", "src2", INCORRECT)))
        row = make_row(record, eval1_pre=True, eval1_post=True, rounds_used=0,
                       mutant_status={"m0": "PASS", "m1": "FAIL"})
        return lambda alphas: report_from_rows([record], [row], alphas)

    @pytest.fixture
    def bench_stub(self, monkeypatch, canned_report):
        seen = {}

        def stub(corpus_dir, config, alphas, resume, out_dir):
            seen.update(corpus=corpus_dir, alphas=alphas, resume=resume,
                        out_dir=out_dir)
            return canned_report(alphas)

        monkeypatch.setattr(cli, "run_benchmark", stub)
        return seen

    def test_default_alphas_and_table(self, bench_stub, capsys, tmp_path):
        argv = ["eval", "--corpus", str(tmp_path / "corpus")]
        assert cli.main(argv) == 0
        assert bench_stub["alphas"] == (80, 100)
        assert bench_stub["resume"] is False
        out = capsys.readouterr().out
        assert "Eval2-100%" in out and "Eval2-80%" in out and "Eval1" in out

    def test_alpha_resume_and_out_plumb_through(self, bench_stub, capsys,
                                                tmp_path):
        argv = ["eval", "--corpus", str(tmp_path / "c"), "--alpha", "50",
                "--alpha", "90", "--resume", "--out", str(tmp_path / "o")]
        assert cli.main(argv) == 0
        assert bench_stub["alphas"] == (50, 90)
        assert bench_stub["resume"] is True
        assert bench_stub["out_dir"] == tmp_path / "o"
        assert "Eval2-90%" in capsys.readouterr().out


class TestDeriveVerdicts:
    def test_derives_and_writes_verdict_files(self, tmp_path, fake_builder,
                                              monkeypatch, capsys):
        pdir = tmp_path / "corpus" / "adder2"
        (pdir / "mutants").mkdir(parents=True)
        (pdir / "spec.txt").write_text("A 2-bit adder.")
        (pdir / "top.v").write_text(ADDER_V)
        (pdir / "golden_tb.cpp").write_text("// golden tb")
        (pdir / "mutants" / "m_bad.v").write_text(
            ADDER_V.replace("a + b", "a ^ b"))
        # golden run passes, then the single mutant fails
        monkeypatch.setattr(
            cli, "VerilatorBuilder",
            lambda timeout_s: fake_builder([PASS_SIM, FAIL_SIM]))
        argv = ["derive-verdicts", str(tmp_path / "corpus")]
        assert cli.main(argv) == 0
        assert "derived 1 verdicts across 1 problems" in \
            capsys.readouterr().out
        verdict = (pdir / "mutants" / "m_bad.verdict").read_text().strip()
        assert verdict == INCORRECT

    def test_missing_golden_tb_exits_2(self, tmp_path):
        pdir = tmp_path / "corpus" / "adder2"
        pdir.mkdir(parents=True)
        (pdir / "spec.txt").write_text("spec")
        (pdir / "top.v").write_text(ADDER_V)
        assert cli.main(["derive-verdicts", str(tmp_path / "corpus")]) == 2


class TestFixtureTooling:
    def test_record_check_replay_roundtrip(self, cli_env, provider_queue,
                                           capsys, tmp_path):
        # run 1: live provider, transcripts persisted alongside artifacts
        script_full_run(provider_queue)
        assert cli.main(gen_argv(cli_env)) == 0
        capsys.readouterr()

        fixdir = tmp_path / "fix"
        argv = ["fixtures", "record", str(cli_env.ws), "--into", str(fixdir)]
        assert cli.main(argv) == 0
        assert "wrote 5 fixture files" in capsys.readouterr().out

        assert cli.main(["fixtures", "check", str(fixdir)]) == 0
        assert "5 fixture files ok" in capsys.readouterr().out

        # run 2: replay from the recorded fixtures into a fresh workspace
        ws2 = tmp_path / "ws2"
        argv = ["gen-tb", str(cli_env.problem), "--out", str(ws2),
                "--provider.kind", "fixture",
                "--provider.fixture_dir", str(fixdir),
                "--runtime.fixture_dir", str(cli_env.backend),
                "--stimulus_samples", "2", "--emulator_samples", "1",
                "--improve_iterations", "1"]
        assert cli.main(argv) == 0
        for name in (PLAN_FILE, STIMULUS_FILE, MODEL_FILE, REFERENCE_FILE,
                     TESTBENCH_FILE):
            assert (ws2 / "adder2" / name).read_bytes() == \
                (cli_env.out / name).read_bytes(), name
        meta1 = json.loads((cli_env.out / "run_meta.json").read_text())
        meta2 = json.loads((ws2 / "adder2" / "run_meta.json").read_text())
        assert meta1["tokens"] == meta2["tokens"]

    def test_record_with_no_transcripts_exits_2(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        argv = ["fixtures", "record", str(empty),
                "--into", str(tmp_path / "fix")]
        assert cli.main(argv) == 2

    def test_check_lists_offenders_and_exits_2(self, tmp_path, capsys):
        fixdir = tmp_path / "fix"
        fixdir.mkdir()
        (fixdir / "zz.json").write_text("{}")
        (fixdir / ("a" * 64 + ".0.json")).write_text(
            json.dumps({"text": "t", "prompt_tokens": -1,
                        "completion_tokens": 0}))
        assert cli.main(["fixtures", "check", str(fixdir)]) == 2
        out = capsys.readouterr().out
        assert "zz.json: unrecognized fixture filename" in out
        assert "bad completion-fixture schema" in out

    def test_check_accepts_backend_fixtures(self, cli_env, capsys):
        assert cli.main(["fixtures", "check", str(cli_env.backend)]) == 0
        assert "3 fixture files ok" in capsys.readouterr().out


class TestParser:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--version"])
        assert exc.value.code == 0

    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2

    def test_every_config_key_has_a_flag(self):
        from tbforge.config import CONFIG_KEYS
        parser = cli.build_parser()
        args = parser.parse_args(
            ["gen-tb", "p", "--provider.kind", "remote",
             "--eval_workers", "9"])
        assert vars(args)["provider.kind"] == "remote"
        assert vars(args)["eval_workers"] == "9"
        for key in CONFIG_KEYS:
            assert key in vars(args)
