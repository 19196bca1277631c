"""Gateway plumbing: ledger arithmetic, fixtures, retries, extraction."""

import json

import pytest

from tbforge.errors import ExtractionError, FixtureMissError, ProviderError
from tbforge.gateway import (STAGES, Completion, FixtureProvider, Gateway,
                             PromptBundle, ProviderConfig, RecordingProvider,
                             RemoteProvider, SamplingParams, TokenLedger,
                             extract_code_block, format_ledger_table,
                             ledger_report)

PROMPT = PromptBundle(system="sys", user="do the thing")


class CountingProvider:
    def __init__(self, text="ok", p=7, c=3):
        self.calls = []
        self.text, self.p, self.c = text, p, c

    def sample(self, prompt, params, index):
        self.calls.append((prompt, params, index))
        return Completion(f"{self.text}#{index}", self.p, self.c)


class TestLedger:
    def test_starts_zero_all_stages(self):
        ledger = TokenLedger()
        for stage in STAGES:
            assert ledger.get(stage) == (0, 0)

    def test_add_accumulates_exactly(self):
        ledger = TokenLedger()
        ledger.add("stimulus", 10, 5)
        ledger.add("stimulus", 1, 2)
        ledger.add("judge_validate", 100, 50)
        assert ledger.get("stimulus") == (11, 7)
        assert ledger.get("judge_validate") == (100, 50)
        assert ledger.get("emulator") == (0, 0)

    def test_unknown_stage_rejected(self):
        with pytest.raises(ValueError):
            TokenLedger().add("nope", 1, 1)

    def test_report_rows_fixed_order_and_sums(self):
        ledger = TokenLedger()
        ledger.add("emulator", 4, 6)
        rows = ledger_report(ledger)
        assert [r[0] for r in rows] == list(STAGES)
        em = rows[[r[0] for r in rows].index("emulator")]
        assert em == ("emulator", 4, 6, 10)

    def test_table_renders_every_stage(self):
        table = format_ledger_table(TokenLedger())
        for stage in STAGES:
            assert stage in table


class TestGatewayComplete:
    def test_n_samples_independent_calls(self):
        provider = CountingProvider()
        gw = Gateway(provider)
        out = gw.complete(PROMPT, SamplingParams(n_samples=4), "stimulus")
        assert [c.text for c in out] == ["ok#0", "ok#1", "ok#2", "ok#3"]
        assert [c[2] for c in provider.calls] == [0, 1, 2, 3]

    def test_ledger_counts_sum_of_samples(self):
        gw = Gateway(CountingProvider(p=7, c=3))
        gw.complete(PROMPT, SamplingParams(n_samples=5), "emulator")
        assert gw.ledger.get("emulator") == (35, 15)

    def test_stage_tagging_separates_counts(self):
        gw = Gateway(CountingProvider(p=1, c=1))
        gw.complete(PROMPT, SamplingParams(n_samples=2), "stimulus")
        gw.complete(PROMPT, SamplingParams(n_samples=3), "self_improve")
        assert gw.ledger.get("stimulus") == (2, 2)
        assert gw.ledger.get("self_improve") == (3, 3)

    def test_transcript_persisted(self, tmp_path):
        gw = Gateway(CountingProvider(), transcript_dir=tmp_path / "t")
        gw.complete(PROMPT, SamplingParams(n_samples=2), "stimulus")
        files = list((tmp_path / "t").glob("*.json"))
        assert len(files) == 1
        doc = json.loads(files[0].read_text())
        assert doc["stage"] == "stimulus"
        assert len(doc["completions"]) == 2


class TestFixtureProvider:
    def test_roundtrip_same_bytes(self, tmp_path):
        store = FixtureProvider(tmp_path)
        store.record(PROMPT, 0, Completion("hello\nworld", 12, 34))
        got = store.sample(PROMPT, SamplingParams(), 0)
        assert got == Completion("hello\nworld", 12, 34)
        again = store.sample(PROMPT, SamplingParams(), 0)
        assert again == got

    def test_miss_raises_not_substitutes(self, tmp_path):
        store = FixtureProvider(tmp_path)
        store.record(PROMPT, 0, Completion("x"))
        with pytest.raises(FixtureMissError):
            store.sample(PROMPT, SamplingParams(), 1)
        other = PromptBundle(system="sys", user="different")
        with pytest.raises(FixtureMissError):
            store.sample(other, SamplingParams(), 0)

    def test_key_depends_on_all_prompt_parts(self, tmp_path):
        base = PromptBundle(system="s", user="u", few_shots=(("a", "b"),))
        variants = [PromptBundle(system="S", user="u", few_shots=(("a", "b"),)),
                    PromptBundle(system="s", user="U", few_shots=(("a", "b"),)),
                    PromptBundle(system="s", user="u", few_shots=(("a", "c"),))]
        digests = {v.digest() for v in variants} | {base.digest()}
        assert len(digests) == 4

    def test_recording_provider_writes_through(self, tmp_path):
        inner = CountingProvider(text="live")
        store = FixtureProvider(tmp_path)
        rec = RecordingProvider(inner, store)
        got = rec.sample(PROMPT, SamplingParams(), 0)
        assert got.text == "live#0"
        assert store.sample(PROMPT, SamplingParams(), 0) == got


class FakeResponse:
    def __init__(self, status, payload=None, text=""):
        self.status_code = status
        self._payload = payload
        self.text = text

    def json(self):
        return self._payload


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def ok_response(text="body", p=5, c=2):
    return FakeResponse(200, {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": p, "completion_tokens": c}})


def remote(session, sleeps):
    cfg = ProviderConfig(kind="remote", endpoint="http://gw.test/v1",
                         model="m1")
    return RemoteProvider(cfg, session=session, sleep=sleeps.append)


class TestRemoteProvider:
    def test_success_first_try(self):
        session = FakeSession([ok_response("answer", 9, 4)])
        sleeps = []
        got = remote(session, sleeps).sample(PROMPT, SamplingParams(), 0)
        assert got == Completion("answer", 9, 4)
        assert sleeps == []
        body = session.requests[0]["json"]
        assert body["messages"][0] == {"role": "system", "content": "sys"}
        assert body["messages"][-1] == {"role": "user",
                                        "content": "do the thing"}

    def test_retries_with_backoff_then_succeeds(self):
        import requests as rq
        session = FakeSession([rq.ConnectionError("down"),
                               FakeResponse(503, text="busy"),
                               ok_response()])
        sleeps = []
        got = remote(session, sleeps).sample(PROMPT, SamplingParams(), 0)
        assert got.text == "body"
        assert sleeps == [1.0, 2.0]

    def test_exhausted_retries_raise(self):
        session = FakeSession([FakeResponse(500)] * 4)
        sleeps = []
        with pytest.raises(ProviderError):
            remote(session, sleeps).sample(PROMPT, SamplingParams(), 0)
        assert sleeps == [1.0, 2.0, 4.0]

    def test_4xx_fails_immediately(self):
        session = FakeSession([FakeResponse(401, text="no key")])
        sleeps = []
        with pytest.raises(ProviderError):
            remote(session, sleeps).sample(PROMPT, SamplingParams(), 0)
        assert sleeps == []

    def test_api_key_from_env_only(self, monkeypatch):
        monkeypatch.setenv("PROV_API_KEY", "sekrit")
        session = FakeSession([ok_response()])
        remote(session, []).sample(PROMPT, SamplingParams(), 0)
        assert session.requests[0]["headers"]["Authorization"] == "Bearer sekrit"

    def test_few_shots_become_message_pairs(self):
        session = FakeSession([ok_response()])
        prompt = PromptBundle(system="s", user="q",
                              few_shots=(("ex-in", "ex-out"),))
        remote(session, []).sample(prompt, SamplingParams(), 0)
        msgs = session.requests[0]["json"]["messages"]
        assert msgs[1] == {"role": "user", "content": "ex-in"}
        assert msgs[2] == {"role": "assistant", "content": "ex-out"}


class TestExtractCodeBlock:
    def test_tagged_block_preferred(self):
        text = "```text\nnope\n```\n```python\nx = 1\n```"
        assert extract_code_block(text, "python") == "x = 1"

    def test_fallback_to_first_block(self):
        text = "prose\n```\nraw body\n```\nmore"
        assert extract_code_block(text, "python") == "raw body"

    def test_no_block_raises_with_text(self):
        with pytest.raises(ExtractionError) as err:
            extract_code_block("no fences here", "python")
        assert err.value.completion_text == "no fences here"

    def test_strips_blank_edges_keeps_interior(self):
        text = "```python\n\n\ndef f():\n    return 1\n\n```"
        assert extract_code_block(text, "python") == "def f():\n    return 1"

    def test_first_tagged_among_many(self):
        text = ("```python\nfirst\n```\n```python\nsecond\n```")
        assert extract_code_block(text, "python") == "first"
