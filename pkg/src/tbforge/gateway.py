"""Chat-completion access: sampling controls, fixture replay, token ledger.

Two providers speak the same small interface: a remote HTTP provider for
real runs and a directory-backed fixture provider that replays recorded
completions byte-for-byte. Samples are always issued as n independent
requests so replay and caching behave identically for both.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import ExtractionError, FixtureMissError, ProviderError

log = logging.getLogger("gateway")

STAGES = ("stimulus", "emulator", "self_improve", "judge_validate")

RETRY_DELAYS = (1.0, 2.0, 4.0)  # R = 3, exponential


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.3
    n_samples: int = 1
    max_tokens: int = 4096

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    few_shots: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.user:
            raise ValueError("user prompt must be non-empty")

    def digest(self) -> str:
        """Stable hash identifying this prompt across processes."""
        payload = json.dumps(
            {"system": self.system, "user": self.user,
             "few_shots": list(self.few_shots)},
            sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "fixture"            # "remote" | "fixture"
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "PROV_API_KEY"
    timeout_s: float = 120.0
    fixture_dir: str = "fixtures"


class TokenLedger:
    """Per-stage prompt/completion token counters; increments are atomic."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: dict[str, list[int]] = {s: [0, 0] for s in STAGES}

    def add(self, stage: str, prompt_tokens: int, completion_tokens: int) -> None:
        if stage not in self._counts:
            raise ValueError(f"unknown stage {stage!r}")
        with self._lock:
            self._counts[stage][0] += prompt_tokens
            self._counts[stage][1] += completion_tokens

    def get(self, stage: str) -> tuple[int, int]:
        with self._lock:
            p, c = self._counts[stage]
        return p, c

    def as_dict(self) -> dict[str, dict[str, int]]:
        with self._lock:
            return {s: {"prompt_tokens": p, "completion_tokens": c}
                    for s, (p, c) in self._counts.items()}


def ledger_report(ledger: TokenLedger) -> list[tuple[str, int, int, int]]:
    """(stage, prompt_tokens, completion_tokens, total) rows, declared order.

    Stages with zero usage are still listed.
    """
    rows = []
    for stage in STAGES:
        p, c = ledger.get(stage)
        rows.append((stage, p, c, p + c))
    return rows


def format_ledger_table(ledger: TokenLedger) -> str:
    rows = ledger_report(ledger)
    lines = [f"{'stage':<16}{'prompt':>10}{'completion':>12}{'total':>10}"]
    for stage, p, c, t in rows:
        lines.append(f"{stage:<16}{p:>10}{c:>12}{t:>10}")
    total = sum(r[3] for r in rows)
    lines.append(f"{'all':<16}{'':>10}{'':>12}{total:>10}")
    return "\n".join(lines)


class FixtureProvider:
    """Replays completions from <sha256-of-prompt>.<sample-index>.json files.

    Referentially transparent: same prompt, same index, same bytes, across
    process restarts. A missing key fails loudly; nothing is substituted.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, prompt: PromptBundle, index: int) -> Path:
        return self.root / f"{prompt.digest()}.{index}.json"

    def sample(self, prompt: PromptBundle, params: SamplingParams,
               index: int) -> Completion:
        path = self._path(prompt, index)
        if not path.exists():
            raise FixtureMissError(
                f"no fixture for prompt {prompt.digest()[:12]}... "
                f"sample {index} (looked at {path})")
        raw = json.loads(path.read_text(encoding="utf-8"))
        return Completion(text=raw["text"],
                          prompt_tokens=int(raw.get("prompt_tokens", 0)),
                          completion_tokens=int(raw.get("completion_tokens", 0)))

    def record(self, prompt: PromptBundle, index: int, completion: Completion
               ) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self._path(prompt, index)
        path.write_text(json.dumps(
            {"text": completion.text,
             "prompt_tokens": completion.prompt_tokens,
             "completion_tokens": completion.completion_tokens},
            indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


class RemoteProvider:
    """HTTP chat-completions provider.

    The API key is read from the environment variable named in the config,
    never from the config file body. Transport and 5xx failures retry with
    exponential backoff; 4xx fails immediately.
    """

    def __init__(self, config: ProviderConfig, session: requests.Session | None = None,
                 sleep=time.sleep):
        if not config.endpoint:
            raise ProviderError("remote provider needs provider.endpoint")
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _messages(self, prompt: PromptBundle) -> list[dict[str, str]]:
        messages = []
        if prompt.system:
            messages.append({"role": "system", "content": prompt.system})
        for shot_in, shot_out in prompt.few_shots:
            messages.append({"role": "user", "content": shot_in})
            messages.append({"role": "assistant", "content": shot_out})
        messages.append({"role": "user", "content": prompt.user})
        return messages

    def sample(self, prompt: PromptBundle, params: SamplingParams,
               index: int) -> Completion:
        body = {
            "model": self.config.model,
            "messages": self._messages(prompt),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        last_error = "unknown"
        for attempt in range(len(RETRY_DELAYS) + 1):
            try:
                resp = self.session.post(
                    self.config.endpoint, json=body, headers=self._headers(),
                    timeout=self.config.timeout_s)
            except requests.RequestException as exc:
                last_error = f"transport: {exc}"
            else:
                if resp.status_code == 200:
                    data = resp.json()
                    usage = data.get("usage", {})
                    return Completion(
                        text=data["choices"][0]["message"]["content"],
                        prompt_tokens=int(usage.get("prompt_tokens", 0)),
                        completion_tokens=int(usage.get("completion_tokens", 0)))
                if 400 <= resp.status_code < 500:
                    raise ProviderError(
                        f"provider returned {resp.status_code}: {resp.text[:500]}")
                last_error = f"status {resp.status_code}"
            if attempt < len(RETRY_DELAYS):
                self._sleep(RETRY_DELAYS[attempt])
        raise ProviderError(f"provider failed after retries: {last_error}")


class RecordingProvider:
    """Wraps a provider, writing every completion into a fixture store."""

    def __init__(self, inner, store: FixtureProvider):
        self.inner = inner
        self.store = store

    def sample(self, prompt: PromptBundle, params: SamplingParams,
               index: int) -> Completion:
        completion = self.inner.sample(prompt, params, index)
        self.store.record(prompt, index, completion)
        return completion


class Gateway:
    """Provider plus ledger plus optional raw-transcript persistence."""

    def __init__(self, provider, ledger: TokenLedger | None = None,
                 transcript_dir: str | Path | None = None):
        self.provider = provider
        self.ledger = ledger or TokenLedger()
        self.transcript_dir = Path(transcript_dir) if transcript_dir else None
        self._transcript_seq = 0

    def complete(self, prompt: PromptBundle, params: SamplingParams,
                 stage: str) -> list[Completion]:
        """Exactly n_samples completions; ledger[stage] grows by reported usage."""
        completions = []
        for index in range(params.n_samples):
            completion = self.provider.sample(prompt, params, index)
            self.ledger.add(stage, completion.prompt_tokens,
                            completion.completion_tokens)
            completions.append(completion)
        if self.transcript_dir is not None:
            self._persist(prompt, params, stage, completions)
        return completions

    def _persist(self, prompt: PromptBundle, params: SamplingParams,
                 stage: str, completions: list[Completion]) -> None:
        self.transcript_dir.mkdir(parents=True, exist_ok=True)
        self._transcript_seq += 1
        path = self.transcript_dir / (
            f"{self._transcript_seq:04d}_{stage}_{prompt.digest()[:12]}.json")
        path.write_text(json.dumps({
            "stage": stage,
            "system": prompt.system,
            "user": prompt.user,
            "few_shots": list(prompt.few_shots),
            "temperature": params.temperature,
            "completions": [c.text for c in completions],
            "usage": [[c.prompt_tokens, c.completion_tokens]
                      for c in completions],
        }, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def make_provider(config: ProviderConfig, record_dir: str | Path | None = None):
    if config.kind == "fixture":
        return FixtureProvider(config.fixture_dir)
    if config.kind == "remote":
        provider = RemoteProvider(config)
        if record_dir:
            return RecordingProvider(provider, FixtureProvider(record_dir))
        return provider
    raise ProviderError(f"unknown provider kind {config.kind!r}")


_FENCE_RE = re.compile(r"```([^\n]*)\n(.*?)```", re.DOTALL)


def extract_code_block(completion_text: str, fence_tag: str) -> str:
    """Body of the first fenced block tagged `fence_tag`.

    Falls back to the first fenced block of any tag when no block carries
    the requested tag. Leading and trailing blank lines are stripped.
    """
    blocks = [(m.group(1).strip(), m.group(2))
              for m in _FENCE_RE.finditer(completion_text)]
    if not blocks:
        raise ExtractionError("no fenced code block in completion",
                              completion_text)
    for tag, body in blocks:
        if tag == fence_tag:
            return body.strip("\n")
    return blocks[0][1].strip("\n")
