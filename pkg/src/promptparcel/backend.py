"""Completion backends behind one interface: a live chat-completions
endpoint, a deterministic latency simulator, and a record/replay cache.

The simulator charges each call a base time plus per-token coefficients for
input and output and advances a simulated clock, so timing assertions in
tests are exact and never sleep. The HTTP client measures wall-clock
latency and retries 429/5xx/timeouts with exponential backoff; retried
attempts are excluded from the recorded latency and tokens are counted
once, from the final response.
"""

import hashlib
import json
import math
import os
import threading
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from . import text as text_mod
from .batching import build_batch, contains_anchor_line, parse_itemized, split_batched_prompt
from .data import Prompt
from .errors import (
    CacheMiss,
    DispatchIncomplete,
    HttpStatus,
    MalformedResponse,
    NoAnchorsFound,
    Timeout,
    TransportError,
    UnknownPrompt,
)

API_KEY_ENV = "CLIQUEPARCEL_API_KEY"

_MAX_RETRIES = 3
_FILLER_WORDS = (
    "indeed", "notably", "overall", "furthermore", "likewise",
    "specifically", "however", "therefore",
)


@dataclass(frozen=True)
class CostModelParams:
    """Latency model: base_seconds + in_coeff*input_tokens +
    out_coeff*output_tokens. Output normally dominates, so a configuration
    with out_coeff < in_coeff is accepted but warned about."""

    base_seconds: float = 0.5
    in_coeff: float = 0.001
    out_coeff: float = 0.05

    def __post_init__(self):
        if self.base_seconds <= 0:
            raise ValueError("base_seconds must be > 0")
        if self.in_coeff < 0 or self.out_coeff < 0:
            raise ValueError("token coefficients must be >= 0")
        if self.out_coeff < self.in_coeff:
            warnings.warn(
                "out_coeff < in_coeff inverts the usual cost profile",
                stacklevel=2,
            )

    def latency(self, input_tokens: int, output_tokens: int) -> float:
        return (
            self.base_seconds
            + self.in_coeff * input_tokens
            + self.out_coeff * output_tokens
        )


@dataclass(frozen=True)
class CompletionResult:
    text: str
    input_tokens: int
    output_tokens: int
    latency_seconds: float
    backend_id: str


@dataclass
class BackendConfig:
    kind: str = "simulated"  # http | simulated | replay
    endpoint_url: str | None = None
    model_name: str | None = None
    temperature: float = 0.0
    max_in_flight: int = 4
    timeout_seconds: float = 30.0
    fallback_separate: bool = False
    cache_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("http", "simulated", "replay"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not (self.endpoint_url and self.model_name):
            raise ValueError("http backend requires endpoint_url and model_name")
        if self.kind == "replay" and not self.cache_path:
            raise ValueError("replay backend requires cache_path")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


class SimulatedClock:
    """Accumulates simulated seconds; never sleeps. Thread-safe."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()

    @property
    def now(self) -> float:
        return self._now

    def advance(self, delta: float) -> float:
        if delta < 0:
            raise ValueError("cannot advance the clock backwards")
        with self._lock:
            self._now += delta
            return self._now


def _truncate_tokens(answer: str, factor: float) -> str:
    if factor >= 1.0:
        return answer
    tokens = text_mod.surface_tokens(answer)
    keep = max(1, math.ceil(factor * len(tokens)))
    return " ".join(tokens[:keep])


class ScriptedAnswers:
    """Total answer mapping for the simulator, keyed by exact prompt text.

    Batched prompts (recognized by the itemization template) are split
    back into members, each member's answer is looked up and optionally
    truncated to a fraction of its tokens, and the results are re-emitted
    as an itemized completion. Truncation applies to batched output only,
    mimicking a model that shortens answers when asked many questions at
    once.
    """

    def __init__(self, mapping: dict[str, str], truncation: float = 1.0):
        if not 0.0 < truncation <= 1.0:
            raise ValueError("truncation factor must be in (0, 1]")
        self.mapping = dict(mapping)
        self.truncation = truncation

    @classmethod
    def from_workload(
        cls,
        workload,
        *,
        pad_to_tokens: int | None = None,
        truncation: float = 1.0,
    ) -> "ScriptedAnswers":
        """Answer each prompt with its ground truth (or a placeholder),
        padded with filler words up to ``pad_to_tokens`` tokens so answer
        lengths are controllable in simulations."""
        mapping = {}
        for prompt in workload.prompts:
            base = prompt.ground_truth or f"No reference answer for {prompt.id}"
            if pad_to_tokens is not None:
                tokens = text_mod.surface_tokens(base)
                i = 0
                while len(tokens) < pad_to_tokens:
                    tokens.append(_FILLER_WORDS[i % len(_FILLER_WORDS)])
                    i += 1
                base = " ".join(tokens)
            mapping[prompt.text] = base
        return cls(mapping, truncation=truncation)

    def _lookup(self, prompt_text: str) -> str:
        try:
            return self.mapping[prompt_text]
        except KeyError:
            raise UnknownPrompt(prompt_text) from None

    def __call__(self, prompt_text: str) -> str:
        members = split_batched_prompt(prompt_text)
        if members is None:
            return self._lookup(prompt_text)
        lines = []
        for k, member in enumerate(members, start=1):
            answer = _truncate_tokens(self._lookup(member), self.truncation)
            lines.append(f"{k}. {answer}")
        return "\n".join(lines)


class EchoAnswers:
    """Fallback answerer that echoes the prompt (or each member) back."""

    def __call__(self, prompt_text: str) -> str:
        members = split_batched_prompt(prompt_text)
        if members is None:
            return prompt_text
        return "\n".join(f"{k}. {m}" for k, m in enumerate(members, start=1))


def simulate_complete(
    params: CostModelParams,
    prompt_text: str,
    answer_fn: Callable[[str], str],
    clock: SimulatedClock,
) -> CompletionResult:
    """One simulated completion: the answer comes from ``answer_fn`` and
    the latency from the cost model; the clock advances by that latency."""
    answer = answer_fn(prompt_text)
    input_tokens = text_mod.tokenize_count(prompt_text)
    output_tokens = text_mod.tokenize_count(answer)
    latency = params.latency(input_tokens, output_tokens)
    clock.advance(latency)
    return CompletionResult(
        text=answer,
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        latency_seconds=latency,
        backend_id="simulated",
    )


class Backend(Protocol):
    def complete(self, prompt_text: str) -> CompletionResult: ...


class SimulatedBackend:
    def __init__(
        self,
        params: CostModelParams | None = None,
        answers: Callable[[str], str] | None = None,
        clock: SimulatedClock | None = None,
    ):
        self.params = params or CostModelParams()
        self.answers = answers or EchoAnswers()
        self.clock = clock or SimulatedClock()

    def complete(self, prompt_text: str) -> CompletionResult:
        return simulate_complete(self.params, prompt_text, self.answers, self.clock)


def _cache_key(model: str, prompt_text: str) -> tuple[str, str]:
    prompt_sha = hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()
    key_hash = hashlib.sha256(f"{model}\n{prompt_sha}".encode("utf-8")).hexdigest()
    return key_hash, prompt_sha


def load_cache(path: str | Path) -> dict[str, dict]:
    entries: dict[str, dict] = {}
    path = Path(path)
    if not path.exists():
        return entries
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                record = json.loads(line)
                entries[record["key_hash"]] = record
    return entries


class ReplayBackend:
    def __init__(self, cache_path: str | Path, model_name: str | None = None):
        self.cache = load_cache(cache_path)
        self.model_name = model_name or ""

    def complete(self, prompt_text: str) -> CompletionResult:
        key_hash, _ = _cache_key(self.model_name, prompt_text)
        record = self.cache.get(key_hash)
        if record is None:
            raise CacheMiss(key_hash)
        return CompletionResult(
            text=record["response_text"],
            input_tokens=int(record["in_tokens"]),
            output_tokens=int(record["out_tokens"]),
            latency_seconds=float(record["latency_s"]),
            backend_id="replay",
        )


class HttpBackend:
    """Chat-completions-compatible client.

    POSTs {"model", "messages", "temperature"} and reads the reply text
    from choices[0].message.content plus usage token counts. The API key,
    when present in the environment, is sent as a bearer token.
    """

    def __init__(self, config: BackendConfig, retry_backoff: float = 0.5):
        if config.kind != "http":
            raise ValueError("HttpBackend requires an http config")
        self.config = config
        self.retry_backoff = retry_backoff
        self.session = requests.Session()
        self._cache_lock = threading.Lock()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _record(self, prompt_text: str, result: CompletionResult) -> None:
        if not self.config.cache_path:
            return
        key_hash, prompt_sha = _cache_key(self.config.model_name, prompt_text)
        record = {
            "key_hash": key_hash,
            "model": self.config.model_name,
            "prompt_sha256": prompt_sha,
            "response_text": result.text,
            "in_tokens": result.input_tokens,
            "out_tokens": result.output_tokens,
            "latency_s": result.latency_seconds,
        }
        with self._cache_lock:
            with open(self.config.cache_path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(record) + "\n")

    def complete(self, prompt_text: str) -> CompletionResult:
        body = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": self.config.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(_MAX_RETRIES + 1):
            if attempt:
                time.sleep(self.retry_backoff * 2 ** (attempt - 1))
            started = time.monotonic()
            try:
                response = self.session.post(
                    self.config.endpoint_url,
                    json=body,
                    headers=self._headers(),
                    timeout=self.config.timeout_seconds,
                )
            except requests.Timeout:
                last_error = Timeout(
                    f"no response within {self.config.timeout_seconds}s"
                )
                continue
            except requests.RequestException as exc:
                raise TransportError(str(exc)) from exc
            if response.status_code == 429 or response.status_code >= 500:
                last_error = HttpStatus(response.status_code, response.text)
                continue
            if response.status_code != 200:
                raise HttpStatus(response.status_code, response.text)
            latency = time.monotonic() - started
            result = self._parse(response, latency)
            self._record(prompt_text, result)
            return result
        raise last_error

    def _parse(self, response, latency: float) -> CompletionResult:
        try:
            payload = response.json()
            content = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
            in_tokens = int(usage["prompt_tokens"])
            out_tokens = int(usage["completion_tokens"])
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response body: {exc}") from exc
        return CompletionResult(
            text=content,
            input_tokens=in_tokens,
            output_tokens=out_tokens,
            latency_seconds=latency,
            backend_id=f"http:{self.config.model_name}",
        )


def make_backend(
    config: BackendConfig,
    *,
    cost_params: CostModelParams | None = None,
    answers: Callable[[str], str] | None = None,
    clock: SimulatedClock | None = None,
) -> Backend:
    if config.kind == "simulated":
        return SimulatedBackend(params=cost_params, answers=answers, clock=clock)
    if config.kind == "replay":
        return ReplayBackend(config.cache_path, config.model_name)
    return HttpBackend(config)


def complete(
    config: BackendConfig,
    prompt_text: str,
    *,
    cost_params: CostModelParams | None = None,
    answers: Callable[[str], str] | None = None,
    clock: SimulatedClock | None = None,
) -> CompletionResult:
    """One-shot completion through whichever backend the config selects."""
    if not prompt_text:
        raise ValueError("prompt_text must be non-empty")
    backend = make_backend(
        config, cost_params=cost_params, answers=answers, clock=clock
    )
    return backend.complete(prompt_text)


@dataclass
class GroupRunResult:
    member_ids: tuple[str, ...]
    answers: dict[str, str]
    completions: list[CompletionResult]
    batched: bool
    parse_complete: bool
    diagnostics: list[str] = field(default_factory=list)
    fallback_calls: int = 0
    flagged_member_ids: tuple[str, ...] = ()

    @property
    def total_latency(self) -> float:
        return math.fsum(c.latency_seconds for c in self.completions)

    @property
    def total_input_tokens(self) -> int:
        return sum(c.input_tokens for c in self.completions)

    @property
    def total_output_tokens(self) -> int:
        return sum(c.output_tokens for c in self.completions)


def run_group(
    backend: Backend,
    group: Sequence[Prompt],
    *,
    fallback_separate: bool = False,
) -> GroupRunResult:
    """Complete one group end to end: batch (size > 1) or pass through
    (size 1), then dispatch the completion back to per-prompt answers.

    Missing items are re-issued individually when ``fallback_separate`` is
    on (their tokens and latency count toward the group); otherwise
    DispatchIncomplete is raised.
    """
    if len(group) == 1:
        prompt = group[0]
        result = backend.complete(prompt.text)
        return GroupRunResult(
            member_ids=(prompt.id,),
            answers={prompt.id: result.text},
            completions=[result],
            batched=False,
            parse_complete=True,
        )

    batched = build_batch(list(group))
    flagged = tuple(p.id for p in group if contains_anchor_line(p.text))
    result = backend.complete(batched.text)
    diagnostics: list[str] = []
    try:
        parsed = parse_itemized(result.text, expected_count=len(group))
        items = parsed.texts_by_index()
        diagnostics.extend(parsed.diagnostics)
        parse_complete = parsed.complete
    except NoAnchorsFound:
        items = {}
        diagnostics.append("NoAnchorsFound")
        parse_complete = False

    answers: dict[str, str] = {}
    missing: list[int] = []
    for k, prompt in enumerate(group, start=1):
        if k in items:
            answers[prompt.id] = items[k]
        else:
            missing.append(k)

    completions = [result]
    fallback_calls = 0
    if missing:
        if not fallback_separate:
            raise DispatchIncomplete(missing)
        for k in missing:
            prompt = group[k - 1]
            retry = backend.complete(prompt.text)
            completions.append(retry)
            answers[prompt.id] = retry.text
            fallback_calls += 1

    return GroupRunResult(
        member_ids=tuple(p.id for p in group),
        answers=answers,
        completions=completions,
        batched=True,
        parse_complete=parse_complete,
        diagnostics=diagnostics,
        fallback_calls=fallback_calls,
        flagged_member_ids=flagged,
    )


def run_plan_groups(
    backend: Backend,
    plan,
    workload,
    *,
    fallback_separate: bool = False,
    max_workers: int = 1,
) -> list[GroupRunResult]:
    """Run every group of a plan, optionally with up to ``max_workers``
    concurrent backend calls, and join results in plan order."""
    by_id = {p.id: p for p in workload.prompts}
    groups = [[by_id[pid] for pid in g.member_ids] for g in plan.groups]
    if max_workers <= 1:
        return [
            run_group(backend, g, fallback_separate=fallback_separate) for g in groups
        ]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [
            pool.submit(run_group, backend, g, fallback_separate=fallback_separate)
            for g in groups
        ]
        return [f.result() for f in futures]
