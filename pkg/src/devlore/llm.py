"""Chat-completion client: live OpenAI-compatible endpoint or offline replay.

Live mode POSTs to `<api_base>/chat/completions` with the general task as the
system message and input+expected-output as the user message. Replay mode
serves responses from fixture files named `<prompt_hash16>.<index>.txt` and
never opens a network connection; a missing fixture fails loudly so a drifted
prompt is caught instead of silently re-recorded.

Costs are computed in decimal arithmetic and only rounded at display time.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable

from .errors import HarnessError
from .prompts import DEFAULT_CONTEXT_WINDOW_TOKENS, PromptTriple

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "DEVLORE_API_KEY"
DEFAULT_MODEL_NAME = "gpt-4o-mini"
PROMPT_FINGERPRINT_CHARS = 16


class EndpointUnavailable(HarnessError):
    """Transport failures or retryable server errors exhausted all retries."""

    def __init__(self, message: str, status_code: int | None = None) -> None:
        super().__init__(message)
        self.status_code = status_code


class ContextOverflow(HarnessError):
    """The endpoint rejected the request as exceeding the context window."""


class AuthFailure(HarnessError):
    """The endpoint rejected the configured credentials."""


class ReplayFixtureMissing(HarnessError):
    """Replay mode found no fixture for this prompt hash and sample index."""


@dataclass(frozen=True)
class ModelConfig:
    model_name: str = DEFAULT_MODEL_NAME
    temperature: float = 0.5
    top_p: float = 1.0
    context_window_tokens: int = DEFAULT_CONTEXT_WINDOW_TOKENS
    price_per_1k_input: Decimal = Decimal("0.00015")
    price_per_1k_output: Decimal = Decimal("0.0006")
    max_retries: int = 3
    request_timeout: float = 120.0
    api_base: str = "https://api.openai.com/v1"
    api_key_env: str = DEFAULT_API_KEY_ENV
    batch_samples: bool = False
    max_concurrent_requests: int = 4
    requests_per_minute: int | None = None


@dataclass(frozen=True)
class UsageRecord:
    input_tokens: int
    output_tokens: int
    cost: Decimal
    wall_time: float
    request_id: str

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0 or self.cost < 0:
            raise ValueError("usage fields must be non-negative")


def compute_cost(input_tokens: int, output_tokens: int, config: ModelConfig) -> Decimal:
    """tokens/1000 * per-1k price, summed over both directions, exactly."""
    return (
        Decimal(input_tokens) * config.price_per_1k_input
        + Decimal(output_tokens) * config.price_per_1k_output
    ) / Decimal(1000)


def total_cost(records: Iterable[UsageRecord]) -> Decimal:
    return sum((record.cost for record in records), Decimal(0))


def prompt_fingerprint(prompt: PromptTriple) -> str:
    digest = hashlib.sha256(prompt.concatenated().encode("utf-8")).hexdigest()
    return digest[:PROMPT_FINGERPRINT_CHARS]


class _RateLimiter:
    """Global concurrency cap plus optional requests-per-minute cap."""

    def __init__(self, max_concurrent: int, per_minute: int | None) -> None:
        self._semaphore = threading.Semaphore(max(1, max_concurrent))
        self._per_minute = per_minute
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def __enter__(self) -> "_RateLimiter":
        self._semaphore.acquire()
        if self._per_minute is not None:
            while True:
                with self._lock:
                    now = time.monotonic()
                    while self._stamps and now - self._stamps[0] > 60.0:
                        self._stamps.popleft()
                    if len(self._stamps) < self._per_minute:
                        self._stamps.append(now)
                        return self
                    wait = 60.0 - (now - self._stamps[0])
                time.sleep(max(wait, 0.01))
        return self

    def __exit__(self, *exc_info) -> None:
        self._semaphore.release()


class LLMClient:
    """Synchronous chat-completion client with a thread-safe usage ledger."""

    def __init__(self, config: ModelConfig = ModelConfig(), *, replay_dir: Path | str | None = None) -> None:
        self.config = config
        self.replay_dir = Path(replay_dir) if replay_dir is not None else None
        self.usage_ledger: list[UsageRecord] = []
        self._ledger_lock = threading.Lock()
        self._limiter = _RateLimiter(config.max_concurrent_requests, config.requests_per_minute)
        self._replay_cursors: dict[str, int] = {}
        self._cursor_lock = threading.Lock()

    @property
    def deterministic(self) -> bool:
        """True in replay mode: responses, costs, and timings are reproducible."""
        return self.replay_dir is not None

    def complete(
        self, prompt: PromptTriple, n_samples: int = 1, *, stream: str = ""
    ) -> list[tuple[str, UsageRecord]]:
        """Return `n_samples` (response_text, usage) pairs for one prompt.

        `stream` names the caller's sampling sequence (for example one trial's
        repair loop). Replay mode keeps one fixture cursor per (stream, prompt)
        so that parallel trials which happen to build identical prompts each
        replay the recorded sequence from its start, while consecutive calls
        within one stream consume consecutive recorded samples.
        """
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.replay_dir is not None:
            samples = self._complete_replay(prompt, n_samples, stream)
        elif self.config.batch_samples:
            samples = self._complete_live_batch(prompt, n_samples)
        else:
            samples = [self._complete_live_single(prompt) for _ in range(n_samples)]
        with self._ledger_lock:
            self.usage_ledger.extend(usage for _, usage in samples)
        return samples

    # ----- replay -----

    def _complete_replay(
        self, prompt: PromptTriple, n_samples: int, stream: str
    ) -> list[tuple[str, UsageRecord]]:
        fingerprint = prompt_fingerprint(prompt)
        # Consecutive calls with the same prompt consume consecutive fixture
        # indices, so sequential single-sample requests replay distinct
        # recorded responses just as a live endpoint would return new ones.
        cursor_key = f"{stream}\x00{fingerprint}"
        with self._cursor_lock:
            start = self._replay_cursors.get(cursor_key, 0)
            self._replay_cursors[cursor_key] = start + n_samples
        samples = []
        for index in range(start, start + n_samples):
            path = self.replay_dir / f"{fingerprint}.{index}.txt"
            if not path.is_file():
                raise ReplayFixtureMissing(
                    f"no replay fixture {path.name} in {self.replay_dir} "
                    "(prompt changed since fixtures were recorded?)"
                )
            text = path.read_bytes().decode("utf-8")
            usage = UsageRecord(
                input_tokens=0,
                output_tokens=0,
                cost=Decimal(0),
                wall_time=0.0,
                request_id=f"replay:{fingerprint}.{index}",
            )
            samples.append((text, usage))
        return samples

    # ----- live -----

    def _messages(self, prompt: PromptTriple) -> list[dict]:
        return [
            {"role": "system", "content": prompt.general_task},
            {"role": "user", "content": prompt.user_content()},
        ]

    def _request_body(self, prompt: PromptTriple, n: int) -> dict:
        return {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
            "n": n,
            "messages": self._messages(prompt),
        }

    def _post(self, body: dict) -> dict:
        import requests  # imported lazily so replay mode never needs it

        api_key = os.environ.get(self.config.api_key_env, "")
        url = self.config.api_base.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        last_error: Exception | None = None
        last_status: int | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                delay = (2**attempt) * (1.0 + random.random() * 0.5)
                logger.warning("retrying chat completion (attempt %d) after %.1fs", attempt + 1, delay)
                time.sleep(delay)
            try:
                with self._limiter:
                    response = requests.post(url, json=body, headers=headers, timeout=self.config.request_timeout)
            except requests.RequestException as exc:
                last_error, last_status = exc, None
                continue
            if response.status_code in (401, 403):
                raise AuthFailure(f"endpoint rejected credentials from ${self.config.api_key_env} "
                                  f"(HTTP {response.status_code})")
            if response.status_code == 400 and "context" in response.text.lower():
                raise ContextOverflow(f"endpoint reports context overflow: {response.text[:300]}")
            if response.status_code == 429 or response.status_code >= 500:
                last_error, last_status = None, response.status_code
                continue
            if response.status_code != 200:
                raise EndpointUnavailable(
                    f"unexpected HTTP {response.status_code}: {response.text[:300]}",
                    status_code=response.status_code,
                )
            try:
                return response.json()
            except json.JSONDecodeError as exc:
                last_error, last_status = exc, response.status_code
                continue
        detail = f"HTTP {last_status}" if last_status is not None else repr(last_error)
        raise EndpointUnavailable(
            f"chat completion failed after {self.config.max_retries + 1} attempts: {detail}",
            status_code=last_status,
        )

    def _complete_live_single(self, prompt: PromptTriple) -> tuple[str, UsageRecord]:
        started = time.monotonic()
        payload = self._post(self._request_body(prompt, 1))
        elapsed = time.monotonic() - started
        text = payload["choices"][0]["message"]["content"]
        usage = payload.get("usage", {})
        input_tokens = int(usage.get("prompt_tokens", 0))
        output_tokens = int(usage.get("completion_tokens", 0))
        record = UsageRecord(
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            cost=compute_cost(input_tokens, output_tokens, self.config),
            wall_time=elapsed,
            request_id=str(payload.get("id", "")),
        )
        return text, record

    def _complete_live_batch(self, prompt: PromptTriple, n_samples: int) -> list[tuple[str, UsageRecord]]:
        """One request with n=n_samples.

        The endpoint reports aggregate usage only: prompt tokens land on the
        first sample's record and completion tokens are split evenly so every
        response still carries exactly one UsageRecord.
        """
        started = time.monotonic()
        payload = self._post(self._request_body(prompt, n_samples))
        elapsed = time.monotonic() - started
        choices = payload.get("choices", [])
        if len(choices) < n_samples:
            raise EndpointUnavailable(f"endpoint returned {len(choices)} choices for n={n_samples}")
        usage = payload.get("usage", {})
        prompt_tokens = int(usage.get("prompt_tokens", 0))
        completion_tokens = int(usage.get("completion_tokens", 0))
        base, remainder = divmod(completion_tokens, n_samples)
        samples = []
        for index in range(n_samples):
            output_tokens = base + (1 if index < remainder else 0)
            input_tokens = prompt_tokens if index == 0 else 0
            record = UsageRecord(
                input_tokens=input_tokens,
                output_tokens=output_tokens,
                cost=compute_cost(input_tokens, output_tokens, self.config),
                wall_time=elapsed if index == 0 else 0.0,
                request_id=f"{payload.get('id', '')}#{index}",
            )
            samples.append((choices[index]["message"]["content"], record))
        return samples
