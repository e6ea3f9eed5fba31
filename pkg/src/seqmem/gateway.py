"""Model access: text generation, embeddings, and usage accounting.

Two backend families live here. Scripted backends are pure functions of the
request text and drive every deterministic test and desk-scale run. The HTTP
backend talks to any OpenAI-compatible chat-completions endpoint.
"""

from __future__ import annotations

import contextlib
import contextvars
import hashlib
import math
import os
import re
import threading
import time
from dataclasses import asdict, dataclass
from typing import Callable, Iterator, Literal, Protocol, Sequence

from seqmem.errors import ConfigurationError, GatewayError, ValidationError

API_KEY_ENV = "SEQMEM_API_KEY"
DEFAULT_EMBED_DIM = 64

Reasoning = Literal["off", "low", "on"]

_phase: contextvars.ContextVar[str] = contextvars.ContextVar("seqmem_phase", default="online")


@dataclass(frozen=True)
class GenerationRequest:
    user_text: str
    system_text: str = ""
    temperature: float = 0.7
    max_tokens: int = 2048
    reasoning: Reasoning = "off"

    def __post_init__(self):
        if not self.user_text:
            raise ValidationError("user_text must be non-empty")
        if self.max_tokens < 1:
            raise ValidationError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.reasoning not in ("off", "low", "on"):
            raise ValidationError(f"unknown reasoning level {self.reasoning!r}")

    @property
    def full_text(self) -> str:
        return f"{self.system_text}\n{self.user_text}" if self.system_text else self.user_text


@dataclass(frozen=True)
class GenerationResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency: float = 0.0  # milliseconds

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValidationError("token counts must be non-negative")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ValidationError("embedding must have positive dimension")
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("embedding values must be finite")

    @property
    def dimension(self) -> int:
        return len(self.values)


def cosine_similarity(a: EmbeddingVector | Sequence[float], b: EmbeddingVector | Sequence[float]) -> float:
    va = a.values if isinstance(a, EmbeddingVector) else tuple(a)
    vb = b.values if isinstance(b, EmbeddingVector) else tuple(b)
    if len(va) != len(vb):
        raise ValidationError(f"dimension mismatch: {len(va)} vs {len(vb)}")
    na = math.sqrt(math.fsum(x * x for x in va))
    nb = math.sqrt(math.fsum(x * x for x in vb))
    if na == 0 or nb == 0:
        raise ValidationError("cosine similarity is undefined for a zero vector")
    cos = math.fsum(x * y for x, y in zip(va, vb)) / (na * nb)
    return max(-1.0, min(1.0, cos))


# -- usage accounting ---------------------------------------------------------


@dataclass
class UsageLedger:
    """Running totals for one slice of calls (one phase, or a delta)."""

    prompt_tokens_total: int = 0
    completion_tokens_total: int = 0
    call_count: int = 0
    wall_clock_total: float = 0.0  # milliseconds
    failed_calls: int = 0
    embed_calls: int = 0

    @property
    def tokens_total(self) -> int:
        return self.prompt_tokens_total + self.completion_tokens_total

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "UsageLedger":
        return cls(**d)

    def minus(self, other: "UsageLedger") -> "UsageLedger":
        return UsageLedger(
            prompt_tokens_total=self.prompt_tokens_total - other.prompt_tokens_total,
            completion_tokens_total=self.completion_tokens_total - other.completion_tokens_total,
            call_count=self.call_count - other.call_count,
            wall_clock_total=self.wall_clock_total - other.wall_clock_total,
            failed_calls=self.failed_calls - other.failed_calls,
            embed_calls=self.embed_calls - other.embed_calls,
        )


@dataclass(frozen=True)
class CallRecord:
    phase: str
    purpose: str
    prompt_tokens: int
    completion_tokens: int
    latency: float
    failed: bool = False


class Accountant:
    """Thread-safe per-phase accumulator plus the raw call log."""

    def __init__(self):
        self._lock = threading.Lock()
        self._phases: dict[str, UsageLedger] = {}
        self.calls: list[CallRecord] = []

    def record(self, rec: CallRecord) -> None:
        with self._lock:
            led = self._phases.setdefault(rec.phase, UsageLedger())
            led.call_count += 1
            led.prompt_tokens_total += rec.prompt_tokens
            led.completion_tokens_total += rec.completion_tokens
            led.wall_clock_total += rec.latency
            if rec.failed:
                led.failed_calls += 1
            self.calls.append(rec)

    def record_embed(self, phase: str) -> None:
        with self._lock:
            self._phases.setdefault(phase, UsageLedger()).embed_calls += 1

    def phase(self, name: str) -> UsageLedger:
        with self._lock:
            return UsageLedger(**asdict(self._phases.get(name, UsageLedger())))

    def total(self) -> UsageLedger:
        with self._lock:
            out = UsageLedger()
            for led in self._phases.values():
                out.prompt_tokens_total += led.prompt_tokens_total
                out.completion_tokens_total += led.completion_tokens_total
                out.call_count += led.call_count
                out.wall_clock_total += led.wall_clock_total
                out.failed_calls += led.failed_calls
                out.embed_calls += led.embed_calls
            return out

    def restore_phase(self, name: str, ledger: UsageLedger) -> None:
        """Seed a phase with totals carried over from an interrupted run."""
        with self._lock:
            self._phases[name] = UsageLedger(**asdict(ledger))


# -- clocks -------------------------------------------------------------------


class WallClock:
    def now(self) -> float:
        return time.perf_counter() * 1000.0

    def advance(self, ms: float) -> None:
        pass


class SimulatedClock:
    """Time that moves only by the latency scripted backends report."""

    def __init__(self, start: float = 0.0):
        self._t = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._t

    def advance(self, ms: float) -> None:
        with self._lock:
            self._t += ms


# -- backends -----------------------------------------------------------------


class Backend(Protocol):
    kind: str
    simulated_time: bool

    def complete(self, request: GenerationRequest) -> GenerationResult: ...


def count_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class ScriptRule:
    """One rule of a scripted model. First matching rule wins.

    `kind="contains"` matches a literal substring; `kind="regex"` searches a
    pattern, and `respond` may then use `\\1` / `\\g<name>` group references.
    With `echo=True` the response is the request's user text.
    """

    match: str
    respond: str = ""
    kind: Literal["contains", "regex"] = "contains"
    echo: bool = False

    def __post_init__(self):
        if self.kind not in ("contains", "regex"):
            raise ConfigurationError(f"unknown rule kind {self.kind!r}")
        if self.kind == "regex":
            try:
                re.compile(self.match)
            except re.error as exc:
                raise ConfigurationError(f"bad rule pattern {self.match!r}: {exc}") from None

    def apply(self, request: GenerationRequest) -> str | None:
        text = request.full_text
        if self.kind == "contains":
            if self.match not in text:
                return None
            return request.user_text if self.echo else self.respond
        m = re.search(self.match, text)
        if m is None:
            return None
        return request.user_text if self.echo else m.expand(self.respond)


class ScriptedBackend:
    kind = "scripted"
    simulated_time = True

    def __init__(
        self,
        rules: Sequence[ScriptRule | dict] = (),
        default: str | None = None,
        latency: float = 0.0,
    ):
        self.rules = tuple(r if isinstance(r, ScriptRule) else ScriptRule(**r) for r in rules)
        self.default = default
        self.latency = float(latency)

    def respond(self, request: GenerationRequest) -> str:
        for rule in self.rules:
            out = rule.apply(request)
            if out is not None:
                return out
        if self.default is None:
            raise ConfigurationError(
                f"no scripted rule matches and no default is set: {request.user_text[:80]!r}"
            )
        return self.default

    def complete(self, request: GenerationRequest) -> GenerationResult:
        text = self.respond(request)
        return GenerationResult(
            text=text,
            prompt_tokens=count_tokens(request.full_text),
            completion_tokens=count_tokens(text),
            latency=self.latency,
        )


class EchoBackend(ScriptedBackend):
    """Returns the user text verbatim."""

    def __init__(self, latency: float = 0.0):
        super().__init__([ScriptRule(match="", echo=True)], latency=latency)


class FunctionBackend(ScriptedBackend):
    """Scripted backend driven by a plain function of the request."""

    def __init__(self, fn: Callable[[GenerationRequest], str], latency: float = 0.0):
        super().__init__(latency=latency)
        self._fn = fn

    def respond(self, request: GenerationRequest) -> str:
        return self._fn(request)


class OpenAICompatibleBackend:
    """Chat-completions client for OpenAI-shaped HTTP endpoints."""

    kind = "http"
    simulated_time = False

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        transport=None,
    ):
        import httpx

        self.endpoint = endpoint.rstrip("/")
        self.model = model
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def payload(self, request: GenerationRequest) -> dict:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.reasoning != "off":
            body["reasoning"] = {"effort": "low" if request.reasoning == "low" else "medium"}
        return body

    def _post(self, path: str, body: dict) -> dict:
        import httpx

        try:
            resp = self._client.post(f"{self.endpoint}{path}", json=body)
        except httpx.HTTPError as exc:
            raise GatewayError(f"transport failure: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise GatewayError(f"endpoint returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"endpoint rejected request: HTTP {resp.status_code} {resp.text[:200]}",
                               retryable=False)
        try:
            return resp.json()
        except ValueError as exc:
            raise GatewayError("endpoint returned non-JSON body") from exc

    def complete(self, request: GenerationRequest) -> GenerationResult:
        t0 = time.perf_counter()
        data = self._post("/chat/completions", self.payload(request))
        latency = (time.perf_counter() - t0) * 1000.0
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError("malformed chat-completion response") from exc
        usage = data.get("usage") or {}
        return GenerationResult(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens") or 0),
            completion_tokens=int(usage.get("completion_tokens") or 0),
            latency=latency,
        )

    def embed(self, text: str, model: str | None = None) -> list[float]:
        data = self._post("/embeddings", {"model": model or self.model, "input": text})
        try:
            return list(data["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError("malformed embedding response") from exc


# -- embedders ----------------------------------------------------------------

_TOKEN_RE = re.compile(r"\w+")


class HashingEmbedder:
    """Hashed bag of lowercase word tokens, L2-normalised.

    Uses blake2b rather than `hash()` so vectors are stable across processes.
    """

    kind = "hashing"

    def __init__(self, dimension: int = DEFAULT_EMBED_DIM):
        if dimension < 1:
            raise ValidationError("embedding dimension must be positive")
        self.dimension = dimension

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dimension

    def embed(self, text: str) -> list[float]:
        tokens = _TOKEN_RE.findall(text.lower()) or [text.strip()]
        counts = [0.0] * self.dimension
        for tok in tokens:
            counts[self._bucket(tok)] += 1.0
        norm = math.sqrt(math.fsum(c * c for c in counts))
        return [c / norm for c in counts]


class RemoteEmbedder:
    kind = "http"

    def __init__(self, backend: OpenAICompatibleBackend, model: str):
        self.backend = backend
        self.model = model
        self.dimension: int | None = None

    def embed(self, text: str) -> list[float]:
        values = self.backend.embed(text, model=self.model)
        if self.dimension is None:
            self.dimension = len(values)
        elif len(values) != self.dimension:
            raise GatewayError(f"embedding dimension changed: {len(values)} != {self.dimension}")
        return values


# -- gateway ------------------------------------------------------------------


class Gateway:
    """Uniform entry point for generation and embedding, with retries and accounting."""

    def __init__(
        self,
        backend: Backend,
        embedder=None,
        *,
        temperature: float = 0.7,
        max_tokens: int = 2048,
        reasoning: Reasoning = "off",
        max_attempts: int = 3,
        backoff: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
        clock=None,
    ):
        self.backend = backend
        self.embedder = embedder if embedder is not None else HashingEmbedder()
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.reasoning = reasoning
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep
        if clock is None:
            clock = SimulatedClock() if getattr(backend, "simulated_time", False) else WallClock()
        self.clock = clock
        self.accounts = Accountant()

    @property
    def kind(self) -> str:
        return self.backend.kind

    @contextlib.contextmanager
    def phase(self, name: str) -> Iterator[None]:
        token = _phase.set(name)
        try:
            yield
        finally:
            _phase.reset(token)

    @staticmethod
    def current_phase() -> str:
        return _phase.get()

    def ledger(self, phase: str | None = None) -> UsageLedger:
        return self.accounts.total() if phase is None else self.accounts.phase(phase)

    def request(self, user_text: str, system_text: str = "") -> GenerationRequest:
        return GenerationRequest(
            user_text=user_text,
            system_text=system_text,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            reasoning=self.reasoning,
        )

    def generate(self, request: GenerationRequest | str, purpose: str = "answer") -> GenerationResult:
        if isinstance(request, str):
            request = self.request(request)
        phase = _phase.get()
        last: GatewayError | None = None
        for attempt in range(self.max_attempts):
            try:
                result = self.backend.complete(request)
            except GatewayError as exc:
                self.accounts.record(CallRecord(phase, purpose, 0, 0, 0.0, failed=True))
                if not exc.retryable:
                    raise
                last = exc
                if attempt + 1 < self.max_attempts:
                    self._sleep(self.backoff * (2**attempt))
                continue
            self.clock.advance(result.latency)
            self.accounts.record(
                CallRecord(phase, purpose, result.prompt_tokens, result.completion_tokens, result.latency)
            )
            return result
        raise GatewayError(f"gave up after {self.max_attempts} attempts: {last}", retryable=True)

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValidationError("cannot embed empty text")
        last: GatewayError | None = None
        for attempt in range(self.max_attempts):
            try:
                values = self.embedder.embed(text)
            except GatewayError as exc:
                if not exc.retryable:
                    raise
                last = exc
                if attempt + 1 < self.max_attempts:
                    self._sleep(self.backoff * (2**attempt))
                continue
            self.accounts.record_embed(_phase.get())
            return EmbeddingVector(tuple(values))
        raise GatewayError(f"embedding gave up after {self.max_attempts} attempts: {last}")


def scripted_policy_model(
    rules: Sequence[ScriptRule | dict] = (),
    default: str | None = None,
    *,
    latency: float = 0.0,
    embed_dim: int = DEFAULT_EMBED_DIM,
    **gateway_kwargs,
) -> Gateway:
    """Gateway over a scripted rule table (first match wins, declared order)."""
    return Gateway(ScriptedBackend(rules, default, latency), HashingEmbedder(embed_dim), **gateway_kwargs)


def hint_model(hint: str, answer: str, wrong: str = "WRONG", **kwargs) -> Gateway:
    """Answers `answer` iff `hint` occurs in the prompt, `wrong` otherwise."""
    return scripted_policy_model([ScriptRule(match=hint, respond=answer)], default=wrong, **kwargs)
