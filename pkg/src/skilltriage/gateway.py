"""Uniform chat-completion access for the semantic layers.

Two backend kinds share one calling convention: real JSON-over-HTTP
endpoints (OpenAI-style wire format) and a scripted backend that replays
canned responses from a fixtures file, keyed on (backend, role, skill).
The scripted backend makes the full pipeline runnable offline and
bit-deterministic.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests
import yaml
from jsonschema import ValidationError, validate

from .errors import ConfigError, GatewayError, SchemaError

logger = logging.getLogger(__name__)

DEFAULT_MAX_IN_FLIGHT = 4

_BUILTIN_DEFAULTS = {
    "ssd": json.dumps(
        {"risk_score": 0.0, "rating": "none", "evidence": [], "reasoning": "scripted default"}
    ),
    "jury": json.dumps(
        {
            "verdict": "SAFE",
            "confidence": 0.9,
            "attack_types": [],
            "evidence": [],
            "reasoning": "scripted default",
        }
    ),
}


@dataclass(frozen=True)
class BackendConfig:
    name: str
    endpoint_url: str
    model_id: str
    api_key_env_var: str = ""
    temperature: float = 0.0
    timeout_s: float = 60.0
    max_retries: int = 2
    backoff_s: float = 0.5

    @property
    def scripted(self) -> bool:
        return self.endpoint_url.startswith("scripted:")


@dataclass(frozen=True)
class ChatExchange:
    system_text: str
    user_text: str
    response_text: str
    latency_ms: float
    input_tokens: int
    output_tokens: int
    cost_usd: float


class CostLedger:
    """Thread-safe record of every exchange, attributable per skill."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: list[tuple[str, str, str, ChatExchange]] = []

    def record(self, skill_id: str, backend: str, role: str, exchange: ChatExchange) -> None:
        with self._lock:
            self._entries.append((skill_id, backend, role, exchange))

    def total_for(self, skill_id: str) -> float:
        with self._lock:
            return sum(e.cost_usd for sid, _, _, e in self._entries if sid == skill_id)

    def grand_total(self) -> float:
        with self._lock:
            return sum(e.cost_usd for _, _, _, e in self._entries)

    def entries(self) -> list[tuple[str, str, str, ChatExchange]]:
        with self._lock:
            return list(self._entries)


def _estimate_tokens(text: str) -> int:
    return max(1, math.ceil(len(text) / 4)) if text else 0


def _cost(prices: dict, model_id: str, input_tokens: int, output_tokens: int) -> float:
    rates = prices.get(model_id)
    if not rates:
        return 0.0
    return (
        input_tokens / 1000.0 * float(rates.get("input_per_1k", 0.0))
        + output_tokens / 1000.0 * float(rates.get("output_per_1k", 0.0))
    )


class ScriptedStore:
    """Fixture lookup for the scripted backend.

    Responses resolve by (backend, role, skill) with "*" wildcards, then
    per-role-prefix defaults, then a built-in SAFE/low-risk response.
    """

    def __init__(self, doc: dict | None = None):
        doc = doc or {}
        self.defaults: dict[str, str] = dict(_BUILTIN_DEFAULTS)
        self.defaults.update({str(k): str(v) for k, v in (doc.get("defaults") or {}).items()})
        self._responses: dict[tuple[str, str, str], tuple[str, float]] = {}
        for entry in doc.get("responses") or []:
            key = (
                str(entry.get("backend", "*")),
                str(entry.get("role", "*")),
                str(entry.get("skill", "*")),
            )
            self._responses[key] = (str(entry.get("text", "")), float(entry.get("delay_ms", 0.0)))

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedStore":
        try:
            doc = yaml.safe_load(Path(path).read_text("utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot load scripted fixtures {path}: {exc}") from exc
        return cls(doc)

    def resolve(self, backend: str, role: str, skill_id: str) -> tuple[str, float]:
        for key in (
            (backend, role, skill_id),
            ("*", role, skill_id),
            (backend, role, "*"),
            ("*", role, "*"),
            (backend, "*", skill_id),
            ("*", "*", "*"),
        ):
            if key in self._responses:
                return self._responses[key]
        prefix = role.split(":", 1)[0]
        if prefix in self.defaults:
            return self.defaults[prefix], 0.0
        return self.defaults.get("*", _BUILTIN_DEFAULTS["ssd"]), 0.0


def complete(
    cfg: BackendConfig,
    system_text: str,
    user_text: str,
    *,
    prices: dict | None = None,
    role: str = "",
    skill_id: str = "",
    fixtures: ScriptedStore | None = None,
) -> ChatExchange:
    """One chat completion against a backend; raises GatewayError.

    Transient transport failures and 5xx responses are retried up to
    cfg.max_retries with exponential backoff.
    """
    prices = prices or {}
    if cfg.scripted:
        store = fixtures or ScriptedStore()
        text, delay_ms = store.resolve(cfg.name, role, skill_id)
        if delay_ms > 0:
            time.sleep(delay_ms / 1000.0)
        in_tok = _estimate_tokens(system_text) + _estimate_tokens(user_text)
        out_tok = _estimate_tokens(text)
        return ChatExchange(
            system_text=system_text,
            user_text=user_text,
            response_text=text,
            latency_ms=delay_ms,
            input_tokens=in_tok,
            output_tokens=out_tok,
            cost_usd=_cost(prices, cfg.model_id, in_tok, out_tok),
        )

    headers = {"Content-Type": "application/json"}
    if cfg.api_key_env_var:
        key = os.environ.get(cfg.api_key_env_var)
        if not key:
            raise GatewayError("auth", f"environment variable {cfg.api_key_env_var} is not set", 0)
        headers["Authorization"] = f"Bearer {key}"

    payload = {
        "model": cfg.model_id,
        "messages": [
            {"role": "system", "content": system_text},
            {"role": "user", "content": user_text},
        ],
        "temperature": cfg.temperature,
    }

    attempts = 0
    last_kind = "transport"
    last_detail = ""
    started = time.perf_counter()
    while attempts <= cfg.max_retries:
        attempts += 1
        try:
            resp = requests.post(cfg.endpoint_url, json=payload, headers=headers, timeout=cfg.timeout_s)
        except requests.Timeout as exc:
            last_kind, last_detail = "timeout", str(exc)
        except requests.RequestException as exc:
            last_kind, last_detail = "transport", str(exc)
        else:
            if resp.status_code in (401, 403):
                raise GatewayError("auth", f"HTTP {resp.status_code}", attempts)
            if resp.status_code >= 500:
                last_kind, last_detail = "transport", f"HTTP {resp.status_code}"
            elif resp.status_code != 200:
                raise GatewayError("transport", f"HTTP {resp.status_code}", attempts)
            else:
                return _parse_http_response(cfg, resp, system_text, user_text, prices, started, attempts)
        if attempts <= cfg.max_retries:
            time.sleep(cfg.backoff_s * (2 ** (attempts - 1)))
    raise GatewayError(last_kind, last_detail, attempts)


def _parse_http_response(cfg, resp, system_text, user_text, prices, started, attempts):
    latency_ms = (time.perf_counter() - started) * 1000.0
    try:
        body = resp.json()
        content = body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise GatewayError("malformed_response", str(exc), attempts) from exc
    usage = body.get("usage") or {}
    in_tok = int(usage.get("prompt_tokens", _estimate_tokens(system_text) + _estimate_tokens(user_text)))
    out_tok = int(usage.get("completion_tokens", _estimate_tokens(content)))
    logger.info(
        "backend %s call: %d in / %d out tokens, %.1f ms", cfg.name, in_tok, out_tok, latency_ms
    )
    return ChatExchange(
        system_text=system_text,
        user_text=user_text,
        response_text=str(content),
        latency_ms=latency_ms,
        input_tokens=in_tok,
        output_tokens=out_tok,
        cost_usd=_cost(prices, cfg.model_id, in_tok, out_tok),
    )


def extract_json(response_text: str, schema: dict | None = None):
    """First balanced top-level JSON object in a model response.

    Tolerates surrounding prose and code fences. Raises SchemaError with
    kind no_json / invalid_json / schema_violation.
    """
    start = response_text.find("{")
    if start < 0:
        raise SchemaError("no_json", "no opening brace in response")
    depth = 0
    in_string = False
    escaped = False
    end = -1
    for i in range(start, len(response_text)):
        ch = response_text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                end = i + 1
                break
    if end < 0:
        raise SchemaError("invalid_json", "unbalanced braces in response")
    try:
        value = json.loads(response_text[start:end])
    except json.JSONDecodeError as exc:
        raise SchemaError("invalid_json", str(exc)) from exc
    if schema is not None:
        try:
            validate(value, schema)
        except ValidationError as exc:
            raise SchemaError("schema_violation", exc.message) from exc
    return value


@dataclass
class GatewaySetup:
    """Parsed backends.yaml: backend roster, price table, role wiring."""

    backends: dict[str, BackendConfig]
    prices: dict
    layer2: str
    jury: tuple[str, ...]
    fixtures: dict[str, ScriptedStore] = field(default_factory=dict)


def load_backends(path: str | Path) -> GatewaySetup:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text("utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot load backends file {path}: {exc}") from exc
    backends: dict[str, BackendConfig] = {}
    fixtures: dict[str, ScriptedStore] = {}
    for entry in doc.get("backends") or []:
        cfg = BackendConfig(
            name=str(entry["name"]),
            endpoint_url=str(entry["endpoint_url"]),
            model_id=str(entry.get("model_id", entry["name"])),
            api_key_env_var=str(entry.get("api_key_env_var", "")),
            temperature=float(entry.get("temperature", 0.0)),
            timeout_s=float(entry.get("timeout_s", 60.0)),
            max_retries=int(entry.get("max_retries", 2)),
            backoff_s=float(entry.get("backoff_s", 0.5)),
        )
        if cfg.max_retries < 0:
            raise ConfigError(f"backend {cfg.name}: max_retries must be >= 0")
        if cfg.name in backends:
            raise ConfigError(f"duplicate backend name {cfg.name!r}")
        backends[cfg.name] = cfg
        if cfg.scripted:
            fixture_ref = cfg.endpoint_url.split(":", 1)[1]
            if fixture_ref:
                fixture_path = Path(fixture_ref)
                if not fixture_path.is_absolute():
                    fixture_path = path.parent / fixture_path
                fixtures[cfg.name] = ScriptedStore.load(fixture_path)
            else:
                fixtures[cfg.name] = ScriptedStore()
    jury = tuple(str(x) for x in doc.get("jury") or ())
    layer2 = str(doc.get("layer2", jury[0] if jury else ""))
    for name in (layer2, *jury):
        if name and name not in backends:
            raise ConfigError(f"role references unknown backend {name!r}")
    return GatewaySetup(
        backends=backends,
        prices=dict(doc.get("prices") or {}),
        layer2=layer2,
        jury=jury,
        fixtures=fixtures,
    )


class Gateway:
    """Backend roster + ledger + per-backend admission limits."""

    def __init__(self, setup: GatewaySetup, *, max_in_flight: int = DEFAULT_MAX_IN_FLIGHT):
        self.setup = setup
        self.ledger = CostLedger()
        self._gates = {
            name: threading.Semaphore(max_in_flight) for name in setup.backends
        }

    def backend(self, name: str) -> BackendConfig:
        try:
            return self.setup.backends[name]
        except KeyError:
            raise ConfigError(f"unknown backend {name!r}") from None

    def complete(
        self,
        backend_name: str,
        system_text: str,
        user_text: str,
        *,
        role: str,
        skill_id: str,
        ledger_key: str | None = None,
    ) -> ChatExchange:
        """One completion with admission control and ledger recording.

        ledger_key defaults to skill_id; corpus drivers pass the package
        path so same-named skills do not pool their costs.
        """
        cfg = self.backend(backend_name)
        gate = self._gates[backend_name]
        with gate:
            exchange = complete(
                cfg,
                system_text,
                user_text,
                prices=self.setup.prices,
                role=role,
                skill_id=skill_id,
                fixtures=self.setup.fixtures.get(backend_name),
            )
        self.ledger.record(ledger_key or skill_id, backend_name, role, exchange)
        return exchange
