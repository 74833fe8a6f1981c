"""Exception types shared across the pipeline."""

from __future__ import annotations


class ParseError(Exception):
    """A skill package could not be parsed at all.

    kind is one of: missing_manifest, unreadable, nul_bytes, size_cap.
    Degraded-but-usable inputs (e.g. broken frontmatter) do not raise;
    they produce a package with a recorded warning instead.
    """

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


class ConfigError(Exception):
    """A configuration file (rules, backends, features) is invalid."""

    def __init__(self, message: str, *, rule_id: str | None = None):
        self.rule_id = rule_id
        super().__init__(message)


class GatewayError(Exception):
    """A model backend call failed.

    kind is one of: timeout, auth, transport, malformed_response.
    attempts counts requests actually made (0 for pre-flight failures).
    """

    def __init__(self, kind: str, detail: str = "", attempts: int = 0):
        self.kind = kind
        self.detail = detail
        self.attempts = attempts
        super().__init__(f"{kind} after {attempts} attempt(s): {detail}")


class SchemaError(Exception):
    """A model response did not contain the expected JSON.

    kind is one of: no_json, invalid_json, schema_violation.
    """

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)
