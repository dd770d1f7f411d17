"""Error taxonomy shared by every module.

Each error carries a short machine-readable ``code`` (kebab-case) so the CLI
can print ``error(<code>): <detail>`` and map the class to an exit status.
"""

from __future__ import annotations


class KpshapError(Exception):
    """Base class; ``code`` identifies the failure kind."""

    code = "error"

    def __init__(self, detail: str, code: str | None = None):
        if code is not None:
            self.code = code
        super().__init__(detail)

    def __str__(self) -> str:  # "error(code): detail" is assembled by the CLI
        return super().__str__()


class SchemaError(KpshapError):
    """Invalid keypoint schema document or schema-level query."""

    code = "schema"


class DataError(KpshapError):
    """Malformed or degenerate input data (files, matrices, tables)."""

    code = "data"


class OracleError(KpshapError):
    """Oracle backend failure: protocol, transport, or missing value."""

    code = "oracle"


class MissingCoalitionError(OracleError):
    """Tabular oracle queried at a coalition absent from its table."""

    code = "missing-coalition"
