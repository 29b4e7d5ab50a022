"""Build provenance: a stable SHA-256 fingerprint of the inputs behind a table set.

The hash covers the vehicle parameters, the grid specification and the
artifact format version, serialized as canonical JSON (sorted keys, no
whitespace). Two precompute runs with identical inputs produce the same
hash, and every persisted artifact carries it.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import structlog

from eoam.config import GridSpec
from eoam.vehicle.params import VehicleParams

log = structlog.get_logger()

FORMAT_VERSION = 1


class ProvenanceMismatch(ValueError):
    """Artifacts in one table set were built from different inputs."""

    def __init__(self, source: str, expected: str, found: str) -> None:
        self.source = source
        self.expected = expected
        self.found = found
        super().__init__(f"{source}: provenance {found[:16]} does not match {expected[:16]}")


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def digest(payload: Any) -> str:
    """SHA-256 hex digest of the canonical JSON form of ``payload``."""
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def provenance_hash(params: VehicleParams, grid: GridSpec) -> str:
    return digest({
        "format_version": FORMAT_VERSION,
        "vehicle": params.model_dump(mode="json"),
        "grid": grid.model_dump(mode="json"),
    })


def check_provenance(source: str, expected: str, found: str | None) -> None:
    if found != expected:
        log.error("provenance_mismatch", source=source, expected=expected[:16], found=(found or "")[:16])
        raise ProvenanceMismatch(source, expected, found or "<missing>")
