"""Checkpointing: canonical state snapshots with digest verification.

Snapshots are a single canonical JSON document (sorted keys, compact
separators, ASCII) so the same state saves to identical bytes on every
platform. The embedded digest covers the full canonical state including
the cursor; loads verify it before handing the state back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .engine import state_digest
from .events import OrderingKey
from .model import GlobalState, state_from_dict, state_to_dict

FORMAT_VERSION = 1


class SnapshotError(ValueError):
    """Snapshot file is unusable."""


class SnapshotVersionError(SnapshotError):
    def __init__(self, found: object):
        super().__init__(f"unsupported snapshot format version {found!r}; expected {FORMAT_VERSION}")
        self.found = found


class SnapshotDigestError(SnapshotError):
    def __init__(self, expected: str, actual: str):
        super().__init__(f"snapshot digest mismatch: stored {expected}, recomputed {actual}")
        self.expected = expected
        self.actual = actual


@dataclass(frozen=True)
class SnapshotMeta:
    """Header of a snapshot file."""

    format_version: int
    cursor: OrderingKey | None
    digest: str


def save_snapshot(state: GlobalState, path: str) -> SnapshotMeta:
    """Write the state to a byte-deterministic snapshot file."""
    digest = state_digest(state)
    document = {
        "format_version": FORMAT_VERSION,
        "cursor": state_to_dict(state)["cursor"],
        "digest": digest,
        "state": state_to_dict(state),
    }
    payload = json.dumps(document, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    with open(path, "wb") as handle:
        handle.write(payload.encode("ascii"))
    return SnapshotMeta(format_version=FORMAT_VERSION, cursor=state.cursor, digest=digest)


def _read_document(path: str) -> dict:
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot: {exc}") from None
    try:
        document = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"snapshot is not valid JSON: {exc.msg}") from None
    if not isinstance(document, dict):
        raise SnapshotError("snapshot must be a JSON object")
    if document.get("format_version") != FORMAT_VERSION:
        raise SnapshotVersionError(document.get("format_version"))
    for field in ("digest", "state"):
        if field not in document:
            raise SnapshotError(f"snapshot missing '{field}'")
    return document


def load_snapshot(path: str) -> GlobalState:
    """Load a snapshot, verifying its digest against the stored state."""
    document = _read_document(path)
    try:
        state = state_from_dict(document["state"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"snapshot state malformed: {exc}") from None
    actual = state_digest(state)
    if actual != document["digest"]:
        raise SnapshotDigestError(document["digest"], actual)
    return state


def verify_snapshot(path: str) -> SnapshotMeta:
    """Check integrity without returning the state."""
    state = load_snapshot(path)
    return SnapshotMeta(
        format_version=FORMAT_VERSION, cursor=state.cursor, digest=state_digest(state)
    )
