"""Append-only shared memory for agent coordination.

Appends are linearizable (single lock); seq numbers are dense 1..n under
any interleaving of concurrent appenders. Entries are immutable and never
removed. This is the only shared-mutable structure in the runtime.
"""
from __future__ import annotations

import threading
from typing import Any, Callable

from .domain import BlackboardEntry, EntryKind
from .errors import SessionClosed


class Blackboard:
    def __init__(self) -> None:
        self._entries: list[BlackboardEntry] = []
        self._lock = threading.Lock()
        self._closed = False
        self._listeners: list[Callable[[BlackboardEntry], None]] = []

    def close(self) -> None:
        with self._lock:
            self._closed = True

    def add_listener(self, listener: Callable[[BlackboardEntry], None]) -> None:
        with self._lock:
            self._listeners.append(listener)

    def append(
        self,
        body: dict[str, Any],
        author: str,
        kind: EntryKind | str = EntryKind.METADATA,
        round: int = 0,
    ) -> BlackboardEntry:
        kind = EntryKind(kind)
        with self._lock:
            if self._closed:
                raise SessionClosed("blackboard is closed; session has finished")
            entry = BlackboardEntry(
                seq=len(self._entries) + 1,
                author=author,
                kind=kind,
                body=dict(body),
                round=round,
            )
            self._entries.append(entry)
            listeners = list(self._listeners)
        for listener in listeners:
            listener(entry)
        return entry

    def read(
        self,
        kind: EntryKind | str | None = None,
        author: str | None = None,
        round: int | None = None,
    ) -> list[BlackboardEntry]:
        if kind is not None:
            kind = EntryKind(kind)
        with self._lock:
            entries = list(self._entries)
        return [
            e
            for e in entries
            if (kind is None or e.kind is kind)
            and (author is None or e.author == author)
            and (round is None or e.round == round)
        ]

    def view(self) -> dict[str, Any]:
        """Structured snapshot handed to planners: all entries plus the most
        recent result body for convenient cross-app handoff."""
        entries = self.read()
        results = [e for e in entries if e.kind is EntryKind.RESULT]
        return {
            "entries": [e.to_json() for e in entries],
            "last_result": results[-1].body if results else None,
        }

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
