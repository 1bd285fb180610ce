"""Knowledge substrate: per-app vector stores over help documents and
distilled execution experience, queried at runtime as a RAG layer.

The default embedder hashes tokens into a fixed 256-dim bag-of-tokens
vector (deterministic, no model weights); an HTTP sentence-embedding
client can be plugged in behind the same interface. Retrieval ranks by
cosine similarity with ties broken by ingestion order, so results are
reproducible bit-for-bit.

Stores persist as one flat JSON file per app (records plus vectors); no
external database is involved.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Protocol

import httpx

from .domain import PlannedAction
from .errors import MalformedRecord

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DEFAULT_DOC_BUDGET = 1
DEFAULT_EXPERIENCE_BUDGET = 3


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> tuple[float, ...]: ...


class HashingEmbedder:
    """Deterministic bag-of-tokens embedding with L2 normalization."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def embed(self, text: str) -> tuple[float, ...]:
        counts = [0.0] * self.dim
        for token in _TOKEN_RE.findall(text.lower()):
            h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            bucket = int.from_bytes(h[:4], "big") % self.dim
            sign = 1.0 if h[4] % 2 == 0 else -1.0
            counts[bucket] += sign
        norm = math.sqrt(sum(v * v for v in counts))
        if norm == 0.0:
            return tuple(counts)
        return tuple(v / norm for v in counts)


class HttpEmbedder:
    """Client for a sentence-embedding service.

    Request:  POST {endpoint} {"texts": [...]}
    Response: {"vectors": [[...], ...]}
    """

    def __init__(self, endpoint: str, dim: int = 384, timeout: float = 10.0,
                 client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.dim = dim
        self.client = client or httpx.Client(timeout=timeout)

    def embed(self, text: str) -> tuple[float, ...]:
        response = self.client.post(self.endpoint, json={"texts": [text]})
        response.raise_for_status()
        vector = response.json()["vectors"][0]
        norm = math.sqrt(sum(v * v for v in vector))
        if norm == 0.0:
            return tuple(vector)
        return tuple(v / norm for v in vector)


def cosine(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    return sum(x * y for x, y in zip(a, b))


@dataclass(frozen=True)
class HelpDoc:
    app_id: str
    request: str
    guidance: str
    version: str = "1"

    def __post_init__(self) -> None:
        if not self.request.strip():
            raise MalformedRecord("help document needs a non-empty request field")

    def to_json(self) -> dict[str, Any]:
        return {
            "app_id": self.app_id,
            "request": self.request,
            "guidance": self.guidance,
            "version": self.version,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "HelpDoc":
        try:
            return cls(
                app_id=data["app_id"],
                request=data["request"],
                guidance=data.get("guidance", ""),
                version=str(data.get("version", "1")),
            )
        except KeyError as exc:
            raise MalformedRecord(f"help document missing field {exc}") from exc


@dataclass(frozen=True)
class ExperienceRecord:
    app_id: str
    task_signature: str
    plan: tuple[str, ...]
    outcome: bool = True
    source_session: str = ""

    def __post_init__(self) -> None:
        if not self.outcome:
            raise MalformedRecord("only successful trajectories are admitted")
        if not self.task_signature.strip():
            raise MalformedRecord("experience record needs a task signature")

    def to_json(self) -> dict[str, Any]:
        return {
            "app_id": self.app_id,
            "task_signature": self.task_signature,
            "plan": list(self.plan),
            "outcome": self.outcome,
            "source_session": self.source_session,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ExperienceRecord":
        return cls(
            app_id=data["app_id"],
            task_signature=data["task_signature"],
            plan=tuple(data.get("plan", [])),
            outcome=data.get("outcome", True),
            source_session=data.get("source_session", ""),
        )


@dataclass
class _Indexed:
    record: Any
    vector: tuple[float, ...]
    seq: int


@dataclass
class _AppIndex:
    docs: list[_Indexed] = field(default_factory=list)
    experience: list[_Indexed] = field(default_factory=list)
    next_seq: int = 1


class KnowledgeStore:
    def __init__(self, embedder: Embedder | None = None, root: str | Path | None = None):
        self.embedder = embedder or HashingEmbedder()
        self.root = Path(root) if root is not None else None
        self._indices: dict[str, _AppIndex] = {}
        if self.root is not None and self.root.exists():
            for path in sorted(self.root.glob("*.json")):
                self._load_app(path)

    # -- ingestion -----------------------------------------------------------

    def ingest_docs(self, docs: Iterable[HelpDoc]) -> dict[str, int]:
        count = 0
        touched = set()
        for doc in docs:
            index = self._index(doc.app_id)
            index.docs.append(
                _Indexed(record=doc, vector=self.embedder.embed(doc.request), seq=index.next_seq)
            )
            index.next_seq += 1
            count += 1
            touched.add(doc.app_id)
        for app_id in touched:
            self._save_app(app_id)
        return {"ingested": count, "total_docs": sum(len(i.docs) for i in self._indices.values())}

    def add_experience(self, records: Iterable[ExperienceRecord]) -> dict[str, int]:
        count = 0
        touched = set()
        for record in records:
            index = self._index(record.app_id)
            index.experience.append(
                _Indexed(
                    record=record,
                    vector=self.embedder.embed(record.task_signature),
                    seq=index.next_seq,
                )
            )
            index.next_seq += 1
            count += 1
            touched.add(record.app_id)
        for app_id in touched:
            self._save_app(app_id)
        return {
            "ingested": count,
            "total_experience": sum(len(i.experience) for i in self._indices.values()),
        }

    # -- retrieval -----------------------------------------------------------

    def retrieve(
        self,
        app_id: str,
        query: str,
        k_docs: int = DEFAULT_DOC_BUDGET,
        k_exp: int = DEFAULT_EXPERIENCE_BUDGET,
    ) -> dict[str, list[Any]]:
        index = self._indices.get(app_id)
        if index is None:
            return {"docs": [], "examples": []}
        query_vector = self.embedder.embed(query)

        docs = self._rank(self._current_docs(index), query_vector)[: max(k_docs, 0)]
        examples = self._rank(index.experience, query_vector)[: max(k_exp, 0)]
        return {
            "docs": [item.record for item in docs],
            "examples": [item.record for item in examples],
        }

    @staticmethod
    def _rank(items: list[_Indexed], query_vector: tuple[float, ...]) -> list[_Indexed]:
        return sorted(items, key=lambda item: (-cosine(item.vector, query_vector), item.seq))

    @staticmethod
    def _current_docs(index: _AppIndex) -> list[_Indexed]:
        """Latest ingested version per request key; superseded versions stay
        stored but are not retrieval candidates."""
        latest: dict[str, _Indexed] = {}
        for item in index.docs:
            latest[item.record.request] = item
        return sorted(latest.values(), key=lambda item: item.seq)

    # -- persistence ---------------------------------------------------------

    def _index(self, app_id: str) -> _AppIndex:
        return self._indices.setdefault(app_id, _AppIndex())

    def _save_app(self, app_id: str) -> None:
        if self.root is None:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        index = self._indices[app_id]
        payload = {
            "app_id": app_id,
            "next_seq": index.next_seq,
            "docs": [
                {"record": i.record.to_json(), "vector": list(i.vector), "seq": i.seq}
                for i in index.docs
            ],
            "experience": [
                {"record": i.record.to_json(), "vector": list(i.vector), "seq": i.seq}
                for i in index.experience
            ],
        }
        (self.root / f"{app_id}.json").write_text(json.dumps(payload, indent=1))

    def _load_app(self, path: Path) -> None:
        payload = json.loads(path.read_text())
        index = _AppIndex(next_seq=payload.get("next_seq", 1))
        for item in payload.get("docs", []):
            index.docs.append(
                _Indexed(
                    record=HelpDoc.from_json(item["record"]),
                    vector=tuple(item["vector"]),
                    seq=item["seq"],
                )
            )
        for item in payload.get("experience", []):
            index.experience.append(
                _Indexed(
                    record=ExperienceRecord.from_json(item["record"]),
                    vector=tuple(item["vector"]),
                    seq=item["seq"],
                )
            )
        self._indices[payload["app_id"]] = index


def distill(events: list[dict[str, Any]]) -> list[ExperienceRecord]:
    """Mine a session trace for evaluator-validated successes.

    Each successful round yields one record whose plan is the executed
    action descriptions in order; failed or unevaluated rounds yield
    nothing.
    """
    session_id = ""
    rounds: dict[int, dict[str, Any]] = {}
    for event in events:
        kind = event.get("kind")
        round_index = event.get("round") or 0
        payload = event.get("payload") or {}
        if kind == "session_started":
            session_id = event.get("session", "")
        if round_index not in rounds:
            rounds[round_index] = {"request": "", "app_id": "", "steps": [], "verdict": None}
        record = rounds[round_index]
        if kind == "round_started":
            record["request"] = payload.get("request", "")
        elif kind == "subtask_started" and not record["app_id"]:
            record["app_id"] = payload.get("target_app", "")
        elif kind == "action_outcome":
            outcome = payload.get("outcome") or {}
            if outcome.get("status") in ("ok", "no_op"):
                action = PlannedAction.from_json(outcome["action"])
                record["steps"].append(action.describe())
        elif kind == "evaluation":
            record["verdict"] = payload.get("verdict")

    distilled = []
    for round_index in sorted(rounds):
        record = rounds[round_index]
        if record["verdict"] == "success" and record["request"]:
            distilled.append(
                ExperienceRecord(
                    app_id=record["app_id"] or "desktop",
                    task_signature=record["request"],
                    plan=tuple(record["steps"]),
                    outcome=True,
                    source_session=session_id,
                )
            )
    return distilled
