"""Hybrid control detection: accessibility stream + vision stream fusion.

Pipeline: raw accessibility dump -> runtime-predicate filter -> vision
detections -> IoU dedup against every accessibility box (strictly greater
than 10% overlap discards the vision box) -> surviving detections wrapped
as pseudo-controls -> consecutive set-of-mark labels.

The IoU comparison uses exact rational arithmetic, so a detection sitting
exactly on the 10% boundary is retained.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Protocol

import httpx

from .domain import BoundingBox, Control, ControlSource, Observation, iou
from .simenv import Desktop

IOU_DISCARD_THRESHOLD = Fraction(1, 10)


@dataclass(frozen=True)
class VisionDetection:
    control_type: str
    confidence: float
    box: BoundingBox

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0,1]")

    def to_json(self) -> dict[str, Any]:
        return {
            "control_type": self.control_type,
            "confidence": self.confidence,
            "box": self.box.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "VisionDetection":
        return cls(
            control_type=data["control_type"],
            confidence=data["confidence"],
            box=BoundingBox.from_json(data["box"]),
        )


@dataclass(frozen=True)
class FusionMetadata:
    acc_count: int
    vis_count: int
    discarded_count: int

    def to_json(self) -> dict[str, int]:
        return {
            "acc_count": self.acc_count,
            "vis_count": self.vis_count,
            "discarded_count": self.discarded_count,
        }


@dataclass(frozen=True)
class DetectionOptions:
    vision_confidence_floor: float = 0.0
    dedup_vision_overlaps: bool = False


class VisionDetector(Protocol):
    def detect(self, app_id: str, screenshot_ref: str) -> list[VisionDetection]: ...


class NullVisionDetector:
    """Accessibility-only perception."""

    def detect(self, app_id: str, screenshot_ref: str) -> list[VisionDetection]:
        return []


class FixtureVisionDetector:
    """Vision stream backed by the simulated desktop's withheld
    custom-rendered controls, with optional deterministic box jitter."""

    def __init__(self, desktop: Desktop, jitter: int = 0, seed: int = 0):
        self.desktop = desktop
        self.jitter = jitter
        self.seed = seed

    def _offset(self, key: str) -> tuple[int, int]:
        if self.jitter <= 0:
            return 0, 0
        h = hashlib.sha256(f"{self.seed}:{key}".encode()).digest()
        span = 2 * self.jitter + 1
        return h[0] % span - self.jitter, h[1] % span - self.jitter

    def detect(self, app_id: str, screenshot_ref: str) -> list[VisionDetection]:
        detections = []
        for raw in self.desktop.vision_truth(app_id):
            box = BoundingBox.from_json(raw["box"])
            dx, dy = self._offset(raw["source_control"])
            box = BoundingBox(
                max(0, box.left + dx), max(0, box.top + dy), max(1, box.right + dx), max(1, box.bottom + dy)
            )
            detections.append(
                VisionDetection(control_type=raw["control_type"], confidence=1.0, box=box)
            )
        return detections


class HttpVisionDetector:
    """Client for an external grounding model.

    Request:  POST {endpoint} {"app_id": ..., "screenshot_ref": ...}
    Response: [{"control_type": ..., "confidence": ..., "box": [l,t,r,b]}, ...]
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.client = client or httpx.Client(timeout=timeout)

    def detect(self, app_id: str, screenshot_ref: str) -> list[VisionDetection]:
        response = self.client.post(
            self.endpoint, json={"app_id": app_id, "screenshot_ref": screenshot_ref}
        )
        response.raise_for_status()
        return [VisionDetection.from_json(item) for item in response.json()]


def filter_accessibility(raw: list[Control]) -> list[Control]:
    """Runtime-predicate filter over the accessibility dump: only visible
    controls survive; enabled state is recorded, not filtered on. Order and
    ids are preserved from the dump."""
    return [c for c in raw if c.visible]


def fuse(
    acc: list[Control],
    vis: list[VisionDetection],
    options: DetectionOptions = DetectionOptions(),
) -> tuple[list[Control], FusionMetadata]:
    """Unify both streams. Every accessibility control is kept. A vision
    detection is discarded iff its IoU with ANY accessibility box exceeds
    the 10% threshold (strict), or it falls below the confidence floor."""
    fused = list(acc)
    survivors: list[VisionDetection] = []
    discarded = 0
    for detection in vis:
        if detection.confidence < options.vision_confidence_floor:
            discarded += 1
            continue
        if any(iou(detection.box, control.box) > IOU_DISCARD_THRESHOLD for control in acc):
            discarded += 1
            continue
        if options.dedup_vision_overlaps and any(
            iou(detection.box, kept.box) > IOU_DISCARD_THRESHOLD for kept in survivors
        ):
            discarded += 1
            continue
        survivors.append(detection)

    for index, detection in enumerate(survivors):
        fused.append(
            Control(
                id=f"vis-{index}",
                source=ControlSource.VISION,
                control_type=detection.control_type,
                label=detection.control_type,
                box=detection.box,
                visible=True,
                enabled=True,
                confidence=detection.confidence,
            )
        )
    return fused, FusionMetadata(len(acc), len(vis), discarded)


def annotate_som(controls: list[Control]) -> list[Control]:
    """Assign consecutive set-of-mark labels 1..n in list order."""
    return [control.with_mark(i + 1) for i, control in enumerate(controls)]


def observe(
    desktop: Desktop,
    app_id: str,
    detector: VisionDetector | None = None,
    options: DetectionOptions = DetectionOptions(),
) -> tuple[Observation, FusionMetadata]:
    """Full perception pipeline producing one fused, annotated observation."""
    raw, screenshot_ref = desktop.snapshot(app_id)
    acc = filter_accessibility(raw)
    vis = detector.detect(app_id, screenshot_ref) if detector is not None else []
    fused, metadata = fuse(acc, vis, options)
    annotated = annotate_som(fused)
    observation = Observation(
        app_id=app_id,
        screenshot_ref=screenshot_ref,
        controls=tuple(annotated),
        timestamp=desktop.tick,
    )
    return observation, metadata
