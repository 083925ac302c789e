"""Server-side store of restricted bounding boxes.

Adding a box that overlaps existing ones replaces the whole overlapping
group with a single encompassing box, applied transitively until no overlap
remains, so the stored set is always pairwise disjoint. Vicinity queries
return every box whose centroid lies within a great-circle radius of a
point; a uniform lat/lon grid over centroids prunes candidates but never
changes results. When bound to a snapshot path, every add is persisted
atomically before it returns, and boxes absorbed by merges are preserved in
an append-only audit log.
"""

from __future__ import annotations

import json
import math
import os
import random
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator

from . import geo, snapshot
from .geo import BoxExtent, GeoPoint
from .snapshot import CorruptSnapshot, StorageFailure

DEFAULT_CELL_SIZE_DEG = 0.25


@dataclass(frozen=True)
class RestrictedBox:
    """A persisted restriction: extent plus identity and audit fields."""

    id: str
    extent: BoxExtent
    centroid: GeoPoint
    added_by: str
    reason: str
    created_at: float  # UTC seconds


@dataclass(frozen=True)
class AddOutcome:
    """Result of an add: the box as stored and any boxes it absorbed."""

    stored: RestrictedBox
    replaced_ids: tuple[str, ...]


def box_record(box: RestrictedBox) -> dict:
    """Canonical dict form of a box, used on the wire and in snapshots."""
    return {
        "id": box.id,
        "min_lon": box.extent.min_lon,
        "min_lat": box.extent.min_lat,
        "max_lon": box.extent.max_lon,
        "max_lat": box.extent.max_lat,
        "centroid_lon": box.centroid.lon,
        "centroid_lat": box.centroid.lat,
        "added_by": box.added_by,
        "reason": box.reason,
        "created_at": box.created_at,
    }


def box_from_record(record: dict) -> RestrictedBox:
    """Parse the canonical dict form back into a box, validating geometry."""
    try:
        return RestrictedBox(
            id=str(record["id"]),
            extent=BoxExtent(
                min_lon=record["min_lon"],
                min_lat=record["min_lat"],
                max_lon=record["max_lon"],
                max_lat=record["max_lat"],
            ),
            centroid=GeoPoint(lat=record["centroid_lat"], lon=record["centroid_lon"]),
            added_by=str(record["added_by"]),
            reason=str(record["reason"]),
            created_at=float(record["created_at"]),
        )
    except KeyError as exc:
        raise ValueError(f"box record missing field {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise ValueError(f"box record has a non-numeric field: {exc}") from exc


class _GridIndex:
    """Uniform lat/lon grid over box centroids.

    Purely a candidate prefilter: callers always re-check candidates with
    exact geometry, so correctness never depends on cell size.
    """

    def __init__(self, cell_size_deg: float) -> None:
        self.cell_size = cell_size_deg
        self._cells: dict[tuple[int, int], set[str]] = {}

    def _cell_of(self, p: GeoPoint) -> tuple[int, int]:
        return (math.floor(p.lat / self.cell_size), math.floor(p.lon / self.cell_size))

    def add(self, box_id: str, c: GeoPoint) -> None:
        self._cells.setdefault(self._cell_of(c), set()).add(box_id)

    def discard(self, box_id: str, c: GeoPoint) -> None:
        cell = self._cell_of(c)
        ids = self._cells.get(cell)
        if ids is not None:
            ids.discard(box_id)
            if not ids:
                del self._cells[cell]

    def clear(self) -> None:
        self._cells.clear()

    def _ids_in_cell_rect(self, i0: int, i1: int, j0: int, j1: int) -> Iterator[str]:
        if (i1 - i0 + 1) * (j1 - j0 + 1) > len(self._cells):
            # sparse store: walking populated cells is cheaper than the rect
            for (ci, cj), ids in self._cells.items():
                if i0 <= ci <= i1 and j0 <= cj <= j1:
                    yield from ids
            return
        for ci in range(i0, i1 + 1):
            for cj in range(j0, j1 + 1):
                ids = self._cells.get((ci, cj))
                if ids:
                    yield from ids

    def ids_in_rect(self, min_lon: float, min_lat: float, max_lon: float, max_lat: float) -> Iterator[str]:
        """Candidate ids whose centroid cell intersects the coordinate rect."""
        i0 = math.floor(min_lat / self.cell_size)
        i1 = math.floor(max_lat / self.cell_size)
        j0 = math.floor(min_lon / self.cell_size)
        j1 = math.floor(max_lon / self.cell_size)
        yield from self._ids_in_cell_rect(i0, i1, j0, j1)

    def ids_near_disc(self, center: GeoPoint, radius_m: float) -> Iterator[str]:
        """Candidate ids whose centroid could lie within radius_m of center."""
        lat_pad = radius_m / geo.METERS_PER_DEG * 1.000001 + 1e-9
        lat_lo = max(-90.0, center.lat - lat_pad)
        lat_hi = min(90.0, center.lat + lat_pad)
        # widest possible longitude gap at distance radius_m, reached at the
        # narrowest parallel of the band: sin(gap/2) = sin(r/2R) / cos(lat)
        cos_lim = math.cos(math.radians(min(90.0, max(abs(lat_lo), abs(lat_hi)))))
        sin_half = math.sin(min(math.pi, radius_m / geo.EARTH_RADIUS_M) / 2.0)
        if cos_lim <= sin_half:
            lon_pad = 180.0
        else:
            lon_pad = math.degrees(2.0 * math.asin(sin_half / cos_lim)) * 1.000001 + 1e-9
        lon_lo = center.lon - lon_pad
        lon_hi = center.lon + lon_pad
        i0 = math.floor(lat_lo / self.cell_size)
        i1 = math.floor(lat_hi / self.cell_size)
        if lon_hi - lon_lo >= 360.0:
            yield from self._ids_in_cell_rect(
                i0, i1, math.floor(-180.0 / self.cell_size), math.floor(180.0 / self.cell_size)
            )
            return
        # a disc near the +/-180 meridian wraps: split into two rects
        if lon_lo < -180.0:
            yield from self._ids_in_cell_rect(
                i0, i1, math.floor((lon_lo + 360.0) / self.cell_size), math.floor(180.0 / self.cell_size)
            )
            lon_lo = -180.0
        if lon_hi > 180.0:
            yield from self._ids_in_cell_rect(
                i0, i1, math.floor(-180.0 / self.cell_size), math.floor((lon_hi - 360.0) / self.cell_size)
            )
            lon_hi = 180.0
        yield from self._ids_in_cell_rect(
            i0, i1, math.floor(lon_lo / self.cell_size), math.floor(lon_hi / self.cell_size)
        )


class Registry:
    """The restricted-box store.

    Thread-safe behind a single lock: one writer at a time, and readers see
    only committed state. With ``snapshot_path`` set, mutations are durable
    before they return; with ``audit_log_path`` set, merge-absorbed boxes
    are appended there instead of vanishing.
    """

    def __init__(
        self,
        snapshot_path: str | None = None,
        audit_log_path: str | None = None,
        cell_size_deg: float = DEFAULT_CELL_SIZE_DEG,
        id_rng: random.Random | None = None,
    ) -> None:
        if cell_size_deg <= 0:
            raise ValueError("cell_size_deg must be positive")
        self.snapshot_path = snapshot_path
        self.audit_log_path = audit_log_path
        self._lock = threading.RLock()
        self._boxes: dict[str, RestrictedBox] = {}
        self._lines: dict[str, bytes] = {}  # cached snapshot line per box
        self._index = _GridIndex(cell_size_deg)
        self._id_rng = id_rng if id_rng is not None else random.Random()
        # conservative bound on stored box half-extents, in degrees; only
        # grows, which keeps the overlap candidate search a true superset
        self._max_half_w = 0.0
        self._max_half_h = 0.0

    # -- identity ---------------------------------------------------------

    def _new_id(self) -> str:
        while True:
            box_id = f"{self._id_rng.getrandbits(128):032x}"
            if box_id not in self._boxes:
                return box_id

    def _note_extent(self, extent: BoxExtent) -> None:
        self._max_half_w = max(self._max_half_w, (extent.max_lon - extent.min_lon) / 2.0)
        self._max_half_h = max(self._max_half_h, (extent.max_lat - extent.min_lat) / 2.0)

    # -- queries ----------------------------------------------------------

    def count(self) -> int:
        with self._lock:
            return len(self._boxes)

    def all_boxes(self) -> list[RestrictedBox]:
        with self._lock:
            return list(self._boxes.values())

    def boxes_within_radius(self, center: GeoPoint, radius_m: float) -> list[RestrictedBox]:
        """Every box whose centroid is within radius_m of center (inclusive)."""
        if not (math.isfinite(radius_m) and radius_m > 0):
            raise ValueError("radius_m must be positive")
        with self._lock:
            hits = []
            boxes = self._boxes
            # meridian-arc lower bound: cheap exact reject before haversine
            lat_cut = radius_m / geo.METERS_PER_DEG * 1.000001 + 1e-9
            for box_id in self._index.ids_near_disc(center, radius_m):
                box = boxes[box_id]
                if abs(box.centroid.lat - center.lat) > lat_cut:
                    continue
                if geo.haversine_distance(center, box.centroid) <= radius_m:
                    hits.append(box)
            return hits

    # -- adds -------------------------------------------------------------

    def _overlapping_group(self, extent: BoxExtent) -> tuple[BoxExtent, dict[str, RestrictedBox]]:
        """Grow extent over every transitively overlapping stored box."""
        union = extent
        absorbed: dict[str, RestrictedBox] = {}
        while True:
            pad_w = self._max_half_w + 1e-9
            pad_h = self._max_half_h + 1e-9
            candidates = self._index.ids_in_rect(
                max(-180.0, union.min_lon - pad_w),
                max(-90.0, union.min_lat - pad_h),
                min(180.0, union.max_lon + pad_w),
                min(90.0, union.max_lat + pad_h),
            )
            hits = [
                self._boxes[box_id]
                for box_id in candidates
                if box_id not in absorbed and geo.boxes_overlap(self._boxes[box_id].extent, union)
            ]
            if not hits:
                return union, absorbed
            for box in hits:
                absorbed[box.id] = box
            union = BoxExtent(
                min_lon=min(union.min_lon, min(b.extent.min_lon for b in hits)),
                min_lat=min(union.min_lat, min(b.extent.min_lat for b in hits)),
                max_lon=max(union.max_lon, max(b.extent.max_lon for b in hits)),
                max_lat=max(union.max_lat, max(b.extent.max_lat for b in hits)),
            )

    def add_box(self, extent: BoxExtent, added_by: str, reason: str, now: float) -> AddOutcome:
        """Insert a box, merging away any overlap; durable before return.

        If persistence fails nothing is applied: the in-memory set and the
        snapshot on disk both keep their previous contents.
        """
        if not added_by:
            raise ValueError("added_by must be non-empty")
        with self._lock:
            union, absorbed = self._overlapping_group(extent)
            stored = RestrictedBox(
                id=self._new_id(),
                extent=union,
                centroid=geo.centroid(union),
                added_by=added_by,
                reason=reason,
                created_at=now,
            )
            stored_line = snapshot.encode_record(box_record(stored))
            if absorbed and self.audit_log_path:
                self._append_audit(stored.id, absorbed.values(), now)
            if self.snapshot_path:
                lines = [
                    line for box_id, line in self._lines.items() if box_id not in absorbed
                ]
                lines.append(stored_line)
                snapshot.write_snapshot(self.snapshot_path, lines)
            for box in absorbed.values():
                del self._boxes[box.id]
                del self._lines[box.id]
                self._index.discard(box.id, box.centroid)
            self._boxes[stored.id] = stored
            self._lines[stored.id] = stored_line
            self._index.add(stored.id, stored.centroid)
            self._note_extent(union)
            return AddOutcome(stored=stored, replaced_ids=tuple(sorted(absorbed)))

    def bulk_load(
        self,
        extents: Iterable[BoxExtent],
        added_by: str,
        reason: str,
        now: float,
    ) -> int:
        """Load a prepared dataset without overlap adjustment.

        Fast path for benchmarks and synthetic corpora, where box counts
        must stay exact; merge semantics apply only to add_box. Snapshots
        once at the end when bound to a path.
        """
        if not added_by:
            raise ValueError("added_by must be non-empty")
        with self._lock:
            loaded = 0
            for extent in extents:
                box = RestrictedBox(
                    id=self._new_id(),
                    extent=extent,
                    centroid=geo.centroid(extent),
                    added_by=added_by,
                    reason=reason,
                    created_at=now,
                )
                self._boxes[box.id] = box
                self._lines[box.id] = snapshot.encode_record(box_record(box))
                self._index.add(box.id, box.centroid)
                self._note_extent(extent)
                loaded += 1
            if self.snapshot_path:
                snapshot.write_snapshot(self.snapshot_path, list(self._lines.values()))
            return loaded

    # -- persistence ------------------------------------------------------

    def snapshot_save(self, path: str | None = None) -> None:
        """Write the current box set to path (default: the bound path)."""
        target = path or self.snapshot_path
        if not target:
            raise ValueError("no snapshot path given or bound")
        with self._lock:
            snapshot.write_snapshot(target, list(self._lines.values()))

    def load_snapshot(self, path: str | None = None) -> int:
        """Replace the registry contents with a snapshot's, returning the count."""
        source = path or self.snapshot_path
        if not source:
            raise ValueError("no snapshot path given or bound")
        records = snapshot.read_snapshot(source)
        boxes = []
        for record in records:
            try:
                boxes.append(box_from_record(record))
            except (ValueError, geo.InvalidCoordinate) as exc:
                raise CorruptSnapshot(f"{source}: bad box record: {exc}") from exc
        with self._lock:
            self._boxes.clear()
            self._lines.clear()
            self._index.clear()
            self._max_half_w = 0.0
            self._max_half_h = 0.0
            for box in boxes:
                if box.id in self._boxes:
                    raise CorruptSnapshot(f"{source}: duplicate box id {box.id}")
                self._boxes[box.id] = box
                self._lines[box.id] = snapshot.encode_record(box_record(box))
                self._index.add(box.id, box.centroid)
                self._note_extent(box.extent)
            return len(boxes)

    def _append_audit(self, merged_into: str, absorbed: Iterable[RestrictedBox], now: float) -> None:
        try:
            with open(self.audit_log_path, "a", encoding="utf-8") as f:
                for box in absorbed:
                    entry = {
                        "event": "absorbed",
                        "at": now,
                        "merged_into": merged_into,
                        "box": box_record(box),
                    }
                    f.write(json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")
                f.flush()
                os.fsync(f.fileno())
        except OSError as exc:
            raise StorageFailure(f"cannot append audit log {self.audit_log_path}: {exc}") from exc
