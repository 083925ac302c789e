"""Loopback benchmark: storage footprint and latency shape per store size.

For each requested store size N the harness loads a synthetic dataset into
a disk-backed registry, measures add and vicinity-fetch latency over real
HTTP on the loopback interface, and measures the device-side startup check
(a capture-gate pass over an N-box cache) in-process. The two kinds of
numbers are reported separately because they answer different questions:
one includes the network stack, the other is pure compute.

Adds during measurement are placed in a ring outside the dataset disc so
the store size stays pinned at N; a mid-disc add against a dense synthetic
corpus would cascade into one giant merged box and invalidate every later
sample. Fetches use a deliberately tight vicinity radius so the numbers
track query cost rather than payload streaming.
"""

from __future__ import annotations

import json
import os
import random
import shutil
import statistics
import threading
import time
import urllib.request
from dataclasses import dataclass

from . import datasets, device, geo
from .geo import GeoPoint, MILE_M
from .registry import Registry
from .server import ApiConfig, create_server

DEFAULT_CENTER = GeoPoint(lat=40.0, lon=-74.5)
DEFAULT_DISC_RADIUS_M = 50.0 * MILE_M
DEFAULT_FETCH_RADIUS_M = 5_000.0
DEFAULT_OPS = 100
DEFAULT_STARTUP_REPS = 20
# generous per-box disk estimate used by the preflight space check
_BYTES_PER_BOX_ESTIMATE = 400


class BenchError(RuntimeError):
    """The benchmark cannot run as requested."""


def percentile(values: list[float], q: float) -> float:
    """Linear-interpolated percentile, q in [0, 100]."""
    if not values:
        raise ValueError("no values")
    ordered = sorted(values)
    k = (len(ordered) - 1) * (q / 100.0)
    lo = int(k)
    hi = min(lo + 1, len(ordered) - 1)
    if lo == hi:
        return ordered[lo]
    return ordered[lo] * (hi - k) + ordered[hi] * (k - lo)


@dataclass(frozen=True)
class LatencyStats:
    median_ms: float
    p95_ms: float

    @staticmethod
    def of(samples_ms: list[float]) -> "LatencyStats":
        return LatencyStats(
            median_ms=statistics.median(samples_ms),
            p95_ms=percentile(samples_ms, 95.0),
        )


@dataclass(frozen=True)
class BenchRow:
    n: int
    bytes_per_box: float
    add: LatencyStats
    fetch: LatencyStats
    startup: LatencyStats


@dataclass(frozen=True)
class BenchReport:
    sizes: tuple[int, ...]
    seed: int
    ops: int
    startup_reps: int
    rows: tuple[BenchRow, ...]

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "seed": self.seed,
            "ops": self.ops,
            "startup_reps": self.startup_reps,
            "rows": [
                {
                    "n": row.n,
                    "bytes_per_box": row.bytes_per_box,
                    "add_ms": {"median": row.add.median_ms, "p95": row.add.p95_ms},
                    "fetch_ms": {"median": row.fetch.median_ms, "p95": row.fetch.p95_ms},
                    "startup_ms": {"median": row.startup.median_ms, "p95": row.startup.p95_ms},
                }
                for row in self.rows
            ],
        }

    def format_table(self) -> str:
        header = (
            f"{'N':>9}  {'B/box':>7}  {'add med':>9}  {'add p95':>9}  "
            f"{'fetch med':>9}  {'fetch p95':>9}  {'start med':>9}  {'start p95':>9}"
        )
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.n:>9}  {r.bytes_per_box:>7.1f}  {r.add.median_ms:>9.2f}  {r.add.p95_ms:>9.2f}  "
                f"{r.fetch.median_ms:>9.2f}  {r.fetch.p95_ms:>9.2f}  "
                f"{r.startup.median_ms:>9.2f}  {r.startup.p95_ms:>9.2f}"
            )
        lines.append("(latencies in ms; add/fetch over loopback HTTP, startup in-process)")
        return "\n".join(lines)


def _post_json(url: str, payload: dict, timeout: float = 30.0) -> None:
    data = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"}, method="POST"
    )
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        resp.read()


def _get(url: str, timeout: float = 30.0) -> None:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        resp.read()


def _measure_fetches(base_url: str, rng: random.Random, center: GeoPoint,
                     disc_radius_m: float, fetch_radius_m: float, ops: int) -> list[float]:
    samples = []
    for _ in range(ops):
        r = disc_radius_m * (rng.random() ** 0.5)
        p = geo.destination(center, rng.uniform(0.0, 360.0), r)
        url = f"{base_url}/v1/boxes?lat={p.lat}&lon={p.lon}&radius_m={fetch_radius_m}"
        t0 = time.perf_counter()
        _get(url)
        samples.append((time.perf_counter() - t0) * 1000.0)
    return samples


def _measure_adds(base_url: str, rng: random.Random, center: GeoPoint,
                  disc_radius_m: float, ops: int) -> list[float]:
    samples = []
    for _ in range(ops):
        # ring outside the dataset disc: keeps N stable during sampling
        r = rng.uniform(disc_radius_m * 1.05, disc_radius_m * 1.45)
        c = geo.destination(center, rng.uniform(0.0, 360.0), r)
        half = rng.uniform(50.0, 250.0) / geo.METERS_PER_DEG
        payload = {
            "lon1": c.lon - half,
            "lat1": c.lat - half,
            "lon2": c.lon + half,
            "lat2": c.lat + half,
            "added_by": "bench",
            "reason": "latency sample",
        }
        t0 = time.perf_counter()
        _post_json(f"{base_url}/v1/boxes", payload)
        samples.append((time.perf_counter() - t0) * 1000.0)
    return samples


def _measure_startup(boxes, rng: random.Random, center: GeoPoint,
                     disc_radius_m: float, reps: int) -> list[float]:
    policy = device.DevicePolicy()
    state = device.DeviceState(
        cache=boxes,
        last_refresh_at=0.0,
        coverage_center=center,
        coverage_radius_m=disc_radius_m * 2.0,
    )
    samples = []
    for _ in range(reps):
        r = disc_radius_m * (rng.random() ** 0.5)
        fix = geo.destination(center, rng.uniform(0.0, 360.0), r)
        t0 = time.perf_counter()
        device.capture_request(state, policy, now=1.0, fix=fix)
        samples.append((time.perf_counter() - t0) * 1000.0)
    return samples


def run_bench(
    sizes: list[int],
    seed: int,
    workdir: str,
    ops: int = DEFAULT_OPS,
    startup_reps: int = DEFAULT_STARTUP_REPS,
    center: GeoPoint = DEFAULT_CENTER,
    disc_radius_m: float = DEFAULT_DISC_RADIUS_M,
    fetch_radius_m: float = DEFAULT_FETCH_RADIUS_M,
) -> BenchReport:
    """Run the full measurement matrix and return the report."""
    if not sizes or any(n <= 0 for n in sizes):
        raise BenchError("sizes must be positive integers")
    if list(sizes) != sorted(sizes):
        raise BenchError("sizes must be ascending")
    if ops <= 0 or startup_reps <= 0:
        raise BenchError("ops and startup_reps must be positive")
    os.makedirs(workdir, exist_ok=True)
    need = max(sizes) * _BYTES_PER_BOX_ESTIMATE + 64 * 1024 * 1024
    free = shutil.disk_usage(workdir).free
    if free < need:
        raise BenchError(
            f"insufficient disk space in {workdir}: need about {need} bytes, have {free}"
        )

    rows = []
    for n in sizes:
        rng = random.Random(f"{seed}:{n}")
        snapshot_path = os.path.join(workdir, f"bench_{n}.snap")
        audit_path = snapshot_path + ".audit"
        registry = Registry(snapshot_path=snapshot_path, audit_log_path=audit_path)
        extents = datasets.generate_extents(n, center, disc_radius_m, rng)
        registry.bulk_load(extents, added_by="bench", reason="", now=0)
        bytes_per_box = os.path.getsize(snapshot_path) / n
        cache_at_n = registry.all_boxes()

        config = ApiConfig(host="127.0.0.1", port=0, snapshot_path=snapshot_path,
                           audit_log_path=audit_path)
        server = create_server(config, registry=registry)
        thread = threading.Thread(
            target=lambda: server.serve_forever(poll_interval=0.05), daemon=True
        )
        thread.start()
        try:
            _get(f"{server.url}/v1/boxes?lat={center.lat}&lon={center.lon}&radius_m=1000")  # warmup
            fetch_ms = _measure_fetches(server.url, rng, center, disc_radius_m,
                                        fetch_radius_m, ops)
            add_ms = _measure_adds(server.url, rng, center, disc_radius_m, ops)
        finally:
            server.shutdown()
            server.server_close()
            thread.join(timeout=10.0)
        startup_ms = _measure_startup(cache_at_n, rng, center, disc_radius_m, startup_reps)
        for path in (snapshot_path, audit_path):
            if os.path.exists(path):
                os.remove(path)
        rows.append(
            BenchRow(
                n=n,
                bytes_per_box=bytes_per_box,
                add=LatencyStats.of(add_ms),
                fetch=LatencyStats.of(fetch_ms),
                startup=LatencyStats.of(startup_ms),
            )
        )
    return BenchReport(
        sizes=tuple(sizes), seed=seed, ops=ops, startup_reps=startup_reps, rows=tuple(rows)
    )
