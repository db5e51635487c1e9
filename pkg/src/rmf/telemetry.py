"""Effort measurement: wall-clock timing, process resource sampling, and the
attacker step ledger.

The resource probe runs a sampler thread next to the measured action and
records per-process CPU utilization (may exceed 100 on multicore) plus
resident memory. GPU memory is reported only when a device query is
available on the platform; otherwise the field stays absent rather than
zero. If sampling itself fails, the probe degrades to a time-only
measurement and says so.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import psutil


@dataclass(frozen=True)
class ResourceSample:
    t_offset_s: float
    cpu_percent: float
    rss_mb: float
    gpu_mb: float | None = None


@dataclass(frozen=True)
class ResourceSummary:
    cpu_percent_mean: float
    rss_mb_peak: float
    gpu_mb_peak: float | None
    sample_count: int


@dataclass(frozen=True)
class StepLedgerTotals:
    knowledge: int
    goal: int
    specificity: int

    def __post_init__(self):
        if min(self.knowledge, self.goal, self.specificity) < 0:
            raise ValueError("step counts must be non-negative")


@dataclass(eq=False)
class ProbeResult:
    value: object
    resources: ResourceSummary | None
    elapsed_s: float
    notes: tuple[str, ...] = ()


class Stopwatch:
    """Monotonic-clock stopwatch; never consults the wall-clock date."""

    def __init__(self):
        self._started_at = time.perf_counter()

    def elapsed_s(self) -> float:
        return time.perf_counter() - self._started_at


def ledger_total(totals: StepLedgerTotals) -> int:
    """Overall attacker steps: knowledge + goal + specificity."""
    return totals.knowledge + totals.goal + totals.specificity


def _query_gpu_mb() -> float | None:
    """Device memory in use, when the platform exposes a query; else None."""
    try:
        import pynvml  # optional; absent on most CPU-only hosts
    except ImportError:
        return None
    try:
        pynvml.nvmlInit()
        used = 0
        for i in range(pynvml.nvmlDeviceGetCount()):
            handle = pynvml.nvmlDeviceGetHandleByIndex(i)
            used += pynvml.nvmlDeviceGetMemoryInfo(handle).used
        pynvml.nvmlShutdown()
        return used / 2**20
    except Exception:
        return None


def gpu_available() -> bool:
    return _query_gpu_mb() is not None


class _Sampler(threading.Thread):
    def __init__(self, interval_s: float):
        super().__init__(daemon=True)
        self._interval_s = interval_s
        self._halt = threading.Event()
        self._t0 = time.perf_counter()
        self._proc = psutil.Process()
        self._query_gpu = gpu_available()
        self.samples: list[ResourceSample] = []
        self.failure: Exception | None = None

    def _take_sample(self) -> None:
        self.samples.append(
            ResourceSample(
                t_offset_s=time.perf_counter() - self._t0,
                cpu_percent=self._proc.cpu_percent(interval=None),
                rss_mb=self._proc.memory_info().rss / 2**20,
                gpu_mb=_query_gpu_mb() if self._query_gpu else None,
            )
        )

    def run(self) -> None:
        try:
            while not self._halt.wait(self._interval_s):
                self._take_sample()
        except Exception as exc:  # degrade to time-only measurement
            self.failure = exc

    def finish(self) -> None:
        self._halt.set()
        self.join()
        if self.failure is None:
            try:
                self._take_sample()  # guarantees >= 1 sample even for instant actions
            except Exception as exc:
                self.failure = exc

    def prime(self) -> None:
        self._proc.cpu_percent(interval=None)  # first cpu_percent call only arms the counter


def summarize_samples(samples: list[ResourceSample]) -> ResourceSummary:
    if not samples:
        raise ValueError("cannot summarize an empty sample stream")
    gpu_values = [s.gpu_mb for s in samples if s.gpu_mb is not None]
    return ResourceSummary(
        cpu_percent_mean=float(sum(s.cpu_percent for s in samples) / len(samples)),
        rss_mb_peak=float(max(s.rss_mb for s in samples)),
        gpu_mb_peak=float(max(gpu_values)) if gpu_values else None,
        sample_count=len(samples),
    )


def probe_run(action, interval_ms: int = 100) -> ProbeResult:
    """Run `action()` under the resource sampler and a monotonic stopwatch.

    Action failures propagate unchanged. Sampler failures never break the
    measurement: the result then carries resources=None and an explanatory
    note. The sampler is joined before the summary is computed, so no sample
    is lost.
    """
    if interval_ms < 10:
        raise ValueError("interval_ms must be at least 10")
    notes: list[str] = []
    sampler = None
    try:
        sampler = _Sampler(interval_ms / 1000.0)
        sampler.prime()
        sampler.start()
    except Exception:
        sampler = None

    watch = Stopwatch()
    try:
        value = action()
    finally:
        elapsed = watch.elapsed_s()
        if sampler is not None:
            sampler.finish()

    if sampler is None or sampler.failure is not None or not sampler.samples:
        notes.append("resources unavailable: sampler failed; time-only measurement")
        return ProbeResult(value=value, resources=None, elapsed_s=elapsed, notes=tuple(notes))

    summary = summarize_samples(sampler.samples)
    if summary.gpu_mb_peak is None:
        notes.append("gpu memory not exposed on this platform; gpu_mb_peak absent")
    return ProbeResult(value=value, resources=summary, elapsed_s=elapsed, notes=tuple(notes))
