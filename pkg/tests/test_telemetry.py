import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmf import telemetry
from rmf.telemetry import ResourceSample, StepLedgerTotals, ledger_total, summarize_samples


class TestLedger:
    def test_reference_totals(self):
        assert ledger_total(StepLedgerTotals(10, 6, 5)) == 21

    def test_zero(self):
        assert ledger_total(StepLedgerTotals(0, 0, 0)) == 0

    def test_small(self):
        assert ledger_total(StepLedgerTotals(4, 3, 2)) == 9

    @given(st.integers(0, 100), st.integers(0, 100), st.integers(0, 100))
    def test_permutation_invariance(self, k, g, s):
        import itertools
        sums = {ledger_total(StepLedgerTotals(*p)) for p in itertools.permutations((k, g, s))}
        assert sums == {k + g + s}

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            StepLedgerTotals(-1, 0, 0)


class TestSummarize:
    def test_peak_at_least_mean(self):
        samples = [
            ResourceSample(t_offset_s=0.0, cpu_percent=10.0, rss_mb=100.0),
            ResourceSample(t_offset_s=0.1, cpu_percent=90.0, rss_mb=250.0),
            ResourceSample(t_offset_s=0.2, cpu_percent=50.0, rss_mb=180.0),
        ]
        summary = summarize_samples(samples)
        assert summary.cpu_percent_mean == pytest.approx(50.0)
        assert summary.rss_mb_peak == 250.0
        assert summary.rss_mb_peak >= max(s.rss_mb for s in samples[:1])
        assert summary.gpu_mb_peak is None
        assert summary.sample_count == 3

    def test_empty_stream_rejected(self):
        with pytest.raises(ValueError):
            summarize_samples([])


class TestProbe:
    def test_sleep_timing_and_sample_count(self):
        result = telemetry.probe_run(lambda: time.sleep(0.5), interval_ms=100)
        assert 0.5 <= result.elapsed_s <= 0.75
        assert result.resources is not None
        assert result.resources.sample_count >= 4

    def test_noop_action(self):
        result = telemetry.probe_run(lambda: 42, interval_ms=100)
        assert result.value == 42
        assert result.elapsed_s >= 0.0
        assert result.resources is not None
        assert result.resources.sample_count >= 1

    def test_allocation_raises_peak_rss(self):
        import psutil
        baseline_mb = psutil.Process().memory_info().rss / 2**20

        def allocate():
            block = np.ones(100 * 2**20 // 8)  # 100 MB of float64
            time.sleep(0.4)  # hold it across several sampler ticks
            return float(block[0])

        result = telemetry.probe_run(allocate, interval_ms=50)
        assert result.resources is not None
        assert result.resources.rss_mb_peak >= baseline_mb + 100.0

    def test_action_failure_propagates(self):
        def boom():
            raise RuntimeError("action exploded")

        with pytest.raises(RuntimeError, match="action exploded"):
            telemetry.probe_run(boom, interval_ms=100)

    def test_interval_too_small_rejected(self):
        with pytest.raises(ValueError, match="interval_ms"):
            telemetry.probe_run(lambda: None, interval_ms=5)

    def test_sample_offsets_non_decreasing(self):
        sampler = telemetry._Sampler(0.02)
        sampler.prime()
        sampler.start()
        time.sleep(0.15)
        sampler.finish()
        offsets = [s.t_offset_s for s in sampler.samples]
        assert offsets == sorted(offsets)
        assert len(offsets) >= 2

    def test_gpu_absent_on_this_platform(self):
        result = telemetry.probe_run(lambda: None, interval_ms=100)
        if result.resources is not None and result.resources.gpu_mb_peak is None:
            assert any("gpu" in note for note in result.notes)

    def test_sampler_failure_degrades_to_time_only(self, monkeypatch):
        def broken(self):
            raise OSError("process table gone")

        monkeypatch.setattr(telemetry._Sampler, "_take_sample", broken)
        result = telemetry.probe_run(lambda: time.sleep(0.05), interval_ms=10)
        assert result.resources is None
        assert result.elapsed_s >= 0.05
        assert any("resources unavailable" in note for note in result.notes)


class TestStopwatch:
    def test_elapsed_non_negative_and_growing(self):
        watch = telemetry.Stopwatch()
        first = watch.elapsed_s()
        time.sleep(0.01)
        second = watch.elapsed_s()
        assert 0.0 <= first <= second
