import os
import time
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, Iterator, List
import logging

import psutil


@dataclass
class RunMetrics:
    """Resource usage of one measured block of work."""
    label: str
    wall_time: float
    cpu_time: float
    rss_mb: float
    timestamp: datetime

    def to_dict(self) -> dict:
        return {
            'label': self.label,
            'wall_time_s': self.wall_time,
            'cpu_time_s': self.cpu_time,
            'rss_mb': self.rss_mb,
            'timestamp': self.timestamp.isoformat()
        }


class MetricsCollector:
    """Collects wall/CPU time and resident memory for labelled runs."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self._process = psutil.Process(os.getpid())
        self.records: List[RunMetrics] = []

    @contextmanager
    def measure(self, label: str) -> Iterator[Dict[str, float]]:
        """
        Time the enclosed block. The yielded dict receives 'elapsed' when the
        block exits, so callers can read it after the with statement.
        """
        box: Dict[str, float] = {}
        start_wall = time.perf_counter()
        start_cpu = self._cpu_seconds()
        try:
            yield box
        finally:
            try:
                record = RunMetrics(
                    label=label,
                    wall_time=time.perf_counter() - start_wall,
                    cpu_time=self._cpu_seconds() - start_cpu,
                    rss_mb=self._process.memory_info().rss / 2 ** 20,
                    timestamp=datetime.now(timezone.utc)
                )
            except psutil.Error as e:
                self.logger.error(f"Metrics collection failed: {str(e)}")
                raise
            box['elapsed'] = record.wall_time
            self.records.append(record)
            self.logger.debug(
                f"{label}: {record.wall_time:.3f}s wall, {record.cpu_time:.3f}s cpu, "
                f"{record.rss_mb:.1f} MiB resident"
            )

    def _cpu_seconds(self) -> float:
        times = self._process.cpu_times()
        return times.user + times.system

    def summary(self) -> List[dict]:
        return [r.to_dict() for r in self.records]
