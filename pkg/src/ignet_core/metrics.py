"""
Run telemetry for training stages
"""

import time
from collections import defaultdict, deque
from datetime import datetime, timezone
from typing import Any, Dict, Optional

import psutil


class RunMetrics:
    """Collect and track per-stage training telemetry"""

    def __init__(self):
        self.start_time = datetime.now(timezone.utc)
        self.step_count: Dict[str, int] = defaultdict(int)
        self.failure_count = 0
        self.last_loss: Dict[str, float] = {}
        self.step_times = deque(maxlen=1000)
        self._started: Optional[float] = None

    def start_step(self):
        self._started = time.perf_counter()

    def record_step(self, stage: str, loss: float, success: bool = True):
        """Record a finished optimizer step"""
        if self._started is not None:
            self.step_times.append(time.perf_counter() - self._started)
            self._started = None
        self.step_count[stage] += 1
        if not success:
            self.failure_count += 1
        self.last_loss[stage] = float(loss)

    def get_metrics(self) -> Dict[str, Any]:
        """Get current metrics"""
        uptime = datetime.now(timezone.utc) - self.start_time
        avg_step_time = (
            sum(self.step_times) / len(self.step_times) if self.step_times else 0
        )
        process = psutil.Process()

        return {
            "uptime_seconds": uptime.total_seconds(),
            "steps": dict(self.step_count),
            "failures": self.failure_count,
            "last_loss": dict(self.last_loss),
            "average_step_time_ms": avg_step_time * 1000,
            "system": {
                "cpu_percent": psutil.cpu_percent(),
                "memory_percent": psutil.virtual_memory().percent,
                "process_rss_mb": process.memory_info().rss / 2**20,
            },
        }
