import time
import threading
from dataclasses import dataclass, field
from typing import List, Dict, Any


@dataclass
class StudyMetrics:
    levels_run: int = 0
    success_count: int = 0
    failure_count: int = 0
    total_dofs: int = 0
    details: List[str] = field(default_factory=list)
    start_time: float = 0.0
    end_time: float = 0.0
    errors: List[str] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)
    # Per-level outcomes: n -> {status, dofs, seconds, residual}
    level_outcomes: Dict[int, Dict[str, Any]] = field(default_factory=dict)


class StudyTracker:
    """
    Tracks one convergence study: timings and solver residuals per level,
    failures, and the files written. Feeds the JSON run summary.
    """
    def __init__(self):
        self.metrics = StudyMetrics()
        self.label = "Unknown"
        self.custom_results = {}
        self._lock = threading.Lock()

    def start(self, label: str = "Unknown"):
        self.label = label
        self.metrics = StudyMetrics(start_time=time.time())
        self.custom_results = {}

    def set_result(self, key: str, value):
        """Sets a custom result field for the summary (e.g. an inf-sup estimate)."""
        with self._lock:
            self.custom_results[key] = value

    def log_level(self, n: int, dofs: int, seconds: float, residual: float):
        with self._lock:
            self.metrics.levels_run += 1
            self.metrics.success_count += 1
            self.metrics.total_dofs += dofs
            self.metrics.details.append(
                f"✅ n={n}: {dofs} dofs, {seconds:.2f}s, residual {residual:.2e}"
            )
            self.metrics.level_outcomes[n] = {
                'status': 'success',
                'dofs': dofs,
                'seconds': round(seconds, 3),
                'residual': residual,
            }

    def log_error(self, n: int, error: str):
        with self._lock:
            self.metrics.levels_run += 1
            self.metrics.failure_count += 1
            self.metrics.errors.append(f"❌ n={n}: {error}")
            self.metrics.details.append(f"❌ n={n}: {error}")
            self.metrics.level_outcomes[n] = {'status': 'failed', 'error': error}

    def register_artifact(self, name: str, path: str):
        with self._lock:
            self.metrics.artifacts[name] = path

    def finish(self):
        self.metrics.end_time = time.time()

    def get_summary(self) -> dict:
        duration = self.metrics.end_time - self.metrics.start_time
        return {
            "label": self.label,
            "levels_run": self.metrics.levels_run,
            "failures": self.metrics.failure_count,
            "total_dofs": self.metrics.total_dofs,
            "duration": f"{duration:.1f}s",
            "levels": {str(k): v for k, v in self.metrics.level_outcomes.items()},
            "details": self.metrics.details,
            "errors": self.metrics.errors,
            "artifacts": dict(self.metrics.artifacts),
            "results": dict(self.custom_results),
        }
