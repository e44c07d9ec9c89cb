"""
Metrics collection utilities for measuring sampler cost and mixing.
Optional helper used by the fit orchestrator to record per-chain timings
and Metropolis acceptance rates.
"""

from dataclasses import dataclass, field
from typing import Dict, List
import time
from loguru import logger


@dataclass
class ChainMetrics:
    """Holds timing and acceptance information for one chain or mark fit."""
    model: str
    chain: int
    iterations: int
    wall_time: float
    acceptance: Dict[str, float] = field(default_factory=dict)
    kernel_proposals_accepted: int = 0
    timestamp: float = field(default_factory=time.time)

    @property
    def seconds_per_iteration(self) -> float:
        return self.wall_time / self.iterations if self.iterations else 0.0


class MetricsCollector:
    """Collects per-chain metrics across a fit."""

    def __init__(self):
        self.chain_metrics: List[ChainMetrics] = []

    def record_chain(self, metrics: ChainMetrics):
        """Store metrics for a single chain."""
        self.chain_metrics.append(metrics)
        rates = ", ".join(f"{k}: {v:.2f}" for k, v in sorted(metrics.acceptance.items()))
        logger.debug(
            f"📈 Metrics recorded - {metrics.model} chain {metrics.chain}: "
            f"{metrics.iterations} its in {metrics.wall_time:.2f}s"
            + (f", acceptance {rates}" if rates else "")
        )

    def get_average_acceptance(self) -> Dict[str, float]:
        """Average each acceptance rate over the chains that report it."""
        totals: Dict[str, List[float]] = {}
        for m in self.chain_metrics:
            for name, rate in m.acceptance.items():
                totals.setdefault(name, []).append(rate)
        return {name: sum(v) / len(v) for name, v in totals.items()}

    def total_wall_time(self) -> float:
        return sum(m.wall_time for m in self.chain_metrics)

    def generate_report(self) -> str:
        """Create a human-readable summary report."""
        lines = ["Sampler Metrics"]
        for name, rate in sorted(self.get_average_acceptance().items()):
            lines.append(f"- {name} acceptance avg: {rate:.2f}")
        lines.append(f"- Total wall time: {self.total_wall_time():.2f}s")
        lines.append(f"- Chains counted: {len(self.chain_metrics)}")
        return "\n".join(lines)

    def reset(self):
        """Clear all recorded metrics."""
        self.chain_metrics = []
        logger.debug("📊 MetricsCollector reset")
