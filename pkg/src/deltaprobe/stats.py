"""Summary statistics over probe samples: trimmed delay bounds, jitter, loss.

Pure functions, no I/O. Lost samples are excluded from delay statistics but
count in the loss-rate denominator. Percentiles are nearest-rank order
statistics (no interpolation) so outputs are bit-comparable across runs.
Jitter is the mean absolute difference of consecutive delays, taken over the
samples in the order given (send order).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import InsufficientSamples, NoSamples
from .probe import ProbeSample

TRIM_FRACTION = 0.025


@dataclass(frozen=True)
class DelaySummary:
    """Trimmed delay statistics; delay fields are None when every sample
    was lost."""

    n_total: int
    n_lost: int
    mean_s: Optional[float]
    lower_2_5_s: Optional[float]
    upper_97_5_s: Optional[float]
    jitter_s: Optional[float]
    loss_rate: float


def _delays(samples: Sequence[ProbeSample]) -> list[float]:
    return [s.rtt_s for s in samples if not s.lost]


def _mean_abs_consecutive_diff(delays: Sequence[float]) -> float:
    if len(delays) < 2:
        return 0.0
    total = sum(abs(delays[i + 1] - delays[i]) for i in range(len(delays) - 1))
    return total / (len(delays) - 1)


def summarize(samples: Sequence[ProbeSample]) -> DelaySummary:
    """Mean, 2.5%/97.5% nearest-rank bounds, jitter, and loss rate.

    Bounds cut the first and last 2.5% of the sorted non-lost delays:
    lower = sorted[floor(0.025*m)], upper = sorted[m-1-floor(0.025*m)].
    """
    if not samples:
        raise NoSamples("no samples to summarize")
    n_total = len(samples)
    delays = _delays(samples)
    n_lost = n_total - len(delays)
    if not delays:
        return DelaySummary(
            n_total=n_total, n_lost=n_lost,
            mean_s=None, lower_2_5_s=None, upper_97_5_s=None, jitter_s=None,
            loss_rate=1.0,
        )
    m = len(delays)
    ordered = sorted(delays)
    k = int(TRIM_FRACTION * m)
    return DelaySummary(
        n_total=n_total,
        n_lost=n_lost,
        mean_s=sum(delays) / m,
        lower_2_5_s=ordered[k],
        upper_97_5_s=ordered[m - 1 - k],
        jitter_s=_mean_abs_consecutive_diff(delays),
        loss_rate=n_lost / n_total,
    )


def jitter_series(
    samples: Sequence[ProbeSample], window: int
) -> list[tuple[int, float]]:
    """Sliding-window jitter over the non-lost samples in send order.

    Each entry is (sent_at_us of the window's last sample, jitter within the
    window). Raises InsufficientSamples when fewer than `window` non-lost
    samples exist.
    """
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    alive = [s for s in samples if not s.lost]
    if len(alive) < window:
        raise InsufficientSamples(
            f"need >= {window} non-lost samples, got {len(alive)}"
        )
    series = []
    for end in range(window, len(alive) + 1):
        chunk = alive[end - window:end]
        jitter = _mean_abs_consecutive_diff([s.rtt_s for s in chunk])
        series.append((chunk[-1].sent_at_us, jitter))
    return series
