"""ASR / MSD aggregation."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateNormalizationError, NoEligibleSamplesError


def eligible_indices(m, series):
    """Indices of series the model classifies correctly before any attack."""
    if not series:
        return []
    X = np.stack([ts.values for ts in series])
    y = np.array([ts.label for ts in series])
    return [int(i) for i in np.flatnonzero(m.predict_batch(X) == y)]


def asr(results):
    results = list(results)
    if not results:
        raise NoEligibleSamplesError("ASR needs at least one attacked sample")
    return sum(1 for r in results if r.success) / len(results)


def msd(results):
    """Mean L2 distance over successful attacks, or ``None`` when nothing succeeded."""
    results = list(results)
    if not results:
        raise NoEligibleSamplesError("MSD needs at least one attacked sample")
    distances = [r.l2_distance for r in results if r.success]
    if not distances:
        return None
    return float(np.mean(distances))


def relative_asr(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DegenerateNormalizationError("relative ASR of an empty list")
    top = values.max()
    if not top > 0:
        raise DegenerateNormalizationError("relative ASR undefined when every ASR is 0")
    return [float(v) for v in values / top]


@dataclass
class Report:
    results: list
    eligible: int
    config: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def successes(self):
        return sum(1 for r in self.results if r.success)

    @property
    def asr(self):
        return asr(self.results) if self.eligible else None

    @property
    def msd(self):
        return msd(self.results) if self.eligible else None
