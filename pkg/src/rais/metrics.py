"""Equal error rate, average EER and forgetting rate.

Detection score is the bona fide probability. A sample is accepted as bona
fide at threshold ``t`` when ``score >= t``, so

* FAR(t) = share of fake samples with score >= t
* FRR(t) = share of bona fide samples with score < t
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class UndefinedMetricError(ValueError):
    """EER needs at least one sample of each class."""


def far_frr_curve(scores, labels):
    """FAR/FRR at every distinct score plus a final threshold above all scores.

    Returns ``(thresholds, far, frr)``; the last threshold is ``inf``.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    fake = np.sort(scores[labels == 0])
    bona = np.sort(scores[labels == 1])
    if len(fake) == 0 or len(bona) == 0:
        raise UndefinedMetricError("EER requires both fake and bona fide samples")
    thr = np.append(np.unique(scores), np.inf)
    far = (len(fake) - np.searchsorted(fake, thr, side="left")) / len(fake)
    frr = np.searchsorted(bona, thr, side="left") / len(bona)
    return thr, far, frr


def compute_eer(scores, labels) -> float:
    """EER as a fraction, linearly interpolated at the FAR = FRR crossing.

    FAR - FRR is non-increasing along the threshold sweep, starts at 1 and
    ends at -1. The crossing is located between the last sweep point with a
    non-negative difference and the next one.
    """
    _, far, frr = far_frr_curve(scores, labels)
    d = far - frr
    k = int(np.nonzero(d >= 0)[0][-1])
    if d[k] == 0.0:
        return float(far[k])
    alpha = d[k] / (d[k] - d[k + 1])
    return float(far[k] + alpha * (far[k + 1] - far[k]))


def average_eer(eers: Sequence[float]) -> float:
    eers = list(eers)
    if not eers:
        raise ValueError("average of an empty EER list")
    return float(np.mean(eers))


def forgetting_rate(eer_after_both: float, eer_after_first: float) -> float:
    """EER on the earlier experience after learning the later one, minus the
    EER right after learning the earlier one. Negative means backward transfer."""
    return float(eer_after_both) - float(eer_after_first)
