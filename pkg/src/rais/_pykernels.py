"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``.

Arithmetic order matches the compiled versions so both backends make the same
choices, including on near-ties.
"""

import numpy as np


def reservoir_fill(slots, seen, uniforms, first_id=-1):
    """Algorithm R over ``len(uniforms)`` new items, updating ``slots`` in place.

    Item number ``count`` (1-based over the whole stream) fills an empty slot
    while the reservoir is not full; afterwards it replaces slot
    ``floor(u * count)`` when that index is below capacity. Returns the new
    seen-count.
    """
    if first_id < 0:
        first_id = seen
    cap = len(slots)
    for i, u in enumerate(uniforms.tolist()):
        count = seen + i + 1
        if count <= cap:
            slots[count - 1] = first_id + i
        else:
            j = int(u * count)
            if j < cap:
                slots[j] = first_id + i
    return seen + len(uniforms)


def reservoir_trials(capacity, uniforms):
    out = np.full((uniforms.shape[0], capacity), -1, dtype=np.int64)
    for t in range(uniforms.shape[0]):
        reservoir_fill(out[t], 0, uniforms[t], 0)
    return out


def herding_order(z, m):
    """Greedy mean matching: step k picks the unused row whose addition keeps
    the running mean of picks closest to the mean of all rows."""
    n, d = z.shape
    m = min(m, n)
    mu = np.zeros(d)
    for i in range(n):
        mu += z[i]
    mu /= n
    acc = np.zeros(d)
    taken = np.zeros(n, dtype=bool)
    order = np.empty(m, dtype=np.int64)
    for step in range(m):
        target = mu * (step + 1) - acc
        dist = np.zeros(n)
        for k in range(d):
            diff = target[k] - z[:, k]
            dist += diff * diff
        dist[taken] = np.inf
        best = int(np.argmin(dist))
        order[step] = best
        taken[best] = True
        acc += z[best]
    return order
