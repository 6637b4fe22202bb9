# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Must stay bit-identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef Py_ssize_t _fill(cnp.int64_t[::1] slots, Py_ssize_t seen,
                      const double[::1] uniforms, cnp.int64_t first_id):
    cdef Py_ssize_t cap = slots.shape[0]
    cdef Py_ssize_t i, j, count
    for i in range(uniforms.shape[0]):
        count = seen + i + 1
        if count <= cap:
            slots[count - 1] = first_id + i
        else:
            j = <Py_ssize_t>(uniforms[i] * count)
            if j < cap:
                slots[j] = first_id + i
    return seen + uniforms.shape[0]


def reservoir_fill(cnp.int64_t[::1] slots, Py_ssize_t seen, const double[::1] uniforms,
                   cnp.int64_t first_id=-1):
    if first_id < 0:
        first_id = seen
    return _fill(slots, seen, uniforms, first_id)


def reservoir_trials(Py_ssize_t capacity, const double[:, ::1] uniforms):
    cdef Py_ssize_t t
    cdef Py_ssize_t trials = uniforms.shape[0]
    out = np.full((trials, capacity), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] view = out
    for t in range(trials):
        _fill(view[t], 0, uniforms[t], 0)
    return out


def herding_order(const double[:, ::1] z, Py_ssize_t m):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t d = z.shape[1]
    cdef Py_ssize_t i, k, step, best
    cdef double dist, diff, best_dist
    if m > n:
        m = n
    out = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] order = out
    mu_arr = np.zeros(d)
    acc_arr = np.zeros(d)
    target_arr = np.zeros(d)
    cdef double[::1] mu = mu_arr
    cdef double[::1] acc = acc_arr
    cdef double[::1] target = target_arr
    taken_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] taken = taken_arr
    for i in range(n):
        for k in range(d):
            mu[k] += z[i, k]
    for k in range(d):
        mu[k] /= n
    for step in range(m):
        for k in range(d):
            target[k] = mu[k] * (step + 1) - acc[k]
        best = -1
        best_dist = 0.0
        for i in range(n):
            if taken[i]:
                continue
            dist = 0.0
            for k in range(d):
                diff = target[k] - z[i, k]
                dist += diff * diff
            if best < 0 or dist < best_dist:
                best = i
                best_dist = dist
        order[step] = best
        taken[best] = 1
        for k in range(d):
            acc[k] += z[best, k]
    return out
