# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Cython exact-greedy split scan.

Mirrors split_py.scan_best_split operation for operation (same visit order,
same accumulation order, same gain expression) so both backends pick
identical splits; only the loop machinery differs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def scan_best_split(
    double[:, ::1] values,
    double[::1] gradients,
    double[::1] hessians,
    cnp.int64_t[:, ::1] sorted_order,
    cnp.uint8_t[::1] member_mask,
    double lambda_l2,
    double gamma,
    double min_child_weight,
):
    """Best (feature_index, threshold, gain) over one node, or None."""
    cdef Py_ssize_t n_rows = values.shape[0]
    cdef Py_ssize_t n_features = values.shape[1]
    cdef Py_ssize_t i, j, k, n_sel
    cdef cnp.int64_t row

    n_sel = 0
    for i in range(n_rows):
        if member_mask[i]:
            n_sel += 1
    if n_sel < 2:
        return None

    cdef double[::1] v = np.empty(n_sel, dtype=np.float64)
    cdef double[::1] cg = np.empty(n_sel, dtype=np.float64)
    cdef double[::1] ch = np.empty(n_sel, dtype=np.float64)

    cdef int best_feat = -1
    cdef double best_thr = 0.0
    cdef double best_gain = 0.0
    cdef double g_total, h_total, parent
    cdef double gl, hl, gr, hr, thr, gain
    cdef double acc_g, acc_h

    for j in range(n_features):
        k = 0
        acc_g = 0.0
        acc_h = 0.0
        for i in range(n_rows):
            row = sorted_order[j, i]
            if not member_mask[row]:
                continue
            v[k] = values[row, j]
            acc_g = acc_g + gradients[row]
            acc_h = acc_h + hessians[row]
            cg[k] = acc_g
            ch[k] = acc_h
            k += 1
        g_total = cg[n_sel - 1]
        h_total = ch[n_sel - 1]
        if h_total + lambda_l2 <= 0.0:
            continue
        parent = g_total * g_total / (h_total + lambda_l2)
        for i in range(n_sel - 1):
            if not v[i] < v[i + 1]:
                continue
            thr = (v[i] + v[i + 1]) / 2.0
            if not thr > v[i]:
                continue
            gl = cg[i]
            hl = ch[i]
            gr = g_total - gl
            hr = h_total - hl
            if hl < min_child_weight or hr < min_child_weight:
                continue
            if hl + lambda_l2 <= 0.0 or hr + lambda_l2 <= 0.0:
                continue
            gain = (
                0.5 * (gl * gl / (hl + lambda_l2) + gr * gr / (hr + lambda_l2) - parent)
                - gamma
            )
            if gain > best_gain:
                best_feat = <int>j
                best_thr = thr
                best_gain = gain

    if best_feat < 0:
        return None
    return best_feat, best_thr, best_gain
