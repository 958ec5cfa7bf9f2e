"""Pure-numpy exact-greedy split scan (fallback when the extension is absent).

Both backends implement the same contract and the same arithmetic order:
per feature, member rows are visited in ascending value order (stable
pre-sort), left sums are accumulated sequentially, and the candidate
threshold between two distinct neighbors is their midpoint. The best split
maximizes

    gain = 1/2 * (GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)) - gamma

with both children keeping hessian mass >= min_child_weight; ties go to the
lower feature index, then the lower threshold. Returns None when no
candidate has positive gain.

All features are scanned as one 2-D batch. np.cumsum along a row performs
the same sequential additions as the compiled kernel's accumulator, and the
gain expression is evaluated elementwise with the same operation order, so
results stay bit-identical across backends.
"""

from __future__ import annotations

import numpy as np


def scan_best_split(
    values: np.ndarray,
    gradients: np.ndarray,
    hessians: np.ndarray,
    sorted_order: np.ndarray,
    member_mask: np.ndarray,
    lambda_l2: float,
    gamma: float,
    min_child_weight: float,
):
    """Best (feature_index, threshold, gain) over one node, or None.

    `sorted_order[j]` holds all row indices sorted by feature j (stable);
    `member_mask` selects the node's rows.
    """
    n_features = values.shape[1]
    mask = member_mask.astype(bool, copy=False)
    n_sel = int(mask.sum())
    if n_sel < 2:
        return None

    orders = np.asarray(sorted_order)
    keep = mask[orders]  # (features, rows); every row keeps exactly n_sel
    sel = orders[keep].reshape(n_features, n_sel)
    v = np.take_along_axis(values.T, sel, axis=1)
    cg = np.cumsum(gradients[sel], axis=1)
    ch = np.cumsum(hessians[sel], axis=1)

    g_total = cg[:, -1]
    h_total = ch[:, -1]
    gl, hl = cg[:, :-1], ch[:, :-1]
    gr = g_total[:, None] - gl
    hr = h_total[:, None] - hl
    thr = (v[:, :-1] + v[:, 1:]) / 2.0

    valid = (v[:, :-1] < v[:, 1:]) & (thr > v[:, :-1])
    valid &= (hl >= min_child_weight) & (hr >= min_child_weight)
    valid &= (hl + lambda_l2 > 0.0) & (hr + lambda_l2 > 0.0)
    valid &= (h_total + lambda_l2 > 0.0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        parent = g_total * g_total / (h_total + lambda_l2)
        gain = (
            0.5 * (gl * gl / (hl + lambda_l2) + gr * gr / (hr + lambda_l2)
                   - parent[:, None])
            - gamma
        )
    gain = np.where(valid, gain, -np.inf)

    k = np.argmax(gain, axis=1)  # first max per feature: lowest threshold
    per_feature = gain[np.arange(n_features), k]
    j = int(np.argmax(per_feature))  # first max overall: lowest feature
    if not per_feature[j] > 0.0:
        return None
    return j, float(thr[j, k[j]]), float(per_feature[j])
