"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or when QCREG_PURE is set.
Both backends share exact semantics; see tests/test_kernels.py.
"""
from __future__ import annotations

import numpy as np


def locate_kernel(uv, faces, cell_ptr, cell_faces, nx, ny, x0, y0, inv_dx, inv_dy,
                  queries, tol):
    """Locate `queries` in a triangulation using a prebuilt uniform cell index.

    Returns (face_idx int64[Q] with -1 for misses, bary float64[Q, 3]).
    Among containing faces the smallest face index wins (candidate lists are
    stored in ascending order).
    """
    q = np.asarray(queries, dtype=np.float64)
    nq = q.shape[0]
    idx = np.full(nq, -1, dtype=np.int64)
    bary = np.zeros((nq, 3), dtype=np.float64)

    ix = np.clip(((q[:, 0] - x0) * inv_dx).astype(np.int64), 0, nx - 1)
    iy = np.clip(((q[:, 1] - y0) * inv_dy).astype(np.int64), 0, ny - 1)
    cell = ix * ny + iy

    order = np.argsort(cell, kind="stable")
    tri = uv[faces]  # (F, 3, 2)

    pos = 0
    while pos < nq:
        c = cell[order[pos]]
        end = pos
        while end < nq and cell[order[end]] == c:
            end += 1
        sel = order[pos:end]
        cand = cell_faces[cell_ptr[c]:cell_ptr[c + 1]]
        pos = end
        if cand.size == 0:
            continue
        p = q[sel]  # (m, 2)
        t = tri[cand]  # (k, 3, 2)
        # Signed sub-areas of (p, corner pairs) against each candidate face.
        ax = t[None, :, :, 0] - p[:, None, None, 0]  # (m, k, 3)
        ay = t[None, :, :, 1] - p[:, None, None, 1]
        # w0 ~ cross(v1-p, v2-p), cyclic.
        w = ax[:, :, [1, 2, 0]] * ay[:, :, [2, 0, 1]] - ax[:, :, [2, 0, 1]] * ay[:, :, [1, 2, 0]]
        denom = w.sum(axis=2)
        ok_denom = np.abs(denom) > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            wn = np.where(ok_denom[:, :, None], w / np.where(ok_denom, denom, 1.0)[:, :, None], -1.0)
        inside = (wn >= -tol).all(axis=2) & ok_denom
        has = inside.any(axis=1)
        first = np.argmax(inside, axis=1)
        hit = sel[has]
        idx[hit] = cand[first[has]]
        bhit = wn[np.arange(len(sel)), first][has]
        bhit = np.clip(bhit, 0.0, None)
        bary[hit] = bhit / bhit.sum(axis=1, keepdims=True)
    return idx, bary


def lbs_local_values(g, h, area, alpha):
    """Per-face 3x3 local stiffness entries of the Beltrami operator.

    g, h: (F, 3) chart coordinates per corner; area: (F,); alpha: (F, 3).
    Returns (F, 9) entries ordered row-major over corner pairs
    (0,0),(0,1),(0,2),(1,0),...,(2,2).
    """
    inv2a = 1.0 / (2.0 * area)
    # Hat-function gradients: A_i = (h_j - h_k)/(2 area), B_i = (g_k - g_j)/(2 area).
    A = (h[:, [1, 2, 0]] - h[:, [2, 0, 1]]) * inv2a[:, None]
    B = (g[:, [2, 0, 1]] - g[:, [1, 2, 0]]) * inv2a[:, None]
    a1 = alpha[:, 0][:, None, None]
    a2 = alpha[:, 1][:, None, None]
    a3 = alpha[:, 2][:, None, None]
    Ai = A[:, :, None]
    Am = A[:, None, :]
    Bi = B[:, :, None]
    Bm = B[:, None, :]
    local = a1 * Ai * Am + a2 * (Ai * Bm + Am * Bi) + a3 * Bi * Bm
    local *= area[:, None, None]
    return local.reshape(-1, 9)
