"""Numpy implementations of the hot inner kernels.

Same call signatures and semantics as the compiled extension
``eegentropy._kernels``; ``eegentropy.backend`` picks whichever is
available.  Kernels are deliberately free of validation and error
handling: the wrappers in ``entropy`` and ``svc`` own the contracts.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "python"

# Pairwise blocks are processed in chunks of rows to bound peak memory
# (chunk * n_templates * (m+1) doubles).
_CHUNK = 256


def sampen_counts(x: np.ndarray, m: int, tol: float) -> tuple[int, int]:
    """Count template matches for sample entropy.

    Templates of length m and m+1 both start at indices 0 .. n-m-1, so
    both counts run over the same number of vectors.  A pair matches at
    length L when the Chebyshev distance is <= tol.  Returns (a, b)
    where a counts length-(m+1) matches and b length-m matches, over
    unordered pairs i < j.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    nt = x.shape[0] - m
    w = sliding_window_view(x, m + 1)  # (nt, m+1)
    a = 0
    b = 0
    col = np.arange(nt)
    for lo in range(0, nt, _CHUNK):
        hi = min(lo + _CHUNK, nt)
        d = np.abs(w[lo:hi, None, :] - w[None, :, :])
        dm = d[:, :, :m].max(axis=2)
        dm1 = np.maximum(dm, d[:, :, m])
        upper = col[None, :] > col[lo:hi, None]
        b += int(np.count_nonzero((dm <= tol) & upper))
        a += int(np.count_nonzero((dm1 <= tol) & upper))
    return a, b


def fuzzen_phis(x: np.ndarray, m: int, tol: float, r2: float) -> tuple[float, float]:
    """Mean fuzzy memberships (phi_m, phi_m1) for fuzzy entropy.

    Template vectors at both lengths start at 0 .. n-m-1 and each has
    its own mean removed before matching.  Membership of a pair is
    exp(-(d ** r2) / tol) with d the Chebyshev distance, averaged over
    ordered pairs i != j.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    nt = x.shape[0] - m
    wm1 = sliding_window_view(x, m + 1)
    cm1 = wm1 - wm1.mean(axis=1, keepdims=True)
    if m == 1:
        # Length-1 mean-removed templates are identically zero, so every
        # membership is exp(0) = 1.
        phi_m = 1.0
    else:
        wm = sliding_window_view(x, m)[:nt]
        cm = wm - wm.mean(axis=1, keepdims=True)
        phi_m = _mean_membership(cm, tol, r2)
    phi_m1 = _mean_membership(np.ascontiguousarray(cm1), tol, r2)
    return phi_m, phi_m1


def _mean_membership(v: np.ndarray, tol: float, r2: float) -> float:
    nt = v.shape[0]
    total = 0.0
    col = np.arange(nt)
    for lo in range(0, nt, _CHUNK):
        hi = min(lo + _CHUNK, nt)
        d = np.abs(v[lo:hi, None, :] - v[None, :, :]).max(axis=2)
        memb = np.exp(-(d ** r2) / tol)
        upper = col[None, :] > col[lo:hi, None]
        total += float(memb[upper].sum())
    # Ordered pairs double the unordered sum and the pair count, so the
    # mean over i != j equals the mean over i < j.
    return 2.0 * total / (nt * (nt - 1))


def cosien_count(v: np.ndarray, norms: np.ndarray, r: float) -> int:
    """Count embedding-vector pairs closer than r in angular distance.

    Angular distance of a pair is arccos of the clipped cosine
    similarity divided by pi; a pair counts when it is strictly below
    r.  Pairs run over i < j.  Callers guarantee norms > 0.
    """
    v = np.ascontiguousarray(v, dtype=np.float64)
    nt = v.shape[0]
    count = 0
    col = np.arange(nt)
    for lo in range(0, nt, _CHUNK):
        hi = min(lo + _CHUNK, nt)
        cos = (v[lo:hi] @ v.T) / np.outer(norms[lo:hi], norms)
        ang = np.arccos(np.clip(cos, -1.0, 1.0)) / np.pi
        upper = col[None, :] > col[lo:hi, None]
        count += int(np.count_nonzero((ang < r) & upper))
    return count


def smo_solve(
    kmat: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, float, float, int, bool]:
    """Solve the soft-margin dual by sequential minimal optimization.

    kmat is the full kernel Gram matrix, y holds +/-1 labels.  Repeats
    maximal-violating-pair updates until the KKT gap drops to tol.
    Returns (alpha, bias, gap, iterations, converged); converged is
    False when the iteration cap is hit or no pair makes progress.
    """
    kmat = np.ascontiguousarray(kmat, dtype=np.float64)
    y = y.astype(np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    u = np.zeros(n)  # u_i = sum_j alpha_j y_j K_ij
    it = 0
    while True:
        g = y - u
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        gi = np.where(up, g, -np.inf)
        gj = np.where(low, g, np.inf)
        i = int(np.argmax(gi))
        j = int(np.argmin(gj))
        if up.any() and low.any():
            gap = float(g[i] - g[j])
            converged = gap <= tol
        else:
            # One index set empty: every sample sits at the bound that
            # already satisfies its condition, the dual is optimal.
            gap = 0.0
            converged = True
        stepped = False
        if not converged and it < max_iter:
            stepped = _smo_step(kmat, y, alpha, u, i, j, c)
            if not stepped:
                # Blocked pair: try the next-best partners on each side
                # (any still-violating pair lowers the dual objective).
                for cand in np.argsort(gj, kind="stable"):
                    cand = int(cand)
                    if gj[cand] >= g[i]:
                        break
                    if cand != j and _smo_step(kmat, y, alpha, u, i, cand, c):
                        stepped = True
                        break
            if not stepped:
                for cand in np.argsort(-gi, kind="stable"):
                    cand = int(cand)
                    if gi[cand] <= g[j]:
                        break
                    if cand != i and _smo_step(kmat, y, alpha, u, cand, j, c):
                        stepped = True
                        break
        if not stepped:
            free = (alpha > 1e-12) & (alpha < c - 1e-12)
            if free.any():
                # Sequential sum, matching the compiled twin bit for bit.
                total = 0.0
                for v in g[free]:
                    total += float(v)
                bias = total / int(free.sum())
            elif up.any() and low.any():
                bias = float((g[i] + g[j]) / 2.0)
            else:
                bias = 0.0
            return alpha, bias, max(gap, 0.0), it, converged
        it += 1


def _smo_step(kmat, y, alpha, u, i, j, c) -> bool:
    if i == j:
        return False
    ai_old = alpha[i]
    aj_old = alpha[j]
    if y[i] != y[j]:
        lo = max(0.0, aj_old - ai_old)
        hi = min(c, c + aj_old - ai_old)
    else:
        lo = max(0.0, ai_old + aj_old - c)
        hi = min(c, ai_old + aj_old)
    if lo >= hi:
        return False
    eta = kmat[i, i] + kmat[j, j] - 2.0 * kmat[i, j]
    gi = y[i] - u[i]
    gj = y[j] - u[j]
    if eta > 1e-15:
        aj = aj_old + y[j] * (gj - gi) / eta
        aj = min(max(aj, lo), hi)
    else:
        # Flat direction: the dual objective is linear in alpha_j along
        # the constraint line with slope y_j (g_i - g_j); walk to the
        # bound that decreases it.
        slope = y[j] * (gi - gj)
        aj = lo if slope > 0 else hi
    if abs(aj - aj_old) < 1e-12:
        return False
    ai = ai_old + y[i] * y[j] * (aj_old - aj)
    # Snap float dust onto the box; a multiplier stranded 1e-16 off a
    # bound would otherwise qualify for the working set while being
    # unable to move.
    if aj < 1e-12:
        aj = 0.0
    elif aj > c - 1e-12:
        aj = c
    if ai < 1e-12:
        ai = 0.0
    elif ai > c - 1e-12:
        ai = c
    alpha[i] = ai
    alpha[j] = aj
    u += y[i] * (ai - ai_old) * kmat[i] + y[j] * (aj - aj_old) * kmat[j]
    return True
