"""Small shared helpers."""

from __future__ import annotations

import os

import numpy as np


def thread_count() -> int:
    """Worker cap from DIVEXP_THREADS (0 or unset = automatic)."""
    raw = os.environ.get("DIVEXP_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


def spectral_norm(mat: np.ndarray, tol: float = 1e-6, max_iter: int = 500) -> float:
    """Largest singular value by power iteration on M^H M.

    Iterating the squared matrix avoids the sign oscillation of plain power
    iteration on Hermitian matrices with a symmetric +/- spectrum.
    """
    m = np.asarray(mat, dtype=complex)
    if m.size == 0 or not np.any(m):
        return 0.0
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(m.shape[1]) + 1j * rng.standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    mh = m.conj().T
    for _ in range(max_iter):
        w = mh @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        w /= nw
        lam_new = float(np.sqrt(abs(np.vdot(w, mh @ (m @ w)).real)))
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            return lam_new
        lam = lam_new
        v = w
    return lam
