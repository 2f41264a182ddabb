"""Pure numpy implementation of the exact-detector enumeration kernel.

Computes, for each received symbol, the posterior-mean (soft) bit estimates
of the individually optimal detector by enumerating all 2^K bit vectors.
Hypotheses are processed in blocks with an online log-sum-exp reduction, so
memory stays bounded for K past the fully vectorized range. The compiled
kernel in ``_core`` produces identical results and is preferred for large K.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

# Block sizes keeping the working set around tens of MB.
_MAX_HYP_BLOCK = 1 << 16
_TARGET_CELLS = 4_000_000


def _sign_block(start: int, stop: int, n_users: int) -> np.ndarray:
    """Bit patterns of integers [start, stop) as a (stop-start, K) +/-1 matrix."""
    idx = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(n_users, dtype=np.int64)[None, :]) & 1
    return (2.0 * bits - 1.0).astype(np.float64)


def io_soft_outputs(corr: np.ndarray, quad: np.ndarray) -> np.ndarray:
    """Soft outputs of the exact posterior-mean detector.

    Parameters
    ----------
    corr : np.ndarray, shape (T, K)
        Per-symbol correlator outputs, already scaled so the log weight of
        bit vector b at symbol t is ``b @ corr[t] - b @ quad @ b``.
    quad : np.ndarray, shape (K, K)
        Scaled Gram matrix of the code waveforms (symmetric).

    Returns
    -------
    np.ndarray, shape (T, K)
        Posterior means of each bit, in [-1, 1].
    """
    corr = np.ascontiguousarray(corr, dtype=np.float64)
    quad = np.ascontiguousarray(quad, dtype=np.float64)
    if corr.ndim != 2:
        raise ValueError("corr must have shape (T, K)")
    n_sym, n_users = corr.shape
    if quad.shape != (n_users, n_users):
        raise ValueError("quad must have shape (K, K)")
    if n_users > 62:
        raise ValueError("enumeration kernel supports at most 62 users")
    n_hyp = 1 << n_users

    hyp_block = min(n_hyp, _MAX_HYP_BLOCK)
    sym_block = max(1, min(n_sym, _TARGET_CELLS // hyp_block))

    soft = np.empty((n_sym, n_users), dtype=np.float64)
    blocks = []
    for start in range(0, n_hyp, hyp_block):
        signs = _sign_block(start, min(start + hyp_block, n_hyp), n_users)
        quad_energy = np.einsum("mi,ij,mj->m", signs, quad, signs)
        blocks.append((signs, quad_energy))

    for t0 in range(0, n_sym, sym_block):
        t1 = min(t0 + sym_block, n_sym)
        c = corr[t0:t1]
        running_max = np.full(t1 - t0, -np.inf)
        tot = np.zeros(t1 - t0)
        num = np.zeros((t1 - t0, n_users))
        for signs, quad_energy in blocks:
            log_w = c @ signs.T - quad_energy[None, :]
            block_max = log_w.max(axis=1)
            new_max = np.maximum(running_max, block_max)
            rescale = np.exp(running_max - new_max)
            tot *= rescale
            num *= rescale[:, None]
            w = np.exp(log_w - new_max[:, None])
            tot += w.sum(axis=1)
            num += w @ signs
            running_max = new_max
        soft[t0:t1] = num / tot[:, None]
    return soft
