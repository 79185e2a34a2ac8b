"""NumPy amplitude-update kernels (fallback backend).

All kernels mutate the amplitude vector in place. Bit positions are counted
from the least-significant bit of the basis index; the engine converts qubit
labels (qubit 0 = most significant) before calling. Control conditions are a
(mask, value) pair over the raw index. The ``threads`` argument is accepted
for interface parity with the compiled backend and ignored: NumPy dispatch is
already vectorised and single-configuration deterministic.
"""

from __future__ import annotations

import numpy as np

backend_name = "python"


def _masked_indices(n: int, mask: int, value: int) -> np.ndarray:
    """All n-bit indices i with (i & mask) == value, ascending."""
    free = [p for p in range(n) if not (mask >> p) & 1]
    count = 1 << len(free)
    idx = np.full(count, value, dtype=np.intp)
    j = np.arange(count, dtype=np.intp)
    for t, p in enumerate(free):
        idx |= ((j >> t) & 1) << p
    return idx


def apply_1q(vec, n, p, u00, u01, u10, u11, cmask, cval, threads=1):
    if cmask == 0:
        view = vec.reshape(-1, 2, 1 << p)
        a0 = view[:, 0, :].copy()
        a1 = view[:, 1, :]
        view[:, 0, :] = u00 * a0 + u01 * a1
        view[:, 1, :] = u10 * a0 + u11 * a1
        return
    idx = _masked_indices(n, cmask | (1 << p), cval)
    par = idx | (1 << p)
    a0 = vec[idx]
    a1 = vec[par]
    vec[idx] = u00 * a0 + u01 * a1
    vec[par] = u10 * a0 + u11 * a1


def apply_phase(vec, n, p, factor, cmask, cval, threads=1):
    if cmask == 0:
        view = vec.reshape(-1, 2, 1 << p)
        view[:, 1, :] *= factor
        return
    idx = _masked_indices(n, cmask | (1 << p), cval | (1 << p))
    vec[idx] *= factor


def apply_swap(vec, n, p1, p2, cmask, cval, threads=1):
    # Swap amplitudes between (bit p1 = 1, bit p2 = 0) and its mirror.
    hi, lo = max(p1, p2), min(p1, p2)
    m = cmask | (1 << hi) | (1 << lo)
    idx = _masked_indices(n, m, cval | (1 << hi))
    par = idx ^ (1 << hi) ^ (1 << lo)
    tmp = vec[idx].copy()
    vec[idx] = vec[par]
    vec[par] = tmp


def apply_diag(vec, n, plo, nq, entries, cmask, cval, threads=1):
    if cmask == 0:
        view = vec.reshape(-1, 1 << nq, 1 << plo)
        view *= entries[None, :, None]
        return
    idx = _masked_indices(n, cmask, cval)
    key = (idx >> plo) & ((1 << nq) - 1)
    vec[idx] *= entries[key]


def apply_block(vec, n, plo, nq, matrix, cmask, cval, threads=1):
    dim = 1 << nq
    if cmask == 0:
        view = vec.reshape(-1, dim, 1 << plo)
        view[:] = np.einsum("ab,hbl->hal", matrix, view)
        return
    block_mask = (dim - 1) << plo
    base = _masked_indices(n, cmask | block_mask, cval)
    gather = base[:, None] | (np.arange(dim, dtype=np.intp) << plo)[None, :]
    vec[gather] = vec[gather] @ matrix.T


def apply_keyed_ry(vec, n, pt, klo, knq, cosv, sinv, cmask, cval, threads=1):
    """Ry on target bit pt with angle selected by the key-bit block value."""
    idx = _masked_indices(n, cmask | (1 << pt), cval)
    par = idx | (1 << pt)
    key = (idx >> klo) & ((1 << knq) - 1)
    c = cosv[key]
    s = sinv[key]
    a0 = vec[idx]
    a1 = vec[par]
    vec[idx] = c * a0 - s * a1
    vec[par] = s * a0 + c * a1
