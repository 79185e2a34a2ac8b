# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled amplitude-update kernels.

Same contract as kernels_py: in-place updates, LSB bit positions, control
conditions as an (index mask, value) pair. Work is split into disjoint index
chunks, so results are bitwise identical for any thread count.
"""

from cython.parallel import prange
from libc.stdlib cimport free, malloc

import numpy as np

backend_name = "compiled"

ctypedef double complex cplx
ctypedef Py_ssize_t isize


cdef inline long _deposit(long ordinal, long fixed_mask, int n) noexcept nogil:
    # Scatter the low bits of `ordinal` into the positions not in fixed_mask.
    cdef long idx = 0
    cdef int pos
    for pos in range(n):
        if not (fixed_mask >> pos) & 1:
            idx |= (ordinal & 1) << pos
            ordinal >>= 1
    return idx


cdef inline long _next(long idx, long fixed_mask) noexcept nogil:
    return ((idx | fixed_mask) + 1) & ~fixed_mask


cdef inline int _popcount(long m) noexcept nogil:
    cdef int c = 0
    while m:
        m &= m - 1
        c += 1
    return c


cdef inline isize _nchunks(long count, int threads) noexcept nogil:
    cdef isize nc = threads
    if nc < 1:
        nc = 1
    if nc > count:
        nc = count if count > 0 else 1
    return nc


def apply_1q(cplx[::1] vec, int n, int p, cplx u00, cplx u01, cplx u10,
             cplx u11, long cmask, long cval, int threads=1):
    cdef long fixed = cmask | (<long>1 << p)
    cdef long count = <long>1 << (n - _popcount(fixed))
    cdef long tbit = <long>1 << p
    cdef isize nc = _nchunks(count, threads)
    cdef long per = (count + nc - 1) // nc
    cdef isize t
    cdef long o0, o1, o, idx, j
    cdef cplx a0, a1
    for t in prange(nc, nogil=True, num_threads=threads, schedule='static'):
        o0 = t * per
        o1 = o0 + per
        if o1 > count:
            o1 = count
        if o0 < o1:
            idx = _deposit(o0, fixed, n) | cval
            for o in range(o0, o1):
                j = idx | tbit
                a0 = vec[idx]
                a1 = vec[j]
                vec[idx] = u00 * a0 + u01 * a1
                vec[j] = u10 * a0 + u11 * a1
                idx = _next(idx, fixed) | cval


def apply_phase(cplx[::1] vec, int n, int p, cplx factor, long cmask,
                long cval, int threads=1):
    cdef long fixed = cmask | (<long>1 << p)
    cdef long base = cval | (<long>1 << p)
    cdef long count = <long>1 << (n - _popcount(fixed))
    cdef isize nc = _nchunks(count, threads)
    cdef long per = (count + nc - 1) // nc
    cdef isize t
    cdef long o0, o1, o, idx
    for t in prange(nc, nogil=True, num_threads=threads, schedule='static'):
        o0 = t * per
        o1 = o0 + per
        if o1 > count:
            o1 = count
        if o0 < o1:
            idx = _deposit(o0, fixed, n) | base
            for o in range(o0, o1):
                vec[idx] = vec[idx] * factor
                idx = _next(idx, fixed) | base


def apply_swap(cplx[::1] vec, int n, int p1, int p2, long cmask, long cval,
               int threads=1):
    cdef int hi = p1 if p1 > p2 else p2
    cdef int lo = p2 if p1 > p2 else p1
    cdef long fixed = cmask | (<long>1 << hi) | (<long>1 << lo)
    cdef long base = cval | (<long>1 << hi)
    cdef long flip = (<long>1 << hi) | (<long>1 << lo)
    cdef long count = <long>1 << (n - _popcount(fixed))
    cdef isize nc = _nchunks(count, threads)
    cdef long per = (count + nc - 1) // nc
    cdef isize t
    cdef long o0, o1, o, idx, j
    cdef cplx tmp
    for t in prange(nc, nogil=True, num_threads=threads, schedule='static'):
        o0 = t * per
        o1 = o0 + per
        if o1 > count:
            o1 = count
        if o0 < o1:
            idx = _deposit(o0, fixed, n) | base
            for o in range(o0, o1):
                j = idx ^ flip
                tmp = vec[idx]
                vec[idx] = vec[j]
                vec[j] = tmp
                idx = _next(idx, fixed) | base


def apply_diag(cplx[::1] vec, int n, int plo, int nq, const cplx[::1] entries,
               long cmask, long cval, int threads=1):
    cdef long fixed = cmask
    cdef long kmask = (<long>1 << nq) - 1
    cdef long count = <long>1 << (n - _popcount(fixed))
    cdef isize nc = _nchunks(count, threads)
    cdef long per = (count + nc - 1) // nc
    cdef isize t
    cdef long o0, o1, o, idx
    for t in prange(nc, nogil=True, num_threads=threads, schedule='static'):
        o0 = t * per
        o1 = o0 + per
        if o1 > count:
            o1 = count
        if o0 < o1:
            idx = _deposit(o0, fixed, n) | cval
            for o in range(o0, o1):
                vec[idx] = vec[idx] * entries[(idx >> plo) & kmask]
                idx = _next(idx, fixed) | cval


def apply_block(cplx[::1] vec, int n, int plo, int nq, const cplx[:, ::1] matrix,
                long cmask, long cval, int threads=1):
    cdef long dim = <long>1 << nq
    cdef long fixed = cmask | ((dim - 1) << plo)
    cdef long count = <long>1 << (n - _popcount(fixed))
    cdef isize nc = _nchunks(count, threads)
    cdef long per = (count + nc - 1) // nc
    cdef isize t
    cdef long o0, o1, o, base, r, c
    cdef cplx acc
    cdef cplx* scratch
    for t in prange(nc, nogil=True, num_threads=threads, schedule='static'):
        o0 = t * per
        o1 = o0 + per
        if o1 > count:
            o1 = count
        if o0 < o1:
            scratch = <cplx*> malloc(dim * sizeof(cplx))
            base = _deposit(o0, fixed, n) | cval
            for o in range(o0, o1):
                for r in range(dim):
                    scratch[r] = vec[base | (r << plo)]
                for r in range(dim):
                    acc = 0
                    for c in range(dim):
                        acc = acc + matrix[r, c] * scratch[c]
                    vec[base | (r << plo)] = acc
                base = _next(base, fixed) | cval
            free(scratch)


def apply_keyed_ry(cplx[::1] vec, int n, int pt, int klo, int knq,
                   double[::1] cosv, double[::1] sinv, long cmask, long cval,
                   int threads=1):
    cdef long fixed = cmask | (<long>1 << pt)
    cdef long tbit = <long>1 << pt
    cdef long kmask = (<long>1 << knq) - 1
    cdef long count = <long>1 << (n - _popcount(fixed))
    cdef isize nc = _nchunks(count, threads)
    cdef long per = (count + nc - 1) // nc
    cdef isize t
    cdef long o0, o1, o, idx, j, k
    cdef cplx a0, a1
    cdef double cc, ss
    for t in prange(nc, nogil=True, num_threads=threads, schedule='static'):
        o0 = t * per
        o1 = o0 + per
        if o1 > count:
            o1 = count
        if o0 < o1:
            idx = _deposit(o0, fixed, n) | cval
            for o in range(o0, o1):
                j = idx | tbit
                k = (idx >> klo) & kmask
                cc = cosv[k]
                ss = sinv[k]
                a0 = vec[idx]
                a1 = vec[j]
                vec[idx] = cc * a0 - ss * a1
                vec[j] = ss * a0 + cc * a1
                idx = _next(idx, fixed) | cval
