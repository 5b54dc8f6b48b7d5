# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled word kernels.  Signatures mirror ``_fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint32_t, uint64_t, int64_t
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "native"

cdef uint64_t PM_M = 2147483647ULL

cdef inline void mtk_fill(uint32_t* p, Py_ssize_t n, uint32_t v) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        p[i] = v


def fill_range(uint32_t[::1] arr, Py_ssize_t lo, Py_ssize_t hi, uint32_t v):
    if hi <= lo:
        return
    cdef uint32_t* p = &arr[lo]
    with nogil:
        mtk_fill(p, hi - lo, v)


def fill_class(uint32_t[::1] arr, uint32_t v, Py_ssize_t modulus, Py_ssize_t residue, bint exclude):
    cdef Py_ssize_t i, n = arr.shape[0], j = 0
    cdef uint32_t* keep
    cdef uint32_t* p
    if n == 0:
        return
    p = &arr[0]
    with nogil:
        if not exclude:
            i = residue
            while i < n:
                arr[i] = v
                i += modulus
        else:
            # save the skipped class, fill everything (a plain loop the compiler
            # turns into wide stores), then put the class back
            keep = <uint32_t*> malloc(((n // modulus) + 1) * sizeof(uint32_t))
            if keep == NULL:
                with gil:
                    raise MemoryError()
            i = residue
            while i < n:
                keep[j] = p[i]
                j += 1
                i += modulus
            mtk_fill(p, n, v)
            i = residue
            j = 0
            while i < n:
                p[i] = keep[j]
                j += 1
                i += modulus
            free(keep)


def count_ne_range(const uint32_t[::1] arr, Py_ssize_t lo, Py_ssize_t hi, uint32_t v):
    cdef Py_ssize_t i, c = 0
    with nogil:
        for i in range(lo, hi):
            c += arr[i] != v
    return c


def count_ne_class(const uint32_t[::1] arr, uint32_t v, Py_ssize_t modulus, Py_ssize_t residue, bint exclude):
    cdef Py_ssize_t i, n = arr.shape[0], j = 0, c = 0
    with nogil:
        if not exclude:
            i = residue
            while i < n:
                c += arr[i] != v
                i += modulus
        else:
            for i in range(n):
                if j != residue:
                    c += arr[i] != v
                j += 1
                if j == modulus:
                    j = 0
    return c


def count_ne_words(const uint32_t[::1] arr, Py_ssize_t base, const uint32_t[::1] expected):
    cdef Py_ssize_t i, n = expected.shape[0], c = 0
    with nogil:
        for i in range(n):
            c += arr[base + i] != expected[i]
    return c


def park_miller_blocks(const int64_t[::1] seeds, Py_ssize_t block, Py_ssize_t n_words,
                       const int64_t[::1] fault_ops, const int64_t[::1] fault_bits):
    """One Park-Miller stream per block; value i of block b is ALU op b*block+i."""
    out = np.empty(n_words, dtype=np.uint32)
    cdef uint32_t[::1] o = out
    cdef Py_ssize_t nb = seeds.shape[0], nf = fault_ops.shape[0]
    cdef Py_ssize_t b, i, lo, hi, f = 0
    cdef uint64_t x
    cdef int64_t op
    with nogil:
        for b in range(nb):
            x = <uint64_t>seeds[b]
            lo = b * block
            hi = lo + block
            if hi > n_words:
                hi = n_words
            for i in range(lo, hi):
                # x*16807 < 2**46, so one fold plus one conditional subtract reduces mod 2**31-1
                x = x * 16807ULL
                x = (x & PM_M) + (x >> 31)
                if x >= PM_M:
                    x -= PM_M
                op = i
                while f < nf and fault_ops[f] < op:
                    f += 1
                while f < nf and fault_ops[f] == op:
                    x ^= (1ULL << fault_bits[f])
                    f += 1
                o[i] = <uint32_t>x
    return out


cdef void _lcg_lanes(uint32_t[:, ::1] o, Py_ssize_t n_gen, Py_ssize_t k, uint32_t a, uint32_t c,
                     Py_ssize_t multiplier) noexcept nogil:
    # Fault-free case, every step executed.  Generators are independent, so the
    # inner loop runs across them and the compiler can use SIMD lanes.
    cdef Py_ssize_t j, t, g
    cdef uint32_t* x
    for j in range(multiplier):
        x = &o[j, 0]
        if j == 0:
            for g in range(n_gen):
                x[g] = 0
        else:
            for g in range(n_gen):
                x[g] = o[j - 1, g]
        for t in range(k):
            for g in range(n_gen):
                x[g] = a * x[g] + c


cdef uint32_t _lcg_one(uint32_t[:, ::1] o, Py_ssize_t g, Py_ssize_t k, uint32_t a, uint32_t c,
                       Py_ssize_t multiplier, uint32_t ak, uint32_t ck, bint jump,
                       const int64_t[::1] alu_ops, const int64_t[::1] alu_bits, Py_ssize_t* fa,
                       const int64_t[::1] sp_ops, const int64_t[::1] sp_bits, Py_ssize_t* fs,
                       bint scratch, uint32_t m, uint32_t sv) noexcept nogil:
    # One generator stepped in order; fa/fs are cursors into the sorted fault lists.
    cdef Py_ssize_t steps = multiplier * k, j, t
    cdef Py_ssize_t na = alu_ops.shape[0], ns = sp_ops.shape[0]
    cdef int64_t op, cycle_end, first = g * steps
    cdef uint32_t x = 0
    while fa[0] < na and alu_ops[fa[0]] < first:
        fa[0] += 1
    while fs[0] < ns and sp_ops[fs[0]] < first:
        fs[0] += 1
    for j in range(multiplier):
        cycle_end = first + (j + 1) * k
        if jump and m == 0 and (fa[0] >= na or alu_ops[fa[0]] >= cycle_end) \
                and (fs[0] >= ns or sp_ops[fs[0]] >= cycle_end):
            x = ak * x + ck
            o[j, g] = x
            continue
        for t in range(j * k, (j + 1) * k):
            x = a * x + c
            op = first + t
            while fa[0] < na and alu_ops[fa[0]] == op:
                x ^= (<uint32_t>1) << alu_bits[fa[0]]
                fa[0] += 1
            if scratch:
                x = (x & ~m) | (sv & m)
                while fs[0] < ns and sp_ops[fs[0]] == op:
                    x ^= (<uint32_t>1) << sp_bits[fs[0]]
                    x = (x & ~m) | (sv & m)
                    fs[0] += 1
        o[j, g] = x
    return x


def lcg_generators(Py_ssize_t n_gen, Py_ssize_t k, uint32_t a, uint32_t c, Py_ssize_t multiplier,
                   const int64_t[::1] alu_ops, const int64_t[::1] alu_bits,
                   stuck_mask, stuck_val,
                   const int64_t[::1] sp_ops, const int64_t[::1] sp_bits,
                   bint jump=False):
    """Run ``n_gen`` cyclic LCGs from 0 for ``multiplier*k`` steps.

    Returns the state after each completed k-cycle, shape (multiplier, n_gen).
    Fault op ids are ``g*steps + t`` and must be sorted.  With ``jump`` a
    k-cycle that has no fault and no stuck scratch bits is applied as one
    affine map instead of k single steps; the result is identical.
    """
    out = np.empty((multiplier, n_gen), dtype=np.uint32)
    cdef uint32_t[:, ::1] o = out
    cdef Py_ssize_t steps = multiplier * k
    cdef bint scratch = stuck_mask is not None
    cdef const uint32_t[::1] smask
    cdef const uint32_t[::1] sval
    if scratch:
        smask = stuck_mask
        sval = stuck_val
    cdef Py_ssize_t g, t, i, fa = 0, fs = 0
    cdef uint32_t m = 0, sv = 0, ak = 1, ck = 0
    for t in range(k):
        ak = a * ak
        ck = a * ck + c
    if jump:
        with nogil:
            for g in range(n_gen):
                if scratch:
                    m = smask[g]
                    sv = sval[g]
                _lcg_one(o, g, k, a, c, multiplier, ak, ck, True, alu_ops, alu_bits, &fa,
                         sp_ops, sp_bits, &fs, scratch, m, sv)
        return out
    # every step executed: all generators in lockstep first, then the ones
    # that saw a fault or carry stuck scratch bits are redone one by one
    _lcg_lanes(o, n_gen, k, a, c, multiplier)
    touched = np.union1d(np.asarray(alu_ops) // steps, np.asarray(sp_ops) // steps)
    if scratch:
        touched = np.union1d(touched, np.flatnonzero(np.asarray(stuck_mask)))
    cdef const int64_t[::1] tg = np.ascontiguousarray(touched, dtype=np.int64)
    with nogil:
        for i in range(tg.shape[0]):
            g = tg[i]
            if scratch:
                m = smask[g]
                sv = sval[g]
            _lcg_one(o, g, k, a, c, multiplier, ak, ck, False, alu_ops, alu_bits, &fa,
                     sp_ops, sp_bits, &fs, scratch, m, sv)
    return out
