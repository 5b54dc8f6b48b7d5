"""Pure numpy versions of the word kernels.

Used when the compiled extension is missing or when ``MEMTESTKIT_BACKEND=python``.
Results are bit-identical to the native module; only speed differs.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_PM_M = np.uint64(2147483647)
_PM_A = np.uint64(16807)


def _class_view(arr, modulus, residue):
    return arr[residue::modulus]


def _excluded_mask(n, modulus, residue):
    mask = np.ones(n, dtype=bool)
    mask[residue::modulus] = False
    return mask


def fill_range(arr, lo, hi, v):
    arr[lo:hi] = np.uint32(v)


def fill_class(arr, v, modulus, residue, exclude):
    v = np.uint32(v)
    if not exclude:
        arr[residue::modulus] = v
        return
    # write everything, then restore the skipped class
    keep = arr[residue::modulus].copy()
    arr[:] = v
    arr[residue::modulus] = keep


def count_ne_range(arr, lo, hi, v):
    return int(np.count_nonzero(arr[lo:hi] != np.uint32(v)))


def count_ne_class(arr, v, modulus, residue, exclude):
    v = np.uint32(v)
    if not exclude:
        return int(np.count_nonzero(arr[residue::modulus] != v))
    total = int(np.count_nonzero(arr != v))
    return total - int(np.count_nonzero(arr[residue::modulus] != v))


def count_ne_words(arr, base, expected):
    expected = np.asarray(expected, dtype=np.uint32)
    return int(np.count_nonzero(arr[base:base + expected.size] != expected))


def park_miller_blocks(seeds, block, n_words, fault_ops, fault_bits):
    seeds = np.asarray(seeds, dtype=np.int64)
    nb = seeds.size
    grid = np.zeros((nb, block), dtype=np.uint32)
    x = seeds.astype(np.uint64)
    fault_ops = np.asarray(fault_ops, dtype=np.int64)
    fault_bits = np.asarray(fault_bits, dtype=np.int64)
    f_blk, f_pos = np.divmod(fault_ops, block)
    for i in range(block):
        x = x * _PM_A
        x = (x & _PM_M) + (x >> np.uint64(31))
        x = np.where(x >= _PM_M, x - _PM_M, x)
        sel = f_pos == i
        if sel.any():
            # several faults on the same op flip in sequence
            for b, bit in zip(f_blk[sel], fault_bits[sel]):
                x[b] ^= np.uint64(1) << np.uint64(bit)
        grid[:, i] = x.astype(np.uint32)
    return grid.reshape(-1)[:n_words].copy()


def lcg_generators(n_gen, k, a, c, multiplier, alu_ops, alu_bits,
                   stuck_mask, stuck_val, sp_ops, sp_bits, jump=False):
    steps = multiplier * k
    if jump:
        return _lcg_jump(n_gen, k, a, c, multiplier, alu_ops, alu_bits, stuck_mask, stuck_val, sp_ops, sp_bits)
    out = np.empty((multiplier, n_gen), dtype=np.uint32)
    x = np.zeros(n_gen, dtype=np.uint32)
    a = np.uint32(a)
    c = np.uint32(c)
    alu_g, alu_t = np.divmod(np.asarray(alu_ops, dtype=np.int64), steps)
    sp_g, sp_t = np.divmod(np.asarray(sp_ops, dtype=np.int64), steps)
    alu_bits = np.asarray(alu_bits, dtype=np.int64)
    sp_bits = np.asarray(sp_bits, dtype=np.int64)
    scratch = stuck_mask is not None
    if scratch:
        m = np.asarray(stuck_mask, dtype=np.uint32)
        keep = ~m
        sv = np.asarray(stuck_val, dtype=np.uint32) & m
    alu_steps = set(alu_t.tolist())
    sp_steps = set(sp_t.tolist())
    one = np.uint32(1)
    with np.errstate(over="ignore"):
        for t in range(steps):
            x = x * a + c
            if t in alu_steps:
                sel = alu_t == t
                for g, bit in zip(alu_g[sel], alu_bits[sel]):
                    x[g] ^= one << np.uint32(bit)
            if scratch:
                x = (x & keep) | sv
                if t in sp_steps:
                    sel = sp_t == t
                    for g, bit in zip(sp_g[sel], sp_bits[sel]):
                        x[g] ^= one << np.uint32(bit)
                        x[g] = (x[g] & keep[g]) | sv[g]
            if (t + 1) % k == 0:
                out[(t + 1) // k - 1] = x
    return out


def _lcg_jump(n_gen, k, a, c, multiplier, alu_ops, alu_bits, stuck_mask, stuck_val, sp_ops, sp_bits):
    """Step only generators that see a fault; the rest follow the k-step affine map."""
    steps = multiplier * k
    alu_ops = np.asarray(alu_ops, dtype=np.int64)
    sp_ops = np.asarray(sp_ops, dtype=np.int64)
    touched = np.union1d(alu_ops // steps, sp_ops // steps)
    if stuck_mask is not None:
        touched = np.union1d(touched, np.flatnonzero(np.asarray(stuck_mask) != 0))
    ak, ck = 1, 0
    for _ in range(k):
        ak = (a * ak) & 0xFFFFFFFF
        ck = (a * ck + c) & 0xFFFFFFFF
    out = np.empty((multiplier, n_gen), dtype=np.uint32)
    x = 0
    for j in range(multiplier):
        x = (ak * x + ck) & 0xFFFFFFFF
        out[j] = x
    if touched.size:
        t = touched.astype(np.int64)
        remap = np.full(n_gen, -1, dtype=np.int64)
        remap[t] = np.arange(t.size)
        sel_a = np.isin(alu_ops // steps, t)
        sel_s = np.isin(sp_ops // steps, t)
        a_ops = remap[alu_ops[sel_a] // steps] * steps + alu_ops[sel_a] % steps
        s_ops = remap[sp_ops[sel_s] // steps] * steps + sp_ops[sel_s] % steps
        sm = sv = None
        if stuck_mask is not None:
            sm = np.asarray(stuck_mask, dtype=np.uint32)[t]
            sv = np.asarray(stuck_val, dtype=np.uint32)[t]
        sub = lcg_generators(t.size, k, a, c, multiplier, a_ops, np.asarray(alu_bits)[sel_a],
                             sm, sv, s_ops, np.asarray(sp_bits)[sel_s])
        out[:, t] = sub
    return out
