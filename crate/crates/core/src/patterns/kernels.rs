//! Loop nests of the supported kernels, written once against [`ArrayMemory`]
//! so the same code drives trace generation and native execution.
//!
//! Subscripts are given in C order: `index[0]` is the slowest-varying
//! (row) subscript, the last one is the column. Scalars such as
//! accumulators live in registers and never touch memory.

/// Element storage addressed by array id and C-order subscripts.
pub trait ArrayMemory {
    fn load(&mut self, array: usize, index: &[u64]) -> f64;
    fn store(&mut self, array: usize, index: &[u64], value: f64);
}

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;

/// `C = A * B`, all `n x n`; `j` inside `i`, dot product over `k` innermost.
pub fn mm_ijk<M: ArrayMemory>(mem: &mut M, n: u64) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += mem.load(A, &[i, k]) * mem.load(B, &[k, j]);
            }
            mem.store(C, &[i, j], acc);
        }
    }
}

/// `C += A * B` with the `j` loop innermost; `C` must start zeroed.
pub fn mm_ikj<M: ArrayMemory>(mem: &mut M, n: u64) {
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                let c = mem.load(C, &[i, j]);
                let prod = mem.load(A, &[i, k]) * mem.load(B, &[k, j]);
                mem.store(C, &[i, j], c + prod);
            }
        }
    }
}

/// `C = A * B^T` with `A`, `B` of `rows x cols` and `C` of `rows x rows`.
pub fn mmt_ijk<M: ArrayMemory>(mem: &mut M, rows: u64, cols: u64) {
    for i in 0..rows {
        for j in 0..rows {
            let mut acc = 0.0;
            for k in 0..cols {
                acc += mem.load(A, &[i, k]) * mem.load(B, &[j, k]);
            }
            mem.store(C, &[i, j], acc);
        }
    }
}

/// `C += A * B^T` with the `j` loop innermost.
pub fn mmt_ikj<M: ArrayMemory>(mem: &mut M, rows: u64, cols: u64) {
    for i in 0..rows {
        for k in 0..cols {
            for j in 0..rows {
                let c = mem.load(C, &[i, j]);
                let prod = mem.load(A, &[i, k]) * mem.load(B, &[j, k]);
                mem.store(C, &[i, j], c + prod);
            }
        }
    }
}

/// One sweep of the four-point stencil from array 0 into array 1 over the
/// interior of a `rows x cols` grid.
pub fn jacobi2d<M: ArrayMemory>(mem: &mut M, rows: u64, cols: u64) {
    const SRC: usize = 0;
    const DST: usize = 1;
    for i in 1..rows.saturating_sub(1) {
        for j in 1..cols.saturating_sub(1) {
            let sum = mem.load(SRC, &[i - 1, j])
                + mem.load(SRC, &[i + 1, j])
                + mem.load(SRC, &[i, j - 1])
                + mem.load(SRC, &[i, j + 1]);
            mem.store(DST, &[i, j], 0.25 * sum);
        }
    }
}

/// Cholesky-Banachiewicz: fills the lower triangle of array 1 (`L`) from
/// the symmetric positive definite array 0, row by row.
pub fn cholesky<M: ArrayMemory>(mem: &mut M, n: u64) {
    const IN: usize = 0;
    const L: usize = 1;
    for i in 0..n {
        for j in 0..=i {
            let mut sum = 0.0;
            for k in 0..j {
                sum += mem.load(L, &[i, k]) * mem.load(L, &[j, k]);
            }
            if i == j {
                let diag = mem.load(IN, &[i, i]) - sum;
                mem.store(L, &[i, i], diag.sqrt());
            } else {
                let v = (mem.load(IN, &[i, j]) - sum) / mem.load(L, &[j, j]);
                mem.store(L, &[i, j], v);
            }
        }
    }
}

/// Crout LU decomposition with unit-diagonal `U`. Array 1 receives `L` in
/// its lower triangle (diagonal included) and the strict upper triangle of
/// `U`; array 0 is the input.
pub fn crout<M: ArrayMemory>(mem: &mut M, n: u64) {
    const IN: usize = 0;
    const LU: usize = 1;
    for j in 0..n {
        for i in j..n {
            let mut sum = 0.0;
            for k in 0..j {
                sum += mem.load(LU, &[i, k]) * mem.load(LU, &[k, j]);
            }
            let v = mem.load(IN, &[i, j]) - sum;
            mem.store(LU, &[i, j], v);
        }
        for i in j + 1..n {
            let mut sum = 0.0;
            for k in 0..j {
                sum += mem.load(LU, &[j, k]) * mem.load(LU, &[k, i]);
            }
            let v = (mem.load(IN, &[j, i]) - sum) / mem.load(LU, &[j, j]);
            mem.store(LU, &[j, i], v);
        }
    }
}

/// Array ids of the Himeno kernel, in binding order.
pub mod himeno_arrays {
    pub const A: [usize; 4] = [0, 1, 2, 3];
    pub const B: [usize; 3] = [4, 5, 6];
    pub const C: [usize; 3] = [7, 8, 9];
    pub const P: usize = 10;
    pub const WRK: usize = 11;
    pub const COUNT: usize = 12;
    pub const NAMES: [&str; COUNT] = ["a0", "a1", "a2", "a3", "b0", "b1", "b2", "c0", "c1", "c2", "p", "wrk"];
}

/// One Jacobi sweep of the nineteen-point Himeno stencil over the interior
/// of an `ni x nj x nk` grid, updating `wrk` in place.
pub fn himeno<M: ArrayMemory>(mem: &mut M, ni: u64, nj: u64, nk: u64) {
    use himeno_arrays::*;
    const OMEGA: f64 = 0.8;
    for i in 1..ni.saturating_sub(1) {
        for j in 1..nj.saturating_sub(1) {
            for k in 1..nk.saturating_sub(1) {
                let at = [i, j, k];
                let p = |mem: &mut M, di: i64, dj: i64, dk: i64| {
                    let idx = [
                        i.wrapping_add_signed(di),
                        j.wrapping_add_signed(dj),
                        k.wrapping_add_signed(dk),
                    ];
                    mem.load(P, &idx)
                };
                let s0 = mem.load(A[0], &at) * p(mem, 1, 0, 0)
                    + mem.load(A[1], &at) * p(mem, 0, 1, 0)
                    + mem.load(A[2], &at) * p(mem, 0, 0, 1)
                    + mem.load(B[0], &at) * (p(mem, 1, 1, 0) - p(mem, 1, -1, 0) - p(mem, -1, 1, 0) + p(mem, -1, -1, 0))
                    + mem.load(B[1], &at) * (p(mem, 0, 1, 1) - p(mem, 0, -1, 1) - p(mem, 0, 1, -1) + p(mem, 0, -1, -1))
                    + mem.load(B[2], &at) * (p(mem, 1, 0, 1) - p(mem, -1, 0, 1) - p(mem, 1, 0, -1) + p(mem, -1, 0, -1))
                    + mem.load(C[0], &at) * p(mem, -1, 0, 0)
                    + mem.load(C[1], &at) * p(mem, 0, -1, 0)
                    + mem.load(C[2], &at) * p(mem, 0, 0, -1)
                    + mem.load(WRK, &at);
                let centre = p(mem, 0, 0, 0);
                let ss = s0 * mem.load(A[3], &at) - centre;
                mem.store(WRK, &at, centre + OMEGA * ss);
            }
        }
    }
}
