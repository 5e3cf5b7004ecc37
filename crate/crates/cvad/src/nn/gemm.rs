//! Small dense matrix kernels backing the conv and linear layers.
//!
//! All variants accumulate into `c` (callers zero it first when needed) with a
//! fixed per-element summation order, so results are bit-reproducible. The
//! kernels are register-blocked four output rows at a time: each loaded row of
//! `b` feeds four accumulator rows, which lifts the arithmetic intensity
//! enough to keep the vector units busy instead of the memory bus.

use crate::tensor::Element;

/// c (m x n) += a (m x k) . b (k x n)
pub fn gemm_nn<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    while i + 4 <= m {
        let block = &mut c[i * n..(i + 4) * n];
        let (c0, rest) = block.split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        for l in 0..k {
            let brow = &b[l * n..(l + 1) * n];
            let a0 = a[i * k + l];
            let a1 = a[(i + 1) * k + l];
            let a2 = a[(i + 2) * k + l];
            let a3 = a[(i + 3) * k + l];
            axpy4(brow, a0, a1, a2, a3, c0, c1, c2, c3);
        }
        i += 4;
    }
    for i in i..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a[i * k + l];
            if av == T::ZERO {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * bv;
            }
        }
    }
}

/// c (m x n) += a^T . b, with a stored (k x m), b stored (k x n)
pub fn gemm_tn<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    while i + 4 <= m {
        let block = &mut c[i * n..(i + 4) * n];
        let (c0, rest) = block.split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        for l in 0..k {
            let brow = &b[l * n..(l + 1) * n];
            let arow = &a[l * m + i..l * m + i + 4];
            axpy4(brow, arow[0], arow[1], arow[2], arow[3], c0, c1, c2, c3);
        }
        i += 4;
    }
    for i in i..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a[l * m + i];
            if av == T::ZERO {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * bv;
            }
        }
    }
}

/// c (m x n) += a . b^T, with a stored (m x k), b stored (n x k)
pub fn gemm_nt<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        let mut j = 0;
        while j + 4 <= n {
            let [d0, d1, d2, d3] = dot8_x4(
                arow,
                &b[j * k..(j + 1) * k],
                &b[(j + 1) * k..(j + 2) * k],
                &b[(j + 2) * k..(j + 3) * k],
                &b[(j + 3) * k..(j + 4) * k],
            );
            crow[j] += d0;
            crow[j + 1] += d1;
            crow[j + 2] += d2;
            crow[j + 3] += d3;
            j += 4;
        }
        for j in j..n {
            crow[j] += dot8(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn axpy4<T: Element>(
    brow: &[T],
    a0: T,
    a1: T,
    a2: T,
    a3: T,
    c0: &mut [T],
    c1: &mut [T],
    c2: &mut [T],
    c3: &mut [T],
) {
    let n = brow.len();
    let (c0, c1, c2, c3) = (&mut c0[..n], &mut c1[..n], &mut c2[..n], &mut c3[..n]);
    for (j, &bv) in brow.iter().enumerate() {
        c0[j] += a0 * bv;
        c1[j] += a1 * bv;
        c2[j] += a2 * bv;
        c3[j] += a3 * bv;
    }
}

/// Dot product with a fixed 8-lane accumulation tree: bit-deterministic and
/// wide enough for the vectorizer (a plain sequential float reduction cannot
/// be auto-vectorized without reassociation).
#[inline]
fn dot8<T: Element>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::ZERO; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let av = &a[i * 8..i * 8 + 8];
        let bv = &b[i * 8..i * 8 + 8];
        for l in 0..8 {
            lanes[l] += av[l] * bv[l];
        }
    }
    let mut tail = T::ZERO;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    fold8(lanes) + tail
}

/// Four simultaneous [`dot8`]s sharing one pass over `a`; lane structure (and
/// therefore rounding) is identical to four separate dot8 calls.
#[inline]
fn dot8_x4<T: Element>(a: &[T], b0: &[T], b1: &[T], b2: &[T], b3: &[T]) -> [T; 4] {
    let k = a.len();
    let mut l0 = [T::ZERO; 8];
    let mut l1 = [T::ZERO; 8];
    let mut l2 = [T::ZERO; 8];
    let mut l3 = [T::ZERO; 8];
    let chunks = k / 8;
    for i in 0..chunks {
        let at = &a[i * 8..i * 8 + 8];
        let b0t = &b0[i * 8..i * 8 + 8];
        let b1t = &b1[i * 8..i * 8 + 8];
        let b2t = &b2[i * 8..i * 8 + 8];
        let b3t = &b3[i * 8..i * 8 + 8];
        for l in 0..8 {
            l0[l] += at[l] * b0t[l];
            l1[l] += at[l] * b1t[l];
            l2[l] += at[l] * b2t[l];
            l3[l] += at[l] * b3t[l];
        }
    }
    let mut tails = [T::ZERO; 4];
    for i in chunks * 8..k {
        tails[0] += a[i] * b0[i];
        tails[1] += a[i] * b1[i];
        tails[2] += a[i] * b2[i];
        tails[3] += a[i] * b3[i];
    }
    [
        fold8(l0) + tails[0],
        fold8(l1) + tails[1],
        fold8(l2) + tails[2],
        fold8(l3) + tails[3],
    ]
}

#[inline]
fn fold8<T: Element>(lanes: [T; 8]) -> T {
    let s01 = lanes[0] + lanes[1];
    let s23 = lanes[2] + lanes[3];
    let s45 = lanes[4] + lanes[5];
    let s67 = lanes[6] + lanes[7];
    (s01 + s23) + (s45 + s67)
}
