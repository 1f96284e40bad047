//! Dense products over row-major slices, delegated to `matrixmultiply`.
//! Transposed operands are expressed through strides rather than copies.
//! For a given build and CPU the blocking, and hence the accumulation
//! order, is fixed, so results are bitwise reproducible.

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() == m * k && b.len() == k * n && out.len() == m * n);
    // SAFETY: the slice lengths match the row-major extents asserted above.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, 1.0, out.as_mut_ptr(), n as isize, 1);
    }
}

/// `out[k×n] += aᵀ · g` where `a` is `m×k` and `g` is `m×n`.
pub(crate) fn gemm_tn_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() == m * k && g.len() == m * n && out.len() == k * n);
    // SAFETY: as above; aᵀ is read with swapped strides.
    unsafe {
        matrixmultiply::dgemm(k, m, n, 1.0, a.as_ptr(), 1, k as isize, g.as_ptr(), n as isize, 1, 1.0, out.as_mut_ptr(), n as isize, 1);
    }
}

/// `out[m×k] += g · bᵀ` where `g` is `m×n` and `b` is `k×n`.
pub(crate) fn gemm_nt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    assert!(g.len() == m * n && b.len() == k * n && out.len() == m * k);
    // SAFETY: as above; bᵀ is read with swapped strides.
    unsafe {
        matrixmultiply::dgemm(m, n, k, 1.0, g.as_ptr(), n as isize, 1, b.as_ptr(), 1, n as isize, 1.0, out.as_mut_ptr(), k as isize, 1);
    }
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> alloc::vec::Vec<f64> {
    let mut out = alloc::vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}
