//! Row-major matrix kernels shared by the dense and flipout layers, backed by
//! `matrixmultiply`'s blocked dgemm.

use matrixmultiply::dgemm;

/// `out[m,n] = beta·out + a·b` with explicit strides for `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    out: &mut [f64],
) {
    assert!(
        a.len() >= m * k && b.len() >= k * n && out.len() >= m * n,
        "gemm operand too short"
    );
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides address exactly the m×k, k×n and m×n prefixes
    // checked above, and `out` does not alias the inputs.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `a[m,k] · b[k,n]`
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    gemm(
        m,
        k,
        n,
        a,
        (k as isize, 1),
        b,
        (n as isize, 1),
        0.0,
        &mut out,
    );
    out
}

/// `a[m,k]ᵀ · g[m,n]`, accumulated into `out[k,n]`.
pub(crate) fn matmul_at_b_acc(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    gemm(k, m, n, a, (1, k as isize), g, (n as isize, 1), 1.0, out);
}

/// `g[m,n] · b[k,n]ᵀ`
pub(crate) fn matmul_a_bt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    gemm(
        m,
        n,
        k,
        g,
        (n as isize, 1),
        b,
        (1, n as isize),
        0.0,
        &mut out,
    );
    out
}
