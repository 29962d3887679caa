/// Solves a tridiagonal system in place by forward elimination and back
/// substitution (Thomas algorithm).
///
/// `lower[i]` couples row `i` to `i - 1` (`lower[0]` is ignored), `upper[i]`
/// couples row `i` to `i + 1` (`upper[n - 1]` is ignored). `rhs` is
/// overwritten with the solution. The matrix is assumed to be diagonally
/// dominant or otherwise safe to factor without pivoting.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    if n == 0 {
        return;
    }
    let mut c_prime = vec![0.0; n];
    let mut beta = diag[0];
    c_prime[0] = upper[0] / beta;
    rhs[0] /= beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c_prime[i - 1];
        c_prime[i] = upper[i] / beta;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c_prime[i] * rhs[i + 1];
    }
}
