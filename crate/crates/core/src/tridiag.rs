/// Solves a tridiagonal system in place by the Thomas algorithm.
///
/// `sub[i]` multiplies `x[i-1]` and `sup[i]` multiplies `x[i+1]` in row `i`;
/// `sub[0]` and `sup[n-1]` are ignored. `rhs` is overwritten by the solution.
/// `scratch` must have the same length as `rhs`.
pub fn solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    if n == 0 {
        return;
    }
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * scratch[i];
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= scratch[i + 1] * next;
    }
}
