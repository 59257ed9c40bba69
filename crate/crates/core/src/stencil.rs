//! Finite-difference weights on arbitrary one-dimensional point sets.

/// Weights `w` with `sum w[i] f(x[i]) ~ f^(d)(x0)`, for `d <= 2` and at most
/// eight points (Fornberg's recursion). The formula is exact on polynomials of
/// degree below `x.len()`.
pub(crate) fn fd_weights(x0: f64, x: &[f64], d: usize, out: &mut [f64]) {
    const MAXN: usize = 8;
    const MAXD: usize = 3;
    let n = x.len();
    assert!(n <= MAXN && d < MAXD && d < n && out.len() >= n);
    let mut c = [[[0.0f64; MAXD]; MAXN]; 1];
    let c = &mut c[0];
    let mut c1 = 1.0;
    let mut c4 = x[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(d);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - x0;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    for (o, row) in out.iter_mut().zip(c.iter()).take(n) {
        *o = row[d];
    }
}
