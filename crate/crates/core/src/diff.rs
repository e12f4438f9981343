//! Three-point finite differences on a (possibly non-uniform) grid.

/// First and second derivatives of `y(x)` from three-point stencils: centred in
/// the interior, one-sided at both ends. Exact for quadratics.
pub fn three_point(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    debug_assert_eq!(n, y.len());
    debug_assert!(n >= 3);
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        let (a, b) = stencil(x[i - 1], x[i], x[i + 1], y[i - 1], y[i], y[i + 1]);
        d1[i] = a;
        d2[i] = b;
    }
    let h1 = x[1] - x[0];
    let h2 = x[2] - x[1];
    d1[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * y[0] + (h1 + h2) / (h1 * h2) * y[1] - h1 / (h2 * (h1 + h2)) * y[2];
    d2[0] = d2[1];
    let h1 = x[n - 2] - x[n - 3];
    let h2 = x[n - 1] - x[n - 2];
    d1[n - 1] = h2 / (h1 * (h1 + h2)) * y[n - 3] - (h1 + h2) / (h1 * h2) * y[n - 2] + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * y[n - 1];
    d2[n - 1] = d2[n - 2];
    (d1, d2)
}

fn stencil(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64) -> (f64, f64) {
    let h1 = x1 - x0;
    let h2 = x2 - x1;
    let d1 = -h2 / (h1 * (h1 + h2)) * y0 + (h2 - h1) / (h1 * h2) * y1 + h1 / (h2 * (h1 + h2)) * y2;
    let d2 = 2.0 * (y0 / (h1 * (h1 + h2)) - y1 / (h1 * h2) + y2 / (h2 * (h1 + h2)));
    (d1, d2)
}

/// True when every interval equals the first one within `tol`, except that the
/// last interval may be shorter.
pub fn is_uniform(x: &[f64], tol: f64) -> bool {
    if x.len() < 2 {
        return true;
    }
    let h = x[1] - x[0];
    if !(h > 0.0) {
        return false;
    }
    let m = x.len() - 1;
    (1..m - 1).all(|i| (x[i + 1] - x[i] - h).abs() <= tol) && x[m] - x[m - 1] <= h + tol && x[m] > x[m - 1]
}
