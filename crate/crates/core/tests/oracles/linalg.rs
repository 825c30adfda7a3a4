//! Least squares by explicit inversion of the uncentered normal equations.

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in &mut m[col] {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                let pivot_row = m[col].clone();
                for (v, pv) in m[row].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Returns (intercept, coefficients) minimizing squared error.
pub fn ols(columns: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len();
    let p = columns.len() + 1;
    let design = |i: usize, j: usize| if j == 0 { 1.0 } else { columns[j - 1][i] };
    let xtx: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..p).map(|b| (0..n).map(|i| design(i, a) * design(i, b)).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..p).map(|a| (0..n).map(|i| design(i, a) * y[i]).sum()).collect();
    let inv = invert(&xtx);
    let beta: Vec<f64> = inv
        .iter()
        .map(|row| row.iter().zip(&xty).map(|(a, b)| a * b).sum())
        .collect();
    (beta[0], beta[1..].to_vec())
}
