//! Least squares with an intercept, solved by Householder QR.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Ridge penalty on the slopes that keeps rank-deficient designs solvable.
pub const RIDGE_LAMBDA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ols {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl Ols {
    pub fn predict(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        self.coef.iter().zip(columns).fold(self.intercept, |acc, (b, c)| acc + b * c[row])
    }
}

/// Minimizes `‖y − b0 − Xb‖² + λ‖b‖²` with `λ = RIDGE_LAMBDA`; the intercept is
/// not penalized. The penalty enters as extra rows `√λ·e_j` of the design, so
/// the problem stays a plain least-squares solve.
pub fn ols_fit(columns: &[Vec<f64>], y: &[f64]) -> Result<Ols, ModelError> {
    let n = y.len();
    if n == 0 {
        return Err(ModelError::Empty);
    }
    let p = columns.len() + 1;
    let m = n + columns.len();
    let root = RIDGE_LAMBDA.sqrt();

    let mut a: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut ones = vec![0.0; m];
    ones[..n].fill(1.0);
    a.push(ones);
    for (j, c) in columns.iter().enumerate() {
        assert_eq!(c.len(), n, "ragged design matrix");
        let mut col = vec![0.0; m];
        col[..n].copy_from_slice(c);
        col[n + j] = root;
        a.push(col);
    }
    let mut b = vec![0.0; m];
    b[..n].copy_from_slice(y);

    let mut v = vec![0.0; m];
    for k in 0..p {
        let norm = a[k][k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        v[k..].copy_from_slice(&a[k][k..]);
        v[k] -= alpha;
        let vv: f64 = v[k..].iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k) {
            reflect(&v[k..], vv, &mut col[k..]);
        }
        reflect(&v[k..], vv, &mut b[k..]);
    }

    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = b[k];
        for j in k + 1..p {
            s -= a[j][k] * beta[j];
        }
        let d = a[k][k];
        if d.abs() < 1e-300 {
            return Err(ModelError::Singular);
        }
        beta[k] = s / d;
    }
    Ok(Ols { intercept: beta[0], coef: beta[1..].to_vec() })
}

fn reflect(v: &[f64], vv: f64, x: &mut [f64]) {
    let s: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * s / vv;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_recovered() {
        let x1: Vec<f64> = (0..30).map(|i| i as f64 * 0.5).collect();
        let x2: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let y: Vec<f64> = (0..30).map(|i| 3.0 + 2.0 * x1[i] - 1.5 * x2[i]).collect();
        let m = ols_fit(&[x1.clone(), x2.clone()], &y).unwrap();
        assert!((m.intercept - 3.0).abs() < 1e-8);
        assert!((m.coef[0] - 2.0).abs() < 1e-8);
        assert!((m.coef[1] + 1.5).abs() < 1e-8);
        let cols = [x1, x2];
        for (i, yi) in y.iter().enumerate() {
            assert!((m.predict(&cols, i) - yi).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_target() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let m = ols_fit(&[x], &[4.0; 20]).unwrap();
        assert!((m.intercept - 4.0).abs() < 1e-8);
        assert!(m.coef[0].abs() < 1e-8);
    }

    #[test]
    fn collinear_columns_still_solve() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v).collect();
        let m = ols_fit(&[x.clone(), x.clone(), vec![5.0; 20]], &y).unwrap();
        let cols = [x.clone(), x, vec![5.0; 20]];
        for i in 0..20 {
            assert!((m.predict(&cols, i) - y[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(ols_fit(&[], &[]), Err(ModelError::Empty));
    }
}
