//! Closed-form linear regression with intercept, solved by SVD so
//! rank-deficient feature matrices (e.g. constant columns that scale to
//! zero) still yield the minimum-norm least-squares fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Fitted linear model: `y = weights . x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn input_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Least-squares fit on the design matrix `[X | 1]`.
pub fn fit_least_squares(xs: &[Vec<f64>], ys: &[f64]) -> Result<LinearModel, String> {
    if xs.is_empty() {
        return Err("empty training set".into());
    }
    let dim = xs[0].len();
    let rows = xs.len();
    let design = DMatrix::from_fn(rows, dim + 1, |r, c| if c == dim { 1.0 } else { xs[r][c] });
    let targets = DVector::from_row_slice(ys);
    let svd = design.svd(true, true);
    let solution = svd.solve(&targets, 1e-12).map_err(|e| e.to_string())?;
    let weights = solution.iter().take(dim).copied().collect();
    Ok(LinearModel { weights, intercept: solution[dim] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_coefficients() {
        // y = 2 x0 - 3 x1 + 0.5
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64) * 0.1, ((i * 7) % 11) as f64 * 0.2])
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] - 3.0 * x[1] + 0.5).collect();
        let model = fit_least_squares(&xs, &ys).unwrap();
        assert!((model.weights[0] - 2.0).abs() < 1e-6);
        assert!((model.weights[1] + 3.0).abs() < 1e-6);
        assert!((model.intercept - 0.5).abs() < 1e-6);
        for (x, y) in xs.iter().zip(&ys) {
            assert!((model.predict(x) - y).abs() < 1e-6);
        }
    }

    #[test]
    fn tolerates_constant_columns() {
        // Second column is constant zero (a degenerate scaled feature).
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 4.0 * x[0] + 1.0).collect();
        let model = fit_least_squares(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((model.predict(x) - y).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_empty_input() {
        assert!(fit_least_squares(&[], &[]).is_err());
    }
}
