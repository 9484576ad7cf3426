use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::stats::quantile_sorted;

/// Evaluate every B-spline basis function of the given degree at `x`.
///
/// `knots` is the compact knot vector: lower boundary, interior knots, upper
/// boundary. The boundary knots are repeated `degree + 1` times internally, so
/// there are `interior + degree + 1` basis functions. `x` is clamped to the
/// boundary interval; at the upper boundary the last function equals 1.
pub fn bspline_basis(x: f64, knots: &[f64], degree: usize) -> Result<Vec<f64>, DatasetError> {
    check_knots(knots)?;
    let full = augmented(knots, degree);
    Ok(basis_on(&full, degree, x))
}

fn check_knots(knots: &[f64]) -> Result<(), DatasetError> {
    let ascending = knots.windows(2).all(|w| w[0] <= w[1]);
    let bounded = knots.len() >= 2 && knots[0] < knots[knots.len() - 1];
    if !ascending || !bounded || knots.iter().any(|k| !k.is_finite()) {
        return Err(DatasetError::Knots(knots.to_vec()));
    }
    Ok(())
}

fn augmented(knots: &[f64], degree: usize) -> Vec<f64> {
    let lo = knots[0];
    let hi = knots[knots.len() - 1];
    let mut full = Vec::with_capacity(knots.len() + 2 * degree);
    full.extend(std::iter::repeat_n(lo, degree));
    full.extend_from_slice(knots);
    full.extend(std::iter::repeat_n(hi, degree));
    full
}

// Assumes `full` is a valid augmented knot vector.
fn basis_on(full: &[f64], degree: usize, x: f64) -> Vec<f64> {
    let n_basis = full.len() - degree - 1;
    let lo = full[degree];
    let hi = full[n_basis];
    let x = x.clamp(lo, hi);

    // Last non-empty span [t_k, t_{k+1}) containing x.
    let mut span = degree;
    for k in degree..n_basis {
        if full[k] <= x && full[k] < full[k + 1] {
            span = k;
        }
    }

    let mut local = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    local[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - full[span + 1 - j];
        right[j] = full[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = local[r] / (right[r + 1] + left[j - r]);
            local[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        local[j] = saved;
    }

    let mut out = vec![0.0; n_basis];
    out[span - degree..=span].copy_from_slice(&local);
    out
}

/// A fitted spline expansion for one covariate.
///
/// The first basis function is dropped (the remaining ones plus the intercept
/// span the same space), and every column is shifted so the reference value
/// maps to a row of zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub knots: Vec<f64>,
    pub degree: usize,
    offset: Vec<f64>,
}

impl SplineBasis {
    pub fn new(knots: Vec<f64>, degree: usize, reference: f64) -> Result<Self, DatasetError> {
        check_knots(&knots)?;
        let mut basis = SplineBasis {
            knots,
            degree,
            offset: Vec::new(),
        };
        basis.offset = vec![0.0; basis.n_columns()];
        basis.offset = basis.eval(reference);
        Ok(basis)
    }

    /// Boundary knots at the data range, `df - degree` interior knots at
    /// equally spaced quantiles.
    pub fn from_data(
        values: &[f64],
        degree: usize,
        df: usize,
        reference: f64,
    ) -> Result<Self, DatasetError> {
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted.is_empty() {
            return Err(DatasetError::Knots(Vec::new()));
        }
        let n_interior = df.saturating_sub(degree);
        let mut knots = Vec::with_capacity(n_interior + 2);
        knots.push(sorted[0]);
        for i in 1..=n_interior {
            knots.push(quantile_sorted(&sorted, i as f64 / (n_interior + 1) as f64));
        }
        knots.push(sorted[sorted.len() - 1]);
        SplineBasis::new(knots, degree, reference)
    }

    pub fn n_columns(&self) -> usize {
        self.knots.len() + self.degree - 2
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let full = augmented(&self.knots, self.degree);
        let all = basis_on(&full, self.degree, x);
        all[1..]
            .iter()
            .zip(&self.offset)
            .map(|(b, o)| b - o)
            .collect()
    }
}
