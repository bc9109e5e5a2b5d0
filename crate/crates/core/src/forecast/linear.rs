use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Ridge strength used when the lagged design matrix is rank-deficient.
pub const RIDGE_FALLBACK: f64 = 1e-6;

/// Singular values below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

/// Autoregression `y_t = a + b_1 y_{t-1} + ... + b_n y_{t-n}` on raw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    /// `coefficients[i]` multiplies the value `i + 1` steps back.
    pub coefficients: Vec<f64>,
    /// Ridge strength applied during fitting; `None` for plain least squares.
    pub ridge: Option<f64>,
}

impl LinearModel {
    pub fn lag(&self) -> usize {
        self.coefficients.len()
    }

    /// One-step prediction from the tail of `history`.
    pub fn predict_next(&self, history: &[f64]) -> f64 {
        debug_assert!(history.len() >= self.lag());
        let n = history.len();
        self.intercept
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, b)| b * history[n - 1 - i])
                .sum::<f64>()
    }

    /// Autoregressive multi-step forecast: each prediction becomes the next
    /// input.
    pub fn forecast(&self, history: &[f64], steps: usize) -> Vec<f64> {
        let lag = self.lag();
        let mut window: Vec<f64> = history[history.len() - lag..].to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = self.predict_next(&window);
            out.push(next);
            if lag > 0 {
                window.remove(0);
                window.push(next);
            }
        }
        out
    }
}

/// Least-squares fit of the lag-`lag` autoregression. Falls back to ridge
/// regression with [`RIDGE_FALLBACK`] when the design is rank-deficient.
pub fn fit_linear(history: &[f64], lag: usize) -> Result<LinearModel> {
    if lag == 0 {
        return Err(Error::invalid("linear model lag must be >= 1"));
    }
    if history.len() <= lag {
        return Err(Error::invalid(format!(
            "history of {} values is too short for lag {lag}",
            history.len()
        )));
    }
    let rows = history.len() - lag;
    let cols = lag + 1;
    let design = DMatrix::from_fn(rows, cols, |r, c| if c == 0 { 1.0 } else { history[r + lag - c] });
    let target = DVector::from_iterator(rows, history[lag..].iter().copied());

    let svd = design.svd(true, true);
    let u = svd.u.as_ref().expect("computed");
    let v_t = svd.v_t.as_ref().expect("computed");
    let s = &svd.singular_values;
    let s_max = s.max();
    let full_rank = rows >= cols && s.iter().all(|&x| x > RANK_TOLERANCE * s_max);
    let ridge = (!full_rank).then_some(RIDGE_FALLBACK);
    let uty = u.transpose() * &target;
    let scaled = DVector::from_fn(s.len(), |i, _| {
        let si = s[i];
        let gain = match ridge {
            None => 1.0 / si,
            Some(lambda) => si / (si * si + lambda),
        };
        if si == 0.0 {
            0.0
        } else {
            gain * uty[i]
        }
    });
    let beta = v_t.transpose() * scaled;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("linear fit produced non-finite coefficients"));
    }
    Ok(LinearModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        ridge,
    })
}
