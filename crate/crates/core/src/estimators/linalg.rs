//! Least-squares helpers backed by nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on the diagonal of `R` below which a design is treated
/// as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares through a thin QR factorization.
pub(crate) fn ols(design: &DMatrix<f64>, target: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let (n, p) = design.shape();
    if n < p {
        return Err(Error::LinearAlgebra(format!("{what}: {n} rows for {p} coefficients")));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if let Some(j) = (0..p).find(|&j| !(r[(j, j)].abs() > RANK_TOL * scale)) {
        return Err(Error::LinearAlgebra(format!("{what}: design is rank deficient at column {j}")));
    }
    let qty = qr.q().tr_mul(target);
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::LinearAlgebra(format!("{what}: triangular solve failed")))
}

pub(crate) fn residual_sum_of_squares(design: &DMatrix<f64>, target: &DVector<f64>, coef: &DVector<f64>) -> f64 {
    (target - design * coef).norm_squared()
}

/// Ridge fit on centered columns with an unpenalized intercept. Returns a
/// predictor for new rows. With no columns it predicts the target mean.
pub(crate) struct RidgeFit {
    x_mean: Vec<f64>,
    t_mean: Vec<f64>,
    /// `p x targets`
    coef: DMatrix<f64>,
}

impl RidgeFit {
    /// Fit every column of `targets` (`n x k`) on `x` (`n x p`) at once.
    pub fn fit(x: &DMatrix<f64>, targets: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 {
            return Err(Error::dim("ridge fit on zero rows"));
        }
        let x_mean: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
        let t_mean: Vec<f64> = (0..targets.ncols()).map(|j| targets.column(j).mean()).collect();
        if p == 0 {
            return Ok(Self {
                x_mean,
                t_mean,
                coef: DMatrix::zeros(0, targets.ncols()),
            });
        }
        let mut xc = x.clone();
        for (j, m) in x_mean.iter().enumerate() {
            xc.column_mut(j).add_scalar_mut(-m);
        }
        let mut tc = targets.clone();
        for (j, m) in t_mean.iter().enumerate() {
            tc.column_mut(j).add_scalar_mut(-m);
        }
        let mut gram = xc.tr_mul(&xc);
        for j in 0..p {
            gram[(j, j)] += lambda;
        }
        let rhs = xc.tr_mul(&tc);
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::LinearAlgebra("ridge normal equations are not positive definite".into()))?;
        Ok(Self {
            x_mean,
            t_mean,
            coef: chol.solve(&rhs),
        })
    }

    /// Predictions for `x` (`m x p`), one column per target.
    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::from_fn(x.nrows(), self.t_mean.len(), |_, j| self.t_mean[j]);
        if !self.x_mean.is_empty() {
            let mut xc = x.clone();
            for (j, m) in self.x_mean.iter().enumerate() {
                xc.column_mut(j).add_scalar_mut(-m);
            }
            out += xc * &self.coef;
        }
        out
    }
}
