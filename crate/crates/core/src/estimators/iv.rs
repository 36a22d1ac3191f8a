use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{ols, residual_sum_of_squares, RidgeFit};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::evalkit::PccProfile;

/// Fold assignment stream of the cross-fitting seed.
const FOLD_STREAM: u64 = 0x2_0000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Wald,
    Tsls,
    OrthoIv,
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorId::Wald => "wald",
            EstimatorId::Tsls => "tsls",
            EstimatorId::OrthoIv => "ortho_iv",
        })
    }
}

/// Regressor used for the cross-fitted nuisance functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuisanceModel {
    /// Linear least squares with an L2 penalty on the centered slopes.
    Ridge { lambda: f64 },
    /// Ridge on the covariates plus their squares. Squares of 0/1 columns
    /// are dropped since they repeat the column.
    QuadraticRidge { lambda: f64 },
}

impl Default for NuisanceModel {
    fn default() -> Self {
        NuisanceModel::Ridge { lambda: 1e-3 }
    }
}

impl NuisanceModel {
    pub fn validate(&self) -> Result<()> {
        let lambda = self.lambda();
        if lambda.is_finite() && lambda >= 0.0 {
            Ok(())
        } else {
            Err(Error::spec(format!("ridge lambda={lambda} must be non-negative")))
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            NuisanceModel::Ridge { lambda } | NuisanceModel::QuadraticRidge { lambda } => lambda,
        }
    }

    pub fn id(&self) -> String {
        match self {
            NuisanceModel::Ridge { lambda } => format!("ridge(lambda={lambda})"),
            NuisanceModel::QuadraticRidge { lambda } => format!("quadratic_ridge(lambda={lambda})"),
        }
    }

    /// Regressor columns built from `x`.
    fn features(&self, x: &Tensor) -> Vec<Vec<f64>> {
        let mut cols: Vec<Vec<f64>> = (0..x.cols()).map(|j| x.column(j)).collect();
        if let NuisanceModel::QuadraticRidge { .. } = self {
            for j in 0..x.cols() {
                let c = &cols[j];
                if c.iter().all(|&v| v == 0.0 || v == 1.0) {
                    continue;
                }
                let sq = c.iter().map(|v| v * v).collect();
                cols.push(sq);
            }
        }
        cols
    }
}

/// Shape of the effect function in the moment condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectModel {
    /// A single scalar effect.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `|Cov(z, w)| / sqrt(Var z Var w)`
    pub first_stage_strength: Option<f64>,
    pub pcc_profile: Option<PccProfile>,
    pub runtime_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub method: EstimatorId,
    pub beta_hat: f64,
    pub effect_model: EffectModel,
    pub nuisance: Option<String>,
    pub folds: Option<usize>,
    pub seed: u64,
    pub bias_pct: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl EstimationReport {
    fn new(method: EstimatorId, beta_hat: f64, seed: u64) -> Result<Self> {
        if !beta_hat.is_finite() {
            return Err(Error::numeric(format!("{method} estimate is not finite")));
        }
        Ok(Self {
            method,
            beta_hat,
            effect_model: EffectModel::Constant,
            nuisance: None,
            folds: None,
            seed,
            bias_pct: None,
            diagnostics: Diagnostics::default(),
        })
    }
}

fn check_lengths(z: &[f64], w: &[f64], y: &[f64]) -> Result<usize> {
    let n = z.len();
    if w.len() != n || y.len() != n {
        return Err(Error::dim(format!("z, w, y lengths differ: {n}, {}, {}", w.len(), y.len())));
    }
    if z.iter().chain(w).chain(y).any(|v| !v.is_finite()) {
        return Err(Error::numeric("estimator inputs contain non-finite values"));
    }
    Ok(n)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample covariance.
pub(crate) fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

/// `|Cov(z, w)| / sqrt(Var z Var w)`, zero when either is constant.
pub fn first_stage_strength(z: &[f64], w: &[f64]) -> f64 {
    let denom = (covariance(z, z) * covariance(w, w)).sqrt();
    if denom > 0.0 {
        covariance(z, w).abs() / denom
    } else {
        0.0
    }
}

/// `Cov(z, y) / Cov(z, w)`.
pub fn wald_ratio(z: &[f64], w: &[f64], y: &[f64]) -> Result<f64> {
    let n = check_lengths(z, w, y)?;
    if n < 3 {
        return Err(Error::spec(format!("wald ratio needs at least 3 rows, got {n}")));
    }
    let czw = covariance(z, w);
    let scale = (covariance(z, z) * covariance(w, w)).sqrt();
    if !(czw.abs() >= 1e-10 * scale) || scale == 0.0 {
        return Err(Error::WeakInstrument(format!(
            "Cov(z, w) = {czw:e} is negligible against sqrt(Var z Var w) = {scale:e}"
        )));
    }
    Ok(covariance(z, y) / czw)
}

pub fn wald_report(z: &[f64], w: &[f64], y: &[f64], seed: u64) -> Result<EstimationReport> {
    let mut r = EstimationReport::new(EstimatorId::Wald, wald_ratio(z, w, y)?, seed)?;
    r.diagnostics.first_stage_strength = Some(first_stage_strength(z, w));
    Ok(r)
}

fn design(n: usize, leading: &[&[f64]], covariates: Option<&Tensor>) -> DMatrix<f64> {
    let p = covariates.map_or(0, Tensor::cols);
    let k = 1 + leading.len();
    DMatrix::from_fn(n, k + p, |i, j| match j {
        0 => 1.0,
        j if j < k => leading[j - 1][i],
        j => covariates.expect("p > 0 implies covariates").get(i, j - k),
    })
}

/// Two-stage least squares with an intercept and optional exogenous
/// covariates in both stages.
pub fn tsls(z: &[f64], w: &[f64], y: &[f64], covariates: Option<&Tensor>) -> Result<EstimationReport> {
    let n = check_lengths(z, w, y)?;
    if let Some(c) = covariates {
        if c.rows() != n {
            return Err(Error::dim(format!("covariates have {} rows, expected {n}", c.rows())));
        }
    }
    let wv = DVector::from_column_slice(w);
    let first = design(n, &[z], covariates);
    let gamma = ols(&first, &wv, "first stage")?;

    // F statistic for dropping z from the first stage.
    let restricted = first.clone().remove_column(1);
    let rss_u = residual_sum_of_squares(&first, &wv, &gamma);
    let rss_r = residual_sum_of_squares(&restricted, &wv, &ols(&restricted, &wv, "restricted first stage")?);
    let dof = n as f64 - first.ncols() as f64;
    let f_stat = if rss_u > 0.0 {
        (rss_r - rss_u) / (rss_u / dof.max(1.0))
    } else {
        f64::INFINITY
    };
    if !(f_stat >= 1e-6) {
        return Err(Error::WeakInstrument(format!("first-stage F = {f_stat:e}")));
    }

    let w_hat: Vec<f64> = (&first * &gamma).iter().copied().collect();
    let second = design(n, &[&w_hat], covariates);
    let beta = ols(&second, &DVector::from_column_slice(y), "second stage")?;
    let mut r = EstimationReport::new(EstimatorId::Tsls, beta[1], 0)?;
    r.diagnostics.first_stage_strength = Some(first_stage_strength(z, w));
    Ok(r)
}

/// Seeded balanced fold labels: a random permutation dealt round-robin.
pub fn fold_labels(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(FOLD_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank % folds;
    }
    labels
}

/// Cross-fitted orthogonal IV with a constant effect: residualize `y`, `w`
/// and `z` on `x` with nuisances fit outside each fold, then solve the
/// moment `E[(y~ - theta w~) z~] = 0`.
pub fn ortho_iv(
    z: &[f64],
    w: &[f64],
    y: &[f64],
    x: &Tensor,
    folds: usize,
    nuisance: NuisanceModel,
    seed: u64,
) -> Result<EstimationReport> {
    if folds < 2 {
        return Err(Error::spec(format!("cross-fitting needs at least 2 folds, got {folds}")));
    }
    let n = check_lengths(z, w, y)?;
    if n < folds {
        return Err(Error::spec(format!("{n} rows cannot fill {folds} folds")));
    }
    let labels = fold_labels(n, folds, seed);
    let mut r = ortho_iv_with_folds(z, w, y, x, &labels, nuisance)?;
    r.seed = seed;
    Ok(r)
}

/// [`ortho_iv`] with an explicit fold label per row. Every label in
/// `0..=max` must occur. The estimate depends only on the partition, not on
/// which label names which part.
pub fn ortho_iv_with_folds(
    z: &[f64],
    w: &[f64],
    y: &[f64],
    x: &Tensor,
    labels: &[usize],
    nuisance: NuisanceModel,
) -> Result<EstimationReport> {
    nuisance.validate()?;
    let n = check_lengths(z, w, y)?;
    if x.rows() != n || labels.len() != n {
        return Err(Error::dim(format!(
            "x has {} rows and {} fold labels for {n} observations",
            x.rows(),
            labels.len()
        )));
    }
    if !x.is_finite() {
        return Err(Error::numeric("covariates contain non-finite values"));
    }
    let folds = labels.iter().max().map_or(0, |m| m + 1);
    if folds < 2 {
        return Err(Error::spec("cross-fitting needs at least 2 folds"));
    }
    if let Some(k) = (0..folds).find(|k| !labels.contains(k)) {
        return Err(Error::spec(format!("fold {k} is empty")));
    }
    let features = nuisance.features(x);
    let p = features.len();
    let lambda = nuisance.lambda();

    let mut resid = vec![[0.0; 3]; n];
    for k in 0..folds {
        // Rows are gathered in their original order so that relabeling folds
        // cannot change any floating-point sum.
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        if train.is_empty() {
            return Err(Error::spec(format!("fold {k} leaves no training rows")));
        }
        let xs = |rows: &[usize]| DMatrix::from_fn(rows.len(), p, |r, j| features[j][rows[r]]);
        let targets = DMatrix::from_fn(train.len(), 3, |r, j| [y, w, z][j][train[r]]);
        let fit = RidgeFit::fit(&xs(&train), &targets, lambda)?;
        let pred = fit.predict(&xs(&test));
        for (r, &i) in test.iter().enumerate() {
            resid[i] = [y[i] - pred[(r, 0)], w[i] - pred[(r, 1)], z[i] - pred[(r, 2)]];
        }
    }

    let (mut yz, mut wz, mut ww, mut zz) = (0.0, 0.0, 0.0, 0.0);
    for [ry, rw, rz] in &resid {
        yz += ry * rz;
        wz += rw * rz;
        ww += rw * rw;
        zz += rz * rz;
    }
    if !(wz.abs() >= 1e-10 * (ww * zz).sqrt()) || ww * zz == 0.0 {
        return Err(Error::WeakInstrument(format!(
            "residualized treatment and instrument are nearly orthogonal (sum = {wz:e})"
        )));
    }
    let mut r = EstimationReport::new(EstimatorId::OrthoIv, yz / wz, 0)?;
    r.nuisance = Some(nuisance.id());
    r.folds = Some(folds);
    r.diagnostics.first_stage_strength = Some(first_stage_strength(z, w));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn wald_perfect_instrument() {
        let z = normals(100, 1);
        let y: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        assert!((wald_ratio(&z, &z, &y).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wald_errors() {
        assert!(matches!(wald_ratio(&[1.0, 2.0], &[0.0, 1.0], &[1.0, 1.0]), Err(Error::Spec(_))));
        let z = [1.0, 1.0, -1.0, -1.0];
        let w = [0.0, 1.0, 0.0, 1.0];
        assert!(matches!(wald_ratio(&z, &w, &[1.0, 2.0, 3.0, 4.0]), Err(Error::WeakInstrument(_))));
        assert!(matches!(wald_ratio(&[1.0; 4], &w, &w), Err(Error::WeakInstrument(_))));
        assert!(wald_ratio(&z, &w, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tsls_with_treatment_as_instrument_is_ols() {
        let w: Vec<f64> = normals(200, 2).iter().map(|v| (*v > 0.0) as u8 as f64).collect();
        let e = normals(200, 3);
        let y: Vec<f64> = w.iter().zip(&e).map(|(w, e)| 1.0 + 1.7 * w + e).collect();
        let r = tsls(&w, &w, &y, None).unwrap();
        let slope = covariance(&w, &y) / covariance(&w, &w);
        assert!((r.beta_hat - slope).abs() < 1e-10 * slope.abs().max(1.0));
        assert_eq!(r.method, EstimatorId::Tsls);
    }

    #[test]
    fn tsls_errors() {
        let z = [1.0, 1.0, -1.0, -1.0, 1.0, -1.0];
        let w = [0.0, 1.0, 0.0, 1.0, 0.5, 0.5];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(matches!(tsls(&z, &w, &y, None), Err(Error::WeakInstrument(_))));
        let dup = Tensor::from_columns(&[z.to_vec()]).unwrap();
        let w2 = [0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        assert!(matches!(tsls(&z, &w2, &y, Some(&dup)), Err(Error::LinearAlgebra(_))));
    }

    #[test]
    fn ortho_with_noise_covariates_tracks_wald() {
        let n = 5000;
        let z = normals(n, 4);
        let u = normals(n, 5);
        let w: Vec<f64> = z.iter().zip(&u).map(|(z, u)| 0.8 * z + u).collect();
        let y: Vec<f64> = w.iter().zip(&u).map(|(w, u)| 2.0 * w + u).collect();
        let x = Tensor::from_columns(&[normals(n, 6), normals(n, 7)]).unwrap();
        let o = ortho_iv(&z, &w, &y, &x, 2, NuisanceModel::default(), 0).unwrap();
        let wald = wald_ratio(&z, &w, &y).unwrap();
        assert!((o.beta_hat - wald).abs() < 1e-2, "{} vs {wald}", o.beta_hat);
        assert_eq!(o.folds, Some(2));
    }

    #[test]
    fn ortho_fold_checks() {
        let z = normals(10, 1);
        let x = Tensor::zeros(10, 0);
        assert!(matches!(ortho_iv(&z, &z, &z, &x, 1, NuisanceModel::default(), 0), Err(Error::Spec(_))));
        let labels = vec![0, 0, 2, 2, 0, 2, 0, 2, 0, 2];
        assert!(matches!(
            ortho_iv_with_folds(&z, &z, &z, &x, &labels, NuisanceModel::default()),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn quadratic_nuisance_removes_squared_confounding() {
        // z is only valid given x^2, which also drives y.
        let n = 20_000;
        let (x, u, e1, e2, e3) = (normals(n, 1), normals(n, 2), normals(n, 3), normals(n, 4), normals(n, 5));
        let z: Vec<f64> = (0..n).map(|i| x[i] * x[i] + e1[i]).collect();
        let w: Vec<f64> = (0..n).map(|i| z[i] + u[i] + e2[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.5 * w[i] + 3.0 * x[i] * x[i] + u[i] + e3[i]).collect();
        let xs = Tensor::from_columns(&[x]).unwrap();
        let linear = ortho_iv(&z, &w, &y, &xs, 2, NuisanceModel::default(), 0).unwrap().beta_hat;
        let quad = ortho_iv(&z, &w, &y, &xs, 2, NuisanceModel::QuadraticRidge { lambda: 1e-3 }, 0).unwrap();
        assert!((linear - 1.5).abs() > 0.5, "{linear}");
        assert!((quad.beta_hat - 1.5).abs() < 0.05, "{}", quad.beta_hat);
        assert_eq!(quad.nuisance.as_deref(), Some("quadratic_ridge(lambda=0.001)"));
    }

    #[test]
    fn quadratic_features_skip_binary_columns() {
        let x = Tensor::from_columns(&[vec![0.0, 1.0, 1.0], vec![2.0, -1.0, 0.5]]).unwrap();
        let f = NuisanceModel::QuadraticRidge { lambda: 0.0 }.features(&x);
        assert_eq!(f, vec![vec![0.0, 1.0, 1.0], vec![2.0, -1.0, 0.5], vec![4.0, 1.0, 0.25]]);
        assert_eq!(NuisanceModel::default().features(&x).len(), 2);
    }

    #[test]
    fn fold_labels_are_balanced_and_seeded() {
        let a = fold_labels(11, 3, 9);
        assert_eq!(a, fold_labels(11, 3, 9));
        let counts: Vec<usize> = (0..3).map(|k| a.iter().filter(|&&l| l == k).count()).collect();
        assert_eq!(counts, vec![4, 4, 3]);
    }
}
