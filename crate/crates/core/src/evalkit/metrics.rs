use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// `|(beta_hat - beta_true) / beta_true| * 100`.
pub fn estimation_bias(beta_hat: f64, beta_true: f64) -> Result<f64> {
    if beta_true == 0.0 || !beta_true.is_finite() {
        return Err(Error::Domain(format!("bias is undefined for beta_true = {beta_true}")));
    }
    Ok(((beta_hat - beta_true) / beta_true).abs() * 100.0)
}

fn center(v: &[f64]) -> (Vec<f64>, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let ss = c.iter().map(|x| x * x).sum::<f64>();
    (c, ss)
}

/// Pearson correlation. Fails when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("lengths {} and {} differ", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::spec("correlation needs at least 3 rows"));
    }
    let (ca, sa) = center(a);
    let (cb, sb) = center(b);
    if !(sa > 0.0) || !(sb > 0.0) {
        return Err(Error::numeric("zero-variance input to correlation"));
    }
    let r = ca.iter().zip(&cb).map(|(x, y)| x * y).sum::<f64>() / (sa * sb).sqrt();
    Ok(r.clamp(-1.0, 1.0))
}

/// Correlations of one learned instrument with each auxiliary latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PccProfile {
    pub values: Vec<f64>,
    pub mean_abs: f64,
}

pub fn pcc_profile(z: &[f64], c: &Tensor) -> Result<PccProfile> {
    if c.rows() != z.len() {
        return Err(Error::dim(format!("z has {} rows, c has {}", z.len(), c.rows())));
    }
    if c.cols() == 0 {
        return Err(Error::dim("c has no columns"));
    }
    let values = (0..c.cols())
        .map(|j| {
            pearson(z, &c.column(j)).map_err(|e| match e {
                Error::Numeric(_) => Error::numeric(format!("column {j} of c has zero variance")),
                other => other,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    Ok(PccProfile { values, mean_abs })
}

/// Paired histograms of two standardized samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfComparison {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub true_mass: Vec<f64>,
    pub learned_mass: Vec<f64>,
    /// `sum |true_mass - learned_mass|`, in `[0, 2]`.
    pub l1: f64,
}

pub const PDF_RANGE: (f64, f64) = (-4.0, 4.0);
pub const PDF_BINS: usize = 50;

fn standardize(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::spec("need at least two values to standardize"));
    }
    let (c, ss) = center(v);
    let sd = (ss / (v.len() - 1) as f64).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::numeric("constant input cannot be standardized"));
    }
    Ok(c.into_iter().map(|x| x / sd).collect())
}

fn histogram(v: &[f64], bins: usize) -> Vec<f64> {
    let (lo, hi) = PDF_RANGE;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &x in v {
        // Tails beyond the range are folded into the outer bins.
        let k = ((x - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[k] += 1.0;
    }
    let n = v.len() as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    counts
}

/// Standardize both samples, flip the learned one when it correlates
/// negatively with the truth, and compare histograms over `[-4, 4]`.
pub fn pdf_compare(true_z: &[f64], learned_z: &[f64], bins: usize) -> Result<PdfComparison> {
    if bins < 2 {
        return Err(Error::spec(format!("bins={bins} must be at least 2")));
    }
    if true_z.len() != learned_z.len() {
        return Err(Error::dim("samples have different lengths"));
    }
    let t = standardize(true_z)?;
    let mut l = standardize(learned_z)?;
    if pearson(&t, &l)? < 0.0 {
        l.iter_mut().for_each(|x| *x = -*x);
    }
    let (lo, hi) = PDF_RANGE;
    let edges = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
    let true_mass = histogram(&t, bins);
    let learned_mass = histogram(&l, bins);
    let l1 = true_mass.iter().zip(&learned_mass).map(|(a, b)| (a - b).abs()).sum();
    Ok(PdfComparison {
        edges,
        true_mass,
        learned_mass,
        l1,
    })
}

impl PdfComparison {
    /// CSV with header `bin_left,bin_right,true_mass,learned_mass`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["bin_left", "bin_right", "true_mass", "learned_mass"])?;
        for k in 0..self.true_mass.len() {
            wtr.write_record([
                self.edges[k].to_string(),
                self.edges[k + 1].to_string(),
                self.true_mass[k].to_string(),
                self.learned_mass[k].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn bias_values() {
        assert_eq!(estimation_bias(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(estimation_bias(0.0, 2.0).unwrap(), 100.0);
        assert_eq!(estimation_bias(3.0, 2.0).unwrap(), 50.0);
        assert!(matches!(estimation_bias(1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn pcc_signs() {
        let z = normals(100, 1);
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        let c = Tensor::from_columns(&[z.clone(), neg, normals(100, 2)]).unwrap();
        let p = pcc_profile(&z, &c).unwrap();
        assert!((p.values[0] - 1.0).abs() < 1e-15);
        assert!((p.values[1] + 1.0).abs() < 1e-15);
        let expected = (2.0 + p.values[2].abs()) / 3.0;
        assert!((p.mean_abs - expected).abs() < 1e-15);
    }

    #[test]
    fn pcc_zero_variance_names_column() {
        let z = normals(10, 1);
        let c = Tensor::from_columns(&[normals(10, 2), vec![3.0; 10]]).unwrap();
        let err = pcc_profile(&z, &c).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("column 1"));
    }

    #[test]
    fn pdf_identical_and_shifted() {
        let a = normals(5000, 3);
        let same = pdf_compare(&a, &a, PDF_BINS).unwrap();
        assert_eq!(same.l1, 0.0);
        assert_eq!(same.edges.len(), 51);
        assert!((same.true_mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let shifted: Vec<f64> = normals(5000, 4).iter().map(|v| 5.0 + v).collect();
        let r = pdf_compare(&a, &shifted, PDF_BINS).unwrap();
        assert!(r.l1 < 0.15, "{}", r.l1);

        let flipped: Vec<f64> = a.iter().map(|v| -3.0 * v + 1.0).collect();
        assert!(pdf_compare(&a, &flipped, PDF_BINS).unwrap().l1 < 1e-3);
    }

    #[test]
    fn pdf_errors() {
        let a = normals(10, 3);
        assert!(pdf_compare(&a, &a, 1).is_err());
        assert!(matches!(pdf_compare(&a, &[1.0; 10], 10), Err(Error::Numeric(_))));
    }

    #[test]
    fn pdf_csv_layout() {
        let a = normals(100, 3);
        let r = pdf_compare(&a, &normals(100, 5), 4).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "bin_left,bin_right,true_mass,learned_mass");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("-4,-2,"));
    }
}
