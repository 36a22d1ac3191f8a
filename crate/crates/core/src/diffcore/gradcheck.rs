use super::tape::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_relative_error: f64,
    /// `(tensor index, element index)` where the maximum occurred.
    pub worst: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Evaluate `loss` on a fresh tape and return its value.
pub fn eval_loss<F>(params: &[Tensor], loss: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = loss(&mut g, &vars)?;
    let v = g.scalar(out);
    if !v.is_finite() {
        return Err(Error::numeric(format!("loss is not finite ({v})")));
    }
    Ok(v)
}

/// Value and reverse-mode gradient of `loss`.
pub fn value_and_grad<F>(params: &[Tensor], loss: &F) -> Result<(f64, Vec<Tensor>)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = loss(&mut g, &vars)?;
    let v = g.scalar(out);
    if !v.is_finite() {
        return Err(Error::numeric(format!("loss is not finite ({v})")));
    }
    let mut grads = g.backward(out)?;
    Ok((v, vars.into_iter().map(|x| grads.take(x)).collect()))
}

/// Central-difference gradient with step `h`.
pub fn finite_difference<F>(params: &[Tensor], h: f64, loss: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut probe = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut grad = vec![0.0; params[t].len()];
        for (e, slot) in grad.iter_mut().enumerate() {
            let orig = params[t].data()[e];
            probe[t].data_mut()[e] = orig + h;
            let plus = eval_loss(&probe, loss)?;
            probe[t].data_mut()[e] = orig - h;
            let minus = eval_loss(&probe, loss)?;
            probe[t].data_mut()[e] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        out.push(Tensor::new(params[t].shape().to_vec(), grad)?);
    }
    Ok(out)
}

/// Coordinate-wise comparison of two gradient lists.
pub fn compare_gradients(analytic: &[Tensor], numeric: &[Tensor]) -> Result<GradCheckReport> {
    if analytic.len() != numeric.len() || analytic.iter().zip(numeric).any(|(a, n)| !a.same_shape(n)) {
        return Err(Error::dim("gradient lists have different shapes"));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        coordinates: 0,
    };
    for (t, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (e, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            report.coordinates += 1;
            let rel = (av - nv).abs() / 1f64.max(av.abs()).max(nv.abs());
            if rel > report.max_relative_error || rel.is_nan() {
                report.max_relative_error = rel;
                report.worst = (t, e);
                report.worst_analytic = av;
                report.worst_numeric = nv;
            }
        }
    }
    Ok(report)
}

/// Compare reverse-mode gradients of `loss` at `params` against central
/// differences with step `h`.
pub fn grad_check<F>(params: &[Tensor], h: f64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::Domain(format!("finite-difference step {h} outside (0, 1e-2]")));
    }
    let (_, analytic) = value_and_grad(params, &loss)?;
    let numeric = finite_difference(params, h, &loss)?;
    compare_gradients(&analytic, &numeric)
}
