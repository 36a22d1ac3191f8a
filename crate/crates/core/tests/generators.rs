//! Moment checks of the synthetic generators against the structural
//! equations, at n = 10^6 and a 5-sigma tolerance.

use divae_core::scmgen::{generate, Dataset, OutcomeForm, ScenarioSpec};

const N: usize = 1_000_000;
const SIGMAS: f64 = 5.0;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

/// Mean of a variable with the given variance.
fn check_mean(name: &str, v: &[f64], expected: f64, variance: f64) {
    let se = (variance / v.len() as f64).sqrt();
    let got = mean(v);
    assert!((got - expected).abs() < SIGMAS * se, "{name}: mean {got}, expected {expected} (se {se})");
}

/// Covariance of jointly Gaussian variables.
fn check_cov(name: &str, a: &[f64], b: &[f64], var_a: f64, var_b: f64, expected: f64) {
    let se = ((var_a * var_b + expected * expected) / a.len() as f64).sqrt();
    let got = cov(a, b);
    assert!((got - expected).abs() < SIGMAS * se, "{name}: cov {got}, expected {expected} (se {se})");
}

fn col(ds: &Dataset, name: &str) -> Vec<f64> {
    ds.covariate(name).or_else(|| ds.latent_column(name)).unwrap_or_else(|| panic!("no column {name}"))
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Shared checks for the confounding block and the treatment/outcome
/// mechanisms. `zs` are the latent instrument columns.
fn check_structure(ds: &Dataset, zs: &[&str], surrogates: &[&str], form: OutcomeForm) {
    let u = col(ds, "U");
    let u1 = col(ds, "U1");
    let u2 = col(ds, "U2");
    let x = |k: usize| col(ds, &format!("X{k}"));

    for name in ["U1", "U2", "X1", "X3", "X5", "X7"] {
        let v = col(ds, name);
        check_mean(name, &v, 0.0, 1.0);
        check_cov(name, &v, &v, 1.0, 1.0, 1.0);
    }
    check_cov("var U", &u, &u, 2.14, 2.14, 2.14);
    check_cov("cov U,X1", &u, &x(1), 2.14, 1.0, 0.8);
    check_cov("var X2", &x(2), &x(2), 10.06, 10.06, 10.06);
    check_cov("cov X2,U", &x(2), &u, 10.06, 2.14, 4.28);
    check_cov("var X4", &x(4), &x(4), 2.5, 2.5, 2.5);
    check_cov("cov X4,U1", &x(4), &u1, 2.5, 1.0, 1.0);
    check_cov("var X6", &x(6), &x(6), 1.86, 1.86, 1.86);
    check_cov("cov X6,U2", &x(6), &u2, 1.86, 1.0, 0.6);
    check_cov("cov X3,U", &x(3), &u, 1.0, 2.14, 0.0);

    for (z, s) in zs.iter().zip(surrogates) {
        let (z, s) = (col(ds, z), col(ds, s));
        check_mean("Z", &z, 0.0, 1.0);
        check_cov("var S", &s, &s, 2.5, 2.5, 2.5);
        check_cov("cov S,Z", &s, &z, 2.5, 1.0, 1.0);
        // Exclusion: the surrogate is independent of the confounders.
        check_cov("cov S,U", &s, &u, 2.5, 2.14, 0.0);
        check_cov("cov S,U1", &s, &u1, 2.5, 1.0, 0.0);
    }

    // Treatment: W - p has mean zero and per-row variance p(1 - p).
    let zcols: Vec<Vec<f64>> = zs.iter().map(|z| col(ds, z)).collect();
    let (x4, x5) = (x(4), x(5));
    let p: Vec<f64> = (0..ds.n())
        .map(|i| {
            let zsum: f64 = zcols.iter().map(|c| c[i]).sum();
            logistic(-2.0 + 2.0 * u[i] + 2.0 * zsum + 3.0 * x4[i] + x5[i] + 3.0 * u2[i])
        })
        .collect();
    let resid: Vec<f64> = ds.w.iter().zip(&p).map(|(w, p)| w - p).collect();
    let bernoulli_var = mean(&p.iter().map(|p| p * (1.0 - p)).collect::<Vec<_>>());
    check_mean("W - p", &resid, 0.0, bernoulli_var);
    assert!(ds.w.iter().all(|&w| w == 0.0 || w == 1.0));

    // Outcome: the structural residual is N(0, 1).
    let (x3, x6, x7) = (x(3), x(6), x(7));
    let eps: Vec<f64> = (0..ds.n())
        .map(|i| {
            let x6_term = match form {
                OutcomeForm::Linear => x6[i],
                OutcomeForm::Nonlinear => x6[i] * x6[i],
            };
            ds.y[i] - (2.0 + 2.0 * ds.w[i] + 2.0 * u[i] + 3.0 * u1[i] + 2.0 * x3[i] + 2.0 * x6_term + 2.0 * x7[i])
        })
        .collect();
    check_mean("eps_y", &eps, 0.0, 1.0);
    check_cov("var eps_y", &eps, &eps, 1.0, 1.0, 1.0);
    check_cov("eps_y indep W", &eps, &ds.w, 1.0, 0.25, 0.0);
}

#[test]
fn single_siv_linear_moments() {
    let ds = generate(&ScenarioSpec::single_siv(N, OutcomeForm::Linear, 2024)).unwrap();
    check_structure(&ds, &["Z"], &["S"], OutcomeForm::Linear);
}

#[test]
fn single_siv_nonlinear_moments() {
    let ds = generate(&ScenarioSpec::single_siv(N, OutcomeForm::Nonlinear, 7)).unwrap();
    check_structure(&ds, &["Z"], &["S"], OutcomeForm::Nonlinear);
}

#[test]
fn multi_siv_moments() {
    let ds = generate(&ScenarioSpec::multi_siv(N, OutcomeForm::Linear, 3, 11)).unwrap();
    check_structure(&ds, &["Z1", "Z2", "Z3"], &["S1", "S2", "S3"], OutcomeForm::Linear);
    let (z1, z2) = (col(&ds, "Z1"), col(&ds, "Z2"));
    check_cov("Z1 indep Z2", &z1, &z2, 1.0, 1.0, 0.0);
}

#[test]
fn highdim_padding_is_inert_noise() {
    let ds = generate(&ScenarioSpec::highdim(N, OutcomeForm::Linear, 16, 5)).unwrap();
    assert_eq!(ds.d(), 16);
    check_structure(&ds, &["Z"], &["S"], OutcomeForm::Linear);
    let u = col(&ds, "U");
    for k in 8..=15 {
        let p = col(&ds, &format!("X{k}"));
        check_mean("padding", &p, 0.0, 1.0);
        check_cov("padding var", &p, &p, 1.0, 1.0, 1.0);
        check_cov("padding indep U", &p, &u, 1.0, 2.14, 0.0);
        check_cov("padding indep W", &p, &ds.w, 1.0, 0.25, 0.0);
    }
}

#[test]
fn seeds_are_reproducible_and_distinct() {
    let a = generate(&ScenarioSpec::single_siv(1000, OutcomeForm::Linear, 1)).unwrap();
    let b = generate(&ScenarioSpec::single_siv(1000, OutcomeForm::Linear, 1)).unwrap();
    let c = generate(&ScenarioSpec::single_siv(1000, OutcomeForm::Linear, 2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.y, c.y);
}
