//! Structural equations of the synthetic benchmarks.
//!
//! `N(m, v)` is read as mean and *variance*, so the noise terms
//! `eps ~ N(0, 0.5)` have standard deviation `sqrt(0.5)`.
//!
//! Every variable is drawn from its own counter-based substream (ChaCha8
//! keyed by the scenario seed, stream id per variable). Adding a column never
//! shifts the draws of an existing one, so the multi-SIV and high-dimensional
//! generators share their common variables with the single-SIV draw of the
//! same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::{Dataset, LatentTruth};
use super::spec::{Generator, OutcomeForm, ScenarioSpec};
use crate::diffcore::{sigmoid, Tensor};
use crate::error::{Error, Result};

/// Causal effect of `W` on `Y` in every synthetic scenario.
pub const BETA_TRUE: f64 = 2.0;

const NOISE_VARIANCE: f64 = 0.5;

/// Stream ids, fixed forever so datasets stay reproducible.
mod stream {
    pub const Z: u64 = 1;
    pub const U1: u64 = 2;
    pub const U2: u64 = 3;
    pub const X1: u64 = 4;
    pub const X3: u64 = 5;
    pub const X5: u64 = 6;
    pub const X7: u64 = 7;
    pub const EPS1: u64 = 8;
    pub const EPS2: u64 = 9;
    pub const EPS3: u64 = 10;
    pub const EPS4: u64 = 11;
    pub const EPS_S: u64 = 12;
    pub const BASE_S: u64 = 13;
    pub const BASE_U: u64 = 14;
    pub const BASE_X2: u64 = 15;
    pub const BASE_X4: u64 = 16;
    pub const BASE_X6: u64 = 17;
    pub const TREATMENT: u64 = 18;
    pub const EPS_Y: u64 = 19;
    /// `Z_k`, `S_k` base and `eps_{S_k}` for k >= 2.
    pub const EXTRA_Z: u64 = 100;
    pub const EXTRA_BASE_S: u64 = 110;
    pub const EXTRA_EPS_S: u64 = 120;
    /// Padding covariates of the high-dimensional scenario.
    pub const PADDING: u64 = 1000;
}

fn substream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(seed: u64, id: u64, n: usize, variance: f64) -> Vec<f64> {
    let sd = variance.sqrt();
    let mut rng = substream(seed, id);
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn uniform(seed: u64, id: u64, n: usize) -> Vec<f64> {
    let mut rng = substream(seed, id);
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// `P(W = 1)` for the single-SIV scenario:
/// `1 / (1 + exp(2 - 2u - 2z - 3 x4 - x5 - 3 u2))`.
pub fn propensity_single_siv(u: f64, z: f64, x4: f64, x5: f64, u2: f64) -> f64 {
    propensity(u, &[z], x4, x5, u2)
}

/// Same form with one `-2 z_k` term per latent instrument.
pub fn propensity(u: f64, zs: &[f64], x4: f64, x5: f64, u2: f64) -> f64 {
    let z: f64 = zs.iter().sum();
    sigmoid(-(2.0 - 2.0 * u - 2.0 * z - 3.0 * x4 - x5 - 3.0 * u2))
}

struct Core {
    z: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    u: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    x: [Vec<f64>; 7],
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| alpha * a + b).collect()
}

fn draw_core(n: usize, seed: u64, siv_count: usize) -> Core {
    let std_n = |id| normal(seed, id, n, 1.0);
    let eps = |id| normal(seed, id, n, NOISE_VARIANCE);

    let mut z = vec![std_n(stream::Z)];
    let mut s = vec![add(&add(&std_n(stream::BASE_S), &z[0]), &eps(stream::EPS_S))];
    for k in 2..=siv_count as u64 {
        let zk = std_n(stream::EXTRA_Z + k);
        let sk = add(&add(&std_n(stream::EXTRA_BASE_S + k), &zk), &eps(stream::EXTRA_EPS_S + k));
        z.push(zk);
        s.push(sk);
    }

    let u1 = std_n(stream::U1);
    let u2 = std_n(stream::U2);
    let x1 = std_n(stream::X1);
    let x3 = std_n(stream::X3);
    let x5 = std_n(stream::X5);
    let x7 = std_n(stream::X7);

    // U = N(0,1) + 0.8 X1 + eps1
    let u = add(&axpy(0.8, &x1, &std_n(stream::BASE_U)), &eps(stream::EPS1));
    // X2 = N(0,1) + 2 U + eps2
    let x2 = add(&axpy(2.0, &u, &std_n(stream::BASE_X2)), &eps(stream::EPS2));
    // X4 = N(0,1) + U1 + eps3
    let x4 = add(&add(&std_n(stream::BASE_X4), &u1), &eps(stream::EPS3));
    // X6 = N(0,1) + 0.6 U2 + eps4
    let x6 = add(&axpy(0.6, &u2, &std_n(stream::BASE_X6)), &eps(stream::EPS4));

    Core {
        z,
        s,
        u,
        u1,
        u2,
        x: [x1, x2, x3, x4, x5, x6, x7],
    }
}

fn treatment_and_outcome(core: &Core, n: usize, seed: u64, form: OutcomeForm) -> (Vec<f64>, Vec<f64>) {
    let draws = uniform(seed, stream::TREATMENT, n);
    let eps_y = normal(seed, stream::EPS_Y, n, 1.0);
    let [_, _, x3, x4, x5, x6, x7] = &core.x;
    let mut w = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut zs = vec![0.0; core.z.len()];
    for i in 0..n {
        for (slot, zk) in zs.iter_mut().zip(&core.z) {
            *slot = zk[i];
        }
        let p = propensity(core.u[i], &zs, x4[i], x5[i], core.u2[i]);
        let wi = if draws[i] < p { 1.0 } else { 0.0 };
        let x6_term = match form {
            OutcomeForm::Linear => x6[i],
            OutcomeForm::Nonlinear => x6[i] * x6[i],
        };
        y.push(
            2.0 + BETA_TRUE * wi + 2.0 * core.u[i] + 3.0 * core.u1[i] + 2.0 * x3[i] + 2.0 * x6_term + 2.0 * x7[i] + eps_y[i],
        );
        w.push(wi);
    }
    (w, y)
}

fn assemble(core: Core, padding: Vec<Vec<f64>>, w: Vec<f64>, y: Vec<f64>) -> Result<Dataset> {
    let single = core.s.len() == 1;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (k, s) in core.s.into_iter().enumerate() {
        names.push(if single { "S".to_string() } else { format!("S{}", k + 1) });
        columns.push(s);
    }
    for (k, x) in core.x.into_iter().enumerate() {
        names.push(format!("X{}", k + 1));
        columns.push(x);
    }
    for (k, p) in padding.into_iter().enumerate() {
        names.push(format!("X{}", k + 8));
        columns.push(p);
    }

    let mut latent_names = Vec::new();
    let mut latent_cols = Vec::new();
    let single_z = core.z.len() == 1;
    for (k, z) in core.z.into_iter().enumerate() {
        latent_names.push(if single_z { "Z".to_string() } else { format!("Z{}", k + 1) });
        latent_cols.push(z);
    }
    for (name, col) in [("U", core.u), ("U1", core.u1), ("U2", core.u2)] {
        latent_names.push(name.to_string());
        latent_cols.push(col);
    }

    let mut ds = Dataset::new(names, Tensor::from_columns(&columns)?, w, y)?;
    ds.beta_true = Some(BETA_TRUE);
    ds.latent = Some(LatentTruth {
        names: latent_names,
        values: Tensor::from_columns(&latent_cols)?,
    });
    Ok(ds)
}

/// Single latent instrument `Z` with one surrogate `S`; covariates
/// `S, X1..X7`.
pub fn generate_single_siv(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.generator != Generator::SingleSiv {
        return Err(Error::spec(format!("expected single_siv, got {}", spec.generator.id())));
    }
    let core = draw_core(spec.n, spec.seed, 1);
    let (w, y) = treatment_and_outcome(&core, spec.n, spec.seed, spec.outcome);
    assemble(core, Vec::new(), w, y)
}

/// `siv_count` independent latent instruments, each with its own surrogate.
pub fn generate_multi_siv(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let Generator::MultiSiv { siv_count } = spec.generator else {
        return Err(Error::spec(format!("expected multi_siv, got {}", spec.generator.id())));
    };
    let core = draw_core(spec.n, spec.seed, siv_count);
    let (w, y) = treatment_and_outcome(&core, spec.n, spec.seed, spec.outcome);
    assemble(core, Vec::new(), w, y)
}

/// Single-SIV process padded with `dim - 8` independent standard-normal
/// covariates that touch neither treatment nor outcome.
pub fn generate_highdim(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let Generator::Highdim { dim } = spec.generator else {
        return Err(Error::spec(format!("expected highdim, got {}", spec.generator.id())));
    };
    let core = draw_core(spec.n, spec.seed, 1);
    let (w, y) = treatment_and_outcome(&core, spec.n, spec.seed, spec.outcome);
    let padding = (0..dim - 8)
        .map(|j| normal(spec.seed, stream::PADDING + j as u64, spec.n, 1.0))
        .collect();
    assemble(core, padding, w, y)
}

/// Dispatch on the generator id.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    match spec.generator {
        Generator::SingleSiv => generate_single_siv(spec),
        Generator::MultiSiv { .. } => generate_multi_siv(spec),
        Generator::Highdim { .. } => generate_highdim(spec),
    }
}
