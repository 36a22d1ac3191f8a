use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Functional form of the synthetic outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeForm {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorId {
    SingleSiv,
    MultiSiv,
    Highdim,
}

impl fmt::Display for GeneratorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorId::SingleSiv => "single_siv",
            GeneratorId::MultiSiv => "multi_siv",
            GeneratorId::Highdim => "highdim",
        })
    }
}

/// Which generator to run, with the fields that only make sense for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Generator {
    SingleSiv,
    MultiSiv { siv_count: usize },
    Highdim { dim: usize },
}

impl Generator {
    pub fn id(&self) -> GeneratorId {
        match self {
            Generator::SingleSiv => GeneratorId::SingleSiv,
            Generator::MultiSiv { .. } => GeneratorId::MultiSiv,
            Generator::Highdim { .. } => GeneratorId::Highdim,
        }
    }
}

pub const HIGHDIM_DIMS: [usize; 4] = [8, 16, 32, 64];

/// Description of one synthetic dataset draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawScenario", into = "RawScenario")]
pub struct ScenarioSpec {
    pub generator: Generator,
    pub n: usize,
    pub outcome: OutcomeForm,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    generator: GeneratorId,
    n: usize,
    outcome: OutcomeForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    siv_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<RawScenario> for ScenarioSpec {
    type Error = Error;

    fn try_from(raw: RawScenario) -> Result<Self> {
        ScenarioSpec::from_parts(raw.generator, raw.n, raw.outcome, raw.siv_count, raw.dim, raw.seed)
    }
}

impl From<ScenarioSpec> for RawScenario {
    fn from(s: ScenarioSpec) -> Self {
        let (siv_count, dim) = match s.generator {
            Generator::SingleSiv => (None, None),
            Generator::MultiSiv { siv_count } => (Some(siv_count), None),
            Generator::Highdim { dim } => (None, Some(dim)),
        };
        RawScenario {
            generator: s.generator.id(),
            n: s.n,
            outcome: s.outcome,
            siv_count,
            dim,
            seed: s.seed,
        }
    }
}

impl ScenarioSpec {
    /// Build from flat fields; `siv_count` must be present exactly for
    /// `multi_siv` and `dim` exactly for `highdim`.
    pub fn from_parts(
        generator: GeneratorId,
        n: usize,
        outcome: OutcomeForm,
        siv_count: Option<usize>,
        dim: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let generator = match (generator, siv_count, dim) {
            (GeneratorId::SingleSiv, None, None) => Generator::SingleSiv,
            (GeneratorId::MultiSiv, Some(k), None) => Generator::MultiSiv { siv_count: k },
            (GeneratorId::Highdim, None, Some(d)) => Generator::Highdim { dim: d },
            (g, k, d) => {
                return Err(Error::spec(format!(
                    "generator {g} does not accept siv_count={k:?}, dim={d:?}"
                )))
            }
        };
        let spec = ScenarioSpec {
            generator,
            n,
            outcome,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn single_siv(n: usize, outcome: OutcomeForm, seed: u64) -> Self {
        Self {
            generator: Generator::SingleSiv,
            n,
            outcome,
            seed,
        }
    }

    pub fn multi_siv(n: usize, outcome: OutcomeForm, siv_count: usize, seed: u64) -> Self {
        Self {
            generator: Generator::MultiSiv { siv_count },
            n,
            outcome,
            seed,
        }
    }

    pub fn highdim(n: usize, outcome: OutcomeForm, dim: usize, seed: u64) -> Self {
        Self {
            generator: Generator::Highdim { dim },
            n,
            outcome,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::spec(format!("sample size n={} must be at least 2", self.n)));
        }
        match self.generator {
            Generator::SingleSiv => Ok(()),
            Generator::MultiSiv { siv_count } if (2..=3).contains(&siv_count) => Ok(()),
            Generator::MultiSiv { siv_count } => Err(Error::spec(format!(
                "multi_siv needs siv_count in {{2, 3}}, got {siv_count}"
            ))),
            Generator::Highdim { dim } if HIGHDIM_DIMS.contains(&dim) => Ok(()),
            Generator::Highdim { dim } => Err(Error::spec(format!(
                "highdim needs dim in {HIGHDIM_DIMS:?}, got {dim}"
            ))),
        }
    }

    /// Short label used in summary tables, e.g. `multi_siv_k2`.
    pub fn label(&self) -> String {
        match self.generator {
            Generator::SingleSiv => "single_siv".to_string(),
            Generator::MultiSiv { siv_count } => format!("multi_siv_k{siv_count}"),
            Generator::Highdim { dim } => format!("highdim_d{dim}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_field_rules() {
        let spec: ScenarioSpec =
            serde_json::from_str(r#"{"generator":"multi_siv","n":100,"outcome":"linear","siv_count":2,"seed":4}"#)
                .unwrap();
        assert_eq!(spec, ScenarioSpec::multi_siv(100, OutcomeForm::Linear, 2, 4));
        let back: ScenarioSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);

        for bad in [
            r#"{"generator":"single_siv","n":100,"outcome":"linear","dim":8}"#,
            r#"{"generator":"highdim","n":100,"outcome":"linear"}"#,
            r#"{"generator":"bogus","n":100,"outcome":"linear"}"#,
            r#"{"generator":"single_siv","n":1,"outcome":"linear"}"#,
            r#"{"generator":"single_siv","n":10,"outcome":"linear","extra":1}"#,
        ] {
            assert!(serde_json::from_str::<ScenarioSpec>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn domain_checks() {
        assert!(ScenarioSpec::multi_siv(10, OutcomeForm::Linear, 5, 0).validate().is_err());
        assert!(ScenarioSpec::highdim(10, OutcomeForm::Linear, 10, 0).validate().is_err());
        assert!(ScenarioSpec::highdim(10, OutcomeForm::Linear, 16, 0).validate().is_ok());
    }
}
