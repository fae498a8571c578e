//! Individuals with stochastic potential outcomes, and the estimands defined on them.
//!
//! Each [`Individual`] carries four Bernoulli parameters:
//!
//! | field    | meaning                                             |
//! |----------|-----------------------------------------------------|
//! | `tau0`   | chance of taking the treatment if assigned control  |
//! | `tau1`   | chance of taking the treatment if assigned to it    |
//! | `kappa0` | chance of being cured if the treatment is not taken |
//! | `kappa1` | chance of being cured if the treatment is taken     |
//!
//! From these come the degree of compliance `DC = tau1 - tau0`, the individual
//! treatment effect `ITE = kappa1 - kappa0`, and the DATE: the average of ITE
//! over compliers (`DC > 0`) weighted proportionally to DC.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::scalar::{compensated_sum, convert, is_probability, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PopulationError {
    #[error("parameter `{field}` of individual `{id}` is {value}, outside [0, 1]")]
    ParameterOutOfRange {
        id: String,
        field: &'static str,
        value: f64,
    },
    #[error("population is empty")]
    Empty,
    #[error("duplicate individual id `{0}`")]
    DuplicateId(String),
    #[error("no compliers: every degree of compliance is <= 0")]
    NoCompliers,
    #[error("population is not deterministic: `{field}` of individual `{id}` is {value}")]
    NotDeterministic {
        id: String,
        field: &'static str,
        value: f64,
    },
    #[error("no classic compliers (tau0 = 0 and tau1 = 1)")]
    NoClassicCompliers,
}

/// One unit's stochastic potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual<T> {
    id: String,
    tau0: T,
    tau1: T,
    kappa0: T,
    kappa1: T,
}

impl<T: Scalar> Individual<T> {
    pub fn new(
        id: impl Into<String>,
        tau0: T,
        tau1: T,
        kappa0: T,
        kappa1: T,
    ) -> Result<Self, PopulationError> {
        let ind = Self {
            id: id.into(),
            tau0,
            tau1,
            kappa0,
            kappa1,
        };
        for (field, value) in ind.parameters() {
            if !is_probability(value) {
                return Err(PopulationError::ParameterOutOfRange {
                    id: ind.id.clone(),
                    field,
                    value: value.to_f64_lossy(),
                });
            }
        }
        Ok(ind)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tau0(&self) -> &T {
        &self.tau0
    }

    pub fn tau1(&self) -> &T {
        &self.tau1
    }

    pub fn kappa0(&self) -> &T {
        &self.kappa0
    }

    pub fn kappa1(&self) -> &T {
        &self.kappa1
    }

    /// Uptake chance under the given assignment arm.
    pub fn tau(&self, assigned: bool) -> &T {
        if assigned {
            &self.tau1
        } else {
            &self.tau0
        }
    }

    /// Cure chance under the given uptake.
    pub fn kappa(&self, taken: bool) -> &T {
        if taken {
            &self.kappa1
        } else {
            &self.kappa0
        }
    }

    /// The four parameters with their field names, in declaration order.
    pub fn parameters(&self) -> [(&'static str, &T); 4] {
        [
            ("tau0", &self.tau0),
            ("tau1", &self.tau1),
            ("kappa0", &self.kappa0),
            ("kappa1", &self.kappa1),
        ]
    }

    /// `tau1 - tau0`.
    pub fn degree_of_compliance(&self) -> T {
        self.tau1.clone() - self.tau0.clone()
    }

    /// `kappa1 - kappa0`.
    pub fn individual_treatment_effect(&self) -> T {
        self.kappa1.clone() - self.kappa0.clone()
    }

    /// Sign of the degree of compliance, compared exactly against zero.
    pub fn classify(&self) -> ComplianceClass {
        let dc = self.degree_of_compliance();
        if dc > T::zero() {
            ComplianceClass::Complier
        } else if dc < T::zero() {
            ComplianceClass::Defier
        } else {
            ComplianceClass::IndifferentTaker
        }
    }

    pub fn is_complier(&self) -> bool {
        self.classify() == ComplianceClass::Complier
    }

    /// `tau0 = 0` and `tau1 = 1` exactly.
    pub fn is_classic_complier(&self) -> bool {
        self.tau0.is_zero() && self.tau1.is_one()
    }

    pub fn is_deterministic(&self) -> bool {
        self.parameters()
            .iter()
            .all(|(_, v)| v.is_zero() || v.is_one())
    }

    pub fn map_scalar<U: Scalar>(&self) -> Individual<U> {
        Individual {
            id: self.id.clone(),
            tau0: convert(&self.tau0),
            tau1: convert(&self.tau1),
            kappa0: convert(&self.kappa0),
            kappa1: convert(&self.kappa1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplianceClass {
    Complier,
    IndifferentTaker,
    Defier,
}

impl fmt::Display for ComplianceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComplianceClass::Complier => "complier",
            ComplianceClass::IndifferentTaker => "indifferent taker",
            ComplianceClass::Defier => "defier",
        })
    }
}

/// Head count per compliance class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ComplianceCensus {
    pub complier: usize,
    pub indifferent: usize,
    pub defier: usize,
}

/// Outcome of the stochastic no-defiers check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NoDefiersReport {
    pub holds: bool,
    pub violators: Vec<String>,
}

/// Non-empty population of individuals with distinct ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<T> {
    individuals: Vec<Individual<T>>,
}

impl<T: Scalar> Population<T> {
    pub fn new(individuals: Vec<Individual<T>>) -> Result<Self, PopulationError> {
        if individuals.is_empty() {
            return Err(PopulationError::Empty);
        }
        let mut seen = HashSet::with_capacity(individuals.len());
        for ind in &individuals {
            if !seen.insert(ind.id.as_str()) {
                return Err(PopulationError::DuplicateId(ind.id.clone()));
            }
        }
        Ok(Self { individuals })
    }

    pub fn individuals(&self) -> &[Individual<T>] {
        &self.individuals
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    /// Always `false`; a population holds at least one individual.
    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Individual<T>> {
        self.individuals.iter().find(|i| i.id == id)
    }

    /// Individuals with `DC > 0`, in population order.
    pub fn compliers(&self) -> Vec<&Individual<T>> {
        self.individuals
            .iter()
            .filter(|i| i.is_complier())
            .collect()
    }

    pub fn census(&self) -> ComplianceCensus {
        let mut census = ComplianceCensus::default();
        for ind in &self.individuals {
            match ind.classify() {
                ComplianceClass::Complier => census.complier += 1,
                ComplianceClass::IndifferentTaker => census.indifferent += 1,
                ComplianceClass::Defier => census.defier += 1,
            }
        }
        census
    }

    /// Normalised DC weights over the compliers, paired with each complier's id.
    pub fn date_weights(&self) -> Result<Vec<(&str, T)>, PopulationError> {
        let compliers = self.compliers();
        if compliers.is_empty() {
            return Err(PopulationError::NoCompliers);
        }
        let total = compensated_sum(compliers.iter().map(|i| i.degree_of_compliance()));
        Ok(compliers
            .into_iter()
            .map(|i| (i.id(), i.degree_of_compliance() / total.clone()))
            .collect())
    }

    /// Degree-of-compliance-weighted average treatment effect over compliers.
    ///
    /// Defiers and indifferent takers are outside the complier set and carry
    /// no weight, so this is defined even when the no-defiers assumption fails.
    pub fn date(&self) -> Result<T, PopulationError> {
        let weights = self.date_weights()?;
        let compliers = self.compliers();
        Ok(compensated_sum(weights.into_iter().zip(compliers).map(
            |((_, w), ind)| w * ind.individual_treatment_effect(),
        )))
    }

    /// Unweighted mean ITE over classic compliers of a deterministic population.
    pub fn late(&self) -> Result<T, PopulationError> {
        if let Some((id, field, value)) = self.first_non_deterministic() {
            return Err(PopulationError::NotDeterministic {
                id: id.to_string(),
                field,
                value,
            });
        }
        let effects: Vec<T> = self
            .individuals
            .iter()
            .filter(|i| i.is_classic_complier())
            .map(|i| i.individual_treatment_effect())
            .collect();
        if effects.is_empty() {
            return Err(PopulationError::NoClassicCompliers);
        }
        let count = T::from_usize(effects.len()).expect("count fits the scalar type");
        Ok(compensated_sum(effects) / count)
    }

    pub fn check_no_defiers(&self) -> NoDefiersReport {
        let violators: Vec<String> = self
            .individuals
            .iter()
            .filter(|i| i.tau1 < i.tau0)
            .map(|i| i.id.clone())
            .collect();
        NoDefiersReport {
            holds: violators.is_empty(),
            violators,
        }
    }

    pub fn check_compliers_exist(&self) -> bool {
        self.individuals.iter().any(|i| i.is_complier())
    }

    /// Every parameter is exactly 0 or 1.
    pub fn is_deterministic(&self) -> bool {
        self.first_non_deterministic().is_none()
    }

    fn first_non_deterministic(&self) -> Option<(&str, &'static str, f64)> {
        self.individuals.iter().find_map(|ind| {
            ind.parameters()
                .into_iter()
                .find(|(_, v)| !(v.is_zero() || v.is_one()))
                .map(|(field, v)| (ind.id(), field, v.to_f64_lossy()))
        })
    }

    pub fn map_scalar<U: Scalar>(&self) -> Population<U> {
        Population {
            individuals: self
                .individuals
                .iter()
                .map(Individual::map_scalar)
                .collect(),
        }
    }
}
