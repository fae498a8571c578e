//! Stochastic potential outcomes on discrete causal Bayes nets.
//!
//! Individuals carry Bernoulli parameters for uptake under each instrument
//! arm and cure under each uptake ([`population`]). Those parameters are
//! plugged into a four-variable causal Bayes net ([`iv`], built on the general
//! engine in [`cbn`]) where the degree-of-compliance-weighted average
//! treatment effect (DATE) can be checked against the Wald/IV estimand
//! exactly. [`sim`] draws finite trials from the same net and [`scenarios`]
//! loads, saves and generates populations.
//!
//! All math is generic over [`Scalar`]; the aliases below fix it to `f64`,
//! and the `Exact*` aliases to arbitrary-precision rationals.

pub mod cbn;
pub mod iv;
pub mod population;
pub mod scalar;
pub mod scenarios;
pub mod sim;

pub use num_rational::BigRational;
pub use scalar::Scalar;

pub use cbn::{CbnError, FullAssignment, PartialAssignment, VarId, Variable};
pub use iv::{IdentificationReport, IvError, Verdict};
pub use population::{ComplianceClass, PopulationError};
pub use scenarios::ScenarioError;
pub use sim::SimError;

pub type Individual = population::Individual<f64>;
pub type Population = population::Population<f64>;
pub type CausalBayesNet = cbn::CausalBayesNet<f64>;
pub type IvNetConfig = iv::IvNetConfig<f64>;

pub type ExactIndividual = population::Individual<BigRational>;
pub type ExactPopulation = population::Population<BigRational>;
pub type ExactCausalBayesNet = cbn::CausalBayesNet<BigRational>;
pub type ExactIvNetConfig = iv::IvNetConfig<BigRational>;
