use std::fmt;

use dateiv::cbn::CbnError;
use dateiv::iv::IvError;
use dateiv::population::PopulationError;
use dateiv::scenarios::ScenarioError;
use dateiv::sim::SimError;

/// Usage, parse, or I/O problem.
pub const USAGE: u8 = 1;
/// An assumption fails or a quantity is undefined.
pub const UNDEFINED: u8 = 2;
/// DATE and the IV estimand differ by more than the tolerance.
pub const GAP: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn with_code(code: u8, e: impl fmt::Display) -> Failure {
    Failure {
        code,
        message: e.to_string(),
    }
}

impl From<CbnError> for Failure {
    fn from(e: CbnError) -> Self {
        match e {
            CbnError::ZeroProbabilityCondition | CbnError::ZeroProbabilityEvidence => {
                with_code(UNDEFINED, e)
            }
            _ => with_code(USAGE, e),
        }
    }
}

impl From<PopulationError> for Failure {
    fn from(e: PopulationError) -> Self {
        match e {
            PopulationError::NoCompliers
            | PopulationError::NoClassicCompliers
            | PopulationError::NotDeterministic { .. } => with_code(UNDEFINED, e),
            _ => with_code(USAGE, e),
        }
    }
}

impl From<IvError> for Failure {
    fn from(e: IvError) -> Self {
        match e {
            IvError::ZeroDenominator(_) => with_code(UNDEFINED, e),
            IvError::Cbn(c) => c.into(),
            IvError::Population(p) => p.into(),
            _ => with_code(USAGE, e),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        with_code(USAGE, e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::EmptyArm(_)
            | SimError::ZeroSampleDenominator
            | SimError::AssumptionsViolated(_) => with_code(UNDEFINED, e),
            SimError::Iv(i) => i.into(),
            SimError::Cbn(c) => c.into(),
            SimError::Population(p) => p.into(),
            _ => with_code(USAGE, e),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        with_code(USAGE, e)
    }
}
