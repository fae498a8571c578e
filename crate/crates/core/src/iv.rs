//! The instrumental-variable net and exact identification of the DATE.
//!
//! [`build_iv_net`] plugs a population's stochastic potential outcomes into the
//! four-node graph `Assign -> Take -> Cure`, `Indiv -> {Take, Cure}`:
//!
//! ```text
//! P(Assign = 1)                       = p_assign
//! P(Indiv = i)                        = 1 / N
//! P(Take = 1 | Assign = a, Indiv = i) = tau_i^a
//! P(Cure = 1 | Take = t, Indiv = i)   = kappa_i^t
//! ```
//!
//! The IV estimand is then the Wald ratio of the cure contrast to the uptake
//! contrast across the two instrument arms. It is computed two ways: by
//! enumeration over the net ([`enumerated_conditionals`]) and from the closed
//! forms `(1/N) Σ (kappa1·tau_a + kappa0·(1 - tau_a))` and `(1/N) Σ tau_a`
//! ([`closed_form_conditionals`]), which serve as an oracle for each other.

use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::cbn::{CausalBayesNet, CbnError, Cpt, Dag, Variable};
use crate::population::{Population, PopulationError};
use crate::scalar::{compensated_sum, convert, tolerance, Scalar};

pub const ASSIGN: &str = "Assign";
pub const INDIV: &str = "Indiv";
pub const TAKE: &str = "Take";
pub const CURE: &str = "Cure";

/// Below this magnitude the uptake contrast is treated as zero.
pub const ZERO_DENOMINATOR_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IvError {
    #[error("p_assign must lie strictly between 0 and 1, got {0}")]
    InvalidPAssign(f64),
    #[error("instrument has no net effect on uptake (uptake contrast {0:e})")]
    ZeroDenominator(f64),
    #[error("net is not an IV net: {0}")]
    NotIvNet(String),
    #[error(transparent)]
    Cbn(#[from] CbnError),
    #[error(transparent)]
    Population(#[from] PopulationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvNetConfig<T> {
    p_assign: T,
}

impl<T: Scalar> IvNetConfig<T> {
    pub fn new(p_assign: T) -> Result<Self, IvError> {
        if !(p_assign > T::zero() && p_assign < T::one()) {
            return Err(IvError::InvalidPAssign(p_assign.to_f64_lossy()));
        }
        Ok(Self { p_assign })
    }

    pub fn p_assign(&self) -> &T {
        &self.p_assign
    }

    pub fn map_scalar<U: Scalar>(&self) -> IvNetConfig<U> {
        IvNetConfig {
            p_assign: convert(&self.p_assign),
        }
    }
}

impl<T: Scalar> Default for IvNetConfig<T> {
    fn default() -> Self {
        Self {
            p_assign: T::one() / (T::one() + T::one()),
        }
    }
}

/// Builds the IV net whose tables are the population's potential outcomes.
///
/// `Indiv` takes the individual ids as its value labels, in population order.
pub fn build_iv_net<T: Scalar>(
    pop: &Population<T>,
    cfg: &IvNetConfig<T>,
) -> Result<CausalBayesNet<T>, IvError> {
    let ids: Vec<&str> = pop.individuals().iter().map(|i| i.id()).collect();
    let dag = Dag::new([
        (Variable::binary(ASSIGN), vec![]),
        (Variable::new(INDIV, ids)?, vec![]),
        (Variable::binary(TAKE), vec![ASSIGN, INDIV]),
        (Variable::binary(CURE), vec![TAKE, INDIV]),
    ])?;
    let id = |name| dag.id(name);
    let (assign, indiv, take, cure) = (id(ASSIGN)?, id(INDIV)?, id(TAKE)?, id(CURE)?);

    let p = cfg.p_assign.clone();
    let assign_cpt = Cpt::root(&dag, assign, vec![T::one() - p.clone(), p])?;
    let n = T::from_usize(pop.len()).expect("population size fits the scalar type");
    let uniform = T::one() / n;
    let indiv_cpt = Cpt::root(&dag, indiv, vec![uniform; pop.len()])?;

    let mut take_cpt = Cpt::for_variable(&dag, take);
    let mut cure_cpt = Cpt::for_variable(&dag, cure);
    for (i, ind) in pop.individuals().iter().enumerate() {
        for arm in [false, true] {
            let a = usize::from(arm);
            let tau = ind.tau(arm).clone();
            take_cpt.set_row(&dag, &[a, i], vec![T::one() - tau.clone(), tau])?;
            let kappa = ind.kappa(arm).clone();
            cure_cpt.set_row(&dag, &[a, i], vec![T::one() - kappa.clone(), kappa])?;
        }
    }
    Ok(CausalBayesNet::new(
        dag,
        vec![assign_cpt, indiv_cpt, take_cpt, cure_cpt],
    )?)
}

/// The four arm-conditional probabilities entering the Wald ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IvConditionals<T> {
    pub cure_given_assign1: T,
    pub cure_given_assign0: T,
    pub take_given_assign1: T,
    pub take_given_assign0: T,
}

impl<T: Scalar> IvConditionals<T> {
    pub fn as_array(&self) -> [&T; 4] {
        [
            &self.cure_given_assign1,
            &self.cure_given_assign0,
            &self.take_given_assign1,
            &self.take_given_assign0,
        ]
    }

    pub fn numerator(&self) -> T {
        self.cure_given_assign1.clone() - self.cure_given_assign0.clone()
    }

    pub fn denominator(&self) -> T {
        self.take_given_assign1.clone() - self.take_given_assign0.clone()
    }

    /// Wald ratio, failing when the uptake contrast is within the zero threshold.
    pub fn wald_ratio(&self) -> Result<T, IvError> {
        let den = self.denominator();
        if den.abs() <= tolerance(ZERO_DENOMINATOR_THRESHOLD) {
            return Err(IvError::ZeroDenominator(den.to_f64_lossy()));
        }
        Ok(self.numerator() / den)
    }

    pub fn to_f64(&self) -> IvConditionals<f64> {
        IvConditionals {
            cure_given_assign1: self.cure_given_assign1.to_f64_lossy(),
            cure_given_assign0: self.cure_given_assign0.to_f64_lossy(),
            take_given_assign1: self.take_given_assign1.to_f64_lossy(),
            take_given_assign0: self.take_given_assign0.to_f64_lossy(),
        }
    }
}

/// Arm-conditional probabilities by enumeration over `net`.
pub fn enumerated_conditionals<T: Scalar>(
    net: &CausalBayesNet<T>,
) -> Result<IvConditionals<T>, IvError> {
    for name in [ASSIGN, TAKE, CURE] {
        let var = net.dag().variable(net.dag().id(name)?);
        if var.domain() != ["0", "1"] {
            return Err(IvError::NotIvNet(format!(
                "`{name}` is not binary over 0/1"
            )));
        }
    }
    let cond = |target: &str, arm: &str| -> Result<T, IvError> {
        let t = net.partial(&[(target, "1")])?;
        let g = net.partial(&[(ASSIGN, arm)])?;
        Ok(net.conditional_probability(&t, &g)?)
    };
    Ok(IvConditionals {
        cure_given_assign1: cond(CURE, "1")?,
        cure_given_assign0: cond(CURE, "0")?,
        take_given_assign1: cond(TAKE, "1")?,
        take_given_assign0: cond(TAKE, "0")?,
    })
}

/// `[P(Cure=1|A=1) - P(Cure=1|A=0)] / [P(Take=1|A=1) - P(Take=1|A=0)]` on `net`.
pub fn iv_estimand<T: Scalar>(net: &CausalBayesNet<T>) -> Result<T, IvError> {
    enumerated_conditionals(net)?.wald_ratio()
}

/// Arm-conditional probabilities straight from the potential outcomes.
pub fn closed_form_conditionals<T: Scalar>(pop: &Population<T>) -> IvConditionals<T> {
    let n = T::from_usize(pop.len()).expect("population size fits the scalar type");
    let cure = |arm: bool| {
        compensated_sum(pop.individuals().iter().map(|i| {
            let tau = i.tau(arm).clone();
            i.kappa1().clone() * tau.clone() + i.kappa0().clone() * (T::one() - tau)
        })) / n.clone()
    };
    let take = |arm: bool| {
        compensated_sum(pop.individuals().iter().map(|i| i.tau(arm).clone())) / n.clone()
    };
    IvConditionals {
        cure_given_assign1: cure(true),
        cure_given_assign0: cure(false),
        take_given_assign1: take(true),
        take_given_assign0: take(false),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionStatus {
    Holds,
    Violated,
    ByConstruction,
}

impl fmt::Display for AssumptionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssumptionStatus::Holds => "holds",
            AssumptionStatus::Violated => "VIOLATED",
            AssumptionStatus::ByConstruction => "by construction",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    /// Position in the theorem's assumption list, `"i"` through `"iv"`.
    pub label: &'static str,
    pub name: &'static str,
    pub status: AssumptionStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    AssumptionFailure,
    GapFailure,
}

/// DATE, IV estimand, their gap, and the assumption audit for one population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationReport {
    pub n: usize,
    pub p_assign: f64,
    pub exact_arithmetic: bool,
    pub date: Option<f64>,
    pub date_error: Option<String>,
    pub iv_estimand: Option<f64>,
    pub iv_estimand_error: Option<String>,
    pub absolute_gap: Option<f64>,
    pub tolerance: f64,
    pub conditionals: Option<IvConditionals<f64>>,
    pub assumptions: Vec<AssumptionCheck>,
    pub verdict: Verdict,
}

impl IdentificationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn assumption(&self, label: &str) -> Option<&AssumptionCheck> {
        self.assumptions.iter().find(|a| a.label == label)
    }

    /// Fixed six-decimal table.
    pub fn render_table(&self) -> String {
        let num = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {}", "population size", self.n);
        let _ = writeln!(out, "{:<22} {:.6}", "P(Assign=1)", self.p_assign);
        let _ = writeln!(
            out,
            "{:<22} {}",
            "arithmetic",
            if self.exact_arithmetic {
                "exact rational"
            } else {
                "f64"
            }
        );
        let _ = writeln!(out, "{:<22} {}", "DATE", num(self.date));
        if let Some(e) = &self.date_error {
            let _ = writeln!(out, "{:<22} {}", "  error", e);
        }
        let _ = writeln!(out, "{:<22} {}", "IV estimand", num(self.iv_estimand));
        if let Some(e) = &self.iv_estimand_error {
            let _ = writeln!(out, "{:<22} {}", "  error", e);
        }
        let _ = writeln!(out, "{:<22} {}", "absolute gap", num(self.absolute_gap));
        let _ = writeln!(out, "{:<22} {:e}", "tolerance", self.tolerance);
        if let Some(c) = &self.conditionals {
            let _ = writeln!(
                out,
                "{:<22} {:.6}",
                "P(Cure=1|Assign=1)", c.cure_given_assign1
            );
            let _ = writeln!(
                out,
                "{:<22} {:.6}",
                "P(Cure=1|Assign=0)", c.cure_given_assign0
            );
            let _ = writeln!(
                out,
                "{:<22} {:.6}",
                "P(Take=1|Assign=1)", c.take_given_assign1
            );
            let _ = writeln!(
                out,
                "{:<22} {:.6}",
                "P(Take=1|Assign=0)", c.take_given_assign0
            );
        }
        let _ = writeln!(out, "assumptions:");
        for a in &self.assumptions {
            let _ = writeln!(
                out,
                "  ({:<3}) {:<20} {:<16} {}",
                a.label,
                a.name,
                a.status.to_string(),
                a.detail
            );
        }
        let verdict = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::AssumptionFailure => "FAIL (assumption violated)",
            Verdict::GapFailure => "FAIL (gap exceeds tolerance)",
        };
        let _ = write!(out, "{:<22} {}", "verdict", verdict);
        out
    }
}

/// Audits the identification assumptions and compares DATE with the IV estimand.
///
/// The verdict passes iff no individual is a defier, at least one is a
/// complier, and `|DATE - IV estimand| <= tol`. Both values are reported even
/// when an assumption fails, so violations can be inspected.
pub fn identification_check<T: Scalar>(
    pop: &Population<T>,
    cfg: &IvNetConfig<T>,
    tol: f64,
) -> IdentificationReport {
    let no_defiers = pop.check_no_defiers();
    let compliers_exist = pop.check_compliers_exist();
    let census = pop.census();
    let assumptions = vec![
        AssumptionCheck {
            label: "i",
            name: "no defiers",
            status: if no_defiers.holds {
                AssumptionStatus::Holds
            } else {
                AssumptionStatus::Violated
            },
            detail: if no_defiers.holds {
                "tau1 >= tau0 for every individual".into()
            } else {
                format!("tau1 < tau0 for {:?}", no_defiers.violators)
            },
        },
        AssumptionCheck {
            label: "ii",
            name: "compliers exist",
            status: if compliers_exist {
                AssumptionStatus::Holds
            } else {
                AssumptionStatus::Violated
            },
            detail: format!("{} of {} have tau1 > tau0", census.complier, pop.len()),
        },
        AssumptionCheck {
            label: "iii",
            name: "factorization rule",
            status: AssumptionStatus::ByConstruction,
            detail: "joint is the product of the IV net's tables".into(),
        },
        AssumptionCheck {
            label: "iv",
            name: "bridge principle",
            status: AssumptionStatus::ByConstruction,
            detail: "tables are the individuals' tau and kappa".into(),
        },
    ];

    let date = pop.date();
    let conditionals = build_iv_net(pop, cfg).and_then(|net| enumerated_conditionals(&net));
    let iv = conditionals.clone().and_then(|c| c.wald_ratio());
    let gap = match (&date, &iv) {
        (Ok(d), Ok(v)) => Some((d.clone() - v.clone()).abs()),
        _ => None,
    };

    let verdict = if !(no_defiers.holds && compliers_exist) {
        Verdict::AssumptionFailure
    } else if gap.as_ref().is_some_and(|g| *g <= tolerance::<T>(tol)) {
        Verdict::Pass
    } else {
        Verdict::GapFailure
    };

    IdentificationReport {
        n: pop.len(),
        p_assign: cfg.p_assign.to_f64_lossy(),
        exact_arithmetic: T::EXACT,
        date: date.as_ref().ok().map(Scalar::to_f64_lossy),
        date_error: date.err().map(|e| e.to_string()),
        iv_estimand: iv.as_ref().ok().map(Scalar::to_f64_lossy),
        iv_estimand_error: iv.err().map(|e| e.to_string()),
        absolute_gap: gap.map(|g| g.to_f64_lossy()),
        tolerance: tol,
        conditionals: conditionals.ok().map(|c| c.to_f64()),
        assumptions,
        verdict,
    }
}
