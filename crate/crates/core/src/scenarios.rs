//! Loading, saving, generating and naming populations.
//!
//! Scenario files are JSON:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "p_assign": 0.5,
//!   "individuals": [
//!     { "id": "1", "tau0": 0.2, "tau1": 0.8, "kappa0": 0.1, "kappa1": 0.7 }
//!   ]
//! }
//! ```
//!
//! `p_assign` is optional (default 0.5); unknown fields are rejected. Floats
//! are written in shortest round-trip form, so `load(save(x)) == x` bit for bit.
//!
//! Nets travel in a companion format ([`NetFile`]): each variable lists its
//! domain, its parents, and its table rows keyed by parent value labels in
//! declared parent order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbn::{self, CausalBayesNet, CbnError, Cpt, Dag, ValidationReport, VarId, Variable};
use crate::iv::{IvError, IvNetConfig};
use crate::population::{Individual, Population, PopulationError};

pub const SCHEMA_VERSION: u32 = 1;
pub const FORCE_COMPLIER_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedSchema(u32),
    #[error("individual `{id}`: field `{field}` = {value} is outside [0, 1]")]
    Range {
        id: String,
        field: &'static str,
        value: f64,
    },
    #[error("duplicate individual id `{0}`")]
    DuplicateId(String),
    #[error("scenario has no individuals")]
    EmptyPopulation,
    #[error("p_assign must lie strictly between 0 and 1, got {0}")]
    InvalidPAssign(f64),
    #[error("unknown builtin scenario `{0}`")]
    UnknownScenario(String),
    #[error("no complier after {0} attempts")]
    ComplierCapExceeded(usize),
    #[error("population size must be at least 1")]
    ZeroSize,
    #[error("duplicate table row for `{variable}` at {given:?}")]
    DuplicateRow {
        variable: String,
        given: Vec<String>,
    },
    #[error(transparent)]
    Cbn(#[from] CbnError),
    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl From<PopulationError> for ScenarioError {
    fn from(e: PopulationError) -> Self {
        match e {
            PopulationError::ParameterOutOfRange { id, field, value } => {
                ScenarioError::Range { id, field, value }
            }
            PopulationError::DuplicateId(id) => ScenarioError::DuplicateId(id),
            PopulationError::Empty => ScenarioError::EmptyPopulation,
            other => unreachable!("construction cannot fail with {other}"),
        }
    }
}

impl From<IvError> for ScenarioError {
    fn from(e: IvError) -> Self {
        match e {
            IvError::InvalidPAssign(p) => ScenarioError::InvalidPAssign(p),
            IvError::Cbn(c) => ScenarioError::Cbn(c),
            other => unreachable!("config construction cannot fail with {other}"),
        }
    }
}

fn parse_error(e: serde_json::Error) -> ScenarioError {
    ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndividualRecord {
    pub id: String,
    pub tau0: f64,
    pub tau1: f64,
    pub kappa0: f64,
    pub kappa1: f64,
}

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_assign: Option<f64>,
    pub individuals: Vec<IndividualRecord>,
}

/// A validated population together with its instrument configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub population: Population<f64>,
    pub config: IvNetConfig<f64>,
}

impl Scenario {
    pub fn new(population: Population<f64>) -> Self {
        Self {
            population,
            config: IvNetConfig::default(),
        }
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::UnsupportedSchema(file.schema_version));
        }
        let individuals = file
            .individuals
            .into_iter()
            .map(|r| Individual::new(r.id, r.tau0, r.tau1, r.kappa0, r.kappa1))
            .collect::<Result<Vec<_>, _>>()?;
        let population = Population::new(individuals)?;
        let config = match file.p_assign {
            Some(p) => IvNetConfig::new(p)?,
            None => IvNetConfig::default(),
        };
        Ok(Self { population, config })
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            schema_version: SCHEMA_VERSION,
            p_assign: Some(*self.config.p_assign()),
            individuals: self
                .population
                .individuals()
                .iter()
                .map(|i| IndividualRecord {
                    id: i.id().to_string(),
                    tau0: *i.tau0(),
                    tau1: *i.tau1(),
                    kappa0: *i.kappa0(),
                    kappa1: *i.kappa1(),
                })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(parse_error)?;
        Self::from_file(file)
    }

    pub fn to_json(&self) -> Result<String, ScenarioError> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scenario::parse(&text)
}

pub fn save(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let mut text = scenario.to_json()?;
    text.push('\n');
    fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenerateConstraints {
    /// Sort each `(tau0, tau1)` pair ascending.
    pub no_defiers: bool,
    /// Redraw the whole population until some `DC > 0`.
    pub force_complier: bool,
    /// Draw every parameter from `{0, 1}`.
    pub deterministic: bool,
}

/// `n` individuals with ids `"1"..="n"` and i.i.d. parameters.
pub fn generate_random(
    n: usize,
    seed: u64,
    constraints: GenerateConstraints,
) -> Result<Population<f64>, ScenarioError> {
    if n == 0 {
        return Err(ScenarioError::ZeroSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attempts = if constraints.force_complier {
        FORCE_COMPLIER_MAX_ATTEMPTS
    } else {
        1
    };
    for _ in 0..attempts {
        let pop = draw_population(&mut rng, n, constraints)?;
        if !constraints.force_complier || pop.check_compliers_exist() {
            return Ok(pop);
        }
    }
    Err(ScenarioError::ComplierCapExceeded(
        FORCE_COMPLIER_MAX_ATTEMPTS,
    ))
}

fn draw_population(
    rng: &mut ChaCha8Rng,
    n: usize,
    c: GenerateConstraints,
) -> Result<Population<f64>, ScenarioError> {
    let mut draw = || -> f64 {
        if c.deterministic {
            f64::from(u8::from(rng.random::<bool>()))
        } else {
            rng.random::<f64>()
        }
    };
    let individuals = (0..n)
        .map(|i| {
            let (mut tau0, mut tau1) = (draw(), draw());
            if c.no_defiers && tau1 < tau0 {
                std::mem::swap(&mut tau0, &mut tau1);
            }
            Individual::new((i + 1).to_string(), tau0, tau1, draw(), draw())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Population::new(individuals)?)
}

/// Named fixtures: `(name, description)`.
pub const CATALOG: &[(&str, &str)] = &[
    (
        "paper-coarse",
        "one individual: no uptake under control, 50% uptake if assigned, 50% cure \
         chance without treatment, certain cure with it",
    ),
    (
        "two-mixed",
        "ids 1 and 2: (0.2, 0.8, 0.1, 0.7) is a complier, (0.5, 0.5, 0.3, 0.9) an \
         indifferent taker; DATE 0.6",
    ),
    (
        "classic-late",
        "deterministic: one complier, one always-taker, one never-taker",
    ),
    (
        "with-defier",
        "a complier and a defier; DATE and IV estimand disagree",
    ),
];

/// Looks up a named fixture from [`CATALOG`].
pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let members: &[(&str, [f64; 4])] = match name {
        "paper-coarse" => &[("i", [0.0, 0.5, 0.5, 1.0])],
        "two-mixed" => &[("1", [0.2, 0.8, 0.1, 0.7]), ("2", [0.5, 0.5, 0.3, 0.9])],
        "classic-late" => &[
            ("complier", [0.0, 1.0, 0.0, 1.0]),
            ("always-taker", [1.0, 1.0, 0.0, 1.0]),
            ("never-taker", [0.0, 0.0, 1.0, 1.0]),
        ],
        "with-defier" => &[
            ("complier", [0.0, 1.0, 0.0, 1.0]),
            ("defier", [0.75, 0.25, 0.0, 0.0]),
        ],
        other => return Err(ScenarioError::UnknownScenario(other.to_string())),
    };
    let individuals = members
        .iter()
        .map(|(id, p)| Individual::new(*id, p[0], p[1], p[2], p[3]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Scenario::new(Population::new(individuals)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CptRowRecord {
    pub given: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableRecord {
    pub name: String,
    pub domain: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cpt: Vec<CptRowRecord>,
}

/// JSON layout of a causal Bayes net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetFile {
    pub schema_version: u32,
    pub variables: Vec<VariableRecord>,
}

impl NetFile {
    pub fn from_net(net: &CausalBayesNet<f64>) -> Self {
        let dag = net.dag();
        let variables = dag
            .ids()
            .map(|id| {
                let var = dag.variable(id);
                let parents = dag.parents(id);
                let cpt = net.cpt(id);
                VariableRecord {
                    name: var.name().to_string(),
                    domain: var.domain().to_vec(),
                    parents: parents
                        .iter()
                        .map(|p| dag.variable(*p).name().to_string())
                        .collect(),
                    cpt: (0..cpt.row_count())
                        .map(|r| CptRowRecord {
                            given: cpt
                                .parent_values(r)
                                .iter()
                                .zip(parents)
                                .map(|(v, p)| dag.variable(*p).domain()[*v].clone())
                                .collect(),
                            probs: cpt.row(r).expect("net tables are total").to_vec(),
                        })
                        .collect(),
                }
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            variables,
        }
    }

    fn parts(&self) -> Result<(Dag, Vec<Cpt<f64>>), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::UnsupportedSchema(self.schema_version));
        }
        let dag = Dag::new(
            self.variables
                .iter()
                .map(|v| {
                    Variable::new(v.name.clone(), v.domain.iter().cloned())
                        .map(|var| (var, &v.parents))
                })
                .collect::<Result<Vec<_>, _>>()?,
        )?;
        let mut cpts = Vec::with_capacity(dag.len());
        for (i, record) in self.variables.iter().enumerate() {
            let mut cpt = Cpt::for_variable(&dag, VarId(i));
            let mut seen = Vec::with_capacity(record.cpt.len());
            for row in &record.cpt {
                if seen.contains(&&row.given) {
                    return Err(ScenarioError::DuplicateRow {
                        variable: record.name.clone(),
                        given: row.given.clone(),
                    });
                }
                seen.push(&row.given);
                let labels: Vec<&str> = row.given.iter().map(String::as_str).collect();
                cpt.set_row_by_labels(&dag, &labels, row.probs.clone())?;
            }
            cpts.push(cpt);
        }
        Ok((dag, cpts))
    }

    /// Structural problems are errors; value problems land in the report.
    pub fn validate(&self) -> Result<ValidationReport, ScenarioError> {
        let (dag, cpts) = self.parts()?;
        Ok(cbn::validate(&dag, &cpts))
    }

    pub fn to_net(&self) -> Result<CausalBayesNet<f64>, ScenarioError> {
        let (dag, cpts) = self.parts()?;
        Ok(CausalBayesNet::new(dag, cpts)?)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(parse_error)
    }

    pub fn to_json(&self) -> Result<String, ScenarioError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn load_net(path: impl AsRef<Path>) -> Result<CausalBayesNet<f64>, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    NetFile::parse(&text)?.to_net()
}

/// Random acyclic net: variables declared in shuffled order, up to
/// `max_parents` parents each, domains of 2..=`max_cardinality` values, and
/// table rows drawn uniformly then normalised. About one entry in eight is
/// zeroed to exercise impossible events.
pub fn random_net(
    seed: u64,
    variables: usize,
    max_cardinality: usize,
    max_parents: usize,
) -> CausalBayesNet<f64> {
    assert!(variables >= 1 && max_cardinality >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Causal rank k may only depend on ranks < k.
    let cards: Vec<usize> = (0..variables)
        .map(|_| rng.random_range(2..=max_cardinality))
        .collect();
    let parents: Vec<Vec<usize>> = (0..variables)
        .map(|k| {
            let mut ps: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
            while ps.len() > max_parents {
                ps.remove(rng.random_range(0..ps.len()));
            }
            ps
        })
        .collect();
    let mut declared: Vec<usize> = (0..variables).collect();
    for i in (1..declared.len()).rev() {
        declared.swap(i, rng.random_range(0..=i));
    }
    let name = |k: usize| format!("V{k}");
    let dag = Dag::new(declared.iter().map(|&k| {
        let var = Variable::new(name(k), (0..cards[k]).map(|v| format!("v{v}")))
            .expect("generated domains are distinct");
        (var, parents[k].iter().map(|&p| name(p)).collect::<Vec<_>>())
    }))
    .expect("generated graph references declared variables");
    let cpts = dag
        .ids()
        .map(|id| {
            let mut cpt = Cpt::for_variable(&dag, id);
            let card = dag.variable(id).cardinality();
            for r in 0..cpt.row_count() {
                let mut w: Vec<f64> = (0..card)
                    .map(|_| {
                        if rng.random_range(0..8) == 0 {
                            0.0
                        } else {
                            rng.random::<f64>() + 1e-3
                        }
                    })
                    .collect();
                if w.iter().all(|x| *x == 0.0) {
                    w[0] = 1.0;
                }
                let total: f64 = w.iter().sum();
                let row = w.into_iter().map(|x| x / total).collect();
                let values = cpt.parent_values(r);
                cpt.set_row(&dag, &values, row)
                    .expect("row shaped by construction");
            }
            cpt
        })
        .collect();
    CausalBayesNet::new(dag, cpts).expect("generated net is valid")
}
