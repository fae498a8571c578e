//! Ancestral sampling from a causal Bayes net and finite-sample Wald estimation.
//!
//! Sample `k` of a run seeded with `s` is drawn from its own ChaCha8 stream:
//! the generator is seeded with `s` and switched to stream `k`, then one
//! uniform is consumed per variable in topological order and mapped through
//! the inverse CDF of the relevant table row. Samples are therefore
//! independent of each other's position in the output and of thread
//! scheduling, so serial and parallel runs agree bit for bit. Stream
//! `u64::MAX` of the seed is reserved for the bootstrap.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cbn::{CausalBayesNet, CbnError, FullAssignment, VarId};
use crate::iv::{self, IvConditionals, IvError, IvNetConfig};
use crate::population::{Population, PopulationError};
use crate::scalar::Scalar;

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("assignment arm {0} has no samples")]
    EmptyArm(u8),
    #[error("sample uptake contrast is zero; the Wald ratio is undefined")]
    ZeroSampleDenominator,
    #[error("identification assumptions do not hold: {0}")]
    AssumptionsViolated(String),
    #[error(transparent)]
    Iv(#[from] IvError),
    #[error(transparent)]
    Cbn(#[from] CbnError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Cumulative `f64` rows of every table, precomputed for inverse-CDF draws.
struct SamplerTables<'a, T> {
    net: &'a CausalBayesNet<T>,
    cumulative: Vec<Vec<Vec<f64>>>,
}

impl<'a, T: Scalar> SamplerTables<'a, T> {
    fn new(net: &'a CausalBayesNet<T>) -> Self {
        let cumulative = net
            .dag()
            .ids()
            .map(|id| {
                let cpt = net.cpt(id);
                (0..cpt.row_count())
                    .map(|r| {
                        let mut acc = 0.0;
                        cpt.row(r)
                            .expect("validated table is total")
                            .iter()
                            .map(|p| {
                                acc += p.to_f64_lossy();
                                acc
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { net, cumulative }
    }

    fn draw(&self, seed: u64, index: u64) -> FullAssignment {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let dag = self.net.dag();
        let mut values = vec![0usize; dag.len()];
        let mut parent_values = Vec::new();
        for id in self.net.topological_order() {
            parent_values.clear();
            parent_values.extend(dag.parents(*id).iter().map(|p| values[p.0]));
            let row = self
                .net
                .cpt(*id)
                .row_index(&parent_values)
                .expect("parent values come from the domain");
            values[id.0] = inverse_cdf(&self.cumulative[id.0][row], rng.random::<f64>());
        }
        let mut full = self.net.empty_assignment();
        for (i, v) in values.into_iter().enumerate() {
            full = full.with(VarId(i), v);
        }
        self.net.complete(&full).expect("every variable was drawn")
    }
}

/// First index whose cumulative mass exceeds `u`. Rounding can leave the last
/// cumulative entry just under 1; a `u` beyond it falls to the last value
/// with positive mass.
fn inverse_cdf(cumulative: &[f64], u: f64) -> usize {
    if let Some(k) = cumulative.iter().position(|c| u < *c) {
        return k;
    }
    let mut k = cumulative.len() - 1;
    while k > 0 && cumulative[k] <= cumulative[k - 1] {
        k -= 1;
    }
    k
}

/// Draws sample `index` of the run seeded with `seed`.
pub fn draw_one<T: Scalar>(net: &CausalBayesNet<T>, seed: u64, index: u64) -> FullAssignment {
    SamplerTables::new(net).draw(seed, index)
}

/// `n` independent ancestral draws, generated in parallel.
pub fn sample<T: Scalar>(net: &CausalBayesNet<T>, seed: u64, n: usize) -> Vec<FullAssignment> {
    let tables = SamplerTables::new(net);
    (0..n as u64)
        .into_par_iter()
        .map(|k| tables.draw(seed, k))
        .collect()
}

/// Same draws as [`sample`], on the calling thread.
pub fn sample_serial<T: Scalar>(
    net: &CausalBayesNet<T>,
    seed: u64,
    n: usize,
) -> Vec<FullAssignment> {
    let tables = SamplerTables::new(net);
    (0..n as u64).map(|k| tables.draw(seed, k)).collect()
}

/// One simulated trial participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialSample {
    pub indiv_id: String,
    pub assign: u8,
    pub take: u8,
    pub cure: u8,
}

struct IvVars {
    assign: VarId,
    indiv: VarId,
    take: VarId,
    cure: VarId,
}

impl IvVars {
    fn find<T: Scalar>(net: &CausalBayesNet<T>) -> Result<Self, SimError> {
        let dag = net.dag();
        for name in [iv::ASSIGN, iv::TAKE, iv::CURE] {
            if dag.variable(dag.id(name)?).domain() != ["0", "1"] {
                return Err(IvError::NotIvNet(format!("`{name}` is not binary over 0/1")).into());
            }
        }
        Ok(Self {
            assign: dag.id(iv::ASSIGN)?,
            indiv: dag.id(iv::INDIV)?,
            take: dag.id(iv::TAKE)?,
            cure: dag.id(iv::CURE)?,
        })
    }
}

/// Ancestral draws from an IV net, labelled by variable.
pub fn sample_trial<T: Scalar>(
    net: &CausalBayesNet<T>,
    seed: u64,
    n: usize,
) -> Result<Vec<TrialSample>, SimError> {
    let vars = IvVars::find(net)?;
    let indiv = net.dag().variable(vars.indiv);
    Ok(sample(net, seed, n)
        .into_iter()
        .map(|v| TrialSample {
            indiv_id: indiv.domain()[v.get(vars.indiv)].clone(),
            assign: v.get(vars.assign) as u8,
            take: v.get(vars.take) as u8,
            cure: v.get(vars.cure) as u8,
        })
        .collect())
}

/// Per-arm weighted totals from which the Wald ratio is formed. Samples
/// contribute weight 1; the exact distribution contributes its joint mass.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmMoments {
    pub weight: [f64; 2],
    pub take: [f64; 2],
    pub cure: [f64; 2],
}

impl ArmMoments {
    pub fn add(&mut self, assign: u8, take: u8, cure: u8, weight: f64) {
        let a = usize::from(assign);
        self.weight[a] += weight;
        self.take[a] += weight * f64::from(take);
        self.cure[a] += weight * f64::from(cure);
    }

    pub fn from_samples(samples: &[TrialSample]) -> Self {
        let mut m = Self::default();
        for s in samples {
            m.add(s.assign, s.take, s.cure, 1.0);
        }
        m
    }

    /// Moments of the net's own distribution, by enumeration.
    pub fn exact<T: Scalar>(net: &CausalBayesNet<T>) -> Result<Self, SimError> {
        let vars = IvVars::find(net)?;
        let mut m = Self::default();
        for v in net.all_assignments() {
            let p = net.joint_probability(&v).to_f64_lossy();
            m.add(
                v.get(vars.assign) as u8,
                v.get(vars.take) as u8,
                v.get(vars.cure) as u8,
                p,
            );
        }
        Ok(m)
    }

    /// Arm means, in the same shape as the net's arm conditionals.
    pub fn conditionals(&self) -> Result<IvConditionals<f64>, SimError> {
        for arm in [0u8, 1] {
            if self.weight[usize::from(arm)] <= 0.0 {
                return Err(SimError::EmptyArm(arm));
            }
        }
        Ok(IvConditionals {
            cure_given_assign1: self.cure[1] / self.weight[1],
            cure_given_assign0: self.cure[0] / self.weight[0],
            take_given_assign1: self.take[1] / self.weight[1],
            take_given_assign0: self.take[0] / self.weight[0],
        })
    }

    /// Ratio of the cure contrast to the uptake contrast; only an exactly
    /// zero uptake contrast is rejected.
    pub fn wald(&self) -> Result<(f64, IvConditionals<f64>), SimError> {
        let c = self.conditionals()?;
        let den = c.denominator();
        if den == 0.0 {
            return Err(SimError::ZeroSampleDenominator);
        }
        Ok((c.numerator() / den, c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldEstimate {
    pub n: usize,
    pub wald_estimate: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// Standard deviation of the bootstrap replicates; `None` when fewer than
    /// two replicates had a defined ratio.
    pub empirical_se: Option<f64>,
    pub bootstrap_resamples: usize,
    pub bootstrap_valid: usize,
}

/// Sample Wald ratio with a seeded nonparametric bootstrap standard error.
pub fn wald_estimate(
    samples: &[TrialSample],
    bootstrap: &BootstrapConfig,
) -> Result<WaldEstimate, SimError> {
    if samples.is_empty() {
        return Err(SimError::NoSamples);
    }
    let (ratio, c) = ArmMoments::from_samples(samples).wald()?;

    // The ratio depends only on the (assign, take, cure) cell of each sample.
    let cells: Vec<u8> = samples
        .iter()
        .map(|s| (s.assign << 2) | (s.take << 1) | s.cure)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap.seed);
    rng.set_stream(BOOTSTRAP_STREAM);
    let mut replicates = Vec::with_capacity(bootstrap.resamples);
    for _ in 0..bootstrap.resamples {
        let mut counts = [0u32; 8];
        for _ in 0..cells.len() {
            counts[usize::from(cells[rng.random_range(0..cells.len())])] += 1;
        }
        let mut m = ArmMoments::default();
        for (cell, count) in counts.iter().enumerate() {
            let cell = cell as u8;
            m.add(cell >> 2, (cell >> 1) & 1, cell & 1, f64::from(*count));
        }
        if let Ok((r, _)) = m.wald() {
            replicates.push(r);
        }
    }
    let empirical_se = (replicates.len() >= 2).then(|| {
        let k = replicates.len() as f64;
        let mean = replicates.iter().sum::<f64>() / k;
        (replicates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    });

    Ok(WaldEstimate {
        n: samples.len(),
        wald_estimate: ratio,
        numerator: c.numerator(),
        denominator: c.denominator(),
        empirical_se,
        bootstrap_resamples: bootstrap.resamples,
        bootstrap_valid: replicates.len(),
    })
}

/// One simulated trial compared against the population's exact DATE.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub n: usize,
    pub seed: u64,
    pub wald_estimate: f64,
    pub empirical_se: Option<f64>,
    pub exact_date: f64,
    pub absolute_error: f64,
    pub numerator: f64,
    pub denominator: f64,
}

/// Builds the IV net, draws `n` participants, and estimates the Wald ratio.
pub fn run_trial<T: Scalar>(
    pop: &Population<T>,
    cfg: &IvNetConfig<T>,
    seed: u64,
    n: usize,
    resamples: usize,
) -> Result<(TrialResult, Vec<TrialSample>), SimError> {
    if n == 0 {
        return Err(SimError::NoSamples);
    }
    let exact_date = pop.date()?.to_f64_lossy();
    let net = iv::build_iv_net(pop, cfg)?;
    let samples = sample_trial(&net, seed, n)?;
    let est = wald_estimate(&samples, &BootstrapConfig { resamples, seed })?;
    Ok((
        TrialResult {
            n,
            seed,
            wald_estimate: est.wald_estimate,
            empirical_se: est.empirical_se,
            exact_date,
            absolute_error: (est.wald_estimate - exact_date).abs(),
            numerator: est.numerator,
            denominator: est.denominator,
        },
        samples,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub seed: u64,
    pub wald_estimate: f64,
    pub absolute_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub exact_date: f64,
    pub rows: Vec<ConvergenceRow>,
    /// `(n, median |error|)` in the order of the requested sample sizes.
    pub median_error: Vec<(usize, f64)>,
    /// Diagnostic only: whether the median error never grows along the `n` grid.
    pub median_error_non_increasing: bool,
}

/// Wald estimates over a grid of sample sizes and seeds.
pub fn convergence_report<T: Scalar>(
    pop: &Population<T>,
    cfg: &IvNetConfig<T>,
    seeds: &[u64],
    ns: &[usize],
) -> Result<ConvergenceReport, SimError> {
    let audit = pop.check_no_defiers();
    if !audit.holds {
        return Err(SimError::AssumptionsViolated(format!(
            "defiers {:?}",
            audit.violators
        )));
    }
    if !pop.check_compliers_exist() {
        return Err(SimError::AssumptionsViolated("no compliers".into()));
    }
    let exact_date = pop.date()?.to_f64_lossy();
    let net = iv::build_iv_net(pop, cfg)?;
    let mut rows = Vec::with_capacity(seeds.len() * ns.len());
    let mut median_error = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            return Err(SimError::NoSamples);
        }
        let mut errors = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let samples = sample_trial(&net, seed, n)?;
            let (ratio, _) = ArmMoments::from_samples(&samples).wald()?;
            let err = (ratio - exact_date).abs();
            errors.push(err);
            rows.push(ConvergenceRow {
                n,
                seed,
                wald_estimate: ratio,
                absolute_error: err,
            });
        }
        median_error.push((n, median(&mut errors)));
    }
    let median_error_non_increasing = median_error.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(ConvergenceReport {
        exact_date,
        rows,
        median_error,
        median_error_non_increasing,
    })
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Writes samples as CSV with header `indiv_id,assign,take,cure`.
pub fn write_samples_csv<W: Write>(out: W, samples: &[TrialSample]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s)?;
    }
    if samples.is_empty() {
        w.write_record(["indiv_id", "assign", "take", "cure"])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes any serialisable rows as CSV, header taken from field names.
pub fn write_rows_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
