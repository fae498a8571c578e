//! `dateiv`: verify, estimate, simulate, and query DATE/IV scenarios.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 assumption failure or
//! undefined quantity, 3 DATE and IV estimand differ beyond tolerance.

mod failure;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dateiv::cbn::{CausalBayesNet, PartialAssignment};
use dateiv::iv::{build_iv_net, identification_check, iv_estimand, IvNetConfig};
use dateiv::population::ComplianceCensus;
use dateiv::scenarios::{self, generate_random, GenerateConstraints, NetFile, Scenario, CATALOG};
use dateiv::sim::{self, convergence_report, run_trial, DEFAULT_BOOTSTRAP_RESAMPLES};
use dateiv::{BigRational, Verdict};
use serde::Serialize;

use failure::{Failure, GAP, UNDEFINED};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "dateiv", version, about = "DATE and IV estimand toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that DATE equals the IV estimand and audit the assumptions.
    Verify(VerifyArgs),
    /// Print DATE, LATE, IV estimand and the compliance census.
    Estimate(EstimateArgs),
    /// Simulate a trial and estimate the Wald ratio.
    Simulate(SimulateArgs),
    /// Interventional query on the IV net or a net file.
    DoQuery(DoQueryArgs),
    /// Write a random population.
    Generate(GenerateArgs),
    /// List builtin scenarios.
    Catalog(CatalogArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimFormat {
    Table,
    Json,
    Csv,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario JSON file.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Builtin scenario name (see `catalog`).
    #[arg(long, value_name = "NAME")]
    builtin: Option<String>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[command(flatten)]
    source: Source,
    /// Override P(Assign=1).
    #[arg(long, value_name = "REAL")]
    p_assign: Option<f64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<Scenario, Failure> {
        let mut scenario = match (&self.source.scenario, &self.source.builtin) {
            (Some(path), _) => scenarios::load(path)?,
            (None, Some(name)) => scenarios::builtin(name)?,
            (None, None) => {
                return Err(Failure::usage("one of --scenario or --builtin is required"))
            }
        };
        if let Some(p) = self.p_assign {
            scenario.config = IvNetConfig::new(p)?;
        }
        Ok(scenario)
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Largest accepted |DATE - IV estimand|.
    #[arg(long, default_value_t = 1e-9, value_parser = non_negative)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Evaluate in exact rational arithmetic.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of simulated participants.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, env = "DATEIV_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Bootstrap resamples for the standard error.
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_RESAMPLES)]
    bootstrap: usize,
    /// Write the samples as CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SimFormat::Table)]
    format: SimFormat,
    /// Also run a convergence grid over these sample sizes.
    #[arg(long, value_delimiter = ',', value_name = "N,...", value_parser = clap::value_parser!(u64).range(1..))]
    ns: Vec<u64>,
    /// Seeds for the convergence grid; defaults to five consecutive seeds from --seed.
    #[arg(long, value_delimiter = ',', value_name = "SEED,...", requires = "ns")]
    seeds: Vec<u64>,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "net_source")]
struct QuerySource {
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    builtin: Option<String>,
    /// Net JSON file instead of a scenario.
    #[arg(long, value_name = "PATH")]
    net: Option<PathBuf>,
}

#[derive(Args)]
struct DoQueryArgs {
    #[command(flatten)]
    source: QuerySource,
    #[arg(long, value_name = "REAL", conflicts_with = "net")]
    p_assign: Option<f64>,
    /// Intervention `VAR=VAL`.
    #[arg(long = "do", value_name = "VAR=VAL", value_parser = parse_pair)]
    intervention: (String, String),
    /// Conjunctive evidence.
    #[arg(long, value_delimiter = ',', value_name = "VAR=VAL,...", value_parser = parse_pair)]
    evidence: Vec<(String, String)>,
    /// Conjunctive target event.
    #[arg(long, value_delimiter = ',', value_name = "VAR=VAL,...", value_parser = parse_pair, required = true)]
    target: Vec<(String, String)>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, env = "DATEIV_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Sort each (tau0, tau1) pair so nobody is a defier.
    #[arg(long)]
    no_defiers: bool,
    /// Redraw until some individual is a complier.
    #[arg(long)]
    force_complier: bool,
    /// Draw every parameter from {0, 1}.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, value_name = "REAL", default_value_t = 0.5)]
    p_assign: f64,
    /// Scenario output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Also write the IV net as a net file.
    #[arg(long, value_name = "PATH")]
    net_out: Option<PathBuf>,
}

#[derive(Args)]
struct CatalogArgs {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{v} is not a finite non-negative number")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((var, val)) if !var.trim().is_empty() && !val.trim().is_empty() => {
            Ok((var.trim().to_string(), val.trim().to_string()))
        }
        _ => Err(format!("expected VAR=VAL, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { failure::USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Verify(a) => verify(a),
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::DoQuery(a) => do_query(a),
        Command::Generate(a) => generate(a),
        Command::Catalog(a) => catalog(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn verify(a: VerifyArgs) -> Result<u8, Failure> {
    let s = a.scenario.resolve()?;
    let report = if a.exact {
        identification_check(
            &s.population.map_scalar::<BigRational>(),
            &s.config.map_scalar::<BigRational>(),
            a.tol,
        )
    } else {
        identification_check(&s.population, &s.config, a.tol)
    };
    match a.format {
        Format::Table => println!("{}", report.render_table()),
        Format::Json => print_json(&report)?,
    }
    Ok(match report.verdict {
        Verdict::Pass => 0,
        Verdict::AssumptionFailure => UNDEFINED,
        Verdict::GapFailure => GAP,
    })
}

#[derive(Serialize)]
struct Estimates {
    n: usize,
    p_assign: f64,
    date: f64,
    late: Option<f64>,
    iv_estimand: f64,
    census: ComplianceCensus,
}

fn estimate(a: EstimateArgs) -> Result<u8, Failure> {
    let s = a.scenario.resolve()?;
    let pop = &s.population;
    let date = pop.date()?;
    let late = if pop.is_deterministic() {
        Some(pop.late()?)
    } else {
        None
    };
    let iv_value = iv_estimand(&build_iv_net(pop, &s.config)?)?;
    let est = Estimates {
        n: pop.len(),
        p_assign: *s.config.p_assign(),
        date,
        late,
        iv_estimand: iv_value,
        census: pop.census(),
    };
    match a.format {
        Format::Json => print_json(&est)?,
        Format::Table => {
            println!("{:<22} {}", "population size", est.n);
            println!("{:<22} {:.6}", "P(Assign=1)", est.p_assign);
            println!("{:<22} {:.6}", "DATE", est.date);
            match est.late {
                Some(l) => println!("{:<22} {:.6}", "LATE", l),
                None => println!(
                    "{:<22} not applicable (population is not deterministic)",
                    "LATE"
                ),
            }
            println!("{:<22} {:.6}", "IV estimand", est.iv_estimand);
            println!("{:<22} {}", "compliers", est.census.complier);
            println!("{:<22} {}", "indifferent takers", est.census.indifferent);
            println!("{:<22} {}", "defiers", est.census.defier);
        }
    }
    Ok(0)
}

fn simulate(a: SimulateArgs) -> Result<u8, Failure> {
    let s = a.scenario.resolve()?;
    let n = usize::try_from(a.n).map_err(|_| Failure::usage("--n is too large"))?;
    let (trial, samples) = run_trial(&s.population, &s.config, a.seed, n, a.bootstrap)?;
    if let Some(path) = &a.out {
        let file = File::create(path).map_err(|e| io_failure(path, e))?;
        sim::write_samples_csv(BufWriter::new(file), &samples)?;
    }
    let convergence = if a.ns.is_empty() {
        None
    } else {
        let seeds: Vec<u64> = if a.seeds.is_empty() {
            (0..5).map(|k| a.seed.wrapping_add(k)).collect()
        } else {
            a.seeds.clone()
        };
        let ns =
            a.ns.iter()
                .map(|&n| usize::try_from(n).map_err(|_| Failure::usage("--ns value is too large")))
                .collect::<Result<Vec<_>, _>>()?;
        Some(convergence_report(&s.population, &s.config, &seeds, &ns)?)
    };

    match a.format {
        SimFormat::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                trial: &'a sim::TrialResult,
                #[serde(skip_serializing_if = "Option::is_none")]
                convergence: Option<&'a sim::ConvergenceReport>,
            }
            print_json(&Out {
                trial: &trial,
                convergence: convergence.as_ref(),
            })?;
        }
        SimFormat::Csv => {
            let stdout = io::stdout();
            match &convergence {
                Some(c) => sim::write_rows_csv(stdout.lock(), &c.rows)?,
                None => sim::write_rows_csv(stdout.lock(), &[trial])?,
            }
        }
        SimFormat::Table => {
            let se = trial
                .empirical_se
                .map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
            println!("{:<22} {}", "n", trial.n);
            println!("{:<22} {}", "seed", trial.seed);
            println!("{:<22} {:.6}", "wald_estimate", trial.wald_estimate);
            println!("{:<22} {}", "empirical_se", se);
            println!("{:<22} {:.6}", "exact_date", trial.exact_date);
            println!("{:<22} {:.6}", "absolute_error", trial.absolute_error);
            println!("{:<22} {:.6}", "numerator", trial.numerator);
            println!("{:<22} {:.6}", "denominator", trial.denominator);
            if let Some(c) = &convergence {
                println!();
                println!(
                    "{:>10} {:>20} {:>14} {:>14}",
                    "n", "seed", "wald", "|error|"
                );
                for r in &c.rows {
                    println!(
                        "{:>10} {:>20} {:>14.6} {:>14.6}",
                        r.n, r.seed, r.wald_estimate, r.absolute_error
                    );
                }
                for (n, m) in &c.median_error {
                    println!("median |error| at n={n}: {m:.6}");
                }
                println!(
                    "median error non-increasing: {}",
                    if c.median_error_non_increasing {
                        "yes"
                    } else {
                        "no"
                    }
                );
            }
        }
    }
    Ok(0)
}

fn event(
    net: &CausalBayesNet<f64>,
    pairs: &[(String, String)],
) -> Result<PartialAssignment, Failure> {
    Ok(net.partial(pairs)?)
}

fn describe(pairs: &[(String, String)]) -> Vec<String> {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect()
}

#[derive(Serialize)]
struct QueryResult {
    intervention: String,
    evidence: Vec<String>,
    target: Vec<String>,
    probability: f64,
}

fn do_query(a: DoQueryArgs) -> Result<u8, Failure> {
    let net = match (&a.source.net, &a.source.scenario, &a.source.builtin) {
        (Some(path), _, _) => scenarios::load_net(path)?,
        (None, scenario, builtin) => {
            let args = ScenarioArgs {
                source: Source {
                    scenario: scenario.clone(),
                    builtin: builtin.clone(),
                },
                p_assign: a.p_assign,
            };
            let s = args.resolve()?;
            build_iv_net(&s.population, &s.config)?
        }
    };
    let (x_name, x_label) = &a.intervention;
    let (x, xval) = net.value_of(x_name, x_label)?;
    let evidence = event(&net, &a.evidence)?;
    let target = event(&net, &a.target)?;
    let probability = net.do_query_evidence(x, xval, &evidence, &target)?;
    let result = QueryResult {
        intervention: format!("{x_name}={x_label}"),
        evidence: describe(&a.evidence),
        target: describe(&a.target),
        probability,
    };
    match a.format {
        Format::Json => print_json(&result)?,
        Format::Table => {
            let mut given = vec![format!("do({})", result.intervention)];
            given.extend(result.evidence.iter().cloned());
            println!(
                "P({} | {}) = {:.6}",
                result.target.join(", "),
                given.join(", "),
                result.probability
            );
        }
    }
    Ok(0)
}

fn generate(a: GenerateArgs) -> Result<u8, Failure> {
    let n = usize::try_from(a.n).map_err(|_| Failure::usage("--n is too large"))?;
    let population = generate_random(
        n,
        a.seed,
        GenerateConstraints {
            no_defiers: a.no_defiers,
            force_complier: a.force_complier,
            deterministic: a.deterministic,
        },
    )?;
    let scenario = Scenario {
        population,
        config: IvNetConfig::new(a.p_assign)?,
    };
    match &a.out {
        Some(path) => scenarios::save(&scenario, path)?,
        None => println!("{}", scenario.to_json()?),
    }
    if let Some(path) = &a.net_out {
        let net = build_iv_net(&scenario.population, &scenario.config)?;
        let mut text = NetFile::from_net(&net).to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| io_failure(path, e))?;
    }
    Ok(0)
}

fn catalog(a: CatalogArgs) -> Result<u8, Failure> {
    match a.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Entry {
                name: &'static str,
                description: &'static str,
            }
            let entries: Vec<Entry> = CATALOG
                .iter()
                .map(|&(name, description)| Entry { name, description })
                .collect();
            print_json(&entries)?;
        }
        Format::Table => {
            let mut out = io::stdout().lock();
            for (name, description) in CATALOG {
                writeln!(out, "{name:<14} {description}")
                    .map_err(|e| Failure::usage(e.to_string()))?;
            }
        }
    }
    Ok(0)
}
