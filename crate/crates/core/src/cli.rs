//! The `sspwct` command line.
//!
//! Data goes to stdout as canonical JSON, diagnostics to stderr. Exit codes:
//! 0 success, 2 unreadable, malformed or invalid input, 3 a property or
//! stability verdict failed.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::comparative::{
    add_contracts, add_original_slot, flexibility_compare, improvement_chain, random_bottom_addition,
    random_single_agent_addition, random_slot_addition, AdditionMode,
};
use crate::generator::{generate, GeneratorConfig, LocationPolicy};
use crate::market::Market;
use crate::mechanism::{
    cumulative_offer, find_blocking_set, is_individually_rational, BlockingSet, ComTrace, ProposalPolicy,
};
use crate::model::{parse_instance, serialize_instance, to_canonical_json, BranchId, ContractId, Instance, Outcome};
use crate::oracles::{run_batch, PropertyVerdict, Suite, SuiteOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FAIL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sspwct", version, about = "Slot-specific priorities with capacity transfers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the cumulative offer mechanism and print the outcome.
    Run {
        instance: PathBuf,
        /// Print the full step log instead of the bare outcome.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value_t = PolicyArg::Lexicographic)]
        policy: PolicyArg,
        /// Seed of the random proposal order.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check an outcome (or a trace) for stability. Exits 3 when unstable.
    Verify { instance: PathBuf, outcome: PathBuf },
    /// Run property oracles on one instance or a generated batch.
    Oracle {
        /// Instance file; a batch is generated when omitted.
        instance: Option<PathBuf>,
        #[arg(long = "suite", value_enum, num_args = 1.., default_value = "all")]
        suites: Vec<SuiteArg>,
        /// Improvements tried per agent.
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Random proposal orders tried per instance.
        #[arg(long, default_value_t = 20)]
        order_seeds: usize,
        /// Generated instances, used without an instance file.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Worker threads across instances.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Compare the outcome before and after a change to the market.
    Experiment {
        instance: PathBuf,
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[arg(long)]
        branch: Option<String>,
        /// Seat pair index k (1-based) for flexibility and chain.
        #[arg(long)]
        slot: Option<usize>,
        /// Precedence position of the added seat (1-based, default last).
        #[arg(long)]
        position: Option<usize>,
        /// Comma-separated ranking of the added seat.
        #[arg(long, value_delimiter = ',')]
        ranking: Option<Vec<String>>,
        /// Extended instance for add-contracts.
        #[arg(long)]
        extended: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AdditionMode::Bottom)]
        mode: AdditionMode,
        /// Seed for randomly drawn changes when parameters are omitted.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a random valid instance.
    Gen {
        #[command(flatten)]
        gen: GenArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Lexicographic,
    Reverse,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    All,
    Completion,
    Substitutability,
    Irc,
    Lad,
    Stability,
    StrategyProofness,
    Improvements,
    OrderIndependence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    /// Set one transfer bit.
    Flexibility,
    /// Set one transfer bit and rebuild the new outcome as a replacement chain.
    Chain,
    /// Add an original seat.
    AddSlot,
    /// Add contracts.
    AddContracts,
}

#[derive(Clone, Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub agents: usize,
    #[arg(long, default_value_t = 2)]
    pub branches: usize,
    #[arg(long, default_value_t = 1)]
    pub min_capacity: usize,
    #[arg(long, default_value_t = 3)]
    pub max_capacity: usize,
    /// Least contracts per agent-branch pair.
    #[arg(long, default_value_t = 0)]
    pub min_pair_contracts: usize,
    #[arg(long, default_value_t = 2)]
    pub max_pair_contracts: usize,
    #[arg(long, default_value_t = 0.8)]
    pub acceptability: f64,
    #[arg(long, default_value_t = 0.7)]
    pub original_listing: f64,
    #[arg(long, default_value_t = 0.7)]
    pub shadow_listing: f64,
    #[arg(long, default_value_t = 0.5)]
    pub transfer_density: f64,
    #[arg(long, value_enum, default_value_t = LocationPolicy::RandomValid)]
    pub location: LocationPolicy,
    /// Allow agents without any acceptable contract.
    #[arg(long)]
    pub allow_empty: bool,
    #[arg(long)]
    pub max_contracts: Option<usize>,
    #[arg(long)]
    pub max_per_agent: Option<usize>,
    #[arg(long)]
    pub max_per_branch: Option<usize>,
}

impl GenArgs {
    pub fn config(&self) -> Result<GeneratorConfig, String> {
        for (name, p) in [
            ("acceptability", self.acceptability),
            ("original-listing", self.original_listing),
            ("shadow-listing", self.shadow_listing),
            ("transfer-density", self.transfer_density),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("--{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.min_capacity == 0 || self.min_capacity > self.max_capacity {
            return Err("capacity range must satisfy 1 <= min <= max".into());
        }
        if self.min_pair_contracts > self.max_pair_contracts {
            return Err("pair contract range must satisfy min <= max".into());
        }
        Ok(GeneratorConfig {
            seed: self.seed,
            agents: self.agents,
            branches: self.branches,
            capacity: (self.min_capacity, self.max_capacity),
            contracts_per_pair: (self.min_pair_contracts, self.max_pair_contracts),
            acceptability: self.acceptability,
            original_listing: self.original_listing,
            shadow_listing: self.shadow_listing,
            transfer_density: self.transfer_density,
            location: self.location,
            ensure_acceptable: !self.allow_empty,
            max_contracts: self.max_contracts,
            max_per_agent: self.max_per_agent,
            max_per_branch: self.max_per_branch,
        })
    }
}

/// Stability verdict printed by `verify`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub individually_rational: bool,
    pub blocking: Option<BlockingSet>,
    pub stable: bool,
}

/// Verdicts printed by `oracle`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub passed: bool,
    pub verdicts: Vec<PropertyVerdict>,
}

struct Failure {
    code: i32,
    message: String,
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_market(path: &Path) -> Result<Market, Failure> {
    let inst = load_instance(path)?;
    Market::new(inst).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    parse_instance(&read(path)?).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

/// An outcome file holds either an outcome or a full trace.
fn load_outcome(path: &Path) -> Result<Outcome, Failure> {
    let bytes = read(path)?;
    let bad = |e: serde_json::Error| input_error(format!("{}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(bad)?;
    if value.get("steps").is_some() {
        Ok(serde_json::from_value::<ComTrace>(value).map_err(bad)?.outcome)
    } else {
        serde_json::from_value(value).map_err(bad)
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, stdout, stderr),
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            if e.use_stderr() {
                EXIT_INPUT
            } else {
                let _ = write!(stdout, "{}", e.render());
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match execute(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn emit(stdout: &mut dyn Write, bytes: &[u8]) -> Result<(), Failure> {
    stdout.write_all(bytes).map_err(|e| Failure {
        code: 1,
        message: format!("writing output: {e}"),
    })
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Run {
            instance,
            trace,
            policy,
            seed,
        } => {
            let market = load_market(&instance)?;
            let policy = match policy {
                PolicyArg::Lexicographic => ProposalPolicy::Lexicographic,
                PolicyArg::Reverse => ProposalPolicy::ReverseLexicographic,
                PolicyArg::Random => ProposalPolicy::SeededRandom(seed),
            };
            let result = cumulative_offer(&market, policy);
            if trace {
                emit(stdout, &to_canonical_json(&result))?;
            } else {
                emit(stdout, &to_canonical_json(&result.outcome))?;
            }
            Ok(EXIT_OK)
        }
        Command::Verify { instance, outcome } => {
            let market = load_market(&instance)?;
            let outcome = load_outcome(&outcome)?;
            if !outcome.is_feasible(market.instance()) {
                return Err(input_error("outcome is not feasible for this instance"));
            }
            let individually_rational = is_individually_rational(&market, &outcome);
            let blocking = find_blocking_set(&market, &outcome, crate::mechanism::DEFAULT_BLOCKING_BOUND)
                .map_err(|e| input_error(e.to_string()))?;
            let report = VerifyReport {
                stable: individually_rational && blocking.is_none(),
                individually_rational,
                blocking,
            };
            emit(stdout, &to_canonical_json(&report))?;
            Ok(if report.stable { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Oracle {
            instance,
            suites,
            trials,
            order_seeds,
            instances,
            jobs,
            gen,
        } => {
            let suites = expand_suites(&suites);
            let batch = match instance {
                Some(path) => vec![load_instance(&path)?],
                None => {
                    let cfg = gen.config().map_err(input_error)?;
                    (0..instances as u64)
                        .map(|i| generate(&cfg.with_seed(cfg.seed.wrapping_add(i))))
                        .collect()
                }
            };
            let opts = SuiteOptions {
                trials,
                order_seeds,
                seed: gen.seed,
                ..SuiteOptions::default()
            };
            let verdicts = run_batch(&batch, &suites, &opts, jobs.max(1)).map_err(|e| input_error(e.to_string()))?;
            for v in &verdicts {
                let _ = writeln!(stderr, "{v}");
            }
            let report = OracleReport {
                passed: verdicts.iter().all(PropertyVerdict::passed),
                verdicts,
            };
            emit(stdout, &to_canonical_json(&report))?;
            Ok(if report.passed { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Experiment {
            instance,
            kind,
            branch,
            slot,
            position,
            ranking,
            extended,
            mode,
            seed,
        } => {
            let inst = load_instance(&instance)?;
            Market::new(inst.clone()).map_err(|e| input_error(format!("{}: {e}", instance.display())))?;
            let err = |e: crate::comparative::ComparativeError| input_error(e.to_string());
            let need_branch = || {
                branch
                    .clone()
                    .map(BranchId::new)
                    .ok_or_else(|| input_error("--branch is required for this experiment"))
            };
            match kind {
                ExperimentKind::Flexibility | ExperimentKind::Chain => {
                    let b = need_branch()?;
                    let k = slot.ok_or_else(|| input_error("--slot is required for this experiment"))?;
                    let report = flexibility_compare(&inst, &b, k).map_err(err)?;
                    if kind == ExperimentKind::Chain {
                        let chain = improvement_chain(&inst, &report.baseline, &b, k).map_err(err)?;
                        emit(stdout, &to_canonical_json(&chain))?;
                        return Ok(if chain.agrees_with_com { EXIT_OK } else { EXIT_FAIL });
                    }
                    emit(stdout, &to_canonical_json(&report))?;
                    Ok(if report.holds() { EXIT_OK } else { EXIT_FAIL })
                }
                ExperimentKind::AddSlot => {
                    let (b, ranking, position) = match branch {
                        Some(b) => (
                            BranchId::new(b),
                            ranking.unwrap_or_default().into_iter().map(ContractId::new).collect(),
                            position,
                        ),
                        None => {
                            let (b, r, p) =
                                random_slot_addition(&inst, seed).ok_or_else(|| input_error("instance has no branch"))?;
                            (b, r, Some(p))
                        }
                    };
                    let report = add_original_slot(&inst, &b, ranking, position).map_err(err)?;
                    emit(stdout, &to_canonical_json(&report))?;
                    Ok(if report.holds() { EXIT_OK } else { EXIT_FAIL })
                }
                ExperimentKind::AddContracts => {
                    let ext = match extended {
                        Some(path) => load_instance(&path)?,
                        None => match mode {
                            AdditionMode::Bottom => random_bottom_addition(&inst, seed),
                            AdditionMode::SingleAgent => random_single_agent_addition(&inst, seed),
                        },
                    };
                    let report = add_contracts(&inst, &ext, mode).map_err(err)?;
                    emit(stdout, &to_canonical_json(&report))?;
                    Ok(if report.holds() { EXIT_OK } else { EXIT_FAIL })
                }
            }
        }
        Command::Gen { gen, out } => {
            let cfg = gen.config().map_err(input_error)?;
            let bytes = serialize_instance(&generate(&cfg));
            match out {
                Some(path) => std::fs::write(&path, bytes).map_err(|e| Failure {
                    code: 1,
                    message: format!("{}: {e}", path.display()),
                })?,
                None => emit(stdout, &bytes)?,
            }
            Ok(EXIT_OK)
        }
    }
}

fn expand_suites(args: &[SuiteArg]) -> Vec<Suite> {
    let mut out: Vec<Suite> = Vec::new();
    for a in args {
        let add: &[Suite] = match a {
            SuiteArg::All => &Suite::ALL,
            SuiteArg::Completion => &[Suite::Completion],
            SuiteArg::Substitutability => &[Suite::Substitutability],
            SuiteArg::Irc => &[Suite::Irc],
            SuiteArg::Lad => &[Suite::Lad],
            SuiteArg::Stability => &[Suite::Stability],
            SuiteArg::StrategyProofness => &[Suite::StrategyProofness],
            SuiteArg::Improvements => &[Suite::Improvements],
            SuiteArg::OrderIndependence => &[Suite::OrderIndependence],
        };
        for s in add {
            if !out.contains(s) {
                out.push(*s);
            }
        }
    }
    out
}
