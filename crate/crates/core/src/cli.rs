//! Command-line front end. `leashsim --help` lists the subcommands; exit
//! codes are 0 on success, 2 on usage errors, 3 on configuration errors and
//! 4 when a run's own checks fail (the report is still written).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::adversary::{run_hard_fork_scenario, run_scenario, ScenarioError};
use crate::demo::{demo_chain, parity_counterexample};
use crate::replay::{replay_from, ReplayConfig};
use crate::scenario::{bundled, bundled_names, ChainFixture, ConfigError, Scenario};
use crate::schedule::{
    acceptable_schedules, adversary_amounts, amounts_over_all_schedules, check_factorial_e_bound,
    count_closed_form, shape_transactions, Shape, DEFAULT_K_LIMIT,
};
use crate::vm::VmConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_ASSERTION: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "leashsim",
    version,
    about = "Short-leash ledger simulator: attack scenarios, fork replay and schedule analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Overrides the fixture's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Writes the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// BLOCKHASH window W.
    #[arg(long, global = true)]
    pub window: Option<u64>,
    /// Recent-window size r, in committee elections.
    #[arg(long, global = true)]
    pub recent: Option<u64>,
    /// Largest transaction count enumerated by the schedule commands.
    #[arg(long = "k-limit", global = true)]
    pub k_limit: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs an attack scenario (bundled name or path to a .toml file).
    RunScenario { input: String },
    /// Runs a hard-fork scenario.
    RunForkScenario { input: String },
    /// Replays a demo chain from block z under patched semantics.
    ReplayFork {
        /// First replayed block; defaults to the fixture's fix height.
        #[arg(long)]
        z: Option<usize>,
        /// Chain fixture (bundled name or path).
        #[arg(default_value = "demo_chain")]
        input: String,
    },
    /// Counts acceptable schedules for k transactions of a given shape.
    WinkleCount {
        /// Number of transactions.
        #[arg(long)]
        k: usize,
        /// One sender, or one sender per transaction.
        #[arg(long, value_enum)]
        shape: ShapeArg,
    },
    /// Adversary send/receive amounts over all schedules of the parity
    /// fixture.
    WinkleAmounts,
    /// Runs every bundled fixture and checks its expectations.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Single,
    Independent,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Single => Shape::SingleEoa,
            ShapeArg::Independent => Shape::IndependentEoas,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    /// The run finished but its checks failed; `report` is still emitted.
    #[error("{message}")]
    Assertion { report: String, message: String },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Assertion { .. } => EXIT_ASSERTION,
            CliError::Output { .. } => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn scenario_error(e: ScenarioError) -> CliError {
    match e {
        ScenarioError::Config(c) => c.into(),
        ScenarioError::Adversary(a) => CliError::Config(a.to_string()),
        ScenarioError::Assertion(m) => CliError::Assertion {
            report: String::new(),
            message: m,
        },
    }
}

/// A bundled fixture name or a path.
fn load(input: &str) -> Result<String, CliError> {
    let path = Path::new(input);
    if path.is_file() {
        return std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{input}: {e}")));
    }
    Ok(bundled(input)?.to_string())
}

fn load_scenario(cli: &Cli, input: &str) -> Result<Scenario, CliError> {
    let mut s = Scenario::parse(&load(input)?)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(w) = cli.window {
        s.chain.blockhash_window = w;
    }
    if let Some(r) = cli.recent {
        s.chain.recent_window = r;
    }
    s.validate()?;
    Ok(s)
}

fn checked(report: String, failures: Vec<String>) -> Result<String, CliError> {
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(CliError::Assertion {
            report,
            message: failures.join("; "),
        })
    }
}

fn cmd_scenario(cli: &Cli, input: &str, fork: bool) -> Result<String, CliError> {
    let s = load_scenario(cli, input)?;
    let r = if fork {
        run_hard_fork_scenario(&s)
    } else {
        run_scenario(&s)
    }
    .map_err(scenario_error)?;
    checked(r.to_text(), r.check(&s.expect))
}

fn cmd_replay(cli: &Cli, z: Option<usize>, input: &str) -> Result<String, CliError> {
    let mut f = ChainFixture::parse(&load(input)?)?;
    if let Some(seed) = cli.seed {
        f.seed = seed;
    }
    let z = z.unwrap_or(f.fix_height);
    let demo = demo_chain(f.blocks, f.seed);
    let mut cfg = ReplayConfig::new(demo.cfg.clone(), VmConfig::default());
    if let Some(w) = cli.window {
        cfg.blockhash_window = w;
    }
    let out = replay_from(&demo.blocks, z, &demo.genesis_state, &cfg)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut o = String::new();
    let _ = writeln!(o, "leashsim-replay/1");
    let _ = writeln!(
        o,
        "chain {} blocks={} seed={} z={z}",
        f.name, f.blocks, f.seed
    );
    let _ = writeln!(
        o,
        "amended legacy_mod_mask={} -> {}",
        cfg.original.legacy_mod_mask, cfg.amended.legacy_mod_mask
    );
    let _ = writeln!(o, "swizzle pairs={}", out.swizzle.len());
    let _ = writeln!(
        o,
        "| {:>3} | {:<16} | {:<16} | {:<16} | {:<7} | {:<8} |",
        "j", "h(B_j)", "h'(B'_j)", "h(B'_j)", "root", "status"
    );
    let _ = writeln!(
        o,
        "|{:-<5}|{:-<18}|{:-<18}|{:-<18}|{:-<9}|{:-<10}|",
        "", "", "", "", "", ""
    );
    for r in &out.rows {
        let root = if r.old_root == r.new_root {
            "same"
        } else {
            "changed"
        };
        let status = if r.stable() { "stable" } else { "UNSTABLE" };
        let _ = writeln!(
            o,
            "| {:>3} | {:<16} | {:<16} | {:<16} | {:<7} | {:<8} |",
            r.index,
            &r.original_id.to_hex()[..16],
            &r.forked_id.to_hex()[..16],
            &r.raw_forked_id.to_hex()[..16],
            root,
            status
        );
    }
    let adversary = demo.adversary;
    let mut same = cfg.clone();
    same.amended = cfg.original.clone();
    let original = replay_from(&demo.blocks, z, &demo.genesis_state, &same)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let _ = writeln!(
        o,
        "adversary_balance original={} replayed={}",
        original.final_state.balance(&adversary),
        out.final_state.balance(&adversary)
    );
    for w in &out.warnings {
        let _ = writeln!(o, "warning {w}");
    }
    let _ = writeln!(o, "all_stable {}", out.all_stable());
    let failures = if out.all_stable() {
        vec![]
    } else {
        vec!["pointer stability violated".to_string()]
    };
    checked(o, failures)
}

fn k_limit(cli: &Cli) -> usize {
    cli.k_limit.unwrap_or(DEFAULT_K_LIMIT)
}

fn cmd_count(cli: &Cli, k: usize, shape: Shape) -> Result<String, CliError> {
    let limit = k_limit(cli);
    let count = count_closed_form(k, shape, limit).map_err(|e| CliError::Config(e.to_string()))?;
    let mut o = String::new();
    let mut failures = Vec::new();
    let _ = writeln!(o, "leashsim-winkle-count/1");
    let _ = writeln!(o, "shape {shape:?} k={k} k_limit={limit}");
    let _ = writeln!(
        o,
        "| {:>2} | {:>12} | {:>12} | {:>12} | {:<9} |",
        "k", "closed_form", "enumerated", "floor(k!e)", "below k!e"
    );
    let _ = writeln!(
        o,
        "|{:-<4}|{:-<14}|{:-<14}|{:-<14}|{:-<11}|",
        "", "", "", "", ""
    );
    for j in 0..=k {
        let c = count_closed_form(j, shape, limit).expect("j <= k <= limit");
        let txns = shape_transactions(j, shape);
        let enumerated = acceptable_schedules(&txns)
            .expect("shape is gap-free")
            .count();
        let b = check_factorial_e_bound(j, &c);
        if c != enumerated.into() {
            failures.push(format!(
                "k={j}: closed form {c} but {enumerated} enumerated"
            ));
        }
        if !b.below {
            failures.push(format!("k={j}: count not below k!e"));
        }
        let _ = writeln!(
            o,
            "| {:>2} | {:>12} | {:>12} | {:>12} | {:<9} |",
            j, c, enumerated, b.floor_k_fact_e, b.below
        );
    }
    let _ = writeln!(o, "count {count}");
    checked(o, failures)
}

fn cmd_amounts(cli: &Cli) -> Result<String, CliError> {
    let f = parity_counterexample();
    let ctx = f.ctx();
    let limit = k_limit(cli);
    let ext = amounts_over_all_schedules(&f.txns, &f.db, &ctx, &f.cfg, &f.adversary, limit)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let set = acceptable_schedules(&f.txns).expect("fixture is gap-free");
    let mut o = String::new();
    let _ = writeln!(o, "leashsim-winkle-amounts/1");
    let _ = writeln!(
        o,
        "fixture parity_counterexample txns={} schedules={}",
        f.txns.len(),
        ext.schedules
    );
    let _ = writeln!(o, "| {:<10} | {:>10} | {:>10} |", "schedule", "W_S", "W_R");
    let _ = writeln!(o, "|{:-<12}|{:-<12}|{:-<12}|", "", "", "");
    for s in set.iter() {
        let a = adversary_amounts(&set.materialize(&s), &f.db, &ctx, &f.cfg, &f.adversary);
        let label = format!(
            "({})",
            s.iter()
                .map(|i| format!("t{}", i + 1))
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(
            o,
            "| {:<10} | {:>10} | {:>10} |",
            label,
            a.sent.to_string(),
            a.received.to_string()
        );
    }
    let _ = writeln!(
        o,
        "min_W_R {} max_W_R {}",
        ext.min_received, ext.max_received
    );
    let _ = writeln!(o, "min_W_S {} max_W_S {}", ext.min_sent, ext.max_sent);
    let _ = writeln!(
        o,
        "full_W_R {} full_W_S {}",
        ext.full_received, ext.full_sent
    );
    let differs = ext.max_received != ext.full_received;
    let _ = writeln!(o, "max_differs_from_full {differs}");
    let _ = writeln!(
        o,
        "note the empty schedule is counted; it corresponds to an empty block"
    );
    let failures = if differs {
        vec![]
    } else {
        vec!["expected the maximum to differ from the full schedule".into()]
    };
    checked(o, failures)
}

fn cmd_selftest(cli: &Cli) -> Result<String, CliError> {
    let names: Vec<&str> = bundled_names().collect();
    let results: Vec<(String, Result<String, CliError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = names
            .iter()
            .map(|&n| {
                scope.spawn(move || {
                    let r = if n == "demo_chain" {
                        cmd_replay(cli, None, n)
                    } else {
                        let fork = Scenario::parse(bundled(n).expect("bundled"))
                            .map(|s| s.hard_fork.is_some());
                        cmd_scenario(cli, n, fork.unwrap_or(false))
                    };
                    (n.to_string(), r)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("selftest worker"))
            .collect()
    });
    let mut extra: Vec<(String, Result<String, CliError>)> = vec![
        (
            "winkle-count single k=6".into(),
            cmd_count(cli, 6, Shape::SingleEoa),
        ),
        (
            "winkle-count independent k=6".into(),
            cmd_count(cli, 6, Shape::IndependentEoas),
        ),
        ("winkle-amounts".into(), cmd_amounts(cli)),
    ];
    let mut o = String::new();
    let mut failures = Vec::new();
    let _ = writeln!(o, "leashsim-selftest/1");
    for (name, r) in results.into_iter().chain(extra.drain(..)) {
        match r {
            Ok(_) => {
                let _ = writeln!(o, "PASS {name}");
            }
            Err(e) => {
                let _ = writeln!(o, "FAIL {name}: {e}");
                failures.push(name);
            }
        }
    }
    checked(o, failures)
}

/// Runs the parsed command and returns its report.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::RunScenario { input } => cmd_scenario(cli, input, false),
        Command::RunForkScenario { input } => cmd_scenario(cli, input, true),
        Command::ReplayFork { z, input } => cmd_replay(cli, *z, input),
        Command::WinkleCount { k, shape } => cmd_count(cli, *k, (*shape).into()),
        Command::WinkleAmounts => cmd_amounts(cli),
        Command::Selftest => cmd_selftest(cli),
    }
}

fn emit(cli: &Cli, report: &str, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    match &cli.output {
        Some(path) => std::fs::write(path, report).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        }),
        None => {
            let _ = stdout.write_all(report.as_bytes());
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs, writes the report and returns
/// the exit code.
pub fn main_with<I, T>(
    args: I,
    stdout: &mut dyn std::io::Write,
    stderr: &mut dyn std::io::Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(report) => match emit(&cli, &report, stdout) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            if let CliError::Assertion { report, .. } = &e {
                if !report.is_empty() {
                    if let Err(w) = emit(&cli, report, stdout) {
                        let _ = writeln!(stderr, "error: {w}");
                    }
                }
            }
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
